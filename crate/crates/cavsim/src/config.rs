//! Flat `key = value` run configuration.
//!
//! Keys are dotted paths (`physical.g_khz = 100`). Frequencies are given in
//! kHz and durations in μs and converted to angular rad/s and seconds here,
//! at load time; everything downstream works in SI units. Unknown keys are
//! rejected. Durations that default to a derived value accept `auto`.

use std::f64::consts::PI;

use crate::engine::{DetectorPolicy, TimelineSpec};
use crate::error::{Error, Result};
use crate::model::{vacuum_rabi_period, PhysicalParams, PulseShape};

/// kHz of ordinary frequency, as an angular rate.
const KHZ: f64 = 2.0 * PI * 1e3;
const US: f64 = 1e-6;

/// Fully resolved run configuration, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: PhysicalParams,
    /// Probe width T_p in seconds.
    pub probe_width: f64,
    /// Resonance window length in seconds; derived from the probe when absent.
    pub interaction_time: Option<f64>,
    /// Stark ramp duration in seconds; derived when absent.
    pub ramp_time: Option<f64>,
    pub pulse_shape: PulseShape,
    pub probe_enabled: bool,
    pub theta_min: f64,
    pub theta_max: f64,
    pub sweep_points: usize,
    pub trials_per_point: usize,
    pub master_seed: u64,
    pub threshold: f64,
    pub poisson_enabled: bool,
    pub poisson_mean_photons: f64,
    pub grid_points: usize,
    /// Half-span of the frequency grid in units of g.
    pub grid_span_g: f64,
    pub output_dir: Option<String>,
}

impl Default for Config {
    /// Reference parameter set: (g, κ, Γ)/2π = (100, 5, 2) kHz, 35 μs square
    /// probe, 16 phases over one turn, 625 trials per phase.
    fn default() -> Self {
        Config {
            params: PhysicalParams::reference(),
            probe_width: 35e-6,
            interaction_time: None,
            ramp_time: None,
            pulse_shape: PulseShape::Square,
            probe_enabled: true,
            theta_min: 0.0,
            theta_max: 2.0 * PI,
            sweep_points: 16,
            trials_per_point: 625,
            master_seed: 1,
            threshold: crate::spectrum::DEFAULT_THRESHOLD,
            poisson_enabled: false,
            poisson_mean_photons: 20.0,
            grid_points: 4096,
            grid_span_g: 4.0,
            output_dir: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?} as a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: {v:?} is not finite")));
    }
    Ok(x)
}

fn parse_int<T>(key: &str, v: &str) -> Result<T>
where
    T: std::str::FromStr,
{
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?} as an integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, got {v:?}"))),
    }
}

fn parse_auto_us(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        return Ok(None);
    }
    Ok(Some(parse_f64(key, v)? * US))
}

impl Config {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "physical.g_khz" => self.params.g = parse_f64(key, v)? * KHZ,
            "physical.kappa_khz" => self.params.kappa = parse_f64(key, v)? * KHZ,
            "physical.gamma_khz" => self.params.gamma = parse_f64(key, v)? * KHZ,
            "physical.delta12_khz" => self.params.delta12 = parse_f64(key, v)? * KHZ,
            "physical.probe_detuning_khz" => self.params.probe_detuning = parse_f64(key, v)? * KHZ,
            "physical.probe_photons" => self.params.probe_photons = parse_f64(key, v)?,
            "physical.fock_cutoff" => self.params.fock_cutoff = parse_int(key, v)?,
            "timing.probe_width_us" => self.probe_width = parse_f64(key, v)? * US,
            "timing.interaction_time_us" => self.interaction_time = parse_auto_us(key, v)?,
            "timing.ramp_time_us" => self.ramp_time = parse_auto_us(key, v)?,
            "timing.pulse_shape" => {
                self.pulse_shape = match v {
                    "square" => PulseShape::Square,
                    "gaussian" => PulseShape::Gaussian,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected square or gaussian, got {v:?}"
                        )))
                    }
                }
            }
            "timing.probe" => self.probe_enabled = parse_bool(key, v)?,
            "sweep.theta_min_rad" => self.theta_min = parse_f64(key, v)?,
            "sweep.theta_max_rad" => self.theta_max = parse_f64(key, v)?,
            "sweep.points" => self.sweep_points = parse_int(key, v)?,
            "batch.trials_per_point" => self.trials_per_point = parse_int(key, v)?,
            "batch.master_seed" => self.master_seed = parse_int(key, v)?,
            "detector.threshold" => self.threshold = parse_f64(key, v)?,
            "detector.poisson" => self.poisson_enabled = parse_bool(key, v)?,
            "detector.poisson_mean_photons" => self.poisson_mean_photons = parse_f64(key, v)?,
            "grid.points" => self.grid_points = parse_int(key, v)?,
            "grid.span_g" => self.grid_span_g = parse_f64(key, v)?,
            "output.directory" => self.output_dir = Some(v.to_string()),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Build from the defaults, a config file body, and override assignments,
    /// applied in that order. The result is validated.
    pub fn from_sources(file: Option<&str>, overrides: &[(String, String)]) -> Result<Config> {
        let mut cfg = Config::default();
        if let Some(text) = file {
            for (key, value) in parse_assignments(text)? {
                cfg.set(&key, &value)?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field validation; every complaint names the offending key.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.probe_width > 0.0) || !self.probe_width.is_finite() {
            return Err(Error::Config(format!(
                "timing.probe_width_us: {} s; must be > 0",
                self.probe_width
            )));
        }
        if self.sweep_points == 0 {
            return Err(Error::Config("sweep.points: 0; must be ≥ 1".into()));
        }
        if !(self.theta_max > self.theta_min) {
            return Err(Error::Config(format!(
                "sweep.theta_max_rad: {} must exceed sweep.theta_min_rad {}",
                self.theta_max, self.theta_min
            )));
        }
        if self.trials_per_point == 0 {
            return Err(Error::Config(
                "batch.trials_per_point: 0; must be ≥ 1".into(),
            ));
        }
        if self.grid_points < 2 {
            return Err(Error::Config(format!(
                "grid.points: {}; must be ≥ 2",
                self.grid_points
            )));
        }
        if !(self.grid_span_g > 0.0) || !self.grid_span_g.is_finite() {
            return Err(Error::Config(format!(
                "grid.span_g: {}; must be > 0",
                self.grid_span_g
            )));
        }
        self.detector_policy()
            .validate()
            .map_err(|e| Error::Config(format!("detector: {e}")))?;
        // interaction-time consistency is part of loading, not of the run
        self.timeline_spec()?;
        Ok(())
    }

    pub fn detector_policy(&self) -> DetectorPolicy {
        DetectorPolicy {
            threshold: self.threshold,
            poisson_mean: self.poisson_enabled.then_some(self.poisson_mean_photons),
        }
    }

    /// Timeline knobs implied by this configuration. An explicit interaction
    /// time must be a whole number of vacuum Rabi cycles.
    pub fn timeline_spec(&self) -> Result<TimelineSpec> {
        let interaction_cycles = match self.interaction_time {
            None => None,
            Some(t) => {
                let t_rabi = vacuum_rabi_period(self.params.g)?;
                let n = (t / t_rabi).round();
                if n < 1.0 || (t - n * t_rabi).abs() > 1e-6 * t_rabi {
                    return Err(Error::Config(format!(
                        "timing.interaction_time_us: {t} s is not a whole number of \
                         vacuum Rabi cycles (π/g = {t_rabi} s)"
                    )));
                }
                Some(n as u32)
            }
        };
        Ok(TimelineSpec {
            pulse_shape: self.pulse_shape,
            probe_width: self.probe_width,
            probe_enabled: self.probe_enabled,
            interaction_cycles,
            ramp_time: self.ramp_time,
            probe_carrier_detuning: self.params.probe_detuning,
            detector: self.detector_policy(),
        })
    }

    /// Sweep phases: `sweep_points` equal steps covering [θ_min, θ_max).
    pub fn theta_grid(&self) -> Vec<f64> {
        self.theta_grid_with(self.sweep_points)
    }

    pub fn theta_grid_with(&self, points: usize) -> Vec<f64> {
        let step = (self.theta_max - self.theta_min) / points as f64;
        (0..points)
            .map(|k| self.theta_min + k as f64 * step)
            .collect()
    }
}

/// Split a config file body into (key, value) pairs. Lines are `key = value`;
/// blank lines and lines starting with `#` are skipped.
pub fn parse_assignments(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected key = value, got {line:?}",
                idx + 1
            ))
        })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_set_and_valid() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.params, PhysicalParams::reference());
        assert_eq!(cfg.sweep_points, 16);
        assert_eq!(cfg.trials_per_point, 625);
        let spec = cfg.timeline_spec().unwrap();
        assert_eq!(spec.interaction_cycles, None);
        assert!(spec.detector.poisson_mean.is_none());
    }

    #[test]
    fn units_convert_at_load() {
        let mut cfg = Config::default();
        cfg.set("physical.g_khz", "250").unwrap();
        assert!((cfg.params.g - 2.0 * PI * 250e3).abs() < 1e-6);
        cfg.set("timing.probe_width_us", "12.5").unwrap();
        assert!((cfg.probe_width - 12.5e-6).abs() < 1e-18);
        cfg.set("sweep.theta_max_rad", "2.5").unwrap();
        assert_eq!(cfg.theta_max, 2.5);
    }

    #[test]
    fn file_bodies_parse_with_comments() {
        let text = "\
# reference run, narrowed sweep
physical.g_khz = 100

sweep.points = 8
timing.pulse_shape = gaussian
timing.probe = off
";
        let cfg = Config::from_sources(Some(text), &[]).unwrap();
        assert_eq!(cfg.sweep_points, 8);
        assert_eq!(cfg.pulse_shape, PulseShape::Gaussian);
        assert!(!cfg.probe_enabled);
    }

    #[test]
    fn overrides_apply_after_the_file() {
        let text = "sweep.points = 8\n";
        let over = vec![("sweep.points".to_string(), "32".to_string())];
        let cfg = Config::from_sources(Some(text), &over).unwrap();
        assert_eq!(cfg.sweep_points, 32);
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_rejected() {
        let mut cfg = Config::default();
        let err = cfg.set("physical.coupling", "1").unwrap_err();
        assert!(err.to_string().contains("physical.coupling"), "{err}");
        assert!(parse_assignments("just words\n").is_err());
        assert!(cfg.set("sweep.points", "eight").is_err());
        assert!(cfg.set("timing.probe", "maybe").is_err());
        assert!(cfg.set("physical.g_khz", "NaN").is_err());
    }

    #[test]
    fn auto_durations_and_cycle_checks() {
        let mut cfg = Config::default();
        cfg.set("timing.interaction_time_us", "auto").unwrap();
        assert_eq!(cfg.interaction_time, None);
        cfg.set("timing.interaction_time_us", "70").unwrap();
        assert_eq!(cfg.timeline_spec().unwrap().interaction_cycles, Some(14));
        cfg.set("timing.interaction_time_us", "71").unwrap();
        let err = cfg.timeline_spec().unwrap_err();
        assert!(err.to_string().contains("interaction_time_us"), "{err}");
    }

    #[test]
    fn invalid_ranges_name_their_key() {
        for (key, value, needle) in [
            ("sweep.points", "0", "sweep.points"),
            ("batch.trials_per_point", "0", "batch.trials_per_point"),
            ("grid.points", "1", "grid.points"),
            ("detector.threshold", "1.5", "detector"),
            ("timing.probe_width_us", "-3", "probe_width"),
        ] {
            let over = vec![(key.to_string(), value.to_string())];
            let err = Config::from_sources(None, &over).unwrap_err();
            assert!(err.to_string().contains(needle), "{key}: {err}");
        }
    }

    #[test]
    fn theta_grid_covers_the_half_open_sweep() {
        let cfg = Config::default();
        let grid = cfg.theta_grid();
        assert_eq!(grid.len(), 16);
        assert_eq!(grid[0], 0.0);
        let step = PI / 8.0;
        for (k, th) in grid.iter().enumerate() {
            assert!((th - k as f64 * step).abs() < 1e-12);
        }
        assert!(grid.last().unwrap() < &(2.0 * PI));
        assert_eq!(cfg.theta_grid_with(64).len(), 64);
    }

    #[test]
    fn poisson_toggle_reaches_the_policy() {
        let over = vec![
            ("detector.poisson".to_string(), "on".to_string()),
            (
                "detector.poisson_mean_photons".to_string(),
                "30".to_string(),
            ),
        ];
        let cfg = Config::from_sources(None, &over).unwrap();
        assert_eq!(cfg.detector_policy().poisson_mean, Some(30.0));
    }
}
