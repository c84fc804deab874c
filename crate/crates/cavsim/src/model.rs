//! Physical model of the probed atom and cavity mode.
//!
//! The atom carries four levels: |1⟩ and |2⟩ are the long-lived circular
//! Rydberg pair driven by the π/2 pulses, |3⟩ is the lower level of the
//! optical transition the cavity is tuned to, and a fourth absorbing level
//! collects spontaneous decay out of |3⟩ so that trace bookkeeping stays
//! honest. Only |1⟩ ↔ |3⟩ couples to the cavity mode; |2⟩ and the sink are
//! spectators of the optical dynamics.
//!
//! Everything is expressed in the frame rotating at the cavity frequency
//! ω_c = ω_{1→3}, so optical frequencies never appear numerically.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::state::OperatorMatrix;

/// Atom level indices on the model space.
pub const LVL_1: usize = 0;
pub const LVL_2: usize = 1;
pub const LVL_3: usize = 2;
/// Absorbing level collecting |3⟩ decay; excluded from detection statistics.
pub const LVL_SINK: usize = 3;
pub const ATOM_DIM: usize = 4;

/// Steps per vacuum Rabi cycle for the default integrator resolution. 400
/// keeps the cumulative RK4 norm loss under 1e-9 across a 1e5-step run
/// (per-step loss scales as (g·dt)⁶/144).
const STEPS_PER_RABI_CYCLE: f64 = 400.0;

/// Rates and sizes of the coupled atom-cavity system (angular frequencies).
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Atom-cavity coupling g, rad/s.
    pub g: f64,
    /// Cavity linewidth κ, rad/s.
    pub kappa: f64,
    /// Decay rate Γ out of level |3⟩, rad/s.
    pub gamma: f64,
    /// |1⟩ ↔ |2⟩ splitting ω₁₂, rad/s.
    pub delta12: f64,
    /// Probe carrier detuning ω_L − ω_c, rad/s.
    pub probe_detuning: f64,
    /// Mean intracavity photon number of the probe, dimensionless.
    pub probe_photons: f64,
    /// Highest Fock state kept; the mode space has fock_cutoff + 1 levels.
    pub fock_cutoff: usize,
}

impl PhysicalParams {
    /// Working point used throughout the tests: (g, κ, Γ)/2π = (100, 5, 2) kHz,
    /// ω₁₂/2π = 51.1 GHz (circular Rydberg 50 → 51), one probe photon.
    pub fn reference() -> Self {
        PhysicalParams {
            g: 2.0 * PI * 100.0e3,
            kappa: 2.0 * PI * 5.0e3,
            gamma: 2.0 * PI * 2.0e3,
            delta12: 2.0 * PI * 51.1e9,
            probe_detuning: 0.0,
            probe_photons: 1.0,
            fock_cutoff: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(Error::invalid(
                "g",
                format!("{} rad/s; must be > 0", self.g),
            ));
        }
        for (name, v) in [("kappa", self.kappa), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("{v} rad/s; must be ≥ 0")));
            }
        }
        if !(self.delta12 > 0.0) || !self.delta12.is_finite() {
            return Err(Error::invalid(
                "delta12",
                format!("{} rad/s; must be > 0", self.delta12),
            ));
        }
        if !self.probe_detuning.is_finite() {
            return Err(Error::invalid(
                "probe_detuning",
                format!("{}", self.probe_detuning),
            ));
        }
        if !(self.probe_photons >= 0.0) || !self.probe_photons.is_finite() {
            return Err(Error::invalid(
                "probe_photons",
                format!("{}; must be ≥ 0", self.probe_photons),
            ));
        }
        if self.fock_cutoff < 2 {
            return Err(Error::invalid(
                "fock_cutoff",
                format!("{}; must be ≥ 2", self.fock_cutoff),
            ));
        }
        Ok(())
    }

    /// True when g dominates both loss rates; callers warn (not error) when
    /// this fails, since the detection scheme degrades gracefully.
    pub fn strong_coupling(&self) -> bool {
        self.g > self.kappa && self.g > self.gamma
    }

    /// Fock-space dimension, fock_cutoff + 1.
    pub fn fock_dim(&self) -> usize {
        self.fock_cutoff + 1
    }

    /// Subsystem layout of the model space: [atom, mode].
    pub fn dims(&self) -> Vec<usize> {
        vec![ATOM_DIM, self.fock_dim()]
    }

    /// Default integrator step, resolving a vacuum Rabi cycle 400 times.
    pub fn default_dt(&self) -> Result<f64> {
        Ok(vacuum_rabi_period(self.g)? / STEPS_PER_RABI_CYCLE)
    }
}

/// One |1,0⟩ → |3,1⟩ → |1,0⟩ vacuum Rabi cycle: T_Ω = π/g.
pub fn vacuum_rabi_period(g: f64) -> Result<f64> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::invalid("g", format!("{g} rad/s; must be > 0")));
    }
    Ok(PI / g)
}

/// Phase accumulated on the |1⟩ branch after N complete vacuum Rabi cycles.
pub fn rabi_cycle_phase(n: u32) -> f64 {
    n as f64 * PI
}

/// Differential phase picked up by |2⟩ from n off-resonant photons in time t:
/// φ = Ω²·n·t/δ.
pub fn light_shift_phase(omega_rabi: f64, n: f64, t: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::invalid(
            "delta",
            format!("{delta} rad/s; must be nonzero"),
        ));
    }
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::invalid("n", format!("{n}; must be ≥ 0")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", format!("{t} s; must be ≥ 0")));
    }
    if !omega_rabi.is_finite() {
        return Err(Error::invalid("omega_rabi", format!("{omega_rabi}")));
    }
    Ok(omega_rabi * omega_rabi * n * t / delta)
}

/// Jaynes-Cummings Hamiltonian on (atom ⊗ mode) in the rotating frame:
/// H = Δ·|1⟩⟨1| + g·(a·|1⟩⟨3| + a†·|3⟩⟨1|), with Δ the atom-cavity detuning.
/// Levels |2⟩ and the sink are left uncoupled.
pub fn jc_hamiltonian(
    params: &PhysicalParams,
    atom_cavity_detuning: f64,
) -> Result<OperatorMatrix> {
    params.validate()?;
    if !atom_cavity_detuning.is_finite() {
        return Err(Error::invalid(
            "atom_cavity_detuning",
            format!("{atom_cavity_detuning}"),
        ));
    }
    let nf = params.fock_dim();
    let mut m = CMat::zeros(ATOM_DIM * nf);
    let idx = |lvl: usize, n: usize| lvl * nf + n;
    for n in 0..nf {
        m.set(
            idx(LVL_1, n),
            idx(LVL_1, n),
            C64::new(atom_cavity_detuning, 0.0),
        );
    }
    for n in 0..params.fock_cutoff {
        // ⟨3, n+1| H |1, n⟩ = g·√(n+1)
        let amp = C64::new(params.g * ((n + 1) as f64).sqrt(), 0.0);
        m.set(idx(LVL_3, n + 1), idx(LVL_1, n), amp);
        m.set(idx(LVL_1, n), idx(LVL_3, n + 1), amp);
    }
    OperatorMatrix::new(params.dims(), m)
}

/// Loss channels of the coupled system: cavity decay (a at rate κ) and
/// spontaneous decay |3⟩ → sink at rate Γ. Zero-rate channels are dropped.
pub fn collapse_operators(params: &PhysicalParams) -> Result<Vec<(OperatorMatrix, f64)>> {
    params.validate()?;
    let nf = params.fock_dim();
    let mut out = Vec::new();
    if params.kappa > 0.0 {
        let mut a = CMat::zeros(ATOM_DIM * nf);
        for lvl in 0..ATOM_DIM {
            for n in 0..params.fock_cutoff {
                a.set(
                    lvl * nf + n,
                    lvl * nf + n + 1,
                    C64::new(((n + 1) as f64).sqrt(), 0.0),
                );
            }
        }
        out.push((OperatorMatrix::new(params.dims(), a)?, params.kappa));
    }
    if params.gamma > 0.0 {
        let mut l = CMat::zeros(ATOM_DIM * nf);
        for n in 0..nf {
            l.set(LVL_SINK * nf + n, LVL_3 * nf + n, C64::ONE);
        }
        out.push((OperatorMatrix::new(params.dims(), l)?, params.gamma));
    }
    Ok(out)
}

// ----------------------------------------------------------------- pulses --

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseShape {
    Square,
    Gaussian,
}

/// Time profile of the probe field. For a gaussian, `duration` is the full
/// width at half maximum of the field envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec {
    pub shape: PulseShape,
    pub duration: f64,
    pub center_time: f64,
    pub peak_amplitude: f64,
    pub carrier_detuning: f64,
}

impl PulseSpec {
    pub fn new(
        shape: PulseShape,
        duration: f64,
        center_time: f64,
        peak_amplitude: f64,
        carrier_detuning: f64,
    ) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::invalid(
                "duration",
                format!("{duration} s; must be > 0"),
            ));
        }
        if !center_time.is_finite() {
            return Err(Error::invalid("center_time", format!("{center_time}")));
        }
        if !(peak_amplitude >= 0.0) || !peak_amplitude.is_finite() {
            return Err(Error::invalid(
                "peak_amplitude",
                format!("{peak_amplitude}; must be ≥ 0"),
            ));
        }
        if !carrier_detuning.is_finite() {
            return Err(Error::invalid(
                "carrier_detuning",
                format!("{carrier_detuning}"),
            ));
        }
        Ok(PulseSpec {
            shape,
            duration,
            center_time,
            peak_amplitude,
            carrier_detuning,
        })
    }
}

/// Field envelope at time t: a square window of width T_p around the center,
/// or peak·exp(−4 ln2 (t−c)²/T_p²) whose value halves at t = c ± T_p/2.
pub fn pulse_envelope(spec: &PulseSpec, t: f64) -> f64 {
    match spec.shape {
        PulseShape::Square => {
            if (t - spec.center_time).abs() <= 0.5 * spec.duration {
                spec.peak_amplitude
            } else {
                0.0
            }
        }
        PulseShape::Gaussian => {
            let x = (t - spec.center_time) / spec.duration;
            spec.peak_amplitude * (-4.0 * std::f64::consts::LN_2 * x * x).exp()
        }
    }
}

// ------------------------------------------------------------ stark switch --

/// Detuning program for the Stark switch: the atom sits far off resonance
/// except during a window of an integer number of vacuum Rabi cycles, with
/// linear ramps of `ramp_time` just inside each window edge.
#[derive(Debug, Clone, PartialEq)]
pub struct StarkSchedule {
    window_start: f64,
    window_duration: f64,
    off_detuning: f64,
    ramp_time: f64,
    cycles: u32,
}

impl StarkSchedule {
    /// Number of vacuum Rabi cycles a window must hold, within this relative
    /// slack, for the interaction to return the atom to its initial state.
    const CYCLE_TOL: f64 = 1e-6;

    pub fn new(
        window_start: f64,
        window_duration: f64,
        off_detuning: f64,
        ramp_time: f64,
        g: f64,
    ) -> Result<Self> {
        let period = vacuum_rabi_period(g)?;
        if !(window_start >= 0.0) || !window_start.is_finite() {
            return Err(Error::invalid(
                "window_start",
                format!("{window_start} s; must be ≥ 0"),
            ));
        }
        if !(window_duration > 0.0) || !window_duration.is_finite() {
            return Err(Error::invalid(
                "window_duration",
                format!("{window_duration} s; must be > 0"),
            ));
        }
        let cycles_f = window_duration / period;
        let cycles = cycles_f.round();
        if cycles < 1.0 || (cycles_f - cycles).abs() > Self::CYCLE_TOL * cycles {
            return Err(Error::invalid(
                "window_duration",
                format!("{window_duration} s is {cycles_f:.6} Rabi cycles; must be an integer ≥ 1"),
            ));
        }
        if !(off_detuning > 0.0) || !off_detuning.is_finite() {
            return Err(Error::invalid(
                "off_detuning",
                format!("{off_detuning} rad/s; must be > 0"),
            ));
        }
        if !(ramp_time >= 0.0) || !ramp_time.is_finite() || 2.0 * ramp_time > window_duration {
            return Err(Error::invalid(
                "ramp_time",
                format!("{ramp_time} s; must satisfy 0 ≤ 2·ramp_time ≤ window_duration"),
            ));
        }
        Ok(StarkSchedule {
            window_start,
            window_duration,
            off_detuning,
            ramp_time,
            cycles: cycles as u32,
        })
    }

    /// Window of `cycles` Rabi cycles with the conventional margins:
    /// off detuning 100·g and ramps of a tenth of a cycle.
    pub fn for_cycles(window_start: f64, cycles: u32, g: f64) -> Result<Self> {
        if cycles == 0 {
            return Err(Error::invalid("cycles", "0; must be ≥ 1".to_string()));
        }
        let period = vacuum_rabi_period(g)?;
        StarkSchedule::new(
            window_start,
            cycles as f64 * period,
            100.0 * g,
            period / 10.0,
            g,
        )
    }

    pub fn window_start(&self) -> f64 {
        self.window_start
    }

    pub fn window_duration(&self) -> f64 {
        self.window_duration
    }

    pub fn window_end(&self) -> f64 {
        self.window_start + self.window_duration
    }

    pub fn off_detuning(&self) -> f64 {
        self.off_detuning
    }

    pub fn ramp_time(&self) -> f64 {
        self.ramp_time
    }

    pub fn cycles(&self) -> u32 {
        self.cycles
    }
}

/// Atom-cavity detuning at time t under the schedule: full off-detuning
/// outside the window, zero inside, linear ramps just inside the edges.
pub fn stark_detuning(schedule: &StarkSchedule, t: f64) -> f64 {
    let s = schedule.window_start;
    let e = schedule.window_end();
    let r = schedule.ramp_time;
    let off = schedule.off_detuning;
    if t <= s || t >= e {
        off
    } else if r > 0.0 && t < s + r {
        off * (1.0 - (t - s) / r)
    } else if r > 0.0 && t > e - r {
        off * (1.0 - (e - t) / r)
    } else {
        0.0
    }
}
