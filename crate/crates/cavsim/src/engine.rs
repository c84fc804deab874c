//! Delayed-choice trial dispatcher: timeline construction, single-trial
//! physics, seeded batch execution, and fringe analysis of run records.
//!
//! A trial walks one atom through π/2 → resonance window (N vacuum Rabi
//! cycles, optionally probed) → π/2 → level readout. Free-flight gaps are
//! inert in the rotating frame, so only the window and probe content enter
//! the state computation. The choice bit selects whether the window program
//! runs: with choice 0 the atom stays far detuned for the whole transit,
//! with choice 1 the cavity is tuned through the N cycles and the probe
//! fires inside the window.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::circuit::{phase_gate, pi2_gate};
use crate::error::{Error, Result};
use crate::evolve::{evolve_closed, evolve_lindblad};
use crate::fit::{fit_fringe_counts, FringeFit};
use crate::model::{
    collapse_operators, jc_hamiltonian, light_shift_phase, vacuum_rabi_period, PhysicalParams,
    PulseShape, PulseSpec, StarkSchedule, ATOM_DIM, LVL_1, LVL_2, LVL_3, LVL_SINK,
};
use crate::spectrum::{classify_detector, resonant_extinction, DetectorLabel, DEFAULT_THRESHOLD};
use crate::state::{DensityOperator, OperatorMatrix, QuantumState};
use num_complex::Complex64 as C64;

/// Largest admissible mean photon number for the counting detector; keeps
/// the inversion sampler exact in f64 arithmetic.
pub const POISSON_MEAN_MAX: f64 = 500.0;

// --------------------------------------------------------------- timeline --

/// How a probe window is read out: threshold on the normalized mean
/// transmission, optionally resampled through Poisson counting noise with
/// the given mean photon number at full transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorPolicy {
    pub threshold: f64,
    pub poisson_mean: Option<f64>,
}

impl Default for DetectorPolicy {
    fn default() -> Self {
        DetectorPolicy {
            threshold: DEFAULT_THRESHOLD,
            poisson_mean: None,
        }
    }
}

impl DetectorPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(
                "threshold",
                format!("{}; must lie strictly inside (0, 1)", self.threshold),
            ));
        }
        if let Some(m) = self.poisson_mean {
            if !(m > 0.0 && m <= POISSON_MEAN_MAX) {
                return Err(Error::invalid(
                    "poisson_mean",
                    format!("{m}; must lie in (0, {POISSON_MEAN_MAX}]"),
                ));
            }
        }
        Ok(())
    }
}

/// One entry of the pulse program. Windows are stamped by their opening
/// edge; a gaussian probe is boxed by its FWHM for scheduling purposes.
#[derive(Debug, Clone, PartialEq)]
pub enum TimelineEvent {
    Pi2Pulse {
        time: f64,
        phase: f64,
    },
    CavityWindow(StarkSchedule),
    ProbeWindow {
        pulse: PulseSpec,
        policy: DetectorPolicy,
    },
    Measure {
        time: f64,
    },
}

impl TimelineEvent {
    /// Instant the event begins.
    pub fn start_time(&self) -> f64 {
        match self {
            TimelineEvent::Pi2Pulse { time, .. } => *time,
            TimelineEvent::CavityWindow(s) => s.window_start(),
            TimelineEvent::ProbeWindow { pulse, .. } => pulse.center_time - pulse.duration / 2.0,
            TimelineEvent::Measure { time } => *time,
        }
    }
}

/// Validated pulse program for one transit: exactly two π/2 pulses, at most
/// one cavity window and one probe window between them, and a final readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    events: Vec<TimelineEvent>,
}

impl Timeline {
    pub fn new(events: Vec<TimelineEvent>) -> Result<Self> {
        let fail = |msg: String| Err(Error::Timeline(msg));
        let mut prev = f64::NEG_INFINITY;
        for e in &events {
            let t = e.start_time();
            if !t.is_finite() {
                return fail(format!("event at non-finite time {t}"));
            }
            if t <= prev {
                return fail(format!(
                    "event times must be strictly increasing; {t} s follows {prev} s"
                ));
            }
            prev = t;
        }
        let pulses: Vec<(f64, f64)> = events
            .iter()
            .filter_map(|e| match e {
                TimelineEvent::Pi2Pulse { time, phase } => Some((*time, *phase)),
                _ => None,
            })
            .collect();
        if pulses.len() != 2 {
            return fail(format!("{} π/2 pulses; need exactly two", pulses.len()));
        }
        if pulses.iter().any(|(_, p)| !p.is_finite()) {
            return fail("π/2 pulse with non-finite phase".into());
        }
        let measures: Vec<f64> = events
            .iter()
            .filter_map(|e| match e {
                TimelineEvent::Measure { time } => Some(*time),
                _ => None,
            })
            .collect();
        if measures.len() != 1 {
            return fail(format!(
                "{} measure events; need exactly one",
                measures.len()
            ));
        }
        match events.last() {
            Some(TimelineEvent::Measure { .. }) => {}
            _ => return fail("measurement must be the final event".into()),
        }
        if measures[0] <= pulses[1].0 {
            return fail("measurement must follow the second π/2 pulse".into());
        }
        let windows: Vec<&StarkSchedule> = events
            .iter()
            .filter_map(|e| match e {
                TimelineEvent::CavityWindow(s) => Some(s),
                _ => None,
            })
            .collect();
        if windows.len() > 1 {
            return fail("more than one cavity window".into());
        }
        let probes: Vec<(&PulseSpec, &DetectorPolicy)> = events
            .iter()
            .filter_map(|e| match e {
                TimelineEvent::ProbeWindow { pulse, policy } => Some((pulse, policy)),
                _ => None,
            })
            .collect();
        if probes.len() > 1 {
            return fail("more than one probe window".into());
        }
        if let Some(s) = windows.first() {
            if s.window_start() <= pulses[0].0 || s.window_end() > pulses[1].0 {
                return fail(format!(
                    "cavity window [{}, {}] s must lie between the π/2 pulses at {} and {} s",
                    s.window_start(),
                    s.window_end(),
                    pulses[0].0,
                    pulses[1].0
                ));
            }
        }
        if let Some((pulse, policy)) = probes.first() {
            policy.validate()?;
            let s = windows
                .first()
                .ok_or_else(|| Error::Timeline("probe window without a cavity window".into()))?;
            let lo = pulse.center_time - pulse.duration / 2.0;
            let hi = pulse.center_time + pulse.duration / 2.0;
            if lo < s.window_start() || hi > s.window_end() {
                return fail(format!(
                    "probe window [{lo}, {hi}] s must lie inside the cavity window [{}, {}] s",
                    s.window_start(),
                    s.window_end()
                ));
            }
        }
        Ok(Timeline { events })
    }

    pub fn events(&self) -> &[TimelineEvent] {
        &self.events
    }

    /// The two π/2 pulses as (time, phase), in order.
    pub fn pi2_pulses(&self) -> [(f64, f64); 2] {
        let mut out = [(0.0, 0.0); 2];
        let mut k = 0;
        for e in &self.events {
            if let TimelineEvent::Pi2Pulse { time, phase } = e {
                out[k] = (*time, *phase);
                k += 1;
            }
        }
        out
    }

    pub fn cavity_window(&self) -> Option<&StarkSchedule> {
        self.events.iter().find_map(|e| match e {
            TimelineEvent::CavityWindow(s) => Some(s),
            _ => None,
        })
    }

    pub fn probe(&self) -> Option<(&PulseSpec, &DetectorPolicy)> {
        self.events.iter().find_map(|e| match e {
            TimelineEvent::ProbeWindow { pulse, policy } => Some((pulse, policy)),
            _ => None,
        })
    }

    pub fn measure_time(&self) -> f64 {
        match self.events.last() {
            Some(TimelineEvent::Measure { time }) => *time,
            _ => unreachable!("validated at construction"),
        }
    }
}

/// Knobs for [`build_timeline`]; `None` fields are derived from the physical
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineSpec {
    pub pulse_shape: PulseShape,
    /// Probe width T_p (FWHM for a gaussian).
    pub probe_width: f64,
    pub probe_enabled: bool,
    /// Window length in vacuum Rabi cycles; derived from 2·T_p when absent.
    pub interaction_cycles: Option<u32>,
    /// Stark ramp duration; one tenth of a Rabi cycle when absent.
    pub ramp_time: Option<f64>,
    pub probe_carrier_detuning: f64,
    pub detector: DetectorPolicy,
}

impl TimelineSpec {
    /// Square 35 μs probe, auto window, threshold detector.
    pub fn reference() -> Self {
        TimelineSpec {
            pulse_shape: PulseShape::Square,
            probe_width: 35e-6,
            probe_enabled: true,
            interaction_cycles: None,
            ramp_time: None,
            probe_carrier_detuning: 0.0,
            detector: DetectorPolicy::default(),
        }
    }
}

/// Lay out one transit: π/2, cavity window of N full cycles with the probe
/// centered in it, π/2, readout, with one Rabi period of slack between
/// stages. Without an explicit cycle count the window is the nearest whole
/// number of cycles to twice the probe width, and at least one.
pub fn build_timeline(params: &PhysicalParams, spec: &TimelineSpec) -> Result<Timeline> {
    params.validate()?;
    spec.detector.validate()?;
    let t_rabi = vacuum_rabi_period(params.g)?;
    if !(spec.probe_width > 0.0) || !spec.probe_width.is_finite() {
        return Err(Error::invalid(
            "probe_width",
            format!("{} s; must be > 0", spec.probe_width),
        ));
    }
    let cycles = match spec.interaction_cycles {
        Some(0) => return Err(Error::invalid("interaction_cycles", "0; must be ≥ 1")),
        Some(n) => n,
        None => ((2.0 * spec.probe_width / t_rabi).round() as u32).max(1),
    };
    let t_i = cycles as f64 * t_rabi;
    // strict fit, with slack so an exact-length probe cannot sneak through
    // the rounding of t_i
    if spec.probe_enabled && spec.probe_width >= t_i * (1.0 - 1e-9) {
        return Err(Error::Timeline(format!(
            "probe width {} s does not fit strictly inside the {}-cycle window of {} s",
            spec.probe_width, cycles, t_i
        )));
    }
    let gap = t_rabi;
    let window_start = gap;
    let schedule = match spec.ramp_time {
        None => StarkSchedule::for_cycles(window_start, cycles, params.g)?,
        Some(r) => StarkSchedule::new(window_start, t_i, 100.0 * params.g, r, params.g)?,
    };
    let mut events = vec![
        TimelineEvent::Pi2Pulse {
            time: 0.0,
            phase: 0.0,
        },
        TimelineEvent::CavityWindow(schedule),
    ];
    if spec.probe_enabled {
        events.push(TimelineEvent::ProbeWindow {
            pulse: PulseSpec::new(
                spec.pulse_shape,
                spec.probe_width,
                window_start + t_i / 2.0,
                1.0,
                spec.probe_carrier_detuning,
            )?,
            policy: spec.detector.clone(),
        });
    }
    events.push(TimelineEvent::Pi2Pulse {
        time: window_start + t_i + gap,
        phase: 0.0,
    });
    events.push(TimelineEvent::Measure {
        time: window_start + t_i + 2.0 * gap,
    });
    Timeline::new(events)
}

// ------------------------------------------------------------ trial law ---

/// Deterministic outcome law of one trial configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialDistribution {
    /// No probe fired: bare Ramsey fringe over the atom readout.
    Ramsey { p_atom: [f64; 2] },
    /// Probe fired inside the window.
    Probed {
        /// joint[d][a]: detector row d (0 down, 1 up) and atom readout a
        /// (0 → level 1, 1 → level 2), renormalized to the trials whose
        /// atom lands in a readable level.
        joint: [[f64; 2]; 2],
        /// Mean probe transmission behind each detector row, for the
        /// photon-counting relabel mode.
        row_transmission: [f64; 2],
        /// Whether the two transit branches classify to different rows.
        resolved: bool,
        /// Fraction of the transit mass the readout retains.
        detected_fraction: f64,
    },
}

impl TrialDistribution {
    pub fn atom_marginal(&self) -> [f64; 2] {
        match self {
            TrialDistribution::Ramsey { p_atom } => *p_atom,
            TrialDistribution::Probed { joint, .. } => {
                [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]]
            }
        }
    }

    /// P(down), P(up); absent when no probe fired.
    pub fn detector_marginal(&self) -> Option<[f64; 2]> {
        match self {
            TrialDistribution::Ramsey { .. } => None,
            TrialDistribution::Probed { joint, .. } => {
                Some([joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]])
            }
        }
    }

    /// Atom readout law conditioned on one detector row.
    pub fn atom_given_detector(&self, label: DetectorLabel) -> Result<[f64; 2]> {
        match self {
            TrialDistribution::Ramsey { .. } => Err(Error::Analysis(
                "no detector reading exists without a probe".into(),
            )),
            TrialDistribution::Probed { joint, .. } => {
                let row = joint[detector_row(label)];
                let w = row[0] + row[1];
                if w <= 0.0 {
                    return Err(Error::Analysis(format!(
                        "conditioning on a detector row of zero weight ({label:?})"
                    )));
                }
                Ok([row[0] / w, row[1] / w])
            }
        }
    }
}

fn detector_row(label: DetectorLabel) -> usize {
    match label {
        DetectorLabel::Down => 0,
        DetectorLabel::Up => 1,
    }
}

fn row_detector(row: usize) -> DetectorLabel {
    if row == 0 {
        DetectorLabel::Down
    } else {
        DetectorLabel::Up
    }
}

/// Embed a 2×2 atom gate on levels (la, lb), identity elsewhere.
fn embed_pair_gate(u: [[C64; 2]; 2], la: usize, lb: usize, fock: usize) -> OperatorMatrix {
    let mut op = OperatorMatrix::identity(vec![ATOM_DIM, fock]).expect("static dims");
    let m = op.matrix_mut();
    for n in 0..fock {
        let (ia, ib) = (la * fock + n, lb * fock + n);
        m.set(ia, ia, u[0][0]);
        m.set(ia, ib, u[0][1]);
        m.set(ib, ia, u[1][0]);
        m.set(ib, ib, u[1][1]);
    }
    op
}

/// Diagonal projector onto a set of atom levels.
fn atom_projector(levels: &[usize], fock: usize) -> OperatorMatrix {
    let mut op = OperatorMatrix::identity(vec![ATOM_DIM, fock]).expect("static dims");
    let m = op.matrix_mut();
    for l in 0..ATOM_DIM {
        if !levels.contains(&l) {
            for n in 0..fock {
                m.set(l * fock + n, l * fock + n, C64::new(0.0, 0.0));
            }
        }
    }
    op
}

fn gate_state(u: &OperatorMatrix, psi: &QuantumState) -> QuantumState {
    let mut out = vec![C64::new(0.0, 0.0); psi.dim()];
    u.matrix().matvec_into(psi.amplitudes(), &mut out);
    QuantumState::from_raw(psi.dims().to_vec(), out)
}

fn gate_density(u: &OperatorMatrix, rho: &DensityOperator) -> DensityOperator {
    let m = u.matrix();
    let out = m.mul(rho.matrix()).mul(&m.adjoint());
    DensityOperator::from_raw(rho.dims().to_vec(), out)
}

fn level_mass_state(psi: &QuantumState, level: usize, fock: usize) -> f64 {
    psi.amplitudes()[level * fock..(level + 1) * fock]
        .iter()
        .map(|a| a.norm_sqr())
        .sum()
}

fn level_mass_density(rho: &DensityOperator, level: usize, fock: usize) -> f64 {
    (0..fock)
        .map(|n| rho.matrix().get(level * fock + n, level * fock + n).re)
        .sum::<f64>()
        .max(0.0)
}

/// Atom-cavity state at the end of the resonance window for a probed trial:
/// first π/2 on |1⟩⊗|vac⟩, then N full cycles of resonant coupling. Closed
/// when both dissipation rates vanish, a master-equation run otherwise.
enum Transit {
    Pure(QuantumState),
    Mixed(DensityOperator),
}

fn window_transit(params: &PhysicalParams, timeline: &Timeline) -> Result<Transit> {
    let schedule = timeline
        .cavity_window()
        .ok_or_else(|| Error::Timeline("timeline has no cavity window".into()))?;
    let t_rabi = vacuum_rabi_period(params.g)?;
    let t_i = schedule.window_duration();
    let n = (t_i / t_rabi).round();
    if n < 1.0 || (t_i - n * t_rabi).abs() > 1e-6 * t_rabi {
        return Err(Error::Timeline(format!(
            "cavity window of {t_i} s is not a whole number of vacuum Rabi cycles (π/g = {t_rabi} s)"
        )));
    }
    let fock = params.fock_dim();
    let psi0 = QuantumState::basis(params.dims(), &[LVL_1, 0])?;
    let r = embed_pair_gate(pi2_gate(), LVL_1, LVL_2, fock);
    let psi = gate_state(&r, &psi0);
    let h = jc_hamiltonian(params, 0.0)?;
    let dt = params.default_dt()?;
    let collapse = collapse_operators(params)?;
    if collapse.is_empty() {
        Ok(Transit::Pure(evolve_closed(&psi, &h, t_i, dt)?))
    } else {
        Ok(Transit::Mixed(evolve_lindblad(
            &psi.to_density(),
            &h,
            &collapse,
            t_i,
            dt,
        )?))
    }
}

/// Ramsey phase as seen by the atom: the swept phase plus any static phase
/// difference programmed on the two π/2 pulses.
fn effective_theta(timeline: &Timeline, theta: f64) -> f64 {
    let [(_, p1), (_, p2)] = timeline.pi2_pulses();
    theta + (p2 - p1)
}

fn ramsey_distribution(
    params: &PhysicalParams,
    timeline: &Timeline,
    theta: f64,
) -> Result<TrialDistribution> {
    let fock = params.fock_dim();
    let psi0 = QuantumState::basis(params.dims(), &[LVL_1, 0])?;
    let r = embed_pair_gate(pi2_gate(), LVL_1, LVL_2, fock);
    let phase = embed_pair_gate(
        phase_gate(effective_theta(timeline, theta)),
        LVL_1,
        LVL_2,
        fock,
    );
    let out = gate_state(&r, &gate_state(&phase, &gate_state(&r, &psi0)));
    let p1 = level_mass_state(&out, LVL_1, fock);
    let p2 = level_mass_state(&out, LVL_2, fock);
    let total = p1 + p2;
    Ok(TrialDistribution::Ramsey {
        p_atom: [p1 / total, p2 / total],
    })
}

fn probed_distribution(
    params: &PhysicalParams,
    timeline: &Timeline,
    transit: &Transit,
    theta: f64,
) -> Result<TrialDistribution> {
    let (pulse, policy) = timeline.probe().ok_or_else(|| {
        Error::Timeline("choice bit 1 needs a probe window in the timeline".into())
    })?;
    // a lossless blocked cavity transmits nothing; κ → 0 limit of the response
    let ext = if params.kappa > 0.0 {
        resonant_extinction(params, pulse)?
    } else {
        0.0
    };
    let blocked = classify_detector(ext, policy.threshold)?.label;
    // the empty-cavity row always reads up, so the branches are resolved
    // exactly when the blocked branch reads down
    let resolved = blocked == DetectorLabel::Down;

    let fock = params.fock_dim();
    let phi = light_shift_phase(
        params.g,
        params.probe_photons,
        pulse.duration,
        params.delta12,
    )?;
    let phase = embed_pair_gate(
        phase_gate(effective_theta(timeline, theta) + phi),
        LVL_1,
        LVL_2,
        fock,
    );
    let r = embed_pair_gate(pi2_gate(), LVL_1, LVL_2, fock);
    let p_block = atom_projector(&[LVL_1, LVL_3], fock);
    let p_pass = atom_projector(&[LVL_2, LVL_SINK], fock);

    let mut joint = [[0.0; 2]; 2];
    let (w_block, w_pass);
    match transit {
        Transit::Pure(psi) => {
            w_block = level_mass_state(psi, LVL_1, fock) + level_mass_state(psi, LVL_3, fock);
            w_pass = level_mass_state(psi, LVL_2, fock) + level_mass_state(psi, LVL_SINK, fock);
            let branches: Vec<(usize, QuantumState)> = if resolved {
                vec![
                    (0, gate_state(&p_block, psi)),
                    (1, gate_state(&p_pass, psi)),
                ]
            } else {
                vec![(1, psi.clone())]
            };
            for (row, b) in &branches {
                let out = gate_state(&r, &gate_state(&phase, b));
                joint[*row][0] += level_mass_state(&out, LVL_1, fock);
                joint[*row][1] += level_mass_state(&out, LVL_2, fock);
            }
        }
        Transit::Mixed(rho) => {
            w_block = level_mass_density(rho, LVL_1, fock) + level_mass_density(rho, LVL_3, fock);
            w_pass = level_mass_density(rho, LVL_2, fock) + level_mass_density(rho, LVL_SINK, fock);
            let branches: Vec<(usize, DensityOperator)> = if resolved {
                vec![
                    (0, gate_density(&p_block, rho)),
                    (1, gate_density(&p_pass, rho)),
                ]
            } else {
                vec![(1, rho.clone())]
            };
            for (row, b) in &branches {
                let out = gate_density(&r, &gate_density(&phase, b));
                joint[*row][0] += level_mass_density(&out, LVL_1, fock);
                joint[*row][1] += level_mass_density(&out, LVL_2, fock);
            }
        }
    }

    let detected: f64 = joint.iter().flatten().sum();
    if detected <= 1e-12 {
        return Err(Error::Analysis(
            "no transit mass reaches the readout levels".into(),
        ));
    }
    for v in joint.iter_mut().flatten() {
        *v /= detected;
    }
    let up_transmission = if resolved {
        1.0
    } else {
        (w_block * ext + w_pass) / (w_block + w_pass)
    };
    Ok(TrialDistribution::Probed {
        joint,
        row_transmission: [ext, up_transmission],
        resolved,
        detected_fraction: detected,
    })
}

/// Deterministic outcome law for one (choice, phase) setting. Choice 0 keeps
/// the atom detuned throughout; choice 1 runs the window and probe. The
/// probed law requires a probe window on the timeline.
pub fn trial_distribution(
    params: &PhysicalParams,
    timeline: &Timeline,
    choice_bit: u8,
    theta_ramsey: f64,
) -> Result<TrialDistribution> {
    params.validate()?;
    if choice_bit > 1 {
        return Err(Error::invalid(
            "choice_bit",
            format!("{choice_bit}; must be 0 or 1"),
        ));
    }
    if !theta_ramsey.is_finite() {
        return Err(Error::invalid(
            "theta_ramsey",
            format!("{theta_ramsey}; must be finite"),
        ));
    }
    if choice_bit == 0 {
        ramsey_distribution(params, timeline, theta_ramsey)
    } else {
        if timeline.probe().is_none() {
            return Err(Error::Timeline(
                "choice bit 1 needs a probe window in the timeline".into(),
            ));
        }
        let transit = window_transit(params, timeline)?;
        probed_distribution(params, timeline, &transit, theta_ramsey)
    }
}

/// Outcome laws across a whole phase grid. The window evolution does not
/// depend on the Ramsey phase, so it runs once and feeds every probed law;
/// sweeping many phases costs one transit.
pub fn distribution_grid(
    params: &PhysicalParams,
    timeline: &Timeline,
    choice_bit: u8,
    theta_grid: &[f64],
) -> Result<Vec<TrialDistribution>> {
    params.validate()?;
    if choice_bit > 1 {
        return Err(Error::invalid(
            "choice_bit",
            format!("{choice_bit}; must be 0 or 1"),
        ));
    }
    if theta_grid.is_empty() {
        return Err(Error::invalid("theta_grid", "empty"));
    }
    if theta_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("theta_grid", "non-finite phase"));
    }
    if choice_bit == 0 {
        theta_grid
            .iter()
            .map(|&t| ramsey_distribution(params, timeline, t))
            .collect()
    } else {
        if timeline.probe().is_none() {
            return Err(Error::Timeline(
                "choice bit 1 needs a probe window in the timeline".into(),
            ));
        }
        let transit = window_transit(params, timeline)?;
        theta_grid
            .iter()
            .map(|&t| probed_distribution(params, timeline, &transit, t))
            .collect()
    }
}

// -------------------------------------------------------------- sampling --

/// Outcome of one atom transit.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub trial_id: u64,
    pub choice_bit: u8,
    pub ramsey_phase: f64,
    /// Probe reading; present exactly when the choice bit is 1.
    pub detector: Option<DetectorLabel>,
    /// Field-ionization readout, level 1 or 2.
    pub atom_outcome: u8,
    /// Seed that drove this trial's sampling.
    pub seed: u64,
}

/// Exact Poisson sampler by CDF inversion; `mean` is capped well below the
/// exp underflow threshold by [`POISSON_MEAN_MAX`].
fn poisson_sample<R: RngCore>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf && k < 100_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn sample_outcome<R: RngCore>(
    dist: &TrialDistribution,
    policy: Option<&DetectorPolicy>,
    rng: &mut R,
) -> Result<(Option<DetectorLabel>, u8)> {
    match dist {
        TrialDistribution::Ramsey { p_atom } => {
            let u: f64 = rng.random();
            Ok((None, if u < p_atom[0] { 1 } else { 2 }))
        }
        TrialDistribution::Probed {
            joint,
            row_transmission,
            ..
        } => {
            let policy = policy.ok_or_else(|| {
                Error::Timeline("probed distribution without a probe window".into())
            })?;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = (1, 1);
            'cells: for d in 0..2 {
                for a in 0..2 {
                    acc += joint[d][a];
                    if u < acc {
                        pick = (d, a);
                        break 'cells;
                    }
                }
            }
            let (d, a) = pick;
            let label = match policy.poisson_mean {
                None => row_detector(d),
                Some(mean) => {
                    let k = poisson_sample(rng, mean * row_transmission[d]);
                    classify_detector(k as f64 / mean, policy.threshold)?.label
                }
            };
            Ok((Some(label), a as u8 + 1))
        }
    }
}

/// Run one transit and sample its outcome. The record's trial id is 0; batch
/// execution assigns ids. Identical inputs and seed give an identical record.
pub fn run_trial(
    params: &PhysicalParams,
    timeline: &Timeline,
    choice_bit: u8,
    theta_ramsey: f64,
    seed: u64,
) -> Result<RunRecord> {
    let dist = trial_distribution(params, timeline, choice_bit, theta_ramsey)?;
    let policy = timeline.probe().map(|(_, p)| p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (detector, atom_outcome) = sample_outcome(&dist, policy, &mut rng)?;
    Ok(RunRecord {
        trial_id: 0,
        choice_bit,
        ramsey_phase: theta_ramsey,
        detector,
        atom_outcome,
        seed,
    })
}

// ----------------------------------------------------------------- batch --

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(SEED_STRIDE);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct BatchTables {
    ramsey: Vec<TrialDistribution>,
    probed: Vec<TrialDistribution>,
}

fn batch_setup(
    params: &PhysicalParams,
    timeline: &Timeline,
    theta_grid: &[f64],
    trials_per_point: usize,
) -> Result<BatchTables> {
    params.validate()?;
    if trials_per_point == 0 {
        return Err(Error::invalid("trials_per_point", "0; must be ≥ 1"));
    }
    if theta_grid.is_empty() {
        return Err(Error::invalid("theta_grid", "empty"));
    }
    if theta_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("theta_grid", "non-finite phase"));
    }
    if timeline.probe().is_none() {
        return Err(Error::Timeline(
            "a delayed-choice batch needs a probe window in the timeline".into(),
        ));
    }
    Ok(BatchTables {
        ramsey: distribution_grid(params, timeline, 0, theta_grid)?,
        probed: distribution_grid(params, timeline, 1, theta_grid)?,
    })
}

fn batch_record(
    tables: &BatchTables,
    timeline: &Timeline,
    theta_grid: &[f64],
    trials_per_point: usize,
    master_seed: u64,
    idx: usize,
) -> Result<RunRecord> {
    let point = idx / trials_per_point;
    let trial_seed = splitmix64(master_seed ^ (idx as u64).wrapping_mul(SEED_STRIDE));
    let mut chooser = ChaCha8Rng::seed_from_u64(trial_seed);
    let choice_bit = (chooser.next_u64() & 1) as u8;
    let sample_seed = chooser.next_u64();
    let dist = if choice_bit == 0 {
        &tables.ramsey[point]
    } else {
        &tables.probed[point]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let (detector, atom_outcome) =
        sample_outcome(dist, timeline.probe().map(|(_, p)| p), &mut rng)?;
    Ok(RunRecord {
        trial_id: idx as u64,
        choice_bit,
        ramsey_phase: theta_grid[point],
        detector,
        atom_outcome,
        seed: sample_seed,
    })
}

/// Run `trials_per_point` trials at every phase of the grid, with the choice
/// bit of each trial drawn from a stream seeded per trial id. Records come
/// back in trial-id order and depend only on the inputs and the master seed,
/// not on execution order or thread count.
#[cfg(feature = "parallel")]
pub fn run_batch(
    params: &PhysicalParams,
    timeline: &Timeline,
    theta_grid: &[f64],
    trials_per_point: usize,
    master_seed: u64,
) -> Result<Vec<RunRecord>> {
    let tables = batch_setup(params, timeline, theta_grid, trials_per_point)?;
    (0..theta_grid.len() * trials_per_point)
        .into_par_iter()
        .map(|i| {
            batch_record(
                &tables,
                timeline,
                theta_grid,
                trials_per_point,
                master_seed,
                i,
            )
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(
    params: &PhysicalParams,
    timeline: &Timeline,
    theta_grid: &[f64],
    trials_per_point: usize,
    master_seed: u64,
) -> Result<Vec<RunRecord>> {
    run_batch_sequential(params, timeline, theta_grid, trials_per_point, master_seed)
}

/// Single-threaded [`run_batch`]; byte-for-byte the same records.
pub fn run_batch_sequential(
    params: &PhysicalParams,
    timeline: &Timeline,
    theta_grid: &[f64],
    trials_per_point: usize,
    master_seed: u64,
) -> Result<Vec<RunRecord>> {
    let tables = batch_setup(params, timeline, theta_grid, trials_per_point)?;
    (0..theta_grid.len() * trials_per_point)
        .map(|i| {
            batch_record(
                &tables,
                timeline,
                theta_grid,
                trials_per_point,
                master_seed,
                i,
            )
        })
        .collect()
}

// -------------------------------------------------------------- analysis --

/// Fringe fit over one subset of the records.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSummary {
    pub label: String,
    pub trials: u64,
    pub fit: FringeFit,
}

/// Fits of P(atom = 2 | θ) for each record partition, plus the joint
/// detector/readout counts of the probed trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSummary {
    pub total_trials: u64,
    pub choice0: PartitionSummary,
    pub choice1: PartitionSummary,
    pub choice1_down: PartitionSummary,
    pub choice1_up: PartitionSummary,
    /// Probed-trial counts indexed [detector row][atom readout − 1].
    pub joint_counts: [[u64; 2]; 2],
}

type PhaseCounts = BTreeMap<u64, [u64; 2]>;

fn bump(counts: &mut PhaseCounts, phase_bits: u64, level2: bool) {
    let c = counts.entry(phase_bits).or_insert([0, 0]);
    c[0] += level2 as u64;
    c[1] += 1;
}

fn fit_partition(label: &str, counts: &PhaseCounts, min_phases: usize) -> Result<PartitionSummary> {
    if counts.is_empty() {
        return Err(Error::Analysis(format!("partition {label} is empty")));
    }
    if counts.len() < min_phases {
        return Err(Error::Analysis(format!(
            "partition {label} covers {} distinct phases; need at least {min_phases}",
            counts.len()
        )));
    }
    let thetas: Vec<f64> = counts.keys().map(|&b| f64::from_bits(b)).collect();
    let successes: Vec<u64> = counts.values().map(|c| c[0]).collect();
    let totals: Vec<u64> = counts.values().map(|c| c[1]).collect();
    let fit = fit_fringe_counts(&thetas, &successes, &totals)
        .map_err(|e| Error::Analysis(format!("partition {label}: {e}")))?;
    Ok(PartitionSummary {
        label: label.into(),
        trials: totals.iter().sum(),
        fit,
    })
}

/// Partition records by choice bit (and by detector row within choice 1),
/// estimate P(atom = 2 | θ) per partition, and fit each fringe. Grouping is
/// keyed on the exact phase values and counts are integers, so the result is
/// identical for any ordering of the records.
pub fn analyze(records: &[RunRecord]) -> Result<AnalysisSummary> {
    if records.is_empty() {
        return Err(Error::Analysis("no records to analyze".into()));
    }
    let mut c0 = PhaseCounts::new();
    let mut c1 = PhaseCounts::new();
    let mut c1_down = PhaseCounts::new();
    let mut c1_up = PhaseCounts::new();
    let mut joint_counts = [[0u64; 2]; 2];
    for r in records {
        if r.choice_bit > 1 {
            return Err(Error::Analysis(format!(
                "trial {}: choice bit {} is not 0 or 1",
                r.trial_id, r.choice_bit
            )));
        }
        if r.atom_outcome != 1 && r.atom_outcome != 2 {
            return Err(Error::Analysis(format!(
                "trial {}: atom outcome {} is not level 1 or 2",
                r.trial_id, r.atom_outcome
            )));
        }
        if !r.ramsey_phase.is_finite() {
            return Err(Error::Analysis(format!(
                "trial {}: non-finite Ramsey phase",
                r.trial_id
            )));
        }
        if (r.choice_bit == 1) != r.detector.is_some() {
            return Err(Error::Analysis(format!(
                "trial {}: detector reading inconsistent with choice bit {}",
                r.trial_id, r.choice_bit
            )));
        }
        let bits = r.ramsey_phase.to_bits();
        let level2 = r.atom_outcome == 2;
        match r.detector {
            None => bump(&mut c0, bits, level2),
            Some(label) => {
                bump(&mut c1, bits, level2);
                joint_counts[detector_row(label)][level2 as usize] += 1;
                match label {
                    DetectorLabel::Down => bump(&mut c1_down, bits, level2),
                    DetectorLabel::Up => bump(&mut c1_up, bits, level2),
                }
            }
        }
    }
    Ok(AnalysisSummary {
        total_trials: records.len() as u64,
        choice0: fit_partition("choice_0", &c0, 8)?,
        choice1: fit_partition("choice_1", &c1, 8)?,
        choice1_down: fit_partition("choice_1_detector_down", &c1_down, 3)?,
        choice1_up: fit_partition("choice_1_detector_up", &c1_up, 3)?,
        joint_counts,
    })
}
