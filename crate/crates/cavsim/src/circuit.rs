//! Closed-form two-qubit circuit for the ideal interferometer run: π/2 pulse,
//! optional atom-detector entangler, composite phase, second π/2 pulse,
//! projective readout. This module is deliberately self-contained (plain
//! arrays, no shared linear algebra) so it can serve as an independent
//! reference for the full physical simulation.
//!
//! Basis order throughout: {|1,↓⟩, |1,↑⟩, |2,↓⟩, |2,↑⟩}, atom first.

use num_complex::Complex64 as C64;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// Joint atom-detector pure state on the 4-dimensional circuit space.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitState {
    amp: [C64; 4],
}

impl CircuitState {
    pub fn new(amp: [C64; 4]) -> Result<Self> {
        let norm2: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "amplitudes",
                format!("squared norm {norm2}; must be 1 within 1e-12"),
            ));
        }
        Ok(CircuitState { amp })
    }

    /// |1,↓⟩: atom in the upper interferometer level, detector reading low.
    pub fn initial() -> Self {
        CircuitState {
            amp: [C64::ONE, C64::ZERO, C64::ZERO, C64::ZERO],
        }
    }

    pub fn amplitudes(&self) -> &[C64; 4] {
        &self.amp
    }

    /// Probabilities of the four joint outcomes.
    pub fn measure(&self) -> JointDistribution {
        JointDistribution {
            p: [
                self.amp[0].norm_sqr(),
                self.amp[1].norm_sqr(),
                self.amp[2].norm_sqr(),
                self.amp[3].norm_sqr(),
            ],
        }
    }
}

/// Probabilities over the outcomes {(1,↓), (1,↑), (2,↓), (2,↑)}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    p: [f64; 4],
}

impl JointDistribution {
    pub fn new(p: [f64; 4]) -> Result<Self> {
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("p", "entries must be finite and ≥ 0"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "p",
                format!("sum {sum}; must be 1 within 1e-12"),
            ));
        }
        Ok(JointDistribution { p })
    }

    pub fn probabilities(&self) -> &[f64; 4] {
        &self.p
    }

    /// (P(atom = 1), P(atom = 2)).
    pub fn atom_marginal(&self) -> (f64, f64) {
        (self.p[0] + self.p[1], self.p[2] + self.p[3])
    }

    /// (P(↓), P(↑)).
    pub fn detector_marginal(&self) -> (f64, f64) {
        (self.p[0] + self.p[2], self.p[1] + self.p[3])
    }

    /// Atom distribution conditioned on a detector reading; errors when the
    /// conditioning outcome has zero weight.
    pub fn atom_given_detector(&self, up: bool) -> Result<(f64, f64)> {
        let (a, b) = if up {
            (self.p[1], self.p[3])
        } else {
            (self.p[0], self.p[2])
        };
        let w = a + b;
        if w <= 0.0 {
            return Err(Error::Analysis(format!(
                "detector outcome {} never occurs; cannot condition on it",
                if up { "up" } else { "down" }
            )));
        }
        Ok((a / w, b / w))
    }
}

/// π/2 pulse on the atom: R = (1/√2)·[[1, i], [i, 1]] over {|1⟩, |2⟩}, so
/// R|1⟩ = (|1⟩ + i|2⟩)/√2.
pub fn pi2_gate() -> [[C64; 2]; 2] {
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    let ri = C64::new(0.0, FRAC_1_SQRT_2);
    [[r, ri], [ri, r]]
}

/// diag(1, e^{iΘ}) over {|1⟩, |2⟩}.
pub fn phase_gate(theta: f64) -> [[C64; 2]; 2] {
    [
        [C64::ONE, C64::ZERO],
        [C64::ZERO, C64::from_polar(1.0, theta)],
    ]
}

/// Detector flip controlled on atom = |2⟩; the |1⟩ branch is untouched.
pub fn entangling_cnot() -> [[C64; 4]; 4] {
    let mut g = [[C64::ZERO; 4]; 4];
    g[0][0] = C64::ONE; // |1,↓⟩ → |1,↓⟩
    g[1][1] = C64::ONE; // |1,↑⟩ → |1,↑⟩
    g[3][2] = C64::ONE; // |2,↓⟩ → |2,↑⟩
    g[2][3] = C64::ONE; // |2,↑⟩ → |2,↓⟩
    g
}

/// Total phase on the |2⟩ branch relative to |1⟩ between the two π/2 pulses:
/// the dialed Ramsey phase, plus (when the probe interacts) the probe light
/// shift and the −π picked up by |1⟩ per completed vacuum Rabi cycle.
pub fn compose_theta(
    theta_ramsey: f64,
    phi_light_shift: f64,
    n_cycles: u32,
    probe_interaction_on: bool,
) -> f64 {
    if probe_interaction_on {
        theta_ramsey + phi_light_shift - n_cycles as f64 * std::f64::consts::PI
    } else {
        theta_ramsey
    }
}

fn apply_atom(g: &[[C64; 2]; 2], s: &CircuitState) -> CircuitState {
    let a = &s.amp;
    let mut out = [C64::ZERO; 4];
    for det in 0..2 {
        for row in 0..2 {
            out[row * 2 + det] = g[row][0] * a[det] + g[row][1] * a[2 + det];
        }
    }
    CircuitState { amp: out }
}

fn apply_joint(g: &[[C64; 4]; 4], s: &CircuitState) -> CircuitState {
    let mut out = [C64::ZERO; 4];
    for (row, out_amp) in out.iter_mut().enumerate() {
        for col in 0..4 {
            *out_amp += g[row][col] * s.amp[col];
        }
    }
    CircuitState { amp: out }
}

/// The full ideal sequence from |1,↓⟩: π/2, entangler when the probe is on,
/// phase Θ on the atom, π/2, then measurement of both subsystems.
pub fn run_circuit(theta: f64, probe_on: bool) -> JointDistribution {
    let mut s = apply_atom(&pi2_gate(), &CircuitState::initial());
    if probe_on {
        s = apply_joint(&entangling_cnot(), &s);
    }
    s = apply_atom(&phase_gate(theta), &s);
    s = apply_atom(&pi2_gate(), &s);
    s.measure()
}

/// The analytic probe-off fringe law: P1 = (1 − cosΘ)/2, P2 = (1 + cosΘ)/2.
pub fn fringe_curve(theta_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if theta_grid.is_empty() {
        return Err(Error::invalid("theta_grid", "empty"));
    }
    Ok(theta_grid
        .iter()
        .map(|&th| (0.5 * (1.0 - th.cos()), 0.5 * (1.0 + th.cos())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mul2(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
        let mut out = [[C64::ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for (k, bk) in b.iter().enumerate() {
                    out[i][j] += a[i][k] * bk[j];
                }
            }
        }
        out
    }

    fn assert_unitary2(g: &[[C64; 2]; 2]) {
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = C64::ZERO;
                for gk in g {
                    acc += gk[i].conj() * gk[j];
                }
                let expect = if i == j { C64::ONE } else { C64::ZERO };
                assert!((acc - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn pi2_maps_one_to_the_printed_superposition() {
        let g = pi2_gate();
        assert_unitary2(&g);
        // R|1⟩ = (|1⟩ + i|2⟩)/√2
        assert!((g[0][0] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((g[1][0] - C64::new(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        // two pulses make a π pulse up to the global i: R·R|1⟩ = i|2⟩
        let rr = mul2(&g, &g);
        assert!(rr[0][0].norm() < 1e-15);
        assert!((rr[1][0] - C64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn phase_gate_forms_a_group() {
        assert_unitary2(&phase_gate(0.7));
        let id = phase_gate(0.0);
        assert!((id[1][1] - C64::ONE).norm() < 1e-15);
        let ab = mul2(&phase_gate(0.9), &phase_gate(-2.3));
        let sum = phase_gate(0.9 - 2.3);
        for i in 0..2 {
            for j in 0..2 {
                assert!((ab[i][j] - sum[i][j]).norm() < 1e-15);
            }
        }
        // Θ = π flips the sign of the |2⟩ component
        let s = CircuitState::new([
            C64::new(FRAC_1_SQRT_2, 0.0),
            C64::ZERO,
            C64::new(0.0, FRAC_1_SQRT_2),
            C64::ZERO,
        ])
        .unwrap();
        let out = apply_atom(&phase_gate(PI), &s);
        assert!((out.amplitudes()[2] - C64::new(0.0, -FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn entangler_is_a_self_inverse_controlled_flip() {
        let g = entangling_cnot();
        // |1,↓⟩ fixed, |2,↓⟩ → |2,↑⟩
        assert_eq!(g[0][0], C64::ONE);
        assert_eq!(g[3][2], C64::ONE);
        assert_eq!(g[2][2], C64::ZERO);
        // self-inverse: applying twice returns the input
        let s = CircuitState::new([
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.5),
            C64::new(-0.5, 0.0),
            C64::new(0.0, -0.5),
        ])
        .unwrap();
        let twice = apply_joint(&g, &apply_joint(&g, &s));
        for i in 0..4 {
            assert!((twice.amplitudes()[i] - s.amplitudes()[i]).norm() < 1e-15);
        }
        // unitarity on the 4-dim space
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = C64::ZERO;
                for gk in &g {
                    acc += gk[i].conj() * gk[j];
                }
                let expect = if i == j { C64::ONE } else { C64::ZERO };
                assert!((acc - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn composite_phase_bookkeeping() {
        assert_eq!(compose_theta(0.4, 0.0, 0, true), 0.4);
        assert_eq!(compose_theta(0.4, 0.2, 7, false), 0.4);
        // even cycle counts contribute nothing mod 2π
        let th = compose_theta(0.4, 0.1, 14, true);
        let wrapped = (th - 0.5).rem_euclid(2.0 * PI);
        assert!(wrapped.abs() < 1e-12 || (wrapped - 2.0 * PI).abs() < 1e-12);
        assert!((compose_theta(0.0, 0.0, 1, true) + PI).abs() < 1e-15);
    }

    #[test]
    fn probe_on_output_is_phase_independent_quarters() {
        for k in 0..64 {
            let theta = 2.0 * PI * k as f64 / 64.0;
            let d = run_circuit(theta, true);
            for &p in d.probabilities() {
                assert!((p - 0.25).abs() < 1e-12, "theta {theta}: {p}");
            }
            // conditionals are exactly even regardless of phase
            let (p1d, p2d) = d.atom_given_detector(false).unwrap();
            let (p1u, p2u) = d.atom_given_detector(true).unwrap();
            for p in [p1d, p2d, p1u, p2u] {
                assert!((p - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn probe_off_reproduces_the_fringe_law() {
        let grid: Vec<f64> = (0..64).map(|k| 2.0 * PI * k as f64 / 64.0).collect();
        let law = fringe_curve(&grid).unwrap();
        for (&theta, &(p1, p2)) in grid.iter().zip(&law) {
            let d = run_circuit(theta, false);
            let (m1, m2) = d.atom_marginal();
            assert!((m1 - p1).abs() < 1e-12, "theta {theta}");
            assert!((m2 - p2).abs() < 1e-12, "theta {theta}");
            assert!((p1 + p2 - 1.0).abs() < 1e-15);
            // the detector is never touched: all weight stays on ↓
            let (down, up) = d.detector_marginal();
            assert_eq!(up, 0.0);
            assert!((down - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fringe_endpoints_and_visibility() {
        let d0 = run_circuit(0.0, false);
        assert!(d0.atom_marginal().0.abs() < 1e-15);
        assert!((d0.atom_marginal().1 - 1.0).abs() < 1e-12);
        let dpi3 = run_circuit(PI / 3.0, false);
        assert!((dpi3.atom_marginal().1 - 0.75).abs() < 1e-12);
        let dpi = run_circuit(PI, false);
        assert!((dpi.atom_marginal().0 - 1.0).abs() < 1e-12);

        let grid: Vec<f64> = (0..256).map(|k| 2.0 * PI * k as f64 / 256.0).collect();
        let law = fringe_curve(&grid).unwrap();
        let p1: Vec<f64> = law.iter().map(|x| x.0).collect();
        let max = p1.iter().cloned().fold(f64::MIN, f64::max);
        let min = p1.iter().cloned().fold(f64::MAX, f64::min);
        assert!(((max - min) / (max + min) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(CircuitState::new([C64::ONE; 4]).is_err());
        assert!(JointDistribution::new([0.5, 0.5, 0.5, 0.5]).is_err());
        assert!(JointDistribution::new([-0.1, 0.6, 0.25, 0.25]).is_err());
        assert!(fringe_curve(&[]).is_err());
        let off = run_circuit(0.3, false);
        assert!(off.atom_given_detector(true).is_err());
    }
}
