//! Dense complex matrices sized for few-level quantum systems.
//!
//! Row-major `Vec<Complex64>` storage, square matrices only. The spaces in
//! this crate stay below ~100 dimensions, so there is no BLAS dependency: a
//! cache-friendly ikj loop is fast enough and keeps results reproducible
//! bit-for-bit across machines.

use num_complex::Complex64 as C64;

#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    n: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat {
            n,
            data: vec![C64::ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C64::ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(C64::ZERO);
    }

    /// out = self * rhs. Panics on size mismatch; callers validate dims at
    /// the type boundary.
    pub fn mul_into(&self, rhs: &CMat, out: &mut CMat) {
        let n = self.n;
        assert!(rhs.n == n && out.n == n, "matmul size mismatch");
        out.data.fill(C64::ZERO);
        for i in 0..n {
            let a_row = &self.data[i * n..(i + 1) * n];
            let o_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == C64::ZERO {
                    continue;
                }
                let b_row = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a_ik * b;
                }
            }
        }
    }

    pub fn mul(&self, rhs: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n);
        self.mul_into(rhs, &mut out);
        out
    }

    /// y = self * x.
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        let n = self.n;
        assert!(x.len() == n && y.len() == n, "matvec size mismatch");
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * n..(i + 1) * n];
            let mut acc = C64::ZERO;
            for (&a, &b) in row.iter().zip(x) {
                acc += a * b;
            }
            *yi = acc;
        }
    }

    pub fn adjoint(&self) -> CMat {
        let n = self.n;
        CMat::from_fn(n, |i, j| self.data[j * n + i].conj())
    }

    /// self += c * other.
    pub fn add_scaled(&mut self, other: &CMat, c: C64) {
        assert_eq!(self.n, other.n);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: C64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    pub fn kron(&self, other: &CMat) -> CMat {
        let (na, nb) = (self.n, other.n);
        let n = na * nb;
        let mut out = CMat::zeros(n);
        for ia in 0..na {
            for ja in 0..na {
                let a = self.data[ia * na + ja];
                if a == C64::ZERO {
                    continue;
                }
                for ib in 0..nb {
                    for jb in 0..nb {
                        out.data[(ia * nb + ib) * n + (ja * nb + jb)] =
                            a * other.data[ib * nb + jb];
                    }
                }
            }
        }
        out
    }

    /// max_ij |A_ij - conj(A_ji)|, the distance from the Hermitian cone.
    pub fn herm_residual(&self) -> f64 {
        let n = self.n;
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let d = self.data[i * n + j] - self.data[j * n + i].conj();
                r = r.max(d.norm());
            }
        }
        r
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// self = (self + self†) / 2, exact for already-Hermitian input.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in i..n {
                let a = self.data[i * n + j];
                let b = self.data[j * n + i];
                let m = 0.5 * (a + b.conj());
                self.data[i * n + j] = m;
                self.data[j * n + i] = m.conj();
            }
        }
    }

    /// Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations,
    /// ascending. Quadratic convergence; plenty for the matrix sizes here.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = self.clone();
        a.symmetrize();
        let scale = a.max_abs().max(1e-300);
        let tol = 1e-14 * scale;
        for _sweep in 0..60 {
            let mut off: f64 = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off = off.max(a.data[p * n + q].norm());
                }
            }
            if off < tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.data[p * n + q];
                    if apq.norm() < tol * 1e-2 {
                        continue;
                    }
                    let app = a.data[p * n + p].re;
                    let aqq = a.data[q * n + q].re;
                    let phase = apq / apq.norm();
                    let theta = 0.5 * (2.0 * apq.norm()).atan2(app - aqq);
                    let (s, c) = theta.sin_cos();
                    let sp = s * phase; // s·e^{iα}
                                        // columns p, q  (A <- A·J)
                    for k in 0..n {
                        let akp = a.data[k * n + p];
                        let akq = a.data[k * n + q];
                        a.data[k * n + p] = c * akp + sp.conj() * akq;
                        a.data[k * n + q] = -sp * akp + c * akq;
                    }
                    // rows p, q  (A <- J†·A)
                    for k in 0..n {
                        let apk = a.data[p * n + k];
                        let aqk = a.data[q * n + k];
                        a.data[p * n + k] = c * apk + sp * aqk;
                        a.data[q * n + k] = -sp.conj() * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a.data[i * n + i].re).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn matmul_against_hand_product() {
        let a = CMat::from_fn(2, |i, j| c((i * 2 + j) as f64, 1.0));
        let b = CMat::from_fn(2, |i, j| c(1.0, (i + j) as f64));
        let ab = a.mul(&b);
        // row 0: [ (0+i)(1+0i)+(1+i)(1+i), (0+i)(1+i)+(1+i)(1+2i) ]
        assert_eq!(ab.get(0, 0), c(0.0, 1.0) + c(1.0, 1.0) * c(1.0, 1.0));
        assert_eq!(
            ab.get(0, 1),
            c(0.0, 1.0) * c(1.0, 1.0) + c(1.0, 1.0) * c(1.0, 2.0)
        );
    }

    #[test]
    fn kron_dimensions_and_entries() {
        let a = CMat::from_fn(2, |i, j| c((i + 1) as f64 * (j + 1) as f64, 0.0));
        let b = CMat::identity(3);
        let k = a.kron(&b);
        assert_eq!(k.n(), 6);
        assert_eq!(k.get(0, 0), a.get(0, 0));
        assert_eq!(k.get(4, 1), a.get(1, 0));
        assert_eq!(k.get(3, 4), C64::ZERO);
    }

    #[test]
    fn adjoint_is_conjugate_transpose() {
        let a = CMat::from_fn(3, |i, j| c(i as f64, j as f64));
        let ad = a.adjoint();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(ad.get(i, j), a.get(j, i).conj());
            }
        }
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // Pauli y has eigenvalues ±1.
        let mut m = CMat::zeros(2);
        m.set(0, 1, c(0.0, -1.0));
        m.set(1, 0, c(0.0, 1.0));
        let ev = m.hermitian_eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-12);
        assert!((ev[1] - 1.0).abs() < 1e-12);

        // 3x3 with a complex off-diagonal pair and a decoupled level.
        let mut h = CMat::zeros(3);
        h.set(0, 0, c(1.0, 0.0));
        h.set(1, 1, c(-1.0, 0.0));
        h.set(0, 1, c(0.0, 2.0));
        h.set(1, 0, c(0.0, -2.0));
        h.set(2, 2, c(0.5, 0.0));
        let ev = h.hermitian_eigenvalues();
        let r = 5.0f64.sqrt();
        assert!((ev[0] + r).abs() < 1e-12);
        assert!((ev[1] - 0.5).abs() < 1e-12);
        assert!((ev[2] - r).abs() < 1e-12);
    }

    #[test]
    fn jacobi_preserves_trace_and_frobenius() {
        // deterministic pseudo-random Hermitian matrix
        let n = 7;
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut h = CMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = if i == j {
                    c(next(), 0.0)
                } else {
                    c(next(), next())
                };
                h.set(i, j, v);
                h.set(j, i, v.conj());
            }
        }
        let ev = h.hermitian_eigenvalues();
        let tr: f64 = (0..n).map(|i| h.get(i, i).re).sum();
        let frob2: f64 = h.data().iter().map(|z| z.norm_sqr()).sum();
        assert!((ev.iter().sum::<f64>() - tr).abs() < 1e-10);
        assert!((ev.iter().map(|e| e * e).sum::<f64>() - frob2).abs() < 1e-10);
    }
}
