//! States and operators on a tensor product of finite subsystems.
//!
//! Basis ordering is row-major over the `dims` list: the leftmost subsystem
//! varies slowest, so for dims `[d0, d1]` the flat index is `i0 * d1 + i1`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{vec_inner, vec_norm, CMat};

pub const NORM_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-8;
pub const HERM_TOL: f64 = 1e-10;

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::Dimension("empty subsystem list".into()));
    }
    if let Some(d) = dims.iter().find(|&&d| d < 2) {
        return Err(Error::Dimension(format!(
            "subsystem dimension {d} < 2 (dims {dims:?})"
        )));
    }
    Ok(())
}

fn total_dim(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Pure state |ψ⟩. Constructors normalize, so the squared norm is 1 up to
/// floating-point error.
#[derive(Debug, Clone)]
pub struct QuantumState {
    dims: Vec<usize>,
    amp: Vec<C64>,
}

impl QuantumState {
    pub fn new(dims: Vec<usize>, amplitudes: Vec<C64>) -> Result<Self> {
        check_dims(&dims)?;
        if amplitudes.len() != total_dim(&dims) {
            return Err(Error::Dimension(format!(
                "{} amplitudes for total dimension {}",
                amplitudes.len(),
                total_dim(&dims)
            )));
        }
        let n = vec_norm(&amplitudes);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("state", "zero or non-finite norm"));
        }
        let mut amp = amplitudes;
        let inv = 1.0 / n;
        for a in amp.iter_mut() {
            *a *= inv;
        }
        Ok(QuantumState { dims, amp })
    }

    /// Product basis state |i0, i1, ...⟩.
    pub fn basis(dims: Vec<usize>, indices: &[usize]) -> Result<Self> {
        check_dims(&dims)?;
        if indices.len() != dims.len() {
            return Err(Error::Dimension(format!(
                "{} indices for {} subsystems",
                indices.len(),
                dims.len()
            )));
        }
        let mut flat = 0usize;
        for (k, (&i, &d)) in indices.iter().zip(&dims).enumerate() {
            if i >= d {
                return Err(Error::Dimension(format!(
                    "basis index {i} out of range for subsystem {k} (dim {d})"
                )));
            }
            flat = flat * d + i;
        }
        let mut amp = vec![C64::ZERO; total_dim(&dims)];
        amp[flat] = C64::ONE;
        Ok(QuantumState { dims, amp })
    }

    pub(crate) fn from_raw(dims: Vec<usize>, amp: Vec<C64>) -> Self {
        QuantumState { dims, amp }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amp
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.amp)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &QuantumState) -> Result<C64> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "inner product between dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(vec_inner(&self.amp, &other.amp))
    }

    /// |self⟩ ⊗ |other⟩; subsystem lists concatenate.
    pub fn tensor(&self, other: &QuantumState) -> QuantumState {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut amp = Vec::with_capacity(self.amp.len() * other.amp.len());
        for &a in &self.amp {
            for &b in &other.amp {
                amp.push(a * b);
            }
        }
        QuantumState { dims, amp }
    }

    /// ⟨ψ|O|ψ⟩. Real up to floating error for Hermitian O; returned as is.
    pub fn expectation(&self, op: &OperatorMatrix) -> Result<C64> {
        if op.dims != self.dims {
            return Err(Error::Dimension(format!(
                "operator dims {:?} vs state dims {:?}",
                op.dims, self.dims
            )));
        }
        let mut y = vec![C64::ZERO; self.amp.len()];
        op.mat.matvec_into(&self.amp, &mut y);
        Ok(vec_inner(&self.amp, &y))
    }

    pub fn to_density(&self) -> DensityOperator {
        let n = self.amp.len();
        let mat = CMat::from_fn(n, |i, j| self.amp[i] * self.amp[j].conj());
        DensityOperator {
            dims: self.dims.clone(),
            mat,
        }
    }
}

/// Mixed state ρ. Trace 1 within 1e-8 and Hermitian within a scaled 1e-10,
/// both checked at construction; positivity is checked in tests only.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    dims: Vec<usize>,
    mat: CMat,
}

impl DensityOperator {
    pub fn new(dims: Vec<usize>, mat: CMat) -> Result<Self> {
        check_dims(&dims)?;
        if mat.n() != total_dim(&dims) {
            return Err(Error::Dimension(format!(
                "matrix dim {} vs subsystem product {}",
                mat.n(),
                total_dim(&dims)
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::invalid(
                "density operator",
                format!("trace {tr} differs from 1 beyond {TRACE_TOL:.0e}"),
            ));
        }
        let scale = mat.max_abs().max(1.0);
        let res = mat.herm_residual();
        if res > HERM_TOL * scale {
            return Err(Error::NonHermitian {
                residual: res,
                tol: HERM_TOL * scale,
            });
        }
        Ok(DensityOperator { dims, mat })
    }

    pub fn from_pure(state: &QuantumState) -> Self {
        state.to_density()
    }

    pub(crate) fn from_raw(dims: Vec<usize>, mat: CMat) -> Self {
        DensityOperator { dims, mat }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.n()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Tr(ρ O).
    pub fn expectation(&self, op: &OperatorMatrix) -> Result<C64> {
        if op.dims != self.dims {
            return Err(Error::Dimension(format!(
                "operator dims {:?} vs state dims {:?}",
                op.dims, self.dims
            )));
        }
        // Tr(ρO) = Σ_ij ρ_ij O_ji without forming the product.
        let n = self.mat.n();
        let mut acc = C64::ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += self.mat.get(i, j) * op.mat.get(j, i);
            }
        }
        Ok(acc)
    }

    /// Trace out every subsystem not listed in `keep`. Indices must be
    /// strictly increasing; the kept subsystems retain their order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOperator> {
        let m = self.dims.len();
        if keep.is_empty() {
            return Err(Error::Dimension("partial trace keeping nothing".into()));
        }
        if keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Dimension(
                "keep indices must be strictly increasing".into(),
            ));
        }
        if *keep.last().unwrap() >= m {
            return Err(Error::Dimension(format!(
                "keep index {} out of range for {} subsystems",
                keep.last().unwrap(),
                m
            )));
        }

        // strides of each subsystem in the flat index
        let mut strides = vec![1usize; m];
        for k in (0..m - 1).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        let traced: Vec<usize> = (0..m).filter(|k| !keep.contains(k)).collect();
        let kept_dims: Vec<usize> = keep.iter().map(|&k| self.dims[k]).collect();
        let kept_strides: Vec<usize> = keep.iter().map(|&k| strides[k]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&k| self.dims[k]).collect();
        let traced_strides: Vec<usize> = traced.iter().map(|&k| strides[k]).collect();

        let r: usize = kept_dims.iter().product();
        let t: usize = traced_dims.iter().product();
        let flat = |multi: usize, dims: &[usize], strides: &[usize]| -> usize {
            let mut rem = multi;
            let mut off = 0;
            for (d, s) in dims.iter().zip(strides).rev() {
                off += (rem % d) * s;
                rem /= d;
            }
            off
        };

        let mut out = CMat::zeros(r);
        for bi in 0..r {
            let oi = flat(bi, &kept_dims, &kept_strides);
            for bj in 0..r {
                let oj = flat(bj, &kept_dims, &kept_strides);
                let mut acc = C64::ZERO;
                for k in 0..t {
                    let ok = flat(k, &traced_dims, &traced_strides);
                    acc += self.mat.get(oi + ok, oj + ok);
                }
                out.set(bi, bj, acc);
            }
        }
        Ok(DensityOperator {
            dims: kept_dims,
            mat: out,
        })
    }
}

/// Linear operator on the same tensor structure. Not necessarily Hermitian
/// (annihilation and lowering operators live here too).
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    dims: Vec<usize>,
    mat: CMat,
}

impl OperatorMatrix {
    pub fn new(dims: Vec<usize>, mat: CMat) -> Result<Self> {
        check_dims(&dims)?;
        if mat.n() != total_dim(&dims) {
            return Err(Error::Dimension(format!(
                "matrix dim {} vs subsystem product {}",
                mat.n(),
                total_dim(&dims)
            )));
        }
        Ok(OperatorMatrix { dims, mat })
    }

    pub fn identity(dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        let n = total_dim(&dims);
        Ok(OperatorMatrix {
            dims,
            mat: CMat::identity(n),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.n()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn matrix_mut(&mut self) -> &mut CMat {
        &mut self.mat
    }

    pub fn tensor(&self, other: &OperatorMatrix) -> OperatorMatrix {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        OperatorMatrix {
            dims,
            mat: self.mat.kron(&other.mat),
        }
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix {
            dims: self.dims.clone(),
            mat: self.mat.adjoint(),
        }
    }

    pub fn mul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "product of operators on dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(OperatorMatrix {
            dims: self.dims.clone(),
            mat: self.mat.mul(&other.mat),
        })
    }

    pub fn add_scaled(&mut self, other: &OperatorMatrix, c: C64) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "sum of operators on dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        self.mat.add_scaled(&other.mat, c);
        Ok(())
    }

    pub fn scale(&mut self, c: C64) {
        self.mat.scale(c);
    }

    pub fn herm_residual(&self) -> f64 {
        self.mat.herm_residual()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn constructor_normalizes() {
        let s = QuantumState::new(vec![2], vec![c(3.0, 0.0), c(0.0, 4.0)]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert!((s.amplitudes()[0].re - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_state_rejected() {
        assert!(QuantumState::new(vec![2], vec![C64::ZERO, C64::ZERO]).is_err());
    }

    #[test]
    fn basis_index_out_of_range() {
        assert!(QuantumState::basis(vec![2, 3], &[0, 3]).is_err());
        assert!(QuantumState::basis(vec![2, 3], &[0]).is_err());
    }

    #[test]
    fn dims_below_two_rejected() {
        assert!(QuantumState::basis(vec![2, 1], &[0, 0]).is_err());
        assert!(OperatorMatrix::identity(vec![0]).is_err());
    }

    #[test]
    fn tensor_ordering_leftmost_slowest() {
        let a = QuantumState::new(vec![2], vec![c(1.0, 0.0), c(2.0, 0.0)]).unwrap();
        let b = QuantumState::new(vec![3], vec![c(1.0, 0.0), C64::ZERO, c(1.0, 0.0)]).unwrap();
        let t = a.tensor(&b);
        assert_eq!(t.dims(), &[2, 3]);
        // amplitude of |i0=1, i1=2⟩ sits at flat index 1*3+2
        let amps = t.amplitudes();
        assert!((amps[5].re / amps[2].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bell_state_partial_trace_is_maximally_mixed() {
        let amps = vec![
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::ZERO,
            C64::ZERO,
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ];
        let bell = QuantumState::new(vec![2, 2], amps).unwrap();
        let rho = bell.to_density();
        for keep in [[0usize], [1usize]] {
            let red = rho.partial_trace(&keep).unwrap();
            assert_eq!(red.dims(), &[2]);
            assert!((red.matrix().get(0, 0).re - 0.5).abs() < 1e-12);
            assert!((red.matrix().get(1, 1).re - 0.5).abs() < 1e-12);
            assert!(red.matrix().get(0, 1).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_validates_keep_list() {
        let s = QuantumState::basis(vec![2, 2], &[0, 0]).unwrap();
        let rho = s.to_density();
        assert!(rho.partial_trace(&[]).is_err());
        assert!(rho.partial_trace(&[1, 0]).is_err());
        assert!(rho.partial_trace(&[2]).is_err());
    }

    #[test]
    fn density_constructor_rejects_bad_trace_and_non_hermitian() {
        let mut m = CMat::identity(2);
        assert!(DensityOperator::new(vec![2], m.clone()).is_err()); // trace 2
        m.scale(c(0.5, 0.0));
        m.set(0, 1, c(0.3, 0.0));
        assert!(DensityOperator::new(vec![2], m.clone()).is_err()); // not Hermitian
        m.set(1, 0, c(0.3, 0.0));
        assert!(DensityOperator::new(vec![2], m).is_ok());
    }

    #[test]
    fn expectation_on_pure_and_mixed_agree() {
        let s = QuantumState::new(vec![2], vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let mut sz = CMat::identity(2);
        sz.set(1, 1, c(-1.0, 0.0));
        let op = OperatorMatrix::new(vec![2], sz).unwrap();
        let e1 = s.expectation(&op).unwrap();
        let e2 = s.to_density().expectation(&op).unwrap();
        assert!((e1 - e2).norm() < 1e-12);
        assert!((e1.re - (0.36 - 0.64)).abs() < 1e-12);
        assert!(e1.im.abs() < 1e-12);
    }

    proptest! {
        /// partial_trace ∘ tensor_product recovers both factors.
        #[test]
        fn tensor_then_trace_roundtrip(re_a in proptest::collection::vec(-1.0f64..1.0, 2),
                                       im_a in proptest::collection::vec(-1.0f64..1.0, 2),
                                       re_b in proptest::collection::vec(-1.0f64..1.0, 3),
                                       im_b in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let amp_a: Vec<C64> = re_a.iter().zip(&im_a).map(|(&r, &i)| c(r, i)).collect();
            let amp_b: Vec<C64> = re_b.iter().zip(&im_b).map(|(&r, &i)| c(r, i)).collect();
            prop_assume!(vec_norm(&amp_a) > 1e-3 && vec_norm(&amp_b) > 1e-3);
            let a = QuantumState::new(vec![2], amp_a).unwrap();
            let b = QuantumState::new(vec![3], amp_b).unwrap();
            let joint = a.tensor(&b).to_density();
            let ra = joint.partial_trace(&[0]).unwrap();
            let rb = joint.partial_trace(&[1]).unwrap();
            let da = a.to_density();
            let db = b.to_density();
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((ra.matrix().get(i, j) - da.matrix().get(i, j)).norm() < 1e-12);
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((rb.matrix().get(i, j) - db.matrix().get(i, j)).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn constructed_states_have_unit_norm(re in proptest::collection::vec(-1.0f64..1.0, 6),
                                             im in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let amp: Vec<C64> = re.iter().zip(&im).map(|(&r, &i)| c(r, i)).collect();
            prop_assume!(vec_norm(&amp) > 1e-3);
            let s = QuantumState::new(vec![2, 3], amp).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < NORM_TOL);
        }
    }
}
