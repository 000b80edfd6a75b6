//! Pure-state and dense Hermitian operator algebra.
//!
//! States are complex amplitude vectors, operators are dense self-adjoint
//! matrices validated once at construction. Everything here is immutable and
//! the free functions are pure.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest Hilbert-space dimension accepted by the default constructors.
pub const DEFAULT_MAX_DIM: usize = 4096;
/// Allowed deviation of `‖ψ‖²` from one for a normalized state.
pub const NORM_TOLERANCE: f64 = 1e-10;
/// Allowed `|H_ij - conj(H_ji)|` at construction.
pub const HERMITICITY_TOLERANCE: f64 = 1e-12;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
}

impl PhysicalConstants {
    pub fn new(hbar: f64) -> Result<Self> {
        if hbar.is_finite() && hbar > 0.0 {
            Ok(Self { hbar })
        } else {
            Err(Error::invalid(format!("hbar must be positive and finite, got {hbar}")))
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: 1.0 }
    }
}

/// A pure state `|ψ⟩` over a finite Hilbert space of dimension at least two.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
}

impl StateVector {
    /// Builds a state from amplitudes that must already be normalized.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let s = Self::checked_dim(DVector::from_vec(amplitudes))?;
        let deviation = (s.norm_sqr() - 1.0).abs();
        if deviation > NORM_TOLERANCE {
            return Err(Error::NotNormalized { deviation });
        }
        Ok(s)
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalize(amplitudes: Vec<C64>) -> Result<Self> {
        let mut s = Self::checked_dim(DVector::from_vec(amplitudes))?;
        let norm = s.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        s.amps.unscale_mut(norm);
        Ok(s)
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::normalize(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut v = DVector::from_element(dim, ZERO);
        v[index] = ONE;
        Self::checked_dim(v)
    }

    /// Equal-weight superposition of all basis states.
    pub fn uniform(dim: usize) -> Result<Self> {
        let a = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Self::checked_dim(DVector::from_element(dim, a))
    }

    /// Haar-random state from normalized i.i.d. complex Gaussians.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        let amps: Vec<C64> = (0..dim)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im)
            })
            .collect();
        Self::normalize(amps)
    }

    pub fn random_seeded(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random(dim, &mut rng)
    }

    fn checked_dim(v: DVector<C64>) -> Result<Self> {
        let dim = v.len();
        if dim < 2 {
            return Err(Error::invalid(format!("state dimension must be >= 2, got {dim}")));
        }
        if dim > DEFAULT_MAX_DIM {
            return Err(Error::invalid(format!(
                "state dimension {dim} exceeds cap {DEFAULT_MAX_DIM}"
            )));
        }
        Ok(Self { amps: v })
    }

    /// Wraps a propagated vector without re-checking the norm.
    pub(crate) fn from_vector_unchecked(v: DVector<C64>) -> Self {
        Self { amps: v }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.norm_squared()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }
}

/// Dense self-adjoint matrix. Hermiticity is checked once, at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    m: DMatrix<C64>,
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        Self::with_cap(m, DEFAULT_MAX_DIM)
    }

    /// Validates against a caller-chosen dimension cap.
    pub fn with_cap(m: DMatrix<C64>, max_dim: usize) -> Result<Self> {
        let (r, c) = m.shape();
        if r != c {
            return Err(Error::invalid(format!("operator must be square, got {r}x{c}")));
        }
        if r == 0 || r > max_dim {
            return Err(Error::invalid(format!("operator dimension {r} outside [1, {max_dim}]")));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("operator has non-finite entries"));
        }
        for i in 0..r {
            for j in i..r {
                let deviation = (m[(i, j)] - m[(j, i)].conj()).norm();
                if deviation > HERMITICITY_TOLERANCE {
                    return Err(Error::NotHermitian { row: i, col: j, deviation });
                }
            }
        }
        // Store the exactly self-adjoint part so later arithmetic starts clean.
        let sym = (&m + m.adjoint()).unscale(2.0);
        Ok(Self { m: sym })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("operator rows must all have length equal to the row count"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let v: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::new(DMatrix::from_diagonal(&DVector::from_vec(v)))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn pauli_x() -> Self {
        Self::from_trusted(DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]))
    }

    pub fn pauli_y() -> Self {
        let i = C64::new(0.0, 1.0);
        Self::from_trusted(DMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]))
    }

    pub fn pauli_z() -> Self {
        Self::from_trusted(DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]))
    }

    /// Skips validation; callers guarantee an exactly self-adjoint matrix.
    pub(crate) fn from_trusted(m: DMatrix<C64>) -> Self {
        debug_assert!(m.is_square());
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn apply(&self, s: &StateVector) -> Result<DVector<C64>> {
        Error::check_dims(self.dim(), s.dim())?;
        Ok(&self.m * s.amplitudes())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_trusted(self.m.scale(factor))
    }

    /// `self + factor·other`.
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        Error::check_dims(self.dim(), other.dim())?;
        Ok(Self::from_trusted(&self.m + other.m.scale(factor)))
    }

    /// `self - shift·1`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.m.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= shift;
        }
        Self::from_trusted(m)
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.m[(i, j)] == ZERO))
    }

    pub fn spectral_norm_bound(&self) -> f64 {
        // Frobenius norm bounds the operator norm from above.
        self.m.norm()
    }

    /// Full diagonalization; eigenvalues sorted ascending.
    pub fn eigh(&self) -> Spectrum {
        let eig = self.m.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
        Spectrum { values, vectors }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

/// Kronecker product, for states and operators alike.
pub trait Tensor {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for StateVector {
    fn tensor(&self, other: &Self) -> Self {
        Self::from_vector_unchecked(self.amps.kronecker(&other.amps))
    }
}

impl Tensor for HermitianOperator {
    fn tensor(&self, other: &Self) -> Self {
        Self::from_trusted(self.m.kronecker(&other.m))
    }
}

/// `⟨a|b⟩`, antilinear in the first argument.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    Error::check_dims(a.dim(), b.dim())?;
    Ok(a.amps.dotc(&b.amps))
}

/// `‖a − b‖ = √(2 − 2 Re⟨a|b⟩)` for normalized states.
pub fn distance(a: &StateVector, b: &StateVector) -> Result<f64> {
    let ip = inner_product(a, b)?;
    Ok(distance_from_overlap(ip))
}

pub(crate) fn distance_from_overlap(overlap: C64) -> f64 {
    (2.0 - 2.0 * overlap.re).clamp(0.0, 4.0).sqrt()
}

pub(crate) fn expectation_raw(m: &DMatrix<C64>, v: &DVector<C64>) -> f64 {
    let value = v.dotc(&(m * v));
    debug_assert!(
        value.im.abs() <= 1e-10 * (1.0 + value.re.abs() + m.norm()),
        "expectation has imaginary residual {}",
        value.im
    );
    value.re
}

/// `Re⟨s|op|s⟩`.
pub fn expectation(op: &HermitianOperator, s: &StateVector) -> Result<f64> {
    Error::check_dims(op.dim(), s.dim())?;
    Ok(expectation_raw(&op.m, &s.amps))
}

pub(crate) fn residual_norm_raw(m: &DMatrix<C64>, shift: f64, v: &DVector<C64>) -> f64 {
    let mut w = m * v;
    w.axpy(C64::new(-shift, 0.0), v, ONE);
    w.norm()
}

/// Energy spread `√(⟨H²⟩ − ⟨H⟩²)`.
///
/// Evaluated as `‖(H − ⟨H⟩)s‖`, which equals the spread for normalized `s`
/// and cannot go negative, so no cancellation clamp is needed.
pub fn variance_sqrt(op: &HermitianOperator, s: &StateVector) -> Result<f64> {
    let e = expectation(op, s)?;
    Ok(residual_norm_raw(&op.m, e, &s.amps))
}

/// `‖(op − shift·1)s‖`.
pub fn residual_norm(op: &HermitianOperator, shift: f64, s: &StateVector) -> Result<f64> {
    Error::check_dims(op.dim(), s.dim())?;
    Ok(residual_norm_raw(&op.m, shift, &s.amps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn plus() -> StateVector {
        StateVector::from_real(&[1.0, 1.0]).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let psi = StateVector::random_seeded(5, 3).unwrap();
        let ip = inner_product(&psi, &psi).unwrap();
        assert!((ip - ONE).norm() < 1e-14);

        let e0 = StateVector::basis(3, 0).unwrap();
        let e1 = StateVector::basis(3, 1).unwrap();
        assert_eq!(inner_product(&e0, &e1).unwrap(), ZERO);

        let a = StateVector::normalize(vec![ONE, c(0.0, 1.0)]).unwrap();
        let b = plus();
        // Σ conj(a_i) b_i = (1·1 + (−i)·1)/2
        let got = inner_product(&a, &b).unwrap();
        assert!((got - c(0.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = StateVector::basis(2, 0).unwrap();
        let b = StateVector::basis(3, 0).unwrap();
        assert!(matches!(inner_product(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(distance(&a, &b).is_err());
        let op = HermitianOperator::identity(3).unwrap();
        assert!(expectation(&op, &a).is_err());
        assert!(variance_sqrt(&op, &a).is_err());
        assert!(residual_norm(&op, 0.0, &a).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = StateVector::random_seeded(4, 1).unwrap();
        assert!(distance(&a, &a).unwrap() < 1e-7);
        let e0 = StateVector::basis(2, 0).unwrap();
        let e1 = StateVector::basis(2, 1).unwrap();
        assert!((distance(&e0, &e1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let neg = StateVector::new(vec![-ONE, ZERO]).unwrap();
        assert!((distance(&e0, &neg).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn expectation_examples() {
        let op = HermitianOperator::diagonal(&[0.0, 3.0]).unwrap();
        assert!((expectation(&op, &StateVector::basis(2, 1).unwrap()).unwrap() - 3.0).abs() < 1e-15);
        assert!((expectation(&op, &plus()).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn expectation_matches_triple_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = crate::hamiltonian::random_hermitian_with(4, &mut rng).unwrap();
        let s = StateVector::random(4, &mut rng).unwrap();
        let mut oracle = ZERO;
        for i in 0..4 {
            for j in 0..4 {
                oracle += s.amplitudes()[i].conj() * op.matrix()[(i, j)] * s.amplitudes()[j];
            }
        }
        assert!((expectation(&op, &s).unwrap() - oracle.re).abs() < 1e-12);
        assert!(oracle.im.abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        let op = HermitianOperator::diagonal(&[0.0, 2.0]).unwrap();
        assert!(variance_sqrt(&op, &StateVector::basis(2, 0).unwrap()).unwrap() < 1e-15);
        assert!((variance_sqrt(&op, &plus()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moments_match_spectral_oracle() {
        for dim in 2..=8 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + dim as u64);
            let op = crate::hamiltonian::random_hermitian_with(dim, &mut rng).unwrap();
            let s = StateVector::random(dim, &mut rng).unwrap();
            let spec = op.eigh();
            // weights w_k = |⟨v_k|s⟩|²
            let weights: Vec<f64> = (0..dim)
                .map(|k| spec.vectors.column(k).dotc(s.amplitudes()).norm_sqr())
                .collect();
            let m1: f64 = weights.iter().zip(&spec.values).map(|(w, l)| w * l).sum();
            let m2: f64 = weights.iter().zip(&spec.values).map(|(w, l)| w * l * l).sum();
            assert!((expectation(&op, &s).unwrap() - m1).abs() < 1e-10);
            assert!((variance_sqrt(&op, &s).unwrap() - (m2 - m1 * m1).max(0.0).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_norm_examples() {
        let s = StateVector::random_seeded(6, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = crate::hamiltonian::random_hermitian_with(6, &mut rng).unwrap();
        let e = expectation(&op, &s).unwrap();
        let spread = variance_sqrt(&op, &s).unwrap();
        assert!((residual_norm(&op, e, &s).unwrap() - spread).abs() < 1e-12);
        let at_zero = residual_norm(&op, 0.0, &s).unwrap();
        assert!((at_zero - (spread * spread + e * e).sqrt()).abs() < 1e-10);

        let op = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        assert!((residual_norm(&op, 0.0, &plus()).unwrap() - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn tensor_examples() {
        let id = HermitianOperator::identity(2).unwrap().tensor(&HermitianOperator::identity(3).unwrap());
        assert_eq!(id, HermitianOperator::identity(6).unwrap());

        let s = StateVector::basis(2, 0).unwrap().tensor(&StateVector::basis(2, 1).unwrap());
        assert_eq!(s, StateVector::basis(4, 1).unwrap());

        let zz = HermitianOperator::pauli_z().tensor(&HermitianOperator::pauli_z());
        let mut got = zz.eigenvalues();
        got.sort_by(f64::total_cmp);
        assert_eq!(got.len(), 4);
        for (g, want) in got.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn construction_checks() {
        assert!(matches!(StateVector::new(vec![ONE, ONE]), Err(Error::NotNormalized { .. })));
        assert!(StateVector::new(vec![ONE]).is_err());
        assert!(StateVector::normalize(vec![ZERO, ZERO]).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[ONE, c(0.0, 1.0), c(0.0, 1.0), ONE]);
        assert!(matches!(HermitianOperator::new(bad), Err(Error::NotHermitian { .. })));
        assert!(HermitianOperator::new(DMatrix::zeros(2, 3)).is_err());
        assert!(PhysicalConstants::new(0.0).is_err());
        assert_eq!(PhysicalConstants::default().hbar, 1.0);
    }
}
