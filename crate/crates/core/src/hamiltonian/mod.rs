//! Hamiltonian builders: transverse-field drivers, Ising problems, GUE samples
//! and the interpolated Hamiltonian `f(t/T)H_I + g(t/T)H_P (+ h(t/T)H_E)`.

mod ising;
mod schedule;

use std::borrow::Cow;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use ising::{IsingInstance, MAX_QUBITS};
pub use schedule::{ExtraProfile, Schedule, ScheduleKind};

use crate::error::{Error, Result};
use crate::qstate::{HermitianOperator, StateVector, C64};

/// Anything the propagator can integrate: a possibly time-dependent
/// Hermitian generator on a fixed Hilbert space.
pub trait Hamiltonian: Send + Sync {
    fn dim(&self) -> usize;

    fn at(&self, t: f64) -> Result<Cow<'_, HermitianOperator>>;

    /// True when `at` returns the same operator for every `t`.
    fn is_static(&self) -> bool {
        false
    }

    /// Interpolation schedule and total time, when the generator has one.
    fn schedule(&self) -> Option<(&Schedule, f64)> {
        None
    }
}

impl Hamiltonian for HermitianOperator {
    fn dim(&self) -> usize {
        HermitianOperator::dim(self)
    }

    fn at(&self, _t: f64) -> Result<Cow<'_, HermitianOperator>> {
        Ok(Cow::Borrowed(self))
    }

    fn is_static(&self) -> bool {
        true
    }
}

/// `Σᵢ (1 − σ_xⁱ)/2` on `n` qubits. The uniform superposition is its ground
/// state with eigenvalue exactly 0.
pub fn transverse_initial(n: usize) -> Result<HermitianOperator> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::invalid(format!("qubit count {n} outside [1, {MAX_QUBITS}]")));
    }
    let dim = 1usize << n;
    let diag = C64::new(0.5 * n as f64, 0.0);
    let off = C64::new(-0.5, 0.0);
    let m = DMatrix::from_fn(dim, dim, |a, b| {
        let x = a ^ b;
        if x == 0 {
            diag
        } else if x.is_power_of_two() {
            off
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(HermitianOperator::from_trusted(m))
}

/// Diagonal operator whose entries are the classical Ising energies.
pub fn ising_problem(inst: &IsingInstance) -> Result<HermitianOperator> {
    let energies: Vec<f64> = (0..inst.dim()).map(|k| inst.energy(k)).collect();
    HermitianOperator::diagonal(&energies)
}

/// `op − λ_min·1`.
pub fn shift_ground_to_zero(op: &HermitianOperator) -> HermitianOperator {
    op.shifted(op.min_eigenvalue())
}

/// GUE sample `(M + M†)/2` with standard complex Gaussian entries of `M`.
pub fn random_hermitian(dim: usize, seed: u64) -> Result<HermitianOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_hermitian_with(dim, &mut rng)
}

pub fn random_hermitian_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<HermitianOperator> {
    if dim < 2 {
        return Err(Error::invalid(format!("random operator dimension must be >= 2, got {dim}")));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    for z in m.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = C64::new(re * scale, im * scale);
    }
    let herm = (&m + m.adjoint()).unscale(2.0);
    HermitianOperator::new(herm)
}

/// `ℋ(t) = f(t/T)H_I + g(t/T)H_P (+ h(t/T)H_E)` on `0 ≤ t ≤ T`.
#[derive(Clone, Debug)]
pub struct InterpolatedHamiltonian {
    initial: HermitianOperator,
    problem: HermitianOperator,
    extra: Option<HermitianOperator>,
    schedule: Schedule,
    total_time: f64,
}

impl InterpolatedHamiltonian {
    pub fn new(
        initial: HermitianOperator,
        problem: HermitianOperator,
        extra: Option<HermitianOperator>,
        schedule: Schedule,
        total_time: f64,
    ) -> Result<Self> {
        Error::check_dims(initial.dim(), problem.dim())?;
        if let Some(e) = &extra {
            Error::check_dims(initial.dim(), e.dim())?;
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::invalid(format!("total time must be positive, got {total_time}")));
        }
        if extra.is_some() != schedule.has_extra() {
            return Err(Error::invalid(
                "extra operator and extra schedule profile must be given together",
            ));
        }
        Ok(Self { initial, problem, extra, schedule, total_time })
    }

    /// Transverse-field driver on `log2(dim(H_P))` qubits interpolated into `problem`.
    pub fn qac(problem: HermitianOperator, schedule: Schedule, total_time: f64) -> Result<Self> {
        let dim = problem.dim();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::invalid(format!("problem dimension {dim} is not a qubit register")));
        }
        let initial = transverse_initial(dim.trailing_zeros() as usize)?;
        Self::new(initial, problem, None, schedule, total_time)
    }

    pub fn initial(&self) -> &HermitianOperator {
        &self.initial
    }

    pub fn problem(&self) -> &HermitianOperator {
        &self.problem
    }

    pub fn extra(&self) -> Option<&HermitianOperator> {
        self.extra.as_ref()
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn schedule_ref(&self) -> &Schedule {
        &self.schedule
    }

    /// Ground state of `H_I` when `H_I` is the transverse driver.
    pub fn initial_ground_state(&self) -> Result<StateVector> {
        StateVector::uniform(self.initial.dim())
    }

    pub fn evaluate(&self, t: f64) -> Result<HermitianOperator> {
        let slack = 1e-12 * self.total_time;
        if !(t >= -slack && t <= self.total_time + slack) {
            return Err(Error::invalid(format!("t = {t} outside [0, {}]", self.total_time)));
        }
        let tau = (t / self.total_time).clamp(0.0, 1.0);
        let mut op = self
            .initial
            .scaled(self.schedule.f(tau))
            .add_scaled(&self.problem, self.schedule.g(tau))?;
        if let (Some(e), Some(h)) = (&self.extra, self.schedule.h(tau)) {
            op = op.add_scaled(e, h)?;
        }
        Ok(op)
    }
}

impl Hamiltonian for InterpolatedHamiltonian {
    fn dim(&self) -> usize {
        self.initial.dim()
    }

    fn at(&self, t: f64) -> Result<Cow<'_, HermitianOperator>> {
        self.evaluate(t).map(Cow::Owned)
    }

    fn schedule(&self) -> Option<(&Schedule, f64)> {
        Some((&self.schedule, self.total_time))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{expectation, variance_sqrt};
    use proptest::prelude::*;

    fn sorted_eigs(op: &HermitianOperator) -> Vec<f64> {
        op.eigenvalues()
    }

    #[test]
    fn transverse_single_qubit() {
        let h = transverse_initial(1).unwrap();
        let e = sorted_eigs(&h);
        assert!(e[0].abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
        let plus = StateVector::uniform(2).unwrap();
        assert!(h.apply(&plus).unwrap().norm() < 1e-15);
    }

    #[test]
    fn transverse_two_qubits_spectrum() {
        let e = sorted_eigs(&transverse_initial(2).unwrap());
        for (g, w) in e.iter().zip([0.0, 1.0, 1.0, 2.0]) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn transverse_annihilates_uniform_state() {
        for n in 1..=6 {
            let h = transverse_initial(n).unwrap();
            let u = StateVector::uniform(1 << n).unwrap();
            assert!(h.apply(&u).unwrap().norm() < 1e-12, "n = {n}");
            let spec = sorted_eigs(&h);
            for v in spec {
                assert!((v - v.round()).abs() < 1e-10 && v > -1e-10 && v < n as f64 + 1e-10);
            }
        }
        assert!(transverse_initial(0).is_err());
        assert!(transverse_initial(MAX_QUBITS + 1).is_err());
    }

    #[test]
    fn ising_examples() {
        let one = IsingInstance::new(1, vec![], vec![(0, 1.0)]).unwrap();
        assert_eq!(ising_problem(&one).unwrap(), HermitianOperator::diagonal(&[1.0, -1.0]).unwrap());
        let two = IsingInstance::new(2, vec![(0, 1, 1.0)], vec![]).unwrap();
        assert_eq!(
            ising_problem(&two).unwrap(),
            HermitianOperator::diagonal(&[1.0, -1.0, -1.0, 1.0]).unwrap()
        );
    }

    #[test]
    fn ising_rejects_bad_indices() {
        assert!(IsingInstance::new(2, vec![(1, 0, 1.0)], vec![]).is_err());
        assert!(IsingInstance::new(2, vec![(0, 2, 1.0)], vec![]).is_err());
        assert!(IsingInstance::new(3, vec![(0, 1, 1.0), (0, 1, 2.0)], vec![]).is_err());
        assert!(IsingInstance::new(2, vec![], vec![(2, 1.0)]).is_err());
        assert!(IsingInstance::new(0, vec![], vec![]).is_err());
        let json = r#"{"n": 2, "couplings": [[0, 3, 1.0]], "fields": []}"#;
        assert!(serde_json::from_str::<IsingInstance>(json).is_err());
    }

    #[test]
    fn ising_diagonal_matches_enumeration() {
        let inst = IsingInstance::new(
            5,
            vec![(0, 1, 0.7), (1, 2, -1.3), (0, 4, 0.25), (2, 3, 2.0)],
            vec![(0, 0.5), (3, -0.75), (4, 1.1)],
        )
        .unwrap();
        let op = ising_problem(&inst).unwrap();
        assert!(op.is_diagonal());
        for k in 0..32usize {
            // spins from the bit string, most significant bit = site 0
            let s: Vec<f64> = (0..5).map(|i| if k & (1 << (4 - i)) == 0 { 1.0 } else { -1.0 }).collect();
            let e = 0.7 * s[0] * s[1] - 1.3 * s[1] * s[2] + 0.25 * s[0] * s[4] + 2.0 * s[2] * s[3]
                + 0.5 * s[0]
                - 0.75 * s[3]
                + 1.1 * s[4];
            assert!((op.matrix()[(k, k)].re - e).abs() < 1e-12);
        }
    }

    #[test]
    fn ising_json_round_trip() {
        let json = r#"{"n": 3, "couplings": [[0, 1, -1], [1, 2, -1]], "fields": [[2, 0.5]]}"#;
        let inst: IsingInstance = serde_json::from_str(json).unwrap();
        assert_eq!(inst.couplings(), &[(0, 1, -1.0), (1, 2, -1.0)]);
        let back: IsingInstance = serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn shift_examples() {
        let op = HermitianOperator::diagonal(&[3.0, 5.0]).unwrap();
        assert_eq!(shift_ground_to_zero(&op), HermitianOperator::diagonal(&[0.0, 2.0]).unwrap());
        let once = shift_ground_to_zero(&random_hermitian(6, 4).unwrap());
        let twice = shift_ground_to_zero(&once);
        assert!((once.matrix() - twice.matrix()).norm() < 1e-12);
        let g = shift_ground_to_zero(&random_hermitian(8, 17).unwrap());
        assert!(g.min_eigenvalue().abs() < 1e-10);
    }

    #[test]
    fn shift_preserves_gaps() {
        let op = random_hermitian(7, 5).unwrap();
        let before = sorted_eigs(&op);
        let after = sorted_eigs(&shift_ground_to_zero(&op));
        for (a, b) in after.iter().zip(&before) {
            assert!((a - (b - before[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn gue_is_deterministic_and_hermitian() {
        let a = random_hermitian(5, 42).unwrap();
        assert_eq!(a, random_hermitian(5, 42).unwrap());
        assert_ne!(a, random_hermitian(5, 43).unwrap());
        let m = a.matrix();
        assert!((m - m.adjoint()).norm() < 1e-15);
    }

    #[test]
    fn gue_entry_means_vanish() {
        // Diagonal entries ~ N(0, 1/2); off-diagonal real/imag parts ~ N(0, 1/4).
        let seeds = 1000;
        let (mut d, mut or, mut oi) = (0.0, 0.0, 0.0);
        for s in 0..seeds {
            let m = random_hermitian(3, s).unwrap();
            d += m.matrix()[(0, 0)].re;
            or += m.matrix()[(0, 1)].re;
            oi += m.matrix()[(0, 1)].im;
        }
        let n = seeds as f64;
        assert!((d / n).abs() < 3.0 * (0.5f64 / n).sqrt());
        assert!((or / n).abs() < 3.0 * (0.25f64 / n).sqrt());
        assert!((oi / n).abs() < 3.0 * (0.25f64 / n).sqrt());
    }

    fn single_qubit_qac(t: f64) -> InterpolatedHamiltonian {
        let hp = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        InterpolatedHamiltonian::qac(hp, Schedule::linear(), t).unwrap()
    }

    #[test]
    fn evaluate_endpoints_and_midpoint() {
        let ih = single_qubit_qac(10.0);
        assert!((ih.evaluate(0.0).unwrap().matrix() - ih.initial().matrix()).norm() < 1e-12);
        assert!((ih.evaluate(10.0).unwrap().matrix() - ih.problem().matrix()).norm() < 1e-12);
        let mid = (ih.initial().matrix() + ih.problem().matrix()).unscale(2.0);
        assert!((ih.evaluate(5.0).unwrap().matrix() - mid).norm() < 1e-12);
        assert!(ih.evaluate(-1.0).is_err());
        assert!(ih.evaluate(10.5).is_err());
    }

    #[test]
    fn evaluate_includes_extra_term() {
        let hp = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        let he = HermitianOperator::pauli_y();
        let sched = Schedule::linear().with_extra(ExtraProfile::Sine { amplitude: 0.5 }).unwrap();
        let hi = transverse_initial(1).unwrap();
        assert!(InterpolatedHamiltonian::new(hi.clone(), hp.clone(), Some(he.clone()), Schedule::linear(), 1.0).is_err());
        let ih = InterpolatedHamiltonian::new(hi, hp, Some(he), sched, 2.0).unwrap();
        let m = ih.evaluate(1.0).unwrap();
        // f = g = 1/2, h = 0.5·sin(π/2)
        assert!((m.matrix()[(0, 1)] - C64::new(-0.25, -0.5)).norm() < 1e-15);
        assert!((ih.evaluate(0.0).unwrap().matrix() - ih.initial().matrix()).norm() < 1e-12);
    }

    #[test]
    fn qac_moments_single_qubit() {
        let ih = single_qubit_qac(1.0);
        let g = ih.initial_ground_state().unwrap();
        assert!((expectation(ih.problem(), &g).unwrap() - 0.5).abs() < 1e-15);
        assert!((variance_sqrt(ih.problem(), &g).unwrap() - 0.5).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn evaluate_is_hermitian(t in 0.0f64..=7.0, seed in 0u64..20) {
            let hp = random_hermitian(4, seed).unwrap();
            let ih = InterpolatedHamiltonian::qac(hp, Schedule::poly(2.0).unwrap(), 7.0).unwrap();
            let m = ih.evaluate(t).unwrap();
            prop_assert!((m.matrix() - m.matrix().adjoint()).norm() <= 1e-12);
        }

        #[test]
        fn ising_is_diagonal(seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=6usize);
            let mut couplings = Vec::new();
            for i in 0..n { for j in (i + 1)..n { if rng.random_bool(0.5) { couplings.push((i, j, rng.random_range(-2.0..2.0))); } } }
            let mut fields = Vec::new();
            for i in 0..n { if rng.random_bool(0.5) { fields.push((i, rng.random_range(-1.0..1.0))); } }
            let op = ising_problem(&IsingInstance::new(n, couplings, fields).unwrap()).unwrap();
            prop_assert!(op.is_diagonal());
        }
    }
}
