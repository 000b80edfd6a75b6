//! Fixed-step integration of `iℏ∂_t|ψ⟩ = H(t)|ψ⟩` with per-step recording of
//! the overlap with the initial state, the distance to the phase-rotated
//! reference `e^{−i∫β/ℏ}|φ₀⟩` for each β-policy, and the accumulated
//! right-hand side `∫‖(H(τ) − β(τ))|φ₀⟩‖dτ`.

mod export;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use export::RunMetadata;

use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, Schedule};
use crate::qstate::{expectation_raw, residual_norm_raw, HermitianOperator, StateVector, C64};

/// Upper bound on stored checkpoint amplitudes per trajectory.
const CHECKPOINT_BUDGET: usize = 1 << 22;

/// Round-off floor of the numerical slack, in units of ℏ.
pub const ROUNDOFF_SLACK: f64 = 1e-10;
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `ψ ← exp(−i H(t + dt/2) dt/ℏ) ψ`, via diagonalization.
    MidpointExponential,
    Rk4,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::MidpointExponential => "midpoint-exponential",
            Method::Rk4 => "rk4",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSize {
    /// Maximum step; the horizon is split into equal steps no larger than this.
    Dt(f64),
    /// Number of equal steps per horizon.
    Steps(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub step: StepSize,
    pub norm_tolerance: f64,
    pub hbar: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::MidpointExponential,
            step: StepSize::Steps(2000),
            norm_tolerance: 1e-9,
            hbar: 1.0,
        }
    }
}

impl IntegratorConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.step = StepSize::Steps(steps);
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.step = StepSize::Dt(dt);
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn with_norm_tolerance(mut self, tol: f64) -> Self {
        self.norm_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.step {
            StepSize::Dt(dt) if !(dt.is_finite() && dt > 0.0) => {
                return Err(Error::invalid(format!("dt must be positive, got {dt}")))
            }
            StepSize::Steps(0) => return Err(Error::invalid("step count must be positive")),
            _ => {}
        }
        if !(self.norm_tolerance.is_finite() && self.norm_tolerance > 0.0) {
            return Err(Error::invalid("norm tolerance must be positive"));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::invalid("hbar must be positive"));
        }
        Ok(())
    }

    /// Step count and uniform step size covering `horizon`.
    pub fn grid(&self, horizon: f64) -> (usize, f64) {
        let n = match self.step {
            StepSize::Steps(n) => n,
            StepSize::Dt(dt) => ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize,
        };
        (n, horizon / n as f64)
    }

    /// Same configuration refined by an integer factor.
    pub fn refined(&self, factor: usize) -> Self {
        let step = match self.step {
            StepSize::Steps(n) => StepSize::Steps(n * factor),
            StepSize::Dt(dt) => StepSize::Dt(dt / factor as f64),
        };
        Self { step, ..*self }
    }
}

/// The free scalar `β(t)` of the reference evolution `iℏ∂_t|φ⟩ = β(t)|φ⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaPolicy {
    Zero,
    Constant { beta0: f64 },
    /// `β₀·g(t/T)`; requires a generator with a schedule.
    ScheduleProportional { beta0: f64 },
}

impl BetaPolicy {
    pub fn value(&self, t: f64, schedule: Option<(&Schedule, f64)>) -> Result<f64> {
        match *self {
            BetaPolicy::Zero => Ok(0.0),
            BetaPolicy::Constant { beta0 } => Ok(beta0),
            BetaPolicy::ScheduleProportional { beta0 } => {
                let (s, total) = schedule.ok_or_else(|| {
                    Error::invalid("schedule-proportional beta requires a Hamiltonian with a schedule")
                })?;
                Ok(beta0 * s.g(t / total))
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BetaPolicy::Zero => "zero".into(),
            BetaPolicy::Constant { beta0 } => format!("const({beta0})"),
            BetaPolicy::ScheduleProportional { beta0 } => format!("sched({beta0})"),
        }
    }
}

/// Per-β-policy recording along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTrace {
    pub policy: BetaPolicy,
    /// `d(t, β) = ‖ψ(t) − e^{−i∫β/ℏ}φ₀‖`.
    pub distances: Vec<f64>,
    /// `∫₀ᵗ ‖(H(τ) − β(τ))φ₀‖ dτ`.
    pub rhs_integrals: Vec<f64>,
    /// `∫₀ᵗ β(τ) dτ`.
    pub beta_integrals: Vec<f64>,
    pub max_integrand: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `⟨ψ(t)|φ₀⟩`.
    pub overlaps: Vec<C64>,
    pub survival: Vec<f64>,
    pub traces: Vec<PolicyTrace>,
    pub initial_state: StateVector,
    pub final_state: StateVector,
    pub config: IntegratorConfig,
    pub dt: f64,
    pub max_norm_drift: f64,
    /// Bound on `|d/dt |⟨ψ|φ₀⟩||`: max over samples of the spread of `H(t)` in `φ₀`, over ℏ.
    pub overlap_rate: f64,
    /// Whether the generating Hamiltonian was time-independent.
    pub static_generator: bool,
    /// Schedule and total time of the generating Hamiltonian, if any.
    pub schedule: Option<(Schedule, f64)>,
    checkpoints: Vec<(usize, DVector<C64>)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory has samples")
    }

    pub fn hbar(&self) -> f64 {
        self.config.hbar
    }

    pub fn trace(&self, policy: &BetaPolicy) -> Option<&PolicyTrace> {
        self.traces.iter().find(|t| &t.policy == policy)
    }

    /// Numerical slack `10·dt·max‖(H − β)φ₀‖ + 1e-10·ℏ` for one policy.
    ///
    /// The constant term covers round-off when the integrand vanishes.
    pub fn slack(&self, trace: &PolicyTrace) -> f64 {
        10.0 * self.dt * trace.max_integrand + ROUNDOFF_SLACK * self.hbar()
    }

    /// Linear interpolation of a per-sample series at time `t`.
    pub fn interpolate(&self, series: &[f64], t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return series[0];
        }
        if k >= self.len() {
            return series[self.len() - 1];
        }
        let (a, b) = (self.times[k - 1], self.times[k]);
        let w = (t - a) / (b - a);
        series[k - 1] + w * (series[k] - series[k - 1])
    }

    /// Largest slack over all recorded policies.
    pub fn max_slack(&self) -> f64 {
        self.traces.iter().map(|t| self.slack(t)).fold(ROUNDOFF_SLACK * self.hbar(), f64::max)
    }

    /// Re-integrates from the nearest stored checkpoint to `t`.
    pub fn state_at(&self, h: &dyn Hamiltonian, t: f64) -> Result<StateVector> {
        if !(0.0..=self.horizon() * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::invalid(format!("t = {t} outside recorded horizon")));
        }
        let t = t.min(self.horizon());
        let idx = self.checkpoints.partition_point(|(k, _)| self.times[*k] <= t).max(1) - 1;
        let (k, state) = &self.checkpoints[idx];
        let mut prop = Propagator::new(h, self.config)?;
        let v = prop.advance(state, self.times[*k], t, self.dt)?;
        Ok(StateVector::from_vector_unchecked(v))
    }
}

/// Fixed-step stepper over a borrowed generator.
pub struct Propagator<'a> {
    h: &'a dyn Hamiltonian,
    cfg: IntegratorConfig,
    static_spectrum: Option<(Vec<f64>, DMatrix<C64>)>,
}

impl<'a> Propagator<'a> {
    pub fn new(h: &'a dyn Hamiltonian, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let static_spectrum = if h.is_static() && cfg.method == Method::MidpointExponential {
            let spec = h.at(0.0)?.eigh();
            Some((spec.values, spec.vectors))
        } else {
            None
        };
        Ok(Self { h, cfg, static_spectrum })
    }

    pub fn step(&mut self, psi: &DVector<C64>, t: f64, dt: f64) -> Result<DVector<C64>> {
        Error::check_dims(self.h.dim(), psi.len())?;
        match self.cfg.method {
            Method::MidpointExponential => {
                if let Some((values, vectors)) = &self.static_spectrum {
                    Ok(apply_exponential(values, vectors, psi, dt / self.cfg.hbar))
                } else {
                    let spec = self.h.at(t + 0.5 * dt)?.eigh();
                    Ok(apply_exponential(&spec.values, &spec.vectors, psi, dt / self.cfg.hbar))
                }
            }
            Method::Rk4 => self.rk4_step(psi, t, dt),
        }
    }

    fn rk4_step(&self, psi: &DVector<C64>, t: f64, dt: f64) -> Result<DVector<C64>> {
        let c = C64::new(0.0, -1.0 / self.cfg.hbar);
        let h0 = self.h.at(t)?;
        let hm = self.h.at(t + 0.5 * dt)?;
        let h1 = self.h.at(t + dt)?;
        let rhs = |op: &HermitianOperator, v: &DVector<C64>| (op.matrix() * v) * c;
        let half = C64::new(0.5 * dt, 0.0);
        let full = C64::new(dt, 0.0);
        let k1 = rhs(&h0, psi);
        let k2 = rhs(&hm, &(psi + &k1 * half));
        let k3 = rhs(&hm, &(psi + &k2 * half));
        let k4 = rhs(&h1, &(psi + &k3 * full));
        let sum = k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4;
        Ok(psi + sum * C64::new(dt / 6.0, 0.0))
    }

    /// Integrates from `t0` to `t1` in equal steps no longer than `max_dt`.
    pub fn advance(&mut self, psi: &DVector<C64>, t0: f64, t1: f64, max_dt: f64) -> Result<DVector<C64>> {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(psi.clone());
        }
        if let Some((values, vectors)) = &self.static_spectrum {
            return Ok(apply_exponential(values, vectors, psi, span / self.cfg.hbar));
        }
        let n = ((span / max_dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        let mut v = psi.clone();
        for k in 0..n {
            v = self.step(&v, t0 + k as f64 * dt, dt)?;
        }
        Ok(v)
    }
}

/// `V diag(e^{−iλs}) V† ψ`.
fn apply_exponential(values: &[f64], vectors: &DMatrix<C64>, psi: &DVector<C64>, s: f64) -> DVector<C64> {
    let mut coeffs = vectors.ad_mul(psi);
    for (c, &l) in coeffs.iter_mut().zip(values) {
        *c *= C64::from_polar(1.0, -l * s);
    }
    vectors * coeffs
}

/// Samples needed per policy at one instant.
struct Integrands {
    rhs: Vec<f64>,
    beta: Vec<f64>,
    spread: f64,
}

fn integrands(
    h: &dyn Hamiltonian,
    phi0: &DVector<C64>,
    t: f64,
    betas: &[BetaPolicy],
) -> Result<Integrands> {
    let op = h.at(t)?;
    let sched = h.schedule();
    let mut rhs = Vec::with_capacity(betas.len());
    let mut beta = Vec::with_capacity(betas.len());
    for b in betas {
        let value = b.value(t, sched)?;
        rhs.push(residual_norm_raw(op.matrix(), value, phi0));
        beta.push(value);
    }
    let e = expectation_raw(op.matrix(), phi0);
    let spread = residual_norm_raw(op.matrix(), e, phi0);
    Ok(Integrands { rhs, beta, spread })
}

struct Recorder {
    phi0: DVector<C64>,
    hbar: f64,
    stride: usize,
    last: usize,
    times: Vec<f64>,
    overlaps: Vec<C64>,
    survival: Vec<f64>,
    traces: Vec<PolicyTrace>,
    checkpoints: Vec<(usize, DVector<C64>)>,
}

impl Recorder {
    fn push(&mut self, k: usize, t: f64, psi: &DVector<C64>, rhs: &[f64], beta: &[f64]) {
        let ov = psi.dotc(&self.phi0);
        self.times.push(t);
        self.overlaps.push(ov);
        self.survival.push(ov.norm_sqr());
        for (i, tr) in self.traces.iter_mut().enumerate() {
            // Direct difference norm; the overlap form loses half the digits near d = 0.
            let phase = C64::from_polar(1.0, -beta[i] / self.hbar);
            let d2: f64 = psi.iter().zip(self.phi0.iter()).map(|(a, b)| (a - phase * b).norm_sqr()).sum();
            tr.distances.push(d2.sqrt());
            tr.rhs_integrals.push(rhs[i]);
            tr.beta_integrals.push(beta[i]);
        }
        if k % self.stride == 0 || k == self.last {
            self.checkpoints.push((k, psi.clone()));
        }
    }

    fn observe_integrands(&mut self, sample: &Integrands) {
        for (tr, &v) in self.traces.iter_mut().zip(&sample.rhs) {
            tr.max_integrand = tr.max_integrand.max(v);
        }
    }
}

/// Integrates from `psi0` over `[0, horizon]` and records every step.
pub fn evolve(
    h: &dyn Hamiltonian,
    psi0: &StateVector,
    horizon: f64,
    cfg: &IntegratorConfig,
    betas: &[BetaPolicy],
) -> Result<Trajectory> {
    Error::check_dims(h.dim(), psi0.dim())?;
    if !psi0.is_normalized() {
        return Err(Error::NotNormalized { deviation: (psi0.norm_sqr() - 1.0).abs() });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let mut prop = Propagator::new(h, *cfg)?;
    let (steps, dt) = cfg.grid(horizon);
    let hbar = cfg.hbar;
    let phi0 = psi0.amplitudes().clone();
    let stride = ((steps + 1) * phi0.len()).div_ceil(CHECKPOINT_BUDGET).max(1);

    let mut rec = Recorder {
        phi0: phi0.clone(),
        hbar,
        stride,
        last: steps,
        times: Vec::with_capacity(steps + 1),
        overlaps: Vec::with_capacity(steps + 1),
        survival: Vec::with_capacity(steps + 1),
        traces: betas
            .iter()
            .map(|&policy| PolicyTrace {
                policy,
                distances: Vec::with_capacity(steps + 1),
                rhs_integrals: Vec::with_capacity(steps + 1),
                beta_integrals: Vec::with_capacity(steps + 1),
                max_integrand: 0.0,
            })
            .collect(),
        checkpoints: Vec::new(),
    };

    let mut psi = phi0.clone();
    let mut max_drift: f64 = 0.0;
    let mut current = integrands(h, &phi0, 0.0, betas)?;
    let mut overlap_rate = current.spread / hbar;
    let mut rhs_acc = vec![0.0; betas.len()];
    let mut beta_acc = vec![0.0; betas.len()];
    rec.observe_integrands(&current);
    rec.push(0, 0.0, &psi, &rhs_acc, &beta_acc);

    for k in 0..steps {
        let t = k as f64 * dt;
        let t_next = if k + 1 == steps { horizon } else { (k + 1) as f64 * dt };
        let step = t_next - t;
        psi = prop.step(&psi, t, step)?;
        let drift = (psi.norm() - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > cfg.norm_tolerance {
            return Err(Error::IntegrationFailure { time: t_next, drift, tolerance: cfg.norm_tolerance });
        }

        // Simpson on [t, t_next] with the midpoint sample.
        let mid = integrands(h, &phi0, t + 0.5 * step, betas)?;
        let next = integrands(h, &phi0, t_next, betas)?;
        for i in 0..betas.len() {
            rhs_acc[i] += step / 6.0 * (current.rhs[i] + 4.0 * mid.rhs[i] + next.rhs[i]);
            beta_acc[i] += step / 6.0 * (current.beta[i] + 4.0 * mid.beta[i] + next.beta[i]);
        }
        overlap_rate = overlap_rate.max(mid.spread / hbar).max(next.spread / hbar);
        rec.observe_integrands(&mid);
        rec.observe_integrands(&next);
        rec.push(k + 1, t_next, &psi, &rhs_acc, &beta_acc);
        current = next;
    }

    Ok(Trajectory {
        times: rec.times,
        overlaps: rec.overlaps,
        survival: rec.survival,
        traces: rec.traces,
        initial_state: psi0.clone(),
        final_state: StateVector::from_vector_unchecked(psi),
        config: *cfg,
        dt,
        max_norm_drift: max_drift,
        overlap_rate,
        static_generator: h.is_static(),
        schedule: h.schedule().map(|(s, total)| (s.clone(), total)),
        checkpoints: rec.checkpoints,
    })
}

/// Empirical convergence of the final state under step refinement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConvergenceOrder {
    /// Every refinement agrees with the reference to round-off.
    Exact { max_error: f64 },
    Measured { order: f64, errors: [f64; 3] },
}

/// Errors below this are treated as round-off.
const EXACT_THRESHOLD: f64 = 1e-11;

/// Order `p` from final-state errors at `dt`, `dt/2`, `dt/4` against a `dt/16` reference.
pub fn convergence_order(
    h: &dyn Hamiltonian,
    psi0: &StateVector,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceOrder> {
    let reference = evolve(h, psi0, horizon, &cfg.refined(16), &[])?.final_state;
    let mut errors = [0.0; 3];
    for (i, factor) in [1usize, 2, 4].into_iter().enumerate() {
        let run = evolve(h, psi0, horizon, &cfg.refined(factor), &[])?.final_state;
        errors[i] = (run.amplitudes() - reference.amplitudes()).norm();
    }
    if errors.iter().all(|&e| e < EXACT_THRESHOLD) {
        return Ok(ConvergenceOrder::Exact { max_error: errors.iter().cloned().fold(0.0, f64::max) });
    }
    let order = (errors[0] / errors[2]).log2() / 2.0;
    Ok(ConvergenceOrder::Measured { order, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{random_hermitian, InterpolatedHamiltonian};
    use crate::qstate::{expectation, variance_sqrt};
    use std::f64::consts::PI;

    fn plus() -> StateVector {
        StateVector::uniform(2).unwrap()
    }

    fn qac_single(total: f64) -> InterpolatedHamiltonian {
        let hp = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        InterpolatedHamiltonian::qac(hp, Schedule::linear(), total).unwrap()
    }

    #[test]
    fn two_level_closed_form() {
        let h = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        let traj = evolve(&h, &plus(), PI / 2.0, &IntegratorConfig::default(), &[BetaPolicy::Zero]).unwrap();
        let p = *traj.survival.last().unwrap();
        assert!((p - (PI / 4.0).cos().powi(2)).abs() < 1e-8);
        for (t, ov) in traj.times.iter().zip(&traj.overlaps) {
            // ⟨ψ(t)|φ₀⟩ = (1 + e^{it})/2
            let want = (C64::new(1.0, 0.0) + C64::from_polar(1.0, *t)) * 0.5;
            assert!((ov - want).norm() < 1e-12);
        }
    }

    #[test]
    fn null_dynamics_stays_put() {
        let h = HermitianOperator::zeros(3).unwrap();
        let psi = StateVector::random_seeded(3, 2).unwrap();
        let traj = evolve(&h, &psi, 5.0, &IntegratorConfig::default(), &[BetaPolicy::Zero]).unwrap();
        assert!(traj.traces[0].distances.iter().all(|&d| d < 1e-7));
        assert!(traj.survival.iter().all(|&p| (p - 1.0).abs() < 1e-12));
        assert!((traj.final_state.amplitudes() - psi.amplitudes()).norm() < 1e-14);
    }

    #[test]
    fn qac_self_convergence() {
        let ih = qac_single(10.0);
        let psi0 = ih.initial_ground_state().unwrap();
        let cfg = IntegratorConfig::default();
        let coarse = evolve(&ih, &psi0, 10.0, &cfg, &[]).unwrap();
        let fine = evolve(&ih, &psi0, 10.0, &cfg.refined(10), &[]).unwrap();
        let (a, b) = (coarse.survival.last().unwrap(), fine.survival.last().unwrap());
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn midpoint_step_is_unitary() {
        let ih = qac_single(10.0);
        let mut prop = Propagator::new(&ih, IntegratorConfig::default()).unwrap();
        let mut psi = ih.initial_ground_state().unwrap().amplitudes().clone();
        for k in 0..200 {
            let before = psi.norm();
            psi = prop.step(&psi, k as f64 * 0.05, 0.05).unwrap();
            assert!((psi.norm() - before).abs() <= 1e-12);
        }
    }

    #[test]
    fn rk4_drift_fails_loudly() {
        let h = random_hermitian(4, 1).unwrap().scaled(5.0);
        let psi = StateVector::random_seeded(4, 1).unwrap();
        let cfg = IntegratorConfig::default().with_method(Method::Rk4).with_steps(20);
        match evolve(&h, &psi, 10.0, &cfg, &[]) {
            Err(Error::IntegrationFailure { time, .. }) => assert!(time > 0.0 && time <= 10.0),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = HermitianOperator::identity(2).unwrap();
        let cfg = IntegratorConfig::default();
        assert!(evolve(&h, &StateVector::uniform(3).unwrap(), 1.0, &cfg, &[]).is_err());
        assert!(evolve(&h, &plus(), 0.0, &cfg, &[]).is_err());
        assert!(evolve(&h, &plus(), 1.0, &cfg.with_steps(0), &[]).is_err());
        // schedule-proportional beta needs a schedule
        let sched = BetaPolicy::ScheduleProportional { beta0: 1.0 };
        assert!(evolve(&h, &plus(), 1.0, &cfg, &[sched]).is_err());
    }

    fn policies(e0: f64) -> Vec<BetaPolicy> {
        vec![BetaPolicy::Zero, BetaPolicy::Constant { beta0: e0 }, BetaPolicy::Constant { beta0: -0.7 }]
    }

    #[test]
    fn trajectory_invariants_on_random_cases() {
        for seed in 0..10 {
            let h = random_hermitian(5, seed).unwrap();
            let psi = StateVector::random_seeded(5, 1000 + seed).unwrap();
            let e0 = expectation(&h, &psi).unwrap();
            let traj = evolve(&h, &psi, 6.0, &IntegratorConfig::default().with_steps(500), &policies(e0)).unwrap();
            assert!((traj.survival[0] - 1.0).abs() < 1e-12);
            for k in 0..traj.len() {
                assert!((traj.survival[k] - traj.overlaps[k].norm_sqr()).abs() < 1e-12);
            }
            for tr in &traj.traces {
                assert!(tr.distances.iter().all(|&d| (0.0..=2.0).contains(&d)));
                assert!(tr.rhs_integrals.windows(2).all(|w| w[1] >= w[0]));
                let slack = traj.slack(tr);
                for k in 0..traj.len() {
                    assert!(traj.hbar() * tr.distances[k] <= tr.rhs_integrals[k] + slack);
                    let d2 = tr.distances[k].powi(2);
                    if d2 <= 2.0 {
                        assert!(traj.survival[k] >= (1.0 - 0.5 * d2).powi(2) - 1e-12);
                    }
                }
            }
            // |e^{-iθ/ℏ}⟨ψ|φ₀⟩| is the same for every policy.
            let (a, b) = (&traj.traces[0], &traj.traces[1]);
            for k in 0..traj.len() {
                let ra = C64::from_polar(1.0, -a.beta_integrals[k]) * traj.overlaps[k];
                let rb = C64::from_polar(1.0, -b.beta_integrals[k]) * traj.overlaps[k];
                assert!((ra.norm() - rb.norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn static_reduction_identities() {
        let h = random_hermitian(4, 8).unwrap();
        let psi = StateVector::random_seeded(4, 9).unwrap();
        let e0 = expectation(&h, &psi).unwrap();
        let spread = variance_sqrt(&h, &psi).unwrap();
        let cfg = IntegratorConfig::default().with_hbar(0.7);
        let traj = evolve(&h, &psi, 3.0, &cfg, &policies(e0)).unwrap();
        for (k, &t) in traj.times.iter().enumerate() {
            let zero = traj.traces[0].rhs_integrals[k];
            let opt = traj.traces[1].rhs_integrals[k];
            assert!((zero - t * (spread * spread + e0 * e0).sqrt()).abs() < 1e-10);
            assert!((opt - t * spread).abs() < 1e-10);
        }
    }

    #[test]
    fn qac_reduction_identity() {
        for sched in [Schedule::linear(), Schedule::poly(2.0).unwrap()] {
            let hp = HermitianOperator::diagonal(&[0.0, 1.0, 3.0, -0.5]).unwrap();
            let total = 6.0;
            let ih = InterpolatedHamiltonian::qac(hp.clone(), sched.clone(), total).unwrap();
            let g = ih.initial_ground_state().unwrap();
            let (ep, dp) = (expectation(&hp, &g).unwrap(), variance_sqrt(&hp, &g).unwrap());
            let beta0 = 0.3;
            let traj = evolve(&ih, &g, total, &IntegratorConfig::default(), &[BetaPolicy::ScheduleProportional { beta0 }]).unwrap();
            let tr = &traj.traces[0];
            for (k, &t) in traj.times.iter().enumerate() {
                let want = total * sched.g_integral(t / total) * (dp * dp + (ep - beta0).powi(2)).sqrt();
                assert!((tr.rhs_integrals[k] - want).abs() < 1e-9, "t = {t}");
            }
        }
    }

    #[test]
    fn convergence_orders() {
        let h = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        let exact = convergence_order(&h, &plus(), 4.0, &IntegratorConfig::default().with_steps(50)).unwrap();
        assert!(matches!(exact, ConvergenceOrder::Exact { .. }), "{exact:?}");

        let ih = qac_single(10.0);
        let g = ih.initial_ground_state().unwrap();
        let rk4 = IntegratorConfig::default().with_method(Method::Rk4).with_steps(20).with_norm_tolerance(1e-3);
        match convergence_order(&ih, &g, 10.0, &rk4).unwrap() {
            ConvergenceOrder::Measured { order, .. } => assert!((3.5..=4.5).contains(&order), "rk4 order {order}"),
            other => panic!("{other:?}"),
        }
        let mid = IntegratorConfig::default().with_steps(40);
        match convergence_order(&ih, &g, 10.0, &mid).unwrap() {
            ConvergenceOrder::Measured { order, .. } => assert!((1.8..=2.4).contains(&order), "midpoint order {order}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn state_at_reproduces_samples() {
        let ih = qac_single(5.0);
        let g = ih.initial_ground_state().unwrap();
        let traj = evolve(&ih, &g, 5.0, &IntegratorConfig::default().with_steps(200), &[]).unwrap();
        for k in [0, 17, 100, 200] {
            let s = traj.state_at(&ih, traj.times[k]).unwrap();
            let ov = s.amplitudes().dotc(g.amplitudes());
            assert!((ov - traj.overlaps[k]).norm() < 1e-12);
        }
        assert!(traj.state_at(&ih, 6.0).is_err());
    }

    #[test]
    fn csv_export_layout() {
        let h = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        let traj = evolve(&h, &plus(), 1.0, &IntegratorConfig::default().with_steps(4), &[BetaPolicy::Zero]).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,re_overlap,im_overlap,survival,distance[zero],rhs_integral[zero]");
        assert_eq!(lines.count(), 5);
        let meta = RunMetadata::for_trajectory("two-level", Some(3), &traj);
        assert_eq!(meta.steps, 4);
        assert_eq!(meta.method, "midpoint-exponential");
    }
}
