use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::Arc;

use nalgebra::DVector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::output::Series;
use super::{BetaChoice, Campaign, CampaignKind, Check, Provenance, QacProblem, RunRecord};
use crate::bounds::{
    char_times_ti, check_inequalities, survival_lower_bound_qac, survival_lower_bound_ti, BoundContext, EventSet,
    MomentPair,
};
use crate::error::{Error, Result};
use crate::events::{first_antipodal, first_orthogonal, EventQuery};
use crate::hamiltonian::{
    ising_problem, random_hermitian_with, shift_ground_to_zero, transverse_initial, Hamiltonian,
    InterpolatedHamiltonian, IsingInstance, Schedule,
};
use crate::propagator::{evolve, BetaPolicy, IntegratorConfig, Trajectory};
use crate::qstate::{HermitianOperator, StateVector, Tensor, C64};

/// Absolute tolerance of the static reduction identities.
const STATIC_IDENTITY_TOL: f64 = 1e-10;
/// Absolute tolerance of the interpolated reduction identities.
const QAC_IDENTITY_TOL: f64 = 1e-9;
/// Bound on `‖H_I g_I‖` for an accepted driver.
const DRIVER_GROUND_TOL: f64 = 1e-10;
/// Closed-form event times must match to this.
const EVENT_TIME_TOL: f64 = 1e-6;
/// Stream offsets so operator and state draws never share a ChaCha stream.
const STATE_STREAM: u64 = 1;
const SUBSYSTEM_STREAM: u64 = 2;

pub(crate) struct Context {
    campaign: String,
    config_hash: String,
    cfg: IntegratorConfig,
    betas: Vec<BetaChoice>,
    tolerance: f64,
    keep_series: bool,
}

impl Context {
    pub(crate) fn new(c: &Campaign) -> Self {
        Self {
            campaign: c.kind.label().to_string(),
            config_hash: c.config_hash(),
            cfg: c.integrator,
            betas: c.beta_policies.clone(),
            tolerance: c.event_tolerance,
            keep_series: c.keep_series,
        }
    }

    fn hbar(&self) -> f64 {
        self.cfg.hbar
    }

    fn policies(&self, energy: f64, scheduled: bool) -> Result<Vec<BetaPolicy>> {
        self.betas.iter().map(|b| b.resolve(energy, scheduled)).collect()
    }

    fn provenance(&self, key: String, seed: Option<u64>, instance: Option<String>) -> Provenance {
        Provenance {
            campaign: self.campaign.clone(),
            key,
            seed,
            instance,
            config_hash: self.config_hash.clone(),
        }
    }

    fn events(&self, traj: &Trajectory, h: &dyn Hamiltonian) -> Result<EventSet> {
        Ok(EventSet {
            orthogonal: Some(first_orthogonal(traj, h, &EventQuery::orthogonal().with_tolerance(self.tolerance))?),
            antipodal: Some(first_antipodal(traj, h, &EventQuery::antipodal().with_tolerance(self.tolerance))?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntangledState {
    /// `φ ⊗ φ` with `φ = (e_a + e_b)/√2`.
    Product,
    /// `(e_a e_a + e_b e_b)/√2`.
    Aligned,
    /// `(e_a e_b + e_b e_a)/√2`; an eigenstate of the noninteracting sum.
    AntiAligned,
}

impl EntangledState {
    const ALL: [EntangledState; 3] = [EntangledState::Product, EntangledState::Aligned, EntangledState::AntiAligned];

    fn label(self) -> &'static str {
        match self {
            EntangledState::Product => "product",
            EntangledState::Aligned => "aligned",
            EntangledState::AntiAligned => "anti-aligned",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Analytic {
    Orthogonal,
    Antipodal,
    Null,
    Eigenstate,
}

pub(crate) struct ResolvedProblem {
    label: String,
    op: HermitianOperator,
    instance: Option<IsingInstance>,
}

pub(crate) enum Case {
    Analytic(Analytic),
    Gue { dim: usize, seed: u64, mult: f64, shift: bool },
    Qac { problem: Arc<ResolvedProblem>, schedule: Schedule, total: f64 },
    Entangle { dim: usize, seed: u64, state: EntangledState, mult: f64 },
}

pub(crate) fn expand(c: &Campaign) -> Result<Vec<Case>> {
    Ok(match &c.kind {
        CampaignKind::AnalyticTwoLevel => [Analytic::Orthogonal, Analytic::Antipodal, Analytic::Null, Analytic::Eigenstate]
            .into_iter()
            .map(Case::Analytic)
            .collect(),
        CampaignKind::GueEnsemble { dim, seeds, horizon_mult, shift_ground } => seeds
            .iter()
            .map(|seed| Case::Gue { dim: *dim, seed, mult: *horizon_mult, shift: *shift_ground })
            .collect(),
        CampaignKind::QacIsing { problem, schedule, total_times } => {
            let problem = Arc::new(resolve_problem(problem)?);
            total_times
                .iter()
                .map(|&total| Case::Qac { problem: problem.clone(), schedule: schedule.clone(), total })
                .collect()
        }
        CampaignKind::EntanglementCompare { subsystem_dim, seeds, horizon_mult } => seeds
            .iter()
            .flat_map(|seed| {
                EntangledState::ALL.into_iter().map(move |state| Case::Entangle {
                    dim: *subsystem_dim,
                    seed,
                    state,
                    mult: *horizon_mult,
                })
            })
            .collect(),
    })
}

fn resolve_problem(p: &QacProblem) -> Result<ResolvedProblem> {
    let label = p.label();
    let (op, instance) = match p {
        QacProblem::SingleQubit => (HermitianOperator::diagonal(&[0.0, 1.0])?, None),
        QacProblem::Ising { instance } => (ising_problem(instance)?, Some(instance.clone())),
        QacProblem::IsingFile { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
            let inst: IsingInstance = serde_json::from_str(&text)
                .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
            (ising_problem(&inst)?, Some(inst))
        }
    };
    let n = op.dim().trailing_zeros() as usize;
    let driver = transverse_initial(n)?;
    let residual = driver.apply(&StateVector::uniform(op.dim())?)?.norm();
    if residual > DRIVER_GROUND_TOL {
        return Err(Error::Configuration(format!(
            "driver does not annihilate the uniform state: |H_I g_I| = {residual:e}"
        )));
    }
    Ok(ResolvedProblem { label, op, instance })
}

impl Case {
    pub(crate) fn key(&self) -> String {
        match self {
            Case::Analytic(a) => format!("analytic/{}", format!("{a:?}").to_lowercase()),
            Case::Gue { dim, seed, .. } => format!("gue/d{dim:03}/s{seed:08}"),
            Case::Qac { problem, total, .. } => format!("qac/{}/T{total:014.6}", problem.label),
            Case::Entangle { dim, seed, state, .. } => format!("entangle/d{dim:02}/s{seed:08}/{}", state.label()),
        }
    }

    pub(crate) fn seed(&self) -> Option<u64> {
        match self {
            Case::Gue { seed, .. } | Case::Entangle { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub(crate) fn instance(&self) -> Option<String> {
        match self {
            Case::Qac { problem, .. } => Some(problem.label.clone()),
            _ => None,
        }
    }

    pub(crate) fn run(&self, ctx: &Context) -> Result<RunRecord> {
        let prov = ctx.provenance(self.key(), self.seed(), self.instance());
        log::debug!("running {}", prov.key);
        match self {
            Case::Analytic(a) => run_analytic(ctx, prov, *a),
            Case::Gue { dim, seed, mult, shift } => run_gue(ctx, prov, *dim, *seed, *mult, *shift),
            Case::Qac { problem, schedule, total } => run_qac_case(ctx, prov, problem, schedule, *total),
            Case::Entangle { dim, seed, state, mult } => run_entangle(ctx, prov, *dim, *seed, *state, *mult),
        }
    }
}

struct StaticRun {
    record: RunRecord,
    traj: Trajectory,
}

/// Evolves a static generator and evaluates every time-independent check.
fn run_static(ctx: &Context, prov: Provenance, h: &HermitianOperator, psi: &StateVector, horizon: f64) -> Result<StaticRun> {
    let m = MomentPair::of(h, psi)?;
    let policies = ctx.policies(m.energy, false)?;
    let traj = evolve(h, psi, horizon, &ctx.cfg, &policies)?;
    let events = ctx.events(&traj, h)?;
    let report = check_inequalities(&traj, m, events, BoundContext::TimeIndependent)?;

    let mut checks = Vec::new();
    for tr in &traj.traces {
        let beta = match tr.policy {
            BetaPolicy::Zero => 0.0,
            BetaPolicy::Constant { beta0 } => beta0,
            BetaPolicy::ScheduleProportional { .. } => continue,
        };
        let rate = m.shifted_magnitude(beta);
        let err = traj
            .times
            .iter()
            .zip(&tr.rhs_integrals)
            .map(|(t, r)| (r - t * rate).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new(
            format!("reduction[{}]", tr.policy.label()),
            err <= STATIC_IDENTITY_TOL,
            format!("max |rhs - t*sqrt(dE^2 + (E - beta)^2)| = {err:.3e}"),
        ));
    }

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("final_survival".into(), *traj.survival.last().unwrap_or(&1.0));
    diagnostics.insert("max_norm_drift".into(), traj.max_norm_drift);
    diagnostics.insert("horizon".into(), horizon);
    let series = ctx
        .keep_series
        .then(|| Series::from_trajectory(&traj, |t| Ok(survival_lower_bound_ti(t, m.spread, ctx.hbar()).value)))
        .transpose()?;
    Ok(StaticRun {
        record: RunRecord { provenance: prov, report, checks, diagnostics, series },
        traj,
    })
}

fn plus() -> Result<StateVector> {
    StateVector::uniform(2)
}

fn run_analytic(ctx: &Context, prov: Provenance, case: Analytic) -> Result<RunRecord> {
    let hbar = ctx.hbar();
    let (h, psi, horizon) = match case {
        Analytic::Orthogonal => (HermitianOperator::diagonal(&[0.0, 1.0])?, plus()?, 4.0 * hbar),
        Analytic::Antipodal => (HermitianOperator::diagonal(&[-0.5, 0.5])?, plus()?, 8.0 * hbar),
        Analytic::Null => (HermitianOperator::zeros(2)?, plus()?, 10.0 * hbar),
        Analytic::Eigenstate => (HermitianOperator::diagonal(&[0.3, 1.0])?, StateVector::basis(2, 0)?, 10.0 * hbar),
    };
    let StaticRun { mut record, traj } = run_static(ctx, prov, &h, &psi, horizon)?;
    let report = &record.report;
    let orth = report.measured_orth_time();
    let anti = report.measured_antipodal_time();
    let expect = |name: &str, got: Option<f64>, want: Option<f64>| match (got, want) {
        (Some(g), Some(w)) => Check::close(name, g, w, EVENT_TIME_TOL),
        (None, None) => Check::new(name, true, "not triggered, as expected"),
        (g, w) => Check::new(name, false, format!("measured {g:?}, expected {w:?}")),
    };
    let (want_orth, want_anti) = match case {
        Analytic::Orthogonal => (Some(PI * hbar), None),
        Analytic::Antipodal => (Some(PI * hbar), Some(2.0 * PI * hbar)),
        Analytic::Null | Analytic::Eigenstate => (None, None),
    };
    record.checks.push(expect("orthogonal-closed-form", orth, want_orth));
    record.checks.push(expect("antipodal-closed-form", anti, want_anti));

    if matches!(case, Analytic::Orthogonal | Analytic::Antipodal) {
        // Both cases have P(t) = cos²(t/2ℏ).
        let p1 = survival_at(&traj, &h, hbar)?;
        let bound = survival_lower_bound_ti(hbar, 0.5, hbar).value;
        record.checks.push(Check::close("survival-spot-closed-form", p1, 0.5f64.cos().powi(2), 1e-9));
        record.checks.push(Check::new(
            "survival-spot-bound",
            p1 >= bound,
            format!("P(hbar) = {p1:.9} against bound {bound:.9}"),
        ));
        record.diagnostics.insert("survival_at_hbar".into(), p1);
    }
    Ok(record)
}

fn survival_at(traj: &Trajectory, h: &dyn Hamiltonian, t: f64) -> Result<f64> {
    let psi = traj.state_at(h, t)?;
    Ok(psi.amplitudes().dotc(traj.initial_state.amplitudes()).norm_sqr())
}

/// Horizon from the orthogonality time, falling back to the any-state time
/// and then to `ℏ` for degenerate moments.
fn horizon_for(m: &MomentPair, mult: f64, hbar: f64) -> (f64, bool) {
    let ct = char_times_ti(m, hbar);
    let degenerate = m.spread <= 1e-12 * m.energy.abs().max(1.0);
    let base = match (degenerate, ct.t_orth.finite(), ct.t_any.finite()) {
        (false, Some(t), _) => t,
        (_, _, Some(t)) => t,
        _ => hbar,
    };
    (mult * base, degenerate)
}

fn run_gue(ctx: &Context, prov: Provenance, dim: usize, seed: u64, mult: f64, shift: bool) -> Result<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = random_hermitian_with(dim, &mut rng)?;
    if shift {
        h = shift_ground_to_zero(&h);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STATE_STREAM);
    let psi = StateVector::random(dim, &mut rng)?;
    let m = MomentPair::of(&h, &psi)?;
    let (horizon, degenerate) = horizon_for(&m, mult, ctx.hbar());
    let mut record = run_static(ctx, prov, &h, &psi, horizon)?.record;
    record.diagnostics.insert("degenerate".into(), f64::from(u8::from(degenerate)));
    Ok(record)
}

fn run_qac_case(
    ctx: &Context,
    prov: Provenance,
    problem: &ResolvedProblem,
    schedule: &Schedule,
    total: f64,
) -> Result<RunRecord> {
    let h = InterpolatedHamiltonian::qac(problem.op.clone(), schedule.clone(), total)?;
    let g0 = h.initial_ground_state()?;
    let m = MomentPair::of(&problem.op, &g0)?;
    let policies = ctx.policies(m.energy, true)?;
    let traj = evolve(&h, &g0, total, &ctx.cfg, &policies)?;
    let events = ctx.events(&traj, &h)?;
    let report = check_inequalities(&traj, m, events, BoundContext::Qac)?;

    let mut checks = Vec::new();
    for tr in &traj.traces {
        let beta0 = match tr.policy {
            BetaPolicy::Zero => 0.0,
            BetaPolicy::ScheduleProportional { beta0 } => beta0,
            BetaPolicy::Constant { .. } => continue,
        };
        let rate = m.shifted_magnitude(beta0);
        let err = traj
            .times
            .iter()
            .zip(&tr.rhs_integrals)
            .map(|(t, r)| (r - total * schedule.g_integral(t / total) * rate).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new(
            format!("reduction-qac[{}]", tr.policy.label()),
            err <= QAC_IDENTITY_TOL,
            format!("max |rhs - G(t)*sqrt(dE_P^2 + (E_P - beta0)^2)| = {err:.3e}"),
        ));
    }
    if let Some(inst) = &problem.instance {
        let (e, s) = brute_force_moments(inst);
        checks.push(Check::close("moments-oracle[energy]", m.energy, e, 1e-10));
        checks.push(Check::close("moments-oracle[spread]", m.spread, s, 1e-10));
    }

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("final_survival".into(), *traj.survival.last().unwrap_or(&1.0));
    diagnostics.insert("ground_overlap".into(), ground_overlap(&problem.op, &traj.final_state));
    diagnostics.insert("g_integral".into(), schedule.g_integral(1.0));
    diagnostics.insert("total_time".into(), total);
    diagnostics.insert("max_norm_drift".into(), traj.max_norm_drift);
    let series = ctx
        .keep_series
        .then(|| {
            Series::from_trajectory(&traj, |t| {
                Ok(survival_lower_bound_qac(t.min(total), m.spread, schedule, total, ctx.hbar())?.value)
            })
        })
        .transpose()?;
    Ok(RunRecord { provenance: prov, report, checks, diagnostics, series })
}

/// Uniform-weight mean and spread of the classical energies.
fn brute_force_moments(inst: &IsingInstance) -> (f64, f64) {
    let dim = inst.dim();
    let energies: Vec<f64> = (0..dim).map(|k| inst.energy(k)).collect();
    let mean = energies.iter().sum::<f64>() / dim as f64;
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / dim as f64;
    (mean, var.sqrt())
}

/// Weight of `psi` on the lowest eigenspace of `op`.
fn ground_overlap(op: &HermitianOperator, psi: &StateVector) -> f64 {
    let spec = op.eigh();
    let e0 = spec.values[0];
    spec.values
        .iter()
        .enumerate()
        .take_while(|(_, &v)| v - e0 <= 1e-9 * e0.abs().max(1.0))
        .map(|(k, _)| spec.vectors.column(k).dotc(psi.amplitudes()).norm_sqr())
        .sum()
}

fn run_entangle(
    ctx: &Context,
    prov: Provenance,
    dim: usize,
    seed: u64,
    state: EntangledState,
    mult: f64,
) -> Result<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SUBSYSTEM_STREAM);
    let sub = random_hermitian_with(dim, &mut rng)?;
    let id = HermitianOperator::identity(dim)?;
    let h = sub.tensor(&id).add_scaled(&id.tensor(&sub), 1.0)?;

    let spec = sub.eigh();
    let (a, b) = (0, dim - 1);
    let lambda = (spec.values[a], spec.values[b]);
    let ea = StateVector::new(spec.vectors.column(a).iter().copied().collect())?;
    let eb = StateVector::new(spec.vectors.column(b).iter().copied().collect())?;
    let pair = |x: &StateVector, y: &StateVector, u: &StateVector, v: &StateVector| -> Result<StateVector> {
        let sum: DVector<C64> = (x.tensor(y).amplitudes() + u.tensor(v).amplitudes()) * C64::from(FRAC_1_SQRT_2);
        StateVector::normalize(sum.iter().copied().collect())
    };
    let psi = match state {
        EntangledState::Product => {
            let phi = StateVector::normalize((ea.amplitudes() + eb.amplitudes()).iter().copied().collect())?;
            phi.tensor(&phi)
        }
        EntangledState::Aligned => pair(&ea, &ea, &eb, &eb)?,
        EntangledState::AntiAligned => pair(&ea, &eb, &eb, &ea)?,
    };

    // All three states share the product state's horizon.
    let gap = lambda.1 - lambda.0;
    let product = MomentPair::new(lambda.0 + lambda.1, gap * FRAC_1_SQRT_2)?;
    let (horizon, _) = horizon_for(&product, mult, ctx.hbar());

    let StaticRun { mut record, traj } = run_static(ctx, prov, &h, &psi, horizon)?;
    let m = record.report.moments;
    record.checks.push(Check::close("matched-energy", m.energy, lambda.0 + lambda.1, 1e-10));
    if state == EntangledState::Product {
        let single = MomentPair::of(&sub, &StateVector::normalize((ea.amplitudes() + eb.amplitudes()).iter().copied().collect())?)?;
        record.checks.push(Check::close("product-spread-additivity", m.spread, SQRT_2 * single.spread, 1e-10));
    }
    record.diagnostics.insert("spread".into(), m.spread);
    record.diagnostics.insert("energy".into(), m.energy);
    if let Some(t) = half_life(&traj) {
        record.diagnostics.insert("half_life".into(), t);
    }
    Ok(record)
}

/// First time `P(t) < 1/2`, linearly interpolated between samples.
pub(crate) fn half_life(traj: &Trajectory) -> Option<f64> {
    let k = traj.survival.iter().position(|&p| p < 0.5)?;
    if k == 0 {
        return Some(traj.times[0]);
    }
    let (p0, p1) = (traj.survival[k - 1], traj.survival[k]);
    let (t0, t1) = (traj.times[k - 1], traj.times[k]);
    Some(t0 + (p0 - 0.5) / (p0 - p1) * (t1 - t0))
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

/// Campaign-level statistics derived from the diagnostics.
pub(crate) fn statistics(records: &[RunRecord]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let (spreads, lives): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| Some((r.diagnostic("spread")?, r.diagnostic("half_life")?)))
        .unzip();
    if let Some(c) = pearson(&spreads, &lives) {
        out.insert("spread_half_life_correlation".into(), c);
    }
    for state in EntangledState::ALL {
        let suffix = format!("/{}", state.label());
        let lives: Vec<f64> = records
            .iter()
            .filter(|r| r.provenance.key.ends_with(&suffix))
            .filter_map(|r| r.diagnostic("half_life"))
            .collect();
        let total = records.iter().filter(|r| r.provenance.key.ends_with(&suffix)).count();
        if total > 0 {
            out.insert(format!("half_life_rate[{}]", state.label()), lives.len() as f64 / total as f64);
        }
        if !lives.is_empty() {
            out.insert(format!("mean_half_life[{}]", state.label()), lives.iter().sum::<f64>() / lives.len() as f64);
        }
    }
    let ground: Vec<f64> = records.iter().filter_map(|r| r.diagnostic("ground_overlap")).collect();
    if !ground.is_empty() {
        out.insert("max_ground_overlap".into(), ground.iter().copied().fold(0.0, f64::max));
    }
    out
}
