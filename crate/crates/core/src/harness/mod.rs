//! Verification campaigns over families of trajectories.
//!
//! A [`Campaign`] expands into independent cases (one trajectory each) that
//! run in parallel. Each case yields a [`RunRecord`] holding its
//! [`BoundReport`], auxiliary checks, diagnostics and provenance. Records are
//! sorted by provenance key before summarizing, so results do not depend on
//! scheduling.

mod cases;
mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{BoundReport, MarginStatus};
use crate::error::{Error, Result};
use crate::hamiltonian::{IsingInstance, Schedule};
use crate::propagator::{BetaPolicy, IntegratorConfig};
use crate::qstate::DEFAULT_MAX_DIM;

pub use cases::EntangledState;
pub use output::{file_stem, Series, SummaryFile};

pub const DEFAULT_HORIZON_MULT: f64 = 4.0;

/// Half-open seed interval `start..end`, written as `"start..end"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SeedRange {
    start: u64,
    end: u64,
}

impl SeedRange {
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if start >= end {
            return Err(Error::invalid(format!("seed range {start}..{end} is empty")));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> std::ops::Range<u64> {
        self.start..self.end
    }
}

impl FromStr for SeedRange {
    type Err = Error;

    /// Accepts `a..b` or a single seed `a`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |x: &str| {
            x.trim()
                .parse::<u64>()
                .map_err(|e| Error::invalid(format!("bad seed `{x}`: {e}")))
        };
        match s.split_once("..") {
            Some((a, b)) => Self::new(parse(a)?, parse(b)?),
            None => {
                let a = parse(s)?;
                Self::new(a, a.checked_add(1).ok_or_else(|| Error::invalid("seed overflow"))?)
            }
        }
    }
}

impl TryFrom<String> for SeedRange {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SeedRange> for String {
    fn from(r: SeedRange) -> String {
        r.to_string()
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// A β-policy template resolved per run once the moments are known.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BetaChoice {
    Zero,
    /// `β = E₀` for static generators, `β = E_P·g(t/T)` for interpolated ones.
    MeanEnergy,
    Constant { beta0: f64 },
    ScheduleProportional { beta0: f64 },
}

impl BetaChoice {
    pub fn resolve(&self, energy: f64, scheduled: bool) -> Result<BetaPolicy> {
        Ok(match *self {
            BetaChoice::Zero => BetaPolicy::Zero,
            BetaChoice::MeanEnergy if scheduled => BetaPolicy::ScheduleProportional { beta0: energy },
            BetaChoice::MeanEnergy => BetaPolicy::Constant { beta0: energy },
            BetaChoice::Constant { beta0 } => BetaPolicy::Constant { beta0 },
            BetaChoice::ScheduleProportional { beta0 } if scheduled => BetaPolicy::ScheduleProportional { beta0 },
            BetaChoice::ScheduleProportional { .. } => {
                return Err(Error::Configuration(
                    "schedule-proportional beta requested for a time-independent run".into(),
                ))
            }
        })
    }
}

impl FromStr for BetaChoice {
    type Err = Error;

    /// `zero`, `mean`, `const:<x>` or `sched:<x>`.
    fn from_str(s: &str) -> Result<Self> {
        let num = |x: &str| {
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid(format!("bad beta value `{x}`")))
        };
        match s.split_once(':') {
            None if s == "zero" => Ok(BetaChoice::Zero),
            None if s == "mean" => Ok(BetaChoice::MeanEnergy),
            Some(("const", x)) => Ok(BetaChoice::Constant { beta0: num(x)? }),
            Some(("sched", x)) => Ok(BetaChoice::ScheduleProportional { beta0: num(x)? }),
            _ => Err(Error::invalid(format!(
                "unknown beta policy `{s}` (expected zero, mean, const:<x> or sched:<x>)"
            ))),
        }
    }
}

pub fn default_betas() -> Vec<BetaChoice> {
    vec![BetaChoice::Zero, BetaChoice::MeanEnergy]
}

/// Problem operator of an interpolation campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum QacProblem {
    /// `H_P = diag(0, 1)` with the single-qubit transverse driver.
    SingleQubit,
    Ising { instance: IsingInstance },
    IsingFile { path: PathBuf },
}

impl QacProblem {
    pub fn label(&self) -> String {
        match self {
            QacProblem::SingleQubit => "single-qubit".into(),
            QacProblem::Ising { instance } => {
                let json = serde_json::to_vec(instance).unwrap_or_default();
                format!("ising-n{}-{}", instance.n(), &hex::encode(Sha256::digest(&json))[..8])
            }
            QacProblem::IsingFile { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "instance".into()),
        }
    }
}

fn default_mult() -> f64 {
    DEFAULT_HORIZON_MULT
}

fn default_subsystem_dim() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CampaignKind {
    AnalyticTwoLevel,
    GueEnsemble {
        dim: usize,
        seeds: SeedRange,
        #[serde(default = "default_mult")]
        horizon_mult: f64,
        /// Shift each operator so its ground energy is 0.
        #[serde(default)]
        shift_ground: bool,
    },
    QacIsing {
        problem: QacProblem,
        #[serde(default = "Schedule::linear")]
        schedule: Schedule,
        total_times: Vec<f64>,
    },
    EntanglementCompare {
        #[serde(default = "default_subsystem_dim")]
        subsystem_dim: usize,
        seeds: SeedRange,
        #[serde(default = "default_mult")]
        horizon_mult: f64,
    },
}

impl CampaignKind {
    pub fn label(&self) -> &'static str {
        match self {
            CampaignKind::AnalyticTwoLevel => "analytic-two-level",
            CampaignKind::GueEnsemble { .. } => "gue-ensemble",
            CampaignKind::QacIsing { .. } => "qac-ising",
            CampaignKind::EntanglementCompare { .. } => "entanglement-compare",
        }
    }
}

/// A campaign definition; the JSON form mirrors this type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    #[serde(flatten)]
    pub kind: CampaignKind,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default = "default_betas")]
    pub beta_policies: Vec<BetaChoice>,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_event_tolerance")]
    pub event_tolerance: f64,
    /// Keep per-sample series for plotting.
    #[serde(default)]
    pub keep_series: bool,
}

fn default_event_tolerance() -> f64 {
    1e-6
}

impl Campaign {
    pub fn new(kind: CampaignKind) -> Self {
        Self {
            kind,
            integrator: IntegratorConfig::default(),
            beta_policies: default_betas(),
            workers: None,
            event_tolerance: default_event_tolerance(),
            keep_series: false,
        }
    }

    pub fn analytic() -> Self {
        Self::new(CampaignKind::AnalyticTwoLevel)
    }

    pub fn gue(dim: usize, seeds: SeedRange, horizon_mult: f64) -> Self {
        Self::new(CampaignKind::GueEnsemble { dim, seeds, horizon_mult, shift_ground: false })
    }

    pub fn qac(problem: QacProblem, schedule: Schedule, total_times: Vec<f64>) -> Self {
        Self::new(CampaignKind::QacIsing { problem, schedule, total_times })
    }

    pub fn entanglement(subsystem_dim: usize, seeds: SeedRange) -> Self {
        Self::new(CampaignKind::EntanglementCompare {
            subsystem_dim,
            seeds,
            horizon_mult: DEFAULT_HORIZON_MULT,
        })
    }

    pub fn with_integrator(mut self, cfg: IntegratorConfig) -> Self {
        self.integrator = cfg;
        self
    }

    pub fn with_betas(mut self, betas: Vec<BetaChoice>) -> Self {
        self.beta_policies = betas;
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_series(mut self, keep: bool) -> Self {
        self.keep_series = keep;
        self
    }

    /// Reads a campaign file; parse errors carry line and column.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
        let campaign: Campaign = serde_json::from_str(&text)
            .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(campaign.relative_to(base))
    }

    /// Resolves relative instance paths against `base`.
    fn relative_to(mut self, base: &Path) -> Self {
        if let CampaignKind::QacIsing { problem: QacProblem::IsingFile { path }, .. } = &mut self.kind {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Configuration(m));
        self.integrator
            .validate()
            .map_err(|e| Error::Configuration(e.to_string()))?;
        if self.beta_policies.is_empty() {
            return cfg_err("at least one beta policy is required".into());
        }
        if self.workers == Some(0) {
            return cfg_err("worker count must be positive".into());
        }
        if !(self.event_tolerance.is_finite() && self.event_tolerance > 0.0) {
            return cfg_err(format!("event tolerance must be positive, got {}", self.event_tolerance));
        }
        let check_mult = |m: f64| {
            if m.is_finite() && m > 0.0 {
                Ok(())
            } else {
                Err(Error::Configuration(format!("horizon multiplier must be positive, got {m}")))
            }
        };
        match &self.kind {
            CampaignKind::AnalyticTwoLevel => {}
            CampaignKind::GueEnsemble { dim, horizon_mult, .. } => {
                check_mult(*horizon_mult)?;
                if !(2..=DEFAULT_MAX_DIM).contains(dim) {
                    return cfg_err(format!("ensemble dimension must be in 2..={DEFAULT_MAX_DIM}, got {dim}"));
                }
            }
            CampaignKind::QacIsing { total_times, .. } => {
                if total_times.is_empty() {
                    return cfg_err("at least one total time is required".into());
                }
                if let Some(t) = total_times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                    return cfg_err(format!("total times must be positive, got {t}"));
                }
            }
            CampaignKind::EntanglementCompare { subsystem_dim, horizon_mult, .. } => {
                check_mult(*horizon_mult)?;
                if *subsystem_dim < 2 || subsystem_dim * subsystem_dim > DEFAULT_MAX_DIM {
                    return cfg_err(format!("subsystem dimension {subsystem_dim} out of range"));
                }
            }
        }
        for b in &self.beta_policies {
            let scheduled = matches!(self.kind, CampaignKind::QacIsing { .. });
            b.resolve(0.0, scheduled)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the worker count.
    pub fn config_hash(&self) -> String {
        let canonical = Self { workers: None, ..self.clone() };
        let json = serde_json::to_vec(&canonical).expect("campaign serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn run(&self) -> Result<CampaignResult> {
        self.validate()?;
        let ctx = cases::Context::new(self);
        let list = cases::expand(self)?;
        log::info!("{}: {} case(s)", self.kind.label(), list.len());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.unwrap_or(0))
            .build()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
        let outcomes: Vec<(String, Option<u64>, Option<String>, Result<RunRecord>)> = pool.install(|| {
            list.par_iter()
                .map(|c| (c.key(), c.seed(), c.instance(), c.run(&ctx)))
                .collect()
        });

        let mut records = Vec::new();
        let mut violations = Vec::new();
        for (key, seed, instance, outcome) in outcomes {
            match outcome {
                Ok(r) => records.push(r),
                Err(e @ Error::Configuration(_)) => return Err(e),
                Err(e) => {
                    log::error!("{key}: {e}");
                    violations.push(Violation { key, seed, instance, name: "run-error".into(), detail: e.to_string() });
                }
            }
        }
        records.sort_by(|a, b| a.provenance.key.cmp(&b.provenance.key));
        for r in &records {
            violations.extend(r.violations());
        }
        violations.sort_by(|a, b| (&a.key, &a.name).cmp(&(&b.key, &b.name)));
        let summary = Summary::from_records(&records, violations.len());
        Ok(CampaignResult {
            config_hash: self.config_hash(),
            campaign: self.clone(),
            records,
            violations,
            summary,
            metadata: Metadata::now(),
        })
    }
}

/// Closed-form two-level cases plus the null and eigenstate cases.
pub fn run_analytic_suite() -> Result<CampaignResult> {
    Campaign::analytic().run()
}

pub fn run_gue_ensemble(dim: usize, seeds: SeedRange, horizon_mult: f64) -> Result<CampaignResult> {
    Campaign::gue(dim, seeds, horizon_mult).run()
}

pub fn run_qac(problem: QacProblem, schedule: Schedule, total_times: &[f64]) -> Result<CampaignResult> {
    Campaign::qac(problem, schedule, total_times.to_vec()).run()
}

pub fn run_entanglement_compare(subsystem_dim: usize, seeds: SeedRange) -> Result<CampaignResult> {
    Campaign::entanglement(subsystem_dim, seeds).run()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub campaign: String,
    /// Unique, sortable case identifier.
    pub key: String,
    pub seed: Option<u64>,
    pub instance: Option<String>,
    pub config_hash: String,
}

/// A pass/fail assertion that is not an inequality margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    /// `|value − expected| ≤ tol`.
    pub fn close(name: impl Into<String>, value: f64, expected: f64, tol: f64) -> Self {
        let err = (value - expected).abs();
        Self::new(name, err <= tol, format!("value {value:.15e}, expected {expected:.15e}, error {err:.3e} (tol {tol:e})"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub provenance: Provenance,
    pub report: BoundReport,
    pub checks: Vec<Check>,
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(skip)]
    pub series: Option<Series>,
}

impl RunRecord {
    pub fn violations(&self) -> Vec<Violation> {
        let p = &self.provenance;
        let v = |name: &str, detail: String| Violation {
            key: p.key.clone(),
            seed: p.seed,
            instance: p.instance.clone(),
            name: name.to_string(),
            detail,
        };
        let mut out: Vec<Violation> = self
            .report
            .violations()
            .map(|m| {
                v(&m.name, format!("lhs {:e} > rhs {:?} + slack {:e} at t = {:?}", m.lhs, m.rhs, m.slack, m.at_time))
            })
            .collect();
        out.extend(self.checks.iter().filter(|c| !c.passed).map(|c| v(&c.name, c.detail.clone())));
        out
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.get(name).copied()
    }
}

/// Enough provenance to re-run the offending case alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub key: String,
    pub seed: Option<u64>,
    pub instance: Option<String>,
    pub name: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.key, self.name, self.detail)
    }
}

/// Nearest-rank quantiles of the evaluated margins `rhs − lhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub count: usize,
    pub not_triggered: usize,
    pub min: Option<f64>,
    pub p05: Option<f64>,
    pub median: Option<f64>,
    pub p95: Option<f64>,
    pub max: Option<f64>,
}

impl Quantiles {
    fn from_values(mut v: Vec<f64>, not_triggered: usize) -> Self {
        v.sort_by(f64::total_cmp);
        let q = |p: f64| -> Option<f64> {
            if v.is_empty() {
                return None;
            }
            let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
            Some(v[rank - 1])
        };
        Self {
            count: v.len(),
            not_triggered,
            min: v.first().copied(),
            p05: q(0.05),
            median: q(0.5),
            p95: q(0.95),
            max: v.last().copied(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub violations: usize,
    pub trigger_rates: BTreeMap<String, f64>,
    /// Keyed by margin name with numeric policy parameters dropped.
    pub margin_quantiles: BTreeMap<String, Quantiles>,
    pub statistics: BTreeMap<String, f64>,
}

/// `general[const(0.25)]` → `general[const]`.
pub fn margin_family(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut depth = 0usize;
    for ch in name.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ if depth == 0 => out.push(ch),
            _ => {}
        }
    }
    out
}

impl Summary {
    fn from_records(records: &[RunRecord], violations: usize) -> Self {
        let n = records.len();
        let rate = |f: &dyn Fn(&RunRecord) -> bool| {
            if n == 0 {
                0.0
            } else {
                records.iter().filter(|r| f(r)).count() as f64 / n as f64
            }
        };
        let mut trigger_rates = BTreeMap::new();
        trigger_rates.insert("orthogonal".into(), rate(&|r| r.report.measured_orth_time().is_some()));
        trigger_rates.insert("antipodal".into(), rate(&|r| r.report.measured_antipodal_time().is_some()));

        let mut groups: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        for r in records {
            for m in &r.report.margins {
                let entry = groups.entry(margin_family(&m.name)).or_default();
                match (m.status, m.margin) {
                    (MarginStatus::NotTriggered, _) => entry.1 += 1,
                    (_, Some(x)) => entry.0.push(x),
                    _ => {}
                }
            }
        }
        let margin_quantiles = groups
            .into_iter()
            .map(|(k, (v, nt))| (k, Quantiles::from_values(v, nt)))
            .collect();

        Self {
            runs: n,
            violations,
            trigger_rates,
            margin_quantiles,
            statistics: cases::statistics(records),
        }
    }
}

/// Run-specific values excluded from reproducibility comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generated_unix_seconds: u64,
    pub crate_version: String,
}

impl Metadata {
    fn now() -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self { generated_unix_seconds: secs, crate_version: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CampaignResult {
    pub campaign: Campaign,
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub violations: Vec<Violation>,
    pub summary: Summary,
    pub metadata: Metadata,
}

impl CampaignResult {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Fails with the first violation when any exist.
    pub fn check(&self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::CampaignFailure { count: self.violations.len(), first: v.to_string() }),
        }
    }

    pub fn record(&self, key: &str) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.provenance.key == key)
    }
}
