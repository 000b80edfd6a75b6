//! Characteristic times, survival lower bounds and inequality margins.
//!
//! Every check is recorded as a [`Margin`] with `lhs ≤ rhs + slack` as the
//! satisfaction criterion. Checks that depend on an event that never happened
//! within the horizon are recorded as [`MarginStatus::NotTriggered`]: the
//! bounds are necessary conditions and say nothing about whether an event
//! occurs.

use std::fmt;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::events::{EventKind, EventResult};
use crate::hamiltonian::Schedule;
use crate::propagator::{BetaPolicy, Trajectory};
use crate::qstate::{expectation, variance_sqrt, HermitianOperator, StateVector};

/// Energy and energy spread of a state with respect to an operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub energy: f64,
    pub spread: f64,
}

impl MomentPair {
    pub fn new(energy: f64, spread: f64) -> Result<Self> {
        if !energy.is_finite() || !spread.is_finite() || spread < 0.0 {
            return Err(Error::invalid(format!("invalid moments: energy {energy}, spread {spread}")));
        }
        Ok(Self { energy, spread })
    }

    /// `(⟨s|H|s⟩, ‖(H − E)s‖)`.
    pub fn of(op: &HermitianOperator, state: &StateVector) -> Result<Self> {
        Self::new(expectation(op, state)?, variance_sqrt(op, state)?)
    }

    /// `√(ΔE² + E²)`, the norm of `H|s⟩`.
    pub fn magnitude(&self) -> f64 {
        self.spread.hypot(self.energy)
    }

    /// `√(ΔE² + (E − β)²)`, the norm of `(H − β)|s⟩`.
    pub fn shifted_magnitude(&self, beta: f64) -> f64 {
        self.spread.hypot(self.energy - beta)
    }
}

/// A positive time, or no bound at all.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeBound {
    Finite(f64),
    Unbounded,
}

impl TimeBound {
    fn from_ratio(num: f64, den: f64) -> Self {
        if den > 0.0 {
            TimeBound::Finite(num / den)
        } else {
            TimeBound::Unbounded
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            TimeBound::Finite(t) => Some(t),
            TimeBound::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, TimeBound::Unbounded)
    }

    /// Finite value, or `+∞`.
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for TimeBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeBound::Finite(t) => write!(f, "{t}"),
            TimeBound::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for TimeBound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TimeBound::Finite(t) => s.serialize_f64(*t),
            TimeBound::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for TimeBound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) if t.is_finite() && t > 0.0 => Ok(TimeBound::Finite(t)),
            Raw::Num(t) => Err(serde::de::Error::custom(format!("time bound must be positive, got {t}"))),
            Raw::Str(s) if s == "unbounded" => Ok(TimeBound::Unbounded),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unknown time bound `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTimes {
    /// Lower bound on the time to reach any state, including `−φ₀`.
    pub t_any: TimeBound,
    /// Lower bound on the time to reach an orthogonal state.
    pub t_orth: TimeBound,
}

/// `T_∀ = 2ℏ/√(ΔE² + E²)`, `T_⊥ = ℏ√2/ΔE`.
pub fn char_times_ti(m: &MomentPair, hbar: f64) -> CharacteristicTimes {
    CharacteristicTimes {
        t_any: TimeBound::from_ratio(2.0 * hbar, m.magnitude()),
        t_orth: TimeBound::from_ratio(SQRT_2 * hbar, m.spread),
    }
}

/// Interpolated-generator times: the denominators carry `∫₀¹ g(τ) dτ`.
pub fn char_times_qac(m: &MomentPair, g_integral: f64, hbar: f64) -> Result<CharacteristicTimes> {
    if !(g_integral.is_finite() && g_integral > 0.0) {
        return Err(Error::invalid(format!("schedule integral must be positive, got {g_integral}")));
    }
    Ok(CharacteristicTimes {
        t_any: TimeBound::from_ratio(2.0 * hbar, g_integral * m.magnitude()),
        t_orth: TimeBound::from_ratio(SQRT_2 * hbar, g_integral * m.spread),
    })
}

/// Round-off allowance on the vacuity threshold, so `ΔE·t = √2ℏ` is not flagged.
const VACUOUS_ROUNDOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalBound {
    pub value: f64,
    /// The parenthesis went negative; `value` is clamped to 0.
    pub vacuous: bool,
}

fn survival_from_action(action: f64, spread: f64, hbar: f64) -> SurvivalBound {
    let x = spread * spread * action * action / (2.0 * hbar * hbar);
    if x > 1.0 + VACUOUS_ROUNDOFF {
        SurvivalBound { value: 0.0, vacuous: true }
    } else {
        let p = (1.0 - x).max(0.0);
        SurvivalBound { value: p * p, vacuous: false }
    }
}

/// `(1 − ΔE²t²/(2ℏ²))²`, clamped to 0 past `t = T_⊥`.
pub fn survival_lower_bound_ti(t: f64, spread: f64, hbar: f64) -> SurvivalBound {
    survival_from_action(t, spread, hbar)
}

/// As [`survival_lower_bound_ti`] with `t` replaced by `∫₀ᵗ g(τ/T) dτ`.
pub fn survival_lower_bound_qac(
    t: f64,
    spread_p: f64,
    sched: &Schedule,
    total_time: f64,
    hbar: f64,
) -> Result<SurvivalBound> {
    if !(total_time.is_finite() && total_time > 0.0) {
        return Err(Error::invalid(format!("total time must be positive, got {total_time}")));
    }
    if !(t >= 0.0 && t <= total_time * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!("time {t} outside [0, {total_time}]")));
    }
    let action = total_time * sched.g_integral(t / total_time);
    Ok(survival_from_action(action, spread_p, hbar))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayDiagnostic {
    pub bound: f64,
    /// `t√(ΔE² + E²) ≤ 0.1ℏ`.
    pub regime_ok: bool,
}

/// `exp(−ΔE²t²/ℏ²)`. Diagnostic only; not a rigorous bound.
pub fn exp_decay_diagnostic(t: f64, spread: f64, energy: f64, hbar: f64) -> DecayDiagnostic {
    DecayDiagnostic {
        bound: (-(spread * t / hbar).powi(2)).exp(),
        regime_ok: t * spread.hypot(energy) <= 0.1 * hbar,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundContext {
    TimeIndependent,
    Qac,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginStatus {
    Satisfied,
    Violated,
    NotTriggered,
}

/// One inequality `lhs ≤ rhs`, evaluated with slack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub lhs: f64,
    pub rhs: Option<f64>,
    /// `rhs − lhs`.
    pub margin: Option<f64>,
    pub slack: f64,
    pub status: MarginStatus,
    /// Time at which the tightest sample or the event occurred.
    pub at_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Margin {
    fn evaluated(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64, at_time: Option<f64>) -> Self {
        let status = if lhs <= rhs + slack { MarginStatus::Satisfied } else { MarginStatus::Violated };
        Self {
            name: name.into(),
            lhs,
            rhs: Some(rhs),
            margin: Some(rhs - lhs),
            slack,
            status,
            at_time,
            note: None,
        }
    }

    fn not_triggered(name: impl Into<String>, lhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs: None,
            margin: None,
            slack: 0.0,
            status: MarginStatus::NotTriggered,
            at_time: None,
            note: Some("not triggered within horizon; consistent".into()),
        }
    }

    pub fn is_violated(&self) -> bool {
        self.status == MarginStatus::Violated
    }
}

/// Detected events for one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub orthogonal: Option<EventResult>,
    pub antipodal: Option<EventResult>,
}

impl EventSet {
    fn triggered(ev: &Option<EventResult>) -> Option<(f64, f64)> {
        ev.as_ref()
            .filter(|e| e.triggered)
            .and_then(|e| e.time.map(|t| (t, e.bracket_width.unwrap_or(0.0))))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub context: BoundContext,
    pub moments: MomentPair,
    pub characteristic_times: CharacteristicTimes,
    pub events: EventSet,
    pub margins: Vec<Margin>,
    /// Largest integrator slack over the recorded β-policies.
    pub numerical_slack: f64,
}

impl BoundReport {
    pub fn violations(&self) -> impl Iterator<Item = &Margin> {
        self.margins.iter().filter(|m| m.is_violated())
    }

    pub fn is_consistent(&self) -> bool {
        self.violations().next().is_none()
    }

    pub fn margin(&self, name: &str) -> Option<&Margin> {
        self.margins.iter().find(|m| m.name == name)
    }

    pub fn measured_orth_time(&self) -> Option<f64> {
        EventSet::triggered(&self.events.orthogonal).map(|(t, _)| t)
    }

    pub fn measured_antipodal_time(&self) -> Option<f64> {
        EventSet::triggered(&self.events.antipodal).map(|(t, _)| t)
    }
}

/// Evaluates every applicable inequality on `traj`.
///
/// `moments` are `(E₀, ΔE₀)` of the generator on the initial state for
/// [`BoundContext::TimeIndependent`], and `(E_P, Δ_P E)` of the problem
/// operator on the initial state for [`BoundContext::Qac`].
pub fn check_inequalities(
    traj: &Trajectory,
    moments: MomentPair,
    events: EventSet,
    context: BoundContext,
) -> Result<BoundReport> {
    if let Some(e) = &events.orthogonal {
        if e.kind != EventKind::Orthogonal {
            return Err(Error::invalid("orthogonal slot holds an antipodal event"));
        }
    }
    if let Some(e) = &events.antipodal {
        if e.kind != EventKind::Antipodal {
            return Err(Error::invalid("antipodal slot holds an orthogonal event"));
        }
    }
    let hbar = traj.hbar();
    let mut margins = Vec::new();

    let characteristic_times = match context {
        BoundContext::TimeIndependent => {
            if !traj.static_generator {
                return Err(Error::invalid("time-independent bounds requested for a time-dependent run"));
            }
            let ct = char_times_ti(&moments, hbar);
            time_form_checks(&ct, &events, &mut margins);
            survival_check(traj, &mut margins, "survival", |t| Ok(survival_lower_bound_ti(t, moments.spread, hbar)))?;
            ct
        }
        BoundContext::Qac => {
            let (sched, total) = traj
                .schedule
                .as_ref()
                .ok_or_else(|| Error::invalid("interpolation bounds requested for a run without a schedule"))?;
            let ct = char_times_qac(&moments, sched.g_integral(1.0), hbar)?;
            action_form_checks(traj, sched, *total, &moments, &events, &mut margins);
            survival_check(traj, &mut margins, "survival-qac", |t| {
                survival_lower_bound_qac(t.min(*total), moments.spread, sched, *total, hbar)
            })?;
            ct
        }
    };

    general_checks(traj, &events, &mut margins);

    Ok(BoundReport {
        context,
        moments,
        characteristic_times,
        events,
        margins,
        numerical_slack: traj.max_slack(),
    })
}

/// `T_∀ ≤ Δt_∀` and `T_⊥ ≤ Δt_⊥`, with one bracket width of slack.
fn time_form_checks(ct: &CharacteristicTimes, events: &EventSet, out: &mut Vec<Margin>) {
    out.push(match EventSet::triggered(&events.antipodal) {
        Some((t, w)) => Margin::evaluated("antipodal-time", ct.t_any.value(), t, w, Some(t)),
        None => Margin::not_triggered("antipodal-time", ct.t_any.value()),
    });
    out.push(match EventSet::triggered(&events.orthogonal) {
        Some((t, w)) => Margin::evaluated("orthogonal-time", ct.t_orth.value(), t, w, Some(t)),
        None => Margin::not_triggered("orthogonal-time", ct.t_orth.value()),
    });
}

/// `2ℏ ≤ √(Δ_P E² + E_P²)·∫₀^{t∀} g` and `ℏ√2 ≤ Δ_P E·∫₀^{t⊥} g`.
fn action_form_checks(
    traj: &Trajectory,
    sched: &Schedule,
    total: f64,
    m: &MomentPair,
    events: &EventSet,
    out: &mut Vec<Margin>,
) {
    let hbar = traj.hbar();
    let g_max = (0..=256).map(|k| sched.g(k as f64 / 256.0)).fold(0.0, f64::max);
    let action = |t: f64| total * sched.g_integral((t / total).min(1.0));
    out.push(match EventSet::triggered(&events.antipodal) {
        Some((t, w)) => {
            let rate = m.magnitude();
            Margin::evaluated("qac-antipodal", 2.0 * hbar, rate * action(t), rate * g_max * w, Some(t))
        }
        None => Margin::not_triggered("qac-antipodal", 2.0 * hbar),
    });
    out.push(match EventSet::triggered(&events.orthogonal) {
        Some((t, w)) => {
            let rate = m.spread;
            Margin::evaluated("qac-orthogonal", SQRT_2 * hbar, rate * action(t), rate * g_max * w, Some(t))
        }
        None => Margin::not_triggered("qac-orthogonal", SQRT_2 * hbar),
    });
}

/// Pointwise `P(t) ≥ bound(t)`, reported at the tightest sample.
fn survival_check<F>(traj: &Trajectory, out: &mut Vec<Margin>, name: &str, bound: F) -> Result<()>
where
    F: Fn(f64) -> Result<SurvivalBound>,
{
    let slack = traj.max_slack();
    let mut worst: Option<(f64, f64, f64)> = None;
    for (&t, &p) in traj.times.iter().zip(&traj.survival) {
        let b = bound(t)?.value;
        if worst.is_none_or(|(lhs, rhs, _)| p - b < rhs - lhs) {
            worst = Some((b, p, t));
        }
    }
    if let Some((lhs, rhs, t)) = worst {
        out.push(Margin::evaluated(name, lhs, rhs, slack, Some(t)));
    }
    Ok(())
}

/// The master inequality `ℏd(t, β) ≤ ∫₀ᵗ‖(H − β)φ₀‖` at every sample, plus its
/// event forms `ℏ√2 ≤ rhs(t⊥)` for every β and `2ℏ ≤ rhs(t∀)` for `β = 0`.
fn general_checks(traj: &Trajectory, events: &EventSet, out: &mut Vec<Margin>) {
    let hbar = traj.hbar();
    for tr in &traj.traces {
        let slack = traj.slack(tr);
        let label = tr.policy.label();
        let k = (0..traj.len())
            .min_by(|&a, &b| {
                let ma = tr.rhs_integrals[a] - hbar * tr.distances[a];
                let mb = tr.rhs_integrals[b] - hbar * tr.distances[b];
                ma.total_cmp(&mb)
            })
            .unwrap_or(0);
        out.push(Margin::evaluated(
            format!("general[{label}]"),
            hbar * tr.distances[k],
            tr.rhs_integrals[k],
            slack,
            Some(traj.times[k]),
        ));

        let name = format!("general-orthogonal[{label}]");
        out.push(match EventSet::triggered(&events.orthogonal) {
            Some((t, w)) => {
                let rhs = traj.interpolate(&tr.rhs_integrals, t);
                Margin::evaluated(name, SQRT_2 * hbar, rhs, slack + w * tr.max_integrand, Some(t))
            }
            None => Margin::not_triggered(name, SQRT_2 * hbar),
        });

        if tr.policy == BetaPolicy::Zero {
            let name = format!("general-antipodal[{label}]");
            out.push(match EventSet::triggered(&events.antipodal) {
                Some((t, w)) => {
                    let rhs = traj.interpolate(&tr.rhs_integrals, t);
                    Margin::evaluated(name, 2.0 * hbar, rhs, slack + w * tr.max_integrand, Some(t))
                }
                None => Margin::not_triggered(name, 2.0 * hbar),
            });
        }
    }
}
