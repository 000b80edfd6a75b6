//! Interpolation schedules `f(τ)`, `g(τ)` and the optional extra profile `h(τ)`
//! on the rescaled time `τ = t/T ∈ [0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BOUNDARY_TOL: f64 = 1e-12;
const QUADRATURE_TOL: f64 = 1e-13;
const QUADRATURE_MAX_DEPTH: u32 = 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `f = 1 − τ`, `g = τ`.
    Linear,
    /// `f = 1 − τ^p`, `g = τ^p`.
    Poly { power: f64 },
    /// Piecewise-linear through `[τ, f, g]` knots.
    Tabulated { knots: Vec<[f64; 3]> },
}

/// Profile `h(τ)` multiplying the extra Hamiltonian term; vanishes at both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExtraProfile {
    /// `a·sin(πτ)`.
    Sine { amplitude: f64 },
    /// Piecewise-linear through `[τ, h]` knots.
    Tabulated { knots: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct Schedule {
    kind: ScheduleKind,
    extra: Option<ExtraProfile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ScheduleSpec {
    #[serde(flatten)]
    kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<ExtraProfile>,
}

impl TryFrom<ScheduleSpec> for Schedule {
    type Error = Error;

    fn try_from(spec: ScheduleSpec) -> Result<Self> {
        let s = Schedule::from_kind(spec.kind)?;
        match spec.h {
            Some(h) => s.with_extra(h),
            None => Ok(s),
        }
    }
}

impl From<Schedule> for ScheduleSpec {
    fn from(s: Schedule) -> Self {
        ScheduleSpec { kind: s.kind, h: s.extra }
    }
}

impl Schedule {
    pub fn linear() -> Self {
        Self { kind: ScheduleKind::Linear, extra: None }
    }

    pub fn poly(power: f64) -> Result<Self> {
        Self::from_kind(ScheduleKind::Poly { power })
    }

    pub fn tabulated(knots: Vec<[f64; 3]>) -> Result<Self> {
        Self::from_kind(ScheduleKind::Tabulated { knots })
    }

    pub fn from_kind(kind: ScheduleKind) -> Result<Self> {
        match &kind {
            ScheduleKind::Linear => {}
            ScheduleKind::Poly { power } => {
                if !(power.is_finite() && *power > 0.0) {
                    return Err(Error::invalid(format!("poly schedule power must be > 0, got {power}")));
                }
            }
            ScheduleKind::Tabulated { knots } => validate_knots(knots)?,
        }
        let s = Self { kind, extra: None };
        for note in s.notes() {
            log::warn!("{note}");
        }
        Ok(s)
    }

    /// Attaches the profile of the extra term.
    pub fn with_extra(mut self, extra: ExtraProfile) -> Result<Self> {
        match &extra {
            ExtraProfile::Sine { amplitude } => {
                if !amplitude.is_finite() {
                    return Err(Error::invalid("extra profile amplitude must be finite"));
                }
            }
            ExtraProfile::Tabulated { knots } => {
                let taus: Vec<f64> = knots.iter().map(|k| k[0]).collect();
                validate_taus(&taus)?;
                let (first, last) = (knots[0][1], knots[knots.len() - 1][1]);
                if first.abs() > BOUNDARY_TOL || last.abs() > BOUNDARY_TOL {
                    return Err(Error::invalid("extra profile must satisfy h(0) = 0 = h(1)"));
                }
                if knots.iter().any(|k| !k[1].is_finite()) {
                    return Err(Error::invalid("extra profile has non-finite values"));
                }
            }
        }
        self.extra = Some(extra);
        Ok(self)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn has_extra(&self) -> bool {
        self.extra.is_some()
    }

    pub fn f(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        match &self.kind {
            ScheduleKind::Linear => 1.0 - tau,
            ScheduleKind::Poly { power } => 1.0 - tau.powf(*power),
            ScheduleKind::Tabulated { knots } => interp(knots, tau, |k| k[1]),
        }
    }

    pub fn g(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        match &self.kind {
            ScheduleKind::Linear => tau,
            ScheduleKind::Poly { power } => tau.powf(*power),
            ScheduleKind::Tabulated { knots } => interp(knots, tau, |k| k[2]),
        }
    }

    pub fn h(&self, tau: f64) -> Option<f64> {
        let tau = tau.clamp(0.0, 1.0);
        self.extra.as_ref().map(|e| match e {
            ExtraProfile::Sine { amplitude } => amplitude * (std::f64::consts::PI * tau).sin(),
            ExtraProfile::Tabulated { knots } => interp(knots, tau, |k| k[1]),
        })
    }

    /// `∫₀^upto g(τ)dτ`; exact trapezoid for tabulated schedules, adaptive
    /// Simpson quadrature for the analytic presets.
    pub fn g_integral(&self, upto: f64) -> f64 {
        let upto = upto.clamp(0.0, 1.0);
        match &self.kind {
            ScheduleKind::Tabulated { knots } => trapezoid_upto(knots, upto),
            _ => adaptive_simpson(&|t| self.g(t), 0.0, upto, QUADRATURE_TOL),
        }
    }

    /// Non-fatal observations about the schedule.
    pub fn notes(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let ScheduleKind::Tabulated { knots } = &self.kind {
            if let Some(k) = knots.iter().find(|k| k[1] < 0.0) {
                out.push(format!("tabulated schedule has f < 0 (f({}) = {})", k[0], k[1]));
            }
        }
        out
    }

    /// Short label used in reports and file names.
    pub fn label(&self) -> String {
        match &self.kind {
            ScheduleKind::Linear => "linear".into(),
            ScheduleKind::Poly { power } => format!("poly{power}"),
            ScheduleKind::Tabulated { knots } => format!("tabulated{}", knots.len()),
        }
    }
}

fn validate_taus(taus: &[f64]) -> Result<()> {
    if taus.len() < 2 {
        return Err(Error::invalid("tabulated profile needs at least two knots"));
    }
    if taus.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("knot times must be finite"));
    }
    if taus[0].abs() > BOUNDARY_TOL || (taus[taus.len() - 1] - 1.0).abs() > BOUNDARY_TOL {
        return Err(Error::invalid("knot times must start at 0 and end at 1"));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("knot times must be strictly increasing"));
    }
    Ok(())
}

fn validate_knots(knots: &[[f64; 3]]) -> Result<()> {
    let taus: Vec<f64> = knots.iter().map(|k| k[0]).collect();
    validate_taus(&taus)?;
    if knots.iter().any(|k| !k[1].is_finite() || !k[2].is_finite()) {
        return Err(Error::invalid("schedule knots have non-finite values"));
    }
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if (first[1] - 1.0).abs() > BOUNDARY_TOL || first[2].abs() > BOUNDARY_TOL {
        return Err(Error::invalid("schedule must satisfy f(0) = 1 and g(0) = 0"));
    }
    if last[1].abs() > BOUNDARY_TOL || (last[2] - 1.0).abs() > BOUNDARY_TOL {
        return Err(Error::invalid("schedule must satisfy f(1) = 0 and g(1) = 1"));
    }
    if let Some(k) = knots.iter().find(|k| k[2] < 0.0) {
        return Err(Error::invalid(format!("g must be nonnegative, got g({}) = {}", k[0], k[2])));
    }
    Ok(())
}

fn interp<const N: usize>(knots: &[[f64; N]], tau: f64, value: impl Fn(&[f64; N]) -> f64) -> f64 {
    let idx = knots.partition_point(|k| k[0] <= tau);
    if idx == 0 {
        return value(&knots[0]);
    }
    if idx == knots.len() {
        return value(&knots[knots.len() - 1]);
    }
    let (a, b) = (&knots[idx - 1], &knots[idx]);
    let w = (tau - a[0]) / (b[0] - a[0]);
    value(a) + w * (value(b) - value(a))
}

fn trapezoid_upto(knots: &[[f64; 3]], upto: f64) -> f64 {
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if upto <= a[0] {
            break;
        }
        let end = upto.min(b[0]);
        let g_end = a[2] + (end - a[0]) / (b[0] - a[0]) * (b[2] - a[2]);
        total += 0.5 * (a[2] + g_end) * (end - a[0]);
    }
    total
}

pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, QUADRATURE_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
