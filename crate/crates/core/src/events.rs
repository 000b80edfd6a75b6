//! Detection of the first orthogonality time (`⟨ψ(t)|φ₀⟩ = 0`) and the first
//! antipodal time (`d(t, β = 0) = 2`, i.e. `⟨ψ(t)|φ₀⟩ = −1`).
//!
//! Both events are minima of a smooth functional of the overlap:
//! `|⟨ψ|φ₀⟩|²` and `1 + Re⟨ψ|φ₀⟩` respectively. Candidates are the local
//! minima of the sampled functional; each is refined by bisection on the sign
//! of the functional's time derivative, evaluated from a state re-integrated
//! from the nearest trajectory checkpoint. The derivative uses
//! `d/dt ⟨ψ|φ₀⟩ = (i/ℏ)⟨ψ|H(t)|φ₀⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::propagator::Trajectory;
use crate::qstate::{distance_from_overlap, C64};

/// Relative bracket width at which refinement stops.
const RELATIVE_BRACKET: f64 = 1e-9;
/// Sampled minima of `1 + Re⟨ψ|φ₀⟩` above this are not refined.
const ANTIPODAL_COARSE: f64 = 0.05;
/// Missed-crossing note threshold on the detection functional.
const NOTE_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Orthogonal,
    Antipodal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventQuery {
    pub kind: EventKind,
    /// Bound on `|⟨ψ|φ₀⟩|` (orthogonal) or `2 − d` (antipodal).
    pub tolerance: f64,
    pub refine_iterations: usize,
}

impl EventQuery {
    pub fn orthogonal() -> Self {
        Self { kind: EventKind::Orthogonal, tolerance: 1e-6, refine_iterations: 60 }
    }

    pub fn antipodal() -> Self {
        Self { kind: EventKind::Antipodal, tolerance: 1e-6, refine_iterations: 60 }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid(format!("event tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventResult {
    pub kind: EventKind,
    pub triggered: bool,
    pub time: Option<f64>,
    pub bracket_width: Option<f64>,
    /// Detection functional at the reported time, or at the best sample.
    pub functional_value: f64,
    /// Smallest `|⟨ψ|φ₀⟩|` (orthogonal) or largest `d(t, 0)` (antipodal) seen.
    pub extremum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Bracket widths after each bisection step of the accepted refinement.
    #[serde(skip)]
    pub refinement_widths: Vec<f64>,
}

pub fn first_orthogonal(traj: &Trajectory, h: &dyn Hamiltonian, q: &EventQuery) -> Result<EventResult> {
    detect(traj, h, &EventQuery { kind: EventKind::Orthogonal, ..*q })
}

pub fn first_antipodal(traj: &Trajectory, h: &dyn Hamiltonian, q: &EventQuery) -> Result<EventResult> {
    detect(traj, h, &EventQuery { kind: EventKind::Antipodal, ..*q })
}

/// Smooth functional, its derivative, and the detection value.
struct Probe {
    value: f64,
    slope: f64,
    detect: f64,
}

fn smooth(kind: EventKind, ov: C64) -> f64 {
    match kind {
        EventKind::Orthogonal => ov.norm_sqr(),
        EventKind::Antipodal => 1.0 + ov.re,
    }
}

fn detection(kind: EventKind, ov: C64) -> f64 {
    match kind {
        EventKind::Orthogonal => ov.norm(),
        EventKind::Antipodal => 2.0 - distance_from_overlap(ov),
    }
}

fn probe(traj: &Trajectory, h: &dyn Hamiltonian, kind: EventKind, t: f64) -> Result<Probe> {
    let psi = traj.state_at(h, t)?;
    let phi0 = traj.initial_state.amplitudes();
    let ov = psi.amplitudes().dotc(phi0);
    let op = h.at(t)?;
    let rate = C64::new(0.0, 1.0 / traj.hbar()) * psi.amplitudes().dotc(&(op.matrix() * phi0));
    let slope = match kind {
        EventKind::Orthogonal => 2.0 * (ov.conj() * rate).re,
        EventKind::Antipodal => rate.re,
    };
    Ok(Probe { value: smooth(kind, ov), slope, detect: detection(kind, ov) })
}

/// Scans for the first event of `q.kind` and refines it.
pub fn detect(traj: &Trajectory, h: &dyn Hamiltonian, q: &EventQuery) -> Result<EventResult> {
    q.validate()?;
    let kind = q.kind;
    let n = traj.len();
    let horizon = traj.horizon();
    let values: Vec<f64> = traj.overlaps.iter().map(|&ov| smooth(kind, ov)).collect();
    let detects: Vec<f64> = traj.overlaps.iter().map(|&ov| detection(kind, ov)).collect();
    let extremum = match kind {
        EventKind::Orthogonal => traj.overlaps.iter().map(|o| o.norm()).fold(f64::INFINITY, f64::min),
        EventKind::Antipodal => traj
            .overlaps
            .iter()
            .map(|&o| distance_from_overlap(o))
            .fold(0.0, f64::max),
    };
    let coarse = match kind {
        EventKind::Orthogonal => (2.0 * traj.overlap_rate * traj.dt + q.tolerance).powi(2),
        EventKind::Antipodal => ANTIPODAL_COARSE,
    };

    let mut best_detect = detects.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut note = None;

    for k in 1..n {
        let is_last = k + 1 == n;
        let local_min = values[k] < values[k - 1] && (is_last || values[k] <= values[k + 1]);
        if !local_min || values[k] > coarse.max(q.tolerance) {
            continue;
        }
        let lo = traj.times[k - 1];
        let hi = if is_last { traj.times[k] } else { traj.times[k + 1] };
        if let Some(refined) = refine(traj, h, q, lo, hi, horizon)? {
            best_detect = best_detect.min(refined.detect);
            if refined.detect <= q.tolerance {
                return Ok(EventResult {
                    kind,
                    triggered: true,
                    time: Some(refined.time),
                    bracket_width: Some(refined.width),
                    functional_value: refined.detect,
                    extremum: match kind {
                        EventKind::Orthogonal => extremum.min(refined.detect),
                        EventKind::Antipodal => extremum.max(2.0 - refined.detect),
                    },
                    note: None,
                    refinement_widths: refined.widths,
                });
            }
        } else if note.is_none() {
            note = Some(format!(
                "sampled minimum near t = {} has no derivative sign change; the grid may be too coarse",
                traj.times[k]
            ));
        }
    }

    if note.is_none() && best_detect > q.tolerance && best_detect <= NOTE_THRESHOLD {
        note = Some(format!(
            "closest approach {best_detect:e} lies between the tolerance and {NOTE_THRESHOLD:e}; \
             a narrow crossing may be missed at this step size"
        ));
    }
    Ok(EventResult {
        kind,
        triggered: false,
        time: None,
        bracket_width: None,
        functional_value: best_detect,
        extremum,
        note,
        refinement_widths: Vec::new(),
    })
}

struct Refined {
    time: f64,
    width: f64,
    detect: f64,
    widths: Vec<f64>,
}

/// Bisection on the derivative sign inside `[lo, hi]`; `None` when the
/// endpoints do not bracket a minimum.
fn refine(
    traj: &Trajectory,
    h: &dyn Hamiltonian,
    q: &EventQuery,
    mut lo: f64,
    mut hi: f64,
    horizon: f64,
) -> Result<Option<Refined>> {
    let kind = q.kind;
    let left = probe(traj, h, kind, lo)?;
    let right = probe(traj, h, kind, hi)?;
    if left.slope >= 0.0 {
        return Ok(None);
    }
    if right.slope < 0.0 {
        // Still descending at the end of the record.
        if hi >= horizon {
            return Ok(Some(Refined { time: hi, width: hi - lo, detect: right.detect, widths: vec![hi - lo] }));
        }
        return Ok(None);
    }
    let target = horizon * RELATIVE_BRACKET;
    let mut widths = Vec::new();
    for _ in 0..q.refine_iterations {
        if hi - lo <= target {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = probe(traj, h, kind, mid)?;
        if p.slope < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        widths.push(hi - lo);
        if p.value == 0.0 {
            break;
        }
    }
    let time = 0.5 * (lo + hi);
    let p = probe(traj, h, kind, time)?;
    Ok(Some(Refined { time, width: hi - lo, detect: p.detect, widths }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{random_hermitian, InterpolatedHamiltonian, Schedule};
    use crate::propagator::{evolve, BetaPolicy, IntegratorConfig};
    use crate::qstate::{HermitianOperator, StateVector};
    use std::f64::consts::PI;

    fn run(h: &HermitianOperator, psi: &StateVector, horizon: f64) -> Trajectory {
        evolve(h, psi, horizon, &IntegratorConfig::default(), &[BetaPolicy::Zero]).unwrap()
    }

    #[test]
    fn orthogonal_two_level() {
        let h = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        let traj = run(&h, &StateVector::uniform(2).unwrap(), 4.0);
        let ev = first_orthogonal(&traj, &h, &EventQuery::orthogonal()).unwrap();
        assert!(ev.triggered);
        assert!((ev.time.unwrap() - PI).abs() < 1e-7, "{:?}", ev.time);
        assert!(ev.functional_value <= 1e-6);
        assert!(ev.refinement_widths.windows(2).all(|w| w[1] < w[0]));
        assert!(ev.bracket_width.unwrap() <= 4.0 * 1e-9 || ev.refinement_widths.len() == 60);
    }

    #[test]
    fn orthogonal_not_triggered_cases() {
        let zero = HermitianOperator::zeros(2).unwrap();
        let traj = run(&zero, &StateVector::uniform(2).unwrap(), 4.0);
        let ev = first_orthogonal(&traj, &zero, &EventQuery::orthogonal()).unwrap();
        assert!(!ev.triggered);
        assert!((ev.functional_value - 1.0).abs() < 1e-12);

        let h = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        let eig = StateVector::basis(2, 1).unwrap();
        let traj = run(&h, &eig, 10.0);
        let ev = first_orthogonal(&traj, &h, &EventQuery::orthogonal()).unwrap();
        assert!(!ev.triggered);
        assert!(traj.survival.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn antipodal_two_level() {
        let h = HermitianOperator::diagonal(&[-0.5, 0.5]).unwrap();
        let traj = run(&h, &StateVector::uniform(2).unwrap(), 8.0);
        let ev = first_antipodal(&traj, &h, &EventQuery::antipodal()).unwrap();
        assert!(ev.triggered);
        assert!((ev.time.unwrap() - 2.0 * PI).abs() < 1e-6, "{:?}", ev.time);
        assert!((ev.extremum - 2.0).abs() < 1e-6);
    }

    #[test]
    fn antipodal_not_triggered_cases() {
        let h = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        let traj = run(&h, &StateVector::uniform(2).unwrap(), 8.0);
        let ev = first_antipodal(&traj, &h, &EventQuery::antipodal()).unwrap();
        assert!(!ev.triggered);
        assert!((ev.extremum - 2f64.sqrt()).abs() < 1e-6);

        let zero = HermitianOperator::zeros(2).unwrap();
        let traj = run(&zero, &StateVector::uniform(2).unwrap(), 8.0);
        let ev = first_antipodal(&traj, &zero, &EventQuery::antipodal()).unwrap();
        assert!(!ev.triggered);
        assert!(ev.extremum < 1e-7);
    }

    #[test]
    fn fresh_integration_confirms_orthogonality() {
        // ⟨ψ(t)|φ₀⟩ = e^{it}cos²(t/2): a double zero at π, so the time is only
        // pinned to ~√(round-off) while the overlap itself is tiny.
        let h = HermitianOperator::diagonal(&[0.0, 1.0, 2.0]).unwrap();
        let psi = StateVector::from_real(&[0.5, std::f64::consts::FRAC_1_SQRT_2, 0.5]).unwrap();
        let cfg = IntegratorConfig::default();
        let traj = evolve(&h, &psi, 4.0, &cfg, &[]).unwrap();
        let ev = first_orthogonal(&traj, &h, &EventQuery::orthogonal()).unwrap();
        assert!(ev.triggered, "{ev:?}");
        let t = ev.time.unwrap();
        assert!((t - PI).abs() < 1e-3);
        let fresh = evolve(&h, &psi, t, &cfg.refined(4), &[]).unwrap();
        assert!(fresh.overlaps.last().unwrap().norm() <= 1e-6);
    }

    #[test]
    fn antipodal_is_preceded_by_orthogonal_grade_distance() {
        for seed in 0..20 {
            let h = random_hermitian(2, seed).unwrap();
            let psi = StateVector::random_seeded(2, 500 + seed).unwrap();
            let traj = run(&h, &psi, 20.0);
            let ev = first_antipodal(&traj, &h, &EventQuery::antipodal()).unwrap();
            if let Some(t) = ev.time {
                let d = &traj.traces[0].distances;
                let reached = traj.times.iter().zip(d).any(|(&s, &dist)| s <= t && dist >= 2f64.sqrt());
                assert!(reached, "seed {seed}");
            }
        }
    }

    #[test]
    fn qac_orthogonality_is_refined_with_reintegration() {
        // Single-qubit QAC into σ_z-like problem; look for orthogonality if it occurs.
        let hp = HermitianOperator::diagonal(&[-2.0, 2.0]).unwrap();
        let ih = InterpolatedHamiltonian::qac(hp, Schedule::linear(), 6.0).unwrap();
        let g = ih.initial_ground_state().unwrap();
        let traj = evolve(&ih, &g, 6.0, &IntegratorConfig::default(), &[]).unwrap();
        let ev = first_orthogonal(&traj, &ih, &EventQuery::orthogonal()).unwrap();
        if ev.triggered {
            let t = ev.time.unwrap();
            let s = traj.state_at(&ih, t).unwrap();
            assert!(s.amplitudes().dotc(g.amplitudes()).norm() <= 1e-6);
        } else {
            assert!(ev.functional_value > 1e-6);
        }
    }

    #[test]
    fn rejects_bad_tolerance() {
        let h = HermitianOperator::diagonal(&[0.0, 1.0]).unwrap();
        let traj = run(&h, &StateVector::uniform(2).unwrap(), 1.0);
        assert!(detect(&traj, &h, &EventQuery::orthogonal().with_tolerance(0.0)).is_err());
    }
}
