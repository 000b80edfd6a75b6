use std::f64::consts::SQRT_2;

use teur_core::bounds::MarginStatus;
use teur_core::hamiltonian::{IsingInstance, Schedule};
use teur_core::harness::{
    run_analytic_suite, run_entanglement_compare, run_gue_ensemble, run_qac, Campaign, QacProblem, SeedRange,
    SummaryFile,
};

fn seeds(a: u64, b: u64) -> SeedRange {
    SeedRange::new(a, b).unwrap()
}

#[test]
fn analytic_suite_is_clean() {
    let r = run_analytic_suite().unwrap();
    assert!(r.is_clean(), "{:#?}", r.violations);
    assert_eq!(r.records.len(), 4);
    let orth = r.record("analytic/orthogonal").unwrap();
    assert!((orth.report.measured_orth_time().unwrap() - std::f64::consts::PI).abs() < 1e-6);
    let eig = r.record("analytic/eigenstate").unwrap();
    for name in ["orthogonal-time", "antipodal-time"] {
        assert_eq!(eig.report.margin(name).unwrap().status, MarginStatus::NotTriggered);
    }
}

#[test]
fn gue_ensemble_dim2_is_clean() {
    let r = run_gue_ensemble(2, seeds(0, 100), 4.0).unwrap();
    assert!(r.is_clean(), "{:#?}", r.violations);
    assert_eq!(r.summary.runs, 100);
    assert!(r.summary.trigger_rates["orthogonal"] >= 0.0);
}

#[test]
fn gue_ensemble_dim8_is_clean() {
    let r = run_gue_ensemble(8, seeds(0, 50), 4.0).unwrap();
    assert!(r.is_clean(), "{:#?}", r.violations);
    assert!(r.summary.margin_quantiles.contains_key("general[const]"));
}

#[test]
fn qac_single_qubit_times() {
    let r = run_qac(QacProblem::SingleQubit, Schedule::linear(), &[1.0, 4.0, 16.0]).unwrap();
    assert!(r.is_clean(), "{:#?}", r.violations);
    for rec in &r.records {
        let ct = rec.report.characteristic_times;
        assert!((ct.t_any.value() - 4.0 * SQRT_2).abs() < 1e-12);
        assert!((ct.t_orth.value() - 4.0 * SQRT_2).abs() < 1e-12);
    }
}

#[test]
fn qac_chain_moments_match_oracle() {
    let inst = IsingInstance::chain(3, -1.0).unwrap();
    let r = run_qac(QacProblem::Ising { instance: inst }, Schedule::linear(), &[1.0, 4.0, 16.0]).unwrap();
    assert!(r.is_clean(), "{:#?}", r.violations);
    for rec in &r.records {
        assert!(rec.checks.iter().any(|c| c.name == "moments-oracle[spread]" && c.passed));
    }
}

#[test]
fn qac_long_anneal_reaches_ground_space() {
    let r = run_qac(QacProblem::SingleQubit, Schedule::linear(), &[200.0]).unwrap();
    assert!(r.is_clean(), "{:#?}", r.violations);
    let rec = &r.records[0];
    assert!(rec.diagnostic("ground_overlap").unwrap() > 0.9);
    assert!(rec.diagnostic("final_survival").unwrap() < 0.6);
}

#[test]
fn entanglement_compare_reports_statistics() {
    let r = run_entanglement_compare(2, seeds(0, 5)).unwrap();
    assert!(r.is_clean(), "{:#?}", r.violations);
    assert_eq!(r.records.len(), 15);
    assert!(r.summary.statistics.contains_key("spread_half_life_correlation"));
    assert_eq!(r.summary.statistics["half_life_rate[anti-aligned]"], 0.0);
}

#[test]
fn results_are_deterministic_and_written() {
    let c = Campaign::gue(3, seeds(0, 6), 4.0).with_series(true);
    let a = c.clone().with_workers(Some(1)).run().unwrap();
    let b = c.with_workers(Some(3)).run().unwrap();
    assert_eq!(
        serde_json::to_string(&a.summary).unwrap(),
        serde_json::to_string(&b.summary).unwrap()
    );
    let dir = tempfile::tempdir().unwrap();
    let path = a.write(dir.path()).unwrap();
    let back = SummaryFile::read(&path).unwrap();
    assert_eq!(back.comparable(), b.summary_file().comparable());
    assert!(dir.path().join("runs.csv").exists());
    assert!(dir.path().join("summary.csv").exists());
    assert_eq!(std::fs::read_dir(dir.path().join("reports")).unwrap().count(), 6);
    assert_eq!(std::fs::read_dir(dir.path().join("series")).unwrap().count(), 6);
}

#[test]
fn campaign_file_errors_carry_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"kind\": \"gue-ensemble\",\n  \"dim\": \"eight\"\n}").unwrap();
    let err = Campaign::from_json_file(&path).unwrap_err().to_string();
    assert!(err.contains("bad.json") && err.contains("line "), "{err}");
}
