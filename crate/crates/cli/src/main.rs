//! `teur`: batch driver for the bound-verification campaigns.
//!
//! Exit codes: 0 when every asserted inequality holds, 1 on any violation
//! (outputs are written first), 2 on configuration or input errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use teur_core::bounds::{
    check_inequalities, exp_decay_diagnostic, survival_lower_bound_ti, BoundContext, EventSet, MomentPair,
};
use teur_core::events::{first_antipodal, first_orthogonal, EventQuery};
use teur_core::hamiltonian::{random_hermitian, IsingInstance, Schedule};
use teur_core::harness::{
    BetaChoice, Campaign, CampaignKind, CampaignResult, QacProblem, SeedRange, SummaryFile, DEFAULT_HORIZON_MULT,
};
use teur_core::propagator::{evolve, IntegratorConfig, Method};
use teur_core::qstate::{HermitianOperator, StateVector};

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "teur", version, about = "Time-energy uncertainty bound verification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Output directory.
    #[arg(long, global = true, env = "TEUR_OUT_DIR", default_value = "teur-out")]
    out: PathBuf,
    /// Maximum time step (overrides --steps).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Equal steps per horizon.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Value of ℏ; all energies and times are in ℏ-relative units.
    #[arg(long, global = true)]
    hbar: Option<f64>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Per-step norm drift tolerance.
    #[arg(long, global = true)]
    norm_tolerance: Option<f64>,
    /// Event refinement tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// β-policies: zero, mean, const:<x>, sched:<x> (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    beta: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Also write per-sample series for plotting.
    #[arg(long, global = true)]
    series: bool,
    /// More logging (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Midpoint,
    Rk4,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the analytic suite, a campaign file, or every default suite.
    Verify {
        #[arg(long, conflicts_with = "campaign")]
        analytic: bool,
        #[arg(long)]
        campaign: Option<PathBuf>,
    },
    /// Interpolated runs from the transverse driver to a problem operator.
    Qac {
        /// Ising instance JSON file.
        #[arg(long, conflicts_with = "preset")]
        instance: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// linear, poly:<p>, or a schedule JSON file.
        #[arg(long, default_value = "linear")]
        schedule: String,
        /// Total times.
        #[arg(long = "T", value_delimiter = ',', default_value = "1,4,16")]
        total_times: Vec<f64>,
    },
    /// Measured survival against its lower bound for one static run.
    Decay {
        /// Random operator dimension; omit for the two-level case diag(0, 1).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Horizon; defaults to twice the orthogonality time.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Random-matrix ensemble.
    Ensemble {
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value = "0..50")]
        seeds: String,
        #[arg(long, default_value_t = DEFAULT_HORIZON_MULT)]
        horizon_mult: f64,
        /// Shift each operator so its ground energy is 0.
        #[arg(long)]
        shift_ground: bool,
    },
    /// Product against entangled states of two noninteracting subsystems.
    Entangle {
        #[arg(long, default_value_t = 2)]
        subsystem_dim: usize,
        #[arg(long, default_value = "0..20")]
        seeds: String,
    },
    /// Print a results summary, or compare two for reproducibility.
    Report {
        /// Results directory or summary.json.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    SingleQubit,
    Chain3,
}

/// Outcome of a subcommand that ran to completion.
enum Outcome {
    Clean,
    Violations,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.global.quiet, cli.global.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Violations) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    if !matches!(cli.command, Command::Report { .. }) {
        println!("# units: hbar = {} (energies and times are hbar-relative)", g.hbar.unwrap_or(1.0));
    }
    match &cli.command {
        Command::Verify { analytic, campaign } => {
            if let Some(path) = campaign {
                let c = Campaign::from_json_file(path).map_err(config)?;
                let c = apply_overrides(c, g)?;
                return finish(&[run_named("campaign", &c, g)?]);
            }
            let mut suites = vec![("analytic", Campaign::analytic())];
            if !analytic {
                suites.extend(default_suites()?);
            }
            let mut results = Vec::new();
            for (name, c) in suites {
                let c = apply_overrides(c, g)?;
                results.push(run_named(name, &c, g)?);
            }
            finish(&results)
        }
        Command::Qac { instance, preset, schedule, total_times } => {
            let problem = match (instance, preset) {
                (Some(path), _) => QacProblem::Ising { instance: read_instance(path)? },
                (None, Some(Preset::Chain3)) => QacProblem::Ising { instance: IsingInstance::chain(3, -1.0)? },
                (None, Some(Preset::SingleQubit) | None) => QacProblem::SingleQubit,
            };
            let c = Campaign::qac(problem, parse_schedule(schedule)?, total_times.clone());
            finish(&[run_named("qac", &apply_overrides(c, g)?, g)?])
        }
        Command::Ensemble { dim, seeds, horizon_mult, shift_ground } => {
            let c = Campaign::new(CampaignKind::GueEnsemble {
                dim: *dim,
                seeds: parse_seeds(seeds)?,
                horizon_mult: *horizon_mult,
                shift_ground: *shift_ground,
            });
            finish(&[run_named("ensemble", &apply_overrides(c, g)?, g)?])
        }
        Command::Entangle { subsystem_dim, seeds } => {
            let c = Campaign::entanglement(*subsystem_dim, parse_seeds(seeds)?);
            let (_, r) = run_named("entangle", &apply_overrides(c, g)?, g)?;
            for (k, v) in &r.summary.statistics {
                println!("{k} = {v:.6}");
            }
            finish(&[(g.out.join("entangle"), r)])
        }
        Command::Decay { dim, seed, horizon } => decay(g, *dim, *seed, *horizon),
        Command::Report { input, compare } => report(input, compare.as_deref()),
    }
}

fn config(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow::anyhow!("{e}")
}

fn default_suites() -> Result<Vec<(&'static str, Campaign)>> {
    let seeds = |a, b| SeedRange::new(a, b).map_err(config);
    Ok(vec![
        ("gue-d2", Campaign::gue(2, seeds(0, 100)?, DEFAULT_HORIZON_MULT)),
        ("gue-d8", Campaign::gue(8, seeds(0, 50)?, DEFAULT_HORIZON_MULT)),
        ("qac-single-qubit", Campaign::qac(QacProblem::SingleQubit, Schedule::linear(), vec![1.0, 4.0, 16.0])),
        (
            "qac-chain3",
            Campaign::qac(
                QacProblem::Ising { instance: IsingInstance::chain(3, -1.0)? },
                Schedule::linear(),
                vec![1.0, 4.0, 16.0],
            ),
        ),
    ])
}

fn integrator(g: &Global, base: IntegratorConfig) -> Result<IntegratorConfig> {
    let mut cfg = base;
    if let Some(n) = g.steps {
        cfg = cfg.with_steps(n);
    }
    if let Some(dt) = g.dt {
        cfg = cfg.with_dt(dt);
    }
    if let Some(h) = g.hbar {
        cfg = cfg.with_hbar(h);
    }
    if let Some(tol) = g.norm_tolerance {
        cfg = cfg.with_norm_tolerance(tol);
    }
    if let Some(m) = g.method {
        cfg = cfg.with_method(match m {
            MethodArg::Midpoint => Method::MidpointExponential,
            MethodArg::Rk4 => Method::Rk4,
        });
    }
    cfg.validate().map_err(config)?;
    Ok(cfg)
}

fn apply_overrides(mut c: Campaign, g: &Global) -> Result<Campaign> {
    c.integrator = integrator(g, c.integrator)?;
    if !g.beta.is_empty() {
        let betas = g
            .beta
            .iter()
            .map(|s| s.parse::<BetaChoice>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(config)?;
        c = c.with_betas(betas);
    }
    if g.workers.is_some() {
        c = c.with_workers(g.workers);
    }
    if let Some(tol) = g.tolerance {
        c.event_tolerance = tol;
    }
    if g.series {
        c = c.with_series(true);
    }
    c.validate().map_err(config)?;
    Ok(c)
}

fn parse_seeds(s: &str) -> Result<SeedRange> {
    s.parse().map_err(config)
}

fn parse_schedule(s: &str) -> Result<Schedule> {
    if s == "linear" {
        return Ok(Schedule::linear());
    }
    if let Some(p) = s.strip_prefix("poly:") {
        let p: f64 = p.parse().map_err(|_| config(format!("bad schedule power `{p}`")))?;
        return Schedule::poly(p).map_err(config);
    }
    let text = fs::read_to_string(s).map_err(|e| config(format!("schedule `{s}`: {e}")))?;
    serde_json::from_str(&text).map_err(|e| config(format!("{s}: {e}")))
}

fn read_instance(path: &Path) -> Result<IsingInstance> {
    let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn run_named(name: &str, c: &Campaign, g: &Global) -> Result<(PathBuf, CampaignResult)> {
    info!("running {name} ({})", c.kind.label());
    let result = c.run()?;
    let dir = g.out.join(name);
    let summary = result
        .write(&dir)
        .with_context(|| format!("writing results to {}", dir.display()))?;
    println!(
        "{name}: {} run(s), {} violation(s), orthogonal trigger rate {:.3} -> {}",
        result.summary.runs,
        result.violations.len(),
        result.summary.trigger_rates.get("orthogonal").copied().unwrap_or(0.0),
        summary.display()
    );
    Ok((dir, result))
}

fn finish(results: &[(PathBuf, CampaignResult)]) -> Result<Outcome> {
    let mut dirty = false;
    for (dir, r) in results {
        for v in &r.violations {
            dirty = true;
            let stem = teur_core::harness::file_stem(&v.key);
            eprintln!("violation: {v}");
            eprintln!("  report: {}", dir.join("reports").join(format!("{stem}.json")).display());
        }
    }
    Ok(if dirty { Outcome::Violations } else { Outcome::Clean })
}

fn decay(g: &Global, dim: Option<usize>, seed: u64, horizon: Option<f64>) -> Result<Outcome> {
    let cfg = integrator(g, IntegratorConfig::default())?;
    let hbar = cfg.hbar;
    let (h, psi) = match dim {
        None => (HermitianOperator::diagonal(&[0.0, 1.0])?, StateVector::uniform(2)?),
        Some(d) => (
            random_hermitian(d, seed).map_err(config)?,
            StateVector::random_seeded(d, seed ^ 0x5EED).map_err(config)?,
        ),
    };
    let m = MomentPair::of(&h, &psi)?;
    let t_orth = teur_core::bounds::char_times_ti(&m, hbar).t_orth;
    let horizon = match (horizon, t_orth.finite()) {
        (Some(t), _) => t,
        (None, Some(t)) => 2.0 * t,
        (None, None) => 10.0 * hbar,
    };
    if !(horizon.is_finite() && horizon > 0.0) {
        bail!("horizon must be positive, got {horizon}");
    }
    let betas: Vec<_> = teur_core::harness::default_betas()
        .iter()
        .map(|b| b.resolve(m.energy, false))
        .collect::<std::result::Result<_, _>>()?;
    let traj = evolve(&h, &psi, horizon, &cfg, &betas)?;
    let tol = g.tolerance.unwrap_or(1e-6);
    let events = EventSet {
        orthogonal: Some(first_orthogonal(&traj, &h, &EventQuery::orthogonal().with_tolerance(tol))?),
        antipodal: Some(first_antipodal(&traj, &h, &EventQuery::antipodal().with_tolerance(tol))?),
    };
    let report = check_inequalities(&traj, m, events, BoundContext::TimeIndependent)?;

    let dir = g.out.join("decay");
    fs::create_dir_all(&dir)?;
    let mut w = std::io::BufWriter::new(fs::File::create(dir.join("series.csv"))?);
    use std::io::Write;
    writeln!(w, "t,survival,survival_bound,bound_vacuous,exp_diagnostic,regime_ok")?;
    for (&t, &p) in traj.times.iter().zip(&traj.survival) {
        let b = survival_lower_bound_ti(t, m.spread, hbar);
        let e = exp_decay_diagnostic(t, m.spread, m.energy, hbar);
        writeln!(w, "{t:.12e},{p:.12e},{:.12e},{},{:.12e},{}", b.value, b.vacuous, e.bound, e.regime_ok)?;
    }
    w.flush()?;
    let report_path = dir.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;

    println!("energy = {:.9}, spread = {:.9}, horizon = {horizon:.6}", m.energy, m.spread);
    println!("t_orth = {}, t_any = {}", report.characteristic_times.t_orth, report.characteristic_times.t_any);
    for mg in &report.margins {
        println!("{:<28} {:?}", mg.name, mg.status);
    }
    println!("-> {}", report_path.display());
    if report.is_consistent() {
        Ok(Outcome::Clean)
    } else {
        for v in report.violations() {
            eprintln!("violation: {} (report: {})", v.name, report_path.display());
        }
        Ok(Outcome::Violations)
    }
}

fn summary_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("summary.json")
    } else {
        input.to_path_buf()
    }
}

fn report(input: &Path, compare: Option<&Path>) -> Result<Outcome> {
    let read = |p: &Path| {
        let path = summary_path(p);
        SummaryFile::read(&path).map_err(|e| config(format!("{}: {e}", path.display())))
    };
    let a = read(input)?;
    if let Some(other) = compare {
        let b = read(other)?;
        if a.comparable() == b.comparable() {
            println!("identical (metadata excluded)");
            return Ok(Outcome::Clean);
        }
        warn!("summaries differ");
        println!("different");
        return Ok(Outcome::Violations);
    }
    let s = &a.summary;
    println!("campaign: {} ({})", a.campaign.kind.label(), a.config_hash);
    println!("runs: {}, violations: {}", s.runs, s.violations);
    for (k, v) in &s.trigger_rates {
        println!("trigger rate {k}: {v:.3}");
    }
    println!("{:<28} {:>6} {:>6} {:>14} {:>14} {:>14}", "margin", "count", "n/t", "min", "median", "max");
    let f = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
    for (name, q) in &s.margin_quantiles {
        println!(
            "{name:<28} {:>6} {:>6} {:>14} {:>14} {:>14}",
            q.count,
            q.not_triggered,
            f(q.min),
            f(q.median),
            f(q.max)
        );
    }
    for (k, v) in &s.statistics {
        println!("{k} = {v:.6}");
    }
    for v in &a.violations {
        println!("violation: {v}");
    }
    Ok(if a.violations.is_empty() { Outcome::Clean } else { Outcome::Violations })
}
