//! Command-line front end: scenario validation, single-trajectory runs,
//! seeded ensembles with shard/merge support, closed-form front-tracking
//! evaluators, and the verification suite.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use multishock::acceptance::{Acceptance, CRITERIA, SUITE_SEED};
use multishock::burgers;
use multishock::dynamics::{evolve, EvolveOptions, ShockTracker};
use multishock::io::{load_scenario, write_checkpoint, CylinderSpec};
use multishock::profiles::MeetingScenario;
use multishock::stats::{
    ensemble_field_functional, local_measure_estimate, oracle_field_functional,
    pushforward_oracle, run_ensemble_shard, EnsembleParams, EnsembleResult, LimitLaw,
    TestFunction,
};

/// Exit code for invalid usage or configuration, as opposed to runtime
/// failures (1).
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "multishock",
    about = "Exclusion-process shock coalescence: simulation, front tracking, verification",
    version
)]
struct Cli {
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: $MULTISHOCK_OUT or the working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory; write a trajectory CSV and a final checkpoint.
    Simulate(SimulateArgs),
    /// Run a replica ensemble; write records CSV, summary JSON and shard data.
    Ensemble(EnsembleArgs),
    /// Advance step-profile shock fronts in closed form.
    Burgers(BurgersArgs),
    /// Evaluate the shock-coalescence map.
    Psi(PsiArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file (breakpoints, densities, optional t_star_hint).
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    seed: u64,
    /// Macroscopic horizon; defaults to the meeting time t*.
    #[arg(long)]
    horizon: Option<f64>,
    /// Window margin factor.
    #[arg(long, default_value_t = 3.0)]
    kappa: f64,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Run configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Captured half-width around the centering site; derived from the
    /// observables when omitted.
    #[arg(long)]
    capture_radius: Option<i64>,
    /// Replica index range `start..end` of a shard run.
    #[arg(long)]
    shard: Option<String>,
    /// Merge previously written shard JSON files instead of simulating.
    #[arg(long, num_args = 1..)]
    merge: Option<Vec<PathBuf>>,
}

#[derive(Args)]
struct BurgersArgs {
    /// Initial front positions, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    b: Vec<f64>,
    /// Densities rho_0..rho_n, comma separated.
    #[arg(long, value_delimiter = ',')]
    densities: Vec<f64>,
    #[arg(long)]
    t: f64,
    /// Write coalescence events (time, labels, position) as CSV.
    #[arg(long)]
    events_csv: Option<PathBuf>,
}

#[derive(Args)]
struct PsiArgs {
    /// Input coordinates, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    densities: Vec<f64>,
    /// Time shift: evaluate the shifted map instead.
    #[arg(long, allow_hyphen_values = true)]
    s: Option<f64>,
    /// Explicit pull-back time.
    #[arg(long)]
    t_choice: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run a single criterion, by id (1..=10) or slug.
    #[arg(long)]
    only: Option<String>,
    /// Base seed of the suite.
    #[arg(long, default_value_t = SUITE_SEED)]
    seed: u64,
}

/// Ensemble run configuration file.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct RunConfig {
    scenario: PathBuf,
    epsilons: Vec<f64>,
    replicas: usize,
    base_seed: u64,
    #[serde(default = "default_kappa")]
    kappa: f64,
    #[serde(default)]
    capture_radius: Option<i64>,
    #[serde(default)]
    observables: Observables,
}

fn default_kappa() -> f64 {
    3.0
}

#[derive(Debug, Default, serde::Serialize, serde::Deserialize)]
struct Observables {
    /// Cylinder function for the local-measure estimates.
    #[serde(default)]
    cylinder: Option<CylinderSpec>,
    /// Offsets `a` at which the local measure is estimated.
    #[serde(default)]
    offsets: Vec<f64>,
    /// Test functions for the density-field functionals.
    #[serde(default)]
    test_functions: Vec<TestFunction>,
    /// Pushforward oracle sample count for the targets.
    #[serde(default = "default_oracle_samples")]
    oracle_samples: usize,
}

fn default_oracle_samples() -> usize {
    100_000
}

/// Errors that should surface as usage problems (exit 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let out_dir = cli
        .out
        .or_else(|| std::env::var_os("MULTISHOCK_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args, &out_dir),
        Command::Ensemble(args) => cmd_ensemble(args, &out_dir),
        Command::Burgers(args) => cmd_burgers(args, &out_dir),
        Command::Psi(args) => cmd_psi(args),
        Command::Verify(args) => cmd_verify(args, &out_dir),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn check_epsilon(epsilon: f64) -> anyhow::Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(usage(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    Ok(())
}

fn read_scenario(path: &Path) -> anyhow::Result<MeetingScenario> {
    if !path.exists() {
        return Err(usage(format!("scenario file not found: {}", path.display())));
    }
    load_scenario(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn ensure_out_dir(out_dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))
}

fn cmd_simulate(args: SimulateArgs, out_dir: &Path) -> anyhow::Result<ExitCode> {
    check_epsilon(args.epsilon)?;
    if args.kappa < 2.0 {
        return Err(usage(format!("kappa must be >= 2, got {}", args.kappa)));
    }
    let scenario = read_scenario(&args.scenario)?;
    ensure_out_dir(out_dir)?;
    let horizon_macro = args.horizon.unwrap_or_else(|| scenario.t_star());
    if !(horizon_macro > 0.0 && horizon_macro.is_finite()) {
        return Err(usage(format!("horizon must be positive, got {horizon_macro}")));
    }
    let params = EnsembleParams {
        epsilon: args.epsilon,
        replicas: 1,
        base_seed: args.seed,
        capture_radius: 0,
        kappa: args.kappa,
    };
    let window = multishock::stats::ensemble_window(&scenario, &params);
    let mut config =
        multishock::profiles::sample_initial(&scenario, args.epsilon, window, args.seed)?;
    let mut tracker = ShockTracker::new(&config);
    let n = scenario.profile().shock_count();

    let trajectory_path = out_dir.join("trajectory.csv");
    let mut log = std::io::BufWriter::new(fs::File::create(&trajectory_path)?);
    write!(log, "time,bond,moved_from,moved_to")?;
    for k in 1..=n {
        write!(log, ",y{k}")?;
    }
    writeln!(log)?;
    let report = evolve(
        &mut config,
        Some(&mut tracker),
        horizon_macro / args.epsilon,
        args.seed,
        EvolveOptions { paranoid: false, log: Some(&mut log) },
    )?;
    log.flush()?;

    let checkpoint_path = out_dir.join("final.mshk");
    let mut out = std::io::BufWriter::new(fs::File::create(&checkpoint_path)?);
    write_checkpoint(&config, &mut out)?;
    out.flush()?;

    println!(
        "simulated {} events to time {} on window {:?}",
        report.events,
        config.time(),
        config.window()
    );
    println!("trajectory: {}", trajectory_path.display());
    println!("checkpoint: {}", checkpoint_path.display());
    for (low, high, pos) in tracker.block_spans() {
        println!("block {low}..{high} at {pos}");
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_shard(spec: &str, replicas: usize) -> anyhow::Result<std::ops::Range<u64>> {
    let parts: Vec<&str> = spec.split("..").collect();
    let parse = |s: &str| s.trim().parse::<u64>().map_err(|_| usage(format!("bad shard `{spec}`")));
    match parts.as_slice() {
        [a, b] => {
            let (lo, hi) = (parse(a)?, parse(b)?);
            if lo >= hi || hi > replicas as u64 {
                return Err(usage(format!(
                    "shard {lo}..{hi} outside the replica range 0..{replicas}"
                )));
            }
            Ok(lo..hi)
        }
        _ => Err(usage(format!("bad shard `{spec}`, expected `start..end`"))),
    }
}

/// Capture radius needed by the configured observables at `epsilon`.
fn required_capture(observables: &Observables, epsilon: f64, cylinder_radius: usize) -> i64 {
    let scale = epsilon.sqrt();
    let mut radius = 8i64;
    for &a in &observables.offsets {
        radius = radius.max((a.abs() / scale).ceil() as i64 + cylinder_radius as i64 + 2);
    }
    for phi in &observables.test_functions {
        let (lo, hi) = phi.support();
        let reach = lo.abs().max(hi.abs());
        radius = radius.max((reach / scale).ceil() as i64 + cylinder_radius as i64 + 2);
    }
    radius
}

fn cmd_ensemble(args: EnsembleArgs, out_dir: &Path) -> anyhow::Result<ExitCode> {
    ensure_out_dir(out_dir)?;
    if let Some(files) = &args.merge {
        return merge_shards(files, out_dir);
    }
    let config: RunConfig = match &args.config {
        Some(path) => {
            if !path.exists() {
                return Err(usage(format!("config file not found: {}", path.display())));
            }
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig {
            scenario: args
                .scenario
                .clone()
                .ok_or_else(|| usage("either --config or --scenario is required"))?,
            epsilons: vec![args
                .epsilon
                .ok_or_else(|| usage("--epsilon is required without --config"))?],
            replicas: args
                .replicas
                .ok_or_else(|| usage("--replicas is required without --config"))?,
            base_seed: args.seed.ok_or_else(|| usage("--seed is required without --config"))?,
            kappa: args.kappa.unwrap_or(3.0),
            capture_radius: args.capture_radius,
            observables: Observables::default(),
        },
    };
    let scenario_path = args.scenario.clone().unwrap_or_else(|| config.scenario.clone());
    let scenario = read_scenario(&scenario_path)?;
    let epsilons = match args.epsilon {
        Some(e) => vec![e],
        None => config.epsilons.clone(),
    };
    let replicas = args.replicas.unwrap_or(config.replicas);
    let base_seed = args.seed.unwrap_or(config.base_seed);
    let kappa = args.kappa.unwrap_or(config.kappa);
    if replicas == 0 {
        return Err(usage("--replicas must be positive"));
    }
    if kappa < 2.0 {
        return Err(usage(format!("kappa must be >= 2, got {kappa}")));
    }
    let cylinder = match &config.observables.cylinder {
        Some(spec) => spec.build()?,
        None => multishock::profiles::CylinderFunction::occupancy(),
    };

    for &epsilon in &epsilons {
        check_epsilon(epsilon)?;
        let capture_radius = args.capture_radius.or(config.capture_radius).unwrap_or_else(|| {
            required_capture(&config.observables, epsilon, cylinder.window_radius())
        });
        let params = EnsembleParams { epsilon, replicas, base_seed, capture_radius, kappa };
        let shard = match &args.shard {
            Some(spec) => parse_shard(spec, replicas)?,
            None => 0..replicas as u64,
        };
        let sharded = args.shard.is_some();
        let result = run_ensemble_shard(&scenario, &params, shard.clone())?;
        let tag = format!("eps{epsilon}");
        if sharded {
            let path = out_dir.join(format!("shard_{}_{}_{tag}.json", shard.start, shard.end));
            fs::write(&path, serde_json::to_vec(&result)?)?;
            println!("shard written: {}", path.display());
            continue;
        }
        write_ensemble_outputs(&result, &config.observables, &cylinder, out_dir, &tag)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn merge_shards(files: &[PathBuf], out_dir: &Path) -> anyhow::Result<ExitCode> {
    if files.is_empty() {
        return Err(usage("--merge needs at least one shard file"));
    }
    let mut merged: Option<EnsembleResult> = None;
    for path in files {
        if !path.exists() {
            return Err(usage(format!("shard file not found: {}", path.display())));
        }
        let text = fs::read_to_string(path)?;
        let shard: EnsembleResult = serde_json::from_str(&text)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        merged = Some(match merged {
            None => shard,
            Some(acc) => acc.merge(shard)?,
        });
    }
    let result = merged.expect("nonempty merge");
    let tag = format!("eps{}", result.params.epsilon);
    write_ensemble_outputs(
        &result,
        &Observables::default(),
        &multishock::profiles::CylinderFunction::occupancy(),
        out_dir,
        &tag,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn write_ensemble_outputs(
    result: &EnsembleResult,
    observables: &Observables,
    cylinder: &multishock::profiles::CylinderFunction,
    out_dir: &Path,
    tag: &str,
) -> anyhow::Result<()> {
    let records_path = out_dir.join(format!("records_{tag}.csv"));
    fs::write(&records_path, result.records_csv())?;

    let mut summary = serde_json::to_value(result.summary())?;
    if !observables.offsets.is_empty() || !observables.test_functions.is_empty() {
        let law = LimitLaw::from_scenario(&result.scenario);
        let oracle =
            pushforward_oracle(&law, observables.oracle_samples, result.params.base_seed)?;
        let mut obs = serde_json::Map::new();
        if !observables.offsets.is_empty() {
            let reports: Vec<_> = observables
                .offsets
                .iter()
                .map(|&a| local_measure_estimate(result, a, cylinder, &oracle))
                .collect::<multishock::Result<_>>()?;
            obs.insert("local_measure".into(), serde_json::to_value(reports)?);
        }
        if !observables.test_functions.is_empty() {
            let densities = result.scenario.profile().densities().to_vec();
            let mut fields = Vec::new();
            for phi in &observables.test_functions {
                let (sim, sim_se) = ensemble_field_functional(result, cylinder, phi)?;
                let (lim, lim_se) = oracle_field_functional(&oracle, &densities, cylinder, phi)?;
                fields.push(serde_json::json!({
                    "phi": phi,
                    "field": sim,
                    "field_se": sim_se,
                    "limit": lim,
                    "limit_se": lim_se,
                }));
            }
            obs.insert("density_field".into(), serde_json::Value::Array(fields));
        }
        summary
            .as_object_mut()
            .expect("summary is an object")
            .insert("observables".into(), serde_json::Value::Object(obs));
    }
    let summary_path = out_dir.join(format!("summary_{tag}.json"));
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    println!("records: {}", records_path.display());
    println!("summary: {}", summary_path.display());
    Ok(())
}

fn format_vec(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn cmd_burgers(args: BurgersArgs, out_dir: &Path) -> anyhow::Result<ExitCode> {
    if args.b.is_empty() || args.densities.len() != args.b.len() + 1 {
        return Err(usage(format!(
            "{} positions require {} densities",
            args.b.len(),
            args.b.len() + 1
        )));
    }
    if !args.t.is_finite() || args.t < 0.0 {
        return Err(usage(format!("t must be >= 0, got {}", args.t)));
    }
    let state = burgers::solve_fronts(&args.b, &args.densities, args.t)
        .map_err(|e| usage(e.to_string()))?;
    println!("{}", format_vec(&state.label_positions()));
    for ev in state.events() {
        println!("event t={} labels={}-{} position={}", ev.time, ev.low, ev.high, ev.position);
    }
    if let Some(path) = args.events_csv {
        ensure_out_dir(out_dir)?;
        let path = if path.is_absolute() { path } else { out_dir.join(path) };
        let mut csv = String::from("time,labels,position\n");
        for ev in state.events() {
            csv.push_str(&format!("{},{}-{},{}\n", ev.time, ev.low, ev.high, ev.position));
        }
        fs::write(&path, csv)?;
        println!("events: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_psi(args: PsiArgs) -> anyhow::Result<ExitCode> {
    if args.x.is_empty() || args.densities.len() != args.x.len() + 1 {
        return Err(usage(format!(
            "{} coordinates require {} densities",
            args.x.len(),
            args.x.len() + 1
        )));
    }
    let result = match args.s {
        Some(s) => burgers::psi_s(&args.x, s, &args.densities),
        None => burgers::psi(&args.x, &args.densities, args.t_choice),
    }
    .map_err(|e| usage(e.to_string()))?;
    println!("{}", format_vec(&result));
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs, out_dir: &Path) -> anyhow::Result<ExitCode> {
    let ids: Vec<usize> = match &args.only {
        None => (1..=CRITERIA.len()).collect(),
        Some(sel) => {
            let found = CRITERIA
                .iter()
                .find(|(id, slug, _)| sel == slug || sel.parse() == Ok(*id))
                .map(|&(id, _, _)| id)
                .ok_or_else(|| {
                    usage(format!(
                        "unknown criterion `{sel}`; use an id 1..={} or a slug",
                        CRITERIA.len()
                    ))
                })?;
            vec![found]
        }
    };
    let suite = Acceptance::with_seed(args.seed);
    let mut reports = Vec::new();
    for id in ids {
        let report = suite.run(id);
        println!("{}", report.status_line());
        for line in &report.details {
            println!("    {line}");
        }
        reports.push(report);
    }
    ensure_out_dir(out_dir)?;
    let path = out_dir.join("verify_report.json");
    fs::write(&path, serde_json::to_string_pretty(&reports)?)?;
    println!("report: {}", path.display());
    let all_pass = reports.iter().all(|r| r.pass);
    println!("{}", if all_pass { "all criteria passed" } else { "SOME CRITERIA FAILED" });
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
