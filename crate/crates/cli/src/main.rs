//! `hrc`: build models, simulate data, run filters, detectors, experiments,
//! sweeps and the brute-force oracle self-checks.
//!
//! Exit status: 0 on success, 1 when an oracle check fails, 2 for invalid
//! configuration or arguments, 3 for runtime model errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use hrc_core::chain::ChainModel;
use hrc_core::detect::null_loglik;
use hrc_core::filter::tabulate;
use hrc_core::harness::{
    run_experiment, run_oracle_suites, run_sweep, simulate_null, simulate_target, trial_rng,
    write_experiment, write_sweep, ExperimentConfig, OracleOptions, OracleSuite,
};
use hrc_core::observation::ObservationRecord;

#[derive(Parser, Debug)]
#[command(name = "hrc", version, about = "Hidden reciprocal chain trackers and track-extraction detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args, Debug, Clone)]
struct WithInput {
    #[command(flatten)]
    common: Common,
    /// Sequences written by `simulate`; defaults to one fresh target sequence.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct OracleArgs {
    /// Comma-separated suites: filters, bridges, likelihoods, all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Random instances per suite.
    #[arg(long, default_value_t = 60)]
    instances: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Negative control: perturb one bridge entry by 1e-3.
    #[arg(long)]
    perturb: bool,
    /// Also write the check table as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the base chain, endpoint law, bridges and Schrödinger bridge.
    Model(Common),
    /// Generate target-present and pure-clutter sequences.
    Simulate(Common),
    /// Run the configured filters on sequences.
    Filter(WithInput),
    /// Score sequences with the configured likelihood-ratio detectors.
    Detect(WithInput),
    /// Run the configured experiment (and its sweep, if any).
    Experiment(Common),
    /// Run the configured sweep.
    Sweep(Common),
    /// Compare the recursions with brute-force enumeration on small instances.
    OracleCheck(OracleArgs),
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Checks,
}

type CmdResult = Result<(), Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn set_threads(threads: Option<usize>) -> CmdResult {
    if let Some(n) = threads {
        if n == 0 {
            return Err(config_err(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(runtime_err)?;
    }
    Ok(())
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&c.config).map_err(config_err)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = c.trials {
        cfg.trials = trials;
    }
    cfg.validate().map_err(config_err)?;
    set_threads(c.threads)?;
    if c.verbose {
        eprintln!("config {} hash={} seed={}", c.config.display(), cfg.hash(), cfg.seed);
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(runtime_err)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
    fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime_err)
}

#[derive(Serialize, Deserialize)]
struct Sequence {
    trial: usize,
    hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<Vec<usize>>,
    records: Vec<ObservationRecord<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SequenceFile {
    config_hash: String,
    seed: u64,
    sequences: Vec<Sequence>,
}

fn cmd_model(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let models = cfg.tracker_models::<f64>().map_err(runtime_err)?;
    let chain = ChainModel::new(models.base.clone(), models.endpoints.clone(), models.horizon)
        .map_err(runtime_err)?;
    write_json(&c.out.join("model.json"), &chain)?;
    let summary = serde_json::json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "n_states": models.grid.n(),
        "horizon": models.horizon,
        "beta": models.beta(),
        "bridge_max_row_error": models.bridges.max_row_error(),
        "sb_iterations": models.sb.iterations,
        "sb_max_row_error": models.sb.max_row_error(),
        "pi0": models.pi0,
        "pi_t": models.pi_t,
    });
    write_json(&c.out.join("model_summary.json"), &summary)?;
    println!("beta = {}", models.beta());
    Ok(())
}

fn simulate(cfg: &ExperimentConfig) -> Result<SequenceFile, Failure> {
    let models = cfg.tracker_models::<f64>().map_err(runtime_err)?;
    let obs = cfg.observation_model::<f64>().map_err(config_err)?;
    let null_obs = obs.null(models.grid.n());
    let half = cfg.trials / 2;
    let mut sequences = Vec::with_capacity(cfg.trials);
    for trial in 0..half {
        let mut rng = trial_rng(cfg.seed, trial, 0);
        let (path, records) = simulate_target(&models, &obs, &mut rng);
        sequences.push(Sequence { trial, hypothesis: "target".into(), path: Some(path), records });
    }
    for trial in 0..half {
        let mut rng = trial_rng(cfg.seed, trial, 1);
        let records = simulate_null(&null_obs, models.horizon, &models.grid, &mut rng);
        sequences.push(Sequence { trial, hypothesis: "null".into(), path: None, records });
    }
    Ok(SequenceFile { config_hash: cfg.hash(), seed: cfg.seed, sequences })
}

fn cmd_simulate(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let file = simulate(&cfg)?;
    write_json(&c.out.join("sequences.json"), &file)?;
    println!("{} sequences written to {}", file.sequences.len(), c.out.display());
    Ok(())
}

fn load_sequences(input: &WithInput, cfg: &ExperimentConfig) -> Result<Vec<Sequence>, Failure> {
    match &input.input {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(config_err)?;
            let file: SequenceFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(config_err)?;
            Ok(file.sequences)
        }
        None => {
            let mut one = cfg.clone();
            one.trials = 2;
            Ok(simulate(&one)?.sequences.into_iter().filter(|s| s.hypothesis == "target").collect())
        }
    }
}

fn cmd_filter(input: &WithInput) -> CmdResult {
    let c = &input.common;
    let cfg = load_config(c)?;
    let models = cfg.tracker_models::<f64>().map_err(runtime_err)?;
    let obs = cfg.observation_model::<f64>().map_err(config_err)?;
    let mut out = Vec::new();
    for seq in load_sequences(input, &cfg)? {
        let evidence = obs.evidence(&models.grid, &seq.records).map_err(config_err)?;
        let table = tabulate(&evidence);
        let mut per_kind = serde_json::Map::new();
        for &kind in &cfg.detectors {
            let res = models
                .run_filter(kind, &table)
                .with_context(|| format!("{} trial {} ({})", kind, seq.trial, seq.hypothesis))
                .map_err(runtime_err)?;
            let report = res.report(&models.grid, c.verbose);
            per_kind.insert(kind.to_string(), serde_json::to_value(report).map_err(runtime_err)?);
        }
        out.push(serde_json::json!({
            "trial": seq.trial,
            "hypothesis": seq.hypothesis,
            "path": seq.path,
            "filters": per_kind,
        }));
    }
    write_json(
        &c.out.join("filters.json"),
        &serde_json::json!({ "config_hash": cfg.hash(), "seed": cfg.seed, "results": out }),
    )?;
    println!("{} sequences filtered", out.len());
    Ok(())
}

fn cmd_detect(input: &WithInput) -> CmdResult {
    let c = &input.common;
    let cfg = load_config(c)?;
    let models = cfg.tracker_models::<f64>().map_err(runtime_err)?;
    let obs = cfg.observation_model::<f64>().map_err(config_err)?;
    let mut csv = format!("# config_hash={} seed={}\ntrial,hypothesis", cfg.hash(), cfg.seed);
    for k in &cfg.detectors {
        csv.push_str(&format!(",llr_{k}"));
    }
    csv.push('\n');
    for seq in load_sequences(input, &cfg)? {
        let evidence = obs.evidence(&models.grid, &seq.records).map_err(config_err)?;
        let table = tabulate(&evidence);
        let null = null_loglik(&seq.records, &obs, &models.grid).map_err(config_err)?;
        csv.push_str(&format!("{},{}", seq.trial, seq.hypothesis));
        for &kind in &cfg.detectors {
            let llr = match models.run_filter(kind, &table) {
                Ok(o) => o.loglik - null,
                Err(hrc_core::filter::FilterError::ZeroEvidence { .. }) => f64::NEG_INFINITY,
                Err(e) => return Err(runtime_err(e)),
            };
            csv.push_str(&format!(",{}", hrc_core::harness::report::fmt_num(llr)));
        }
        csv.push('\n');
    }
    fs::create_dir_all(&c.out).map_err(runtime_err)?;
    fs::write(c.out.join("llr.csv"), csv).map_err(runtime_err)?;
    println!("scores written to {}", c.out.join("llr.csv").display());
    Ok(())
}

fn print_report_line(label: &str, report: &hrc_core::harness::MetricsReport) {
    let mut line = format!("{label} beta={:.4}", report.beta);
    if let Some(d) = &report.detection {
        for r in &d.detectors {
            line.push_str(&format!(" auc_{}={:.4}", r.kind, r.auc));
        }
        if let Some(e) = d.delta_auc {
            line.push_str(&format!(" delta_auc={:.4}±{:.4}", e.value, e.se));
        }
    }
    if let Some(f) = &report.filtering {
        for t in &f.trackers {
            line.push_str(&format!(" rmse_aps_{}={:.4}", t.kind, t.rmse_aps));
        }
    }
    println!("{line}");
}

fn cmd_experiment(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    if !cfg.sweep.is_empty() {
        return sweep_and_write(&cfg, c);
    }
    let report = run_experiment(&cfg).map_err(runtime_err)?;
    let files = write_experiment(&report, &cfg, &c.out).map_err(runtime_err)?;
    print_report_line(&cfg.name, &report);
    if c.verbose {
        for f in files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn sweep_and_write(cfg: &ExperimentConfig, c: &Common) -> CmdResult {
    let rows = run_sweep(cfg).map_err(runtime_err)?;
    let files = write_sweep(&rows, cfg, &c.out).map_err(runtime_err)?;
    for row in &rows {
        let key: Vec<String> = row.key.iter().map(|(a, v)| format!("{}={v}", a.name())).collect();
        print_report_line(&key.join(","), &row.report);
    }
    if c.verbose {
        for f in files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn cmd_sweep(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    if cfg.sweep.is_empty() {
        return Err(config_err(anyhow!("invalid config field `sweep`: no sweep axes given")));
    }
    sweep_and_write(&cfg, c)
}

fn parse_suites(text: &str) -> Result<Vec<OracleSuite>, Failure> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "all" => out.extend(OracleSuite::ALL),
            "filters" => out.push(OracleSuite::Filters),
            "bridges" => out.push(OracleSuite::Bridges),
            "likelihoods" => out.push(OracleSuite::Likelihoods),
            other => return Err(config_err(anyhow!("unknown oracle suite `{other}`"))),
        }
    }
    out.dedup();
    Ok(out)
}

fn cmd_oracle_check(a: &OracleArgs) -> CmdResult {
    set_threads(a.threads)?;
    let suites = parse_suites(&a.suite)?;
    let opts = OracleOptions { instances: a.instances, seed: a.seed, perturb: a.perturb };
    let checks = run_oracle_suites(&suites, &opts).map_err(|e| match e {
        hrc_core::harness::OracleError::EmptySelection => config_err(e),
        other => runtime_err(other),
    })?;
    let mut ok = true;
    for c in &checks {
        ok &= c.passed();
        println!(
            "{} {:<12} {:<48} max_dev={:.3e} tol={:.0e} cases={}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.suite.name(),
            c.name,
            c.max_deviation,
            c.tolerance,
            c.cases
        );
    }
    if let Some(path) = &a.out {
        write_json(path, &checks)?;
    }
    if a.verbose {
        eprintln!("{} checks, perturbation {}", checks.len(), if a.perturb { "on" } else { "off" });
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Model(c) => cmd_model(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Filter(i) => cmd_filter(i),
        Command::Detect(i) => cmd_detect(i),
        Command::Experiment(c) => cmd_experiment(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Checks) => {
            eprintln!("error: oracle deviations exceed tolerance");
            ExitCode::from(1)
        }
    }
}
