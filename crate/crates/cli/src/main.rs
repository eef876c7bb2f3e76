use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use altrelay::channel::{channels_to_csv, channels_to_json, draw_channel_sequence};
use altrelay::config::{validate_config, ExperimentConfig};
use altrelay::gradients::gradient_check_suite;
use altrelay::simulate::{
    collect_traces, convergence_aggregate, run_dof, run_experiment, slots_per_trial, traces_csv, DOF_CSV_HEADER,
};
use altrelay::{Error, RngStream};

/// Largest relative gradient error the gradcheck table accepts.
const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "altrelay", version, about = "Alternate-relaying MIMO AF filter design and Monte Carlo metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON, or TOML by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for trials; never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override the trial count (gradcheck: points per setting).
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Comma-separated SNR list in dB, overriding the configured grid.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,

    /// Progress messages on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Ergodic rate, outage and epsilon-outage rate over the SNR grid.
    Rate,
    /// Same metrics with the outage trial count.
    Outage,
    /// High-SNR slope between the two configured SNRs.
    Dof,
    /// Objective traces of an optimized scheme and their aggregate.
    Converge,
    /// Analytic gradients against finite differences.
    Gradcheck,
    /// Dump one seeded channel sequence as JSON and CSV.
    DumpChannels,
}

impl Command {
    fn dir_name(&self) -> &'static str {
        match self {
            Command::Rate => "rate",
            Command::Outage => "outage",
            Command::Dof => "dof",
            Command::Converge => "converge",
            Command::Gradcheck => "gradcheck",
            Command::DumpChannels => "dump-channels",
        }
    }

    fn needs_config(&self) -> bool {
        !matches!(self, Command::Gradcheck | Command::DumpChannels)
    }
}

enum Failure {
    Config(Vec<String>),
    Numerical(Error),
    Io(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(p) => Failure::Config(p),
            other => Failure::Numerical(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Files of one invocation, written only after every computation succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body));
    }

    fn write(&self) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        for (name, body) in &self.files {
            fs::write(self.dir.join(name), body)?;
        }
        Ok(())
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => validate_config(path)?,
        None if cli.command.needs_config() => {
            return Err(Failure::Config(vec![format!(
                "{} needs --config",
                cli.command.dir_name()
            )]))
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
        cfg.outage_trials = trials;
    }
    if let Some(snr) = &cli.snr {
        cfg.snr_grid_db = snr.clone();
    }
    if cli.command == Command::Dof {
        if let Some(snr) = &cli.snr {
            match snr.as_slice() {
                &[lo, hi] => cfg.dof_snr_db = [lo, hi],
                _ => return Err(Failure::Config(vec!["dof takes exactly two --snr values".into()])),
            }
        }
    }
    if cli.command == Command::Converge {
        if !cfg.scheme.is_optimized() {
            return Err(Failure::Config(vec![format!(
                "converge needs an optimized scheme, got {}",
                cfg.scheme
            )]));
        }
        if let Some(snr) = &cli.snr {
            cfg.converge_snr_db = snr[0];
        }
    }
    if cli.workers == Some(0) {
        return Err(Failure::Config(vec!["workers must be at least 1".into()]));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest(cli: &Cli, cfg: &ExperimentConfig, extra: serde_json::Value) -> String {
    let generated = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let doc = json!({
        "subcommand": cli.command.dir_name(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
        "results": extra,
        "generated_unix_time": generated,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    text
}

fn stem(cfg: &ExperimentConfig) -> String {
    format!("{}_M{}", cfg.scheme, cfg.m)
}

fn run(cli: &Cli) -> Result<Outputs, Failure> {
    let cfg = load(cli)?;
    let mut out = Outputs {
        dir: cli.out.join(cli.command.dir_name()),
        files: Vec::new(),
    };
    let verbose = cli.verbose > 0;
    match cli.command {
        Command::Rate | Command::Outage => {
            let mut exp = cfg.clone();
            if cli.command == Command::Outage {
                exp.trials = exp.outage_trials;
            }
            if verbose {
                eprintln!("{}: {} trials x {} SNR points", stem(&exp), exp.trials, exp.snr_grid_db.len());
            }
            let result = run_experiment(&exp, &exp.snr_grid_db)?;
            out.add(format!("{}.csv", stem(&exp)), result.series.to_csv());
            out.add(format!("{}_trials.csv", stem(&exp)), result.trials_csv());
            out.add("manifest.json", manifest(cli, &exp, json!({ "series": result.series })));
        }
        Command::Dof => {
            if verbose {
                eprintln!("{}: slope between {:?} dB", stem(&cfg), cfg.dof_snr_db);
            }
            let (dof, result) = run_dof(&cfg)?;
            println!("{} M={} dof estimate {:.4}", cfg.scheme, cfg.m, dof.dof);
            out.add(format!("{}.csv", stem(&cfg)), result.series.to_csv());
            out.add("dof.csv", format!("{DOF_CSV_HEADER}\n{}", dof.csv_row()));
            out.add("manifest.json", manifest(cli, &cfg, json!({ "dof": dof })));
        }
        Command::Converge => {
            if verbose {
                eprintln!("{}: traces at {} dB", stem(&cfg), cfg.converge_snr_db);
            }
            let traces = collect_traces(&cfg, cfg.converge_snr_db)?;
            let objectives: Vec<Vec<f64>> = traces.iter().map(|(_, t)| t.trace.objective.clone()).collect();
            let agg = convergence_aggregate(&objectives);
            out.add(format!("{}.csv", stem(&cfg)), agg.to_csv());
            out.add(format!("{}_traces.csv", stem(&cfg)), traces_csv(&traces));
            let nondecreasing = traces.iter().all(|(_, t)| t.trace.is_nondecreasing());
            out.add(
                "manifest.json",
                manifest(cli, &cfg, json!({ "traces": traces.len(), "all_nondecreasing": nondecreasing })),
            );
        }
        Command::Gradcheck => {
            let points = cli.trials.unwrap_or(20);
            let snrs = cli.snr.clone().unwrap_or_else(|| vec![0.0, 10.0, 30.0]);
            let mut csv = String::from("M,snr_db,component,max_rel_error,points,pass\n");
            let mut worst: f64 = 0.0;
            println!("{:>2} {:>7}  {:<16} {:>12}", "M", "snr_dB", "component", "max_rel_err");
            for m in [2, 4] {
                for &snr in &snrs {
                    let rows = gradient_check_suite(m, snr, points, &RngStream::new(cfg.seed, 0))?;
                    for row in rows {
                        let pass = row.max_rel_error < GRADCHECK_TOL;
                        worst = worst.max(if row.max_rel_error.is_nan() { f64::INFINITY } else { row.max_rel_error });
                        println!("{m:>2} {snr:>7}  {:<16} {:>12.3e}", row.component, row.max_rel_error);
                        csv.push_str(&format!(
                            "{m},{snr},{},{:e},{},{pass}\n",
                            row.component, row.max_rel_error, row.points
                        ));
                    }
                }
            }
            out.add("gradcheck.csv", csv);
            out.add(
                "manifest.json",
                manifest(cli, &cfg, json!({ "points": points, "snr_db": snrs, "worst_rel_error": worst })),
            );
            if !(worst < GRADCHECK_TOL) {
                out.write()?;
                return Err(Failure::Check(format!("worst relative gradient error {worst:.3e} exceeds {GRADCHECK_TOL:e}")));
            }
        }
        Command::DumpChannels => {
            // the channels trial 0 of the configured experiment sees
            let seq = draw_channel_sequence(
                cfg.scenario,
                cfg.m,
                slots_per_trial(&cfg),
                &RngStream::new(cfg.seed, 0).fork(0),
            )?;
            out.add(format!("channels_M{}.json", cfg.m), channels_to_json(&seq));
            out.add(format!("channels_M{}.csv", cfg.m), channels_to_csv(&seq));
            out.add(
                "manifest.json",
                manifest(cli, &cfg, json!({ "slots": seq.len(), "scenario": cfg.scenario })),
            );
        }
    }
    Ok(out)
}

fn execute(cli: &Cli) -> Result<PathBuf, Failure> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Io(e.to_string()))?;
    let outputs = pool.install(|| run(cli))?;
    outputs.write()?;
    Ok(outputs.dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(dir) => {
            if cli.verbose > 0 {
                eprintln!("wrote {}", dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Config(problems)) => {
            eprintln!("error: {}", Error::Config(problems));
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
