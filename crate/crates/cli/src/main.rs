//! `lieode`: train, reference, compare and benchmark runs from the command line.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lieode_core::experiment::{
    bench_all, bench_csv, ensure_dir, reference_csv, write, Comparison, ConfigError, Experiment, ExperimentConfig,
    RunError,
};
use lieode_core::{Builtin, Method};

#[derive(Parser)]
#[command(name = "lieode", version, about = "Neural ODE solver seeded with an exactly solved linear flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with BFGS and write trajectory, extrapolation, history and report files.
    Train(RunArgs),
    /// Integrate the reference solution on the training and test grids.
    Reference(RunArgs),
    /// Train once per method from the same initialization and write loss histories.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated list of `bfgs` and `gd`.
        #[arg(long, default_value = "bfgs,gd")]
        methods: String,
    },
    /// Train all four presets and write a summary table.
    BenchAll {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value = "lieode-out/bench")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// One of food_chain, van_der_pol, lorenz, rossler.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Output directory; defaults to the config's `output_dir` or `lieode-out/<system>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, Experiment, PathBuf), Failure> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(name), None) => {
                let kind: Builtin = name.parse().map_err(|e: lieode_core::SystemError| Failure::Config(format!("--preset: {e}")))?;
                ExperimentConfig::preset(kind)
            }
            (None, Some(path)) => ExperimentConfig::load(path)?,
            _ => return Err(Failure::Config("exactly one of --preset or --config is required".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(r) = self.restarts {
            cfg.restarts = Some(r);
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        let exp = cfg.resolve()?;
        let dir = cfg
            .output_dir
            .clone()
            .unwrap_or_else(|| Path::new("lieode-out").join(&exp.name));
        Ok((cfg, exp, dir))
    }
}

fn train(args: &RunArgs) -> Result<(), Failure> {
    let (cfg, exp, dir) = args.load()?;
    let outcome = match exp.run(Method::Bfgs) {
        Ok(o) => o,
        Err(e) if e.is_config() => return Err(e.into()),
        Err(e) => {
            // keep a record of the failure next to where the results would be
            ensure_dir(&dir)?;
            let body = serde_json::json!({ "system": exp.name, "config": cfg, "error": e.to_string() });
            write(&dir.join("report.json"), &(serde_json::to_string_pretty(&body).unwrap() + "\n"))?;
            return Err(e.into());
        }
    };
    outcome.write_artifacts(&dir, &exp, &cfg)?;
    let r = &outcome.report;
    println!(
        "{}: status {:?}, loss {:.4e}, rmse {:.4e}, extrapolation rmse {:.4e}, {} iterations; wrote {}",
        exp.name,
        r.status,
        r.final_loss,
        outcome.train.rmse,
        outcome.test.rmse,
        r.iterations,
        dir.display()
    );
    if outcome.failed() {
        return Err(Failure::Numerical("line search failed; artifacts hold the best point found".into()));
    }
    Ok(())
}

fn reference(args: &RunArgs) -> Result<(), Failure> {
    let (_, exp, dir) = args.load()?;
    let csv = reference_csv(&exp)?;
    ensure_dir(&dir)?;
    let path = dir.join("reference.csv");
    write(&path, &csv)?;
    println!("{}: wrote {}", exp.name, path.display());
    Ok(())
}

fn parse_methods(list: &str) -> Result<Vec<Method>, Failure> {
    let methods = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>().map_err(|e| Failure::Config(format!("--methods: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(Failure::Config("--methods: at least one method is required".into()));
    }
    Ok(methods)
}

fn compare(args: &RunArgs, methods: &str) -> Result<(), Failure> {
    let methods = parse_methods(methods)?;
    let (_, exp, dir) = args.load()?;
    let cmp = Comparison::run(&exp, &methods)?;
    cmp.write_artifacts(&dir, &exp)?;
    for (m, r) in &cmp.runs {
        println!(
            "{} {}: status {:?}, loss {:.4e} (log10 {:.3}), {} iterations",
            exp.name,
            m.short_name(),
            r.status,
            r.final_loss,
            r.final_loss.log10(),
            r.iterations
        );
    }
    Ok(())
}

fn bench(seed: u64, restarts: Option<usize>, out: &Path) -> Result<(), Failure> {
    if restarts == Some(0) {
        return Err(Failure::Config("--restarts must be positive".into()));
    }
    let rows = bench_all(seed, restarts);
    ensure_dir(out)?;
    write(&out.join("bench.csv"), &bench_csv(&rows))?;
    write(&out.join("bench.json"), &(serde_json::to_string_pretty(&rows).unwrap() + "\n"))?;
    print!("{}", bench_csv(&rows));
    let failed: Vec<&str> = rows.iter().filter(|r| r.failed()).map(|r| r.preset.as_str()).collect();
    if !failed.is_empty() {
        return Err(Failure::Numerical(format!("failed presets: {}", failed.join(", "))));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Reference(a) => reference(a),
        Command::Compare { run, methods } => compare(run, methods),
        Command::BenchAll { seed, restarts, out } => bench(*seed, *restarts, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
