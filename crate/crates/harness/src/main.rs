use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use distkf_harness::config::{ExperimentConfig, Mode};
use distkf_harness::{export, montecarlo, registry, runner, verify};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "DISTKF_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "distkf", version, about = "Partition-based distributed Kalman filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one run, filter it and export CSV and JSON.
    Run(Common),
    /// Run a seeded ensemble and export RMSE series.
    Montecarlo(Common),
    /// Run the oracle-equivalence and reduction checks.
    Verify(Common),
    /// Re-analyze a stored JSON run record.
    Monitors {
        #[arg(long, value_name = "PATH")]
        record: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, value_name = "PATH", conflicts_with = "model")]
    config: Option<PathBuf>,
    /// Fixture or registered model name.
    #[arg(long, value_name = "NAME")]
    model: Option<String>,
    #[arg(long, value_name = "N")]
    steps: Option<usize>,
    #[arg(long, value_name = "N")]
    runs: Option<usize>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
    /// Skip the stability monitors.
    #[arg(long)]
    no_monitors: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum CliMode {
    Auto,
    Dkf,
    Dekf,
}

impl Common {
    fn config(&self, default_model: &str) -> anyhow::Result<ExperimentConfig> {
        let mut c = match (&self.config, &self.model) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => registry::resolve(name)?,
            (None, None) => registry::resolve(default_model)?,
        };
        if let Some(k) = self.steps {
            c.steps = k;
        }
        if let Some(r) = self.runs {
            c.runs = r;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.no_monitors {
            c.monitors = false;
        }
        if let Some(m) = self.mode {
            c.mode = match m {
                CliMode::Auto => Mode::Auto,
                CliMode::Dkf => Mode::Dkf,
                CliMode::Dekf => Mode::Dekf,
            };
        }
        Ok(c)
    }

    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        out_dir(self.out.as_deref(), config.output.dir.as_deref())
    }
}

fn out_dir(flag: Option<&Path>, configured: Option<&Path>) -> PathBuf {
    flag.or(configured)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4e}"))
}

fn run(args: &Common) -> anyhow::Result<()> {
    let config = args.config("paper-linear-4state")?;
    let record = runner::run_experiment(&config)?;
    let (csv, json) = export::export_run(&record, &args.out_dir(&config))?;
    println!("{}: {} over {} steps, seed {}", config.name, record.estimator, config.steps, record.seed);
    println!("final rmse {:.6e}", record.rmse.last().copied().unwrap_or(f64::NAN));
    if let Some(m) = &record.monitors {
        let s = &m.summary;
        println!("weak coupling: {} satisfied, {} violated, {} not checkable", s.a4_satisfied, s.a4_violated, s.a4_not_checkable);
        println!("contraction: alpha {}, holds {}", opt(s.alpha), s.prop2_holds);
    }
    println!("content hash {}", record.content_hash);
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn monte_carlo(args: &Common) -> anyhow::Result<()> {
    let config = args.config("paper-linear-4state")?;
    let result = montecarlo::run_monte_carlo(&config)?;
    let (long, summary) = export::export_ensemble(&result, &args.out_dir(&config))?;
    let s = &result.stats;
    println!("{}: {} runs, {} steps", config.name, s.runs, config.steps);
    if let (Some(first), Some(last)) = (s.mean.first(), s.mean.last()) {
        println!("mean rmse k=0 {first:.6e}, k={} {last:.6e}", s.mean.len() - 1);
    }
    println!("wrote {} and {}", long.display(), summary.display());
    Ok(())
}

fn verify_all(args: &Common) -> anyhow::Result<()> {
    let config = args.config("paper-linear-4state")?;
    let results = verify::run_all(&config)?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        bail!("{failed} check(s) failed");
    }
    Ok(())
}

fn monitors(record: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let rec = export::read_run_json(record).with_context(|| format!("reading {}", record.display()))?;
    if rec.compute_hash()? != rec.content_hash {
        bail!("content hash mismatch in {}", record.display());
    }
    let m = runner::reanalyze(&rec)?;
    let s = &m.summary;
    println!("record {} ({} steps, seed {})", rec.config.name, rec.steps.len() - 1, rec.seed);
    println!("bounds satisfied: {}", s.bounds.satisfied);
    println!("weak coupling: {} satisfied, {} violated, {} not checkable", s.a4_satisfied, s.a4_violated, s.a4_not_checkable);
    println!("contraction: alpha {}, min direct alpha {}, holds {}", opt(s.alpha), opt(s.min_direct_alpha), s.prop2_holds);
    println!("error recursion: max residual {}, max relative {}", opt(s.max_recursion_residual), opt(s.max_relative_residual));
    println!("remainders: eps_phi {}, eps_varphi {}", opt(s.eps_dynamics), opt(s.eps_output));
    println!("lyapunov ascents above threshold: {}", s.lyapunov_ascents);
    println!("covariance floor events: {}", s.floor_events);
    if let Some(dir) = out {
        let path = dir.join(format!("{}_monitors.json", rec.config.name));
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(&path, serde_json::to_vec_pretty(&m)?).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => run(a),
        Command::Montecarlo(a) => monte_carlo(a),
        Command::Verify(a) => verify_all(a),
        Command::Monitors { record, out } => monitors(record, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
