//! `glasspose`: generate synthetic data, predict, evaluate, check gradients
//! and train the reference decoder.
//!
//! Exit codes: 0 success, 1 usage or other failure, 2 I/O or schema error,
//! 3 a check failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glasspose::gradcheck::Fault;
use glasspose::harness::commands::format_checks;
use glasspose::harness::{
    cmd_evaluate, cmd_generate, cmd_gradcheck, cmd_predict, cmd_train_ref, EvaluateOptions, HarnessConfig,
    PredictOptions,
};
use glasspose::Error;

#[derive(Parser)]
#[command(name = "glasspose", version, about = "Transparent-object pose pipeline harness")]
struct Cli {
    /// TOML configuration; see --print-config for every key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write completed depth, normals and sampled clouds (predict only).
    #[arg(long, global = true)]
    dump_intermediate: bool,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Number of frames (default: `frames` from the configuration).
        #[arg(long)]
        count: Option<u64>,
    },
    /// Predict pose and scale for every annotated instance.
    Predict {
        #[arg(long)]
        dataset: PathBuf,
        /// JSON-lines output.
        #[arg(long)]
        out: PathBuf,
        /// Directory for --dump-intermediate (default: `<out>.intermediate`).
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        /// Rebuild predictions from the clouds of an earlier dump.
        #[arg(long)]
        from_dump: Option<PathBuf>,
    },
    /// Score predictions against the dataset annotations.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Output directory for the reports.
        #[arg(long)]
        report: PathBuf,
        /// Also score the configured depth and normal estimators.
        #[arg(long)]
        dense: bool,
        /// Run the GT/EST depth x normals grid with this dataset as test set.
        #[arg(long)]
        grid: bool,
    },
    /// Compare every analytic gradient with finite differences.
    Gradcheck {
        /// Configurations per check.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Train the linear reference decoder on a dataset.
    TrainRef {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint path; the loss curve goes next to it as `.loss.csv`.
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Lib(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::Usage("no subcommand given (try --help)".into()));
    };
    match command {
        Command::Generate { out, count } => {
            let manifest = cmd_generate(&cfg, &out, count.unwrap_or(cfg.frames))?;
            println!("{}", manifest.display());
        }
        Command::Predict {
            dataset,
            out,
            dump_dir,
            from_dump,
        } => {
            let dump = cli.dump_intermediate.then(|| {
                dump_dir.unwrap_or_else(|| {
                    let mut s = out.clone().into_os_string();
                    s.push(".intermediate");
                    s.into()
                })
            });
            let opts = PredictOptions {
                dump_dir: dump.clone(),
                from_dump,
            };
            let summary = cmd_predict(&cfg, &dataset, &out, &opts)?;
            for (frame, id) in &summary.skipped {
                eprintln!("warning: frame {frame} instance {id}: no valid pixels to sample, skipped");
            }
            println!(
                "{} predictions, {} instances skipped -> {}",
                summary.records,
                summary.skipped.len(),
                out.display()
            );
            if let Some(d) = dump {
                println!("intermediates -> {}", d.display());
            }
        }
        Command::Evaluate {
            dataset,
            predictions,
            report,
            dense,
            grid,
        } => {
            if predictions.is_none() && !dense && !grid {
                return Err(Failure::Usage("evaluate needs --predictions, --dense or --grid".into()));
            }
            let opts = EvaluateOptions {
                predictions,
                dense,
                grid,
            };
            let summary = cmd_evaluate(&cfg, &dataset, &report, &opts)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(p) = &summary.pose {
                print!("{}", p.to_markdown());
            }
            if let Some(g) = &summary.grid {
                print!("{}", g.to_markdown());
                if !g.passed() {
                    return Err(Failure::Check("grid trend checks failed".into()));
                }
            }
        }
        Command::Gradcheck { trials, inject_fault } => {
            let results = cmd_gradcheck(&cfg, trials, inject_fault)?;
            print!("{}", format_checks(&results));
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} gradient checks failed")));
            }
        }
        Command::TrainRef { dataset, out } => {
            let s = cmd_train_ref(&cfg, &dataset, &out)?;
            println!(
                "{} samples, loss {:.6} -> {:.6}\ncheckpoint {} (sha256 {})\nloss curve {}",
                s.samples,
                s.initial_loss,
                s.final_loss,
                s.checkpoint.display(),
                s.checkpoint_sha256,
                s.curve.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } | Error::SchemaMismatch(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
