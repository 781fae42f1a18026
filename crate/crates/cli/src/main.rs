use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracim::chain::Method;
use fracim_cli::{cmd_eval, cmd_generate, cmd_run, cmd_stft_dump, with_workers, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fracim", version, about = "Fractional-domain interference mitigation for FMCW radar")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment TOML; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated methods for `run`, or `all`.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Process only the first K frames.
    #[arg(long, global = true, value_name = "K")]
    frames: Option<usize>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Experiment directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset and its manifest.
    Generate,
    /// Produce range-Doppler maps for one or more methods.
    Run,
    /// Score maps against the interference-free references.
    Eval,
    /// Export spectrograms and the multiangle grid of an interfered ramp.
    StftDump,
}

fn parse_methods(arg: Option<&str>) -> Result<Vec<Method>, CliError> {
    match arg {
        None => Err(CliError::Config("`run` needs --method (a comma-separated list or `all`)".into())),
        Some("all") => Ok(Method::ALL.to_vec()),
        Some(list) => list.split(',').map(|s| Ok(s.trim().parse::<Method>()?)).collect(),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    println!("experiment {}", cfg.hash()?);
    match cli.command {
        Command::Generate => {
            let m = with_workers(cli.workers, || cmd_generate(&cfg, cli.frames))??;
            println!("dataset {} frames {}", m.dataset_hash, m.count);
        }
        Command::Run => {
            let methods = parse_methods(cli.method.as_deref())?;
            let reports = with_workers(cli.workers, || cmd_run(&cfg, &methods, cli.frames))??;
            for r in reports {
                let state = if r.resumed { "kept" } else { "done" };
                println!("{} frame {} detections {} {state}", r.method, r.frame, r.detections);
            }
        }
        Command::Eval => {
            let s = with_workers(cli.workers, || cmd_eval(&cfg, cli.frames))??;
            println!("dataset {}", s.dataset_hash);
            println!("{:<16}{:>7}{:>14}{:>12}{:>12}{:>8}{:>10}{:>8}", "method", "frames", "mse", "sinr_db", "evm", "tpr", "far", "f1");
            for m in &s.methods {
                println!(
                    "{:<16}{:>7}{:>14.4e}{:>12.2}{:>12.2}{:>8.3}{:>10.2e}{:>8.3}",
                    m.method, m.frames, m.mse, m.sinr_db, m.evm, m.tpr, m.far, m.f1
                );
            }
        }
        Command::StftDump => {
            for p in with_workers(cli.workers, || cmd_stft_dump(&cfg, cli.frames))?? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
