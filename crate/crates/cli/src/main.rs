use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polaron_cli::plots::emit_plots;
use polaron_cli::config::parse_config_over;
use polaron_cli::{emit_config, run, Command, Preset, RunConfig};

/// Polaron band structure and transport in a molecular chain.
#[derive(Parser)]
#[command(name = "polaron", version)]
struct Args {
    /// Configuration file; keys override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named parameter set (fig1 .. fig6).
    #[arg(long, global = true, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "POLARON_THREADS")]
    threads: Option<usize>,
    /// Accepted for compatibility; the pipeline is deterministic.
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Self-consistent A_k^q along the temperature sweep.
    Solve,
    /// Renormalized band and bandwidth.
    Band,
    /// Diffusion coefficient and mobility.
    Transport,
    /// Two-site Fock-space check of the θ averages.
    Oracle,
    /// Gnuplot scripts for the datasets in the output directory.
    Plots,
    /// Print the resolved configuration.
    Config,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    Preset::parse(s).ok_or_else(|| format!("unknown preset '{s}'"))
}

fn load(args: &Args) -> Result<RunConfig, String> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => String::new(),
    };
    let base = args.preset.map(Preset::config).unwrap_or_default();
    let mut cfg = parse_config_over(&text, base).map_err(|e| match &args.config {
        Some(p) => format!("{}: {e}", p.display()),
        None => e.to_string(),
    })?;
    if let Some(out) = &args.out {
        cfg.outputs.directory = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let command = match args.command {
        Sub::Config => {
            print!("{}", emit_config(&cfg));
            return ExitCode::SUCCESS;
        }
        Sub::Plots => {
            return match emit_plots(&cfg.outputs.directory) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
        Sub::Solve => Command::Solve,
        Sub::Band => Command::Band,
        Sub::Transport => Command::Transport,
        Sub::Oracle => Command::Oracle,
    };
    match run(command, &cfg) {
        Ok(summary) => {
            for f in &summary.files {
                println!("{}", f.display());
            }
            if summary.failures > 0 {
                eprintln!("{} of {} points failed", summary.failures, summary.points);
            }
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
