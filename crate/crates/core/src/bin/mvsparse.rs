use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mvsparse::runtime::{
    compare_reports, run_camera_node, run_server, run_sim, Mode, RunConfig, RunError, RunReport,
};

#[derive(Parser)]
#[command(version, about = "Multi-camera sparse processing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline in one process.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        frames: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one distributed run.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one camera node against a server.
    Camera {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        camera_id: u32,
        #[arg(long)]
        server: String,
    },
    /// Print two reports side by side.
    Report {
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        compare: Vec<PathBuf>,
    },
}

fn load(config: Option<&PathBuf>) -> Result<RunConfig, RunError> {
    Ok(match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn emit(report: &RunReport, out: Option<&PathBuf>) -> Result<(), RunError> {
    match out {
        Some(p) => report.write(p),
        None => {
            println!("{}", report.to_json());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Simulate {
            config,
            mode,
            frames,
            seed,
            out,
        } => {
            let mut cfg = load(config.as_ref())?;
            cfg.mode = mode.unwrap_or(cfg.mode);
            cfg.frames = frames.unwrap_or(cfg.frames);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            emit(&run_sim(&cfg)?, out.as_ref())
        }
        Command::Serve { config, out } => {
            let cfg = load(Some(&config))?;
            match run_server(&cfg) {
                Ok(r) => emit(&r, out.as_ref()),
                Err(RunError::ConnectionLost {
                    peer,
                    reason,
                    partial,
                }) => {
                    if let Some(p) = &partial {
                        emit(p, out.as_ref())?;
                    }
                    Err(RunError::ConnectionLost {
                        peer,
                        reason,
                        partial,
                    })
                }
                Err(e) => Err(e),
            }
        }
        Command::Camera {
            config,
            camera_id,
            server,
        } => {
            let cfg = load(Some(&config))?;
            let summary = run_camera_node(&cfg, camera_id, &server)?;
            log::info!("camera {camera_id} finished {} frames", summary.frames);
            Ok(())
        }
        Command::Report { compare } => {
            let a = RunReport::load(&compare[0])?;
            let b = RunReport::load(&compare[1])?;
            print!("{}", compare_reports(&a, &b));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
