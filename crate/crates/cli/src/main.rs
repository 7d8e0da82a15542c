use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mosaicreg::pipeline::{self, exit, PipelineError, RunConfig};

/// Register ground-camera mosaics to a satellite map and diagnose the match.
#[derive(Debug, Parser)]
#[command(name = "mosaicreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the ground plane and write plane.json.
    Plane(RunArgs),
    /// Build the mosaic, register it and write report.json, residuals.csv and overlay.ppm.
    Register(RunArgs),
    /// Compute interpatch errors, surface classes and ambiguity reports from a finished registration.
    Diagnose(RunArgs),
    /// Render a synthetic scene directory.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration (JSON). Relative paths inside it resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config field, e.g. `--set registration.max_iterations=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene spec (JSON); the default scene when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory to write the scene into.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load_config(args: &RunArgs) -> Result<RunConfig, PipelineError> {
    let mut config = RunConfig::load(&args.config, &args.overrides)?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn read_spec(path: &Path) -> Result<Vec<u8>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Usage(format!("{} does not exist", path.display())));
    }
    std::fs::read(path).map_err(|e| PipelineError::Io { path: path.display().to_string(), message: e.to_string() })
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Plane(args) => {
            let config = load_config(&args)?;
            let report = pipeline::run_plane(&config)?;
            let sv = report.plane.singular_values();
            println!(
                "plane from {} of {} points ({}); singular values {:.6e} {:.6e} {:.6e}; rms out-of-plane {:.6e}",
                report.selection.points_used,
                report.selection.points_total,
                report.selection.source,
                sv[0],
                sv[1],
                sv[2],
                report.planarity.rms_out_of_plane
            );
        }
        Command::Register(args) => {
            let config = load_config(&args)?;
            let report = pipeline::run_register(&config)?;
            let a = report.registration.alpha;
            println!(
                "converged in {} iterations: s {:.9} theta {:.9} t ({:.6}, {:.6}); residual rms {:.4} px ({:.4} m)",
                report.registration.iterations,
                a.s(),
                a.theta(),
                a.t_p(),
                a.t_q(),
                report.residual_rms_px,
                report.residual_rms_m
            );
        }
        Command::Diagnose(args) => {
            let config = load_config(&args)?;
            let d = pipeline::run_diagnose(&config)?;
            match &d.trend {
                Some(t) => println!("{} interpatch pairs, drift slope {:.6}", t.pairs, t.slope),
                None => println!("{} interpatch pairs, no drift trend", d.interpatch.len()),
            }
            for (label, class) in &d.classifications {
                match class {
                    Ok(c) => println!("{label}: {:?}", c.class),
                    Err(e) => println!("{label}: unclassified ({e})"),
                }
            }
            println!(
                "mosaic ambiguity: {} cluster(s){}",
                d.joint.clusters.len(),
                if d.joint.ambiguous { ", ambiguous" } else { "" }
            );
            for note in &d.notes {
                eprintln!("note: {note}");
            }
        }
        Command::Synth(args) => {
            let bytes = args.config.as_deref().map(read_spec).transpose()?;
            let spec = pipeline::load_scene_spec(bytes.as_deref(), &args.overrides, args.seed)?;
            let scene = pipeline::run_synth(&spec, &args.out)?;
            println!("wrote {} views to {}", scene.views.len(), args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
