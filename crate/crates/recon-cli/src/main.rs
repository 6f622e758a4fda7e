use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use recon_cli::config::ExperimentConfig;
use recon_cli::gradcheck::run_gradcheck;
use recon_cli::runner::run_experiment;
use recon_core::mesh::{build_disk_mesh, build_square_mesh, refine_uniform};
use recon_core::mesh_io::mesh_io_write;

/// Diffusion-coefficient reconstruction from boundary Cauchy data.
#[derive(Parser)]
#[command(name = "recon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate a mesh preset, optionally refined, in the tri-mesh format.
    Mesh {
        /// One of: unit-disk, disk2, square.
        #[arg(long)]
        preset: String,
        /// Number of uniform refinements to apply.
        #[arg(long, default_value_t = 0)]
        refine: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit the adjoint gradients of the configured methods against central
    /// finite differences; prints one pass/fail line per method.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, jobs } => {
            let config = ExperimentConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&config.out_dir));
            let report = run_experiment(&config, &out_dir, jobs.max(1))?;
            println!(
                "completed {} runs into {} ({} failed)",
                report.runs,
                report.out_dir.display(),
                report.failures.len()
            );
            for f in &report.failures {
                eprintln!("run failed: {f}");
            }
            if report.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Mesh { preset, refine, out } => {
            let mut mesh = match preset.as_str() {
                "unit-disk" => build_disk_mesh([0.0, 0.0], 1.0, 8)?,
                "disk2" => build_disk_mesh([0.0, 0.0], 2.0, 8)?,
                "square" => build_square_mesh(-1.0, 1.0, -1.0, 1.0, 16)?,
                other => anyhow::bail!(
                    "unknown mesh preset '{other}' (available: unit-disk, disk2, square)"
                ),
            };
            for _ in 0..refine {
                mesh = refine_uniform(&mesh);
            }
            mesh_io_write(&mesh, &out)?;
            println!(
                "wrote {} ({} nodes, {} triangles)",
                out.display(),
                mesh.n_nodes(),
                mesh.n_triangles()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { config } => {
            let config = ExperimentConfig::load(&config)?;
            let reports = run_gradcheck(&config)?;
            let mut all_pass = true;
            for r in &reports {
                println!(
                    "{}: {} (max relative error {:.3e})",
                    r.method.name(),
                    if r.pass { "PASS" } else { "FAIL" },
                    r.max_rel_err
                );
                all_pass &= r.pass;
            }
            Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Version => {
            println!("recon {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::SUCCESS)
        }
    }
}
