use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lv4d::commands::{self, ExperimentOptions, ExperimentOutput, SegmentArgs};

#[derive(Parser)]
#[command(name = "lv4d", version, about = "Semi-automated 4D left-ventricle segmentation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Segment a 4D study from its annotation.
    Segment {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long = "theta-d", default_value_t = 5.0)]
        theta_d: f64,
        /// RegistrationConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Truth directory; adds report.json and metric CSVs.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Generate a phantom: a suite name, `suite`, or a spec JSON file.
    Phantom {
        spec: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted meshes with reference meshes.
    Evaluate {
        pred_dir: PathBuf,
        truth_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one of the robustness / comparison experiments on phantoms.
    Experiment {
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        replicates: usize,
    },
    /// Serve the HTTP API over a directory of studies.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long = "data-root")]
        data_root: PathBuf,
    },
}

fn run(cli: Cli) -> lv4d::Result<()> {
    match cli.cmd {
        Cmd::Segment {
            volume,
            annotation,
            theta_d,
            config,
            out,
            truth,
        } => {
            let o = commands::cmd_segment(&SegmentArgs {
                volume,
                annotation,
                theta_d,
                config,
                out: out.clone(),
                truth,
            })?;
            let d = &o.segmentation.diagnostics;
            println!(
                "{} frames -> {} ({} registrations, min Jacobian {:.3})",
                o.segmentation.meshes.len(),
                out.display(),
                d.registrations,
                d.min_jacobian
            );
            if let Some(r) = o.report {
                println!(
                    "d_m {:.3} mm, Dice {:.4}, max d_H {:.3} mm, EF {:.1}% (truth {:.1}%)",
                    r.cycle_mean_dm(),
                    r.cycle_mean_dice(),
                    r.max_dh(),
                    r.clinical.ef_percent,
                    r.reference_clinical.ef_percent
                );
            }
        }
        Cmd::Phantom { spec, seed, out } => {
            for d in commands::cmd_phantom(&spec, seed, &out)? {
                println!("{}", d.display());
            }
        }
        Cmd::Evaluate { pred_dir, truth_dir, out } => {
            let r = commands::cmd_evaluate(&pred_dir, &truth_dir, &out)?;
            println!(
                "d_m {:.3} mm, Dice {:.4}, max d_H {:.3} mm",
                r.cycle_mean_dm(),
                r.cycle_mean_dice(),
                r.max_dh()
            );
        }
        Cmd::Experiment { name, out, replicates } => {
            let opts = ExperimentOptions {
                replicates,
                ..Default::default()
            };
            match commands::cmd_experiment(&name, &out, &opts)? {
                ExperimentOutput::Groups { report, .. } => print!("{}", commands::experiment_table(&report)),
                ExperimentOutput::Methods(mc) => println!("Dice gap {:.4}", mc.dice_gap),
            }
        }
        Cmd::Serve { port, data_root } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| lv4d::CliError::io(&data_root, e))?;
            rt.block_on(lv4d::service::serve(port, data_root.clone()))
                .map_err(|e| lv4d::CliError::io(&data_root, e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {}", e.rule(), e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
