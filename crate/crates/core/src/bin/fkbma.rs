use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fkbma::config::{load_config, McmcProfile};
use fkbma::harness::{emit_results, run_study};
use fkbma::scenario::Scenario;

#[derive(Parser)]
#[command(name = "fkbma", version, about = "Adaptive-enrichment trial simulation with free-knot spline model averaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicated trials and write trials.csv, summary.csv and config.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// MCMC length preset; overrides the file's burn-in, draws and thinning.
        #[arg(long, value_enum)]
        profile: Option<McmcProfile>,
    },
    /// List scenario ids with their true subgroup prevalence and effect.
    Scenarios,
    /// Parse and check a configuration, printing the effective settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> fkbma::Result<()> {
    match cli.command {
        Command::Run { config, reps, seed, out, profile } => {
            let mut cfg = load_config(&config)?;
            if let Some(p) = profile {
                cfg.apply_profile(p);
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let output = run_study(&cfg)?;
            emit_results(&output, &cfg, &out)?;
            let oc = &output.all;
            let mut stdout = std::io::stdout().lock();
            // a closed pipe (e.g. `| head`) is not an error once results are on disk
            let _ = writeln!(
                stdout,
                "{}: power {:.3} ({:.3})  generalized {:.3}  markers {:.3}  accuracy {:.3}  mean n {:.1}  nonconverged {:.3}",
                cfg.scenario,
                oc.power,
                oc.power_se,
                oc.generalized_power,
                oc.correct_marker_rate,
                oc.accuracy,
                oc.mean_sample_size,
                oc.nonconvergence_rate
            );
            let _ = writeln!(stdout, "results written to {}", out.display());
        }
        Command::Scenarios => {
            for s in Scenario::all() {
                let (prev, delta) = s.reference_values();
                let tailoring: Vec<String> = s.true_tailoring().iter().map(|v| v.to_string()).collect();
                println!("{s:<18} prevalence {prev:.2}  delta {delta:.2}  tailoring {{{}}}", tailoring.join(", "));
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("{}", cfg.to_json()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
