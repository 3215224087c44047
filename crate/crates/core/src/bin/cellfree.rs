use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cellfree::fronthaul::plan_fronthaul;
use cellfree::harness::{emit_outputs, run_experiment, ExperimentSpec, TrialStatus};
use cellfree::optimizer::Variant;
use cellfree::scenario::{build_deployment, validate_config, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "cellfree",
    version,
    about = "End-to-end power minimization for cell-free massive MIMO with wireless fronthaul"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials of the selected algorithms and write CSV results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Base seed; trial i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated subset of e2e, ap_shutdown, txmin.
        #[arg(long, default_value = "e2e,ap_shutdown,txmin", value_delimiter = ',')]
        algos: Vec<String>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Worker threads, 0 for all cores.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Check a config file against the scenario invariants.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the fronthaul AP grouping of one deployment.
    Group {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, String> {
    ScenarioConfig::from_file(path).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run {
            config,
            trials,
            seed,
            algos,
            out,
            workers,
        } => {
            let config = load(&config)?;
            let algorithms = algos
                .iter()
                .map(|name| Variant::from_name(name.trim()).ok_or_else(|| format!("unknown algorithm '{name}'")))
                .collect::<Result<Vec<_>, _>>()?;
            let mut spec = ExperimentSpec::new(config, trials, out);
            spec.base_seed = seed;
            spec.algorithms = algorithms;
            spec.workers = workers;
            let (records, summary) = run_experiment(&spec).map_err(|e| e.to_string())?;
            emit_outputs(&records, &summary, &spec).map_err(|e| e.to_string())?;
            println!(
                "{} trials, {} included, {} excluded; results in {}",
                summary.trials,
                summary.included,
                summary.excluded,
                spec.out_dir.display()
            );
            for a in &summary.algorithms {
                println!(
                    "{:<12} total {:9.2} W  radio {:9.2} W  cloud {:8.2} W  APs {:5.2}  antennas {:6.2}",
                    a.algorithm.name(),
                    a.total.mean,
                    a.radio.mean,
                    a.cloud.mean,
                    a.active_aps,
                    a.active_antennas
                );
            }
            for &baseline in &spec.algorithms {
                if let Some(s) = summary
                    .savings_percent(Variant::EndToEnd, baseline)
                    .filter(|_| baseline != Variant::EndToEnd)
                {
                    println!("e2e saves {s:.1} % vs {baseline}");
                }
            }
            let errors = records
                .iter()
                .flat_map(|r| &r.results)
                .filter(|a| a.status == TrialStatus::Error)
                .count();
            if errors > 0 {
                eprintln!("{errors} runs ended in errors");
            }
            Ok(errors == 0)
        }
        Command::Validate { config } => {
            let config = load(&config)?;
            let violations = validate_config(&config);
            if violations.is_empty() {
                println!("config ok");
            }
            for v in &violations {
                println!("violation: {v}");
            }
            Ok(violations.is_empty())
        }
        Command::Group { config, seed } => {
            let config = load(&config)?;
            let deployment = build_deployment(&config, seed).map_err(|e| e.to_string())?;
            let plan = plan_fronthaul(&deployment, &config).map_err(|e| e.to_string())?;
            for (i, members) in plan.grouping.groups.iter().enumerate() {
                println!("group {i}: {members:?}");
            }
            println!("varsigma = {:.6}", plan.grouping.objective);
            for (l, gain) in plan.zf_gain.iter().enumerate() {
                println!("ap {l:2}: zf gain {gain:.4e}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
