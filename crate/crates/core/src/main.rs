use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use conformity::report::{export_tables, render_all};
use conformity::runner::{self, Experiment, RunConfig, RunOptions, RunnerError};
use conformity::stimgen::{build_pool, DifficultyLadder, TaskKind};

#[derive(Parser)]
#[command(name = "conformity", version, about = "Conformity experiments for multimodal agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a ten-level stimulus pool with its manifest.
    GenStimuli {
        #[arg(long)]
        task: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        per_level: u32,
        /// JSON file with a custom difficulty ladder.
        #[arg(long)]
        ladder: Option<PathBuf>,
    },
    /// Print a default run configuration.
    InitConfig {
        #[arg(long, default_value = "line_judgment")]
        task: String,
        #[arg(long, default_value = "group_size")]
        experiment: String,
        #[arg(long, default_value = "runs/default")]
        output_dir: PathBuf,
    },
    /// Build the baseline-filtered pool for a run configuration.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Calibrate if needed and run (or resume) the configured experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Stop after this many new trials.
        #[arg(long)]
        max_trials: Option<usize>,
    },
    /// Aggregate the trial log into CSV tables and analysis.json.
    Analyze {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render SVG figures from the analysis tables.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Analysis directory, when no config is given.
        #[arg(long)]
        analysis: Option<PathBuf>,
        /// Figure directory, when no config is given.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_task(s: &str) -> Result<TaskKind, RunnerError> {
    TaskKind::from_slug(s).ok_or_else(|| {
        RunnerError::Config(format!("unknown task {s:?}; expected line_judgment, color_recognition or dots_estimation"))
    })
}

fn parse_experiment(s: &str) -> Result<Experiment, RunnerError> {
    Experiment::ALL
        .into_iter()
        .find(|e| e.slug() == s)
        .ok_or_else(|| RunnerError::Config(format!("unknown experiment {s:?}")))
}

fn execute(cli: Cli) -> Result<(), RunnerError> {
    match cli.command {
        Command::GenStimuli { task, out, seed, per_level, ladder } => {
            let task = parse_task(&task)?;
            let ladder = match ladder {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
                    serde_json::from_str::<DifficultyLadder>(&text)
                        .map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?
                }
                None => DifficultyLadder::default_for(task),
            }
            .with_per_level_count(per_level);
            let rows = build_pool(task, &ladder, seed, &out)?;
            println!("wrote {} stimuli to {}", rows.len(), out.display());
        }
        Command::InitConfig { task, experiment, output_dir } => {
            let cfg = RunConfig {
                task: parse_task(&task)?,
                experiment: parse_experiment(&experiment)?,
                output_dir,
                ..RunConfig::default()
            };
            cfg.validate()?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        }
        Command::Calibrate { config } => {
            let cfg = RunConfig::load(&config)?;
            runner::check_state(&cfg)?;
            let agent = cfg.agent.build(cfg.keep_raw)?;
            let pool = runner::prepare_pool(&cfg, agent.as_ref())?;
            println!(
                "pool of {} stimuli in {} ({} candidates evaluated, acceptance rate {})",
                pool.len(),
                pool.dir.display(),
                pool.summary.candidates_evaluated,
                pool.summary.acceptance_rate.map_or("n/a".into(), |r| format!("{r:.4}"))
            );
        }
        Command::Run { config, max_trials } => {
            let cfg = RunConfig::load(&config)?;
            let agent = cfg.agent.build(cfg.keep_raw)?;
            let summary = runner::run_experiment(&cfg, agent.as_ref(), RunOptions { max_new_trials: max_trials })?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            if summary.failed > 0 {
                return Err(RunnerError::Transport(format!(
                    "{} trials failed after retry; rerun to retry them",
                    summary.failed
                )));
            }
        }
        Command::Analyze { config } => {
            let cfg = RunConfig::load(&config)?;
            let report = runner::analyze(&cfg)?;
            let written = export_tables(&report, &cfg.analysis_dir())
                .map_err(|e| RunnerError::DataQuality(e.to_string()))?;
            for path in written {
                println!("{}", path.display());
            }
        }
        Command::Report { config, analysis, out } => {
            let (analysis_dir, figures_dir, title) = match (config, analysis) {
                (Some(path), _) => {
                    let cfg = RunConfig::load(&path)?;
                    let title = format!("{} / {}", cfg.task.slug(), cfg.experiment.slug());
                    (cfg.analysis_dir(), out.unwrap_or_else(|| cfg.figures_dir()), title)
                }
                (None, Some(dir)) => {
                    let figures = out.unwrap_or_else(|| dir.join("figures"));
                    (dir, figures, "conformity".to_string())
                }
                (None, None) => return Err(RunnerError::Config("report needs --config or --analysis".into())),
            };
            let written = render_all(&analysis_dir, &figures_dir, &title)
                .map_err(|e| RunnerError::DataQuality(e.to_string()))?;
            if written.is_empty() {
                return Err(RunnerError::DataQuality(format!("no tables found in {}", analysis_dir.display())));
            }
            for path in written {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
