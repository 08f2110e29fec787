use clap::{Parser, Subcommand, ValueEnum};
use jointplan::behavioral::evaluate_candidates;
use jointplan::costing::WeightScheme;
use jointplan::harness::config::{load_config, Config};
use jointplan::harness::io::{
    load_any_weights, load_dataset, load_scenario, save_checkpoint, save_demo, save_plan,
    save_scenario, save_weights, write_log, write_text,
};
use jointplan::harness::metrics::{evaluate, InferenceMode};
use jointplan::harness::plot::render;
use jointplan::harness::synthetic::{expert_demo, expert_weights, generate, Template};
use jointplan::learning::train;
use jointplan::planner::plan_with_candidates;
use jointplan::PlanError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Joint behavioral and trajectory planner.
#[derive(Parser)]
#[command(name = "jointplan", version)]
struct Cli {
    /// Config file; falls back to $JOINTPLAN_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one scenario and write the plan file.
    Plan {
        scenario: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Plan output path.
        #[arg(long, default_value = "plan.json")]
        out: PathBuf,
        /// Also write an SVG figure.
        #[arg(long)]
        emit_plot: Option<PathBuf>,
    },
    /// Learn weights from a directory of demonstrations.
    Train {
        dataset: PathBuf,
        /// Config holding the learning settings.
        train_config: PathBuf,
        /// Initial weights; defaults to the built-in hand-tuned set.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value = "train_out")]
        out_dir: PathBuf,
        /// Share of demonstrations held out for validation.
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
    },
    /// Score a weight set on a directory of demonstrations.
    Eval {
        dataset: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Report path (JSON); the text table goes next to it with a .txt extension.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Joint)]
        mode: Mode,
    },
    /// Generate synthetic scenarios or expert demonstrations.
    Gen {
        /// Template name, or "all" to cycle through every template.
        #[arg(long)]
        template: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write demonstrations driven by the expert weights instead of bare scenarios.
        #[arg(long)]
        expert: bool,
        /// Weights driving the expert; defaults to the built-in hidden set.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Discrete,
    Joint,
}

fn weights_or_default(path: Option<&Path>) -> Result<WeightScheme, PlanError> {
    match path {
        Some(p) => load_any_weights(p),
        None => Ok(WeightScheme::default_shared()),
    }
}

fn run(cli: Cli) -> Result<(), PlanError> {
    let cfg: Config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Plan {
            scenario,
            weights,
            out,
            emit_plot,
        } => {
            let sc = load_scenario(&scenario)?;
            let w = weights_or_default(weights.as_deref())?;
            let p = &cfg.planner;
            let sets = evaluate_candidates(&sc, &p.path, &p.grid, &p.cost)?;
            let plan = plan_with_candidates(&sc, &sets, &w, p)?;
            save_plan(&out, &sc, &plan)?;
            if let Some(svg) = emit_plot {
                write_text(&svg, &render(&sc, &sets, &plan, 150))?;
            }
            log::info!(
                "{}: {} candidate {} cost {:.3} -> {:.3}",
                sc.name,
                plan.decision.behavior.kind.name(),
                plan.decision.candidate_index,
                plan.refined.f_initial,
                plan.refined.f_final
            );
        }
        Command::Train {
            dataset,
            train_config,
            weights,
            out_dir,
            val_fraction,
        } => {
            let tc = load_config(Some(&train_config))?;
            let demos = load_dataset(&dataset)?;
            if demos.len() < 2 {
                return Err(PlanError::InvalidScenario(format!(
                    "{} holds {} demonstrations, training needs at least 2",
                    dataset.display(),
                    demos.len()
                )));
            }
            let n_val =
                ((demos.len() as f64 * val_fraction).round() as usize).clamp(1, demos.len() - 1);
            let (tr, va) = demos.split_at(demos.len() - n_val);
            let init = weights_or_default(weights.as_deref())?;
            let report = train(tr, va, &init, &tc.learn, &tc.planner)?;
            save_checkpoint(&out_dir.join("checkpoint.json"), &report.best)?;
            save_weights(&out_dir.join("weights.json"), &report.best.weights)?;
            write_log(&out_dir.join("train_log.jsonl"), &report.log)?;
            log::info!("best validation at step {}", report.best.step);
        }
        Command::Eval {
            dataset,
            weights,
            out,
            mode,
        } => {
            let demos = load_dataset(&dataset)?;
            let w = weights_or_default(weights.as_deref())?;
            let mode = match mode {
                Mode::Discrete => InferenceMode::Discrete,
                Mode::Joint => InferenceMode::Joint,
            };
            let (report, rows) = evaluate(&demos, &w, &cfg.planner, mode);
            let doc = serde_json::json!({ "schema": 1, "report": report, "scenarios": rows });
            let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
            text.push('\n');
            write_text(&out, &text)?;
            let table = report.to_text(match mode {
                InferenceMode::Discrete => "discrete",
                InferenceMode::Joint => "joint",
            });
            write_text(&out.with_extension("txt"), &table)?;
            print!("{table}");
        }
        Command::Gen {
            template,
            seed,
            count,
            out,
            expert,
            weights,
        } => {
            let templates: Vec<Template> = if template == "all" {
                Template::ALL.to_vec()
            } else {
                vec![template.parse()?]
            };
            let w = match weights {
                Some(p) => load_any_weights(&p)?,
                None => expert_weights(),
            };
            for i in 0..count {
                let t = templates[i % templates.len()];
                let s = seed.wrapping_add(i as u64);
                let sc = generate(t, s);
                let name = format!("{t}-{s:05}.json");
                if expert {
                    let (demo, _) = expert_demo(&sc, &sc.name, &w, &cfg.planner)?;
                    save_demo(&out.join(name), &demo)?;
                } else {
                    save_scenario(&out.join(name), &sc)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
