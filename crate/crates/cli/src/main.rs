use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use hypergen::arch::{infer_task_type, parse_hint, RuleTable};
use hypergen::artifact::{load_checkpoint, save_checkpoint, save_model};
use hypergen::baselines::Method;
use hypergen::config::RunConfig;
use hypergen::data::{load_csv_task, sample_rows, CsvSchema, LabelColumn};
use hypergen::experiment::{load_task_set, run_experiment};
use hypergen::init_study::{weight_init_study, InitStudy};
use hypergen::requirement::{
    build_prompt, fallback_template, summarize, HttpChatClient, Modality, PromptTemplate, Requirement,
    RequirementSource, TaskMeta, UserInput, DEFAULT_MAX_ROWS,
};
use hypergen::trainer::train_with_report;
use hypergen::{Error, Result};

/// Synthetic tasks generated for `--tasks synthetic`.
const SYNTHETIC_TASKS: usize = 6;

#[derive(Parser)]
#[command(name = "hypergen", version, about = "Generate small MLPs from one-sentence task requirements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a hypernetwork checkpoint on a set of tasks.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `synthetic`, a CSV file, or a directory of CSVs (label last).
        #[arg(long)]
        tasks: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a model from a requirement sentence.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        requirement: String,
        #[arg(long)]
        out: PathBuf,
        /// Feature count, when the sentence does not state it.
        #[arg(long)]
        features: Option<usize>,
        /// Class count, when the sentence does not state it.
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Run methods over tasks and write report.csv and report.md.
    Bench {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// `synthetic`, `synthetic-shifted`, a CSV file, or a directory of CSVs.
        #[arg(long)]
        tasks: String,
        #[arg(long, value_delimiter = ',', default_value = "finetune,lora,modelgpt,modelgpt_f")]
        methods: Vec<Method>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Compare finetuning from a generated init against fresh inits.
    InitStudy {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Print the requirement sentence for a CSV dataset.
    Requirement {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        description: Option<String>,
        /// Ask the configured chat model; needs MODELGPT_LLM_KEY.
        #[arg(long)]
        llm: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { config, tasks, out } => {
            let cfg = load_config(config.as_deref())?;
            let pairs = load_task_set(&tasks, cfg.train.seed, SYNTHETIC_TASKS)?;
            log::info!("training on {} tasks", pairs.len());
            let report = train_with_report(&pairs, &cfg.train)?;
            save_checkpoint(&report.checkpoint, &out)?;
            println!(
                "checkpoint {} (epoch {}, eval loss {:.6}) -> {}",
                report.checkpoint.id(),
                report.checkpoint.epoch,
                report.checkpoint.avg_eval_loss,
                out.display()
            );
            Ok(())
        }
        Command::Generate {
            ckpt,
            requirement,
            out,
            features,
            classes,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let req = Requirement::new(&requirement, RequirementSource::Template)?;
            let rules = RuleTable::default();
            let meta = match features {
                Some(n_features) => {
                    let kind = parse_hint(req.sentence(), &rules)
                        .kind
                        .ok_or_else(|| Error::UnrecognizedRequirement(req.sentence().to_string()))?;
                    Some(TaskMeta {
                        kind,
                        n_features,
                        n_classes: classes,
                        domain_tag: None,
                    })
                }
                None if classes.is_some() => return Err(Error::input("--classes needs --features")),
                None => None,
            };
            let task = infer_task_type(&req, meta.as_ref(), &rules)?;
            let model = ckpt.generate_for_task(&req, &task, timestamp()?)?;
            save_model(&model, &out)?;
            println!("{}", model.spec.to_text().trim_end());
            println!("checkpoint_id={}", model.provenance.checkpoint_id);
            Ok(())
        }
        Command::Bench {
            ckpt,
            tasks,
            methods,
            config,
            report,
        } => {
            let cfg = load_config(config.as_deref())?;
            let ckpt = ckpt.as_deref().map(load_checkpoint).transpose()?;
            let (profile, seed) = match &ckpt {
                Some(c) => (c.config.profile(), c.config.seed),
                None => (cfg.train.profile(), cfg.train.seed),
            };
            let pairs = load_task_set(&tasks, seed, SYNTHETIC_TASKS)?;
            let r = run_experiment(&pairs, &methods, ckpt.as_ref(), &profile, &cfg.baseline)?;
            std::fs::create_dir_all(&report)?;
            std::fs::write(report.join("report.csv"), r.to_csv())?;
            let md = r.to_markdown();
            std::fs::write(report.join("report.md"), &md)?;
            print!("{md}");
            Ok(())
        }
        Command::InitStudy {
            ckpt,
            task,
            seeds,
            config,
            report,
        } => {
            if seeds == 0 {
                return Err(Error::input("--seeds must be at least 1"));
            }
            let cfg = load_config(config.as_deref())?;
            let ckpt = load_checkpoint(&ckpt)?;
            let ds = load_csv_task(&task, &CsvSchema::classification_last(ckpt.config.seed))?;
            let req = fallback_template(&ds.meta())?;
            let model = ckpt.generate_for_task(&req, &ds.task, timestamp()?)?;
            let seeds: Vec<u64> = (1..=seeds).collect();
            let study = weight_init_study(
                &model.params,
                &ds,
                &ckpt.config.profile(),
                &cfg.baseline,
                &seeds,
                cfg.baseline.epochs,
            )?;
            write_study(&study, &report)?;
            print!("{}", study.summary_markdown());
            Ok(())
        }
        Command::Requirement {
            data,
            description,
            llm,
            config,
        } => {
            let ds = load_csv_task(&data, &CsvSchema::classification_last(0))?;
            let template = fallback_template(&ds.meta())?;
            let req = if llm {
                let cfg = load_config(config.as_deref())?;
                match ask_llm(&data, description, &cfg) {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("requirement generator failed ({e}); using the template sentence");
                        template
                    }
                }
            } else {
                template
            };
            println!("{}", req.sentence());
            Ok(())
        }
    }
}

fn ask_llm(data: &Path, description: Option<String>, cfg: &RunConfig) -> Result<Requirement> {
    let input = UserInput {
        description,
        data_sample: sample_rows(data, &LabelColumn::Last, DEFAULT_MAX_ROWS)?,
        modality: Modality::Tabular,
    };
    let prompt = build_prompt(&input, &PromptTemplate::builtin(Modality::Tabular), DEFAULT_MAX_ROWS)?;
    let client = HttpChatClient::from_config(&cfg.llm)?;
    summarize(&prompt, &client)
}

fn write_study(study: &InitStudy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("curves_generated.csv"), InitStudy::curves_csv(&study.ours))?;
    std::fs::write(dir.join("curves_fresh.csv"), InitStudy::curves_csv(&study.baseline))?;
    std::fs::write(dir.join("summary.md"), study.summary_markdown())?;
    Ok(())
}

/// `SOURCE_DATE_EPOCH` when set, so repeated runs produce identical files.
fn timestamp() -> Result<u64> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("SOURCE_DATE_EPOCH={v:?} is not an integer"))),
        Err(_) => Ok(SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)),
    }
}
