//! `pseudogen`: synthesize labeled pseudo-datasets from a prompt-steered
//! language model, train a tiny task model on them, and evaluate dataset
//! quality and downstream accuracy.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pseudogen_cli::{
    parse_overrides, run_generate, run_prompting_baseline, run_quality, run_scaling_sweep,
    run_train_eval, AccessLog, CliError, RunConfig,
};

#[derive(Parser)]
#[command(name = "pseudogen", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled pseudo-dataset from the configured LM and prompts
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Generation worker threads (output is identical for any count)
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Config overrides, dot-path style: --decode.p=0.9
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Train the tiny task model on a pseudo-dataset and evaluate on gold test data
    TrainEval {
        #[arg(long)]
        config: PathBuf,
        /// Pseudo-dataset JSONL (its manifest.json must sit next to it)
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        gold_test: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Zero-shot baseline: classify gold test inputs by verbalizer likelihood
    Prompting {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gold_test: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Compare Self-BLEU diversity and validator correctness across datasets
    Quality {
        #[arg(long)]
        config: PathBuf,
        /// Labeled dataset, repeatable: --dataset greedy=out/greedy/dataset.jsonl
        #[arg(long = "dataset", value_name = "STRATEGY=PATH")]
        datasets: Vec<String>,
        /// Gold training data for the correctness validator
        #[arg(long)]
        gold_train: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Train/evaluate across dataset-size prefixes, 3 seeds per size
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        gold_test: PathBuf,
        /// Ascending sizes, comma separated: --sizes 200,2000
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Write the bundled toy world (corpus, trained LM, catalog, gold data, demo configs)
    MakeToyWorld {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(path: &std::path::Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let overrides = parse_overrides(overrides)?;
    RunConfig::load(path, &overrides)
}

fn parse_labeled_datasets(args: &[String]) -> Result<Vec<(String, PathBuf)>, CliError> {
    args.iter()
        .map(|arg| {
            arg.split_once('=')
                .map(|(label, path)| (label.to_string(), PathBuf::from(path)))
                .ok_or_else(|| CliError::Config {
                    field: "dataset".into(),
                    msg: format!("expected STRATEGY=PATH, got {arg:?}"),
                })
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let log = AccessLog::new();
    match cli.command {
        Command::Generate {
            config,
            workers,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let outcome = run_generate(&cfg, workers)?;
            let manifest = &outcome.dataset.manifest;
            println!(
                "generated {} / {} requested examples in {} attempts (task {})",
                manifest.achieved, manifest.requested, manifest.attempts, manifest.task
            );
            for (reason, count) in &manifest.rejections {
                println!("  rejected {count} as {reason}");
            }
            println!("wrote {}", outcome.paths.dataset.unwrap().display());
        }
        Command::TrainEval {
            config,
            dataset,
            gold_test,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let outcome = run_train_eval(&cfg, &dataset, &gold_test, &log)?;
            print!("{}", outcome.report.table());
            println!("wrote {}", outcome.paths.report.unwrap().display());
        }
        Command::Prompting {
            config,
            gold_test,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let (report, paths) = run_prompting_baseline(&cfg, &gold_test, &log)?;
            print!("{}", report.table());
            println!("wrote {}", paths.report.unwrap().display());
        }
        Command::Quality {
            config,
            datasets,
            gold_train,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let datasets = parse_labeled_datasets(&datasets)?;
            let (report, paths) = run_quality(&cfg, &datasets, &gold_train, &log)?;
            print!("{}", report.table());
            println!("wrote {}", paths.report.unwrap().display());
        }
        Command::Sweep {
            config,
            dataset,
            gold_test,
            sizes,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let (report, paths) = run_scaling_sweep(&cfg, &dataset, &gold_test, &sizes, &log)?;
            print!("{}", report.table());
            println!("wrote {}", paths.report.unwrap().display());
        }
        Command::MakeToyWorld { out, seed } => {
            let world = pseudogen_core::toyworld::build(seed);
            let paths = world.write_to_dir(&out).map_err(CliError::Data)?;
            println!(
                "wrote toy world (seed {seed}) under {}:",
                paths.dir.display()
            );
            println!("  catalog        {}", paths.catalog.display());
            println!("  toy LM         {}", paths.lm_model.display());
            println!("  gold data      {}", paths.gold_test.display());
            println!("  demo configs   {}", paths.config_sentiment.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pseudogen: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
