use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tir_cli::{
    benchmark, benchmark_table, format_predictions, model_path_for, predict_file, read_manifest, read_model, train,
    write_train_output, TrainOptions,
};
use tir_core::{ExpRange, GridSearchConfig, InvertibleFn, PenaltyRule, SearchConfig, TargetSelector, TransformFn};

#[derive(Parser)]
#[command(
    name = "tir",
    version,
    about = "Symbolic regression with transformation-interaction-rational models"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a model on a dataset and write a JSON report.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        params: SearchArgs,
        /// Report file.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Model document; defaults to `<report stem>.model.json`.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Print one prediction per input row.
    Predict {
        /// Model document or training report.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Name of a target column to ignore if present.
        #[arg(long, default_value = "target")]
        target: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every dataset of a manifest with several seeds.
    Benchmark {
        /// Lines of `path [target]`, relative to the manifest.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
        seeds: Vec<u64>,
        /// Repeat the seed list this many times.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        bootstrap_seed: u64,
        #[command(flatten)]
        params: SearchArgs,
        #[arg(long, default_value = "benchmark.json")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct SearchArgs {
    /// Target column name or index.
    #[arg(long, default_value = "target")]
    target: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    pop: usize,
    #[arg(long, default_value_t = 500)]
    gens: usize,
    #[arg(long, default_value_t = 0.3)]
    pc: f64,
    #[arg(long, default_value_t = 0.7)]
    pm: f64,
    /// Maximum number of terms; derived from the training size when absent.
    #[arg(long)]
    budget: Option<usize>,
    /// Exponent range such as `(-2,2)`.
    #[arg(long, default_value = "(-1,1)", allow_hyphen_values = true)]
    exp_range: ExpRange,
    #[arg(long, value_enum, default_value = "off")]
    grid_search: Toggle,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    cv_pop: usize,
    #[arg(long, default_value_t = 20)]
    cv_gens: usize,
    /// none, samples, dim or points.
    #[arg(long, default_value = "none")]
    penalty_rule: PenaltyRule,
    #[arg(long, default_value_t = 0.01)]
    penalty_c: f64,
    #[arg(long, default_value_t = 0.8)]
    train_ratio: f64,
    /// Comma separated inner functions.
    #[arg(long, value_delimiter = ',')]
    transforms: Option<Vec<String>>,
    /// Comma separated outer functions.
    #[arg(long, value_delimiter = ',')]
    outer: Option<Vec<String>>,
    /// File of `name lo hi` lines bounding variables.
    #[arg(long)]
    domains: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
}

impl SearchArgs {
    fn options(&self, dataset: PathBuf) -> Result<TrainOptions> {
        let mut search = SearchConfig {
            pop_size: self.pop,
            generations: self.gens,
            pc: self.pc,
            pm: self.pm,
            budget: self.budget,
            exp_range: self.exp_range,
            penalty_rule: self.penalty_rule,
            penalty_c: self.penalty_c,
            seed: self.seed,
            ..SearchConfig::default()
        };
        if let Some(names) = &self.transforms {
            search.transform_set = names
                .iter()
                .map(|n| TransformFn::from_name(n).ok_or_else(|| anyhow!("unknown function '{n}'")))
                .collect::<Result<_>>()?;
        }
        if let Some(names) = &self.outer {
            search.invertible_set = names
                .iter()
                .map(|n| InvertibleFn::from_name(n).ok_or_else(|| anyhow!("unknown outer function '{n}'")))
                .collect::<Result<_>>()?;
        }
        search.validate()?;
        if !(self.train_ratio > 0.0 && self.train_ratio <= 1.0) {
            return Err(anyhow!("train ratio must lie in (0, 1], got {}", self.train_ratio));
        }
        let grid_search = match self.grid_search {
            Toggle::On => Some(GridSearchConfig {
                folds: self.folds,
                cv_pop: self.cv_pop,
                cv_gens: self.cv_gens,
                ..GridSearchConfig::default()
            }),
            Toggle::Off => None,
        };
        Ok(TrainOptions {
            dataset,
            target: self.target.parse::<TargetSelector>().unwrap(),
            search,
            train_ratio: self.train_ratio,
            grid_search,
            domains: self.domains.clone(),
        })
    }

    fn init_threads(&self) -> Result<()> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            dataset,
            params,
            out,
            model_out,
        } => {
            params.init_threads()?;
            let opts = params.options(dataset)?;
            let result = train(&opts)?;
            let model_path = model_out.unwrap_or_else(|| model_path_for(&out));
            write_train_output(&result, &out, &model_path)?;
            let r = &result.report;
            let show = |v: Option<f64>| v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"));
            println!(
                "r2_train={} r2_test={} size={} time={:.2}s",
                show(r.r2_train),
                show(r.r2_test),
                r.size,
                r.runtime_seconds
            );
            println!("{}", r.model_text.infix);
        }
        Command::Predict {
            model,
            data,
            target,
            out,
        } => {
            let m = read_model(&model)?;
            let preds = predict_file(&m, &data, &target)?;
            if preds.non_finite > 0 {
                eprintln!("warning: {} rows produced NaN", preds.non_finite);
            }
            let text = format_predictions(&preds.values);
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().lock().write_all(text.as_bytes())?,
            }
        }
        Command::Benchmark {
            manifest,
            seeds,
            repeats,
            bootstrap_seed,
            params,
            out,
        } => {
            params.init_threads()?;
            let entries = read_manifest(&manifest)?;
            let template = params.options(PathBuf::new())?;
            let seeds: Vec<u64> = (0..repeats.max(1)).flat_map(|_| seeds.iter().copied()).collect();
            let report = benchmark(&entries, &seeds, &template, bootstrap_seed)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            print!("{}", benchmark_table(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
