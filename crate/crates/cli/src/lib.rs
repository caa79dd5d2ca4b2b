//! Training, prediction and benchmark pipelines behind the `tir` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tir_core::data::{self, load, read_table, subsample, train_test_split, SUBSAMPLE_CAP};
use tir_core::doc::{self, ModelDoc};
use tir_core::metrics::{self, bootstrap_median_ci};
use tir_core::{evolve_run, DomainBox, ExpRange, GridSearchConfig, SearchConfig, Style, TargetSelector, TirExpr};

/// Inputs of one training run.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub dataset: PathBuf,
    pub target: TargetSelector,
    pub search: SearchConfig,
    pub train_ratio: f64,
    /// Choose the exponent range by cross-validation before the final run.
    pub grid_search: Option<GridSearchConfig>,
    /// Optional `name lo hi` file overriding the data-derived variable bounds.
    pub domains: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelText {
    pub infix: String,
    pub python: String,
    pub sexpr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub exp_range: ExpRange,
    pub mean_r2: Option<f64>,
}

/// Result document of `tir train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub r2_train: Option<f64>,
    pub r2_test: Option<f64>,
    pub mse_test: Option<f64>,
    pub mae_test: Option<f64>,
    pub size: usize,
    /// Wall-clock seconds of the final evolutionary run only (grid search
    /// excluded).
    pub runtime_seconds: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub rejected_rows: usize,
    pub budget: usize,
    pub penalty_active: bool,
    pub train_ratio: f64,
    pub seed: u64,
    pub config: SearchConfig,
    pub grid_search: Option<Vec<GridScore>>,
    pub model: ModelDoc,
    pub model_text: ModelText,
}

pub struct TrainOutput {
    pub report: RunReport,
    pub model: TirExpr<f64>,
}

fn opt(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

/// load -> split -> subsample -> (grid search) -> evolve -> test metrics.
pub fn train(opts: &TrainOptions) -> Result<TrainOutput> {
    let (ds, load_report) =
        load::<f64>(&opts.dataset, &opts.target).with_context(|| format!("loading {}", opts.dataset.display()))?;
    if ds.n() == 0 {
        bail!("{}: no usable rows", opts.dataset.display());
    }
    let seed = opts.search.seed;
    let (train, test) = train_test_split(&ds, opts.train_ratio, seed);
    if test.n() == 0 {
        eprintln!("warning: train ratio {} leaves an empty test set", opts.train_ratio);
    }
    let train = subsample(&train, SUBSAMPLE_CAP, seed);

    let mut search = opts.search.clone();
    search.validate()?;
    let mut grid = None;
    if let Some(gs) = &opts.grid_search {
        let gs = GridSearchConfig { seed, ..gs.clone() };
        let res = data::grid_search(&search, &gs, &train)?;
        search.exp_range = res.best;
        grid = Some(
            res.scores
                .into_iter()
                .map(|(exp_range, mean_r2)| GridScore { exp_range, mean_r2 })
                .collect(),
        );
    }

    let dbox = match &opts.domains {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut b = DomainBox::from_rows(&train.x, train.d());
            b.apply_overrides(&train.names, &text)?;
            Some(b)
        }
        None => None,
    };

    let started = Instant::now();
    let run = evolve_run(&search, &train, dbox)?;
    let runtime_seconds = started.elapsed().as_secs_f64();
    let model = run.best.expr;

    let test_pred = model.predict(&test.x);
    let report = RunReport {
        dataset: opts.dataset.display().to_string(),
        r2_train: opt(metrics::r2(&train.y, &model.predict(&train.x))),
        r2_test: opt(metrics::r2(&test.y, &test_pred)),
        mse_test: opt(metrics::mse(&test.y, &test_pred)),
        mae_test: opt(metrics::mae(&test.y, &test_pred)),
        size: model.size(),
        runtime_seconds,
        n_train: train.n(),
        n_test: test.n(),
        rejected_rows: load_report.rejected_rows,
        budget: run.budget,
        penalty_active: run.penalty_active,
        train_ratio: opts.train_ratio,
        seed,
        config: search,
        grid_search: grid,
        model: ModelDoc::from_model(&model),
        model_text: ModelText {
            infix: model.to_text(Style::Infix),
            python: model.to_text(Style::Python),
            sexpr: model.to_text(Style::SExpr),
        },
    };
    Ok(TrainOutput { report, model })
}

/// Path of the model document written next to a report.
pub fn model_path_for(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    report.with_file_name(format!("{stem}.model.json"))
}

/// Writes the report, the model document and a text file with the model
/// renderings.
pub fn write_train_output(out: &TrainOutput, report_path: &Path, model_path: &Path) -> Result<()> {
    fs::write(report_path, serde_json::to_string_pretty(&out.report)? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;
    fs::write(model_path, doc::serialize(&out.model) + "\n")
        .with_context(|| format!("writing {}", model_path.display()))?;
    let t = &out.report.model_text;
    let text = format!("infix: {}\npython: {}\nsexpr: {}\n", t.infix, t.python, t.sexpr);
    fs::write(model_path.with_extension("txt"), text)?;
    Ok(())
}

/// Reads a model from either a bare model document or a training report.
pub fn read_model(path: &Path) -> Result<TirExpr<f64>> {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&src).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(m) = value.get("model").filter(|_| value.get("g").is_none()) {
        let doc: ModelDoc = serde_json::from_value(m.clone())?;
        return Ok(doc.into_model()?);
    }
    Ok(doc::deserialize(&src)?)
}

pub struct Predictions {
    pub values: Vec<f64>,
    pub non_finite: usize,
}

/// Predicts every row of a CSV/TSV file.
///
/// The file may hold exactly the model's features, or the features plus a
/// column named `target_name` which is ignored. Rows with unparsable cells
/// predict `NaN`.
pub fn predict_file(model: &TirExpr<f64>, data: &Path, target_name: &str) -> Result<Predictions> {
    let empty = Predictions {
        values: Vec::new(),
        non_finite: 0,
    };
    if fs::metadata(data)
        .with_context(|| format!("reading {}", data.display()))?
        .len()
        == 0
    {
        return Ok(empty);
    }
    let table = read_table(data)?;
    if table.rows.is_empty() {
        return Ok(empty);
    }
    let d = model.dim();
    let ncol = table.header.len();
    let drop = match d {
        Some(d) if ncol == d => None,
        Some(d) if ncol == d + 1 => match table.header.iter().position(|h| h == target_name) {
            Some(i) => Some(i),
            None => bail!("{}: {ncol} columns for a model with {d} variables", data.display()),
        },
        Some(d) => bail!("{}: {ncol} columns for a model with {d} variables", data.display()),
        None => table.header.iter().position(|h| h == target_name),
    };
    let values: Vec<f64> = table
        .rows
        .iter()
        .map(|row| match row {
            Some(r) => {
                let x: Vec<f64> = r
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| Some(i) != drop)
                    .map(|(_, &v)| v)
                    .collect();
                model.eval(&x)
            }
            None => f64::NAN,
        })
        .collect();
    let non_finite = values.iter().filter(|v| !v.is_finite()).count();
    Ok(Predictions { values, non_finite })
}

/// One value per line; non-finite values are written as `NaN`.
pub fn format_predictions(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| {
            if v.is_finite() {
                format!("{v:?}\n")
            } else {
                "NaN\n".to_string()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub target: TargetSelector,
}

/// One dataset per line: `path [target]`. Relative paths resolve against the
/// manifest's directory; `#` starts a comment.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for line in src.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let file = PathBuf::from(parts.next().unwrap());
        let target = parts
            .next()
            .map_or_else(TargetSelector::default, |t| t.parse().unwrap());
        let path = if file.is_absolute() { file } else { base.join(file) };
        out.push(ManifestEntry { path, target });
    }
    if out.is_empty() {
        bail!("{}: manifest lists no datasets", path.display());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub seeds: Vec<u64>,
    /// Test R^2 per seed; `None` when undefined for that run.
    pub r2_test: Vec<Option<f64>>,
    pub median_r2_test: Option<f64>,
    pub median_size: Option<f64>,
    pub median_runtime_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub median_of_medians: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub bootstrap_iterations: usize,
    pub confidence_level: f64,
    pub bootstrap_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub datasets: Vec<DatasetSummary>,
    pub summary: BenchmarkSummary,
}

pub const BOOTSTRAP_ITERATIONS: usize = 1000;
pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// Aggregates per-dataset test R^2 values (one inner vector per dataset):
/// median per dataset, then the median of those medians with a percentile
/// bootstrap interval.
pub fn summarize(per_dataset: &[Vec<f64>], bootstrap_seed: u64) -> (Vec<Option<f64>>, BenchmarkSummary) {
    let medians: Vec<Option<f64>> = per_dataset.iter().map(|v| metrics::median(v)).collect();
    let present: Vec<f64> = medians.iter().flatten().copied().collect();
    let ci = bootstrap_median_ci(&present, BOOTSTRAP_ITERATIONS, CONFIDENCE_LEVEL, bootstrap_seed);
    let summary = BenchmarkSummary {
        median_of_medians: ci.map(|c| c.estimate),
        ci_lo: ci.map(|c| c.lo),
        ci_hi: ci.map(|c| c.hi),
        bootstrap_iterations: BOOTSTRAP_ITERATIONS,
        confidence_level: CONFIDENCE_LEVEL,
        bootstrap_seed,
    };
    (medians, summary)
}

/// Trains every manifest dataset once per seed.
pub fn benchmark(
    entries: &[ManifestEntry],
    seeds: &[u64],
    template: &TrainOptions,
    bootstrap_seed: u64,
) -> Result<BenchmarkReport> {
    if seeds.is_empty() {
        bail!("benchmark needs at least one seed");
    }
    let jobs: Vec<(usize, u64)> = (0..entries.len())
        .flat_map(|d| seeds.iter().map(move |&s| (d, s)))
        .collect();
    let runs: Vec<Result<RunReport>> = jobs
        .par_iter()
        .map(|&(d, seed)| {
            let mut opts = template.clone();
            opts.dataset = entries[d].path.clone();
            opts.target = entries[d].target.clone();
            opts.search.seed = seed;
            train(&opts).map(|o| o.report)
        })
        .collect();

    let mut datasets = Vec::new();
    let mut r2s = Vec::new();
    for (d, entry) in entries.iter().enumerate() {
        let reports: Vec<&RunReport> = runs[d * seeds.len()..(d + 1) * seeds.len()]
            .iter()
            .map(|r| {
                r.as_ref()
                    .map_err(|e| anyhow::anyhow!("{}: {e:#}", entry.path.display()))
            })
            .collect::<Result<_>>()?;
        let r2_test: Vec<Option<f64>> = reports.iter().map(|r| r.r2_test).collect();
        let sizes: Vec<f64> = reports.iter().map(|r| r.size as f64).collect();
        let times: Vec<f64> = reports.iter().map(|r| r.runtime_seconds).collect();
        r2s.push(r2_test.iter().flatten().copied().collect::<Vec<f64>>());
        datasets.push(DatasetSummary {
            dataset: entry.path.display().to_string(),
            seeds: seeds.to_vec(),
            r2_test,
            median_r2_test: None,
            median_size: metrics::median(&sizes),
            median_runtime_seconds: metrics::median(&times),
        });
    }
    let (medians, summary) = summarize(&r2s, bootstrap_seed);
    for (ds, m) in datasets.iter_mut().zip(medians) {
        ds.median_r2_test = m;
    }
    Ok(BenchmarkReport { datasets, summary })
}

/// Tab-separated view of a benchmark report.
pub fn benchmark_table(report: &BenchmarkReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    let mut out = String::from("dataset\tmedian_r2_test\tmedian_size\tmedian_runtime_seconds\n");
    for d in &report.datasets {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            d.dataset,
            fmt(d.median_r2_test),
            fmt(d.median_size),
            fmt(d.median_runtime_seconds)
        ));
    }
    let s = &report.summary;
    out.push_str(&format!(
        "# median of medians {} [{}, {}] ({} bootstrap resamples, {:.0}% interval)\n",
        fmt(s.median_of_medians),
        fmt(s.ci_lo),
        fmt(s.ci_hi),
        s.bootstrap_iterations,
        s.confidence_level * 100.0
    ));
    out
}
