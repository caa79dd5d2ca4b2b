//! Datasets, splits and cross-validated choice of the exponent range.

use std::fs::File;
use std::io::{BufReader, Read};
use std::ops::Range;
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::TirError;
use crate::evolve::{evolve_run, ExpRange, SearchConfig};
use crate::metrics::r2;
use crate::scalar::Scalar;

/// Share of the training rows used for fitting, and (from the other end)
/// for validation.
pub const OVERLAP_FRACTION: f64 = 0.9;

/// Training sets larger than this are subsampled.
pub const SUBSAMPLE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    /// Row-major samples, `n` rows of `d` values.
    pub x: Vec<Vec<T>>,
    pub y: Vec<T>,
    pub names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Vec<Vec<T>>, y: Vec<T>, names: Vec<String>) -> Result<Self, TirError> {
        if x.len() != y.len() {
            return Err(TirError::Data(format!("{} rows but {} targets", x.len(), y.len())));
        }
        if let Some(r) = x.iter().find(|r| r.len() != names.len()) {
            return Err(TirError::Data(format!(
                "row of length {} for {} columns",
                r.len(),
                names.len()
            )));
        }
        Ok(Self { x, y, names })
    }

    /// Unnamed dataset with columns `x0, x1, ...`.
    pub fn from_rows(x: Vec<Vec<T>>, y: Vec<T>) -> Result<Self, TirError> {
        let d = x.first().map_or(0, Vec::len);
        Self::new(x, y, (0..d).map(|i| format!("x{i}")).collect())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            names: self.names.clone(),
        }
    }
}

/// Which column holds the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSelector {
    Name(String),
    Index(usize),
}

impl Default for TargetSelector {
    fn default() -> Self {
        TargetSelector::Name("target".into())
    }
}

impl std::str::FromStr for TargetSelector {
    type Err = std::convert::Infallible;

    /// A bare integer selects by index, anything else by name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse() {
            Ok(i) => TargetSelector::Index(i),
            Err(_) => TargetSelector::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadReport {
    /// Rows skipped because a cell was missing, non-numeric or not finite.
    pub rejected_rows: usize,
}

/// Header and rows of a delimited table. A row is `None` when one of its
/// cells is not a finite number.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl Table {
    pub fn rejected_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_none()).count()
    }
}

fn open_text(path: &Path) -> Result<Box<dyn Read>, TirError> {
    let file = BufReader::new(File::open(path)?);
    let name = path.to_string_lossy();
    Ok(if name.ends_with(".gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    })
}

fn delimiter_for(path: &Path) -> u8 {
    let name = path.to_string_lossy();
    let stem = name.strip_suffix(".gz").unwrap_or(&name);
    if stem.ends_with(".tsv") || stem.ends_with(".tab") {
        b'\t'
    } else {
        b','
    }
}

/// Reads a CSV/TSV file (optionally gzip-compressed) with a header row.
/// The delimiter follows the extension: `.tsv` is tab separated.
pub fn read_table(path: &Path) -> Result<Table, TirError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open_text(path)?);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(TirError::Data(format!("{}: empty file", path.display())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => TirError::Data(format!(
                "{}: ragged row at line {}: expected {expected_len} fields, found {len}",
                path.display(),
                pos.as_ref().map_or(0, |p| p.line())
            )),
            _ => TirError::from(e),
        })?;
        rows.push(
            rec.iter()
                .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect(),
        );
    }
    Ok(Table { header, rows })
}

/// Loads a dataset; every column except the target is a feature, in file
/// order.
pub fn load<T: Scalar>(path: &Path, target: &TargetSelector) -> Result<(Dataset<T>, LoadReport), TirError> {
    let table = read_table(path)?;
    let t = match target {
        TargetSelector::Name(name) => table
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TirError::Data(format!("{}: no target column '{name}'", path.display())))?,
        TargetSelector::Index(i) if *i < table.header.len() => *i,
        TargetSelector::Index(i) => {
            return Err(TirError::Data(format!(
                "{}: target index {i} out of range for {} columns",
                path.display(),
                table.header.len()
            )))
        }
    };
    let names = table
        .header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != t)
        .map(|(_, h)| h.clone())
        .collect();
    let rejected_rows = table.rejected_rows();
    let mut x = Vec::with_capacity(table.rows.len());
    let mut y = Vec::with_capacity(table.rows.len());
    for row in table.rows.into_iter().flatten() {
        y.push(T::lit(row[t]));
        x.push(
            row.iter()
                .enumerate()
                .filter(|&(i, _)| i != t)
                .map(|(_, &v)| T::lit(v))
                .collect(),
        );
    }
    let ds = Dataset::new(x, y, names)?;
    Ok((ds, LoadReport { rejected_rows }))
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// `ceil(frac * n)` with a guard against representation error in `frac * n`.
fn ceil_fraction(frac: f64, n: usize) -> usize {
    let v = frac * n as f64;
    let r = v.round();
    let k = if (v - r).abs() < 1e-9 { r } else { v.ceil() };
    (k.max(0.0) as usize).min(n)
}

/// Seeded shuffle, then the first `n - ceil((1 - ratio) n)` rows train.
pub fn train_test_split<T: Scalar>(ds: &Dataset<T>, ratio: f64, seed: u64) -> (Dataset<T>, Dataset<T>) {
    let idx = shuffled(ds.n(), seed);
    let n_test = ceil_fraction(1.0 - ratio.clamp(0.0, 1.0), ds.n());
    let (train, test) = idx.split_at(ds.n() - n_test);
    (ds.select(train), ds.select(test))
}

/// Uniform subsample without replacement down to `cap` rows, keeping the
/// incoming row order. Identity when `n <= cap`.
pub fn subsample<T: Scalar>(ds: &Dataset<T>, cap: usize, seed: u64) -> Dataset<T> {
    if ds.n() <= cap {
        return ds.clone();
    }
    let mut rows = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), ds.n(), cap).into_vec();
    rows.sort_unstable();
    ds.select(&rows)
}

/// Fitting rows `[0, k)` and validation rows `[n - k, n)` with
/// `k = ceil(frac * n)`.
pub fn split_overlap(n: usize, frac: f64) -> (Range<usize>, Range<usize>) {
    let k = ceil_fraction(frac, n).max(n.min(1));
    (0..k, n - k..n)
}

/// Held-out row sets of a seeded `k`-fold partition.
pub fn kfold(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let idx = shuffled(n, seed);
    let k = k.clamp(1, n.max(1));
    (0..k)
        .map(|f| {
            let lo = f * n / k;
            let hi = (f + 1) * n / k;
            idx[lo..hi].to_vec()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchConfig {
    pub combos: Vec<ExpRange>,
    pub folds: usize,
    /// Population and generations of the reduced runs inside each fold.
    pub cv_pop: usize,
    pub cv_gens: usize,
    pub seed: u64,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self {
            combos: ExpRange::PRESETS.to_vec(),
            folds: 5,
            cv_pop: 100,
            cv_gens: 20,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: ExpRange,
    /// Mean held-out R^2 per combo, `None` when every fold was skipped.
    pub scores: Vec<(ExpRange, Option<f64>)>,
}

/// Picks the exponent range with the highest mean held-out R^2 under
/// k-fold cross-validation. Ties go to the narrower range. Folds whose
/// held-out target is constant are skipped; if every fold is skipped the
/// result is `(-1, 1)`.
pub fn grid_search<T: Scalar>(
    base: &SearchConfig,
    gs: &GridSearchConfig,
    train: &Dataset<T>,
) -> Result<GridSearchResult, TirError> {
    if gs.combos.is_empty() {
        return Err(TirError::Config("grid search needs at least one combination".into()));
    }
    if gs.combos.len() == 1 {
        return Ok(GridSearchResult {
            best: gs.combos[0],
            scores: vec![(gs.combos[0], None)],
        });
    }
    let folds = kfold(train.n(), gs.folds, gs.seed);
    let jobs: Vec<(usize, usize)> = (0..gs.combos.len())
        .flat_map(|c| (0..folds.len()).map(move |f| (c, f)))
        .collect();
    let fold_scores: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let held = &folds[f];
            let test = train.select(held);
            r2(&test.y, &test.y)?;
            let mut keep = vec![true; train.n()];
            held.iter().for_each(|&i| keep[i] = false);
            let rows: Vec<usize> = (0..train.n()).filter(|&i| keep[i]).collect();
            let fit_set = train.select(&rows);
            let cfg = SearchConfig {
                exp_range: gs.combos[c],
                pop_size: gs.cv_pop,
                generations: gs.cv_gens,
                seed: base.seed ^ (f as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..base.clone()
            };
            let score = evolve_run(&cfg, &fit_set, None)
                .ok()
                .and_then(|run| r2(&test.y, &run.best.expr.predict(&test.x)))
                .map_or(f64::NEG_INFINITY, Scalar::as_f64);
            Some(score)
        })
        .collect();

    let scores: Vec<(ExpRange, Option<f64>)> = gs
        .combos
        .iter()
        .enumerate()
        .map(|(c, &range)| {
            let used: Vec<f64> = fold_scores[c * folds.len()..(c + 1) * folds.len()]
                .iter()
                .flatten()
                .copied()
                .collect();
            let mean = (!used.is_empty()).then(|| used.iter().sum::<f64>() / used.len() as f64);
            (range, mean)
        })
        .collect();

    let best = scores
        .iter()
        .filter_map(|&(r, s)| s.map(|s| (r, s)))
        .reduce(|a, b| match b.1.total_cmp(&a.1) {
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal if b.0.width() < a.0.width() => b,
            _ => a,
        })
        .map_or(ExpRange::new(-1, 1), |(r, _)| r);
    Ok(GridSearchResult { best, scores })
}
