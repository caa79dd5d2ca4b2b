//! Coefficient fitting and fitness.
//!
//! With `z = g^-1(y)` the model `y = g(p / (1 + q))` rearranges to
//!
//! ```text
//! z = p(x) - z * q(x)
//! ```
//!
//! which is linear in the weights of `p` (intercept included) and `q`. The
//! design matrix therefore has the columns `[1, p_1(x).., -z * q_1(x)..]` and
//! the target `z`.

use std::cmp::Ordering;
use std::fmt;

use crate::expr::TirExpr;
use crate::linalg::{lstsq, RCOND};
use crate::metrics::r2;
use crate::scalar::Scalar;

/// Fraction of fitting rows that may be dropped for non-finite entries
/// before the model is rejected.
pub const MAX_DROPPED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    /// Column-major: intercept, `p` terms, then `q` terms.
    pub columns: Vec<Vec<T>>,
    pub target: Vec<T>,
    pub dropped_rows: usize,
}

impl<T> DesignMatrix<T> {
    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitError {
    /// More than [`MAX_DROPPED_FRACTION`] of the rows had non-finite entries.
    TooManyDroppedRows { dropped: usize, total: usize },
    /// Fewer usable rows than coefficients.
    Infeasible { rows: usize, cols: usize },
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::TooManyDroppedRows { dropped, total } => {
                write!(f, "{dropped} of {total} rows have non-finite design entries")
            }
            FitError::Infeasible { rows, cols } => write!(f, "{rows} usable rows for {cols} coefficients"),
        }
    }
}

impl std::error::Error for FitError {}

/// Builds the linearized least-squares problem for the structure of `m`.
pub fn assemble<T: Scalar>(m: &TirExpr<T>, x: &[Vec<T>], y: &[T]) -> Result<DesignMatrix<T>, FitError> {
    let cols = 1 + m.p.len() + m.q.len();
    let mut columns: Vec<Vec<T>> = (0..cols).map(|_| Vec::with_capacity(y.len())).collect();
    let mut target = Vec::with_capacity(y.len());
    let mut row = vec![T::zero(); cols];
    let mut dropped = 0;
    for (xi, &yi) in x.iter().zip(y) {
        let z = m.g.apply_inverse(yi);
        row[0] = T::one();
        for (slot, t) in row[1..].iter_mut().zip(&m.p.terms) {
            *slot = t.eval(xi);
        }
        for (slot, t) in row[1 + m.p.len()..].iter_mut().zip(&m.q.terms) {
            *slot = -z * t.eval(xi);
        }
        if !z.is_finite() || row.iter().any(|v| !v.is_finite()) {
            dropped += 1;
            continue;
        }
        for (c, &v) in columns.iter_mut().zip(&row) {
            c.push(v);
        }
        target.push(z);
    }
    if (dropped as f64) > MAX_DROPPED_FRACTION * y.len() as f64 {
        return Err(FitError::TooManyDroppedRows {
            dropped,
            total: y.len(),
        });
    }
    if target.len() < cols {
        return Err(FitError::Infeasible {
            rows: target.len(),
            cols,
        });
    }
    Ok(DesignMatrix {
        columns,
        target,
        dropped_rows: dropped,
    })
}

/// Minimum-norm least-squares weights for the design matrix.
pub fn solve_ls<T: Scalar>(d: &DesignMatrix<T>) -> Option<Vec<T>> {
    lstsq(&d.columns, &d.target, T::lit(RCOND)).map(|s| s.coef)
}

/// Copies solved weights (`[intercept, p.., q..]`) into the expression.
pub fn apply_weights<T: Scalar>(m: &TirExpr<T>, w: &[T]) -> TirExpr<T> {
    let mut out = m.clone();
    let mp = m.p.len();
    out.p.intercept = Some(w[0]);
    out.p.weights = w[1..1 + mp].to_vec();
    out.q.weights = w[1 + mp..].to_vec();
    out.q.intercept = None;
    out
}

/// Outcome of fitting and scoring one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub intercept: T,
    pub p_weights: Vec<T>,
    pub q_weights: Vec<T>,
    /// R^2 on the validation rows; `-inf` when invalid.
    pub fitness: T,
    /// Fitness minus the size penalty; `-inf` when invalid.
    pub penalized_fitness: T,
    pub valid: bool,
}

impl<T: Scalar> FitResult<T> {
    pub fn invalid() -> Self {
        Self {
            intercept: T::zero(),
            p_weights: Vec::new(),
            q_weights: Vec::new(),
            fitness: T::neg_infinity(),
            penalized_fitness: T::neg_infinity(),
            valid: false,
        }
    }

    /// Selection order: by penalized fitness, invalid below everything.
    pub fn cmp_selection(&self, other: &Self) -> Ordering {
        match (self.valid, other.valid) {
            (false, false) => Ordering::Equal,
            (false, true) => Ordering::Less,
            (true, false) => Ordering::Greater,
            (true, true) => self
                .penalized_fitness
                .partial_cmp(&other.penalized_fitness)
                .unwrap_or(Ordering::Equal),
        }
    }
}

/// `fit - c * size`.
pub fn penalize<T: Scalar>(fit: T, size: usize, c: T) -> T {
    fit - c * T::from_usize(size).unwrap_or_else(T::infinity)
}

/// When to apply the size penalty, based on the training set shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyRule {
    #[default]
    None,
    /// Fewer than 100 samples.
    Samples,
    /// Fewer than 6 variables.
    Dim,
    /// Samples times variables below 1000.
    Points,
}

impl std::str::FromStr for PenaltyRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(PenaltyRule::None),
            "samples" => Ok(PenaltyRule::Samples),
            "dim" => Ok(PenaltyRule::Dim),
            "points" => Ok(PenaltyRule::Points),
            other => Err(format!("unknown penalty rule '{other}'")),
        }
    }
}

pub fn penalty_active(n_samples: usize, dim: usize, rule: PenaltyRule) -> bool {
    match rule {
        PenaltyRule::None => false,
        PenaltyRule::Samples => n_samples < 100,
        PenaltyRule::Dim => dim < 6,
        PenaltyRule::Points => n_samples.saturating_mul(dim) < 1000,
    }
}

/// Fits `m` on the fitting rows and scores it by R^2 on the validation rows.
///
/// Returns the expression with its fitted weights alongside the result. When
/// the fit fails the structure is returned unchanged with an invalid result.
pub fn fitness<T: Scalar>(
    m: &TirExpr<T>,
    fit: (&[Vec<T>], &[T]),
    val: (&[Vec<T>], &[T]),
    penalty_c: T,
) -> (TirExpr<T>, FitResult<T>) {
    let Ok(design) = assemble(m, fit.0, fit.1) else {
        return (m.clone(), FitResult::invalid());
    };
    let Some(w) = solve_ls(&design) else {
        return (m.clone(), FitResult::invalid());
    };
    let fitted = apply_weights(m, &w);
    let pred = fitted.predict(val.0);
    let Some(score) = r2(val.1, &pred) else {
        return (fitted, FitResult::invalid());
    };
    let mp = m.p.len();
    let result = FitResult {
        intercept: w[0],
        p_weights: w[1..1 + mp].to_vec(),
        q_weights: w[1 + mp..].to_vec(),
        fitness: score,
        penalized_fitness: penalize(score, fitted.size(), penalty_c),
        valid: true,
    };
    (fitted, result)
}
