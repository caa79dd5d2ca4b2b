//! Symbolic regression with Transformation-Interaction-Rational models.
//!
//! A model has the form `g(p(x) / (1 + q(x)))` where `p` and `q` are
//! affine combinations of transformed monomials and `g` is invertible. The
//! structure is searched by a genetic algorithm; the coefficients of every
//! candidate are fitted by linear least squares on `g^-1(y)`.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` case.

pub mod data;
pub mod doc;
pub mod error;
pub mod evolve;
pub mod expr;
pub mod fit;
pub mod interval;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod sexpr;

pub use data::{Dataset, GridSearchConfig, TargetSelector};
pub use error::{Result, TirError};
pub use evolve::{compute_budget, evolve_run, ExpRange, Individual, RunResult, SearchConfig};
pub use expr::{InvertibleFn, ItExpr, Style, Term, TirExpr, TransformFn};
pub use fit::{FitResult, PenaltyRule};
pub use interval::{DomainBox, Interval};
pub use scalar::Scalar;

pub type TirExprF64 = TirExpr<f64>;
pub type TirExprF32 = TirExpr<f32>;
pub type ItExprF64 = ItExpr<f64>;
pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type IntervalF64 = Interval<f64>;
pub type DomainBoxF64 = DomainBox<f64>;
pub type IndividualF64 = Individual<f64>;
