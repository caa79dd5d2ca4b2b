//! Interaction-Transformation (IT) and Transformation-Interaction-Rational
//! (TIR) expressions.
//!
//! An IT expression is an affine combination of terms, where each term is a
//! unary transformation applied to an *interaction* (a product of variables
//! raised to integer powers):
//!
//! ```text
//! it(x) = w0 + sum_j w_j * f_j(prod_i x_i^k_ij)
//! ```
//!
//! A TIR expression wraps two of those in an invertible outer function:
//!
//! ```text
//! tir(x) = g(p(x) / (1 + q(x)))
//! ```
//!
//! Non-finite results (domain violations, division by zero) are returned as
//! `NaN` instead of raising, so batch evaluation never aborts half way.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Transformation applied to an interaction inside a term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformFn {
    Id,
    Tanh,
    Sin,
    Cos,
    Log,
    Exp,
    Sqrt,
}

impl TransformFn {
    pub const ALL: [TransformFn; 7] = [
        TransformFn::Id,
        TransformFn::Tanh,
        TransformFn::Sin,
        TransformFn::Cos,
        TransformFn::Log,
        TransformFn::Exp,
        TransformFn::Sqrt,
    ];

    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            TransformFn::Id => v,
            TransformFn::Tanh => v.tanh(),
            TransformFn::Sin => v.sin(),
            TransformFn::Cos => v.cos(),
            TransformFn::Log => v.ln(),
            TransformFn::Exp => v.exp(),
            TransformFn::Sqrt => v.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformFn::Id => "id",
            TransformFn::Tanh => "tanh",
            TransformFn::Sin => "sin",
            TransformFn::Cos => "cos",
            TransformFn::Log => "log",
            TransformFn::Exp => "exp",
            TransformFn::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for TransformFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outer function `g` of a TIR expression. Its inverse is applied to the
/// target so that the coefficients can be fitted linearly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvertibleFn {
    Id,
    Atan,
    Tan,
    Tanh,
    Log,
    Exp,
    Sqrt,
}

impl InvertibleFn {
    pub const ALL: [InvertibleFn; 7] = [
        InvertibleFn::Id,
        InvertibleFn::Atan,
        InvertibleFn::Tan,
        InvertibleFn::Tanh,
        InvertibleFn::Log,
        InvertibleFn::Exp,
        InvertibleFn::Sqrt,
    ];

    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            InvertibleFn::Id => v,
            InvertibleFn::Atan => v.atan(),
            InvertibleFn::Tan => v.tan(),
            InvertibleFn::Tanh => v.tanh(),
            InvertibleFn::Log => v.ln(),
            InvertibleFn::Exp => v.exp(),
            InvertibleFn::Sqrt => v.sqrt(),
        }
    }

    #[inline]
    pub fn apply_inverse<T: Scalar>(self, v: T) -> T {
        match self {
            InvertibleFn::Id => v,
            InvertibleFn::Atan => v.tan(),
            InvertibleFn::Tan => v.atan(),
            InvertibleFn::Tanh => v.atanh(),
            InvertibleFn::Log => v.exp(),
            InvertibleFn::Exp => v.ln(),
            InvertibleFn::Sqrt => v * v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InvertibleFn::Id => "id",
            InvertibleFn::Atan => "atan",
            InvertibleFn::Tan => "tan",
            InvertibleFn::Tanh => "tanh",
            InvertibleFn::Log => "log",
            InvertibleFn::Exp => "exp",
            InvertibleFn::Sqrt => "sqrt",
        }
    }

    pub fn inverse_name(self) -> &'static str {
        match self {
            InvertibleFn::Id => "id",
            InvertibleFn::Atan => "tan",
            InvertibleFn::Tan => "atan",
            InvertibleFn::Tanh => "atanh",
            InvertibleFn::Log => "exp",
            InvertibleFn::Exp => "log",
            InvertibleFn::Sqrt => "square",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for InvertibleFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One summand of an IT expression: `func(prod_i x_i^exponents[i])`.
///
/// `exponents` is dense (one entry per input variable); a zero entry means the
/// variable does not take part in the interaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    pub exponents: Vec<i32>,
    pub func: TransformFn,
}

impl Term {
    pub fn new(exponents: Vec<i32>, func: TransformFn) -> Self {
        Self { exponents, func }
    }

    /// Single variable `x_var^exp` with transformation `func` in dimension `d`.
    pub fn single(d: usize, var: usize, exp: i32, func: TransformFn) -> Self {
        let mut exponents = vec![0; d];
        exponents[var] = exp;
        Self { exponents, func }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Number of variables with a nonzero exponent.
    pub fn num_vars(&self) -> usize {
        self.exponents.iter().filter(|&&k| k != 0).count()
    }

    /// Indices and exponents of the variables that occur in the interaction.
    pub fn occurrences(&self) -> impl Iterator<Item = (usize, i32)> + '_ {
        self.exponents
            .iter()
            .enumerate()
            .filter(|(_, &k)| k != 0)
            .map(|(i, &k)| (i, k))
    }

    /// `prod_i x_i^k_i`; the empty product is 1.
    #[inline]
    pub fn interaction<T: Scalar>(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.exponents.len());
        self.occurrences().fold(T::one(), |acc, (i, k)| acc * x[i].powi(k))
    }

    #[inline]
    pub fn eval<T: Scalar>(&self, x: &[T]) -> T {
        let r = self.interaction(x);
        if !r.is_finite() {
            return T::nan();
        }
        let v = self.func.apply(r);
        if v.is_finite() {
            v
        } else {
            T::nan()
        }
    }
}

/// Weighted list of terms plus an optional intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct ItExpr<T> {
    pub terms: Vec<Term>,
    pub weights: Vec<T>,
    pub intercept: Option<T>,
}

impl<T: Scalar> ItExpr<T> {
    /// Terms with unit weights and no intercept.
    pub fn new(terms: Vec<Term>) -> Self {
        let weights = vec![T::one(); terms.len()];
        Self {
            terms,
            weights,
            intercept: None,
        }
    }

    pub fn empty() -> Self {
        Self {
            terms: Vec::new(),
            weights: Vec::new(),
            intercept: None,
        }
    }

    pub fn with_weights(terms: Vec<Term>, weights: Vec<T>, intercept: Option<T>) -> Self {
        assert_eq!(terms.len(), weights.len(), "one weight per term");
        Self {
            terms,
            weights,
            intercept,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.terms.iter().any(|u| u == t)
    }

    /// True when no two terms share exponents and transformation.
    pub fn has_unique_terms(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.terms.len());
        self.terms.iter().all(|t| seen.insert(t))
    }

    /// Appends a term with unit weight unless it is already present.
    pub fn push_unique(&mut self, t: Term) -> bool {
        if self.contains(&t) {
            return false;
        }
        self.terms.push(t);
        self.weights.push(T::one());
        true
    }

    pub fn remove(&mut self, idx: usize) -> Term {
        self.weights.remove(idx);
        self.terms.remove(idx)
    }

    /// Drops later copies of repeated terms, keeping weights aligned.
    pub fn dedup(&mut self) {
        let mut seen = std::collections::HashSet::with_capacity(self.terms.len());
        let mut keep = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            keep.push(seen.insert(t.clone()));
        }
        let mut it = keep.iter();
        self.weights.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.terms.retain(|_| *it.next().unwrap());
    }

    /// Truncates the term list to at most `n` terms.
    pub fn truncate(&mut self, n: usize) {
        self.terms.truncate(n);
        self.weights.truncate(n);
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        let base = self.intercept.unwrap_or_else(T::zero);
        self.terms
            .iter()
            .zip(&self.weights)
            .fold(base, |acc, (t, &w)| acc + w * t.eval(x))
    }
}

/// Full model `g(p / (1 + q))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TirExpr<T> {
    pub g: InvertibleFn,
    pub p: ItExpr<T>,
    pub q: ItExpr<T>,
}

impl<T: Scalar> TirExpr<T> {
    pub fn new(g: InvertibleFn, p: ItExpr<T>, q: ItExpr<T>) -> Self {
        Self { g, p, q }
    }

    /// Total number of terms across `p` and `q` (the unit the budget counts).
    pub fn num_terms(&self) -> usize {
        self.p.len() + self.q.len()
    }

    pub fn dim(&self) -> Option<usize> {
        self.p.terms.iter().chain(&self.q.terms).map(Term::dim).next()
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        let num = self.p.eval(x);
        let den = T::one() + self.q.eval(x);
        let ratio = num / den;
        if !ratio.is_finite() {
            return T::nan();
        }
        let v = self.g.apply(ratio);
        if v.is_finite() {
            v
        } else {
            T::nan()
        }
    }

    pub fn predict(&self, rows: &[Vec<T>]) -> Vec<T> {
        rows.iter().map(|r| self.eval(r)).collect()
    }

    /// Node count of the canonical expression tree (the tree printed by
    /// [`Style::SExpr`]).
    ///
    /// * `x_i` with exponent 1 is one node; any other nonzero exponent is a
    ///   power node with the variable and an exponent constant (3 nodes).
    /// * An interaction of `v` factors adds `v - 1` binary products; an empty
    ///   interaction is the constant `1` (1 node).
    /// * A non-`id` transformation adds 1 node.
    /// * A weighted term adds the weight constant and a product (2 nodes).
    /// * An IT expression with `s` summands (intercept counts as a summand)
    ///   adds `s - 1` binary sums; with no summands it is the constant `0`.
    /// * A nonempty `q` adds the constant `1`, the sum `1 + q` and the
    ///   division (3 nodes). `q` itself is counted as above.
    /// * A non-`id` `g` adds 1 node.
    pub fn size(&self) -> usize {
        let mut n = it_size(&self.p);
        if !self.q.is_empty() {
            n += it_size(&self.q) + 3;
        }
        if self.g != InvertibleFn::Id {
            n += 1;
        }
        n
    }
}

fn term_size(t: &Term) -> usize {
    let vars: usize = t.occurrences().map(|(_, k)| if k == 1 { 1 } else { 3 }).sum();
    let v = t.num_vars();
    let interaction = if v == 0 { 1 } else { vars + v - 1 };
    interaction + usize::from(t.func != TransformFn::Id)
}

fn it_size<T>(e: &ItExpr<T>) -> usize {
    let summands = e.terms.len() + usize::from(e.intercept.is_some());
    if summands == 0 {
        return 1;
    }
    let terms: usize = e.terms.iter().map(|t| term_size(t) + 2).sum();
    terms + usize::from(e.intercept.is_some()) + summands - 1
}

/// Output syntax for [`TirExpr::to_text`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Human readable, `^` for powers, variables `x0, x1, ...`.
    Infix,
    /// NumPy expression over a 2-D array `x` (`np.sin(x[:, 0]**2)`).
    Python,
    /// Fully parenthesized prefix form, parseable by [`crate::sexpr::parse`].
    SExpr,
}

impl<T: Scalar> TirExpr<T> {
    pub fn to_text(&self, style: Style) -> String {
        match style {
            Style::SExpr => sexpr_tir(self),
            Style::Infix | Style::Python => infix_tir(self, style == Style::Python),
        }
    }
}

fn num<T: Scalar>(v: T) -> String {
    format!("{v:?}")
}

fn infix_var(i: usize, k: i32, py: bool) -> String {
    let v = if py { format!("x[:, {i}]") } else { format!("x{i}") };
    match (k, py) {
        (1, _) => v,
        (k, false) if k < 0 => format!("{v}^({k})"),
        (k, false) => format!("{v}^{k}"),
        (k, true) if k < 0 => format!("{v}**({k})"),
        (k, true) => format!("{v}**{k}"),
    }
}

fn infix_term(t: &Term, py: bool) -> String {
    let r = if t.num_vars() == 0 {
        "1".to_string()
    } else {
        t.occurrences()
            .map(|(i, k)| infix_var(i, k, py))
            .collect::<Vec<_>>()
            .join("*")
    };
    match t.func {
        TransformFn::Id => r,
        f if py => format!("np.{}({r})", f.name()),
        f => format!("{}({r})", f.name()),
    }
}

fn infix_it<T: Scalar>(e: &ItExpr<T>, py: bool) -> String {
    let mut out = String::new();
    if let Some(c) = e.intercept {
        out.push_str(&num(c));
    }
    for (t, &w) in e.terms.iter().zip(&e.weights) {
        let body = infix_term(t, py);
        if out.is_empty() {
            out = format!("{}*{body}", num(w));
        } else if w.is_sign_negative() {
            out.push_str(&format!(" - {}*{body}", num(-w)));
        } else {
            out.push_str(&format!(" + {}*{body}", num(w)));
        }
    }
    if out.is_empty() {
        out.push_str("0.0");
    }
    out
}

fn infix_tir<T: Scalar>(m: &TirExpr<T>, py: bool) -> String {
    let p = infix_it(&m.p, py);
    let inner = if m.q.is_empty() {
        p
    } else {
        format!("({p}) / (1 + {})", infix_it(&m.q, py))
    };
    match m.g {
        InvertibleFn::Id => inner,
        g if py => {
            let name = match g {
                InvertibleFn::Atan => "arctan",
                other => other.name(),
            };
            format!("np.{name}({inner})")
        }
        g => format!("{}({inner})", g.name()),
    }
}

fn fold_binary(op: &str, mut items: impl Iterator<Item = String>, empty: &str) -> String {
    let Some(first) = items.next() else {
        return empty.to_string();
    };
    items.fold(first, |acc, it| format!("({op} {acc} {it})"))
}

fn sexpr_term(t: &Term) -> String {
    let r = fold_binary(
        "*",
        t.occurrences().map(|(i, k)| {
            if k == 1 {
                format!("x{i}")
            } else {
                format!("(^ x{i} {k})")
            }
        }),
        "1",
    );
    match t.func {
        TransformFn::Id => r,
        f => format!("({} {r})", f.name()),
    }
}

fn sexpr_it<T: Scalar>(e: &ItExpr<T>) -> String {
    let summands = e.intercept.map(num).into_iter().chain(
        e.terms
            .iter()
            .zip(&e.weights)
            .map(|(t, &w)| format!("(* {} {})", num(w), sexpr_term(t))),
    );
    fold_binary("+", summands, "0")
}

fn sexpr_tir<T: Scalar>(m: &TirExpr<T>) -> String {
    let p = sexpr_it(&m.p);
    let inner = if m.q.is_empty() {
        p
    } else {
        format!("(/ {p} (+ 1 {}))", sexpr_it(&m.q))
    };
    match m.g {
        InvertibleFn::Id => inner,
        g => format!("({} {inner})", g.name()),
    }
}

impl<T: Scalar> fmt::Display for TirExpr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text(Style::Infix))
    }
}
