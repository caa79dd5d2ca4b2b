//! Evolutionary search over TIR structures.
//!
//! Generational replacement: every generation builds a full population of
//! children from tournament-selected parents (one-point crossover with
//! probability `pc`, then one mutation with probability `pm`). The best
//! individual seen in any generation is returned.
//!
//! Each individual is produced from its own RNG stream keyed by
//! `(seed, generation, index)`, so results do not depend on how many worker
//! threads rayon uses.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_overlap, Dataset, OVERLAP_FRACTION};
use crate::error::TirError;
use crate::expr::{InvertibleFn, ItExpr, Term, TirExpr, TransformFn};
use crate::fit::{fitness, penalty_active, FitResult, PenaltyRule};
use crate::interval::{admissible_g, filter_terms, is_valid_term, DomainBox, Interval};
use crate::scalar::Scalar;

/// Inclusive range of interaction exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpRange {
    pub lo: i32,
    pub hi: i32,
}

impl ExpRange {
    pub const PRESETS: [ExpRange; 6] = [
        ExpRange { lo: -5, hi: 5 },
        ExpRange { lo: 0, hi: 5 },
        ExpRange { lo: -2, hi: 2 },
        ExpRange { lo: 0, hi: 2 },
        ExpRange { lo: -1, hi: 1 },
        ExpRange { lo: 0, hi: 1 },
    ];

    pub const fn new(lo: i32, hi: i32) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> i32 {
        self.hi - self.lo
    }

    pub fn contains(&self, k: i32) -> bool {
        self.lo <= k && k <= self.hi
    }

    /// Uniform draw; zero means "variable absent".
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i32 {
        rng.gen_range(self.lo..=self.hi)
    }

    /// Uniform draw among the nonzero exponents of the range.
    pub fn sample_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> i32 {
        let zeros = i32::from(self.contains(0));
        let k = rng.gen_range(self.lo..=self.hi - zeros);
        if zeros == 1 && k >= 0 {
            k + 1
        } else {
            k
        }
    }
}

impl fmt::Display for ExpRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.lo, self.hi)
    }
}

impl FromStr for ExpRange {
    type Err = String;

    /// Accepts `lo,hi` or `(lo,hi)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (lo, hi) = inner
            .split_once(',')
            .ok_or_else(|| format!("expected 'lo,hi', got '{s}'"))?;
        let lo = lo.trim().parse().map_err(|_| format!("bad lower exponent in '{s}'"))?;
        let hi = hi.trim().parse().map_err(|_| format!("bad upper exponent in '{s}'"))?;
        Ok(ExpRange { lo, hi })
    }
}

/// `max(5, min(15, floor(n / 10)))`.
pub fn compute_budget(n_samples: usize) -> usize {
    (n_samples / 10).clamp(5, 15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub pc: f64,
    pub pm: f64,
    pub transform_set: Vec<TransformFn>,
    pub invertible_set: Vec<InvertibleFn>,
    /// Maximum number of terms in `p` and `q` together; `None` derives it
    /// from the training size with [`compute_budget`].
    pub budget: Option<usize>,
    pub exp_range: ExpRange,
    pub penalty_rule: PenaltyRule,
    pub penalty_c: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            pop_size: 1000,
            generations: 500,
            pc: 0.30,
            pm: 0.70,
            transform_set: TransformFn::ALL.to_vec(),
            invertible_set: InvertibleFn::ALL.to_vec(),
            budget: None,
            exp_range: ExpRange::new(-1, 1),
            penalty_rule: PenaltyRule::None,
            penalty_c: 0.01,
            seed: 42,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), TirError> {
        let bad = |m: String| Err(TirError::Config(m));
        if self.pop_size == 0 {
            return bad("population size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.pc) || !(0.0..=1.0).contains(&self.pm) {
            return bad(format!(
                "probabilities must lie in [0, 1] (pc={}, pm={})",
                self.pc, self.pm
            ));
        }
        if self.budget == Some(0) {
            return bad("budget must be at least 1".into());
        }
        if !ExpRange::PRESETS.contains(&self.exp_range) {
            return bad(format!(
                "exponent range {} is not one of the supported ranges",
                self.exp_range
            ));
        }
        if self.transform_set.is_empty() || self.invertible_set.is_empty() {
            return bad("function sets must not be empty".into());
        }
        if self.penalty_c.is_nan() || self.penalty_c < 0.0 {
            return bad("penalty constant must be non-negative".into());
        }
        Ok(())
    }
}

/// Everything the variation operators need to know about the problem.
#[derive(Debug, Clone)]
pub struct SearchSpace<T> {
    pub dim: usize,
    pub exp_range: ExpRange,
    pub transforms: Vec<TransformFn>,
    /// Outer functions admissible for the training target.
    pub outer: Vec<InvertibleFn>,
    pub budget: usize,
    pub dbox: DomainBox<T>,
}

const MAX_ATTEMPTS: usize = 64;

/// Variables drawn for a new term, in draw order.
///
/// Draws uniformly without replacement from the variables plus one stop
/// symbol; drawing the stop symbol ends the term.
pub fn draw_variables<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<Option<usize>> = (0..d).map(Some).chain([None]).collect();
    let mut out = Vec::new();
    while let Some(v) = pool.swap_remove(rng.gen_range(0..pool.len())) {
        out.push(v);
    }
    out
}

/// Random term, or `None` for the null term. A term whose drawn exponents
/// are all zero is also null.
pub fn random_term<T, R: Rng + ?Sized>(space: &SearchSpace<T>, rng: &mut R) -> Option<Term> {
    let mut exponents = vec![0; space.dim];
    for v in draw_variables(space.dim, rng) {
        exponents[v] = space.exp_range.sample(rng);
    }
    if exponents.iter().all(|&k| k == 0) {
        return None;
    }
    let func = *space.transforms.choose(rng)?;
    Some(Term::new(exponents, func))
}

/// A term that is valid on any box: `x_v` with the identity.
fn fallback_term<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Term {
    Term::single(d, rng.gen_range(0..d), 1, TransformFn::Id)
}

/// Keeps drawing terms until a null term comes up or `remaining` terms have
/// been produced. Duplicates are redrawn. With `nonempty` the result has at
/// least one term (when `remaining >= 1`).
pub fn random_it<T: Scalar, R: Rng + ?Sized>(
    space: &SearchSpace<T>,
    remaining: usize,
    nonempty: bool,
    rng: &mut R,
) -> ItExpr<T> {
    let mut e = ItExpr::empty();
    let mut misses = 0;
    while e.len() < remaining {
        match random_term(space, rng) {
            Some(t) => {
                if !e.push_unique(t) {
                    misses += 1;
                }
            }
            None if nonempty && e.is_empty() => misses += 1,
            None => break,
        }
        if misses > MAX_ATTEMPTS {
            break;
        }
    }
    if nonempty && e.is_empty() && remaining > 0 {
        e.push_unique(fallback_term(space.dim, rng));
    }
    e
}

/// Nonempty `p` of valid terms using at most `remaining` terms.
fn random_valid_p<T: Scalar, R: Rng + ?Sized>(space: &SearchSpace<T>, remaining: usize, rng: &mut R) -> ItExpr<T> {
    for _ in 0..MAX_ATTEMPTS {
        let p = filter_terms(&random_it(space, remaining, true, rng), &space.dbox);
        if !p.is_empty() {
            return p;
        }
    }
    ItExpr::new(vec![fallback_term(space.dim, rng)])
}

pub fn random_tir<T: Scalar, R: Rng + ?Sized>(space: &SearchSpace<T>, rng: &mut R) -> TirExpr<T> {
    let g = *space.outer.choose(rng).unwrap_or(&InvertibleFn::Id);
    let p = filter_terms(&random_it(space, space.budget, true, rng), &space.dbox);
    let q = filter_terms(
        &random_it(space, space.budget - p.len().min(space.budget), false, rng),
        &space.dbox,
    );
    let mut m = TirExpr::new(g, p, q);
    if m.p.is_empty() {
        m.p = random_valid_p(space, space.budget - m.q.len(), rng);
    }
    m
}

/// Restores the structural invariants after a variation operator: no
/// duplicate or invalid terms, the budget, and a nonempty `p`.
pub fn repair<T: Scalar, R: Rng + ?Sized>(mut m: TirExpr<T>, space: &SearchSpace<T>, rng: &mut R) -> TirExpr<T> {
    m.p.dedup();
    m.q.dedup();
    m.p = filter_terms(&m.p, &space.dbox);
    m.q = filter_terms(&m.q, &space.dbox);
    m.p.truncate(space.budget);
    m.q.truncate(space.budget - m.p.len());
    if m.p.is_empty() {
        let room = space.budget.saturating_sub(m.q.len()).max(1);
        m.q.truncate(space.budget - room);
        m.p = random_valid_p(space, room, rng);
    }
    m
}

/// Binary tournament with replacement; ties go to the first draw.
pub fn tournament2<'a, T: Scalar, R: Rng + ?Sized>(pop: &'a [Individual<T>], rng: &mut R) -> &'a Individual<T> {
    let a = &pop[rng.gen_range(0..pop.len())];
    let b = &pop[rng.gen_range(0..pop.len())];
    if b.fit.cmp_selection(&a.fit).is_gt() {
        b
    } else {
        a
    }
}

/// One-point list crossover: terms before `cut` from `xs`, then a random
/// suffix of `ys`, at most `cap` terms, duplicates dropped.
fn recombine<T: Scalar, R: Rng + ?Sized>(
    xs: &ItExpr<T>,
    ys: &ItExpr<T>,
    cut: usize,
    cap: usize,
    rng: &mut R,
) -> ItExpr<T> {
    let from = rng.gen_range(0..=ys.len());
    let mut out = ItExpr {
        terms: Vec::new(),
        weights: Vec::new(),
        intercept: xs.intercept,
    };
    for t in xs.terms[..cut].iter().chain(&ys.terms[from..]) {
        if out.len() >= cap {
            break;
        }
        out.push_unique(t.clone());
    }
    out
}

/// Which component of the first parent the crossover point fell on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossoverPoint {
    Outer,
    Numerator(usize),
    Denominator(usize),
}

pub fn crossover_point<T: Scalar, R: Rng + ?Sized>(a: &TirExpr<T>, rng: &mut R) -> CrossoverPoint {
    let i = rng.gen_range(0..1 + a.num_terms());
    match i {
        0 => CrossoverPoint::Outer,
        i if i <= a.p.len() => CrossoverPoint::Numerator(i - 1),
        i => CrossoverPoint::Denominator(i - 1 - a.p.len()),
    }
}

pub fn crossover<T: Scalar, R: Rng + ?Sized>(
    a: &TirExpr<T>,
    b: &TirExpr<T>,
    space: &SearchSpace<T>,
    rng: &mut R,
) -> TirExpr<T> {
    let budget = space.budget;
    match crossover_point(a, rng) {
        CrossoverPoint::Outer => {
            let mut q = b.q.clone();
            q.truncate(budget.saturating_sub(a.p.len()));
            TirExpr::new(a.g, a.p.clone(), q)
        }
        CrossoverPoint::Numerator(cut) => {
            let cap = budget.saturating_sub(a.q.len()).max(1);
            let p = recombine(&a.p, &b.p, cut, cap, rng);
            let p = if p.is_empty() { a.p.clone() } else { p };
            let mut q = a.q.clone();
            q.truncate(budget - p.len().min(budget));
            TirExpr::new(a.g, p, q)
        }
        CrossoverPoint::Denominator(cut) => {
            let q = recombine(&a.q, &b.q, cut, budget.saturating_sub(a.p.len()), rng);
            TirExpr::new(a.g, a.p.clone(), q)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationOp {
    InsertNode,
    RemoveNode,
    ChangeVar,
    ChangeExponent,
    ChangeFunction,
}

impl MutationOp {
    pub const ALL: [MutationOp; 5] = [
        MutationOp::InsertNode,
        MutationOp::RemoveNode,
        MutationOp::ChangeVar,
        MutationOp::ChangeExponent,
        MutationOp::ChangeFunction,
    ];
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    P,
    Q,
}

fn side<T>(m: &mut TirExpr<T>, s: Side) -> &mut ItExpr<T> {
    match s {
        Side::P => &mut m.p,
        Side::Q => &mut m.q,
    }
}

fn slots<T>(m: &TirExpr<T>, keep: impl Fn(&Term) -> bool) -> Vec<(Side, usize)> {
    let p =
        m.p.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| keep(t))
            .map(|(i, _)| (Side::P, i));
    let q =
        m.q.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| keep(t))
            .map(|(i, _)| (Side::Q, i));
    p.chain(q).collect()
}

/// Operators available for `m`: `InsertNode` is dropped at the budget.
pub fn mutation_ops<T: Scalar>(m: &TirExpr<T>, space: &SearchSpace<T>) -> Vec<MutationOp> {
    MutationOp::ALL
        .into_iter()
        .filter(|&op| op != MutationOp::InsertNode || m.num_terms() < space.budget)
        .collect()
}

fn insert_node<T: Scalar, R: Rng + ?Sized>(m: &mut TirExpr<T>, space: &SearchSpace<T>, rng: &mut R) -> bool {
    let open = slots(m, |t| t.num_vars() < t.dim());
    if !open.is_empty() && rng.gen_bool(0.5) {
        let (s, i) = *open.choose(rng).unwrap();
        let term = &mut side(m, s).terms[i];
        let absent: Vec<usize> = (0..term.dim()).filter(|&v| term.exponents[v] == 0).collect();
        let v = *absent.choose(rng).unwrap();
        term.exponents[v] = space.exp_range.sample_nonzero(rng);
        return true;
    }
    let s = if rng.gen_bool(0.5) { Side::P } else { Side::Q };
    for _ in 0..MAX_ATTEMPTS {
        if let Some(t) = random_term(space, rng) {
            if is_valid_term(&t, &space.dbox) && side(m, s).push_unique(t) {
                return true;
            }
        }
    }
    false
}

fn remove_node<T: Scalar, R: Rng + ?Sized>(m: &mut TirExpr<T>, rng: &mut R) -> bool {
    let multi = slots(m, |t| t.num_vars() >= 2);
    let mut removable: Vec<(Side, usize)> = (0..m.q.len()).map(|i| (Side::Q, i)).collect();
    if m.p.len() >= 2 {
        removable.extend((0..m.p.len()).map(|i| (Side::P, i)));
    }
    let kinds = [!multi.is_empty(), !removable.is_empty()];
    let kind = match kinds {
        [false, false] => return false,
        [true, false] => 0,
        [false, true] => 1,
        [true, true] => rng.gen_range(0..2),
    };
    if kind == 0 {
        let (s, i) = *multi.choose(rng).unwrap();
        let term = &mut side(m, s).terms[i];
        let present: Vec<usize> = term.occurrences().map(|(v, _)| v).collect();
        term.exponents[*present.choose(rng).unwrap()] = 0;
    } else {
        let (s, i) = *removable.choose(rng).unwrap();
        side(m, s).remove(i);
    }
    true
}

fn change_var<T: Scalar, R: Rng + ?Sized>(m: &mut TirExpr<T>, rng: &mut R) -> bool {
    let movable = slots(m, |t| t.num_vars() < t.dim());
    let Some(&(s, i)) = movable.choose(rng) else {
        return false;
    };
    let term = &mut side(m, s).terms[i];
    let present: Vec<usize> = term.occurrences().map(|(v, _)| v).collect();
    let absent: Vec<usize> = (0..term.dim()).filter(|&v| term.exponents[v] == 0).collect();
    let from = *present.choose(rng).unwrap();
    let to = *absent.choose(rng).unwrap();
    term.exponents.swap(from, to);
    true
}

fn change_exponent<T: Scalar, R: Rng + ?Sized>(m: &mut TirExpr<T>, space: &SearchSpace<T>, rng: &mut R) -> bool {
    let all = slots(m, |t| t.num_vars() > 0);
    let Some(&(s, i)) = all.choose(rng) else {
        return false;
    };
    let term = &mut side(m, s).terms[i];
    let present: Vec<usize> = term.occurrences().map(|(v, _)| v).collect();
    let v = *present.choose(rng).unwrap();
    term.exponents[v] = if present.len() == 1 {
        space.exp_range.sample_nonzero(rng)
    } else {
        space.exp_range.sample(rng)
    };
    true
}

fn change_function<T: Scalar, R: Rng + ?Sized>(m: &mut TirExpr<T>, space: &SearchSpace<T>, rng: &mut R) -> bool {
    let n = m.num_terms();
    let slot = rng.gen_range(0..=n);
    if slot == n {
        m.g = *space.outer.choose(rng).unwrap_or(&InvertibleFn::Id);
    } else {
        let f = *space.transforms.choose(rng).unwrap_or(&TransformFn::Id);
        if slot < m.p.len() {
            m.p.terms[slot].func = f;
        } else {
            m.q.terms[slot - m.p.len()].func = f;
        }
    }
    true
}

/// Applies one uniformly chosen mutation. Infeasible choices are dropped and
/// another operator is drawn; `ChangeExponent` is the last resort.
pub fn mutate<T: Scalar, R: Rng + ?Sized>(
    m: &TirExpr<T>,
    space: &SearchSpace<T>,
    rng: &mut R,
) -> (TirExpr<T>, MutationOp) {
    let mut child = m.clone();
    let mut ops = mutation_ops(m, space);
    while !ops.is_empty() {
        let op = ops[rng.gen_range(0..ops.len())];
        let applied = match op {
            MutationOp::InsertNode => insert_node(&mut child, space, rng),
            MutationOp::RemoveNode => remove_node(&mut child, rng),
            MutationOp::ChangeVar => change_var(&mut child, rng),
            MutationOp::ChangeExponent => change_exponent(&mut child, space, rng),
            MutationOp::ChangeFunction => change_function(&mut child, space, rng),
        };
        if applied {
            child.p.dedup();
            child.q.dedup();
            return (child, op);
        }
        ops.retain(|&o| o != op);
    }
    change_exponent(&mut child, space, rng);
    child.p.dedup();
    child.q.dedup();
    (child, MutationOp::ChangeExponent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual<T> {
    pub expr: TirExpr<T>,
    pub fit: FitResult<T>,
}

/// Fitting data shared by all individuals of one run.
pub struct Evaluator<'a, T> {
    pub fit_x: &'a [Vec<T>],
    pub fit_y: &'a [T],
    pub val_x: &'a [Vec<T>],
    pub val_y: &'a [T],
    pub penalty_c: T,
}

impl<T: Scalar> Evaluator<'_, T> {
    pub fn evaluate(&self, expr: &TirExpr<T>) -> Individual<T> {
        let (expr, fit) = fitness(expr, (self.fit_x, self.fit_y), (self.val_x, self.val_y), self.penalty_c);
        Individual { expr, fit }
    }
}

/// Independent RNG stream for one individual of one generation.
pub fn stream_rng(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub best: Individual<T>,
    /// Best-so-far penalized fitness after initialization and after each
    /// generation.
    pub history: Vec<T>,
    pub budget: usize,
    pub penalty_active: bool,
    pub outer_set: Vec<InvertibleFn>,
}

/// Builds the search space for a training set.
pub fn search_space<T: Scalar>(cfg: &SearchConfig, train: &Dataset<T>, dbox: Option<DomainBox<T>>) -> SearchSpace<T> {
    let y_range = Interval::hull_of(train.y.iter().copied());
    SearchSpace {
        dim: train.d(),
        exp_range: cfg.exp_range,
        transforms: cfg.transform_set.clone(),
        outer: admissible_g(&cfg.invertible_set, &y_range),
        budget: cfg.budget.unwrap_or_else(|| compute_budget(train.n())),
        dbox: dbox.unwrap_or_else(|| DomainBox::from_rows(&train.x, train.d())),
    }
}

fn better<T: Scalar>(challenger: &Individual<T>, incumbent: &Individual<T>) -> bool {
    challenger.fit.cmp_selection(&incumbent.fit).is_gt()
}

fn best_of<T: Scalar>(pop: &[Individual<T>]) -> &Individual<T> {
    pop.iter()
        .fold(&pop[0], |best, ind| if better(ind, best) { ind } else { best })
}

/// Runs the search on `train` and returns the best individual found.
pub fn evolve_run<T: Scalar>(
    cfg: &SearchConfig,
    train: &Dataset<T>,
    dbox: Option<DomainBox<T>>,
) -> Result<RunResult<T>, TirError> {
    cfg.validate()?;
    if train.n() < 2 || train.d() == 0 {
        return Err(TirError::Data(format!(
            "need at least 2 samples and 1 variable, got {}x{}",
            train.n(),
            train.d()
        )));
    }
    let space = search_space(cfg, train, dbox);
    let active = penalty_active(train.n(), train.d(), cfg.penalty_rule);
    let c = if active { T::lit(cfg.penalty_c) } else { T::zero() };
    let (fit_rows, val_rows) = split_overlap(train.n(), OVERLAP_FRACTION);
    let eval = Evaluator {
        fit_x: &train.x[fit_rows.clone()],
        fit_y: &train.y[fit_rows],
        val_x: &train.x[val_rows.clone()],
        val_y: &train.y[val_rows],
        penalty_c: c,
    };

    let mut pop: Vec<Individual<T>> = (0..cfg.pop_size)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, 0, i);
            eval.evaluate(&random_tir(&space, &mut rng))
        })
        .collect();
    if pop.iter().all(|ind| !ind.fit.valid) {
        return Err(TirError::Search(
            "no individual of the initial population could be fitted".into(),
        ));
    }
    let mut best = best_of(&pop).clone();
    let mut history = vec![best.fit.penalized_fitness];

    for gen in 1..=cfg.generations {
        pop = (0..cfg.pop_size)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(cfg.seed, gen, i);
                let a = tournament2(&pop, &mut rng);
                let b = tournament2(&pop, &mut rng);
                let mut child = if rng.gen::<f64>() < cfg.pc {
                    crossover(&a.expr, &b.expr, &space, &mut rng)
                } else {
                    a.expr.clone()
                };
                if rng.gen::<f64>() < cfg.pm {
                    child = mutate(&child, &space, &mut rng).0;
                }
                eval.evaluate(&repair(child, &space, &mut rng))
            })
            .collect();
        let gen_best = best_of(&pop);
        if better(gen_best, &best) {
            best = gen_best.clone();
        }
        history.push(best.fit.penalized_fitness);
    }

    Ok(RunResult {
        best,
        history,
        budget: space.budget,
        penalty_active: active,
        outer_set: space.outer,
    })
}
