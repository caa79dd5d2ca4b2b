//! Interval images of IT terms and validity filtering.
//!
//! Each variable occurs at most once in a term, so plain interval arithmetic
//! yields the exact image of a term over a box (up to floating-point
//! rounding). The image is used to discard terms that are undefined somewhere
//! in the training domain and to decide which outer functions `g` can be
//! inverted on the training target.

use std::collections::HashMap;

use crate::error::TirError;
use crate::expr::{InvertibleFn, ItExpr, Term, TransformFn};
use crate::scalar::Scalar;

/// Closed interval `[lo, hi]` with possibly infinite endpoints.
///
/// The empty interval is represented by `lo > hi` (see [`Interval::empty`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        debug_assert!(
            lo <= hi || lo.is_nan() || hi.is_nan(),
            "interval endpoints out of order"
        );
        Self { lo, hi }
    }

    pub fn point(v: T) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn empty() -> Self {
        Self {
            lo: T::infinity(),
            hi: T::neg_infinity(),
        }
    }

    pub fn entire() -> Self {
        Self {
            lo: T::neg_infinity(),
            hi: T::infinity(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || self.lo.is_nan() || self.hi.is_nan()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(T::zero())
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.is_empty() || (other.lo <= self.lo && self.hi <= other.hi)
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Self) -> Self {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Hull of a set of values; empty when the iterator is.
    pub fn hull_of(values: impl IntoIterator<Item = T>) -> Self {
        values
            .into_iter()
            .fold(Self::empty(), |acc, v| acc.hull(&Self::point(v)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_empty() || other.is_empty() {
            return Self::empty();
        }
        // 0 * inf is taken as 0: a zero factor is exact, the infinity is a bound
        let prod = |a: T, b: T| {
            let p = a * b;
            if p.is_nan() {
                T::zero()
            } else {
                p
            }
        };
        Self::hull_of([
            prod(self.lo, other.lo),
            prod(self.lo, other.hi),
            prod(self.hi, other.lo),
            prod(self.hi, other.hi),
        ])
    }

    /// Exact image `{x^k : x in self}`.
    ///
    /// With a negative exponent and zero inside the interval the image is
    /// unbounded; the returned hull then has one or two infinite endpoints.
    pub fn powi(&self, k: i32) -> Self {
        if self.is_empty() {
            return Self::empty();
        }
        let (a, b) = (self.lo, self.hi);
        if k == 0 {
            return Self::point(T::one());
        }
        let m = k.unsigned_abs() as i32;
        let even = m % 2 == 0;
        let pos = if !even || a >= T::zero() {
            Self {
                lo: a.powi(m),
                hi: b.powi(m),
            }
        } else if b <= T::zero() {
            Self {
                lo: b.powi(m),
                hi: a.powi(m),
            }
        } else {
            Self {
                lo: T::zero(),
                hi: a.powi(m).max(b.powi(m)),
            }
        };
        if k > 0 {
            return pos;
        }
        if !self.contains_zero() {
            return Self {
                lo: pos.hi.recip(),
                hi: pos.lo.recip(),
            };
        }
        let inf = T::infinity();
        if a == T::zero() && b == T::zero() {
            Self::entire()
        } else if even {
            Self {
                lo: pos.hi.recip(),
                hi: inf,
            }
        } else if a == T::zero() {
            Self { lo: b.powi(k), hi: inf }
        } else if b == T::zero() {
            Self {
                lo: -inf,
                hi: a.powi(k),
            }
        } else {
            Self::entire()
        }
    }
}

/// Interval of real numbers with per-endpoint openness, used for function
/// domains and admissible target ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain<T> {
    pub lo: T,
    pub hi: T,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl<T: Scalar> Domain<T> {
    pub fn reals() -> Self {
        Self {
            lo: T::neg_infinity(),
            hi: T::infinity(),
            lo_open: false,
            hi_open: false,
        }
    }

    pub fn open(lo: T, hi: T) -> Self {
        Self {
            lo,
            hi,
            lo_open: true,
            hi_open: true,
        }
    }

    pub fn contains(&self, v: T) -> bool {
        let above = if self.lo_open { v > self.lo } else { v >= self.lo };
        let below = if self.hi_open { v < self.hi } else { v <= self.hi };
        above && below
    }

    /// True when every point of `iv` lies inside the domain.
    pub fn contains_interval(&self, iv: &Interval<T>) -> bool {
        iv.is_empty() || (self.contains(iv.lo) && self.contains(iv.hi))
    }
}

impl TransformFn {
    pub fn domain<T: Scalar>(self) -> Domain<T> {
        match self {
            TransformFn::Log => Domain {
                lo: T::zero(),
                hi: T::infinity(),
                lo_open: true,
                hi_open: false,
            },
            TransformFn::Sqrt => Domain {
                lo: T::zero(),
                hi: T::infinity(),
                lo_open: false,
                hi_open: false,
            },
            _ => Domain::reals(),
        }
    }

    /// Image of `self` over `iv`. The caller must ensure `iv` is inside the
    /// domain.
    pub fn image<T: Scalar>(self, iv: &Interval<T>) -> Interval<T> {
        if iv.is_empty() {
            return *iv;
        }
        match self {
            TransformFn::Id => *iv,
            TransformFn::Tanh | TransformFn::Log | TransformFn::Exp | TransformFn::Sqrt => Interval {
                lo: self.apply(iv.lo),
                hi: self.apply(iv.hi),
            },
            TransformFn::Sin => periodic_image(iv, T::FRAC_PI_2(), -T::FRAC_PI_2(), |v| v.sin()),
            TransformFn::Cos => periodic_image(iv, T::zero(), T::PI(), |v| v.cos()),
        }
    }
}

/// Image of sin/cos: extrema are the endpoint values unless a peak
/// (`peak + 2k*pi`) or trough lies inside the interval.
fn periodic_image<T: Scalar>(iv: &Interval<T>, peak: T, trough: T, f: impl Fn(T) -> T) -> Interval<T> {
    let one = T::one();
    if !iv.is_bounded() || iv.width() >= T::TAU() {
        return Interval { lo: -one, hi: one };
    }
    let hits = |at: T| {
        let k = ((iv.lo - at) / T::TAU()).ceil();
        at + k * T::TAU() <= iv.hi
    };
    let (fa, fb) = (f(iv.lo), f(iv.hi));
    Interval {
        lo: if hits(trough) { -one } else { fa.min(fb) },
        hi: if hits(peak) { one } else { fa.max(fb) },
    }
}

impl InvertibleFn {
    /// Target values `y` for which `g^-1(y)` is defined and `g(g^-1(y)) = y`.
    pub fn target_domain<T: Scalar>(self) -> Domain<T> {
        let inf = T::infinity();
        match self {
            InvertibleFn::Id | InvertibleFn::Tan | InvertibleFn::Log => Domain::reals(),
            InvertibleFn::Atan => Domain::open(-T::FRAC_PI_2(), T::FRAC_PI_2()),
            InvertibleFn::Tanh => Domain::open(-T::one(), T::one()),
            InvertibleFn::Exp => Domain {
                lo: T::zero(),
                hi: inf,
                lo_open: true,
                hi_open: false,
            },
            InvertibleFn::Sqrt => Domain {
                lo: T::zero(),
                hi: inf,
                lo_open: false,
                hi_open: false,
            },
        }
    }
}

/// Per-variable bounds of the input space.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox<T>(pub Vec<Interval<T>>);

impl<T: Scalar> DomainBox<T> {
    /// Column-wise `[min, max]` of the rows.
    pub fn from_rows(rows: &[Vec<T>], d: usize) -> Self {
        let mut ivs = vec![Interval::empty(); d];
        for r in rows {
            for (iv, &v) in ivs.iter_mut().zip(r) {
                *iv = iv.hull(&Interval::point(v));
            }
        }
        DomainBox(ivs)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Replaces bounds from a text file with one `name lo hi` line per
    /// variable. Blank lines and lines starting with `#` are skipped.
    pub fn apply_overrides(&mut self, names: &[String], text: &str) -> Result<(), TirError> {
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| TirError::Parse(format!("domain file line {}: {msg}", lineno + 1));
            let [name, lo, hi] = fields[..] else {
                return Err(bad("expected `name lo hi`"));
            };
            let &i = index
                .get(name)
                .ok_or_else(|| bad(&format!("unknown variable '{name}'")))?;
            let lo: f64 = lo.parse().map_err(|_| bad("bad lower bound"))?;
            let hi: f64 = hi.parse().map_err(|_| bad("bad upper bound"))?;
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(bad("lower bound exceeds upper bound"));
            }
            self.0[i] = Interval::new(T::lit(lo), T::lit(hi));
        }
        Ok(())
    }
}

/// Image of the interaction `prod_i x_i^k_i` over the box.
pub fn interaction_image<T: Scalar>(t: &Term, dbox: &DomainBox<T>) -> Interval<T> {
    t.occurrences()
        .fold(Interval::point(T::one()), |acc, (i, k)| acc.mul(&dbox.0[i].powi(k)))
}

/// Image of a term over a box, or `None` when the term is undefined at some
/// point of the box: a negative exponent on a variable whose range includes
/// zero, or an interaction range not contained in the transformation's
/// domain.
pub fn image_of_term<T: Scalar>(t: &Term, dbox: &DomainBox<T>) -> Option<Interval<T>> {
    debug_assert_eq!(t.dim(), dbox.dim());
    if t.occurrences().any(|(i, k)| k < 0 && dbox.0[i].contains_zero()) {
        return None;
    }
    let r = interaction_image(t, dbox);
    if r.is_empty() || !t.func.domain().contains_interval(&r) {
        return None;
    }
    Some(t.func.image(&r))
}

pub fn is_valid_term<T: Scalar>(t: &Term, dbox: &DomainBox<T>) -> bool {
    image_of_term(t, dbox).is_some()
}

/// Outer functions whose inverse is defined on the whole target range.
///
/// `id` is admissible for every range; if `fns` yields nothing the result
/// falls back to `[id]`.
pub fn admissible_g<T: Scalar>(fns: &[InvertibleFn], y_range: &Interval<T>) -> Vec<InvertibleFn> {
    let out: Vec<_> = fns
        .iter()
        .copied()
        .filter(|g| g.target_domain().contains_interval(y_range))
        .collect();
    if out.is_empty() {
        vec![InvertibleFn::Id]
    } else {
        out
    }
}

/// Removes every term that is undefined somewhere in the box.
pub fn filter_terms<T: Scalar>(e: &ItExpr<T>, dbox: &DomainBox<T>) -> ItExpr<T> {
    let (terms, weights) = e
        .terms
        .iter()
        .zip(&e.weights)
        .filter(|(t, _)| is_valid_term(t, dbox))
        .map(|(t, &w)| (t.clone(), w))
        .unzip();
    ItExpr {
        terms,
        weights,
        intercept: e.intercept,
    }
}
