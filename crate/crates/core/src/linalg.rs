//! Dense least squares with a minimum-norm answer for rank-deficient systems.
//!
//! Tall systems are first reduced with Householder QR so the SVD only runs on
//! the small `m x m` triangular factor. The SVD is a one-sided (Hestenes)
//! Jacobi iteration, which is accurate for tiny singular values and needs no
//! external LAPACK.

use crate::scalar::Scalar;

/// Default relative singular-value cutoff.
pub const RCOND: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution<T> {
    pub coef: Vec<T>,
    pub rank: usize,
    pub singular_values: Vec<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Householder QR of the column-major `n x m` matrix in place (`n >= m`).
/// Returns the `m x m` upper-triangular factor (column-major) and applies
/// `Q^T` to `rhs`.
fn householder_r<T: Scalar>(cols: &mut [Vec<T>], rhs: &mut [T]) -> Vec<Vec<T>> {
    let m = cols.len();
    let n = rhs.len();
    for k in 0..m {
        let norm = cols[k][k..].iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if cols[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = cols[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        for col in cols.iter_mut().skip(k) {
            let s = two * dot(&v, &col[k..]) / vnorm2;
            for (c, &vi) in col[k..].iter_mut().zip(&v) {
                *c = *c - s * vi;
            }
        }
        let s = two * dot(&v, &rhs[k..n]) / vnorm2;
        for (c, &vi) in rhs[k..].iter_mut().zip(&v) {
            *c = *c - s * vi;
        }
    }
    cols.iter()
        .enumerate()
        .map(|(j, c)| (0..m).map(|i| if i <= j { c[i] } else { T::zero() }).collect())
        .collect()
}

/// One-sided Jacobi: orthogonalizes the columns of `w` (column-major) and
/// returns the accumulated right rotation `v` (column-major, `m x m`).
fn jacobi_orthogonalize<T: Scalar>(w: &mut [Vec<T>]) -> Vec<Vec<T>> {
    let m = w.len();
    let mut v: Vec<Vec<T>> = (0..m)
        .map(|j| (0..m).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    v
}

fn rotate<T: Scalar>(m: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (head, tail) = m.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Minimizes `||A w - b||` over `w`, returning the minimum-norm minimizer.
///
/// `cols` holds the columns of `A`, each of length `b.len()`. Singular values
/// below `rcond * sigma_max` are treated as zero. Returns `None` when the
/// input or the result is not finite.
pub fn lstsq<T: Scalar>(cols: &[Vec<T>], b: &[T], rcond: T) -> Option<LstsqSolution<T>> {
    let n = b.len();
    let m = cols.len();
    if cols.iter().any(|c| c.len() != n) {
        return None;
    }
    if cols.iter().flatten().chain(b).any(|v| !v.is_finite()) {
        return None;
    }
    if m == 0 {
        return Some(LstsqSolution {
            coef: Vec::new(),
            rank: 0,
            singular_values: Vec::new(),
        });
    }
    let mut rhs = b.to_vec();
    let mut work: Vec<Vec<T>> = if n >= m {
        let mut a = cols.to_vec();
        let r = householder_r(&mut a, &mut rhs);
        rhs.truncate(m);
        r
    } else {
        cols.to_vec()
    };
    let v = jacobi_orthogonalize(&mut work);
    let sigma: Vec<T> = work.iter().map(|c| dot(c, c).sqrt()).collect();
    let smax = sigma.iter().fold(T::zero(), |a, &s| a.max(s));
    let cutoff = rcond * smax;
    let mut coef = vec![T::zero(); m];
    let mut rank = 0;
    for j in 0..m {
        let s = sigma[j];
        if s <= cutoff || s == T::zero() {
            continue;
        }
        rank += 1;
        // u_j = w_j / s, so u_j^T rhs / s = w_j^T rhs / s^2
        let scale = dot(&work[j], &rhs) / (s * s);
        for (c, &vij) in coef.iter_mut().zip(&v[j]) {
            *c = *c + scale * vij;
        }
    }
    if coef.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let mut singular_values = sigma;
    singular_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Some(LstsqSolution {
        coef,
        rank,
        singular_values,
    })
}
