//! Continuous sheet selections along discrete paths.

use super::matching::{assignment_cost, best_assignment, for_each_permutation, EXHAUSTIVE_MAX_Q};
use super::qpoint::{average_free, cost_matrix, dist_sq, QPoint};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tracking tolerances.
#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    /// Ambiguity margin relative to the local sheet separation.
    pub tau_rel: f64,
    /// Sheets closer than `collision_rel * (1 + |a|)` are treated as coincident.
    pub collision_rel: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { tau_rel: 1e-6, collision_rel: 1e-13 }
    }
}

/// Per-sample sheet labelings along a path.
///
/// Sample `k` stores its Q sheets in label order, so that label `i` is
/// continuous from one sample to the next. For closed paths `monodromy[i]`
/// is the label at the first sample into which label `i` of the last
/// sample continues.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetSelection<T> {
    pub q: usize,
    pub n: usize,
    pub samples: Vec<QPoint<T>>,
    pub monodromy: Option<Vec<usize>>,
}

impl<T: Real> SheetSelection<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Coincidence pattern: for each pair (i, j), whether the sheets coincide.
fn collision_pattern<T: Real>(a: &QPoint<T>, eps: T) -> Vec<bool> {
    let q = a.q();
    let mut pat = Vec::with_capacity(q * q);
    for i in 0..q {
        for j in 0..q {
            pat.push(i != j && dist_sq(a.sheet(i), a.sheet(j)).sqrt() <= eps);
        }
    }
    pat
}

fn separation_excluding<T: Real>(a: &QPoint<T>, eps: T) -> T {
    let mut best = T::infinity();
    for i in 0..a.q() {
        for j in (i + 1)..a.q() {
            let d = dist_sq(a.sheet(i), a.sheet(j)).sqrt();
            if d > eps {
                best = best.min(d);
            }
        }
    }
    best
}

/// Finds the labeling of `next` that continues the labeled `prev`.
///
/// Returns `perm` with label `i` of the result equal to sheet `perm[i]` of
/// `next`.
pub(crate) fn match_step<T: Real>(prev: &QPoint<T>, next: &QPoint<T>, opts: &TrackOptions, index: usize) -> Result<Vec<usize>> {
    let q = prev.q();
    let scale = T::one() + prev.norm_sq().sqrt().max(next.norm_sq().sqrt());
    let eps = T::lit(opts.collision_rel) * scale;

    if q == 1 {
        return Ok(vec![0]);
    }
    // a common translation of all sheets leaves every matching cost
    // difference unchanged, so compare the average-free parts
    let (prev, next) = (&average_free(prev), &average_free(next));
    let cost = cost_matrix(prev, next);
    let (perm, c1) = best_assignment(&cost, q);

    let relabeled = next.permuted(&perm);
    if collision_pattern(prev, eps) != collision_pattern(&relabeled, eps) {
        return Err(Error::Tracking { index, reason: "sheets collide; refusing to track through a branch point".into() });
    }

    let sep = separation_excluding(next, eps).min(separation_excluding(prev, eps));
    if !sep.is_finite() {
        // every sheet coincides with every other one: all labelings agree
        return Ok(perm);
    }
    let step = c1.max(T::zero()).sqrt();
    if step >= sep / T::lit(2.0) {
        return Err(Error::Tracking { index, reason: format!("step {:.3e} exceeds half the sheet separation {:.3e}", step.as_f64(), sep.as_f64()) });
    }

    if q <= EXHAUSTIVE_MAX_Q {
        let tau = T::lit(opts.tau_rel) * sep;
        let mut second = T::infinity();
        for_each_permutation(q, |p| {
            if p == perm.as_slice() {
                return;
            }
            // labelings that differ only inside coincident clusters give the same values
            let differs = (0..q).any(|i| dist_sq(next.sheet(p[i]), next.sheet(perm[i])).sqrt() > eps);
            if differs {
                second = second.min(assignment_cost(&cost, q, p));
            }
        });
        if second.max(T::zero()).sqrt() - step <= tau {
            return Err(Error::Tracking { index, reason: "ambiguous matching".into() });
        }
    }
    Ok(perm)
}

/// Builds a continuous sheet labeling of `samples`.
///
/// The first sample keeps its stored order. With `closed` set the path is
/// treated as a loop and the monodromy permutation is recorded.
pub fn track_selection<T: Real>(samples: &[QPoint<T>], closed: bool, opts: &TrackOptions) -> Result<SheetSelection<T>> {
    let first = samples.first().ok_or_else(|| Error::Argument("empty path".into()))?;
    let (q, n) = (first.q(), first.n());
    if samples.iter().any(|s| s.q() != q || s.n() != n) {
        return Err(Error::Dimension("path samples have different shapes".into()));
    }
    let mut labeled = Vec::with_capacity(samples.len());
    labeled.push(first.clone());
    for (k, next) in samples.iter().enumerate().skip(1) {
        let perm = match_step(&labeled[k - 1], next, opts, k)?;
        labeled.push(next.permuted(&perm));
    }
    let monodromy = if closed {
        let last = labeled.last().unwrap();
        Some(match_step(last, &labeled[0], opts, samples.len())?)
    } else {
        None
    };
    Ok(SheetSelection { q, n, samples: labeled, monodromy })
}

/// True when `perm` is a single cycle through all of its elements.
pub(crate) fn is_full_cycle(perm: &[usize]) -> bool {
    let mut i = 0;
    for step in 1..=perm.len() {
        i = perm[i];
        if i == 0 {
            return step == perm.len();
        }
    }
    false
}
