//! Linear assignment on squared sheet distances.

use super::qpoint::{cost_matrix, QPoint};
use crate::error::Result;
use crate::scalar::Real;

/// Largest Q for which the assignment is found by exhaustive search.
pub const EXHAUSTIVE_MAX_Q: usize = 6;

/// Calls `visit` with every permutation of `0..q` in lexicographic order.
pub(crate) fn for_each_permutation(q: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..q).collect();
    loop {
        visit(&perm);
        // next lexicographic permutation
        let Some(i) = (1..q).rev().find(|&i| perm[i - 1] < perm[i]) else {
            return;
        };
        let j = (i..q).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
}

/// Sum of `cost[i][perm[i]]` accumulated in row order.
pub(crate) fn assignment_cost<T: Real>(cost: &[T], q: usize, perm: &[usize]) -> T {
    perm.iter().enumerate().fold(T::zero(), |acc, (i, &j)| acc + cost[i * q + j])
}

/// Minimum-cost assignment by enumerating all `q!` permutations.
///
/// Returns `(perm, cost)` where row `i` is matched to column `perm[i]`; the
/// first minimizer in lexicographic order wins ties.
pub fn exhaustive_assignment<T: Real>(cost: &[T], q: usize) -> (Vec<usize>, T) {
    let mut best = (Vec::new(), T::infinity());
    for_each_permutation(q, |perm| {
        let c = assignment_cost(cost, q, perm);
        if c < best.1 {
            best = (perm.to_vec(), c);
        }
    });
    best
}

/// Minimum-cost assignment with the O(q^3) shortest augmenting path
/// variant of the Hungarian method.
pub fn hungarian_assignment<T: Real>(cost: &[T], q: usize) -> (Vec<usize>, T) {
    // 1-based potentials; p[j] is the row matched to column j.
    let inf = T::infinity();
    let mut u = vec![T::zero(); q + 1];
    let mut v = vec![T::zero(); q + 1];
    let mut p = vec![0usize; q + 1];
    let mut way = vec![0usize; q + 1];
    for i in 1..=q {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; q + 1];
        let mut used = vec![false; q + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=q {
                if !used[j] {
                    let cur = cost[(i0 - 1) * q + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=q {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; q];
    for j in 1..=q {
        perm[p[j] - 1] = j - 1;
    }
    let c = assignment_cost(cost, q, &perm);
    (perm, c)
}

/// Exhaustive search for `q <= 6`, Hungarian assignment above.
pub fn best_assignment<T: Real>(cost: &[T], q: usize) -> (Vec<usize>, T) {
    if q <= EXHAUSTIVE_MAX_Q {
        exhaustive_assignment(cost, q)
    } else {
        hungarian_assignment(cost, q)
    }
}

/// Reference metric: the exhaustive `q!` minimum regardless of `q`.
pub fn metric_g_exhaustive<T: Real>(a: &QPoint<T>, b: &QPoint<T>) -> Result<T> {
    if a.q() != b.q() || a.n() != b.n() {
        return Err(crate::error::Error::Dimension("incompatible points".into()));
    }
    let cost = cost_matrix(a, b);
    Ok(exhaustive_assignment(&cost, a.q()).1.max(T::zero()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn permutation_count() {
        let mut count = 0;
        for_each_permutation(5, |_| count += 1);
        assert_eq!(count, 120);
        let mut count = 0;
        for_each_permutation(1, |_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn hungarian_matches_exhaustive_on_random_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for q in 1..=7 {
            for _ in 0..50 {
                let cost: Vec<f64> = (0..q * q).map(|_| rng.gen_range(0.0..10.0)).collect();
                let (pe, ce) = exhaustive_assignment(&cost, q);
                let (ph, ch) = hungarian_assignment(&cost, q);
                assert_eq!(pe, ph);
                assert_eq!(ce, ch);
            }
        }
    }

    #[test]
    fn hungarian_handles_large_q() {
        // A shifted diagonal is the unique optimum.
        let q = 12;
        let mut cost = vec![5.0f64; q * q];
        for i in 0..q {
            cost[i * q + (i + 3) % q] = 0.0;
        }
        let (perm, c) = hungarian_assignment(&cost, q);
        assert_eq!(c, 0.0);
        assert!(perm.iter().enumerate().all(|(i, &j)| j == (i + 3) % q));
    }
}
