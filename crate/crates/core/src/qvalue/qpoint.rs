use std::cmp::Ordering;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::matching::best_assignment;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// An unordered Q-tuple of vectors in `R^n`.
///
/// Values are stored sheet-major in a flat buffer. The internal order is an
/// artifact of construction; equality of points is up to permutation and is
/// measured with [`metric_g`].
#[derive(Debug, Clone, PartialEq)]
pub struct QPoint<T> {
    q: usize,
    n: usize,
    values: Vec<T>,
}

impl<T: Real> QPoint<T> {
    /// Builds a point from a flat sheet-major buffer of length `q * n`.
    pub fn from_flat(q: usize, n: usize, values: Vec<T>) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::Dimension(format!("q = {q} and n = {n} must be positive")));
        }
        if values.len() != q * n {
            return Err(Error::Dimension(format!("expected {} values for q = {q}, n = {n}, got {}", q * n, values.len())));
        }
        Ok(Self { q, n, values })
    }

    pub fn from_sheets(sheets: &[Vec<T>]) -> Result<Self> {
        let q = sheets.len();
        let n = sheets.first().map_or(0, Vec::len);
        if sheets.iter().any(|s| s.len() != n) {
            return Err(Error::Dimension("sheets of different dimension".into()));
        }
        Self::from_flat(q, n, sheets.concat())
    }

    /// `q` copies of the vector `v`.
    pub fn repeated(q: usize, v: &[T]) -> Result<Self> {
        Self::from_flat(q, v.len(), v.repeat(q))
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sheet(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn sheets(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.n)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.values
    }

    /// `|a|^2 = sum_i |a_i|^2`.
    pub fn norm_sq(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    /// Reorders the sheets by the permutation `perm`: sheet `i` of the
    /// result is sheet `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &j in perm {
            values.extend_from_slice(self.sheet(j));
        }
        Self { q: self.q, n: self.n, values }
    }

    /// Smallest distance between two distinct sheets (infinite for `q = 1`).
    pub fn min_separation(&self) -> T {
        let mut best = T::infinity();
        for i in 0..self.q {
            for j in (i + 1)..self.q {
                best = best.min(dist_sq(self.sheet(i), self.sheet(j)).sqrt());
            }
        }
        best
    }

    /// Sheets sorted lexicographically; the canonical form used on output.
    pub fn canonical(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.q).collect();
        idx.sort_by(|&a, &b| lex_cmp(self.sheet(a), self.sheet(b)));
        self.permuted(&idx)
    }

    pub fn map_sheets(&self, mut f: impl FnMut(&[T]) -> Vec<T>) -> Result<Self> {
        let sheets: Vec<Vec<T>> = self.sheets().map(&mut f).collect();
        Self::from_sheets(&sheets)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { q: self.q, n: self.n, values: self.values.iter().map(|&x| x * factor).collect() }
    }
}

pub(crate) fn dist_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn lex_cmp<T: Real>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn check_compatible<T: Real>(a: &QPoint<T>, b: &QPoint<T>) -> Result<()> {
    if a.q != b.q || a.n != b.n {
        return Err(Error::Dimension(format!("cannot compare A_{}(R^{}) with A_{}(R^{})", a.q, a.n, b.q, b.n)));
    }
    Ok(())
}

/// Optimal-matching distance `G(a, b) = min_sigma sqrt(sum_i |a_i - b_sigma(i)|^2)`.
pub fn metric_g<T: Real>(a: &QPoint<T>, b: &QPoint<T>) -> Result<T> {
    check_compatible(a, b)?;
    let cost = cost_matrix(a, b);
    let (_, c) = best_assignment(&cost, a.q);
    Ok(c.max(T::zero()).sqrt())
}

/// Squared distances `|a_i - b_j|^2`, row-major.
pub(crate) fn cost_matrix<T: Real>(a: &QPoint<T>, b: &QPoint<T>) -> Vec<T> {
    let q = a.q;
    let mut cost = Vec::with_capacity(q * q);
    for i in 0..q {
        for j in 0..q {
            cost.push(dist_sq(a.sheet(i), b.sheet(j)));
        }
    }
    cost
}

/// The average of the sheets, `eta(a) = (1/Q) sum_i a_i`.
pub fn eta<T: Real>(a: &QPoint<T>) -> Vec<T> {
    let mut mean = vec![T::zero(); a.n];
    for s in a.sheets() {
        for (m, &x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    let qf = T::from_usize_lossy(a.q);
    mean.iter_mut().for_each(|m| *m /= qf);
    mean
}

/// `sum_i [[a_i - eta(a)]]`.
pub fn average_free<T: Real>(a: &QPoint<T>) -> QPoint<T> {
    let mean = eta(a);
    let values = a.values.chunks_exact(a.n).flat_map(|s| s.iter().zip(&mean).map(|(&x, &m)| x - m)).collect();
    QPoint { q: a.q, n: a.n, values }
}

impl<T: Real> Serialize for QPoint<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let canon = self.canonical();
        let rows: Vec<Vec<f64>> = canon.sheets().map(|s| s.iter().map(|x| x.as_f64()).collect()).collect();
        rows.serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for QPoint<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        let sheets: Vec<Vec<T>> = rows.iter().map(|r| r.iter().map(|&x| T::lit(x)).collect()).collect();
        QPoint::from_sheets(&sheets).map_err(D::Error::custom)
    }
}
