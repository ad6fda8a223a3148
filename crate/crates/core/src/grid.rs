//! Log-polar sampling grids, finite-difference stencils and radial quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Points per finite-difference stencil (sixth-order accurate).
pub const STENCIL_POINTS: usize = 7;

/// Geometric polar grid on a disk: rings at `r_min * 2^(k / rings_per_octave)`
/// for `k = 0..=rings_per_octave * octaves`, each with `n_theta` equispaced
/// angles starting at angle 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub r_min: f64,
    pub rings_per_octave: usize,
    pub octaves: usize,
    pub n_theta: usize,
    pub center: [f64; 2],
}

impl Default for PolarGrid {
    /// Eight rings per octave, sixteen octaves below radius 1, 512 angles.
    fn default() -> Self {
        Self { r_min: 2f64.powi(-16), rings_per_octave: 8, octaves: 16, n_theta: 512, center: [0.0, 0.0] }
    }
}

impl PolarGrid {
    pub fn new(r_max: f64, rings_per_octave: usize, octaves: usize, n_theta: usize) -> Result<Self> {
        let g = Self { r_min: r_max * 2f64.powi(-(octaves as i32)), rings_per_octave, octaves, n_theta, center: [0.0, 0.0] };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min.is_finite() && self.r_min > 0.0) {
            return Err(Error::Argument(format!("r_min = {} must be positive", self.r_min)));
        }
        if self.rings_per_octave == 0 || self.octaves == 0 {
            return Err(Error::Argument("rings_per_octave and octaves must be positive".into()));
        }
        if self.n_rings() < STENCIL_POINTS {
            return Err(Error::Argument(format!("grid needs at least {STENCIL_POINTS} rings")));
        }
        if self.n_theta < 64 {
            return Err(Error::Argument(format!("n_theta = {} is below 64", self.n_theta)));
        }
        Ok(())
    }

    pub fn n_rings(&self) -> usize {
        self.rings_per_octave * self.octaves + 1
    }

    /// Ratio between consecutive radii, `2^(-1/rings_per_octave)`.
    pub fn rho(&self) -> f64 {
        2f64.powf(-1.0 / self.rings_per_octave as f64)
    }

    /// Spacing in `s = ln r`.
    pub fn log_step(&self) -> f64 {
        std::f64::consts::LN_2 / self.rings_per_octave as f64
    }

    pub fn radius(&self, ring: usize) -> f64 {
        self.r_min * 2f64.powf(ring as f64 / self.rings_per_octave as f64)
    }

    pub fn r_max(&self) -> f64 {
        self.radius(self.n_rings() - 1)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n_rings()).map(|k| self.radius(k)).collect()
    }

    pub fn angle(&self, a: usize) -> f64 {
        2.0 * std::f64::consts::PI * a as f64 / self.n_theta as f64
    }

    pub fn angle_step(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_theta as f64
    }

    /// Ring index of a radius lying on the grid (relative tolerance 1e-9 in `ln r`).
    pub fn ring_of(&self, r: f64) -> Result<usize> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Range(format!("radius {r} is not positive")));
        }
        let x = (r / self.r_min).ln() / self.log_step();
        let k = x.round();
        if k < 0.0 || k as usize >= self.n_rings() {
            return Err(Error::Range(format!("radius {r:e} outside grid range [{:e}, {:e}]", self.r_min, self.r_max())));
        }
        if (x - k).abs() > 1e-6 {
            return Err(Error::Range(format!("radius {r:e} is not a grid radius")));
        }
        Ok(k as usize)
    }

    /// The same grid with every radius divided by `r`.
    pub fn dilated(&self, r: f64) -> Self {
        Self { r_min: self.r_min / r, ..*self }
    }
}

/// Finite-difference weights for the first derivative at `x0` from samples at
/// `nodes` (Fornberg's recursion).
pub fn fd_weights(x0: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let m = 1usize;
    // c[j][k]: weight of node j for derivative order k
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[m]).collect()
}

/// A first-derivative stencil on a uniform lattice of unit spacing.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub offsets: Vec<isize>,
    pub weights: Vec<f64>,
}

impl Stencil {
    /// Seven-point stencil at index `i` of a lattice with `len` points,
    /// shifted to stay inside `0..len` near the ends.
    pub fn at(i: usize, len: usize) -> Self {
        let half = STENCIL_POINTS / 2;
        let start = i.saturating_sub(half).min(len - STENCIL_POINTS);
        let offsets: Vec<isize> = (start..start + STENCIL_POINTS).map(|j| j as isize - i as isize).collect();
        let nodes: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
        let weights = fd_weights(0.0, &nodes);
        Self { offsets, weights }
    }

    /// Centered stencil for periodic directions.
    pub fn centered() -> Self {
        let half = (STENCIL_POINTS / 2) as isize;
        let offsets: Vec<isize> = (-half..=half).collect();
        let nodes: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
        Self { weights: fd_weights(0.0, &nodes), offsets }
    }
}

/// Composite Newton-Cotes integral of uniformly spaced samples.
///
/// Boole's rule when the interval count is divisible by 4, Simpson's when it
/// is even, Simpson plus a closing 3/8 panel otherwise.
pub fn integrate_uniform<T: Real>(values: &[T], h: T) -> T {
    let n = values.len().saturating_sub(1);
    let t = T::lit;
    match n {
        0 => T::zero(),
        1 => h * (values[0] + values[1]) / t(2.0),
        3 => three_eighths(values, h),
        _ if n.is_multiple_of(4) => {
            let mut acc = T::zero();
            for p in values.windows(5).step_by(4) {
                acc += t(7.0) * (p[0] + p[4]) + t(32.0) * (p[1] + p[3]) + t(12.0) * p[2];
            }
            acc * t(2.0) * h / t(45.0)
        }
        _ if n.is_multiple_of(2) => simpson(values, h),
        _ => simpson(&values[..n - 2], h) + three_eighths(&values[n - 3..], h),
    }
}

fn simpson<T: Real>(values: &[T], h: T) -> T {
    let t = T::lit;
    let mut acc = T::zero();
    for p in values.windows(3).step_by(2) {
        acc += p[0] + t(4.0) * p[1] + p[2];
    }
    acc * h / t(3.0)
}

fn three_eighths<T: Real>(p: &[T], h: T) -> T {
    let t = T::lit;
    t(3.0) * h / t(8.0) * (p[0] + t(3.0) * (p[1] + p[2]) + p[3])
}

/// `int v(s) e^{c (s - s_0)} ds` over uniformly spaced samples starting at
/// `s_0`, with the Newton-Cotes panels of [`integrate_uniform`] taken as
/// product rules for the weight `e^{c s}`: exact whenever `v` is a
/// polynomial of the panel degree.
pub fn integrate_uniform_exp<T: Real>(values: &[T], h: f64, c: f64) -> T {
    let n = values.len().saturating_sub(1);
    let panels: Vec<(usize, usize)> = match n {
        0 => vec![],
        1 => vec![(0, 1)],
        3 => vec![(0, 3)],
        _ if n.is_multiple_of(4) => (0..n / 4).map(|b| (4 * b, 4)).collect(),
        _ if n.is_multiple_of(2) => (0..n / 2).map(|b| (2 * b, 2)).collect(),
        _ => {
            let mut v: Vec<(usize, usize)> = (0..(n - 3) / 2).map(|b| (2 * b, 2)).collect();
            v.push((n - 3, 3));
            v
        }
    };
    let mut cache: [Option<Vec<f64>>; 5] = Default::default();
    let mut acc = T::zero();
    for (start, m) in panels {
        let w = cache[m].get_or_insert_with(|| exp_panel_weights(m, c * h));
        let scale = (c * h * start as f64).exp() * h;
        let mut panel = T::zero();
        for (j, &wj) in w.iter().enumerate() {
            panel += T::lit(wj) * values[start + j];
        }
        acc += panel * T::lit(scale);
    }
    acc
}

/// Weights `w_j` on nodes `0..=m` with `sum_j w_j t_j^p = int_0^m t^p e^{a t} dt`.
fn exp_panel_weights(m: usize, a: f64) -> Vec<f64> {
    let len = m + 1;
    let mf = m as f64;
    let moment = |p: usize| -> f64 {
        // series in a; a m stays below 1 on every supported grid
        let mut term = 1.0;
        let mut sum = 0.0;
        for j in 0..60 {
            if j > 0 {
                term *= a * mf / j as f64;
            }
            sum += term / (p + j + 1) as f64;
        }
        sum * mf.powi(p as i32 + 1)
    };
    let mut mat: Vec<f64> = (0..len).flat_map(|p| (0..len).map(move |j| (j as f64).powi(p as i32))).collect();
    let mut rhs: Vec<f64> = (0..len).map(moment).collect();
    for col in 0..len {
        let piv = (col..len).max_by(|&x, &y| mat[x * len + col].abs().total_cmp(&mat[y * len + col].abs())).unwrap();
        for k in 0..len {
            mat.swap(col * len + k, piv * len + k);
        }
        rhs.swap(col, piv);
        for row in col + 1..len {
            let f = mat[row * len + col] / mat[col * len + col];
            for k in col..len {
                mat[row * len + k] -= f * mat[col * len + k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut w = vec![0.0; len];
    for row in (0..len).rev() {
        let s: f64 = (row + 1..len).map(|k| mat[row * len + k] * w[k]).sum();
        w[row] = (rhs[row] - s) / mat[row * len + row];
    }
    w
}

/// Integral over `s in (-inf, s_0]` of a profile continued below the first
/// sample as `g_0 e^{beta (s - s_0)}`, with `beta` read off the first two samples.
///
/// Falls back to the area scaling `beta = 2` when the samples do not decay.
pub fn power_tail<T: Real>(g0: T, g1: T, h: T) -> T {
    if g0 == T::zero() {
        return T::zero();
    }
    let ratio = g1 / g0;
    let beta = if ratio > T::one() { ratio.ln() / h } else { T::lit(2.0) };
    g0 / beta.max(T::lit(0.05))
}
