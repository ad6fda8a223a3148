//! Mass and tilt excess of Q-valued graphs, optimal planes and decay fits.
//!
//! The excess of the graph of `f` over the base disk `B_r` relative to the
//! plane `{(x, A x)}` is
//!
//! `E(A) = (1 / (Q pi r^2)) * int_{graph} (1 - <T, pi_A>)`,
//!
//! i.e. half the squared tilt `|T - pi_A|^2` averaged against `Q pi r^2`.
//! For graphs the pairing `<T, pi_A>` is polynomial in `A` with coefficients
//! given by a handful of moments of `Df`, so once those moments are known
//! the excess and its gradient are available in closed form.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qfunction::{QFunction, SampleView};
use crate::scalar::{fmt_sig17, Real};

/// Default bound on `|A|` for the graphical reparametrization.
pub const TILT_MAX: f64 = 0.5;
const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneFrame {
    Horizontal,
    Given,
    Fitted,
}

/// The plane `{(x, A x) : x in R^2}` in `R^{2+n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub n: usize,
    /// `A` stored row-major as an `n x 2` matrix.
    pub tilt: Vec<f64>,
    pub frame: PlaneFrame,
}

impl Plane {
    pub fn horizontal(n: usize) -> Self {
        Plane { n, tilt: vec![0.0; 2 * n], frame: PlaneFrame::Horizontal }
    }

    pub fn from_tilt(n: usize, tilt: Vec<f64>) -> Result<Self> {
        if tilt.len() != 2 * n {
            return Err(Error::Dimension(format!("tilt has {} entries, expected {}", tilt.len(), 2 * n)));
        }
        if tilt.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("non-finite tilt".into()));
        }
        Ok(Plane { n, tilt, frame: PlaneFrame::Given })
    }

    /// Column `k` of `A`, the vertical part of the image of `e_k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|c| self.tilt[2 * c + k]).collect()
    }

    /// Frobenius norm of `A`.
    pub fn tilt_norm(&self) -> f64 {
        self.tilt.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcessDefinition {
    /// Graph over the base disk `B_r`.
    #[default]
    Cylindrical,
    /// Graph points inside the ball `B_r` of `R^{2+n}`.
    SphericalBall,
}

impl ExcessDefinition {
    pub fn name(self) -> &'static str {
        match self {
            ExcessDefinition::Cylindrical => "cylindrical",
            ExcessDefinition::SphericalBall => "spherical_ball",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessRecord {
    pub r: f64,
    pub mass: f64,
    pub excess: f64,
    pub plane: Plane,
    pub definition: ExcessDefinition,
}

/// Integrals over the region of `sum_i` of `J_i`, `1`, `a_i`, `b_i` and
/// `a_i b_i^T - b_i a_i^T`, where `a_i, b_i` are the partials of sheet `i`.
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    mass: f64,
    area: f64,
    v1: Vec<f64>,
    v2: Vec<f64>,
    k: Vec<f64>,
    /// `Q pi r^2`.
    norm: f64,
}

fn jacobian<T: Real>(a: &[T], b: &[T]) -> T {
    let dot = |u: &[T], v: &[T]| u.iter().zip(v).fold(T::zero(), |s, (&x, &y)| s + x * y);
    let (aa, bb, ab) = (dot(a, a), dot(b, b), dot(a, b));
    ((T::one() + aa) * (T::one() + bb) - ab * ab).sqrt()
}

fn moments<T: Real>(f: &QFunction<T>, r: f64, definition: ExcessDefinition) -> Result<Moments> {
    let grid = f.grid();
    let k = grid.ring_of(r)?;
    let n = f.n();
    let width = 2 + 2 * n + n * n;
    let r2 = T::lit(r * r);
    let inside = |v: &SampleView<'_, T>, i: usize| match definition {
        ExcessDefinition::Cylindrical => true,
        ExcessDefinition::SphericalBall => T::lit(v.r * v.r) + v.sheet(i).iter().fold(T::zero(), |s, &x| s + x * x) < r2,
    };
    let rings = f.ring_integrals_vec(width, |v, acc| {
        for i in 0..v.q {
            if !inside(v, i) {
                continue;
            }
            let (a, b) = v.cartesian(i);
            acc[0] += jacobian(&a, &b);
            acc[1] += T::one();
            for c in 0..n {
                acc[2 + c] += a[c];
                acc[2 + n + c] += b[c];
                for d in 0..n {
                    acc[2 + 2 * n + c * n + d] += a[c] * b[d] - b[c] * a[d];
                }
            }
        }
    });
    let column = |j: usize| -> f64 {
        let profile: Vec<T> = rings.iter().map(|ring| ring[j]).collect();
        f.disk_integral(&profile, grid.radius(k)).map(|x| x.as_f64()).unwrap_or(f64::NAN)
    };
    let all: Vec<f64> = (0..width).map(column).collect();
    Ok(Moments {
        n,
        mass: all[0],
        area: all[1],
        v1: all[2..2 + n].to_vec(),
        v2: all[2 + n..2 + 2 * n].to_vec(),
        k: all[2 + 2 * n..].to_vec(),
        norm: f.q() as f64 * std::f64::consts::PI * r * r,
    })
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(x, y)| x * y).sum()
}

impl Moments {
    fn split(&self, tilt: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c1 = (0..self.n).map(|c| tilt[2 * c]).collect();
        let c2 = (0..self.n).map(|c| tilt[2 * c + 1]).collect();
        (c1, c2)
    }

    fn k_apply(&self, v: &[f64], transpose: bool) -> Vec<f64> {
        (0..self.n).map(|c| (0..self.n).map(|d| if transpose { self.k[d * self.n + c] } else { self.k[c * self.n + d] } * v[d]).sum()).collect()
    }

    /// Excess and its gradient with respect to the row-major tilt.
    fn excess(&self, tilt: &[f64]) -> (f64, Vec<f64>) {
        let (c1, c2) = self.split(tilt);
        let kc2 = self.k_apply(&c2, false);
        let ktc1 = self.k_apply(&c1, true);
        let pairing = self.area + dot(&self.v1, &c1) + dot(&self.v2, &c2) + dot(&c1, &kc2);
        let (n11, n22, n12) = (dot(&c1, &c1), dot(&c2, &c2), dot(&c1, &c2));
        let j = ((1.0 + n11) * (1.0 + n22) - n12 * n12).sqrt();
        let value = (self.mass - pairing / j) / self.norm;
        let mut grad = vec![0.0; 2 * self.n];
        for c in 0..self.n {
            let dn1 = self.v1[c] + kc2[c];
            let dn2 = self.v2[c] + ktc1[c];
            let dj1 = (c1[c] * (1.0 + n22) - n12 * c2[c]) / j;
            let dj2 = (c2[c] * (1.0 + n11) - n12 * c1[c]) / j;
            grad[2 * c] = -(dn1 * j - pairing * dj1) / (j * j) / self.norm;
            grad[2 * c + 1] = -(dn2 * j - pairing * dj2) / (j * j) / self.norm;
        }
        (value, grad)
    }
}

/// `int_{B_r} sum_i sqrt(det(Id + Df_i^T Df_i))`.
pub fn graph_mass<T: Real>(f: &QFunction<T>, r: f64) -> Result<f64> {
    Ok(moments(f, r, ExcessDefinition::Cylindrical)?.mass)
}

fn check_tilt(plane: &Plane) -> Result<()> {
    if plane.tilt_norm() > TILT_MAX {
        return Err(Error::Tilt(format!("|A| = {:e} exceeds {TILT_MAX}", plane.tilt_norm())));
    }
    Ok(())
}

/// Excess of the graph relative to a given plane at radius `r`.
pub fn spherical_excess<T: Real>(f: &QFunction<T>, r: f64, plane: &Plane, definition: ExcessDefinition) -> Result<ExcessRecord> {
    if plane.n != f.n() {
        return Err(Error::Dimension(format!("plane codomain {} vs map codomain {}", plane.n, f.n())));
    }
    check_tilt(plane)?;
    let m = moments(f, r, definition)?;
    Ok(ExcessRecord { r, mass: m.mass, excess: m.excess(&plane.tilt).0, plane: plane.clone(), definition })
}

/// Symmetric linear solve by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        for c in 0..n {
            a.swap(col * n + c, piv * n + c);
        }
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            for c in col..n {
                a[row * n + c] -= factor * a[col * n + c];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row * n + c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    Some(x)
}

fn minimize(m: &Moments, start: Vec<f64>) -> Result<Vec<f64>> {
    let dim = start.len();
    let mut x = start;
    let (mut value, mut grad) = m.excess(&x);
    for _ in 0..MAX_ITERATIONS {
        let gnorm = dot(&grad, &grad).sqrt();
        if gnorm < 1e-15 {
            return Ok(x);
        }
        let h = 1e-6;
        let mut hess = vec![0.0; dim * dim];
        for j in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (gp, gm) = (m.excess(&xp).1, m.excess(&xm).1);
            for i in 0..dim {
                hess[i * dim + j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        for i in 0..dim {
            for j in 0..i {
                let s = 0.5 * (hess[i * dim + j] + hess[j * dim + i]);
                hess[i * dim + j] = s;
                hess[j * dim + i] = s;
            }
        }
        let newton =
            solve(hess, grad.iter().map(|g| -g).collect()).filter(|d| dot(d, &grad) < 0.0).unwrap_or_else(|| grad.iter().map(|g| -g).collect());
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&newton).map(|(a, d)| a + t * d).collect();
            let (v, g) = m.excess(&trial);
            if v <= value + 1e-4 * t * dot(&grad, &newton) || t < 1e-12 {
                let step = t * dot(&newton, &newton).sqrt();
                x = trial;
                value = v;
                grad = g;
                if step < 1e-14 * (1.0 + dot(&x, &x).sqrt()) {
                    return Ok(x);
                }
                break;
            }
            t *= 0.5;
        }
    }
    let gnorm = dot(&grad, &grad).sqrt();
    if gnorm < 1e-10 {
        return Ok(x);
    }
    Err(Error::Optimization(format!("no convergence in {MAX_ITERATIONS} iterations (|grad| = {gnorm:e})")))
}

/// Minimizes the excess at radius `r` over tilts, starting from the mean
/// gradient `(1 / Q |B_r|) int sum_i Df_i`.
pub fn optimal_plane<T: Real>(f: &QFunction<T>, r: f64, definition: ExcessDefinition) -> Result<ExcessRecord> {
    let m = moments(f, r, definition)?;
    let n = f.n();
    let start: Vec<f64> = (0..n).flat_map(|c| [m.v1[c] / m.norm, m.v2[c] / m.norm]).collect();
    let tilt = minimize(&m, start)?;
    let plane = Plane { n, tilt, frame: PlaneFrame::Fitted };
    check_tilt(&plane)?;
    let excess = m.excess(&plane.tilt).0;
    Ok(ExcessRecord { r, mass: m.mass, excess, plane, definition })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `log E` against `log r`.
    pub exponent: f64,
    /// `exp` of the intercept.
    pub constant: f64,
    pub r2: f64,
    pub records: Vec<ExcessRecord>,
}

/// Optimal-plane excess at each radius and the least-squares power law
/// through the points `(log r, log E)`.
pub fn excess_decay_fit<T: Real>(f: &QFunction<T>, radii: &[f64], definition: ExcessDefinition) -> Result<DecayFit> {
    if radii.len() < 5 {
        return Err(Error::Argument(format!("{} radii, need at least 5", radii.len())));
    }
    let (lo, hi) = radii.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    if hi < 4.0 * lo * (1.0 - 1e-12) {
        return Err(Error::Argument("radii must span at least two octaves".into()));
    }
    let records = radii.par_iter().map(|&r| optimal_plane(f, r, definition)).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = records.iter().find(|rec| !(rec.excess > 0.0)) {
        return Err(Error::Data(format!("excess {:e} at r = {:e} is not positive", bad.excess, bad.r)));
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|rec| (rec.r.ln(), rec.excess.ln())).collect();
    let (slope, intercept, r2) = least_squares(&pts);
    Ok(DecayFit { exponent: slope, constant: intercept.exp(), r2, records })
}

/// Slope, intercept and coefficient of determination of a line fit.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Pairs `r < s <= r0` where `E(r) >= (r/s)^gamma E(s)` fails.
pub fn lower_bound_violations(records: &[ExcessRecord], gamma: f64, r0: f64) -> Vec<(f64, f64)> {
    let sel: Vec<&ExcessRecord> = records.iter().filter(|rec| rec.r <= r0 * (1.0 + 1e-12)).collect();
    let mut out = Vec::new();
    for a in &sel {
        for b in &sel {
            if a.r < b.r && a.excess < (a.r / b.r).powf(gamma) * b.excess {
                out.push((a.r, b.r));
            }
        }
    }
    out
}

/// Second-order expansion of the excess: `2 (M - <T, pi_A>)` against
/// `int sum_i |Df_i - A|^2`, with the quartic quantity bounding the gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorCheck {
    pub twice_surplus: f64,
    pub dirichlet_gap: f64,
    pub quartic: f64,
    /// `|twice_surplus - dirichlet_gap| / quartic`.
    pub constant: f64,
}

pub fn taylor_check<T: Real>(f: &QFunction<T>, r: f64, plane: &Plane) -> Result<TaylorCheck> {
    let m = moments(f, r, ExcessDefinition::Cylindrical)?;
    let twice_surplus = 2.0 * m.excess(&plane.tilt).0 * m.norm;
    let (c1, c2) = m.split(&plane.tilt);
    let (c1t, c2t): (Vec<T>, Vec<T>) = (c1.iter().map(|&x| T::lit(x)).collect(), c2.iter().map(|&x| T::lit(x)).collect());
    let a4 = T::lit((dot(&c1, &c1) + dot(&c2, &c2)).powi(2));
    let rings = f.ring_integrals_vec(2, |v, acc| {
        for i in 0..v.q {
            let (a, b) = v.cartesian(i);
            let gap = a.iter().zip(&c1t).chain(b.iter().zip(&c2t)).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y));
            let grad2 = a.iter().chain(&b).fold(T::zero(), |s, &x| s + x * x);
            acc[0] += gap;
            acc[1] += grad2 * grad2 + a4;
        }
    });
    let integral = |j: usize| -> Result<f64> {
        let profile: Vec<T> = rings.iter().map(|ring| ring[j]).collect();
        Ok(f.disk_integral(&profile, r)?.as_f64())
    };
    let (dirichlet_gap, quartic) = (integral(0)?, integral(1)?);
    let constant = if quartic > 0.0 { (twice_surplus - dirichlet_gap).abs() / quartic } else { 0.0 };
    Ok(TaylorCheck { twice_surplus, dirichlet_gap, quartic, constant })
}

/// Writes records as CSV; `exponent_window` is the local slope of
/// `log E` against `log r` over neighbouring records.
pub fn write_excess_csv(records: &[ExcessRecord], mut out: impl Write) -> Result<()> {
    writeln!(out, "r,excess,exponent_window,mass,tilt_norm,definition")?;
    let n = records.len();
    for (i, rec) in records.iter().enumerate() {
        let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n.saturating_sub(1)));
        let slope = if hi > lo && records[lo].excess > 0.0 && records[hi].excess > 0.0 {
            (records[hi].excess.ln() - records[lo].excess.ln()) / (records[hi].r.ln() - records[lo].r.ln())
        } else {
            f64::NAN
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig17(rec.r),
            fmt_sig17(rec.excess),
            fmt_sig17(slope),
            fmt_sig17(rec.mass),
            fmt_sig17(rec.plane.tilt_norm()),
            rec.definition.name()
        )?;
    }
    Ok(())
}
