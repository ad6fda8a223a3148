//! Dirichlet energy and the smoothed frequency `I = r D / H`, together with
//! the first-variation quantities `E`, `G`, `Sigma` and their identities.
//!
//! All integrals reduce to one-dimensional quadratures in `s = ln r` of
//! per-ring angular integrals; the cutoff kinks at `r/2` and `r` fall on grid
//! rings, so each smooth piece is integrated separately.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qfunction::QFunction;
use crate::resample::dilate;
use crate::scalar::{fmt_sig17, Real};

/// Radial weight in the smoothed quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// `phi = 1` on `[0, 1/2]`, `2 - 2t` on `[1/2, 1]`, `0` beyond.
    #[default]
    Linear,
    /// The indicator of `[0, 1]`: classical Almgren frequency.
    Sharp,
}

impl Cutoff {
    pub fn phi(self, t: f64) -> f64 {
        match self {
            Cutoff::Linear if t <= 0.5 => 1.0,
            Cutoff::Linear if t <= 1.0 => 2.0 - 2.0 * t,
            Cutoff::Sharp if t <= 1.0 => 1.0,
            _ => 0.0,
        }
    }

    /// Derivative of `phi` (left limit at the kinks; the sharp cutoff has
    /// only a singular part, reported as 0).
    pub fn dphi(self, t: f64) -> f64 {
        match self {
            Cutoff::Linear if t > 0.5 && t <= 1.0 => -2.0,
            _ => 0.0,
        }
    }
}

/// Smoothed quantities at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyValues<T> {
    pub d: T,
    pub h: T,
    pub i: T,
    pub e: T,
    pub g: T,
    pub sigma: T,
    /// `dD/dr`.
    pub d_r: T,
    /// `|D - E| / D`; `None` when `D` vanishes.
    pub residual_outer: Option<T>,
    /// `r |dD/dr - 2G| / D`; `None` when `D` vanishes.
    pub residual_inner: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyRecord<T> {
    pub r: f64,
    /// `None` when the height vanishes at this radius.
    pub values: Option<FrequencyValues<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyProfile<T> {
    pub center: [f64; 2],
    pub cutoff: Cutoff,
    pub records: Vec<FrequencyRecord<T>>,
    pub notes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyLimit {
    pub estimate: f64,
    pub spread: f64,
}

/// Raw weighted integrals at a radius before the height check.
#[derive(Debug, Clone, Copy)]
struct Integrals<T> {
    d: T,
    h: T,
    e: T,
    g: T,
    sigma: T,
    d_r: T,
}

fn integrals<T: Real>(f: &QFunction<T>, r: f64, cutoff: Cutoff) -> Result<Integrals<T>> {
    let grid = f.grid();
    let k = grid.ring_of(r)?;
    let agg = f.aggregates();
    let radius = |j: usize| T::lit(grid.radius(j));
    let rt = T::lit(r);
    let two = T::lit(2.0);
    let n = agg.dirichlet.len();
    let weighted = |src: &[T], w: &dyn Fn(usize) -> T| -> Vec<T> { (0..n).map(|j| src[j] * w(j)).collect() };
    let area = |src: &[T]| weighted(src, &|j| radius(j) * radius(j));
    let dir = agg.dirichlet.clone();
    let hgt = area(&agg.height);

    match cutoff {
        Cutoff::Sharp => {
            let d = f.integrate_rings(&dir, 0, k) + f.inner_tail(&dir);
            let sigma = f.integrate_rings(&hgt, 0, k) + f.inner_tail(&hgt);
            Ok(Integrals { d, h: rt * agg.height[k], e: agg.flux[k], g: agg.radial[k] / rt, sigma, d_r: agg.dirichlet[k] / rt })
        }
        Cutoff::Linear => {
            if r / 2.0 < grid.r_min * (1.0 - 1e-12) {
                return Err(Error::Range(format!("radius {r:e} leaves no room for the cutoff above the grid floor")));
            }
            let kh = grid.ring_of(r / 2.0)?;
            // the smooth branch 2 - 2R/r on [r/2, r]
            let ramp = |j: usize| two - two * radius(j) / rt;
            let inner = |v: &[T]| f.integrate_rings(v, 0, kh) + f.inner_tail(v);
            let d = inner(&dir) + f.integrate_rings(&weighted(&dir, &ramp), kh, k);
            let sigma = inner(&hgt) + f.integrate_rings(&weighted(&hgt, &ramp), kh, k);
            // -phi' = 2 on the annulus
            let ann = |src: &[T], scale: T| f.integrate_rings(&weighted(src, &|j| two * radius(j)), kh, k) * scale;
            let h = ann(&agg.height, T::one());
            let e = ann(&agg.flux, T::one() / rt);
            let g = ann(&agg.radial, T::one() / (rt * rt));
            let d_r = ann(&agg.dirichlet, T::one() / (rt * rt));
            Ok(Integrals { d, h, e, g, sigma, d_r })
        }
    }
}

fn is_degenerate<T: Real>(h: T, sigma: T) -> bool {
    !(h.is_finite() && h > T::zero() && h >= T::lit(1e-14) * sigma)
}

/// Energy below round-off relative to the height counts as zero.
fn has_energy<T: Real>(q: &Integrals<T>, r: T) -> bool {
    q.d > T::zero() && q.d > T::lit(1e-12) * q.h / r
}

fn recentered<T: Real>(f: &QFunction<T>, x: [f64; 2], r_max: f64) -> Result<Option<QFunction<T>>> {
    if x == f.grid().center {
        Ok(None)
    } else {
        dilate(f, x, 1.0, Some(r_max)).map(Some)
    }
}

/// `int_{B_r} sum_i |Df_i|^2` around the grid center.
pub fn dirichlet_energy<T: Real>(f: &QFunction<T>, r: f64) -> Result<T> {
    Ok(integrals(f, r, Cutoff::Sharp)?.d)
}

/// Dirichlet energy on the sampled annulus `r_min <= |x| <= r`, without the
/// modelled inner disk. Linear in the energy density.
pub fn annulus_energy<T: Real>(f: &QFunction<T>, r: f64) -> Result<T> {
    let k = f.grid().ring_of(r)?;
    Ok(f.integrate_rings(&f.aggregates().dirichlet, 0, k))
}

fn values_at<T: Real>(f: &QFunction<T>, r: f64, cutoff: Cutoff) -> Result<Option<FrequencyValues<T>>> {
    let q = integrals(f, r, cutoff)?;
    if is_degenerate(q.h, q.sigma) {
        return Ok(None);
    }
    let rt = T::lit(r);
    let residual = |x: T| has_energy(&q, rt).then(|| x.abs() / q.d);
    Ok(Some(FrequencyValues {
        d: q.d,
        h: q.h,
        i: rt * q.d / q.h,
        e: q.e,
        g: q.g,
        sigma: q.sigma,
        d_r: q.d_r,
        residual_outer: residual(q.d - q.e),
        residual_inner: residual(rt * (q.d_r - T::lit(2.0) * q.g)),
    }))
}

fn with_center<T: Real, R>(f: &QFunction<T>, x: [f64; 2], r: f64, run: impl FnOnce(&QFunction<T>) -> Result<R>) -> Result<R> {
    match recentered(f, x, r)? {
        Some(g) => run(&g),
        None => run(f),
    }
}

pub fn smoothed_d<T: Real>(f: &QFunction<T>, x: [f64; 2], r: f64, cutoff: Cutoff) -> Result<T> {
    with_center(f, x, r, |g| Ok(integrals(g, r, cutoff)?.d))
}

pub fn smoothed_h<T: Real>(f: &QFunction<T>, x: [f64; 2], r: f64, cutoff: Cutoff) -> Result<T> {
    with_center(f, x, r, |g| Ok(integrals(g, r, cutoff)?.h))
}

/// `I(x, r) = r D / H`; errors when the height is degenerate.
pub fn smoothed_i<T: Real>(f: &QFunction<T>, x: [f64; 2], r: f64, cutoff: Cutoff) -> Result<T> {
    with_center(f, x, r, |g| values_at(g, r, cutoff)?.map(|v| v.i).ok_or_else(|| Error::DegenerateHeight(format!("H vanishes at r = {r:e}"))))
}

/// `E`, `G` and `Sigma` at radius `r`.
pub fn auxiliary_quantities<T: Real>(f: &QFunction<T>, x: [f64; 2], r: f64, cutoff: Cutoff) -> Result<(T, T, T)> {
    with_center(f, x, r, |g| {
        let q = integrals(g, r, cutoff)?;
        Ok((q.e, q.g, q.sigma))
    })
}

/// Relative residuals of the outer (`D = E`) and inner
/// (`dD/dr = (m-2)/r D + 2G`, `m = 2`) variation identities.
pub fn variation_residuals<T: Real>(f: &QFunction<T>, x: [f64; 2], r: f64, cutoff: Cutoff) -> Result<(Option<T>, Option<T>)> {
    with_center(f, x, r, |g| {
        let q = integrals(g, r, cutoff)?;
        let residual = |v: T| has_energy(&q, T::lit(r)).then(|| v.abs() / q.d);
        Ok((residual(q.d - q.e), residual(T::lit(r) * (q.d_r - T::lit(2.0) * q.g))))
    })
}

/// Evaluates every quantity at each radius of an increasing list.
pub fn frequency_profile<T: Real>(f: &QFunction<T>, x: [f64; 2], radii: &[f64], cutoff: Cutoff) -> Result<FrequencyProfile<T>> {
    if radii.is_empty() {
        return Err(Error::Argument("empty radius list".into()));
    }
    if radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument("radii must be strictly increasing".into()));
    }
    let r_top = *radii.last().unwrap();
    with_center(f, x, r_top, |g| {
        g.aggregates();
        let records = radii.par_iter().map(|&r| Ok(FrequencyRecord { r, values: values_at(g, r, cutoff)? })).collect::<Result<Vec<_>>>()?;
        let notes = if x == f.grid().center { String::new() } else { "off-center: bilinear resampling".to_string() };
        Ok(FrequencyProfile { center: x, cutoff, records, notes })
    })
}

/// Extrapolated `lim_{r -> 0} I(r)` from the smallest octave of valid radii.
///
/// Fits `I(r) = I_0 + c r^beta` through the ends and midpoint of that octave
/// when the increments decay geometrically, and otherwise reports the value
/// at the smallest radius. `spread` is the range of `I` over the octave.
pub fn frequency_limit<T: Real>(profile: &FrequencyProfile<T>) -> Result<FrequencyLimit> {
    let valid: Vec<(f64, f64)> = profile.records.iter().filter_map(|rec| rec.values.map(|v| (rec.r, v.i.as_f64()))).collect();
    if valid.len() < 4 {
        return Err(Error::Data(format!("{} valid radii, need at least 4", valid.len())));
    }
    let r0 = valid[0].0;
    if valid.last().unwrap().0 < 2.0 * r0 * (1.0 - 1e-9) {
        return Err(Error::Data("valid radii span less than one octave".into()));
    }
    let octave: Vec<f64> = valid.iter().filter(|(r, _)| *r <= 2.0 * r0 * (1.0 + 1e-9)).map(|&(_, i)| i).collect();
    let (lo, hi) = octave.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(i), hi.max(i)));
    let spread = hi - lo;
    let c = octave[0];
    let b = octave[octave.len() / 2];
    let a = *octave.last().unwrap();
    let (d1, d2) = (b - a, c - b);
    let ratio = d2 / d1;
    let estimate = if d1 != 0.0 && ratio > 0.0 && ratio < 0.95 && d2.abs() > 1e-12 * c.abs() { c + d2 * ratio / (1.0 - ratio) } else { c };
    Ok(FrequencyLimit { estimate, spread })
}

/// Writes the profile as CSV with 17 significant digits.
pub fn write_profile_csv<T: Real>(profile: &FrequencyProfile<T>, mut out: impl Write) -> Result<()> {
    writeln!(out, "r,D,H,I,E,G,Sigma,res_outer,res_inner,valid")?;
    for rec in &profile.records {
        let cells: Vec<String> = match rec.values {
            Some(v) => {
                let opt = |x: Option<T>| fmt_sig17(x.map_or(f64::NAN, |y| y.as_f64()));
                vec![
                    fmt_sig17(v.d.as_f64()),
                    fmt_sig17(v.h.as_f64()),
                    fmt_sig17(v.i.as_f64()),
                    fmt_sig17(v.e.as_f64()),
                    fmt_sig17(v.g.as_f64()),
                    fmt_sig17(v.sigma.as_f64()),
                    opt(v.residual_outer),
                    opt(v.residual_inner),
                    "1".into(),
                ]
            }
            None => {
                let mut c = vec!["nan".to_string(); 8];
                c.push("0".into());
                c
            }
        };
        writeln!(out, "{},{}", fmt_sig17(rec.r), cells.join(","))?;
    }
    Ok(())
}
