//! Dilations, normalized blow-ups, average-free parts and the singularity
//! degree estimator.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::excess::{optimal_plane, ExcessDefinition};
use crate::frequency::{frequency_limit, frequency_profile, Cutoff};
use crate::qfunction::{Provenance, QFunction};
use crate::qvalue::metric_g;
use crate::resample::dilate;
use crate::scalar::{json_num, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    ExcessSqrt,
    #[default]
    L2Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupConfig {
    pub scale_factor: f64,
    pub max_steps: usize,
    pub normalization: Normalization,
    /// Absolute bound on the spread of the retained per-step limits.
    pub convergence_tol: f64,
    pub cutoff: Cutoff,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        BlowupConfig { scale_factor: 0.5, max_steps: 14, normalization: Normalization::L2Norm, convergence_tol: 0.01, cutoff: Cutoff::Linear }
    }
}

impl BlowupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_factor > 0.0 && self.scale_factor < 1.0) {
            return Err(Error::Argument(format!("scale_factor {} not in (0, 1)", self.scale_factor)));
        }
        if self.max_steps == 0 {
            return Err(Error::Argument("max_steps must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Argument("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepEstimate {
    pub k: usize,
    pub r: f64,
    pub i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeEstimate {
    pub value: f64,
    pub spread: f64,
    pub converged: bool,
    pub per_step: Vec<StepEstimate>,
    /// Frequency limit of the map itself (average included) at the last step.
    pub full_map_value: f64,
    /// Set when the map and its average-free part have different degrees.
    pub discrepancy: bool,
}

/// `f_{x,r}(y) = f(x + r y) / r`.
pub fn rescale<T: Real>(f: &QFunction<T>, x: [f64; 2], r: f64) -> Result<QFunction<T>> {
    dilate(f, x, r, None)
}

/// Largest grid radius not above `3/2`: the reference ball of the
/// normalization.
pub fn reference_radius<T: Real>(f: &QFunction<T>) -> Result<f64> {
    let g = f.grid();
    (0..g.n_rings())
        .rev()
        .map(|k| g.radius(k))
        .find(|&r| r <= 1.5 * (1.0 + 1e-12))
        .filter(|&r| r >= 1.0 - 1e-12)
        .ok_or_else(|| Error::Range("blow-up grid does not reach the unit disk".into()))
}

/// The blow-up at scale `r` divided by the square root of the excess at `r`
/// or by its `L^2` norm on the reference ball.
pub fn coarse_blowup_normalize<T: Real>(f: &QFunction<T>, r: f64, mode: Normalization) -> Result<QFunction<T>> {
    let g = rescale(f, f.grid().center, r)?;
    let normalizer = match mode {
        Normalization::L2Norm => {
            let n = g.l2_norm(reference_radius(&g)?)?.as_f64();
            if !(n > 1e-150) {
                return Err(Error::DegenerateBlowup(format!("L2 norm {n:e} at scale {r:e}")));
            }
            n
        }
        Normalization::ExcessSqrt => {
            let e = optimal_plane(&g, 1.0, ExcessDefinition::Cylindrical)?.excess;
            if !(e > 1e-13) {
                return Err(Error::DegenerateBlowup(format!("excess {e:e} at scale {r:e}")));
            }
            e.sqrt()
        }
    };
    Ok(g.scaled(T::lit(1.0 / normalizer)))
}

/// Sheetwise `f_i - eta(f)`.
pub fn average_free_part<T: Real>(f: &QFunction<T>) -> QFunction<T> {
    let (q, n) = (f.q(), f.n());
    let inv_q = T::one() / T::from_usize_lossy(q);
    f.map_samples(q, n, f.monodromy().to_vec(), f.provenance().clone(), |v| {
        let mut mean = vec![T::zero(); n];
        for sheet in v.chunks(n) {
            for (m, &x) in mean.iter_mut().zip(sheet) {
                *m += x;
            }
        }
        v.chunks(n).flat_map(|sheet| sheet.iter().zip(&mean).map(|(&x, &m)| x - m * inv_q).collect::<Vec<_>>()).collect()
    })
    .expect("shape preserved")
}

/// The average `eta(f)` as a single-valued function.
pub fn average_part<T: Real>(f: &QFunction<T>) -> QFunction<T> {
    let (q, n) = (f.q(), f.n());
    let inv_q = T::one() / T::from_usize_lossy(q);
    f.map_samples(1, n, vec![0], Provenance::Synthetic { note: "sheet average".into() }, |v| {
        let mut mean = vec![T::zero(); n];
        for sheet in v.chunks(n) {
            for (m, &x) in mean.iter_mut().zip(sheet) {
                *m += x;
            }
        }
        mean.into_iter().map(|m| m * inv_q).collect()
    })
    .expect("shape preserved")
}

/// Frequency limit near `r` from the window `[r/4, r]` of `f` itself.
fn window_limit<T: Real>(g: &QFunction<T>, cutoff: Cutoff) -> Result<f64> {
    let grid = g.grid();
    let radii: Vec<f64> = grid.radii().into_iter().filter(|r| (0.25 * (1.0 - 1e-12)..=1.0 + 1e-12).contains(r)).collect();
    let profile = frequency_profile(g, grid.center, &radii, cutoff)?;
    Ok(frequency_limit(&profile)?.estimate)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Degree of the average-free part from normalized blow-ups at the radii
/// `r_k = r_max * scale_factor^k`.
///
/// Each step contributes the extrapolated frequency of the blow-up over
/// `[1/4, 1]`; steps are usable while that window stays above the grid
/// floor. The value is the median of the last half (at least three) of the
/// usable steps and the spread their range.
pub fn singularity_degree<T: Real>(f: &QFunction<T>, cfg: &BlowupConfig) -> Result<DegreeEstimate> {
    cfg.validate()?;
    let grid = f.grid();
    let free = average_free_part(f);
    free.aggregates();
    let steps: Vec<(usize, f64)> = (1..=cfg.max_steps)
        .map(|k| (k, grid.r_max() * cfg.scale_factor.powi(k as i32)))
        .take_while(|&(_, r)| r / 8.0 >= grid.r_min * (1.0 - 1e-9))
        .collect();
    if steps.len() < 3 {
        return Err(Error::Data(format!("{} usable blow-up steps, need at least 3", steps.len())));
    }
    let per_step = steps
        .par_iter()
        .map(|&(k, r)| {
            let b = coarse_blowup_normalize(&free, r, cfg.normalization)?;
            Ok(StepEstimate { k, r, i: window_limit(&b, cfg.cutoff)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let take = per_step.len().div_ceil(2).max(3);
    let mut tail: Vec<f64> = per_step[per_step.len() - take..].iter().map(|s| s.i).collect();
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let spread = hi - lo;
    let value = median(&mut tail);
    let last_r = per_step.last().unwrap().r;
    let full_map_value = match rescale(f, grid.center, last_r) {
        Ok(g) => window_limit(&g, cfg.cutoff).unwrap_or(f64::NAN),
        Err(_) => f64::NAN,
    };
    let discrepancy = !((full_map_value - value).abs() <= cfg.convergence_tol.max(spread));
    Ok(DegreeEstimate { value, spread, converged: spread <= cfg.convergence_tol, per_step, full_map_value, discrepancy })
}

/// `sup G(f(r x), r^alpha f(x)) / (||f||_{L^2} r^alpha)` over grid-aligned
/// ratios `r` within one octave and all sample points `x`.
pub fn homogeneity_check<T: Real>(f: &QFunction<T>, alpha: f64) -> Result<f64> {
    let grid = f.grid();
    let norm = f.l2_norm(grid.r_max())?.as_f64();
    if !(norm > 0.0) {
        return Err(Error::DegenerateHeight("zero map".into()));
    }
    let rpo = grid.rings_per_octave;
    let worst = (1..grid.n_rings())
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut worst = 0.0f64;
            for m in 1..=rpo.min(k) {
                let ratio = grid.radius(k - m) / grid.radius(k);
                let scale = T::lit(ratio.powf(alpha));
                for a in 0..grid.n_theta {
                    let inner = f.sample(k - m, a);
                    let outer = f.sample(k, a).scaled(scale);
                    let d = metric_g(&inner, &outer)?.as_f64() / (norm * ratio.powf(alpha));
                    worst = worst.max(d);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardtSimon {
    pub integral: f64,
    /// Relative deviation from the closed form for homogeneous maps.
    pub polar_identity_residual: Option<f64>,
    /// `e` in `integral(rho) ~ rho^e`, from the increments over
    /// `[rho, 2 rho]` and `[2 rho, 4 rho]`; `None` when both vanish.
    pub growth_exponent: Option<f64>,
    pub diverges: bool,
}

/// `int_{B_{1/2} \ B_rho} sum_i |d/dr (f_i / |x|)|^2`, in polar form
/// `int int sum_i |d_s f_i - f_i|^2 / r^2 ds dtheta`.
///
/// `alpha` (or the homogeneity recorded in the provenance) enables the
/// comparison with `(alpha-1)^2 int |g|^2 int_rho^{1/2} s^{2 alpha - 3} ds`.
pub fn hardt_simon_check<T: Real>(f: &QFunction<T>, rho_inner: f64, alpha: Option<f64>) -> Result<HardtSimon> {
    let grid = f.grid();
    if rho_inner < 2.0 * grid.r_min * (1.0 - 1e-12) {
        return Err(Error::Range(format!("rho_inner {rho_inner:e} below twice the grid floor")));
    }
    let k_in = grid.ring_of(rho_inner)?;
    let k_out = grid.ring_of(0.5)?;
    if k_in >= k_out {
        return Err(Error::Range("rho_inner must lie below 1/2".into()));
    }
    let profile: Vec<T> = f.ring_integrals(|v| v.values.iter().zip(v.ds).fold(T::zero(), |s, (&x, &d)| s + (d - x) * (d - x)) / T::lit(v.r * v.r));
    let integral_from = |k: usize| f.integrate_rings(&profile, k, k_out).as_f64();
    let integral = integral_from(k_in);
    let alpha = alpha.or(match f.provenance() {
        Provenance::Homogeneous { alpha } => Some(*alpha),
        _ => None,
    });
    let polar_identity_residual = alpha.map(|a| {
        let height = f.aggregates().height[k_out].as_f64() / 0.5f64.powf(2.0 * a);
        let e = 2.0 * a - 2.0;
        let radial = if e.abs() < 1e-14 { (0.5 / rho_inner).ln() } else { (0.5f64.powf(e) - rho_inner.powf(e)) / e };
        let closed = (a - 1.0).powi(2) * height * radial;
        if closed > 0.0 {
            (integral - closed).abs() / closed
        } else {
            integral.abs()
        }
    });
    let rpo = grid.rings_per_octave;
    let (growth_exponent, diverges) = if k_in + 2 * rpo <= k_out {
        let d1 = integral - integral_from(k_in + rpo);
        let d2 = integral_from(k_in + rpo) - integral_from(k_in + 2 * rpo);
        if d1 > 0.0 && d2 > 0.0 {
            let e = -(d1 / d2).log2();
            (Some(e), e < -1e-3)
        } else {
            (None, false)
        }
    } else {
        (None, false)
    };
    Ok(HardtSimon { integral, polar_identity_residual, growth_exponent, diverges })
}

#[derive(Serialize)]
struct StepJson {
    k: usize,
    r: Box<RawValue>,
    #[serde(rename = "I")]
    i: Box<RawValue>,
}

#[derive(Serialize)]
struct DegreeJson {
    value: Box<RawValue>,
    spread: Box<RawValue>,
    converged: bool,
    per_step: Vec<StepJson>,
    full_map_value: Box<RawValue>,
    discrepancy: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_degree: Option<Box<RawValue>>,
}

/// JSON `{value, spread, converged, per_step: [{k, r, I}], ...}`.
pub fn write_degree_json(est: &DegreeEstimate, reference: Option<f64>, mut out: impl Write) -> Result<()> {
    let doc = DegreeJson {
        value: json_num(est.value),
        spread: json_num(est.spread),
        converged: est.converged,
        per_step: est.per_step.iter().map(|s| StepJson { k: s.k, r: json_num(s.r), i: json_num(s.i) }).collect(),
        full_map_value: json_num(est.full_map_value),
        discrepancy: est.discrepancy,
        reference_degree: reference.map(json_num),
    };
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{homogeneous_map, make_multigraph, root_boundary, CurveSpec};
    use crate::grid::PolarGrid;
    use crate::qvalue::{eta, QPoint};

    fn curve(q: usize, p: usize) -> QFunction<f64> {
        make_multigraph(&CurveSpec::plain(q, p).unwrap(), PolarGrid::default()).unwrap()
    }

    #[test]
    fn rescale_examples() {
        let f = curve(2, 3);
        let id = rescale(&f, [0.0, 0.0], 1.0).unwrap();
        assert_eq!(id.values(), f.values());
        let g = rescale(&f, [0.0, 0.0], 0.25).unwrap();
        // same ring index means radius scaled by 4: f(r x)/r = r^{1/2} f(x)
        let k = f.grid().ring_of(0.25).unwrap();
        let k_unit = g.grid().ring_of(1.0).unwrap();
        assert_eq!(k, k_unit);
        for a in [0, 17, 300] {
            let want = f.sample(f.grid().ring_of(1.0).unwrap(), a).scaled(0.5);
            let d = metric_g(&g.sample(k_unit, a), &want).unwrap();
            assert!(d < 1e-12);
        }
        // group law
        let twice = rescale(&rescale(&f, [0.0, 0.0], 0.5).unwrap(), [0.0, 0.0], 0.5).unwrap();
        let once = rescale(&f, [0.0, 0.0], 0.25).unwrap();
        assert!((twice.grid().r_min - once.grid().r_min).abs() < 1e-18);
        let diff = twice.values().iter().zip(once.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn normalization_modes() {
        let f = curve(2, 3);
        let b = coarse_blowup_normalize(&f, 0.25, Normalization::L2Norm).unwrap();
        assert!((b.l2_norm(reference_radius(&b).unwrap()).unwrap() - 1.0).abs() < 1e-10);
        let b2 = coarse_blowup_normalize(&f, 0.125, Normalization::L2Norm).unwrap();
        // self-similar: normalized blow-ups coincide
        let k = b.grid().ring_of(1.0).unwrap();
        let k2 = b2.grid().ring_of(1.0).unwrap();
        for a in [0, 99] {
            assert!(metric_g(&b.sample(k, a), &b2.sample(k2, a)).unwrap() < 1e-9);
        }
        let e = coarse_blowup_normalize(&f, 0.25, Normalization::ExcessSqrt).unwrap();
        assert!(e.l2_norm(1.0).unwrap() > 0.0);
        let zero = f.scaled(0.0);
        for mode in [Normalization::L2Norm, Normalization::ExcessSqrt] {
            assert!(matches!(coarse_blowup_normalize(&zero, 0.25, mode), Err(Error::DegenerateBlowup(_))));
        }
    }

    #[test]
    fn average_split() {
        let g = PolarGrid::new(1.0, 8, 6, 128).unwrap();
        let spec = CurveSpec::with_perturbation(2, 5, "z^2").unwrap();
        let f: QFunction<f64> = make_multigraph(&spec, g).unwrap();
        let free = average_free_part(&f);
        let avg = average_part(&f);
        for (k, a) in [(3usize, 5usize), (40, 100)] {
            assert!(eta(&free.sample(k, a)).iter().all(|x| x.abs() < 1e-12));
            let z = num_complex::Complex::from_polar(g.radius(k), g.angle(a)) * num_complex::Complex::from_polar(g.radius(k), g.angle(a));
            let m = avg.sample(k, a);
            assert!((m.as_flat()[0] - z.re).abs() < 1e-12 && (m.as_flat()[1] - z.im).abs() < 1e-12);
        }
        let plain = curve(2, 3);
        let d = plain.values().iter().zip(average_free_part(&plain).values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-15);
        let copies = QFunction::<f64>::from_qpoints(g, Provenance::Synthetic { note: "copies".into() }, &Default::default(), |r, t| {
            QPoint::repeated(3, &[r * t.cos(), r * r])
        })
        .unwrap();
        assert!(average_free_part(&copies).values().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn degree_of_homogeneous_and_curve() {
        let g = PolarGrid::default();
        let h: QFunction<f64> = homogeneous_map(5.0 / 3.0, root_boundary(5, 3), g).unwrap();
        let est = singularity_degree(&h, &BlowupConfig::default()).unwrap();
        assert!((est.value - 5.0 / 3.0).abs() < 1e-4 && est.spread < 1e-4, "{est:?}");
        let f = curve(2, 3);
        let est = singularity_degree(&f, &BlowupConfig::default()).unwrap();
        assert!((est.value - 1.5).abs() < 0.02 && est.converged && !est.discrepancy, "{est:?}");
        assert_eq!(est.per_step.len(), 13);
        let mut buf = Vec::new();
        write_degree_json(&est, None, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["per_step"].as_array().unwrap().len(), 13);
    }

    #[test]
    fn homogeneity_power() {
        let g = PolarGrid::new(1.0, 8, 8, 128).unwrap();
        let h: QFunction<f64> = homogeneous_map(1.5, root_boundary(3, 2), g).unwrap();
        assert!(homogeneity_check(&h, 1.5).unwrap() < 1e-12);
        assert!(homogeneity_check(&h, 1.4).unwrap() > 0.01);
        let f: QFunction<f64> = make_multigraph(&CurveSpec::plain(2, 3).unwrap(), g).unwrap();
        assert!(homogeneity_check(&f, 1.5).unwrap() < 1e-3);
    }

    #[test]
    fn hardt_simon_examples() {
        let g = PolarGrid::default();
        let lin: QFunction<f64> = homogeneous_map(1.0, root_boundary(1, 1), g).unwrap();
        let hs = hardt_simon_check(&lin, 2f64.powi(-12), None).unwrap();
        assert!(hs.integral.abs() < 1e-10 && !hs.diverges);
        for (p, q) in [(3usize, 2usize), (5, 3)] {
            let h: QFunction<f64> = homogeneous_map(p as f64 / q as f64, root_boundary(p, q), g).unwrap();
            let hs = hardt_simon_check(&h, 2f64.powi(-12), None).unwrap();
            assert!(hs.polar_identity_residual.unwrap() < 0.01 && !hs.diverges, "{hs:?}");
        }
        let c = curve(2, 3);
        let hs = hardt_simon_check(&c, 2f64.powi(-14), Some(1.5)).unwrap();
        assert!(hs.polar_identity_residual.unwrap() < 0.01);
        let w: QFunction<f64> =
            homogeneous_map(0.8, |t| QPoint::from_sheets(&[vec![t.cos(), t.sin()], vec![-t.cos(), -t.sin()]]).unwrap(), g).unwrap();
        let hs = hardt_simon_check(&w, 2f64.powi(-12), None).unwrap();
        assert!(hs.diverges && (hs.growth_exponent.unwrap() + 0.4).abs() < 1e-3, "{hs:?}");
        assert!(hardt_simon_check(&w, 2f64.powi(-17), None).is_err());
    }
}
