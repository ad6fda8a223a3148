//! Intervals of flattening, the stitched universal frequency and its
//! negative variation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blowup::average_free_part;
use crate::error::{Error, Result};
use crate::excess::{optimal_plane, ExcessDefinition};
use crate::frequency::{frequency_profile, Cutoff};
use crate::qfunction::QFunction;
use crate::scalar::{fmt_sig17, Real};

/// When an open interval is closed before the excess crosses the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum StoppingRule {
    /// Close when the refitted plane drifts by more than
    /// `tilt_jump * sqrt(m0)` from the plane at the interval top.
    TiltDrift { tilt_jump: f64 },
    /// Close when `E(r) > c_e * m0 * (r/t)^{2 - 2 delta2}`: the excess stops
    /// decaying at the rate an interval of flattening guarantees.
    ExcessDecay { c_e: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub eps3_sq: f64,
    pub eps_bar: f64,
    pub delta2: f64,
    pub stopping: StoppingRule,
    pub cutoff: Cutoff,
    /// Exponent in the budget `sum_j m0_j^gamma4`.
    pub gamma4: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            eps3_sq: 1e-2,
            eps_bar: 1e-2,
            delta2: 1.0 / 32.0,
            stopping: StoppingRule::TiltDrift { tilt_jump: 0.1 },
            cutoff: Cutoff::Linear,
            gamma4: 0.25,
        }
    }
}

impl ScaleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("eps3_sq", self.eps3_sq), ("eps_bar", self.eps_bar), ("delta2", self.delta2), ("gamma4", self.gamma4)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} = {v} must be positive")));
            }
        }
        if self.delta2 >= 1.0 {
            return Err(Error::Argument("delta2 must be below 1".into()));
        }
        match self.stopping {
            StoppingRule::TiltDrift { tilt_jump } if !(tilt_jump > 0.0) => Err(Error::Argument("tilt_jump must be positive".into())),
            StoppingRule::ExcessDecay { c_e } if !(c_e > 1.0) => Err(Error::Argument("c_e must exceed 1".into())),
            _ => Ok(()),
        }
    }

    fn decay_exponent(&self) -> f64 {
        2.0 - 2.0 * self.delta2
    }

    /// `max(E, eps_bar^2 t^{2 - 2 delta2})`.
    pub fn m0(&self, excess: f64, t: f64) -> f64 {
        excess.max(self.eps_bar * self.eps_bar * t.powf(self.decay_exponent()))
    }
}

/// The interval `(s, t]`; `s = 0` means it reaches the grid floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub s: f64,
    pub t: f64,
    pub m0: f64,
    /// Plane tilt fitted at `t`.
    pub tilt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleIntervals {
    /// Decreasing in scale.
    pub intervals: Vec<Interval>,
    /// Dyadic radii where the excess exceeds the threshold.
    pub excluded: Vec<f64>,
    /// The scanned dyadic radii, decreasing.
    pub radii: Vec<f64>,
    pub eps3_sq: f64,
    pub eps_bar: f64,
    pub delta2: f64,
    /// No radius fell below the threshold.
    pub empty: bool,
}

impl ScaleIntervals {
    /// `inf_j s_j / t_j` over the intervals closed above the grid floor;
    /// zero when no interval closes, i.e. the first one reaches the floor.
    pub fn min_ratio(&self) -> f64 {
        let closed = self.intervals.iter().filter(|iv| iv.s > 0.0).map(|iv| iv.s / iv.t);
        let m = closed.fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            m
        } else {
            0.0
        }
    }
}

fn tilt_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Segments a decreasing list of dyadic radii from the excess and fitted
/// tilt at each radius.
pub fn segment_scales(radii: &[f64], excesses: &[f64], tilts: &[Vec<f64>], cfg: &ScaleConfig) -> Result<ScaleIntervals> {
    cfg.validate()?;
    if radii.len() != excesses.len() || radii.len() != tilts.len() {
        return Err(Error::Dimension("radii, excesses and tilts differ in length".into()));
    }
    if radii.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Argument("radii must be strictly decreasing".into()));
    }
    let mut intervals: Vec<Interval> = Vec::new();
    let mut excluded = Vec::new();
    let mut open: Option<Interval> = None;
    for (j, &r) in radii.iter().enumerate() {
        let e = excesses[j];
        let m0 = cfg.m0(e, r);
        if e > cfg.eps3_sq || m0 > cfg.eps3_sq {
            if let Some(mut iv) = open.take() {
                iv.s = r;
                intervals.push(iv);
            }
            excluded.push(r);
            continue;
        }
        let fresh = Interval { s: 0.0, t: r, m0, tilt: tilts[j].clone() };
        open = Some(match open.take() {
            None => fresh,
            Some(mut iv) => {
                let stop = match cfg.stopping {
                    StoppingRule::TiltDrift { tilt_jump } => tilt_distance(&tilts[j], &iv.tilt) > tilt_jump * iv.m0.sqrt(),
                    StoppingRule::ExcessDecay { c_e } => e > c_e * iv.m0 * (r / iv.t).powf(cfg.decay_exponent()),
                };
                if stop {
                    iv.s = r;
                    intervals.push(iv);
                    fresh
                } else {
                    iv
                }
            }
        });
    }
    if let Some(iv) = open {
        intervals.push(iv);
    }
    Ok(ScaleIntervals {
        empty: intervals.is_empty(),
        intervals,
        excluded,
        radii: radii.to_vec(),
        eps3_sq: cfg.eps3_sq,
        eps_bar: cfg.eps_bar,
        delta2: cfg.delta2,
    })
}

/// Dyadic radii `r_max 2^{-j}` down to twice the grid floor.
pub fn dyadic_radii<T: Real>(f: &QFunction<T>) -> Vec<f64> {
    let g = f.grid();
    (0..g.octaves).map(|j| g.r_max() * 0.5f64.powi(j as i32)).collect()
}

/// Optimal-plane excess at each dyadic radius, then [`segment_scales`].
pub fn intervals_of_flattening<T: Real>(f: &QFunction<T>, cfg: &ScaleConfig) -> Result<ScaleIntervals> {
    cfg.validate()?;
    let radii = dyadic_radii(f);
    let records = radii.par_iter().map(|&r| optimal_plane(f, r, ExcessDefinition::Cylindrical)).collect::<Result<Vec<_>>>()?;
    let excesses: Vec<f64> = records.iter().map(|rec| rec.excess).collect();
    let tilts: Vec<Vec<f64>> = records.into_iter().map(|rec| rec.plane.tilt).collect();
    segment_scales(&radii, &excesses, &tilts, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalRecord {
    pub r: f64,
    pub j: usize,
    pub i: f64,
    pub tilt: Vec<f64>,
    /// Set at the top `t_j` of every interval after the first.
    pub jump: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    pub t: f64,
    /// Frequency of interval `j` at its top `t_j`.
    pub i_left: f64,
    /// Frequency of interval `j - 1` continued down to `t_j`.
    pub i_right: f64,
    pub m0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalProfile {
    /// Increasing in `r`.
    pub records: Vec<UniversalRecord>,
    pub jumps: Vec<Jump>,
    pub m0: Vec<f64>,
}

/// Per interval: subtract the plane fitted at `t_j`, take the average-free
/// part and evaluate the smoothed frequency at every grid radius of
/// `(s_j, t_j]`. The frequency is invariant under the rescaling by `t_j`,
/// so the maps are not rescaled.
pub fn universal_frequency<T: Real>(f: &QFunction<T>, intervals: &ScaleIntervals, cutoff: Cutoff) -> Result<UniversalProfile> {
    if intervals.intervals.is_empty() {
        return Err(Error::Data("no intervals of flattening".into()));
    }
    let grid = *f.grid();
    let floor = match cutoff {
        Cutoff::Linear => 2.0 * grid.r_min,
        Cutoff::Sharp => grid.r_min,
    };
    let per_interval = intervals
        .intervals
        .par_iter()
        .enumerate()
        .map(|(j, iv)| -> Result<(Vec<UniversalRecord>, Option<f64>)> {
            let n = f.n();
            let tilt = iv.tilt.clone();
            let flat = f.map_samples(f.q(), n, f.monodromy().to_vec(), f.provenance().clone(), |v| v.to_vec())?;
            let reparam = subtract_plane(&flat, &tilt)?;
            let free = average_free_part(&reparam);
            let radii: Vec<f64> =
                grid.radii().into_iter().filter(|&r| r > iv.s * (1.0 + 1e-12) && r <= iv.t * (1.0 + 1e-12) && r >= floor * (1.0 - 1e-12)).collect();
            let mut radii_ext = radii.clone();
            // the continuation down to the next interval's top
            let next_top = intervals.intervals.get(j + 1).map(|nx| nx.t).filter(|&t| t >= floor * (1.0 - 1e-12));
            if let Some(t) = next_top {
                if radii_ext.first().is_none_or(|&r0| t < r0) {
                    radii_ext.insert(0, t);
                }
            }
            if radii_ext.is_empty() {
                return Ok((Vec::new(), None));
            }
            let profile = frequency_profile(&free, grid.center, &radii_ext, cutoff)?;
            let mut recs = Vec::new();
            let mut continued = None;
            for rec in &profile.records {
                let v = rec.values.ok_or_else(|| Error::DegenerateHeight(format!("H vanishes at r = {:e}", rec.r)))?;
                let i = v.i.as_f64();
                if next_top.is_some_and(|t| t == rec.r) && !radii.contains(&rec.r) {
                    continued = Some(i);
                    continue;
                }
                recs.push(UniversalRecord { r: rec.r, j, i, tilt: tilt.clone(), jump: j > 0 && rec.r == iv.t });
            }
            Ok((recs, continued))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut jumps = Vec::new();
    for j in 1..intervals.intervals.len() {
        let iv = &intervals.intervals[j];
        let left = per_interval[j].0.iter().find(|rec| rec.r == iv.t).map(|rec| rec.i);
        if let (Some(i_left), Some(i_right)) = (left, per_interval[j - 1].1) {
            jumps.push(Jump { t: iv.t, i_left, i_right, m0: iv.m0 });
        }
    }
    let mut records: Vec<UniversalRecord> = per_interval.into_iter().flat_map(|(r, _)| r).collect();
    records.sort_by(|a, b| a.r.total_cmp(&b.r));
    Ok(UniversalProfile { records, jumps, m0: intervals.intervals.iter().map(|iv| iv.m0).collect() })
}

/// `f_i(x) - A x` sheetwise.
fn subtract_plane<T: Real>(f: &QFunction<T>, tilt: &[f64]) -> Result<QFunction<T>> {
    if tilt.iter().all(|&a| a == 0.0) {
        return Ok(f.clone());
    }
    let g = *f.grid();
    let (q, n) = (f.q(), f.n());
    let mut values = f.values().to_vec();
    for k in 0..g.n_rings() {
        for a in 0..g.n_theta {
            let (x, y) = (g.radius(k) * g.angle(a).cos(), g.radius(k) * g.angle(a).sin());
            let o = (k * g.n_theta + a) * q * n;
            for i in 0..q {
                for c in 0..n {
                    values[o + i * n + c] -= T::lit(tilt[2 * c] * x + tilt[2 * c + 1] * y);
                }
            }
        }
    }
    QFunction::from_labeled(g, q, n, values, f.monodromy().to_vec(), f.provenance().clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BvSummary {
    pub total: f64,
    pub ac_part: f64,
    pub jump_part: f64,
    /// `total / sum_j m0_j^gamma4`.
    pub budget_constant: f64,
}

/// Negative variation of `log(I + 1)` with increasing `r`, split into the
/// part inside intervals and the part at the recorded jumps.
pub fn bv_negative_variation(profile: &UniversalProfile, gamma4: f64) -> Result<BvSummary> {
    if profile.records.len() < 2 {
        return Err(Error::Data("need at least 2 profile records".into()));
    }
    let neg = |from: f64, to: f64| ((from + 1.0).ln() - (to + 1.0).ln()).max(0.0);
    let mut ac_part = 0.0;
    for w in profile.records.windows(2) {
        if w[0].j == w[1].j {
            ac_part += neg(w[0].i, w[1].i);
        }
    }
    // inside interval j - 1, from its continuation at t_j up to its lowest record
    for jump in &profile.jumps {
        let above = profile.records.iter().find(|rec| rec.r > jump.t);
        if let Some(rec) = above {
            ac_part += neg(jump.i_right, rec.i);
        }
    }
    let jump_part: f64 = profile.jumps.iter().map(|jp| neg(jp.i_left, jp.i_right)).sum();
    let total = ac_part + jump_part;
    let budget: f64 = profile.m0.iter().map(|m| m.powf(gamma4)).sum();
    Ok(BvSummary { total, ac_part, jump_part, budget_constant: if budget > 0.0 { total / budget } else { f64::NAN } })
}

pub fn write_profile_csv(profile: &UniversalProfile, mut out: impl Write) -> Result<()> {
    writeln!(out, "r,j,I,jump_flag")?;
    for rec in &profile.records {
        writeln!(out, "{},{},{},{}", fmt_sig17(rec.r), rec.j, fmt_sig17(rec.i), u8::from(rec.jump))?;
    }
    Ok(())
}

pub fn write_jumps_csv(profile: &UniversalProfile, mut out: impl Write) -> Result<()> {
    writeln!(out, "t_j,I_left,I_right,m0_j")?;
    for j in &profile.jumps {
        writeln!(out, "{},{},{},{}", fmt_sig17(j.t), fmt_sig17(j.i_left), fmt_sig17(j.i_right), fmt_sig17(j.m0))?;
    }
    Ok(())
}

pub fn write_intervals_csv(iv: &ScaleIntervals, mut out: impl Write) -> Result<()> {
    writeln!(out, "j,s_j,t_j,m0_j,tilt_norm")?;
    for (j, i) in iv.intervals.iter().enumerate() {
        let tilt = i.tilt.iter().map(|x| x * x).sum::<f64>().sqrt();
        writeln!(out, "{},{},{},{},{}", j, fmt_sig17(i.s), fmt_sig17(i.t), fmt_sig17(i.m0), fmt_sig17(tilt))?;
    }
    Ok(())
}
