//! Q-valued maps sampled on a polar grid with a monodromy-consistent
//! sheet labeling.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_uniform, integrate_uniform_exp, power_tail, PolarGrid, Stencil};
use crate::qvalue::{track_selection, QPoint, TrackOptions};
use crate::scalar::Real;

/// Where a sampled map came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Curve { q: usize, p: usize, h: Vec<[f64; 2]> },
    Homogeneous { alpha: f64 },
    Synthetic { note: String },
}

/// Sheetwise derivatives in `s = ln r` and `theta`.
#[derive(Debug, Clone)]
pub(crate) struct Derivatives<T> {
    pub ds: Vec<T>,
    pub dtheta: Vec<T>,
}

/// Per-ring angular integrals (trapezoid in theta, summed over sheets).
#[derive(Debug, Clone)]
pub struct RingAggregates<T> {
    /// `int sum_i |d_s f_i|^2 + |d_theta f_i|^2 dtheta`, i.e. `r^2 |Df|^2`.
    pub dirichlet: Vec<T>,
    /// `int sum_i |d_s f_i|^2 dtheta`.
    pub radial: Vec<T>,
    /// `int sum_i |f_i|^2 dtheta`.
    pub height: Vec<T>,
    /// `int sum_i f_i . d_s f_i dtheta`.
    pub flux: Vec<T>,
}

/// Read-only view of one grid sample passed to ring integrands.
pub struct SampleView<'a, T> {
    pub r: f64,
    pub theta: f64,
    /// Sheet values, label-major.
    pub values: &'a [T],
    pub ds: &'a [T],
    pub dtheta: &'a [T],
    pub q: usize,
    pub n: usize,
}

impl<'a, T: Real> SampleView<'a, T> {
    /// Cartesian partial derivatives `(d_x f_i, d_y f_i)` of sheet `i`.
    pub fn cartesian(&self, i: usize) -> (Vec<T>, Vec<T>) {
        let (c, s) = (T::lit(self.theta.cos()), T::lit(self.theta.sin()));
        let r = T::lit(self.r);
        let sl = i * self.n..(i + 1) * self.n;
        let dx = self.ds[sl.clone()].iter().zip(&self.dtheta[sl.clone()]).map(|(&a, &b)| (c * a - s * b) / r).collect();
        let dy = self.ds[sl.clone()].iter().zip(&self.dtheta[sl]).map(|(&a, &b)| (s * a + c * b) / r).collect();
        (dx, dy)
    }

    pub fn sheet(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// A Q-valued map `f : B_{r_max} -> A_Q(R^n)` sampled on a [`PolarGrid`].
///
/// Sample `(ring, angle)` stores its Q sheets in label order. Labels are
/// continuous along rings and across rings at equal angle; walking once
/// around a ring maps label `i` to label `monodromy[i]`.
#[derive(Debug)]
pub struct QFunction<T> {
    grid: PolarGrid,
    q: usize,
    n: usize,
    values: Vec<T>,
    monodromy: Vec<usize>,
    provenance: Provenance,
    derivs: OnceLock<Derivatives<T>>,
    aggregates: OnceLock<RingAggregates<T>>,
}

impl<T: Real> Clone for QFunction<T> {
    fn clone(&self) -> Self {
        Self::from_parts(self.grid, self.q, self.n, self.values.clone(), self.monodromy.clone(), self.provenance.clone())
    }
}

fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&j| j < perm.len() && !std::mem::replace(&mut seen[j], true))
}

impl<T: Real> QFunction<T> {
    fn from_parts(grid: PolarGrid, q: usize, n: usize, values: Vec<T>, monodromy: Vec<usize>, provenance: Provenance) -> Self {
        Self { grid, q, n, values, monodromy, provenance, derivs: OnceLock::new(), aggregates: OnceLock::new() }
    }

    /// Wraps already-labeled samples.
    pub fn from_labeled(grid: PolarGrid, q: usize, n: usize, values: Vec<T>, monodromy: Vec<usize>, provenance: Provenance) -> Result<Self> {
        grid.validate()?;
        if q == 0 || n == 0 {
            return Err(Error::Dimension("q and n must be positive".into()));
        }
        let expected = grid.n_rings() * grid.n_theta * q * n;
        if values.len() != expected {
            return Err(Error::Dimension(format!("expected {expected} sample values, got {}", values.len())));
        }
        if monodromy.len() != q || !is_permutation(&monodromy) {
            return Err(Error::Dimension("monodromy is not a permutation of the sheets".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite sample".into()));
        }
        Ok(Self::from_parts(grid, q, n, values, monodromy, provenance))
    }

    /// Samples `eval(r, theta)` at every node and builds a continuous labeling
    /// by tracking sheets around each ring and aligning neighbouring rings.
    pub fn from_qpoints<F>(grid: PolarGrid, provenance: Provenance, opts: &TrackOptions, eval: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<QPoint<T>> + Sync,
    {
        grid.validate()?;
        let rings: Vec<(Vec<QPoint<T>>, Vec<usize>)> = (0..grid.n_rings())
            .into_par_iter()
            .map(|k| {
                let r = grid.radius(k);
                let pts = (0..grid.n_theta).map(|a| eval(r, grid.angle(a))).collect::<Result<Vec<_>>>()?;
                let sel = track_selection(&pts, true, opts).map_err(|e| Error::Refinement { ring: k, reason: e.to_string() })?;
                Ok((sel.samples, sel.monodromy.unwrap()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(grid, provenance, opts, rings)
    }

    /// Builds from a labeled boundary loop scaled ring by ring with `scale(r)`.
    pub(crate) fn from_ring_profile(
        grid: PolarGrid,
        provenance: Provenance,
        boundary: &[QPoint<T>],
        monodromy: Vec<usize>,
        scale: impl Fn(f64) -> T + Sync,
    ) -> Result<Self> {
        let q = boundary[0].q();
        let n = boundary[0].n();
        let mut values = Vec::with_capacity(grid.n_rings() * grid.n_theta * q * n);
        for k in 0..grid.n_rings() {
            let s = scale(grid.radius(k));
            for p in boundary {
                values.extend(p.as_flat().iter().map(|&x| x * s));
            }
        }
        Self::from_labeled(grid, q, n, values, monodromy, provenance)
    }

    fn assemble(grid: PolarGrid, provenance: Provenance, opts: &TrackOptions, mut rings: Vec<(Vec<QPoint<T>>, Vec<usize>)>) -> Result<Self> {
        let q = rings[0].0[0].q();
        let n = rings[0].0[0].n();
        let reference_mono = rings[0].1.clone();
        for k in 1..rings.len() {
            let perm = crate::qvalue::match_radial(&rings[k - 1].0[0], &rings[k].0[0], opts, k)
                .map_err(|e| Error::Refinement { ring: k, reason: e.to_string() })?;
            let (pts, mono) = &mut rings[k];
            for p in pts.iter_mut() {
                *p = p.permuted(&perm);
            }
            // relabel: new label i is old label perm[i]
            let inv = inverse(&perm);
            *mono = (0..q).map(|i| inv[mono[perm[i]]]).collect();
            if *mono != reference_mono {
                return Err(Error::Refinement { ring: k, reason: "monodromy differs between rings".into() });
            }
        }
        let monodromy = rings[0].1.clone();
        let mut values = Vec::with_capacity(grid.n_rings() * grid.n_theta * q * n);
        for (pts, _) in &rings {
            for p in pts {
                values.extend_from_slice(p.as_flat());
            }
        }
        Self::from_labeled(grid, q, n, values, monodromy, provenance)
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn monodromy(&self) -> &[usize] {
        &self.monodromy
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn offset(&self, ring: usize, angle: usize) -> usize {
        (ring * self.grid.n_theta + angle) * self.q * self.n
    }

    /// Labeled sheets at a node.
    pub fn sample(&self, ring: usize, angle: usize) -> QPoint<T> {
        let o = self.offset(ring, angle);
        QPoint::from_flat(self.q, self.n, self.values[o..o + self.q * self.n].to_vec()).unwrap()
    }

    /// Applies a label-preserving map to every labeled sample.
    pub fn map_samples(&self, q_out: usize, n_out: usize, mono: Vec<usize>, prov: Provenance, f: impl Fn(&[T]) -> Vec<T> + Sync) -> Result<Self> {
        let block = self.q * self.n;
        let values: Vec<T> = self.values.par_chunks(block).flat_map_iter(&f).collect();
        Self::from_labeled(self.grid, q_out, n_out, values, mono, prov)
    }

    /// `lambda * f` sheetwise.
    pub fn scaled(&self, lambda: T) -> Self {
        let values = self.values.iter().map(|&x| x * lambda).collect();
        Self::from_parts(self.grid, self.q, self.n, values, self.monodromy.clone(), self.provenance.clone())
    }

    /// Same samples on a grid whose radii are all divided by `r`; values are
    /// multiplied by `factor`.
    pub fn relabel_grid(&self, grid: PolarGrid, factor: T) -> Self {
        let values = self.values.iter().map(|&x| x * factor).collect();
        Self::from_parts(grid, self.q, self.n, values, self.monodromy.clone(), self.provenance.clone())
    }

    pub(crate) fn derivatives(&self) -> &Derivatives<T> {
        self.derivs.get_or_init(|| self.compute_derivatives())
    }

    fn compute_derivatives(&self) -> Derivatives<T> {
        let g = &self.grid;
        let (nr, nt, block) = (g.n_rings(), g.n_theta, self.q * self.n);
        let inv_h = T::lit(1.0 / g.log_step());
        let inv_dt = T::lit(1.0 / g.angle_step());
        let ang = Stencil::centered();
        let ang_w: Vec<T> = ang.weights.iter().map(|&w| T::lit(w)).collect();
        let mono = &self.monodromy;
        let mono_inv = inverse(mono);
        let per_ring: Vec<(Vec<T>, Vec<T>)> = (0..nr)
            .into_par_iter()
            .map(|k| {
                let rad = Stencil::at(k, nr);
                let rad_w: Vec<T> = rad.weights.iter().map(|&w| T::lit(w)).collect();
                let mut ds = vec![T::zero(); nt * block];
                let mut dth = vec![T::zero(); nt * block];
                for a in 0..nt {
                    for i in 0..self.q {
                        for c in 0..self.n {
                            let idx = (a * self.q + i) * self.n + c;
                            let mut acc = T::zero();
                            for (&o, &w) in rad.offsets.iter().zip(&rad_w) {
                                let kk = (k as isize + o) as usize;
                                acc += w * self.values[self.offset(kk, a) + i * self.n + c];
                            }
                            ds[idx] = acc * inv_h;
                            let mut acc = T::zero();
                            for (&o, &w) in ang.offsets.iter().zip(&ang_w) {
                                let aa = a as isize + o;
                                let (aa, sheet) = if aa >= nt as isize {
                                    ((aa - nt as isize) as usize, mono[i])
                                } else if aa < 0 {
                                    ((aa + nt as isize) as usize, mono_inv[i])
                                } else {
                                    (aa as usize, i)
                                };
                                acc += w * self.values[self.offset(k, aa) + sheet * self.n + c];
                            }
                            dth[idx] = acc * inv_dt;
                        }
                    }
                }
                (ds, dth)
            })
            .collect();
        let mut ds = Vec::with_capacity(self.values.len());
        let mut dtheta = Vec::with_capacity(self.values.len());
        for (a, b) in per_ring {
            ds.extend(a);
            dtheta.extend(b);
        }
        Derivatives { ds, dtheta }
    }

    /// Angular integral of `integrand` on every ring, in ring order.
    ///
    /// Angles and sheets are summed sequentially so the result does not
    /// depend on the number of worker threads.
    pub fn ring_integrals<F>(&self, integrand: F) -> Vec<T>
    where
        F: Fn(&SampleView<'_, T>) -> T + Sync,
    {
        self.ring_integrals_vec(1, |v, acc| acc[0] += integrand(v)).into_iter().map(|x| x[0]).collect()
    }

    /// Vector-valued [`Self::ring_integrals`]: `integrand` adds its
    /// contribution into a buffer of length `width`.
    pub fn ring_integrals_vec<F>(&self, width: usize, integrand: F) -> Vec<Vec<T>>
    where
        F: Fn(&SampleView<'_, T>, &mut [T]) + Sync,
    {
        let d = self.derivatives();
        let g = &self.grid;
        let block = self.q * self.n;
        let dt = T::lit(g.angle_step());
        (0..g.n_rings())
            .into_par_iter()
            .map(|k| {
                let r = g.radius(k);
                let mut acc = vec![T::zero(); width];
                for a in 0..g.n_theta {
                    let o = self.offset(k, a);
                    let view = SampleView {
                        r,
                        theta: g.angle(a),
                        values: &self.values[o..o + block],
                        ds: &d.ds[o..o + block],
                        dtheta: &d.dtheta[o..o + block],
                        q: self.q,
                        n: self.n,
                    };
                    integrand(&view, &mut acc);
                }
                acc.iter_mut().for_each(|x| *x *= dt);
                acc
            })
            .collect()
    }

    pub fn aggregates(&self) -> &RingAggregates<T> {
        self.aggregates.get_or_init(|| {
            let sq = |v: &[T]| v.iter().fold(T::zero(), |acc, &x| acc + x * x);
            let radial = self.ring_integrals(|v| sq(v.ds));
            let angular = self.ring_integrals(|v| sq(v.dtheta));
            let height = self.ring_integrals(|v| sq(v.values));
            let flux = self.ring_integrals(|v| v.values.iter().zip(v.ds).fold(T::zero(), |acc, (&a, &b)| acc + a * b));
            let dirichlet = radial.iter().zip(&angular).map(|(&a, &b)| a + b).collect();
            RingAggregates { dirichlet, radial, height, flux }
        })
    }

    /// `int_{B_r} g` for a per-ring profile `ring_values[k] = int g(r_k, theta) dtheta`,
    /// i.e. the integral over `s` of `r^2 * ring_values`, including the disk
    /// below the innermost ring.
    pub fn disk_integral(&self, ring_values: &[T], r: f64) -> Result<T> {
        let k = self.grid.ring_of(r)?;
        let weighted = self.area_weighted(ring_values);
        let r0 = self.grid.radius(0);
        let body = integrate_uniform_exp(&ring_values[..=k], self.grid.log_step(), 2.0) * T::lit(r0 * r0);
        Ok(body + self.inner_tail(&weighted))
    }

    pub(crate) fn area_weighted(&self, ring_values: &[T]) -> Vec<T> {
        ring_values.iter().enumerate().map(|(k, &v)| v * T::lit(self.grid.radius(k).powi(2))).collect()
    }

    /// Integral in `s` of samples `weighted[from..=to]`.
    pub(crate) fn integrate_rings(&self, weighted: &[T], from: usize, to: usize) -> T {
        integrate_uniform(&weighted[from..=to], T::lit(self.grid.log_step()))
    }

    pub(crate) fn inner_tail(&self, weighted: &[T]) -> T {
        power_tail(weighted[0], weighted[1], T::lit(self.grid.log_step()))
    }

    /// `||f||_{L^2(B_r)}`.
    pub fn l2_norm(&self, r: f64) -> Result<T> {
        let h = self.aggregates().height.clone();
        Ok(self.disk_integral(&h, r)?.max(T::zero()).sqrt())
    }
}
