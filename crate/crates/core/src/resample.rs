//! Dilations and recentering of sampled Q-valued maps.

use crate::error::{Error, Result};
use crate::grid::PolarGrid;
use crate::qfunction::QFunction;
use crate::qvalue::{QPoint, TrackOptions};
use crate::scalar::Real;

/// `f_{x,r}(y) = f(x + r y) / r`.
///
/// For `x` equal to the grid center this is an exact relabeling of the grid
/// radii. Otherwise the map is resampled onto a polar grid centered at `x`
/// with outer radius `r_max` (default: the largest disk that fits) by
/// bilinear interpolation in `(ln r, theta)`, which is markedly less
/// accurate than the centered path.
pub fn dilate<T: Real>(f: &QFunction<T>, x: [f64; 2], r: f64, r_max: Option<f64>) -> Result<QFunction<T>> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Argument(format!("scale {r} must be positive")));
    }
    let g = *f.grid();
    let offset = [x[0] - g.center[0], x[1] - g.center[1]];
    let dist = offset[0].hypot(offset[1]);
    if dist == 0.0 {
        if let Some(rm) = r_max {
            if rm > g.r_max() / r * (1.0 + 1e-12) {
                return Err(Error::Range(format!("requested radius {rm} exceeds the dilated grid")));
            }
        }
        return Ok(f.relabel_grid(g.dilated(r), T::lit(1.0 / r)));
    }
    let fit = (g.r_max() - dist) / r;
    let new_max = r_max.unwrap_or(fit);
    if !(fit > 0.0) || new_max > fit * (1.0 + 1e-12) {
        return Err(Error::Range(format!("disk of radius {new_max} around {x:?} leaves the grid domain")));
    }
    let mut grid = PolarGrid::new(new_max, g.rings_per_octave, g.octaves, g.n_theta)?;
    grid.center = x;
    let inv_r = T::lit(1.0 / r);
    QFunction::from_qpoints(grid, f.provenance().clone(), &TrackOptions::default(), |rho, t| {
        let px = offset[0] + r * rho * t.cos();
        let py = offset[1] + r * rho * t.sin();
        Ok(interpolate(f, px, py)?.scaled(inv_r))
    })
}

/// Bilinear interpolation in `(ln r, theta)` of the labeled sheets at a
/// point given relative to the grid center.
pub fn interpolate<T: Real>(f: &QFunction<T>, px: f64, py: f64) -> Result<QPoint<T>> {
    let g = f.grid();
    let rho = px.hypot(py);
    let last = g.n_rings() - 1;
    let s = if rho <= g.r_min { 0.0 } else { (rho / g.r_min).ln() / g.log_step() };
    if s > last as f64 + 1e-9 {
        return Err(Error::Range(format!("point at radius {rho} lies outside the grid")));
    }
    let k0 = (s.floor() as usize).min(last - 1);
    let ts = T::lit((s - k0 as f64).clamp(0.0, 1.0));
    let mut phi = py.atan2(px);
    if phi < 0.0 {
        phi += 2.0 * std::f64::consts::PI;
    }
    let u = phi / g.angle_step();
    let a0 = (u.floor() as usize) % g.n_theta;
    let ta = T::lit(u - u.floor());
    let (a1, wrap) = if a0 + 1 == g.n_theta { (0, true) } else { (a0 + 1, false) };
    let (q, n) = (f.q(), f.n());
    let mono = f.monodromy();
    let corners = [f.sample(k0, a0), f.sample(k0 + 1, a0), f.sample(k0, a1), f.sample(k0 + 1, a1)];
    let one = T::one();
    let mut flat = Vec::with_capacity(q * n);
    for (i, &m) in mono.iter().enumerate() {
        let j = if wrap { m } else { i };
        for c in 0..n {
            let v00 = corners[0].sheet(i)[c];
            let v10 = corners[1].sheet(i)[c];
            let v01 = corners[2].sheet(j)[c];
            let v11 = corners[3].sheet(j)[c];
            let lo = v00 * (one - ts) + v10 * ts;
            let hi = v01 * (one - ts) + v11 * ts;
            flat.push(lo * (one - ta) + hi * ta);
        }
    }
    QPoint::from_flat(q, n, flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{antipodal_boundary, homogeneous_map};
    use crate::qvalue::metric_g;

    #[test]
    fn centered_dilation_is_exact() {
        let g = PolarGrid::new(1.0, 4, 5, 64).unwrap();
        let f: QFunction<f64> = homogeneous_map(1.5, antipodal_boundary(), g).unwrap();
        let h = dilate(&f, [0.0, 0.0], 0.25, None).unwrap();
        assert!((h.grid().r_max() - 4.0).abs() < 1e-12);
        // h(y) = f(y / 4) * 4 at matching rings
        for k in 0..g.n_rings() {
            let d = metric_g(&h.sample(k, 3), &f.sample(k, 3).scaled(4.0)).unwrap();
            assert!(d < 1e-15);
        }
        assert!(dilate(&f, [0.0, 0.0], 0.25, Some(8.0)).is_err());
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let g = PolarGrid::new(1.0, 4, 5, 64).unwrap();
        let f: QFunction<f64> = homogeneous_map(1.5, antipodal_boundary(), g).unwrap();
        let (k, a) = (9, 63);
        let (r, t) = (g.radius(k), g.angle(a));
        let p = interpolate(&f, r * t.cos(), r * t.sin()).unwrap();
        assert!(metric_g(&p, &f.sample(k, a)).unwrap() < 1e-12);
        assert!(interpolate(&f, 2.0, 0.0).is_err());
    }

    #[test]
    fn off_center_disk_must_fit() {
        let g = PolarGrid::new(1.0, 4, 5, 64).unwrap();
        let f: QFunction<f64> = homogeneous_map(1.0, antipodal_boundary(), g).unwrap();
        assert!(dilate(&f, [0.5, 0.0], 1.0, Some(0.6)).is_err());
    }
}
