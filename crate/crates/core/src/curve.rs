//! Ground-truth test objects: multigraphs of the holomorphic curves
//! `{(w - h(z))^Q = z^p}` and synthetic homogeneous Q-valued maps.

use num_complex::Complex;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PolarGrid;
use crate::qfunction::{Provenance, QFunction};
use crate::qvalue::{is_full_cycle, track_selection, QPoint, TrackOptions};
use crate::scalar::Real;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Parameters of the curve `{(w - h(z))^q = z^p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    q: usize,
    p: usize,
    /// Taylor coefficients of `h`, lowest order first; the first two vanish.
    h: Vec<Complex<f64>>,
}

impl CurveSpec {
    pub fn new(q: usize, p: usize, h: Vec<Complex<f64>>) -> Result<Self> {
        if q < 2 {
            return Err(Error::Spec(format!("q = {q} must be at least 2")));
        }
        if p <= q {
            return Err(Error::Spec(format!("p = {p} must exceed q = {q}")));
        }
        if gcd(p, q) != 1 {
            return Err(Error::Spec(format!("p = {p} and q = {q} are not coprime")));
        }
        if h.iter().take(2).any(|c| *c != Complex::new(0.0, 0.0)) {
            return Err(Error::Spec("h must satisfy h(0) = h'(0) = 0".into()));
        }
        if h.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Spec("non-finite coefficient in h".into()));
        }
        Ok(Self { q, p, h })
    }

    /// The unperturbed curve `{w^q = z^p}`.
    pub fn plain(q: usize, p: usize) -> Result<Self> {
        Self::new(q, p, Vec::new())
    }

    /// Parses a perturbation such as `z^2` or `0.5*z^3 + z^4` (real coefficients).
    pub fn with_perturbation(q: usize, p: usize, expr: &str) -> Result<Self> {
        Self::new(q, p, parse_polynomial(expr)?)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn h_coeffs(&self) -> &[Complex<f64>] {
        &self.h
    }

    /// Order of vanishing of `h` at 0, `None` when `h` is identically zero.
    pub fn h_order(&self) -> Option<usize> {
        self.h.iter().position(|c| *c != Complex::new(0.0, 0.0))
    }

    pub fn h_at<T: Real>(&self, z: Complex<T>) -> Complex<T> {
        // Horner
        self.h.iter().rev().fold(Complex::new(T::zero(), T::zero()), |acc, c| acc * z + Complex::new(T::lit(c.re), T::lit(c.im)))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Curve { q: self.q, p: self.p, h: self.h.iter().map(|c| [c.re, c.im]).collect() }
    }
}

fn parse_polynomial(expr: &str) -> Result<Vec<Complex<f64>>> {
    let bad = || Error::Spec(format!("cannot parse perturbation '{expr}'"));
    let mut coeffs: Vec<Complex<f64>> = Vec::new();
    let cleaned: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if cleaned.is_empty() || cleaned == "0" {
        return Ok(coeffs);
    }
    for term in cleaned.replace('-', "+-").split('+').filter(|t| !t.is_empty()) {
        let (coef, power) = match term.find('z') {
            None => (term.parse::<f64>().map_err(|_| bad())?, 0usize),
            Some(i) => {
                let c = term[..i].trim_end_matches('*');
                let c = match c {
                    "" => 1.0,
                    "-" => -1.0,
                    s => s.parse::<f64>().map_err(|_| bad())?,
                };
                let rest = &term[i + 1..];
                let power = if rest.is_empty() { 1 } else { rest.strip_prefix('^').ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())? };
                (c, power)
            }
        };
        if coeffs.len() <= power {
            coeffs.resize(power + 1, Complex::new(0.0, 0.0));
        }
        coeffs[power] += Complex::new(coef, 0.0);
    }
    Ok(coeffs)
}

/// The `q` solutions `w` of `(w - h(z))^q = z^p`, as points of `R^2`.
pub fn evaluate_sheets<T: Real>(spec: &CurveSpec, z: Complex<T>) -> QPoint<T> {
    let hz = spec.h_at(z);
    let (q, p) = (spec.q, spec.p);
    let modulus = z.norm().powf(T::lit(p as f64 / q as f64));
    let arg = if z.norm() == T::zero() { T::zero() } else { z.arg() };
    let base = arg * T::lit(p as f64) / T::lit(q as f64);
    let mut flat = Vec::with_capacity(2 * q);
    for j in 0..q {
        let a = base + T::lit(2.0 * std::f64::consts::PI * j as f64 / q as f64);
        flat.push(hz.re + modulus * a.cos());
        flat.push(hz.im + modulus * a.sin());
    }
    QPoint::from_flat(q, 2, flat).expect("consistent shape")
}

/// The multigraph of the curve over the `z`-plane on `grid`.
pub fn make_multigraph<T: Real>(spec: &CurveSpec, grid: PolarGrid) -> Result<QFunction<T>> {
    let [cx, cy] = grid.center;
    let f = QFunction::from_qpoints(grid, spec.provenance(), &TrackOptions::default(), |r, t| {
        let z = Complex::new(T::lit(cx + r * t.cos()), T::lit(cy + r * t.sin()));
        Ok(evaluate_sheets(spec, z))
    })?;
    if grid.center == [0.0, 0.0] && !is_full_cycle(f.monodromy()) {
        return Err(Error::Refinement { ring: 0, reason: format!("monodromy {:?} is not a q-cycle", f.monodromy()) });
    }
    Ok(f)
}

/// The radially homogeneous map `f(r, theta) = r^alpha g(theta)`.
///
/// `boundary` supplies `g` on the unit circle; its sheets are tracked once
/// around the circle and every ring reuses that labeling.
pub fn homogeneous_map<T: Real>(alpha: f64, boundary: impl Fn(f64) -> QPoint<T>, grid: PolarGrid) -> Result<QFunction<T>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Argument(format!("alpha = {alpha} must be positive")));
    }
    grid.validate()?;
    let samples: Vec<QPoint<T>> = (0..grid.n_theta).map(|a| boundary(grid.angle(a))).collect();
    let sel = track_selection(&samples, true, &TrackOptions::default()).map_err(|e| Error::Refinement { ring: 0, reason: e.to_string() })?;
    QFunction::from_ring_profile(grid, Provenance::Homogeneous { alpha }, &sel.samples, sel.monodromy.unwrap(), |r| T::lit(r.powf(alpha)))
}

/// Boundary data of the branches of `z^{p/q}`: the `q` roots of `w^q = e^{i p theta}`.
pub fn root_boundary<T: Real>(p: usize, q: usize) -> impl Fn(f64) -> QPoint<T> {
    move |theta| {
        let mut flat = Vec::with_capacity(2 * q);
        for j in 0..q {
            let a = (p as f64 * theta + 2.0 * std::f64::consts::PI * j as f64) / q as f64;
            flat.push(T::lit(a.cos()));
            flat.push(T::lit(a.sin()));
        }
        QPoint::from_flat(q, 2, flat).expect("consistent shape")
    }
}

/// Largest sheet count accepted by [`homogeneous_branches`].
pub const MAX_BRANCH_SHEETS: usize = 12;

/// The average-free `alpha`-homogeneous harmonic map with sheets the
/// branches of `z^alpha`, for rational `alpha = p/q` with `q` at most
/// [`MAX_BRANCH_SHEETS`]. Integer exponents use the two sheets `+-z^alpha`.
pub fn homogeneous_branches<T: Real>(alpha: f64, grid: PolarGrid) -> Result<QFunction<T>> {
    let ratio = Rational64::approximate_float(alpha)
        .filter(|r| *r.numer() > 0 && (*r.denom() as usize) <= MAX_BRANCH_SHEETS)
        .filter(|r| (*r.numer() as f64 / *r.denom() as f64 - alpha).abs() <= 1e-12 * alpha.abs())
        .ok_or_else(|| Error::Argument(format!("alpha = {alpha} is not a positive ratio p/q with q <= {MAX_BRANCH_SHEETS}")))?;
    let (mut p, mut q) = (*ratio.numer() as usize, *ratio.denom() as usize);
    if q == 1 {
        p *= 2;
        q = 2;
    }
    homogeneous_map(alpha, root_boundary(p, q), grid)
}

/// Two antipodal sheets `+-(cos theta, sin theta)`; with exponent `alpha` this
/// gives `+-|x|^{alpha - 1} x`.
pub fn antipodal_boundary<T: Real>() -> impl Fn(f64) -> QPoint<T> {
    |theta| {
        let (c, s) = (T::lit(theta.cos()), T::lit(theta.sin()));
        QPoint::from_flat(2, 2, vec![c, s, -c, -s]).expect("consistent shape")
    }
}

/// Reference frequency of the curve at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AnalyticDegree {
    pub value: Rational64,
    /// Set when `h` is nontrivial: the value is `min(p/q, ord_0 h)`, the
    /// frequency of the full graph rather than of its branched part.
    pub reference: bool,
}

pub fn analytic_degree(spec: &CurveSpec) -> AnalyticDegree {
    let branched = Rational64::new(spec.p as i64, spec.q as i64);
    match spec.h_order() {
        None => AnalyticDegree { value: branched, reference: false },
        Some(k) => AnalyticDegree { value: branched.min(Rational64::from_integer(k as i64)), reference: true },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qvalue::{eta, metric_g};

    fn pt(rows: &[[f64; 2]]) -> QPoint<f64> {
        QPoint::from_sheets(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn branch_maps() {
        let g = PolarGrid::new(1.0, 4, 4, 64).unwrap();
        let f: QFunction<f64> = homogeneous_branches(2.0, g).unwrap();
        assert_eq!(f.q(), 2);
        let k = g.ring_of(0.5).unwrap();
        assert!(eta(&f.sample(k, 3)).iter().all(|x| x.abs() < 1e-15));
        assert_eq!(homogeneous_branches::<f64>(0.8, g).unwrap().q(), 5);
        assert_eq!(homogeneous_branches::<f64>(5.0 / 3.0, g).unwrap().q(), 3);
        assert!(homogeneous_branches::<f64>(std::f64::consts::PI, g).is_err());
        assert!(homogeneous_branches::<f64>(-1.0, g).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(CurveSpec::plain(2, 3).is_ok());
        assert!(CurveSpec::plain(2, 4).is_err());
        assert!(CurveSpec::plain(3, 2).is_err());
        assert!(CurveSpec::plain(1, 3).is_err());
        assert!(CurveSpec::with_perturbation(2, 5, "z").is_err());
        assert!(CurveSpec::with_perturbation(2, 5, "1 + z^2").is_err());
        let s = CurveSpec::with_perturbation(2, 5, "z^2 - 0.5*z^4").unwrap();
        assert_eq!(s.h_coeffs().len(), 5);
        assert_eq!(s.h_coeffs()[4], Complex::new(-0.5, 0.0));
        assert_eq!(s.h_order(), Some(2));
    }

    #[test]
    fn sheet_examples() {
        let s = CurveSpec::plain(2, 3).unwrap();
        let one = evaluate_sheets(&s, Complex::new(1.0, 0.0));
        assert!(metric_g(&one, &pt(&[[1.0, 0.0], [-1.0, 0.0]])).unwrap() < 1e-15);
        let minus = evaluate_sheets(&s, Complex::new(-1.0, 0.0));
        assert!(metric_g(&minus, &pt(&[[0.0, 1.0], [0.0, -1.0]])).unwrap() < 1e-15);
        let s = CurveSpec::plain(3, 4).unwrap();
        let w = evaluate_sheets(&s, Complex::new(1.0, 0.0));
        let h = 3f64.sqrt() / 2.0;
        assert!(metric_g(&w, &pt(&[[1.0, 0.0], [-0.5, h], [-0.5, -h]])).unwrap() < 1e-15);
        let zero = evaluate_sheets(&s, Complex::new(0.0, 0.0));
        assert_eq!(zero.norm_sq(), 0.0);
    }

    #[test]
    fn sheets_solve_the_curve_equation() {
        let s = CurveSpec::with_perturbation(3, 5, "z^2 + 0.3*z^3").unwrap();
        for &(x, y) in &[(0.3f64, 0.1f64), (-0.7, 0.2), (0.05, -0.4)] {
            let z = Complex::new(x, y);
            let w = evaluate_sheets(&s, z);
            let hz = s.h_at(z);
            let zp = z.powu(5);
            for sh in w.sheets() {
                let d = Complex::new(sh[0], sh[1]) - hz;
                assert!((d.powu(3) - zp).norm() < 1e-12);
            }
            // product of (w_i - h) is (-1)^{q+1} z^p
            let prod = w.sheets().fold(Complex::new(1.0, 0.0), |acc, sh| acc * (Complex::new(sh[0], sh[1]) - hz));
            assert!((prod - zp).norm() < 1e-12 * (1.0 + zp.norm()));
            let m = eta(&w);
            assert!((m[0] - hz.re).abs() < 1e-12 && (m[1] - hz.im).abs() < 1e-12);
        }
    }

    #[test]
    fn multigraph_monodromy() {
        let g = PolarGrid::new(1.0, 4, 4, 128).unwrap();
        let f: QFunction<f64> = make_multigraph(&CurveSpec::plain(2, 3).unwrap(), g).unwrap();
        assert_eq!(f.monodromy(), &[1, 0]);
        let f: QFunction<f64> = make_multigraph(&CurveSpec::plain(3, 5).unwrap(), g).unwrap();
        assert!(is_full_cycle(f.monodromy()));
        assert_eq!(f.monodromy().len(), 3);
    }

    #[test]
    fn analytic_degrees() {
        let d = analytic_degree(&CurveSpec::plain(2, 3).unwrap());
        assert_eq!(d.value, Rational64::new(3, 2));
        assert!(!d.reference);
        assert_eq!(analytic_degree(&CurveSpec::plain(3, 5).unwrap()).value, Rational64::new(5, 3));
        let d = analytic_degree(&CurveSpec::with_perturbation(2, 5, "z^2").unwrap());
        assert_eq!(d.value, Rational64::from_integer(2));
        assert!(d.reference);
    }

    #[test]
    fn homogeneous_linear_map() {
        let g = PolarGrid::new(1.0, 4, 4, 64).unwrap();
        let f: QFunction<f64> = homogeneous_map(1.0, antipodal_boundary(), g).unwrap();
        for k in [0, 7, 16] {
            for a in [0, 9, 40] {
                let (r, t) = (g.radius(k), g.angle(a));
                let expect = pt(&[[r * t.cos(), r * t.sin()], [-r * t.cos(), -r * t.sin()]]);
                assert!(metric_g(&f.sample(k, a), &expect).unwrap() < 1e-14);
            }
        }
        assert!(homogeneous_map::<f64>(-1.0, antipodal_boundary(), g).is_err());
    }
}
