//! Seeded random test objects for property checks.

use rand::Rng;

use crate::curve::homogeneous_branches;
use crate::error::{Error, Result};
use crate::grid::PolarGrid;
use crate::qfunction::{Provenance, QFunction};
use crate::qvalue::QPoint;
use crate::scalar::Real;

/// A Q-point with entries uniform in `[-1, 1]`.
pub fn random_qpoint<T: Real, R: Rng>(rng: &mut R, q: usize, n: usize) -> QPoint<T> {
    let flat = (0..q * n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    QPoint::from_flat(q, n, flat).expect("consistent shape")
}

/// A random single-valued piecewise-smooth function on the plane: a cubic
/// polynomial plus a ridge `max(0, <x, u> - c)`.
#[derive(Debug, Clone)]
struct RandomField {
    poly: [f64; 10],
    ridge: ([f64; 2], f64, f64),
}

impl RandomField {
    fn new<R: Rng>(rng: &mut R) -> Self {
        let mut poly = [0.0; 10];
        for c in poly.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        RandomField { poly, ridge: ([a.cos(), a.sin()], rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0)) }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let p = &self.poly;
        let cubic = p[0]
            + p[1] * x
            + p[2] * y
            + p[3] * x * x
            + p[4] * x * y
            + p[5] * y * y
            + p[6] * x * x * x
            + p[7] * x * x * y
            + p[8] * x * y * y
            + p[9] * y * y * y;
        let ([ux, uy], c, b) = self.ridge;
        cubic + b * (ux * x + uy * y - c).max(0.0)
    }
}

/// A random Q-function on `grid`.
///
/// With `branched = false` every label carries its own random field and the
/// monodromy is trivial; otherwise the sheets are a random multiple of the
/// branches of `z^{p/q}` (`p` coprime to `q`, `q < p < 3q`) plus one common
/// random field, which needs `q >= 2` and `n = 2`.
pub fn random_qfunction<T: Real, R: Rng>(rng: &mut R, grid: PolarGrid, q: usize, n: usize, branched: bool) -> Result<QFunction<T>> {
    let prov = Provenance::Synthetic { note: "random".into() };
    if branched {
        if q < 2 || n != 2 {
            return Err(Error::Argument(format!("branched samples need q >= 2 and n = 2, got q = {q}, n = {n}")));
        }
        let ps: Vec<usize> = (q + 1..3 * q).filter(|&p| gcd(p, q) == 1).collect();
        let (p, qq) = (ps[rng.gen_range(0..ps.len())], q);
        let base: QFunction<T> = homogeneous_branches(p as f64 / qq as f64, grid)?;
        let lambda = T::lit(rng.gen_range(0.2..2.0));
        let common = [RandomField::new(rng), RandomField::new(rng)];
        let mut values: Vec<T> = base.values().iter().map(|&v| v * lambda).collect();
        for k in 0..grid.n_rings() {
            for a in 0..grid.n_theta {
                let (x, y) = (grid.radius(k) * grid.angle(a).cos(), grid.radius(k) * grid.angle(a).sin());
                let o = (k * grid.n_theta + a) * qq * 2;
                for i in 0..qq {
                    for (c, field) in common.iter().enumerate() {
                        values[o + i * 2 + c] += T::lit(field.eval(x, y));
                    }
                }
            }
        }
        return QFunction::from_labeled(grid, qq, 2, values, base.monodromy().to_vec(), prov);
    }
    let fields: Vec<RandomField> = (0..q * n).map(|_| RandomField::new(rng)).collect();
    let mut values = Vec::with_capacity(grid.n_rings() * grid.n_theta * q * n);
    for k in 0..grid.n_rings() {
        for a in 0..grid.n_theta {
            let (x, y) = (grid.radius(k) * grid.angle(a).cos(), grid.radius(k) * grid.angle(a).sin());
            values.extend(fields.iter().map(|fd| T::lit(fd.eval(x, y))));
        }
    }
    QFunction::from_labeled(grid, q, n, values, (0..q).collect(), prov)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seeded_generation_is_reproducible() {
        let g = PolarGrid::new(1.0, 4, 4, 64).unwrap();
        let a: QFunction<f64> = random_qfunction(&mut ChaCha8Rng::seed_from_u64(7), g, 3, 2, false).unwrap();
        let b: QFunction<f64> = random_qfunction(&mut ChaCha8Rng::seed_from_u64(7), g, 3, 2, false).unwrap();
        assert_eq!(a.values(), b.values());
        let c: QFunction<f64> = random_qfunction(&mut ChaCha8Rng::seed_from_u64(8), g, 3, 2, true).unwrap();
        assert_eq!((c.q(), c.n()), (3, 2));
        assert!(random_qfunction::<f64, _>(&mut ChaCha8Rng::seed_from_u64(8), g, 1, 2, true).is_err());
    }
}
