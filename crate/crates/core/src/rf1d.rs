//! Univariate ReLU random-feature representations.
//!
//! For `a ~ Unif{-1, 1}` and `b` with density `mu`, build weights `v(a, b)`
//! supported on `{-1, 1} x [0, 2A]` with `E[v(a, b) ReLU(a x + b)] = f(x)`
//! for `|x| <= A`:
//!
//! `v = -C1 / int_A^{2A} t mu - C2 a / int_A^{2A} mu` on `b in [A, 2A]`,
//! `v = 2 f''(-a b) / mu(b)` on `b in [0, A]`,
//!
//! where `C1 = -A f'(-A) + f(0) - f(-A) + A f'(A) - f(A)` and
//! `C2 = f'(0) - f'(-A) - f'(A)` cancel what the curvature part adds.

use crate::network::BiasDistribution;
use crate::rng::rng_from_seed;
use crate::{Error, Result};
use rand::Rng as _;
use std::io::Write;

/// Absolute tolerance for the bias-density integrals.
pub const QUAD_TOL: f64 = 1e-10;
/// Integrals below this make the construction degenerate.
pub const MIN_INTEGRAL: f64 = 1e-12;
/// Grid resolution for `sup |v|`.
pub const SUP_GRID: usize = 2001;

fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, v)| i as f64 * v).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RF1DWeights {
    pub radius: f64,
    /// Monomial coefficients of the represented function.
    pub f: Vec<f64>,
    f2: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub bias: BiasDistribution,
    /// `int_A^{2A} mu`.
    pub int_mu: f64,
    /// `int_A^{2A} t mu`.
    pub int_t_mu: f64,
    /// Weight of the constant part on `[A, 2A]`.
    pub w_const: f64,
    /// Weight of the `a`-odd part on `[A, 2A]`.
    pub w_lin: f64,
    pub sup_v: f64,
}

fn integrals(radius: f64, bias: &BiasDistribution) -> Result<(f64, f64)> {
    if !(radius >= 1.0) {
        return Err(Error::usage(format!("truncation radius A must be at least 1, got {radius}")));
    }
    let i0 = adaptive_simpson(|t| bias.density(t), radius, 2.0 * radius, QUAD_TOL);
    let i1 = adaptive_simpson(|t| t * bias.density(t), radius, 2.0 * radius, QUAD_TOL);
    if i0 < MIN_INTEGRAL || i1 < MIN_INTEGRAL {
        return Err(Error::Support(format!(
            "bias density has negligible mass on [{radius}, {}]",
            2.0 * radius
        )));
    }
    Ok((i0, i1))
}

impl RF1DWeights {
    fn assemble(radius: f64, f: Vec<f64>, c1: f64, c2: f64, w_const: f64, w_lin: f64, bias: BiasDistribution, i0: f64, i1: f64) -> Self {
        let f2 = poly_deriv(&poly_deriv(&f));
        let mut w = Self {
            radius,
            f,
            f2,
            c1,
            c2,
            bias,
            int_mu: i0,
            int_t_mu: i1,
            w_const,
            w_lin,
            sup_v: 0.0,
        };
        w.sup_v = w.sup_abs_v();
        w
    }

    /// `v = 1[b in [A, 2A]] / int t mu`, representing `f = 1`.
    pub fn constant(radius: f64, bias: BiasDistribution) -> Result<Self> {
        let (i0, i1) = integrals(radius, &bias)?;
        Ok(Self::assemble(radius, vec![1.0], 0.0, 0.0, 1.0 / i1, 0.0, bias, i0, i1))
    }

    /// `v = a 1[b in [A, 2A]] / int mu`, representing `f = x`.
    pub fn linear(radius: f64, bias: BiasDistribution) -> Result<Self> {
        let (i0, i1) = integrals(radius, &bias)?;
        Ok(Self::assemble(radius, vec![0.0, 1.0], 0.0, 0.0, 0.0, 1.0 / i0, bias, i0, i1))
    }

    /// The full construction for a polynomial `f` given by monomial coefficients.
    pub fn c2(f: &[f64], radius: f64, bias: BiasDistribution) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::usage("f needs at least one coefficient"));
        }
        let (i0, i1) = integrals(radius, &bias)?;
        let a = radius;
        let d1 = poly_deriv(f);
        let fv = |x| poly_eval(f, x);
        let dv = |x| poly_eval(&d1, x);
        let c1 = -a * dv(-a) + fv(0.0) - fv(-a) + a * dv(a) - fv(a);
        let c2 = dv(0.0) - dv(-a) - dv(a);
        Ok(Self::assemble(a, f.to_vec(), c1, c2, -c1 / i1, -c2 / i0, bias, i0, i1))
    }

    pub fn target(&self, x: f64) -> f64 {
        poly_eval(&self.f, x)
    }

    pub fn v(&self, a: f64, b: f64) -> f64 {
        let r = self.radius;
        if (0.0..r).contains(&b) {
            if self.f2.is_empty() {
                0.0
            } else {
                2.0 * poly_eval(&self.f2, -a * b) / self.bias.density(b)
            }
        } else if (r..=2.0 * r).contains(&b) {
            self.w_const + self.w_lin * a
        } else {
            0.0
        }
    }

    fn sup_abs_v(&self) -> f64 {
        let r = self.radius;
        let mut best = self.w_const.abs() + self.w_lin.abs();
        if !self.f2.is_empty() {
            for i in 0..SUP_GRID {
                let b = r * i as f64 / (SUP_GRID - 1) as f64 * (1.0 - 1e-12);
                for a in [-1.0, 1.0] {
                    best = best.max(self.v(a, b).abs());
                }
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEstimate {
    pub x: f64,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub abs_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub points: Vec<PointEstimate>,
    pub sup_err: f64,
    /// `max_x |estimate - target| / se`.
    pub max_z: f64,
}

impl Verification {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "estimate", "se", "target", "abs_err"])?;
        for p in &self.points {
            out.write_record([
                format!("{:e}", p.x),
                format!("{:e}", p.estimate),
                format!("{:e}", p.se),
                format!("{:e}", p.target),
                format!("{:e}", p.abs_err),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `k + 1` evenly spaced points on `[-A, A]`.
pub fn uniform_grid(radius: f64, k: usize) -> Vec<f64> {
    (0..=k)
        .map(|i| -radius + 2.0 * radius * i as f64 / k as f64)
        .collect()
}

/// Monte Carlo estimate of `E[v(a, b) ReLU(a x + b)]` at each grid point
/// from `n_mc` direct draws of `(a, b)`, shared across the grid.
pub fn verify_representation(w: &RF1DWeights, grid: &[f64], n_mc: usize, seed: u64) -> Result<Verification> {
    if n_mc < 2 {
        return Err(Error::usage("n_mc must be at least 2"));
    }
    if let Some(x) = grid.iter().find(|x| x.abs() > w.radius * (1.0 + 1e-12)) {
        return Err(Error::usage(format!("grid point {x} lies outside [-A, A]")));
    }
    let mut rng = rng_from_seed(seed);
    let mut sum = vec![0.0; grid.len()];
    let mut sum_sq = vec![0.0; grid.len()];
    for _ in 0..n_mc {
        let a = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let b = w.bias.sample(&mut rng);
        let v = w.v(a, b);
        if v == 0.0 {
            continue;
        }
        for (j, &x) in grid.iter().enumerate() {
            let y = v * (a * x + b).max(0.0);
            sum[j] += y;
            sum_sq[j] += y * y;
        }
    }
    let n = n_mc as f64;
    let mut points = Vec::with_capacity(grid.len());
    for (j, &x) in grid.iter().enumerate() {
        let mean = sum[j] / n;
        let var = ((sum_sq[j] / n - mean * mean) * n / (n - 1.0)).max(0.0);
        let target = w.target(x);
        points.push(PointEstimate {
            x,
            estimate: mean,
            se: (var / n).sqrt(),
            target,
            abs_err: (mean - target).abs(),
        });
    }
    let sup_err = points.iter().fold(0.0f64, |m, p| m.max(p.abs_err));
    let max_z = points
        .iter()
        .fold(0.0f64, |m, p| if p.se > 0.0 { m.max(p.abs_err / p.se) } else { m });
    Ok(Verification {
        points,
        sup_err,
        max_z,
    })
}

/// `E[v(a, b) ReLU(a x + b)]` by quadrature over `b` and exact averaging
/// over `a`; used to check the construction without sampling noise.
pub fn represented_value(w: &RF1DWeights, x: f64) -> f64 {
    let r = w.radius;
    let inner = |b: f64| {
        0.5 * [-1.0, 1.0]
            .iter()
            .map(|&a| w.v(a, b) * (a * x + b).max(0.0))
            .sum::<f64>()
            * w.bias.density(b)
    };
    // split at the ReLU kinks b = |x| so each piece is smooth
    let kink = x.abs().min(r);
    let lo = adaptive_simpson(inner, 0.0, kink, 1e-11) + adaptive_simpson(inner, kink, r * (1.0 - 1e-15), 1e-11);
    let hi = adaptive_simpson(inner, r, 2.0 * r, 1e-11);
    lo + hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_accurate() {
        let v = adaptive_simpson(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn square_coefficients() {
        let w = RF1DWeights::c2(&[0.0, 0.0, 1.0], 2.0, BiasDistribution::default()).unwrap();
        assert!((w.c1 - 8.0).abs() < 1e-12);
        assert_eq!(w.c2, 0.0);
        assert!(w.sup_v.is_finite() && w.sup_v > 0.0);
    }

    #[test]
    fn constant_path_matches_general_construction() {
        let b = BiasDistribution::default();
        let c = RF1DWeights::constant(2.0, b).unwrap();
        let g = RF1DWeights::c2(&[1.0], 2.0, b).unwrap();
        assert!((g.c1 + 1.0).abs() < 1e-15);
        assert!((c.w_const - g.w_const).abs() < 1e-15);
        assert_eq!(c.sup_v, 1.0 / c.int_t_mu);
        let l = RF1DWeights::linear(2.0, b).unwrap();
        assert_eq!(l.sup_v, 1.0 / l.int_mu);
    }

    #[test]
    fn quadrature_reproduces_target_exactly() {
        let b = BiasDistribution::default();
        for f in [vec![0.0, 0.0, 1.0], vec![0.5, -1.0, 0.0, 1.0], vec![1.0]] {
            let w = RF1DWeights::c2(&f, 2.0, b).unwrap();
            for x in [-2.0, -0.7, 0.0, 1.3, 2.0] {
                assert!((represented_value(&w, x) - w.target(x)).abs() < 1e-6, "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn support_and_radius_errors() {
        let b = BiasDistribution::default();
        assert!(RF1DWeights::constant(0.5, b).is_err());
        let w = RF1DWeights::c2(&[0.0, 0.0, 1.0], 2.0, b).unwrap();
        assert_eq!(w.v(1.0, -0.1), 0.0);
        assert_eq!(w.v(1.0, 4.1), 0.0);
        assert!(RF1DWeights::constant(1e6, b).is_err());
        assert!(verify_representation(&w, &[2.5], 10, 1).is_err());
    }

    #[test]
    fn constant_monte_carlo() {
        let w = RF1DWeights::constant(1.0, BiasDistribution::default()).unwrap();
        let r = verify_representation(&w, &[0.0], 200_000, 3).unwrap();
        assert!(r.points[0].abs_err <= 3.0 * r.points[0].se);
        let l = RF1DWeights::linear(2.0, BiasDistribution::default()).unwrap();
        let r = verify_representation(&l, &[0.0, 1.0], 200_000, 4).unwrap();
        assert!(r.max_z <= 3.5);
    }
}
