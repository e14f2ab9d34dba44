//! Numeric Hermite evaluation and closed-form Hermite identities.
//!
//! `h_k` is the normalized probabilist's Hermite polynomial `H_k / sqrt(k!)`,
//! orthonormal under `N(0, 1)`.

use crate::{Error, Result};

/// Hard limit on materialized Hermite tensors (`d^k` entries).
pub const MAX_TENSOR_ENTRIES: usize = 1_000_000;

/// `h_k(z)`.
pub fn h_eval(k: usize, z: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = z;
    // Normalized form of H_{j+1} = z H_j - j H_{j-1}.
    for j in 1..k {
        let next = (z * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `[h_0(z), ..., h_kmax(z)]`.
pub fn h_all(kmax: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax >= 1 {
        out.push(z);
    }
    for j in 1..kmax {
        let next = (z * out[j] - (j as f64).sqrt() * out[j - 1]) / ((j + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

/// Unnormalized `[H_0(z), ..., H_kmax(z)]`.
pub fn he_all(kmax: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax >= 1 {
        out.push(z);
    }
    for j in 1..kmax {
        out.push(z * out[j] - j as f64 * out[j - 1]);
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Coefficients `c_0..c_k` of a univariate polynomial in the normalized
/// Hermite basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteCoeffs1D(pub Vec<f64>);

impl HermiteCoeffs1D {
    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, z: f64) -> f64 {
        h_all(self.degree(), z)
            .iter()
            .zip(&self.0)
            .map(|(h, c)| h * c)
            .sum()
    }

    pub fn top(&self) -> f64 {
        self.0.last().copied().unwrap_or(0.0)
    }
}

/// Change of basis from monomials to normalized Hermite polynomials, using
/// `z^n = sum_m n! / (m! (n-2m)! 2^m) He_{n-2m}(z)`.
pub fn monomial_to_hermite(coeffs: &[f64]) -> HermiteCoeffs1D {
    let deg = coeffs.len().saturating_sub(1);
    assert!(deg <= 30, "basis conversion supports degree <= 30");
    let mut out = vec![0.0; coeffs.len().max(1)];
    for (n, &a) in coeffs.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let nf = factorial(n);
        for m in 0..=n / 2 {
            let j = n - 2 * m;
            let w = nf / (factorial(m) * factorial(j) * 2f64.powi(m as i32));
            out[j] += a * w * factorial(j).sqrt();
        }
    }
    HermiteCoeffs1D(out)
}

/// Monomial coefficients of `sum_j c_j h_j`.
pub fn hermite_to_monomial(h: &HermiteCoeffs1D) -> Vec<f64> {
    let k = h.degree();
    let mut out = vec![0.0; k + 1];
    // He_j coefficients by the recurrence, then scale by 1/sqrt(j!).
    let mut prev: Vec<f64> = vec![1.0];
    let mut cur: Vec<f64> = vec![0.0, 1.0];
    for (j, &c) in h.0.iter().enumerate() {
        let he: &[f64] = match j {
            0 => &prev,
            _ => &cur,
        };
        let s = c / factorial(j).sqrt();
        for (i, &e) in he.iter().enumerate() {
            out[i] += s * e;
        }
        if j >= 1 {
            let mut next = vec![0.0; j + 2];
            for (i, &e) in cur.iter().enumerate() {
                next[i + 1] += e;
            }
            for (i, &e) in prev.iter().enumerate() {
                next[i] -= j as f64 * e;
            }
            prev = std::mem::replace(&mut cur, next);
        }
    }
    out
}

/// Weights of the addition formula
/// `h_i((z + s) / sqrt(2)) = 2^{-i/2} sum_j binom(i, j)^{1/2} h_{i-j}(s) h_j(z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditionTable {
    pub i: usize,
    /// `weights[j]` multiplies `h_{i-j}(s) h_j(z)`.
    pub weights: Vec<f64>,
}

impl AdditionTable {
    pub fn new(i: usize) -> Self {
        let scale = 2f64.powf(-(i as f64) / 2.0);
        let weights = (0..=i).map(|j| scale * binomial(i, j).sqrt()).collect();
        Self { i, weights }
    }

    /// Right-hand side of the identity at `(z, s)`.
    pub fn eval(&self, z: f64, s: f64) -> f64 {
        let hz = h_all(self.i, z);
        let hs = h_all(self.i, s);
        self.weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * hs[self.i - j] * hz[j])
            .sum()
    }
}

fn check_unit(u: &[f64]) -> Result<()> {
    let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::usage(format!(
            "direction must be a unit vector, got norm {n}"
        )));
    }
    Ok(())
}

/// `<He_k(x), u^{(x)k}>`, contracting the degree-`k` Hermite tensor against
/// `u` without materializing it.
pub fn hermite_tensor_apply(k: usize, x: &[f64], u: &[f64]) -> Result<f64> {
    if x.len() != u.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: u.len(),
        });
    }
    check_unit(u)?;
    let he: Vec<Vec<f64>> = x.iter().map(|&xi| he_all(k, xi)).collect();
    let kf = factorial(k);
    // sum over |alpha| = k of k!/alpha! prod_j He_{alpha_j}(x_j) u_j^{alpha_j}
    fn rec(pos: usize, left: usize, he: &[Vec<f64>], u: &[f64], acc: f64, out: &mut f64) {
        if pos + 1 == u.len() {
            *out += acc * he[pos][left] * u[pos].powi(left as i32) / factorial(left);
            return;
        }
        for a in 0..=left {
            let term = he[pos][a] * u[pos].powi(a as i32) / factorial(a);
            rec(pos + 1, left - a, he, u, acc * term, out);
        }
    }
    let mut total = 0.0;
    if !u.is_empty() {
        rec(0, k, &he, u, 1.0, &mut total);
    }
    Ok(total * kf / kf.sqrt())
}

/// Dense Hermite tensor `He_k(x)` as a flat row-major `d^k` array. Refused
/// above [`MAX_TENSOR_ENTRIES`].
pub fn hermite_tensor(k: usize, x: &[f64]) -> Result<Vec<f64>> {
    let d = x.len();
    let entries = (d as f64).powi(k as i32);
    if entries > MAX_TENSOR_ENTRIES as f64 {
        return Err(Error::Capacity {
            what: "materialized Hermite tensor entries",
            limit: MAX_TENSOR_ENTRIES,
            requested: entries.min(usize::MAX as f64) as usize,
        });
    }
    let he: Vec<Vec<f64>> = x.iter().map(|&xi| he_all(k, xi)).collect();
    let norm = factorial(k).sqrt();
    let n = entries as usize;
    let mut out = Vec::with_capacity(n);
    let mut counts = vec![0usize; d];
    for flat in 0..n {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut r = flat;
        for _ in 0..k {
            counts[r % d] += 1;
            r /= d;
        }
        let v: f64 = counts.iter().enumerate().map(|(j, &c)| he[j][c]).product();
        out.push(v / norm);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{hermite_basis_elem, inner_product, HermiteIndex, SparsePoly};
    use std::f64::consts::SQRT_2;

    #[test]
    fn h_eval_examples() {
        assert_eq!(h_eval(0, 7.3), 1.0);
        assert!(h_eval(2, 1.0).abs() < 1e-15);
        assert!((h_eval(3, 2.0) - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        assert!((h_eval(3, 2.0) - 0.816497).abs() < 1e-6);
    }

    #[test]
    fn conversion_examples_match_oracle() {
        assert_eq!(monomial_to_hermite(&[0.0, 1.0]).0, vec![0.0, 1.0]);
        let sq = monomial_to_hermite(&[0.0, 0.0, 1.0]).0;
        let cube = monomial_to_hermite(&[0.0, 0.0, 0.0, 1.0]).0;
        // oracle: <z^n, h_j> from exact Gaussian moments
        for (n, got) in [(2usize, &sq), (3, &cube)] {
            let mut e = vec![0u32; 1];
            e[0] = n as u32;
            let zn = SparsePoly::from_terms(1, [(e, 1.0)]).unwrap();
            for (j, &g) in got.iter().enumerate() {
                let hj = hermite_basis_elem(&HermiteIndex::new(vec![j as u32]), 1);
                let want = inner_product(&zn, &hj).unwrap();
                assert!((g - want).abs() < 1e-12, "n={n} j={j}");
            }
        }
        assert!((sq[0] - 1.0).abs() < 1e-15 && sq[1] == 0.0 && (sq[2] - SQRT_2).abs() < 1e-15);
        assert!((cube[1] - 3.0).abs() < 1e-14 && (cube[3] - 6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn addition_examples() {
        assert_eq!(AdditionTable::new(0).weights, vec![1.0]);
        let t1 = AdditionTable::new(1);
        assert!((t1.weights[0] - 1.0 / SQRT_2).abs() < 1e-15);
        assert!((t1.weights[1] - 1.0 / SQRT_2).abs() < 1e-15);
        let (z, s) = (1.3, -0.7);
        let lhs = h_eval(2, (z + s) / SQRT_2);
        assert!((AdditionTable::new(2).eval(z, s) - lhs).abs() < 1e-10);
    }

    #[test]
    fn tensor_apply_examples() {
        let x = [0.3, -1.2];
        let u = [0.6, 0.8];
        let ux = 0.6 * 0.3 - 0.8 * 1.2;
        assert!((hermite_tensor_apply(1, &x, &u).unwrap() - ux).abs() < 1e-14);
        assert!(hermite_tensor_apply(2, &[1.0, 5.0], &[1.0, 0.0]).unwrap().abs() < 1e-14);
        assert!(matches!(
            hermite_tensor_apply(2, &x, &[1.0, 1.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn dense_tensor_matches_contraction() {
        let x = [0.4, -0.9, 1.7];
        let u = [2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0];
        for k in 1..=3 {
            let t = hermite_tensor(k, &x).unwrap();
            let mut contracted = 0.0;
            for (flat, v) in t.iter().enumerate() {
                let mut r = flat;
                let mut w = 1.0;
                for _ in 0..k {
                    w *= u[r % 3];
                    r /= 3;
                }
                contracted += v * w;
            }
            let direct = hermite_tensor_apply(k, &x, &u).unwrap();
            assert!((contracted - direct).abs() < 1e-10);
        }
        assert!(matches!(
            hermite_tensor(7, &[0.0; 10]),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn hermite_to_monomial_inverts() {
        let c = HermiteCoeffs1D(vec![0.5, -1.0, 2.0, 0.25]);
        let m = hermite_to_monomial(&c);
        let back = monomial_to_hermite(&m);
        for (a, b) in c.0.iter().zip(&back.0) {
            assert!((a - b).abs() < 1e-12);
        }
        for z in [-2.0f64, 0.1, 1.7] {
            let mono: f64 = m.iter().enumerate().map(|(i, a)| a * z.powi(i as i32)).sum();
            assert!((mono - c.eval(z)).abs() < 1e-12);
        }
    }
}
