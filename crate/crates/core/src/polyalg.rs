//! Exact sparse multivariate polynomials over the standard Gaussian measure.
//!
//! Coefficients are `f64`. After every arithmetic operation terms with
//! `|coef| < CANON_EPS` are dropped; this is the only lossy step.
//!
//! Monomials and Hermite multi-indices are dense exponent vectors of length
//! `d`, ordered graded-colexicographically: lower total degree first, ties
//! broken at the highest-index variable where the two differ. That order is
//! the iteration order of every map in this module and therefore the order of
//! the text serialization.

use crate::{Error, Result};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

/// Coefficients with smaller magnitude are dropped during canonicalization.
pub const CANON_EPS: f64 = 1e-14;

fn graded_colex(a: &[u32], b: &[u32]) -> Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    da.cmp(&db).then_with(|| {
        for (x, y) in a.iter().rev().zip(b.iter().rev()) {
            match x.cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        a.len().cmp(&b.len())
    })
}

macro_rules! multi_index {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, Hash)]
        pub struct $name(Vec<u32>);

        impl $name {
            pub fn new(exponents: Vec<u32>) -> Self {
                Self(exponents)
            }

            pub fn zeros(d: usize) -> Self {
                Self(vec![0; d])
            }

            pub fn exponents(&self) -> &[u32] {
                &self.0
            }

            pub fn degree(&self) -> u32 {
                self.0.iter().sum()
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            /// Zero-pads up to `d` coordinates.
            pub fn padded(&self, d: usize) -> Self {
                let mut e = self.0.clone();
                if e.len() < d {
                    e.resize(d, 0);
                }
                Self(e)
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                graded_colex(&self.0, &other.0)
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
    };
}

multi_index!(Monomial);
multi_index!(HermiteIndex);

/// All exponent vectors of length `d` with total degree `k`, in graded colex
/// order.
pub fn multi_indices(d: usize, k: u32) -> Vec<HermiteIndex> {
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<HermiteIndex>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(HermiteIndex(cur.clone()));
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            rec(pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    if d == 0 {
        if k == 0 {
            out.push(HermiteIndex(Vec::new()));
        }
        return out;
    }
    rec(0, k, &mut vec![0; d], &mut out);
    out.sort();
    out
}

/// `(n-1)!!` for even `n`, zero for odd `n`: the moment `E[z^n]` of `N(0,1)`.
pub fn gaussian_moment_1d(n: u32) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut j = n as i64 - 1;
    while j > 1 {
        acc *= j as f64;
        j -= 2;
    }
    acc
}

/// `E[x^m]` under the standard Gaussian on `R^d`.
pub fn gaussian_moment(m: &Monomial) -> f64 {
    m.0.iter().map(|&a| gaussian_moment_1d(a)).product()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsePoly {
    dim: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl SparsePoly {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(Monomial::zeros(dim), c);
        p.canonicalize();
        p
    }

    /// The coordinate function `x_i` (zero-based `i`).
    pub fn var(dim: usize, i: usize) -> Self {
        assert!(i < dim, "variable index {i} out of range for dimension {dim}");
        let mut e = vec![0; dim];
        e[i] = 1;
        let mut p = Self::zero(dim);
        p.add_term(Monomial(e), 1.0);
        p
    }

    /// The linear form `w . x`.
    pub fn linear(w: &[f64]) -> Self {
        let dim = w.len();
        let mut p = Self::zero(dim);
        for (i, &wi) in w.iter().enumerate() {
            let mut e = vec![0; dim];
            e[i] = 1;
            p.add_term(Monomial(e), wi);
        }
        p.canonicalize();
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        let mut p = Self::zero(dim);
        for (e, c) in terms {
            if e.len() > dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: e.len(),
                });
            }
            p.add_term(Monomial(e).padded(dim), c);
        }
        p.canonicalize();
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, exponents: &[u32]) -> f64 {
        let m = Monomial(exponents.to_vec()).padded(self.dim);
        self.terms.get(&m).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        *self.terms.entry(m).or_insert(0.0) += c;
    }

    fn canonicalize(&mut self) {
        self.terms.retain(|_, c| c.abs() >= CANON_EPS);
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dim);
        for (m, &c) in &self.terms {
            out.terms.insert(m.clone(), c * s);
        }
        out.canonicalize();
        out
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.add_term(Monomial::zeros(self.dim), c);
        out.canonicalize();
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut acc: HashMap<Vec<u32>, f64> = HashMap::with_capacity(self.len() * other.len());
        let mut buf = vec![0u32; self.dim];
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                for (slot, (x, y)) in buf.iter_mut().zip(ma.0.iter().zip(&mb.0)) {
                    *slot = x + y;
                }
                match acc.get_mut(buf.as_slice()) {
                    Some(v) => *v += ca * cb,
                    None => {
                        acc.insert(buf.clone(), ca * cb);
                    }
                }
            }
        }
        let mut out = Self::zero(self.dim);
        out.terms = acc
            .into_iter()
            .filter(|(_, c)| c.abs() >= CANON_EPS)
            .map(|(e, c)| (Monomial(e), c))
            .collect();
        Ok(out)
    }

    pub fn pow(&self, w: u32) -> Self {
        let mut out = Self::constant(self.dim, 1.0);
        for _ in 0..w {
            out = out.mul(self).expect("same dimension");
        }
        out
    }

    /// `g(self)` for a univariate polynomial with monomial coefficients
    /// `g[0] + g[1] z + ...`, by Horner's rule.
    pub fn compose_univariate(&self, g: &[f64]) -> Self {
        let mut acc = Self::zero(self.dim);
        for &gi in g.iter().rev() {
            acc = acc.mul(self).expect("same dimension").add_constant(gi);
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension");
        self.terms
            .iter()
            .map(|(m, &c)| {
                c * m
                    .0
                    .iter()
                    .zip(x)
                    .filter(|(&e, _)| e > 0)
                    .map(|(&e, &xi)| xi.powi(e as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// `E[f(x)]` under the standard Gaussian.
    pub fn mean(&self) -> f64 {
        self.terms.iter().map(|(m, &c)| c * gaussian_moment(m)).sum()
    }

    /// One term per line, `coef e1 ... ed`, in graded colex order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (m, c) in &self.terms {
            let _ = write!(s, "{c:e}");
            for e in &m.0 {
                let _ = write!(s, " {e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str, dim: usize) -> Result<Self> {
        let mut terms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_ascii_whitespace();
            let bad = || Error::Parse(format!("polynomial line {}: `{line}`", lineno + 1));
            let c: f64 = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let e: Vec<u32> = fields
                .map(|t| t.parse::<u32>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if e.len() != dim {
                return Err(bad());
            }
            terms.push((e, c));
        }
        Self::from_terms(dim, terms)
    }

    /// Largest coefficient-wise difference to `other`.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, &c) in &self.terms {
            worst = worst.max((c - other.terms.get(m).copied().unwrap_or(0.0)).abs());
        }
        for (m, &c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }
}

/// `E[f g]` under the standard Gaussian, summing moments of every product
/// monomial.
pub fn inner_product(f: &SparsePoly, g: &SparsePoly) -> Result<f64> {
    f.check_dim(g)?;
    let mut acc = 0.0;
    for (ma, &ca) in &f.terms {
        for (mb, &cb) in &g.terms {
            let mut m = 1.0;
            for (x, y) in ma.0.iter().zip(&mb.0) {
                m *= gaussian_moment_1d(x + y);
                if m == 0.0 {
                    break;
                }
            }
            acc += ca * cb * m;
        }
    }
    Ok(acc)
}

/// Monomial coefficients of the normalized Hermite polynomials `h_0..=h_kmax`,
/// from `h_{j+1} = (z h_j - sqrt(j) h_{j-1}) / sqrt(j+1)`.
pub fn hermite_monomial_coeffs(kmax: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![1.0]];
    if kmax >= 1 {
        out.push(vec![0.0, 1.0]);
    }
    for j in 1..kmax {
        let mut next = vec![0.0; j + 2];
        for (i, &c) in out[j].iter().enumerate() {
            next[i + 1] += c;
        }
        let sj = (j as f64).sqrt();
        for (i, &c) in out[j - 1].iter().enumerate() {
            next[i] -= sj * c;
        }
        let norm = ((j + 1) as f64).sqrt();
        next.iter_mut().for_each(|c| *c /= norm);
        out.push(next);
    }
    out
}

/// `table[a][j] = E[z^a h_j(z)]`, the coordinates of `z^a` in the Hermite
/// basis, for `a, j <= amax`. Built from moments, not from a closed form.
fn monomial_hermite_table(amax: usize) -> Vec<Vec<f64>> {
    let hc = hermite_monomial_coeffs(amax);
    (0..=amax)
        .map(|a| {
            (0..=amax)
                .map(|j| {
                    if j > a || (a - j) % 2 == 1 {
                        0.0
                    } else {
                        hc[j]
                            .iter()
                            .enumerate()
                            .map(|(i, &c)| c * gaussian_moment_1d((a + i) as u32))
                            .sum()
                    }
                })
                .collect()
        })
        .collect()
}

/// The basis element `He_alpha(x) = prod_i h_{alpha_i}(x_i)` in dimension `d`.
pub fn hermite_basis_elem(alpha: &HermiteIndex, d: usize) -> SparsePoly {
    assert!(alpha.dim() <= d, "multi-index longer than dimension");
    let alpha = alpha.padded(d);
    let kmax = alpha.0.iter().copied().max().unwrap_or(0) as usize;
    let hc = hermite_monomial_coeffs(kmax);
    let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![0; d], 1.0)];
    for (i, &ai) in alpha.0.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        let mut next = Vec::with_capacity(terms.len() * (ai as usize + 1));
        for (e, c) in &terms {
            for (p, &hcoef) in hc[ai as usize].iter().enumerate() {
                if hcoef == 0.0 {
                    continue;
                }
                let mut e2 = e.clone();
                e2[i] = p as u32;
                next.push((e2, c * hcoef));
            }
        }
        terms = next;
    }
    SparsePoly::from_terms(d, terms).expect("exponent length equals d")
}

/// Coordinates of a polynomial in the orthonormal Hermite basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteExpansion {
    dim: usize,
    coeffs: BTreeMap<HermiteIndex, f64>,
}

impl HermiteExpansion {
    pub fn of(f: &SparsePoly) -> Self {
        let d = f.dim;
        let amax = f
            .terms
            .keys()
            .flat_map(|m| m.0.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        let table = monomial_hermite_table(amax);
        let mut acc: HashMap<Vec<u32>, f64> = HashMap::new();
        let mut parts: Vec<(Vec<u32>, f64)> = Vec::new();
        for (m, &c) in &f.terms {
            parts.clear();
            parts.push((vec![0; d], c));
            for (i, &a) in m.0.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let row = &table[a as usize];
                let mut next = Vec::with_capacity(parts.len() * (a as usize / 2 + 1));
                for (e, w) in &parts {
                    let mut j = a as i64;
                    while j >= 0 {
                        let t = row[j as usize];
                        if t != 0.0 {
                            let mut e2 = e.clone();
                            e2[i] = j as u32;
                            next.push((e2, w * t));
                        }
                        j -= 2;
                    }
                }
                parts = next;
            }
            for (e, w) in parts.drain(..) {
                *acc.entry(e).or_insert(0.0) += w;
            }
        }
        let coeffs = acc
            .into_iter()
            .filter(|(_, c)| c.abs() >= CANON_EPS)
            .map(|(e, c)| (HermiteIndex(e), c))
            .collect();
        Self { dim: d, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&HermiteIndex, f64)> {
        self.coeffs.iter().map(|(a, &c)| (a, c))
    }

    pub fn coeff(&self, alpha: &HermiteIndex) -> f64 {
        self.coeffs
            .get(&alpha.padded(self.dim))
            .copied()
            .unwrap_or(0.0)
    }

    /// Keeps the components whose Hermite degree satisfies `keep`.
    pub fn filter_degree(&self, keep: impl Fn(u32) -> bool) -> Self {
        Self {
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(a, _)| keep(a.degree()))
                .map(|(a, &c)| (a.clone(), c))
                .collect(),
        }
    }

    /// `||f||^2` by Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.values().map(|c| c * c).sum()
    }

    /// `||self - other||^2` by Parseval.
    pub fn dist_sq(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for (a, &c) in &self.coeffs {
            let o = other.coeffs.get(a).copied().unwrap_or(0.0);
            acc += (c - o) * (c - o);
        }
        for (a, &c) in &other.coeffs {
            if !self.coeffs.contains_key(a) {
                acc += c * c;
            }
        }
        acc
    }

    /// `<self, other>` in `L^2(gamma)`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .map(|(a, &c)| c * other.coeffs.get(a).copied().unwrap_or(0.0))
            .sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(a, &c)| (a.clone(), c * s)).collect(),
        }
    }

    pub fn to_poly(&self) -> SparsePoly {
        let mut out = SparsePoly::zero(self.dim);
        let kmax = self
            .coeffs
            .keys()
            .flat_map(|a| a.0.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        let hc = hermite_monomial_coeffs(kmax);
        for (alpha, &c) in &self.coeffs {
            let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![0; self.dim], c)];
            for (i, &ai) in alpha.0.iter().enumerate() {
                if ai == 0 {
                    continue;
                }
                let mut next = Vec::new();
                for (e, w) in &terms {
                    for (p, &h) in hc[ai as usize].iter().enumerate() {
                        if h != 0.0 {
                            let mut e2 = e.clone();
                            e2[i] = p as u32;
                            next.push((e2, w * h));
                        }
                    }
                }
                terms = next;
            }
            for (e, w) in terms {
                out.add_term(Monomial(e), w);
            }
        }
        out.canonicalize();
        out
    }
}

/// `P_k f`, the orthogonal projection onto Hermite degree exactly `k`.
pub fn project_degree(f: &SparsePoly, k: u32) -> SparsePoly {
    HermiteExpansion::of(f).filter_degree(|j| j == k).to_poly()
}

/// `P_{<=k} f`.
pub fn project_leq(f: &SparsePoly, k: u32) -> SparsePoly {
    HermiteExpansion::of(f).filter_degree(|j| j <= k).to_poly()
}

/// `P_{<k} f`.
pub fn project_lt(f: &SparsePoly, k: u32) -> SparsePoly {
    HermiteExpansion::of(f).filter_degree(|j| j < k).to_poly()
}

/// `P_k f` computed the slow way: one [`inner_product`] per basis element of
/// degree `k`, enumerated in graded colex order.
pub fn project_degree_by_basis(f: &SparsePoly, k: u32) -> SparsePoly {
    let d = f.dim;
    let mut out = SparsePoly::zero(d);
    for alpha in multi_indices(d, k) {
        let he = hermite_basis_elem(&alpha, d);
        let c = inner_product(f, &he).expect("same dimension");
        if c.abs() >= CANON_EPS {
            out = out.add(&he.scale(c)).expect("same dimension");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn p(d: usize, terms: &[(&[u32], f64)]) -> SparsePoly {
        SparsePoly::from_terms(d, terms.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap()
    }

    #[test]
    fn add_examples() {
        let x1 = SparsePoly::var(2, 0);
        assert!(x1.add(&x1.scale(-1.0)).unwrap().is_empty());
        let sq = p(1, &[(&[2], 1.0)]);
        assert_eq!(sq.add(&sq).unwrap(), p(1, &[(&[2], 2.0)]));
        let a = p(2, &[(&[1, 1], 1.0), (&[0, 0], 1.0)]);
        let b = p(2, &[(&[1, 1], 1.0)]);
        assert_eq!(
            a.add(&b).unwrap(),
            p(2, &[(&[1, 1], 2.0), (&[0, 0], 1.0)])
        );
        assert!(matches!(
            a.add(&SparsePoly::var(3, 0)),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn mul_examples() {
        let x1 = SparsePoly::var(1, 0);
        assert_eq!(x1.mul(&x1).unwrap(), p(1, &[(&[2], 1.0)]));
        let s = SparsePoly::var(2, 0).add(&SparsePoly::var(2, 1)).unwrap();
        assert_eq!(
            s.mul(&s).unwrap(),
            p(2, &[(&[2, 0], 1.0), (&[1, 1], 2.0), (&[0, 2], 1.0)])
        );
        let h1a = hermite_basis_elem(&HermiteIndex::new(vec![1]), 2);
        let h1b = hermite_basis_elem(&HermiteIndex::new(vec![0, 1]), 2);
        assert_eq!(h1a.mul(&h1b).unwrap(), p(2, &[(&[1, 1], 1.0)]));
        assert!(x1.mul(&SparsePoly::var(2, 0)).is_err());
    }

    #[test]
    fn moments() {
        assert_eq!(gaussian_moment(&Monomial::new(vec![3])), 0.0);
        assert_eq!(gaussian_moment(&Monomial::new(vec![2, 4])), 3.0);
        assert_eq!(gaussian_moment(&Monomial::new(vec![0, 0])), 1.0);
        assert_eq!(gaussian_moment_1d(8), 105.0);
    }

    #[test]
    fn inner_product_examples() {
        let h2 = hermite_basis_elem(&HermiteIndex::new(vec![2]), 1);
        let h3 = hermite_basis_elem(&HermiteIndex::new(vec![3]), 1);
        assert!((inner_product(&h2, &h2).unwrap() - 1.0).abs() < 1e-12);
        assert!(inner_product(&h2, &h3).unwrap().abs() < 1e-12);
        let x2 = p(1, &[(&[2], 1.0)]);
        assert_eq!(inner_product(&x2, &SparsePoly::constant(1, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn basis_elem_examples() {
        assert_eq!(
            hermite_basis_elem(&HermiteIndex::zeros(3), 3),
            SparsePoly::constant(3, 1.0)
        );
        let h2 = hermite_basis_elem(&HermiteIndex::new(vec![2]), 1);
        assert!(h2.max_coeff_diff(&p(1, &[(&[2], 1.0 / SQRT_2), (&[0], -1.0 / SQRT_2)])) < 1e-15);
        let h11 = hermite_basis_elem(&HermiteIndex::new(vec![1, 1]), 2);
        assert_eq!(h11, p(2, &[(&[1, 1], 1.0)]));
    }

    #[test]
    fn projection_examples() {
        let x1x2 = p(2, &[(&[1, 1], 1.0)]);
        assert!(project_degree(&x1x2, 2).max_coeff_diff(&x1x2) < 1e-14);

        let f = p(2, &[(&[2, 0], 3.0), (&[1, 1], -1.0), (&[0, 0], 0.5)]);
        let p0 = project_degree(&f, 0);
        assert!(p0.max_coeff_diff(&SparsePoly::constant(2, f.mean())) < 1e-14);
        assert_eq!(project_leq(&f, 0), p0);

        // (v.x)^2 with v = (3/5, 4/5): P_2 is (v.x)^2 - 1.
        let vx = SparsePoly::linear(&[0.6, 0.8]);
        let sq = vx.mul(&vx).unwrap();
        let expected = project_degree_by_basis(&sq, 2);
        assert!(expected.max_coeff_diff(&sq.add_constant(-1.0)) < 1e-12);
        assert!(project_degree(&sq, 2).max_coeff_diff(&expected) < 1e-12);

        let he = hermite_basis_elem(&HermiteIndex::new(vec![1, 2]), 2);
        assert!(project_lt(&he, 3).is_empty());

        // x^3 = sqrt(6) h_3 + 3 h_1, so P_{<=2} x^3 = 3 x.
        let cube = p(1, &[(&[3], 1.0)]);
        let oracle = project_degree_by_basis(&cube, 1)
            .add(&project_degree_by_basis(&cube, 2))
            .unwrap()
            .add(&project_degree_by_basis(&cube, 0))
            .unwrap();
        assert!(oracle.max_coeff_diff(&p(1, &[(&[1], 3.0)])) < 1e-12);
        assert!(project_leq(&cube, 2).max_coeff_diff(&oracle) < 1e-12);
    }

    #[test]
    fn enumeration_is_graded_colex() {
        let idx = multi_indices(2, 2);
        let e: Vec<_> = idx.iter().map(|a| a.exponents().to_vec()).collect();
        assert_eq!(e, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices(4, 3).len(), 20);
        let x1 = Monomial::new(vec![1, 0]);
        let x2 = Monomial::new(vec![0, 1]);
        let x1sq = Monomial::new(vec![2, 0]);
        assert!(x1 < x2 && x2 < x1sq);
    }

    #[test]
    fn text_format() {
        let f = p(2, &[(&[0, 0], 1.5), (&[1, 1], -2.0), (&[2, 0], 0.25)]);
        let text = f.to_text();
        assert_eq!(text, "1.5e0 0 0\n2.5e-1 2 0\n-2e0 1 1\n");
        assert_eq!(SparsePoly::parse_text(&text, 2).unwrap(), f);
        assert!(SparsePoly::parse_text("1.0 1 2 3\n", 2).is_err());
    }

    #[test]
    fn canonicalization_drops_tiny() {
        let f = p(1, &[(&[1], 1.0)]);
        let g = p(1, &[(&[1], -1.0 + 1e-16)]);
        assert!(f.add(&g).unwrap().is_empty());
    }

    #[test]
    fn compose_and_eval() {
        let x = SparsePoly::var(1, 0);
        let g = x.compose_univariate(&[1.0, 0.0, 2.0]);
        assert_eq!(g, p(1, &[(&[0], 1.0), (&[2], 2.0)]));
        assert_eq!(g.eval(&[3.0]), 19.0);
    }
}
