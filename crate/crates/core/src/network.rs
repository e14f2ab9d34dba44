//! The residual bottleneck network
//!
//! `h(x) = g(x) + c^T ReLU(a g(x) + b)`, `g(x) = u^T sigma1(V x + s)`,
//!
//! with its initialization, forward passes and exact gradients of the
//! empirical square loss `(1/n) sum (h(x_i) - y_i)^2`.

use crate::hermite::monomial_to_hermite;
use crate::kv::{fmt_reals, parse_reals, KvBlock};
use crate::polyalg::SparsePoly;
use crate::rng::{Rng, Streams};
use crate::target::Dataset;
use crate::{par, Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};

/// Samples per block in batched passes; blocks are reduced in index order
/// so results do not depend on the thread count.
pub const BLOCK: usize = 256;

/// Rows per block in matrix-form gradient passes.
pub const GRAD_BLOCK: usize = 4096;

pub const CHECKPOINT_HEADER: &str = "hierpoly-checkpoint v1";

/// Polynomial inner activation `sigma1(z) = sum_i o_i z^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSpec {
    coeffs: Vec<f64>,
    deriv: Vec<f64>,
}

impl ActivationSpec {
    pub fn new(coeffs: &[f64]) -> Result<Self> {
        let k = coeffs.len().saturating_sub(1);
        if coeffs.is_empty() || coeffs[k] == 0.0 {
            return Err(Error::usage("sigma1 must have a nonzero leading coefficient"));
        }
        if monomial_to_hermite(coeffs).top() == 0.0 {
            return Err(Error::usage("sigma1 has a vanishing top Hermite coefficient"));
        }
        let deriv = coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| i as f64 * c)
            .collect();
        Ok(Self {
            coeffs: coeffs.to_vec(),
            deriv,
        })
    }

    /// `sigma1(z) = z^k`.
    pub fn power(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Self::new(&c).expect("monomial activation")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    #[inline]
    pub fn deriv(&self, z: f64) -> f64 {
        self.deriv.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }
}

/// Student-t bias distribution with `nu > 8` degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasDistribution {
    pub dof: f64,
}

impl Default for BiasDistribution {
    fn default() -> Self {
        Self { dof: 9.0 }
    }
}

impl BiasDistribution {
    pub fn student_t(dof: f64) -> Result<Self> {
        if !(dof > 8.0) || !dof.is_finite() {
            return Err(Error::Support(format!(
                "Student-t bias needs more than 8 degrees of freedom, got {dof}"
            )));
        }
        Ok(Self { dof })
    }

    /// Polynomial tail exponent of the density, `nu + 1`.
    pub fn tail_exponent(&self) -> f64 {
        self.dof + 1.0
    }

    pub fn density(&self, t: f64) -> f64 {
        let nu = self.dof;
        let log_norm = libm::lgamma((nu + 1.0) / 2.0)
            - libm::lgamma(nu / 2.0)
            - 0.5 * (nu * std::f64::consts::PI).ln();
        (log_norm - (nu + 1.0) / 2.0 * (1.0 + t * t / nu).ln()).exp()
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        StudentT::new(self.dof).expect("dof > 8").sample(rng)
    }

    /// `E[T^{2j}] = nu^j (2j-1)!! / prod_{i=1..j} (nu - 2i)`, finite for `2j < nu`.
    pub fn even_moment(&self, j: u32) -> f64 {
        let nu = self.dof;
        (1..=j).fold(1.0, |acc, i| {
            acc * nu * (2 * i - 1) as f64 / (nu - 2.0 * i as f64)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub d: usize,
    pub m1: usize,
    pub m2: usize,
    pub seed: u64,
    pub sigma1: ActivationSpec,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    /// Row-major `m1 x d`.
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

/// Gradients of the empirical loss for every trainable block.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl Grads {
    fn zeros(n: &Network) -> Self {
        Self {
            u: vec![0.0; n.m1],
            s: vec![0.0; n.m1],
            v: vec![0.0; n.m1 * n.d],
            b: vec![0.0; n.m2],
            c: vec![0.0; n.m2],
        }
    }

    fn add(&mut self, o: &Self) {
        for (x, y) in [
            (&mut self.u, &o.u),
            (&mut self.s, &o.s),
            (&mut self.v, &o.v),
            (&mut self.b, &o.b),
            (&mut self.c, &o.c),
        ] {
            x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        }
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

fn check_data(net: &Network, data: &Dataset) -> Result<()> {
    if data.d != net.d {
        return Err(Error::DimensionMismatch {
            left: net.d,
            right: data.d,
        });
    }
    if data.is_empty() {
        return Err(Error::usage("empty dataset"));
    }
    Ok(())
}

fn blocks(n: usize) -> Vec<(usize, usize)> {
    blocks_of(n, BLOCK)
}

/// Half-open index ranges of length `size` covering `0..n`.
pub fn blocks_of(n: usize, size: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(size).map(|lo| (lo, (lo + size).min(n))).collect()
}

impl Network {
    /// `V` rows uniform on the sphere of radius `1/sqrt 2`, `s ~ N(0, 1/2)`,
    /// `a ~ Unif{-1, 1}`, `b ~ bias`, `u = c = 0`.
    pub fn init(
        d: usize,
        m1: usize,
        m2: usize,
        seed: u64,
        sigma1: ActivationSpec,
        bias: BiasDistribution,
    ) -> Result<Self> {
        if d == 0 || m1 == 0 || m2 == 0 {
            return Err(Error::usage("d, m1 and m2 must all be at least 1"));
        }
        let streams = Streams::new(seed);
        let mut rv = streams.rng("init/V", &[]);
        let mut v = Vec::with_capacity(m1 * d);
        for _ in 0..m1 {
            let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rv)).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = std::f64::consts::FRAC_1_SQRT_2 / norm;
            v.extend(row.iter().map(|x| x * scale));
        }
        let half = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid sd");
        let mut rs = streams.rng("init/s", &[]);
        let s = (0..m1).map(|_| half.sample(&mut rs)).collect();
        let mut ra = streams.rng("init/a", &[]);
        let a = (0..m2)
            .map(|_| if ra.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut rb = streams.rng("init/b", &[]);
        let b = (0..m2).map(|_| bias.sample(&mut rb)).collect();
        Ok(Self {
            d,
            m1,
            m2,
            seed,
            sigma1,
            u: vec![0.0; m1],
            s,
            v,
            a,
            b,
            c: vec![0.0; m2],
        })
    }

    /// `sigma1(V x + s)`, written into `out`.
    pub fn mid_features_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.v[i * self.d..(i + 1) * self.d];
            let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.s[i];
            *o = self.sigma1.eval(z);
        }
    }

    pub fn mid_features(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m1];
        self.mid_features_into(x, &mut out);
        out
    }

    /// The bottleneck scalar `u^T sigma1(V x + s)`.
    pub fn forward_mid(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.m1 {
            if self.u[i] == 0.0 {
                continue;
            }
            let row = &self.v[i * self.d..(i + 1) * self.d];
            let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.s[i];
            acc += self.u[i] * self.sigma1.eval(z);
        }
        acc
    }

    /// Bottleneck values for a row-major block of samples.
    pub fn forward_mid_batch(&self, rows: &[f64]) -> Vec<f64> {
        let n = rows.len() / self.d;
        let u = DVector::from_column_slice(&self.u);
        let mut out = Vec::with_capacity(n);
        for (lo, hi) in blocks_of(n, GRAD_BLOCK) {
            let phi = self.mid_feature_matrix(&rows[lo * self.d..hi * self.d]);
            out.extend((phi * &u).iter().copied());
        }
        out
    }

    /// Network outputs for a row-major block of samples.
    pub fn forward_batch(&self, rows: &[f64]) -> Vec<f64> {
        self.forward_mid_batch(rows)
            .into_iter()
            .map(|m| self.forward_from_mid(m))
            .collect()
    }

    /// `ReLU(a mid + b)`.
    pub fn outer_features(&self, mid: f64) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| relu(a * mid + b))
            .collect()
    }

    pub fn forward_from_mid(&self, mid: f64) -> f64 {
        mid + self
            .c
            .iter()
            .zip(self.a.iter().zip(&self.b))
            .map(|(c, (a, b))| c * relu(a * mid + b))
            .sum::<f64>()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_from_mid(self.forward_mid(x))
    }

    /// Mean square loss over `data`.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        check_data(self, data)?;
        let parts = par::map(&blocks(data.len()), |&(lo, hi)| {
            (lo..hi)
                .map(|i| {
                    let r = self.forward(data.row(i)) - data.y[i];
                    r * r
                })
                .sum::<f64>()
        });
        Ok(parts.iter().sum::<f64>() / data.len() as f64)
    }

    /// Gradient in `u`; only defined while `c = 0`.
    pub fn grad_u(&self, data: &Dataset) -> Result<Vec<f64>> {
        if self.c.iter().any(|&c| c != 0.0) {
            return Err(Error::Contract(
                "grad_u is defined only in the stage-1 regime c = 0".into(),
            ));
        }
        check_data(self, data)?;
        let n = data.len() as f64;
        let parts = par::map(&blocks(data.len()), |&(lo, hi)| {
            let mut g = vec![0.0; self.m1];
            let mut phi = vec![0.0; self.m1];
            for i in lo..hi {
                self.mid_features_into(data.row(i), &mut phi);
                let r: f64 = self.u.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() - data.y[i];
                g.iter_mut().zip(&phi).for_each(|(gj, p)| *gj += r * p);
            }
            g
        });
        let mut g = vec![0.0; self.m1];
        for p in parts {
            g.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        g.iter_mut().for_each(|x| *x *= 2.0 / n);
        Ok(g)
    }

    /// Gradient in `c`.
    pub fn grad_c(&self, data: &Dataset) -> Result<Vec<f64>> {
        check_data(self, data)?;
        let n = data.len() as f64;
        let parts = par::map(&blocks(data.len()), |&(lo, hi)| {
            let mut g = vec![0.0; self.m2];
            for i in lo..hi {
                let mid = self.forward_mid(data.row(i));
                let psi = self.outer_features(mid);
                let r = self.forward_from_mid(mid) - data.y[i];
                g.iter_mut().zip(&psi).for_each(|(gj, p)| *gj += r * p);
            }
            g
        });
        let mut g = vec![0.0; self.m2];
        for p in parts {
            g.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        g.iter_mut().for_each(|x| *x *= 2.0 / n);
        Ok(g)
    }

    /// `V` as an `m1 x d` matrix.
    pub fn v_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m1, self.d, &self.v)
    }

    /// Pre-activations `X V^T + s` for the row-major block `rows`.
    pub fn pre_activations(&self, rows: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
        let nb = rows.len() / self.d;
        let x = DMatrix::from_row_slice(nb, self.d, rows);
        let mut z = x * v.transpose();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.s[j]);
        }
        z
    }

    /// `sigma1(X V^T + s)`, one row per sample.
    pub fn mid_feature_matrix(&self, rows: &[f64]) -> DMatrix<f64> {
        let mut z = self.pre_activations(rows, &self.v_matrix());
        z.apply(|t| *t = self.sigma1.eval(*t));
        z
    }

    fn grad_block(&self, data: &Dataset, lo: usize, hi: usize, v: &DMatrix<f64>) -> (Grads, f64) {
        let d = self.d;
        let rows = &data.x[lo * d..hi * d];
        let x = DMatrix::from_row_slice(hi - lo, d, rows);
        let z = self.pre_activations(rows, v);
        let phi = z.map(|t| self.sigma1.eval(t));
        let u = DVector::from_column_slice(&self.u);
        let mids = &phi * &u;
        let mut g = Grads::zeros(self);
        let mut loss = 0.0;
        let mut rm = DVector::zeros(hi - lo);
        for (i, &mid) in mids.iter().enumerate() {
            let mut out = mid;
            let mut dmid = 1.0;
            for j in 0..self.m2 {
                let pre = self.a[j] * mid + self.b[j];
                if pre > 0.0 {
                    out += self.c[j] * pre;
                    dmid += self.c[j] * self.a[j];
                }
            }
            let r = out - data.y[lo + i];
            loss += r * r;
            for j in 0..self.m2 {
                let pre = self.a[j] * mid + self.b[j];
                if pre > 0.0 {
                    g.c[j] += r * pre;
                    g.b[j] += r * self.c[j];
                }
            }
            rm[i] = r * dmid;
        }
        let gu = phi.tr_mul(&rm);
        g.u.copy_from_slice(gu.as_slice());
        let mut t = z;
        for (j, mut col) in t.column_iter_mut().enumerate() {
            let uj = self.u[j];
            for (i, e) in col.iter_mut().enumerate() {
                *e = rm[i] * uj * self.sigma1.deriv(*e);
            }
            g.s[j] = col.sum();
        }
        let gv = t.tr_mul(&x);
        for j in 0..self.m1 {
            for l in 0..d {
                g.v[j * d + l] = gv[(j, l)];
            }
        }
        (g, loss)
    }

    /// Gradients in `(u, s, V, b, c)` plus the loss; `a` is not trained.
    /// The ReLU derivative at exactly 0 is taken to be 0.
    pub fn grad_all_with_loss(&self, data: &Dataset) -> Result<(Grads, f64)> {
        check_data(self, data)?;
        let v = self.v_matrix();
        let parts = par::map(&blocks_of(data.len(), GRAD_BLOCK), |&(lo, hi)| {
            self.grad_block(data, lo, hi, &v)
        });
        let mut g = Grads::zeros(self);
        let mut loss = 0.0;
        for (p, l) in &parts {
            g.add(p);
            loss += l;
        }
        let n = data.len() as f64;
        let scale = 2.0 / n;
        for block in [&mut g.u, &mut g.s, &mut g.v, &mut g.b, &mut g.c] {
            block.iter_mut().for_each(|x| *x *= scale);
        }
        Ok((g, loss / n))
    }

    pub fn grad_all(&self, data: &Dataset) -> Result<Grads> {
        Ok(self.grad_all_with_loss(data)?.0)
    }

    /// Exact polynomial form of the bottleneck `u^T sigma1(V x + s)`.
    pub fn mid_poly(&self) -> SparsePoly {
        let mut acc = SparsePoly::zero(self.d);
        for j in 0..self.m1 {
            if self.u[j] == 0.0 {
                continue;
            }
            let lin = SparsePoly::linear(&self.v[j * self.d..(j + 1) * self.d])
                .add_constant(self.s[j]);
            let term = lin.compose_univariate(self.sigma1.coeffs()).scale(self.u[j]);
            acc = acc.add(&term).expect("same dimension");
        }
        acc
    }

    /// Versioned textual checkpoint; reals are written in shortest
    /// round-trip form so loading is bit-exact.
    pub fn to_checkpoint(&self) -> String {
        let mut b = KvBlock::new();
        b.set("d", self.d)
            .set("m1", self.m1)
            .set("m2", self.m2)
            .set("seed", self.seed)
            .set("sigma1", fmt_reals(self.sigma1.coeffs()))
            .set("u", fmt_reals(&self.u))
            .set("s", fmt_reals(&self.s))
            .set("V", fmt_reals(&self.v))
            .set("a", fmt_reals(&self.a))
            .set("b", fmt_reals(&self.b))
            .set("c", fmt_reals(&self.c));
        format!("{CHECKPOINT_HEADER}\n{}", b.to_text())
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let (head, body) = text.split_once('\n').unwrap_or((text, ""));
        if head.trim() != CHECKPOINT_HEADER {
            return Err(Error::Parse(format!("unsupported checkpoint header `{}`", head.trim())));
        }
        let b = KvBlock::parse(body)?;
        let int = |k: &str| -> Result<usize> {
            b.parse_value(k)?
                .ok_or_else(|| Error::Parse(format!("checkpoint lacks `{k}`")))
        };
        let (d, m1, m2) = (int("d")?, int("m1")?, int("m2")?);
        let seed: u64 = b
            .parse_value("seed")?
            .ok_or_else(|| Error::Parse("checkpoint lacks `seed`".into()))?;
        let block = |k: &str, len: usize| -> Result<Vec<f64>> {
            let v = parse_reals(b.require(k)?)?;
            if v.len() != len {
                return Err(Error::Parse(format!(
                    "checkpoint block `{k}` has {} entries, expected {len}",
                    v.len()
                )));
            }
            Ok(v)
        };
        Ok(Self {
            d,
            m1,
            m2,
            seed,
            sigma1: ActivationSpec::new(&parse_reals(b.require("sigma1")?)?)?,
            u: block("u", m1)?,
            s: block("s", m1)?,
            v: block("V", m1 * d)?,
            a: block("a", m2)?,
            b: block("b", m2)?,
            c: block("c", m2)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn tiny(m1: usize, m2: usize) -> Network {
        Network::init(3, m1, m2, 7, ActivationSpec::power(2), BiasDistribution::default()).unwrap()
    }

    #[test]
    fn init_contract() {
        let n = Network::init(10, 1000, 20, 3, ActivationSpec::power(2), BiasDistribution::default())
            .unwrap();
        assert!(n.u.iter().chain(&n.c).all(|&x| x == 0.0));
        for row in n.v.chunks(10) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
        let var = n.s.iter().map(|x| x * x).sum::<f64>() / 1000.0;
        assert!((var - 0.5).abs() < 0.1);
        assert!(n.a.iter().all(|&a| a == 1.0 || a == -1.0));
        let again = Network::init(10, 1000, 20, 3, ActivationSpec::power(2), BiasDistribution::default())
            .unwrap();
        assert_eq!(n, again);
    }

    #[test]
    fn hand_forward_cases() {
        let mut n = Network::init(2, 1, 1, 1, ActivationSpec::power(2), BiasDistribution::default())
            .unwrap();
        assert_eq!(n.forward(&[1.0, 2.0]), 0.0);
        n.u = vec![1.0];
        n.v = vec![std::f64::consts::FRAC_1_SQRT_2, 0.0];
        n.s = vec![0.0];
        assert!((n.forward_mid(&[3.0, 5.0]) - 4.5).abs() < 1e-12);
        // mid = 3 via x1 = sqrt(6)
        n.c = vec![2.0];
        n.a = vec![1.0];
        n.b = vec![-1.0];
        assert!((n.forward_from_mid(3.0) - 7.0).abs() < 1e-15);
        let x = [6f64.sqrt(), 0.0];
        assert!((n.forward(&x) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn grad_u_requires_stage_one() {
        let mut n = tiny(2, 2);
        n.c[0] = 1.0;
        let data = Dataset {
            d: 3,
            x: vec![0.0; 3],
            y: vec![1.0],
        };
        assert!(matches!(n.grad_u(&data), Err(Error::Contract(_))));
    }

    #[test]
    fn single_sample_hand_gradient() {
        let mut n = tiny(1, 1);
        n.u = vec![0.7];
        let x = [0.3, -0.2, 1.1];
        let phi = n.mid_features(&x)[0];
        let y = 0.4;
        let data = Dataset {
            d: 3,
            x: x.to_vec(),
            y: vec![y],
        };
        let g = n.grad_u(&data).unwrap();
        assert!((g[0] - 2.0 * (0.7 * phi - y) * phi).abs() < 1e-14);
        let all = n.grad_all(&data).unwrap();
        assert!((all.u[0] - g[0]).abs() < 1e-14);
    }

    #[test]
    fn student_t_moments() {
        let b = BiasDistribution::default();
        assert!((b.even_moment(1) - 9.0 / 7.0).abs() < 1e-15);
        assert!((b.even_moment(2) - 3.0 * 81.0 / (7.0 * 5.0)).abs() < 1e-12);
        assert!(BiasDistribution::student_t(8.0).is_err());
        let mut rng = rng_from_seed(2);
        let n = 200_000;
        let m2 = (0..n).map(|_| b.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - 9.0 / 7.0).abs() < 0.03);
        // density integrates to one
        let h = 1e-3;
        let total: f64 = (-40_000..=40_000).map(|i| b.density(i as f64 * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut n = tiny(4, 3);
        n.u = vec![0.1, -1.0 / 3.0, 2.5e-17, 7.0];
        let text = n.to_checkpoint();
        let back = Network::from_checkpoint(&text).unwrap();
        assert_eq!(back, n);
        assert!(Network::from_checkpoint("nonsense\n").is_err());
    }
}
