//! Hidden features `p`, links `g` and centered targets `h = g(p) - E[g(p)]`.
//!
//! Three feature families are constructible:
//!
//! - orthogonally decomposable: `p(x) = L^{-1/2} sum_i lambda_i h_k(v_i . x)`
//!   with orthonormal `v_i`;
//! - sums of sparse parities on disjoint coordinate blocks;
//! - traceless quadratics `p(x) = x^T A x`.
//!
//! Every feature is normalized to `E[p^2] = 1`. For quadratics that means
//! `||A||_F = 1/sqrt(2)`, since `E[(x^T A x)^2] = 2 ||A||_F^2` when
//! `tr A = 0`.

use crate::hermite::h_eval;
use crate::kv::{fmt_reals, parse_reals, KvBlock};
use crate::polyalg::{hermite_monomial_coeffs, HermiteExpansion, SparsePoly};
use crate::rng::{rng_from_seed, Rng, Streams};
use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

/// Exact polynomial evaluation is used up to this ambient dimension...
pub const EXACT_MAX_D: usize = 16;
/// ...and up to this total degree `k q` of the composite target.
pub const EXACT_MAX_DEGREE: usize = 8;
/// Largest admissible `|lambda_i|` after normalization.
pub const LAMBDA_CAP: f64 = 10.0;
/// Largest admissible `|g_i|` for link coefficients.
pub const LINK_COEFF_CAP: f64 = 1e3;
/// Default Monte Carlo sample count for centering.
pub const DEFAULT_CENTER_SAMPLES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    OrthoDecomp,
    SparseParity,
    Quadratic,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::OrthoDecomp => "ortho",
            FeatureKind::SparseParity => "parity",
            FeatureKind::Quadratic => "quadratic",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ortho" | "ortho_decomp" | "orthodecomp" => Ok(FeatureKind::OrthoDecomp),
            "parity" | "sparse_parity" => Ok(FeatureKind::SparseParity),
            "quadratic" | "quad" => Ok(FeatureKind::Quadratic),
            other => Err(Error::usage(format!("unknown feature family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpec {
    kind: FeatureKind,
    d: usize,
    k: usize,
    lambdas: Vec<f64>,
    /// Orthonormal directions, one per component (OrthoDecomp only).
    directions: Vec<Vec<f64>>,
    /// Row-major traceless symmetric `d x d` matrix (Quadratic only).
    matrix: Vec<f64>,
    seed: Option<u64>,
    warnings: Vec<String>,
}

fn normalize_lambdas(lambdas: &[f64]) -> Result<Vec<f64>> {
    if lambdas.is_empty() {
        return Err(Error::usage("at least one component is required"));
    }
    if lambdas.iter().any(|&l| l == 0.0 || !l.is_finite()) {
        return Err(Error::usage("lambdas must be finite and nonzero"));
    }
    let l = lambdas.len() as f64;
    let ss: f64 = lambdas.iter().map(|x| x * x).sum();
    let scale = (l / ss).sqrt();
    let out: Vec<f64> = lambdas.iter().map(|x| x * scale).collect();
    let worst = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if worst > LAMBDA_CAP {
        return Err(Error::usage(format!(
            "unbalanced lambdas: max |lambda| = {worst:.3} exceeds {LAMBDA_CAP}"
        )));
    }
    Ok(out)
}

fn single_component_warning(l: usize) -> Vec<String> {
    if l == 1 {
        vec!["single component (L = 1): the Stein residual does not shrink with d".to_string()]
    } else {
        Vec::new()
    }
}

/// First `l` rows of a Haar-random `d x d` orthogonal matrix.
pub fn random_orthonormal_rows(d: usize, l: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    (0..l).map(|i| q.row(i).iter().copied().collect()).collect()
}

impl FeatureSpec {
    /// `L^{-1/2} sum_i lambda_i h_k(v_i . x)`; directions are the standard
    /// basis when `seed` is `None`, else rows of a random orthogonal matrix.
    pub fn ortho_decomp(d: usize, k: usize, lambdas: &[f64], seed: Option<u64>) -> Result<Self> {
        let l = lambdas.len();
        if l > d {
            return Err(Error::usage(format!("L = {l} components exceed d = {d}")));
        }
        if k == 0 {
            return Err(Error::usage("feature degree k must be at least 1"));
        }
        let lambdas = normalize_lambdas(lambdas)?;
        let directions = match seed {
            None => (0..l)
                .map(|i| {
                    let mut e = vec![0.0; d];
                    e[i] = 1.0;
                    e
                })
                .collect(),
            Some(s) => {
                let mut rng = Streams::new(s).rng("feature/directions", &[]);
                random_orthonormal_rows(d, l, &mut rng)
            }
        };
        Ok(Self {
            kind: FeatureKind::OrthoDecomp,
            d,
            k,
            lambdas,
            directions,
            matrix: Vec::new(),
            seed,
            warnings: single_component_warning(l),
        })
    }

    /// `L^{-1/2} sum_i lambda_i prod_j x_{k(i-1)+j}`.
    pub fn sparse_parity(d: usize, k: usize, lambdas: &[f64]) -> Result<Self> {
        let l = lambdas.len();
        if k == 0 {
            return Err(Error::usage("feature degree k must be at least 1"));
        }
        if k * l > d {
            return Err(Error::usage(format!(
                "k * L = {} exceeds d = {d}",
                k * l
            )));
        }
        let lambdas = normalize_lambdas(lambdas)?;
        Ok(Self {
            kind: FeatureKind::SparseParity,
            d,
            k,
            lambdas,
            directions: Vec::new(),
            matrix: Vec::new(),
            seed: None,
            warnings: single_component_warning(l),
        })
    }

    /// `x^T A x` after projecting `A` to trace zero and scaling to
    /// `||A||_F = 1/sqrt(2)`. `a` is row-major `d x d`.
    pub fn quadratic(d: usize, a: &[f64]) -> Result<Self> {
        if a.len() != d * d {
            return Err(Error::DimensionMismatch {
                left: d * d,
                right: a.len(),
            });
        }
        for i in 0..d {
            for j in 0..i {
                if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 {
                    return Err(Error::usage("quadratic feature matrix must be symmetric"));
                }
            }
        }
        let mut m = a.to_vec();
        let tr: f64 = (0..d).map(|i| m[i * d + i]).sum::<f64>() / d as f64;
        for i in 0..d {
            m[i * d + i] -= tr;
        }
        let fro: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        if fro < 1e-12 {
            return Err(Error::Degenerate(
                "matrix is a multiple of the identity; nothing remains after removing the trace"
                    .into(),
            ));
        }
        let scale = 1.0 / (fro * std::f64::consts::SQRT_2);
        m.iter_mut().for_each(|x| *x *= scale);
        Ok(Self {
            kind: FeatureKind::Quadratic,
            d,
            k: 2,
            lambdas: Vec::new(),
            directions: Vec::new(),
            matrix: m,
            seed: None,
            warnings: Vec::new(),
        })
    }

    /// Quadratic feature with a symmetric Gaussian matrix drawn from `seed`.
    pub fn random_quadratic(d: usize, seed: u64) -> Result<Self> {
        let mut rng = Streams::new(seed).rng("feature/quadratic", &[]);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let g: f64 = StandardNormal.sample(&mut rng);
                a[i * d + j] = g;
                a[j * d + i] = g;
            }
        }
        let mut spec = Self::quadratic(d, &a)?;
        spec.seed = Some(seed);
        Ok(spec)
    }

    /// The quadratic feature rewritten as an orthogonal decomposition with
    /// `k = 2`: `A = sum_i mu_i w_i w_i^T` gives `lambda_i = sqrt(2d) mu_i`.
    pub fn quadratic_as_ortho(&self) -> Result<Self> {
        if self.kind != FeatureKind::Quadratic {
            return Err(Error::usage("eigen-decomposition applies to quadratic features"));
        }
        let d = self.d;
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &self.matrix));
        let scale = (2.0 * d as f64).sqrt();
        let lambdas = eig.eigenvalues.iter().map(|mu| mu * scale).collect();
        let directions = (0..d)
            .map(|i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        Ok(Self {
            kind: FeatureKind::OrthoDecomp,
            d,
            k: 2,
            lambdas,
            directions,
            matrix: Vec::new(),
            seed: self.seed,
            warnings: Vec::new(),
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of components; `d` for quadratics.
    pub fn components(&self) -> usize {
        match self.kind {
            FeatureKind::Quadratic => self.d,
            _ => self.lambdas.len(),
        }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        match self.kind {
            FeatureKind::OrthoDecomp => {
                let s: f64 = self
                    .lambdas
                    .iter()
                    .zip(&self.directions)
                    .map(|(l, v)| {
                        let t: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
                        l * h_eval(self.k, t)
                    })
                    .sum();
                s / (self.lambdas.len() as f64).sqrt()
            }
            FeatureKind::SparseParity => {
                let s: f64 = self
                    .lambdas
                    .iter()
                    .enumerate()
                    .map(|(i, l)| l * x[i * self.k..(i + 1) * self.k].iter().product::<f64>())
                    .sum();
                s / (self.lambdas.len() as f64).sqrt()
            }
            FeatureKind::Quadratic => {
                let d = self.d;
                let mut s = 0.0;
                for i in 0..d {
                    let row = &self.matrix[i * d..(i + 1) * d];
                    s += x[i] * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
                s
            }
        }
    }

    /// The component polynomials `psi_i` (quadratics have none).
    pub fn component_polys(&self) -> Vec<SparsePoly> {
        let d = self.d;
        match self.kind {
            FeatureKind::OrthoDecomp => {
                let hk = &hermite_monomial_coeffs(self.k)[self.k];
                self.directions
                    .iter()
                    .map(|v| SparsePoly::linear(v).compose_univariate(hk))
                    .collect()
            }
            FeatureKind::SparseParity => (0..self.lambdas.len())
                .map(|i| {
                    let mut e = vec![0u32; d];
                    e[i * self.k..(i + 1) * self.k].iter_mut().for_each(|x| *x = 1);
                    SparsePoly::from_terms(d, [(e, 1.0)]).expect("length d")
                })
                .collect(),
            FeatureKind::Quadratic => Vec::new(),
        }
    }

    /// Exact polynomial form of `p`.
    pub fn poly(&self) -> SparsePoly {
        let d = self.d;
        match self.kind {
            FeatureKind::Quadratic => {
                let mut terms = Vec::new();
                for i in 0..d {
                    for j in i..d {
                        let mut e = vec![0u32; d];
                        e[i] += 1;
                        e[j] += 1;
                        let c = if i == j {
                            self.matrix[i * d + i]
                        } else {
                            2.0 * self.matrix[i * d + j]
                        };
                        terms.push((e, c));
                    }
                }
                SparsePoly::from_terms(d, terms).expect("length d")
            }
            _ => {
                let norm = 1.0 / (self.lambdas.len() as f64).sqrt();
                let mut acc = SparsePoly::zero(d);
                for (l, psi) in self.lambdas.iter().zip(self.component_polys()) {
                    acc = acc.add(&psi.scale(l * norm)).expect("same dimension");
                }
                acc
            }
        }
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut b = KvBlock::new();
        b.set("kind", self.kind.as_str())
            .set("d", self.d)
            .set("k", self.k)
            .set("L", self.components())
            .set("lambdas", fmt_reals(&self.lambdas))
            .set(
                "seed",
                self.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
            );
        for (i, v) in self.directions.iter().enumerate() {
            b.set(&format!("v{i}"), fmt_reals(v));
        }
        if self.kind == FeatureKind::Quadratic {
            for i in 0..self.d {
                b.set(&format!("a{i}"), fmt_reals(&self.matrix[i * self.d..(i + 1) * self.d]));
            }
        }
        b
    }

    pub fn from_kv(b: &KvBlock) -> Result<Self> {
        let kind: FeatureKind = b.require("kind")?.parse()?;
        let d: usize = b.parse_value("d")?.ok_or_else(|| Error::Parse("missing d".into()))?;
        let k: usize = b.parse_value("k")?.ok_or_else(|| Error::Parse("missing k".into()))?;
        let seed = match b.get("seed") {
            None | Some("none") => None,
            Some(s) => Some(
                s.parse::<u64>()
                    .map_err(|_| Error::Parse(format!("bad seed `{s}`")))?,
            ),
        };
        let lambdas = parse_reals(b.get("lambdas").unwrap_or(""))?;
        let mut spec = match kind {
            FeatureKind::Quadratic => {
                let mut a = Vec::with_capacity(d * d);
                for i in 0..d {
                    a.extend(parse_reals(b.require(&format!("a{i}"))?)?);
                }
                let mut s = Self::quadratic(d, &a)?;
                s.seed = seed;
                s
            }
            FeatureKind::SparseParity => Self::sparse_parity(d, k, &lambdas)?,
            FeatureKind::OrthoDecomp => {
                let mut s = Self::ortho_decomp(d, k, &lambdas, None)?;
                s.directions = (0..lambdas.len())
                    .map(|i| parse_reals(b.require(&format!("v{i}"))?))
                    .collect::<Result<_>>()?;
                s.seed = seed;
                s
            }
        };
        // Stored values are already normalized; keep them bit-exact.
        if kind != FeatureKind::Quadratic {
            spec.lambdas = lambdas;
        }
        Ok(spec)
    }
}

/// Univariate link `g(z) = sum_i g_i z^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec {
    coeffs: Vec<f64>,
}

impl LinkSpec {
    pub fn new(coeffs: &[f64]) -> Result<Self> {
        let mut c = coeffs.to_vec();
        while c.len() > 1 && c.last() == Some(&0.0) {
            c.pop();
        }
        if c.len() < 2 {
            return Err(Error::usage("link degree q must be at least 1"));
        }
        if c.iter().any(|x| !x.is_finite() || x.abs() > LINK_COEFF_CAP) {
            return Err(Error::usage(format!(
                "link coefficients must be finite with |g_i| <= {LINK_COEFF_CAP}"
            )));
        }
        Ok(Self { coeffs: c })
    }

    pub fn identity() -> Self {
        Self {
            coeffs: vec![0.0, 1.0],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `s g`; the coefficient cap is not re-applied.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| i as f64 * c)
            .collect()
    }

    pub fn eval_derivative(&self, z: f64) -> f64 {
        self.derivative().iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    pub fn eval_second(&self, z: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * z + (i * (i - 1)) as f64 * c)
    }

    /// Compact identifier used in CSV output, e.g. `0;1;0;1` for `z + z^3`.
    pub fn id(&self) -> String {
        self.coeffs
            .iter()
            .map(|c| format!("{c}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_id(s: &str) -> Result<Self> {
        let c: Vec<f64> = s
            .split([';', ','])
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad link coefficient `{t}`")))
            })
            .collect::<Result<_>>()?;
        Self::new(&c)
    }
}

/// `C_g = E_{z ~ N(0,1)}[g'(z)] = sum_s g_{2s+1} (2s+1)!!`.
pub fn link_mean_derivative(link: &LinkSpec) -> f64 {
    let mut acc = 0.0;
    let mut dfact = 1.0;
    for (i, &g) in link.coeffs.iter().enumerate() {
        if i % 2 == 1 {
            dfact *= i as f64;
            acc += g * dfact;
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CenterMode {
    /// Exact when `d <= 16` and `k q <= 8`, else Monte Carlo.
    Auto,
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterEstimate {
    pub value: f64,
    /// Standard error; zero for exact values.
    pub se: f64,
    pub exact: bool,
}

pub fn exact_mode_feasible(feature: &FeatureSpec, link: &LinkSpec) -> bool {
    feature.d <= EXACT_MAX_D && feature.k * link.degree() <= EXACT_MAX_DEGREE
}

/// `E[p^w]` for `w = 0..=wmax` via Hermite coordinates of `p^j`, `j <= ceil(wmax/2)`:
/// `E[p^w] = <p^{ceil(w/2)}, p^{floor(w/2)}>`.
pub fn exact_power_moments(p: &SparsePoly, wmax: usize) -> Vec<f64> {
    let top = wmax.div_ceil(2);
    let mut pows = vec![HermiteExpansion::of(&SparsePoly::constant(p.dim(), 1.0))];
    let mut cur = SparsePoly::constant(p.dim(), 1.0);
    for _ in 0..top {
        cur = cur.mul(p).expect("same dimension");
        pows.push(HermiteExpansion::of(&cur));
    }
    (0..=wmax)
        .map(|w| pows[w.div_ceil(2)].dot(&pows[w / 2]))
        .collect()
}

/// Term budget for expanding `p^q` in exact second-moment computations.
pub const EXACT_MOMENT_TERMS: f64 = 2e5;

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Whether `E[g(p)^2]` can be computed exactly within the term budget.
pub fn exact_variance_feasible(feature: &FeatureSpec, link: &LinkSpec) -> bool {
    let q = link.degree();
    let deg = feature.k * q;
    let dense = binom(feature.d + deg, deg);
    let sparse = (feature.poly().len() as f64).powi(q as i32);
    feature.d <= EXACT_MAX_D && dense.min(sparse) <= EXACT_MOMENT_TERMS
}

/// `Var(g(p)) = E[h^2]`, exactly when feasible, else by Monte Carlo with
/// the same sample count and stream as centering.
pub fn target_variance(feature: &FeatureSpec, link: &LinkSpec, mode: CenterMode) -> Result<CenterEstimate> {
    let exact = match mode {
        CenterMode::Exact => true,
        CenterMode::Auto => exact_variance_feasible(feature, link),
        CenterMode::MonteCarlo { .. } => false,
    };
    let g = &link.coeffs;
    if exact {
        let mom = exact_power_moments(&feature.poly(), 2 * link.degree());
        let mean: f64 = g.iter().enumerate().map(|(w, c)| c * mom[w]).sum();
        let mut second = 0.0;
        for (i, a) in g.iter().enumerate() {
            for (j, b) in g.iter().enumerate() {
                second += a * b * mom[i + j];
            }
        }
        return Ok(CenterEstimate {
            value: second - mean * mean,
            se: 0.0,
            exact: true,
        });
    }
    let (samples, seed) = match mode {
        CenterMode::MonteCarlo { samples, seed } => (samples, seed),
        _ => (
            DEFAULT_CENTER_SAMPLES,
            Streams::new(feature.seed.unwrap_or(0)).seed("target/variance", &[]),
        ),
    };
    if samples < 2 {
        return Err(Error::usage("Monte Carlo estimation needs at least 2 samples"));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = vec![0.0; feature.d];
    let (mut mean, mut m2) = (0.0, 0.0);
    let mut sq = Vec::with_capacity(samples);
    for i in 0..samples {
        x.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let y = link.eval(feature.eval(&x));
        sq.push(y);
        let delta = y - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (y - mean);
    }
    let n = samples as f64;
    let var = m2 / (n - 1.0);
    let fourth = sq.iter().map(|y| (y - mean).powi(4)).sum::<f64>() / n;
    Ok(CenterEstimate {
        value: var,
        se: ((fourth - var * var).max(0.0) / n).sqrt(),
        exact: false,
    })
}

/// `E[g(p(x))]` for `x ~ N(0, I_d)`.
pub fn center_constant(feature: &FeatureSpec, link: &LinkSpec, mode: CenterMode) -> Result<CenterEstimate> {
    let exact = match mode {
        CenterMode::Exact => {
            if !exact_mode_feasible(feature, link) {
                return Err(Error::Capacity {
                    what: "exact centering (d <= 16, k q <= 8)",
                    limit: EXACT_MAX_DEGREE,
                    requested: feature.k * link.degree(),
                });
            }
            true
        }
        CenterMode::Auto => exact_mode_feasible(feature, link),
        CenterMode::MonteCarlo { .. } => false,
    };
    if exact {
        let mom = exact_power_moments(&feature.poly(), link.degree());
        let value = link.coeffs.iter().zip(&mom).map(|(g, m)| g * m).sum();
        return Ok(CenterEstimate {
            value,
            se: 0.0,
            exact: true,
        });
    }
    let (samples, seed) = match mode {
        CenterMode::MonteCarlo { samples, seed } => (samples, seed),
        _ => (
            DEFAULT_CENTER_SAMPLES,
            Streams::new(feature.seed.unwrap_or(0)).seed("target/center", &[]),
        ),
    };
    if samples < 2 {
        return Err(Error::usage("Monte Carlo centering needs at least 2 samples"));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = vec![0.0; feature.d];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..samples {
        x.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let y = link.eval(feature.eval(&x));
        let delta = y - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (y - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Ok(CenterEstimate {
        value: mean,
        se: (var / samples as f64).sqrt(),
        exact: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub feature: FeatureSpec,
    pub link: LinkSpec,
    pub center: CenterEstimate,
}

impl TargetSpec {
    pub fn new(feature: FeatureSpec, link: LinkSpec) -> Result<Self> {
        Self::with_center_mode(feature, link, CenterMode::Auto)
    }

    pub fn with_center_mode(feature: FeatureSpec, link: LinkSpec, mode: CenterMode) -> Result<Self> {
        let center = center_constant(&feature, &link, mode)?;
        Ok(Self {
            feature,
            link,
            center,
        })
    }

    pub fn d(&self) -> usize {
        self.feature.d
    }

    /// Total degree `r = k q`.
    pub fn degree(&self) -> usize {
        self.feature.k * self.link.degree()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.link.eval(self.feature.eval(x)) - self.center.value
    }

    /// `g(p)` without the centering constant.
    pub fn raw_poly(&self) -> SparsePoly {
        self.feature.poly().compose_univariate(&self.link.coeffs)
    }

    /// Exact polynomial form of the centered target.
    pub fn poly(&self) -> SparsePoly {
        self.raw_poly().add_constant(-self.center.value)
    }

    pub fn exact_feasible(&self) -> bool {
        exact_mode_feasible(&self.feature, &self.link)
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut b = self.feature.to_kv();
        b.set("link", self.link.id())
            .set("center", format!("{:e}", self.center.value))
            .set("center_se", format!("{:e}", self.center.se))
            .set("center_exact", self.center.exact);
        b
    }

    pub fn from_kv(b: &KvBlock) -> Result<Self> {
        let feature = FeatureSpec::from_kv(b)?;
        let link = LinkSpec::parse_id(b.require("link")?)?;
        let center = CenterEstimate {
            value: b.parse_value("center")?.unwrap_or(0.0),
            se: b.parse_value("center_se")?.unwrap_or(0.0),
            exact: b.parse_value("center_exact")?.unwrap_or(false),
        };
        Ok(Self {
            feature,
            link,
            center,
        })
    }
}

/// Gaussian inputs and target values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub d: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.d)
    }
}

/// `n` i.i.d. draws `x ~ N(0, I_d)` labelled by `h(x)`.
pub fn sample_dataset(t: &TargetSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::usage("dataset size n must be at least 1"));
    }
    let d = t.d();
    let mut rng = rng_from_seed(seed);
    let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = x.chunks_exact(d).map(|r| t.eval(r)).collect();
    Ok(Dataset { d, x, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{inner_product, project_degree, project_lt};

    #[test]
    fn ortho_basis_example() {
        let f = FeatureSpec::ortho_decomp(4, 2, &[1.0; 4], None).unwrap();
        let p = f.poly();
        assert!((inner_product(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        let x = [0.3, -1.0, 2.0, 0.5];
        let want: f64 = x.iter().map(|&t| h_eval(2, t)).sum::<f64>() / 2.0;
        assert!((f.eval(&x) - want).abs() < 1e-14);
        assert!((p.eval(&x) - want).abs() < 1e-12);
    }

    #[test]
    fn single_component_is_h2() {
        let f = FeatureSpec::ortho_decomp(1, 2, &[1.0], None).unwrap();
        assert!((f.eval(&[1.7]) - h_eval(2, 1.7)).abs() < 1e-15);
        assert_eq!(f.warnings().len(), 1);
    }

    #[test]
    fn lambdas_are_normalized_and_capped() {
        let f = FeatureSpec::ortho_decomp(3, 3, &[2.0, -2.0, 2.0], Some(5)).unwrap();
        let ss: f64 = f.lambdas().iter().map(|x| x * x).sum();
        assert!((ss - 3.0).abs() < 1e-12);
        // one dominant component among 400 violates the balance cap
        let mut l = vec![1e-3; 400];
        l[0] = 1.0;
        assert!(matches!(
            FeatureSpec::ortho_decomp(400, 2, &l, None),
            Err(Error::Usage(_))
        ));
        assert!(FeatureSpec::ortho_decomp(2, 2, &[1.0; 3], None).is_err());
        assert!(FeatureSpec::ortho_decomp(2, 2, &[0.0, 1.0], None).is_err());
    }

    #[test]
    fn random_directions_are_orthonormal() {
        let f = FeatureSpec::ortho_decomp(6, 2, &[1.0; 4], Some(11)).unwrap();
        let v = f.directions();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_parity_examples() {
        let f = FeatureSpec::sparse_parity(4, 2, &[1.0, 1.0]).unwrap();
        let p = f.poly();
        assert!((inner_product(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        let s = 1.0 / 2f64.sqrt();
        assert!((p.coeff(&[1, 1, 0, 0]) - s).abs() < 1e-15);
        assert!((p.coeff(&[0, 0, 1, 1]) - s).abs() < 1e-15);
        assert!(project_degree(&p, 2).max_coeff_diff(&p) < 1e-14);

        let f = FeatureSpec::sparse_parity(6, 3, &[1.0, -1.0]).unwrap();
        let x = [1.0, 2.0, 3.0, -1.0, 0.5, 2.0];
        assert!((f.eval(&x) - (6.0 + 1.0) * s).abs() < 1e-12);
        assert!(FeatureSpec::sparse_parity(5, 3, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn quadratic_examples() {
        let s = 1.0 / 2f64.sqrt();
        let f = FeatureSpec::quadratic(2, &[s, 0.0, 0.0, -s]).unwrap();
        assert_eq!(f.eval(&[0.0, 0.0]), 0.0);
        let p = f.poly();
        assert!((inner_product(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        assert!((p.coeff(&[2, 0]) - 0.5).abs() < 1e-15);
        assert!((p.coeff(&[0, 2]) + 0.5).abs() < 1e-15);
        assert!(matches!(
            FeatureSpec::quadratic(3, &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(FeatureSpec::quadratic(2, &[1.0, 0.5, 0.0, -1.0]).is_err());
    }

    #[test]
    fn quadratic_matches_its_eigen_decomposition() {
        let q = FeatureSpec::random_quadratic(5, 3).unwrap();
        let o = q.quadratic_as_ortho().unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
            assert!((q.eval(&x) - o.eval(&x)).abs() < 1e-10);
        }
        assert!(q.poly().max_coeff_diff(&o.poly()) < 1e-10);
    }

    #[test]
    fn link_examples() {
        assert_eq!(link_mean_derivative(&LinkSpec::identity()), 1.0);
        assert_eq!(link_mean_derivative(&LinkSpec::new(&[0.0, 0.0, 0.0, 1.0]).unwrap()), 3.0);
        let g = LinkSpec::new(&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        // oracle: E[g'(z)] from exact Gaussian moments of the derivative polynomial
        let oracle: f64 = g
            .derivative()
            .iter()
            .enumerate()
            .map(|(i, c)| c * crate::polyalg::gaussian_moment_1d(i as u32))
            .sum();
        assert_eq!(oracle, 19.0);
        assert_eq!(link_mean_derivative(&g), 19.0);
        assert!(LinkSpec::new(&[3.0]).is_err());
        assert_eq!(g.eval_second(2.0), 6.0 * 2.0 + 20.0 * 8.0);
        assert_eq!(LinkSpec::parse_id(&g.id()).unwrap(), g);
    }

    #[test]
    fn centering_examples() {
        let f = FeatureSpec::ortho_decomp(2, 2, &[1.0, 1.0], None).unwrap();
        let id = center_constant(&f, &LinkSpec::identity(), CenterMode::Auto).unwrap();
        assert!(id.exact && id.value.abs() < 1e-14);
        let sq = center_constant(&f, &LinkSpec::new(&[0.0, 0.0, 1.0]).unwrap(), CenterMode::Auto)
            .unwrap();
        assert!((sq.value - 1.0).abs() < 1e-12);
        // E[p^3] with p = (h2(x1)+h2(x2))/sqrt 2: brute-force via the full product
        let cube = LinkSpec::new(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        let c = center_constant(&f, &cube, CenterMode::Auto).unwrap();
        let oracle = f.poly().pow(3).mean();
        assert!((c.value - oracle).abs() < 1e-12);
        // E[h2^3] = 2 sqrt 2, two components scaled by 2^{-3/2}: total 2.
        assert!((c.value - 2.0).abs() < 1e-12);
        let mc = center_constant(&f, &cube, CenterMode::MonteCarlo { samples: 200_000, seed: 4 })
            .unwrap();
        assert!((mc.value - 2.0).abs() < 4.0 * mc.se);
    }

    #[test]
    fn variance_matches_monte_carlo() {
        let f = FeatureSpec::ortho_decomp(3, 2, &[1.0, 2.0, -1.0], Some(4)).unwrap();
        let g = LinkSpec::new(&[0.0, 1.0, 0.5]).unwrap();
        let exact = target_variance(&f, &g, CenterMode::Auto).unwrap();
        assert!(exact.exact);
        let t = TargetSpec::new(f.clone(), g.clone()).unwrap();
        let h = t.poly();
        let oracle = crate::polyalg::inner_product(&h, &h).unwrap();
        assert!((exact.value - oracle).abs() < 1e-10);
        let mc = target_variance(&f, &g, CenterMode::MonteCarlo { samples: 200_000, seed: 8 }).unwrap();
        assert!((mc.value - exact.value).abs() < 4.0 * mc.se);
    }

    #[test]
    fn target_dual_path_and_purity() {
        let f = FeatureSpec::ortho_decomp(4, 2, &[1.0, -1.0, 1.0, 1.0], Some(9)).unwrap();
        let t = TargetSpec::new(f, LinkSpec::new(&[0.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let poly = t.poly();
        let x = [1.0, 1.0, 1.0, 1.0];
        assert!((poly.eval(&x) - t.eval(&x)).abs() < 1e-10);
        assert!(poly.mean().abs() < 1e-12);
        let p = t.feature.poly();
        assert!(project_degree(&p, 2).max_coeff_diff(&p) < 1e-12);
        assert!(project_lt(&p, 2).is_empty());
    }

    #[test]
    fn spec_round_trips_through_kv() {
        let f = FeatureSpec::ortho_decomp(5, 3, &[1.0, -0.5, 2.0], Some(2)).unwrap();
        let t = TargetSpec::new(f, LinkSpec::new(&[0.0, 1.0, 0.5]).unwrap()).unwrap();
        let text = t.to_kv().to_text();
        let back = TargetSpec::from_kv(&KvBlock::parse(&text).unwrap()).unwrap();
        assert_eq!(back, t);
        let q = FeatureSpec::random_quadratic(3, 1).unwrap();
        let back = FeatureSpec::from_kv(&q.to_kv()).unwrap();
        assert!(back.poly().max_coeff_diff(&q.poly()) < 1e-15);
    }

    #[test]
    fn dataset_is_deterministic() {
        let f = FeatureSpec::sparse_parity(4, 2, &[1.0, 1.0]).unwrap();
        let t = TargetSpec::new(f, LinkSpec::identity()).unwrap();
        let a = sample_dataset(&t, 50, 3).unwrap();
        let b = sample_dataset(&t, 50, 3).unwrap();
        assert_eq!(a, b);
        assert!(sample_dataset(&t, 0, 3).is_err());
        assert_eq!(a.row(2).len(), 4);
    }
}
