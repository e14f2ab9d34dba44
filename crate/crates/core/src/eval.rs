//! Test metrics, the degree-capture identity, a polynomial-kernel ridge
//! baseline, and sample-complexity sweeps.

use crate::network::Network;
use crate::polyalg::{inner_product, HermiteExpansion};
use crate::rng::Streams;
use crate::target::{
    sample_dataset, target_variance, CenterMode, Dataset, FeatureSpec, LinkSpec, TargetSpec,
};
use crate::train::{run, RunRecord, TrainConfig, RUN_RECORD_COLUMNS};
use crate::{par, Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use std::io::Write;

/// Largest `m1` for which the bottleneck is rebuilt as an exact polynomial.
pub const CAPTURE_MAX_M1: usize = 8;
pub const CAPTURE_MAX_D: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub value: f64,
    /// False when either side has zero sample variance; `value` is then 0.
    pub defined: bool,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Correlation {
            value: 0.0,
            defined: false,
        };
    }
    Correlation {
        value: (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0),
        defined: true,
    }
}

/// Fresh Gaussian test points with targets `h(x)` and features `p(x)`.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub data: Dataset,
    pub p: Vec<f64>,
}

impl TestSet {
    pub fn sample(t: &TargetSpec, n: usize, seed: u64) -> Result<Self> {
        if n < 100 {
            return Err(Error::usage("n_test must be at least 100"));
        }
        let data = sample_dataset(t, n, seed)?;
        let p = data.rows().map(|x| t.feature.eval(x)).collect();
        Ok(Self { data, p })
    }

    /// Bottleneck values and network outputs.
    pub fn predict(&self, net: &Network) -> (Vec<f64>, Vec<f64>) {
        let mids = net.forward_mid_batch(&self.data.x);
        let outs = mids.iter().map(|&m| net.forward_from_mid(m)).collect();
        (mids, outs)
    }

    pub fn mse_of(&self, outs: &[f64]) -> Estimate {
        let sq: Vec<f64> = outs
            .iter()
            .zip(&self.data.y)
            .map(|(o, y)| (o - y) * (o - y))
            .collect();
        Estimate::of(&sq)
    }

    pub fn correlation_of(&self, mids: &[f64]) -> Correlation {
        pearson(mids, &self.p)
    }

    pub fn mse(&self, net: &Network) -> Estimate {
        self.mse_of(&self.predict(net).1)
    }

    pub fn correlation(&self, net: &Network) -> Correlation {
        self.correlation_of(&self.predict(net).0)
    }
}

/// Monte Carlo estimate of `||h_theta - h||^2` on `n_test` fresh points.
pub fn test_mse(net: &Network, t: &TargetSpec, n_test: usize, seed: u64) -> Result<Estimate> {
    Ok(TestSet::sample(t, n_test, seed)?.mse(net))
}

/// Pearson correlation between the bottleneck and `p` on fresh points.
pub fn feature_correlation(net: &Network, t: &TargetSpec, n_test: usize, seed: u64) -> Result<Correlation> {
    Ok(TestSet::sample(t, n_test, seed)?.correlation(net))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaptureReport {
    /// `||g - h||^2` from exact Gaussian moments.
    pub lhs: f64,
    /// `||g - P_{<=k} h||^2`.
    pub near: f64,
    /// `||P_{<=k} h - h||^2`.
    pub far: f64,
    pub rel_err: f64,
}

/// Checks `||g - h||^2 = ||g - P_{<=k} h||^2 + ||P_{<=k} h - h||^2` for the
/// bottleneck `g` of degree `k`.
pub fn degree_capture_check(net: &Network, t: &TargetSpec) -> Result<CaptureReport> {
    if net.m1 > CAPTURE_MAX_M1 {
        return Err(Error::Capacity {
            what: "exact bottleneck reconstruction width m1",
            limit: CAPTURE_MAX_M1,
            requested: net.m1,
        });
    }
    if net.d > CAPTURE_MAX_D {
        return Err(Error::Capacity {
            what: "exact bottleneck reconstruction dimension d",
            limit: CAPTURE_MAX_D,
            requested: net.d,
        });
    }
    let k = net.sigma1.degree() as u32;
    let g = net.mid_poly();
    let h = t.poly();
    let diff = g.sub(&h)?;
    let lhs = inner_product(&diff, &diff)?;
    let he = HermiteExpansion::of(&h);
    let ge = HermiteExpansion::of(&g);
    let low = he.filter_degree(|j| j <= k);
    let near = ge.dist_sq(&low);
    let far = he.filter_degree(|j| j > k).norm_sq();
    let rhs = near + far;
    Ok(CaptureReport {
        lhs,
        near,
        far,
        rel_err: (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE),
    })
}

/// `(1 + x . x' / d)^degree` written as an explicit weighted monomial map.
pub struct PolyKernelFeatures {
    exps: Vec<Vec<u32>>,
    weights: Vec<f64>,
}

impl PolyKernelFeatures {
    pub fn new(d: usize, degree: usize) -> Self {
        let mut exps = Vec::new();
        let mut weights = Vec::new();
        let fact = |n: u32| (1..=n).map(|i| i as f64).product::<f64>();
        for j in 0..=degree as u32 {
            for alpha in crate::polyalg::multi_indices(d, j) {
                let e = alpha.exponents().to_vec();
                let multinom = fact(j) / e.iter().map(|&a| fact(a)).product::<f64>();
                let binom = fact(degree as u32) / (fact(j) * fact(degree as u32 - j));
                weights.push((binom * multinom / (d as f64).powi(j as i32)).sqrt());
                exps.push(e);
            }
        }
        Self { exps, weights }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn map(&self, x: &[f64]) -> Vec<f64> {
        let maxe = self.exps.iter().flatten().copied().max().unwrap_or(0) as usize;
        let pows: Vec<Vec<f64>> = x
            .iter()
            .map(|&xi| (0..=maxe).scan(1.0, |acc, _| {
                let v = *acc;
                *acc *= xi;
                Some(v)
            }).collect())
            .collect();
        self.exps
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| {
                w * e
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| pows[i][a as usize])
                    .product::<f64>()
            })
            .collect()
    }
}

pub fn poly_kernel(x: &[f64], y: &[f64], degree: usize) -> f64 {
    let d = x.len() as f64;
    (1.0 + x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / d).powi(degree as i32)
}

/// Default ridge grid `{1e-6, 1e-5, ..., 1e1}`.
pub fn default_ridge_grid() -> Vec<f64> {
    (-6..=1).map(|e| 10f64.powi(e)).collect()
}

pub const RIDGE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelReport {
    pub degree: usize,
    pub best_ridge: f64,
    /// `(ridge, gcv)` pairs over the grid.
    pub gcv: Vec<(f64, f64)>,
    pub test_mse: Estimate,
    pub features: usize,
    /// Solved in the `n x n` kernel form instead of the feature form.
    pub dual: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelForm {
    /// Feature form when the feature count is at most `n`.
    Auto,
    Primal,
    Dual,
}

/// Kernel ridge regression `(K + n lambda I) alpha = y` with the inner-product
/// kernel `(1 + x . x'/d)^degree`; `lambda` minimizes GCV on the training set.
pub fn kernel_baseline(
    t: &TargetSpec,
    train: &Dataset,
    degree: usize,
    ridge_grid: &[f64],
    n_test: usize,
    seed: u64,
) -> Result<KernelReport> {
    kernel_baseline_in(t, train, degree, ridge_grid, n_test, seed, KernelForm::Auto)
}

pub fn kernel_baseline_in(
    t: &TargetSpec,
    train: &Dataset,
    degree: usize,
    ridge_grid: &[f64],
    n_test: usize,
    seed: u64,
    form: KernelForm,
) -> Result<KernelReport> {
    if ridge_grid.is_empty() {
        return Err(Error::usage("ridge grid must not be empty"));
    }
    let n = train.len();
    let nf = n as f64;
    let feats = PolyKernelFeatures::new(train.d, degree);
    let dual = match form {
        KernelForm::Auto => feats.len() > n,
        KernelForm::Primal => false,
        KernelForm::Dual => true,
    };
    let y = DVector::from_column_slice(&train.y);
    let test = TestSet::sample(t, n_test, seed)?;
    let mut gcv = Vec::with_capacity(ridge_grid.len());
    let pick = |gcv: &[(f64, f64)]| {
        gcv.iter()
            .copied()
            .filter(|(_, g)| g.is_finite())
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(r, _)| r)
            .unwrap_or(ridge_grid[0])
    };
    let preds: Vec<f64>;
    let best;
    if !dual {
        let phi = DMatrix::from_fn(n, feats.len(), |_, _| 0.0);
        let mut phi = phi;
        for (i, x) in train.rows().enumerate() {
            for (j, v) in feats.map(x).into_iter().enumerate() {
                phi[(i, j)] = v;
            }
        }
        let eig = SymmetricEigen::new(phi.tr_mul(&phi));
        let qty = eig.eigenvectors.tr_mul(&phi.tr_mul(&y));
        let solve = |lam: f64| -> DVector<f64> {
            let shift = nf * lam.max(RIDGE_FLOOR);
            let scaled = DVector::from_fn(qty.len(), |i, _| {
                qty[i] / (eig.eigenvalues[i].max(0.0) + shift)
            });
            &eig.eigenvectors * scaled
        };
        for &lam in ridge_grid {
            let shift = nf * lam.max(RIDGE_FLOOR);
            let w = solve(lam);
            let resid = (&y - &phi * &w).norm_squared();
            let tr: f64 = eig.eigenvalues.iter().map(|s| s.max(0.0) / (s.max(0.0) + shift)).sum();
            gcv.push((lam, nf * resid / ((nf - tr) * (nf - tr))));
        }
        best = pick(&gcv);
        let w = solve(best);
        preds = test
            .data
            .rows()
            .map(|x| feats.map(x).iter().zip(w.iter()).map(|(a, b)| a * b).sum())
            .collect();
    } else {
        let k = DMatrix::from_fn(n, n, |i, j| poly_kernel(train.row(i), train.row(j), degree));
        let eig = SymmetricEigen::new(k);
        let uty = eig.eigenvectors.tr_mul(&y);
        let solve = |lam: f64| -> DVector<f64> {
            let shift = nf * lam.max(RIDGE_FLOOR);
            let scaled = DVector::from_fn(n, |i, _| uty[i] / (eig.eigenvalues[i].max(0.0) + shift));
            &eig.eigenvectors * scaled
        };
        for &lam in ridge_grid {
            let shift = nf * lam.max(RIDGE_FLOOR);
            // residual of the smoother H = K (K + shift)^{-1}
            let resid: f64 = (0..n)
                .map(|i| {
                    let e = eig.eigenvalues[i].max(0.0);
                    (uty[i] * shift / (e + shift)).powi(2)
                })
                .sum();
            let tr: f64 = eig.eigenvalues.iter().map(|s| s.max(0.0) / (s.max(0.0) + shift)).sum();
            gcv.push((lam, nf * resid / ((nf - tr) * (nf - tr))));
        }
        best = pick(&gcv);
        let alpha = solve(best);
        preds = test
            .data
            .rows()
            .map(|x| {
                (0..n)
                    .map(|i| alpha[i] * poly_kernel(x, train.row(i), degree))
                    .sum()
            })
            .collect();
    }
    Ok(KernelReport {
        degree,
        best_ridge: best,
        gcv,
        test_mse: test.mse_of(&preds),
        features: feats.len(),
        dual,
    })
}

/// How a feature is built for each sweep cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// `p = d^{-1/2} sum_i eps_i h_k(x_i)` with random signs `eps_i`.
    SignedCoordinates,
    /// Random orthonormal directions, `lambda_i = 1`, `L = d`.
    Ortho,
    /// Random symmetric matrix.
    Quadratic,
    /// Disjoint parities, `L = floor(d / k)`.
    Parity,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" | "signed_coordinates" => Ok(Family::SignedCoordinates),
            "ortho" => Ok(Family::Ortho),
            "quadratic" | "quad" => Ok(Family::Quadratic),
            "parity" => Ok(Family::Parity),
            other => Err(Error::usage(format!("unknown sweep family `{other}`"))),
        }
    }
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::SignedCoordinates => "signed",
            Family::Ortho => "ortho",
            Family::Quadratic => "quadratic",
            Family::Parity => "parity",
        }
    }
}

/// Feature family, degree and link; `normalize` rescales the link so that
/// `E[h^2] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetRecipe {
    pub family: Family,
    pub k: usize,
    pub link: Vec<f64>,
    pub normalize: bool,
}

impl TargetRecipe {
    pub fn build(&self, d: usize, seed: u64) -> Result<TargetSpec> {
        let streams = Streams::new(seed);
        let feature = match self.family {
            Family::SignedCoordinates => {
                let mut rng = streams.rng("recipe/signs", &[]);
                let signs: Vec<f64> = (0..d)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                FeatureSpec::ortho_decomp(d, self.k, &signs, None)?
            }
            Family::Ortho => {
                FeatureSpec::ortho_decomp(d, self.k, &vec![1.0; d], Some(streams.seed("recipe/ortho", &[])))?
            }
            Family::Quadratic => FeatureSpec::random_quadratic(d, streams.seed("recipe/quadratic", &[]))?,
            Family::Parity => FeatureSpec::sparse_parity(d, self.k, &vec![1.0; (d / self.k).max(1)])?,
        };
        let mut link = LinkSpec::new(&self.link)?;
        if self.normalize {
            let var = target_variance(&feature, &link, CenterMode::Auto)?;
            if !(var.value > 0.0) {
                return Err(Error::Degenerate("target has zero variance".into()));
            }
            link = link.scaled(1.0 / var.value.sqrt());
        }
        TargetSpec::new(feature, link)
    }
}

/// Sample size given directly or as `mult * d^exp`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleSize {
    Absolute(usize),
    Power { mult: f64, exp: f64 },
}

impl SampleSize {
    pub fn resolve(&self, d: usize) -> usize {
        match *self {
            SampleSize::Absolute(n) => n,
            SampleSize::Power { mult, exp } => (mult * (d as f64).powf(exp)).round().max(1.0) as usize,
        }
    }
}

impl std::str::FromStr for SampleSize {
    type Err = Error;

    /// `5000`, or `4*d^3`, `d^3/16`, `0.5*d^2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(n) = s.parse::<usize>() {
            return Ok(SampleSize::Absolute(n));
        }
        let bad = || Error::Parse(format!("bad sample size `{s}`"));
        let (body, div) = match s.split_once('/') {
            Some((b, q)) => (b, q.trim().parse::<f64>().map_err(|_| bad())?),
            None => (s, 1.0),
        };
        let (mult, pow) = match body.split_once('*') {
            Some((m, p)) => (m.trim().parse::<f64>().map_err(|_| bad())?, p.trim()),
            None => (1.0, body.trim()),
        };
        let exp = pow
            .strip_prefix("d^")
            .ok_or_else(bad)?
            .parse::<f64>()
            .map_err(|_| bad())?;
        Ok(SampleSize::Power {
            mult: mult / div,
            exp,
        })
    }
}

/// Rule for the inner width of each cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Width {
    Fixed(usize),
    Power(f64),
}

impl Width {
    pub fn resolve(&self, d: usize) -> usize {
        match *self {
            Width::Fixed(m) => m,
            Width::Power(e) => (d as f64).powf(e).round().max(1.0) as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub dims: Vec<usize>,
    pub sizes: Vec<SampleSize>,
    pub seeds: Vec<u64>,
    pub recipe: TargetRecipe,
    pub base: TrainConfig,
    pub m1: Width,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub run_id: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub m1: usize,
    pub test_mse: f64,
    pub test_mse_se: f64,
    pub feat_corr: f64,
    pub error: Option<String>,
}

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "run_id", "mode", "d", "n", "seed", "m1", "status", "test_mse", "test_mse_se", "feat_corr",
];

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub summary: CellSummary,
    pub records: Vec<RunRecord>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.sizes.is_empty() || self.seeds.is_empty() {
            return Err(Error::usage("sweep grids must be non-empty"));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &d in &self.dims {
            for sz in &self.sizes {
                for &seed in &self.seeds {
                    out.push(Cell {
                        index: out.len(),
                        d,
                        n: sz.resolve(d),
                        seed,
                    });
                }
            }
        }
        out
    }

    /// The target of a cell depends on `(master, d, seed)` only, so cells
    /// that differ in `n` share one target.
    pub fn target_seed(&self, cell: &Cell) -> u64 {
        Streams::new(self.master_seed).seed("sweep/target", &[cell.d as u64, cell.seed])
    }

    pub fn train_seed(&self, cell: &Cell) -> u64 {
        Streams::new(self.master_seed).seed("sweep/train", &[cell.d as u64, cell.n as u64, cell.seed])
    }

    pub fn cell_config(&self, cell: &Cell) -> TrainConfig {
        let mut cfg = self.base.clone();
        cfg.n = cell.n;
        cfg.seed = self.train_seed(cell);
        let m1 = self.m1.resolve(cell.d);
        cfg.set_m1(cell.d, self.recipe.k, m1);
        cfg
    }

    pub fn run_cell(&self, cell: &Cell) -> CellResult {
        let cfg = self.cell_config(cell);
        let outcome = self
            .recipe
            .build(cell.d, self.target_seed(cell))
            .and_then(|t| run(&t, &cfg).map(|o| (t, o)));
        let mut summary = CellSummary {
            run_id: format!("cell{}-d{}-n{}-s{}", cell.index, cell.d, cell.n, cell.seed),
            d: cell.d,
            n: cell.n,
            seed: cell.seed,
            m1: cfg.m1,
            test_mse: f64::NAN,
            test_mse_se: f64::NAN,
            feat_corr: f64::NAN,
            error: None,
        };
        match outcome {
            Ok((t, out)) => {
                let test = TestSet::sample(&t, cfg.n_test, out.test_seed);
                if let Ok(test) = test {
                    let (mids, outs) = test.predict(&out.net);
                    let mse = test.mse_of(&outs);
                    summary.test_mse = mse.mean;
                    summary.test_mse_se = mse.se;
                    summary.feat_corr = test.correlation_of(&mids).value;
                }
                let mut records = out.records;
                for r in &mut records {
                    r.run_id = summary.run_id.clone();
                }
                CellResult {
                    cell: cell.clone(),
                    summary,
                    records,
                }
            }
            Err(e) => {
                summary.error = Some(e.to_string());
                CellResult {
                    cell: cell.clone(),
                    summary,
                    records: Vec::new(),
                }
            }
        }
    }
}

/// Runs every cell (concurrently when enabled) and returns results in cell
/// order; failures are kept as error rows.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<CellResult>> {
    plan.validate()?;
    let cells = plan.cells();
    Ok(par::map(&cells, |c| plan.run_cell(c)))
}

pub fn write_summary<W: Write>(w: W, mode: &str, results: &[CellSummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = SUMMARY_COLUMNS.to_vec();
    header.push("error");
    out.write_record(&header)?;
    for s in results {
        out.write_record([
            s.run_id.clone(),
            mode.to_string(),
            s.d.to_string(),
            s.n.to_string(),
            s.seed.to_string(),
            s.m1.to_string(),
            if s.error.is_some() { "failed" } else { "ok" }.to_string(),
            format!("{:e}", s.test_mse),
            format!("{:e}", s.test_mse_se),
            format!("{:e}", s.feat_corr),
            s.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cell_records<W: Write>(w: W, results: &[CellResult], header: bool) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    if header {
        out.write_record(RUN_RECORD_COLUMNS)?;
    }
    for r in results {
        for rec in &r.records {
            out.write_record(rec.fields())?;
        }
    }
    out.flush()?;
    Ok(())
}
