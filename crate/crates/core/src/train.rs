//! Two-stage layerwise gradient descent and joint Adam training.
//!
//! Layerwise training fits `u` on `D1` with `c = 0` (the network is then
//! linear in `u`), and afterwards `c` on an independent `D2` with `u`
//! frozen. Each stage minimizes a strongly convex quadratic
//! `w^T G w - 2 r^T w + y^T y / n + (xi / 2) ||w||^2` with `G = Phi^T Phi / n`,
//! so both stages run on the `m x m` sufficient statistics instead of the
//! raw samples.

use crate::eval::TestSet;
use crate::kv::KvBlock;
use crate::network::{blocks_of, ActivationSpec, BiasDistribution, Network, GRAD_BLOCK};
use crate::rng::Streams;
use crate::target::{sample_dataset, Dataset, TargetSpec};
use crate::kv::{fmt_reals, parse_reals};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use std::io::Write;

pub const DEFAULT_M1_BUDGET: usize = 200_000;
pub const DEFAULT_N_BUDGET: usize = 1_000_000;
pub const DEFAULT_STEP_CAP: usize = 1_000_000;
pub const POWER_ITERATIONS: usize = 20;
/// Adam epochs whose loss exceeds this multiple of the initial loss abort the run.
pub const ADAM_DIVERGENCE: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Layerwise,
    JointAdam,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Layerwise => "layerwise",
            Mode::JointAdam => "joint_adam",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layerwise" => Ok(Mode::Layerwise),
            "joint_adam" | "joint" | "adam" => Ok(Mode::JointAdam),
            other => Err(Error::usage(format!("unknown training mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Mini-batch size; `0` means full batch.
    pub batch: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 2000,
            batch: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub alpha: f64,
    /// Samples per stage (layerwise) or in total (joint).
    pub n: usize,
    pub n_test: usize,
    pub m1: usize,
    pub m2: usize,
    /// Step sizes; `None` selects `1 / (lambda_max + xi)` from the data.
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub xi1: f64,
    pub xi2: f64,
    /// Step caps for the two stages.
    pub t1: usize,
    pub t2: usize,
    pub stop_tol: f64,
    pub seed: u64,
    pub sigma1: Vec<f64>,
    pub bias_dof: f64,
    pub adam: AdamConfig,
    /// Extra logging stride on top of powers of two; `0` disables it.
    pub log_every: usize,
    /// Record wall-clock time; off by default so reruns are byte-identical.
    pub timing: bool,
    /// Solve each stage by its normal equations instead of descent.
    pub direct: bool,
    pub warnings: Vec<String>,
}

fn ceil_pow(d: usize, e: f64) -> usize {
    let v = (d as f64).powf(e);
    let r = v.round();
    // exact integer powers must not round up
    if (v - r).abs() < 1e-9 * v.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// Defaults from the main theorem: `m2 = d^alpha`, `m1 = d^{k+alpha}`,
/// `n = d^{k+3 alpha}`, `xi1 = 2 m1 / d^{k+alpha}`, `xi2 = 2`.
pub fn default_hparams(d: usize, k: usize, alpha: f64) -> Result<TrainConfig> {
    if d < 2 || k < 1 {
        return Err(Error::usage("default hyperparameters need d >= 2 and k >= 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut warnings = Vec::new();
    let m1_full = ceil_pow(d, k as f64 + alpha);
    let m1 = if m1_full > DEFAULT_M1_BUDGET {
        warnings.push(format!(
            "m1 = d^(k+alpha) = {m1_full} exceeds the budget; capped at {DEFAULT_M1_BUDGET}"
        ));
        DEFAULT_M1_BUDGET
    } else {
        m1_full
    };
    let n_full = ceil_pow(d, k as f64 + 3.0 * alpha);
    let n = if n_full > DEFAULT_N_BUDGET {
        warnings.push(format!(
            "n = d^(k+3 alpha) = {n_full} exceeds the budget; capped at {DEFAULT_N_BUDGET}"
        ));
        DEFAULT_N_BUDGET
    } else {
        n_full
    };
    let mut sigma1 = vec![0.0; k + 1];
    sigma1[k] = 1.0;
    let mut cfg = TrainConfig {
        mode: Mode::Layerwise,
        alpha,
        n,
        n_test: 10_000,
        m1,
        m2: ceil_pow(d, alpha),
        eta1: None,
        eta2: None,
        xi1: 0.0,
        xi2: 2.0,
        t1: DEFAULT_STEP_CAP,
        t2: DEFAULT_STEP_CAP,
        stop_tol: 1e-10,
        seed: 0,
        sigma1,
        bias_dof: 9.0,
        adam: AdamConfig::default(),
        log_every: 0,
        timing: false,
        direct: false,
        warnings,
    };
    cfg.set_m1(d, k, m1);
    Ok(cfg)
}

impl TrainConfig {
    /// Sets `m1` and the matching `xi1 = 2 m1 / d^{k+alpha}`.
    pub fn set_m1(&mut self, d: usize, k: usize, m1: usize) {
        self.m1 = m1;
        self.xi1 = 2.0 * m1 as f64 / (d as f64).powf(k as f64 + self.alpha);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::usage(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.n == 0 || self.m1 == 0 || self.m2 == 0 {
            return bad("n, m1 and m2 must be positive");
        }
        if self.n_test < 100 {
            return bad("n_test must be at least 100");
        }
        for eta in [self.eta1, self.eta2].into_iter().flatten() {
            if !(eta > 0.0) {
                return bad("step sizes must be positive");
            }
        }
        if !(self.xi1 >= 0.0 && self.xi2 >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if !(self.stop_tol >= 0.0) {
            return bad("stop_tol must be non-negative");
        }
        let a = &self.adam;
        if !(a.lr >= 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("invalid Adam hyperparameters");
        }
        BiasDistribution::student_t(self.bias_dof)?;
        ActivationSpec::new(&self.sigma1)?;
        Ok(())
    }

    pub fn to_kv(&self) -> KvBlock {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_else(|| "auto".into());
        let mut b = KvBlock::new();
        b.set("mode", self.mode.as_str())
            .set("alpha", self.alpha)
            .set("n", self.n)
            .set("n_test", self.n_test)
            .set("m1", self.m1)
            .set("m2", self.m2)
            .set("eta1", opt(self.eta1))
            .set("eta2", opt(self.eta2))
            .set("xi1", format!("{:e}", self.xi1))
            .set("xi2", format!("{:e}", self.xi2))
            .set("t1", self.t1)
            .set("t2", self.t2)
            .set("stop_tol", format!("{:e}", self.stop_tol))
            .set("seed", self.seed)
            .set("sigma1", fmt_reals(&self.sigma1))
            .set("bias_dof", self.bias_dof)
            .set("adam_lr", format!("{:e}", self.adam.lr))
            .set("adam_beta1", self.adam.beta1)
            .set("adam_beta2", self.adam.beta2)
            .set("adam_eps", format!("{:e}", self.adam.eps))
            .set("adam_epochs", self.adam.epochs)
            .set("adam_batch", self.adam.batch)
            .set("log_every", self.log_every)
            .set("timing", self.timing)
            .set("direct", self.direct);
        b
    }

    /// Overrides fields of `self` with any keys present in `b`.
    pub fn apply_kv(&mut self, b: &KvBlock) -> Result<()> {
        fn set<T: std::str::FromStr>(b: &KvBlock, k: &str, slot: &mut T) -> Result<()> {
            if let Some(v) = b.parse_value(k)? {
                *slot = v;
            }
            Ok(())
        }
        fn eta(b: &KvBlock, k: &str, slot: &mut Option<f64>) -> Result<()> {
            match b.get(k) {
                None => {}
                Some("auto") => *slot = None,
                Some(_) => *slot = b.parse_value(k)?,
            }
            Ok(())
        }
        if let Some(m) = b.get("mode") {
            self.mode = m.parse()?;
        }
        set(b, "alpha", &mut self.alpha)?;
        set(b, "n", &mut self.n)?;
        set(b, "n_test", &mut self.n_test)?;
        set(b, "m1", &mut self.m1)?;
        set(b, "m2", &mut self.m2)?;
        eta(b, "eta1", &mut self.eta1)?;
        eta(b, "eta2", &mut self.eta2)?;
        set(b, "xi1", &mut self.xi1)?;
        set(b, "xi2", &mut self.xi2)?;
        set(b, "t1", &mut self.t1)?;
        set(b, "t2", &mut self.t2)?;
        set(b, "stop_tol", &mut self.stop_tol)?;
        set(b, "seed", &mut self.seed)?;
        if let Some(s) = b.get("sigma1") {
            self.sigma1 = parse_reals(s)?;
        }
        set(b, "bias_dof", &mut self.bias_dof)?;
        set(b, "adam_lr", &mut self.adam.lr)?;
        set(b, "adam_beta1", &mut self.adam.beta1)?;
        set(b, "adam_beta2", &mut self.adam.beta2)?;
        set(b, "adam_eps", &mut self.adam.eps)?;
        set(b, "adam_epochs", &mut self.adam.epochs)?;
        set(b, "adam_batch", &mut self.adam.batch)?;
        set(b, "log_every", &mut self.log_every)?;
        set(b, "timing", &mut self.timing)?;
        set(b, "direct", &mut self.direct)?;
        Ok(())
    }
}

/// The quadratic objective of one layerwise stage.
#[derive(Clone, Debug)]
pub struct StageProblem {
    /// `Phi^T Phi / n`.
    pub gram: DMatrix<f64>,
    /// `Phi^T r / n`.
    pub rhs: DVector<f64>,
    /// `r^T r / n`.
    pub rr: f64,
    pub n: usize,
}

impl StageProblem {
    /// Accumulates the statistics block by block in index order.
    pub fn accumulate(
        m: usize,
        n: usize,
        mut block: impl FnMut(usize, usize) -> (DMatrix<f64>, Vec<f64>),
    ) -> Self {
        let mut gram = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        let mut rr = 0.0;
        for (lo, hi) in blocks_of(n, GRAD_BLOCK) {
            let (phi, r) = block(lo, hi);
            let r = DVector::from_vec(r);
            gram += phi.tr_mul(&phi);
            rhs += phi.tr_mul(&r);
            rr += r.norm_squared();
        }
        let inv = 1.0 / n as f64;
        Self {
            gram: gram * inv,
            rhs: rhs * inv,
            rr: rr * inv,
            n,
        }
    }

    /// Stage 1: features `sigma1(V x + s)`, targets `y`.
    pub fn stage1(net: &Network, data: &Dataset) -> Self {
        let d = net.d;
        Self::accumulate(net.m1, data.len(), |lo, hi| {
            (
                net.mid_feature_matrix(&data.x[lo * d..hi * d]),
                data.y[lo..hi].to_vec(),
            )
        })
    }

    /// Stage 2: features `ReLU(a g(x) + b)`, targets `y - g(x)`.
    pub fn stage2(net: &Network, data: &Dataset) -> Self {
        let d = net.d;
        Self::accumulate(net.m2, data.len(), |lo, hi| {
            let mids = net.forward_mid_batch(&data.x[lo * d..hi * d]);
            let psi = DMatrix::from_fn(hi - lo, net.m2, |i, j| {
                (net.a[j] * mids[i] + net.b[j]).max(0.0)
            });
            let r = mids.iter().zip(&data.y[lo..hi]).map(|(m, y)| y - m).collect();
            (psi, r)
        })
    }

    /// Unregularized empirical loss `(1/n) ||Phi w - r||^2`.
    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        let gw = &self.gram * w;
        w.dot(&gw) - 2.0 * self.rhs.dot(w) + self.rr
    }

    pub fn reg_loss(&self, w: &DVector<f64>, xi: f64) -> f64 {
        self.loss(w) + 0.5 * xi * w.norm_squared()
    }

    /// Largest eigenvalue of the loss Hessian `2 G` by power iteration.
    pub fn lambda_max(&self, iters: usize) -> f64 {
        let m = self.gram.nrows();
        let mut x = DVector::from_element(m, 1.0 / (m as f64).sqrt());
        let mut lam = 0.0;
        for _ in 0..iters {
            let y = &self.gram * &x;
            let norm = y.norm();
            if norm == 0.0 {
                return 0.0;
            }
            lam = x.dot(&y);
            x = y / norm;
        }
        let y = &self.gram * &x;
        2.0 * lam.max(x.dot(&y))
    }

    /// Minimizer of the regularized objective: `(G + xi/2 I) w = r`.
    pub fn solve_direct(&self, xi: f64) -> Result<DVector<f64>> {
        let m = self.gram.nrows();
        let a = &self.gram + DMatrix::identity(m, m) * (0.5 * xi);
        a.cholesky()
            .map(|c| c.solve(&self.rhs))
            .ok_or_else(|| Error::Degenerate("stage system is not positive definite".into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: &'static str,
    pub eta: f64,
    pub lambda_max: f64,
    pub xi: f64,
    pub steps: usize,
    pub converged: bool,
    /// Regularized loss before each step and after the last one.
    pub trace: Vec<f64>,
    pub final_train_loss: f64,
    /// Steps whose regularized loss rose by more than rounding slack.
    pub monotone_violations: usize,
}

fn is_logged(step: usize, every: usize) -> bool {
    step == 0 || step.is_power_of_two() || (every > 0 && step % every == 0)
}

/// Gradient descent on `problem` from `w0`; `log(step, w, reg, train)` is
/// called at logged steps and once at the end.
pub fn descend(
    stage: &'static str,
    problem: &StageProblem,
    w0: DVector<f64>,
    eta: Option<f64>,
    xi: f64,
    cap: usize,
    stop_tol: f64,
    log_every: usize,
    mut log: impl FnMut(usize, &DVector<f64>, f64, f64),
) -> Result<(DVector<f64>, StageReport)> {
    let lambda_max = problem.lambda_max(POWER_ITERATIONS);
    let eta = eta.unwrap_or(1.0 / (lambda_max + xi).max(f64::MIN_POSITIVE));
    let mut w = w0;
    let mut gw = &problem.gram * &w;
    let mut loss = w.dot(&gw) - 2.0 * problem.rhs.dot(&w) + problem.rr;
    let mut reg = loss + 0.5 * xi * w.norm_squared();
    let initial = reg;
    let mut trace = vec![reg];
    let mut violations = 0;
    let mut converged = false;
    let mut step = 0;
    while step < cap {
        if is_logged(step, log_every) {
            log(step, &w, reg, loss);
        }
        // w <- w - eta (2 (G w - r) + xi w)
        let grad = (&gw - &problem.rhs) * 2.0 + &w * xi;
        w -= grad * eta;
        step += 1;
        gw = &problem.gram * &w;
        loss = w.dot(&gw) - 2.0 * problem.rhs.dot(&w) + problem.rr;
        let next = loss + 0.5 * xi * w.norm_squared();
        if !next.is_finite() || next > 10.0 * initial.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence {
                stage,
                loss: next,
                initial,
            });
        }
        if next > reg + 1e-12 * reg.abs().max(1.0) {
            violations += 1;
        }
        let change = (reg - next).abs() / reg.abs().max(f64::MIN_POSITIVE);
        reg = next;
        trace.push(reg);
        if change < stop_tol {
            converged = true;
            break;
        }
    }
    log(step, &w, reg, loss);
    Ok((
        w,
        StageReport {
            stage,
            eta,
            lambda_max,
            xi,
            steps: step,
            converged,
            trace,
            final_train_loss: loss,
            monotone_violations: violations,
        },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub mode: &'static str,
    pub d: usize,
    pub k: usize,
    pub q: usize,
    pub l: usize,
    pub feature_kind: &'static str,
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub alpha: f64,
    pub seed: u64,
    pub stage: &'static str,
    pub step: usize,
    pub reg_train_loss: f64,
    pub train_loss: f64,
    pub test_mse: f64,
    pub feat_corr: f64,
    pub wall_ms: u64,
}

pub const RUN_RECORD_COLUMNS: [&str; 19] = [
    "run_id",
    "mode",
    "d",
    "k",
    "q",
    "L",
    "feature_kind",
    "n",
    "m1",
    "m2",
    "alpha",
    "seed",
    "stage",
    "step",
    "reg_train_loss",
    "train_loss",
    "test_mse",
    "feat_corr",
    "wall_ms",
];

impl RunRecord {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.mode.to_string(),
            self.d.to_string(),
            self.k.to_string(),
            self.q.to_string(),
            self.l.to_string(),
            self.feature_kind.to_string(),
            self.n.to_string(),
            self.m1.to_string(),
            self.m2.to_string(),
            self.alpha.to_string(),
            self.seed.to_string(),
            self.stage.to_string(),
            self.step.to_string(),
            format!("{:e}", self.reg_train_loss),
            format!("{:e}", self.train_loss),
            format!("{:e}", self.test_mse),
            format!("{:e}", self.feat_corr),
            self.wall_ms.to_string(),
        ]
    }
}

/// Writes `# key=value` lines for the specs followed by the CSV table.
pub fn write_records<W: Write>(
    mut w: W,
    t: &TargetSpec,
    cfg: &TrainConfig,
    records: &[RunRecord],
) -> Result<()> {
    for (k, v) in t.to_kv().iter() {
        writeln!(w, "# target.{k}={v}")?;
    }
    for (k, v) in cfg.to_kv().iter() {
        writeln!(w, "# train.{k}={v}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RUN_RECORD_COLUMNS)?;
    for r in records {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub net: Network,
    pub records: Vec<RunRecord>,
    pub stages: Vec<StageReport>,
    pub d1_seed: u64,
    pub d2_seed: u64,
    pub test_seed: u64,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn last(&self) -> &RunRecord {
        self.records.last().expect("every run logs at least once")
    }
}

struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
    enabled: bool,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
            enabled,
        }
    }

    fn ms(&self) -> u64 {
        if !self.enabled {
            return 0;
        }
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_millis() as u64
        }
        #[cfg(target_arch = "wasm32")]
        {
            0
        }
    }
}

/// Seeds of the independent streams used by one run.
pub struct RunSeeds {
    pub init: u64,
    pub d1: u64,
    pub d2: u64,
    pub test: u64,
    pub shuffle: u64,
}

impl RunSeeds {
    pub fn new(master: u64) -> Self {
        let s = Streams::new(master);
        Self {
            init: s.seed("init", &[]),
            d1: s.seed("data/D1", &[]),
            d2: s.seed("data/D2", &[]),
            test: s.seed("data/test", &[]),
            shuffle: s.seed("adam/shuffle", &[]),
        }
    }
}

fn init_network(t: &TargetSpec, cfg: &TrainConfig, seeds: &RunSeeds) -> Result<Network> {
    cfg.validate()?;
    Network::init(
        t.d(),
        cfg.m1,
        cfg.m2,
        seeds.init,
        ActivationSpec::new(&cfg.sigma1)?,
        BiasDistribution::student_t(cfg.bias_dof)?,
    )
}

/// The initial network `run` would start from for `cfg.seed`.
pub fn init_network_for(t: &TargetSpec, cfg: &TrainConfig) -> Result<Network> {
    init_network(t, cfg, &RunSeeds::new(cfg.seed))
}

struct Recorder<'a> {
    t: &'a TargetSpec,
    cfg: &'a TrainConfig,
    run_id: String,
    test: TestSet,
    clock: Clock,
    records: Vec<RunRecord>,
}

impl<'a> Recorder<'a> {
    fn new(t: &'a TargetSpec, cfg: &'a TrainConfig, test_seed: u64) -> Result<Self> {
        Ok(Self {
            t,
            cfg,
            run_id: run_id(t, cfg),
            test: TestSet::sample(t, cfg.n_test, test_seed)?,
            clock: Clock::new(cfg.timing),
            records: Vec::new(),
        })
    }

    fn push(&mut self, net: &Network, stage: &'static str, step: usize, reg: f64, train: f64) {
        let preds = self.test.predict(net);
        let t = self.t;
        self.records.push(RunRecord {
            run_id: self.run_id.clone(),
            mode: self.cfg.mode.as_str(),
            d: t.d(),
            k: t.feature.k(),
            q: t.link.degree(),
            l: t.feature.components(),
            feature_kind: t.feature.kind().as_str(),
            n: self.cfg.n,
            m1: self.cfg.m1,
            m2: self.cfg.m2,
            alpha: self.cfg.alpha,
            seed: self.cfg.seed,
            stage,
            step,
            reg_train_loss: reg,
            train_loss: train,
            test_mse: self.test.mse_of(&preds.1).mean,
            feat_corr: self.test.correlation_of(&preds.0).value,
            wall_ms: self.clock.ms(),
        });
    }
}

pub fn run_id(t: &TargetSpec, cfg: &TrainConfig) -> String {
    format!(
        "{}-{}-d{}-n{}-s{}",
        cfg.mode.as_str(),
        t.feature.kind().as_str(),
        t.d(),
        cfg.n,
        cfg.seed
    )
}

/// Stage 1 on `d1`: only `u` changes. Requires `c = 0`.
pub fn stage1(
    net: &mut Network,
    d1: &Dataset,
    cfg: &TrainConfig,
    mut log: impl FnMut(&Network, usize, f64, f64),
) -> Result<StageReport> {
    if net.c.iter().any(|&c| c != 0.0) {
        return Err(Error::Contract("stage 1 requires c = 0".into()));
    }
    let problem = StageProblem::stage1(net, d1);
    run_stage("stage1", net, &problem, cfg.eta1, cfg.xi1, cfg.t1, cfg, true, &mut log)
}

/// Stage 2 on `d2`: only `c` changes.
pub fn stage2(
    net: &mut Network,
    d2: &Dataset,
    cfg: &TrainConfig,
    mut log: impl FnMut(&Network, usize, f64, f64),
) -> Result<StageReport> {
    let problem = StageProblem::stage2(net, d2);
    run_stage("stage2", net, &problem, cfg.eta2, cfg.xi2, cfg.t2, cfg, false, &mut log)
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    stage: &'static str,
    net: &mut Network,
    problem: &StageProblem,
    eta: Option<f64>,
    xi: f64,
    cap: usize,
    cfg: &TrainConfig,
    is_u: bool,
    log: &mut impl FnMut(&Network, usize, f64, f64),
) -> Result<StageReport> {
    let w0 = DVector::from_column_slice(if is_u { &net.u } else { &net.c });
    let put = |net: &mut Network, w: &DVector<f64>| {
        let dst = if is_u { &mut net.u } else { &mut net.c };
        dst.copy_from_slice(w.as_slice());
    };
    if cfg.direct {
        let reg0 = problem.reg_loss(&w0, xi);
        log(net, 0, reg0, problem.loss(&w0));
        let w = problem.solve_direct(xi)?;
        put(net, &w);
        let (reg, train) = (problem.reg_loss(&w, xi), problem.loss(&w));
        log(net, 1, reg, train);
        return Ok(StageReport {
            stage,
            eta: 0.0,
            lambda_max: problem.lambda_max(POWER_ITERATIONS),
            xi,
            steps: 1,
            converged: true,
            trace: vec![reg0, reg],
            final_train_loss: train,
            monotone_violations: 0,
        });
    }
    let mut scratch = net.clone();
    let (w, report) = descend(stage, problem, w0, eta, xi, cap, cfg.stop_tol, cfg.log_every, |step, w, reg, train| {
        put(&mut scratch, w);
        log(&scratch, step, reg, train);
    })?;
    put(net, &w);
    Ok(report)
}

/// Samples `D1`, `D2` from separate streams, then runs both stages.
pub fn run_layerwise(t: &TargetSpec, cfg: &TrainConfig) -> Result<RunOutput> {
    let seeds = RunSeeds::new(cfg.seed);
    let mut net = init_network(t, cfg, &seeds)?;
    let d1 = sample_dataset(t, cfg.n, seeds.d1)?;
    let d2 = sample_dataset(t, cfg.n, seeds.d2)?;
    let mut rec = Recorder::new(t, cfg, seeds.test)?;
    let s1 = stage1(&mut net, &d1, cfg, |n, step, reg, train| {
        rec.push(n, "stage1", step, reg, train)
    })?;
    let s2 = stage2(&mut net, &d2, cfg, |n, step, reg, train| {
        rec.push(n, "stage2", step, reg, train)
    })?;
    let mut warnings = cfg.warnings.clone();
    warnings.extend(t.feature.warnings().iter().cloned());
    for s in [&s1, &s2] {
        if !s.converged && !cfg.direct {
            warnings.push(format!("{} hit the step cap of {} before converging", s.stage, s.steps));
        }
    }
    Ok(RunOutput {
        net,
        records: rec.records,
        stages: vec![s1, s2],
        d1_seed: seeds.d1,
        d2_seed: seeds.d2,
        test_seed: seeds.test,
        warnings,
    })
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64], a: &AdamConfig, t: i32) {
        let c1 = 1.0 - a.beta1.powi(t);
        let c2 = 1.0 - a.beta2.powi(t);
        for i in 0..p.len() {
            self.m[i] = a.beta1 * self.m[i] + (1.0 - a.beta1) * g[i];
            self.v[i] = a.beta2 * self.v[i] + (1.0 - a.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            p[i] -= a.lr * mh / (vh.sqrt() + a.eps);
        }
    }
}

fn subset(data: &Dataset, idx: &[usize]) -> Dataset {
    let mut x = Vec::with_capacity(idx.len() * data.d);
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        x.extend_from_slice(data.row(i));
        y.push(data.y[i]);
    }
    Dataset { d: data.d, x, y }
}

/// Adam over `(u, s, V, b, c)` on a single dataset of size `n`; `a` stays
/// at its initial signs.
pub fn run_joint_adam(t: &TargetSpec, cfg: &TrainConfig) -> Result<RunOutput> {
    let seeds = RunSeeds::new(cfg.seed);
    let mut net = init_network(t, cfg, &seeds)?;
    let data = sample_dataset(t, cfg.n, seeds.d1)?;
    let mut rec = Recorder::new(t, cfg, seeds.test)?;
    let a = &cfg.adam;
    let mut states: Vec<AdamState> = [net.m1, net.m1, net.m1 * net.d, net.m2, net.m2]
        .iter()
        .map(|&l| AdamState::new(l))
        .collect();
    let initial = net.loss(&data)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = crate::rng::rng_from_seed(seeds.shuffle);
    let batch = if a.batch == 0 || a.batch >= data.len() {
        data.len()
    } else {
        a.batch
    };
    let mut t_step = 0i32;
    let mut loss = initial;
    for epoch in 0..a.epochs {
        if is_logged(epoch, cfg.log_every) {
            rec.push(&net, "joint", epoch, loss, loss);
        }
        if batch < data.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (g, l) = if batch == data.len() {
                net.grad_all_with_loss(&data)?
            } else {
                net.grad_all_with_loss(&subset(&data, chunk))?
            };
            epoch_loss += l * chunk.len() as f64;
            t_step += 1;
            states[0].step(&mut net.u, &g.u, a, t_step);
            states[1].step(&mut net.s, &g.s, a, t_step);
            states[2].step(&mut net.v, &g.v, a, t_step);
            states[3].step(&mut net.b, &g.b, a, t_step);
            states[4].step(&mut net.c, &g.c, a, t_step);
        }
        loss = epoch_loss / data.len() as f64;
        if !loss.is_finite() || loss > ADAM_DIVERGENCE * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence {
                stage: "joint_adam",
                loss,
                initial,
            });
        }
    }
    let final_loss = net.loss(&data)?;
    rec.push(&net, "joint", a.epochs, final_loss, final_loss);
    let mut warnings = cfg.warnings.clone();
    warnings.push("joint mode keeps the outer signs a frozen at their initial values".into());
    Ok(RunOutput {
        net,
        records: rec.records,
        stages: Vec::new(),
        d1_seed: seeds.d1,
        d2_seed: seeds.d1,
        test_seed: seeds.test,
        warnings,
    })
}

/// Dispatches on `cfg.mode`.
pub fn run(t: &TargetSpec, cfg: &TrainConfig) -> Result<RunOutput> {
    match cfg.mode {
        Mode::Layerwise => run_layerwise(t, cfg),
        Mode::JointAdam => run_joint_adam(t, cfg),
    }
}
