//! Exact checks of the approximate Stein lemma
//! `P_k h ~ E[g'(z)] p` and of the Hermite projections of powers `p^w`.

use crate::polyalg::HermiteExpansion;
use crate::target::{
    exact_mode_feasible, link_mean_derivative, FeatureKind, FeatureSpec, LinkSpec, TargetSpec,
    EXACT_MAX_D, EXACT_MAX_DEGREE,
};
use crate::{par, Error, Result};
use std::io::Write;

#[derive(Clone, Debug, PartialEq)]
pub struct SteinReport {
    pub d: usize,
    pub k: usize,
    pub q: usize,
    pub l: usize,
    pub link_id: String,
    pub c_g: f64,
    /// `||P_k h - C_g p||`.
    pub residual_k: f64,
    /// `||P_{<k} (g o p)||`, which includes the mean `E[g(p)]`.
    pub residual_lt_k: f64,
    /// `||P_{<k} h||` for the centered target.
    pub residual_lt_k_centered: f64,
    /// `||P_k h||^2`, `<h, p>` for the Pythagoras consistency check.
    pub pk_norm_sq: f64,
    pub h_dot_p: f64,
}

fn capacity(d: usize, degree: usize) -> Error {
    if d > EXACT_MAX_D {
        Error::Capacity {
            what: "exact Hermite projection dimension d",
            limit: EXACT_MAX_D,
            requested: d,
        }
    } else {
        Error::Capacity {
            what: "exact Hermite projection degree k q",
            limit: EXACT_MAX_DEGREE,
            requested: degree,
        }
    }
}

pub fn stein_residual(t: &TargetSpec) -> Result<SteinReport> {
    if !t.exact_feasible() {
        return Err(capacity(t.d(), t.degree()));
    }
    let k = t.feature.k() as u32;
    let c_g = link_mean_derivative(&t.link);
    let raw = HermiteExpansion::of(&t.raw_poly());
    let p = HermiteExpansion::of(&t.feature.poly());
    let pk = raw.filter_degree(|j| j == k);
    let lt = raw.filter_degree(|j| j < k);
    let lt_centered = raw.filter_degree(|j| j > 0 && j < k);
    Ok(SteinReport {
        d: t.d(),
        k: k as usize,
        q: t.link.degree(),
        l: t.feature.components(),
        link_id: t.link.id(),
        c_g,
        residual_k: pk.dist_sq(&p.scale(c_g)).sqrt(),
        residual_lt_k: lt.norm_sq().sqrt(),
        residual_lt_k_centered: lt_centered.norm_sq().sqrt(),
        pk_norm_sq: pk.norm_sq(),
        h_dot_p: raw.dot(&p),
    })
}

/// Elementary symmetric polynomial `e_s(x)`.
pub fn elementary_symmetric(x: &[f64], s: usize) -> f64 {
    let mut e = vec![0.0; s + 1];
    e[0] = 1.0;
    for &xi in x {
        for j in (1..=s.min(x.len())).rev() {
            e[j] += e[j - 1] * xi;
        }
    }
    e[s]
}

/// `w! / (2^s L^s) e_s(lambda^2)` for odd `w = 2s + 1`.
pub fn power_projection_coef(lambdas: &[f64], w: usize) -> f64 {
    let s = w / 2;
    let l = lambdas.len() as f64;
    let sq: Vec<f64> = lambdas.iter().map(|x| x * x).collect();
    let wfact: f64 = (1..=w).map(|i| i as f64).product();
    wfact / (2f64 * l).powi(s as i32) * elementary_symmetric(&sq, s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerProjectionReport {
    pub w: usize,
    pub l: usize,
    /// Predicted multiple of `p`; `None` for even `w`.
    pub coef: Option<f64>,
    /// `||P_k(p^w) - coef p||` for odd `w`, `||P_k(p^w)||` for even `w`.
    pub residual: f64,
    /// `<P_k(p^w), p> / ||p^w||`.
    pub correlation: f64,
    /// With one component the `O(L^{-1/2})` bound says nothing.
    pub degenerate: bool,
}

pub fn power_projection_check(feature: &FeatureSpec, w: usize) -> Result<PowerProjectionReport> {
    if w < 2 {
        return Err(Error::usage("power w must be at least 2"));
    }
    let degree = feature.k() * w;
    if feature.d() > EXACT_MAX_D || degree > EXACT_MAX_DEGREE {
        return Err(capacity(feature.d(), degree));
    }
    let lambdas = match feature.kind() {
        FeatureKind::Quadratic => feature.quadratic_as_ortho()?.lambdas().to_vec(),
        _ => feature.lambdas().to_vec(),
    };
    let k = feature.k() as u32;
    let poly = feature.poly();
    let pw = HermiteExpansion::of(&poly.pow(w as u32));
    let p = HermiteExpansion::of(&poly);
    let pk = pw.filter_degree(|j| j == k);
    let (coef, residual) = if w % 2 == 1 {
        let c = power_projection_coef(&lambdas, w);
        (Some(c), pk.dist_sq(&p.scale(c)).sqrt())
    } else {
        (None, pk.norm_sq().sqrt())
    };
    Ok(PowerProjectionReport {
        w,
        l: lambdas.len(),
        coef,
        residual,
        correlation: pk.dot(&p) / pw.norm_sq().sqrt(),
        degenerate: lambdas.len() == 1,
    })
}

/// Least-squares slope of `log y` against `log x`; `None` when fewer than
/// two points or any value is not strictly positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() || ys.iter().chain(xs).any(|&v| !(v > 1e-300)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Residuals below this are treated as exact zeros when fitting slopes.
pub const ZERO_RESIDUAL: f64 = 1e-10;

/// Balanced feature families indexed by `d` for scaling sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepFamily {
    /// `L = d`, `lambda_i = 1`; standard-basis directions when `seed` is `None`.
    Ortho { k: usize, seed: Option<u64> },
    /// `L = floor(d / k)` disjoint blocks, `lambda_i = 1`.
    Parity { k: usize },
    /// Random symmetric matrix per `d`.
    Quadratic { seed: u64 },
}

impl SweepFamily {
    pub fn feature(&self, d: usize) -> Result<FeatureSpec> {
        match *self {
            SweepFamily::Ortho { k, seed } => FeatureSpec::ortho_decomp(d, k, &vec![1.0; d], seed),
            SweepFamily::Parity { k } => {
                FeatureSpec::sparse_parity(d, k, &vec![1.0; (d / k.max(1)).max(1)])
            }
            SweepFamily::Quadratic { seed } => FeatureSpec::random_quadratic(d, seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepFamily::Ortho { .. } => "ortho",
            SweepFamily::Parity { .. } => "parity",
            SweepFamily::Quadratic { .. } => "quadratic",
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            SweepFamily::Ortho { k, .. } | SweepFamily::Parity { k } => k,
            SweepFamily::Quadratic { .. } => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteinSweep {
    pub family: &'static str,
    pub reports: Vec<SteinReport>,
    pub slope_k: Option<f64>,
    pub slope_lt_k: Option<f64>,
}

impl SteinSweep {
    pub fn strictly_decreasing_k(&self) -> bool {
        self.reports
            .windows(2)
            .all(|w| w[1].residual_k < w[0].residual_k)
    }

    pub fn strictly_decreasing_lt_k(&self) -> bool {
        self.reports
            .windows(2)
            .all(|w| w[1].residual_lt_k < w[0].residual_lt_k)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "d",
            "k",
            "q",
            "L",
            "link_id",
            "c_g",
            "residual_k",
            "residual_lt_k",
        ])?;
        for r in &self.reports {
            out.write_record([
                r.d.to_string(),
                r.k.to_string(),
                r.q.to_string(),
                r.l.to_string(),
                r.link_id.clone(),
                format!("{:e}", r.c_g),
                format!("{:e}", r.residual_k),
                format!("{:e}", r.residual_lt_k),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One-row summary with the fitted slopes (`NA` when undefined).
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let fmt = |s: Option<f64>| s.map(|v| format!("{v:.6}")).unwrap_or_else(|| "NA".into());
        let first = self.reports.first();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["family", "k", "q", "link_id", "n_dims", "slope_k", "slope_lt_k"])?;
        out.write_record([
            self.family.to_string(),
            first.map(|r| r.k.to_string()).unwrap_or_default(),
            first.map(|r| r.q.to_string()).unwrap_or_default(),
            first.map(|r| r.link_id.clone()).unwrap_or_default(),
            self.reports.len().to_string(),
            fmt(self.slope_k),
            fmt(self.slope_lt_k),
        ])?;
        out.flush()?;
        Ok(())
    }
}

fn fit(reports: &[SteinReport], pick: impl Fn(&SteinReport) -> f64) -> Option<f64> {
    let ds: Vec<f64> = reports.iter().map(|r| r.d as f64).collect();
    let ys: Vec<f64> = reports.iter().map(pick).collect();
    if ys.iter().any(|&y| y < ZERO_RESIDUAL) {
        return None;
    }
    loglog_slope(&ds, &ys)
}

pub fn stein_scaling_sweep(family: SweepFamily, link: &LinkSpec, dims: &[usize]) -> Result<SteinSweep> {
    for &d in dims {
        let f = family.feature(d)?;
        if !exact_mode_feasible(&f, link) {
            return Err(capacity(d, f.k() * link.degree()));
        }
    }
    let reports = par::map(dims, |&d| {
        let t = TargetSpec::new(family.feature(d)?, link.clone())?;
        stein_residual(&t)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SteinSweep {
        family: family.name(),
        slope_k: fit(&reports, |r| r.residual_k),
        slope_lt_k: fit(&reports, |r| r.residual_lt_k),
        reports,
    })
}
