//! Normal-normal random-effects meta-analysis of log ratios and mixed-effects
//! meta-regression on centered covariates.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::benchmark::{RatioCovariates, RatioRecord};
use crate::effects::z_value;
use crate::error::{Result, SavvyError};

/// Variances below this are floored so zero bootstrap SEs keep finite weights.
pub const MIN_VARIANCE: f64 = 1e-12;
const REML_TOL: f64 = 1e-10;
const REML_MAX_ITER: usize = 200;

/// Between-unit variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TauMethod {
    /// DerSimonian-Laird method of moments (generalized for regressions).
    #[default]
    DerSimonianLaird,
    /// Restricted maximum likelihood via Fisher scoring.
    Reml,
    /// τ² fixed at zero (inverse-variance fixed effect).
    FixedEffect,
}

impl TauMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TauMethod::DerSimonianLaird => "dersimonian_laird",
            TauMethod::Reml => "reml",
            TauMethod::FixedEffect => "fixed_effect",
        }
    }
}

impl std::str::FromStr for TauMethod {
    type Err = SavvyError;

    fn from_str(s: &str) -> Result<Self> {
        [TauMethod::DerSimonianLaird, TauMethod::Reml, TauMethod::FixedEffect]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SavvyError::InvalidInput(format!("unknown tau method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaResult {
    pub mu: f64,
    pub se_mu: f64,
    pub tau2: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub k: usize,
    /// Average ratio, `exp(mu)`.
    pub exp_mu: f64,
    /// Cochran's Q under fixed-effect weights.
    pub q_stat: f64,
}

impl MetaResult {
    pub fn exp_ci(&self) -> (f64, f64) {
        (self.ci_lower.exp(), self.ci_upper.exp())
    }
}

pub fn random_effects_meta(y: &[f64], se: &[f64]) -> Result<MetaResult> {
    random_effects_meta_with(y, se, TauMethod::DerSimonianLaird, 0.95)
}

pub fn random_effects_meta_with(y: &[f64], se: &[f64], method: TauMethod, level: f64) -> Result<MetaResult> {
    let fit = fit_mixed(y, se, &DMatrix::from_element(y.len(), 1, 1.0), method)?;
    let mu = fit.beta[0];
    let se_mu = fit.cov[(0, 0)].sqrt();
    let half = z_value(level) * se_mu;
    Ok(MetaResult {
        mu,
        se_mu,
        tau2: fit.tau2,
        ci_lower: mu - half,
        ci_upper: mu + half,
        k: y.len(),
        exp_mu: mu.exp(),
        q_stat: fit.q_stat,
    })
}

struct MixedFit {
    beta: DVector<f64>,
    cov: DMatrix<f64>,
    tau2: f64,
    q_stat: f64,
}

fn check_inputs(y: &[f64], se: &[f64], p: usize) -> Result<Vec<f64>> {
    if y.len() != se.len() {
        return Err(SavvyError::InvalidInput(format!("{} responses but {} standard errors", y.len(), se.len())));
    }
    let needed = (p + 1).max(2);
    if y.len() < needed {
        return Err(SavvyError::TooFewUnits { needed, got: y.len() });
    }
    if let Some(bad) = y.iter().chain(se).find(|v| !v.is_finite()) {
        return Err(SavvyError::InvalidInput(format!("non-finite input {bad}")));
    }
    if let Some(bad) = se.iter().find(|&&s| s < 0.0) {
        return Err(SavvyError::InvalidInput(format!("negative standard error {bad}")));
    }
    Ok(se.iter().map(|s| (s * s).max(MIN_VARIANCE)).collect())
}

/// `(X'WX)⁻¹`, rejecting numerically rank-deficient designs.
fn weighted_inverse(x: &DMatrix<f64>, w: &DVector<f64>) -> Result<DMatrix<f64>> {
    let xtwx = x.transpose() * DMatrix::from_diagonal(w) * x;
    let sv = xtwx.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if max.is_nan() || max <= 0.0 || min <= max * 1e-12 {
        return Err(SavvyError::CollinearCovariates);
    }
    xtwx.try_inverse().ok_or(SavvyError::CollinearCovariates)
}

fn fit_mixed(y: &[f64], se: &[f64], x: &DMatrix<f64>, method: TauMethod) -> Result<MixedFit> {
    let (k, p) = (x.nrows(), x.ncols());
    let v = check_inputs(y, se, p.saturating_sub(1))?;
    let yv = DVector::from_column_slice(y);
    let vv = DVector::from_vec(v);

    let w_fixed = vv.map(|vi| 1.0 / vi);
    let inv_fixed = weighted_inverse(x, &w_fixed)?;
    let beta_fixed = &inv_fixed * x.transpose() * w_fixed.component_mul(&yv);
    let resid = &yv - x * &beta_fixed;
    let q_stat = resid.component_mul(&resid).dot(&w_fixed);

    let tau2 = match method {
        TauMethod::FixedEffect => 0.0,
        TauMethod::DerSimonianLaird => moment_tau2(x, &w_fixed, &inv_fixed, q_stat, k, p),
        TauMethod::Reml => {
            let start = moment_tau2(x, &w_fixed, &inv_fixed, q_stat, k, p);
            reml_tau2(&yv, &vv, x, start)?
        }
    };

    let w = vv.map(|vi| 1.0 / (vi + tau2));
    let cov = weighted_inverse(x, &w)?;
    let beta = &cov * x.transpose() * w.component_mul(&yv);
    Ok(MixedFit { beta, cov, tau2, q_stat })
}

// τ² = (Q_E − (k − p)) / tr(P), P = W − W X (X'WX)⁻¹ X' W
fn moment_tau2(x: &DMatrix<f64>, w: &DVector<f64>, inv: &DMatrix<f64>, q_stat: f64, k: usize, p: usize) -> f64 {
    let w2 = w.component_mul(w);
    let xtw2x = x.transpose() * DMatrix::from_diagonal(&w2) * x;
    let trace_p = w.sum() - (inv * xtw2x).trace();
    if trace_p <= 0.0 {
        return 0.0;
    }
    ((q_stat - (k - p) as f64) / trace_p).max(0.0)
}

fn reml_tau2(y: &DVector<f64>, v: &DVector<f64>, x: &DMatrix<f64>, start: f64) -> Result<f64> {
    let mut tau2 = start;
    for _ in 0..REML_MAX_ITER {
        let w = v.map(|vi| 1.0 / (vi + tau2));
        let wm = DMatrix::from_diagonal(&w);
        let inv = weighted_inverse(x, &w)?;
        let p = &wm - &wm * x * inv * x.transpose() * &wm;
        let py = &p * y;
        let pp = &p * &p;
        let step = (py.dot(&py) - p.trace()) / pp.trace();
        let next = (tau2 + step).max(0.0);
        if (next - tau2).abs() < REML_TOL {
            return Ok(next);
        }
        tau2 = next;
    }
    Ok(tau2)
}

/// The four meta-regression covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Covariate {
    PctCensored,
    PctCe,
    EvalTimeYears,
    GoldEffect,
}

impl Covariate {
    pub const ALL: [Covariate; 4] = [Covariate::PctCensored, Covariate::PctCe, Covariate::EvalTimeYears, Covariate::GoldEffect];

    /// The multivariable model leaves out the CE share, which together with
    /// censoring and the gold-standard probability is nearly collinear.
    pub const MULTIVARIABLE: [Covariate; 3] = [Covariate::PctCensored, Covariate::EvalTimeYears, Covariate::GoldEffect];

    pub fn value(self, c: &RatioCovariates) -> f64 {
        match self {
            Covariate::PctCensored => c.pct_censored,
            Covariate::PctCe => c.pct_ce,
            Covariate::EvalTimeYears => c.eval_time_years,
            Covariate::GoldEffect => c.gold_effect_size,
        }
    }

    /// Increment at which multiplicative effects are reported: +10 percentage
    /// points, +1 year, +0.1 in effect size.
    pub fn report_unit(self) -> f64 {
        match self {
            Covariate::PctCensored | Covariate::PctCe => 10.0,
            Covariate::EvalTimeYears => 1.0,
            Covariate::GoldEffect => 0.1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::PctCensored => "pct_censored",
            Covariate::PctCe => "pct_ce",
            Covariate::EvalTimeYears => "eval_time_years",
            Covariate::GoldEffect => "gold_effect",
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl Coefficient {
    fn new(estimate: f64, se: f64, z: f64) -> Self {
        Coefficient { estimate, se, ci_lower: estimate - z * se, ci_upper: estimate + z * se }
    }

    /// `exp(unit·β)` with its interval.
    pub fn multiplicative(&self, unit: f64) -> (f64, f64, f64) {
        ((unit * self.estimate).exp(), (unit * self.ci_lower).exp(), (unit * self.ci_upper).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRegResult {
    /// Log ratio at the covariate means when centered.
    pub intercept: Coefficient,
    pub slopes: Vec<Coefficient>,
    /// Column means subtracted from the covariates (zeros if not centered).
    pub centers: Vec<f64>,
    pub tau2: f64,
    pub k: usize,
    /// Fitted log ratios per unit.
    pub fitted: Vec<f64>,
}

/// Mixed-effects weighted least squares; `x` holds one row per unit.
pub fn meta_regression(y: &[f64], se: &[f64], x: &[Vec<f64>], center: bool) -> Result<MetaRegResult> {
    meta_regression_with(y, se, x, center, TauMethod::DerSimonianLaird, 0.95)
}

pub fn meta_regression_with(
    y: &[f64],
    se: &[f64],
    x: &[Vec<f64>],
    center: bool,
    method: TauMethod,
    level: f64,
) -> Result<MetaRegResult> {
    let k = y.len();
    if x.len() != k {
        return Err(SavvyError::InvalidInput(format!("{} covariate rows for {k} units", x.len())));
    }
    let p = x.first().map_or(0, Vec::len);
    if x.iter().any(|row| row.len() != p) {
        return Err(SavvyError::InvalidInput("ragged covariate matrix".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SavvyError::InvalidInput("non-finite covariate".into()));
    }
    if k <= p + 1 {
        return Err(SavvyError::TooFewUnits { needed: p + 2, got: k });
    }
    let centers: Vec<f64> = (0..p).map(|j| if center { x.iter().map(|r| r[j]).sum::<f64>() / k as f64 } else { 0.0 }).collect();
    let design = DMatrix::from_fn(k, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] - centers[j - 1] });
    let fit = fit_mixed(y, se, &design, method)?;
    let z = z_value(level);
    let coef = |j: usize| Coefficient::new(fit.beta[j], fit.cov[(j, j)].sqrt(), z);
    let fitted = (&design * &fit.beta).iter().copied().collect();
    Ok(MetaRegResult { intercept: coef(0), slopes: (1..=p).map(coef).collect(), centers, tau2: fit.tau2, k, fitted })
}

/// Arithmetic means of the covariates over the records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateMeans(pub RatioCovariates);

pub fn covariate_means(records: &[RatioRecord]) -> Result<CovariateMeans> {
    if records.is_empty() {
        return Err(SavvyError::InvalidInput("no records to average".into()));
    }
    let n = records.len() as f64;
    let mean = |c: Covariate| records.iter().map(|r| c.value(&r.covariates)).sum::<f64>() / n;
    Ok(CovariateMeans(RatioCovariates {
        pct_censored: mean(Covariate::PctCensored),
        pct_ce: mean(Covariate::PctCe),
        eval_time_years: mean(Covariate::EvalTimeYears),
        gold_effect_size: mean(Covariate::GoldEffect),
    }))
}

/// Meta-regression of record log ratios on the chosen covariates (centered).
pub fn meta_regression_records(records: &[RatioRecord], covariates: &[Covariate], method: TauMethod) -> Result<MetaRegResult> {
    let y: Vec<f64> = records.iter().map(|r| r.log_ratio).collect();
    let se: Vec<f64> = records.iter().map(|r| r.log_ratio_se).collect();
    let x: Vec<Vec<f64>> = records.iter().map(|r| covariates.iter().map(|c| c.value(&r.covariates)).collect()).collect();
    meta_regression_with(&y, &se, &x, true, method, 0.95)
}
