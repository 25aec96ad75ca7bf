//! Two-arm effect measures with Wald intervals and the four-level evidence
//! categorization applied to RRs and HRs.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Arm;
use crate::error::{Result, SavvyError};
use crate::hazard::{EndpointKind, HazardEstimate, HazardMethod};
use crate::prob::{ProbEstimatorId, ProbabilityEstimate};

pub const DEFAULT_LEVEL: f64 = 0.95;
/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959964;

pub fn z_value(level: f64) -> f64 {
    if (level - DEFAULT_LEVEL).abs() < 1e-12 {
        Z_975
    } else {
        Normal::standard().inverse_cdf(0.5 + level / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EffectScale {
    RR,
    RD,
    OR,
    HR,
}

/// Which estimator produced an effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EffectSource {
    Probability(ProbEstimatorId),
    Hazard(HazardMethod, EndpointKind),
}

impl fmt::Display for EffectSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectSource::Probability(id) => write!(f, "{id}"),
            EffectSource::Hazard(m, k) => write!(f, "{m}:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub scale: EffectScale,
    pub point: f64,
    /// Log-scale SE for RR/OR/HR, plain SE for RD.
    pub log_se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub source: EffectSource,
    /// Common evaluation time for probability effects; `None` for hazards.
    pub eval_time: Option<f64>,
}

impl EffectEstimate {
    fn ratio(scale: EffectScale, point: f64, log_se: f64, level: f64, source: EffectSource, eval_time: Option<f64>) -> Self {
        let half = z_value(level) * log_se;
        EffectEstimate {
            scale,
            point,
            log_se,
            ci_lower: (point.ln() - half).exp(),
            ci_upper: (point.ln() + half).exp(),
            level,
            source,
            eval_time,
        }
    }

    pub fn from_hazard(h: &HazardEstimate, level: f64) -> Self {
        EffectEstimate::ratio(EffectScale::HR, h.hr, h.log_se, level, EffectSource::Hazard(h.method, h.kind), None)
    }

    pub fn category(&self) -> Result<EvidenceCategory> {
        categorize(self)
    }
}

fn check_pair(q_e: &ProbabilityEstimate, q_c: &ProbabilityEstimate) -> Result<()> {
    if q_e.arm != Arm::E || q_c.arm != Arm::C {
        return Err(SavvyError::Mismatch(format!("expected arms (E, C), got ({}, {})", q_e.arm, q_c.arm)));
    }
    if q_e.estimator != q_c.estimator {
        return Err(SavvyError::Mismatch(format!("estimators differ: {} vs {}", q_e.estimator, q_c.estimator)));
    }
    if q_e.eval_time != q_c.eval_time {
        return Err(SavvyError::Mismatch(format!("evaluation times differ: {} vs {}", q_e.eval_time, q_c.eval_time)));
    }
    Ok(())
}

pub fn relative_risk(q_e: &ProbabilityEstimate, q_c: &ProbabilityEstimate) -> Result<EffectEstimate> {
    relative_risk_at(q_e, q_c, DEFAULT_LEVEL)
}

/// `q_E / q_C` with delta-rule `Var(log RR) = Var_E/q_E² + Var_C/q_C²`.
pub fn relative_risk_at(q_e: &ProbabilityEstimate, q_c: &ProbabilityEstimate, level: f64) -> Result<EffectEstimate> {
    check_pair(q_e, q_c)?;
    for q in [q_e, q_c] {
        if q.value <= 0.0 {
            return Err(SavvyError::ZeroProbability(q.arm));
        }
    }
    let var_log = q_e.variance / (q_e.value * q_e.value) + q_c.variance / (q_c.value * q_c.value);
    Ok(EffectEstimate::ratio(
        EffectScale::RR,
        q_e.value / q_c.value,
        var_log.sqrt(),
        level,
        EffectSource::Probability(q_e.estimator),
        Some(q_e.eval_time),
    ))
}

pub fn risk_difference(q_e: &ProbabilityEstimate, q_c: &ProbabilityEstimate) -> Result<EffectEstimate> {
    check_pair(q_e, q_c)?;
    let point = q_e.value - q_c.value;
    let se = (q_e.variance + q_c.variance).sqrt();
    let half = z_value(DEFAULT_LEVEL) * se;
    Ok(EffectEstimate {
        scale: EffectScale::RD,
        point,
        log_se: se,
        ci_lower: point - half,
        ci_upper: point + half,
        level: DEFAULT_LEVEL,
        source: EffectSource::Probability(q_e.estimator),
        eval_time: Some(q_e.eval_time),
    })
}

pub fn odds_ratio(q_e: &ProbabilityEstimate, q_c: &ProbabilityEstimate) -> Result<EffectEstimate> {
    check_pair(q_e, q_c)?;
    for q in [q_e, q_c] {
        if !(q.value > 0.0 && q.value < 1.0) {
            return Err(SavvyError::BoundaryProbability(q.value));
        }
    }
    let odds = |q: &ProbabilityEstimate| q.value / (1.0 - q.value);
    let logit_var = |q: &ProbabilityEstimate| q.variance / (q.value * (1.0 - q.value)).powi(2);
    Ok(EffectEstimate::ratio(
        EffectScale::OR,
        odds(q_e) / odds(q_c),
        (logit_var(q_e) + logit_var(q_c)).sqrt(),
        DEFAULT_LEVEL,
        EffectSource::Probability(q_e.estimator),
        Some(q_e.eval_time),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvidenceCategory {
    NoEffect,
    Minor,
    Considerable,
    Major,
}

impl EvidenceCategory {
    pub const ALL: [EvidenceCategory; 4] =
        [EvidenceCategory::NoEffect, EvidenceCategory::Minor, EvidenceCategory::Considerable, EvidenceCategory::Major];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceCategory::NoEffect => "no_effect",
            EvidenceCategory::Minor => "minor",
            EvidenceCategory::Considerable => "considerable",
            EvidenceCategory::Major => "major",
        }
    }
}

impl fmt::Display for EvidenceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Category from the CI bound nearest to 1.
///
/// Below 1 the upper bound is compared against `[0.9, 1)`, `[0.75, 0.9)` and
/// `< 0.75`; above 1 the lower bound against `(1, 1.11]`, `(1.11, 1.33]` and
/// `> 1.33`. Direction is not distinguished.
pub fn categorize_interval(ci_lower: f64, ci_upper: f64) -> EvidenceCategory {
    if ci_lower <= 1.0 && 1.0 <= ci_upper {
        EvidenceCategory::NoEffect
    } else if ci_upper < 1.0 {
        if ci_upper >= 0.9 {
            EvidenceCategory::Minor
        } else if ci_upper >= 0.75 {
            EvidenceCategory::Considerable
        } else {
            EvidenceCategory::Major
        }
    } else if ci_lower <= 1.11 {
        EvidenceCategory::Minor
    } else if ci_lower <= 1.33 {
        EvidenceCategory::Considerable
    } else {
        EvidenceCategory::Major
    }
}

pub fn categorize(effect: &EffectEstimate) -> Result<EvidenceCategory> {
    if !matches!(effect.scale, EffectScale::RR | EffectScale::HR) {
        return Err(SavvyError::InvalidInput(format!("cannot categorize a {:?} effect", effect.scale)));
    }
    if !(effect.ci_lower.is_finite() && effect.ci_upper.is_finite()) {
        return Err(SavvyError::InvalidInput("confidence interval is not finite".into()));
    }
    Ok(categorize_interval(effect.ci_lower, effect.ci_upper))
}

/// Candidate (rows) against gold-standard (columns) category counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryCrosstab {
    pub counts: [[usize; 4]; 4],
}

impl CategoryCrosstab {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Candidate category above the gold one (below the diagonal).
    pub fn upgrades(&self) -> usize {
        (0..4).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| self.counts[i][j]).sum()
    }

    /// Candidate category below the gold one (above the diagonal).
    pub fn downgrades(&self) -> usize {
        (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).map(|(i, j)| self.counts[i][j]).sum()
    }

    pub fn cell(&self, candidate: EvidenceCategory, gold: EvidenceCategory) -> usize {
        self.counts[candidate.index()][gold.index()]
    }
}

pub fn category_crosstab(pairs: &[(EvidenceCategory, EvidenceCategory)]) -> CategoryCrosstab {
    let mut tab = CategoryCrosstab::default();
    for &(cand, gold) in pairs {
        tab.counts[cand.index()][gold.index()] += 1;
    }
    tab
}
