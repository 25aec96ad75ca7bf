//! Composite endpoint (AE or any CE): with CEs folded into the event the only
//! remaining distortion is censoring, so the incidence proportion is compared
//! to one minus Kaplan-Meier.

use serde::{Deserialize, Serialize};

use crate::benchmark::log_ratio_points;
use crate::data::{Arm, ArmPair, CeMode};
use crate::effects::{relative_risk, EffectEstimate};
use crate::error::Result;
use crate::prob::{incidence_proportion, one_minus_km, ProbabilityEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeResult {
    pub ip: [ProbabilityEstimate; 2],
    pub km: [ProbabilityEstimate; 2],
    pub rr_ip: Option<EffectEstimate>,
    pub rr_km: Option<EffectEstimate>,
    /// `RR_ip / RR_km`; `None` when a composite probability is zero.
    pub rr_ratio: Option<f64>,
}

impl CompositeResult {
    fn slot(arm: Arm) -> usize {
        match arm {
            Arm::E => 0,
            Arm::C => 1,
        }
    }

    pub fn ip(&self, arm: Arm) -> &ProbabilityEstimate {
        &self.ip[Self::slot(arm)]
    }

    pub fn km(&self, arm: Arm) -> &ProbabilityEstimate {
        &self.km[Self::slot(arm)]
    }

    /// Arm-wise `ip / km`, undefined when km is zero.
    pub fn arm_ratio(&self, arm: Arm) -> Option<f64> {
        let (ip, km) = (self.ip(arm).value, self.km(arm).value);
        (km > 0.0).then(|| ip / km)
    }
}

pub fn composite_analysis(arms: &ArmPair, tau: f64) -> Result<CompositeResult> {
    let composite = arms.apply_ce_mode(CeMode::CompositeAsEvent);
    let ip = [incidence_proportion(&composite.e, Arm::E, tau)?, incidence_proportion(&composite.c, Arm::C, tau)?];
    let km = [one_minus_km(&composite.e, Arm::E, tau)?, one_minus_km(&composite.c, Arm::C, tau)?];
    let rr_ip = relative_risk(&ip[0], &ip[1]).ok();
    let rr_km = relative_risk(&km[0], &km[1]).ok();
    let rr_ratio = match (&rr_ip, &rr_km) {
        (Some(a), Some(b)) => log_ratio_points(a.point, b.point).ok().map(f64::exp),
        _ => None,
    };
    Ok(CompositeResult { ip, km, rr_ip, rr_km, rr_ratio })
}
