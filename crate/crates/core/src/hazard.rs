//! Relative-hazard estimators for event-specific hazards: the incidence
//! density ratio and the Cox partial-likelihood HR with a single binary arm
//! covariate. Both always use all available follow-up in each arm.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Arm, ArmPair, ArmSample, EventCode};
use crate::error::{Result, SavvyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EndpointKind {
    TimeToAE,
    TimeToAllCE,
    TimeToDeathCE,
}

impl EndpointKind {
    pub const ALL: [EndpointKind; 3] = [EndpointKind::TimeToAE, EndpointKind::TimeToAllCE, EndpointKind::TimeToDeathCE];

    /// Whether `e` is the event of this cause-specific hazard; everything else
    /// is a censoring.
    pub fn is_event(self, e: EventCode) -> bool {
        match self {
            EndpointKind::TimeToAE => e == EventCode::AdverseEvent,
            EndpointKind::TimeToAllCE => e.is_competing(),
            EndpointKind::TimeToDeathCE => e == EventCode::DeathCE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EndpointKind::TimeToAE => "time_to_ae",
            EndpointKind::TimeToAllCE => "time_to_all_ce",
            EndpointKind::TimeToDeathCE => "time_to_death_ce",
        }
    }

    pub fn event_count(self, sample: &ArmSample) -> usize {
        sample.observations().iter().filter(|o| self.is_event(o.event)).count()
    }
}

impl fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EndpointKind {
    type Err = SavvyError;

    fn from_str(s: &str) -> Result<Self> {
        EndpointKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SavvyError::InvalidInput(format!("unknown endpoint {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HazardMethod {
    IncidenceDensityRatio,
    CoxPH,
}

impl HazardMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HazardMethod::IncidenceDensityRatio => "incidence_density_ratio",
            HazardMethod::CoxPH => "cox_ph",
        }
    }
}

impl fmt::Display for HazardMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tie correction in the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Ties {
    #[default]
    Efron,
    Breslow,
}

impl Ties {
    pub fn as_str(self) -> &'static str {
        match self {
            Ties::Efron => "efron",
            Ties::Breslow => "breslow",
        }
    }
}

impl FromStr for Ties {
    type Err = SavvyError;

    fn from_str(s: &str) -> Result<Self> {
        [Ties::Efron, Ties::Breslow]
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SavvyError::InvalidInput(format!("unknown ties method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardEstimate {
    pub kind: EndpointKind,
    pub method: HazardMethod,
    pub hr: f64,
    pub log_se: f64,
    pub tau_e: f64,
    pub tau_c: f64,
}

/// Ratio of event-specific incidence densities E over C using the complete
/// follow-up; `Var(log hr) = 1/d_E + 1/d_C`.
pub fn id_ratio(arms: &ArmPair, kind: EndpointKind) -> Result<HazardEstimate> {
    let density = |arm: Arm| -> Result<(f64, usize)> {
        let s = arms.arm(arm);
        let pt: f64 = s.observations().iter().map(|o| o.time).sum();
        if pt <= 0.0 {
            return Err(SavvyError::ZeroPersonTime);
        }
        let d = kind.event_count(s);
        if d == 0 {
            return Err(SavvyError::UndefinedRatio(format!("no {kind} events in arm {arm}")));
        }
        Ok((d as f64 / pt, d))
    };
    let (lambda_e, d_e) = density(Arm::E)?;
    let (lambda_c, d_c) = density(Arm::C)?;
    Ok(HazardEstimate {
        kind,
        method: HazardMethod::IncidenceDensityRatio,
        hr: lambda_e / lambda_c,
        log_se: (1.0 / d_e as f64 + 1.0 / d_c as f64).sqrt(),
        tau_e: arms.e.max_time(),
        tau_c: arms.c.max_time(),
    })
}

/// One distinct event time of the partial likelihood.
#[derive(Debug, Clone, Copy)]
struct RiskPoint {
    at_risk_e: f64,
    at_risk_c: f64,
    events_e: f64,
    events_c: f64,
}

fn risk_points(arms: &ArmPair, kind: EndpointKind) -> Vec<RiskPoint> {
    // merge both arms' times, x = 1 for E
    let mut all: Vec<(f64, bool, bool)> = Vec::with_capacity(arms.e.len() + arms.c.len());
    for (arm, is_e) in [(&arms.e, true), (&arms.c, false)] {
        all.extend(arm.observations().iter().map(|o| (o.time, is_e, kind.is_event(o.event))));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk_e = arms.e.len() as f64;
    let mut at_risk_c = arms.c.len() as f64;
    let mut points = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let mut p = RiskPoint { at_risk_e, at_risk_c, events_e: 0.0, events_c: 0.0 };
        let mut j = i;
        while j < all.len() && all[j].0 == t {
            let (_, is_e, event) = all[j];
            match (is_e, event) {
                (true, true) => p.events_e += 1.0,
                (false, true) => p.events_c += 1.0,
                _ => {}
            }
            if is_e {
                at_risk_e -= 1.0;
            } else {
                at_risk_c -= 1.0;
            }
            j += 1;
        }
        if p.events_e + p.events_c > 0.0 {
            points.push(p);
        }
        i = j;
    }
    points
}

/// Log partial likelihood, score and observed information at `beta`.
fn partial_likelihood(points: &[RiskPoint], beta: f64, ties: Ties) -> (f64, f64, f64) {
    let w = beta.exp();
    let (mut loglik, mut score, mut info) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p.events_e + p.events_c;
        let s0 = p.at_risk_e * w + p.at_risk_c;
        let s1 = p.at_risk_e * w;
        // tied-event sums
        let t0 = p.events_e * w + p.events_c;
        let t1 = p.events_e * w;
        loglik += beta * p.events_e;
        score += p.events_e;
        let n_terms = d as usize;
        for k in 0..n_terms {
            let frac = match ties {
                Ties::Efron => k as f64 / d,
                Ties::Breslow => 0.0,
            };
            let a0 = s0 - frac * t0;
            let a1 = s1 - frac * t1;
            let mean = a1 / a0;
            loglik -= a0.ln();
            score -= mean;
            // x² = x for a binary covariate
            info += mean - mean * mean;
        }
    }
    (loglik, score, info)
}

pub const COX_SCORE_TOL: f64 = 1e-10;
pub const COX_MAX_ITER: usize = 50;
pub const COX_STEP_TOL: f64 = 1e-12;

/// Fitted single-covariate Cox model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxFit {
    pub beta: f64,
    pub score: f64,
    pub information: f64,
    pub loglik: f64,
    pub iterations: usize,
}

/// Newton-Raphson from β = 0 with step halving on loss of likelihood.
/// Converged when |score| < 1e-10, or once the Newton step has shrunk to
/// rounding level, within 50 iterations.
pub fn cox_fit(arms: &ArmPair, kind: EndpointKind, ties: Ties) -> Result<CoxFit> {
    let points = risk_points(arms, kind);
    let events_e: f64 = points.iter().map(|p| p.events_e).sum();
    let events_c: f64 = points.iter().map(|p| p.events_c).sum();
    if events_e == 0.0 || events_c == 0.0 {
        return Err(SavvyError::UndefinedRatio(format!("{kind} needs at least one event in each arm")));
    }
    // the MLE is finite iff each arm has an event while the other arm is still at risk
    let e_against_c = points.iter().any(|p| p.events_e > 0.0 && p.at_risk_c > 0.0);
    let c_against_e = points.iter().any(|p| p.events_c > 0.0 && p.at_risk_e > 0.0);
    if !(e_against_c && c_against_e) {
        return Err(SavvyError::NonIdentifiableHr(format!("monotone partial likelihood for {kind}")));
    }

    let mut beta = 0.0;
    let (mut loglik, mut score, mut info) = partial_likelihood(&points, beta, ties);
    for iter in 0..=COX_MAX_ITER {
        if !(info > 0.0 && info.is_finite()) {
            break;
        }
        // a Newton step below rounding level means the score is as small as it can get
        if score.abs() < COX_SCORE_TOL || (score / info).abs() < COX_STEP_TOL * (1.0 + beta.abs()) {
            return Ok(CoxFit { beta, score, information: info, loglik, iterations: iter });
        }
        if iter == COX_MAX_ITER {
            break;
        }
        let mut step = score / info;
        let slack = 1e-12 * (1.0 + loglik.abs());
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = beta + step;
            let (l, s, i) = partial_likelihood(&points, candidate, ties);
            if l.is_finite() && l >= loglik - slack {
                beta = candidate;
                (loglik, score, info) = (l, s, i);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(SavvyError::NonIdentifiableHr(format!("Newton iterations did not converge for {kind} (score {score:e})")))
}

/// Cox HR for arm E vs C, events of `kind` only, Efron ties.
pub fn cox_hr(arms: &ArmPair, kind: EndpointKind) -> Result<HazardEstimate> {
    cox_hr_with(arms, kind, Ties::Efron)
}

pub fn cox_hr_with(arms: &ArmPair, kind: EndpointKind, ties: Ties) -> Result<HazardEstimate> {
    let fit = cox_fit(arms, kind, ties)?;
    Ok(HazardEstimate {
        kind,
        method: HazardMethod::CoxPH,
        hr: fit.beta.exp(),
        log_se: fit.information.sqrt().recip(),
        tau_e: arms.e.max_time(),
        tau_c: arms.c.max_time(),
    })
}

/// Hazard analyses run only when each arm has at least `threshold` AEs.
pub fn min_events_filter(arms: &ArmPair, threshold: usize) -> bool {
    Arm::BOTH.iter().all(|&a| arms.arm(a).count(EventCode::AdverseEvent) >= threshold)
}

pub const DEFAULT_MIN_EVENTS: usize = 10;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn arm(rows: &[(f64, EventCode)]) -> ArmSample {
        ArmSample::new(rows.iter().map(|&(t, e)| Observation::new(t, e)).collect())
    }

    fn ae(times: &[f64]) -> ArmSample {
        arm(&times.iter().map(|&t| (t, EventCode::AdverseEvent)).collect::<Vec<_>>())
    }

    #[test]
    fn id_ratio_examples() {
        let pair = ArmPair::new(ae(&[1.0, 3.0]), ae(&[2.0, 4.0]));
        let est = id_ratio(&pair, EndpointKind::TimeToAE).unwrap();
        assert_abs_diff_eq!(est.hr, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(est.log_se, 1.0f64.sqrt(), epsilon = 1e-15);
        let same = ArmPair::new(ae(&[1.0, 3.0]), ae(&[1.0, 3.0]));
        assert_eq!(id_ratio(&same, EndpointKind::TimeToAE).unwrap().hr, 1.0);
        // λ_E = 0.2, λ_C = 0.1
        let e = arm(&[(5.0, EventCode::AdverseEvent), (5.0, EventCode::Censored)]);
        let c = arm(&[(10.0, EventCode::AdverseEvent), (10.0, EventCode::Censored)]);
        assert_abs_diff_eq!(id_ratio(&ArmPair::new(e, c), EndpointKind::TimeToAE).unwrap().hr, 2.0);
        let none = ArmPair::new(ae(&[1.0]), arm(&[(2.0, EventCode::Censored)]));
        assert!(matches!(id_ratio(&none, EndpointKind::TimeToAE), Err(SavvyError::UndefinedRatio(_))));
    }

    #[test]
    fn cox_matches_quadratic_root() {
        let pair = ArmPair::new(ae(&[1.0, 3.0]), ae(&[2.0, 4.0]));
        let expected = (1.0 + 17f64.sqrt()) / 2.0;
        let est = cox_hr(&pair, EndpointKind::TimeToAE).unwrap();
        assert_abs_diff_eq!(est.hr, expected, epsilon = 1e-9);
        let swapped = cox_hr(&pair.swapped(), EndpointKind::TimeToAE).unwrap();
        assert_abs_diff_eq!(swapped.hr, 1.0 / expected, epsilon = 1e-9);
        assert_abs_diff_eq!(swapped.log_se, est.log_se, epsilon = 1e-9);
    }

    #[test]
    fn cox_identical_arms() {
        let pair = ArmPair::new(ae(&[1.0, 2.0, 2.0, 5.0]), ae(&[1.0, 2.0, 2.0, 5.0]));
        assert_abs_diff_eq!(cox_hr(&pair, EndpointKind::TimeToAE).unwrap().hr, 1.0, epsilon = 1e-12);
    }

    // brute-force maximisation of the Efron likelihood over a fine grid
    #[test]
    fn cox_efron_ties_against_grid() {
        let e = arm(&[
            (1.0, EventCode::AdverseEvent),
            (2.0, EventCode::AdverseEvent),
            (2.0, EventCode::AdverseEvent),
            (3.0, EventCode::DeathCE),
            (4.0, EventCode::AdverseEvent),
        ]);
        let c = arm(&[
            (2.0, EventCode::AdverseEvent),
            (2.0, EventCode::Censored),
            (3.0, EventCode::AdverseEvent),
            (5.0, EventCode::AdverseEvent),
            (6.0, EventCode::Censored),
        ]);
        let pair = ArmPair::new(e, c);
        for ties in [Ties::Efron, Ties::Breslow] {
            let fit = cox_fit(&pair, EndpointKind::TimeToAE, ties).unwrap();
            let points = risk_points(&pair, EndpointKind::TimeToAE);
            let (mut best, mut best_l) = (0.0, f64::NEG_INFINITY);
            for i in -40_000..=40_000 {
                let b = i as f64 * 1e-4;
                let (l, _, _) = partial_likelihood(&points, b, ties);
                if l > best_l {
                    best_l = l;
                    best = b;
                }
            }
            assert!((fit.beta - best).abs() < 2e-4, "{ties:?}: {} vs {}", fit.beta, best);
            assert!(fit.score.abs() < 1e-9);
            assert!(fit.information > 0.0);
        }
    }

    #[test]
    fn cox_monotone_likelihood() {
        let pair = ArmPair::new(ae(&[1.0, 2.0]), arm(&[(3.0, EventCode::AdverseEvent), (4.0, EventCode::Censored)]));
        // E events face C at risk, but the C event at 3 has no E at risk
        let err = cox_hr(&pair, EndpointKind::TimeToAE).unwrap_err();
        assert!(err.to_string().contains("non-identifiable HR"));
    }

    #[test]
    fn endpoint_conventions() {
        let e = arm(&[
            (1.0, EventCode::AdverseEvent),
            (2.0, EventCode::DeathCE),
            (3.0, EventCode::OtherCE),
            (4.0, EventCode::Censored),
        ]);
        assert_eq!(EndpointKind::TimeToAE.event_count(&e), 1);
        assert_eq!(EndpointKind::TimeToAllCE.event_count(&e), 2);
        assert_eq!(EndpointKind::TimeToDeathCE.event_count(&e), 1);
    }

    #[test]
    fn min_events() {
        let mk = |ne: usize, nc: usize| ArmPair::new(ae(&vec![1.0; ne]), ae(&vec![1.0; nc]));
        assert!(min_events_filter(&mk(12, 10), 10));
        assert!(!min_events_filter(&mk(12, 9), 10));
        assert!(!min_events_filter(&mk(9, 9), 10));
    }

    fn arb_arm() -> impl Strategy<Value = ArmSample> {
        let ev = prop_oneof![Just(EventCode::Censored), Just(EventCode::AdverseEvent), Just(EventCode::DeathCE)];
        prop::collection::vec((1u32..20, ev), 3..30)
            .prop_map(|rows| arm(&rows.into_iter().map(|(t, e)| (t as f64, e)).collect::<Vec<_>>()))
    }

    proptest! {
        #[test]
        fn relabeling_inverts(e in arb_arm(), c in arb_arm()) {
            let pair = ArmPair::new(e, c);
            let swapped = pair.swapped();
            if let Ok(a) = id_ratio(&pair, EndpointKind::TimeToAE) {
                let b = id_ratio(&swapped, EndpointKind::TimeToAE).unwrap();
                prop_assert!((a.hr * b.hr - 1.0).abs() < 1e-12);
            }
            if let Ok(a) = cox_hr(&pair, EndpointKind::TimeToAE) {
                let b = cox_hr(&swapped, EndpointKind::TimeToAE).unwrap();
                prop_assert!((a.hr.ln() + b.hr.ln()).abs() < 1e-8);
            }
        }

        #[test]
        fn cox_rank_invariant(e in arb_arm(), c in arb_arm()) {
            let pair = ArmPair::new(e, c);
            let transform = |s: &ArmSample| ArmSample::new(
                s.observations().iter().map(|o| Observation::new(o.time.powf(1.7) * 3.0 + 0.5, o.event)).collect());
            let warped = ArmPair::new(transform(&pair.e), transform(&pair.c));
            match (cox_hr(&pair, EndpointKind::TimeToAE), cox_hr(&warped, EndpointKind::TimeToAE)) {
                (Ok(a), Ok(b)) => prop_assert!((a.hr.ln() - b.hr.ln()).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} {:?}", a, b),
            }
        }
    }
}
