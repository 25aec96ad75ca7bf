//! Candidate-versus-gold comparisons: log ratios, arm-stratified bootstrap
//! standard errors, and distribution summaries of the ratios.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ArmPair, ArmSample, Observation};
use crate::effects::{relative_risk, EffectEstimate, EffectScale};
use crate::error::{Result, SavvyError};
use crate::hazard::{cox_hr_with, id_ratio, EndpointKind, HazardMethod, Ties};
use crate::par;
use crate::prob::{self, ProbEstimatorId};

pub const DEFAULT_REPLICATES: usize = 1000;
/// Replicates may be dropped up to this share before the bootstrap is
/// declared unstable.
pub const MAX_DROP_SHARE: f64 = 0.5;

/// Meta-regression covariates attached to every ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RatioCovariates {
    /// Percent (0-100) of subjects censored by the evaluation time, both arms.
    pub pct_censored: f64,
    /// Percent (0-100) of subjects with a CE by the evaluation time, both arms.
    pub pct_ce: f64,
    pub eval_time_years: f64,
    /// Point estimate of the gold-standard effect.
    pub gold_effect_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub trial_id: String,
    pub ae_type_id: String,
    pub candidate_id: String,
    pub gold_id: String,
    pub log_ratio: f64,
    pub log_ratio_se: f64,
    pub covariates: RatioCovariates,
}

impl RatioRecord {
    pub fn ratio(&self) -> f64 {
        self.log_ratio.exp()
    }
}

/// `log(candidate) − log(gold)`; both must be ratio-scale effects of the same
/// family (probability RR against probability RR, HR against HR).
pub fn log_ratio_to_gold(candidate: &EffectEstimate, gold: &EffectEstimate) -> Result<f64> {
    let family = |s: EffectScale| match s {
        EffectScale::RR | EffectScale::OR => Some(0),
        EffectScale::HR => Some(1),
        EffectScale::RD => None,
    };
    if family(candidate.scale).is_none() || family(candidate.scale) != family(gold.scale) {
        return Err(SavvyError::Mismatch(format!("cannot compare {:?} against {:?}", candidate.scale, gold.scale)));
    }
    log_ratio_points(candidate.point, gold.point)
}

pub fn log_ratio_points(candidate: f64, gold: f64) -> Result<f64> {
    for p in [candidate, gold] {
        if !(p > 0.0 && p.is_finite()) {
            return Err(SavvyError::NonPositiveEffect(p));
        }
    }
    Ok(candidate.ln() - gold.ln())
}

/// Recipe for recomputing an effect on resampled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EffectSpec {
    /// RR of a probability estimator at a fixed evaluation time.
    ProbabilityRr { estimator: ProbEstimatorId, tau: f64 },
    /// Hazard ratio of an event-specific hazard.
    Hazard { method: HazardMethod, kind: EndpointKind, ties: Ties },
}

impl EffectSpec {
    pub fn evaluate(&self, arms: &ArmPair) -> Result<EffectEstimate> {
        match *self {
            EffectSpec::ProbabilityRr { estimator, tau } => {
                let q_e = prob::estimate(estimator, &arms.e, crate::data::Arm::E, tau)?;
                let q_c = prob::estimate(estimator, &arms.c, crate::data::Arm::C, tau)?;
                relative_risk(&q_e, &q_c)
            }
            EffectSpec::Hazard { method, kind, ties } => {
                let h = match method {
                    HazardMethod::IncidenceDensityRatio => id_ratio(arms, kind)?,
                    HazardMethod::CoxPH => cox_hr_with(arms, kind, ties)?,
                };
                Ok(EffectEstimate::from_hazard(&h, crate::effects::DEFAULT_LEVEL))
            }
        }
    }
}

/// Deterministic RNG for replicate `index` drawn from the master seed.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn resample_arm<R: Rng>(sample: &ArmSample, rng: &mut R) -> ArmSample {
    let obs = sample.observations();
    let n = obs.len();
    let mut multiplicity = vec![0u32; n];
    for _ in 0..n {
        multiplicity[rng.random_range(0..n)] += 1;
    }
    // the source sample is sorted, so emitting in index order keeps it sorted
    let mut out: Vec<Observation> = Vec::with_capacity(n);
    for (o, &m) in obs.iter().zip(&multiplicity) {
        out.extend(std::iter::repeat_n(*o, m as usize));
    }
    ArmSample::from_sorted(out)
}

/// Resamples subjects with replacement within each arm, arm sizes fixed.
pub fn resample_pair<R: Rng>(arms: &ArmPair, rng: &mut R) -> ArmPair {
    let e = resample_arm(&arms.e, rng);
    let c = resample_arm(&arms.c, rng);
    ArmPair::new(e, c)
}

/// Runs `statistic` on `replicates` stratified resamples. Replicate `b` uses
/// its own substream of `seed`, so results do not depend on scheduling.
pub fn bootstrap_replicates<T, F>(arms: &ArmPair, replicates: usize, seed: u64, statistic: F) -> Vec<T>
where
    T: Send,
    F: Fn(&ArmPair) -> T + Sync + Send,
{
    par::map_indices(replicates, |b| {
        let mut rng = replicate_rng(seed, b);
        statistic(&resample_pair(arms, &mut rng))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSe {
    pub se: f64,
    pub valid: usize,
    pub dropped: usize,
}

/// Sample standard deviation over the defined replicates.
pub fn summarize_replicates(values: &[Option<f64>]) -> Result<BootstrapSe> {
    let total = values.len();
    let valid: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let dropped = total - valid.len();
    if valid.len() < 2 || dropped as f64 > MAX_DROP_SHARE * total as f64 {
        return Err(SavvyError::BootstrapUnstable { dropped, total });
    }
    let n = valid.len() as f64;
    let mean = valid.iter().sum::<f64>() / n;
    let ss: f64 = valid.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(BootstrapSe { se: (ss / (n - 1.0)).sqrt(), valid: valid.len(), dropped })
}

/// Bootstrap SE of `log(candidate) − log(gold)`, both recomputed on every
/// replicate. Replicates where either effect is undefined are dropped.
pub fn bootstrap_se(
    arms: &ArmPair,
    candidate: &EffectSpec,
    gold: &EffectSpec,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapSe> {
    if replicates < 2 {
        return Err(SavvyError::InvalidReplicates(replicates));
    }
    let values = bootstrap_replicates(arms, replicates, seed, |rep| {
        let c = candidate.evaluate(rep).ok()?;
        let g = gold.evaluate(rep).ok()?;
        log_ratio_to_gold(&c, &g).ok()
    });
    summarize_replicates(&values)
}

/// Bootstrap SE of a single log effect.
pub fn bootstrap_log_effect_se(arms: &ArmPair, spec: &EffectSpec, replicates: usize, seed: u64) -> Result<BootstrapSe> {
    if replicates < 2 {
        return Err(SavvyError::InvalidReplicates(replicates));
    }
    let values = bootstrap_replicates(arms, replicates, seed, |rep| {
        spec.evaluate(rep).ok().filter(|e| e.point > 0.0).map(|e| e.point.ln())
    });
    summarize_replicates(&values)
}

/// Boxplot inputs on the ratio scale plus the raw samples for density plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub candidate_id: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryReport {
    pub summaries: Vec<RatioSummary>,
    pub warnings: Vec<String>,
}

/// Linear-interpolation (type 7) quantile of sorted, non-empty data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Five-number summaries per candidate. Candidates listed in `expected` that
/// have no records are omitted and reported as warnings.
pub fn summarize_ratios(records: &[RatioRecord], expected: &[String]) -> SummaryReport {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(r.candidate_id.as_str()).or_default().push(r.ratio());
    }
    let mut report = SummaryReport::default();
    for name in expected {
        if !groups.contains_key(name.as_str()) {
            report.warnings.push(format!("no ratio records for candidate {name}; omitted from summary"));
        }
    }
    for (name, ratios) in groups {
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        report.summaries.push(RatioSummary {
            candidate_id: name.to_string(),
            n: sorted.len(),
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            ratios,
        });
    }
    report
}

pub const RATIO_HEADER: [&str; 10] = [
    "trial_id",
    "ae_type_id",
    "candidate",
    "gold",
    "log_ratio",
    "log_ratio_se",
    "pct_censored",
    "pct_ce",
    "eval_time_years",
    "gold_effect",
];

pub fn write_ratio_records<W: Write>(writer: W, records: &[RatioRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RATIO_HEADER)?;
    for r in records {
        let c = &r.covariates;
        w.write_record([
            r.trial_id.clone(),
            r.ae_type_id.clone(),
            r.candidate_id.clone(),
            r.gold_id.clone(),
            r.log_ratio.to_string(),
            r.log_ratio_se.to_string(),
            c.pct_censored.to_string(),
            c.pct_ce.to_string(),
            c.eval_time_years.to_string(),
            c.gold_effect_size.to_string(),
        ])?;
    }
    w.flush().map_err(|e| SavvyError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_ratio_records<R: Read>(reader: R) -> Result<Vec<RatioRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(RATIO_HEADER.iter().copied()) {
        return Err(SavvyError::Csv(format!("unexpected ratio header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| SavvyError::Csv(format!("bad number {:?} in column {}", &row[i], RATIO_HEADER[i])))
        };
        out.push(RatioRecord {
            trial_id: row[0].to_string(),
            ae_type_id: row[1].to_string(),
            candidate_id: row[2].to_string(),
            gold_id: row[3].to_string(),
            log_ratio: num(4)?,
            log_ratio_se: num(5)?,
            covariates: RatioCovariates {
                pct_censored: num(6)?,
                pct_ce: num(7)?,
                eval_time_years: num(8)?,
                gold_effect_size: num(9)?,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EventCode;
    use crate::effects::EffectSource;
    use approx::assert_abs_diff_eq;

    fn effect(point: f64) -> EffectEstimate {
        EffectEstimate {
            scale: EffectScale::RR,
            point,
            log_se: 0.1,
            ci_lower: point * 0.8,
            ci_upper: point * 1.2,
            level: 0.95,
            source: EffectSource::Probability(ProbEstimatorId::AalenJohansen),
            eval_time: Some(1.0),
        }
    }

    #[test]
    fn log_ratio_examples() {
        assert_eq!(log_ratio_to_gold(&effect(2.0), &effect(2.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(log_ratio_to_gold(&effect(1.0), &effect(2.0)).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(
            log_ratio_to_gold(&effect(0.732 * 1.7), &effect(1.7)).unwrap(),
            -0.311_974_765_020_825_5,
            epsilon = 1e-6
        );
        assert!(log_ratio_points(0.0, 1.0).is_err());
        let mut hr = effect(1.0);
        hr.scale = EffectScale::HR;
        assert!(matches!(log_ratio_to_gold(&hr, &effect(1.0)), Err(SavvyError::Mismatch(_))));
    }

    fn constant_arm(n: usize, t: f64, e: EventCode) -> ArmSample {
        ArmSample::new(vec![Observation::new(t, e); n])
    }

    #[test]
    fn degenerate_resampling_has_zero_se() {
        let pair = ArmPair::new(constant_arm(20, 5.0, EventCode::AdverseEvent), constant_arm(20, 7.0, EventCode::AdverseEvent));
        let cand = EffectSpec::ProbabilityRr { estimator: ProbEstimatorId::IdTransformIgnoreCE, tau: 5.0 };
        let gold = EffectSpec::ProbabilityRr { estimator: ProbEstimatorId::AalenJohansen, tau: 5.0 };
        // arm C has no AEs by τ=5, so the RR is undefined; move τ
        assert!(bootstrap_se(&pair, &cand, &gold, 50, 1).is_err());
        let cand = EffectSpec::ProbabilityRr { estimator: ProbEstimatorId::IdTransformIgnoreCE, tau: 7.0 };
        let gold = EffectSpec::ProbabilityRr { estimator: ProbEstimatorId::AalenJohansen, tau: 7.0 };
        let se = bootstrap_se(&pair, &cand, &gold, 50, 1).unwrap();
        assert_eq!(se.se, 0.0);
        assert_eq!(se.dropped, 0);
    }

    #[test]
    fn too_few_replicates() {
        let pair = ArmPair::new(constant_arm(3, 1.0, EventCode::AdverseEvent), constant_arm(3, 1.0, EventCode::AdverseEvent));
        let spec = EffectSpec::ProbabilityRr { estimator: ProbEstimatorId::AalenJohansen, tau: 1.0 };
        assert_eq!(bootstrap_se(&pair, &spec, &spec, 1, 0).unwrap_err(), SavvyError::InvalidReplicates(1));
    }

    #[test]
    fn resample_keeps_sizes_and_order() {
        let obs: Vec<_> = (1..=15).map(|i| Observation::new(i as f64, EventCode::AdverseEvent)).collect();
        let pair = ArmPair::new(ArmSample::new(obs.clone()), ArmSample::new(obs[..7].to_vec()));
        let mut rng = replicate_rng(9, 3);
        let rep = resample_pair(&pair, &mut rng);
        assert_eq!((rep.e.len(), rep.c.len()), (15, 7));
        assert!(rep.e.observations().windows(2).all(|w| w[0].time <= w[1].time));
        let mut rng2 = replicate_rng(9, 3);
        assert_eq!(resample_pair(&pair, &mut rng2), rep);
    }

    #[test]
    fn drop_policy() {
        let mut values = vec![Some(1.0), Some(2.0), None, None];
        assert_eq!(summarize_replicates(&values).unwrap().dropped, 2);
        values.push(None);
        assert_eq!(summarize_replicates(&values).unwrap_err(), SavvyError::BootstrapUnstable { dropped: 3, total: 5 });
    }

    fn record(candidate: &str, log_ratio: f64) -> RatioRecord {
        RatioRecord {
            trial_id: "t".into(),
            ae_type_id: "a".into(),
            candidate_id: candidate.into(),
            gold_id: "aalen_johansen".into(),
            log_ratio,
            log_ratio_se: 0.1,
            covariates: RatioCovariates { pct_censored: 10.0, pct_ce: 20.0, eval_time_years: 1.5, gold_effect_size: 1.2 },
        }
    }

    #[test]
    fn summaries() {
        let one = summarize_ratios(&[record("x", 0.0)], &["x".into()]);
        assert_eq!(one.summaries[0].median, 1.0);
        let three = [record("x", 0.5f64.ln()), record("x", 0.0), record("x", 2f64.ln())];
        let s = &summarize_ratios(&three, &[]).summaries[0];
        assert_abs_diff_eq!(s.median, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.min, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.max, 2.0, epsilon = 1e-15);
        let missing = summarize_ratios(&three, &["x".into(), "y".into()]);
        assert_eq!(missing.summaries.len(), 1);
        assert_eq!(missing.warnings.len(), 1);
        assert!(missing.warnings[0].contains('y'));
    }

    #[test]
    fn ratio_csv_round_trip() {
        let recs = vec![record("x", -0.25), record("y", 0.125)];
        let mut buf = Vec::new();
        write_ratio_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "trial_id,ae_type_id,candidate,gold,log_ratio,log_ratio_se,pct_censored,pct_ce,eval_time_years,gold_effect\n"
        ));
        assert_eq!(read_ratio_records(buf.as_slice()).unwrap(), recs);
    }
}
