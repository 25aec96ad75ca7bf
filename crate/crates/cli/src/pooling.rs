//! Pools ratio records: random-effects averages, meta-regressions and
//! distribution summaries per (table, candidate).

use std::collections::BTreeMap;

use savvy_core::benchmark::{summarize_ratios, RatioRecord, RatioSummary};
use savvy_core::meta::{meta_regression_records, random_effects_meta_with, Covariate, MetaRegResult, MetaResult, TauMethod};

#[derive(Debug, Clone, PartialEq)]
pub struct AverageRow {
    pub table: String,
    pub candidate: String,
    pub result: Result<MetaResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    pub table: String,
    pub candidate: String,
    /// `univariable` or `multivariable`.
    pub model: &'static str,
    pub covariates: Vec<Covariate>,
    pub result: Result<MetaRegResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub table: String,
    pub summary: RatioSummary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pooled {
    pub averages: Vec<AverageRow>,
    pub regressions: Vec<RegressionRow>,
    pub summaries: Vec<SummaryRow>,
    pub warnings: Vec<String>,
}

/// One table's records plus the candidates it is expected to contain.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRecords {
    pub table: String,
    pub expected: Vec<String>,
    pub records: Vec<RatioRecord>,
}

pub fn pool(groups: &[TableRecords], method: TauMethod) -> Pooled {
    let mut out = Pooled::default();
    for group in groups {
        let report = summarize_ratios(&group.records, &group.expected);
        out.warnings.extend(report.warnings.iter().map(|w| format!("{}: {w}", group.table)));
        out.summaries.extend(report.summaries.into_iter().map(|summary| SummaryRow { table: group.table.clone(), summary }));

        let mut by_candidate: BTreeMap<&str, Vec<RatioRecord>> = BTreeMap::new();
        for r in &group.records {
            by_candidate.entry(r.candidate_id.as_str()).or_default().push(r.clone());
        }
        // expected candidates first, in their given order, then any others
        let mut order: Vec<&str> = group.expected.iter().map(String::as_str).filter(|c| by_candidate.contains_key(c)).collect();
        order.extend(by_candidate.keys().copied().filter(|c| !group.expected.iter().any(|e| e == c)));

        for cand in order {
            let records = &by_candidate[cand];
            let y: Vec<f64> = records.iter().map(|r| r.log_ratio).collect();
            let se: Vec<f64> = records.iter().map(|r| r.log_ratio_se).collect();
            out.averages.push(AverageRow {
                table: group.table.clone(),
                candidate: cand.to_string(),
                result: random_effects_meta_with(&y, &se, method, 0.95).map_err(|e| e.to_string()),
            });
            let mut models: Vec<(&'static str, Vec<Covariate>)> =
                Covariate::ALL.iter().map(|&c| ("univariable", vec![c])).collect();
            models.push(("multivariable", Covariate::MULTIVARIABLE.to_vec()));
            for (model, covariates) in models {
                let result = meta_regression_records(records, &covariates, method).map_err(|e| e.to_string());
                out.regressions.push(RegressionRow {
                    table: group.table.clone(),
                    candidate: cand.to_string(),
                    model,
                    covariates,
                    result,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use savvy_core::benchmark::RatioCovariates;

    fn rec(cand: &str, lr: f64, cens: f64) -> RatioRecord {
        RatioRecord {
            trial_id: "t".into(),
            ae_type_id: format!("{lr}"),
            candidate_id: cand.into(),
            gold_id: "g".into(),
            log_ratio: lr,
            log_ratio_se: 0.1,
            covariates: RatioCovariates {
                pct_censored: cens,
                pct_ce: 2.0 * cens,
                eval_time_years: 1.0 + cens,
                gold_effect_size: 1.0,
            },
        }
    }

    #[test]
    fn empty_and_missing_candidates() {
        let groups = vec![TableRecords {
            table: "x".into(),
            expected: vec!["a".into(), "b".into()],
            records: vec![rec("a", 0.0, 1.0), rec("a", 0.2, 3.0)],
        }];
        let p = pool(&groups, TauMethod::DerSimonianLaird);
        assert_eq!(p.averages.len(), 1);
        let avg = p.averages[0].result.as_ref().unwrap();
        assert!((avg.mu - 0.1).abs() < 1e-12 && (avg.tau2 - 0.01).abs() < 1e-12);
        assert_eq!(p.warnings.len(), 1);
        // k = 2 cannot support a slope plus intercept plus residual variance
        assert!(p.regressions.iter().all(|r| r.result.is_err()));
        assert!(pool(&[], TauMethod::DerSimonianLaird).averages.is_empty());
    }
}
