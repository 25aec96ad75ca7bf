//! Writes a run bundle as tidy CSV (plus optional JSON) under one directory.
//! Nothing time- or host-dependent is written, so equal inputs give
//! byte-identical bundles.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::json;

use savvy_core::benchmark::{write_ratio_records, RatioRecord};
use savvy_core::effects::{category_crosstab, EvidenceCategory};
use savvy_core::meta::Covariate;
use savvy_core::prob::ProbEstimatorId;
use savvy_core::Arm;

use crate::config::{ReportFormat, RunConfig};
use crate::describe::{DescribeRow, DESCRIBE_HEADER};
use crate::inputs::DatasetSource;
use crate::pipeline::{Bundle, Table};
use crate::pooling::{Pooled, TableRecords};

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Tracks every file written below `root`.
pub struct BundleWriter {
    root: PathBuf,
    files: BTreeSet<String>,
}

impl BundleWriter {
    pub fn new(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(BundleWriter { root: root.to_path_buf(), files: BTreeSet::new() })
    }

    fn path(&mut self, rel: &str) -> anyhow::Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        self.files.insert(rel.to_string());
        Ok(path)
    }

    pub fn csv<I>(&mut self, rel: &str, header: &[&str], rows: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(rel)?;
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn ratios(&mut self, rel: &str, records: &[RatioRecord]) -> anyhow::Result<()> {
        let path = self.path(rel)?;
        let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        write_ratio_records(file, records)?;
        Ok(())
    }

    pub fn json(&mut self, rel: &str, value: &serde_json::Value) -> anyhow::Result<()> {
        let path = self.path(rel)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn files(&self) -> Vec<String> {
        self.files.iter().cloned().collect()
    }
}

/// Candidates each ratio table is expected to contain.
pub fn expected_candidates(table: Table) -> Vec<String> {
    match table {
        Table::Probability { .. } => ProbEstimatorId::CANDIDATES.iter().map(|c| c.as_str().to_string()).collect(),
        Table::Hazard { .. } => vec![savvy_core::hazard::HazardMethod::IncidenceDensityRatio.as_str().to_string()],
        Table::Composite { .. } => Vec::new(),
    }
}

pub fn table_records(bundle: &Bundle) -> Vec<TableRecords> {
    bundle
        .tables
        .iter()
        .filter(|t| t.has_ratios())
        .map(|&t| TableRecords { table: t.name(), expected: expected_candidates(t), records: bundle.ratio_records(t) })
        .collect()
}

pub fn write_describe(w: &mut BundleWriter, rows: &[DescribeRow]) -> anyhow::Result<()> {
    w.csv("describe.csv", &DESCRIBE_HEADER, rows.iter().map(|r| r.fields().to_vec()))
}

/// Per-dataset artifacts: estimates, effects, ratio samples, cross-tabs,
/// composite results and the exclusion report.
pub fn write_analysis(w: &mut BundleWriter, cfg: &RunConfig, bundle: &Bundle) -> anyhow::Result<()> {
    for &mode in &cfg.ce_modes {
        let dir = mode.as_str();
        let rows = bundle.outcomes.iter().flat_map(|o| {
            o.estimates.iter().filter(move |e| e.mode == mode).map(move |e| {
                vec![
                    o.source.trial_id.clone(),
                    o.source.ae_type_id.clone(),
                    (e.pct as f64 / 100.0).to_string(),
                    num(e.estimate.eval_time),
                    e.estimate.arm.to_string(),
                    e.estimate.estimator.to_string(),
                    num(e.estimate.value),
                    num(e.estimate.variance),
                    num(e.estimate.se()),
                ]
            })
        });
        w.csv(
            &format!("{dir}/estimates.csv"),
            &["trial_id", "ae_type_id", "quantile", "eval_time", "arm", "estimator", "value", "variance", "se"],
            rows,
        )?;

        let rows = bundle.outcomes.iter().flat_map(|o| {
            o.effects.iter().filter(move |e| e.table.dir() == dir).map(move |e| {
                vec![
                    o.source.trial_id.clone(),
                    o.source.ae_type_id.clone(),
                    e.table.leaf(),
                    e.estimator.clone(),
                    format!("{:?}", e.effect.scale),
                    num(e.effect.point),
                    num(e.effect.log_se),
                    num(e.effect.ci_lower),
                    num(e.effect.ci_upper),
                    e.category.to_string(),
                ]
            })
        });
        w.csv(
            &format!("{dir}/effects.csv"),
            &["trial_id", "ae_type_id", "table", "estimator", "scale", "point", "log_se", "ci_lower", "ci_upper", "category"],
            rows,
        )?;
    }

    let mut crosstab_summary = Vec::new();
    for &table in &bundle.tables {
        match table {
            Table::Probability { .. } | Table::Hazard { .. } => {
                w.ratios(&format!("{}/ratios_{}.csv", table.dir(), table.leaf()), &bundle.ratio_records(table))?;
                if let Table::Probability { .. } = table {
                    let rows = bundle.outcomes.iter().flat_map(|o| {
                        o.arm_ratios.iter().filter(move |r| r.table == table).map(move |r| {
                            vec![
                                o.source.trial_id.clone(),
                                o.source.ae_type_id.clone(),
                                r.arm.to_string(),
                                r.candidate.to_string(),
                                num(r.ratio),
                            ]
                        })
                    });
                    w.csv(
                        &format!("{}/arm_ratios_{}.csv", table.dir(), table.leaf()),
                        &["trial_id", "ae_type_id", "arm", "candidate", "ratio_to_gold"],
                        rows,
                    )?;
                }
                let mut rows = Vec::new();
                for cand in expected_candidates(table) {
                    let pairs: Vec<(EvidenceCategory, EvidenceCategory)> = bundle
                        .outcomes
                        .iter()
                        .flat_map(|o| o.categories.iter())
                        .filter(|p| p.table == table && p.candidate == cand)
                        .map(|p| (p.candidate_category, p.gold_category))
                        .collect();
                    let tab = category_crosstab(&pairs);
                    for row_cat in EvidenceCategory::ALL {
                        let mut row = vec![cand.clone(), row_cat.to_string()];
                        row.extend(EvidenceCategory::ALL.iter().map(|&g| tab.cell(row_cat, g).to_string()));
                        rows.push(row);
                    }
                    let agree: usize = EvidenceCategory::ALL.iter().map(|&c| tab.cell(c, c)).sum();
                    crosstab_summary.push(vec![
                        table.name(),
                        cand,
                        tab.total().to_string(),
                        agree.to_string(),
                        tab.upgrades().to_string(),
                        tab.downgrades().to_string(),
                    ]);
                }
                let mut header = vec!["candidate", "candidate_category"];
                header.extend(EvidenceCategory::ALL.iter().map(|c| c.as_str()));
                w.csv(&format!("{}/crosstab_{}.csv", table.dir(), table.leaf()), &header, rows)?;
            }
            Table::Composite { pct } => {
                let rows = bundle.outcomes.iter().flat_map(|o| {
                    o.composites.iter().filter(move |c| c.pct == pct).map(move |c| {
                        let r = &c.result;
                        vec![
                            o.source.trial_id.clone(),
                            o.source.ae_type_id.clone(),
                            num(c.eval_time),
                            num(r.ip(Arm::E).value),
                            num(r.km(Arm::E).value),
                            num(r.ip(Arm::C).value),
                            num(r.km(Arm::C).value),
                            opt(r.arm_ratio(Arm::E)),
                            opt(r.arm_ratio(Arm::C)),
                            opt(r.rr_ip.map(|e| e.point)),
                            opt(r.rr_km.map(|e| e.point)),
                            opt(r.rr_ratio),
                        ]
                    })
                });
                w.csv(
                    &format!("composite/composite_{}.csv", table.leaf()),
                    &[
                        "trial_id",
                        "ae_type_id",
                        "eval_time",
                        "ip_e",
                        "km_e",
                        "ip_c",
                        "km_c",
                        "ip_km_ratio_e",
                        "ip_km_ratio_c",
                        "rr_ip",
                        "rr_km",
                        "rr_ratio",
                    ],
                    rows,
                )?;
            }
        }
    }
    w.csv("crosstab_summary.csv", &["table", "candidate", "total", "agree", "upgrades", "downgrades"], crosstab_summary)?;

    let mut exclusions = Vec::new();
    for o in &bundle.outcomes {
        for (t, s) in &o.statuses {
            if s.label() != "analyzed" {
                exclusions.push(vec![
                    t.name(),
                    o.source.trial_id.clone(),
                    o.source.ae_type_id.clone(),
                    s.label().to_string(),
                    s.reason().to_string(),
                ]);
            }
        }
    }
    w.csv("exclusions.csv", &["table", "trial_id", "ae_type_id", "status", "reason"], exclusions)?;
    w.csv("exclusions_summary.csv", &["table", "total", "analyzed", "excluded", "failed"], accounting_rows(bundle))?;
    Ok(())
}

fn accounting_rows(bundle: &Bundle) -> Vec<Vec<String>> {
    bundle
        .tables
        .iter()
        .map(|&t| {
            let a = bundle.accounting(t);
            vec![t.name(), a.total().to_string(), a.analyzed.to_string(), a.excluded.to_string(), a.failed.to_string()]
        })
        .collect()
}

pub fn write_pooled(w: &mut BundleWriter, cfg: &RunConfig, pooled: &Pooled) -> anyhow::Result<()> {
    let method = cfg.tau_method.as_str();
    let rows = pooled.averages.iter().map(|a| match &a.result {
        Ok(m) => {
            let (lo, hi) = m.exp_ci();
            vec![
                a.table.clone(),
                a.candidate.clone(),
                m.k.to_string(),
                num(m.mu),
                num(m.se_mu),
                num(m.tau2),
                num(m.q_stat),
                num(m.exp_mu),
                num(lo),
                num(hi),
                method.to_string(),
                String::new(),
            ]
        }
        Err(e) => {
            let mut row = vec![a.table.clone(), a.candidate.clone()];
            row.extend(std::iter::repeat_n(String::new(), 8));
            row.extend([method.to_string(), e.clone()]);
            row
        }
    });
    w.csv(
        "meta_average.csv",
        &["table", "candidate", "k", "mu", "se_mu", "tau2", "q_stat", "average_ratio", "ci_lower", "ci_upper", "method", "note"],
        rows,
    )?;

    let mut rows = Vec::new();
    for r in &pooled.regressions {
        let model = match r.model {
            "univariable" => format!("univariable:{}", r.covariates[0]),
            m => m.to_string(),
        };
        let base = vec![r.table.clone(), r.candidate.clone(), model];
        match &r.result {
            Ok(fit) => {
                let mut push = |term: &str, center: String, unit: f64, c: &savvy_core::meta::Coefficient| {
                    let (ratio, lo, hi) = c.multiplicative(unit);
                    let mut row = base.clone();
                    row.extend([
                        term.to_string(),
                        center,
                        num(unit),
                        num(c.estimate),
                        num(c.se),
                        num(ratio),
                        num(lo),
                        num(hi),
                        fit.k.to_string(),
                        num(fit.tau2),
                        String::new(),
                    ]);
                    rows.push(row);
                };
                push("intercept", String::new(), 1.0, &fit.intercept);
                for ((cov, slope), center) in r.covariates.iter().zip(&fit.slopes).zip(&fit.centers) {
                    push(cov.as_str(), num(*center), Covariate::report_unit(*cov), slope);
                }
            }
            Err(e) => {
                let mut row = base.clone();
                row.extend(std::iter::repeat_n(String::new(), 10));
                row.push(e.clone());
                rows.push(row);
            }
        }
    }
    w.csv(
        "meta_regression.csv",
        &[
            "table",
            "candidate",
            "model",
            "term",
            "center",
            "unit",
            "estimate",
            "se",
            "ratio_per_unit",
            "ci_lower",
            "ci_upper",
            "k",
            "tau2",
            "note",
        ],
        rows,
    )?;

    let rows = pooled.summaries.iter().map(|s| {
        let m = &s.summary;
        vec![
            s.table.clone(),
            m.candidate_id.clone(),
            m.n.to_string(),
            num(m.min),
            num(m.q1),
            num(m.median),
            num(m.q3),
            num(m.max),
        ]
    });
    w.csv("ratio_summary.csv", &["table", "candidate", "n", "min", "q1", "median", "q3", "max"], rows)?;

    if cfg.formats.contains(&ReportFormat::Json) {
        let averages: Vec<_> = pooled
            .averages
            .iter()
            .map(|a| match &a.result {
                Ok(m) => json!({"table": a.table, "candidate": a.candidate, "k": m.k, "mu": m.mu, "tau2": m.tau2,
                    "average_ratio": m.exp_mu, "ci": [m.exp_ci().0, m.exp_ci().1]}),
                Err(e) => json!({"table": a.table, "candidate": a.candidate, "error": e}),
            })
            .collect();
        w.json("meta.json", &json!({ "method": method, "averages": averages, "warnings": pooled.warnings }))?;
    }
    Ok(())
}

pub fn write_manifest(
    w: &mut BundleWriter,
    command: &str,
    cfg: &RunConfig,
    sources: &[DatasetSource],
    bundle: Option<&Bundle>,
) -> anyhow::Result<()> {
    let datasets: Vec<_> = sources
        .iter()
        .map(|s| json!({"trial_id": s.trial_id, "ae_type_id": s.ae_type_id, "path": s.path.display().to_string()}))
        .collect();
    let tables: Vec<_> = bundle
        .map(|b| {
            b.tables
                .iter()
                .map(|&t| {
                    let a = b.accounting(t);
                    json!({"table": t.name(), "total": a.total(), "analyzed": a.analyzed, "excluded": a.excluded, "failed": a.failed})
                })
                .collect()
        })
        .unwrap_or_default();
    let mut files = w.files();
    files.push("manifest.json".into());
    files.sort();
    let value = json!({
        "tool": "savvy",
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": savvy_core::VERSION,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "datasets": datasets,
        "tables": tables,
        "files": files,
    });
    w.json("manifest.json", &value)
}
