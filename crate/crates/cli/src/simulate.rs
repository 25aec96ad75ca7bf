//! Simulated corpora: one CSV per dataset plus a manifest and the true rates.

use std::path::Path;

use anyhow::Context;
use serde_json::json;

use savvy_core::data::{write_subjects, DAYS_PER_YEAR};
use savvy_core::sim::{simulate_trial, true_cif, ArmConfig, Censoring, SimConfig};
use savvy_core::{par, Arm};

use crate::config::{ConfigError, SimulateSection, DEFAULT_SEED};
use crate::inputs::{DatasetSource, MANIFEST_NAME};
use crate::pipeline::derive_seed;
use crate::report::BundleWriter;

fn pick(list: &[f64], seed: u64, parts: &[&str]) -> f64 {
    list[(derive_seed(seed, parts) % list.len() as u64) as usize]
}

/// Generating configs for every dataset of the corpus.
pub fn corpus_configs(sec: &SimulateSection) -> Result<Vec<SimConfig>, ConfigError> {
    sec.validate()?;
    let seed = sec.seed.unwrap_or(DEFAULT_SEED);
    let mut out = Vec::with_capacity(sec.datasets);
    for i in 0..sec.datasets {
        let tag = i.to_string();
        let (arm_e, arm_c) = match (&sec.arm_e, &sec.arm_c, &sec.grid) {
            (Some(e), Some(c), _) => (e.clone(), c.clone()),
            (_, _, Some(g)) => {
                let arm = |name: &str| {
                    let ae = pick(&g.lambda_ae_per_year, seed, &["grid", &tag, name, "ae"]) / DAYS_PER_YEAR;
                    let ce = pick(&g.lambda_ce_per_year, seed, &["grid", &tag, name, "ce"]) / DAYS_PER_YEAR;
                    ArmConfig::constant(ae, ce)
                        .with_death_share(g.death_share)
                        .with_censoring(Censoring::Uniform { max: g.censoring_max_days })
                };
                (arm("E"), arm("C"))
            }
            _ => unreachable!("validated"),
        };
        let mut cfg = SimConfig::new(sec.n_per_arm, arm_e, arm_c, derive_seed(seed, &["subjects", &tag]));
        cfg.trial_id = format!("sim{i:04}");
        cfg.ae_type_id = "ae".into();
        cfg.validate().map_err(|e| ConfigError(format!("dataset {i}: {e}")))?;
        out.push(cfg);
    }
    Ok(out)
}

/// Writes the corpus to `dir` and returns its datasets.
pub fn write_corpus(sec: &SimulateSection, dir: &Path) -> anyhow::Result<Vec<DatasetSource>> {
    let configs = corpus_configs(sec)?;
    let datasets = par::map_slice(&configs, simulate_trial);
    let mut w = BundleWriter::new(dir)?;
    let mut sources = Vec::new();
    let mut truth = Vec::new();
    for (cfg, ds) in configs.iter().zip(datasets) {
        let ds = ds?;
        let name = format!("{}__{}.csv", cfg.trial_id, cfg.ae_type_id);
        let path = dir.join(&name);
        let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        write_subjects(file, ds.records())?;
        sources.push(DatasetSource { trial_id: cfg.trial_id.clone(), ae_type_id: cfg.ae_type_id.clone(), path });
        let tau = ds.tau_max();
        truth.push(json!({
            "trial_id": cfg.trial_id,
            "ae_type_id": cfg.ae_type_id,
            "seed": cfg.seed,
            "arm_e": cfg.arm_e,
            "arm_c": cfg.arm_c,
            "tau_max": tau,
            "true_cif_e": true_cif(cfg, Arm::E, tau),
            "true_cif_c": true_cif(cfg, Arm::C, tau),
        }));
    }
    let rows = sources
        .iter()
        .map(|s| vec![s.trial_id.clone(), s.ae_type_id.clone(), s.path.file_name().unwrap().to_string_lossy().into_owned()]);
    w.csv(MANIFEST_NAME, &["trial_id", "ae_type_id", "path"], rows)?;
    w.json("truth.json", &json!({ "datasets": truth }))?;
    Ok(sources)
}
