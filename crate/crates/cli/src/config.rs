//! Run configuration: a TOML file with `[run]` and `[simulate]` sections,
//! overridden field by field by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use savvy_core::hazard::{Ties, DEFAULT_MIN_EVENTS};
use savvy_core::meta::TauMethod;
use savvy_core::sim::ArmConfig;
use savvy_core::CeMode;

/// Evaluation quantiles accepted for τ.
pub const ALLOWED_QUANTILES: [f64; 4] = [1.0, 0.9, 0.6, 0.3];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    pub simulate: Option<SimulateSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        FileConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<FileConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }
}

/// Raw `[run]` values; every field is optional so flags can fill the gaps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub inputs: Option<Vec<PathBuf>>,
    pub manifest: Option<PathBuf>,
    pub quantiles: Option<Vec<f64>>,
    pub ce_modes: Option<Vec<String>>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub min_events: Option<usize>,
    pub output: Option<PathBuf>,
    pub formats: Option<Vec<String>>,
    pub tau_method: Option<String>,
    pub ties: Option<String>,
}

impl RunSection {
    /// Fields set in `flags` win over the file values.
    pub fn overridden_by(self, flags: RunSection) -> RunSection {
        RunSection {
            inputs: flags.inputs.or(self.inputs),
            manifest: flags.manifest.or(self.manifest),
            quantiles: flags.quantiles.or(self.quantiles),
            ce_modes: flags.ce_modes.or(self.ce_modes),
            replicates: flags.replicates.or(self.replicates),
            seed: flags.seed.or(self.seed),
            min_events: flags.min_events.or(self.min_events),
            output: flags.output.or(self.output),
            formats: flags.formats.or(self.formats),
            tau_method: flags.tau_method.or(self.tau_method),
            ties: flags.ties.or(self.ties),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUTPUT: &str = "savvy-out";

/// Validated settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub quantiles: Vec<f64>,
    pub ce_modes: Vec<CeMode>,
    pub replicates: usize,
    pub seed: u64,
    pub min_events: usize,
    pub output: PathBuf,
    pub formats: Vec<ReportFormat>,
    pub tau_method: TauMethod,
    pub ties: Ties,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(RunSection::default()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn resolve(raw: RunSection) -> Result<RunConfig, ConfigError> {
        let quantiles = match raw.quantiles {
            None => ALLOWED_QUANTILES.to_vec(),
            Some(qs) => {
                let mut out: Vec<f64> = Vec::new();
                for q in qs {
                    let Some(&canon) = ALLOWED_QUANTILES.iter().find(|&&a| (a - q).abs() < 1e-12) else {
                        return invalid(format!("quantile {q} not in {{1.0, 0.9, 0.6, 0.3}}"));
                    };
                    if !out.contains(&canon) {
                        out.push(canon);
                    }
                }
                if out.is_empty() {
                    return invalid("at least one quantile is required");
                }
                out
            }
        };

        let ce_modes = match raw.ce_modes {
            None => vec![CeMode::AllCE],
            Some(names) => {
                let mut out = Vec::new();
                for name in names {
                    let mode: CeMode = name.parse().map_err(|e: savvy_core::SavvyError| ConfigError(e.to_string()))?;
                    if mode == CeMode::CompositeAsEvent {
                        return invalid("composite is always analysed separately; use all_ce or death_only");
                    }
                    if !out.contains(&mode) {
                        out.push(mode);
                    }
                }
                if out.is_empty() {
                    return invalid("at least one CE mode is required");
                }
                out
            }
        };

        let replicates = raw.replicates.unwrap_or(savvy_core::benchmark::DEFAULT_REPLICATES);
        if replicates < 2 {
            return invalid(format!("replicates must be at least 2, got {replicates}"));
        }
        let min_events = raw.min_events.unwrap_or(DEFAULT_MIN_EVENTS);
        if min_events < 1 {
            return invalid("min_events must be at least 1");
        }

        let formats = match raw.formats {
            None => vec![ReportFormat::Csv],
            Some(names) => {
                let mut out = vec![ReportFormat::Csv];
                for name in names {
                    match name.as_str() {
                        "csv" => {}
                        "json" => {
                            if !out.contains(&ReportFormat::Json) {
                                out.push(ReportFormat::Json)
                            }
                        }
                        other => return invalid(format!("unknown report format {other:?}")),
                    }
                }
                out
            }
        };

        let tau_method = match raw.tau_method {
            None => TauMethod::default(),
            Some(s) => s.parse().map_err(|e: savvy_core::SavvyError| ConfigError(e.to_string()))?,
        };
        let ties = match raw.ties {
            None => Ties::default(),
            Some(s) => s.parse().map_err(|e: savvy_core::SavvyError| ConfigError(e.to_string()))?,
        };

        Ok(RunConfig {
            inputs: raw.inputs.unwrap_or_default(),
            manifest: raw.manifest,
            quantiles,
            ce_modes,
            replicates,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            min_events,
            output: raw.output.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
            formats,
            tau_method,
            ties,
        })
    }

    pub fn require_inputs(&self) -> Result<(), ConfigError> {
        if self.inputs.is_empty() && self.manifest.is_none() {
            return invalid("no inputs: give input paths or a manifest");
        }
        Ok(())
    }

    /// Settings echoed into the run manifest. The output directory is left
    /// out so bundles written to different places compare equal.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "inputs": self.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "manifest": self.manifest.as_ref().map(|p| p.display().to_string()),
            "quantiles": self.quantiles,
            "ce_modes": self.ce_modes.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "replicates": self.replicates,
            "seed": self.seed,
            "min_events": self.min_events,
            "formats": self.formats.iter().map(|f| f.as_str()).collect::<Vec<_>>(),
            "tau_method": self.tau_method.as_str(),
            "ties": self.ties.as_str(),
        })
    }
}

/// Rates drawn per dataset from these lists (per year), with uniform censoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateGrid {
    pub lambda_ae_per_year: Vec<f64>,
    pub lambda_ce_per_year: Vec<f64>,
    pub censoring_max_days: f64,
    #[serde(default = "half")]
    pub death_share: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub datasets: usize,
    pub n_per_arm: usize,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub arm_e: Option<ArmConfig>,
    pub arm_c: Option<ArmConfig>,
    pub grid: Option<RateGrid>,
}

impl SimulateSection {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_per_arm == 0 {
            return invalid("simulate.n_per_arm must be positive");
        }
        match (&self.arm_e, &self.arm_c, &self.grid) {
            (Some(_), Some(_), None) => Ok(()),
            (None, None, Some(g)) => {
                let ok = |v: &[f64]| !v.is_empty() && v.iter().all(|x| x.is_finite() && *x >= 0.0);
                if !ok(&g.lambda_ae_per_year) || !ok(&g.lambda_ce_per_year) {
                    return invalid("simulate.grid rate lists must be non-empty, finite and non-negative");
                }
                if !g.lambda_ae_per_year.iter().any(|&x| x > 0.0) {
                    return invalid("simulate.grid needs a positive AE rate");
                }
                if !(g.censoring_max_days > 0.0 && g.censoring_max_days.is_finite()) {
                    return invalid("simulate.grid.censoring_max_days must be positive");
                }
                if !(0.0..=1.0).contains(&g.death_share) {
                    return invalid("simulate.grid.death_share must lie in [0, 1]");
                }
                Ok(())
            }
            _ => invalid("simulate needs either arm_e and arm_c, or grid"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.quantiles, ALLOWED_QUANTILES.to_vec());
        assert_eq!(cfg.ce_modes, vec![CeMode::AllCE]);
        assert_eq!(cfg.replicates, 1000);
        assert_eq!(cfg.min_events, 10);
        assert!(cfg.require_inputs().is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = FileConfig::parse("[run]\nseed = 5\nreplicates = 50\nquantiles = [0.9]\n").unwrap();
        let flags = RunSection { seed: Some(9), ..Default::default() };
        let cfg = RunConfig::resolve(file.run.overridden_by(flags)).unwrap();
        assert_eq!((cfg.seed, cfg.replicates, cfg.quantiles.clone()), (9, 50, vec![0.9]));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |raw: RunSection| RunConfig::resolve(raw).is_err();
        assert!(bad(RunSection { quantiles: Some(vec![0.5]), ..Default::default() }));
        assert!(bad(RunSection { replicates: Some(1), ..Default::default() }));
        assert!(bad(RunSection { min_events: Some(0), ..Default::default() }));
        assert!(bad(RunSection { ce_modes: Some(vec!["composite".into()]), ..Default::default() }));
        assert!(bad(RunSection { ties: Some("exact".into()), ..Default::default() }));
        assert!(FileConfig::parse("[run]\nunknown = 1\n").is_err());
    }
}
