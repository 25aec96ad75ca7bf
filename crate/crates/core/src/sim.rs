//! Competing-risks trial generator with known true cumulative incidences.
//!
//! Each subject draws latent AE, death-CE and other-CE times from (piecewise)
//! exponential hazards plus a censoring time; the earliest one is observed.
//! Subject `i` of arm `a` always uses the same RNG substream of the master
//! seed, so parallel and serial generation give identical datasets.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{validate_dataset, AnalysisDataset, Arm, EventCode, SubjectRecord};
use crate::error::{Result, SavvyError};
use crate::par;

/// Hazards in force from `start` until the next segment's start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardSegment {
    pub start: f64,
    pub lambda_ae: f64,
    pub lambda_ce: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Censoring {
    #[default]
    None,
    Uniform {
        max: f64,
    },
    Exponential {
        rate: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Per-arm generating model; rates are per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub lambda_ae: f64,
    pub lambda_ce: f64,
    /// Share of the CE hazard that is death; the rest is other CEs.
    #[serde(default = "one")]
    pub death_share: f64,
    #[serde(default)]
    pub censoring: Censoring,
    /// Replaces the constant rates when non-empty; first segment starts at 0.
    #[serde(default)]
    pub segments: Vec<HazardSegment>,
}

impl ArmConfig {
    pub fn constant(lambda_ae: f64, lambda_ce: f64) -> Self {
        ArmConfig { lambda_ae, lambda_ce, death_share: 1.0, censoring: Censoring::None, segments: Vec::new() }
    }

    pub fn with_censoring(mut self, censoring: Censoring) -> Self {
        self.censoring = censoring;
        self
    }

    pub fn with_death_share(mut self, share: f64) -> Self {
        self.death_share = share;
        self
    }

    pub fn with_segments(mut self, segments: Vec<HazardSegment>) -> Self {
        self.segments = segments;
        self
    }

    pub fn is_constant(&self) -> bool {
        self.segments.len() <= 1
    }

    pub fn hazard_segments(&self) -> Vec<HazardSegment> {
        if self.segments.is_empty() {
            vec![HazardSegment { start: 0.0, lambda_ae: self.lambda_ae, lambda_ce: self.lambda_ce }]
        } else {
            self.segments.clone()
        }
    }

    fn validate(&self, arm: Arm) -> Result<()> {
        let bad = |msg: String| Err(SavvyError::InvalidConfig(format!("arm {arm}: {msg}")));
        let segs = self.hazard_segments();
        if segs[0].start != 0.0 {
            return bad("first hazard segment must start at 0".into());
        }
        if segs.windows(2).any(|w| w[1].start.partial_cmp(&w[0].start) != Some(std::cmp::Ordering::Greater)) {
            return bad("segment starts must increase".into());
        }
        for s in &segs {
            if !(s.lambda_ae.is_finite() && s.lambda_ce.is_finite() && s.start.is_finite()) {
                return bad("rates must be finite".into());
            }
            if s.lambda_ae < 0.0 || s.lambda_ce < 0.0 {
                return bad("rates must be non-negative".into());
            }
        }
        let last = segs[segs.len() - 1];
        if last.lambda_ae + last.lambda_ce <= 0.0 && self.censoring == Censoring::None {
            return bad("need a positive event rate in the last segment or a censoring distribution".into());
        }
        if !segs.iter().any(|s| s.lambda_ae + s.lambda_ce > 0.0) {
            return bad("need at least one positive event rate".into());
        }
        if !(0.0..=1.0).contains(&self.death_share) {
            return bad(format!("death_share {} outside [0, 1]", self.death_share));
        }
        match self.censoring {
            Censoring::Uniform { max } if !(max > 0.0 && max.is_finite()) => {
                bad(format!("uniform censoring bound {max} must be positive"))
            }
            Censoring::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                bad(format!("censoring rate {rate} must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_per_arm: usize,
    pub arm_e: ArmConfig,
    pub arm_c: ArmConfig,
    pub seed: u64,
    #[serde(default = "default_trial")]
    pub trial_id: String,
    #[serde(default = "default_ae")]
    pub ae_type_id: String,
}

fn default_trial() -> String {
    "sim".into()
}

fn default_ae() -> String {
    "ae".into()
}

impl SimConfig {
    pub fn new(n_per_arm: usize, arm_e: ArmConfig, arm_c: ArmConfig, seed: u64) -> Self {
        SimConfig { n_per_arm, arm_e, arm_c, seed, trial_id: default_trial(), ae_type_id: default_ae() }
    }

    pub fn arm(&self, arm: Arm) -> &ArmConfig {
        match arm {
            Arm::E => &self.arm_e,
            Arm::C => &self.arm_c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_arm == 0 {
            return Err(SavvyError::InvalidConfig("n_per_arm must be positive".into()));
        }
        self.arm_e.validate(Arm::E)?;
        self.arm_c.validate(Arm::C)
    }
}

pub fn subject_rng(seed: u64, arm: Arm, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arm_bit: u64 = match arm {
        Arm::E => 0,
        Arm::C => 1,
    };
    rng.set_stream((arm_bit << 40) | index as u64);
    rng
}

// uniform on the open interval (0, 1)
fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Inverts the cumulative hazard of a piecewise-constant rate at `target`.
fn invert_cumulative(segs: &[HazardSegment], rate: impl Fn(&HazardSegment) -> f64, mut target: f64) -> f64 {
    for (i, s) in segs.iter().enumerate() {
        let r = rate(s);
        let end = segs.get(i + 1).map_or(f64::INFINITY, |n| n.start);
        let width = end - s.start;
        if r > 0.0 {
            if r * width >= target {
                return s.start + target / r;
            }
            target -= r * width;
        }
    }
    f64::INFINITY
}

fn simulate_subject(cfg: &ArmConfig, segs: &[HazardSegment], rng: &mut ChaCha8Rng) -> (f64, EventCode) {
    let share = cfg.death_share;
    let ae = invert_cumulative(segs, |s| s.lambda_ae, -open_unit(rng).ln());
    let death = invert_cumulative(segs, |s| s.lambda_ce * share, -open_unit(rng).ln());
    let other = invert_cumulative(segs, |s| s.lambda_ce * (1.0 - share), -open_unit(rng).ln());
    let censor = match cfg.censoring {
        Censoring::None => f64::INFINITY,
        Censoring::Uniform { max } => open_unit(rng) * max,
        Censoring::Exponential { rate } => -open_unit(rng).ln() / rate,
    };
    // ties resolve in this order
    [(ae, EventCode::AdverseEvent), (death, EventCode::DeathCE), (other, EventCode::OtherCE), (censor, EventCode::Censored)]
        .into_iter()
        .fold((f64::INFINITY, EventCode::Censored), |best, cand| if cand.0 < best.0 { cand } else { best })
}

pub fn simulate_trial(cfg: &SimConfig) -> Result<AnalysisDataset> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(2 * cfg.n_per_arm);
    for arm in Arm::BOTH {
        let arm_cfg = cfg.arm(arm);
        let segs = arm_cfg.hazard_segments();
        let rows = par::map_indices(cfg.n_per_arm, |i| {
            let mut rng = subject_rng(cfg.seed, arm, i);
            let (time, event) = simulate_subject(arm_cfg, &segs, &mut rng);
            SubjectRecord::new(format!("{arm}{i:06}"), arm, time, event)
        });
        records.extend(rows);
    }
    validate_dataset(cfg.trial_id.clone(), cfg.ae_type_id.clone(), records)
}

/// True probabilities by τ for the AE, any CE, and remaining event-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueState {
    pub cif_ae: f64,
    pub cif_ce: f64,
    pub survival: f64,
}

pub fn true_state(cfg: &ArmConfig, tau: f64) -> TrueState {
    let segs = cfg.hazard_segments();
    let mut survival = 1.0;
    let (mut cif_ae, mut cif_ce) = (0.0, 0.0);
    for (i, s) in segs.iter().enumerate() {
        if s.start >= tau {
            break;
        }
        let end = segs.get(i + 1).map_or(f64::INFINITY, |n| n.start).min(tau);
        let total = s.lambda_ae + s.lambda_ce;
        if total > 0.0 {
            let mass = survival * -(-total * (end - s.start)).exp_m1();
            cif_ae += mass * s.lambda_ae / total;
            cif_ce += mass * s.lambda_ce / total;
            survival *= (-total * (end - s.start)).exp();
        }
    }
    TrueState { cif_ae, cif_ce, survival }
}

/// True AE cumulative incidence of `arm` at τ (censoring plays no role).
pub fn true_cif(cfg: &SimConfig, arm: Arm, tau: f64) -> f64 {
    true_state(cfg.arm(arm), tau).cif_ae
}
