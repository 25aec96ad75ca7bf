//! Subject-level data: event taxonomy, validated two-arm datasets, CSV
//! ingestion and evaluation-time resolution.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SavvyError};

/// Days per year used whenever times are reported in years.
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    /// Experimental treatment.
    E,
    /// Control.
    C,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::E, Arm::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::E => "E",
            Arm::C => "C",
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::E => Arm::C,
            Arm::C => Arm::E,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = SavvyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "E" => Ok(Arm::E),
            "C" => Ok(Arm::C),
            other => Err(SavvyError::InvalidInput(format!("unknown arm {other:?}"))),
        }
    }
}

/// Type of the first event a subject experienced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventCode {
    Censored,
    AdverseEvent,
    DeathCE,
    OtherCE,
}

impl EventCode {
    pub fn code(self) -> u8 {
        match self {
            EventCode::Censored => 0,
            EventCode::AdverseEvent => 1,
            EventCode::DeathCE => 2,
            EventCode::OtherCE => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventCode::Censored => "censored",
            EventCode::AdverseEvent => "ae",
            EventCode::DeathCE => "ce_death",
            EventCode::OtherCE => "ce_other",
        }
    }

    pub fn is_competing(self) -> bool {
        matches!(self, EventCode::DeathCE | EventCode::OtherCE)
    }

    // Events sort before censorings at equal times.
    fn tie_rank(self) -> u8 {
        match self {
            EventCode::AdverseEvent => 0,
            EventCode::DeathCE => 1,
            EventCode::OtherCE => 2,
            EventCode::Censored => 3,
        }
    }
}

impl FromStr for EventCode {
    type Err = SavvyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" | "censored" => Ok(EventCode::Censored),
            "1" | "ae" => Ok(EventCode::AdverseEvent),
            "2" | "ce_death" => Ok(EventCode::DeathCE),
            "3" | "ce_other" => Ok(EventCode::OtherCE),
            other => Err(SavvyError::InvalidInput(format!("unknown event code {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub arm: Arm,
    pub time: f64,
    pub event: EventCode,
}

impl SubjectRecord {
    pub fn new(subject_id: impl Into<String>, arm: Arm, time: f64, event: EventCode) -> Self {
        Self { subject_id: subject_id.into(), arm, time, event }
    }

    pub fn observation(&self) -> Observation {
        Observation { time: self.time, event: self.event }
    }
}

/// Observed time and first-event type without the subject identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub event: EventCode,
}

impl Observation {
    pub fn new(time: f64, event: EventCode) -> Self {
        Self { time, event }
    }
}

/// One arm's observations, kept sorted by time with events ahead of
/// censorings at equal times.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSample {
    obs: Vec<Observation>,
}

impl ArmSample {
    pub fn new(mut obs: Vec<Observation>) -> Self {
        sort_observations(&mut obs);
        Self { obs }
    }

    /// Wraps observations that are already in canonical order.
    pub(crate) fn from_sorted(obs: Vec<Observation>) -> Self {
        debug_assert!(obs.windows(2).all(|w| obs_order(&w[0], &w[1]).is_le()));
        Self { obs }
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Largest observed time (event or censored).
    pub fn max_time(&self) -> f64 {
        self.obs.last().map_or(0.0, |o| o.time)
    }

    pub fn count(&self, event: EventCode) -> usize {
        self.obs.iter().filter(|o| o.event == event).count()
    }

    pub fn count_by_tau(&self, event: EventCode, tau: f64) -> usize {
        self.obs.iter().filter(|o| o.time <= tau && o.event == event).count()
    }

    pub fn map_events(&self, f: impl Fn(EventCode) -> EventCode) -> ArmSample {
        ArmSample::new(self.obs.iter().map(|o| Observation::new(o.time, f(o.event))).collect())
    }

    pub fn apply_ce_mode(&self, mode: CeMode) -> ArmSample {
        self.map_events(|e| mode.map(e))
    }

    /// Nearest-rank empirical quantile of all observed times.
    pub fn quantile_time(&self, p: f64) -> f64 {
        let n = self.obs.len();
        let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
        self.obs[rank.min(n) - 1].time
    }
}

fn obs_order(a: &Observation, b: &Observation) -> std::cmp::Ordering {
    a.time.total_cmp(&b.time).then(a.event.tie_rank().cmp(&b.event.tie_rank()))
}

fn sort_observations(obs: &mut [Observation]) {
    obs.sort_by(obs_order);
}

/// The two randomized arms as observation samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPair {
    pub e: ArmSample,
    pub c: ArmSample,
}

impl ArmPair {
    pub fn new(e: ArmSample, c: ArmSample) -> Self {
        Self { e, c }
    }

    pub fn arm(&self, arm: Arm) -> &ArmSample {
        match arm {
            Arm::E => &self.e,
            Arm::C => &self.c,
        }
    }

    /// Exchange the roles of E and C.
    pub fn swapped(&self) -> ArmPair {
        ArmPair { e: self.c.clone(), c: self.e.clone() }
    }

    pub fn apply_ce_mode(&self, mode: CeMode) -> ArmPair {
        ArmPair { e: self.e.apply_ce_mode(mode), c: self.c.apply_ce_mode(mode) }
    }

    pub fn tau_max(&self) -> f64 {
        self.e.max_time().min(self.c.max_time())
    }
}

/// All subjects of one (trial, AE type) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDataset {
    trial_id: String,
    ae_type_id: String,
    records: Vec<SubjectRecord>,
    arms: ArmPair,
}

impl AnalysisDataset {
    pub fn trial_id(&self) -> &str {
        &self.trial_id
    }

    pub fn ae_type_id(&self) -> &str {
        &self.ae_type_id
    }

    /// Records ordered by arm (E first), then subject id.
    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn arms(&self) -> &ArmPair {
        &self.arms
    }

    pub fn arm(&self, arm: Arm) -> &ArmSample {
        self.arms.arm(arm)
    }

    pub fn n(&self, arm: Arm) -> usize {
        self.arm(arm).len()
    }

    /// Maximum observed time in `arm` (τ_E or τ_C).
    pub fn tau(&self, arm: Arm) -> f64 {
        self.arm(arm).max_time()
    }

    pub fn tau_max(&self) -> f64 {
        self.arms.tau_max()
    }

    pub fn event_counts(&self, arm: Arm) -> EventCounts {
        EventCounts::of(self.arm(arm))
    }

    /// Same subjects with event codes remapped; `self` is left untouched.
    pub fn apply_ce_mode(&self, mode: CeMode) -> AnalysisDataset {
        let records = self.records.iter().map(|r| SubjectRecord { event: mode.map(r.event), ..r.clone() }).collect();
        AnalysisDataset {
            trial_id: self.trial_id.clone(),
            ae_type_id: self.ae_type_id.clone(),
            records,
            arms: self.arms.apply_ce_mode(mode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCounts {
    pub n: usize,
    pub ae: usize,
    pub death: usize,
    pub other_ce: usize,
    pub censored: usize,
}

impl EventCounts {
    pub fn of(sample: &ArmSample) -> Self {
        let mut c = EventCounts { n: sample.len(), ..Default::default() };
        for o in sample.observations() {
            match o.event {
                EventCode::AdverseEvent => c.ae += 1,
                EventCode::DeathCE => c.death += 1,
                EventCode::OtherCE => c.other_ce += 1,
                EventCode::Censored => c.censored += 1,
            }
        }
        c
    }
}

/// Checks the dataset invariants and builds the two arm samples.
pub fn validate_dataset(
    trial_id: impl Into<String>,
    ae_type_id: impl Into<String>,
    mut records: Vec<SubjectRecord>,
) -> Result<AnalysisDataset> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in &records {
        if !r.time.is_finite() {
            return Err(SavvyError::NonFiniteTime { subject_id: r.subject_id.clone() });
        }
        if r.time <= 0.0 {
            return Err(SavvyError::NonPositiveTime { subject_id: r.subject_id.clone(), time: r.time });
        }
        if !seen.insert(r.subject_id.as_str()) {
            return Err(SavvyError::DuplicateSubject(r.subject_id.clone()));
        }
    }
    for arm in Arm::BOTH {
        if !records.iter().any(|r| r.arm == arm) {
            return Err(SavvyError::EmptyArm(arm));
        }
    }
    records.sort_by(|a, b| a.arm.cmp(&b.arm).then_with(|| a.subject_id.cmp(&b.subject_id)));
    let sample = |arm: Arm| ArmSample::new(records.iter().filter(|r| r.arm == arm).map(SubjectRecord::observation).collect());
    let arms = ArmPair::new(sample(Arm::E), sample(Arm::C));
    Ok(AnalysisDataset { trial_id: trial_id.into(), ae_type_id: ae_type_id.into(), records, arms })
}

/// How competing events enter an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CeMode {
    /// Death and all other CEs compete with the AE.
    AllCE,
    /// Only death competes; other CEs become censorings.
    DeathOnly,
    /// AE and every CE form a single composite event (coded as AE).
    CompositeAsEvent,
}

impl CeMode {
    pub const ALL: [CeMode; 3] = [CeMode::AllCE, CeMode::DeathOnly, CeMode::CompositeAsEvent];

    pub fn as_str(self) -> &'static str {
        match self {
            CeMode::AllCE => "all_ce",
            CeMode::DeathOnly => "death_only",
            CeMode::CompositeAsEvent => "composite",
        }
    }

    pub fn map(self, e: EventCode) -> EventCode {
        match (self, e) {
            (CeMode::AllCE, e) => e,
            (CeMode::DeathOnly, EventCode::OtherCE) => EventCode::Censored,
            (CeMode::DeathOnly, e) => e,
            (CeMode::CompositeAsEvent, EventCode::Censored) => EventCode::Censored,
            (CeMode::CompositeAsEvent, _) => EventCode::AdverseEvent,
        }
    }
}

impl fmt::Display for CeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CeMode {
    type Err = SavvyError;

    fn from_str(s: &str) -> Result<Self> {
        CeMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SavvyError::InvalidInput(format!("unknown CE mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EvalRule {
    /// Minimum over arms of the per-arm nearest-rank quantile `p` of all
    /// observed times.
    QuantileMinOverArms(f64),
    /// Each arm evaluated at its own maximum follow-up; `resolved` carries the
    /// larger of the two.
    ArmSpecificMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalTime {
    pub rule: EvalRule,
    pub resolved: f64,
}

impl EvalTime {
    pub fn years(&self) -> f64 {
        self.resolved / DAYS_PER_YEAR
    }
}

pub fn resolve_eval_time(ds: &AnalysisDataset, quantile: f64) -> Result<EvalTime> {
    resolve_eval_time_arms(ds.arms(), quantile)
}

pub fn resolve_eval_time_arms(arms: &ArmPair, quantile: f64) -> Result<EvalTime> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(SavvyError::InvalidQuantile(quantile));
    }
    let resolved = arms.e.quantile_time(quantile).min(arms.c.quantile_time(quantile));
    Ok(EvalTime { rule: EvalRule::QuantileMinOverArms(quantile), resolved })
}

pub fn arm_specific_eval_time(ds: &AnalysisDataset) -> EvalTime {
    EvalTime { rule: EvalRule::ArmSpecificMax, resolved: ds.tau(Arm::E).max(ds.tau(Arm::C)) }
}

/// Reads subject rows (`subject_id,arm,time,event`) from CSV with a header.
pub fn read_subjects<R: Read>(reader: R) -> Result<Vec<SubjectRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col =
        |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| SavvyError::Csv(format!("missing column {name:?}")));
    let (id_col, arm_col, time_col, event_col) = (col("subject_id")?, col("arm")?, col("time")?, col("event")?);
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let time: f64 =
            field(time_col).parse().map_err(|_| SavvyError::Csv(format!("row {}: bad time {:?}", line + 2, field(time_col))))?;
        out.push(SubjectRecord {
            subject_id: field(id_col).to_string(),
            arm: field(arm_col).parse()?,
            time,
            event: field(event_col).parse()?,
        });
    }
    Ok(out)
}

/// Writes subject rows with numeric event codes.
pub fn write_subjects<W: Write>(writer: W, records: &[SubjectRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "arm", "time", "event"])?;
    for r in records {
        w.write_record([r.subject_id.as_str(), r.arm.as_str(), &r.time.to_string(), &r.event.code().to_string()])?;
    }
    w.flush().map_err(|e| SavvyError::Csv(e.to_string()))?;
    Ok(())
}
