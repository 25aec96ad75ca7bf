//! Per-dataset analyses and their collection into a run bundle.

use savvy_core::benchmark::{bootstrap_replicates, log_ratio_points, summarize_replicates, RatioCovariates, RatioRecord};
use savvy_core::composite::{composite_analysis, CompositeResult};
use savvy_core::data::{resolve_eval_time_arms, DAYS_PER_YEAR};
use savvy_core::effects::{categorize, relative_risk, EffectEstimate, EvidenceCategory, DEFAULT_LEVEL};
use savvy_core::hazard::{cox_hr_with, id_ratio, min_events_filter, EndpointKind, HazardMethod};
use savvy_core::prob::{estimate_all, ProbEstimatorId, ProbabilityEstimate};
use savvy_core::{par, AnalysisDataset, Arm, ArmPair, CeMode, EventCode, SavvyError};

use crate::config::RunConfig;
use crate::describe::{describe_dataset, DescribeRow};
use crate::inputs::DatasetSource;

/// One output table; every dataset gets exactly one status per table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table {
    Probability { mode: CeMode, pct: u32 },
    Hazard { mode: CeMode, kind: EndpointKind },
    Composite { pct: u32 },
}

impl Table {
    pub fn dir(&self) -> &'static str {
        match self {
            Table::Probability { mode, .. } | Table::Hazard { mode, .. } => mode.as_str(),
            Table::Composite { .. } => "composite",
        }
    }

    pub fn leaf(&self) -> String {
        match self {
            Table::Probability { pct, .. } => format!("prob_q{pct}"),
            Table::Hazard { kind, .. } => format!("hazard_{kind}"),
            Table::Composite { pct } => format!("q{pct}"),
        }
    }

    pub fn name(&self) -> String {
        format!("{}/{}", self.dir(), self.leaf())
    }

    /// Tables that carry ratio records for pooling.
    pub fn has_ratios(&self) -> bool {
        !matches!(self, Table::Composite { .. })
    }
}

pub fn quantile_pct(q: f64) -> u32 {
    (q * 100.0).round() as u32
}

/// All tables of a run, in report order.
pub fn tables(cfg: &RunConfig) -> Vec<Table> {
    let mut out = Vec::new();
    for &mode in &cfg.ce_modes {
        out.extend(cfg.quantiles.iter().map(|&q| Table::Probability { mode, pct: quantile_pct(q) }));
        out.extend(EndpointKind::ALL.iter().map(|&kind| Table::Hazard { mode, kind }));
    }
    out.extend(cfg.quantiles.iter().map(|&q| Table::Composite { pct: quantile_pct(q) }));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Analyzed,
    Excluded(String),
    Failed(String),
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Analyzed => "analyzed",
            Status::Excluded(_) => "excluded",
            Status::Failed(_) => "failed",
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            Status::Analyzed => "",
            Status::Excluded(r) | Status::Failed(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub mode: CeMode,
    pub pct: u32,
    pub estimate: ProbabilityEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectRow {
    pub table: Table,
    pub estimator: String,
    pub effect: EffectEstimate,
    pub category: EvidenceCategory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmRatioRow {
    pub table: Table,
    pub arm: Arm,
    pub candidate: ProbEstimatorId,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryPair {
    pub table: Table,
    pub candidate: String,
    pub candidate_category: EvidenceCategory,
    pub gold_category: EvidenceCategory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeRow {
    pub pct: u32,
    pub eval_time: f64,
    pub result: CompositeResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOutcome {
    pub source: DatasetSource,
    pub describe: Vec<DescribeRow>,
    pub estimates: Vec<EstimateRow>,
    pub effects: Vec<EffectRow>,
    pub ratios: Vec<(Table, RatioRecord)>,
    pub arm_ratios: Vec<ArmRatioRow>,
    pub categories: Vec<CategoryPair>,
    pub composites: Vec<CompositeRow>,
    pub statuses: Vec<(Table, Status)>,
}

impl DatasetOutcome {
    fn new(source: &DatasetSource) -> Self {
        DatasetOutcome {
            source: source.clone(),
            describe: Vec::new(),
            estimates: Vec::new(),
            effects: Vec::new(),
            ratios: Vec::new(),
            arm_ratios: Vec::new(),
            categories: Vec::new(),
            composites: Vec::new(),
            statuses: Vec::new(),
        }
    }

    pub fn status(&self, table: Table) -> Option<&Status> {
        self.statuses.iter().find(|(t, _)| *t == table).map(|(_, s)| s)
    }
}

/// Stable 64-bit seed for one analysis of one dataset (FNV-1a, then a
/// SplitMix64 finalizer).
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    master.to_le_bytes().into_iter().for_each(&mut eat);
    for p in parts {
        eat(0x1f);
        p.bytes().for_each(&mut eat);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Shares {
    pct_censored: f64,
    pct_ce: f64,
}

/// Percent of all subjects censored, and with a CE, by `tau`. Subjects still
/// under observation at `tau` count as censored there.
fn shares_by(arms: &ArmPair, tau: f64) -> Shares {
    let (mut n, mut cens, mut ce) = (0usize, 0usize, 0usize);
    for arm in Arm::BOTH {
        for o in arms.arm(arm).observations() {
            n += 1;
            if o.time > tau || o.event == EventCode::Censored {
                cens += 1;
            } else if o.event.is_competing() {
                ce += 1;
            }
        }
    }
    Shares { pct_censored: 100.0 * cens as f64 / n as f64, pct_ce: 100.0 * ce as f64 / n as f64 }
}

fn position(id: ProbEstimatorId) -> usize {
    ProbEstimatorId::ALL.iter().position(|&x| x == id).expect("known estimator")
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    source: &'a DatasetSource,
}

impl Ctx<'_> {
    fn seed(&self, table: Table) -> u64 {
        derive_seed(self.cfg.seed, &[&self.source.trial_id, &self.source.ae_type_id, &table.name()])
    }

    fn record(&self, candidate: &str, gold: &str, log_ratio: f64, se: f64, covariates: RatioCovariates) -> RatioRecord {
        RatioRecord {
            trial_id: self.source.trial_id.clone(),
            ae_type_id: self.source.ae_type_id.clone(),
            candidate_id: candidate.to_string(),
            gold_id: gold.to_string(),
            log_ratio,
            log_ratio_se: se,
            covariates,
        }
    }
}

fn probability_table(ctx: &Ctx, out: &mut DatasetOutcome, arms: &ArmPair, mode: CeMode, q: f64) -> Result<Status, SavvyError> {
    let table = Table::Probability { mode, pct: quantile_pct(q) };
    let tau = resolve_eval_time_arms(arms, q)?.resolved;
    let est_e = estimate_all(&arms.e, Arm::E, tau)?;
    let est_c = estimate_all(&arms.c, Arm::C, tau)?;
    for est in est_e.iter().chain(est_c.iter()) {
        out.estimates.push(EstimateRow { mode, pct: quantile_pct(q), estimate: *est });
    }

    let mut rrs = Vec::with_capacity(ProbEstimatorId::ALL.len());
    for (qe, qc) in est_e.iter().zip(est_c.iter()) {
        match relative_risk(qe, qc) {
            Ok(rr) => rrs.push(rr),
            Err(SavvyError::ZeroProbability(arm)) => {
                return Ok(Status::Excluded(format!("{} is zero in arm {arm}", qe.estimator)));
            }
            Err(e) => return Err(e),
        }
    }
    let mut cats = Vec::with_capacity(rrs.len());
    for rr in &rrs {
        cats.push(categorize(rr)?);
    }

    let gold = position(ProbEstimatorId::GOLD);
    let candidates = ProbEstimatorId::CANDIDATES.map(position);
    let replicates = bootstrap_replicates(arms, ctx.cfg.replicates, ctx.seed(table), |rep| {
        let mut lr = [None; ProbEstimatorId::CANDIDATES.len()];
        let (Ok(e), Ok(c)) = (estimate_all(&rep.e, Arm::E, tau), estimate_all(&rep.c, Arm::C, tau)) else {
            return lr;
        };
        let rr = |i: usize| e[i].value / c[i].value;
        let g = rr(gold);
        for (slot, &i) in lr.iter_mut().zip(&candidates) {
            *slot = log_ratio_points(rr(i), g).ok();
        }
        lr
    });
    let mut ses = Vec::with_capacity(candidates.len());
    for k in 0..candidates.len() {
        let column: Vec<Option<f64>> = replicates.iter().map(|r| r[k]).collect();
        ses.push(summarize_replicates(&column)?.se);
    }

    let shares = shares_by(arms, tau);
    let gold_rr = rrs[gold].point;
    let covariates = RatioCovariates {
        pct_censored: shares.pct_censored,
        pct_ce: shares.pct_ce,
        eval_time_years: tau / DAYS_PER_YEAR,
        gold_effect_size: gold_rr,
    };

    for (i, id) in ProbEstimatorId::ALL.iter().enumerate() {
        out.effects.push(EffectRow { table, estimator: id.as_str().to_string(), effect: rrs[i], category: cats[i] });
    }
    for (k, &i) in candidates.iter().enumerate() {
        let id = ProbEstimatorId::ALL[i];
        let log_ratio = rrs[i].point.ln() - gold_rr.ln();
        out.ratios.push((table, ctx.record(id.as_str(), ProbEstimatorId::GOLD.as_str(), log_ratio, ses[k], covariates)));
        out.categories.push(CategoryPair {
            table,
            candidate: id.as_str().to_string(),
            candidate_category: cats[i],
            gold_category: cats[gold],
        });
        for (arm, est) in [(Arm::E, &est_e), (Arm::C, &est_c)] {
            out.arm_ratios.push(ArmRatioRow { table, arm, candidate: id, ratio: est[i].value / est[gold].value });
        }
    }
    Ok(Status::Analyzed)
}

fn hazard_table(
    ctx: &Ctx,
    out: &mut DatasetOutcome,
    arms: &ArmPair,
    mode: CeMode,
    kind: EndpointKind,
) -> Result<Status, SavvyError> {
    let table = Table::Hazard { mode, kind };
    let undefined = |e: &SavvyError| matches!(e, SavvyError::UndefinedRatio(_) | SavvyError::NonIdentifiableHr(_));
    let idr = match id_ratio(arms, kind) {
        Ok(h) => h,
        Err(e) if undefined(&e) => return Ok(Status::Excluded(e.to_string())),
        Err(e) => return Err(e),
    };
    let ties = ctx.cfg.ties;
    let cox = match cox_hr_with(arms, kind, ties) {
        Ok(h) => h,
        Err(e) if undefined(&e) => return Ok(Status::Excluded(e.to_string())),
        Err(e) => return Err(e),
    };
    let eff_id = EffectEstimate::from_hazard(&idr, DEFAULT_LEVEL);
    let eff_cox = EffectEstimate::from_hazard(&cox, DEFAULT_LEVEL);
    let (cat_id, cat_cox) = (categorize(&eff_id)?, categorize(&eff_cox)?);

    let replicates = bootstrap_replicates(arms, ctx.cfg.replicates, ctx.seed(table), |rep| {
        let a = id_ratio(rep, kind).ok()?;
        let b = cox_hr_with(rep, kind, ties).ok()?;
        log_ratio_points(a.hr, b.hr).ok()
    });
    let se = summarize_replicates(&replicates)?.se;

    let n = (arms.e.len() + arms.c.len()) as f64;
    let count = |pred: &dyn Fn(EventCode) -> bool| {
        Arm::BOTH.iter().flat_map(|&a| arms.arm(a).observations()).filter(|o| pred(o.event)).count() as f64
    };
    let covariates = RatioCovariates {
        pct_censored: 100.0 * count(&|e| e == EventCode::Censored) / n,
        pct_ce: 100.0 * count(&|e| e.is_competing()) / n,
        eval_time_years: arms.e.max_time().max(arms.c.max_time()) / DAYS_PER_YEAR,
        gold_effect_size: cox.hr,
    };

    let (cand, gold) = (HazardMethod::IncidenceDensityRatio.as_str(), HazardMethod::CoxPH.as_str());
    out.effects.push(EffectRow { table, estimator: cand.to_string(), effect: eff_id, category: cat_id });
    out.effects.push(EffectRow { table, estimator: gold.to_string(), effect: eff_cox, category: cat_cox });
    out.ratios.push((table, ctx.record(cand, gold, idr.hr.ln() - cox.hr.ln(), se, covariates)));
    out.categories.push(CategoryPair { table, candidate: cand.to_string(), candidate_category: cat_id, gold_category: cat_cox });
    Ok(Status::Analyzed)
}

fn composite_table(out: &mut DatasetOutcome, ds: &AnalysisDataset, q: f64) -> Result<Status, SavvyError> {
    let tau = resolve_eval_time_arms(ds.arms(), q)?.resolved;
    let result = composite_analysis(ds.arms(), tau)?;
    out.composites.push(CompositeRow { pct: quantile_pct(q), eval_time: tau, result });
    Ok(match result.rr_ratio {
        Some(_) => Status::Analyzed,
        None => Status::Excluded("zero composite probability in an arm".into()),
    })
}

pub fn analyze_dataset(source: &DatasetSource, cfg: &RunConfig) -> DatasetOutcome {
    let mut out = DatasetOutcome::new(source);
    let ds = match source.load() {
        Ok(ds) => ds,
        Err(e) => {
            log::warn!("{}/{}: {e}", source.trial_id, source.ae_type_id);
            let reason = e.to_string();
            out.statuses = tables(cfg).into_iter().map(|t| (t, Status::Failed(reason.clone()))).collect();
            return out;
        }
    };
    out.describe = describe_dataset(&ds);
    let ctx = Ctx { cfg, source };
    let settle = |r: Result<Status, SavvyError>| r.unwrap_or_else(|e| Status::Failed(e.to_string()));

    for &mode in &cfg.ce_modes {
        let arms = ds.arms().apply_ce_mode(mode);
        for &q in &cfg.quantiles {
            let table = Table::Probability { mode, pct: quantile_pct(q) };
            let status = settle(probability_table(&ctx, &mut out, &arms, mode, q));
            out.statuses.push((table, status));
        }
        let enough = min_events_filter(&arms, cfg.min_events);
        for kind in EndpointKind::ALL {
            let table = Table::Hazard { mode, kind };
            let status = if enough {
                settle(hazard_table(&ctx, &mut out, &arms, mode, kind))
            } else {
                Status::Excluded(format!("fewer than {} AEs in an arm", cfg.min_events))
            };
            out.statuses.push((table, status));
        }
    }
    for &q in &cfg.quantiles {
        let status = settle(composite_table(&mut out, &ds, q));
        out.statuses.push((Table::Composite { pct: quantile_pct(q) }, status));
    }
    for (t, s) in &out.statuses {
        if let Status::Failed(r) = s {
            log::warn!("{}/{} {}: {r}", source.trial_id, source.ae_type_id, t.name());
        }
    }
    out
}

/// Everything a run produces before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub tables: Vec<Table>,
    pub outcomes: Vec<DatasetOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accounting {
    pub analyzed: usize,
    pub excluded: usize,
    pub failed: usize,
}

impl Accounting {
    pub fn total(&self) -> usize {
        self.analyzed + self.excluded + self.failed
    }
}

impl Bundle {
    pub fn ratio_records(&self, table: Table) -> Vec<RatioRecord> {
        self.outcomes.iter().flat_map(|o| o.ratios.iter()).filter(|(t, _)| *t == table).map(|(_, r)| r.clone()).collect()
    }

    pub fn accounting(&self, table: Table) -> Accounting {
        let mut acc = Accounting::default();
        for o in &self.outcomes {
            match o.status(table) {
                Some(Status::Analyzed) => acc.analyzed += 1,
                Some(Status::Excluded(_)) => acc.excluded += 1,
                Some(Status::Failed(_)) | None => acc.failed += 1,
            }
        }
        acc
    }

    pub fn has_failures(&self) -> bool {
        self.outcomes.iter().any(|o| o.statuses.iter().any(|(_, s)| matches!(s, Status::Failed(_))))
    }
}

/// Runs every dataset (concurrently when built with the `parallel` feature).
pub fn run_analyses(cfg: &RunConfig, sources: &[DatasetSource]) -> Bundle {
    let outcomes = par::map_slice(sources, |s| analyze_dataset(s, cfg));
    Bundle { tables: tables(cfg), outcomes }
}
