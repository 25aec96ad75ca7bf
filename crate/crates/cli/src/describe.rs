//! Descriptive summaries: observed event-type frequencies and follow-up per arm.

use savvy_core::benchmark::quantile_sorted;
use savvy_core::{AnalysisDataset, Arm, EventCode};

#[derive(Debug, Clone, PartialEq)]
pub struct DescribeRow {
    pub trial_id: String,
    pub ae_type_id: String,
    pub arm: Arm,
    pub n: usize,
    pub ae: usize,
    pub death: usize,
    pub other_ce: usize,
    pub censored: usize,
    pub follow_up_median: f64,
    pub follow_up_q1: f64,
    pub follow_up_q3: f64,
}

impl DescribeRow {
    pub fn freq(&self, count: usize) -> f64 {
        count as f64 / self.n as f64
    }

    pub fn freq_ce(&self) -> f64 {
        self.freq(self.death + self.other_ce)
    }
}

pub fn describe_dataset(ds: &AnalysisDataset) -> Vec<DescribeRow> {
    Arm::BOTH
        .iter()
        .map(|&arm| {
            let sample = ds.arm(arm);
            let times: Vec<f64> = sample.observations().iter().map(|o| o.time).collect();
            let mut sorted = times;
            sorted.sort_by(f64::total_cmp);
            DescribeRow {
                trial_id: ds.trial_id().to_string(),
                ae_type_id: ds.ae_type_id().to_string(),
                arm,
                n: sample.len(),
                ae: sample.count(EventCode::AdverseEvent),
                death: sample.count(EventCode::DeathCE),
                other_ce: sample.count(EventCode::OtherCE),
                censored: sample.count(EventCode::Censored),
                follow_up_median: quantile_sorted(&sorted, 0.5),
                follow_up_q1: quantile_sorted(&sorted, 0.25),
                follow_up_q3: quantile_sorted(&sorted, 0.75),
            }
        })
        .collect()
}

pub const DESCRIBE_HEADER: [&str; 16] = [
    "trial_id",
    "ae_type_id",
    "arm",
    "n",
    "ae_count",
    "death_count",
    "other_ce_count",
    "censored_count",
    "freq_ae",
    "freq_ce",
    "freq_death",
    "freq_other_ce",
    "freq_censored",
    "follow_up_median",
    "follow_up_q1",
    "follow_up_q3",
];

impl DescribeRow {
    pub fn fields(&self) -> [String; 16] {
        [
            self.trial_id.clone(),
            self.ae_type_id.clone(),
            self.arm.to_string(),
            self.n.to_string(),
            self.ae.to_string(),
            self.death.to_string(),
            self.other_ce.to_string(),
            self.censored.to_string(),
            self.freq(self.ae).to_string(),
            self.freq_ce().to_string(),
            self.freq(self.death).to_string(),
            self.freq(self.other_ce).to_string(),
            self.freq(self.censored).to_string(),
            self.follow_up_median.to_string(),
            self.follow_up_q1.to_string(),
            self.follow_up_q3.to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use savvy_core::data::validate_dataset;
    use savvy_core::SubjectRecord;

    #[test]
    fn worked_example_frequencies() {
        let rows = [
            (1.0, EventCode::AdverseEvent),
            (2.0, EventCode::DeathCE),
            (3.0, EventCode::Censored),
            (4.0, EventCode::AdverseEvent),
        ];
        let mut records: Vec<SubjectRecord> =
            rows.iter().enumerate().map(|(i, &(t, e))| SubjectRecord::new(format!("e{i}"), Arm::E, t, e)).collect();
        records.push(SubjectRecord::new("c0", Arm::C, 5.0, EventCode::Censored));
        let ds = validate_dataset("t", "a", records).unwrap();
        let d = describe_dataset(&ds);
        let e = &d[0];
        assert_eq!((e.freq(e.ae), e.freq_ce(), e.freq(e.censored)), (0.5, 0.25, 0.25));
        assert_eq!(e.follow_up_median, 2.5);
        assert_eq!(d[1].freq(d[1].censored), 1.0);
    }
}
