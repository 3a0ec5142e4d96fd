use std::collections::BTreeMap;
use std::fmt;

use super::record::{RunRecord, StageTiming};
use crate::accident::{score, AccidentScore};
use crate::error::{Error, Result};

/// Track-id changes of each ground-truth agent over a run: every time the
/// agent is matched by a different track than the last time it was matched.
pub fn id_switches(record: &RunRecord) -> usize {
    let mut last: BTreeMap<u32, u32> = BTreeMap::new();
    let mut switches = 0;
    for f in &record.frames {
        for t in f.tracks.iter().filter(|t| t.coast == 0) {
            let Some(src) = t.source else { continue };
            if let Some(prev) = last.insert(src, t.track_id) {
                if prev != t.track_id {
                    switches += 1;
                }
            }
        }
    }
    switches
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordReport {
    pub seed: u64,
    pub template: String,
    pub score: AccidentScore,
    pub id_switches: usize,
    pub timing: Option<StageTiming>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub records: Vec<RecordReport>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    /// over all matched events; `None` without matches
    pub mean_time_error: Option<f64>,
    pub mean_position_error: Option<f64>,
    /// summed over the records that carry timing
    pub timing: Option<StageTiming>,
}

impl Report {
    pub fn precision(&self) -> Option<f64> {
        let d = self.true_positives + self.false_positives;
        (d > 0).then(|| self.true_positives as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.true_positives + self.false_negatives;
        (d > 0).then(|| self.true_positives as f64 / d as f64)
    }
}

/// Scores every record with its own tolerances and aggregates.
pub fn evaluate(records: &[RunRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let per: Vec<RecordReport> = records
        .iter()
        .map(|r| RecordReport {
            seed: r.seed,
            template: r.template.to_string(),
            score: score(
                &r.events_pred,
                &r.events_gt,
                r.config.accident.time_tol,
                r.config.accident.dist_tol,
            ),
            id_switches: id_switches(r),
            timing: r.timing,
        })
        .collect();
    let matches: Vec<_> = per.iter().flat_map(|r| &r.score.matches).collect();
    let mean = |f: &dyn Fn(&crate::accident::EventMatch) -> f64| {
        (!matches.is_empty()).then(|| matches.iter().map(|m| f(m)).sum::<f64>() / matches.len() as f64)
    };
    let timing = per
        .iter()
        .filter_map(|r| r.timing)
        .reduce(|a, b| a.add(&b));
    Ok(Report {
        true_positives: per.iter().map(|r| r.score.true_positives).sum(),
        false_positives: per.iter().map(|r| r.score.false_positives).sum(),
        false_negatives: per.iter().map(|r| r.score.false_negatives).sum(),
        id_switches: per.iter().map(|r| r.id_switches).sum(),
        mean_time_error: mean(&|m| m.time_error as f64),
        mean_position_error: mean(&|m| m.position_error),
        timing,
        records: per,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |x| format!("{x:.4}"))
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records {}", self.records.len())?;
        for r in &self.records {
            writeln!(
                f,
                "  seed {} {}: tp {} fp {} fn {} id_switches {}",
                r.seed, r.template, r.score.true_positives, r.score.false_positives, r.score.false_negatives, r.id_switches
            )?;
        }
        writeln!(
            f,
            "tp {} fp {} fn {} precision {} recall {}",
            self.true_positives,
            self.false_positives,
            self.false_negatives,
            opt(self.precision()),
            opt(self.recall())
        )?;
        writeln!(
            f,
            "mean_time_error {} mean_position_error {}",
            opt(self.mean_time_error),
            opt(self.mean_position_error)
        )?;
        writeln!(f, "id_switches {}", self.id_switches)?;
        if let Some(t) = &self.timing {
            write!(f, "runtime_s")?;
            for (name, v) in StageTiming::STAGES.iter().zip(t.values()) {
                write!(f, " {name} {v:.3}")?;
            }
            writeln!(f, " total {:.3}", t.total())?;
        }
        Ok(())
    }
}
