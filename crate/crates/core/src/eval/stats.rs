use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::report::{assemble, EvalMode, EvalReport, Prediction};

/// Highest-scoring span `(i, j)` with `i ≤ j ≤ i + cap` under `p1[i]·p2[j]`,
/// and that score. Ties go to the earliest span.
pub fn best_span(p1: &[f64], p2: &[f64], cap: usize) -> ((usize, usize), f64) {
    let mut best = ((0, 0), f64::NEG_INFINITY);
    for (i, &a) in p1.iter().enumerate() {
        let hi = (i + cap).min(p2.len().saturating_sub(1));
        for (j, &b) in p2.iter().enumerate().take(hi + 1).skip(i) {
            if a * b > best.1 {
                best = ((i, j), a * b);
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub start_mean: f64,
    pub start_std: f64,
    pub end_mean: f64,
    pub end_std: f64,
}

/// Max start/end probability statistics split by gold answerability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityStats {
    pub answerable: GroupStats,
    pub unanswerable: GroupStats,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

fn group(preds: &[Prediction], answerable: bool) -> GroupStats {
    let members: Vec<&Prediction> = preds.iter().filter(|p| p.answerable == answerable).collect();
    let starts: Vec<f64> = members.iter().map(|p| p.max_start).collect();
    let ends: Vec<f64> = members.iter().map(|p| p.max_end).collect();
    let (start_mean, start_std) = mean_std(&starts);
    let (end_mean, end_std) = mean_std(&ends);
    GroupStats { count: members.len(), start_mean, start_std, end_mean, end_std }
}

/// Population mean and standard deviation per answerability group.
pub fn probability_stats(preds: &[Prediction]) -> ProbabilityStats {
    ProbabilityStats {
        answerable: group(preds, true),
        unanswerable: group(preds, false),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineStatistic {
    #[default]
    Product,
    MaxOfTwo,
}

impl BaselineStatistic {
    pub fn value(self, p: &Prediction) -> f64 {
        match self {
            Self::Product => p.max_start * p.max_end,
            Self::MaxOfTwo => p.max_start.max(p.max_end),
        }
    }
}

/// Declares an example unanswerable iff its statistic falls below `threshold`,
/// ignoring any head output.
pub fn threshold_baseline(preds: &[Prediction], threshold: f64, statistic: BaselineStatistic) -> EvalReport {
    let rule = |p: &Prediction| statistic.value(p) >= threshold;
    assemble(preds, EvalMode::V2, threshold, rule, rule)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub threshold: f64,
    pub accuracy: f64,
}

/// Searches 0, every midpoint between consecutive distinct statistics, and a
/// value above the maximum; returns the smallest threshold with the best
/// answerability accuracy.
pub fn sweep_threshold(preds: &[Prediction], statistic: BaselineStatistic) -> SweepResult {
    let mut values: Vec<f64> = preds.iter().map(|p| statistic.value(p)).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut candidates = alloc::vec![0.0];
    candidates.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(values.last().map_or(1.0, |m| m + 1e-6));
    let mut best = SweepResult { threshold: 0.0, accuracy: f64::NEG_INFINITY };
    for t in candidates {
        let correct = preds.iter().filter(|p| (statistic.value(p) >= t) == p.answerable).count();
        let accuracy = if preds.is_empty() { 0.0 } else { 100.0 * correct as f64 / preds.len() as f64 };
        if accuracy > best.accuracy {
            best = SweepResult { threshold: t, accuracy };
        }
    }
    best
}
