//! Report and prediction files.

use std::collections::BTreeMap;
use std::path::Path;

use equant_core::eval::{BaselineStatistic, EvalReport, ProbabilityStats, SweepResult};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// `{id: predicted text}`, empty text for "no answer". This is the input
/// format of the official SQuAD scorer.
pub fn prediction_map(report: &EvalReport) -> BTreeMap<String, String> {
    report.records.iter().map(|r| (r.id.clone(), r.prediction.clone())).collect()
}

/// Output of the `stats` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub probability_stats: ProbabilityStats,
    pub statistic: BaselineStatistic,
    pub sweep: Option<SweepResult>,
    pub baseline: EvalReport,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use equant_core::eval::{score, EvalMode, Prediction};

    #[test]
    fn prediction_map_uses_empty_text_for_no_answer() {
        let p = |id: &str, p0: f64| Prediction {
            id: id.into(),
            answerable: true,
            gold_answers: vec!["cat".into()],
            p0: Some(p0),
            span: (0, 0),
            span_text: "cat".into(),
            max_start: 1.0,
            max_end: 1.0,
        };
        let report = score(&[p("b", 0.9), p("a", 0.1)], EvalMode::V2, 0.5).unwrap();
        let map = prediction_map(&report);
        assert_eq!(map["a"], "");
        assert_eq!(map["b"], "cat");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_json(&path, &report).unwrap();
        let back: EvalReport = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
