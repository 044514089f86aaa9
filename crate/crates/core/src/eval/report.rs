use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::metrics::{exact_match, f1_score};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Every example must be answerable; the decision rule still applies.
    V1,
    /// Answer iff p0 ≥ threshold.
    V2,
    /// Always answer, whatever p0 says.
    ForceAnswerable,
}

/// Threshold-independent model outcome for one example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answerable: bool,
    pub gold_answers: Vec<String>,
    /// Absent for models without an answerability head.
    pub p0: Option<f64>,
    /// Best span under the length cap and its text.
    pub span: (usize, usize),
    pub span_text: String,
    pub max_start: f64,
    pub max_end: f64,
}

impl Prediction {
    /// Whether the head (if any) declares the question answerable.
    pub fn head_says_answerable(&self, threshold: f64) -> bool {
        self.p0.is_none_or(|p| p >= threshold)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub prediction: String,
    pub answerable: bool,
    pub predicted_answerable: bool,
    pub p0: Option<f64>,
    pub em: f64,
    pub f1: f64,
}

/// Aggregate scores as percentages plus per-example records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub threshold: f64,
    pub em: f64,
    pub f1: f64,
    pub answerability_accuracy: f64,
    pub total: usize,
    pub answerable: usize,
    pub unanswerable: usize,
    pub records: Vec<ExampleRecord>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        format!("EM {:.3} / F1 {:.3} / Acc {:.3}", self.em, self.f1, self.answerability_accuracy)
    }
}

fn percent(sum: f64, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * sum / total as f64
    }
}

/// Scores predictions. `answers` picks whether each example gets its span
/// text or the empty no-answer; `claims` is the answerability verdict used
/// for accuracy.
pub(crate) fn assemble(
    preds: &[Prediction],
    mode: EvalMode,
    threshold: f64,
    answers: impl Fn(&Prediction) -> bool,
    claims: impl Fn(&Prediction) -> bool,
) -> EvalReport {
    let records: Vec<ExampleRecord> = preds
        .iter()
        .map(|p| {
            let text = if answers(p) { p.span_text.clone() } else { String::new() };
            let golds: Vec<&str> = p.gold_answers.iter().map(String::as_str).collect();
            ExampleRecord {
                em: exact_match(&text, &golds),
                f1: f1_score(&text, &golds),
                id: p.id.clone(),
                prediction: text,
                answerable: p.answerable,
                predicted_answerable: claims(p),
                p0: p.p0,
            }
        })
        .collect();
    let total = records.len();
    let answerable = records.iter().filter(|r| r.answerable).count();
    let correct = records.iter().filter(|r| r.answerable == r.predicted_answerable).count();
    EvalReport {
        mode,
        threshold,
        em: percent(records.iter().map(|r| r.em).sum(), total),
        f1: percent(records.iter().map(|r| r.f1).sum(), total),
        answerability_accuracy: percent(correct as f64, total),
        total,
        answerable,
        unanswerable: total - answerable,
        records,
    }
}

/// Applies the evaluation mode's decision rule and scores the result.
pub fn score(preds: &[Prediction], mode: EvalMode, threshold: f64) -> Result<EvalReport> {
    if mode == EvalMode::V1 {
        if let Some(p) = preds.iter().find(|p| !p.answerable) {
            return Err(Error::Contract(format!("v1 evaluation got unanswerable example {}", p.id)));
        }
    }
    let head = |p: &Prediction| p.head_says_answerable(threshold);
    Ok(match mode {
        EvalMode::ForceAnswerable => assemble(preds, mode, threshold, |_| true, head),
        _ => assemble(preds, mode, threshold, head, head),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn pred(id: &str, answerable: bool, gold: &[&str], p0: Option<f64>, text: &str) -> Prediction {
        Prediction {
            id: id.to_string(),
            answerable,
            gold_answers: gold.iter().map(|s| s.to_string()).collect(),
            p0,
            span: (0, 0),
            span_text: text.to_string(),
            max_start: 0.5,
            max_end: 0.5,
        }
    }

    fn fixture(p0: impl Fn(bool) -> Option<f64>) -> Vec<Prediction> {
        vec![
            pred("a", true, &["the cat"], p0(true), "cat"),
            pred("b", true, &["dog"], p0(true), "a dog"),
            pred("c", false, &[], p0(false), "bird"),
            pred("d", true, &["fish"], p0(true), "fish"),
            pred("e", false, &[], p0(false), "tree"),
        ]
    }

    #[test]
    fn always_answer_accuracy_is_answerable_fraction() {
        let r = score(&fixture(|_| None), EvalMode::V2, 0.5).unwrap();
        assert!((r.answerability_accuracy - 60.0).abs() < 1e-12);
        assert!((r.em - 60.0).abs() < 1e-12);
        assert_eq!((r.total, r.answerable, r.unanswerable), (5, 3, 2));
    }

    #[test]
    fn constant_head_matches_always_answer() {
        let r = score(&fixture(|_| Some(0.69)), EvalMode::V2, 0.5).unwrap();
        assert!((r.answerability_accuracy - 60.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_is_perfect() {
        let r = score(&fixture(|a| Some(if a { 1.0 } else { 0.0 })), EvalMode::V2, 0.5).unwrap();
        assert_eq!((r.em, r.f1, r.answerability_accuracy), (100.0, 100.0, 100.0));
        assert_eq!(r.records[2].prediction, "");
    }

    #[test]
    fn force_answerable_ignores_head_for_text() {
        let preds = fixture(|_| Some(0.0));
        let r = score(&preds, EvalMode::ForceAnswerable, 0.5).unwrap();
        assert_eq!(r.records[0].prediction, "cat");
        assert!((r.answerability_accuracy - 40.0).abs() < 1e-12);
    }

    #[test]
    fn v1_rejects_unanswerable() {
        assert!(matches!(score(&fixture(|_| None), EvalMode::V1, 0.5), Err(Error::Contract(_))));
        let answerable: Vec<_> = fixture(|_| None).into_iter().filter(|p| p.answerable).collect();
        assert_eq!(score(&answerable, EvalMode::V1, 0.5).unwrap().em, 100.0);
    }

    #[test]
    fn empty_input_scores_zero() {
        let r = score(&[], EvalMode::V2, 0.5).unwrap();
        assert_eq!(r.total, 0);
        assert_eq!(r.summary(), "EM 0.000 / F1 0.000 / Acc 0.000");
    }
}
