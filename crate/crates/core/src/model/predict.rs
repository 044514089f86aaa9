use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::ModelOutput;
use crate::corpus::QAExample;
use crate::eval::{best_span, Prediction};
use crate::real::Real;

/// Final decision for one example. Unanswerable answers have no span and
/// empty text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub answerable: bool,
    pub span: Option<(usize, usize)>,
    pub text: String,
}

fn as_f64<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

/// Best span restricted to real context tokens.
fn span_of<T: Real>(output: &ModelOutput<T>, config: &ModelConfig, n_tokens: usize) -> (usize, usize) {
    let n = n_tokens.min(output.p1.len()).max(1);
    best_span(&as_f64(&output.p1[..n]), &as_f64(&output.p2[..n]), config.span_length_cap).0
}

/// Applies the threshold rule, then the capped span argmax.
pub fn predict<T: Real>(output: &ModelOutput<T>, config: &ModelConfig, example: &QAExample) -> Answer {
    if let Some(p0) = output.p0 {
        if p0.as_f64() < config.answerability_threshold {
            return Answer { answerable: false, span: None, text: String::new() };
        }
    }
    let (i, j) = span_of(output, config, example.context_tokens.len());
    Answer { answerable: true, span: Some((i, j)), text: example.span_text(i, j) }
}

/// Threshold-free record used by scoring and the probability analyses.
pub fn prediction_for<T: Real>(output: &ModelOutput<T>, config: &ModelConfig, example: &QAExample) -> Prediction {
    let (i, j) = span_of(output, config, example.context_tokens.len());
    let max = |xs: &[T]| xs.iter().map(|x| x.as_f64()).fold(0.0, f64::max);
    Prediction {
        id: example.id.clone(),
        answerable: example.answerable(),
        gold_answers: example.answers.iter().map(|a| a.text.clone()).collect(),
        p0: output.p0.map(Real::as_f64),
        span: (i, j),
        span_text: example.span_text(i, j),
        max_start: max(&output.p1),
        max_end: max(&output.p2),
    }
}
