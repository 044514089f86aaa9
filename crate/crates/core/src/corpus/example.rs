use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, Token};
use crate::error::{Error, Result};

/// One gold answer as it appears in the source file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnswer {
    pub text: String,
    /// Character offset into the context.
    pub start: usize,
}

/// One context/question pair with its (optional) answer span.
///
/// The span is present exactly when the question is answerable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub source_article: String,
    pub context: String,
    pub context_tokens: Vec<Token>,
    pub question: String,
    pub question_tokens: Vec<Token>,
    /// Inclusive token indices `(i, j)` of the first gold answer.
    pub answer_span: Option<(usize, usize)>,
    /// Every gold variant, kept for scoring. Empty when unanswerable.
    pub answers: Vec<RawAnswer>,
}

impl QAExample {
    pub fn answerable(&self) -> bool {
        self.answer_span.is_some()
    }

    pub fn gold_texts(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }

    /// Source substring covered by context tokens `i..=j`.
    pub fn span_text(&self, i: usize, j: usize) -> String {
        let (start, end) = (self.context_tokens[i].start, self.context_tokens[j].end);
        self.context.chars().skip(start).take(end - start).collect()
    }
}

/// Minimal token span covering characters `[answer_start, answer_start + len)`.
pub fn align_answer(
    context: &str,
    tokens: &[Token],
    answer_text: &str,
    answer_start: usize,
) -> core::result::Result<(usize, usize), String> {
    let context_len = context.chars().count();
    let len = answer_text.chars().count();
    if len == 0 {
        return Err("empty answer text".to_string());
    }
    if answer_start >= context_len {
        return Err(format!("answer_start {answer_start} outside context of {context_len} chars"));
    }
    let end = answer_start + len;
    let first = tokens.iter().position(|t| t.end > answer_start);
    let last = tokens.iter().rposition(|t| t.start < end);
    match (first, last) {
        (Some(i), Some(j)) if i <= j => Ok((i, j)),
        _ => Err(format!("characters {answer_start}..{end} cover no token")),
    }
}

/// Tokenizes and aligns one record. Impossible questions carry no span and
/// no gold answers regardless of what `answers` holds.
pub fn build_example(
    id: &str,
    source_article: &str,
    context: &str,
    question: &str,
    answers: &[RawAnswer],
    impossible: bool,
) -> Result<QAExample> {
    let context_tokens = tokenize(context);
    let (answer_span, answers) = if impossible {
        (None, Vec::new())
    } else {
        let first = answers.first().ok_or_else(|| Error::Alignment {
            id: id.to_string(),
            reason: "answerable question has no answers".to_string(),
        })?;
        let span = align_answer(context, &context_tokens, &first.text, first.start).map_err(|reason| Error::Alignment {
            id: id.to_string(),
            reason,
        })?;
        (Some(span), answers.to_vec())
    };
    Ok(QAExample {
        id: id.to_string(),
        source_article: source_article.to_string(),
        context: context.to_string(),
        question_tokens: tokenize(question),
        question: question.to_string(),
        context_tokens,
        answer_span,
        answers,
    })
}
