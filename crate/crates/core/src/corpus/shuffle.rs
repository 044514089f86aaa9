use alloc::format;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::example::QAExample;
use crate::error::{Error, Result};

/// Pairs every example's context with a question drawn from a different
/// article. All outputs are unanswerable.
pub fn shuffle_pairs(examples: &[QAExample], seed: u64) -> Result<Vec<QAExample>> {
    let Some(first) = examples.first() else {
        return Err(Error::Contract("shuffle_pairs needs at least two source articles".into()));
    };
    if examples.iter().all(|e| e.source_article == first.source_article) {
        return Err(Error::Contract("shuffle_pairs needs at least two source articles".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(examples.len());
    for ctx in examples {
        let donors: Vec<&QAExample> = examples.iter().filter(|q| q.source_article != ctx.source_article).collect();
        let Some(donor) = donors.choose(&mut rng) else { unreachable!("two articles exist") };
        out.push(QAExample {
            id: format!("{}-shuffled-{}", ctx.id, donor.id),
            source_article: ctx.source_article.clone(),
            context: ctx.context.clone(),
            context_tokens: ctx.context_tokens.clone(),
            question: donor.question.clone(),
            question_tokens: donor.question_tokens.clone(),
            answer_span: None,
            answers: Vec::new(),
        });
    }
    Ok(out)
}
