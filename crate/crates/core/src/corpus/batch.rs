use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{EncodedExample, PAD};

/// Span target for examples whose answer is absent or truncated away.
pub const NO_SPAN: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub batch_size: usize,
    pub max_context_len: usize,
    pub max_question_len: usize,
    pub max_word_len: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_context_len: 400,
            max_question_len: 50,
            max_word_len: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchPurpose {
    /// Drop over-length examples and shuffle with the seed.
    Train,
    /// Keep every example in order, truncating to the caps.
    Eval,
}

/// Index sequences for one side (context or question) of a batch,
/// padded to `len` tokens of `word_len` characters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedSeq {
    pub len: usize,
    pub word_len: usize,
    /// `[batch × len]`
    pub words: Vec<u32>,
    /// `[batch × len × word_len]`
    pub chars: Vec<u32>,
    /// `[batch × len]`, true on real tokens.
    pub mask: Vec<bool>,
}

/// Borrowed view of one example's padded sequence.
#[derive(Clone, Copy, Debug)]
pub struct SeqInput<'a> {
    pub words: &'a [u32],
    pub chars: &'a [u32],
    pub word_len: usize,
    pub mask: &'a [bool],
}

#[derive(Clone, Copy, Debug)]
pub struct ExampleInput<'a> {
    pub context: SeqInput<'a>,
    pub question: SeqInput<'a>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Positions of the member examples in the input slice.
    pub indices: Vec<usize>,
    pub context: PaddedSeq,
    pub question: PaddedSeq,
    pub starts: Vec<usize>,
    pub ends: Vec<usize>,
    pub answerable: Vec<bool>,
}

impl PaddedSeq {
    fn build<'a>(rows: impl Iterator<Item = (&'a [u32], &'a [Vec<u32>])> + Clone, cap: usize) -> Self {
        let len = rows.clone().map(|(w, _)| w.len().min(cap)).max().unwrap_or(0).max(1);
        let word_len = rows
            .clone()
            .flat_map(|(_, c)| c.iter().take(cap).map(Vec::len))
            .max()
            .unwrap_or(0)
            .max(1);
        let count = rows.clone().count();
        let mut seq = PaddedSeq {
            len,
            word_len,
            words: alloc::vec![PAD; count * len],
            chars: alloc::vec![PAD; count * len * word_len],
            mask: alloc::vec![false; count * len],
        };
        for (b, (words, chars)) in rows.enumerate() {
            for (t, (&w, cs)) in words.iter().zip(chars).take(len).enumerate() {
                seq.words[b * len + t] = w;
                seq.mask[b * len + t] = true;
                let base = (b * len + t) * word_len;
                seq.chars[base..base + cs.len()].copy_from_slice(cs);
            }
        }
        seq
    }

    fn row(&self, b: usize) -> SeqInput<'_> {
        let (l, w) = (self.len, self.word_len);
        SeqInput {
            words: &self.words[b * l..(b + 1) * l],
            chars: &self.chars[b * l * w..(b + 1) * l * w],
            word_len: w,
            mask: &self.mask[b * l..(b + 1) * l],
        }
    }
}

impl<'a> SeqInput<'a> {
    /// Number of real (unpadded) tokens.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Drops trailing padding. Returns `self` unchanged if the real tokens
    /// are not a prefix.
    pub fn trimmed(self) -> SeqInput<'a> {
        let n = self.real_len();
        if n == 0 || self.mask[..n].iter().any(|&m| !m) {
            return self;
        }
        SeqInput {
            words: &self.words[..n],
            chars: &self.chars[..n * self.word_len],
            word_len: self.word_len,
            mask: &self.mask[..n],
        }
    }
}

impl<'a> ExampleInput<'a> {
    pub fn trimmed(self) -> ExampleInput<'a> {
        ExampleInput { context: self.context.trimmed(), question: self.question.trimmed() }
    }
}

impl Batch {
    /// Pads the given examples into one batch, truncating to the caps.
    pub fn from_examples(examples: &[EncodedExample], indices: Vec<usize>, cfg: &BatchConfig) -> Self {
        let members = || indices.iter().map(|&i| &examples[i]);
        let context = PaddedSeq::build(
            members().map(|e| (e.context_words.as_slice(), e.context_chars.as_slice())),
            cfg.max_context_len,
        );
        let question = PaddedSeq::build(
            members().map(|e| (e.question_words.as_slice(), e.question_chars.as_slice())),
            cfg.max_question_len,
        );
        let spans: Vec<(usize, usize)> = members()
            .map(|e| match e.answer_span {
                Some((i, j)) if j < context.len => (i, j),
                _ => (NO_SPAN, NO_SPAN),
            })
            .collect();
        Batch {
            answerable: members().map(|e| e.answer_span.is_some()).collect(),
            starts: spans.iter().map(|s| s.0).collect(),
            ends: spans.iter().map(|s| s.1).collect(),
            indices,
            context,
            question,
        }
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn input(&self, b: usize) -> ExampleInput<'_> {
        ExampleInput {
            context: self.context.row(b),
            question: self.question.row(b),
        }
    }

    /// Span target of member `b`, if answerable and inside the padded context.
    pub fn span(&self, b: usize) -> Option<(usize, usize)> {
        (self.starts[b] != NO_SPAN).then(|| (self.starts[b], self.ends[b]))
    }
}

/// Training batches keep only examples within the caps, in an order fixed
/// by `seed`. Evaluation batches keep every example in input order.
pub fn make_batches(examples: &[EncodedExample], cfg: &BatchConfig, purpose: BatchPurpose, seed: u64) -> Vec<Batch> {
    batch_order(examples, cfg, purpose, seed)
        .into_iter()
        .map(|chunk| Batch::from_examples(examples, chunk, cfg))
        .collect()
}

/// Member indices of each batch, without building the padded arrays.
pub fn batch_order(examples: &[EncodedExample], cfg: &BatchConfig, purpose: BatchPurpose, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = match purpose {
        BatchPurpose::Train => (0..examples.len())
            .filter(|&i| {
                examples[i].context_len() <= cfg.max_context_len && examples[i].question_len() <= cfg.max_question_len
            })
            .collect(),
        BatchPurpose::Eval => (0..examples.len()).collect(),
    };
    if purpose == BatchPurpose::Train {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.chunks(cfg.batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
