//! Tokenization, answer alignment, index encoding, batching and
//! shuffled-pair generation for SQuAD-style data.

mod batch;
mod example;
mod shuffle;
mod tokenize;
mod vocab;

pub use batch::{batch_order, make_batches, Batch, BatchConfig, BatchPurpose, ExampleInput, PaddedSeq, SeqInput, NO_SPAN};
pub use example::{align_answer, build_example, QAExample, RawAnswer};
pub use shuffle::shuffle_pairs;
pub use tokenize::{is_punctuation, tokenize, Token};
pub use vocab::{EncodedExample, Vocabulary, OOV, PAD};
