use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::example::QAExample;
use super::tokenize::Token;

pub const PAD: u32 = 0;
pub const OOV: u32 = 1;

/// Word and character index maps. Indices 0 and 1 are reserved in both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabParts", into = "VocabParts")]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<char>,
    word_index: BTreeMap<String, u32>,
    char_index: BTreeMap<char, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabParts {
    words: Vec<String>,
    chars: Vec<char>,
}

impl From<VocabParts> for Vocabulary {
    fn from(p: VocabParts) -> Self {
        Self::from_parts(p.words, p.chars)
    }
}

impl From<Vocabulary> for VocabParts {
    fn from(v: Vocabulary) -> Self {
        Self { words: v.words, chars: v.chars }
    }
}

/// A question/context pair mapped to indices, unpadded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub context_words: Vec<u32>,
    pub context_chars: Vec<Vec<u32>>,
    pub question_words: Vec<u32>,
    pub question_chars: Vec<Vec<u32>>,
    pub answer_span: Option<(usize, usize)>,
}

impl EncodedExample {
    pub fn context_len(&self) -> usize {
        self.context_words.len()
    }

    pub fn question_len(&self) -> usize {
        self.question_words.len()
    }
}

const RESERVED_WORDS: [&str; 2] = ["<pad>", "<oov>"];
const RESERVED_CHARS: [char; 2] = ['\0', '\u{1}'];

fn by_frequency<K: Ord + Clone>(counts: BTreeMap<K, usize>) -> Vec<K> {
    let mut items: Vec<(K, usize)> = counts.into_iter().collect();
    // Stable sort keeps key order among equal counts.
    items.sort_by_key(|&(_, n)| core::cmp::Reverse(n));
    items.into_iter().map(|(k, _)| k).collect()
}

impl Vocabulary {
    /// Collects words (those accepted by `keep_word`) and every character
    /// seen in contexts and questions, ordered by descending frequency.
    pub fn build<'a, I, F>(examples: I, keep_word: F) -> Self
    where
        I: IntoIterator<Item = &'a QAExample>,
        F: Fn(&str) -> bool,
    {
        let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut char_counts: BTreeMap<char, usize> = BTreeMap::new();
        for ex in examples {
            for tok in ex.context_tokens.iter().chain(&ex.question_tokens) {
                *word_counts.entry(tok.text.clone()).or_default() += 1;
                for c in tok.text.chars() {
                    *char_counts.entry(c).or_default() += 1;
                }
            }
        }
        word_counts.retain(|w, _| keep_word(w));
        char_counts.retain(|c, _| !RESERVED_CHARS.contains(c));
        let words = RESERVED_WORDS.iter().map(|w| w.to_string()).chain(by_frequency(word_counts)).collect();
        let chars = RESERVED_CHARS.into_iter().chain(by_frequency(char_counts)).collect();
        Self::from_parts(words, chars)
    }

    /// Rebuilds the lookup maps from index-ordered lists, as stored in a cache.
    pub fn from_parts(words: Vec<String>, chars: Vec<char>) -> Self {
        let word_index = words.iter().enumerate().skip(2).map(|(i, w)| (w.clone(), i as u32)).collect();
        let char_index = chars.iter().enumerate().skip(2).map(|(i, &c)| (c, i as u32)).collect();
        Self { words, chars, word_index, char_index }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn word_id(&self, word: &str) -> u32 {
        self.word_index.get(word).copied().unwrap_or(OOV)
    }

    pub fn char_id(&self, c: char) -> u32 {
        self.char_index.get(&c).copied().unwrap_or(OOV)
    }

    fn encode_tokens(&self, tokens: &[Token], max_word_len: usize) -> (Vec<u32>, Vec<Vec<u32>>) {
        let words = tokens.iter().map(|t| self.word_id(&t.text)).collect();
        let chars = tokens
            .iter()
            .map(|t| t.text.chars().take(max_word_len).map(|c| self.char_id(c)).collect())
            .collect();
        (words, chars)
    }

    pub fn encode(&self, ex: &QAExample, max_word_len: usize) -> EncodedExample {
        let (context_words, context_chars) = self.encode_tokens(&ex.context_tokens, max_word_len);
        let (question_words, question_chars) = self.encode_tokens(&ex.question_tokens, max_word_len);
        EncodedExample {
            context_words,
            context_chars,
            question_words,
            question_chars,
            answer_span: ex.answer_span,
        }
    }
}
