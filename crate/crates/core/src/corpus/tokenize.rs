use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// A token with its half-open character (not byte) span in the source text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{3001}'..='\u{3003}'
            | '«' | '»' | '¿' | '¡' | '§' | '¶' | '·' | '´')
}

/// Splits on whitespace, then peels leading and trailing punctuation off
/// each chunk as single-character tokens. Case is preserved.
///
/// `"in 1871."` gives `in`, `1871`, `.` at `(0,2)`, `(3,7)`, `(7,8)`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut tokens);
    }
    tokens
}

fn split_chunk(chars: &[char], mut lo: usize, mut hi: usize, out: &mut Vec<Token>) {
    let single = |k: usize| Token {
        text: chars[k..k + 1].iter().collect(),
        start: k,
        end: k + 1,
    };
    while lo < hi && is_punctuation(chars[lo]) {
        out.push(single(lo));
        lo += 1;
    }
    let mut trailing = Vec::new();
    while hi > lo && is_punctuation(chars[hi - 1]) {
        hi -= 1;
        trailing.push(single(hi));
    }
    if lo < hi {
        out.push(Token {
            text: chars[lo..hi].iter().collect(),
            start: lo,
            end: hi,
        });
    }
    out.extend(trailing.into_iter().rev());
}
