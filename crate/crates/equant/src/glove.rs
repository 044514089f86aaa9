//! GloVe-format text embeddings: one token per line followed by its values.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use equant_core::corpus::Vocabulary;
use equant_core::Tensor;

use crate::error::{Error, Result};

/// Vectors read from an embedding file, truncated to `keep` components.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Embeddings {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f32>>,
}

impl Embeddings {
    /// Exact token first, then its lowercase form.
    pub fn lookup(&self, token: &str) -> Option<&[f32]> {
        self.vectors
            .get(token)
            .or_else(|| self.vectors.get(&token.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.lookup(token).is_some()
    }
}

/// Reads a GloVe file. The file's width is fixed by its first line; every
/// line must match it. Only the first `keep` values are kept. When `wanted`
/// is given, other tokens are skipped (their lines are still validated).
/// Tokens may contain spaces: the last `width` fields are the values.
pub fn load_glove(reader: impl BufRead, keep: usize, wanted: Option<&BTreeSet<String>>) -> Result<Embeddings> {
    let mut width: Option<usize> = None;
    let mut out = Embeddings { dim: keep, vectors: BTreeMap::new() };
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Format { line: lineno, reason: e.to_string() })?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        let w = *width.get_or_insert(fields.len().saturating_sub(1));
        if w < keep {
            return Err(Error::Format { line: lineno, reason: format!("{w} values per line, need at least {keep}") });
        }
        if fields.len() < w + 1 {
            return Err(Error::Format { line: lineno, reason: format!("expected {w} values, found {}", fields.len() - 1) });
        }
        let split = fields.len() - w;
        let token = fields[..split].join(" ");
        if wanted.is_some_and(|set| !set.contains(&token)) {
            continue;
        }
        let mut values = Vec::with_capacity(keep);
        for (k, f) in fields[split..split + keep].iter().enumerate() {
            let v: f32 = f
                .parse()
                .map_err(|_| Error::Format { line: lineno, reason: format!("value {} is not a number: {f:?}", k + 1) })?;
            values.push(v);
        }
        for f in &fields[split + keep..] {
            f.parse::<f32>()
                .map_err(|_| Error::Format { line: lineno, reason: format!("value is not a number: {f:?}") })?;
        }
        out.vectors.entry(token).or_insert(values);
    }
    Ok(out)
}

/// Tokens whose exact or lowercase form a vocabulary might look up.
pub fn lookup_keys<'a>(tokens: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    for t in tokens {
        keys.insert(t.to_string());
        keys.insert(t.to_lowercase());
    }
    keys
}

/// `[words × dim]` matrix; padding, OOV and unmatched rows are zero.
pub fn word_matrix(vocab: &Vocabulary, emb: &Embeddings) -> Tensor<f32> {
    let dim = emb.dim;
    let mut data = vec![0.0f32; vocab.word_count() * dim];
    for (i, w) in vocab.words().iter().enumerate().skip(2) {
        if let Some(v) = emb.lookup(w) {
            data[i * dim..(i + 1) * dim].copy_from_slice(v);
        }
    }
    Tensor::new(&[vocab.word_count(), dim], data).expect("vocabulary has reserved rows")
}

/// Char-table rows that have a file vector, as `(row, vector)` pairs.
pub fn char_rows(vocab: &Vocabulary, emb: &Embeddings) -> Vec<(u32, Vec<f32>)> {
    vocab
        .chars()
        .iter()
        .enumerate()
        .skip(2)
        .filter_map(|(i, c)| emb.vectors.get(&c.to_string()).map(|v| (i as u32, v.clone())))
        .collect()
}
