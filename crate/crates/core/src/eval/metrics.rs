use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercase, drop ASCII punctuation, blank out the articles `a`/`an`/`the`
/// where they stand between word boundaries, and collapse whitespace, as
/// the official SQuAD scorer does.
pub fn normalize_answer(text: &str) -> String {
    let stripped: String = text.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let mut spaced = String::with_capacity(stripped.len());
    let mut rest = stripped.as_str();
    while let Some(c) = rest.chars().next() {
        let split = if is_word_char(c) {
            rest.find(|c: char| !is_word_char(c)).unwrap_or(rest.len())
        } else {
            c.len_utf8()
        };
        let (run, tail) = rest.split_at(split);
        spaced.push_str(if matches!(run, "a" | "an" | "the") { " " } else { run });
        rest = tail;
    }
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Gold variants that survive normalization; `[""]` when none do, which
/// is how unanswerable questions are scored.
fn usable_golds<'a>(golds: &[&'a str]) -> Vec<&'a str> {
    let kept: Vec<&str> = golds.iter().copied().filter(|g| !normalize_answer(g).is_empty()).collect();
    if kept.is_empty() {
        alloc::vec![""]
    } else {
        kept
    }
}

/// 1.0 if the normalized prediction equals any normalized gold variant.
/// An empty gold list means unanswerable: only an empty prediction matches.
pub fn exact_match(prediction: &str, golds: &[&str]) -> f64 {
    let pred = normalize_answer(prediction);
    let hit = usable_golds(golds).iter().any(|g| normalize_answer(g) == pred);
    if hit {
        1.0
    } else {
        0.0
    }
}

fn f1_single(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt == gt { 1.0 } else { 0.0 };
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-overlap F1, maximised over gold variants.
pub fn f1_score(prediction: &str, golds: &[&str]) -> f64 {
    usable_golds(golds)
        .iter()
        .map(|g| f1_single(prediction, g))
        .fold(0.0, f64::max)
}
