//! Attention-map dumps for external plotting.
//!
//! ```text
//! equant-attention 1
//! category <answerable|adversarial-unanswerable|shuffled>
//! id <JSON string>
//! context <JSON array of n tokens>
//! question <JSON array of m tokens>
//! s <n> <m>
//! <n lines of m values>
//! softmax <n> <m>
//! <n lines of m values>
//! ```
//!
//! Values are float32 in scientific notation with 9 significant digits,
//! which parses back to the identical bits.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

const HEADER: &str = "equant-attention 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Answerable,
    AdversarialUnanswerable,
    Shuffled,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Answerable => "answerable",
            Category::AdversarialUnanswerable => "adversarial-unanswerable",
            Category::Shuffled => "shuffled",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "answerable" => Ok(Category::Answerable),
            "adversarial-unanswerable" => Ok(Category::AdversarialUnanswerable),
            "shuffled" => Ok(Category::Shuffled),
            _ => Err(format!("unknown category `{s}` (answerable, adversarial-unanswerable, shuffled)")),
        }
    }
}

/// Raw similarity `s` and its row softmax, both row-major `[n × m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionDump {
    pub category: Category,
    pub id: String,
    pub context_tokens: Vec<String>,
    pub question_tokens: Vec<String>,
    pub s: Vec<f32>,
    pub softmax: Vec<f32>,
}

impl AttentionDump {
    pub fn dims(&self) -> (usize, usize) {
        (self.context_tokens.len(), self.question_tokens.len())
    }

    pub fn render(&self) -> Result<String> {
        let (n, m) = self.dims();
        if self.s.len() != n * m || self.softmax.len() != n * m {
            return Err(Error::Format { line: 0, reason: format!("matrices do not match {n}×{m} tokens") });
        }
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        writeln!(out, "category {}", self.category.name()).unwrap();
        writeln!(out, "id {}", json(&self.id)).unwrap();
        writeln!(out, "context {}", json(&self.context_tokens)).unwrap();
        writeln!(out, "question {}", json(&self.question_tokens)).unwrap();
        for (label, values) in [("s", &self.s), ("softmax", &self.softmax)] {
            writeln!(out, "{label} {n} {m}").unwrap();
            for row in values.chunks(m.max(1)) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
                writeln!(out, "{}", cells.join(" ")).unwrap();
            }
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Format { line: 0, reason: format!("missing {what}") })
        };
        let (ln, header) = next("header")?;
        if header != HEADER {
            return Err(Error::Format { line: ln, reason: format!("expected `{HEADER}`") });
        }
        let field = |(ln, line): (usize, &str), key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Format { line: ln, reason: format!("expected `{key}`") })
        };
        let fmt_err = |ln: usize| move |e: String| Error::Format { line: ln, reason: e };
        let l = next("category")?;
        let category = field(l, "category")?.parse().map_err(fmt_err(l.0))?;
        let l = next("id")?;
        let id = serde_json::from_str(&field(l, "id")?).map_err(|e| fmt_err(l.0)(e.to_string()))?;
        let l = next("context")?;
        let context_tokens: Vec<String> =
            serde_json::from_str(&field(l, "context")?).map_err(|e| fmt_err(l.0)(e.to_string()))?;
        let l = next("question")?;
        let question_tokens: Vec<String> =
            serde_json::from_str(&field(l, "question")?).map_err(|e| fmt_err(l.0)(e.to_string()))?;
        let (n, m) = (context_tokens.len(), question_tokens.len());
        let mut matrix = |label: &str| -> Result<Vec<f32>> {
            let l = next(label)?;
            let dims = field(l, label)?;
            if dims != format!("{n} {m}") {
                return Err(Error::Format { line: l.0, reason: format!("`{label}` dims {dims}, tokens give {n} {m}") });
            }
            let mut values = Vec::with_capacity(n * m);
            for _ in 0..n {
                let (ln, row) = next("matrix row")?;
                let before = values.len();
                for cell in row.split_whitespace() {
                    values.push(cell.parse::<f32>().map_err(|e| fmt_err(ln)(format!("{cell:?}: {e}")))?);
                }
                if values.len() - before != m {
                    return Err(Error::Format { line: ln, reason: format!("expected {m} values") });
                }
            }
            Ok(values)
        };
        let s = matrix("s")?;
        let softmax = matrix("softmax")?;
        Ok(Self { category, id, context_tokens, question_tokens, s, softmax })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("strings serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> AttentionDump {
        AttentionDump {
            category: Category::Shuffled,
            id: "x \"1\"".into(),
            context_tokens: vec!["a".into(), "b c".into(), "\u{e9}".into()],
            question_tokens: vec!["?".into(), "q".into()],
            s: vec![1.0, -0.0, 1e-30, 3.4e38, -7.25, f32::MIN_POSITIVE / 4.0],
            softmax: vec![0.5, 0.5, 1.0, 0.0, 0.25, 0.75],
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let d = sample();
        let back = AttentionDump::parse(&d.render().unwrap()).unwrap();
        assert_eq!(back, d);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.s), bits(&d.s));
    }

    #[test]
    fn malformed_dumps_are_rejected() {
        let text = sample().render().unwrap();
        let short: String = text.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(AttentionDump::parse(&short).is_err());
        assert!(AttentionDump::parse(&text.replace("s 3 2", "s 2 3")).is_err());
        assert!(AttentionDump::parse(&text.replace("category shuffled", "category other")).is_err());
        let mut bad = sample();
        bad.s.pop();
        assert!(bad.render().is_err());
    }

    proptest! {
        #[test]
        fn any_finite_values_round_trip(vals in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 6)) {
            let mut d = sample();
            d.s = vals.clone();
            d.softmax = vals;
            let back = AttentionDump::parse(&d.render().unwrap()).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
