//! SQuAD v1.1 / v2.0 JSON reading and v2.0 writing.

use serde_json::{json, Map, Value};

use equant_core::corpus::{build_example, QAExample, RawAnswer};

use crate::error::{Error, Result};

fn parse_err(path: &str, reason: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), reason: reason.into() }
}

fn field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    obj.as_object()
        .ok_or_else(|| parse_err(path, "expected an object"))?
        .get(key)
        .ok_or_else(|| parse_err(path, format!("missing field `{key}`")))
}

fn str_field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a str> {
    field(obj, key, path)?.as_str().ok_or_else(|| parse_err(&format!("{path}.{key}"), "expected a string"))
}

fn array_field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a [Value]> {
    field(obj, key, path)?
        .as_array()
        .map(Vec::as_slice)
        .ok_or_else(|| parse_err(&format!("{path}.{key}"), "expected an array"))
}

/// One question per example; v1.1 questions (no `is_impossible`) are
/// answerable. Errors carry a JSON path such as `data[0].paragraphs[2].qas[1]`.
pub fn parse_squad(text: &str) -> Result<Vec<QAExample>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| parse_err("$", e.to_string()))?;
    let mut out = Vec::new();
    for (a, article) in array_field(&doc, "data", "$")?.iter().enumerate() {
        let apath = format!("data[{a}]");
        let title = match article.get("title") {
            Some(Value::String(t)) => t.clone(),
            Some(_) => return Err(parse_err(&format!("{apath}.title"), "expected a string")),
            None => apath.clone(),
        };
        for (p, para) in array_field(article, "paragraphs", &apath)?.iter().enumerate() {
            let ppath = format!("{apath}.paragraphs[{p}]");
            let context = str_field(para, "context", &ppath)?;
            for (q, qa) in array_field(para, "qas", &ppath)?.iter().enumerate() {
                let qpath = format!("{ppath}.qas[{q}]");
                let id = str_field(qa, "id", &qpath)?;
                let question = str_field(qa, "question", &qpath)?;
                let impossible = match qa.get("is_impossible") {
                    None => false,
                    Some(v) => v.as_bool().ok_or_else(|| parse_err(&format!("{qpath}.is_impossible"), "expected a boolean"))?,
                };
                let mut answers = Vec::new();
                for (k, ans) in array_field(qa, "answers", &qpath)?.iter().enumerate() {
                    let apath = format!("{qpath}.answers[{k}]");
                    let start = field(ans, "answer_start", &apath)?
                        .as_u64()
                        .ok_or_else(|| parse_err(&format!("{apath}.answer_start"), "expected a non-negative integer"))?;
                    answers.push(RawAnswer { text: str_field(ans, "text", &apath)?.to_string(), start: start as usize });
                }
                out.push(build_example(id, &title, context, question, &answers, impossible)?);
            }
        }
    }
    Ok(out)
}

/// Serializes examples as a SQuAD v2.0 document, grouping consecutive
/// examples by article and context.
pub fn write_squad(examples: &[QAExample]) -> Value {
    let mut data: Vec<Value> = Vec::new();
    let mut current: Option<(String, Vec<Value>)> = None;
    let mut para: Option<(String, Vec<Value>)> = None;
    let flush_para = |para: &mut Option<(String, Vec<Value>)>, article: &mut Option<(String, Vec<Value>)>| {
        if let (Some((ctx, qas)), Some((_, paras))) = (para.take(), article.as_mut()) {
            paras.push(json!({ "context": ctx, "qas": qas }));
        }
    };
    for ex in examples {
        if current.as_ref().map(|(t, _)| t) != Some(&ex.source_article) {
            flush_para(&mut para, &mut current);
            if let Some((title, paras)) = current.take() {
                data.push(json!({ "title": title, "paragraphs": paras }));
            }
            current = Some((ex.source_article.clone(), Vec::new()));
        }
        if para.as_ref().map(|(c, _)| c) != Some(&ex.context) {
            flush_para(&mut para, &mut current);
            para = Some((ex.context.clone(), Vec::new()));
        }
        let answers: Vec<Value> = ex.answers.iter().map(|a| json!({ "text": a.text, "answer_start": a.start })).collect();
        let mut qa = Map::new();
        qa.insert("id".into(), json!(ex.id));
        qa.insert("question".into(), json!(ex.question));
        qa.insert("answers".into(), Value::Array(answers));
        qa.insert("is_impossible".into(), json!(!ex.answerable()));
        para.as_mut().expect("paragraph opened above").1.push(Value::Object(qa));
    }
    flush_para(&mut para, &mut current);
    if let Some((title, paras)) = current.take() {
        data.push(json!({ "title": title, "paragraphs": paras }));
    }
    json!({ "version": "v2.0", "data": data })
}
