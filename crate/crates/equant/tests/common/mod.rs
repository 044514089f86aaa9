//! Shared fixtures: a small synthetic SQuAD corpus and a reduced-width
//! model config that trains in seconds.

#![allow(dead_code)]

use std::path::Path;

use equant::config::RunConfig;
use equant::core::model::{EncoderSpec, HeadVariant, ModelConfig};
use serde_json::{json, Value};

const ANIMALS: [&str; 20] = [
    "fox", "owl", "cat", "dog", "elk", "yak", "bat", "emu", "ant", "bee", "cod", "eel", "gnu", "hen", "jay", "koi", "ram",
    "seal", "toad", "wolf",
];
const PLACES: [&str; 16] = [
    "forest", "desert", "valley", "river", "meadow", "canyon", "island", "harbor", "glacier", "swamp", "prairie",
    "lagoon", "tundra", "jungle", "marsh", "cavern",
];
const FOODS: [&str; 16] = [
    "berries", "seeds", "fish", "grass", "insects", "roots", "honey", "nuts", "worms", "apples", "leaves", "bark",
    "clover", "plankton", "mice", "moss",
];

/// `articles` single-paragraph articles, each with one answerable and one
/// unanswerable question, as SQuAD 2.0 JSON.
pub fn synthetic_squad(articles: usize) -> Value {
    let mut data = Vec::new();
    for a in 0..articles {
        let animal = ANIMALS[a % ANIMALS.len()];
        let other = ANIMALS[(a + 7) % ANIMALS.len()];
        let place = PLACES[(a * 3) % PLACES.len()];
        let food = FOODS[(a * 5 + 1) % FOODS.len()];
        let context = format!("The {animal} lives in the {place} and eats {food} every day.");
        let (question, answer) = if a % 2 == 0 {
            (format!("Where does the {animal} live?"), place)
        } else {
            (format!("What does the {animal} eat?"), food)
        };
        let start = context.find(answer).unwrap();
        let impossible = if a % 2 == 0 {
            format!("What does the {other} eat?")
        } else {
            format!("Where does the {other} live?")
        };
        data.push(json!({
            "title": format!("Article {a}"),
            "paragraphs": [{
                "context": context,
                "qas": [
                    {"id": format!("a{a}-q"), "question": question, "answers": [{"text": answer, "answer_start": start}], "is_impossible": false},
                    {"id": format!("a{a}-x"), "question": impossible, "answers": [], "is_impossible": true},
                ],
            }],
        }));
    }
    json!({"version": "v2.0", "data": data})
}

/// Only the answerable half of [`synthetic_squad`], in SQuAD 1.1 form.
pub fn synthetic_answerable(articles: usize) -> Value {
    let mut v = synthetic_squad(articles);
    for art in v["data"].as_array_mut().unwrap() {
        for p in art["paragraphs"].as_array_mut().unwrap() {
            let qas = p["qas"].as_array_mut().unwrap();
            qas.retain(|q| q["is_impossible"] == false);
            for q in qas {
                q.as_object_mut().unwrap().remove("is_impossible");
            }
        }
    }
    v["version"] = json!("1.1");
    v
}

pub fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

/// Reduced-width model: every block present, all widths small.
pub fn small_model(head: HeadVariant) -> ModelConfig {
    ModelConfig {
        word_dim: 16,
        char_dim: 8,
        char_conv_out: 16,
        hidden: 16,
        embedding_encoder: EncoderSpec { blocks: 1, convs: 2, kernel: 5 },
        model_encoder: EncoderSpec { blocks: 2, convs: 2, kernel: 5 },
        head_encoder: EncoderSpec { blocks: 1, convs: 2, kernel: 5 },
        head_variant: head,
        head1_channels: [4, 8],
        head2_channels: 4,
        equant2_pad_length: 32,
        head3_widths: [16, 8],
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

/// Run config over `dir` for the synthetic corpus.
pub fn small_run(dir: &Path, head: HeadVariant) -> RunConfig {
    let mut cfg = RunConfig { model: small_model(head), ..RunConfig::default() };
    cfg.corpus.max_context_len = 32;
    cfg.corpus.max_question_len = 16;
    cfg.train.batch_size = 32;
    cfg.train.warmup_iterations = 50;
    cfg.train.log_interval = 10;
    cfg.train.checkpoint_interval = 100;
    cfg.paths.cache = Some(dir.join("cache.bin"));
    cfg.paths.out_dir = Some(dir.join("run"));
    cfg
}
