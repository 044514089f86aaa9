//! End-to-end use of the public API: examples in, trained model, scored out.

use equant_core::corpus::{build_example, Batch, BatchConfig, QAExample, RawAnswer, Vocabulary};
use equant_core::eval::{exact_match, f1_score, normalize_answer, score, EvalMode};
use equant_core::model::{prediction_for, EncoderSpec, Equant, HeadVariant, ModelConfig};
use equant_core::tensor::AdamState;
use equant_core::train::{restore_partial, train_step, Objective, Schedule, Sequential, TrainConfig};
use equant_core::Tensor;
use proptest::prelude::*;

const PLACES: [&str; 4] = ["forest", "river", "desert", "city"];
const ANIMALS: [&str; 4] = ["fox", "otter", "camel", "pigeon"];

fn corpus() -> Vec<QAExample> {
    let mut out = Vec::new();
    for (a, (animal, place)) in ANIMALS.iter().zip(PLACES).enumerate() {
        let context = format!("The {animal} lives in the {place} all year.");
        let start = context.find(place).unwrap();
        let article = format!("art{a}");
        let answer = RawAnswer { text: place.to_string(), start };
        out.push(build_example(&format!("{a}-q"), &article, &context, &format!("Where does the {animal} live?"), &[answer], false).unwrap());
        let other = ANIMALS[(a + 1) % 4];
        out.push(build_example(&format!("{a}-x"), &article, &context, &format!("Where does the {other} live?"), &[], true).unwrap());
    }
    out
}

fn tiny_config() -> ModelConfig {
    let enc = EncoderSpec { blocks: 1, convs: 1, kernel: 3 };
    ModelConfig {
        word_dim: 8,
        char_dim: 4,
        char_conv_out: 8,
        char_conv_width: 3,
        hidden: 16,
        embedding_encoder: enc,
        model_encoder: enc,
        head_encoder: enc,
        head_variant: HeadVariant::Equant3,
        head3_widths: [16, 8],
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

#[test]
fn train_predict_and_score() {
    let examples = corpus();
    let vocab = Vocabulary::build(&examples, |_| true);
    let encoded: Vec<_> = examples.iter().map(|e| vocab.encode(e, 16)).collect();
    let ids: Vec<String> = examples.iter().map(|e| e.id.clone()).collect();
    let rows = vocab.word_count();
    let vectors: Vec<f32> = (0..rows * 8).map(|k| if k < 16 { 0.0 } else { ((k * 37 % 17) as f32 - 8.0) / 10.0 }).collect();
    let mut model = Equant::new(tiny_config(), Tensor::new(&[rows, 8], vectors).unwrap(), vocab.char_count(), 1).unwrap();
    let fresh = model.params.clone();

    let batch_cfg = BatchConfig { batch_size: 8, ..BatchConfig::default() };
    let train = TrainConfig { batch_size: 8, warmup_iterations: 10, lr: 0.01, ..TrainConfig::default() };
    let mut adam = AdamState::new(model.params.shapes());
    let mut schedule = Schedule::new(batch_cfg, train.seed);
    let mut losses = Vec::new();
    for k in 0..200 {
        let batch = schedule.batch(&encoded, k).unwrap();
        let loss = train_step(&mut model, &mut adam, &batch, &ids, Objective::Joint, &train, k, &Sequential).unwrap();
        losses.push(loss.total);
    }
    assert!(losses[190..].iter().sum::<f64>() < 0.5 * losses[..10].iter().sum::<f64>(), "{losses:?}");

    let preds: Vec<_> = (0..examples.len())
        .map(|i| {
            let batch = Batch::from_examples(&encoded, vec![i], &batch_cfg);
            let out = model.infer(batch.input(0).trimmed()).unwrap();
            prediction_for(&out, &model.config, &examples[i])
        })
        .collect();
    let report = score(&preds, EvalMode::V2, 0.5).unwrap();
    assert_eq!(report.total, 8);
    assert_eq!((report.answerable, report.unanswerable), (4, 4));
    assert!(report.answerability_accuracy >= 75.0, "{report:?}");

    // Restoring everything from the fresh store undoes training.
    let trained = model.params.clone();
    restore_partial(&mut model.params, &fresh, &[]).unwrap();
    assert_eq!(model.params, fresh);
    assert_ne!(trained, fresh);
}

proptest! {
    #[test]
    fn metric_bounds(pred in "[a-zA-Z ,.]{0,20}", gold in "[a-zA-Z ,.]{0,20}") {
        let golds = [gold.as_str()];
        let (em, f1) = (exact_match(&pred, &golds), f1_score(&pred, &golds));
        prop_assert!((0.0..=1.0).contains(&f1));
        prop_assert!(em == 0.0 || em == 1.0);
        if em == 1.0 {
            prop_assert_eq!(f1, 1.0);
        }
        prop_assert_eq!(f1, f1_score(&gold, &[pred.as_str()]));
    }

    #[test]
    fn answer_matches_itself(text in "[a-zA-Z0-9 ,.'-]{0,24}") {
        prop_assert_eq!(exact_match(&text, &[text.as_str()]), 1.0);
        let norm = normalize_answer(&text);
        prop_assert_eq!(normalize_answer(&norm), norm);
    }
}
