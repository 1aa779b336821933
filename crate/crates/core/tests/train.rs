mod common;

use moonshine_core::model::{Model, ModelConfig};
use moonshine_core::tokenizer::Vocab;
use moonshine_core::train::{self, train, Example, TrainConfig};
use moonshine_core::Error;

fn setup() -> (Vocab, Vec<Example>, Model<f32>) {
    let (vocab, examples, _) = common::toy_training_set(1);
    let cfg = ModelConfig::preset("toy-32").unwrap().with_vocab(vocab.total_size());
    (vocab, examples, Model::init(cfg, 2).unwrap())
}

#[test]
fn zero_steps_leaves_initialization() {
    let (vocab, examples, mut model) = setup();
    let init = model.clone();
    let r = train(&mut model, &vocab, &examples, &TrainConfig { steps: 0, ..TrainConfig::default() }).unwrap();
    assert!(r.log.is_empty());
    assert_eq!(train::checkpoint_bytes(&model, &vocab).unwrap(), train::checkpoint_bytes(&init, &vocab).unwrap());
}

#[test]
fn loss_logs_are_bit_identical() {
    let run = || {
        let (vocab, examples, mut model) = setup();
        let cfg = TrainConfig { steps: 5, target_accuracy: None, ..TrainConfig::default() };
        let r = train(&mut model, &vocab, &examples, &cfg).unwrap();
        (r.log_csv(), train::checkpoint_bytes(&model, &vocab).unwrap())
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    assert_eq!(a.lines().count(), 6);
}

#[test]
fn loss_decreases() {
    let (vocab, examples, mut model) = setup();
    let cfg = TrainConfig { steps: 30, target_accuracy: None, ..TrainConfig::default() };
    let r = train(&mut model, &vocab, &examples, &cfg).unwrap();
    let losses: Vec<f64> = r.log.iter().map(|l| l.loss).collect();
    assert!(losses[29] < 0.5 * losses[0], "{losses:?}");
}

#[test]
fn early_stop_keeps_measured_weights() {
    let (vocab, examples, mut model) = setup();
    let cfg = TrainConfig { steps: 200, target_accuracy: Some(0.5), ..TrainConfig::default() };
    let r = train(&mut model, &vocab, &examples, &cfg).unwrap();
    assert!(r.reached_target);
    assert_eq!(r.updates + 1, r.log.len());
    let acc = train::accuracy(&model, &vocab, &examples).unwrap();
    assert!((acc - r.final_accuracy.unwrap()).abs() < 1e-12);
}

#[test]
fn inconsistent_vocab_is_a_config_error() {
    let (vocab, examples, _) = setup();
    let mut wrong = Model::<f32>::init(ModelConfig::preset("toy-32").unwrap(), 0).unwrap();
    let err = train(&mut wrong, &vocab, &examples, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}
