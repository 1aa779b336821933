//! Teacher-forced cross-entropy training at toy scale, and checkpoints that
//! carry their model config and vocabulary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::argmax;
use crate::model::graph::{self, ParamVars};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::numerics::{checkpoint, optim, AdamWConfig, OptimizerState, Tape};
use crate::tokenizer::Vocab;
use crate::{Error, Result};

const META_CONFIG: &str = "model_config";
const META_VOCAB: &str = "vocab";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    /// Stop once teacher-forced accuracy over the whole set reaches this.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            seed: 0,
            optimizer: AdamWConfig {
                peak_lr: 3e-3,
                warmup_steps: 50,
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
            target_accuracy: Some(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub audio: Vec<f32>,
    /// Label ids without bos or eos.
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub log: Vec<StepLog>,
    /// Updates actually applied.
    pub updates: usize,
    /// Accuracy of the returned weights, when it was measured.
    pub final_accuracy: Option<f64>,
    pub reached_target: bool,
}

impl TrainReport {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("step,loss,accuracy,lr,grad_norm\n");
        for l in &self.log {
            let _ = writeln!(s, "{},{:e},{},{:e},{:e}", l.step, l.loss, l.accuracy, l.lr, l.grad_norm);
        }
        s
    }
}

/// `[bos, tokens...]` as inputs and `[tokens..., eos]` as targets.
pub fn teacher_forcing(vocab: &Vocab, tokens: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let mut inputs = Vec::with_capacity(tokens.len() + 1);
    inputs.push(vocab.bos_id());
    inputs.extend_from_slice(tokens);
    let mut targets = tokens.to_vec();
    targets.push(vocab.eos_id());
    (inputs, targets)
}

/// Loss, accuracy and per-parameter gradients over the whole set.
struct BatchPass {
    loss: f64,
    accuracy: f64,
    grads: Vec<Option<Vec<f32>>>,
}

fn batch_pass(model: &Model<f32>, vocab: &Vocab, examples: &[Example]) -> Result<BatchPass> {
    let total: usize = examples.iter().map(|e| e.tokens.len() + 1).sum();
    let mut tape = Tape::new();
    let pv = ParamVars::load(&mut tape, &model.params, true);
    let mut loss_sum = None;
    let mut correct = 0usize;
    for ex in examples {
        let (inputs, targets) = teacher_forcing(vocab, &ex.tokens);
        let (logits, loss) = graph::teacher_forced_loss(&mut tape, &pv, &model.config, &ex.audio, &inputs, &targets)?;
        let v = tape.value(logits);
        for (r, &t) in targets.iter().enumerate() {
            if argmax(v.row(r)) == Some(t as usize) {
                correct += 1;
            }
        }
        let weighted = tape.scale(loss, (targets.len() as f64 / total as f64) as f32)?;
        loss_sum = Some(match loss_sum {
            None => weighted,
            Some(acc) => tape.add(acc, weighted)?,
        });
    }
    let loss = loss_sum.ok_or_else(|| Error::Argument("no training examples".into()))?;
    tape.backward(loss)?;
    let loss_value = f64::from(tape.value(loss).data()[0]);
    let grads = pv.ordered().iter().map(|&v| tape.take_grad(v)).collect();
    Ok(BatchPass {
        loss: loss_value,
        accuracy: correct as f64 / total as f64,
        grads,
    })
}

fn check_examples(model: &Model<f32>, vocab: &Vocab, examples: &[Example]) -> Result<()> {
    if model.config.vocab_size != vocab.total_size() {
        return Err(Error::Config(format!(
            "model vocab_size {} but tokenizer has {} ids",
            model.config.vocab_size,
            vocab.total_size()
        )));
    }
    for (i, ex) in examples.iter().enumerate() {
        if ex.audio.len() < model.min_samples() {
            return Err(Error::InputTooShort {
                min_samples: model.min_samples(),
                got: ex.audio.len(),
            });
        }
        if let Some(t) = ex.tokens.iter().find(|&&t| t as usize >= vocab.base_size()) {
            return Err(Error::Config(format!("example {i} has non-text token id {t}")));
        }
    }
    Ok(())
}

/// Full-batch AdamW on teacher-forced cross-entropy. Deterministic for a
/// given model, data and config. When the target accuracy is reached the
/// pending update is not applied, so the returned weights are the ones
/// that were measured.
pub fn train(model: &mut Model<f32>, vocab: &Vocab, examples: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    check_examples(model, vocab, examples)?;
    let mut state = OptimizerState::new(cfg.optimizer.clone())?;
    let mut report = TrainReport {
        log: Vec::with_capacity(cfg.steps),
        updates: 0,
        final_accuracy: None,
        reached_target: false,
    };
    if examples.is_empty() {
        return Ok(report);
    }
    for step in 0..cfg.steps {
        let pass = batch_pass(model, vocab, examples)?;
        report.final_accuracy = Some(pass.accuracy);
        if cfg.target_accuracy.is_some_and(|t| pass.accuracy >= t) {
            report.reached_target = true;
            report.log.push(StepLog {
                step,
                loss: pass.loss,
                accuracy: pass.accuracy,
                lr: 0.0,
                grad_norm: 0.0,
            });
            break;
        }
        model.params.zero_grad();
        for (t, g) in model.params.tensors_mut().into_iter().zip(pass.grads) {
            if let Some(g) = g {
                t.accumulate_grad(&g)?;
            }
        }
        let stats = optim::adamw_step(&mut model.params.tensors_mut(), &mut state)?;
        report.updates += 1;
        report.final_accuracy = None;
        report.log.push(StepLog {
            step,
            loss: pass.loss,
            accuracy: pass.accuracy,
            lr: stats.lr,
            grad_norm: stats.grad_norm,
        });
    }
    Ok(report)
}

/// Teacher-forced token accuracy without updating anything.
pub fn accuracy(model: &Model<f32>, vocab: &Vocab, examples: &[Example]) -> Result<f64> {
    check_examples(model, vocab, examples)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let (inputs, targets) = teacher_forcing(vocab, &ex.tokens);
        let memory = model.encode(&ex.audio)?;
        let logits = model.decoder_forward(&inputs, &memory)?;
        for (r, &t) in targets.iter().enumerate() {
            correct += usize::from(argmax(logits.row(r)) == Some(t as usize));
        }
        total += targets.len();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

pub fn checkpoint_bytes(model: &Model<f32>, vocab: &Vocab) -> Result<Vec<u8>> {
    let mut meta = BTreeMap::new();
    meta.insert(META_CONFIG.to_string(), model.config.to_toml_string());
    meta.insert(META_VOCAB.to_string(), vocab.to_text());
    model.params.to_checkpoint_bytes(&meta)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model<f32>, vocab: &Vocab) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(model, vocab)?).map_err(|e| Error::io(path, e))
}

/// Rebuilds the model and vocabulary stored in a checkpoint.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model<f32>, Vocab)> {
    let ckpt = checkpoint::load::<f32>(path)?;
    let text = |key: &str| {
        ckpt.metadata
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Config(format!("checkpoint metadata lacks '{key}'")))
    };
    let config = ModelConfig::from_toml_str(&text(META_CONFIG)?)?;
    let vocab = Vocab::from_text(&text(META_VOCAB)?)?;
    let params = ModelParams::from_checkpoint(&config, ckpt)?;
    Ok((Model::new(config, params)?, vocab))
}
