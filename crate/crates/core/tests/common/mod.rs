//! Oracles shared by the integration suites. Nothing here calls into the
//! code paths it is used to check, except to obtain the values under test.
#![allow(dead_code)]

use moonshine_core::model::graph::{self, ParamVars};
use moonshine_core::model::{ModelConfig, ModelParams};
use moonshine_core::numerics::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// ‖a − n‖ / max(‖a‖, ‖n‖), the relative error of a gradient group.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Builds `sum(op(inputs) ⊙ weights)` with fixed random weights so that
/// every output element contributes a distinct sensitivity.
pub fn weighted_sum<'a>(tape: &mut Tape<'a, f64>, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let mut r = rng(seed);
    let w = tape.constant(rand_tensor(&shape, &mut r));
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod).unwrap()
}

/// Central-difference check of an op built by `build` over `inputs`.
/// Returns the relative error for each input.
pub fn check_op<F>(inputs: &[Tensor<f64>], build: F) -> Vec<f64>
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Var,
{
    let loss_of = |xs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = build(&mut tape, &vars);
        let l = if tape.value(out).numel() == 1 { out } else { weighted_sum(&mut tape, out, 99) };
        tape.value(l).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = build(&mut tape, &vars);
    let l = if tape.value(out).numel() == 1 { out } else { weighted_sum(&mut tape, out, 99) };
    tape.backward(l).unwrap();
    let mut errors = Vec::new();
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..inputs[i].numel() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[j] += FD_STEP;
            let up = loss_of(&xs);
            xs[i].data_mut()[j] -= 2.0 * FD_STEP;
            let down = loss_of(&xs);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        errors.push(relative_error(&analytic, &numeric));
    }
    errors
}

/// Tiny model used for gradient checks: dim 32, 2+2 layers, small vocab.
pub fn grad_check_config() -> ModelConfig {
    let mut cfg = ModelConfig::preset("toy-32").unwrap().with_vocab(48);
    cfg.name = "grad-check".into();
    cfg
}

pub struct GroupCheck {
    pub name: String,
    pub coords: usize,
    pub rel_error: f64,
}

fn model_loss(cfg: &ModelConfig, params: &ModelParams<f64>, audio: &[f64], inputs: &[u32], targets: &[u32]) -> f64 {
    let mut tape = Tape::new();
    let pv = ParamVars::load(&mut tape, params, false);
    let (_, loss) = graph::teacher_forced_loss(&mut tape, &pv, cfg, audio, inputs, targets).unwrap();
    tape.value(loss).data()[0]
}

/// Finite-difference check of every parameter tensor of a full
/// encoder-decoder loss, sampling up to `per_tensor` coordinates of each.
pub fn model_gradient_check(cfg: &ModelConfig, seed: u64, per_tensor: usize) -> Vec<GroupCheck> {
    let mut r = rng(seed);
    let mut params = ModelParams::<f64>::init(cfg, seed).unwrap();
    let samples = cfg.stem.receptive_field() + 384 * 3;
    let audio: Vec<f64> = (0..samples).map(|_| r.gen_range(-0.5..0.5)).collect();
    let inputs: Vec<u32> = (0..5).map(|_| r.gen_range(0..cfg.vocab_size as u32)).collect();
    let targets: Vec<u32> = (0..5).map(|_| r.gen_range(0..cfg.vocab_size as u32)).collect();

    let analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let pv = ParamVars::load(&mut tape, &params, true);
        let (_, loss) = graph::teacher_forced_loss(&mut tape, &pv, cfg, &audio, &inputs, &targets).unwrap();
        tape.backward(loss).unwrap();
        pv.ordered()
            .iter()
            .zip(params.tensors())
            .map(|(v, t)| tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect()
    };

    let names: Vec<String> = params.names().to_vec();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let n = params.tensors()[ti].numel();
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| r.gen_range(0..n)).collect()
        };
        let mut a = Vec::new();
        let mut num = Vec::new();
        for &c in &coords {
            let orig = params.tensors()[ti].data()[c];
            params.get_mut(name).unwrap().data_mut()[c] = orig + FD_STEP;
            let up = model_loss(cfg, &params, &audio, &inputs, &targets);
            params.get_mut(name).unwrap().data_mut()[c] = orig - FD_STEP;
            let down = model_loss(cfg, &params, &audio, &inputs, &targets);
            params.get_mut(name).unwrap().data_mut()[c] = orig;
            num.push((up - down) / (2.0 * FD_STEP));
            a.push(analytic[ti][c]);
        }
        out.push(GroupCheck {
            name: name.clone(),
            coords: coords.len(),
            rel_error: relative_error(&a, &num),
        });
    }
    out
}

use moonshine_core::datapipe::{CaptionedSegment, TrainingInstance};

/// Time-ordered random segments: short and long durations, small and large
/// gaps, occasional overlaps and over-long segments.
pub fn random_segments(r: &mut ChaCha8Rng, n: usize) -> Vec<CaptionedSegment> {
    let mut t = 0.0f64;
    (0..n as u32)
        .map(|id| {
            let gap = match r.gen_range(0..10) {
                0 => -r.gen_range(0.0..0.5),
                1..=6 => r.gen_range(0.0..2.0),
                7 => 2.0,
                _ => r.gen_range(2.0..6.0),
            };
            let start = (t + gap).max(0.0);
            let dur = if r.gen_range(0..40) == 0 { r.gen_range(30.0..40.0) } else { r.gen_range(0.2..9.0) };
            let ms = |x: f64| (x * 1000.0).round() / 1000.0;
            let (start, end) = (ms(start), ms(start + dur));
            t = t.max(end);
            CaptionedSegment::caption(id, start, end, format!("w{id}"))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .scan(f64::NEG_INFINITY, |last, mut s| {
            // Overlaps can move a start before the previous start; keep order.
            if s.start_s < *last {
                let d = s.duration_s();
                s.start_s = *last;
                s.end_s = *last + d;
            }
            *last = s.start_s;
            Some(s)
        })
        .collect()
}

/// Span in [4, 30] and every inter-segment gap at most 2 s.
pub fn instance_violations(instances: &[TrainingInstance], segments: &[CaptionedSegment]) -> Vec<String> {
    let eps = 1e-9;
    let mut bad = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        if !(4.0 - eps..=30.0 + eps).contains(&inst.duration_s) {
            bad.push(format!("instance {k}: duration {}", inst.duration_s));
        }
        let members: Vec<&CaptionedSegment> = inst.segments.iter().map(|&id| &segments[id as usize]).collect();
        let mut end = members[0].end_s;
        for m in &members[1..] {
            if m.start_s - end > 2.0 + eps {
                bad.push(format!("instance {k}: gap {} before segment {}", m.start_s - end, m.id));
            }
            end = end.max(m.end_s);
        }
        let lo = members.iter().map(|m| m.start_s).fold(f64::INFINITY, f64::min);
        let hi = members.iter().map(|m| m.end_s).fold(f64::NEG_INFINITY, f64::max);
        if (hi - lo - inst.duration_s).abs() > eps {
            bad.push(format!("instance {k}: span {} vs duration {}", hi - lo, inst.duration_s));
        }
    }
    bad
}

/// Character edit distance by full-table recursion.
pub fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..=a.len() {
        for j in 0..=b.len() {
            t[i][j] = if i == 0 {
                j
            } else if j == 0 {
                i
            } else {
                let same = a[i - 1] == b[j - 1];
                (t[i - 1][j - 1] + usize::from(!same)).min(t[i - 1][j] + 1).min(t[i][j - 1] + 1)
            };
        }
    }
    t[a.len()][b.len()]
}

use moonshine_core::eval::synth::{self, ToneSpec};
use moonshine_core::tokenizer::{train_bpe, Vocab};
use moonshine_core::train::Example;

/// Twenty tone-word sentences with a BPE vocabulary trained on their text.
pub fn toy_training_set(seed: u64) -> (Vocab, Vec<Example>, Vec<String>) {
    let items = synth::sentences(seed, 20, 2, 3, ToneSpec::default()).unwrap();
    let texts: Vec<String> = items.iter().map(|s| s.text.clone()).collect();
    let vocab = train_bpe(&texts, 320).unwrap();
    let examples = items
        .into_iter()
        .map(|s| Example {
            tokens: vocab.encode(s.text.as_bytes()),
            audio: s.audio.into_samples(),
        })
        .collect();
    (vocab, examples, texts)
}
