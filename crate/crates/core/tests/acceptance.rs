//! Acceptance criteria 1–12, one PASS/FAIL line each.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use moonshine_core::audio::{apply_gain, gain_factor, mix_at_snr, AudioClip};
use moonshine_core::datapipe::{self, assemble_instances, filter_captions, norm_levenshtein, normalize_text};
use moonshine_core::eval::synth::{self, ToneSpec};
use moonshine_core::eval::{
    align_counts, compare_flops, greedy_decode, registry, token_cap, wer, FlopsRequest, HarnessInputs, Recognizer,
    ScriptedRecognizer, Termination, Transcriber, DEFAULT_BINS_S, DEFAULT_GAINS_DB, DEFAULT_SNRS_DB,
};
use moonshine_core::model::{count_params, rope_apply, Model, ModelConfig};
use moonshine_core::numerics::Tensor;
use moonshine_core::tokenizer::Vocab;
use moonshine_core::train::{self, TrainConfig};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn preset(name: &str) -> ModelConfig {
    ModelConfig::preset(name).expect("preset")
}

fn c1_compression() -> Outcome {
    let cfg = preset("tiny");
    let mut worst = 0.0f64;
    let mut r = common::rng(101);
    let mut lengths: Vec<usize> = (5..=60).map(|s| s * 16_000).collect();
    lengths.extend((0..200).map(|_| r.gen_range(80_000..1_000_000)));
    for &n in &lengths {
        let frames = cfg.stem.output_frames(n).ok_or("stem rejected input")?;
        let rel = (frames as f64 / n as f64) * 384.0 - 1.0;
        worst = worst.max(rel.abs());
    }
    // The executed stem agrees with the closed form.
    let toy = Model::<f32>::init(preset("toy-32"), 1).map_err(|e| e.to_string())?;
    let audio = vec![0.05f32; 5 * 16_000];
    let frames = toy.stem_forward(&audio).map_err(|e| e.to_string())?.shape()[0];
    ensure(frames == cfg.stem.output_frames(audio.len()).unwrap_or(0), || format!("executed stem gave {frames} frames"))?;
    ensure(worst <= 0.01, || format!("worst relative deviation {worst:.5}"))?;
    Ok(format!("frames/samples within {:.3}% of 1/384 over {} lengths >= 5 s", worst * 100.0, lengths.len()))
}

fn c2_params() -> Outcome {
    let tiny = count_params(&preset("tiny")) as f64;
    let base = count_params(&preset("base")) as f64;
    let (et, eb) = (tiny / 27.1e6 - 1.0, base / 61.5e6 - 1.0);
    ensure(et.abs() <= 0.10 && eb.abs() <= 0.10, || format!("tiny {tiny:.0} ({et:+.3}), base {base:.0} ({eb:+.3})"))?;
    Ok(format!("tiny {:.2}M ({:+.1}%), base {:.2}M ({:+.1}%)", tiny / 1e6, et * 100.0, base / 1e6, eb * 100.0))
}

fn flops_table(durations: &[f64]) -> Result<moonshine_core::eval::FlopsTable, String> {
    let configs: Vec<ModelConfig> = ["tiny", "base", "whisper-tiny-shape", "whisper-base-shape"].iter().map(|n| preset(n)).collect();
    compare_flops(&configs, &preset("whisper-tiny-shape"), durations, moonshine_core::eval::DEFAULT_OUT_TOKENS_PER_S)
        .map_err(|e| e.to_string())
}

fn c3_flops_ratios() -> Outcome {
    let t = flops_table(&[30.0])?;
    let ratio = |c: &str| t.row(c, 30.0).map(|r| r.ratio).ok_or(format!("missing row {c}"));
    let (tiny, base, wbase) = (ratio("tiny")?, ratio("base")?, ratio("whisper-base-shape")?);
    ensure(
        (0.55..=0.85).contains(&tiny) && (1.3..=1.9).contains(&base) && (2.0..=2.6).contains(&wbase),
        || format!("tiny {tiny:.3}, base {base:.3}, whisper-base-shape {wbase:.3}"),
    )?;
    Ok(format!("at 30 s: tiny {tiny:.3}, base {base:.3}, whisper-base-shape {wbase:.3} (whisper-tiny-shape = 1)"))
}

fn c4_ten_seconds() -> Outcome {
    let t = flops_table(&[10.0])?;
    let s = t.row("tiny", 10.0).ok_or("missing row")?.speedup;
    ensure((4.0..=6.0).contains(&s), || format!("ratio {s:.3}"))?;
    Ok(format!("whisper-tiny-shape (30 s canvas) / tiny at 10 s = {s:.3}"))
}

fn c5_rope() -> Outcome {
    let mut r = common::rng(105);
    let hd = 64;
    let draws = 2000;
    let (mut worst_rel, mut worst_norm) = (0.0f64, 0.0f64);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for _ in 0..draws {
        let q = common::rand_tensor(&[1, 1, hd], &mut r);
        let k = common::rand_tensor(&[1, 1, hd], &mut r);
        let (m, n, s) = (r.gen_range(0..4096), r.gen_range(0..4096), r.gen_range(0..4096));
        let rot = |x: &Tensor<f64>, p: usize| rope_apply(x, &[p], 10_000.0).map_err(|e| e.to_string());
        let a = dot(rot(&q, m)?.data(), rot(&k, n)?.data());
        let b = dot(rot(&q, m + s)?.data(), rot(&k, n + s)?.data());
        worst_rel = worst_rel.max((a - b).abs());
        let qm = rot(&q, m)?;
        for i in 0..hd / 2 {
            let before = q.data()[2 * i].hypot(q.data()[2 * i + 1]);
            let after = qm.data()[2 * i].hypot(qm.data()[2 * i + 1]);
            worst_norm = worst_norm.max((before - after).abs());
        }
    }
    ensure(worst_rel <= 1e-5 && worst_norm <= 1e-5, || format!("relative {worst_rel:e}, pair norm {worst_norm:e}"))?;
    Ok(format!("{draws} draws: max |<Rm q,Rn k> - <Rm+s q,Rn+s k>| = {worst_rel:.1e}, max pair-norm change = {worst_norm:.1e}"))
}

fn c6_gradients() -> Outcome {
    let t0 = Instant::now();
    let tied = common::grad_check_config();
    let mut untied = tied.clone();
    untied.tie_embeddings = false;
    untied.normalize_input = true;
    let mut groups = 0;
    let mut worst = (String::new(), 0.0f64);
    for cfg in [tied, untied] {
        for g in common::model_gradient_check(&cfg, 106, 16) {
            groups += 1;
            if g.rel_error > worst.1 || g.rel_error.is_nan() {
                worst = (g.name.clone(), g.rel_error);
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(worst.1 <= common::FD_TOL, || format!("group {} relative error {:e}", worst.0, worst.1))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{groups} parameter groups (tied and untied dim-32 2+2 layers), worst {:.1e} ({}), {secs:.1} s", worst.1, worst.0))
}

struct Trained {
    transcriber: Transcriber,
    texts: Vec<String>,
    clips: Vec<AudioClip>,
}

fn c7_training(out: &mut Option<Trained>) -> Outcome {
    let t0 = Instant::now();
    let run = || -> Result<_, String> {
        let (vocab, examples, texts) = common::toy_training_set(7);
        let cfg = preset("toy-64").with_vocab(vocab.total_size());
        let mut model = Model::<f32>::init(cfg, 7).map_err(|e| e.to_string())?;
        let tc = TrainConfig { steps: 2000, seed: 7, ..TrainConfig::default() };
        let report = train::train(&mut model, &vocab, &examples, &tc).map_err(|e| e.to_string())?;
        Ok((vocab, examples, texts, model, report))
    };
    let (vocab, examples, texts, model, report) = run()?;
    let (_, _, _, model2, report2) = run()?;
    ensure(report.log_csv() == report2.log_csv(), || "loss logs differ between identical runs".into())?;
    ensure(
        train::checkpoint_bytes(&model, &vocab).ok() == train::checkpoint_bytes(&model2, &vocab).ok(),
        || "weights differ between identical runs".into(),
    )?;
    let acc = train::accuracy(&model, &vocab, &examples).map_err(|e| e.to_string())?;
    ensure(examples.len() == 20 && model.config.dim == 64, || "fixture shape".into())?;
    ensure(acc >= 0.95 && report.log.len() <= 2000, || format!("accuracy {acc:.3} after {} steps", report.log.len()))?;
    let clips = examples.iter().map(|e| AudioClip::new(e.audio.clone()).expect("clip")).collect();
    let steps = report.updates;
    *out = Some(Trained {
        transcriber: Transcriber::new(model, vocab).map_err(|e| e.to_string())?,
        texts,
        clips,
    });
    Ok(format!(
        "teacher-forced accuracy {:.1}% after {steps} updates (limit 2000), bit-identical across two runs, {:.1} s",
        acc * 100.0,
        t0.elapsed().as_secs_f64()
    ))
}

fn c8_decode_cap(trained: Option<&Trained>) -> Outcome {
    let mut r = common::rng(108);
    let vocab = Vocab::bytes();
    let mut decodes = 0;
    let mut check = |rec: &dyn Recognizer, n: usize| -> Result<(), String> {
        let clip = AudioClip::new((0..n).map(|i| ((i as f32) * 0.013).sin() * 0.2).collect()).map_err(|e| e.to_string())?;
        let d = greedy_decode(rec, &clip).map_err(|e| e.to_string())?;
        decodes += 1;
        ensure(d.tokens_emitted <= token_cap(n), || format!("{} tokens for {n} samples", d.tokens_emitted))
    };
    for _ in 0..500 {
        let n = r.gen_range(1..400_000);
        let len = r.gen_range(0..300);
        let script: Vec<u32> = (0..len).map(|_| r.gen_range(0..256)).collect();
        check(&ScriptedRecognizer::reciter(vocab.clone(), script), n)?;
    }
    let random_model = Transcriber::new(Model::init(preset("toy-32"), 8).map_err(|e| e.to_string())?, Vocab::bytes())
        .map_err(|e| e.to_string())?;
    for _ in 0..30 {
        check(&random_model, r.gen_range(895..48_000))?;
    }
    if let Some(t) = trained {
        for _ in 0..30 {
            check(&t.transcriber, r.gen_range(895..48_000))?;
        }
    }
    let babbler = ScriptedRecognizer::babbler(vocab, u32::from(b'a'));
    for (n, want) in [(32_000, 12), (160_000, 60), (16_001, 7)] {
        let d = greedy_decode(&babbler, &AudioClip::new(vec![0.1; n]).unwrap()).map_err(|e| e.to_string())?;
        ensure(d.tokens_emitted == want && d.terminated_by == Termination::TokenCap, || {
            format!("never-eos model emitted {} for {n} samples", d.tokens_emitted)
        })?;
    }
    Ok(format!("{decodes} randomized decodes within ceil(6 s) cap; never-eos model hits cap exactly (2 s -> 12, 10 s -> 60)"))
}

fn brute_force(r: &[u8], h: &[u8]) -> (usize, usize, usize, usize) {
    if r.is_empty() {
        return (h.len(), 0, 0, h.len());
    }
    if h.is_empty() {
        return (r.len(), 0, r.len(), 0);
    }
    let (c, s, d, i) = brute_force(&r[1..], &h[1..]);
    let diag = if r[0] == h[0] { (c, s, d, i) } else { (c + 1, s + 1, d, i) };
    let (c, s, d, i) = brute_force(&r[1..], h);
    let del = (c + 1, s, d + 1, i);
    let (c, s, d, i) = brute_force(r, &h[1..]);
    let ins = (c + 1, s, d, i + 1);
    [diag, del, ins].into_iter().min_by_key(|&(c, s, _, _)| (c, std::cmp::Reverse(s))).unwrap()
}

fn c9_wer() -> Outcome {
    let mut r = common::rng(109);
    let pairs = 10_000;
    for _ in 0..pairs {
        let a: Vec<u8> = (0..r.gen_range(0..7)).map(|_| r.gen_range(0..4)).collect();
        let b: Vec<u8> = (0..r.gen_range(0..7)).map(|_| r.gen_range(0..4)).collect();
        let (_, s, d, i) = brute_force(&a, &b);
        let got = align_counts(&a, &b);
        ensure(got == (s, d, i), || format!("{a:?} vs {b:?}: {got:?} != {:?}", (s, d, i)))?;
    }
    let short = wer("so", "so so so");
    ensure(short.insertions == 2 && short.wer > 1.0, || format!("{short:?}"))?;
    Ok(format!("S/D/I equal exhaustive enumeration on {pairs} pairs; 'so' vs 'so so so' gives WER {:.1}", short.wer))
}

fn c10_pipeline() -> Outcome {
    let mut r = common::rng(110);
    let (mut streams, mut instances) = (0, 0);
    for _ in 0..1000 {
        let n = r.gen_range(0..80);
        let segs = common::random_segments(&mut r, n);
        let a = assemble_instances("a.wav", &segs).map_err(|e| e.to_string())?;
        let bad = common::instance_violations(&a.instances, &segs);
        ensure(bad.is_empty(), || bad.join("; "))?;
        streams += 1;
        instances += a.instances.len();
    }
    let words = ["hello", "world", "Hello,", "wörld!", "the", "a"];
    let pairs: Vec<(String, String)> = (0..2000)
        .map(|_| {
            let mut s = || (0..r.gen_range(0..5)).map(|_| words[r.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ");
            (s(), s())
        })
        .collect();
    let decisions = filter_captions(&pairs, 0.3).map_err(|e| e.to_string())?;
    for (d, (a, b)) in decisions.iter().zip(&pairs) {
        let (na, nb) = (normalize_text(a), normalize_text(b));
        let n = na.chars().count().max(nb.chars().count());
        let score = if n == 0 { 0.0 } else { common::levenshtein_oracle(&na, &nb) as f64 / n as f64 };
        ensure(d.score == score && d.kept == (score <= 0.3), || format!("decision mismatch for {a:?} / {b:?}"))?;
    }
    let alphabet = ['a', 'b', 'é', ' '];
    for _ in 0..3000 {
        let mut s = || (0..r.gen_range(0..10)).map(|_| alphabet[r.gen_range(0..4)]).collect::<String>();
        let (a, b, c) = (s(), s(), s());
        let ab = norm_levenshtein(&a, &b);
        ensure((0.0..=1.0).contains(&ab), || format!("{ab} out of range"))?;
        ensure(ab == norm_levenshtein(&b, &a), || "asymmetric".into())?;
        ensure((ab == 0.0) == (a == b), || "identity of indiscernibles".into())?;
        let d = datapipe::levenshtein;
        ensure(d(&a, &c) <= d(&a, &b) + d(&b, &c), || "triangle inequality".into())?;
    }
    Ok(format!(
        "{instances} instances from {streams} random streams all in [4,30] s with gaps <= 2 s; {} filter decisions match recomputation; metric properties hold",
        decisions.len()
    ))
}

fn c11_audio() -> Outcome {
    ensure(gain_factor(-40.0) == 0.01, || format!("factor {}", gain_factor(-40.0)))?;
    let mut r = common::rng(111);
    let clip = AudioClip::new((0..4000).map(|_| r.gen_range(-1.0f32..1.0)).collect()).map_err(|e| e.to_string())?;
    let quiet = apply_gain(&clip, -40.0);
    for (a, b) in quiet.samples().iter().zip(clip.samples()) {
        ensure(*a == (f64::from(*b) * 0.01) as f32, || format!("{b} -> {a}"))?;
    }
    let mut snrs: Vec<f64> = DEFAULT_SNRS_DB.to_vec();
    snrs.extend((0..40).map(|_| r.gen_range(0.0..30.0)));
    let mut worst = 0.0f64;
    let mut mixes = 0;
    for k in 0..20u64 {
        let clip = synth::duration_dataset(k, &[r.gen_range(1.0..4.0)], ToneSpec::default()).map_err(|e| e.to_string())?.items[0].audio.clone();
        let noise = synth::fan_noise(1000 + k, r.gen_range(0.2..3.0)).map_err(|e| e.to_string())?;
        for &snr in &snrs {
            let m = mix_at_snr(&clip, &noise, snr).map_err(|e| e.to_string())?;
            worst = worst.max((m.measured_snr_db - snr).abs());
            mixes += 1;
        }
    }
    ensure(snrs.contains(&9.0) && snrs.contains(&17.0), || "grid lacks 9 or 17 dB".into())?;
    ensure(worst <= 0.1, || format!("worst SNR error {worst:.4} dB"))?;
    Ok(format!("-40 dB gain scales by exactly 0.01; {mixes} mixes over [0,30] dB (incl. 9, 17) remeasure within {worst:.1e} dB"))
}

fn c12_harnesses(trained: Option<&Trained>) -> Outcome {
    let t = trained.ok_or("needs the criterion 7 checkpoint")?;
    let rec: &dyn Recognizer = &t.transcriber;
    let train_set = moonshine_core::eval::Dataset {
        id: "toy-training-set".into(),
        items: t
            .clips
            .iter()
            .zip(&t.texts)
            .enumerate()
            .map(|(i, (c, s))| moonshine_core::eval::EvalItem { id: format!("train-{i}"), audio: c.clone(), reference: s.clone() })
            .collect(),
    };
    let long = synth::duration_dataset(12, &[12.0, 25.0, 36.0, 52.0], ToneSpec::default()).map_err(|e| e.to_string())?;
    let noise = synth::fan_noise(13, 2.0).map_err(|e| e.to_string())?;
    let mut snrs = DEFAULT_SNRS_DB.to_vec();
    snrs.push(f64::INFINITY);
    let reg = registry();
    let mut lines = Vec::new();
    for (name, ds) in [("wer", &train_set), ("wer-by-duration", &long), ("gain-sweep", &train_set), ("snr-sweep", &train_set)] {
        let inputs = HarnessInputs {
            recognizer: Some(rec),
            dataset: Some(ds),
            noise: Some(&noise),
            gains_db: DEFAULT_GAINS_DB.to_vec(),
            snrs_db: snrs.clone(),
            bins_s: DEFAULT_BINS_S.to_vec(),
            flops: None,
        };
        let out = reg.get(name).and_then(|h| h.run(&inputs)).map_err(|e| format!("{name}: {e}"))?;
        lines.push(format!("{name} {} rows", out.csv.lines().count() - 1));
    }
    let flops = HarnessInputs {
        flops: Some(FlopsRequest {
            configs: ["tiny", "base", "whisper-tiny-shape", "whisper-base-shape"].iter().map(|n| preset(n)).collect(),
            reference: preset("whisper-tiny-shape"),
            durations_s: moonshine_core::eval::DEFAULT_DURATIONS_S.to_vec(),
            out_tokens_per_s: moonshine_core::eval::DEFAULT_OUT_TOKENS_PER_S,
            time_forward: false,
            seed: 0,
        }),
        ..HarnessInputs::default()
    };
    let out = reg.get("flops-compare").and_then(|h| h.run(&flops)).map_err(|e| e.to_string())?;
    lines.push(format!("flops-compare {} rows", out.csv.lines().count() - 1));
    let clean = moonshine_core::eval::wer_report(rec, &train_set).map_err(|e| e.to_string())?.total.wer;
    Ok(format!(
        "not reproducible at desk scale: absolute WER tables, accelerator wall-clock speed-ups and absolute robustness curves need a fully trained large-scale model. Harnesses exercised end to end on synthetic data with the toy checkpoint ({}; toy training-set WER {:.3})",
        lines.join(", "),
        clean
    ))
}

fn main() {
    let mut trained: Option<Trained> = None;
    let mut failures = 0;
    let mut report = |id: u32, title: &str, outcome: std::thread::Result<Outcome>| {
        let line = match outcome {
            Ok(Ok(detail)) => format!("PASS  {id:>2} {title}: {detail}"),
            Ok(Err(why)) => {
                failures += 1;
                format!("FAIL  {id:>2} {title}: {why}")
            }
            Err(_) => {
                failures += 1;
                format!("FAIL  {id:>2} {title}: panicked")
            }
        };
        println!("{line}");
    };
    report(1, "compression factor", catch_unwind(c1_compression));
    report(2, "parameter counts", catch_unwind(c2_params));
    report(3, "FLOPs ratios at 30 s", catch_unwind(c3_flops_ratios));
    report(4, "10-second compute claim", catch_unwind(c4_ten_seconds));
    report(5, "RoPE properties", catch_unwind(c5_rope));
    report(6, "gradient checks", catch_unwind(c6_gradients));
    report(7, "toy training", catch_unwind(AssertUnwindSafe(|| c7_training(&mut trained))));
    report(8, "decode cap", catch_unwind(AssertUnwindSafe(|| c8_decode_cap(trained.as_ref()))));
    report(9, "WER oracle", catch_unwind(c9_wer));
    report(10, "pipeline invariants", catch_unwind(c10_pipeline));
    report(11, "audio perturbation", catch_unwind(c11_audio));
    report(12, "desk-scale limits", catch_unwind(AssertUnwindSafe(|| c12_harnesses(trained.as_ref()))));
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
