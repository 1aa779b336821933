mod common;

use moonshine_core::audio::{apply_gain, mix_at_snr, AudioClip};
use moonshine_core::eval::synth::{self, ToneSpec};
use moonshine_core::eval::{
    align_counts, compare_flops, gain_sweep, greedy_decode, registry, snr_sweep, token_cap, wer, wer_by_duration,
    Dataset, EvalItem, FlopsRequest, HarnessInputs, Recognizer, ScriptedRecognizer, Termination, Transcriber,
    WerBreakdown, DEFAULT_BINS_S, DEFAULT_GAINS_DB, DEFAULT_SNRS_DB,
};
use moonshine_core::model::{Model, ModelConfig};
use moonshine_core::tokenizer::Vocab;
use moonshine_core::Error;
use rand::Rng;

/// Exhaustive enumeration of alignments: minimum edits, then most
/// substitutions.
fn brute_force(r: &[u8], h: &[u8]) -> (usize, usize, usize) {
    fn go(r: &[u8], h: &[u8]) -> (usize, usize, usize, usize) {
        if r.is_empty() {
            return (h.len(), 0, 0, h.len());
        }
        if h.is_empty() {
            return (r.len(), 0, r.len(), 0);
        }
        let mut options = Vec::new();
        let (c, s, d, i) = go(&r[1..], &h[1..]);
        if r[0] == h[0] {
            options.push((c, s, d, i));
        } else {
            options.push((c + 1, s + 1, d, i));
        }
        let (c, s, d, i) = go(&r[1..], h);
        options.push((c + 1, s, d + 1, i));
        let (c, s, d, i) = go(r, &h[1..]);
        options.push((c + 1, s, d, i + 1));
        options.into_iter().min_by_key(|&(c, s, _, _)| (c, std::cmp::Reverse(s))).unwrap()
    }
    let (_, s, d, i) = go(r, h);
    (s, d, i)
}

#[test]
fn wer_matches_brute_force() {
    let mut r = common::rng(31);
    for _ in 0..10_000 {
        let n = r.gen_range(0..6);
        let m = r.gen_range(0..6);
        let a: Vec<u8> = (0..n).map(|_| r.gen_range(0..3)).collect();
        let b: Vec<u8> = (0..m).map(|_| r.gen_range(0..3)).collect();
        assert_eq!(align_counts(&a, &b), brute_force(&a, &b), "{a:?} {b:?}");
    }
}

#[test]
fn wer_properties() {
    let mut r = common::rng(32);
    let words = ["a", "b", "c", "d"];
    for _ in 0..2_000 {
        let mut s = |n: usize| (0..n).map(|_| words[r.gen_range(0..4)]).collect::<Vec<_>>().join(" ");
        let (x, y) = (s(5), s(4));
        assert_eq!(wer(&x, &x).wer, 0.0);
        let f = wer(&x, &y);
        let b = wer(&y, &x);
        assert_eq!(f.substitutions + f.deletions + f.insertions, b.substitutions + b.deletions + b.insertions);
        assert_eq!((f.deletions, f.insertions), (b.insertions, b.deletions));
        assert_eq!(f.substitutions, b.substitutions);
        assert_eq!(f.wer, f.errors() as f64 / f.reference_words.max(1) as f64);
    }
    assert!(wer("so", "so so so").wer > 1.0);
}

fn byte_babbler() -> ScriptedRecognizer {
    ScriptedRecognizer::babbler(Vocab::bytes(), b'a' as u32)
}

#[test]
fn decode_cap_never_exceeded() {
    let mut r = common::rng(33);
    let vocab = Vocab::bytes();
    for _ in 0..300 {
        let n = r.gen_range(1..100_000);
        let clip = AudioClip::new(vec![0.1; n]).unwrap();
        let len = r.gen_range(0..80);
        let script: Vec<u32> = (0..len).map(|_| r.gen_range(0..256)).collect();
        let cap = token_cap(n);
        if r.gen_bool(0.5) {
            let d = greedy_decode(&ScriptedRecognizer::reciter(vocab.clone(), script), &clip).unwrap();
            assert_eq!(d.tokens_emitted, len.min(cap));
            assert_eq!(d.terminated_by == Termination::Eos, len < cap);
        } else {
            let d = greedy_decode(&byte_babbler(), &clip).unwrap();
            assert_eq!((d.tokens_emitted, d.terminated_by), (cap, Termination::TokenCap));
        }
    }
    let ten = AudioClip::new(vec![0.1; 160_000]).unwrap();
    assert_eq!(greedy_decode(&byte_babbler(), &ten).unwrap().tokens_emitted, 60);
}

fn toy_transcriber(normalize: bool) -> Transcriber {
    let mut cfg = ModelConfig::preset("toy-32").unwrap();
    cfg.normalize_input = normalize;
    Transcriber::new(Model::init(cfg, 3).unwrap(), Vocab::bytes()).unwrap()
}

fn small_dataset() -> Dataset {
    synth::sentences(4, 6, 2, 4, ToneSpec::default()).unwrap().into()
}

#[test]
fn duration_bins_aggregate_op_counts() {
    let rec = byte_babbler();
    let ds = synth::duration_dataset(5, &[10.0, 12.0, 25.0, 41.0, 55.0, 60.0], ToneSpec::default()).unwrap();
    let report = wer_by_duration(&rec, &ds, &DEFAULT_BINS_S).unwrap();
    assert_eq!(report.conditions.len(), 4);
    assert_eq!(report.metadata["outside_bins"], "1");
    let per_clip: Vec<WerBreakdown> =
        ds.items.iter().map(|i| wer(&i.reference, &greedy_decode(&rec, &i.audio).unwrap().text)).collect();
    let first = WerBreakdown::sum(&per_clip[0..2]);
    assert_eq!(report.conditions[0].breakdown, Some(first));
    assert_eq!(report.conditions[1].breakdown, Some(per_clip[2]));
    assert_eq!(report.conditions[2].breakdown, None);
    assert_eq!(report.conditions[2].samples, 0);
    assert_eq!(report.conditions[3].breakdown, Some(WerBreakdown::sum(&per_clip[3..5])));
    assert!(report.to_csv().contains("30-40,30,0,,,,,"));
}

#[test]
fn gain_zero_equals_baseline() {
    let rec = toy_transcriber(false);
    let ds = small_dataset();
    assert!(DEFAULT_GAINS_DB.contains(&-40.0));
    let report = gain_sweep(&rec, &ds, &[-10.0, 0.0]).unwrap();
    let baseline = moonshine_core::eval::wer_report(&rec, &ds).unwrap().total;
    assert_eq!(report.conditions[1].breakdown, Some(baseline));
}

#[test]
fn level_normalization_flattens_gain_sweep() {
    let rec = toy_transcriber(true);
    let ds = small_dataset();
    let report = gain_sweep(&rec, &ds, &[-20.0, -10.0, 0.0, 6.0]).unwrap();
    let w: Vec<f64> = report.conditions.iter().map(|c| c.wer().unwrap()).collect();
    assert!(w.iter().all(|&x| x == w[0]), "{w:?}");
    // Hypotheses themselves are identical, not just their scores.
    for g in [-20.0, 6.0] {
        for item in &ds.items {
            let a = greedy_decode(&rec, &item.audio).unwrap();
            let b = greedy_decode(&rec, &apply_gain(&item.audio, g)).unwrap();
            assert_eq!(a.tokens, b.tokens);
        }
    }
}

#[test]
fn snr_sweep_conditions() {
    let rec = toy_transcriber(false);
    let ds = small_dataset();
    let noise = synth::fan_noise(6, 1.0).unwrap();
    assert!(DEFAULT_SNRS_DB.contains(&9.0) && DEFAULT_SNRS_DB.contains(&17.0));
    let report = snr_sweep(&rec, &ds, &noise, &[f64::INFINITY, 17.0, 9.0]).unwrap();
    assert_eq!(report.conditions.iter().map(|c| c.x).collect::<Vec<_>>(), vec![Some(9.0), Some(17.0), None]);
    let baseline = moonshine_core::eval::wer_report(&rec, &ds).unwrap().total;
    assert_eq!(report.conditions[2].breakdown, Some(baseline));
    for c in &report.conditions[..2] {
        assert!(c.extra["max_snr_error_db"] <= 0.1);
    }
    for item in &ds.items {
        let m = mix_at_snr(&item.audio, &noise, 9.0).unwrap();
        assert!((m.measured_snr_db - 9.0).abs() <= 0.1);
    }
    let silent = AudioClip::new(vec![0.0; 100]).unwrap();
    assert!(matches!(snr_sweep(&rec, &ds, &silent, &[10.0]), Err(Error::SilentClip(_))));
}

#[test]
fn sweeps_are_deterministic() {
    let rec = toy_transcriber(false);
    let ds = small_dataset();
    let a = gain_sweep(&rec, &ds, &[-40.0, 0.0]).unwrap();
    let b = gain_sweep(&rec, &ds, &[0.0, -40.0]).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn too_short_clip_is_an_error() {
    let rec = toy_transcriber(false);
    let clip = AudioClip::new(vec![0.1; 500]).unwrap();
    assert!(matches!(greedy_decode(&rec, &clip), Err(Error::InputTooShort { .. })));
    let mismatched = Transcriber::new(Model::init(ModelConfig::preset("toy-32").unwrap().with_vocab(2000), 1).unwrap(), Vocab::bytes());
    assert!(matches!(mismatched, Err(Error::Config(_))));
}

fn presets(names: &[&str]) -> Vec<ModelConfig> {
    names.iter().map(|n| ModelConfig::preset(n).unwrap()).collect()
}

#[test]
fn flops_table_shape() {
    let configs = presets(&["tiny", "base", "whisper-tiny-shape", "whisper-base-shape"]);
    let reference = ModelConfig::preset("whisper-tiny-shape").unwrap();
    let durations = [1.0, 2.0, 5.0, 10.0, 20.0, 29.0, 30.0];
    let t = compare_flops(&configs, &reference, &durations, 3.0).unwrap();
    let ratio = |c: &str| t.row(c, 30.0).unwrap().ratio;
    let order = [ratio("tiny"), ratio("whisper-tiny-shape"), ratio("base"), ratio("whisper-base-shape")];
    assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
    for (got, want) in order.iter().zip([0.7, 1.0, 1.6, 2.3]) {
        assert!((got - want).abs() <= 0.15 + 1e-12, "{got} vs {want}");
    }
    // Fixed canvas: whisper cost depends only on the output tokens.
    let w0 = t.row("whisper-tiny-shape", 1.0).unwrap();
    assert_eq!(w0.encoder_frames, t.row("whisper-tiny-shape", 30.0).unwrap().encoder_frames);
    let zero = compare_flops(&configs, &reference, &durations, 0.0).unwrap();
    let w: Vec<u64> = durations.iter().map(|&d| zero.row("whisper-tiny-shape", d).unwrap().total_macs).collect();
    assert!(w.iter().all(|&x| x == w[0]));
    let m: Vec<u64> = durations.iter().map(|&d| t.row("tiny", d).unwrap().total_macs).collect();
    assert!(m.windows(2).all(|p| p[0] < p[1]));
    // Speed-up shrinks as clips approach the canvas.
    let s: Vec<f64> = durations.iter().map(|&d| t.row("tiny", d).unwrap().speedup).collect();
    assert!(s.windows(2).all(|p| p[0] > p[1]), "{s:?}");
    let ten = t.row("tiny", 10.0).unwrap().speedup;
    assert!((4.0..=6.0).contains(&ten), "{ten}");
}

#[test]
fn harness_registry() {
    let reg = registry();
    assert_eq!(reg.names(), vec!["flops-compare", "gain-sweep", "snr-sweep", "wer", "wer-by-duration"]);
    assert!(matches!(reg.get("nope"), Err(Error::UnknownName { .. })));

    let rec = byte_babbler();
    let empty = Dataset::default();
    let inputs = HarnessInputs {
        recognizer: Some(&rec as &dyn Recognizer),
        dataset: Some(&empty),
        ..HarnessInputs::default()
    };
    let out = reg.get("wer").unwrap().run(&inputs).unwrap();
    assert_eq!(out.csv.lines().count(), 1);
    assert!(matches!(reg.get("snr-sweep").unwrap().run(&inputs), Err(Error::Config(_))));

    let flops = HarnessInputs {
        flops: Some(FlopsRequest {
            configs: presets(&["toy-32"]),
            reference: ModelConfig::preset("whisper-tiny-shape").unwrap(),
            durations_s: vec![1.0],
            out_tokens_per_s: 3.0,
            time_forward: true,
            seed: 0,
        }),
        ..HarnessInputs::default()
    };
    let out = reg.get("flops-compare").unwrap().run(&flops).unwrap();
    assert!(out.json["rows"][0]["wall_clock_ms"].as_f64().unwrap() >= 0.0);

    let ds = Dataset {
        id: "one".into(),
        items: vec![EvalItem {
            id: "x".into(),
            audio: AudioClip::new(vec![0.1; 16_000]).unwrap(),
            reference: "a, b".into(),
        }],
    };
    let inputs = HarnessInputs {
        recognizer: Some(&rec as &dyn Recognizer),
        dataset: Some(&ds),
        ..HarnessInputs::default()
    };
    let out = reg.get("wer").unwrap().run(&inputs).unwrap();
    assert!(out.csv.contains("\"a, b\""));
}
