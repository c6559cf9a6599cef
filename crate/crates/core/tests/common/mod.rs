// SPDX-License-Identifier: Apache-2.0

//! Fixture builders shared by the integration tests.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use casceq::data::{DumpSet, HiddenStateDump, DEFAULT_LAYERS};
use casceq::lens::LensWeights;
use casceq::probes::{boc_vector, encode, ALPHABET, ALPHABET_SIZE, BLANK, CTC_CLASSES};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Writes `{id, task, gold, pred}` lines; ids are zero-padded so they sort
/// in order.
pub fn write_log(dir: &Path, name: &str, task: &str, gold: &[&str], pred: &[&str]) -> PathBuf {
    let mut s = String::new();
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let line = serde_json::json!({"id": format!("ex{i:05}"), "task": task, "gold": g, "pred": p});
        let _ = writeln!(s, "{line}");
    }
    let path = dir.join(name);
    fs::write(&path, s).unwrap();
    path
}

/// Predictions that hit gold on exactly `correct` of the examples; misses
/// take the next label cyclically.
pub fn with_accuracy<'a>(gold: &[&'a str], labels: &[&'a str], correct: usize) -> Vec<&'a str> {
    gold.iter()
        .enumerate()
        .map(|(i, g)| {
            if i < correct {
                *g
            } else {
                let k = labels.iter().position(|l| l == g).unwrap();
                labels[(k + 1) % labels.len()]
            }
        })
        .collect()
}

/// `n` gold labels cycling through `labels` (uniform marginals when `n` is a
/// multiple of the label count).
pub fn cyclic_gold<'a>(labels: &[&'a str], n: usize) -> Vec<&'a str> {
    (0..n).map(|i| labels[i % labels.len()]).collect()
}

/// A copy of `reference` that disagrees on the last `n - agree` examples by
/// moving to the next label.
pub fn agreeing<'a>(reference: &[&'a str], labels: &[&'a str], agree: usize) -> Vec<&'a str> {
    reference
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if i < agree {
                *r
            } else {
                let k = labels.iter().position(|l| l == r).unwrap();
                labels[(k + 1) % labels.len()]
            }
        })
        .collect()
}

pub const AG_LABELS: [&str; 4] = ["World", "Sports", "Business", "Sci/Tech"];
pub const SST2_LABELS: [&str; 2] = ["negative", "positive"];

/// Accuracy series (percent) over clean, 15, 10, 5 and 0 dB.
pub const SST2_SPEECH: [f64; 5] = [90.4, 88.15, 87.2, 85.5, 80.25];
pub const SST2_CASCADE: [f64; 5] = [88.4, 88.9, 88.3, 87.8, 85.85];
pub const SNR_CONDITIONS: [&str; 5] = ["clean", "snr15", "snr10", "snr5", "snr0"];

/// Erasure accuracies (percent) for one system on AG News.
pub const LEACE_AG: [(&str, f64); 6] = [
    ("leace_baseline", 82.9),
    ("leace_text", 0.0),
    ("leace_ctc", 9.0),
    ("leace_boc", 5.9),
    ("leace_acoustic", 70.0),
    ("leace_random", 78.9),
];

/// Writes logs and a manifest reproducing the published agreement,
/// degradation and erasure numbers; returns the manifest path.
pub fn reference_fixture(dir: &Path) -> PathBuf {
    let mut paths = Vec::new();
    let mut entry = |system: &str, task: &str, cond: &str, p: PathBuf| {
        paths.push(serde_json::json!({
            "system": system, "task": task, "condition": cond,
            "path": p.file_name().unwrap().to_str().unwrap()
        }));
    };

    // AG News, n = 1000: the speech LLM has uniform marginals; the implicit
    // copy agrees on 957 examples and the cascade on 950.
    let ag_gold = cyclic_gold(&AG_LABELS, 1000);
    let speech = with_accuracy(&ag_gold, &AG_LABELS, 900);
    let implicit = agreeing(&speech, &AG_LABELS, 957);
    let cascade = agreeing(&speech, &AG_LABELS, 950);
    entry("ultravox", "ag_news", "clean", write_log(dir, "uv_ag_clean.jsonl", "ag_news", &ag_gold, &speech));
    entry("implicit", "ag_news", "clean", write_log(dir, "imp_ag_clean.jsonl", "ag_news", &ag_gold, &implicit));
    entry("cascade", "ag_news", "clean", write_log(dir, "casc_ag_clean.jsonl", "ag_news", &ag_gold, &cascade));
    for (cond, acc) in LEACE_AG {
        let correct = (acc * 10.0).round() as usize;
        let pred = with_accuracy(&ag_gold, &AG_LABELS, correct);
        entry("ultravox", "ag_news", cond, write_log(dir, &format!("uv_ag_{cond}.jsonl"), "ag_news", &ag_gold, &pred));
    }

    // SST-2, n = 2000, across noise levels.
    let sst_gold = cyclic_gold(&SST2_LABELS, 2000);
    for (i, cond) in SNR_CONDITIONS.iter().enumerate() {
        for (system, series) in [("gemini", SST2_SPEECH), ("cascade", SST2_CASCADE)] {
            let correct = (series[i] * 20.0).round() as usize;
            let pred = with_accuracy(&sst_gold, &SST2_LABELS, correct);
            let p = write_log(dir, &format!("{system}_sst2_{cond}.jsonl"), "sst2", &sst_gold, &pred);
            entry(system, "sst2", cond, p);
        }
    }

    let curves = serde_json::json!([
        {"name": "whisper_ctc", "metric": "text_decodability", "layers": [0, 16, 31], "values": [0.26, 0.16, 0.26]},
        {"name": "lens", "metric": "bag_precision", "layers": [20, 24, 28, 31], "values": [0.076, 0.149, 0.174, 0.342]}
    ]);
    fs::write(dir.join("curves.json"), curves.to_string()).unwrap();

    let mut conditions: Vec<&str> = SNR_CONDITIONS.to_vec();
    conditions.extend(LEACE_AG.iter().map(|c| c.0));
    let manifest = serde_json::json!({
        "systems": ["ultravox", "implicit", "cascade", "gemini"],
        "pairs": [
            {"a": "ultravox", "b": "cascade", "matched": true},
            {"a": "ultravox", "b": "implicit"},
            {"a": "gemini", "b": "cascade"}
        ],
        "tasks": ["ag_news", "sst2"],
        "label_spaces": {"ag_news": AG_LABELS, "sst2": SST2_LABELS},
        "conditions": conditions,
        "paths": paths,
        "implicit": {"speech_llm": "ultravox", "implicit": "implicit", "cascade": "cascade"},
        "curves": [{"path": "curves.json"}]
    });
    let p = dir.join("manifest.json");
    fs::write(&p, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    p
}

/// A toy speech LLM: frames carry the characters of the transcript (each held
/// for two positions, then a blank position) plus a contextual summary of the
/// whole utterance (its character frequencies), both scaled by a per-layer
/// strength, on top of one fixed noise draw shared by all layers.
pub struct ToyModel {
    pub set: DumpSet,
    pub lens: LensWeights,
    pub strengths: Vec<(u32, f32)>,
    pub width: usize,
}

pub const TOY_WIDTH: usize = 64;
/// Weight of the utterance summary relative to the current character.
pub const TOY_CONTEXT_GAIN: f32 = 3.0;
/// Character strength per probed layer: absent through layer 16.
pub const TOY_STRENGTHS: [f32; 9] = [0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 3.0, 4.0, 6.0];

pub fn random_transcript(rng: &mut ChaCha8Rng) -> String {
    let words = rng.gen_range(2..=3);
    (0..words)
        .map(|_| {
            let len = rng.gen_range(3..=6);
            (0..len).map(|_| ALPHABET[rng.gen_range(0..26)]).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn toy_model(n_utt: usize, seed: u64) -> ToyModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strengths: Vec<(u32, f32)> = DEFAULT_LAYERS.iter().copied().zip(TOY_STRENGTHS).collect();
    let mut dumps = Vec::new();
    for u in 0..n_utt {
        let t = random_transcript(&mut rng);
        let mut rows = Vec::new();
        for k in encode(&t) {
            rows.extend([k, k, BLANK]);
        }
        let noise = DMatrix::from_fn(rows.len(), TOY_WIDTH, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v as f32
        });
        let summary = boc_vector(&t);
        for &(layer, a) in &strengths {
            let frames = DMatrix::from_fn(rows.len(), TOY_WIDTH, |i, j| {
                let context = if j < ALPHABET_SIZE { TOY_CONTEXT_GAIN * summary[j] as f32 } else { 0.0 };
                noise[(i, j)] + a * (context + if j == rows[i] { 1.0 } else { 0.0 })
            });
            dumps.push(HiddenStateDump::new(format!("utt{u:03}"), layer, frames, t.clone()));
        }
    }

    // Vocabulary: the 48 symbols (space as a boundary marker), a special
    // blank token on the blank axis, and distractors on random directions.
    let mut vocab: Vec<String> = ALPHABET.iter().map(|c| if *c == ' ' { "\u{2581}".to_string() } else { c.to_string() }).collect();
    vocab.push("<blank>".into());
    let n_distract = 40;
    for i in 0..n_distract {
        vocab.push(format!("zz{i}"));
    }
    let v = vocab.len();
    let mut unembed = DMatrix::<f32>::zeros(v, TOY_WIDTH);
    for k in 0..=ALPHABET_SIZE {
        unembed[(k, k)] = 1.0;
    }
    for r in ALPHABET_SIZE + 1..v {
        let row: Vec<f32> = (0..TOY_WIDTH)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x as f32
            })
            .collect();
        let norm = row.iter().map(|x| x * x).sum::<f32>().sqrt();
        for (j, x) in row.into_iter().enumerate() {
            unembed[(r, j)] = x / norm;
        }
    }
    let lens = LensWeights::new(unembed, DVector::from_element(TOY_WIDTH, 1.0), 1e-6, vocab, [BLANK as u32]).unwrap();
    ToyModel {
        set: DumpSet::new(dumps).unwrap(),
        lens,
        strengths,
        width: TOY_WIDTH,
    }
}

/// Latent-factor data for erasure checks: `X = L·E + σ·noise`, `Z = L·B`.
pub fn linear_concept(n: usize, d: usize, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let m = 8;
    let latent = DMatrix::from_fn(n, m, |_, _| normal());
    let embed = DMatrix::from_fn(m, d, |_, _| normal());
    let read = DMatrix::from_fn(m, k, |_, _| normal());
    let noise = DMatrix::from_fn(n, d, |_, _| normal() * 0.1);
    (&latent * embed + noise, latent * read)
}

/// Dumps whose frames are one-hot symbol codes: two frames per character,
/// then a blank frame.
pub fn one_hot_set(n_utt: usize, layer: u32, seed: u64) -> DumpSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dumps = (0..n_utt)
        .map(|u| {
            let t = random_transcript(&mut rng);
            let mut rows = Vec::new();
            for k in encode(&t) {
                rows.extend([k, k, BLANK]);
            }
            let frames = DMatrix::from_fn(rows.len(), CTC_CLASSES, |i, j| if j == rows[i] { 1.0f32 } else { 0.0 });
            HiddenStateDump::new(format!("oh{u:03}"), layer, frames, t)
        })
        .collect();
    DumpSet::new(dumps).unwrap()
}
