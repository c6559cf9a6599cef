// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use casceq::data::{align_logs, load_prediction_log, Alignment, DumpSet, LabelSpace, Manifest, PredictionLog};
use casceq::erasure::{
    build_stack, random_stack, verify_guardedness, ConceptKind, ConceptSource, EraserStack, GuardednessReport, Shrinkage,
};
use casceq::lens::{
    lens_curve, lens_decode_text, logit_lens, write_decoded_texts, BagOptions, DecodedText, LensWeights, Positions,
};
use casceq::probes::{fit_probe, probe_curve, CtcProbe, CtcTraining, FittedProbe, Lambda, ProbeOptions, SplitSpec};
use casceq::report::{kappa_with_ci, render, run_manifest, Format, RunSettings};
use casceq::signal::{mix_at_snr, read_wav, write_wav};
use casceq::stats::{bh_fdr, conditional_error_overlap, mcnemar};
use casceq::{Error, Result};

use crate::{Cli, Command, Global, LeaceCommand, LensArgs, LensCommand, LensCommon, MixArgs, PairArgs, ProbeCommand};

fn input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn settings(g: &Global) -> RunSettings {
    RunSettings {
        seed: g.seed,
        resamples: g.resamples,
        alpha: g.alpha,
        ..RunSettings::default()
    }
}

/// Writes JSON to `out`, else to `<out_dir>/<name>`, else to stdout.
fn emit(value: &impl Serialize, out: Option<&Path>, g: &Global, name: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    let target = out.map(Path::to_path_buf).or_else(|| g.out_dir.as_ref().map(|d| d.join(name)));
    match target {
        Some(p) => write_file(&p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(p: &Path, text: &str) -> Result<()> {
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    fs::write(p, text).map_err(|e| io(p, e))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if !(g.alpha > 0.0 && g.alpha < 1.0) {
        return Err(input(format!("--alpha must lie in (0, 1), got {}", g.alpha)));
    }
    match cli.command {
        Command::Agree(a) => agree(&a, g),
        Command::Overlap(a) => {
            let al = load_pair(&a)?;
            emit(&conditional_error_overlap(&al.pairs)?, None, g, "overlap.json")
        }
        Command::Mcnemar(a) => {
            let al = load_pair(&a)?;
            emit(&mcnemar(&al.pairs)?, None, g, "mcnemar.json")
        }
        Command::Fdr { p, input: file } => fdr(p, file, g),
        Command::MixNoise(m) => mix_noise(&m, g),
        Command::Probe(p) => probe(p, g),
        Command::Lens(l) => lens(l, g),
        Command::Leace(l) => leace(l, g),
        Command::Report { manifest, fdr_conditions } => report(&manifest, fdr_conditions, g),
    }
}

fn load_pair(a: &PairArgs) -> Result<Alignment> {
    let space = LabelSpace::new(a.task.clone(), a.labels.clone())?;
    let la = load_log(&a.a, &space)?;
    let lb = load_log(&a.b, &space)?;
    align_logs(&la.records, &lb.records, &space)
}

/// Malformed lines are skipped with a warning unless nothing usable remains.
fn load_log(path: &Path, space: &LabelSpace) -> Result<PredictionLog> {
    let log = load_prediction_log(path, space)?;
    if log.records.is_empty() {
        log.clone().into_strict()?;
        return Err(input(format!("{}: no records", path.display())));
    }
    if !log.malformed.is_empty() {
        eprintln!("warning: {}: skipped {} malformed line(s)", path.display(), log.malformed.len());
    }
    Ok(log)
}

#[derive(Serialize)]
struct AgreeOutput {
    n: usize,
    dropped_a: usize,
    dropped_b: usize,
    seed: u64,
    resamples: usize,
    #[serde(flatten)]
    kappa: casceq::stats::KappaResult,
}

fn agree(a: &PairArgs, g: &Global) -> Result<()> {
    let al = load_pair(a)?;
    let kappa = kappa_with_ci(&al.pairs, &settings(g))?;
    let out = AgreeOutput {
        n: al.pairs.n(),
        dropped_a: al.dropped_a,
        dropped_b: al.dropped_b,
        seed: g.seed,
        resamples: g.resamples,
        kappa,
    };
    emit(&out, None, g, "agree.json")
}

fn fdr(p: Vec<f64>, file: Option<PathBuf>, g: &Global) -> Result<()> {
    let pvals = match file {
        Some(f) => {
            let text = fs::read_to_string(&f).map_err(|e| io(&f, e))?;
            if text.trim_start().starts_with('[') {
                serde_json::from_str(&text)?
            } else {
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(|l| l.parse::<f64>().map_err(|e| input(format!("{}: {l:?}: {e}", f.display()))))
                    .collect::<Result<Vec<_>>>()?
            }
        }
        None => p,
    };
    if pvals.is_empty() {
        return Err(input("no p-values given; use --p or --input"));
    }
    emit(&bh_fdr(&pvals, g.alpha)?, None, g, "fdr.json")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MixJob {
    signal: PathBuf,
    noise: PathBuf,
    snr_db: f64,
    out: PathBuf,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct MixOutput {
    signal: PathBuf,
    noise: PathBuf,
    out: PathBuf,
    seed: u64,
    #[serde(flatten)]
    report: casceq::signal::MixtureReport,
}

fn mix_one(job: &MixJob, seed: u64) -> Result<MixOutput> {
    let s = read_wav(&job.signal)?;
    let n = read_wav(&job.noise)?;
    let m = mix_at_snr(&s, &n, job.snr_db, seed)?;
    write_wav(&job.out, &m.mixture)?;
    Ok(MixOutput {
        signal: job.signal.clone(),
        noise: job.noise.clone(),
        out: job.out.clone(),
        seed,
        report: m.report(),
    })
}

fn mix_noise(m: &MixArgs, g: &Global) -> Result<()> {
    if let Some(path) = &m.manifest {
        let text = fs::read(path).map_err(|e| io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut jobs: Vec<MixJob> = serde_json::from_slice(&text)?;
        for j in &mut jobs {
            for p in [&mut j.signal, &mut j.noise, &mut j.out] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        let outputs: Vec<MixOutput> = jobs
            .par_iter()
            .map(|j| mix_one(j, j.seed.unwrap_or(g.seed)))
            .collect::<Result<_>>()?;
        return emit(&outputs, None, g, "mix_report.json");
    }
    let (Some(signal), Some(noise), Some(snr_db), Some(out)) = (&m.signal, &m.noise, m.snr_db, &m.out) else {
        return Err(input("mix-noise needs --signal, --noise, --snr-db and --out, or --manifest"));
    };
    let job = MixJob {
        signal: signal.clone(),
        noise: noise.clone(),
        snr_db,
        out: out.clone(),
        seed: None,
    };
    emit(&mix_one(&job, g.seed)?, None, g, "mix_report.json")
}

fn probe_options(split: f64, lambda: Option<f64>, epochs: usize, g: &Global) -> Result<ProbeOptions> {
    if !(split > 0.0 && split < 1.0) {
        return Err(input(format!("--split must lie in (0, 1), got {split}")));
    }
    Ok(ProbeOptions {
        split: SplitSpec::new(split, g.seed),
        lambda: lambda.map_or(Lambda::Auto, Lambda::Fixed),
        ctc: CtcTraining {
            epochs,
            seed: g.seed,
            ..CtcTraining::default()
        },
    })
}

#[derive(Serialize)]
struct ProbeScore {
    kind: &'static str,
    metric: &'static str,
    layer: u32,
    score: Option<f64>,
}

fn probe(cmd: ProbeCommand, g: &Global) -> Result<()> {
    match cmd {
        ProbeCommand::Fit {
            dump,
            layer,
            target,
            split,
            lambda,
            epochs,
            out,
        } => {
            let set = DumpSet::read(&dump)?;
            let p = fit_probe(&set, layer, target, &probe_options(split, lambda, epochs, g)?)?;
            p.write(&out)?;
            let score = ProbeScore {
                kind: target.name(),
                metric: target.metric(),
                layer,
                score: p.score(),
            };
            emit(&score, None, g, "probe_fit.json")
        }
        ProbeCommand::Eval { probe, dump } => {
            let p = FittedProbe::read(&probe)?;
            let set = DumpSet::read(&dump)?;
            let score = ProbeScore {
                kind: p.kind().name(),
                metric: p.kind().metric(),
                layer: p.layer(),
                score: p.evaluate(&set)?,
            };
            emit(&score, None, g, "probe_eval.json")
        }
        ProbeCommand::Curve {
            dump,
            target,
            split,
            lambda,
            epochs,
            out,
        } => {
            let set = DumpSet::read(&dump)?;
            let curve = probe_curve(&set, target, &probe_options(split, lambda, epochs, g)?)?;
            emit(&curve, out.as_deref(), g, &format!("{}_curve.json", target.name()))
        }
    }
}

fn lens_inputs(c: &LensCommon) -> Result<(DumpSet, LensWeights, Positions, BagOptions)> {
    let dump = c.dump.as_ref().ok_or_else(|| input("lens needs --dump"))?;
    let weights = c.weights.as_ref().ok_or_else(|| input("lens needs --weights"))?;
    let positions = match c.positions.as_str() {
        "audio" => Positions::Audio,
        "all" => Positions::All,
        other => return Err(input(format!("--positions must be audio or all, got {other:?}"))),
    };
    Ok((
        DumpSet::read(dump)?,
        LensWeights::read(weights)?,
        positions,
        BagOptions { multiset: c.multiset },
    ))
}

fn lens(args: LensArgs, g: &Global) -> Result<()> {
    match args.decode {
        Some(LensCommand::Decode { common, layer, out }) => {
            let (set, w, positions, bag) = lens_inputs(&common)?;
            let texts: Vec<DecodedText> = set
                .at_layer(layer)?
                .par_iter()
                .map(|d| {
                    let r = logit_lens(d, &w, &positions, bag)?;
                    Ok(DecodedText {
                        id: d.utterance_id.clone(),
                        decoded_text: lens_decode_text(&r.top_tokens, &w),
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
            }
            write_decoded_texts(&out, &texts)
        }
        None => {
            let (set, w, positions, bag) = lens_inputs(&args.common)?;
            let layers = if args.layers.is_empty() { set.layers() } else { args.layers };
            let curve = lens_curve(&set, &layers, &w, &positions, bag)?;
            emit(&curve, args.out.as_deref(), g, "lens.json")
        }
    }
}

fn parse_shrinkage(s: &str) -> Result<Shrinkage> {
    if s == "auto" {
        return Ok(Shrinkage::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(Shrinkage::Fixed(v)),
        _ => Err(input(format!("--shrinkage must be auto or a nonnegative number, got {s:?}"))),
    }
}

fn load_ctc_probes(paths: &[PathBuf]) -> Result<BTreeMap<u32, CtcProbe>> {
    let mut out = BTreeMap::new();
    for p in paths {
        match FittedProbe::read(p)? {
            FittedProbe::Ctc { layer, probe } => {
                if out.insert(layer, probe).is_some() {
                    return Err(input(format!("two CTC probes for layer {layer}")));
                }
            }
            other => {
                return Err(input(format!(
                    "{}: expected a CTC probe, found {}",
                    p.display(),
                    other.kind().name()
                )))
            }
        }
    }
    Ok(out)
}

fn concept_source(kind: ConceptKind, probes: &[PathBuf], soft: bool) -> Result<ConceptSource> {
    Ok(match kind {
        ConceptKind::Boc => ConceptSource::Boc,
        ConceptKind::Proxy => ConceptSource::Proxy(None),
        ConceptKind::Acoustic => ConceptSource::Acoustic,
        ConceptKind::Ctc => {
            if probes.is_empty() {
                return Err(input("the ctc concept needs --probe files, one per layer"));
            }
            ConceptSource::Ctc {
                probes: load_ctc_probes(probes)?,
                soft,
            }
        }
        other => return Err(input(format!("concept {} cannot be fit from a dump", other.name()))),
    })
}

#[derive(Serialize)]
struct LayerGuard {
    layer: u32,
    #[serde(flatten)]
    report: GuardednessReport,
}

fn leace(cmd: LeaceCommand, g: &Global) -> Result<()> {
    match cmd {
        LeaceCommand::Fit {
            dump,
            concept,
            shrinkage,
            probes,
            soft,
            out,
        } => {
            let set = DumpSet::read(&dump)?;
            let source = concept_source(concept, &probes, soft)?;
            let stack = build_stack(&set, &source, parse_shrinkage(&shrinkage)?)?;
            stack.write(&out)
        }
        LeaceCommand::Random { d, k, layers, out } => random_stack(&layers, d, k, g.seed)?.write(&out),
        LeaceCommand::Apply { stack, dump, out } => {
            let stack = EraserStack::read(&stack)?;
            stack.apply(&DumpSet::read(&dump)?)?.write(&out)
        }
        LeaceCommand::Verify {
            stack,
            dump,
            probes,
            soft,
            out,
        } => {
            let stack = EraserStack::read(&stack)?;
            let set = DumpSet::read(&dump)?;
            let kind = stack.concept_kind();
            let source = match kind {
                ConceptKind::Random => {
                    return Err(input("random stacks have no concept to verify; verify the matched LEACE stack"))
                }
                k => concept_source(k, &probes, soft)?,
            };
            let reports: Vec<LayerGuard> = stack
                .erasers()
                .map(|(layer, e)| {
                    let dumps = set.at_layer(layer)?;
                    let (x, z) = source.rows(layer, &dumps)?;
                    Ok(LayerGuard {
                        layer,
                        report: verify_guardedness(e, &x, &z, g.seed)?,
                    })
                })
                .collect::<Result<_>>()?;
            emit(&reports, out.as_deref(), g, "leace_verify.json")
        }
    }
}

fn report(path: &Path, fdr_conditions: Vec<String>, g: &Global) -> Result<()> {
    let mut m = Manifest::load(path)?;
    if !fdr_conditions.is_empty() {
        m.fdr_conditions = fdr_conditions;
        m.validate()?;
    }
    let bundle = run_manifest(&m, &settings(g))?;
    let out_dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("report"));
    let formats = match g.format {
        Some(f) => vec![f],
        None => vec![Format::Csv, Format::Json, Format::Markdown],
    };
    for f in formats {
        for p in render(&bundle, f, &out_dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}
