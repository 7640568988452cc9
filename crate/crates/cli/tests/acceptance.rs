//! Acceptance criteria 1 to 10. Each test prints one PASS or FAIL line.
//!
//! Tests hold a shared lock so timings measure one criterion at a time; the
//! trained models are built once and shared.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use mlnmt::analysis::{curve_eval, dissimilarity, pearson, EmbeddingCurve};
use mlnmt::corpus::{build_epoch, Corpus, Dataset, MiniBatch, SamplingStrategy};
use mlnmt::eval::{bleu_multi, corpus_bleu, evaluate_direction, zero_shot_report, LanguageIdentifier, ZeroShotModels};
use mlnmt::model::{loss_and_gradients, ModelConfig, ModelParams, TargetSpec, TargetTokenMix, Translator};
use mlnmt::synthetic::{
    gen_synthetic_corpus, make_languages, LexiconStyle, Splits, SyntheticConfig, SyntheticLanguageSpec, WordOrder,
};
use mlnmt::training::{incremental_train, train, BatchSource, TrainConfig, TrainState};
use mlnmt::wordpiece::{BOS, EOS, PAD};
use mlnmt::{train_vocabulary, Direction, LangCode, Vocabulary, WeightedCorpus};
use numcore::{grad_check, NumError, Rng, Tensor};

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written to the stdout handle directly so the line survives test output capture.
fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    let line = format!("criterion {n} {}: {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).and_then(|_| out.flush()).unwrap();
}

fn lang(s: &str) -> LangCode {
    LangCode::new(s).unwrap()
}

fn dir(a: &str, b: &str) -> Direction {
    Direction::new(lang(a), lang(b))
}

/// A synthetic family, its corpora and a vocabulary over the given training directions.
struct Family {
    specs: Vec<SyntheticLanguageSpec>,
    data: std::collections::BTreeMap<Direction, Splits>,
    vocab: Vocabulary,
}

fn family(codes: &[&str], orders: &[WordOrder], directions: &[Direction], vocab_dirs: &[Direction], size: usize) -> Family {
    let codes: Vec<LangCode> = codes.iter().map(|c| lang(c)).collect();
    let cfg = SyntheticConfig::default();
    let specs = make_languages(&codes, orders, cfg.concept_vocab, LexiconStyle::Cognate, cfg.seed).unwrap();
    let data = gen_synthetic_corpus(&specs, directions, &cfg).unwrap();
    let texts: Vec<Vec<String>> = vocab_dirs
        .iter()
        .map(|d| data[d].train.iter().flat_map(|p| [p.source.clone(), p.target.clone()]).collect())
        .collect();
    let corpora: Vec<WeightedCorpus> = texts.iter().map(|lines| WeightedCorpus { lines, weight: 1.0 }).collect();
    let vocab = train_vocabulary(&corpora, size, &codes).unwrap();
    Family { specs, data, vocab }
}

impl Family {
    fn dataset(&self, dirs: &[Direction], limit: usize) -> Dataset {
        let corpus: Corpus =
            dirs.iter().map(|d| (d.clone(), self.data[d].train.iter().take(limit).cloned().collect())).collect();
        Dataset::encode(&corpus, &self.vocab).unwrap()
    }

    fn ident(&self) -> LanguageIdentifier {
        LanguageIdentifier::new(&self.specs)
    }
}

fn small_model(vocab: &Vocabulary, reverse: bool) -> ModelConfig {
    ModelConfig {
        embed_dim: 32,
        hidden_dim: 64,
        attention_dim: 32,
        encoder_layers: 1,
        decoder_layers: 1,
        reverse_source: reverse,
        ..ModelConfig::new(vocab.len())
    }
}

fn train_config(steps: u64, seed: u64) -> TrainConfig {
    TrainConfig { steps, batch_size: 32, learning_rate: 2e-3, seed, ..TrainConfig::default() }
}

// ---- shared models ---------------------------------------------------------

const ROUTING_STEPS: u64 = 8000;

struct Routing {
    family: Family,
    directions: Vec<Direction>,
    state: TrainState,
    train_secs: f64,
}

fn routing() -> &'static Routing {
    static CELL: OnceLock<Routing> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let codes = ["a", "b", "c"];
        let directions: Vec<Direction> =
            codes.iter().flat_map(|s| codes.iter().filter(move |t| *t != s).map(move |t| dir(s, t))).collect();
        let orders = [WordOrder::Identity, WordOrder::Reverse, WordOrder::Rotate1];
        let family = family(&codes, &orders, &directions, &directions, 400);
        let ds = family.dataset(&directions, usize::MAX);
        let mut state = TrainState::init(&small_model(&family.vocab, true), 1).unwrap();
        train(&train_config(ROUTING_STEPS, 3), &mut state, BatchSource::Single(&ds), None).unwrap();
        Routing { family, directions, state, train_secs: t0.elapsed().as_secs_f64() }
    })
}

const ZS_STEPS: u64 = 6000;
const ZS_VOCAB: usize = 150;

struct ZeroShot {
    family: Family,
    trained: Vec<Direction>,
    multilingual: TrainState,
    direct: TrainState,
    train_secs: f64,
}

fn zero_shot() -> &'static ZeroShot {
    static CELL: OnceLock<ZeroShot> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let trained = vec![dir("a", "e"), dir("e", "b")];
        let all = [dir("a", "e"), dir("e", "b"), dir("a", "b")];
        let orders = [WordOrder::Identity, WordOrder::Identity, WordOrder::Reverse];
        let family = family(&["a", "e", "b"], &orders, &all, &trained, ZS_VOCAB);
        let cfg = small_model(&family.vocab, true);
        let mut multilingual = TrainState::init(&cfg, 1).unwrap();
        let ml_data = family.dataset(&trained, usize::MAX);
        train(&train_config(ZS_STEPS, 3), &mut multilingual, BatchSource::Single(&ml_data), None).unwrap();
        let mut direct = TrainState::init(&cfg, 2).unwrap();
        let direct_data = family.dataset(&[dir("a", "b")], usize::MAX);
        train(&train_config(ZS_STEPS, 3), &mut direct, BatchSource::Single(&direct_data), None).unwrap();
        ZeroShot { family, trained, multilingual, direct, train_secs: t0.elapsed().as_secs_f64() }
    })
}

// ---- criteria --------------------------------------------------------------

#[test]
fn criterion_01_gradient_check() {
    let _g = serial();
    let t0 = Instant::now();
    let cfg = ModelConfig {
        embed_dim: 8,
        hidden_dim: 16,
        attention_dim: 8,
        encoder_layers: 2,
        decoder_layers: 2,
        direct_connections: true,
        ..ModelConfig::new(60)
    };
    let p = ModelParams::<f64>::init(&cfg, &mut Rng::new(11)).unwrap();
    let mut target = vec![20, 31, 42, 53, 59];
    target.push(EOS);
    let pair = mlnmt::corpus::EncodedPair { source: vec![4, 10, 17, 33, 58], target };
    let batch = MiniBatch::from_pairs(&[(&pair, dir("a", "b"))], true);
    let named: Vec<(String, Tensor<f64>)> = p.names().into_iter().zip(p.tensors().into_iter().cloned()).collect();
    let report = grad_check(
        |values, _| {
            let q = ModelParams::from_tensors(&cfg, values.to_vec()).map_err(|e| NumError::Shape(e.to_string()))?;
            loss_and_gradients(&q, &batch, 1.0).map_err(|e| NumError::Shape(e.to_string()))
        },
        &named,
        1e-5,
    )
    .unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let err = report.max_rel_error();
    let ok = err < 1e-5 && secs < 60.0;
    verdict(1, "gradient check", ok, &format!("max relative error {err:.2e} over {} blocks, {secs:.1}s", named.len()));
    assert!(ok, "{:?}", report.worst());
}

#[test]
fn criterion_02_bleu_oracle() {
    let _g = serial();
    let t0 = Instant::now();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/bleu");
    let mut dirs: Vec<PathBuf> = fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    let read = |p: &Path| -> Vec<Vec<String>> {
        fs::read_to_string(p).unwrap().lines().map(|l| l.split_whitespace().map(str::to_string).collect()).collect()
    };
    let mut worst = 0.0f64;
    let mut has_clip = false;
    let mut has_bp = false;
    for d in &dirs {
        let hyps = read(&d.join("hyp.txt"));
        let mut sets = Vec::new();
        while d.join(format!("ref{}", sets.len())).exists() {
            sets.push(read(&d.join(format!("ref{}", sets.len()))));
        }
        let refs: Vec<Vec<Vec<String>>> = (0..hyps.len()).map(|i| sets.iter().map(|s| s[i].clone()).collect()).collect();
        let report = bleu_multi(&hyps, &refs).unwrap();
        let expected = fs::read_to_string(d.join("expected.txt")).unwrap();
        let golden: f64 = expected.trim_start_matches("BLEU = ").split(',').next().unwrap().parse().unwrap();
        worst = worst.max((report.bleu - golden).abs());
        let name = d.file_name().unwrap().to_string_lossy();
        has_clip |= name.contains("clip");
        has_bp |= report.brevity_penalty < 1.0;
    }
    let c: Vec<String> = "the cat sat on the mat".split(' ').map(str::to_string).collect();
    let identity = corpus_bleu(&[c.join(" ")], &[c.join(" ")]).unwrap().bleu;
    let ok = dirs.len() >= 10 && worst <= 0.01 && has_clip && has_bp && identity == 100.0;
    verdict(
        2,
        "BLEU oracle",
        ok,
        &format!(
            "{} fixtures, max deviation {worst:.4}, BLEU(c,c) = {identity:.2}, {:.2}s",
            dirs.len(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_03_wordpiece_round_trip() {
    let _g = serial();
    let t0 = Instant::now();
    let codes = [lang("a"), lang("b")];
    let specs = make_languages(&codes, &[WordOrder::Identity, WordOrder::Reverse], 200, LexiconStyle::Cognate, 7).unwrap();
    let data = gen_synthetic_corpus(&specs, &[dir("a", "b")], &SyntheticConfig::default()).unwrap();
    let lines: Vec<String> = data[&dir("a", "b")].train.iter().flat_map(|p| [p.source.clone(), p.target.clone()]).collect();
    let build = || train_vocabulary(&[WeightedCorpus { lines: &lines, weight: 1.0 }], 300, &codes).unwrap();
    let vocab = build();
    let identical = vocab.to_file_string() == build().to_file_string();
    let charset: Vec<char> = {
        let mut set: Vec<char> = lines.iter().flat_map(|l| l.chars()).filter(|c| *c != ' ').collect();
        set.sort();
        set.dedup();
        set
    };
    let mut rng = Rng::new(2024);
    let mut failures = 0;
    for _ in 0..10_000 {
        let words: Vec<String> = (0..1 + rng.below(8))
            .map(|_| (0..1 + rng.below(10)).map(|_| charset[rng.below(charset.len())]).collect())
            .collect();
        let s = words.join(" ");
        if vocab.detokenize(&vocab.segment(&s)).unwrap() != s {
            failures += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = failures == 0 && identical && secs < 60.0;
    verdict(
        3,
        "wordpiece round trip",
        ok,
        &format!("{failures} failures in 10000 strings, deterministic vocabulary {identical}, {secs:.1}s"),
    );
    assert!(ok);
}

#[test]
fn criterion_04_oversampling_ratios() {
    let _g = serial();
    let sizes = [(dir("a", "b"), 1000), (dir("a", "c"), 250)];
    let over = build_epoch(&sizes, SamplingStrategy::Oversample, 5).unwrap().counts();
    let natural = build_epoch(&sizes, SamplingStrategy::Natural, 5).unwrap().counts();
    let got = |m: &std::collections::BTreeMap<Direction, usize>| [m[&dir("a", "b")], m[&dir("a", "c")]];
    let ok = got(&over) == [1000, 1000] && got(&natural) == [1000, 250];
    verdict(4, "oversampling ratios", ok, &format!("oversample {:?}, natural {:?}", got(&over), got(&natural)));
    assert!(ok);
}

/// BLEU per direction from the recorded baseline run of the routing model.
const ROUTING_BASELINE: [(&str, f64); 6] =
    [("a-b", 94.7), ("a-c", 82.5), ("b-a", 96.2), ("b-c", 96.7), ("c-a", 92.4), ("c-b", 97.4)];

#[test]
fn criterion_05_token_routing() {
    let _g = serial();
    let r = routing();
    let t0 = Instant::now();
    let tr = Translator::new(&r.state.params, &r.family.vocab).unwrap();
    let ident = r.family.ident();
    let mut ok = true;
    let mut parts = Vec::new();
    for d in &r.directions {
        let s = evaluate_direction(&tr, &r.family.data[d].test, &ident).unwrap();
        let baseline = ROUTING_BASELINE.iter().find(|(n, _)| *n == d.to_string()).unwrap().1;
        ok &= s.lang_id_accuracy >= 0.95 && s.bleu.bleu >= 40.0 && (s.bleu.bleu - baseline).abs() <= 5.0;
        parts.push(format!("{d} {:.1}/{:.3}", s.bleu.bleu, s.lang_id_accuracy));
    }
    let secs = r.train_secs + t0.elapsed().as_secs_f64();
    ok &= secs <= 600.0;
    verdict(5, "token routing", ok, &format!("BLEU/langID {}; {ROUTING_STEPS} steps, {secs:.0}s", parts.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_06_zero_shot_ordering() {
    let _g = serial();
    let z = zero_shot();
    let t0 = Instant::now();
    let ml = Translator::new(&z.multilingual.params, &z.family.vocab).unwrap();
    let direct = Translator::new(&z.direct.params, &z.family.vocab).unwrap();
    let models = ZeroShotModels { multilingual: &ml, trained: &z.trained, direct: Some(&direct), incremental: None };
    let test = &z.family.data[&dir("a", "b")].test;
    let report = zero_shot_report(&models, &lang("e"), test, &z.family.ident()).unwrap();
    let b = |name| report.bleu(name).unwrap();
    let passes = |name| report.route(name).unwrap().decode_passes;
    let (d, br, zs, copy) = (b("direct"), b("bridged"), b("zero-shot"), b("copy-source"));
    let secs = z.train_secs + t0.elapsed().as_secs_f64();
    let ok = d >= br && br >= zs && zs > copy + 10.0 && passes("bridged") == 2 * passes("zero-shot") && secs <= 1200.0;
    verdict(
        6,
        "zero-shot ordering",
        ok,
        &format!(
            "direct {d:.2} >= bridged {br:.2} >= zero-shot {zs:.2} > copy {copy:.2} + 10; passes {} vs {}; {secs:.0}s",
            passes("bridged"),
            passes("zero-shot")
        ),
    );
    print!("{}", report.to_table());
    assert!(ok);
}

#[test]
fn criterion_07_incremental_recovery() {
    let _g = serial();
    let z = zero_shot();
    let ident = z.family.ident();
    let score = |state: &TrainState, d: &Direction| {
        let tr = Translator::new(&state.params, &z.family.vocab).unwrap();
        evaluate_direction(&tr, &z.family.data[d].test, &ident).unwrap().bleu.bleu
    };
    let target = dir("a", "b");
    let new = z.family.dataset(std::slice::from_ref(&target), 500);
    let replay = z.family.dataset(&z.trained, usize::MAX);
    let mut tuned = z.multilingual.clone();
    let extra = incremental_train(&train_config(ZS_STEPS, 4), &mut tuned, &z.family.vocab, &new, Some(&replay), 0.5, 0.05)
        .unwrap();
    let share = extra as f64 / z.multilingual.step as f64;
    let (before, after) = (score(&z.multilingual, &target), score(&tuned, &target));
    let mut ok = (0.03..=0.10).contains(&share) && after - before >= 5.0;
    let mut drops = Vec::new();
    for d in &z.trained {
        let drop = score(&z.multilingual, d) - score(&tuned, d);
        ok &= drop <= 2.0;
        drops.push(format!("{d} {drop:+.2}"));
    }
    verdict(
        7,
        "incremental recovery",
        ok,
        &format!("{target} {before:.2} -> {after:.2} after {extra} steps ({:.1}%); drops {}", share * 100.0, drops.join(", ")),
    );
    assert!(ok);
}

#[test]
fn criterion_08_mixing_endpoints() {
    let _g = serial();
    let r = routing();
    let vocab = &r.family.vocab;
    let tr = Translator::new(&r.state.params, vocab).unwrap();
    let ident = r.family.ident();
    let (a, b) = (lang("a"), lang("b"));
    let sources: Vec<String> = r.family.data[&dir("c", "a")].test.iter().take(50).map(|p| p.source.clone()).collect();
    let mut ok = true;
    let (mut id_a, mut id_b) = (0, 0);
    let mut switch: Option<f64> = None;
    for k in 0..=10 {
        let w = k as f64 / 10.0;
        let mut to_b = 0;
        for s in &sources {
            let mixed = tr.translate(s, &TargetSpec::Mix(TargetTokenMix::new(a.clone(), b.clone(), w).unwrap())).unwrap();
            ok &= mixed.tokens.iter().all(|&t| t < vocab.len() && t != PAD && t != BOS && !vocab.is_language_token(t));
            ok &= vocab.detokenize(&mixed.tokens).unwrap() == mixed.text;
            if k == 0 {
                ok &= mixed == tr.translate(s, &TargetSpec::Lang(a.clone())).unwrap();
                id_a += ident.is_language(&mixed.text, &a) as usize;
            }
            if k == 10 {
                ok &= mixed == tr.translate(s, &TargetSpec::Lang(b.clone())).unwrap();
                id_b += ident.is_language(&mixed.text, &b) as usize;
            }
            to_b += ident.is_language(&mixed.text, &b) as usize;
        }
        if switch.is_none() && 2 * to_b > sources.len() {
            switch = Some(w);
        }
    }
    ok &= sources.len() == 50 && id_a == 50 && id_b == 50;
    let sw = switch.map_or("none".to_string(), |w| format!("{w:.1}"));
    verdict(
        8,
        "mixing endpoints",
        ok,
        &format!("language ID at w=0: {id_a}/50 a, at w=1: {id_b}/50 b; majority switch at w = {sw}"),
    );
    assert!(ok);
}

#[test]
fn criterion_09_geometry_formulas() {
    let _g = serial();
    let c = |pts: &[&[f64]]| EmbeddingCurve::new(pts.iter().map(|p| p.to_vec()).collect()).unwrap();
    let fixture = dissimilarity(&c(&[&[0.0], &[2.0]]), &c(&[&[0.0], &[0.0], &[2.0]])).unwrap();
    let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
    let mut rng = Rng::new(99);
    let mut violations = 0;
    for _ in 0..1000 {
        let d = 1 + rng.below(6);
        let curve = |rng: &mut Rng| {
            let n = 1 + rng.below(8);
            EmbeddingCurve::new((0..n).map(|_| (0..d).map(|_| rng.uniform(-5.0, 5.0)).collect()).collect()).unwrap()
        };
        let (x, y) = (curve(&mut rng), curve(&mut rng));
        let s = rng.uniform(0.0, 4.0);
        let scale = |k: &EmbeddingCurve| {
            EmbeddingCurve::new(k.points().iter().map(|p| p.iter().map(|v| v * s).collect()).collect()).unwrap()
        };
        let dxy = dissimilarity(&x, &y).unwrap();
        let exact_at_knots = (0..x.len()).all(|i| {
            let t = if x.len() == 1 { 0.0 } else { i as f64 / (x.len() - 1) as f64 };
            curve_eval(&x, t).unwrap() == x.points()[i]
        });
        let good = dissimilarity(&x, &x).unwrap() == 0.0
            && dxy >= 0.0
            && (dxy - dissimilarity(&y, &x).unwrap()).abs() <= 1e-12 * dxy.max(1.0)
            && (dissimilarity(&scale(&x), &scale(&y)).unwrap() - s * dxy).abs() <= 1e-9 * (1.0 + s * dxy)
            && exact_at_knots;
        violations += !good as usize;
    }
    let ok = fixture == 1.0 / 3.0 && (r - 0.6).abs() <= 1e-12 && violations == 0;
    verdict(
        9,
        "geometry formulas",
        ok,
        &format!("fixture {fixture}, Pearson {r}, {violations} property violations in 1000 pairs"),
    );
    assert!(ok);
}

fn mlnmt(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_mlnmt")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn criterion_10_end_to_end_determinism() {
    let _g = serial();
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let mut identical = true;
    for run in ["one", "two"] {
        mlnmt(&["gen-data", "--out", &p(&format!("data-{run}")), "--languages", "3", "--pairs-per-dir", "400", "--seed", "7"]);
    }
    for f in fs::read_dir(p("data-one")).unwrap() {
        let name = f.unwrap().file_name();
        if name == "manifest.txt" {
            continue;
        }
        identical &= fs::read(Path::new(&p("data-one")).join(&name)).unwrap()
            == fs::read(Path::new(&p("data-two")).join(&name)).unwrap();
    }
    mlnmt(&["build-vocab", "--data", &p("data-one"), "--out", &p("vocab"), "--size", "200"]);
    for run in ["one", "two"] {
        mlnmt(&[
            "train", "--data", &p("data-one"), "--vocab", &p("vocab/vocab.txt"), "--out", &p(&format!("run-{run}")),
            "--steps", "120", "--eval-every", "60", "--embed-dim", "16", "--hidden-dim", "24", "--attention-dim", "16",
            "--encoder-layers", "1", "--decoder-layers", "1", "--seed", "5",
        ]);
    }
    let same = |f: &str| fs::read(Path::new(&p("run-one")).join(f)).unwrap() == fs::read(Path::new(&p("run-two")).join(f)).unwrap();
    let ok = identical && same("checkpoint.bin") && same("report.tsv");
    verdict(
        10,
        "end-to-end determinism",
        ok,
        &format!(
            "corpora identical {identical}, checkpoints identical {}, reports identical {}, {:.1}s",
            same("checkpoint.bin"),
            same("report.tsv"),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}
