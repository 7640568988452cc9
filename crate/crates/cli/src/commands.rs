use std::collections::BTreeSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use mlnmt::analysis::{
    bleu_vs_dissimilarity, build_triples_and_traces, export_projector_tsv, make_tuples, EmbeddingCurve, TraceRecord,
    METADATA_FILE, VECTORS_FILE,
};
use mlnmt::checkpoint::Checkpoint;
use mlnmt::corpus::{load_corpus, Corpus, Dataset, ExamplePair};
use mlnmt::eval::{
    evaluate_direction, scores_tsv, translate_all, zero_shot_report, LangLabel, LanguageIdentifier, ZeroShotModels,
};
use mlnmt::model::{ModelConfig, ModelParams, TargetSpec, TargetTokenMix, Translator};
use mlnmt::synthetic::{
    corpus_file_name, gen_synthetic_corpus, make_languages, parse_manifest, parse_manifest_config, write_synthetic,
    Split, SyntheticConfig, SyntheticLanguageSpec, WordOrder, MANIFEST_FILE as LANGUAGES_FILE,
};
use mlnmt::training::{incremental_train, train, BatchSource, TrainConfig, TrainState};
use mlnmt::{train_vocabulary, Direction, LangCode, Vocabulary, WeightedCorpus};

use crate::args::*;
use crate::output::{Manifest, OutDir, CHECKPOINT_FILE, REPORT_FILE, VOCAB_FILE};
use crate::Failure;

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if cli.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let resolved = format!("{:?}", cli.command);
    eprintln!("{}: seed {} threads {}", cli.command.name(), cli.seed, cli.threads);
    eprintln!("config: {resolved}");
    let manifest = Manifest::new(cli.command.name(), cli.seed, cli.threads, &resolved);
    match &cli.command {
        Command::GenData(a) => gen_data(a, cli.seed, manifest),
        Command::BuildVocab(a) => build_vocab(a, manifest),
        Command::Train(a) => train_cmd(a, cli.seed, manifest),
        Command::Translate(a) => translate(a, manifest),
        Command::Evaluate(a) => evaluate(a, manifest),
        Command::ZeroShotEval(a) => zero_shot_eval(a, manifest),
        Command::Finetune(a) => finetune(a, cli.seed, manifest),
        Command::MixSweep(a) => mix_sweep(a, manifest),
        Command::Analyze(a) => analyze(a, cli.seed, manifest),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn list(codes: &[LangCode]) -> String {
    codes.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ")
}

/// A registered language, or a usage error naming the registered ones.
fn registered_lang(code: &str, registered: &[LangCode]) -> Result<LangCode, Failure> {
    match LangCode::new(code) {
        Ok(l) if registered.contains(&l) => Ok(l),
        _ => Err(usage(format!("unknown language {code:?} (registered: {})", list(registered)))),
    }
}

/// Configuration errors detected before any work starts are usage errors.
fn checked<T>(r: Result<T, mlnmt::Error>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        mlnmt::Error::Config(m) => Failure::Usage(m),
        other => other.into(),
    })
}

struct DataDir {
    dir: PathBuf,
    specs: Vec<SyntheticLanguageSpec>,
    directions: Vec<Direction>,
    config: SyntheticConfig,
}

impl DataDir {
    fn open(dir: &Path) -> Result<DataDir, Failure> {
        let path = dir.join(LANGUAGES_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
        let (specs, directions) = parse_manifest(&text)?;
        let config = parse_manifest_config(&text)?;
        Ok(DataDir { dir: dir.to_path_buf(), specs, directions, config })
    }

    fn codes(&self) -> Vec<LangCode> {
        self.specs.iter().map(|s| s.code.clone()).collect()
    }

    fn path(&self, d: &Direction, split: Split) -> PathBuf {
        self.dir.join(corpus_file_name(d, split))
    }

    fn check(&self, d: &Direction) -> Result<(), Failure> {
        if self.directions.contains(d) {
            Ok(())
        } else {
            let have: Vec<String> = self.directions.iter().map(|d| d.to_string()).collect();
            Err(usage(format!("direction {d} not in {} (available: {})", self.dir.display(), have.join(", "))))
        }
    }

    fn split(&self, d: &Direction, split: Split, manifest: &mut Manifest) -> Result<Vec<ExamplePair>, Failure> {
        self.check(d)?;
        let path = self.path(d, split);
        manifest.input(&path)?;
        if fs::metadata(&path)?.len() == 0 {
            return Ok(Vec::new());
        }
        Ok(load_corpus(&path, &d.source, &d.target)?)
    }

    fn identifier(&self) -> LanguageIdentifier {
        LanguageIdentifier::new(&self.specs)
    }
}

fn load_vocab(path: &Path, manifest: &mut Manifest) -> Result<Vocabulary, Failure> {
    manifest.input(path)?;
    let vocab = Vocabulary::load(path)?;
    manifest.add("vocab_hash", vocab.hash());
    Ok(vocab)
}

fn load_checkpoint(path: &Path, vocab: &Vocabulary, manifest: &mut Manifest) -> Result<Checkpoint, Failure> {
    manifest.input(path)?;
    let ck = Checkpoint::load(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    ck.check_vocab(vocab)?;
    Ok(ck)
}

fn with_beam(params: &ModelParams<f32>, beam: Option<usize>) -> Result<ModelParams<f32>, Failure> {
    let mut p = params.clone();
    if let Some(b) = beam {
        p.config.beam_width = b;
        checked(p.config.validate())?;
    }
    Ok(p)
}

fn read_lines(input: Option<&Path>) -> Result<Vec<String>, Failure> {
    let text = match input {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", p.display())))?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

fn gen_data(a: &GenDataArgs, seed: u64, manifest: Manifest) -> Result<(), Failure> {
    let codes: Vec<LangCode> = if a.langs.is_empty() {
        if a.languages > 9 {
            return Err(usage("at most 9 languages"));
        }
        "abcdefghi".chars().take(a.languages).map(|c| LangCode::new(&c.to_string())).collect::<Result<_, _>>()?
    } else {
        a.langs.iter().map(|c| LangCode::new(c)).collect::<Result<_, _>>()?
    };
    if codes.len() < 2 || codes.iter().collect::<BTreeSet<_>>().len() != codes.len() {
        return Err(usage("need at least two distinct languages"));
    }
    let orders: Vec<WordOrder> = if a.orders.is_empty() {
        WordOrder::ALL.iter().copied().cycle().take(codes.len()).collect()
    } else if a.orders.len() == codes.len() {
        a.orders.clone()
    } else {
        return Err(usage(format!("{} word orders for {} languages", a.orders.len(), codes.len())));
    };
    let directions: Vec<Direction> = if a.directions.is_empty() {
        codes
            .iter()
            .flat_map(|s| codes.iter().filter(move |t| *t != s).map(move |t| Direction::new(s.clone(), t.clone())))
            .collect()
    } else {
        for d in &a.directions {
            registered_lang(d.source.as_str(), &codes)?;
            registered_lang(d.target.as_str(), &codes)?;
        }
        a.directions.clone()
    };
    let cfg = SyntheticConfig {
        train_per_direction: a.pairs_per_dir,
        dev_per_direction: a.dev_per_dir,
        test_per_direction: a.test_per_dir,
        min_len: a.min_len,
        max_len: a.max_len,
        concept_vocab: a.concepts,
        zipf_exponent: a.zipf,
        style: a.style,
        seed,
    };
    let specs = checked(make_languages(&codes, &orders, a.concepts, a.style, seed))?;
    let data = checked(gen_synthetic_corpus(&specs, &directions, &cfg))?;
    let mut out = OutDir::create(&a.out)?;
    for d in data.keys() {
        for split in [Split::Train, Split::Dev, Split::Test] {
            out.claim(&corpus_file_name(d, split));
        }
    }
    out.claim(LANGUAGES_FILE);
    write_synthetic(out.dir(), &specs, &data, &cfg)?;
    manifest.finish(&mut out)?;
    out.commit();
    println!("wrote {} directions for languages {} to {}", data.len(), list(&codes), a.out.display());
    Ok(())
}

fn build_vocab(a: &BuildVocabArgs, mut manifest: Manifest) -> Result<(), Failure> {
    let data = DataDir::open(&a.data)?;
    let dirs = if a.directions.is_empty() { data.directions.clone() } else { a.directions.clone() };
    let mut texts = Vec::new();
    for d in &dirs {
        let pairs = data.split(d, Split::Train, &mut manifest)?;
        texts.push(pairs.iter().flat_map(|p| [p.source.clone(), p.target.clone()]).collect::<Vec<String>>());
    }
    let corpora: Vec<WeightedCorpus> = texts.iter().map(|lines| WeightedCorpus { lines, weight: 1.0 }).collect();
    let vocab = checked(train_vocabulary(&corpora, a.size, &data.codes()))?;
    let mut out = OutDir::create(&a.out)?;
    out.write(VOCAB_FILE, vocab.to_file_string())?;
    manifest.add("vocab_hash", vocab.hash());
    manifest.finish(&mut out)?;
    out.commit();
    println!("vocabulary of {} entries, hash {}", vocab.len(), vocab.hash());
    Ok(())
}

fn train_corpus(data: &DataDir, dirs: &[Direction], manifest: &mut Manifest) -> Result<Corpus, Failure> {
    dirs.iter().map(|d| Ok((d.clone(), data.split(d, Split::Train, manifest)?))).collect()
}

fn train_cmd(a: &TrainCmdArgs, seed: u64, mut manifest: Manifest) -> Result<(), Failure> {
    let data = DataDir::open(&a.data)?;
    let vocab = load_vocab(&a.vocab, &mut manifest)?;
    let dirs = if a.directions.is_empty() { data.directions.clone() } else { a.directions.clone() };
    for d in &dirs {
        registered_lang(d.source.as_str(), vocab.languages())?;
        registered_lang(d.target.as_str(), vocab.languages())?;
    }
    let dataset = Dataset::encode(&train_corpus(&data, &dirs, &mut manifest)?, &vocab)?;
    let mut dev = Vec::new();
    for d in &dirs {
        let pairs = data.split(d, Split::Dev, &mut manifest)?;
        if !pairs.is_empty() {
            dev.push(pairs);
        }
    }
    let tc = TrainConfig {
        steps: a.optim.steps,
        batch_size: a.optim.batch_size,
        optimizer: a.optim.optimizer,
        learning_rate: a.optim.lr,
        clip: a.optim.clip,
        eval_every: a.optim.eval_every,
        seed,
        strategy: a.optim.strategy,
        ..TrainConfig::default()
    };
    checked(tc.validate())?;
    let mut state = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path, &vocab, &mut manifest)?;
            if ck.directions != dataset.directions {
                return Err(usage("resumed training must use the checkpoint's directions"));
            }
            ck.state
        }
        None => {
            let m = &a.model;
            let mc = ModelConfig {
                embed_dim: m.embed_dim,
                hidden_dim: m.hidden_dim,
                attention_dim: m.attention_dim,
                encoder_layers: m.encoder_layers,
                decoder_layers: m.decoder_layers,
                reverse_source: !m.no_reverse,
                direct_connections: m.direct_connections,
                beam_width: m.beam,
                max_decode_len: m.max_decode_len,
                ..ModelConfig::new(vocab.len())
            };
            checked(mc.validate())?;
            checked(TrainState::init(&mc, seed))?
        }
    };
    let ident = data.identifier();
    let mut dev_eval = |params: &ModelParams<f32>| -> Result<Vec<(Direction, f64)>, mlnmt::Error> {
        let tr = Translator::new(params, &vocab)?;
        dev.iter()
            .map(|pairs| Ok((pairs[0].direction(), evaluate_direction(&tr, pairs, &ident)?.bleu.bleu)))
            .collect()
    };
    let report = train(&tc, &mut state, BatchSource::Single(&dataset), Some(&mut dev_eval))?;
    let ck = Checkpoint { train: tc, vocab_hash: vocab.hash(), directions: dataset.directions.clone(), state };
    let mut out = OutDir::create(&a.out)?;
    ck.save(&out.claim(CHECKPOINT_FILE))?;
    out.write(REPORT_FILE, report.to_tsv())?;
    manifest.add("step", ck.state.step);
    manifest.finish(&mut out)?;
    out.commit();
    if let Some(last) = report.points.last() {
        println!("step {} loss {:.4}", last.step, last.loss);
        for (d, b) in &last.dev_bleu {
            println!("  dev {d}: BLEU {b:.2}");
        }
    }
    Ok(())
}

fn translate(a: &TranslateArgs, mut manifest: Manifest) -> Result<(), Failure> {
    let vocab = load_vocab(&a.vocab, &mut manifest)?;
    let target = registered_lang(&a.target_lang, vocab.languages())?;
    let ck = load_checkpoint(&a.checkpoint, &vocab, &mut manifest)?;
    let params = with_beam(&ck.state.params, a.beam)?;
    let tr = Translator::new(&params, &vocab)?;
    if let Some(p) = &a.input {
        manifest.input(p)?;
    }
    let lines = read_lines(a.input.as_deref())?;
    let outputs = translate_all(&tr, &lines, &TargetSpec::Lang(target))?;
    for o in &outputs {
        println!("{o}");
    }
    if let Some(dir) = &a.out {
        let mut out = OutDir::create(dir)?;
        let mut tsv = String::from("source\toutput\n");
        for (s, o) in lines.iter().zip(&outputs) {
            tsv.push_str(&format!("{s}\t{o}\n"));
        }
        out.write(REPORT_FILE, tsv)?;
        manifest.finish(&mut out)?;
        out.commit();
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs, mut manifest: Manifest) -> Result<(), Failure> {
    let data = DataDir::open(&a.data)?;
    let vocab = load_vocab(&a.vocab, &mut manifest)?;
    let ck = load_checkpoint(&a.checkpoint, &vocab, &mut manifest)?;
    let params = with_beam(&ck.state.params, a.beam)?;
    let tr = Translator::new(&params, &vocab)?;
    let ident = data.identifier();
    let split = if a.split == "dev" { Split::Dev } else { Split::Test };
    let dirs = if a.directions.is_empty() { ck.directions.clone() } else { a.directions.clone() };
    let mut scores = Vec::new();
    for d in &dirs {
        let pairs = data.split(d, split, &mut manifest)?;
        scores.push(evaluate_direction(&tr, &pairs, &ident)?);
    }
    let mut out = OutDir::create(&a.out)?;
    out.write(REPORT_FILE, scores_tsv(&scores))?;
    manifest.finish(&mut out)?;
    out.commit();
    for s in &scores {
        let trained = if ck.trained_on(&s.direction) { "" } else { " (not trained)" };
        println!("{}: BLEU {:.2}, language ID {:.3}{trained}", s.direction, s.bleu.bleu, s.lang_id_accuracy);
    }
    Ok(())
}

fn zero_shot_eval(a: &ZeroShotArgs, mut manifest: Manifest) -> Result<(), Failure> {
    let data = DataDir::open(&a.data)?;
    let vocab = load_vocab(&a.vocab, &mut manifest)?;
    let ck = load_checkpoint(&a.checkpoint, &vocab, &mut manifest)?;
    if ck.trained_on(&a.direction) {
        return Err(Failure::Runtime(format!(
            "refusing to evaluate {} as zero-shot: it is in the training directions of {}",
            a.direction,
            a.checkpoint.display()
        )));
    }
    let pivot = registered_lang(&a.pivot, vocab.languages())?;
    let direct = a.direct.as_deref().map(|p| load_checkpoint(p, &vocab, &mut manifest)).transpose()?;
    let incremental = a.incremental.as_deref().map(|p| load_checkpoint(p, &vocab, &mut manifest)).transpose()?;
    let test = data.split(&a.direction, Split::Test, &mut manifest)?;
    let ml = Translator::new(&ck.state.params, &vocab)?;
    let direct_tr = direct.as_ref().map(|c| Translator::new(&c.state.params, &vocab)).transpose()?;
    let inc_tr = incremental.as_ref().map(|c| Translator::new(&c.state.params, &vocab)).transpose()?;
    let models = ZeroShotModels {
        multilingual: &ml,
        trained: &ck.directions,
        direct: direct_tr.as_ref(),
        incremental: inc_tr.as_ref(),
    };
    let report = zero_shot_report(&models, &pivot, &test, &data.identifier())?;
    let mut out = OutDir::create(&a.out)?;
    out.write(REPORT_FILE, report.to_tsv())?;
    manifest.finish(&mut out)?;
    out.commit();
    print!("{}", report.to_table());
    Ok(())
}

fn finetune(a: &FinetuneArgs, seed: u64, mut manifest: Manifest) -> Result<(), Failure> {
    let data = DataDir::open(&a.data)?;
    let vocab = load_vocab(&a.vocab, &mut manifest)?;
    let ck = load_checkpoint(&a.checkpoint, &vocab, &mut manifest)?;
    if !(0.0..=1.0).contains(&a.replay_ratio) || a.replay_ratio == 1.0 {
        return Err(usage("--replay-ratio must lie in [0, 1)"));
    }
    if a.pairs == 0 {
        return Err(usage("--pairs must be positive"));
    }
    let mut new_corpus = Corpus::new();
    for d in &a.directions {
        let mut pairs = data.split(d, Split::Train, &mut manifest)?;
        pairs.truncate(a.pairs);
        new_corpus.insert(d.clone(), pairs);
    }
    let new = Dataset::encode(&new_corpus, &vocab)?;
    let replay = Dataset::encode(&train_corpus(&data, &ck.directions, &mut manifest)?, &vocab)?;
    let tc = TrainConfig { learning_rate: a.lr.unwrap_or(ck.train.learning_rate), seed, ..ck.train.clone() };
    checked(tc.validate())?;
    let mut state = ck.state.clone();
    let before = state.step;
    let extra = incremental_train(&tc, &mut state, &vocab, &new, Some(&replay), a.replay_ratio, a.fraction)?;
    let mut directions = ck.directions.clone();
    for d in &a.directions {
        if !directions.contains(d) {
            directions.push(d.clone());
        }
    }
    let step = state.step;
    let result = Checkpoint { train: tc, vocab_hash: vocab.hash(), directions, state };
    let mut out = OutDir::create(&a.out)?;
    result.save(&out.claim(CHECKPOINT_FILE))?;
    out.write(
        REPORT_FILE,
        format!(
            "previous_steps\textra_steps\tsteps\tpairs\treplay_ratio\n{before}\t{extra}\t{step}\t{}\t{}\n",
            a.pairs, a.replay_ratio
        ),
    )?;
    manifest.finish(&mut out)?;
    out.commit();
    println!("fine-tuned for {extra} steps ({before} -> {step})");
    Ok(())
}

/// `0, step, 2·step, ..., 1`, always ending at exactly 1.
fn weight_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round().max(1.0) as usize;
    (0..=n).map(|k| if k == n { 1.0 } else { k as f64 / n as f64 }).collect()
}

fn mix_sweep(a: &MixSweepArgs, mut manifest: Manifest) -> Result<(), Failure> {
    if !(a.w_step > 0.0 && a.w_step <= 1.0) {
        return Err(usage("--w-step must lie in (0, 1]"));
    }
    let data = DataDir::open(&a.data)?;
    let vocab = load_vocab(&a.vocab, &mut manifest)?;
    let from = registered_lang(&a.from, vocab.languages())?;
    let to = registered_lang(&a.to, vocab.languages())?;
    let ck = load_checkpoint(&a.checkpoint, &vocab, &mut manifest)?;
    let tr = Translator::new(&ck.state.params, &vocab)?;
    manifest.input(&a.input)?;
    let lines: Vec<String> = read_lines(Some(&a.input))?.into_iter().filter(|l| !l.trim().is_empty()).collect();
    let ident = data.identifier();
    let mut tsv = String::from("w\tsentence_id\tlang_id\toutput\n");
    let mut summary = Vec::new();
    for w in weight_grid(a.w_step) {
        let spec = TargetSpec::Mix(TargetTokenMix::new(from.clone(), to.clone(), w)?);
        let (mut n_from, mut n_to) = (0, 0);
        for (i, line) in lines.iter().enumerate() {
            let t = tr.translate(line, &spec)?;
            let label = ident.identify(&t.text).label;
            if label == LangLabel::Lang(from.clone()) {
                n_from += 1;
            } else if label == LangLabel::Lang(to.clone()) {
                n_to += 1;
            }
            tsv.push_str(&format!("{w:.2}\t{i}\t{label}\t{}\n", t.text));
        }
        summary.push((w, n_from, n_to));
    }
    let mut out = OutDir::create(&a.out)?;
    out.write(REPORT_FILE, tsv)?;
    manifest.finish(&mut out)?;
    out.commit();
    println!("{:>5}  {:>6}  {:>6}", "w", from.as_str(), to.as_str());
    for (w, f, t) in &summary {
        println!("{w:>5.2}  {f:>6}  {t:>6}");
    }
    match summary.iter().find(|(_, _, t)| 2 * t > lines.len()) {
        Some((w, _, _)) => println!("majority switches to {to} at w = {w:.2}"),
        None => println!("no majority switch to {to}"),
    }
    Ok(())
}

fn analyze(a: &AnalyzeArgs, seed: u64, mut manifest: Manifest) -> Result<(), Failure> {
    let data = DataDir::open(&a.data)?;
    let vocab = load_vocab(&a.vocab, &mut manifest)?;
    let ck = load_checkpoint(&a.checkpoint, &vocab, &mut manifest)?;
    let langs: Vec<LangCode> = if a.langs.is_empty() {
        data.codes()
    } else {
        a.langs.iter().map(|c| registered_lang(c, &data.codes())).collect::<Result<_, _>>()?
    };
    if a.tuples == 0 {
        return Err(usage("--tuples must be positive"));
    }
    let tuples = checked(make_tuples(&data.specs, &langs, a.tuples, &data.config, seed))?;
    let tr = Translator::new(&ck.state.params, &vocab)?;
    let traces = build_triples_and_traces(&tr, &tuples, &ck.directions)?;
    for w in &traces.warnings {
        eprintln!("warning: {w}");
    }
    let (zero_shot, trained): (Vec<TraceRecord>, Vec<TraceRecord>) =
        traces.records.iter().cloned().partition(|r| r.meta().zero_shot);
    let reachable: BTreeSet<&LangCode> = trained.iter().map(|r| &r.meta().target_lang).collect();
    let comparable: Vec<TraceRecord> =
        zero_shot.iter().filter(|r| reachable.contains(&r.meta().target_lang)).cloned().collect();
    let report = bleu_vs_dissimilarity(&comparable, &trained, a.distance)?;
    let mut out = OutDir::create(&a.out)?;
    out.claim(VECTORS_FILE);
    out.claim(METADATA_FILE);
    let curves: Vec<EmbeddingCurve> = traces.records.iter().map(|r| r.curve.clone()).collect();
    export_projector_tsv(&curves, out.dir())?;
    out.write(REPORT_FILE, report.scatter_tsv())?;
    manifest.finish(&mut out)?;
    out.commit();
    println!("{} translations, {} context vectors", traces.records.len(), traces.total_steps());
    match report.r {
        Some(r) => println!("zero-shot sentences: {}, Pearson r(BLEU, dissimilarity) = {r:.4}", report.points.len()),
        None => println!("zero-shot sentences: {}, Pearson r undefined", report.points.len()),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_grid_ends_at_one() {
        let g = weight_grid(0.1);
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[10]), (0.0, 1.0));
        assert_eq!(weight_grid(1.0), vec![0.0, 1.0]);
    }
}
