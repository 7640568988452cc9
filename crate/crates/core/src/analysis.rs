//! Context-vector curves and their geometry.
//!
//! A translation's attention contexts, one per decoder step, are the control
//! points `y_0..y_{n-1}` of a piecewise-linear curve `γ` with `γ(i/(n-1)) = y_i`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use numcore::Rng;

use crate::model::{TargetSpec, Translator};
use crate::synthetic::{sample_split, Split, SyntheticConfig, SyntheticLanguageSpec};
use crate::{Direction, Error, LangCode};

#[derive(Clone, Debug, PartialEq)]
pub struct CurveMeta {
    pub triple_id: usize,
    pub sentence_id: usize,
    pub source_lang: LangCode,
    pub target_lang: LangCode,
    pub zero_shot: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCurve {
    points: Vec<Vec<f64>>,
    pub meta: Option<CurveMeta>,
}

impl EmbeddingCurve {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, Error> {
        let d = points.first().map(Vec::len).ok_or(Error::TooFewPoints(0))?;
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch(d, bad.len()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("curve points must be finite".into()));
        }
        Ok(EmbeddingCurve { points, meta: None })
    }

    pub fn with_meta(mut self, meta: CurveMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// `γ(t)`; a single-point curve is constant.
pub fn curve_eval(curve: &EmbeddingCurve, t: f64) -> Result<Vec<f64>, Error> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfUnitInterval(t));
    }
    let n = curve.len();
    if n == 1 {
        return Ok(curve.points[0].clone());
    }
    let x = t * (n - 1) as f64;
    let i = (x.floor() as usize).min(n - 2);
    let frac = x - i as f64;
    if frac == 0.0 {
        return Ok(curve.points[i].clone());
    }
    if frac == 1.0 {
        return Ok(curve.points[i + 1].clone());
    }
    Ok(curve.points[i].iter().zip(&curve.points[i + 1]).map(|(a, b)| a + frac * (b - a)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distance {
    Euclidean,
    /// `1 - cos`, with 0 for two zero vectors and 1 for one zero vector.
    Cosine,
}

impl std::str::FromStr for Distance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "cosine" => Ok(Distance::Cosine),
            other => Err(Error::Config(format!("unknown distance {other:?}"))),
        }
    }
}

fn distance(kind: Distance, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Distance::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            match (na == 0.0, nb == 0.0) {
                (true, true) => 0.0,
                (true, false) | (false, true) => 1.0,
                _ => 1.0 - dot / (na * nb),
            }
        }
    }
}

/// `(1/m) Σ_{i<m} d(γ1(i/(m-1)), γ2(i/(m-1)))` with `m = max(n1, n2)`.
pub fn dissimilarity_with(c1: &EmbeddingCurve, c2: &EmbeddingCurve, kind: Distance) -> Result<f64, Error> {
    if c1.dim() != c2.dim() {
        return Err(Error::DimensionMismatch(c1.dim(), c2.dim()));
    }
    let m = c1.len().max(c2.len());
    if m == 1 {
        return Ok(distance(kind, &c1.points[0], &c2.points[0]));
    }
    let mut total = 0.0;
    for i in 0..m {
        let t = i as f64 / (m - 1) as f64;
        total += distance(kind, &curve_eval(c1, t)?, &curve_eval(c2, t)?);
    }
    Ok(total / m as f64)
}

/// Euclidean [`dissimilarity_with`].
pub fn dissimilarity(c1: &EmbeddingCurve, c2: &EmbeddingCurve) -> Result<f64, Error> {
    dissimilarity_with(c1, c2, Distance::Euclidean)
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, Error> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sentence BLEU in [0, 100] with add-one smoothing of the 2- to 4-gram precisions.
pub fn sentence_bleu<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let c: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    if c.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (cc, rc) = (ngram_counts(&c, n), ngram_counts(&r, n));
        let total: usize = cc.values().sum();
        let matched: usize = cc.iter().map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0))).sum();
        let p = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let bp = if c.len() < r.len() { (1.0 - r.len() as f64 / c.len() as f64).exp() } else { 1.0 };
    100.0 * bp * (log_sum / 4.0).exp()
}

fn ngram_counts<'a, 'b>(words: &'a [&'b str], n: usize) -> HashMap<&'a [&'b str], usize> {
    let mut m = HashMap::new();
    if words.len() >= n {
        for g in words.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// One concept sequence rendered in several languages.
#[derive(Clone, Debug, PartialEq)]
pub struct Tuple {
    pub id: usize,
    pub sentences: Vec<(LangCode, String)>,
}

/// `count` tuples over `langs`, drawn from the test split so they never occur in training data.
pub fn make_tuples(
    specs: &[SyntheticLanguageSpec],
    langs: &[LangCode],
    count: usize,
    cfg: &SyntheticConfig,
    seed: u64,
) -> Result<Vec<Tuple>, Error> {
    let chosen: Vec<&SyntheticLanguageSpec> = langs
        .iter()
        .map(|l| {
            specs.iter().find(|s| &s.code == l).ok_or_else(|| Error::UnregisteredLanguage {
                code: l.to_string(),
                registered: specs.iter().map(|s| s.code.as_str()).collect::<Vec<_>>().join(", "),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut rng = Rng::derive(seed, 0x0721_91e5);
    let seqs = sample_split(&mut rng, cfg, Split::Test, count)?;
    Ok(seqs
        .iter()
        .enumerate()
        .map(|(id, c)| Tuple { id, sentences: chosen.iter().map(|s| (s.code.clone(), s.render(c))).collect() })
        .collect())
}

/// A translation with its context-vector curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub curve: EmbeddingCurve,
    pub source: String,
    pub output: String,
    pub reference: String,
}

impl TraceRecord {
    pub fn meta(&self) -> &CurveMeta {
        self.curve.meta.as_ref().expect("trace records carry metadata")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Traces {
    pub records: Vec<TraceRecord>,
    /// Directions translated without having been trained.
    pub warnings: Vec<String>,
}

impl Traces {
    pub fn total_steps(&self) -> usize {
        self.records.iter().map(|r| r.curve.len()).sum()
    }
}

/// Translates every sentence of every tuple into each other language of the tuple
/// and keeps the per-step context vectors.
pub fn build_triples_and_traces(
    translator: &Translator<'_>,
    tuples: &[Tuple],
    trained: &[Direction],
) -> Result<Traces, Error> {
    let mut out = Traces::default();
    for t in tuples {
        for (src_lang, src) in &t.sentences {
            for (tgt_lang, reference) in &t.sentences {
                if src_lang == tgt_lang {
                    continue;
                }
                let d = Direction::new(src_lang.clone(), tgt_lang.clone());
                let zero_shot = !trained.contains(&d);
                if zero_shot {
                    let w = format!("direction {d} was not trained");
                    if !out.warnings.contains(&w) {
                        out.warnings.push(w);
                    }
                }
                let tr = translator.translate(src, &TargetSpec::Lang(tgt_lang.clone()))?;
                if tr.trace.is_empty() {
                    continue;
                }
                let meta = CurveMeta {
                    triple_id: t.id,
                    sentence_id: out.records.len(),
                    source_lang: src_lang.clone(),
                    target_lang: tgt_lang.clone(),
                    zero_shot,
                };
                let curve = EmbeddingCurve::new(tr.trace.into_iter().map(|c| c.context).collect())?.with_meta(meta);
                out.records.push(TraceRecord { curve, source: src.clone(), output: tr.text, reference: reference.clone() });
            }
        }
    }
    Ok(out)
}

/// `x` with 9 significant digits in plain decimal notation where practical.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = 8 - magnitude;
    if (0..=20).contains(&decimals) {
        format!("{:.*}", decimals as usize, x)
    } else if decimals < 0 && magnitude < 16 {
        format!("{:.0}", x)
    } else {
        format!("{:.8e}", x)
    }
}

pub const VECTORS_FILE: &str = "vectors.tsv";
pub const METADATA_FILE: &str = "metadata.tsv";

/// Writes one `vectors.tsv` row per curve point and an aligned `metadata.tsv`.
pub fn export_projector_tsv(curves: &[EmbeddingCurve], out_dir: &Path) -> Result<(PathBuf, PathBuf), Error> {
    if curves.is_empty() {
        return Err(Error::NoCurves);
    }
    let mut vectors = String::new();
    let mut meta = String::from("triple_id\tsentence_id\tstep\tsource_lang\ttarget_lang\tzero_shot\n");
    for (k, c) in curves.iter().enumerate() {
        for (step, p) in c.points().iter().enumerate() {
            let row: Vec<String> = p.iter().map(|&v| format_sig9(v)).collect();
            vectors.push_str(&row.join("\t"));
            vectors.push('\n');
            match &c.meta {
                Some(m) => meta.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    m.triple_id, m.sentence_id, step, m.source_lang, m.target_lang, m.zero_shot
                )),
                None => meta.push_str(&format!("-\t{k}\t{step}\t-\t-\t-\n")),
            }
        }
    }
    fs::create_dir_all(out_dir)?;
    let (vp, mp) = (out_dir.join(VECTORS_FILE), out_dir.join(METADATA_FILE));
    fs::write(&vp, vectors)?;
    fs::write(&mp, meta)?;
    Ok((vp, mp))
}

pub fn parse_vectors_tsv(text: &str) -> Result<Vec<Vec<f64>>, Error> {
    text.lines()
        .map(|l| {
            l.split('\t')
                .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("bad vector value {v:?}"))))
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterPoint {
    pub sentence_id: usize,
    pub bleu: f64,
    pub dissimilarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    pub points: Vec<ScatterPoint>,
    /// `None` when either coordinate has zero variance or fewer than two points exist.
    pub r: Option<f64>,
}

impl CorrelationReport {
    pub fn scatter_tsv(&self) -> String {
        let mut out = String::from("sentence_id\tbleu\tdissimilarity\n");
        for p in &self.points {
            out.push_str(&format!("{}\t{:.4}\t{}\n", p.sentence_id, p.bleu, format_sig9(p.dissimilarity)));
        }
        out
    }
}

/// Sentence BLEU of each zero-shot output against the dissimilarity between its
/// curve and the trained-route curve for the same tuple and target language.
pub fn bleu_vs_dissimilarity(
    zero_shot: &[TraceRecord],
    trained: &[TraceRecord],
    kind: Distance,
) -> Result<CorrelationReport, Error> {
    let mut points = Vec::with_capacity(zero_shot.len());
    let mut unmatched = Vec::new();
    for z in zero_shot {
        let zm = z.meta();
        let partner = trained.iter().find(|t| {
            let tm = t.meta();
            tm.triple_id == zm.triple_id && tm.target_lang == zm.target_lang
        });
        match partner {
            None => unmatched.push(format!("{}:{}-{}", zm.triple_id, zm.source_lang, zm.target_lang)),
            Some(t) => {
                let cand: Vec<&str> = z.output.split_whitespace().collect();
                let reference: Vec<&str> = z.reference.split_whitespace().collect();
                points.push(ScatterPoint {
                    sentence_id: zm.sentence_id,
                    bleu: sentence_bleu(&cand, &reference),
                    dissimilarity: dissimilarity_with(&z.curve, &t.curve, kind)?,
                });
            }
        }
    }
    if !unmatched.is_empty() {
        return Err(Error::Unmatched(unmatched));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.bleu).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.dissimilarity).collect();
    let r = pearson(&xs, &ys).ok();
    Ok(CorrelationReport { points, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(points: &[&[f64]]) -> EmbeddingCurve {
        EmbeddingCurve::new(points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    #[test]
    fn curve_eval_examples() {
        let c = curve(&[&[0.0, 0.0], &[2.0, 2.0]]);
        assert_eq!(curve_eval(&c, 0.5).unwrap(), vec![1.0, 1.0]);
        let c = curve(&[&[0.0], &[1.0], &[4.0]]);
        assert_eq!(curve_eval(&c, 0.75).unwrap(), vec![2.5]);
        for i in 0..3 {
            assert_eq!(curve_eval(&c, i as f64 / 2.0).unwrap(), c.points()[i]);
        }
        assert!(matches!(curve_eval(&c, 1.5), Err(Error::OutOfUnitInterval(_))));
        let single = curve(&[&[3.0, 4.0]]);
        assert_eq!(curve_eval(&single, 0.3).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn dissimilarity_fixture_is_one_third() {
        let a = curve(&[&[0.0], &[2.0]]);
        let b = curve(&[&[0.0], &[0.0], &[2.0]]);
        assert_eq!(dissimilarity(&a, &b).unwrap(), 1.0 / 3.0);
        assert_eq!(dissimilarity(&a, &a).unwrap(), 0.0);
        let c = curve(&[&[0.0, 1.0]]);
        assert!(matches!(dissimilarity(&a, &c), Err(Error::DimensionMismatch(1, 2))));
    }

    #[test]
    fn cosine_distance_option() {
        let a = curve(&[&[1.0, 0.0]]);
        let b = curve(&[&[0.0, 1.0]]);
        assert!((dissimilarity_with(&a, &b, Distance::Cosine).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(dissimilarity_with(&a, &a, Distance::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&xs, &[2.0, 1.0, 4.0, 3.0]).unwrap() - 0.6).abs() < 1e-12);
        assert!((pearson(&xs, &xs.map(|x| 2.0 * x + 1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &xs.map(|x| -x)).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&xs, &[1.0; 4]), Err(Error::ZeroVariance)));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::TooFewPoints(1))));
    }

    #[test]
    fn sentence_bleu_properties() {
        let s = ["a", "b", "c"];
        assert!((sentence_bleu(&s, &s) - 100.0).abs() < 1e-9);
        assert_eq!(sentence_bleu(&["x"], &s), 0.0);
        let partial = sentence_bleu(&["a", "b", "x"], &s);
        assert!(partial > 0.0 && partial < 100.0);
        assert_eq!(sentence_bleu::<&str>(&[], &s), 0.0);
    }

    #[test]
    fn sig9_round_trips() {
        for x in [0.0, 1.0, -0.123456789123, 12345.678901234, 3.2e-7, -7.5e12, 1e30] {
            let back: f64 = format_sig9(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-8 * x.abs(), "{x} -> {}", format_sig9(x));
        }
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = |i| CurveMeta {
            triple_id: 0,
            sentence_id: i,
            source_lang: LangCode::new("a").unwrap(),
            target_lang: LangCode::new("b").unwrap(),
            zero_shot: i == 1,
        };
        let c1 = curve(&[&[0.1, -2.5], &[1.0 / 3.0, 1e-5]]).with_meta(meta(0));
        let c2 = curve(&[&[7.0, 8.0]]).with_meta(meta(1));
        let (vp, mp) = export_projector_tsv(&[c1.clone(), c2.clone()], dir.path()).unwrap();
        let rows = parse_vectors_tsv(&fs::read_to_string(vp).unwrap()).unwrap();
        let meta_text = fs::read_to_string(mp).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(meta_text.lines().count(), 4);
        assert!(meta_text.lines().nth(3).unwrap().ends_with("true"));
        for (row, orig) in rows.iter().zip(c1.points().iter().chain(c2.points())) {
            for (a, b) in row.iter().zip(orig) {
                assert!((a - b).abs() <= 5e-9 * b.abs());
            }
        }
        assert!(matches!(export_projector_tsv(&[], dir.path()), Err(Error::NoCurves)));
    }

    fn record(triple: usize, src: &str, tgt: &str, points: &[&[f64]], out: &str, reference: &str) -> TraceRecord {
        TraceRecord {
            curve: curve(points).with_meta(CurveMeta {
                triple_id: triple,
                sentence_id: triple,
                source_lang: LangCode::new(src).unwrap(),
                target_lang: LangCode::new(tgt).unwrap(),
                zero_shot: false,
            }),
            source: String::new(),
            output: out.into(),
            reference: reference.into(),
        }
    }

    #[test]
    fn correlation_report() {
        let z = vec![
            record(0, "a", "b", &[&[0.0], &[1.0]], "x y z", "x y z"),
            record(1, "a", "b", &[&[0.0], &[5.0]], "q", "x y z"),
        ];
        let t = vec![
            record(0, "e", "b", &[&[0.0], &[1.0]], "x y z", "x y z"),
            record(1, "e", "b", &[&[0.0], &[1.0]], "x y z", "x y z"),
        ];
        let rep = bleu_vs_dissimilarity(&z, &t, Distance::Euclidean).unwrap();
        assert_eq!((rep.points[0].bleu.round(), rep.points[0].dissimilarity), (100.0, 0.0));
        assert!(rep.r.unwrap() < 0.0);
        assert!(rep.scatter_tsv().starts_with("sentence_id\tbleu\tdissimilarity\n"));
        let err = bleu_vs_dissimilarity(&z, &t[..1], Distance::Euclidean).unwrap_err();
        assert!(matches!(err, Error::Unmatched(ids) if ids == vec!["1:a-b".to_string()]));
    }

    #[test]
    fn traces_cover_every_decode_step() {
        use crate::model::{ModelConfig, ModelParams};
        use crate::synthetic::{make_languages, LexiconStyle, WordOrder};
        let codes: Vec<LangCode> = ["a", "e", "b"].iter().map(|c| LangCode::new(c).unwrap()).collect();
        let cfg = SyntheticConfig { concept_vocab: 20, ..Default::default() };
        let specs = make_languages(&codes, &[WordOrder::Identity; 3], 20, LexiconStyle::Cognate, 1).unwrap();
        let tuples = make_tuples(&specs, &codes, 3, &cfg, 5).unwrap();
        assert_eq!(tuples.len(), 3);
        let lines: Vec<String> = tuples.iter().flat_map(|t| t.sentences.iter().map(|(_, s)| s.clone())).collect();
        let vocab = crate::train_vocabulary(&[crate::WeightedCorpus { lines: &lines, weight: 1.0 }], 60, &codes).unwrap();
        let mc = ModelConfig { embed_dim: 4, hidden_dim: 6, attention_dim: 3, max_decode_len: 6, ..ModelConfig::new(vocab.len()) };
        let params = ModelParams::<f32>::init(&mc, &mut numcore::Rng::new(2)).unwrap();
        let tr = Translator::new(&params, &vocab).unwrap();
        let trained = [Direction::new(codes[0].clone(), codes[1].clone())];
        let traces = build_triples_and_traces(&tr, &tuples, &trained).unwrap();
        assert_eq!(traces.records.len(), 3 * 6);
        assert_eq!(traces.warnings.len(), 5);
        assert_eq!(traces.records.iter().filter(|r| !r.meta().zero_shot).count(), 3);
        for r in &traces.records {
            assert_eq!(r.curve.dim(), 6);
            assert!(r.curve.len() <= 6);
        }
        let dir = tempfile::tempdir().unwrap();
        let curves: Vec<EmbeddingCurve> = traces.records.iter().map(|r| r.curve.clone()).collect();
        let (vp, _) = export_projector_tsv(&curves, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(vp).unwrap().lines().count(), traces.total_steps());
    }

    fn arb_curve(d: usize) -> impl Strategy<Value = EmbeddingCurve> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), 1..7)
            .prop_map(|p| EmbeddingCurve::new(p).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn dissimilarity_axioms((a, b) in (1usize..5).prop_flat_map(|d| (arb_curve(d), arb_curve(d))), s in 0.0f64..5.0) {
            let ab = dissimilarity(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(dissimilarity(&a, &a).unwrap(), 0.0);
            prop_assert!((ab - dissimilarity(&b, &a).unwrap()).abs() <= 1e-12 * ab.max(1.0));
            let scale = |c: &EmbeddingCurve| EmbeddingCurve::new(
                c.points().iter().map(|p| p.iter().map(|v| v * s).collect()).collect()).unwrap();
            let scaled = dissimilarity(&scale(&a), &scale(&b)).unwrap();
            prop_assert!((scaled - s * ab).abs() <= 1e-9 * (1.0 + s * ab));
        }
    }
}
