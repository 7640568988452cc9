//! Corpus BLEU, language identification and route comparisons.

use std::collections::HashMap;
use std::fmt;

use crate::corpus::ExamplePair;
use crate::model::{TargetSpec, Translator};
use crate::synthetic::SyntheticLanguageSpec;
use crate::{Direction, Error, LangCode};

/// Counts behind a corpus BLEU score.
#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    /// Clipped n-gram matches for n = 1..4.
    pub correct: [u64; 4],
    /// Candidate n-gram counts for n = 1..4.
    pub total: [u64; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
    pub brevity_penalty: f64,
    /// In [0, 100].
    pub bleu: f64,
}

impl BleuReport {
    pub fn precisions(&self) -> [f64; 4] {
        std::array::from_fn(|i| if self.total[i] == 0 { 0.0 } else { self.correct[i] as f64 / self.total[i] as f64 })
    }

    pub fn ratio(&self) -> f64 {
        if self.ref_len == 0 {
            0.0
        } else {
            self.hyp_len as f64 / self.ref_len as f64
        }
    }

    /// The one-line summary printed by the `multi-bleu.pl` script.
    pub fn summary(&self) -> String {
        let p = self.precisions();
        format!(
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.bleu,
            100.0 * p[0],
            100.0 * p[1],
            100.0 * p[2],
            100.0 * p[3],
            self.brevity_penalty,
            self.ratio(),
            self.hyp_len,
            self.ref_len
        )
    }
}

fn ngram_counts<S: AsRef<str>>(words: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut out = HashMap::new();
    if words.len() >= n {
        for w in words.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// `ln p`, with the script's stand-in for `ln 0`.
fn score_log(p: f64) -> f64 {
    if p == 0.0 {
        -9_999_999_999.0
    } else {
        p.ln()
    }
}

/// Corpus BLEU against several references per candidate: clipped counts use the
/// per-n-gram maximum over references, and the reference length is the one
/// closest to the candidate (the shorter on ties).
pub fn bleu_multi<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<Vec<S>>]) -> Result<BleuReport, Error> {
    if candidates.len() != references.len() {
        return Err(Error::LengthMismatch(candidates.len(), references.len()));
    }
    if candidates.is_empty() {
        return Err(Error::LengthMismatch(0, 0));
    }
    let mut correct = [0u64; 4];
    let mut total = [0u64; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (cand, refs) in candidates.iter().zip(references) {
        let len = cand.len();
        let mut closest: Option<(usize, usize)> = None;
        for r in refs {
            let diff = len.abs_diff(r.len());
            closest = match closest {
                Some((d, l)) if d < diff || (d == diff && l <= r.len()) => Some((d, l)),
                _ => Some((diff, r.len())),
            };
        }
        hyp_len += len;
        // The script falls back to 9999 when a candidate has no reference at all.
        ref_len += closest.map_or(9999, |c| c.1);
        for n in 1..=4 {
            let mut max_ref: HashMap<Vec<&str>, u64> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let slot = max_ref.entry(g).or_insert(0);
                    *slot = (*slot).max(c);
                }
            }
            for (g, c) in ngram_counts(cand, n) {
                total[n - 1] += c;
                if let Some(&r) = max_ref.get(&g) {
                    correct[n - 1] += c.min(r);
                }
            }
        }
    }
    let mut report = BleuReport { correct, total, hyp_len, ref_len, brevity_penalty: 1.0, bleu: 0.0 };
    if ref_len == 0 || hyp_len == 0 {
        report.brevity_penalty = if hyp_len == 0 && ref_len > 0 { 0.0 } else { 1.0 };
        return Ok(report);
    }
    if hyp_len < ref_len {
        report.brevity_penalty = (1.0 - ref_len as f64 / hyp_len as f64).exp();
    }
    let logs: f64 = report.precisions().iter().map(|&p| score_log(p)).sum();
    report.bleu = 100.0 * report.brevity_penalty * (logs / 4.0).exp();
    Ok(report)
}

/// Corpus BLEU with one reference per candidate. Inputs are pre-tokenized.
pub fn bleu<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<BleuReport, Error> {
    if candidates.len() != references.len() {
        return Err(Error::LengthMismatch(candidates.len(), references.len()));
    }
    let refs: Vec<Vec<&[S]>> = references.iter().map(|r| vec![r.as_slice()]).collect();
    let refs: Vec<Vec<Vec<&str>>> =
        refs.iter().map(|rs| rs.iter().map(|r| r.iter().map(AsRef::as_ref).collect()).collect()).collect();
    let cands: Vec<Vec<&str>> = candidates.iter().map(|c| c.iter().map(AsRef::as_ref).collect()).collect();
    bleu_multi(&cands, &refs)
}

/// BLEU over whitespace-tokenized lines.
pub fn corpus_bleu(candidates: &[String], references: &[String]) -> Result<BleuReport, Error> {
    let split = |v: &[String]| -> Vec<Vec<String>> {
        v.iter().map(|s| s.split_whitespace().map(str::to_string).collect()).collect()
    };
    bleu(&split(candidates), &split(references))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LangLabel {
    Lang(LangCode),
    Mixed,
    Unknown,
}

impl fmt::Display for LangLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LangLabel::Lang(c) => write!(f, "{c}"),
            LangLabel::Mixed => f.write_str("mixed"),
            LangLabel::Unknown => f.write_str("unknown"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageId {
    pub label: LangLabel,
    /// Share of tokens owned by each language that owns at least one.
    pub fractions: Vec<(LangCode, f64)>,
}

/// Word-ownership lookup over synthetic lexicons.
pub struct LanguageIdentifier {
    codes: Vec<LangCode>,
    owner: HashMap<String, usize>,
}

/// Share above which one language is declared the output language.
pub const DOMINANT_SHARE: f64 = 0.8;
/// Share each of two languages needs for a "mixed" verdict.
pub const MIXED_SHARE: f64 = 0.2;

impl LanguageIdentifier {
    pub fn new(specs: &[SyntheticLanguageSpec]) -> Self {
        let mut owner = HashMap::new();
        for (i, s) in specs.iter().enumerate() {
            for w in &s.lexicon {
                owner.insert(w.clone(), i);
            }
        }
        LanguageIdentifier { codes: specs.iter().map(|s| s.code.clone()).collect(), owner }
    }

    /// Rules, in order: more than half the tokens unowned gives unknown; one
    /// language above 80% wins; two languages at 20% or more give mixed;
    /// anything else is unknown.
    pub fn identify(&self, text: &str) -> LanguageId {
        let mut counts = vec![0usize; self.codes.len()];
        let mut n = 0usize;
        for w in text.split_whitespace() {
            n += 1;
            if let Some(&i) = self.owner.get(w) {
                counts[i] += 1;
            }
        }
        let fractions: Vec<(LangCode, f64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (self.codes[i].clone(), c as f64 / n as f64))
            .collect();
        let owned: usize = counts.iter().sum();
        let label = if n == 0 || (n - owned) * 2 > n {
            LangLabel::Unknown
        } else if let Some((code, _)) = fractions.iter().find(|(_, f)| *f > DOMINANT_SHARE) {
            LangLabel::Lang(code.clone())
        } else if fractions.iter().filter(|(_, f)| *f >= MIXED_SHARE).count() >= 2 {
            LangLabel::Mixed
        } else {
            LangLabel::Unknown
        };
        LanguageId { label, fractions }
    }

    pub fn is_language(&self, text: &str, lang: &LangCode) -> bool {
        self.identify(text).label == LangLabel::Lang(lang.clone())
    }
}

pub fn language_id(text: &str, specs: &[SyntheticLanguageSpec]) -> LanguageId {
    LanguageIdentifier::new(specs).identify(text)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionScore {
    pub direction: Direction,
    pub bleu: BleuReport,
    pub lang_id_accuracy: f64,
    pub n: usize,
    pub outputs: Vec<String>,
}

/// Translates `sources` into `target`: batched greedy decoding, or one beam search per sentence.
pub fn translate_all(translator: &Translator<'_>, sources: &[String], target: &TargetSpec) -> Result<Vec<String>, Error> {
    if translator.params().config.beam_width <= 1 {
        Ok(translator.translate_batch(sources, target)?.into_iter().map(|t| t.text).collect())
    } else {
        sources.iter().map(|s| translator.translate(s, target).map(|t| t.text)).collect()
    }
}

fn score_outputs(
    direction: Direction,
    outputs: Vec<String>,
    pairs: &[ExamplePair],
    ident: &LanguageIdentifier,
) -> Result<DirectionScore, Error> {
    let refs: Vec<String> = pairs.iter().map(|p| p.target.clone()).collect();
    let bleu = corpus_bleu(&outputs, &refs)?;
    let hits = outputs.iter().filter(|o| ident.is_language(o, &direction.target)).count();
    Ok(DirectionScore { lang_id_accuracy: hits as f64 / pairs.len() as f64, n: pairs.len(), direction, bleu, outputs })
}

/// BLEU and language-ID accuracy of `translator` on one direction's test pairs.
pub fn evaluate_direction(
    translator: &Translator<'_>,
    pairs: &[ExamplePair],
    ident: &LanguageIdentifier,
) -> Result<DirectionScore, Error> {
    let first = pairs.first().ok_or_else(|| Error::EmptyDirection("test set".into()))?;
    let direction = first.direction();
    let sources: Vec<String> = pairs.iter().map(|p| p.source.clone()).collect();
    let outputs = translate_all(translator, &sources, &TargetSpec::Lang(direction.target.clone()))?;
    score_outputs(direction, outputs, pairs, ident)
}

pub fn scores_tsv(scores: &[DirectionScore]) -> String {
    let mut out = String::from("direction\tbleu\tlang_id_accuracy\tn\n");
    for s in scores {
        out.push_str(&format!("{}\t{:.2}\t{:.4}\t{}\n", s.direction, s.bleu.bleu, s.lang_id_accuracy, s.n));
    }
    out
}

/// Fixed-width table with `Single`, `Multi` and `Diff` columns.
pub fn comparison_table(rows: &[(String, f64, f64)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(9);
    let mut out = format!("{:<width$}  {:>7}  {:>7}  {:>7}\n", "Direction", "Single", "Multi", "Diff");
    for (name, single, multi) in rows {
        out.push_str(&format!("{name:<width$}  {single:>7.2}  {multi:>7.2}  {:>+7.2}\n", multi - single));
    }
    out
}

pub const ROUTE_DIRECT: &str = "direct";
pub const ROUTE_BRIDGED: &str = "bridged";
pub const ROUTE_ZERO_SHOT: &str = "zero-shot";
pub const ROUTE_INCREMENTAL: &str = "incremental";
pub const ROUTE_COPY: &str = "copy-source";

#[derive(Clone, Debug, PartialEq)]
pub struct RouteScore {
    pub route: String,
    pub bleu: BleuReport,
    pub lang_id_accuracy: f64,
    pub decode_passes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroShotReport {
    pub direction: Direction,
    pub pivot: LangCode,
    pub n: usize,
    pub routes: Vec<RouteScore>,
}

impl ZeroShotReport {
    pub fn route(&self, name: &str) -> Option<&RouteScore> {
        self.routes.iter().find(|r| r.route == name)
    }

    pub fn bleu(&self, name: &str) -> Option<f64> {
        self.route(name).map(|r| r.bleu.bleu)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("direction\troute\tbleu\tlang_id_accuracy\tdecode_passes\tn\n");
        for r in &self.routes {
            out.push_str(&format!(
                "{}\t{}\t{:.2}\t{:.4}\t{}\t{}\n",
                self.direction, r.route, r.bleu.bleu, r.lang_id_accuracy, r.decode_passes, self.n
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{} (pivot {}, {} sentences)\n", self.direction, self.pivot, self.n);
        out.push_str(&format!("{:<12}  {:>7}  {:>7}  {:>7}\n", "Route", "BLEU", "LangID", "Passes"));
        for r in &self.routes {
            out.push_str(&format!(
                "{:<12}  {:>7.2}  {:>7.3}  {:>7}\n",
                r.route, r.bleu.bleu, r.lang_id_accuracy, r.decode_passes
            ));
        }
        out
    }
}

/// Models compared on one zero-shot direction.
pub struct ZeroShotModels<'t, 'a> {
    /// Trained without the evaluated direction.
    pub multilingual: &'t Translator<'a>,
    /// Directions in the multilingual model's training data.
    pub trained: &'t [Direction],
    /// Trained on the evaluated direction.
    pub direct: Option<&'t Translator<'a>>,
    /// The multilingual model after incremental training on the direction.
    pub incremental: Option<&'t Translator<'a>>,
}

/// Evaluates every available route on the same test pairs.
pub fn zero_shot_report(
    models: &ZeroShotModels<'_, '_>,
    pivot: &LangCode,
    test: &[ExamplePair],
    ident: &LanguageIdentifier,
) -> Result<ZeroShotReport, Error> {
    let first = test.first().ok_or_else(|| Error::EmptyDirection("test set".into()))?;
    let direction = first.direction();
    if models.trained.contains(&direction) {
        return Err(Error::ZeroShot(format!("direction {direction} was seen in training")));
    }
    let into_pivot = Direction::new(direction.source.clone(), pivot.clone());
    let from_pivot = Direction::new(pivot.clone(), direction.target.clone());
    for leg in [&into_pivot, &from_pivot] {
        if !models.trained.contains(leg) {
            return Err(Error::ZeroShot(format!("pivot leg {leg} was not trained")));
        }
    }
    let sources: Vec<String> = test.iter().map(|p| p.source.clone()).collect();
    let target = TargetSpec::Lang(direction.target.clone());
    let mut routes = Vec::new();
    let mut push = |name: &str, outputs: Vec<String>, passes: usize| -> Result<(), Error> {
        let s = score_outputs(direction.clone(), outputs, test, ident)?;
        routes.push(RouteScore {
            route: name.to_string(),
            bleu: s.bleu,
            lang_id_accuracy: s.lang_id_accuracy,
            decode_passes: passes,
        });
        Ok(())
    };

    if let Some(direct) = models.direct {
        let before = direct.decode_passes();
        let out = translate_all(direct, &sources, &target)?;
        push(ROUTE_DIRECT, out, direct.decode_passes() - before)?;
    }

    let ml = models.multilingual;
    let before = ml.decode_passes();
    let middle = translate_all(ml, &sources, &TargetSpec::Lang(pivot.clone()))?;
    let out = translate_all(ml, &middle, &target)?;
    push(ROUTE_BRIDGED, out, ml.decode_passes() - before)?;

    let before = ml.decode_passes();
    let out = translate_all(ml, &sources, &target)?;
    push(ROUTE_ZERO_SHOT, out, ml.decode_passes() - before)?;

    if let Some(inc) = models.incremental {
        let before = inc.decode_passes();
        let out = translate_all(inc, &sources, &target)?;
        push(ROUTE_INCREMENTAL, out, inc.decode_passes() - before)?;
    }

    push(ROUTE_COPY, sources, 0)?;
    Ok(ZeroShotReport { direction, pivot: pivot.clone(), n: test.len(), routes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identity_is_exactly_100() {
        let c = vec![toks("a b c d e"), toks("x y z w")];
        let r = bleu(&c, &c).unwrap();
        assert_eq!(r.bleu, 100.0);
        assert_eq!(format!("{:.2}", r.bleu), "100.00");
    }

    #[test]
    fn classic_clipping() {
        let r = bleu(&[toks("the the the the the the the")], &[toks("the cat is on the mat")]).unwrap();
        assert_eq!((r.correct[0], r.total[0]), (2, 7));
        assert_eq!(r.bleu, 0.0);
    }

    #[test]
    fn short_candidate_scores_zero() {
        let r = bleu(&[toks("the cat")], &[toks("the cat is here")]).unwrap();
        assert_eq!(r.precisions()[..2], [1.0, 1.0]);
        assert_eq!(r.bleu, 0.0);
        assert!((r.brevity_penalty - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_score() {
        // p = 5/6, 3/5, 2/4, 1/3; equal lengths so BP = 1.
        let r = bleu(&[toks("a b c d x f")], &[toks("a b c d e f")]).unwrap();
        let direct = 100.0 * ((5.0f64 / 6.0) * 0.6 * 0.5 * (1.0 / 3.0)).powf(0.25);
        assert!((r.bleu - direct).abs() < 1e-9, "{} vs {direct}", r.bleu);
    }

    #[test]
    fn errors_and_empty_candidates() {
        assert!(matches!(bleu(&[toks("a")], &[]), Err(Error::LengthMismatch(1, 0))));
        let r = bleu(&[toks("")], &[toks("a b")]).unwrap();
        assert_eq!((r.hyp_len, r.bleu), (0, 0.0));
    }

    #[test]
    fn summary_line_format() {
        let r = bleu(&[toks("the the the the the the the")], &[toks("the cat is on the mat")]).unwrap();
        assert_eq!(r.summary(), "BLEU = 0.00, 28.6/0.0/0.0/0.0 (BP=1.000, ratio=1.167, hyp_len=7, ref_len=6)");
    }

    #[test]
    fn corrupting_a_token_never_helps() {
        let refs: Vec<Vec<String>> = ["a b c d e f g", "h i j k l", "m n o p q r"].iter().map(|s| toks(s)).collect();
        let base = bleu(&refs, &refs).unwrap().bleu;
        for s in 0..refs.len() {
            for i in 0..refs[s].len() {
                let mut c = refs.clone();
                c[s][i] = "zz".into();
                assert!(bleu(&c, &refs).unwrap().bleu <= base);
            }
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            pairs in prop::collection::vec(
                (prop::collection::vec(0u8..6, 0..9), prop::collection::vec(0u8..6, 1..9)), 1..8),
            rot in 0usize..8,
        ) {
            let to = |v: &Vec<u8>| v.iter().map(|x| format!("w{x}")).collect::<Vec<_>>();
            let c: Vec<Vec<String>> = pairs.iter().map(|p| to(&p.0)).collect();
            let r: Vec<Vec<String>> = pairs.iter().map(|p| to(&p.1)).collect();
            let k = rot % c.len();
            let (mut c2, mut r2) = (c.clone(), r.clone());
            c2.rotate_left(k);
            r2.rotate_left(k);
            let a = bleu(&c, &r).unwrap();
            let b = bleu(&c2, &r2).unwrap();
            prop_assert_eq!(a.correct, b.correct);
            prop_assert_eq!(a.bleu, b.bleu);
            prop_assert!((0.0..=100.0).contains(&a.bleu));
        }
    }

    fn specs() -> Vec<SyntheticLanguageSpec> {
        use crate::synthetic::WordOrder;
        let mk = |code: &str, words: &[&str]| SyntheticLanguageSpec {
            code: LangCode::new(code).unwrap(),
            lexicon: words.iter().map(|s| s.to_string()).collect(),
            order: WordOrder::Identity,
        };
        vec![mk("a", &["ax", "bx", "cx"]), mk("b", &["aq", "bq", "cq"])]
    }

    #[test]
    fn language_id_rules() {
        let id = LanguageIdentifier::new(&specs());
        let b = LangCode::new("b").unwrap();
        assert_eq!(id.identify("aq bq cq aq"), LanguageId { label: LangLabel::Lang(b.clone()), fractions: vec![(b, 1.0)] });
        assert_eq!(id.identify("ax bx aq bq").label, LangLabel::Mixed);
        assert_eq!(id.identify("").label, LangLabel::Unknown);
        assert_eq!(id.identify("zz yy ax").label, LangLabel::Unknown);
        // 5 of 6 owned by a: above 80%.
        assert_eq!(id.identify("ax bx cx ax bx aq").label.to_string(), "a");
        // 3 a, 1 b, 1 unowned: 60% is not dominant and b has only 20%... which still counts.
        assert_eq!(id.identify("ax bx cx aq zz").label, LangLabel::Mixed);
        assert_eq!(id.identify("ax bx cx cx aq zz zz").label, LangLabel::Unknown);
    }

    #[test]
    fn comparison_table_layout() {
        let t = comparison_table(&[("a-b".into(), 30.0, 31.5)]);
        assert!(t.lines().next().unwrap().contains("Single"));
        assert!(t.contains("+1.50"));
    }
}
