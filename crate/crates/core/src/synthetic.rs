//! Synthetic language families with exactly known translations.
//!
//! Every language renders a sequence of concept ids through its own lexicon
//! and word-order rule, so any two languages are perfectly parallel and the
//! language of any output token is known.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use numcore::Rng;

use crate::corpus::{write_corpus, ExamplePair};
use crate::{Direction, Error, LangCode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WordOrder {
    Identity,
    Reverse,
    /// First word moves to the end.
    Rotate1,
    /// Swaps positions (0,1), (2,3), ...
    SwapAdjacent,
}

impl WordOrder {
    pub const ALL: [WordOrder; 4] = [WordOrder::Identity, WordOrder::Reverse, WordOrder::Rotate1, WordOrder::SwapAdjacent];

    pub fn apply<T: Clone>(self, items: &[T]) -> Vec<T> {
        let mut v = items.to_vec();
        match self {
            WordOrder::Identity => {}
            WordOrder::Reverse => v.reverse(),
            WordOrder::Rotate1 => {
                if !v.is_empty() {
                    v.rotate_left(1)
                }
            }
            WordOrder::SwapAdjacent => {
                for pair in v.chunks_mut(2) {
                    pair.reverse();
                }
            }
        }
        v
    }

    pub fn invert<T: Clone>(self, items: &[T]) -> Vec<T> {
        match self {
            WordOrder::Rotate1 => {
                let mut v = items.to_vec();
                if !v.is_empty() {
                    v.rotate_right(1);
                }
                v
            }
            // the remaining rules are involutions
            other => other.apply(items),
        }
    }
}

impl fmt::Display for WordOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WordOrder::Identity => "identity",
            WordOrder::Reverse => "reverse",
            WordOrder::Rotate1 => "rotate1",
            WordOrder::SwapAdjacent => "swap_adjacent",
        })
    }
}

impl FromStr for WordOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        WordOrder::ALL
            .into_iter()
            .find(|o| o.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown word order {s:?}")))
    }
}

/// How lexicons of different languages relate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LexiconStyle {
    /// Shared stems with a language-specific ending, like a family of related
    /// languages; words still never coincide across languages.
    Cognate,
    /// Unrelated random words per language.
    Independent,
}

impl fmt::Display for LexiconStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LexiconStyle::Cognate => "cognate",
            LexiconStyle::Independent => "independent",
        })
    }
}

impl FromStr for LexiconStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "cognate" => Ok(LexiconStyle::Cognate),
            "independent" => Ok(LexiconStyle::Independent),
            other => Err(Error::Config(format!("unknown lexicon style {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLanguageSpec {
    pub code: LangCode,
    /// Surface word for each concept id.
    pub lexicon: Vec<String>,
    pub order: WordOrder,
}

impl SyntheticLanguageSpec {
    pub fn render(&self, concepts: &[usize]) -> String {
        let words: Vec<&str> = concepts.iter().map(|&c| self.lexicon[c].as_str()).collect();
        self.order.apply(&words).join(" ")
    }

    /// Concept sequence of a sentence in this language, if every word belongs to it.
    pub fn parse(&self, text: &str) -> Option<Vec<usize>> {
        let index: HashMap<&str, usize> = self.lexicon.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let ids: Option<Vec<usize>> = text.split_whitespace().map(|w| index.get(w).copied()).collect();
        ids.map(|v| self.order.invert(&v))
    }
}

const CONSONANTS: &[char] = &['p', 't', 'k', 'm', 'n', 's', 'l', 'r', 'd', 'g', 'b', 'v'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
// endings never occur inside stems
const ENDINGS: &[char] = &['x', 'q', 'z', 'j', 'w', 'y', 'h', 'c', 'f'];

fn random_stem(rng: &mut Rng, syllables: usize) -> String {
    (0..syllables)
        .flat_map(|_| [CONSONANTS[rng.below(CONSONANTS.len())], VOWELS[rng.below(VOWELS.len())]])
        .collect()
}

fn unique_stems(rng: &mut Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut syllables = 2;
    let mut misses = 0;
    while out.len() < n {
        let s = random_stem(rng, syllables);
        if taken.insert(s.clone()) {
            out.push(s);
            misses = 0;
        } else {
            misses += 1;
            if misses > 50 {
                syllables += 1;
                misses = 0;
            }
        }
    }
    out
}

/// Generates one language per code, with `orders[i]` as the word order of language `i`.
pub fn make_languages(
    codes: &[LangCode],
    orders: &[WordOrder],
    concepts: usize,
    style: LexiconStyle,
    seed: u64,
) -> Result<Vec<SyntheticLanguageSpec>, Error> {
    if codes.len() != orders.len() {
        return Err(Error::Config("one word order per language".into()));
    }
    if codes.len() > ENDINGS.len() {
        return Err(Error::Config(format!("at most {} synthetic languages", ENDINGS.len())));
    }
    if concepts < 20 {
        return Err(Error::Config("concept vocabulary must be at least 20".into()));
    }
    let mut rng = Rng::derive(seed, 0x1e71c0);
    let mut taken = BTreeSet::new();
    let shared = unique_stems(&mut rng, concepts, &mut taken);
    Ok(codes
        .iter()
        .zip(orders)
        .enumerate()
        .map(|(i, (code, &order))| {
            let lexicon = match style {
                LexiconStyle::Cognate => shared.iter().map(|s| format!("{s}{}", ENDINGS[i])).collect(),
                LexiconStyle::Independent => unique_stems(&mut rng, concepts, &mut taken),
            };
            SyntheticLanguageSpec { code: code.clone(), lexicon, order }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub train_per_direction: usize,
    pub dev_per_direction: usize,
    pub test_per_direction: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub concept_vocab: usize,
    pub zipf_exponent: f64,
    pub style: LexiconStyle,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_per_direction: 5000,
            dev_per_direction: 100,
            test_per_direction: 200,
            min_len: 3,
            max_len: 12,
            concept_vocab: 200,
            zipf_exponent: 1.1,
            style: LexiconStyle::Cognate,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Split membership is a function of the concept sequence alone, so the
/// splits are disjoint across every direction.
pub fn split_of(concepts: &[usize]) -> Split {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &c in concepts {
        for b in (c as u32).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    match h % 20 {
        0 => Split::Test,
        1 => Split::Dev,
        _ => Split::Train,
    }
}

pub fn sample_concepts(rng: &mut Rng, cfg: &SyntheticConfig) -> Vec<usize> {
    let len = rng.range_inclusive(cfg.min_len, cfg.max_len);
    (0..len).map(|_| rng.zipf(cfg.concept_vocab, cfg.zipf_exponent)).collect()
}

/// Draws concept sequences until `want` of them fall in `split`.
pub fn sample_split(rng: &mut Rng, cfg: &SyntheticConfig, split: Split, want: usize) -> Result<Vec<Vec<usize>>, Error> {
    let mut out = Vec::with_capacity(want);
    let budget = 1000 * (want + 1);
    let mut tries = 0;
    while out.len() < want {
        tries += 1;
        if tries > budget {
            return Err(Error::Config(format!("cannot fill the {} split; widen the concept space", split.name())));
        }
        let c = sample_concepts(rng, cfg);
        if split_of(&c) == split {
            out.push(c);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<ExamplePair>,
    pub dev: Vec<ExamplePair>,
    pub test: Vec<ExamplePair>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[ExamplePair] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

fn find_spec<'a>(specs: &'a [SyntheticLanguageSpec], code: &LangCode) -> Result<&'a SyntheticLanguageSpec, Error> {
    specs.iter().find(|s| &s.code == code).ok_or_else(|| Error::UnregisteredLanguage {
        code: code.to_string(),
        registered: specs.iter().map(|s| s.code.as_str()).collect::<Vec<_>>().join(", "),
    })
}

pub fn render_pair(specs: &[SyntheticLanguageSpec], d: &Direction, concepts: &[usize]) -> Result<ExamplePair, Error> {
    let src = find_spec(specs, &d.source)?;
    let tgt = find_spec(specs, &d.target)?;
    Ok(ExamplePair {
        source: src.render(concepts),
        target: tgt.render(concepts),
        source_lang: d.source.clone(),
        target_lang: d.target.clone(),
    })
}

/// Parallel data for each direction. Each direction draws its own concept sequences.
pub fn gen_synthetic_corpus(
    specs: &[SyntheticLanguageSpec],
    directions: &[Direction],
    cfg: &SyntheticConfig,
) -> Result<BTreeMap<Direction, Splits>, Error> {
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config("length range must satisfy 1 <= min <= max".into()));
    }
    if specs.iter().any(|s| s.lexicon.len() < cfg.concept_vocab) {
        return Err(Error::Config("lexicon smaller than the concept vocabulary".into()));
    }
    let mut out = BTreeMap::new();
    for d in directions {
        find_spec(specs, &d.source)?;
        find_spec(specs, &d.target)?;
        let label = d.to_string().bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
        let mut rng = Rng::derive(cfg.seed, label);
        let mut splits = Splits::default();
        for (split, want) in [
            (Split::Train, cfg.train_per_direction),
            (Split::Dev, cfg.dev_per_direction),
            (Split::Test, cfg.test_per_direction),
        ] {
            let pairs = sample_split(&mut rng, cfg, split, want)?
                .iter()
                .map(|c| render_pair(specs, d, c))
                .collect::<Result<Vec<_>, _>>()?;
            match split {
                Split::Train => splits.train = pairs,
                Split::Dev => splits.dev = pairs,
                Split::Test => splits.test = pairs,
            }
        }
        out.insert(d.clone(), splits);
    }
    Ok(out)
}

/// Plain `key: value` manifest describing a generated family.
pub fn manifest_string(specs: &[SyntheticLanguageSpec], directions: &[Direction], cfg: &SyntheticConfig) -> String {
    let mut lines = vec![
        format!("seed: {}", cfg.seed),
        format!("concept_vocab: {}", cfg.concept_vocab),
        format!("zipf_exponent: {}", cfg.zipf_exponent),
        format!("min_len: {}", cfg.min_len),
        format!("max_len: {}", cfg.max_len),
        format!("style: {}", cfg.style),
        format!("train_per_direction: {}", cfg.train_per_direction),
        format!("dev_per_direction: {}", cfg.dev_per_direction),
        format!("test_per_direction: {}", cfg.test_per_direction),
        format!("languages: {}", specs.iter().map(|s| s.code.as_str()).collect::<Vec<_>>().join(" ")),
        format!("directions: {}", directions.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ")),
    ];
    for s in specs {
        lines.push(format!("lang.{}.order: {}", s.code, s.order));
        lines.push(format!("lang.{}.lexicon: {}", s.code, s.lexicon.join(" ")));
    }
    lines.join("\n") + "\n"
}

/// Languages and directions recorded in a manifest.
pub fn parse_manifest(text: &str) -> Result<(Vec<SyntheticLanguageSpec>, Vec<Direction>), Error> {
    let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once(": ")).collect();
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Config(format!("manifest missing {k}")));
    let mut specs = Vec::new();
    for code in get("languages")?.split_whitespace() {
        let code = LangCode::new(code)?;
        let order = get(&format!("lang.{code}.order"))?.parse()?;
        let lexicon = get(&format!("lang.{code}.lexicon"))?.split_whitespace().map(str::to_string).collect();
        specs.push(SyntheticLanguageSpec { code, lexicon, order });
    }
    let directions = get("directions")?.split_whitespace().map(str::parse).collect::<Result<_, _>>()?;
    Ok((specs, directions))
}

/// Generation settings recorded in a manifest.
pub fn parse_manifest_config(text: &str) -> Result<SyntheticConfig, Error> {
    let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once(": ")).collect();
    fn field<T: FromStr>(kv: &BTreeMap<&str, &str>, k: &str) -> Result<T, Error> {
        kv.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("manifest missing or invalid {k}")))
    }
    Ok(SyntheticConfig {
        train_per_direction: field(&kv, "train_per_direction")?,
        dev_per_direction: field(&kv, "dev_per_direction")?,
        test_per_direction: field(&kv, "test_per_direction")?,
        min_len: field(&kv, "min_len")?,
        max_len: field(&kv, "max_len")?,
        concept_vocab: field(&kv, "concept_vocab")?,
        zipf_exponent: field(&kv, "zipf_exponent")?,
        style: field(&kv, "style")?,
        seed: field(&kv, "seed")?,
    })
}

pub const MANIFEST_FILE: &str = "languages.txt";

pub fn corpus_file_name(d: &Direction, split: Split) -> String {
    format!("{}-{}.{}.tsv", d.source, d.target, split.name())
}

/// Writes `{src}-{tgt}.{split}.tsv` for every direction plus the manifest.
pub fn write_synthetic(
    dir: &Path,
    specs: &[SyntheticLanguageSpec],
    data: &BTreeMap<Direction, Splits>,
    cfg: &SyntheticConfig,
) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let directions: Vec<Direction> = data.keys().cloned().collect();
    for (d, splits) in data {
        for split in [Split::Train, Split::Dev, Split::Test] {
            write_corpus(&dir.join(corpus_file_name(d, split)), splits.get(split))?;
        }
    }
    std::fs::write(dir.join(MANIFEST_FILE), manifest_string(specs, &directions, cfg))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lang(s: &str) -> LangCode {
        LangCode::new(s).unwrap()
    }

    fn toy_spec(code: &str, prefix: &str, order: WordOrder) -> SyntheticLanguageSpec {
        SyntheticLanguageSpec {
            code: lang(code),
            lexicon: (0..20).map(|k| format!("{prefix}{k}")).collect(),
            order,
        }
    }

    #[test]
    fn hand_applied_rendering() {
        let a = toy_spec("a", "a", WordOrder::Identity);
        let b = toy_spec("b", "b", WordOrder::Reverse);
        let p = render_pair(&[a, b], &Direction::new(lang("a"), lang("b")), &[3, 1, 4]).unwrap();
        assert_eq!(p.source, "a3 a1 a4");
        assert_eq!(p.target, "b4 b1 b3");
    }

    #[test]
    fn identity_language_copies() {
        let a = toy_spec("a", "a", WordOrder::Identity);
        let a2 = SyntheticLanguageSpec { code: lang("c"), ..a.clone() };
        let p = render_pair(&[a, a2], &Direction::new(lang("a"), lang("c")), &[5, 2, 9]).unwrap();
        assert_eq!(p.source, p.target);
    }

    #[test]
    fn orders_invert() {
        let items = [1, 2, 3, 4, 5];
        for o in WordOrder::ALL {
            assert_eq!(o.invert(&o.apply(&items)), items);
        }
        assert_eq!(WordOrder::Rotate1.apply(&items), [2, 3, 4, 5, 1]);
        assert_eq!(WordOrder::SwapAdjacent.apply(&items), [2, 1, 4, 3, 5]);
    }

    fn family(style: LexiconStyle) -> Vec<SyntheticLanguageSpec> {
        make_languages(
            &[lang("a"), lang("e"), lang("b")],
            &[WordOrder::Identity, WordOrder::Reverse, WordOrder::SwapAdjacent],
            50,
            style,
            3,
        )
        .unwrap()
    }

    #[test]
    fn lexicons_are_injective_and_disjoint() {
        for style in [LexiconStyle::Cognate, LexiconStyle::Independent] {
            let specs = family(style);
            let mut all = BTreeSet::new();
            for s in &specs {
                for w in &s.lexicon {
                    assert!(all.insert(w.clone()), "{w} repeated");
                }
            }
        }
    }

    #[test]
    fn splits_are_disjoint_and_deterministic() {
        let specs = family(LexiconStyle::Cognate);
        let dirs = [Direction::new(lang("a"), lang("e")), Direction::new(lang("e"), lang("b"))];
        let cfg = SyntheticConfig { train_per_direction: 300, dev_per_direction: 20, test_per_direction: 30, concept_vocab: 50, ..Default::default() };
        let data = gen_synthetic_corpus(&specs, &dirs, &cfg).unwrap();
        assert_eq!(data, gen_synthetic_corpus(&specs, &dirs, &cfg).unwrap());
        let concepts = |p: &ExamplePair| specs.iter().find(|s| s.code == p.source_lang).unwrap().parse(&p.source).unwrap();
        let train: BTreeSet<Vec<usize>> = data.values().flat_map(|s| s.train.iter().map(concepts)).collect();
        for s in data.values() {
            assert_eq!(s.train.len(), 300);
            for p in &s.test {
                assert!(!train.contains(&concepts(p)));
            }
        }
    }

    #[test]
    fn unknown_language_rejected() {
        let specs = family(LexiconStyle::Cognate);
        let r = gen_synthetic_corpus(&specs, &[Direction::new(lang("a"), lang("zz"))], &SyntheticConfig { concept_vocab: 50, ..Default::default() });
        assert!(matches!(r, Err(Error::UnregisteredLanguage { .. })));
    }

    #[test]
    fn manifest_round_trip() {
        let specs = family(LexiconStyle::Independent);
        let dirs = vec![Direction::new(lang("a"), lang("b"))];
        let text = manifest_string(&specs, &dirs, &SyntheticConfig::default());
        let (back, d) = parse_manifest(&text).unwrap();
        assert_eq!(back, specs);
        assert_eq!(d, dirs);
        let cfg = SyntheticConfig { zipf_exponent: 1.25, style: LexiconStyle::Independent, seed: 9, ..Default::default() };
        assert_eq!(parse_manifest_config(&manifest_string(&specs, &dirs, &cfg)).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn every_pair_inverts_to_one_concept_sequence(seed in 0u64..1000) {
            let specs = family(LexiconStyle::Cognate);
            let cfg = SyntheticConfig { concept_vocab: 50, seed, ..Default::default() };
            let mut rng = numcore::Rng::new(seed);
            let c = sample_concepts(&mut rng, &cfg);
            for s in &specs {
                for t in &specs {
                    let p = render_pair(&specs, &Direction::new(s.code.clone(), t.code.clone()), &c).unwrap();
                    prop_assert_eq!(s.parse(&p.source).unwrap(), c.clone());
                    prop_assert_eq!(t.parse(&p.target).unwrap(), c.clone());
                }
            }
        }
    }
}
