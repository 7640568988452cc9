//! Parallel data: loading, target-token tagging, epoch plans and mini-batches.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use numcore::Rng;

use crate::wordpiece::{TokenId, Vocabulary, EOS, PAD};
use crate::{Direction, Error, LangCode};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExamplePair {
    pub source: String,
    pub target: String,
    pub source_lang: LangCode,
    pub target_lang: LangCode,
}

impl ExamplePair {
    pub fn direction(&self) -> Direction {
        Direction::new(self.source_lang.clone(), self.target_lang.clone())
    }
}

pub type Corpus = BTreeMap<Direction, Vec<ExamplePair>>;

/// Reads `source<TAB>target` lines. Blank lines are skipped; CRLF is accepted.
pub fn load_corpus(path: &Path, source_lang: &LangCode, target_lang: &LangCode) -> Result<Vec<ExamplePair>, Error> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text, &path.display().to_string(), source_lang, target_lang)
}

pub fn parse_corpus(
    text: &str,
    name: &str,
    source_lang: &LangCode,
    target_lang: &LangCode,
) -> Result<Vec<ExamplePair>, Error> {
    let mut pairs = Vec::new();
    for (n, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |msg: &str| Error::CorpusLine { path: name.to_string(), line: n + 1, msg: msg.to_string() };
        if fields.len() != 2 {
            return Err(err("expected 2 fields"));
        }
        if fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(err("empty field"));
        }
        pairs.push(ExamplePair {
            source: fields[0].to_string(),
            target: fields[1].to_string(),
            source_lang: source_lang.clone(),
            target_lang: target_lang.clone(),
        });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus(name.to_string()));
    }
    Ok(pairs)
}

pub fn write_corpus(path: &Path, pairs: &[ExamplePair]) -> Result<(), Error> {
    let mut s = String::new();
    for p in pairs {
        s.push_str(&p.source);
        s.push('\t');
        s.push_str(&p.target);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Prefixes the source with `<2{target_lang}> `. The source language is never marked.
pub fn prepend_target_token(pair: &ExamplePair, registered: &[LangCode]) -> Result<ExamplePair, Error> {
    if !registered.contains(&pair.target_lang) {
        return Err(Error::UnregisteredLanguage {
            code: pair.target_lang.to_string(),
            registered: registered.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(", "),
        });
    }
    let first = pair.source.split_whitespace().next().unwrap_or("");
    if LangCode::from_target_token(first).is_some() {
        return Err(Error::AlreadyTagged(pair.source.clone()));
    }
    Ok(ExamplePair { source: format!("{} {}", pair.target_lang.target_token(), pair.source), ..pair.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// Every direction contributes as many examples as the largest one.
    Oversample,
    /// Every example once.
    Natural,
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingStrategy::Oversample => "oversample",
            SamplingStrategy::Natural => "natural",
        })
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "oversample" => Ok(SamplingStrategy::Oversample),
            "natural" => Ok(SamplingStrategy::Natural),
            other => Err(Error::Config(format!("unknown sampling strategy {other:?}"))),
        }
    }
}

/// Which examples one epoch visits and in what order.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochPlan {
    pub directions: Vec<Direction>,
    /// Example indices drawn for each direction.
    pub per_direction: Vec<Vec<usize>>,
    /// Shuffled `(direction index, example index)` sequence.
    pub order: Vec<(usize, usize)>,
    pub strategy: SamplingStrategy,
    pub seed: u64,
}

impl EpochPlan {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<Direction, usize> {
        self.directions.iter().cloned().zip(self.per_direction.iter().map(Vec::len)).collect()
    }

    pub fn contains(&self, d: &Direction) -> bool {
        self.directions.contains(d)
    }
}

/// Builds an epoch over directions with the given raw sizes.
///
/// Under [`SamplingStrategy::Oversample`] the largest directions are visited
/// once each in full while smaller ones are sampled with replacement up to
/// the largest size.
pub fn build_epoch(sizes: &[(Direction, usize)], strategy: SamplingStrategy, seed: u64) -> Result<EpochPlan, Error> {
    if sizes.is_empty() {
        return Err(Error::Config("no directions to sample".into()));
    }
    if let Some((d, _)) = sizes.iter().find(|(_, n)| *n == 0) {
        return Err(Error::EmptyDirection(d.to_string()));
    }
    let mut rng = Rng::new(seed);
    let largest = sizes.iter().map(|(_, n)| *n).max().unwrap_or(0);
    let mut per_direction = Vec::with_capacity(sizes.len());
    for &(_, n) in sizes {
        let indices: Vec<usize> = match strategy {
            SamplingStrategy::Oversample if n < largest => (0..largest).map(|_| rng.below(n)).collect(),
            _ => (0..n).collect(),
        };
        per_direction.push(indices);
    }
    let mut order: Vec<(usize, usize)> = per_direction
        .iter()
        .enumerate()
        .flat_map(|(d, idx)| idx.iter().map(move |&i| (d, i)))
        .collect();
    rng.shuffle(&mut order);
    Ok(EpochPlan {
        directions: sizes.iter().map(|(d, _)| d.clone()).collect(),
        per_direction,
        order,
        strategy,
        seed,
    })
}

/// Tagged, segmented example ready for batching.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPair {
    /// Starts with the `<2xx>` id.
    pub source: Vec<TokenId>,
    /// Ends with EOS.
    pub target: Vec<TokenId>,
}

/// Every direction's examples, segmented once up front.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub directions: Vec<Direction>,
    pub examples: Vec<Vec<EncodedPair>>,
}

impl Dataset {
    pub fn encode(corpus: &Corpus, vocab: &Vocabulary) -> Result<Dataset, Error> {
        let mut directions = Vec::new();
        let mut examples = Vec::new();
        for (d, pairs) in corpus {
            if pairs.is_empty() {
                return Err(Error::EmptyDirection(d.to_string()));
            }
            let mut enc = Vec::with_capacity(pairs.len());
            for p in pairs {
                let tagged = prepend_target_token(p, vocab.languages())?;
                let mut target = vocab.segment(&p.target);
                target.push(EOS);
                enc.push(EncodedPair { source: vocab.segment(&tagged.source), target });
            }
            directions.push(d.clone());
            examples.push(enc);
        }
        Ok(Dataset { directions, examples })
    }

    pub fn sizes(&self) -> Vec<(Direction, usize)> {
        self.directions.iter().cloned().zip(self.examples.iter().map(Vec::len)).collect()
    }

    pub fn plan(&self, strategy: SamplingStrategy, seed: u64) -> Result<EpochPlan, Error> {
        build_epoch(&self.sizes(), strategy, seed)
    }

    pub fn get(&self, direction: usize, index: usize) -> &EncodedPair {
        &self.examples[direction][index]
    }
}

/// Keeps the leading `<2xx>` in place and reverses the remaining pieces.
pub fn reverse_source(ids: &[TokenId]) -> Vec<TokenId> {
    match ids.split_first() {
        Some((first, rest)) => std::iter::once(*first).chain(rest.iter().rev().copied()).collect(),
        None => Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiniBatch {
    /// `batch × max_source_len`, PAD-filled.
    pub source: Vec<Vec<TokenId>>,
    /// `batch × max_target_len`, EOS-terminated, PAD-filled.
    pub target: Vec<Vec<TokenId>>,
    pub source_lens: Vec<usize>,
    pub target_lens: Vec<usize>,
    pub directions: Vec<Direction>,
}

impl MiniBatch {
    pub fn from_pairs(pairs: &[(&EncodedPair, Direction)], reverse: bool) -> MiniBatch {
        let sources: Vec<Vec<TokenId>> = pairs
            .iter()
            .map(|(p, _)| if reverse { reverse_source(&p.source) } else { p.source.clone() })
            .collect();
        let max_s = sources.iter().map(Vec::len).max().unwrap_or(0);
        let max_t = pairs.iter().map(|(p, _)| p.target.len()).max().unwrap_or(0);
        let pad = |v: &[TokenId], n: usize| {
            let mut out = v.to_vec();
            out.resize(n, PAD);
            out
        };
        MiniBatch {
            source_lens: sources.iter().map(Vec::len).collect(),
            target_lens: pairs.iter().map(|(p, _)| p.target.len()).collect(),
            source: sources.iter().map(|s| pad(s, max_s)).collect(),
            target: pairs.iter().map(|(p, _)| pad(&p.target, max_t)).collect(),
            directions: pairs.iter().map(|(_, d)| d.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// The batch starting at `cursor` in plan order, or `None` once the epoch is exhausted.
pub fn sample_minibatch(
    plan: &EpochPlan,
    data: &Dataset,
    cursor: usize,
    batch_size: usize,
    reverse: bool,
) -> Option<MiniBatch> {
    if cursor >= plan.len() || batch_size == 0 {
        return None;
    }
    let end = (cursor + batch_size).min(plan.len());
    let pairs: Vec<(&EncodedPair, Direction)> = plan.order[cursor..end]
        .iter()
        .map(|&(d, i)| {
            let dir = &plan.directions[d];
            let slot = data.directions.iter().position(|x| x == dir).expect("plan built from this dataset");
            (data.get(slot, i), dir.clone())
        })
        .collect();
    Some(MiniBatch::from_pairs(&pairs, reverse))
}
