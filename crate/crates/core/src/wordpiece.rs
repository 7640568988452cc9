//! Shared subword vocabulary.
//!
//! Training is frequency-greedy pair merging: every word is prefixed with the
//! boundary marker `▁` and split into characters, then the most frequent
//! adjacent pair is merged repeatedly. Ties go to the lexicographically
//! smallest `(left, right)` pair so training is deterministic.
//!
//! Ids `0..4` hold `<pad>`, `<s>`, `</s>` and `<unk>`; the next ids hold one
//! `<2xx>` token per registered target language. Those tokens never take part
//! in merging and are only produced when they open the input line.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, LangCode};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

pub const BOUNDARY: char = '▁';
const SENTINELS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];
const MERGES_MARKER: &str = "#MERGES";

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    languages: Vec<LangCode>,
    merges: Vec<(String, String)>,
    merge_ranks: HashMap<(String, String), usize>,
}

/// One training corpus: lines of text and a sampling weight applied to its word counts.
pub struct WeightedCorpus<'a> {
    pub lines: &'a [String],
    pub weight: f64,
}

/// Learns a vocabulary whose size, not counting the four sentinels, is at most
/// `target_size`: language tokens plus characters plus merged pieces.
pub fn train_vocabulary(
    corpora: &[WeightedCorpus<'_>],
    target_size: usize,
    reserved: &[LangCode],
) -> Result<Vocabulary, Error> {
    let mut word_counts: BTreeMap<&str, f64> = BTreeMap::new();
    for corpus in corpora {
        for line in corpus.lines {
            for word in line.split_whitespace() {
                *word_counts.entry(word).or_insert(0.0) += corpus.weight;
            }
        }
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyCorpora);
    }

    let mut charset: BTreeSet<char> = BTreeSet::new();
    charset.insert(BOUNDARY);
    for w in word_counts.keys() {
        charset.extend(w.chars());
    }
    let base = reserved.len() + charset.len();
    if target_size < base {
        return Err(Error::VocabTooSmall { target: target_size, base });
    }

    // Symbols are interned so pair counting works on integers.
    let mut symbols: Vec<String> = charset.iter().map(|c| c.to_string()).collect();
    let mut symbol_ids: HashMap<String, u32> =
        symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
    let mut words: Vec<(Vec<u32>, f64)> = word_counts
        .iter()
        .map(|(w, &c)| {
            let seq = std::iter::once(BOUNDARY)
                .chain(w.chars())
                .map(|ch| symbol_ids[&ch.to_string()])
                .collect();
            (seq, c)
        })
        .collect();

    let reserved_strings: BTreeSet<String> = reserved.iter().map(|l| l.target_token()).collect();
    let mut distinct = base;
    let mut merges: Vec<(String, String)> = Vec::new();
    let mut known: BTreeSet<String> = symbols.iter().cloned().collect();
    let mut banned: BTreeSet<(u32, u32)> = BTreeSet::new();
    // A merge can also produce a string that already exists; it is kept as a
    // rule but does not grow the vocabulary.
    while distinct < target_size {
        let mut counts: HashMap<(u32, u32), f64> = HashMap::new();
        for (seq, c) in &words {
            for pair in seq.windows(2).filter(|p| !banned.contains(&(p[0], p[1]))) {
                *counts.entry((pair[0], pair[1])).or_insert(0.0) += c;
            }
        }
        let best = counts.iter().fold(None::<((u32, u32), f64)>, |best, (&pair, &count)| {
            match best {
                None => Some((pair, count)),
                Some((bp, bc)) => {
                    let better = count > bc
                        || (count == bc
                            && (symbols[pair.0 as usize].as_str(), symbols[pair.1 as usize].as_str())
                                < (symbols[bp.0 as usize].as_str(), symbols[bp.1 as usize].as_str()));
                    if better {
                        Some((pair, count))
                    } else {
                        best
                    }
                }
            }
        });
        let Some(((left, right), _)) = best else { break };
        let merged = format!("{}{}", symbols[left as usize], symbols[right as usize]);
        if reserved_strings.contains(&merged) || SENTINELS.contains(&merged.as_str()) {
            // ordinary text must never spell a reserved token
            banned.insert((left, right));
            continue;
        }
        let new_id = *symbol_ids.entry(merged.clone()).or_insert_with(|| {
            symbols.push(merged.clone());
            (symbols.len() - 1) as u32
        });
        for (seq, _) in words.iter_mut() {
            merge_in_place(seq, left, right, new_id);
        }
        merges.push((symbols[left as usize].clone(), symbols[right as usize].clone()));
        if known.insert(merged) {
            distinct += 1;
        }
    }

    let mut tokens: Vec<String> = SENTINELS.iter().map(|s| s.to_string()).collect();
    tokens.extend(reserved.iter().map(|l| l.target_token()));
    tokens.extend(charset.iter().map(|c| c.to_string()));
    for (l, r) in &merges {
        let m = format!("{l}{r}");
        if !tokens.contains(&m) {
            tokens.push(m);
        }
    }
    Vocabulary::from_parts(tokens, reserved.to_vec(), merges)
}

fn merge_in_place(seq: &mut Vec<u32>, left: u32, right: u32, merged: u32) {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    *seq = out;
}

impl Vocabulary {
    fn from_parts(
        tokens: Vec<String>,
        languages: Vec<LangCode>,
        merges: Vec<(String, String)>,
    ) -> Result<Self, Error> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::VocabFormat(format!("duplicate token {t:?}")));
            }
        }
        for (i, s) in SENTINELS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::VocabFormat(format!("id {i} must be {s}")));
            }
        }
        for (i, lang) in languages.iter().enumerate() {
            if tokens.get(SENTINELS.len() + i) != Some(&lang.target_token()) {
                return Err(Error::VocabFormat(format!("language token for {lang} misplaced")));
            }
        }
        let merge_ranks = merges.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        Ok(Vocabulary { tokens, ids, languages, merges, merge_ranks })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Registered target languages in id order.
    pub fn languages(&self) -> &[LangCode] {
        &self.languages
    }

    pub fn language_token(&self, lang: &LangCode) -> Option<TokenId> {
        self.languages.iter().position(|l| l == lang).map(|i| SENTINELS.len() + i)
    }

    pub fn is_language_token(&self, id: TokenId) -> bool {
        (SENTINELS.len()..SENTINELS.len() + self.languages.len()).contains(&id)
    }

    /// Language requested by a `<2xx>` id.
    pub fn language_of_token(&self, id: TokenId) -> Option<&LangCode> {
        id.checked_sub(SENTINELS.len()).and_then(|i| self.languages.get(i))
    }

    pub fn require_language(&self, lang: &LangCode) -> Result<TokenId, Error> {
        self.language_token(lang).ok_or_else(|| Error::UnregisteredLanguage {
            code: lang.to_string(),
            registered: self.registered_list(),
        })
    }

    pub fn registered_list(&self) -> String {
        self.languages.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(", ")
    }

    /// Applies the merge rules, lowest rank first, to a symbol sequence.
    pub fn apply_merges(&self, mut symbols: Vec<String>) -> Vec<String> {
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.merge_ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i))
                })
                .min();
            let Some((rank, _)) = best else { return symbols };
            let (l, r) = &self.merges[rank];
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == l && &symbols[i + 1] == r {
                    out.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = out;
        }
    }

    fn segment_word(&self, word: &str, out: &mut Vec<TokenId>) {
        let symbols: Vec<String> =
            std::iter::once(BOUNDARY).chain(word.chars()).map(|c| c.to_string()).collect();
        for piece in self.apply_merges(symbols) {
            out.push(self.id(&piece).filter(|&id| id >= SENTINELS.len() + self.languages.len()).unwrap_or(UNK));
        }
    }

    /// Segments a line into ids. A registered `<2xx>` as the first
    /// whitespace-delimited unit maps to its reserved id; everything else goes
    /// through the merge rules.
    pub fn segment(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut words = text.split_whitespace().peekable();
        if let Some(first) = words.peek() {
            if let Some(id) = LangCode::from_target_token(first).and_then(|l| self.language_token(&l)) {
                out.push(id);
                words.next();
            }
        }
        for w in words {
            self.segment_word(w, &mut out);
        }
        out
    }

    /// Inverse of [`Vocabulary::segment`] up to whitespace normalisation.
    /// Sentinels are dropped; `<2xx>` and `<unk>` render literally.
    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String, Error> {
        let mut s = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::TokenOutOfRange { id, size: self.len() })?;
            match id {
                PAD | BOS | EOS => {}
                _ if self.is_language_token(id) => {
                    s.push(' ');
                    s.push_str(tok);
                }
                _ => s.extend(tok.chars().map(|c| if c == BOUNDARY { ' ' } else { c })),
            }
        }
        Ok(s.strip_prefix(' ').map(str::to_string).unwrap_or(s))
    }

    /// Text rendering: `token<TAB>id` per line in id order, then `#MERGES`
    /// and one `left<TAB>right` line per merge in learned order.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(s, "{t}\t{i}");
        }
        s.push_str(MERGES_MARKER);
        s.push('\n');
        for (l, r) in &self.merges {
            let _ = writeln!(s, "{l}\t{r}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut tokens = Vec::new();
        let mut merges = Vec::new();
        let mut in_merges = false;
        for (n, line) in text.lines().enumerate() {
            if line == MERGES_MARKER {
                in_merges = true;
                continue;
            }
            let (a, b) = line
                .split_once('\t')
                .ok_or_else(|| Error::VocabFormat(format!("line {}: missing tab", n + 1)))?;
            if in_merges {
                merges.push((a.to_string(), b.to_string()));
            } else {
                let id: usize =
                    b.parse().map_err(|_| Error::VocabFormat(format!("line {}: bad id", n + 1)))?;
                if id != tokens.len() {
                    return Err(Error::VocabFormat(format!("line {}: ids must be dense", n + 1)));
                }
                tokens.push(a.to_string());
            }
        }
        if !in_merges {
            return Err(Error::VocabFormat("missing #MERGES section".into()));
        }
        let languages = tokens
            .iter()
            .skip(SENTINELS.len())
            .map_while(|t| LangCode::from_target_token(t))
            .collect();
        Vocabulary::from_parts(tokens, languages, merges)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Vocabulary::parse(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the file rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(self.to_file_string().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
