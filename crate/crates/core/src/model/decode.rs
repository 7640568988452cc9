use std::sync::atomic::{AtomicUsize, Ordering};

use numcore::{Graph, Scalar, Var};

use super::forward::{decoder_step, encode, gather_encoder, initial_decoder_states, Bound, EncoderOutput};
use super::{ModelParams, TargetTokenMix};
use crate::corpus::reverse_source;
use crate::wordpiece::{TokenId, Vocabulary, BOS, EOS, PAD};
use crate::{Error, LangCode};

/// Which `<2xx>` embedding starts the source.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetSpec {
    Lang(LangCode),
    Mix(TargetTokenMix),
}

impl From<LangCode> for TargetSpec {
    fn from(l: LangCode) -> Self {
        TargetSpec::Lang(l)
    }
}

/// Attention state at one decoding step.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextVector {
    pub context: Vec<f64>,
    pub attention: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    /// Output ids without EOS.
    pub tokens: Vec<TokenId>,
    pub text: String,
    /// One entry per emitted token, EOS included.
    pub trace: Vec<ContextVector>,
    /// Set when decoding stopped at the length limit before EOS.
    pub truncated: bool,
}

/// Inference over a fixed model and vocabulary.
pub struct Translator<'a> {
    params: &'a ModelParams<f32>,
    vocab: &'a Vocabulary,
    allowed: Vec<bool>,
    passes: AtomicUsize,
}

struct Prepared {
    ids: Vec<TokenId>,
    mix: Option<(TokenId, TokenId, f64)>,
}

impl<'a> Translator<'a> {
    pub fn new(params: &'a ModelParams<f32>, vocab: &'a Vocabulary) -> Result<Self, Error> {
        if params.config.vocab_size != vocab.len() {
            return Err(Error::ModelMismatch(format!(
                "model vocabulary {} != wordpiece vocabulary {}",
                params.config.vocab_size,
                vocab.len()
            )));
        }
        let allowed = (0..vocab.len()).map(|id| id != PAD && id != BOS && !vocab.is_language_token(id)).collect();
        Ok(Translator { params, vocab, allowed, passes: AtomicUsize::new(0) })
    }

    pub fn params(&self) -> &ModelParams<f32> {
        self.params
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    /// Number of sentence decodes run so far.
    pub fn decode_passes(&self) -> usize {
        self.passes.load(Ordering::Relaxed)
    }

    fn prepare(&self, text: &str, target: &TargetSpec) -> Result<Option<Prepared>, Error> {
        let body = self.vocab.segment(text);
        if body.is_empty() {
            return Ok(None);
        }
        let (tag, mix) = match target {
            TargetSpec::Lang(l) => (self.vocab.require_language(l)?, None),
            TargetSpec::Mix(m) => {
                let a = self.vocab.require_language(&m.lang_a)?;
                let b = self.vocab.require_language(&m.lang_b)?;
                (a, Some((a, b, m.w)))
            }
        };
        let ids: Vec<TokenId> = std::iter::once(tag).chain(body).collect();
        Ok(Some(self.finish(ids, mix)))
    }

    fn finish(&self, ids: Vec<TokenId>, mix: Option<(TokenId, TokenId, f64)>) -> Prepared {
        let ids = if self.params.config.reverse_source { reverse_source(&ids) } else { ids };
        Prepared { ids, mix }
    }

    /// Translates text that already starts with a `<2xx>` token.
    pub fn translate_tagged(&self, text: &str) -> Result<Translation, Error> {
        let ids = self.vocab.segment(text);
        match ids.first() {
            Some(&first) if self.vocab.is_language_token(first) => {}
            _ => return Err(Error::UntaggedInput),
        }
        if ids.len() == 1 {
            return Ok(empty_translation());
        }
        let prepared = self.finish(ids, None);
        self.run(&prepared)
    }

    /// Translates plain source text into `target` with the configured beam width.
    pub fn translate(&self, text: &str, target: &TargetSpec) -> Result<Translation, Error> {
        match self.prepare(text, target)? {
            None => Ok(empty_translation()),
            Some(p) => self.run(&p),
        }
    }

    fn run(&self, p: &Prepared) -> Result<Translation, Error> {
        let beam = self.params.config.beam_width;
        if beam <= 1 {
            Ok(self.greedy(std::slice::from_ref(p))?.pop().expect("one row"))
        } else {
            self.beam_search(p, beam)
        }
    }

    /// Greedy decoding of many sentences, batched by length.
    pub fn translate_batch(&self, texts: &[String], target: &TargetSpec) -> Result<Vec<Translation>, Error> {
        const CHUNK: usize = 64;
        let mut prepared = Vec::with_capacity(texts.len());
        for t in texts {
            prepared.push(self.prepare(t, target)?);
        }
        let mut order: Vec<usize> = (0..texts.len()).filter(|&i| prepared[i].is_some()).collect();
        order.sort_by_key(|&i| prepared[i].as_ref().map_or(0, |p| p.ids.len()));
        let mut out: Vec<Translation> = vec![empty_translation(); texts.len()];
        for chunk in order.chunks(CHUNK) {
            let rows: Vec<Prepared> = chunk
                .iter()
                .map(|&i| {
                    let p = prepared[i].as_ref().expect("filtered");
                    Prepared { ids: p.ids.clone(), mix: p.mix }
                })
                .collect();
            for (&i, tr) in chunk.iter().zip(self.greedy(&rows)?) {
                out[i] = tr;
            }
        }
        Ok(out)
    }

    fn encode_rows(&self, g: &mut Graph<f32>, bound: &Bound, rows: &[Prepared]) -> EncoderOutput {
        let width = rows.iter().map(|r| r.ids.len()).max().unwrap_or(0);
        let lens: Vec<usize> = rows.iter().map(|r| r.ids.len()).collect();
        let source: Vec<Vec<TokenId>> = rows
            .iter()
            .map(|r| {
                let mut v = r.ids.clone();
                v.resize(width, PAD);
                v
            })
            .collect();
        let mix: Option<Vec<(TokenId, TokenId, f64)>> = if rows.iter().any(|r| r.mix.is_some()) {
            Some(rows.iter().map(|r| r.mix.unwrap_or((r.ids[0], r.ids[0], 0.0))).collect())
        } else {
            None
        };
        // With a reversed source the tag stays at position 0, so the mix applies there too.
        encode(g, bound, &source, &lens, mix.as_deref())
    }

    fn log_probs(&self, g: &Graph<f32>, logits: Var, row: usize) -> Vec<f64> {
        let values = g.value(logits).row(row);
        let max = values
            .iter()
            .zip(&self.allowed)
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + values
                .iter()
                .zip(&self.allowed)
                .filter(|(_, &ok)| ok)
                .map(|(&v, _)| (v.as_f64() - max).exp())
                .sum::<f64>()
                .ln();
        values
            .iter()
            .zip(&self.allowed)
            .map(|(&v, &ok)| if ok { v.as_f64() - lse } else { f64::NEG_INFINITY })
            .collect()
    }

    fn trace_row(g: &Graph<f32>, context: Var, attention: Var, row: usize, src_len: usize) -> ContextVector {
        ContextVector {
            context: g.value(context).row(row).iter().map(|v| v.as_f64()).collect(),
            attention: g.value(attention).row(row)[..src_len].iter().map(|v| v.as_f64()).collect(),
        }
    }

    fn greedy(&self, rows: &[Prepared]) -> Result<Vec<Translation>, Error> {
        self.passes.fetch_add(rows.len(), Ordering::Relaxed);
        let mut g = Graph::new();
        let bound = Bound::new(&mut g, self.params, false);
        let enc = self.encode_rows(&mut g, &bound, rows);
        let mut states = initial_decoder_states(&bound, &enc);
        let n = rows.len();
        let mut prev = vec![BOS; n];
        let mut done = vec![false; n];
        let mut tokens: Vec<Vec<TokenId>> = vec![Vec::new(); n];
        let mut traces: Vec<Vec<ContextVector>> = vec![Vec::new(); n];
        for _ in 0..self.params.config.max_decode_len {
            let step = decoder_step(&mut g, &bound, &enc, &prev, &states);
            for r in 0..n {
                if done[r] {
                    prev[r] = EOS;
                    continue;
                }
                let lp = self.log_probs(&g, step.logits, r);
                let best = argmax(&lp);
                traces[r].push(Self::trace_row(&g, step.context, step.attention, r, rows[r].ids.len()));
                if best == EOS {
                    done[r] = true;
                } else {
                    tokens[r].push(best);
                }
                prev[r] = best;
            }
            states = step.states;
            if done.iter().all(|&d| d) {
                break;
            }
        }
        tokens
            .into_iter()
            .zip(traces)
            .zip(done)
            .map(|((tokens, trace), done)| {
                Ok(Translation { text: self.vocab.detokenize(&tokens)?, tokens, trace, truncated: !done })
            })
            .collect()
    }

    fn beam_search(&self, p: &Prepared, width: usize) -> Result<Translation, Error> {
        struct Hyp {
            tokens: Vec<TokenId>,
            logp: f64,
            trace: Vec<ContextVector>,
        }
        self.passes.fetch_add(1, Ordering::Relaxed);
        let mut g = Graph::new();
        let bound = Bound::new(&mut g, self.params, false);
        let base = self.encode_rows(&mut g, &bound, std::slice::from_ref(p));
        let src_len = p.ids.len();
        let mut enc = gather_encoder(&mut g, &base, &[0]);
        let mut states = initial_decoder_states(&bound, &enc);
        let mut active = vec![Hyp { tokens: Vec::new(), logp: 0.0, trace: Vec::new() }];
        let mut finished: Vec<(f64, Hyp)> = Vec::new();
        for _ in 0..self.params.config.max_decode_len {
            let prev: Vec<TokenId> = active.iter().map(|h| h.tokens.last().copied().unwrap_or(BOS)).collect();
            let step = decoder_step(&mut g, &bound, &enc, &prev, &states);
            let mut cands: Vec<(f64, usize, TokenId)> = Vec::new();
            for (r, h) in active.iter().enumerate() {
                for (v, lp) in self.log_probs(&g, step.logits, r).into_iter().enumerate() {
                    if lp.is_finite() {
                        cands.push((h.logp + lp, r, v));
                    }
                }
            }
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            cands.truncate(width);
            let mut next = Vec::new();
            let mut parents = Vec::new();
            for (score, r, v) in cands {
                let parent = &active[r];
                let mut trace = parent.trace.clone();
                trace.push(Self::trace_row(&g, step.context, step.attention, r, src_len));
                if v == EOS {
                    let len = (parent.tokens.len() + 1) as f64;
                    finished.push((score / len, Hyp { tokens: parent.tokens.clone(), logp: score, trace }));
                } else {
                    let mut tokens = parent.tokens.clone();
                    tokens.push(v);
                    next.push(Hyp { tokens, logp: score, trace });
                    parents.push(r);
                }
            }
            if finished.len() >= width || next.is_empty() {
                active = next;
                break;
            }
            states = step.states.iter().map(|&s| g.embedding(s, &parents)).collect();
            if parents.len() != active.len() {
                enc = gather_encoder(&mut g, &base, &vec![0; parents.len()]);
            }
            active = next;
        }
        let (hyp, truncated) = match finished.into_iter().max_by(|a, b| a.0.total_cmp(&b.0)) {
            Some((_, h)) => (h, false),
            None => {
                let h = active
                    .into_iter()
                    .max_by(|a, b| (a.logp / a.tokens.len() as f64).total_cmp(&(b.logp / b.tokens.len() as f64)))
                    .expect("beam keeps at least one hypothesis");
                (h, true)
            }
        };
        Ok(Translation { text: self.vocab.detokenize(&hyp.tokens)?, tokens: hyp.tokens, trace: hyp.trace, truncated })
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn empty_translation() -> Translation {
    Translation { tokens: Vec::new(), text: String::new(), trace: Vec::new(), truncated: false }
}
