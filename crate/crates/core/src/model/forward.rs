use numcore::{Graph, NumError, Scalar, Tensor, Var};

use super::{GruWeights, ModelParams};
use crate::corpus::MiniBatch;
use crate::wordpiece::{TokenId, BOS};
use crate::Error;

/// Additive bias applied to scores of padded source positions.
const MASKED_SCORE: f64 = -1e9;

pub(crate) struct GruVars {
    input: Var,
    hidden: Var,
    input_bias: Var,
    hidden_bias: Var,
}

/// Model parameters recorded on a graph.
pub struct Bound {
    embedding: Var,
    encoder: Vec<GruVars>,
    decoder: Vec<GruVars>,
    keys: Var,
    query: Var,
    score: Var,
    output: Var,
    output_bias: Var,
    hidden_dim: usize,
    direct: bool,
}

impl Bound {
    /// Records every parameter, as trainable leaves or as constants.
    pub fn new<T: Scalar>(g: &mut Graph<T>, p: &ModelParams<T>, trainable: bool) -> Bound {
        let mut leaf = |t: &Tensor<T>| if trainable { g.parameter(t.clone()) } else { g.constant(t.clone()) };
        let embedding = leaf(&p.embedding);
        let mut gru = |w: &GruWeights<T>| GruVars {
            input: leaf(&w.input),
            hidden: leaf(&w.hidden),
            input_bias: leaf(&w.input_bias),
            hidden_bias: leaf(&w.hidden_bias),
        };
        let encoder: Vec<GruVars> = p.encoder.iter().map(&mut gru).collect();
        let decoder: Vec<GruVars> = p.decoder.iter().map(&mut gru).collect();
        Bound {
            embedding,
            encoder,
            decoder,
            keys: leaf(&p.attention_keys),
            query: leaf(&p.attention_query),
            score: leaf(&p.attention_score),
            output: leaf(&p.output),
            output_bias: leaf(&p.output_bias),
            hidden_dim: p.config.hidden_dim,
            direct: p.config.direct_connections,
        }
    }

    /// Parameter handles in [`ModelParams::names`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for l in self.encoder.iter().chain(&self.decoder) {
            out.extend([l.input, l.hidden, l.input_bias, l.hidden_bias]);
        }
        out.extend([self.keys, self.query, self.score, self.output, self.output_bias]);
        out
    }
}

fn gru_step<T: Scalar>(g: &mut Graph<T>, w: &GruVars, x: Var, h: Var, hd: usize) -> Var {
    let xw = g.matmul(x, w.input);
    let gx = g.add(xw, w.input_bias);
    let hu = g.matmul(h, w.hidden);
    let gh = g.add(hu, w.hidden_bias);
    let (xr, hr) = (g.slice_cols(gx, 0, hd), g.slice_cols(gh, 0, hd));
    let (xz, hz) = (g.slice_cols(gx, hd, 2 * hd), g.slice_cols(gh, hd, 2 * hd));
    let (xn, hn) = (g.slice_cols(gx, 2 * hd, 3 * hd), g.slice_cols(gh, 2 * hd, 3 * hd));
    let r_in = g.add(xr, hr);
    let r = g.sigmoid(r_in);
    let z_in = g.add(xz, hz);
    let z = g.sigmoid(z_in);
    let gated = g.mul(hn, r);
    let n_in = g.add(xn, gated);
    let n = g.tanh(n_in);
    // (1 - z) * n + z * h
    let diff = g.sub(h, n);
    let keep = g.mul(diff, z);
    g.add(n, keep)
}

/// Column vector with one value per row.
fn column<T: Scalar>(g: &mut Graph<T>, values: impl Iterator<Item = f64>) -> Var {
    let data: Vec<T> = values.map(T::from_f64).collect();
    let n = data.len();
    g.constant(Tensor::from_rows(n, 1, data))
}

/// Encoder states for a padded batch.
pub struct EncoderOutput {
    /// Top-layer state at each source position, `[B, H]`.
    pub states: Vec<Var>,
    keys: Vec<Var>,
    /// Last real state of every layer, `[B, H]`.
    pub finals: Vec<Var>,
    mask_bias: Option<Var>,
    mean: Option<Var>,
}

impl EncoderOutput {
    pub fn source_len(&self) -> usize {
        self.states.len()
    }
}

/// Encodes PAD-filled `source` rows of equal width.
///
/// `mix`, when given, replaces each row's first embedding with
/// `(1 - w) · emb(a) + w · emb(b)`.
pub fn encode<T: Scalar>(
    g: &mut Graph<T>,
    b: &Bound,
    source: &[Vec<TokenId>],
    lens: &[usize],
    mix: Option<&[(TokenId, TokenId, f64)]>,
) -> EncoderOutput {
    let batch = source.len();
    let width = source.first().map_or(0, Vec::len);
    assert!(width > 0 && lens.iter().all(|&l| l >= 1 && l <= width), "encode: bad source lengths");
    let hd = b.hidden_dim;
    let zero = g.constant(Tensor::zeros(&[batch, hd]));
    let mut hidden = vec![zero; b.encoder.len()];
    let mut states = Vec::with_capacity(width);
    let ragged = lens.iter().any(|&l| l != width);
    for t in 0..width {
        let ids: Vec<TokenId> = source.iter().map(|row| row[t]).collect();
        let mut x = match (t, mix) {
            (0, Some(mix)) => {
                let a_ids: Vec<TokenId> = mix.iter().map(|m| m.0).collect();
                let b_ids: Vec<TokenId> = mix.iter().map(|m| m.1).collect();
                let ea = g.embedding(b.embedding, &a_ids);
                let eb = g.embedding(b.embedding, &b_ids);
                let wa = column(g, mix.iter().map(|m| 1.0 - m.2));
                let wb = column(g, mix.iter().map(|m| m.2));
                let pa = g.mul(ea, wa);
                let pb = g.mul(eb, wb);
                g.add(pa, pb)
            }
            _ => g.embedding(b.embedding, &ids),
        };
        let mask = if ragged && lens.iter().any(|&l| t >= l) {
            Some(column(g, lens.iter().map(|&l| if t < l { 1.0 } else { 0.0 })))
        } else {
            None
        };
        for (l, w) in b.encoder.iter().enumerate() {
            let fresh = gru_step(g, w, x, hidden[l], hd);
            hidden[l] = match mask {
                // m * fresh + (1 - m) * prev, written as prev + m * (fresh - prev)
                Some(m) => {
                    let delta = g.sub(fresh, hidden[l]);
                    let kept = g.mul(delta, m);
                    g.add(hidden[l], kept)
                }
                None => fresh,
            };
            x = hidden[l];
        }
        states.push(x);
    }
    let keys = states.iter().map(|&h| g.matmul(h, b.keys)).collect();
    let mask_bias = ragged.then(|| {
        let data = lens
            .iter()
            .flat_map(|&l| (0..width).map(move |t| T::from_f64(if t < l { 0.0 } else { MASKED_SCORE })))
            .collect();
        g.constant(Tensor::from_rows(batch, width, data))
    });
    let mean = b.direct.then(|| {
        let mut acc: Option<Var> = None;
        for (t, &h) in states.iter().enumerate() {
            let w = column(g, lens.iter().map(|&l| if t < l { 1.0 / l as f64 } else { 0.0 }));
            let term = g.mul(h, w);
            acc = Some(match acc {
                Some(a) => g.add(a, term),
                None => term,
            });
        }
        acc.expect("non-empty source")
    });
    EncoderOutput { states, keys, finals: hidden, mask_bias, mean }
}

/// Selects `rows` of every encoder tensor, for beam reordering or tiling.
pub(crate) fn gather_encoder<T: Scalar>(g: &mut Graph<T>, enc: &EncoderOutput, rows: &[usize]) -> EncoderOutput {
    let mut pick = |v: Var| g.embedding(v, rows);
    EncoderOutput {
        states: enc.states.iter().map(|&v| pick(v)).collect(),
        keys: enc.keys.iter().map(|&v| pick(v)).collect(),
        finals: enc.finals.iter().map(|&v| pick(v)).collect(),
        mask_bias: enc.mask_bias.map(&mut pick),
        mean: enc.mean.map(&mut pick),
    }
}

/// Decoder states seeded from the encoder's final states.
pub(crate) fn initial_decoder_states(b: &Bound, enc: &EncoderOutput) -> Vec<Var> {
    (0..b.decoder.len()).map(|l| enc.finals[l.min(enc.finals.len() - 1)]).collect()
}

pub(crate) struct StepOutput {
    pub logits: Var,
    pub states: Vec<Var>,
    pub context: Var,
    pub attention: Var,
}

/// One decoder step: attend with the previous top state, then advance the stack.
pub(crate) fn decoder_step<T: Scalar>(
    g: &mut Graph<T>,
    b: &Bound,
    enc: &EncoderOutput,
    prev: &[TokenId],
    states: &[Var],
) -> StepOutput {
    let top = *states.last().expect("at least one decoder layer");
    let q = g.matmul(top, b.query);
    let mut scores = Vec::with_capacity(enc.keys.len());
    for &k in &enc.keys {
        let pre = g.add(k, q);
        let act = g.tanh(pre);
        scores.push(g.matmul(act, b.score));
    }
    let mut e = g.concat(&scores);
    if let Some(mask) = enc.mask_bias {
        e = g.add(e, mask);
    }
    let attention = g.softmax(e);
    let mut context: Option<Var> = None;
    for (t, &h) in enc.states.iter().enumerate() {
        let a = g.slice_cols(attention, t, t + 1);
        let term = g.mul(h, a);
        context = Some(match context {
            Some(c) => g.add(c, term),
            None => term,
        });
    }
    let context = context.expect("non-empty source");
    let emb = g.embedding(b.embedding, prev);
    let mut x = g.concat(&[emb, context]);
    let mut next = Vec::with_capacity(states.len());
    for (l, w) in b.decoder.iter().enumerate() {
        x = gru_step(g, w, x, states[l], b.hidden_dim);
        next.push(x);
    }
    let feat = match enc.mean {
        Some(m) => g.concat(&[x, m]),
        None => x,
    };
    let proj = g.matmul(feat, b.output);
    let logits = g.add(proj, b.output_bias);
    StepOutput { logits, states: next, context, attention }
}

/// Summed token cross-entropy of a batch under teacher forcing. PAD positions
/// carry zero weight, so the total equals the sum of per-sentence losses.
pub fn batch_loss<T: Scalar>(g: &mut Graph<T>, b: &Bound, batch: &MiniBatch) -> Var {
    let enc = encode(g, b, &batch.source, &batch.source_lens, None);
    let mut states = initial_decoder_states(b, &enc);
    let width = batch.target.first().map_or(0, Vec::len);
    let mut total: Option<Var> = None;
    let mut prev = vec![BOS; batch.len()];
    for t in 0..width {
        let step = decoder_step(g, b, &enc, &prev, &states);
        let targets: Vec<TokenId> = batch.target.iter().map(|row| row[t]).collect();
        let weights: Vec<T> =
            batch.target_lens.iter().map(|&l| if t < l { T::one() } else { T::zero() }).collect();
        let ce = g.cross_entropy(step.logits, &targets, &weights);
        total = Some(match total {
            Some(acc) => g.add(acc, ce),
            None => ce,
        });
        states = step.states;
        prev = targets;
    }
    total.unwrap_or_else(|| g.constant(Tensor::scalar(T::zero())))
}

/// Summed batch loss and its gradient for every parameter block, scaled by `scale`.
pub fn loss_and_gradients<T: Scalar>(
    params: &ModelParams<T>,
    batch: &MiniBatch,
    scale: T,
) -> Result<(f64, Vec<Tensor<T>>), Error> {
    let mut g = Graph::new();
    let bound = Bound::new(&mut g, params, true);
    let loss = batch_loss(&mut g, &bound, batch);
    let value = g.value(loss).data()[0];
    if !value.is_finite() {
        let op = g.first_non_finite().unwrap_or("loss").to_string();
        return Err(Error::Num(NumError::NonFinite { op }));
    }
    let mut grads = g.backward(loss, scale);
    let out = bound
        .vars()
        .into_iter()
        .zip(params.tensors())
        .map(|(v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value.as_f64(), out))
}
