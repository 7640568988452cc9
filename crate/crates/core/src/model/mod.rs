//! The shared encoder-attention-decoder.
//!
//! One embedding table serves encoder and decoder inputs and holds the
//! `<2xx>` tokens. Encoder and decoder are stacks of GRU layers; attention is
//! additive, queried with the previous top decoder state, and its context is
//! fed into the bottom decoder layer together with the previous output
//! embedding.

mod decode;
mod forward;

use std::fmt;

use numcore::{Rng, Scalar, Tensor};

use crate::Error;

pub use decode::{ContextVector, TargetSpec, Translation, Translator};
pub use forward::{batch_loss, loss_and_gradients, Bound, EncoderOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub reverse_source: bool,
    /// Feeds the mean encoder state into the output projection.
    pub direct_connections: bool,
    pub beam_width: usize,
    pub max_decode_len: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 64,
            hidden_dim: 128,
            attention_dim: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            reverse_source: true,
            direct_connections: false,
            beam_width: 1,
            max_decode_len: 40,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("beam_width", self.beam_width),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.max_decode_len < 2 {
            return Err(Error::Config("max_decode_len must be at least 2".into()));
        }
        Ok(())
    }

    fn output_input_dim(&self) -> usize {
        if self.direct_connections {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }

    /// `key: value` lines, the format used in checkpoint headers.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("model.vocab_size", self.vocab_size.to_string()),
            ("model.embed_dim", self.embed_dim.to_string()),
            ("model.hidden_dim", self.hidden_dim.to_string()),
            ("model.attention_dim", self.attention_dim.to_string()),
            ("model.encoder_layers", self.encoder_layers.to_string()),
            ("model.decoder_layers", self.decoder_layers.to_string()),
            ("model.reverse_source", self.reverse_source.to_string()),
            ("model.direct_connections", self.direct_connections.to_string()),
            ("model.cell", "gru".to_string()),
            ("model.attention", "additive".to_string()),
            ("model.beam_width", self.beam_width.to_string()),
            ("model.max_decode_len", self.max_decode_len.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_kv(get: impl Fn(&str) -> Option<String>) -> Result<Self, Error> {
        fn parse<V: std::str::FromStr>(get: &impl Fn(&str) -> Option<String>, key: &str) -> Result<V, Error> {
            get(key)
                .ok_or_else(|| Error::CheckpointFormat(format!("missing {key}")))?
                .parse()
                .map_err(|_| Error::CheckpointFormat(format!("bad value for {key}")))
        }
        if get("model.cell").as_deref() != Some("gru") {
            return Err(Error::CheckpointFormat("unsupported recurrent cell".into()));
        }
        let cfg = ModelConfig {
            vocab_size: parse(&get, "model.vocab_size")?,
            embed_dim: parse(&get, "model.embed_dim")?,
            hidden_dim: parse(&get, "model.hidden_dim")?,
            attention_dim: parse(&get, "model.attention_dim")?,
            encoder_layers: parse(&get, "model.encoder_layers")?,
            decoder_layers: parse(&get, "model.decoder_layers")?,
            reverse_source: parse(&get, "model.reverse_source")?,
            direct_connections: parse(&get, "model.direct_connections")?,
            beam_width: parse(&get, "model.beam_width")?,
            max_decode_len: parse(&get, "model.max_decode_len")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Weights of one GRU layer. Gate order in the `3H` columns is reset, update, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct GruWeights<T> {
    pub input: Tensor<T>,
    pub hidden: Tensor<T>,
    pub input_bias: Tensor<T>,
    pub hidden_bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    /// `V × E`, shared by encoder and decoder inputs.
    pub embedding: Tensor<T>,
    pub encoder: Vec<GruWeights<T>>,
    pub decoder: Vec<GruWeights<T>>,
    /// `H × A`, applied to encoder states.
    pub attention_keys: Tensor<T>,
    /// `H × A`, applied to the decoder query.
    pub attention_query: Tensor<T>,
    /// `A × 1`
    pub attention_score: Tensor<T>,
    /// `H (+H) × V`
    pub output: Tensor<T>,
    pub output_bias: Tensor<T>,
}

fn uniform<T: Scalar>(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<T> {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_rows(rows, cols, (0..rows * cols).map(|_| T::from_f64(rng.uniform(-r, r))).collect())
}

impl<T: Scalar> GruWeights<T> {
    fn init(rng: &mut Rng, input_dim: usize, hidden: usize) -> Self {
        GruWeights {
            input: uniform(rng, input_dim, 3 * hidden),
            hidden: uniform(rng, hidden, 3 * hidden),
            input_bias: Tensor::zeros(&[1, 3 * hidden]),
            hidden_bias: Tensor::zeros(&[1, 3 * hidden]),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot-uniform matrices, zero biases.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self, Error> {
        config.validate()?;
        let (e, h, a, v) = (config.embed_dim, config.hidden_dim, config.attention_dim, config.vocab_size);
        let embedding = uniform(rng, v, e);
        let encoder = (0..config.encoder_layers)
            .map(|l| GruWeights::init(rng, if l == 0 { e } else { h }, h))
            .collect();
        let decoder = (0..config.decoder_layers)
            .map(|l| GruWeights::init(rng, if l == 0 { e + h } else { h }, h))
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            embedding,
            encoder,
            decoder,
            attention_keys: uniform(rng, h, a),
            attention_query: uniform(rng, h, a),
            attention_score: uniform(rng, a, 1),
            output: uniform(rng, config.output_input_dim(), v),
            output_bias: Tensor::zeros(&[1, v]),
        })
    }

    /// Names in the fixed order used by optimizers and checkpoints.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for (side, n) in [("encoder", self.encoder.len()), ("decoder", self.decoder.len())] {
            for l in 0..n {
                for part in ["input", "hidden", "input_bias", "hidden_bias"] {
                    names.push(format!("{side}.{l}.{part}"));
                }
            }
        }
        names.extend(
            ["attention.keys", "attention.query", "attention.score", "output.weight", "output.bias"]
                .map(str::to_string),
        );
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.embedding];
        for layer in self.encoder.iter().chain(&self.decoder) {
            out.extend([&layer.input, &layer.hidden, &layer.input_bias, &layer.hidden_bias]);
        }
        out.extend([
            &self.attention_keys,
            &self.attention_query,
            &self.attention_score,
            &self.output,
            &self.output_bias,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embedding];
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.extend([&mut layer.input, &mut layer.hidden, &mut layer.input_bias, &mut layer.hidden_bias]);
        }
        out.extend([
            &mut self.attention_keys,
            &mut self.attention_query,
            &mut self.attention_score,
            &mut self.output,
            &mut self.output_bias,
        ]);
        out
    }

    /// Rebuilds parameters from tensors in [`ModelParams::names`] order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self, Error> {
        let mut template = ModelParams::<T>::init(config, &mut Rng::new(0))?;
        let slots = template.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::CheckpointFormat(format!("expected {} arrays, got {}", slots.len(), tensors.len())));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::CheckpointFormat(format!("array shape {:?} != {:?}", t.shape(), slot.shape())));
            }
            *slot = t;
        }
        Ok(template)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let tensors = self.tensors().into_iter().map(|t| t.cast()).collect();
        ModelParams::from_tensors(&self.config, tensors).expect("same layout")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// `(1 - w) · emb(<2a>) + w · emb(<2b>)` in place of the first source embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetTokenMix {
    pub lang_a: crate::LangCode,
    pub lang_b: crate::LangCode,
    pub w: f64,
}

impl TargetTokenMix {
    pub fn new(lang_a: crate::LangCode, lang_b: crate::LangCode, w: f64) -> Result<Self, Error> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Config(format!("mixing weight {w} outside [0, 1]")));
        }
        Ok(TargetTokenMix { lang_a, lang_b, w })
    }
}

impl fmt::Display for TargetTokenMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}*<2{}>+{:.2}*<2{}>", 1.0 - self.w, self.lang_a, self.w, self.lang_b)
    }
}
