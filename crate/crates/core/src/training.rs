//! Optimization over mixed multilingual batches.
//!
//! Batches are a pure function of `(seed, step)`: epoch `e` uses the plan
//! seeded with `derive(seed, e)`, and step `s` takes the `s mod n`-th slice of
//! it. Resuming from a checkpoint therefore needs only the step count.

use std::fmt;
use std::str::FromStr;

use numcore::{Rng, Tensor};

use crate::corpus::{Dataset, EncodedPair, EpochPlan, MiniBatch, SamplingStrategy};
use crate::model::{loss_and_gradients, ModelConfig, ModelParams};
use crate::wordpiece::Vocabulary;
use crate::{Direction, Error};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm threshold.
    pub clip: f64,
    /// 0 disables periodic evaluation; the final step is always recorded.
    pub eval_every: u64,
    pub seed: u64,
    pub strategy: SamplingStrategy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip: 5.0,
            eval_every: 0,
            seed: 1,
            strategy: SamplingStrategy::Oversample,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config("clip must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("train.steps", self.steps.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.optimizer", self.optimizer.to_string()),
            ("train.learning_rate", self.learning_rate.to_string()),
            ("train.beta1", self.beta1.to_string()),
            ("train.beta2", self.beta2.to_string()),
            ("train.adam_eps", self.adam_eps.to_string()),
            ("train.clip", self.clip.to_string()),
            ("train.eval_every", self.eval_every.to_string()),
            ("train.seed", self.seed.to_string()),
            ("train.strategy", self.strategy.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_kv(get: impl Fn(&str) -> Option<String>) -> Result<Self, Error> {
        fn parse<V: FromStr>(get: &impl Fn(&str) -> Option<String>, key: &str) -> Result<V, Error> {
            get(key)
                .ok_or_else(|| Error::CheckpointFormat(format!("missing {key}")))?
                .parse()
                .map_err(|_| Error::CheckpointFormat(format!("bad value for {key}")))
        }
        Ok(TrainConfig {
            steps: parse(&get, "train.steps")?,
            batch_size: parse(&get, "train.batch_size")?,
            optimizer: parse(&get, "train.optimizer")?,
            learning_rate: parse(&get, "train.learning_rate")?,
            beta1: parse(&get, "train.beta1")?,
            beta2: parse(&get, "train.beta2")?,
            adam_eps: parse(&get, "train.adam_eps")?,
            clip: parse(&get, "train.clip")?,
            eval_every: parse(&get, "train.eval_every")?,
            seed: parse(&get, "train.seed")?,
            strategy: parse(&get, "train.strategy")?,
        })
    }
}

/// Parameters plus optimizer moments and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ModelParams<f32>,
    pub first_moment: Vec<Tensor<f32>>,
    pub second_moment: Vec<Tensor<f32>>,
    pub step: u64,
}

impl TrainState {
    pub fn new(params: ModelParams<f32>) -> Self {
        let zeros: Vec<Tensor<f32>> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        TrainState { params, first_moment: zeros.clone(), second_moment: zeros, step: 0 }
    }

    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, Error> {
        let mut rng = Rng::derive(seed, 0x1a17);
        Ok(TrainState::new(ModelParams::init(config, &mut rng)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportPoint {
    pub step: u64,
    /// Mean per-sentence loss over the steps since the previous point.
    pub loss: f64,
    pub dev_bleu: Vec<(Direction, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub points: Vec<ReportPoint>,
}

impl TrainReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tloss\tdirection\tdev_bleu\n");
        for p in &self.points {
            if p.dev_bleu.is_empty() {
                out.push_str(&format!("{}\t{:.6}\t-\t-\n", p.step, p.loss));
            }
            for (d, b) in &p.dev_bleu {
                out.push_str(&format!("{}\t{:.6}\t{}\t{:.2}\n", p.step, p.loss, d, b));
            }
        }
        out
    }
}

/// Per-step slices of a dataset in seeded epoch order.
struct Stream<'a> {
    data: &'a Dataset,
    strategy: SamplingStrategy,
    seed: u64,
    per_step: usize,
    cached: Option<(u64, EpochPlan)>,
}

impl<'a> Stream<'a> {
    fn new(data: &'a Dataset, strategy: SamplingStrategy, seed: u64, per_step: usize) -> Self {
        Stream { data, strategy, seed, per_step, cached: None }
    }

    fn take(&mut self, step: u64) -> Result<Vec<(&'a EncodedPair, Direction)>, Error> {
        if self.per_step == 0 {
            return Ok(Vec::new());
        }
        let total: usize = match self.strategy {
            SamplingStrategy::Natural => self.data.examples.iter().map(Vec::len).sum(),
            SamplingStrategy::Oversample => {
                self.data.examples.iter().map(Vec::len).max().unwrap_or(0) * self.data.examples.len()
            }
        };
        if total == 0 {
            return Err(Error::EmptyCorpora);
        }
        let per_epoch = total.div_ceil(self.per_step) as u64;
        let epoch = step / per_epoch;
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            let plan = self.data.plan(self.strategy, Rng::derive(self.seed, epoch).next_u64())?;
            self.cached = Some((epoch, plan));
        }
        let plan = &self.cached.as_ref().expect("just filled").1;
        let start = (step % per_epoch) as usize * self.per_step;
        let end = (start + self.per_step).min(plan.len());
        let data = self.data;
        Ok(plan.order[start..end]
            .iter()
            .map(|&(d, i)| {
                let dir = &plan.directions[d];
                let slot = data.directions.iter().position(|x| x == dir).expect("plan built from this dataset");
                (data.get(slot, i), dir.clone())
            })
            .collect())
    }
}

/// Where batches come from: one dataset, or new-direction data mixed with replayed original data.
pub enum BatchSource<'a> {
    Single(&'a Dataset),
    Mixture { new: &'a Dataset, replay: &'a Dataset, replay_ratio: f64 },
}

/// Runs optimization steps on a [`TrainState`].
pub struct Trainer<'a> {
    config: TrainConfig,
    reverse: bool,
    streams: Vec<Stream<'a>>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &TrainConfig, model: &ModelConfig, source: BatchSource<'a>) -> Result<Self, Error> {
        config.validate()?;
        let b = config.batch_size;
        let streams = match source {
            BatchSource::Single(d) => vec![Stream::new(d, config.strategy, config.seed, b)],
            BatchSource::Mixture { new, replay, replay_ratio } => {
                if !(0.0..=1.0).contains(&replay_ratio) {
                    return Err(Error::Config(format!("replay ratio {replay_ratio} outside [0, 1]")));
                }
                let n_replay = (b as f64 * replay_ratio).round() as usize;
                vec![
                    Stream::new(new, config.strategy, config.seed, b - n_replay),
                    Stream::new(replay, config.strategy, Rng::derive(config.seed, 0x5e_91a7).next_u64(), n_replay),
                ]
            }
        };
        Ok(Trainer { config: config.clone(), reverse: model.reverse_source, streams })
    }

    /// The batch used at `step`.
    pub fn batch(&mut self, step: u64) -> Result<MiniBatch, Error> {
        let mut pairs = Vec::with_capacity(self.config.batch_size);
        for s in &mut self.streams {
            pairs.extend(s.take(step)?);
        }
        Ok(MiniBatch::from_pairs(&pairs, self.reverse))
    }

    /// One optimizer update. On a non-finite loss the state is left untouched.
    pub fn step(&mut self, state: &mut TrainState) -> Result<f64, Error> {
        let batch = self.batch(state.step)?;
        let n = batch.len() as f32;
        let (loss, mut grads) = match loss_and_gradients(&state.params, &batch, 1.0 / n) {
            Ok(x) => x,
            Err(Error::Num(numcore::NumError::NonFinite { op })) => {
                return Err(Error::NonFiniteLoss { step: state.step, op })
            }
            Err(e) => return Err(e),
        };
        let norm = grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteLoss { step: state.step, op: "gradient".into() });
        }
        if norm > self.config.clip {
            let scale = (self.config.clip / norm) as f32;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
        }
        let t = state.step + 1;
        let c = &self.config;
        let lr = c.learning_rate as f32;
        let params = state.params.tensors_mut();
        match c.optimizer {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(&grads) {
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (c.beta1 as f32, c.beta2 as f32, c.adam_eps as f32);
                let corr1 = 1.0 - (c.beta1.powf(t as f64)) as f32;
                let corr2 = 1.0 - (c.beta2.powf(t as f64)) as f32;
                for (((p, g), m), v) in
                    params.into_iter().zip(&grads).zip(&mut state.first_moment).zip(&mut state.second_moment)
                {
                    for (((w, &d), m), v) in
                        p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
                    {
                        *m = b1 * *m + (1.0 - b1) * d;
                        *v = b2 * *v + (1.0 - b2) * d * d;
                        *w -= lr * (*m / corr1) / ((*v / corr2).sqrt() + eps);
                    }
                }
            }
        }
        state.step = t;
        Ok(loss / n as f64)
    }
}

/// Dev-set scorer called at evaluation points.
pub type DevEval<'e> = dyn FnMut(&ModelParams<f32>) -> Result<Vec<(Direction, f64)>, Error> + 'e;

/// Trains until `state.step == config.steps`.
pub fn train(
    config: &TrainConfig,
    state: &mut TrainState,
    source: BatchSource<'_>,
    mut dev: Option<&mut DevEval<'_>>,
) -> Result<TrainReport, Error> {
    let mut trainer = Trainer::new(config, &state.params.config.clone(), source)?;
    let mut report = TrainReport::default();
    let (mut acc, mut count) = (0.0, 0u64);
    while state.step < config.steps {
        acc += trainer.step(state)?;
        count += 1;
        let at_eval = config.eval_every > 0 && state.step.is_multiple_of(config.eval_every);
        if at_eval || state.step == config.steps {
            let dev_bleu = match dev.as_mut() {
                Some(f) => f(&state.params)?,
                None => Vec::new(),
            };
            report.points.push(ReportPoint { step: state.step, loss: acc / count as f64, dev_bleu });
            acc = 0.0;
            count = 0;
        }
    }
    Ok(report)
}

/// Continues training on new directions for `fraction` of the steps already taken.
///
/// Fine-tuning is a fresh optimizer phase: moments restart at zero and batches
/// are indexed from zero, so with no replay it is exactly [`train`] on `new`
/// starting from the current parameters. Every language in `new` must already
/// own a `<2xx>` token. Returns the number of steps run; `fraction == 0`
/// leaves the state unchanged.
pub fn incremental_train(
    config: &TrainConfig,
    state: &mut TrainState,
    vocab: &Vocabulary,
    new: &Dataset,
    replay: Option<&Dataset>,
    replay_ratio: f64,
    fraction: f64,
) -> Result<u64, Error> {
    if !(fraction >= 0.0) {
        return Err(Error::Config(format!("fraction {fraction} must be non-negative")));
    }
    for d in &new.directions {
        vocab.require_language(&d.source)?;
        vocab.require_language(&d.target)?;
    }
    let extra = (fraction * state.step as f64).round() as u64;
    if extra == 0 {
        return Ok(0);
    }
    let cfg = TrainConfig { steps: extra, ..config.clone() };
    let source = match replay {
        Some(r) if replay_ratio > 0.0 => BatchSource::Mixture { new, replay: r, replay_ratio },
        _ => BatchSource::Single(new),
    };
    let mut phase = TrainState::new(state.params.clone());
    train(&cfg, &mut phase, source, None)?;
    state.params = phase.params;
    state.first_moment = phase.first_moment;
    state.second_moment = phase.second_moment;
    state.step += extra;
    Ok(extra)
}
