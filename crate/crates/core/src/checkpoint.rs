//! Binary checkpoint files.
//!
//! Layout: `MLNMT`, one version byte, a little-endian `u32` header length, a
//! UTF-8 header of `key: value` lines, then raw little-endian `f32` arrays at
//! the byte offsets listed by the header's `array:` lines.

use std::fs;
use std::path::Path;

use numcore::Tensor;

use crate::model::{ModelConfig, ModelParams};
use crate::training::{TrainConfig, TrainState};
use crate::wordpiece::Vocabulary;
use crate::{Direction, Error};

pub const MAGIC: &[u8; 5] = b"MLNMT";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub train: TrainConfig,
    pub vocab_hash: String,
    /// Directions present in the training data.
    pub directions: Vec<Direction>,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn model_config(&self) -> &ModelConfig {
        &self.state.params.config
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), Error> {
        let actual = vocab.hash();
        if actual != self.vocab_hash {
            return Err(Error::VocabMismatch { expected: self.vocab_hash.clone(), actual });
        }
        Ok(())
    }

    pub fn trained_on(&self, d: &Direction) -> bool {
        self.directions.contains(d)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params = &self.state.params;
        let names = params.names();
        let mut header: Vec<(String, String)> = vec![
            ("format".into(), "mlnmt-checkpoint".into()),
            ("vocab_hash".into(), self.vocab_hash.clone()),
            ("step".into(), self.state.step.to_string()),
            (
                "directions".into(),
                self.directions.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
            ),
        ];
        header.extend(params.config.to_kv());
        header.extend(self.train.to_kv());
        let groups: [(&str, Vec<&Tensor<f32>>); 3] = [
            ("params", params.tensors()),
            ("adam_m", self.state.first_moment.iter().collect()),
            ("adam_v", self.state.second_moment.iter().collect()),
        ];
        let mut data = Vec::new();
        for (prefix, tensors) in &groups {
            for (name, t) in names.iter().zip(tensors) {
                let (r, c) = t.dims2();
                header.push(("array".into(), format!("{prefix}/{name} {r}x{c} {}", data.len())));
                for v in t.data() {
                    data.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let text: String = header.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
        let mut out = Vec::with_capacity(10 + text.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, Error> {
        if bytes.len() < MAGIC.len() {
            return Err(if MAGIC.starts_with(bytes) { Error::TruncatedCheckpoint } else { Error::BadMagic });
        }
        if &bytes[..5] != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = *bytes.get(5).ok_or(Error::TruncatedCheckpoint)?;
        if version != VERSION {
            return Err(Error::BadVersion(version));
        }
        let len_bytes: [u8; 4] = bytes.get(6..10).ok_or(Error::TruncatedCheckpoint)?.try_into().expect("4 bytes");
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let header_bytes = bytes.get(10..10 + header_len).ok_or(Error::TruncatedCheckpoint)?;
        let data = &bytes[10 + header_len..];
        let text = std::str::from_utf8(header_bytes).map_err(|_| Error::CheckpointFormat("header is not UTF-8".into()))?;

        let mut kv: Vec<(&str, &str)> = Vec::new();
        let mut arrays: Vec<(&str, usize, usize, usize)> = Vec::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once(": ")
                .ok_or_else(|| Error::CheckpointFormat(format!("bad header line {line:?}")))?;
            if k == "array" {
                arrays.push(parse_array(v)?);
            } else {
                kv.push((k, v));
            }
        }
        let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_string());
        let field = |key: &str| get(key).ok_or_else(|| Error::CheckpointFormat(format!("missing {key}")));
        if field("format")? != "mlnmt-checkpoint" {
            return Err(Error::CheckpointFormat("unknown format".into()));
        }
        let config = ModelConfig::from_kv(get)?;
        let train = TrainConfig::from_kv(get)?;
        let step: u64 = field("step")?.parse().map_err(|_| Error::CheckpointFormat("bad step".into()))?;
        let dir_field = field("directions")?;
        let directions = dir_field
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Direction>, _>>()?;

        let template = ModelParams::<f32>::init(&config, &mut numcore::Rng::new(0))?;
        let names = template.names();
        let mut groups: Vec<Vec<Tensor<f32>>> = Vec::with_capacity(3);
        let mut next = arrays.iter();
        for prefix in ["params", "adam_m", "adam_v"] {
            let mut tensors = Vec::with_capacity(names.len());
            for (name, slot) in names.iter().zip(template.tensors()) {
                let &(array_name, r, c, offset) =
                    next.next().ok_or_else(|| Error::CheckpointFormat(format!("missing array {prefix}/{name}")))?;
                if array_name != format!("{prefix}/{name}") || slot.shape() != [r, c] {
                    return Err(Error::CheckpointFormat(format!("unexpected array {array_name} {r}x{c}")));
                }
                let raw = data.get(offset..offset + 4 * r * c).ok_or(Error::TruncatedCheckpoint)?;
                let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
                tensors.push(Tensor::from_rows(r, c, values));
            }
            groups.push(tensors);
        }
        if next.next().is_some() {
            return Err(Error::CheckpointFormat("unexpected extra arrays".into()));
        }
        let second_moment = groups.pop().expect("three groups");
        let first_moment = groups.pop().expect("three groups");
        let params = ModelParams::from_tensors(&config, groups.pop().expect("three groups"))?;
        Ok(Checkpoint {
            train,
            vocab_hash: field("vocab_hash")?,
            directions,
            state: TrainState { params, first_moment, second_moment, step },
        })
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, Error> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}

fn parse_array(v: &str) -> Result<(&str, usize, usize, usize), Error> {
    let bad = || Error::CheckpointFormat(format!("bad array line {v:?}"));
    let mut parts = v.split(' ');
    let name = parts.next().ok_or_else(bad)?;
    let (r, c) = parts.next().and_then(|s| s.split_once('x')).ok_or_else(bad)?;
    let offset = parts.next().ok_or_else(bad)?;
    Ok((
        name,
        r.parse().map_err(|_| bad())?,
        c.parse().map_err(|_| bad())?,
        offset.parse().map_err(|_| bad())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::LangCode;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig { embed_dim: 4, hidden_dim: 6, attention_dim: 3, ..ModelConfig::new(12) };
        let mut state = TrainState::init(&cfg, 3).unwrap();
        state.step = 17;
        state.first_moment[2].data_mut()[1] = 0.25;
        Checkpoint {
            train: TrainConfig::default(),
            vocab_hash: "abc123".into(),
            directions: vec![Direction::new(LangCode::new("a").unwrap(), LangCode::new("e").unwrap())],
            state,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn distinct_errors() {
        let bytes = sample().to_bytes();
        for cut in [3, 8, 40, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::TruncatedCheckpoint)), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic)));
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadVersion(9))));
        assert_eq!(Error::TruncatedCheckpoint.to_string(), "truncated checkpoint");
    }

    #[test]
    fn vocab_hash_is_checked() {
        let ck = sample();
        let lines = vec!["ab".to_string()];
        let vocab = crate::train_vocabulary(&[crate::WeightedCorpus { lines: &lines, weight: 1.0 }], 10, &[]).unwrap();
        assert!(matches!(ck.check_vocab(&vocab), Err(Error::VocabMismatch { .. })));
    }
}
