//! Multilingual neural machine translation with a single shared model.
//!
//! The source sentence is prefixed with an artificial token such as `<2es>`
//! naming the desired output language; encoder, decoder, attention and the
//! subword vocabulary are shared by every language pair.

mod error;
mod lang;
pub mod wordpiece;

pub use error::Error;
pub use lang::{Direction, LangCode};
pub use wordpiece::{train_vocabulary, TokenId, Vocabulary, WeightedCorpus};
pub mod analysis;
pub mod checkpoint;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod synthetic;
pub mod training;
