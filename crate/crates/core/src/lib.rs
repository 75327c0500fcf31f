//! Joint Chinese word segmentation and part-of-speech tagging with a
//! character-level bidirectional GRU and a linear-chain CRF.
//!
//! Each character receives a combined boundary/POS label such as `B-NN`;
//! decoding the best label sequence yields words and their tags at once.

#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod archive;
pub mod charrepr;
pub mod corpus;
pub mod crf;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod labelspace;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod synth;
pub mod tagger;
pub mod trainer;

pub use error::{Error, Result};
pub use labelspace::{BoundaryTag, ComboLabel, LabelSpace, TaggedSentence, Word};
pub use model::{Ensemble, Model, ModelParams};
pub use tagger::Tagger;
pub use trainer::{train, TrainConfig};
