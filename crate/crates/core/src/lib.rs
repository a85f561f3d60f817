//! Aspect-specific opinion expression tagging with a BiLSTM, aspect-aware
//! attention and a linear-chain CRF, trained from rule-based weak labels.

pub mod attention;
pub mod autodiff;
pub mod crf;
pub mod data;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod labeler;
pub mod model;
pub mod optim;
pub mod params;
pub mod persist;
pub mod synth;
pub mod trainer;

pub use data::{Aspect, Sentence, Vocabulary};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalReport};
pub use model::{Model, ModelConfig, Variant, Vocabs};
pub use trainer::{train, EpochLog, TrainConfig, TrainOutcome};
