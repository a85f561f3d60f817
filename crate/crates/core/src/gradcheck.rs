//! Finite-difference check of every parameter gradient of the full
//! attention + CRF loss on a tiny random model.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Fault, Tape};
use crate::data::{Aspect, Sentence};
use crate::embeddings::FeatureConfig;
use crate::encoder::DropoutConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Variant, Vocabs};

/// Central-difference step.
pub const STEP: f64 = 1e-4;
/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Relative errors divide by `max(|analytic|, |numeric|, FLOOR)`.
pub const FLOOR: f64 = 1e-7;
/// Parameters are redrawn from `U(-INIT_SCALE, INIT_SCALE)` so that
/// gradients are not dwarfed by finite-difference round-off.
pub const INIT_SCALE: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CheckSize {
    /// d=4, d_w=6, 2 layers, 5 tokens, 2 aspects.
    #[default]
    Tiny,
    /// d=6, d_w=8, 2 layers, 8 tokens, 3 aspects.
    Small,
}

impl FromStr for CheckSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(CheckSize::Tiny),
            "small" => Ok(CheckSize::Small),
            other => Err(Error::Config(format!("unknown size `{other}` (expected tiny or small)"))),
        }
    }
}

struct Dims {
    hidden: usize,
    word_dim: usize,
    layers: usize,
    len: usize,
    aspects: Vec<usize>,
}

impl CheckSize {
    fn dims(self) -> Dims {
        match self {
            CheckSize::Tiny => Dims {
                hidden: 4,
                word_dim: 6,
                layers: 2,
                len: 5,
                aspects: vec![1, 3],
            },
            CheckSize::Small => Dims {
                hidden: 6,
                word_dim: 8,
                layers: 2,
                len: 8,
                aspects: vec![0, 4, 6],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor and flat index of the worst entry.
    pub worst_tensor: String,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

const WORDS: [&str; 6] = ["the", "pool", "was", "very", "clean", "lobby"];
const TAGS: [&str; 4] = ["DT", "NN", "VBD", "JJ"];
const CHUNKS: [&str; 3] = ["B-NP", "I-NP", "O"];

fn build(size: CheckSize, seed: u64) -> Result<(Model, Sentence)> {
    let d = size.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs[rng.gen_range(0..xs.len())].to_string();
    let tokens = (0..d.len).map(|_| pick(&mut rng, &WORDS)).collect();
    let pos = (0..d.len).map(|_| pick(&mut rng, &TAGS)).collect();
    let chunks = (0..d.len).map(|_| pick(&mut rng, &CHUNKS)).collect();
    let labels = (0..d.len).map(|_| rng.gen_range(0..2u8)).collect();
    let aspects = d
        .aspects
        .iter()
        .map(|&p| Aspect { position: p, name: "a".into() })
        .collect();
    let sentence = Sentence::new(tokens, pos, chunks, aspects, Some(labels))?;

    // Vocabulary covers every fixture word so embedding rows are all reachable.
    let mut vocab_src = sentence.clone();
    vocab_src.tokens = WORDS.iter().map(|w| w.to_string()).collect();
    vocab_src.pos_tags = (0..WORDS.len()).map(|i| TAGS[i % TAGS.len()].to_string()).collect();
    vocab_src.chunk_tags = (0..WORDS.len()).map(|i| CHUNKS[i % CHUNKS.len()].to_string()).collect();
    vocab_src.aspects.clear();
    vocab_src.labels = None;
    let vocabs = Vocabs::build([&vocab_src, &sentence])?;

    let config = ModelConfig {
        variant: Variant::LstmAttCrf,
        word_dim: d.word_dim,
        hidden: d.hidden,
        layers: d.layers,
        features: FeatureConfig {
            use_pos: true,
            use_chunk: true,
            pos_dim: 3,
            chunk_dim: 2,
        },
        ..Default::default()
    };
    let mut model = Model::with_random_words(config, vocabs, &mut rng)?;
    for e in model.store.entries_mut() {
        for v in e.tensor.values_mut() {
            *v = rng.gen_range(-INIT_SCALE..INIT_SCALE);
        }
    }
    Ok((model, sentence))
}

/// Runs the check. `fault` corrupts one backward rule, for negative controls.
pub fn run(size: CheckSize, seed: u64, fault: Option<Fault>) -> Result<GradCheckReport> {
    let (mut model, sentence) = build(size, seed)?;
    let dropout = DropoutConfig {
        keep_prob: 0.8,
        training: true,
    };
    // The same dropout mask for every evaluation.
    let mask_seed = seed ^ 0x5eed;
    let loss_value = |model: &Model| -> Result<f64> {
        let mut tape = Tape::new();
        let l = model.loss(&mut tape, &sentence, dropout, &mut ChaCha8Rng::seed_from_u64(mask_seed))?;
        Ok(tape.item(l))
    };

    model.store.zero_grads();
    let mut tape = Tape::new();
    if let Some(f) = fault {
        tape.inject_fault(f);
    }
    let loss = model.loss(&mut tape, &sentence, dropout, &mut ChaCha8Rng::seed_from_u64(mask_seed))?;
    tape.backward(loss)?;
    model.store.accumulate_grads(&tape, 1.0);
    let analytic: Vec<Vec<f64>> = model.store.entries().iter().map(|e| e.tensor.grad().to_vec()).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for k in 0..model.store.len() {
        for i in 0..analytic[k].len() {
            let orig = model.store.entries()[k].tensor.values()[i];
            model.store.entries_mut()[k].tensor.values_mut()[i] = orig + STEP;
            let plus = loss_value(&model)?;
            model.store.entries_mut()[k].tensor.values_mut()[i] = orig - STEP;
            let minus = loss_value(&model)?;
            model.store.entries_mut()[k].tensor.values_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[k][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_tensor.is_empty() {
                report.max_rel_error = rel;
                report.worst_tensor = model.store.entries()[k].name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_model_passes() {
        let r = run(CheckSize::Tiny, 1, None).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.checked > 500);
    }

    #[test]
    fn injected_faults_fail() {
        for f in [Fault::Tanh, Fault::Sigmoid, Fault::MatMul] {
            let r = run(CheckSize::Tiny, 1, Some(f)).unwrap();
            assert!(!r.passed(), "{f:?} went unnoticed");
        }
    }

    #[test]
    fn repeatable() {
        let a = run(CheckSize::Tiny, 7, None).unwrap();
        let b = run(CheckSize::Tiny, 7, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sizes_parse() {
        assert_eq!("small".parse::<CheckSize>().unwrap(), CheckSize::Small);
        assert!("huge".parse::<CheckSize>().is_err());
    }
}
