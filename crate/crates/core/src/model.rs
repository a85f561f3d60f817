//! The tagger: input embeddings, BiLSTM encoder, optional aspect attention,
//! emission layer, and either a CRF or per-token softmax output.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{self, AttentionParams, DistanceMode, EmissionParams};
use crate::autodiff::{ParamId, Tape, Tensor, Var};
use crate::crf::{self, NUM_LABELS};
use crate::data::{self, Sentence, Vocabulary};
use crate::embeddings::{input_vector, EmbeddingTable, FeatureConfig, InputTables, TokenIds};
use crate::encoder::{BiLstmStack, DropoutConfig};
use crate::error::{Error, Result};
use crate::params::{ParamStore, INIT_EPSILON};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Attention-weighted emissions decoded by a CRF.
    #[default]
    LstmAttCrf,
    /// No attention; hidden states go straight to the emission layer.
    LstmCrf,
    /// Attention with per-token softmax output and cross-entropy loss.
    LstmAtt,
}

impl Variant {
    pub fn has_attention(self) -> bool {
        matches!(self, Variant::LstmAttCrf | Variant::LstmAtt)
    }

    pub fn has_crf(self) -> bool {
        matches!(self, Variant::LstmAttCrf | Variant::LstmCrf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::LstmAttCrf => "lstm-att-crf",
            Variant::LstmCrf => "lstm-crf",
            Variant::LstmAtt => "lstm-att",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm-att-crf" => Ok(Variant::LstmAttCrf),
            "lstm-crf" => Ok(Variant::LstmCrf),
            "lstm-att" => Ok(Variant::LstmAtt),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected lstm-att-crf, lstm-crf or lstm-att)"
            ))),
        }
    }
}

/// Architecture settings; everything needed to rebuild the parameter layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub word_dim: usize,
    /// Hidden size `d` of each LSTM direction.
    pub hidden: usize,
    pub layers: usize,
    pub features: FeatureConfig,
    pub distance: DistanceMode,
    /// Multiply attention weights by `T` before the emission layer.
    pub rescale_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::LstmAttCrf,
            word_dim: 100,
            hidden: 100,
            layers: 3,
            features: FeatureConfig::default(),
            distance: DistanceMode::Absolute,
            rescale_attention: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("word_dim, hidden and layers must be positive".into()));
        }
        self.features.validate()
    }
}

/// Word, POS and chunk vocabularies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabs {
    pub words: Vocabulary,
    pub pos: Vocabulary,
    pub chunks: Vocabulary,
}

impl Vocabs {
    /// Builds all three vocabularies from preprocessed tokens and raw tags.
    pub fn build<'a, I>(sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let sentences: Vec<&Sentence> = sentences.into_iter().collect();
        if sentences.is_empty() {
            return Err(Error::domain("cannot build vocabularies from an empty corpus"));
        }
        let words: Vec<String> = sentences.iter().flat_map(|s| data::preprocess(&s.tokens)).collect();
        Ok(Vocabs {
            words: Vocabulary::from_tokens(words.iter().map(String::as_str), 1),
            pos: Vocabulary::from_tokens(sentences.iter().flat_map(|s| s.pos_tags.iter().map(String::as_str)), 1),
            chunks: Vocabulary::from_tokens(sentences.iter().flat_map(|s| s.chunk_tags.iter().map(String::as_str)), 1),
        })
    }

    pub fn token_ids(&self, s: &Sentence) -> Vec<TokenIds> {
        data::preprocess(&s.tokens)
            .iter()
            .zip(&s.pos_tags)
            .zip(&s.chunk_tags)
            .map(|((w, p), c)| TokenIds {
                word: self.words.lookup(w),
                pos: self.pos.lookup(p),
                chunk: self.chunks.lookup(c),
            })
            .collect()
    }
}

/// Parameter handles inside the model's store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tables: InputTables,
    pub encoder: BiLstmStack,
    pub attention: Option<AttentionParams>,
    pub emission: EmissionParams,
    /// `(q + 2) x (q + 2)` transition scores; absent for the softmax variant.
    pub transitions: Option<ParamId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocabs: Vocabs,
    pub store: ParamStore,
    pub params: ModelParams,
}

/// Output of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    /// `[T, q]` emission scores.
    pub emissions: Var,
    /// `[T]` attention weights when the variant has attention.
    pub alpha: Option<Var>,
}

impl Model {
    /// Allocates every parameter. Non-embedding values come from
    /// `U(-0.01, 0.01)` except the LSTM forget-gate biases, which start at 1.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, vocabs: Vocabs, words: EmbeddingTable, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if words.dim != config.word_dim {
            return Err(Error::Config(format!(
                "embedding dimension {} does not match the configured word_dim {}",
                words.dim, config.word_dim
            )));
        }
        if words.rows() != vocabs.words.len() {
            return Err(Error::Config(format!(
                "embedding table has {} rows for a vocabulary of {}",
                words.rows(),
                vocabs.words.len()
            )));
        }
        let mut store = ParamStore::new();
        let word = store.add("embed.word", words.matrix);
        if !words.trainable {
            store.get_mut(word).set_requires_grad(false);
        }
        let f = config.features;
        let pos = if f.use_pos {
            Some(store.add_uniform("embed.pos", vec![vocabs.pos.len(), f.pos_dim], INIT_EPSILON, rng)?)
        } else {
            None
        };
        let chunk = if f.use_chunk {
            Some(store.add_uniform("embed.chunk", vec![vocabs.chunks.len(), f.chunk_dim], INIT_EPSILON, rng)?)
        } else {
            None
        };
        let encoder = BiLstmStack::init(&mut store, f.input_dim(config.word_dim), config.hidden, config.layers, rng)?;
        let out = encoder.output_dim();
        let attention = if config.variant.has_attention() {
            Some(AttentionParams::init(&mut store, config.word_dim, out, rng)?)
        } else {
            None
        };
        let emission = EmissionParams::init(&mut store, out, NUM_LABELS, rng)?;
        let transitions = if config.variant.has_crf() {
            let s = NUM_LABELS + 2;
            Some(store.add_uniform("crf.transitions", vec![s, s], INIT_EPSILON, rng)?)
        } else {
            None
        };
        Ok(Model {
            config,
            vocabs,
            store,
            params: ModelParams {
                tables: InputTables { word, pos, chunk },
                encoder,
                attention,
                emission,
                transitions,
            },
        })
    }

    /// Model with a randomly initialised word table.
    pub fn with_random_words<R: Rng + ?Sized>(config: ModelConfig, vocabs: Vocabs, rng: &mut R) -> Result<Self> {
        let table = EmbeddingTable::random(vocabs.words.len(), config.word_dim, rng)?;
        Model::new(config, vocabs, table, rng)
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        s: &Sentence,
        dropout: DropoutConfig,
        rng: &mut R,
    ) -> Result<Forward> {
        s.validate()?;
        let ids = self.vocabs.token_ids(s);
        let inputs = ids
            .iter()
            .map(|&i| input_vector(tape, &self.store, &self.params.tables, i))
            .collect::<Result<Vec<_>>>()?;
        let hidden = self.params.encoder.encode(tape, &self.store, &inputs, dropout, rng)?;

        let alpha = match &self.params.attention {
            Some(ap) => {
                let positions = s.aspect_positions();
                let table = self.params.tables.word;
                let aspect_vecs = positions
                    .iter()
                    .map(|&a| tape.param_row(self.store.get(table), table, ids[a].word))
                    .collect::<Result<Vec<_>>>()?;
                let memory = attention::memory_vectors(
                    tape,
                    &aspect_vecs,
                    &positions,
                    s.len(),
                    self.config.word_dim,
                    self.config.distance,
                )?;
                let w = self.store.bind(tape, ap.weight);
                let b = self.store.bind(tape, ap.bias);
                Some(attention::attention_weights(tape, &hidden, &memory, w, b)?)
            }
            None => None,
        };
        let w = self.store.bind(tape, self.params.emission.weight);
        let b = self.store.bind(tape, self.params.emission.bias);
        let emissions = attention::emissions(tape, &hidden, alpha, w, b, self.config.rescale_attention)?;
        Ok(Forward { emissions, alpha })
    }

    /// Training loss of one labeled sentence: CRF negative log-likelihood, or
    /// mean token cross-entropy for the softmax variant.
    pub fn loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        s: &Sentence,
        dropout: DropoutConfig,
        rng: &mut R,
    ) -> Result<Var> {
        let gold = s
            .labels
            .as_deref()
            .ok_or_else(|| Error::domain("loss needs a labeled sentence"))?;
        let fwd = self.forward(tape, s, dropout, rng)?;
        match self.params.transitions {
            Some(a) => {
                let a = self.store.bind(tape, a);
                crf::nll_var(tape, fwd.emissions, a, gold)
            }
            None => token_cross_entropy(tape, fwd.emissions, gold),
        }
    }

    /// Label sequence: Viterbi under the CRF, or per-token argmax.
    pub fn predict(&self, s: &Sentence) -> Result<Vec<u8>> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, s, DropoutConfig::off(), &mut inference_rng())?;
        let p = tape.value(fwd.emissions);
        match self.params.transitions {
            Some(a) => Ok(crf::viterbi(p, NUM_LABELS, self.store.get(a).values())?.0),
            None => Ok(p
                .chunks(NUM_LABELS)
                .map(|row| {
                    let mut best = 0;
                    for (j, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = j;
                        }
                    }
                    best as u8
                })
                .collect()),
        }
    }

    /// Attention weights at inference time.
    pub fn attention_weights(&self, s: &Sentence) -> Result<Vec<f64>> {
        if !self.config.variant.has_attention() {
            return Err(Error::Config(format!("no attention in the {} variant", self.config.variant)));
        }
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, s, DropoutConfig::off(), &mut inference_rng())?;
        let alpha = fwd.alpha.ok_or_else(|| Error::Config("no attention weights".into()))?;
        Ok(tape.value(alpha).to_vec())
    }

    /// Copies of every parameter tensor, for snapshots.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.store.entries().iter().map(|e| e.tensor.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        for (e, t) in self.store.entries_mut().iter_mut().zip(snapshot) {
            e.tensor.values_mut().copy_from_slice(t.values());
        }
    }
}

/// Dropout is off at inference, so this generator is never drawn from.
fn inference_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

/// Mean over tokens of `logsumexp(P_t) - P_t[y_t]`.
pub fn token_cross_entropy(tape: &mut Tape, p: Var, gold: &[u8]) -> Result<Var> {
    let shape = tape.shape(p).to_vec();
    if shape.len() != 2 || shape[0] != gold.len() {
        return Err(Error::dim("token cross-entropy", &shape, &[gold.len()]));
    }
    let (len, q) = (shape[0], shape[1]);
    let mut terms = Vec::with_capacity(len);
    for (t, &y) in gold.iter().enumerate() {
        if y as usize >= q {
            return Err(Error::domain(format!("label {y} outside 0..{q}")));
        }
        let row = tape.slice(p, t * q, q)?;
        let lse = tape.logsumexp(row)?;
        let picked = tape.slice(p, t * q + y as usize, 1)?;
        terms.push(tape.sub(lse, picked)?);
    }
    let all = tape.concat(&terms)?;
    let total = tape.sum(all);
    Ok(tape.scale(total, 1.0 / len as f64))
}
