//! Word and feature embedding tables.
//!
//! Pretrained vectors are read from the GloVe text layout (`word v1 ... vd`
//! per line); a leading word2vec `V d` header line is skipped.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, Tape, Tensor, Var};
use crate::data::{self, Vocabulary};
use crate::error::{Error, Result};
use crate::params::{uniform, ParamStore, INIT_EPSILON};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub dim: usize,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn random<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::domain("embedding table needs at least one row and column"));
        }
        Ok(EmbeddingTable {
            matrix: Tensor::new(vec![rows, dim], uniform(rows * dim, INIT_EPSILON, rng))?,
            dim,
            trainable: true,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub use_pos: bool,
    pub use_chunk: bool,
    pub pos_dim: usize,
    pub chunk_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            use_pos: true,
            use_chunk: true,
            pos_dim: 25,
            chunk_dim: 25,
        }
    }
}

impl FeatureConfig {
    pub fn none() -> Self {
        FeatureConfig {
            use_pos: false,
            use_chunk: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.use_pos && self.pos_dim == 0) || (self.use_chunk && self.chunk_dim == 0) {
            return Err(Error::Config("enabled feature embeddings need a dimension >= 1".into()));
        }
        Ok(())
    }

    /// Width of the LSTM input for a given word-vector width.
    pub fn input_dim(&self, word_dim: usize) -> usize {
        word_dim
            + if self.use_pos { self.pos_dim } else { 0 }
            + if self.use_chunk { self.chunk_dim } else { 0 }
    }
}

fn is_header(fields: &[&str]) -> bool {
    fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
}

/// Reads only the vector width of an embedding file.
pub fn read_dimension(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || is_header(&fields) {
            continue;
        }
        return Ok(fields.len() - 1);
    }
    Err(Error::domain(format!("{}: embedding file is empty", path.display())))
}

/// Builds the word table for `vocab`: rows present in the file are copied,
/// everything else (including the reserved entries) is drawn from
/// `U(-0.01, 0.01)`.
pub fn parse_pretrained<B: BufRead, R: Rng + ?Sized>(
    reader: B,
    origin: &str,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    let mut dim: Option<usize> = None;
    let mut header_dim: Option<usize> = None;
    let mut found: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if dim.is_none() && header_dim.is_none() && is_header(&fields) {
            header_dim = fields[1].parse().ok();
            continue;
        }
        let d = fields.len() - 1;
        match dim {
            None => {
                if d == 0 {
                    return Err(perr(line_no, "record has no vector components".into()));
                }
                if let Some(h) = header_dim {
                    if h != d {
                        return Err(perr(line_no, format!("header says {h} dimensions, record has {d}")));
                    }
                }
                dim = Some(d);
            }
            Some(expected) if expected != d => {
                return Err(perr(line_no, format!("expected {expected} components, found {d}")));
            }
            _ => {}
        }
        let word = fields[0];
        if word == data::NUM_TOKEN || word == data::UNK_TOKEN || word == data::PAD_TOKEN {
            continue;
        }
        let idx = vocab.lookup(word);
        if idx == data::UNK || found[idx].is_some() {
            continue;
        }
        let vec: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(line_no, format!("bad number: {e}")))?;
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(perr(line_no, "non-finite vector component".into()));
        }
        found[idx] = Some(vec);
    }
    let dim = dim.ok_or_else(|| Error::domain(format!("{origin}: embedding file is empty")))?;
    let mut values = Vec::with_capacity(vocab.len() * dim);
    for row in found {
        match row {
            Some(v) => values.extend(v),
            None => values.extend(uniform(dim, INIT_EPSILON, rng)),
        }
    }
    Ok(EmbeddingTable {
        matrix: Tensor::new(vec![vocab.len(), dim], values)?,
        dim,
        trainable: true,
    })
}

pub fn load_pretrained<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pretrained(BufReader::new(file), &path.display().to_string(), vocab, rng)
}

/// Parameter handles for the per-token input tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputTables {
    pub word: ParamId,
    pub pos: Option<ParamId>,
    pub chunk: Option<ParamId>,
}

/// Token indices for one position: word, POS tag and chunk tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenIds {
    pub word: usize,
    pub pos: usize,
    pub chunk: usize,
}

/// `[word; pos?; chunk?]` for one token. Each lookup binds the shared table
/// row, so gradients from repeated words add into the same row.
pub fn input_vector(
    tape: &mut Tape,
    store: &ParamStore,
    tables: &InputTables,
    ids: TokenIds,
) -> Result<Var> {
    let mut parts = vec![tape.param_row(store.get(tables.word), tables.word, ids.word)?];
    if let Some(p) = tables.pos {
        parts.push(tape.param_row(store.get(p), p, ids.pos)?);
    }
    if let Some(c) = tables.chunk {
        parts.push(tape.param_row(store.get(c), c, ids.chunk)?);
    }
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        tape.concat(&parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(words.iter().copied(), 1)
    }

    #[test]
    fn pretrained_rows_are_copied() {
        let v = vocab(&["good", "waterfalls"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = parse_pretrained("good 0.1 0.2\nbad 1 2\n".as_bytes(), "mem", &v, &mut rng).unwrap();
        assert_eq!(t.dim, 2);
        assert_eq!(t.row(v.lookup("good")), &[0.1, 0.2]);
        let w = t.row(v.lookup("waterfalls"));
        assert!(w.iter().all(|x| x.abs() <= 0.01));
        for special in [data::PAD, data::UNK, data::NUM] {
            assert!(t.row(special).iter().all(|x| x.abs() <= 0.01));
        }
    }

    #[test]
    fn word2vec_header_is_skipped() {
        let v = vocab(&["good"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = parse_pretrained("2 3\ngood 1 2 3\nbad 4 5 6\n".as_bytes(), "mem", &v, &mut rng)
            .unwrap();
        assert_eq!(t.dim, 3);
        assert_eq!(t.row(v.lookup("good")), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn hundred_dim_file() {
        let v = vocab(&["hotel"]);
        let line: String = std::iter::once("hotel".to_string())
            .chain((0..100).map(|i| format!("{}", i as f64 * 0.01)))
            .collect::<Vec<_>>()
            .join(" ");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = parse_pretrained(line.as_bytes(), "mem", &v, &mut rng).unwrap();
        assert_eq!(t.dim, 100);
    }

    #[test]
    fn pretrained_errors() {
        let v = vocab(&["a"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match parse_pretrained("a 1 2\nb 1 2 3\n".as_bytes(), "mem", &v, &mut rng) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_pretrained("".as_bytes(), "mem", &v, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    fn setup(cfg: FeatureConfig) -> (ParamStore, InputTables) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let word = store.add("word", EmbeddingTable::random(10, 100, &mut rng).unwrap().matrix);
        let pos = cfg
            .use_pos
            .then(|| store.add_uniform("pos", vec![6, cfg.pos_dim], 0.01, &mut rng).unwrap());
        let chunk = cfg
            .use_chunk
            .then(|| store.add_uniform("chunk", vec![4, cfg.chunk_dim], 0.01, &mut rng).unwrap());
        (store, InputTables { word, pos, chunk })
    }

    #[test]
    fn input_vector_dimensions() {
        let (store, tables) = setup(FeatureConfig::none());
        let mut tape = Tape::new();
        let ids = TokenIds { word: 4, pos: 1, chunk: 1 };
        let x = input_vector(&mut tape, &store, &tables, ids).unwrap();
        assert_eq!(tape.value(x), store.get(tables.word).row(4));

        let cfg = FeatureConfig::default();
        assert_eq!(cfg.input_dim(100), 150);
        let (store, tables) = setup(cfg);
        let x = input_vector(&mut tape, &store, &tables, ids).unwrap();
        assert_eq!(tape.shape(x), &[150]);
    }

    #[test]
    fn same_word_different_pos_differs_only_in_pos_slice() {
        let (store, tables) = setup(FeatureConfig::default());
        let mut tape = Tape::new();
        let a = input_vector(&mut tape, &store, &tables, TokenIds { word: 3, pos: 1, chunk: 2 }).unwrap();
        let b = input_vector(&mut tape, &store, &tables, TokenIds { word: 3, pos: 4, chunk: 2 }).unwrap();
        let (va, vb) = (tape.value(a), tape.value(b));
        assert_eq!(va[..100], vb[..100]);
        assert_ne!(va[100..125], vb[100..125]);
        assert_eq!(va[125..], vb[125..]);
    }

    #[test]
    fn repeated_lookups_accumulate_into_one_row() {
        let (mut store, tables) = setup(FeatureConfig::none());
        let mut tape = Tape::new();
        let ids = TokenIds { word: 2, pos: 0, chunk: 0 };
        let a = input_vector(&mut tape, &store, &tables, ids).unwrap();
        let b = input_vector(&mut tape, &store, &tables, ids).unwrap();
        let s = tape.add(a, b).unwrap();
        let l = tape.sum(s);
        tape.backward(l).unwrap();
        store.accumulate_grads(&tape, 1.0);
        let g = store.get(tables.word);
        assert!(g.grad()[200..300].iter().all(|&x| x == 2.0));
        assert!(g.grad()[..200].iter().all(|&x| x == 0.0));
    }
}
