//! Model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "ASOPMDL\0"
//! version    u32
//! header     u64 length + JSON (config and vocabularies)
//! records    u32 count, then per tensor:
//!              u32 name length, name, u32 rank, u64 dims..., f64 values...
//! checksum   SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::data::Vocabulary;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Vocabs};

pub const MAGIC: &[u8; 8] = b"ASOPMDL\0";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct VocabData {
    tokens: Vec<String>,
    counts: Vec<usize>,
}

impl VocabData {
    fn from(v: &Vocabulary) -> Self {
        VocabData {
            tokens: v.tokens().to_vec(),
            counts: v.counts().to_vec(),
        }
    }

    fn into_vocab(self) -> Result<Vocabulary> {
        Vocabulary::from_token_list(self.tokens, self.counts)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    word_trainable: bool,
    words: VocabData,
    pos: VocabData,
    chunks: VocabData,
}

/// Serialises a model to bytes.
pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let word = model.store.get(model.params.tables.word);
    let header = Header {
        config: model.config,
        word_trainable: word.requires_grad(),
        words: VocabData::from(&model.vocabs.words),
        pos: VocabData::from(&model.vocabs.pos),
        chunks: VocabData::from(&model.vocabs.chunks),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for e in model.store.entries() {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.tensor.shape().len() as u32).to_le_bytes());
        for &d in e.tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in e.tensor.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ModelFormat("file is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::ModelFormat("length overflows".into()))
    }
}

/// Parses bytes produced by [`to_bytes`]. Nothing is returned unless the
/// checksum, version and every record check out.
pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 4 + CHECKSUM_LEN {
        return Err(Error::ModelFormat("file is truncated".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic bytes)".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::ModelFormat("checksum mismatch; the file is corrupted".into()));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let hlen = r.len()?;
    let header: Header =
        serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::ModelFormat(format!("bad header: {e}")))?;
    let vocabs = Vocabs {
        words: header.words.into_vocab()?,
        pos: header.pos.into_vocab()?,
        chunks: header.chunks.into_vocab()?,
    };
    let config = header.config;
    // Rebuild the layout, then overwrite every value from the records.
    let placeholder = EmbeddingTable {
        matrix: Tensor::zeros(vec![vocabs.words.len(), config.word_dim])?,
        dim: config.word_dim,
        trainable: header.word_trainable,
    };
    let mut model = Model::new(config, vocabs, placeholder, &mut ChaCha8Rng::seed_from_u64(0))?;

    let count = r.u32()? as usize;
    if count != model.store.len() {
        return Err(Error::ModelFormat(format!(
            "expected {} tensors, file has {count}",
            model.store.len()
        )));
    }
    for entry in model.store.entries_mut() {
        let nlen = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?).map_err(|_| Error::ModelFormat("tensor name is not UTF-8".into()))?;
        if name != entry.name {
            return Err(Error::ModelFormat(format!("expected tensor `{}`, found `{name}`", entry.name)));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        if shape != entry.tensor.shape() {
            return Err(Error::ModelFormat(format!(
                "tensor `{name}` has shape {shape:?}, expected {:?}",
                entry.tensor.shape()
            )));
        }
        let raw = r.take(entry.tensor.numel() * 8)?;
        for (dst, chunk) in entry.tensor.values_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if r.pos != body.len() {
        return Err(Error::ModelFormat("trailing bytes after the last tensor".into()));
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
