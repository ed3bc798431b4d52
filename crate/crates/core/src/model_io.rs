//! Checkpoint container: a JSON manifest (config, vocabulary, tensor index)
//! followed by a little-endian `f64` blob, in a single file.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"CTXDCKPT"
//! 8       4     format version, u32 LE (currently 1)
//! 12      8     manifest length in bytes, u64 LE
//! 20      M     manifest, UTF-8 JSON
//! 20+M    ...   tensor blob, f64 LE, row-major
//! ```
//!
//! Each manifest tensor entry carries `name`, `shape` (`[n]` or `[rows, cols]`)
//! and `offset`, the byte offset of its first value from the start of the blob.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector, LAYER_NORM_EPS};

pub const MAGIC: &[u8; 8] = b"CTXDCKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const UNK_TOKEN: &str = "<unk>";
const HEADER_LEN: usize = 20;

pub const GATES: [&str; 4] = ["i", "f", "g", "o"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "lstm")]
    Lstm,
    #[serde(rename = "sha-rnn")]
    ShaRnn,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Lstm => "lstm",
            Arch::ShaRnn => "sha-rnn",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(Arch::Lstm),
            "sha-rnn" | "sharnn" => Ok(Arch::ShaRnn),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

fn default_eps() -> f64 {
    LAYER_NORM_EPS
}

fn default_window() -> usize {
    64
}

/// Architecture hyperparameters. For the SHA-RNN, `num_layers` counts blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub embed_size: usize,
    pub vocab_size: usize,
    pub tied_embeddings: bool,
    #[serde(default)]
    pub attention_block_index: usize,
    #[serde(default)]
    pub boom_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_window")]
    pub memory_window: usize,
}

impl ModelConfig {
    pub fn lstm(num_layers: usize, hidden_size: usize, vocab_size: usize) -> Self {
        ModelConfig {
            arch: Arch::Lstm,
            num_layers,
            hidden_size,
            embed_size: hidden_size,
            vocab_size,
            tied_embeddings: true,
            attention_block_index: 0,
            boom_size: 0,
            layer_norm_eps: LAYER_NORM_EPS,
            memory_window: default_window(),
        }
    }

    /// SHA-RNN with attention in the second-to-last block.
    pub fn sha_rnn(num_blocks: usize, hidden_size: usize, vocab_size: usize) -> Self {
        ModelConfig {
            arch: Arch::ShaRnn,
            num_layers: num_blocks,
            hidden_size,
            embed_size: hidden_size,
            vocab_size,
            tied_embeddings: true,
            attention_block_index: num_blocks.saturating_sub(2),
            boom_size: hidden_size,
            layer_norm_eps: LAYER_NORM_EPS,
            memory_window: default_window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_layers == 0 || self.hidden_size == 0 || self.embed_size == 0 {
            return bad("num_layers, hidden_size and embed_size must be positive".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if self.tied_embeddings && self.embed_size != self.hidden_size {
            return bad(format!(
                "tied embeddings need embed_size == hidden_size ({} != {})",
                self.embed_size, self.hidden_size
            ));
        }
        if !self.layer_norm_eps.is_finite() || self.layer_norm_eps <= 0.0 {
            return bad("layer_norm_eps must be > 0".into());
        }
        if self.arch == Arch::ShaRnn {
            if self.embed_size != self.hidden_size {
                return bad("sha-rnn residual paths need embed_size == hidden_size".into());
            }
            if self.attention_block_index >= self.num_layers {
                return bad(format!(
                    "attention_block_index {} must be < num_blocks {}",
                    self.attention_block_index, self.num_layers
                ));
            }
            if self.boom_size == 0 || !self.boom_size.is_multiple_of(self.hidden_size) {
                return bad(format!(
                    "boom_size {} must be a positive multiple of hidden_size {}",
                    self.boom_size, self.hidden_size
                ));
            }
            if self.memory_window == 0 {
                return bad("memory_window must be positive".into());
            }
        }
        Ok(())
    }

    /// Every tensor this architecture requires, with its shape.
    pub fn canonical_tensors(&self) -> BTreeMap<String, Vec<usize>> {
        let (dh, dx, v) = (self.hidden_size, self.embed_size, self.vocab_size);
        let mut out = BTreeMap::new();
        out.insert("embed.W".to_string(), vec![v, dx]);
        if !self.tied_embeddings {
            out.insert("decoder.W".to_string(), vec![v, dh]);
        }
        out.insert("decoder.b".to_string(), vec![v]);
        let lstm = |out: &mut BTreeMap<String, Vec<usize>>, prefix: &str, d_in: usize| {
            for g in GATES {
                out.insert(format!("{prefix}.W_{g}"), vec![dh, d_in]);
                out.insert(format!("{prefix}.V_{g}"), vec![dh, dh]);
                out.insert(format!("{prefix}.b_{g}"), vec![dh]);
            }
        };
        match self.arch {
            Arch::Lstm => {
                for l in 0..self.num_layers {
                    lstm(&mut out, &format!("lstm.{l}"), if l == 0 { dx } else { dh });
                }
            }
            Arch::ShaRnn => {
                for k in 0..self.num_layers {
                    let b = format!("block.{k}");
                    let mut ln = |name: &str| {
                        out.insert(format!("{b}.{name}.alpha"), vec![dh]);
                        out.insert(format!("{b}.{name}.delta"), vec![dh]);
                    };
                    ln("ln_in");
                    ln("ln_ff");
                    if k == self.attention_block_index {
                        ln("ln_mem");
                        for p in ["Wq", "Wk", "Wv"] {
                            out.insert(format!("{b}.attn.{p}"), vec![dh, dh]);
                        }
                    }
                    lstm(&mut out, &format!("{b}.lstm"), dh);
                    out.insert(format!("{b}.boom.W"), vec![self.boom_size, dh]);
                    out.insert(format!("{b}.boom.b"), vec![self.boom_size]);
                }
            }
        }
        out
    }
}

/// Token/index table. Index 0 is not special; `<unk>` must be present.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocab(format!("duplicate token `{t}`")));
            }
        }
        let unk = *index
            .get(UNK_TOKEN)
            .ok_or_else(|| Error::Vocab(format!("missing `{UNK_TOKEN}` entry")))?;
        Ok(Vocab { tokens, index, unk })
    }

    /// Builds a vocabulary with `<unk>` at index 0 followed by `words`
    /// (deduplicated, first occurrence wins).
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens = vec![UNK_TOKEN.to_string()];
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for w in words {
            if w != UNK_TOKEN && seen.insert(w) {
                tokens.push(w.to_string());
            }
        }
        Vocab::new(tokens).expect("constructed vocab is valid")
    }

    /// Parses `(token, index)` pairs; indices must be dense in `[0, n)`.
    pub fn from_pairs(pairs: &[(String, usize)]) -> Result<Self> {
        let n = pairs.len();
        let mut slots: Vec<Option<String>> = vec![None; n];
        for (tok, idx) in pairs {
            if *idx >= n {
                return Err(Error::Vocab(format!(
                    "index {idx} for `{tok}` leaves a gap (vocabulary has {n} entries)"
                )));
            }
            if slots[*idx].is_some() {
                return Err(Error::Vocab(format!("index {idx} assigned twice")));
            }
            slots[*idx] = Some(tok.clone());
        }
        let tokens = slots.into_iter().map(|s| s.expect("all slots filled")).collect();
        Vocab::new(tokens)
    }

    pub fn pairs(&self) -> Vec<(String, usize)> {
        self.tokens.iter().cloned().zip(0..).collect()
    }

    /// Reads a plain-text vocabulary: one token per line, line number = id.
    pub fn load_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::new(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Maps unknown tokens to `<unk>`.
    pub fn encode(&self, token: &str) -> usize {
        self.get(token).unwrap_or(self.unk)
    }

    /// Strict lookup.
    pub fn id(&self, token: &str) -> Result<usize> {
        self.get(token).ok_or_else(|| Error::OutOfVocabulary(token.to_string()))
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn unk(&self) -> usize {
        self.unk
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A named tensor: rank 1 (`[n]`) or rank 2 (`[rows, cols]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn vector(v: Vector) -> Self {
        Tensor { shape: vec![v.len()], data: v.into_inner() }
    }

    pub fn matrix(m: Matrix) -> Self {
        Tensor { shape: vec![m.rows(), m.cols()], data: m.data().to_vec() }
    }

    pub fn to_vector(&self) -> Vector {
        debug_assert_eq!(self.shape.len(), 1);
        Vector::new(self.data.clone())
    }

    pub fn to_matrix(&self) -> Matrix {
        debug_assert_eq!(self.shape.len(), 2);
        Matrix::from_vec(self.shape[0], self.shape[1], self.data.clone())
            .expect("validated tensor shape")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    vocab: Vec<(String, usize)>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, vocab: Vocab, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        let ckpt = Checkpoint { config, vocab, tensors };
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Checks config, vocabulary size and the exact tensor set and shapes.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.vocab.len() != self.config.vocab_size {
            return Err(Error::Vocab(format!(
                "vocabulary has {} entries, config says {}",
                self.vocab.len(),
                self.config.vocab_size
            )));
        }
        let expected = self.config.canonical_tensors();
        for (name, shape) in &expected {
            let t = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if &t.shape != shape {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape.clone(),
                });
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Parse(format!("tensor `{name}` payload size mismatch")));
            }
            if t.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parse(format!("tensor `{name}` has non-finite values")));
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.contains_key(*k)) {
            return Err(Error::UnexpectedTensor(extra.clone()));
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        Ok(self.tensor(name)?.to_matrix())
    }

    pub fn vector(&self, name: &str) -> Result<Vector> {
        Ok(self.tensor(name)?.to_vector())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut blob: Vec<u8> = Vec::new();
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset: blob.len() as u64,
            });
            for x in &t.data {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        let manifest = Manifest {
            config: self.config.clone(),
            vocab: self.vocab.pairs(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + json.len() + blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(Error::Parse("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let json = bytes
            .get(HEADER_LEN..HEADER_LEN.saturating_add(mlen))
            .ok_or_else(|| Error::Parse("truncated manifest".into()))?;
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        let blob = &bytes[HEADER_LEN + mlen..];
        let vocab = Vocab::from_pairs(&manifest.vocab)?;
        let mut tensors = BTreeMap::new();
        for entry in manifest.tensors {
            let count: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + count * 8;
            let raw = blob.get(start..end).ok_or_else(|| {
                Error::Parse(format!("tensor `{}` extends past end of blob", entry.name))
            })?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if tensors
                .insert(entry.name.clone(), Tensor { shape: entry.shape, data })
                .is_some()
            {
                return Err(Error::Parse(format!("tensor `{}` listed twice", entry.name)));
            }
        }
        Checkpoint::new(manifest.config, vocab, tensors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Random weights drawn uniformly from `[-scale, scale]`; layer-norm
    /// gains are drawn around 1.
    pub fn random(config: ModelConfig, vocab: Vocab, seed: u64, scale: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape) in config.canonical_tensors() {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".alpha") {
                (0..n).map(|_| 1.0 + rng.random_range(-0.5..=0.5) * scale).collect()
            } else {
                (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
            };
            tensors.insert(name, Tensor { shape, data });
        }
        Checkpoint::new(config, vocab, tensors)
    }

    /// All-zero weights: every output distribution is uniform.
    pub fn zeros(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .canonical_tensors()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                (name, Tensor { shape, data: vec![0.0; n] })
            })
            .collect();
        Checkpoint::new(config, vocab, tensors)
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    ckpt.save(path)
}
