//! Plain (undecomposed) forward passes for the stacked LSTM and SHA-RNN
//! language models.

pub mod lstm;
pub mod sha;

use crate::error::{Error, Result};
use crate::model_io::{Arch, Checkpoint, ModelConfig, Vocab};
use crate::numerics::{log_sum_exp, Matrix, Vector};

pub use lstm::{lstm_cell_step, Gate, LstmState, LstmWeights};
pub use sha::{sha_block_step, AttentionMemory, BlockOutput, LayerNormParams, ShaBlockWeights};

#[derive(Clone, Debug)]
pub enum Body {
    Lstm(Vec<LstmWeights>),
    Sha(Vec<ShaBlockWeights>),
}

/// Typed view of a validated checkpoint.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub embed: Matrix,
    /// `None` when the decoder is tied to the embedding.
    pub decoder: Option<Matrix>,
    pub decoder_bias: Vector,
    pub body: Body,
}

/// Activations at every traced site, per position, plus the logits.
#[derive(Clone, Debug)]
pub struct Trace {
    pub sites: Vec<Vec<Vector>>,
    pub logits: Vec<Vector>,
}

impl Model {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.validate()?;
        let cfg = &ckpt.config;
        let body = match cfg.arch {
            Arch::Lstm => Body::Lstm(
                (0..cfg.num_layers)
                    .map(|l| LstmWeights::from_checkpoint(ckpt, &format!("lstm.{l}")))
                    .collect::<Result<_>>()?,
            ),
            Arch::ShaRnn => Body::Sha(
                (0..cfg.num_layers)
                    .map(|k| ShaBlockWeights::from_checkpoint(ckpt, k))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Model {
            config: cfg.clone(),
            vocab: ckpt.vocab.clone(),
            embed: ckpt.matrix("embed.W")?,
            decoder: if cfg.tied_embeddings { None } else { Some(ckpt.matrix("decoder.W")?) },
            decoder_bias: ckpt.vector("decoder.b")?,
            body,
        })
    }

    pub fn decoder_matrix(&self) -> &Matrix {
        self.decoder.as_ref().unwrap_or(&self.embed)
    }

    pub fn embedding(&self, token: usize) -> Vector {
        Vector::new(self.embed.row(token).to_vec())
    }

    pub fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        let vocab_size = self.config.vocab_size;
        match tokens.iter().find(|&&t| t >= vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange { id, vocab_size }),
            None => Ok(()),
        }
    }

    /// Names of the traced sites, in the order used by [`Trace::sites`].
    pub fn site_names(&self) -> Vec<String> {
        match &self.body {
            Body::Lstm(layers) => (0..layers.len())
                .flat_map(|l| [format!("lstm.{l}.h"), format!("lstm.{l}.c")])
                .collect(),
            Body::Sha(blocks) => blocks
                .iter()
                .enumerate()
                .flat_map(|(k, b)| sha::block_site_names(k, b.attn.is_some()))
                .collect(),
        }
    }

    pub fn decode(&self, h: &[f64]) -> Vector {
        let mut logits = self.decoder_matrix().matvec(h);
        logits.add_assign(&self.decoder_bias);
        logits
    }

    pub fn forward(&self, tokens: &[usize]) -> Result<Vec<Vector>> {
        Ok(self.forward_trace(tokens)?.logits)
    }

    pub fn forward_trace(&self, tokens: &[usize]) -> Result<Trace> {
        self.forward_trace_with(tokens, true)
    }

    /// `use_attention = false` skips the attention branch of every block.
    pub fn forward_trace_with(&self, tokens: &[usize], use_attention: bool) -> Result<Trace> {
        self.check_tokens(tokens)?;
        let d = self.config.hidden_size;
        let mut sites = Vec::with_capacity(tokens.len());
        let mut logits = Vec::with_capacity(tokens.len());
        match &self.body {
            Body::Lstm(layers) => {
                let mut states = vec![LstmState::zeros(d); layers.len()];
                for &tok in tokens {
                    let mut x = self.embedding(tok);
                    let mut pos_sites = Vec::with_capacity(2 * layers.len());
                    for (w, state) in layers.iter().zip(states.iter_mut()) {
                        *state = lstm_cell_step(w, &x, &state.h, &state.c);
                        pos_sites.push(state.h.clone());
                        pos_sites.push(state.c.clone());
                        x = state.h.clone();
                    }
                    logits.push(self.decode(&x));
                    sites.push(pos_sites);
                }
            }
            Body::Sha(blocks) => {
                let mut states = vec![LstmState::zeros(d); blocks.len()];
                let mut memories: Vec<AttentionMemory> =
                    blocks.iter().map(|_| AttentionMemory::new(self.config.memory_window)).collect();
                for &tok in tokens {
                    let mut x = self.embedding(tok);
                    let mut pos_sites = Vec::new();
                    for ((b, state), mem) in blocks.iter().zip(states.iter_mut()).zip(memories.iter_mut()) {
                        let out = sha_block_step(b, &x, state, mem, use_attention);
                        pos_sites.extend(out.sites());
                        x = out.output;
                    }
                    logits.push(self.decode(&x));
                    sites.push(pos_sites);
                }
            }
        }
        Ok(Trace { sites, logits })
    }

    /// `exp` of the mean next-token negative log-likelihood (natural log).
    pub fn perplexity(&self, tokens: &[usize]) -> Result<f64> {
        if tokens.len() < 2 {
            return Err(Error::InvalidInput(
                "perplexity needs a stream of at least two tokens".into(),
            ));
        }
        let logits = self.forward(&tokens[..tokens.len() - 1])?;
        let nll: f64 = logits
            .iter()
            .zip(&tokens[1..])
            .map(|(l, &next)| log_sum_exp(l) - l[next])
            .sum();
        Ok((nll / (tokens.len() - 1) as f64).exp())
    }
}
