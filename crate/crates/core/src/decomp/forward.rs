use crate::error::{Error, Result};
use crate::model::sha::ShaBlockWeights;
use crate::model::{Body, Model, Trace};

use super::layers::{decompose_attention, decompose_boom, decompose_layer_norm, DecomposedMemory};
use super::lstm::{decompose_lstm_step, StepInput};
use super::policy::{InteractionPolicy, Part};
use super::{DecomposedPair, RelevantSpan};

/// Decomposed activations at the same sites as [`Trace`], plus the logits.
#[derive(Clone, Debug)]
pub struct DecomposedTrace {
    pub sites: Vec<Vec<DecomposedPair>>,
    pub logits: Vec<DecomposedPair>,
    /// Whether each input position was inside the relevant span.
    pub in_span: Vec<bool>,
}

impl DecomposedTrace {
    /// Largest scaled reconstruction error over all sites and logits.
    pub fn max_error_against(&self, plain: &Trace) -> f64 {
        let mut worst: f64 = 0.0;
        for (dec, full) in self.sites.iter().zip(&plain.sites) {
            for (p, v) in dec.iter().zip(full) {
                worst = worst.max(p.reconstruction_error(v));
            }
        }
        for (p, v) in self.logits.iter().zip(&plain.logits) {
            worst = worst.max(p.reconstruction_error(v));
        }
        worst
    }
}

/// Runs decomposed passes over one model with a fixed policy.
#[derive(Clone, Copy, Debug)]
pub struct Decomposer<'a> {
    pub model: &'a Model,
    pub policy: &'a InteractionPolicy,
}

impl<'a> Decomposer<'a> {
    pub fn new(model: &'a Model, policy: &'a InteractionPolicy) -> Self {
        Decomposer { model, policy }
    }

    /// A span reaching past the end of `tokens` is accepted; positions that
    /// were never processed simply contribute nothing.
    pub fn run(&self, tokens: &[usize], span: RelevantSpan) -> Result<DecomposedTrace> {
        self.model.check_tokens(tokens)?;
        let in_span: Vec<bool> = (0..tokens.len()).map(|t| span.contains(t)).collect();
        match &self.model.body {
            Body::Lstm(layers) => self.run_lstm(layers, tokens, in_span),
            Body::Sha(blocks) => self.run_sha(blocks, tokens, in_span),
        }
    }

    fn decode(&self, h: &DecomposedPair) -> DecomposedPair {
        let dec = self.model.decoder_matrix();
        let mut logits = h.map_linear(|v| dec.matvec(v));
        logits.part_mut(self.policy.decoder_bias_to).add_assign(&self.model.decoder_bias);
        logits
    }

    fn run_lstm(
        &self,
        layers: &[crate::model::LstmWeights],
        tokens: &[usize],
        in_span: Vec<bool>,
    ) -> Result<DecomposedTrace> {
        let d = self.model.config.hidden_size;
        let mut states = vec![(DecomposedPair::zeros(d), DecomposedPair::zeros(d)); layers.len()];
        let mut sites = Vec::with_capacity(tokens.len());
        let mut logits = Vec::with_capacity(tokens.len());
        for (&tok, &relevant) in tokens.iter().zip(&in_span) {
            let emb = self.model.embedding(tok);
            let mut pos_sites = Vec::with_capacity(2 * layers.len());
            let mut below: Option<DecomposedPair> = None;
            for (w, (h, c)) in layers.iter().zip(states.iter_mut()) {
                let input = match &below {
                    None => StepInput::Token { embedding: &emb, in_span: relevant },
                    Some(pair) => StepInput::Pair(pair),
                };
                let (h_new, c_new) = decompose_lstm_step(w, input, h, c, self.policy);
                *h = h_new;
                *c = c_new;
                pos_sites.push(h.clone());
                pos_sites.push(c.clone());
                below = Some(h.clone());
            }
            logits.push(self.decode(below.as_ref().expect("at least one layer")));
            sites.push(pos_sites);
        }
        Ok(DecomposedTrace { sites, logits, in_span })
    }

    fn run_sha(&self, blocks: &[ShaBlockWeights], tokens: &[usize], in_span: Vec<bool>) -> Result<DecomposedTrace> {
        let d = self.model.config.hidden_size;
        let window = self.model.config.memory_window;
        let mut states = vec![(DecomposedPair::zeros(d), DecomposedPair::zeros(d)); blocks.len()];
        let mut memories: Vec<DecomposedMemory> = blocks.iter().map(|_| DecomposedMemory::new(window)).collect();
        let input_relevant = self.policy.is_relevant(super::Source::InputInSpan);
        let mut sites = Vec::with_capacity(tokens.len());
        let mut logits = Vec::with_capacity(tokens.len());
        for (&tok, &relevant) in tokens.iter().zip(&in_span) {
            let emb = self.model.embedding(tok);
            let mut x = if relevant && input_relevant {
                DecomposedPair::relevant(emb)
            } else {
                DecomposedPair::irrelevant(emb)
            };
            let mut pos_sites = Vec::new();
            for ((block, (h, c)), memory) in blocks.iter().zip(states.iter_mut()).zip(memories.iter_mut()) {
                let ln_in = decompose_layer_norm(&x, &block.ln_in);
                let (h_new, c_new) = decompose_lstm_step(&block.lstm, StepInput::Pair(&ln_in), h, c, self.policy);
                *h = h_new;
                *c = c_new;
                pos_sites.extend([ln_in, h.clone(), c.clone()]);
                let residual = match &block.attn {
                    Some(attn) => {
                        let out = decompose_attention(attn, h, memory, self.policy);
                        let residual = h.add(&out.context);
                        pos_sites.push(out.memory_input);
                        pos_sites.push(out.context);
                        residual
                    }
                    None => h.clone(),
                };
                let ln_ff = decompose_layer_norm(&residual, &block.ln_ff);
                let boom = decompose_boom(block, &ln_ff, self.policy);
                let output = residual.add(&boom);
                pos_sites.extend([residual, ln_ff, boom, output.clone()]);
                x = output;
            }
            logits.push(self.decode(&x));
            sites.push(pos_sites);
        }
        Ok(DecomposedTrace { sites, logits, in_span })
    }
}

/// Decomposed logits for every position.
pub fn decomposed_forward(
    model: &Model,
    tokens: &[usize],
    span: RelevantSpan,
    policy: &InteractionPolicy,
) -> Result<Vec<DecomposedPair>> {
    Ok(Decomposer::new(model, policy).run(tokens, span)?.logits)
}

/// The relevant span's (beta) logit for `token` at `position`.
pub fn logit_attribution(logits: &[DecomposedPair], position: usize, token: usize) -> Result<f64> {
    let pair = logits.get(position).ok_or_else(|| {
        Error::InvalidInput(format!("position {position} out of range ({} positions)", logits.len()))
    })?;
    pair.part(Part::Beta).get(token).copied().ok_or_else(|| {
        Error::InvalidInput(format!("token id {token} out of range ({} logits)", pair.len()))
    })
}
