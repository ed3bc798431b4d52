//! Single-headed-attention RNN block.
//!
//! Per step, a block computes
//!
//! ```text
//! u   = LN_in(x)
//! h,c = LSTM(u, state)
//! m   = LN_mem(h)                      (attention block only)
//! k,v = Wk m, Wv m   -> appended to memory
//! q   = Wq m
//! a   = softmax(q . k_j / sqrt(d)) over memory (including this step)
//! z   = h + sum_j a_j v_j               (z = h without attention)
//! w   = LN_ff(z)
//! y   = z + chunk_sum(GELU(B w + b))
//! ```
//!
//! `chunk_sum` folds a widened Boom output back to `d` by summing
//! consecutive `d`-sized chunks; with `boom_size == d` it is the identity.

use std::collections::VecDeque;

use crate::error::Result;
use crate::model::lstm::{lstm_cell_step, LstmState, LstmWeights};
use crate::model_io::Checkpoint;
use crate::numerics::{gelu, layer_norm, softmax, Matrix, Vector};

#[derive(Clone, Debug)]
pub struct LayerNormParams {
    pub alpha: Vector,
    pub delta: Vector,
    pub eps: f64,
}

impl LayerNormParams {
    fn from_checkpoint(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        Ok(LayerNormParams {
            alpha: ckpt.vector(&format!("{prefix}.alpha"))?,
            delta: ckpt.vector(&format!("{prefix}.delta"))?,
            eps: ckpt.config.layer_norm_eps,
        })
    }

    pub fn apply(&self, a: &[f64]) -> Vector {
        layer_norm(a, &self.alpha, &self.delta, self.eps)
    }
}

#[derive(Clone, Debug)]
pub struct AttentionWeights {
    pub ln_mem: LayerNormParams,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

#[derive(Clone, Debug)]
pub struct ShaBlockWeights {
    pub ln_in: LayerNormParams,
    pub lstm: LstmWeights,
    pub attn: Option<AttentionWeights>,
    pub ln_ff: LayerNormParams,
    pub boom_w: Matrix,
    pub boom_b: Vector,
}

impl ShaBlockWeights {
    pub fn from_checkpoint(ckpt: &Checkpoint, k: usize) -> Result<Self> {
        let p = format!("block.{k}");
        let attn = if ckpt.config.attention_block_index == k {
            Some(AttentionWeights {
                ln_mem: LayerNormParams::from_checkpoint(ckpt, &format!("{p}.ln_mem"))?,
                wq: ckpt.matrix(&format!("{p}.attn.Wq"))?,
                wk: ckpt.matrix(&format!("{p}.attn.Wk"))?,
                wv: ckpt.matrix(&format!("{p}.attn.Wv"))?,
            })
        } else {
            None
        };
        Ok(ShaBlockWeights {
            ln_in: LayerNormParams::from_checkpoint(ckpt, &format!("{p}.ln_in"))?,
            lstm: LstmWeights::from_checkpoint(ckpt, &format!("{p}.lstm"))?,
            attn,
            ln_ff: LayerNormParams::from_checkpoint(ckpt, &format!("{p}.ln_ff"))?,
            boom_w: ckpt.matrix(&format!("{p}.boom.W"))?,
            boom_b: ckpt.vector(&format!("{p}.boom.b"))?,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size()
    }
}

/// Sum consecutive `d`-sized chunks of `v`.
pub fn chunk_sum(v: &[f64], d: usize) -> Vector {
    let mut out = Vector::zeros(d);
    for chunk in v.chunks_exact(d) {
        for (o, x) in out.iter_mut().zip(chunk) {
            *o += x;
        }
    }
    out
}

/// Sliding window of past keys and values, oldest first.
#[derive(Clone, Debug)]
pub struct AttentionMemory<T = Vector> {
    pub keys: VecDeque<T>,
    pub values: VecDeque<T>,
    window: usize,
}

impl<T> AttentionMemory<T> {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "attention window must be positive");
        AttentionMemory { keys: VecDeque::new(), values: VecDeque::new(), window }
    }

    pub fn push(&mut self, key: T, value: T) {
        self.keys.push_back(key);
        self.values.push_back(value);
        while self.keys.len() > self.window {
            self.keys.pop_front();
            self.values.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

/// Intermediate activations of one block step, in trace order.
#[derive(Clone, Debug)]
pub struct BlockOutput {
    pub ln_in: Vector,
    pub lstm: LstmState,
    pub memory_input: Option<Vector>,
    pub attention_weights: Option<Vector>,
    pub context: Option<Vector>,
    pub residual: Vector,
    pub ln_ff: Vector,
    pub boom: Vector,
    pub output: Vector,
}

impl BlockOutput {
    pub fn sites(&self) -> Vec<Vector> {
        let mut out = vec![self.ln_in.clone(), self.lstm.h.clone(), self.lstm.c.clone()];
        if let (Some(m), Some(ctx)) = (&self.memory_input, &self.context) {
            out.push(m.clone());
            out.push(ctx.clone());
        }
        out.extend([self.residual.clone(), self.ln_ff.clone(), self.boom.clone(), self.output.clone()]);
        out
    }
}

pub fn block_site_names(k: usize, has_attention: bool) -> Vec<String> {
    let mut names = vec!["ln_in", "lstm.h", "lstm.c"];
    if has_attention {
        names.extend(["ln_mem", "attn.context"]);
    }
    names.extend(["residual", "ln_ff", "boom", "output"]);
    names.into_iter().map(|n| format!("block.{k}.{n}")).collect()
}

/// Advances one block by one position. `state` and `memory` are updated in
/// place. Attention runs only when `use_attention` is set and the block has
/// attention weights.
pub fn sha_block_step(
    block: &ShaBlockWeights,
    x: &[f64],
    state: &mut LstmState,
    memory: &mut AttentionMemory,
    use_attention: bool,
) -> BlockOutput {
    let d = block.hidden_size();
    let ln_in = block.ln_in.apply(x);
    let lstm = lstm_cell_step(&block.lstm, &ln_in, &state.h, &state.c);
    *state = lstm.clone();

    let (memory_input, attention_weights, context, residual) = match &block.attn {
        Some(attn) if use_attention => {
            let m = attn.ln_mem.apply(&lstm.h);
            memory.push(attn.wk.matvec(&m), attn.wv.matvec(&m));
            let q = attn.wq.matvec(&m);
            let scale = 1.0 / (d as f64).sqrt();
            let scores: Vec<f64> = memory.keys.iter().map(|k| q.dot(k) * scale).collect();
            let weights = softmax(&scores);
            let mut ctx = Vector::zeros(d);
            for (a, v) in weights.iter().zip(&memory.values) {
                ctx.axpy(*a, v);
            }
            let residual = lstm.h.add(&ctx);
            (Some(m), Some(weights), Some(ctx), residual)
        }
        _ => (None, None, None, lstm.h.clone()),
    };

    let ln_ff = block.ln_ff.apply(&residual);
    let pre = {
        let mut p = block.boom_w.matvec(&ln_ff);
        p.add_assign(&block.boom_b);
        p
    };
    let boom = chunk_sum(&pre.map(gelu), d);
    let output = residual.add(&boom);
    BlockOutput {
        ln_in,
        lstm,
        memory_input,
        attention_weights,
        context,
        residual,
        ln_ff,
        boom,
        output,
    }
}
