use crate::error::Result;
use crate::model_io::{Checkpoint, GATES};
use crate::numerics::{sigmoid, Matrix, Vector};

/// Gate order used by every `[_; 4]` array in this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Cell, Gate::Output];
}

/// Per-gate input (`w`), recurrent (`v`) and bias (`b`) weights.
#[derive(Clone, Debug)]
pub struct LstmWeights {
    pub w: [Matrix; 4],
    pub v: [Matrix; 4],
    pub b: [Vector; 4],
}

impl LstmWeights {
    pub fn from_checkpoint(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        let get_m = |p: &str, g: &str| ckpt.matrix(&format!("{prefix}.{p}_{g}"));
        let w = [get_m("W", GATES[0])?, get_m("W", GATES[1])?, get_m("W", GATES[2])?, get_m("W", GATES[3])?];
        let v = [get_m("V", GATES[0])?, get_m("V", GATES[1])?, get_m("V", GATES[2])?, get_m("V", GATES[3])?];
        let get_b = |g: &str| ckpt.vector(&format!("{prefix}.b_{g}"));
        let b = [get_b(GATES[0])?, get_b(GATES[1])?, get_b(GATES[2])?, get_b(GATES[3])?];
        Ok(LstmWeights { w, v, b })
    }

    pub fn hidden_size(&self) -> usize {
        self.b[0].len()
    }

    pub fn input_size(&self) -> usize {
        self.w[0].cols()
    }

    /// Gate pre-activation `W x + V h + b`.
    pub fn pre_activation(&self, gate: Gate, x: &[f64], h: &[f64]) -> Vector {
        let g = gate as usize;
        let mut z = self.w[g].matvec(x);
        z.add_assign(&self.v[g].matvec(h));
        z.add_assign(&self.b[g]);
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState { h: Vector::zeros(hidden), c: Vector::zeros(hidden) }
    }
}

/// One step of the standard LSTM recurrence:
/// `c' = f*c + i*g`, `h' = o*tanh(c')`.
pub fn lstm_cell_step(weights: &LstmWeights, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmState {
    let i = weights.pre_activation(Gate::Input, x, h_prev).map(sigmoid);
    let f = weights.pre_activation(Gate::Forget, x, h_prev).map(sigmoid);
    let g = weights.pre_activation(Gate::Cell, x, h_prev).map(f64::tanh);
    let o = weights.pre_activation(Gate::Output, x, h_prev).map(sigmoid);
    let c: Vector = (0..c_prev.len()).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let h = o.zip_map(&c, |o, c| o * c.tanh());
    LstmState { h, c }
}
