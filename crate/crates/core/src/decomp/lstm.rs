use crate::model::lstm::{Gate, LstmWeights};
use crate::numerics::Activation;

use super::layers::factorize;
use super::policy::{multiply_terms, InteractionPolicy, Source, Term};
use super::DecomposedPair;

/// Input to a decomposed LSTM step.
#[derive(Clone, Copy, Debug)]
pub enum StepInput<'a> {
    /// A raw token embedding. Its gate contribution is a single component,
    /// labelled in-span or out-of-span.
    Token { embedding: &'a [f64], in_span: bool },
    /// An already decomposed activation from a lower layer.
    Pair(&'a DecomposedPair),
}

fn gate_components(w: &LstmWeights, gate: Gate, input: StepInput<'_>, h: &DecomposedPair) -> Vec<Term> {
    let g = gate as usize;
    let rec_beta = w.v[g].matvec(&h.beta);
    let rec_gamma = w.v[g].matvec(&h.gamma);
    let bias = Term::new(Source::Bias, w.b[g].clone());
    match input {
        StepInput::Token { embedding, in_span } => {
            let src = if in_span { Source::InputInSpan } else { Source::InputOutOfSpan };
            vec![
                Term::new(src, w.w[g].matvec(embedding)),
                Term::new(Source::Beta, rec_beta),
                Term::new(Source::Gamma, rec_gamma),
                bias,
            ]
        }
        StepInput::Pair(x) => {
            let mut beta = w.w[g].matvec(&x.beta);
            beta.add_assign(&rec_beta);
            let mut gamma = w.w[g].matvec(&x.gamma);
            gamma.add_assign(&rec_gamma);
            vec![Term::new(Source::Beta, beta), Term::new(Source::Gamma, gamma), bias]
        }
    }
}

/// One decomposed LSTM step. Each gate is Shapley-factorised over its
/// additive components; `f*c`, `i*g` and `o*tanh(c')` are then expanded into
/// cross terms and assigned by `policy`. Returns `(h', c')`.
pub fn decompose_lstm_step(
    weights: &LstmWeights,
    input: StepInput<'_>,
    h: &DecomposedPair,
    c: &DecomposedPair,
    policy: &InteractionPolicy,
) -> (DecomposedPair, DecomposedPair) {
    let gate = |g: Gate, f: Activation| factorize(f, gate_components(weights, g, input, h));
    let i = gate(Gate::Input, Activation::Sigmoid);
    let f = gate(Gate::Forget, Activation::Sigmoid);
    let g = gate(Gate::Cell, Activation::Tanh);
    let o = gate(Gate::Output, Activation::Sigmoid);

    let c_new = multiply_terms(&f, &c.terms(), policy).add(&multiply_terms(&i, &g, policy));
    let tanh_c = factorize(Activation::Tanh, c_new.terms().to_vec());
    let h_new = multiply_terms(&o, &tanh_c, policy);
    (h_new, c_new)
}
