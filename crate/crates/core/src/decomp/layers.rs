use crate::model::sha::{chunk_sum, AttentionMemory, AttentionWeights, LayerNormParams, ShaBlockWeights};
use crate::numerics::{softmax, Activation, Vector};
use crate::shapley::{exact_shapley, SumGame};

use super::policy::{split_terms, InteractionPolicy, Source, Term};
use super::DecomposedPair;

/// Shapley-factorises `f(sum of components)` into labelled terms, one per
/// component plus a trailing `Baseline` term holding `f(0)`.
pub fn factorize(f: Activation, components: Vec<Term>) -> Vec<Term> {
    let sources: Vec<Source> = components.iter().map(|t| t.source).collect();
    let game = SumGame { nonlinearity: f, components: components.into_iter().map(|t| t.value).collect() };
    let values = exact_shapley(&game).expect("call sites use 1..=4 equally sized components");
    let mut terms: Vec<Term> =
        sources.into_iter().zip(values.contributions).map(|(s, v)| Term::new(s, v)).collect();
    terms.push(Term::new(Source::Baseline, values.baseline));
    terms
}

/// `beta' = LN(beta) - delta`, `gamma' = LN(beta + gamma) - LN(beta) + delta`.
pub fn decompose_layer_norm(pair: &DecomposedPair, ln: &LayerNormParams) -> DecomposedPair {
    let ln_beta = ln.apply(&pair.beta);
    let ln_full = ln.apply(&pair.total());
    let beta = ln_beta.sub(&ln.delta);
    let gamma = ln_full.sub(&ln_beta).add(&ln.delta);
    DecomposedPair { beta, gamma }
}

/// `beta' = softmax(beta)`, `gamma' = softmax(beta + gamma) - beta'`.
pub fn decompose_softmax(pair: &DecomposedPair) -> DecomposedPair {
    let beta = softmax(&pair.beta);
    let gamma = softmax(&pair.total()).sub(&beta);
    DecomposedPair { beta, gamma }
}

/// Decomposed keys and values, one pair per remembered position.
pub type DecomposedMemory = AttentionMemory<DecomposedPair>;

#[derive(Clone, Debug)]
pub struct DecomposedAttention {
    pub memory_input: DecomposedPair,
    pub scores: DecomposedPair,
    pub weights: DecomposedPair,
    pub context: DecomposedPair,
}

/// Single-head attention over decomposed memory. The current position's
/// key and value are appended before attending.
///
/// Score `q . k_j` expands into the four `{beta, gamma} x {beta, gamma}` dot
/// products, each assigned by `policy`; the weights go through
/// [`decompose_softmax`]; the context expands `(a_beta + a_gamma) *
/// (v_beta + v_gamma)` the same way.
pub fn decompose_attention(
    attn: &AttentionWeights,
    hidden: &DecomposedPair,
    memory: &mut DecomposedMemory,
    policy: &InteractionPolicy,
) -> DecomposedAttention {
    let d = hidden.len();
    let m = decompose_layer_norm(hidden, &attn.ln_mem);
    memory.push(m.map_linear(|v| attn.wk.matvec(v)), m.map_linear(|v| attn.wv.matvec(v)));
    let query = m.map_linear(|v| attn.wq.matvec(v));
    let scale = 1.0 / (d as f64).sqrt();

    let n = memory.len();
    let mut scores = DecomposedPair::zeros(n);
    let query_parts = [(Source::Beta, &query.beta), (Source::Gamma, &query.gamma)];
    for (j, key) in memory.keys.iter().enumerate() {
        for (qs, q) in query_parts {
            for (ks, k) in [(Source::Beta, &key.beta), (Source::Gamma, &key.gamma)] {
                scores.part_mut(policy.assign(&[qs, ks]))[j] += q.dot(k) * scale;
            }
        }
    }

    let weights = decompose_softmax(&scores);
    let mut context = DecomposedPair::zeros(d);
    for (j, value) in memory.values.iter().enumerate() {
        let a = [(Source::Beta, weights.beta[j]), (Source::Gamma, weights.gamma[j])];
        for (ws, w) in a {
            for (vs, v) in [(Source::Beta, &value.beta), (Source::Gamma, &value.gamma)] {
                context.part_mut(policy.assign(&[ws, vs])).axpy(w, v);
            }
        }
    }
    debug_assert!({
        let mut full = Vector::zeros(d);
        for (j, value) in memory.values.iter().enumerate() {
            full.axpy(weights.beta[j] + weights.gamma[j], &value.total());
        }
        context.reconstruction_error(&full) < 1e-9
    });

    DecomposedAttention { memory_input: m, scores, weights, context }
}

/// Boom feed-forward: the affine map splits linearly into `W beta`,
/// `W gamma` and the bias, GELU is Shapley-factorised over those three, and
/// each resulting term is assigned on its own.
pub fn decompose_boom(block: &ShaBlockWeights, pair: &DecomposedPair, policy: &InteractionPolicy) -> DecomposedPair {
    let d = pair.len();
    let components = vec![
        Term::new(Source::Beta, block.boom_w.matvec(&pair.beta)),
        Term::new(Source::Gamma, block.boom_w.matvec(&pair.gamma)),
        Term::new(Source::Bias, block.boom_b.clone()),
    ];
    let wide = split_terms(&factorize(Activation::Gelu, components), policy);
    wide.map_linear(|v| chunk_sum(v, d))
}
