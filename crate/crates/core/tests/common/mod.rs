#![allow(dead_code)]

use std::collections::BTreeMap;

use ctxdecomp::corpus::{self, Category, Language, Lexicon};
use ctxdecomp::model::Model;
use ctxdecomp::model_io::{Checkpoint, ModelConfig, Tensor, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn vocab(n: usize) -> Vocab {
    let words: Vec<String> = (1..n).map(|i| format!("w{i}")).collect();
    Vocab::from_words(words.iter().map(String::as_str))
}

pub fn random_model(cfg: ModelConfig, seed: u64, scale: f64) -> Model {
    let v = vocab(cfg.vocab_size);
    Model::from_checkpoint(&Checkpoint::random(cfg, v, seed, scale).unwrap()).unwrap()
}

pub fn random_tokens(rng: &mut ChaCha8Rng, vocab_size: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..vocab_size)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn english_vocab() -> Vocab {
    corpus::vocabulary(&[&Lexicon::builtin(Language::En)])
}

fn matrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
    let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
    Tensor { shape: vec![rows, cols], data }
}

fn vector(n: usize, f: impl Fn(usize) -> f64) -> Tensor {
    Tensor { shape: vec![n], data: (0..n).map(f).collect() }
}

/// One-layer LSTM over the English vocabulary whose last hidden state is
/// `tanh(tanh(3 n))` in unit 0, where `n` is +1 after a plural noun and -1
/// after a singular one. The decoder maps that onto verb forms so plural
/// subjects favour plural verbs (or the reverse when `anti`). Every gate is
/// driven by the input, so the subject's beta carries the whole signal.
pub fn agreement_oracle(anti: bool) -> Checkpoint {
    let lex = Lexicon::builtin(Language::En);
    let vocab = english_vocab();
    let v = vocab.len();
    let (d, k) = (2usize, if anti { -5.0 } else { 5.0 });
    let mut number = vec![0.0; v];
    let mut verb = vec![0.0; v];
    for e in lex.of(Category::Noun) {
        number[vocab.id(&e.singular).unwrap()] = -1.0;
        number[vocab.id(&e.plural).unwrap()] = 1.0;
    }
    for e in lex.of(Category::Verb).into_iter().chain(lex.of(Category::ClauseVerb)) {
        verb[vocab.id(&e.singular).unwrap()] = -k;
        verb[vocab.id(&e.plural).unwrap()] = k;
    }
    let mut cfg = ModelConfig::lstm(1, d, v);
    cfg.tied_embeddings = false;
    let mut t = BTreeMap::new();
    t.insert("embed.W".into(), matrix(v, d, |r, c| if c == 0 { number[r] } else { 1.0 }));
    t.insert("decoder.W".into(), matrix(v, d, |r, c| if c == 0 { verb[r] } else { 0.0 }));
    t.insert("decoder.b".into(), vector(v, |_| 0.0));
    for g in ["i", "f", "g", "o"] {
        let w = match g {
            "i" | "o" => matrix(d, d, |_, c| if c == 1 { 10.0 } else { 0.0 }),
            "f" => matrix(d, d, |_, c| if c == 1 { -10.0 } else { 0.0 }),
            _ => matrix(d, d, |r, c| if r == 0 && c == 0 { 3.0 } else { 0.0 }),
        };
        t.insert(format!("lstm.0.W_{g}"), w);
        t.insert(format!("lstm.0.V_{g}"), matrix(d, d, |_, _| 0.0));
        t.insert(format!("lstm.0.b_{g}"), vector(d, |_| 0.0));
    }
    Checkpoint::new(cfg, vocab, t).unwrap()
}
