//! A second, deliberately naive forward implementation working straight
//! from checkpoint tensors, compared with the library's model.

mod common;

use ctxdecomp::model::Model;
use ctxdecomp::model_io::{Arch, Checkpoint, ModelConfig};

struct Ref<'a> {
    ck: &'a Checkpoint,
}

impl Ref<'_> {
    fn data(&self, name: &str) -> &[f64] {
        &self.ck.tensors[name].data
    }

    fn mv(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let t = &self.ck.tensors[name];
        let (rows, cols) = (t.shape[0], t.shape[1]);
        assert_eq!(cols, x.len());
        (0..rows).map(|r| (0..cols).map(|c| t.data[r * cols + c] * x[c]).sum()).collect()
    }

    fn ln(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (a, d) = (self.data(&format!("{name}.alpha")), self.data(&format!("{name}.delta")));
        let s = (var + self.ck.config.layer_norm_eps).sqrt();
        x.iter().enumerate().map(|(i, v)| a[i] * (v - mean) / s + d[i]).collect()
    }

    fn lstm(&self, p: &str, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gate = |g: &str| -> Vec<f64> {
            let a = self.mv(&format!("{p}.W_{g}"), x);
            let b = self.mv(&format!("{p}.V_{g}"), h);
            let bias = self.data(&format!("{p}.b_{g}"));
            (0..h.len()).map(|k| a[k] + b[k] + bias[k]).collect()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (i, f, g, o) = (gate("i"), gate("f"), gate("g"), gate("o"));
        let c2: Vec<f64> = (0..h.len()).map(|k| sig(f[k]) * c[k] + sig(i[k]) * g[k].tanh()).collect();
        let h2 = (0..h.len()).map(|k| sig(o[k]) * c2[k].tanh()).collect();
        (h2, c2)
    }

    fn embed(&self, tok: usize) -> Vec<f64> {
        let d = self.ck.config.embed_size;
        self.data("embed.W")[tok * d..(tok + 1) * d].to_vec()
    }

    fn decode(&self, h: &[f64]) -> Vec<f64> {
        let name = if self.ck.config.tied_embeddings { "embed.W" } else { "decoder.W" };
        let b = self.data("decoder.b");
        self.mv(name, h).iter().zip(b).map(|(x, y)| x + y).collect()
    }

    fn forward(&self, tokens: &[usize]) -> Vec<Vec<f64>> {
        let cfg = &self.ck.config;
        let d = cfg.hidden_size;
        let layers = cfg.num_layers;
        let mut h = vec![vec![0.0; d]; layers];
        let mut c = vec![vec![0.0; d]; layers];
        let mut keys: Vec<Vec<f64>> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        let mut out = Vec::new();
        for &tok in tokens {
            let mut x = self.embed(tok);
            for l in 0..layers {
                match cfg.arch {
                    Arch::Lstm => {
                        let (h2, c2) = self.lstm(&format!("lstm.{l}"), &x, &h[l], &c[l]);
                        h[l] = h2;
                        c[l] = c2;
                        x = h[l].clone();
                    }
                    Arch::ShaRnn => {
                        let b = format!("block.{l}");
                        let u = self.ln(&format!("{b}.ln_in"), &x);
                        let (h2, c2) = self.lstm(&format!("{b}.lstm"), &u, &h[l], &c[l]);
                        h[l] = h2;
                        c[l] = c2;
                        let mut z = h[l].clone();
                        if l == cfg.attention_block_index {
                            let m = self.ln(&format!("{b}.ln_mem"), &h[l]);
                            keys.push(self.mv(&format!("{b}.attn.Wk"), &m));
                            values.push(self.mv(&format!("{b}.attn.Wv"), &m));
                            if keys.len() > cfg.memory_window {
                                keys.remove(0);
                                values.remove(0);
                            }
                            let q = self.mv(&format!("{b}.attn.Wq"), &m);
                            let s: Vec<f64> = keys
                                .iter()
                                .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                                .collect();
                            let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            let e: Vec<f64> = s.iter().map(|v| (v - mx).exp()).collect();
                            let tot: f64 = e.iter().sum();
                            for (w, v) in e.iter().zip(&values) {
                                for k in 0..d {
                                    z[k] += w / tot * v[k];
                                }
                            }
                        }
                        let w = self.ln(&format!("{b}.ln_ff"), &z);
                        let pre = self.mv(&format!("{b}.boom.W"), &w);
                        let bias = self.data(&format!("{b}.boom.b"));
                        for (j, p) in pre.iter().enumerate() {
                            let a = p + bias[j];
                            z[j % d] += 0.5 * a * (1.0 + libm::erf(a / std::f64::consts::SQRT_2));
                        }
                        x = z;
                    }
                }
            }
            out.push(self.decode(&x));
        }
        out
    }
}

fn check(cfg: ModelConfig, seed: u64) {
    let vocab = common::vocab(cfg.vocab_size);
    let ck = Checkpoint::random(cfg.clone(), vocab, seed, 0.7).unwrap();
    let model = Model::from_checkpoint(&ck).unwrap();
    let mut rng = common::rng(seed);
    let tokens = common::random_tokens(&mut rng, cfg.vocab_size, 9);
    let ours = model.forward(&tokens).unwrap();
    let theirs = Ref { ck: &ck }.forward(&tokens);
    for (a, b) in ours.iter().zip(&theirs) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn lstm_matches_reference() {
    for (layers, d, seed) in [(1, 3, 0), (2, 4, 1), (3, 8, 2)] {
        check(ModelConfig::lstm(layers, d, 11), seed);
    }
    let mut untied = ModelConfig::lstm(2, 5, 9);
    untied.tied_embeddings = false;
    untied.embed_size = 3;
    check(untied, 3);
}

#[test]
fn sha_matches_reference() {
    for (blocks, d, seed) in [(1, 3, 0), (2, 4, 1), (3, 6, 2)] {
        check(ModelConfig::sha_rnn(blocks, d, 11), seed);
    }
    let mut wide = ModelConfig::sha_rnn(2, 4, 7);
    wide.boom_size = 12;
    wide.memory_window = 3;
    check(wide, 4);
}

#[test]
fn golden_fixture_matches_reference() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let golden: std::collections::BTreeMap<String, Vec<Vec<f64>>> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("golden_logits.json")).unwrap()).unwrap();
    for (file, want) in golden {
        let ck = Checkpoint::load(dir.join(&file)).unwrap();
        let got = Ref { ck: &ck }.forward(&[1, 3, 2, 5, 4, 1]);
        for (g, w) in got.iter().zip(&want) {
            for (x, y) in g.iter().zip(w) {
                assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0), "{file}: {x} vs {y}");
            }
        }
    }
}
