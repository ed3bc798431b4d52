//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use ctxdecomp::corpus::{
    generate_corpus, instantiate, vocabulary, write_corpus, Condition, CorpusItem, Language, Lexicon, TemplateId,
};
use ctxdecomp::decomp::{decompose_layer_norm, decompose_softmax, DecomposedPair, Decomposer, InteractionPolicy, RelevantSpan};
use ctxdecomp::evaluation::subject_attribution;
use ctxdecomp::model::{LayerNormParams, Model};
use ctxdecomp::model_io::{Checkpoint, ModelConfig};
use ctxdecomp::numerics::{layer_norm, max_scaled_error, softmax, Activation, Vector};
use ctxdecomp::parallel::Jobs;
use ctxdecomp::shapley::{exact_shapley, shapley_oracle_permutations, SumGame};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome { ok: true, detail: detail.into() }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { ok: false, detail: detail.into() }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            out = fail(format!("{} (took {:.1?}, limit {:?})", out.detail, took, limit));
        }
    }
    (out, took)
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vector {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

fn reconstruction() -> Outcome {
    let mut rng = common::rng(2024);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for sha in [false, true] {
        for case in 0..100 {
            let d = [4, 8, 32][case % 3];
            let layers = 1 + case % 3;
            let cfg = if sha { ModelConfig::sha_rnn(layers, d, 24) } else { ModelConfig::lstm(layers, d, 24) };
            let model = common::random_model(cfg, case as u64 + if sha { 1000 } else { 0 }, 0.6);
            let len = rng.random_range(1..=12);
            let tokens = common::random_tokens(&mut rng, 24, len);
            let start = rng.random_range(0..len);
            let end = rng.random_range(start + 1..=len);
            let span = RelevantSpan::new(start, end).unwrap();
            let policy = if case % 2 == 0 { InteractionPolicy::gcd_default() } else { InteractionPolicy::murdoch() };
            let dec = Decomposer::new(&model, &policy).run(&tokens, span).unwrap();
            worst = worst.max(dec.max_error_against(&model.forward_trace(&tokens).unwrap()));
            cases += 1;
        }
    }
    let detail = format!("{cases} cases, worst scaled error {worst:.2e}");
    if worst <= 1e-8 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn shapley_suite() -> Outcome {
    let mut rng = common::rng(7);
    let fs = [Activation::Sigmoid, Activation::Tanh, Activation::Gelu];
    let mut worst: f64 = 0.0;
    let mut broken = Vec::new();
    for g in 0..1000 {
        let n = 1 + g % 5;
        let len = rng.random_range(1..4);
        let f = fs[g % 3];
        let mut cs: Vec<Vector> = (0..n).map(|_| random_vector(&mut rng, len, 3.0)).collect();
        let game = SumGame::new(f, cs.clone()).unwrap();
        let exact = exact_shapley(&game).unwrap();
        let oracle = shapley_oracle_permutations(&game).unwrap();
        worst = worst.max(max_scaled_error(&exact.total(), &game.value()));
        for (a, b) in exact.contributions.iter().zip(&oracle.contributions) {
            worst = worst.max(max_scaled_error(a, b));
        }
        if n < 5 {
            // a duplicated player must match its twin; a zero player gets 0
            cs.push(cs[0].clone());
            let twin = exact_shapley(&SumGame::new(f, cs.clone()).unwrap()).unwrap();
            worst = worst.max(max_scaled_error(&twin.contributions[0], &twin.contributions[n]));
            cs.pop();
            cs.push(Vector::zeros(len));
            let null = exact_shapley(&SumGame::new(f, cs).unwrap()).unwrap();
            if null.contributions[n].iter().any(|&x| x != 0.0) {
                broken.push(g);
            }
        }
    }
    let detail = format!("1000 games, worst scaled error {worst:.2e}, null-player failures {}", broken.len());
    if worst <= 1e-10 && broken.is_empty() {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn separation_suite() -> Outcome {
    let mut rng = common::rng(11);
    let mut worst: f64 = 0.0;
    let mut leaks = 0;
    for _ in 0..2000 {
        let len = rng.random_range(1..10);
        let pair = DecomposedPair::new(random_vector(&mut rng, len, 4.0), random_vector(&mut rng, len, 4.0));
        let moved = DecomposedPair::new(pair.beta.clone(), random_vector(&mut rng, len, 4.0));
        let ln = LayerNormParams {
            alpha: random_vector(&mut rng, len, 2.0),
            delta: random_vector(&mut rng, len, 2.0),
            eps: 1e-5,
        };
        let out = decompose_layer_norm(&pair, &ln);
        worst = worst.max(out.reconstruction_error(&layer_norm(&pair.total(), &ln.alpha, &ln.delta, ln.eps)));
        let sm = decompose_softmax(&pair);
        worst = worst.max(sm.reconstruction_error(&softmax(&pair.total())));
        let bits = |v: &Vector| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(&decompose_layer_norm(&moved, &ln).beta) != bits(&out.beta)
            || bits(&decompose_softmax(&moved).beta) != bits(&sm.beta)
        {
            leaks += 1;
        }
    }

    let v = |x: &[f64]| Vector::new(x.to_vec());
    let ln = LayerNormParams { alpha: v(&[1.3, 0.7, -0.4]), delta: v(&[0.2, -0.1, 0.5]), eps: 1e-5 };
    let g = v(&[0.4, -1.2, 2.0]);
    let b = v(&[1.5, 0.25, -0.75]);
    let ln_zero_beta = decompose_layer_norm(&DecomposedPair::irrelevant(g.clone()), &ln);
    let ln_zero_gamma = decompose_layer_norm(&DecomposedPair::relevant(b.clone()), &ln);
    let ln_examples = ln_zero_beta.beta.iter().all(|&x| x == 0.0)
        && ln_zero_beta.gamma == ln.apply(&g)
        && ln_zero_gamma.gamma == ln.delta
        && max_scaled_error(&ln_zero_gamma.beta, &ln.apply(&b).sub(&ln.delta)) <= 1e-12;

    let sm_zero_beta = decompose_softmax(&DecomposedPair::irrelevant(g.clone()));
    let sm_zero_gamma = decompose_softmax(&DecomposedPair::relevant(b.clone()));
    let sm_mixed = decompose_softmax(&DecomposedPair::new(v(&[1.0, 0.0]), v(&[0.0, 1.0])));
    let sm_examples = sm_zero_beta.beta.iter().all(|&x| (x - 1.0 / 3.0).abs() <= 1e-15)
        && max_scaled_error(&sm_zero_beta.gamma, &softmax(&g).sub(&Vector::filled(3, 1.0 / 3.0))) <= 1e-12
        && sm_zero_gamma.gamma.iter().all(|&x| x.abs() <= 1e-16)
        && max_scaled_error(&sm_mixed.beta, &v(&[0.7310585786300049, 0.2689414213699951])) <= 1e-12
        && max_scaled_error(&sm_mixed.gamma, &v(&[-0.2310585786300049, 0.2310585786300049])) <= 1e-12;

    let detail = format!(
        "worst recombination {worst:.2e}, beta leaks {leaks}, layer-norm examples {}, softmax examples {}",
        if ln_examples { "ok" } else { "wrong" },
        if sm_examples { "ok" } else { "wrong" }
    );
    if worst <= 1e-12 && leaks == 0 && ln_examples && sm_examples {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn zero_relevance() -> Outcome {
    let mut rng = common::rng(5);
    let policy = InteractionPolicy::gcd_default();
    let mut nonzero = 0;
    let mut runs = 0;
    for sha in [false, true] {
        for seed in 0..20u64 {
            let cfg = if sha { ModelConfig::sha_rnn(3, 8, 16) } else { ModelConfig::lstm(3, 8, 16) };
            let model = common::random_model(cfg, seed, 0.8);
            let len = rng.random_range(1..=12);
            let tokens = common::random_tokens(&mut rng, 16, len);
            let span = RelevantSpan::new(len, len + 3).unwrap();
            let dec = Decomposer::new(&model, &policy).run(&tokens, span).unwrap();
            for site in dec.sites.iter().flatten().chain(&dec.logits) {
                nonzero += site.beta.iter().filter(|&&b| b != 0.0).count();
            }
            runs += 1;
        }
    }
    let detail = format!("{runs} runs over both architectures, {nonzero} nonzero beta entries");
    if nonzero == 0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn corpus_rows() -> Outcome {
    let en = Lexicon::builtin(Language::En);
    let nl = Lexicon::builtin(Language::Nl);
    let row = |lex: &Lexicon, t: TemplateId, fillers: &[&str], code: &str| -> String {
        instantiate(t, lex, fillers, &Condition::parse(code, t.target_noun()).unwrap()).unwrap().sentence()
    };
    let got = [
        row(&en, TemplateId::Simple, &["boy", "greets"], "S"),
        row(&nl, TemplateId::NounPP, &["jongen", "bij", "auto", "groet"], "PS"),
        row(&en, TemplateId::ThatNounPP, &["boy", "thinks", "mother", "at", "car", "misses"], "SPS"),
        row(&en, TemplateId::ThatNounPP, &["boy", "thinks", "mother", "at", "car", "misses"], "SPP"),
    ];
    let want = [
        "The boy greets",
        "De jongens bij de auto groeten",
        "The boy thinks that the mothers at the car miss",
        "The boy thinks that the mothers at the cars miss",
    ];
    let mut counts = Vec::new();
    for t in TemplateId::ALL {
        let items = generate_corpus(Language::En, t, &en, &vocabulary(&[&en]), 3, 0).unwrap();
        let codes: std::collections::BTreeSet<String> = items.iter().map(|i| i.condition.code()).collect();
        counts.push(codes.len());
    }
    let mismatched: Vec<String> =
        got.iter().zip(&want).filter(|(g, w)| g != w).map(|(g, w)| format!("`{g}` != `{w}`")).collect();
    let detail = format!("conditions per template {counts:?}, row mismatches {}", mismatched.len());
    if mismatched.is_empty() && counts == [2, 4, 2, 4, 8] {
        pass(detail)
    } else {
        fail(format!("{detail} {}", mismatched.join("; ")))
    }
}

fn balanced_items() -> (Vec<CorpusItem>, ctxdecomp::model_io::Vocab) {
    let en = Lexicon::builtin(Language::En);
    let nl = Lexicon::builtin(Language::Nl);
    let vocab = vocabulary(&[&en, &nl]);
    let mut items = Vec::new();
    for (lang, lex) in [(Language::En, &en), (Language::Nl, &nl)] {
        for t in TemplateId::ALL {
            items.extend(generate_corpus(lang, t, lex, &vocab, 10, 17).unwrap());
        }
    }
    (items, vocab)
}

fn pooled(report: &ctxdecomp::evaluation::AttributionReport, na: bool) -> f64 {
    let (mut total, mut n) = (0.0, 0);
    for r in &report.rows {
        let p = if na { r.na_accuracy } else { r.attribution_score };
        total += p.unwrap() * r.n as f64;
        n += r.n;
    }
    total / n as f64
}

fn chance_level() -> Outcome {
    let (items, vocab) = balanced_items();
    let policy = InteractionPolicy::gcd_default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, cfg) in [("lstm", ModelConfig::lstm(2, 32, vocab.len())), ("sha-rnn", ModelConfig::sha_rnn(2, 32, vocab.len()))] {
        let model = Model::from_checkpoint(&Checkpoint::random(cfg, vocab.clone(), 31, 0.5).unwrap()).unwrap();
        let report = subject_attribution(&model, &items, &policy, name, Jobs(None)).unwrap();
        let (na, attr) = (pooled(&report, true), pooled(&report, false));
        ok &= (40.0..=60.0).contains(&na) && (40.0..=60.0).contains(&attr) && report.total_ties() == 0;
        parts.push(format!("{name}: NA {na:.1}%, attribution {attr:.1}%, ties {}", report.total_ties()));
    }
    let detail = format!("{} items; {}", items.len(), parts.join("; "));
    if ok && items.len() >= 400 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn manifest_sans_out(bytes: &[u8]) -> Option<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).ok()?;
    v["flags"].as_object_mut()?.remove("out");
    Some(v)
}

fn determinism() -> Outcome {
    let en = Lexicon::builtin(Language::Nl);
    let vocab = vocabulary(&[&en]);
    let bytes = || {
        let mut buf = Vec::new();
        for t in TemplateId::ALL {
            write_corpus(&generate_corpus(Language::Nl, t, &en, &vocab, 7, 123).unwrap(), &mut buf).unwrap();
        }
        buf
    };
    let corpus_same = bytes() == bytes();
    let (items, vocab) = balanced_items();
    let cfg = ModelConfig::sha_rnn(2, 8, vocab.len());
    let model = Model::from_checkpoint(&Checkpoint::random(cfg, vocab, 3, 0.5).unwrap()).unwrap();
    let policy = InteractionPolicy::murdoch();
    let a = subject_attribution(&model, &items[..120], &policy, "m", Jobs::SEQUENTIAL).unwrap().to_csv();
    let b = subject_attribution(&model, &items[..120], &policy, "m", Jobs(Some(4))).unwrap().to_csv();
    let c = subject_attribution(&model, &items[..120], &policy, "m", Jobs(None)).unwrap().to_csv();
    let csv_same = a == b && b == c;

    let dir = tempfile::tempdir().unwrap();
    let cli = |args: &[&str]| {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_ctxdecomp"))
            .current_dir(dir.path())
            .args(args)
            .output()
            .unwrap();
        out.status.success()
    };
    let mut cli_ok = cli(&["init-model", "--arch", "lstm", "--hidden", "8", "--seed", "4", "--out", "m.ckpt"]);
    for run in ["1", "2"] {
        cli_ok &= cli(&["generate", "--language", "en", "--limit", "4", "--seed", "8", "--out", &format!("c{run}.tsv")]);
        cli_ok &= cli(&[
            "attribute", "--checkpoint", "m.ckpt", "--corpus", "c1.tsv", "--out", &format!("r{run}.csv"), "--jobs", run,
        ]);
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap_or_default();
    let files_same = cli_ok
        && read("c1.tsv") == read("c2.tsv")
        && read("r1.csv") == read("r2.csv")
        && manifest_sans_out(&read("c1.tsv.manifest.json")) == manifest_sans_out(&read("c2.tsv.manifest.json"))
        && !read("r1.csv").is_empty();

    let detail = format!("corpus bytes {corpus_same}, report csv {csv_same}, cli files {files_same}");
    if corpus_same && csv_same && files_same {
        pass(detail)
    } else {
        fail(detail)
    }
}

type Suite = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    // libtest-style flags (e.g. --nocapture) are accepted and ignored
    let suites: Vec<Suite> = vec![
        ("reconstruction", Some(Duration::from_secs(60)), reconstruction),
        ("shapley", Some(Duration::from_secs(30)), shapley_suite),
        ("layer-norm/softmax separation", Some(Duration::from_secs(5)), separation_suite),
        ("zero relevance", None, zero_relevance),
        ("corpus templates", None, corpus_rows),
        ("chance-level baseline", None, chance_level),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (name, limit, f) in suites {
        let (out, took) = timed(limit, f);
        println!("{} {name}: {} [{:.2?}]", if out.ok { "PASS" } else { "FAIL" }, out.detail, took);
        failed += usize::from(!out.ok);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
