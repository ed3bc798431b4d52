//! Command-line front end.

mod config;
mod manifest;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{self, parse_corpus, write_corpus, CorpusItem, Language, Lexicon, TemplateId};
use crate::decomp::{Decomposer, InteractionPolicy, PolicyPreset, RelevantSpan};
use crate::error::{Error, Result};
use crate::evaluation::{self, slot_rows_to_csv};
use crate::model::Model;
use crate::model_io::{Arch, Checkpoint, ModelConfig, Vocab};
use crate::parallel::Jobs;

pub use config::expand_config;
pub use manifest::{checkpoint_digest, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "ctxdecomp", version, about = "Contextual decomposition for recurrent language models")]
#[command(args_override_self = true)]
pub struct Cli {
    /// TOML file whose keys are used as flags of the chosen subcommand.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Generate a number-agreement corpus.
    Generate(GenerateArgs),
    /// Score number-agreement accuracy.
    #[command(name = "eval-na")]
    EvalNa(EvalNaArgs),
    /// Score subject attribution (and NA accuracy) per condition.
    Attribute(AttributeArgs),
    /// Print a per-token beta/gamma logit table for one sentence.
    Decompose(DecomposeArgs),
    /// Perplexity of a whitespace-tokenised text file.
    Perplexity(PerplexityArgs),
    /// Write a random or all-zero checkpoint.
    #[command(name = "init-model")]
    InitModel(InitModelArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::EvalNa(_) => "eval-na",
            Command::Attribute(_) => "attribute",
            Command::Decompose(_) => "decompose",
            Command::Perplexity(_) => "perplexity",
            Command::InitModel(_) => "init-model",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub language: Language,
    /// Template name, or `all`.
    #[arg(long, default_value = "all")]
    pub template: String,
    /// Items per condition.
    #[arg(long)]
    pub limit: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lexicon TSV; the bundled lexicon is used when omitted.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Vocabulary file, one token per line. Defaults to the lexicon's forms.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalNaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct AttributeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "gcd-default")]
    pub policy: PolicyPreset,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write mean per-slot attributions to this CSV.
    #[arg(long)]
    pub per_slot: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Space-separated tokens.
    #[arg(long)]
    pub sentence: String,
    /// Relevant span `start:end`, end exclusive.
    #[arg(long)]
    pub span: RelevantSpan,
    #[arg(long, default_value = "gcd-default")]
    pub policy: PolicyPreset,
    /// Output tokens to report; the top-scoring token is used when omitted.
    #[arg(long = "target")]
    pub targets: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct PerplexityArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Text file; tokens outside the vocabulary map to `<unk>`.
    #[arg(long)]
    pub tokens: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InitModelArgs {
    #[arg(long, default_value = "lstm")]
    pub arch: Arch,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Boom width for SHA-RNN blocks (multiple of the hidden size).
    #[arg(long)]
    pub boom: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weights are uniform in `[-scale, scale]`.
    #[arg(long, default_value_t = 0.5)]
    pub scale: f64,
    /// All-zero weights instead of random ones.
    #[arg(long)]
    pub zero: bool,
    /// Vocabulary file; defaults to the bundled lexicons of `--languages`.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "en,nl")]
    pub languages: Vec<Language>,
    #[arg(long)]
    pub out: PathBuf,
}

fn jobs(n: usize) -> Jobs {
    if n == 0 {
        Jobs(None)
    } else {
        Jobs(Some(n))
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_model(path: &Path) -> Result<(Model, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    Ok((Model::from_checkpoint(&ckpt)?, checkpoint_digest(&bytes)))
}

fn load_corpus(path: &Path) -> Result<Vec<CorpusItem>> {
    parse_corpus(&read_text(path)?)
}

/// Short model id used in report rows.
fn model_id(digest: &str) -> String {
    digest[..12].to_string()
}

fn cmd_generate(a: &GenerateArgs) -> Result<RunManifestParts> {
    let lexicon = match &a.lexicon {
        Some(p) => Lexicon::load(a.language, p)?,
        None => Lexicon::builtin(a.language),
    };
    let vocab = match &a.vocab {
        Some(p) => Vocab::load_text(p)?,
        None => corpus::vocabulary(&[&lexicon]),
    };
    let templates: Vec<TemplateId> = if a.template.eq_ignore_ascii_case("all") {
        TemplateId::ALL.to_vec()
    } else {
        vec![a.template.parse()?]
    };
    let mut items = Vec::new();
    for t in templates {
        items.extend(corpus::generate_corpus(a.language, t, &lexicon, &vocab, a.limit, a.seed)?);
    }
    let mut buf = Vec::new();
    write_corpus(&items, &mut buf).expect("writing to memory");
    write_file(&a.out, &buf)?;
    Ok(RunManifestParts { out: Some(a.out.clone()), seed: Some(a.seed), ..Default::default() })
}

fn cmd_eval_na(a: &EvalNaArgs) -> Result<RunManifestParts> {
    let (model, digest) = load_model(&a.checkpoint)?;
    let items = load_corpus(&a.corpus)?;
    let report = evaluation::na_accuracy(&model, &items, &model_id(&digest), jobs(a.jobs))?;
    write_file(&a.out, report.to_csv().as_bytes())?;
    Ok(RunManifestParts { out: Some(a.out.clone()), checkpoint: Some(digest), ..Default::default() })
}

fn cmd_attribute(a: &AttributeArgs) -> Result<RunManifestParts> {
    let (model, digest) = load_model(&a.checkpoint)?;
    let items = load_corpus(&a.corpus)?;
    let policy = InteractionPolicy::preset(a.policy);
    let id = model_id(&digest);
    let report = evaluation::subject_attribution(&model, &items, &policy, &id, jobs(a.jobs))?;
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
    write_file(&a.out, report.to_csv().as_bytes())?;
    if let Some(path) = &a.per_slot {
        let mut rows = Vec::new();
        for t in TemplateId::ALL {
            let group: Vec<CorpusItem> = items.iter().filter(|i| i.template == t).cloned().collect();
            if !group.is_empty() {
                rows.extend(evaluation::aggregate_attributions(&model, &group, &policy, jobs(a.jobs))?);
            }
        }
        write_file(path, slot_rows_to_csv(&rows, &policy, &id).as_bytes())?;
    }
    Ok(RunManifestParts {
        out: Some(a.out.clone()),
        checkpoint: Some(digest),
        policy: Some(policy.name),
        ..Default::default()
    })
}

/// Formats the decomposition table printed by `decompose`.
pub fn decompose_table(model: &Model, sentence: &str, span: RelevantSpan, policy: &InteractionPolicy, targets: &[String]) -> Result<String> {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let tokens = words.iter().map(|w| model.vocab.id(w)).collect::<Result<Vec<_>>>()?;
    if tokens.is_empty() {
        return Err(Error::InvalidInput("empty sentence".into()));
    }
    span.check_within(tokens.len())?;
    let target_ids = targets.iter().map(|t| model.vocab.id(t)).collect::<Result<Vec<_>>>()?;
    let full = model.forward(&tokens)?;
    let dec = Decomposer::new(model, policy).run(&tokens, span)?;

    let mut out = format!(
        "# policy {} span {}:{}\n{:>4}  {:<14} {:<14} {:>14} {:>14} {:>14} {:>10}\n",
        policy.name, span.start, span.end, "pos", "token", "target", "beta", "gamma", "full", "recon"
    );
    for (t, word) in words.iter().enumerate() {
        let ids = if target_ids.is_empty() { vec![full[t].argmax().expect("nonempty vocabulary")] } else { target_ids.clone() };
        for id in ids {
            let (b, g, f) = (dec.logits[t].beta[id], dec.logits[t].gamma[id], full[t][id]);
            let name = model.vocab.token(id).unwrap_or("?");
            out.push_str(&format!(
                "{t:>4}  {word:<14} {name:<14} {b:>14.6e} {g:>14.6e} {f:>14.6e} {:>10.2e}\n",
                b + g - f
            ));
        }
    }
    Ok(out)
}

fn cmd_decompose(a: &DecomposeArgs) -> Result<RunManifestParts> {
    let (model, digest) = load_model(&a.checkpoint)?;
    let policy = InteractionPolicy::preset(a.policy);
    print!("{}", decompose_table(&model, &a.sentence, a.span, &policy, &a.targets)?);
    Ok(RunManifestParts { checkpoint: Some(digest), policy: Some(policy.name), ..Default::default() })
}

fn cmd_perplexity(a: &PerplexityArgs) -> Result<RunManifestParts> {
    let (model, digest) = load_model(&a.checkpoint)?;
    let text = read_text(&a.tokens)?;
    let tokens: Vec<usize> = text.split_whitespace().map(|w| model.vocab.encode(w)).collect();
    println!("{}", model.perplexity(&tokens)?);
    Ok(RunManifestParts { checkpoint: Some(digest), ..Default::default() })
}

fn cmd_init_model(a: &InitModelArgs) -> Result<RunManifestParts> {
    let vocab = match &a.vocab {
        Some(p) => Vocab::load_text(p)?,
        None => {
            let lexicons: Vec<Lexicon> = a.languages.iter().map(|&l| Lexicon::builtin(l)).collect();
            corpus::vocabulary(&lexicons.iter().collect::<Vec<_>>())
        }
    };
    let mut config = match a.arch {
        Arch::Lstm => ModelConfig::lstm(a.layers, a.hidden, vocab.len()),
        Arch::ShaRnn => ModelConfig::sha_rnn(a.layers, a.hidden, vocab.len()),
    };
    if let Some(b) = a.boom {
        config.boom_size = b;
    }
    config.memory_window = a.window;
    let ckpt = if a.zero {
        Checkpoint::zeros(config, vocab)?
    } else {
        Checkpoint::random(config, vocab, a.seed, a.scale)?
    };
    let bytes = ckpt.to_bytes()?;
    write_file(&a.out, &bytes)?;
    Ok(RunManifestParts {
        out: Some(a.out.clone()),
        checkpoint: Some(checkpoint_digest(&bytes)),
        seed: Some(a.seed),
        ..Default::default()
    })
}

/// Run facts gathered by a command for its manifest.
#[derive(Default)]
struct RunManifestParts {
    out: Option<PathBuf>,
    checkpoint: Option<String>,
    seed: Option<u64>,
    policy: Option<String>,
}

pub fn run(cli: &Cli) -> Result<()> {
    let parts = match &cli.command {
        Command::Generate(a) => cmd_generate(a)?,
        Command::EvalNa(a) => cmd_eval_na(a)?,
        Command::Attribute(a) => cmd_attribute(a)?,
        Command::Decompose(a) => cmd_decompose(a)?,
        Command::Perplexity(a) => cmd_perplexity(a)?,
        Command::InitModel(a) => cmd_init_model(a)?,
    };
    if let Some(out) = parts.out {
        let manifest = RunManifest::new(&cli.command, parts.checkpoint, parts.seed, parts.policy)?;
        manifest.write_beside(&out)?;
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
