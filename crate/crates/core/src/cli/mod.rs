//! The `rfa-doc` command line: corpus generation, training, translation,
//! consistency evaluation and benchmarking.

mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::{parse_list, parse_variants, RunConfig};

use crate::benchmark::{self, check_laws, emit_report};
use crate::checkpoint;
use crate::decoding::{beam_decode, default_max_len, greedy_decode};
use crate::document_pipeline::{
    bleu, consistency_evaluate, extract_last_sentence, load_items, make_windows, window_examples,
    Corpus, Task,
};
use crate::error::{Error, Result};
use crate::fsutil::write_file;
use crate::transformer::{train_with_callback, Model, TrainConfig, Variant};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RFA_DOC_OUT";
pub const DEFAULT_OUT_DIR: &str = "out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "rfa-doc", version, about = "Document-level translation with random feature attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic parallel corpus (and consistency items for agree).
    GenData(GenDataArgs),
    /// Train a model on sliding windows of a corpus.
    Train(TrainArgs),
    /// Translate a corpus split window by window and score BLEU.
    Translate(TranslateArgs),
    /// Score contrastive consistency items at one or more window sizes.
    EvalConsistency(EvalArgs),
    /// Measure decoding throughput and step latency per backend and L.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct Shared {
    /// Config file of `section.key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    shared: Shared,
    /// Task family: copy or agree.
    #[arg(long, default_value = "copy")]
    task: String,
    /// Training documents.
    #[arg(long, default_value_t = 500)]
    docs: usize,
    #[arg(long, default_value_t = 50)]
    dev_docs: usize,
    #[arg(long, default_value_t = 50)]
    test_docs: usize,
    /// Vocabulary size including reserved symbols.
    #[arg(long, default_value_t = 32)]
    vocab_size: usize,
    /// Consistency items (agree only).
    #[arg(long, default_value_t = 1000)]
    items: usize,
    #[arg(long, default_value_t = 2)]
    min_sentences: usize,
    #[arg(long, default_value_t = 4)]
    max_sentences: usize,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory [default: $RFA_DOC_OUT/data or out/data].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    shared: Shared,
    /// Corpus directory [default: $RFA_DOC_OUT/data or out/data].
    #[arg(long)]
    data: Option<PathBuf>,
    /// exact, rfa, rfa-sgate or rfa-sgate-avg.
    #[arg(long, default_value = "exact")]
    variant: String,
    /// Window size in sentences.
    #[arg(long = "L", default_value_t = 1)]
    window: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Peak learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 400)]
    warmup: usize,
    #[arg(long, default_value_t = 200)]
    eval_every: usize,
    /// Evaluations without improvement before stopping (0 = never).
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Seed for initialization, feature maps and batching.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    n_heads: usize,
    #[arg(long, default_value_t = 128)]
    d_ff: usize,
    #[arg(long, default_value_t = 2)]
    enc_layers: usize,
    #[arg(long, default_value_t = 2)]
    dec_layers: usize,
    /// Random features per head in cross attention.
    #[arg(long, default_value_t = 128)]
    d_cross: usize,
    /// Random features per head in causal attention.
    #[arg(long, default_value_t = 64)]
    d_causal: usize,
    /// Feature map bandwidth.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Redraw random features every step.
    #[arg(long)]
    resample_features: bool,
    /// Checkpoint path [default: $RFA_DOC_OUT/model.ckpt or out/model.ckpt].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss curve CSV [default: checkpoint path with .loss.csv].
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint [default: $RFA_DOC_OUT/model.ckpt or out/model.ckpt].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Corpus directory [default: $RFA_DOC_OUT/data or out/data].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Corpus split: train, dev or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long = "L", default_value_t = 1)]
    window: usize,
    #[arg(long, default_value_t = 4)]
    beam: usize,
    /// Greedy decoding instead of beam search.
    #[arg(long)]
    greedy: bool,
    /// Generation cap per window [default: 2 * source length + 8].
    #[arg(long)]
    max_len: Option<usize>,
    /// Translation file [default: $RFA_DOC_OUT/translation.<split>.txt].
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint [default: $RFA_DOC_OUT/model.ckpt or out/model.ckpt].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Items file [default: <data>/consistency.txt].
    #[arg(long)]
    items: Option<PathBuf>,
    /// Corpus directory [default: $RFA_DOC_OUT/data or out/data].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated window sizes.
    #[arg(long = "L", default_value = "1,2,3,4")]
    windows: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint [default: $RFA_DOC_OUT/model.ckpt or out/model.ckpt].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comma-separated window sizes.
    #[arg(long = "L", default_value = "1,2,3,4,5,10,15")]
    windows: String,
    /// Comma-separated backends (exact, rfa, rfa-sgate, rfa-sgate-avg).
    #[arg(long, default_value = "exact,rfa")]
    backends: String,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Divides the reference batch-size table.
    #[arg(long, default_value_t = 32)]
    batch_divisor: usize,
    #[arg(long, default_value_t = 20)]
    tokens_per_sentence: usize,
    /// Comma-separated prefix lengths for the step latency profile.
    #[arg(long, default_value = "100,1000")]
    profile_prefixes: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Exit with status 3 unless every scaling law holds.
    #[arg(long)]
    assert: bool,
    /// Test hook: BACKEND=NS adds NS nanoseconds per prefix token to every
    /// decoding step of BACKEND.
    #[arg(long)]
    inflate_latency: Option<String>,
    /// CSV report [default: $RFA_DOC_OUT/bench.csv or out/bench.csv].
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Default output directory: `$RFA_DOC_OUT`, else `out`.
pub fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

fn explicit(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn base_config(shared: &Shared) -> Result<RunConfig> {
    let mut rc = RunConfig::default();
    if let Some(path) = &shared.config {
        rc.apply_file(path)?;
    }
    Ok(rc)
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a, sub, &mut out),
        Command::Train(a) => train(a, sub, &mut out),
        Command::Translate(a) => translate(a, sub, &mut out),
        Command::EvalConsistency(a) => eval_consistency(a, &mut out),
        Command::Bench(a) => bench(a, sub, &mut out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn gen_data(a: &GenDataArgs, m: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let mut rc = base_config(&a.shared)?;
    let c = &mut rc.corpus;
    if explicit(m, "task") {
        c.task = Task::parse(&a.task).ok_or_else(|| usage(format!("unknown task {:?}", a.task)))?;
    }
    macro_rules! take {
        ($($id:literal => $field:ident = $val:expr),* $(,)?) => {
            $(if explicit(m, $id) { c.$field = $val; })*
        };
    }
    take!(
        "docs" => train_docs = a.docs,
        "dev_docs" => dev_docs = a.dev_docs,
        "test_docs" => test_docs = a.test_docs,
        "vocab_size" => vocab_size = a.vocab_size,
        "items" => num_items = a.items,
        "min_sentences" => min_sentences = a.min_sentences,
        "max_sentences" => max_sentences = a.max_sentences,
        "min_len" => min_len = a.min_len,
        "max_len" => max_len = a.max_len,
        "seed" => seed = a.seed,
    );
    if c.train_docs == 0 {
        return Err(usage("--docs must be >= 1"));
    }
    c.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = crate::document_pipeline::generate_synthetic_corpus(c)?;
    let dir = a.out.clone().unwrap_or_else(|| out_dir().join("data"));
    corpus.save(&dir, a.shared.force)?;
    writeln!(
        out,
        "wrote {} task corpus to {}: {} train / {} dev / {} test documents, {} consistency items, vocab {}",
        c.task.name(),
        dir.display(),
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        corpus.items.len(),
        corpus.vocab.len()
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn train(a: &TrainArgs, m: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let mut rc = base_config(&a.shared)?;
    if explicit(m, "variant") {
        let v = Variant::parse(&a.variant).ok_or_else(|| usage(format!("unknown variant {:?}", a.variant)))?;
        rc.model = rc.model.with_variant(v);
    }
    if explicit(m, "window") {
        rc.window = a.window;
    }
    if explicit(m, "seed") {
        rc.model.master_seed = a.seed;
        rc.train.seed = a.seed;
    }
    {
        let t = &mut rc.train;
        if explicit(m, "steps") {
            t.steps = a.steps;
        }
        if explicit(m, "batch_size") {
            t.batch_size = a.batch_size;
        }
        if explicit(m, "lr") {
            t.peak_lr = a.lr;
        }
        if explicit(m, "warmup") {
            t.warmup = a.warmup;
        }
        if explicit(m, "eval_every") {
            t.eval_every = a.eval_every;
        }
        if explicit(m, "patience") {
            t.patience = a.patience;
        }
        if a.resample_features {
            t.resample_features = true;
        }
    }
    {
        let c = &mut rc.model;
        if explicit(m, "d_model") {
            c.d_model = a.d_model;
        }
        if explicit(m, "n_heads") {
            c.n_heads = a.n_heads;
        }
        if explicit(m, "d_ff") {
            c.d_ff = a.d_ff;
        }
        if explicit(m, "enc_layers") {
            c.n_enc_layers = a.enc_layers;
        }
        if explicit(m, "dec_layers") {
            c.n_dec_layers = a.dec_layers;
        }
        if explicit(m, "d_cross") {
            c.d_cross = a.d_cross;
        }
        if explicit(m, "d_causal") {
            c.d_causal = a.d_causal;
        }
        if explicit(m, "sigma") {
            c.sigma = a.sigma;
        }
    }
    if rc.window == 0 {
        return Err(usage("--L must be >= 1"));
    }
    if rc.train.batch_size == 0 {
        return Err(usage("--batch-size must be >= 1"));
    }

    let data = a.data.clone().unwrap_or_else(|| out_dir().join("data"));
    let corpus = Corpus::load(&data)?;
    if rc.vocab_size_set && rc.model.vocab_size != corpus.vocab.len() {
        return Err(Error::InvalidInput(format!(
            "model vocab_size {} does not match corpus vocabulary of {}",
            rc.model.vocab_size,
            corpus.vocab.len()
        )));
    }
    rc.model.vocab_size = corpus.vocab.len();
    rc.model.validate().map_err(|e| usage(e.to_string()))?;

    let ckpt = a.out.clone().unwrap_or_else(|| out_dir().join("model.ckpt"));
    let loss_csv = a.loss_csv.clone().unwrap_or_else(|| ckpt.with_extension("loss.csv"));
    for p in [&ckpt, &loss_csv] {
        if !a.shared.force && p.exists() {
            return Err(Error::Exists(p.to_path_buf()));
        }
    }

    let train_ex = window_examples(&corpus.train, rc.window)?;
    let dev_ex = window_examples(&corpus.dev, rc.window)?;
    let mut model = Model::new(rc.model.clone())?;
    writeln!(
        out,
        "training {} parameters on {} windows (L={}), {} dev windows",
        model.params.num_scalars(),
        train_ex.len(),
        rc.window,
        dev_ex.len()
    )
    .map_err(io_err)?;
    let every = rc.train.eval_every.max(1);
    let report = train_with_callback(&mut model, &train_ex, &dev_ex, &rc.train, |step, loss| {
        if step % every == 0 {
            let _ = writeln!(out, "step {step} loss {loss:.5}");
        }
    })?;
    checkpoint::save(&ckpt, &model, Some(&corpus.vocab), true)?;
    write_file(&loss_csv, loss_curve_csv(&report, &rc.train), true)?;
    writeln!(
        out,
        "best step {} dev loss {}{}; checkpoint {}",
        report.best_step,
        report.best_dev_loss.map_or("n/a".into(), |l| format!("{l:.5}")),
        if report.stopped_early { " (stopped early)" } else { "" },
        ckpt.display()
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn loss_curve_csv(report: &crate::transformer::TrainReport, cfg: &TrainConfig) -> String {
    let mut s = String::from("step,lr,train_loss,dev_loss\n");
    let mut dev = report.dev_losses.iter().peekable();
    for &(step, loss) in &report.losses {
        let d = match dev.peek() {
            Some(&&(ds, dl)) if ds == step => {
                dev.next();
                format!("{dl}")
            }
            _ => String::new(),
        };
        s.push_str(&format!("{step},{},{loss},{d}\n", cfg.learning_rate(step)));
    }
    s
}

fn load_model(path: Option<&PathBuf>) -> Result<checkpoint::Checkpoint> {
    let p = path.cloned().unwrap_or_else(|| out_dir().join("model.ckpt"));
    if !p.exists() {
        return Err(Error::InvalidInput(format!("checkpoint {} not found", p.display())));
    }
    checkpoint::load(&p)
}

fn check_vocab(ckpt: &checkpoint::Checkpoint, corpus_vocab: &crate::vocab::Vocab) -> Result<()> {
    match &ckpt.vocab {
        Some(v) if v != corpus_vocab => Err(Error::InvalidInput("checkpoint vocabulary differs from the corpus vocabulary".into())),
        _ if corpus_vocab.len() != ckpt.model.config.vocab_size => Err(Error::InvalidInput(format!(
            "checkpoint vocab size {} differs from corpus vocabulary of {}",
            ckpt.model.config.vocab_size,
            corpus_vocab.len()
        ))),
        _ => Ok(()),
    }
}

fn translate(a: &TranslateArgs, m: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let mut rc = base_config(&a.shared)?;
    if explicit(m, "window") {
        rc.window = a.window;
    }
    if explicit(m, "beam") {
        rc.beam = a.beam;
    }
    if rc.window == 0 {
        return Err(usage("--L must be >= 1"));
    }
    if rc.beam == 0 {
        return Err(usage("--beam must be >= 1"));
    }
    let data = a.data.clone().unwrap_or_else(|| out_dir().join("data"));
    let output = a
        .output
        .clone()
        .unwrap_or_else(|| out_dir().join(format!("translation.{}.txt", a.split)));
    if !a.shared.force && output.exists() {
        return Err(Error::Exists(output));
    }
    let ckpt = load_model(a.checkpoint.as_ref())?;
    let corpus = Corpus::load(&data)?;
    check_vocab(&ckpt, &corpus.vocab)?;
    let docs = corpus
        .split(&a.split)
        .ok_or_else(|| usage(format!("unknown split {:?}", a.split)))?;
    if docs.is_empty() {
        return Err(Error::Empty("corpus split"));
    }
    let model = &ckpt.model;
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    let mut translated = Vec::new();
    let mut empty = 0usize;
    for doc in docs {
        let mut sentences = Vec::new();
        for w in make_windows(&doc.source, rc.window)? {
            let max_len = a.max_len.unwrap_or_else(|| default_max_len(w.tokens.len()));
            let tokens = if a.greedy {
                greedy_decode(model, &w.tokens, max_len)?
            } else {
                beam_decode(model, &w.tokens, rc.beam, max_len)?
            };
            let last = extract_last_sentence(&tokens);
            if last.is_empty() {
                empty += 1;
            }
            hyps.push(last.clone());
            refs.push(doc.target.sentences()[w.last_sentence].clone());
            sentences.push(last);
        }
        translated.push(sentences);
    }
    let text = render_translation(&translated, &corpus.vocab);
    write_file(&output, text, true)?;
    let score = bleu(&hyps, &refs, 4)?;
    writeln!(out, "BLEU = {score:.2} ({} sentences, L={})", hyps.len(), rc.window).map_err(io_err)?;
    if empty > 0 {
        writeln!(out, "warning: {empty} windows produced an empty final sentence").map_err(io_err)?;
    }
    writeln!(out, "translation written to {}", output.display()).map_err(io_err)?;
    Ok(EXIT_OK)
}

/// Corpus layout. An empty extracted sentence is written as `<empty>` so
/// that blank lines keep marking document boundaries.
fn render_translation(docs: &[Vec<Vec<usize>>], vocab: &crate::vocab::Vocab) -> String {
    let mut s = String::new();
    for (i, d) in docs.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        for sent in d {
            if sent.is_empty() {
                s.push_str("<empty>");
            } else {
                s.push_str(&vocab.decode(sent));
            }
            s.push('\n');
        }
    }
    s
}

fn eval_consistency(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let _rc = base_config(&a.shared)?;
    let windows: Vec<usize> = parse_list("--L", &a.windows)?;
    if windows.is_empty() || windows.contains(&0) {
        return Err(usage("--L needs positive window sizes"));
    }
    let data = a.data.clone().unwrap_or_else(|| out_dir().join("data"));
    let items_path = a.items.clone().unwrap_or_else(|| data.join(Corpus::ITEMS_FILE));
    let ckpt = load_model(a.checkpoint.as_ref())?;
    let vocab = match &ckpt.vocab {
        Some(v) => v.clone(),
        None => crate::vocab::Vocab::load(&data.join(Corpus::VOCAB_FILE))?,
    };
    if vocab.len() != ckpt.model.config.vocab_size {
        return Err(Error::InvalidInput("vocabulary does not match the checkpoint".into()));
    }
    let items = load_items(&items_path, &vocab)?;
    if items.is_empty() {
        return Err(Error::Empty("consistency items"));
    }
    let baseline = items.iter().map(|i| 1.0 / i.candidates.len() as f64).sum::<f64>() / items.len() as f64;
    for l in windows {
        let acc = consistency_evaluate(&ckpt.model, &items, l)?;
        writeln!(out, "L={l} accuracy {acc:.4} (random baseline {baseline:.4}, {} items)", items.len())
            .map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn bench(a: &BenchArgs, m: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let mut rc = base_config(&a.shared)?;
    let b = &mut rc.bench;
    if explicit(m, "windows") {
        b.windows = parse_list("--L", &a.windows)?;
    }
    if explicit(m, "backends") {
        b.backends = parse_variants(&a.backends)?;
    }
    if explicit(m, "reps") {
        b.reps = a.reps;
    }
    if explicit(m, "warmup") {
        b.warmup = a.warmup;
    }
    if explicit(m, "batch_divisor") {
        b.batch_divisor = a.batch_divisor;
    }
    if explicit(m, "tokens_per_sentence") {
        b.tokens_per_sentence = a.tokens_per_sentence;
    }
    if explicit(m, "profile_prefixes") {
        b.profile_prefixes = parse_list("--profile-prefixes", &a.profile_prefixes)?;
    }
    if explicit(m, "seed") {
        b.seed = a.seed;
    }
    if let Some(spec) = &a.inflate_latency {
        let (name, ns) = spec
            .split_once('=')
            .ok_or_else(|| usage("--inflate-latency expects BACKEND=NS"))?;
        let v = Variant::parse(name.trim()).ok_or_else(|| usage(format!("unknown backend {name:?}")))?;
        let ns: f64 = ns.trim().parse().map_err(|_| usage(format!("bad nanoseconds {ns:?}")))?;
        b.inflate_latency = Some((v, ns));
    }
    b.validate().map_err(|e| usage(e.to_string()))?;
    let output = a.output.clone().unwrap_or_else(|| out_dir().join("bench.csv"));
    if !a.shared.force && output.exists() {
        return Err(Error::Exists(output));
    }
    let ckpt = load_model(a.checkpoint.as_ref())?;
    let result = benchmark::run_benchmark(&ckpt.model, &rc.bench)?;
    let summary = emit_report(&result, &output, true)?;
    write!(out, "{summary}").map_err(io_err)?;
    writeln!(out, "report written to {}", output.display()).map_err(io_err)?;
    if a.assert {
        let failed: Vec<_> = check_laws(&result).into_iter().filter(|c| !c.pass).collect();
        if !failed.is_empty() {
            for f in &failed {
                eprintln!("assertion failed: {} = {:.3}", f.name, f.value);
            }
            return Ok(EXIT_ASSERT);
        }
    }
    Ok(EXIT_OK)
}
