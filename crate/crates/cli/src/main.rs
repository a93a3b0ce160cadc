//! `nl2dsl`: train, query and evaluate domain translators from the shell.
//!
//! Assets are looked up under `$NL2DSL_HOME` (default: the working
//! directory): `domains/<name>/` overrides a bundled domain of the same name
//! and `models/<name>.json` holds trained bundles.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use nl2dsl::domains::{builtin_sources, load_domain_dir, load_domains, DomainAssets, BUILTIN_NAMES};
use nl2dsl::error::Error;
use nl2dsl::eval::{self, EvalOptions, Protocol};
use nl2dsl::lexicon::{apply_suggestion, audit};
use nl2dsl::nlp::{Analyzer, BuiltinAnalyzer};
use nl2dsl::synth::word_mappings;
use nl2dsl::training::{train_all, ModelBundle, TrainConfig, Translator};

#[derive(Parser, Debug)]
#[command(name = "nl2dsl", version, about = "Natural-language to DSL program synthesis")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Asset root holding `domains/` and `models/`.
    #[arg(long, env = "NL2DSL_HOME", global = true)]
    home: Option<PathBuf>,
    /// TOML file with defaults; `<home>/nl2dsl.toml` is read when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Soft-max sharpness of the ranking loss.
    #[arg(long = "loss-c", global = true)]
    loss_c: Option<f64>,
    /// Gradient step size.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Convergence threshold on the weight update.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long = "max-iters", global = true)]
    max_iters: Option<usize>,
    /// Largest candidate bag per sentence.
    #[arg(long, global = true)]
    capacity: Option<usize>,
    #[arg(long = "prune-threshold", global = true)]
    prune_threshold: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a domain and store its bundle under `models/`.
    Train { domain: String },
    /// Rank candidate programs for one sentence.
    Synth {
        domain: String,
        sentence: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Print full component scores and word mappings as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Cross-validate a domain and print the report.
    Eval(EvalArgs),
    /// List corpus pairs the dictionary cannot explain.
    Audit {
        domain: String,
        /// Prompt for `word TERMINAL` fixes and save the extended dictionary.
        #[arg(long)]
        interactive: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Args, Debug)]
struct EvalArgs {
    domain: String,
    /// Fold count; 1 trains and tests on the whole corpus.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Score components pinned to zero weight.
    #[arg(long, value_enum)]
    ablate: Vec<Component>,
    /// Use the weights learned on another domain.
    #[arg(long = "transfer-from")]
    transfer_from: Option<String>,
    /// Also write the per-pair table (TSV) to this path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record synthesis times; the report is then no longer reproducible.
    #[arg(long)]
    timing: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Component {
    Cov,
    Map,
    Str,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    capacity: Option<usize>,
    prune_threshold: Option<f64>,
    #[serde(default)]
    loss: LossOverrides,
    #[serde(default)]
    server: ServerConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossOverrides {
    c: Option<f64>,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    max_iters: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServerConfig {
    bind: Option<String>,
    port: Option<u16>,
}

/// Resolved settings for one invocation.
#[derive(Debug)]
struct CliConfig {
    home: PathBuf,
    train: TrainConfig,
    seed: u64,
    bind: String,
    port: u16,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn resolve(g: &Global) -> Result<CliConfig, Failure> {
    let home = g.home.clone().unwrap_or_else(|| PathBuf::from("."));
    let path = g.config.clone().or_else(|| Some(home.join("nl2dsl.toml")).filter(|p| p.is_file()));
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            toml::from_str::<FileConfig>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    let mut train = TrainConfig::default();
    let loss = &mut train.loss;
    loss.c = g.loss_c.or(file.loss.c).unwrap_or(loss.c);
    loss.gamma = g.gamma.or(file.loss.gamma).unwrap_or(loss.gamma);
    loss.epsilon = g.epsilon.or(file.loss.epsilon).unwrap_or(loss.epsilon);
    loss.max_iters = g.max_iters.or(file.loss.max_iters).unwrap_or(loss.max_iters);
    train.capacity = g.capacity.or(file.capacity).unwrap_or(train.capacity);
    train.prune_threshold = g.prune_threshold.or(file.prune_threshold).unwrap_or(train.prune_threshold);
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Failure::Usage(format!("{name} must be positive, got {v}")))
        }
    };
    positive("loss c", train.loss.c)?;
    positive("gamma", train.loss.gamma)?;
    positive("epsilon", train.loss.epsilon)?;
    if train.loss.max_iters == 0 || train.capacity == 0 {
        return Err(Failure::Usage("max-iters and capacity must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&train.prune_threshold) {
        return Err(Failure::Usage("prune threshold must lie in [0, 1)".into()));
    }
    Ok(CliConfig {
        home,
        train,
        seed: file.seed.unwrap_or(0),
        bind: file.server.bind.unwrap_or_else(|| "127.0.0.1".into()),
        port: file.server.port.unwrap_or(8080),
    })
}

impl CliConfig {
    fn domains_dir(&self) -> PathBuf {
        self.home.join("domains")
    }

    fn models_dir(&self) -> PathBuf {
        self.home.join("models")
    }

    fn bundle_path(&self, domain: &str) -> PathBuf {
        self.models_dir().join(format!("{domain}.json"))
    }

    fn domain(&self, name: &str, analyzer: &dyn Analyzer) -> Result<DomainAssets, Failure> {
        let dir = self.domains_dir().join(name);
        if dir.join("grammar.dsl").is_file() {
            return Ok(load_domain_dir(&dir, analyzer)?);
        }
        let src = builtin_sources(name).ok_or_else(|| Failure::Runtime(format!("unknown domain `{name}`")))?;
        Ok(DomainAssets::from_sources(name, src, analyzer)?)
    }

    fn bundle(&self, d: &DomainAssets) -> Result<Option<ModelBundle>, Failure> {
        let path = self.bundle_path(&d.name);
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        Ok(Some(ModelBundle::load(&text, &d.grammar, &d.dictionary)?))
    }

    /// The stored bundle, or a freshly trained one when none exists.
    fn bundle_or_train(&self, d: &DomainAssets) -> Result<ModelBundle, Failure> {
        if let Some(b) = self.bundle(d)? {
            return Ok(b);
        }
        warn!("no bundle at {}, training {} in memory", self.bundle_path(&d.name).display(), d.name);
        Ok(train_all(&d.name, &d.grammar, &d.dictionary, &d.corpus, &self.train)?.0)
    }
}

fn train(cfg: &CliConfig, domain: &str) -> Result<(), Failure> {
    let d = cfg.domain(domain, &BuiltinAnalyzer::new())?;
    let (bundle, report) = train_all(&d.name, &d.grammar, &d.dictionary, &d.corpus, &cfg.train)?;
    std::fs::create_dir_all(cfg.models_dir())?;
    let path = cfg.bundle_path(domain);
    std::fs::write(&path, bundle.save())?;
    info!("wrote {}", path.display());
    for s in &report.skipped {
        warn!("pair {} skipped at {}: {}", s.pair, s.stage, s.reason);
    }
    let w = bundle.weights;
    println!("domain\t{domain}");
    println!("pairs\t{}", report.pairs);
    println!("pruned\t{}", report.pruned);
    println!("skipped\t{}", report.skipped.len());
    println!("weights\t{:.6}\t{:.6}\t{:.6}", w.cov, w.map, w.str);
    if let Some(fit) = &report.fit {
        println!("top1\t{}/{}", fit.top1, fit.sentences);
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonCandidate {
    rank: usize,
    combined: f64,
    cov: f64,
    map: f64,
    str: f64,
    program_text: String,
    word_mappings: Vec<nl2dsl::synth::WordMapping>,
}

fn synth(cfg: &CliConfig, domain: &str, sentence: &str, top: usize, json: bool) -> Result<(), Failure> {
    let analyzer = BuiltinAnalyzer::new();
    let d = cfg.domain(domain, &analyzer)?;
    let bundle = cfg.bundle_or_train(&d)?;
    let mut t = Translator::from_bundle(&bundle, &d.grammar, &d.dictionary)?;
    t.capacity = cfg.train.capacity;
    let analysis = analyzer.analyze(sentence)?;
    let ranked = t.translate(&d.grammar, &analysis)?;
    let mut out = std::io::stdout().lock();
    if json {
        let rows: Vec<JsonCandidate> = ranked
            .into_iter()
            .take(top)
            .map(|c| JsonCandidate {
                word_mappings: word_mappings(&c.program, &c.map, &analysis.sentence),
                rank: c.rank,
                combined: c.combined,
                cov: c.cov,
                map: c.map_score,
                str: c.str_score,
                program_text: c.text,
            })
            .collect();
        serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| Failure::Runtime(e.to_string()))?;
        writeln!(out)?;
    } else {
        for c in ranked.iter().take(top) {
            writeln!(out, "{}\t{:.6}\t{}", c.rank, c.combined, c.text)?;
        }
    }
    Ok(())
}

fn evaluate(cfg: &CliConfig, a: &EvalArgs) -> Result<(), Failure> {
    let analyzer = BuiltinAnalyzer::new();
    let d = cfg.domain(&a.domain, &analyzer)?;
    let protocol = match a.k {
        0 => return Err(Failure::Usage("--k must be at least 1".into())),
        1 => Protocol::Resubstitution,
        k => Protocol::CrossValidation {
            k,
            seed: a.seed.unwrap_or(cfg.seed),
        },
    };
    let opts = EvalOptions {
        train: cfg.train,
        timing: a.timing,
    };
    let drop = [Component::Cov, Component::Map, Component::Str].map(|c| a.ablate.contains(&c));
    let report = match &a.transfer_from {
        Some(_) if drop.iter().any(|&x| x) => {
            return Err(Failure::Usage("--ablate and --transfer-from cannot be combined".into()));
        }
        Some(src) => {
            let s = cfg.domain(src, &analyzer)?;
            let b = cfg.bundle_or_train(&s)?;
            eval::transfer_weights(Some(&b), &d, protocol, &opts)?
        }
        None if drop.iter().any(|&x| x) => eval::ablate(&d, protocol, drop, &opts)?,
        None => eval::evaluate(&d, protocol, &opts)?,
    };
    print!("{}", report.to_text());
    if let Some(path) = &a.report {
        std::fs::write(path, report.to_table())?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn run_audit(cfg: &CliConfig, domain: &str, interactive: bool) -> Result<(), Failure> {
    let d = cfg.domain(domain, &BuiltinAnalyzer::new())?;
    let pairs: Vec<_> = d.corpus.iter().map(|p| (p.analysis.sentence.clone(), p.program.clone())).collect();
    let gaps = audit(&d.grammar, &d.dictionary, &pairs);
    let mut out = std::io::stdout().lock();
    for gap in &gaps {
        writeln!(out, "{}\t{}\t{}\t{}", gap.pair, gap.terminals.join(","), gap.words.join(","), gap.sentence)?;
    }
    if !interactive || gaps.is_empty() {
        return Ok(());
    }
    drop(out);
    let mut dict = d.dictionary.clone();
    let mut added = 0;
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    for gap in &gaps {
        eprintln!("pair {}: {}", gap.pair, gap.sentence);
        eprintln!("  missing: {}  free words: {}", gap.terminals.join(", "), gap.words.join(", "));
        loop {
            eprint!("  word TERMINAL (empty line to continue)> ");
            std::io::stderr().flush()?;
            let Some(line) = lines.next().transpose()? else { break };
            let line = line.trim();
            if line.is_empty() {
                break;
            }
            let Some((word, term)) = line.rsplit_once(char::is_whitespace) else {
                eprintln!("  expected `word TERMINAL`");
                continue;
            };
            match d.grammar.terminal(term.trim()) {
                Some(t) => added += apply_suggestion(&mut dict, &d.synonyms, &word.trim().to_lowercase(), t),
                None => eprintln!("  no terminal named {term}"),
            }
        }
    }
    if added == 0 {
        return Ok(());
    }
    let dir = cfg.domains_dir().join(domain);
    write_domain(&dir, &d)?;
    std::fs::write(dir.join("dict.dict"), dict.save(&d.grammar))?;
    println!("added\t{added}\t{}", dir.join("dict.dict").display());
    Ok(())
}

fn write_domain(dir: &Path, d: &DomainAssets) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    if !dir.join("grammar.dsl").is_file() {
        let src = builtin_sources(&d.name).ok_or_else(|| Failure::Runtime(format!("no sources for {}", d.name)))?;
        std::fs::write(dir.join("grammar.dsl"), src.grammar)?;
        std::fs::write(dir.join("corpus.pairs"), src.corpus)?;
        std::fs::write(dir.join("synonyms.txt"), src.synonyms)?;
    }
    Ok(())
}

fn serve(cfg: &CliConfig, port: Option<u16>) -> Result<(), Failure> {
    let analyzer = BuiltinAnalyzer::new();
    let mut domains = load_domains(&cfg.domains_dir(), &analyzer)?;
    for name in BUILTIN_NAMES {
        if !domains.contains_key(name) {
            domains.insert(name.to_string(), cfg.domain(name, &analyzer)?);
        }
    }
    let mut bundles = BTreeMap::new();
    for name in domains.keys() {
        if let Ok(text) = std::fs::read_to_string(cfg.bundle_path(name)) {
            bundles.insert(name.clone(), text);
        }
    }
    let state = nl2dsl_server::AppState::new(domains, &bundles)
        .with_models_dir(cfg.models_dir())
        .with_train_config(cfg.train)
        .with_capacity(cfg.train.capacity);
    let addr = format!("{}:{}", cfg.bind, port.unwrap_or(cfg.port));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(nl2dsl_server::serve(Arc::new(state), &addr))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.global)?;
    match &cli.command {
        Command::Train { domain } => train(&cfg, domain),
        Command::Synth {
            domain,
            sentence,
            top,
            json,
        } => synth(&cfg, domain, sentence, *top, *json),
        Command::Eval(a) => evaluate(&cfg, a),
        Command::Audit { domain, interactive } => run_audit(&cfg, domain, *interactive),
        Command::Serve { port } => serve(&cfg, *port),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
