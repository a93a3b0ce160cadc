use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grammar line {line}: {message}")]
    GrammarSyntax { line: usize, message: String },

    #[error("grammar line {line}: undeclared symbol `{symbol}`")]
    UndeclaredSymbol { line: usize, symbol: String },

    #[error("grammar line {line}: default `{default}` is not derivable from `{nonterminal}`")]
    IllTypedDefault {
        line: usize,
        nonterminal: String,
        default: String,
    },

    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),

    #[error("program parse error at byte {offset}: {message}")]
    ProgramParse { offset: usize, message: String },

    #[error("unknown terminal `{0}`")]
    UnknownTerminal(String),

    #[error("hole index {index} out of range ({holes} holes)")]
    HoleIndex { index: usize, holes: usize },

    #[error("no default declared for nonterminal `{0}`")]
    MissingDefault(String),

    #[error("dictionary line {line}: {message}")]
    DictionarySyntax { line: usize, message: String },

    #[error("corpus line {line}: {message}")]
    CorpusSyntax { line: usize, message: String },

    #[error("empty input")]
    EmptyInput,

    #[error("node {0} is not part of the tree")]
    NodeNotInTree(usize),

    #[error("sentence has {0} tokens; at most 128 are supported")]
    SentenceTooLong(usize),

    #[error("candidate capacity exceeded: more than {cap} tuples")]
    CapacityExceeded { cap: usize },

    #[error("witness map enumeration exceeded {cap} maps")]
    WitnessCapExceeded { cap: usize },

    #[error("feature undefined: {0}")]
    FeatureUndefined(String),

    #[error("empty training sample set")]
    EmptySamples,

    #[error("desired program has non-positive score {0}")]
    NonPositiveScore(f64),

    #[error("optimization diverged at iteration {iteration}: objective {value}")]
    Diverged { iteration: usize, value: f64 },

    #[error("no usable training sentences")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model bundle fingerprint mismatch: {0}")]
    FingerprintMismatch(String),

    #[error("model bundle: {0}")]
    Bundle(String),

    #[error("corpus of {size} pairs is too small for {k} folds")]
    CorpusTooSmall { size: usize, k: usize },

    #[error("unsupported construct `{0}`")]
    Unsupported(String),

    #[error("untrained: {0}")]
    Untrained(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
