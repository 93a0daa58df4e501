//! Library error type.
//!
//! Every fallible operation in this crate reports a structured error that
//! names the offending location (a distribution row, a prefix position, a
//! conversation turn, …) so that CLI consumers can surface actionable
//! messages without string-parsing.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of model construction, inference, estimation and attack
/// simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Vocabulary size outside the supported range.
    #[error("vocabulary must contain between {min} and {max} sentences, got {got}")]
    VocabSize { got: usize, min: usize, max: usize },

    /// Two identical sentence strings in one vocabulary.
    #[error("duplicate sentence {0:?} in vocabulary")]
    DuplicateSentence(String),

    /// A probability entry is negative, NaN, or infinite.
    #[error("{location}: probability at index {index} is {value}, must be finite and >= 0")]
    InvalidProbability {
        location: String,
        index: usize,
        value: f64,
    },

    /// A probability row does not sum to 1 within the load tolerance.
    #[error("{location}: probabilities sum to {sum:.17} but must equal 1 within {tolerance:e}")]
    RowSum {
        location: String,
        sum: f64,
        tolerance: f64,
    },

    /// A probability row has the wrong number of entries.
    #[error("{location}: expected {expected} probabilities, got {got}")]
    RowLength {
        location: String,
        expected: usize,
        got: usize,
    },

    /// Markov order outside {1, 2}.
    #[error("markov order must be 1 or 2, got {0}")]
    InvalidOrder(usize),

    /// A state reachable with positive probability has no transition row.
    #[error("{location}: missing transition row for reachable state {state:?}")]
    MissingState { location: String, state: String },

    /// A transition-table key could not be parsed as `i` or `i|j`.
    #[error("{location}: malformed state key {key:?} (expected vocabulary indices joined by '|')")]
    BadStateKey { location: String, key: String },

    /// Mixture weight outside the open interval (0, 1).
    #[error("mixture weight alpha must lie strictly inside (0, 1), got {0}")]
    InvalidAlpha(f64),

    /// Conditioning on a prefix the model cannot produce.
    #[error(
        "prefix impossible under the model: sentence index {symbol} at position {position} has probability zero"
    )]
    UnsupportedPrefix { position: usize, symbol: usize },

    /// Sequence contains an index outside the vocabulary.
    #[error("sentence index {index} out of range for vocabulary of size {vocab_size}")]
    SymbolOutOfRange { index: usize, vocab_size: usize },

    /// Operation defined only for two-component mixtures.
    #[error("operation requires a two-component mixture model")]
    NotAMixture,

    /// Operation defined only for finite-state (categorical/Markov) models.
    #[error("operation requires a finite-state (categorical or markov) component, not a mixture")]
    NotAComponent,

    /// Behavior score outside [-1, 1].
    #[error("behavior score {value} at index {index} is outside [-1, 1]")]
    InvalidScore { index: usize, value: f64 },

    /// Behavior table does not cover the vocabulary exactly.
    #[error("behavior table mismatch: {detail}")]
    BehaviorTable { detail: String },

    /// No sentence with negative behavior score has positive probability.
    #[error("no trigger available: no negatively scored sentence has positive probability in this context")]
    NoTrigger,

    /// Enumeration request beyond the hard oracle budget.
    #[error("enumeration budget exceeded: {what} is {got}, limit {max}")]
    BudgetExceeded {
        what: &'static str,
        got: usize,
        max: usize,
    },

    /// State-space walk grew past the certification cap.
    #[error("state space too large to certify: more than {cap} joint states")]
    StateSpaceExceeded { cap: usize },

    /// Curve fit attempted on fewer than two usable points.
    #[error("degenerate fit: {detail}")]
    DegenerateFit { detail: String },

    /// A conversation turn whose cap cannot hold even one sentence.
    #[error("turn {turn}: per-turn cap {cap} leaves no room for a single sentence")]
    InfeasibleCap { turn: usize, cap: f64 },

    /// Scalar parameter outside its documented range.
    #[error("parameter {name} = {value} violates constraint: {constraint}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// Model file violates the schema in a way JSON parsing cannot catch.
    #[error("{location}: {detail}")]
    ModelFile { location: String, detail: String },

    /// Rejection-sampling model generator gave up.
    #[error("model synthesis failed after {attempts} attempts: {reason}; try looser targets")]
    SynthesisFailed { attempts: usize, reason: String },

    /// Model file could not be read or written.
    #[error("i/o error")]
    Io(#[from] std::io::Error),

    /// Model file is not valid JSON.
    #[error("invalid JSON")]
    Json(#[from] serde_json::Error),
}
