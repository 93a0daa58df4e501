//! Sentence-granularity language models with exact log-space inference.
//!
//! The unit of generation is a whole sentence, represented as an atomic
//! vocabulary symbol. That makes every conditional next-sentence
//! distribution a finite probability vector and every sequence probability
//! exactly computable — no tokenizer, no truncation, no approximation.
//!
//! Three model variants are supported:
//!
//! * **Categorical** — sentences are i.i.d. from a fixed distribution.
//! * **Markov** (order 1 or 2) — the conditioning state is the last
//!   `min(order, len)` sentence indices; an initial distribution covers the
//!   empty prefix.
//! * **Mixture** — a two-component convex combination
//!   `P = α·P⁻ + (1−α)·P⁺`, whose conditional next-sentence distribution is
//!   the posterior-reweighted combination
//!   `P(·|s*) = w⁻(s*)·P⁻(·|s*) + w⁺(s*)·P⁺(·|s*)` with
//!   `w⁻(s*) = 1 / (1 + ((1−α)/α) · P⁺(s*)/P⁻(s*))`.
//!
//! All sequence probabilities are carried in natural-log space; zero
//! probability is `-∞` and log-sum-exp keeps mixtures stable even when one
//! component is hundreds of nats less likely than the other.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest supported vocabulary.
pub const MIN_VOCAB: usize = 2;
/// Largest supported vocabulary (desk scale).
pub const MAX_VOCAB: usize = 1024;
/// Load-time tolerance on a probability row's sum; worse than this is an
/// error, better than [`ROW_SUM_EXACT`] is accepted verbatim, in between the
/// row is renormalized once.
pub const ROW_SUM_LOAD_TOLERANCE: f64 = 1e-9;
/// A row whose sum is within this of 1 is stored without renormalization, so
/// save/load round trips are bit-for-bit stable.
pub const ROW_SUM_EXACT: f64 = 1e-12;
/// Hard cap on certification walks over joint conditioning states.
pub const STATE_SPACE_CAP: usize = 65_536;

/// A sequence of sentences, stored as vocabulary indices.
pub type SentenceSeq = Vec<usize>;

/// Two-term log-sum-exp: `ln(eᵃ + eᵇ)`, exact for `-∞` arguments.
pub(crate) fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Numerically stable logistic function `1 / (1 + e⁻ˣ)`.
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The vocabulary: an ordered list of distinct sentence strings. Indices are
/// contiguous and stable; every other type in the crate works in indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    sentences: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary, enforcing size limits and uniqueness.
    pub fn new(sentences: Vec<String>) -> Result<Self> {
        if sentences.len() < MIN_VOCAB || sentences.len() > MAX_VOCAB {
            return Err(Error::VocabSize {
                got: sentences.len(),
                min: MIN_VOCAB,
                max: MAX_VOCAB,
            });
        }
        let mut seen = BTreeSet::new();
        for s in &sentences {
            if !seen.insert(s.as_str()) {
                return Err(Error::DuplicateSentence(s.clone()));
            }
        }
        Ok(Self { sentences })
    }

    /// Number of sentences.
    pub fn size(&self) -> usize {
        self.sentences.len()
    }

    /// Sentence string at `index` (panics if out of range, like slice indexing).
    pub fn sentence(&self, index: usize) -> &str {
        &self.sentences[index]
    }

    /// Index of a sentence string, if present.
    pub fn index_of(&self, sentence: &str) -> Option<usize> {
        self.sentences.iter().position(|s| s == sentence)
    }

    /// All sentences in index order.
    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }
}

/// A finite probability distribution over the vocabulary, stored in both
/// linear and natural-log space.
///
/// The linear probabilities are the authoritative values (they round-trip
/// through serialization bit-for-bit); the log probabilities are derived once
/// at construction so sequence scoring never re-takes logs in inner loops.
/// Zero probability is represented as `-∞` in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl Dist {
    /// Validates and builds a distribution row. `location` names the row in
    /// error messages (e.g. `negative.transitions["0|1"]`).
    ///
    /// Entries must be finite and non-negative; the sum must be 1 within
    /// [`ROW_SUM_LOAD_TOLERANCE`]. Sums further than [`ROW_SUM_EXACT`] from 1
    /// are renormalized once, which is idempotent: a renormalized row passes
    /// the exact check afterwards, so round trips are stable.
    pub fn new(mut probs: Vec<f64>, location: &str) -> Result<Self> {
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidProbability {
                    location: location.to_string(),
                    index,
                    value,
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_LOAD_TOLERANCE {
            return Err(Error::RowSum {
                location: location.to_string(),
                sum,
                tolerance: ROW_SUM_LOAD_TOLERANCE,
            });
        }
        if (sum - 1.0).abs() > ROW_SUM_EXACT {
            for p in &mut probs {
                *p /= sum;
            }
        }
        Ok(Self::from_normalized(probs))
    }

    /// Wraps probabilities that are already normalized by construction
    /// (e.g. a posterior-weighted combination of two valid rows).
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        let log_probs = probs
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        Self { probs, log_probs }
    }

    /// Linear probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Natural-log probabilities (`-∞` for zero).
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// True when the distribution has no entries (never for valid rows).
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Linear probability of one symbol.
    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Log probability of one symbol.
    pub fn log_prob(&self, index: usize) -> f64 {
        self.log_probs[index]
    }

    /// Exact expectation `Σᵢ pᵢ·vᵢ`, skipping zero-probability entries so a
    /// `v` of `±∞` on an impossible symbol cannot poison the sum.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.probs.len());
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p * values[i];
            }
        }
        acc
    }

    /// Draws one symbol by inverse-CDF walk over the linear probabilities.
    /// Zero-probability symbols are never returned; accumulated rounding at
    /// the top of the CDF falls back to the last positive symbol.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_positive = Some(i);
                if u < acc {
                    return i;
                }
            }
        }
        last_positive.expect("valid distribution has at least one positive entry")
    }
}

/// Deterministic random-stream factory.
///
/// `stream(i)` yields an independent ChaCha8 stream for work item `i`,
/// derived only from `(master_seed, i)` — never from wall clock or worker
/// scheduling — so any parallelization over trials reproduces the
/// single-threaded results bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    /// Master seed covering a whole experiment.
    pub master_seed: u64,
}

impl RngSpec {
    /// New spec from a master seed.
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Independent, reproducible stream for one work item.
    pub fn stream(&self, trial_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(trial_index);
        rng
    }
}

/// A Markov sentence model of order 1 or 2.
///
/// The conditioning state after a prefix is its last `min(order, len)`
/// indices; the empty state is served by `initial`. Construction verifies
/// that every state reachable with positive probability has a transition
/// row, so inference never discovers a hole at runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovLm {
    order: usize,
    initial: Dist,
    transitions: BTreeMap<SentenceSeq, Dist>,
}

impl MarkovLm {
    fn new(
        order: usize,
        initial: Dist,
        transitions: BTreeMap<SentenceSeq, Dist>,
        location: &str,
    ) -> Result<Self> {
        if order == 0 || order > 2 {
            return Err(Error::InvalidOrder(order));
        }
        let m = initial.len();
        for (state, row) in &transitions {
            if row.len() != m {
                return Err(Error::RowLength {
                    location: format!("{location}.transitions[{}]", state_key_string(state)),
                    expected: m,
                    got: row.len(),
                });
            }
            if state.is_empty() || state.len() > order {
                return Err(Error::BadStateKey {
                    location: format!("{location}.transitions", location = location),
                    key: state_key_string(state),
                });
            }
            for &s in state {
                if s >= m {
                    return Err(Error::SymbolOutOfRange {
                        index: s,
                        vocab_size: m,
                    });
                }
            }
        }
        let lm = Self {
            order,
            initial,
            transitions,
        };
        // Breadth-first reachability from the empty state: every state enterable
        // through positive-probability steps must have a row.
        let mut seen: BTreeSet<SentenceSeq> = BTreeSet::new();
        let mut queue: VecDeque<SentenceSeq> = VecDeque::new();
        queue.push_back(Vec::new());
        seen.insert(Vec::new());
        while let Some(state) = queue.pop_front() {
            let row = match lm.state_row(&state) {
                Some(row) => row,
                None => {
                    return Err(Error::MissingState {
                        location: location.to_string(),
                        state: state_key_string(&state),
                    })
                }
            };
            for (sym, &p) in row.probs().iter().enumerate() {
                if p > 0.0 {
                    let next = lm.advance_state(&state, sym);
                    if seen.insert(next.clone()) {
                        queue.push_back(next);
                    }
                }
            }
        }
        Ok(lm)
    }

    /// Markov order (1 or 2).
    pub fn order(&self) -> usize {
        self.order
    }

    /// Initial row (distribution at the empty state).
    pub(crate) fn initial_row(&self) -> &Dist {
        &self.initial
    }

    /// Per-state transition rows, keyed by state index sequence.
    pub(crate) fn transition_rows(&self) -> &BTreeMap<SentenceSeq, Dist> {
        &self.transitions
    }

    /// Conditioning state after appending `sym` in `state`.
    fn advance_state(&self, state: &[usize], sym: usize) -> SentenceSeq {
        let mut next = state.to_vec();
        next.push(sym);
        let start = next.len().saturating_sub(self.order);
        next.drain(..start);
        next
    }

    /// Row for a state, if present (`None` marks a missing table entry).
    fn state_row(&self, state: &[usize]) -> Option<&Dist> {
        if state.is_empty() {
            Some(&self.initial)
        } else {
            self.transitions.get(state)
        }
    }

    /// State implied by an arbitrary prefix.
    fn state_of<'a>(&self, prefix: &'a [usize]) -> &'a [usize] {
        &prefix[prefix.len().saturating_sub(self.order)..]
    }
}

/// Canonical `i|j` rendering of a state key.
pub(crate) fn state_key_string(state: &[usize]) -> String {
    state
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

/// A two-component mixture `P = α·P⁻ + (1−α)·P⁺`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureLm {
    alpha: f64,
    /// ln((1−α)/α), the prior log-odds against the negative component.
    log_odds_against: f64,
    negative: Box<SentenceLm>,
    positive: Box<SentenceLm>,
}

impl MixtureLm {
    /// Mixture weight of the negative component.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The ill-behaved component P⁻.
    pub fn negative(&self) -> &SentenceLm {
        &self.negative
    }

    /// The well-behaved component P⁺.
    pub fn positive(&self) -> &SentenceLm {
        &self.positive
    }
}

/// A sentence-level language model.
#[derive(Debug, Clone, PartialEq)]
pub enum SentenceLm {
    /// I.i.d. sentences from one fixed distribution.
    Categorical(Dist),
    /// Order-1/2 Markov chain over sentences.
    Markov(MarkovLm),
    /// Two-component mixture with Bayesian posterior reweighting.
    Mixture(MixtureLm),
}

impl SentenceLm {
    /// I.i.d. model from linear probabilities.
    pub fn categorical(probs: Vec<f64>) -> Result<Self> {
        Self::categorical_at(probs, "categorical.initial")
    }

    /// Same as [`Self::categorical`] with an explicit error-message location.
    pub fn categorical_at(probs: Vec<f64>, location: &str) -> Result<Self> {
        if probs.len() < MIN_VOCAB || probs.len() > MAX_VOCAB {
            return Err(Error::VocabSize {
                got: probs.len(),
                min: MIN_VOCAB,
                max: MAX_VOCAB,
            });
        }
        Ok(Self::Categorical(Dist::new(probs, location)?))
    }

    /// Markov model from an initial row and per-state transition rows.
    pub fn markov(
        order: usize,
        initial: Vec<f64>,
        transitions: BTreeMap<SentenceSeq, Vec<f64>>,
    ) -> Result<Self> {
        Self::markov_at(order, initial, transitions, "markov")
    }

    /// Same as [`Self::markov`] with an explicit error-message location.
    pub fn markov_at(
        order: usize,
        initial: Vec<f64>,
        transitions: BTreeMap<SentenceSeq, Vec<f64>>,
        location: &str,
    ) -> Result<Self> {
        if initial.len() < MIN_VOCAB || initial.len() > MAX_VOCAB {
            return Err(Error::VocabSize {
                got: initial.len(),
                min: MIN_VOCAB,
                max: MAX_VOCAB,
            });
        }
        let initial = Dist::new(initial, &format!("{location}.initial"))?;
        let mut rows = BTreeMap::new();
        for (state, probs) in transitions {
            let row = Dist::new(
                probs,
                &format!("{location}.transitions[{}]", state_key_string(&state)),
            )?;
            rows.insert(state, row);
        }
        Ok(Self::Markov(MarkovLm::new(order, initial, rows, location)?))
    }

    /// Two-component mixture; `alpha` must lie strictly inside (0, 1) and the
    /// components must share a vocabulary size.
    pub fn mixture(alpha: f64, negative: SentenceLm, positive: SentenceLm) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
            return Err(Error::InvalidAlpha(alpha));
        }
        if negative.vocab_size() != positive.vocab_size() {
            return Err(Error::RowLength {
                location: "mixture components".to_string(),
                expected: negative.vocab_size(),
                got: positive.vocab_size(),
            });
        }
        Ok(Self::Mixture(MixtureLm {
            alpha,
            log_odds_against: ((1.0 - alpha) / alpha).ln(),
            negative: Box::new(negative),
            positive: Box::new(positive),
        }))
    }

    /// Vocabulary size the model is defined over.
    pub fn vocab_size(&self) -> usize {
        match self {
            Self::Categorical(d) => d.len(),
            Self::Markov(m) => m.initial.len(),
            Self::Mixture(m) => m.negative.vocab_size(),
        }
    }

    /// True for categorical/Markov models, whose conditioning states are
    /// finitely enumerable; false for mixtures.
    pub fn is_finite_state(&self) -> bool {
        !matches!(self, Self::Mixture(_))
    }

    /// Borrow as a mixture or fail with [`Error::NotAMixture`].
    pub fn as_mixture(&self) -> Result<&MixtureLm> {
        match self {
            Self::Mixture(m) => Ok(m),
            _ => Err(Error::NotAMixture),
        }
    }

    /// Exact natural-log probability of a sentence sequence.
    ///
    /// The empty sequence has log-probability 0; an impossible sequence
    /// returns `-∞` (not an error). Mixtures combine component sequence
    /// probabilities by log-sum-exp with weights `ln α` and `ln (1−α)`.
    pub fn log_prob_seq(&self, seq: &[usize]) -> Result<f64> {
        let m = self.vocab_size();
        if let Some(&index) = seq.iter().find(|&&s| s >= m) {
            return Err(Error::SymbolOutOfRange {
                index,
                vocab_size: m,
            });
        }
        Ok(self.log_prob_seq_checked(seq))
    }

    /// `log_prob_seq` after index validation.
    fn log_prob_seq_checked(&self, seq: &[usize]) -> f64 {
        match self {
            Self::Categorical(d) => {
                let mut acc = 0.0;
                for &s in seq {
                    let lp = d.log_prob(s);
                    if lp == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    acc += lp;
                }
                acc
            }
            Self::Markov(mk) => {
                let mut acc = 0.0;
                let mut state: SentenceSeq = Vec::new();
                for &s in seq {
                    let row = match mk.state_row(&state) {
                        Some(row) => row,
                        // Unreachable after construction-time validation, but a
                        // zero-probability path may wander into uncharted states;
                        // the sequence is impossible either way.
                        None => return f64::NEG_INFINITY,
                    };
                    let lp = row.log_prob(s);
                    if lp == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    acc += lp;
                    state = mk.advance_state(&state, s);
                }
                acc
            }
            Self::Mixture(mx) => {
                // ln P(∅) = ln 1 exactly; the log-sum-exp below would leave
                // ~1e-17 of float dust on ln(α + (1−α)).
                if seq.is_empty() {
                    return 0.0;
                }
                let lp_neg = mx.negative.log_prob_seq_checked(seq);
                let lp_pos = mx.positive.log_prob_seq_checked(seq);
                log_sum_exp2(mx.alpha.ln() + lp_neg, (1.0 - mx.alpha).ln() + lp_pos)
            }
        }
    }

    /// Position and symbol of the first prefix sentence that makes the prefix
    /// impossible, if any.
    fn first_unsupported(&self, prefix: &[usize]) -> Option<(usize, usize)> {
        for (position, &symbol) in prefix.iter().enumerate() {
            let lp = self.log_prob_seq_checked(&prefix[..=position]);
            if lp == f64::NEG_INFINITY {
                return Some((position, symbol));
            }
        }
        None
    }

    /// Exact conditional next-sentence distribution `P(·|prefix)`.
    ///
    /// For mixtures this is the posterior-reweighted combination of the
    /// component conditionals. The prefix must have positive probability;
    /// otherwise an [`Error::UnsupportedPrefix`] names the first impossible
    /// sentence.
    pub fn next_dist(&self, prefix: &[usize]) -> Result<Dist> {
        let m = self.vocab_size();
        if let Some(&index) = prefix.iter().find(|&&s| s >= m) {
            return Err(Error::SymbolOutOfRange {
                index,
                vocab_size: m,
            });
        }
        match self {
            Self::Categorical(d) => {
                if let Some(&symbol) = prefix.iter().find(|&&s| d.prob(s) == 0.0) {
                    let position = prefix.iter().position(|&s| d.prob(s) == 0.0).unwrap();
                    return Err(Error::UnsupportedPrefix { position, symbol });
                }
                Ok(d.clone())
            }
            Self::Markov(mk) => {
                // Walk the prefix to verify support and land on the final state.
                let mut state: SentenceSeq = Vec::new();
                for (position, &symbol) in prefix.iter().enumerate() {
                    let row = mk
                        .state_row(&state)
                        .ok_or(Error::UnsupportedPrefix { position, symbol })?;
                    if row.prob(symbol) == 0.0 {
                        return Err(Error::UnsupportedPrefix { position, symbol });
                    }
                    state = mk.advance_state(&state, symbol);
                }
                let row = mk.state_row(&state).ok_or_else(|| {
                    // Only possible for non-validated hand-built states.
                    Error::MissingState {
                        location: "markov".to_string(),
                        state: state_key_string(&state),
                    }
                })?;
                Ok(row.clone())
            }
            Self::Mixture(mx) => {
                let w_neg = self.posterior_weight(prefix)?;
                let w_pos = 1.0 - w_neg;
                // A component with exactly zero posterior weight may be unable to
                // produce the prefix at all; skip it rather than conditioning on
                // an impossible event.
                let neg_row = if w_neg > 0.0 {
                    Some(mx.negative.next_dist(prefix)?)
                } else {
                    None
                };
                let pos_row = if w_pos > 0.0 {
                    Some(mx.positive.next_dist(prefix)?)
                } else {
                    None
                };
                let mut probs = vec![0.0; m];
                if let Some(row) = &neg_row {
                    for (i, &p) in row.probs().iter().enumerate() {
                        probs[i] += w_neg * p;
                    }
                }
                if let Some(row) = &pos_row {
                    for (i, &p) in row.probs().iter().enumerate() {
                        probs[i] += w_pos * p;
                    }
                }
                Ok(Dist::from_normalized(probs))
            }
        }
    }

    /// Posterior weight `w⁻(prefix)` of the negative component given a
    /// prefix: `1 / (1 + ((1−α)/α) · P⁺(prefix)/P⁻(prefix))`, computed from
    /// log-space sequence probabilities.
    ///
    /// The empty prefix returns the zero-shot prior `α` exactly. A prefix
    /// impossible under one component returns exactly 0 or 1; impossible
    /// under both is an [`Error::UnsupportedPrefix`].
    pub fn posterior_weight(&self, prefix: &[usize]) -> Result<f64> {
        let mx = self.as_mixture()?;
        if prefix.is_empty() {
            return Ok(mx.alpha);
        }
        let lp_neg = mx.negative.log_prob_seq(prefix)?;
        let lp_pos = mx.positive.log_prob_seq(prefix)?;
        if lp_neg == f64::NEG_INFINITY && lp_pos == f64::NEG_INFINITY {
            let (position, symbol) = self
                .first_unsupported(prefix)
                .expect("prefix with -inf log-probability has an impossible sentence");
            return Err(Error::UnsupportedPrefix { position, symbol });
        }
        if lp_neg == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        if lp_pos == f64::NEG_INFINITY {
            return Ok(1.0);
        }
        // w⁻ = logistic(−(ln((1−α)/α) + ln P⁺ − ln P⁻))
        Ok(logistic(-(mx.log_odds_against + (lp_pos - lp_neg))))
    }

    /// Samples the next sentence after `prefix`.
    pub fn sample_next(&self, prefix: &[usize], rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(self.next_dist(prefix)?.sample(rng))
    }

    /// Samples `n` sentences ancestrally from the exact conditionals after
    /// `prefix`; returns only the sampled continuation.
    pub fn sample_seq(
        &self,
        prefix: &[usize],
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<SentenceSeq> {
        let mut ctx = prefix.to_vec();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let sym = self.next_dist(&ctx)?.sample(rng);
            ctx.push(sym);
            out.push(sym);
        }
        Ok(out)
    }

    /// Key identifying the conditioning state implied by `prefix`, for
    /// finite-state models: empty for categorical, last `min(order, len)`
    /// indices for Markov. Mixtures have no finite state key.
    pub(crate) fn state_key(&self, prefix: &[usize]) -> Result<SentenceSeq> {
        match self {
            Self::Categorical(_) => Ok(Vec::new()),
            Self::Markov(mk) => Ok(mk.state_of(prefix).to_vec()),
            Self::Mixture(_) => Err(Error::NotAComponent),
        }
    }

    /// All conditioning states reachable with positive probability, each with
    /// a representative prefix (the first path that reaches it, scanning
    /// symbols in ascending order) and the state's conditional distribution.
    ///
    /// Finite-state models only; a mixture returns [`Error::NotAComponent`].
    pub fn reachable_states(&self) -> Result<Vec<ReachableState>> {
        match self {
            Self::Categorical(d) => Ok(vec![ReachableState {
                prefix: Vec::new(),
                dist: d.clone(),
            }]),
            Self::Markov(mk) => {
                let mut out = Vec::new();
                let mut seen: BTreeSet<SentenceSeq> = BTreeSet::new();
                let mut queue: VecDeque<(SentenceSeq, SentenceSeq)> = VecDeque::new();
                seen.insert(Vec::new());
                queue.push_back((Vec::new(), Vec::new()));
                while let Some((state, prefix)) = queue.pop_front() {
                    let row = mk.state_row(&state).ok_or_else(|| Error::MissingState {
                        location: "markov".to_string(),
                        state: state_key_string(&state),
                    })?;
                    out.push(ReachableState {
                        prefix: prefix.clone(),
                        dist: row.clone(),
                    });
                    for (sym, &p) in row.probs().iter().enumerate() {
                        if p > 0.0 {
                            let next = mk.advance_state(&state, sym);
                            if seen.insert(next.clone()) {
                                let mut next_prefix = prefix.clone();
                                next_prefix.push(sym);
                                queue.push_back((next, next_prefix));
                            }
                        }
                    }
                }
                Ok(out)
            }
            Self::Mixture(_) => Err(Error::NotAComponent),
        }
    }
}

/// One reachable conditioning state of a finite-state model.
#[derive(Debug, Clone)]
pub struct ReachableState {
    /// Shortest (then lexicographically first) prefix that reaches the state.
    pub prefix: SentenceSeq,
    /// The state's conditional next-sentence distribution.
    pub dist: Dist,
}
