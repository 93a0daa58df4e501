//! Ground-truth behavior scoring and behavior expectation.
//!
//! A [`BehaviorScore`] maps every vocabulary sentence to a score in [-1, 1]
//! along one behavior axis (the sign convention: negative scores mark
//! ill-behaved sentences). The *behavior expectation* of a model after a
//! prompt is the expected score of the next sampled sentence,
//! `B_P(s*) = E_{s∼P(·|s*)}[B(s)]` — computable exactly from the conditional
//! distribution, or by Monte Carlo for protocol parity.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{RngSpec, SentenceLm, SentenceSeq, Vocabulary};

/// Per-sentence behavior scores, index-aligned with the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorScore {
    scores: Vec<f64>,
}

impl BehaviorScore {
    /// Builds a score table; every score must be finite and within [-1, 1].
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        for (index, &value) in scores.iter().enumerate() {
            if !value.is_finite() || !(-1.0..=1.0).contains(&value) {
                return Err(Error::InvalidScore { index, value });
            }
        }
        Ok(Self { scores })
    }

    /// Builds a table from a sentence → score map, enforcing that the map
    /// covers the vocabulary exactly (no missing, no extra sentences).
    pub fn from_table(vocab: &Vocabulary, table: &BTreeMap<String, f64>) -> Result<Self> {
        for key in table.keys() {
            if vocab.index_of(key).is_none() {
                return Err(Error::BehaviorTable {
                    detail: format!("score given for unknown sentence {key:?}"),
                });
            }
        }
        let mut scores = Vec::with_capacity(vocab.size());
        for sentence in vocab.sentences() {
            match table.get(sentence) {
                Some(&value) => scores.push(value),
                None => {
                    return Err(Error::BehaviorTable {
                        detail: format!("no score for sentence {sentence:?}"),
                    })
                }
            }
        }
        Self::new(scores)
    }

    /// Scores in vocabulary index order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Score of one sentence.
    pub fn score(&self, index: usize) -> f64 {
        self.scores[index]
    }

    /// Number of scored sentences.
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    /// True when the table is empty (never for a vocabulary-backed table).
    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// True when the sentence is ill-behaved (score strictly below zero).
    pub fn is_negative(&self, index: usize) -> bool {
        self.scores[index] < 0.0
    }

    /// Indices of all ill-behaved sentences.
    pub fn negative_indices(&self) -> Vec<usize> {
        (0..self.scores.len())
            .filter(|&i| self.scores[i] < 0.0)
            .collect()
    }
}

fn check_len(model: &SentenceLm, b: &BehaviorScore) -> Result<()> {
    if model.vocab_size() != b.len() {
        return Err(Error::BehaviorTable {
            detail: format!(
                "table has {} scores but the model vocabulary has {}",
                b.len(),
                model.vocab_size()
            ),
        });
    }
    Ok(())
}

/// Exact behavior expectation after a prompt:
/// `Σ_s P(s|prefix) · b(s)`.
pub fn behavior_expectation_exact(
    model: &SentenceLm,
    prefix: &[usize],
    b: &BehaviorScore,
) -> Result<f64> {
    check_len(model, b)?;
    Ok(model.next_dist(prefix)?.expectation(b.scores()))
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    /// Sample mean.
    pub estimate: f64,
    /// Sample standard deviation / √trials (0 when trials < 2).
    pub stderr: f64,
    /// Number of draws.
    pub trials: usize,
}

/// Sample mean and standard error of a batch (unbiased stdev; stderr is 0
/// for fewer than two observations).
pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let t = xs.len();
    if t == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / t as f64;
    if !mean.is_finite() {
        // Infinite observations make both statistics infinite.
        return (mean, f64::INFINITY);
    }
    if t < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    (mean, (var / t as f64).sqrt())
}

/// Monte Carlo behavior expectation: scores `trials` independent next-sentence
/// draws, one RNG stream per trial, and reports mean ± stderr.
pub fn behavior_expectation_mc(
    model: &SentenceLm,
    prefix: &[usize],
    b: &BehaviorScore,
    trials: usize,
    rng: &RngSpec,
) -> Result<McEstimate> {
    check_len(model, b)?;
    if trials == 0 {
        return Err(Error::InvalidParam {
            name: "trials",
            value: 0.0,
            constraint: "must be >= 1",
        });
    }
    let dist = model.next_dist(prefix)?;
    let mut draws = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut stream = rng.stream(t as u64);
        draws.push(b.score(dist.sample(&mut stream)));
    }
    let (estimate, stderr) = mean_stderr(&draws);
    Ok(McEstimate {
        estimate,
        stderr,
        trials,
    })
}

/// Outcome of certifying `sup_{s*} B_{P}(s*) ≤ γ` over every reachable
/// conditioning state of a finite-state model.
#[derive(Debug, Clone)]
pub struct GammaCertificate {
    /// True when the supremum is ≤ γ.
    pub holds: bool,
    /// The exact supremum of the behavior expectation over reachable states.
    pub sup: f64,
    /// A prefix whose behavior expectation exceeds γ, when `holds` is false.
    pub witness: Option<SentenceSeq>,
}

/// Certifies that a finite-state component's behavior expectation stays at or
/// below `gamma` for *every* reachable conditioning state.
///
/// The supremum over all prefixes reduces to a maximum over reachable states
/// (categorical: one state; Markov: enumerated by reachability walk). Mixture
/// inputs are rejected with [`Error::NotAComponent`] — their state space is
/// not finitely enumerable, so the property is reported as not certifiable
/// rather than guessed.
pub fn certify_gamma_negative(
    component: &SentenceLm,
    b: &BehaviorScore,
    gamma: f64,
) -> Result<GammaCertificate> {
    check_len(component, b)?;
    let states = component.reachable_states()?;
    let mut sup = f64::NEG_INFINITY;
    let mut witness = None;
    for state in &states {
        let expectation = state.dist.expectation(b.scores());
        if expectation > sup {
            sup = expectation;
            if expectation > gamma {
                witness = Some(state.prefix.clone());
            }
        }
    }
    let holds = sup <= gamma;
    Ok(GammaCertificate {
        holds,
        sup,
        witness: if holds { None } else { witness },
    })
}
