//! Brute-force enumeration oracles over tiny instances.
//!
//! Everything the estimators approximate by sampling, these functions
//! compute exactly by enumerating every sequence — feasible only because
//! budgets are hard-capped at vocabulary ≤ 8 and length ≤ 5. Tests use them
//! as ground truth; nothing here is exported through the CLI.

use crate::divergence::conditional_kl_exact;
use crate::error::{Error, Result};
use crate::model::{SentenceLm, SentenceSeq};

/// Hard cap on the enumerable vocabulary size.
pub const MAX_ORACLE_VOCAB: usize = 8;
/// Hard cap on the enumerable sequence length.
pub const MAX_ORACLE_LEN: usize = 5;

/// Enumeration limits; construction enforces the hard caps so a single
/// enumeration never exceeds 8⁵ sequences per length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    /// Largest vocabulary this budget admits (≤ 8).
    pub max_vocab: usize,
    /// Longest sequence this budget admits (≤ 5).
    pub max_len: usize,
}

impl EnumerationBudget {
    /// Builds a budget, rejecting anything beyond the hard caps.
    pub fn new(max_vocab: usize, max_len: usize) -> Result<Self> {
        if max_vocab > MAX_ORACLE_VOCAB {
            return Err(Error::BudgetExceeded {
                what: "max_vocab",
                got: max_vocab,
                max: MAX_ORACLE_VOCAB,
            });
        }
        if max_len > MAX_ORACLE_LEN {
            return Err(Error::BudgetExceeded {
                what: "max_len",
                got: max_len,
                max: MAX_ORACLE_LEN,
            });
        }
        Ok(Self { max_vocab, max_len })
    }

    fn admit_model(&self, model: &SentenceLm) -> Result<()> {
        if model.vocab_size() > self.max_vocab {
            return Err(Error::BudgetExceeded {
                what: "model vocabulary",
                got: model.vocab_size(),
                max: self.max_vocab,
            });
        }
        Ok(())
    }

    fn admit_len(&self, len: usize) -> Result<()> {
        if len > self.max_len {
            return Err(Error::BudgetExceeded {
                what: "sequence length",
                got: len,
                max: self.max_len,
            });
        }
        Ok(())
    }
}

/// All sequences of exactly `len` symbols over a `vocab`-sized alphabet, in
/// lexicographic order.
fn sequences_of_length(vocab: usize, len: usize) -> Vec<SentenceSeq> {
    let mut out = Vec::with_capacity(vocab.pow(len as u32));
    let mut seq = vec![0usize; len];
    loop {
        out.push(seq.clone());
        // Odometer increment, most significant digit first.
        let mut pos = len;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            seq[pos] += 1;
            if seq[pos] < vocab {
                break;
            }
            seq[pos] = 0;
        }
    }
}

/// Every sequence of every length `1..=budget.max_len`, with its exact
/// log-probability, ordered by length then lexicographically.
///
/// The log-probabilities are produced by the same [`SentenceLm::log_prob_seq`]
/// the rest of the crate uses, so oracle values and fast-path values agree
/// bit for bit by construction.
pub fn enumerate_all(
    model: &SentenceLm,
    budget: &EnumerationBudget,
) -> Result<Vec<(SentenceSeq, f64)>> {
    budget.admit_model(model)?;
    let v = model.vocab_size();
    let mut out = Vec::new();
    for len in 1..=budget.max_len {
        for seq in sequences_of_length(v, len) {
            let lp = model.log_prob_seq(&seq)?;
            out.push((seq, lp));
        }
    }
    Ok(out)
}

/// Exact expectation `Σ_s P(s)·f(s)` over all sequences of length exactly
/// `budget.max_len`. Zero-probability sequences are skipped, so an `f` that
/// diverges on impossible sequences (a log-ratio, say) cannot poison the sum.
pub fn exact_expectation_over_seqs<F>(
    model: &SentenceLm,
    f: F,
    budget: &EnumerationBudget,
) -> Result<f64>
where
    F: Fn(&[usize]) -> f64,
{
    budget.admit_model(model)?;
    let mut acc = 0.0;
    for seq in sequences_of_length(model.vocab_size(), budget.max_len) {
        let lp = model.log_prob_seq(&seq)?;
        if lp == f64::NEG_INFINITY {
            continue;
        }
        acc += lp.exp() * f(&seq);
    }
    Ok(acc)
}

/// Exact per-length mean conditional KL,
/// `E_{s∼p, |s|=n}[ D(p(·|s) ‖ q(·|s)) ]`, by enumerating every prefix of
/// length `n`. The ground truth for the β estimator. Returns `+∞` if any
/// positive-probability prefix has infinite conditional KL.
pub fn exact_mean_conditional_kl(
    p: &SentenceLm,
    q: &SentenceLm,
    n: usize,
    budget: &EnumerationBudget,
) -> Result<f64> {
    budget.admit_model(p)?;
    budget.admit_len(n)?;
    let mut acc = 0.0;
    for seq in sequences_of_length(p.vocab_size(), n) {
        let lp = p.log_prob_seq(&seq)?;
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let kl = conditional_kl_exact(p, q, &seq)?;
        if !kl.is_finite() {
            return Ok(f64::INFINITY);
        }
        acc += lp.exp() * kl.nats;
    }
    Ok(acc)
}

/// Exact mean and population variance of the conditional sequence log-ratio
/// `ln p(s|prefix) − ln q(s|prefix)` over continuations `s` of length `n`
/// drawn from `p(·|prefix)`. The ground truth for the σ estimator (whose
/// sample variance converges to the population value here). Both moments
/// are `+∞` if a positive-probability continuation is impossible under `q`.
pub fn exact_log_ratio_moments(
    p: &SentenceLm,
    q: &SentenceLm,
    prefix: &[usize],
    n: usize,
    budget: &EnumerationBudget,
) -> Result<(f64, f64)> {
    budget.admit_model(p)?;
    budget.admit_len(n)?;
    let lp_prefix_p = p.log_prob_seq(prefix)?;
    if lp_prefix_p == f64::NEG_INFINITY {
        return Err(p.next_dist(prefix).unwrap_err());
    }
    let lp_prefix_q = q.log_prob_seq(prefix)?;
    // (weight, log-ratio) per continuation.
    let mut support: Vec<(f64, f64)> = Vec::new();
    let mut any_infinite = false;
    for seq in sequences_of_length(p.vocab_size(), n) {
        let mut full = prefix.to_vec();
        full.extend_from_slice(&seq);
        let lp_p = p.log_prob_seq(&full)?;
        if lp_p == f64::NEG_INFINITY {
            continue;
        }
        let weight = (lp_p - lp_prefix_p).exp();
        let lp_q = q.log_prob_seq(&full)?;
        if lp_q == f64::NEG_INFINITY || lp_prefix_q == f64::NEG_INFINITY {
            any_infinite = true;
            continue;
        }
        let ratio = (lp_p - lp_prefix_p) - (lp_q - lp_prefix_q);
        support.push((weight, ratio));
    }
    if any_infinite {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let mean: f64 = support.iter().map(|(w, r)| w * r).sum();
    let var: f64 = support.iter().map(|(w, r)| w * (r - mean).powi(2)).sum();
    Ok((mean, var))
}
