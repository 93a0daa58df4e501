//! Distinguishability and similarity measurements between sentence models.
//!
//! Everything here quantifies how far apart two models' conditionals are:
//!
//! * [`conditional_kl_exact`] — the exact per-state KL divergence
//!   `D(p(·|s) ‖ q(·|s))`, with support violations reported as `+∞` plus a
//!   flagged symbol rather than an exception (disjoint-support constructions
//!   are legitimate models here).
//! * [`estimate_beta`] / [`estimate_beta_prompt`] — Monte Carlo means of the
//!   conditional KL over prefixes drawn from `p`, per prefix length; the
//!   reported point estimate is the *minimum* per-length mean (the
//!   conservative lower-bound witness).
//! * [`estimate_sigma`] — per-length sample variance of the sequence
//!   log-likelihood ratio `ln(P_p(s|prefix)/P_q(s|prefix))` under draws from
//!   `p`, with the implied rate `σ̂² = max_n variance(n)/n`.
//! * [`certify_beta_range`] — exact min/max of the conditional KL over every
//!   jointly reachable conditioning state of two finite-state models: the min
//!   certifies a per-step lower bound β, the max (with roles swapped) an
//!   upper bound β′.
//! * [`check_positivity`] / [`check_abg`] — the structural model-pair
//!   properties used by the attack guarantees.

use std::collections::{BTreeSet, VecDeque};

use crate::behavior::{certify_gamma_negative, mean_stderr, BehaviorScore, GammaCertificate};
use crate::error::{Error, Result};
use crate::model::{RngSpec, SentenceLm, SentenceSeq, STATE_SPACE_CAP};

/// An exact conditional KL value; infinite values carry the first symbol
/// that witnesses the support violation (`p(s) > 0`, `q(s) = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlValue {
    /// KL divergence in nats; `+∞` on support violation.
    pub nats: f64,
    /// First symbol with `p > 0` but `q = 0` (or the prefix symbol that kills
    /// `q`'s support), present iff `nats` is infinite.
    pub flagged_symbol: Option<usize>,
}

impl KlValue {
    fn finite(nats: f64) -> Self {
        Self {
            nats,
            flagged_symbol: None,
        }
    }

    fn infinite(symbol: usize) -> Self {
        Self {
            nats: f64::INFINITY,
            flagged_symbol: Some(symbol),
        }
    }

    /// True when no support violation occurred.
    pub fn is_finite(&self) -> bool {
        self.nats.is_finite()
    }
}

/// Exact KL divergence `Σ_s p(s|prefix)·ln(p(s|prefix)/q(s|prefix))` between
/// the conditional next-sentence distributions, with `0·ln(0/·) = 0`.
///
/// The prefix must be supported under `p` (it is always drawn from `p` in
/// every caller). A prefix or symbol unsupported under `q` yields `+∞` with
/// the offending symbol flagged.
pub fn conditional_kl_exact(p: &SentenceLm, q: &SentenceLm, prefix: &[usize]) -> Result<KlValue> {
    let p_row = p.next_dist(prefix)?;
    let q_row = match q.next_dist(prefix) {
        Ok(row) => row,
        Err(Error::UnsupportedPrefix { symbol, .. }) => return Ok(KlValue::infinite(symbol)),
        Err(other) => return Err(other),
    };
    Ok(kl_between_rows(&p_row, &q_row))
}

/// KL between two explicit rows (shared by the certification walk).
fn kl_between_rows(p_row: &crate::model::Dist, q_row: &crate::model::Dist) -> KlValue {
    let mut acc = 0.0;
    for i in 0..p_row.len() {
        let p = p_row.prob(i);
        if p == 0.0 {
            continue;
        }
        if q_row.prob(i) == 0.0 {
            return KlValue::infinite(i);
        }
        acc += p * (p_row.log_prob(i) - q_row.log_prob(i));
    }
    // Clamp the tiny negative values float cancellation can produce for
    // near-identical rows; KL is non-negative by definition.
    KlValue::finite(acc.max(0.0))
}

/// Why an estimate is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateFlag {
    /// A sampled prefix had infinite conditional KL (`q` support violation);
    /// distinguishability holds vacuously at any finite level.
    InfiniteKl,
    /// A sampled sequence had infinite log-likelihood ratio (`q` assigns it
    /// zero probability).
    InfiniteLogRatio,
}

impl std::fmt::Display for EstimateFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::InfiniteKl => write!(f, "not-beta-distinguishable-finite"),
            Self::InfiniteLogRatio => write!(f, "log-ratio-infinite"),
        }
    }
}

/// One per-length statistic of an estimator run.
#[derive(Debug, Clone, Copy)]
pub struct LengthStat {
    /// Prefix (or sequence) length.
    pub n: usize,
    /// Per-length statistic: mean conditional KL for the β estimators, the
    /// log-ratio sample variance for the σ estimator.
    pub mean: f64,
    /// Standard error of `mean`.
    pub stderr: f64,
}

/// Result of a Monte Carlo estimator, with its per-length breakdown.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// The headline estimate (min per-length mean for β, max variance(n)/n
    /// for σ²).
    pub point_estimate: f64,
    /// Standard error attached to the headline estimate.
    pub standard_error: f64,
    /// Trials per length.
    pub trials: usize,
    /// Per-length breakdown, lengths strictly increasing.
    pub per_length: Vec<LengthStat>,
    /// Set when any sampled value was infinite.
    pub flag: Option<EstimateFlag>,
}

fn require_trials(trials: usize) -> Result<()> {
    if trials < 2 {
        return Err(Error::InvalidParam {
            name: "trials",
            value: trials as f64,
            constraint: "must be >= 2",
        });
    }
    Ok(())
}

/// Monte Carlo β estimate: for each prefix length `n` in `0..=max_len`, the
/// mean over `trials` of `conditional_kl_exact(p, q, s)` with `s ∼ p` of
/// length `n`. Point estimate = minimum per-length mean; the per-trial RNG
/// stream index is `n·trials + t`, independent of scheduling.
pub fn estimate_beta(
    p: &SentenceLm,
    q: &SentenceLm,
    max_len: usize,
    trials: usize,
    rng: &RngSpec,
) -> Result<EstimateReport> {
    estimate_beta_impl(p, q, None, max_len, trials, rng)
}

/// Trigger-prefixed β estimate: like [`estimate_beta`] but every prefix is
/// `(neutral sentences) ⊕ (one negatively scored sentence) ⊕ (n sentences
/// from p)`, so the conditional KL is measured after an ill-behaved trigger.
///
/// Neutral prefixes of length `neutral_len` are sampled from `neutral` (any
/// model — the full mixture is the natural choice) and must be supported
/// under `p` and scored by `b`; the trigger is the most probable sentence
/// with `b < 0` under `p`'s conditional at the neutral prefix (ties break to
/// the lowest index). No such sentence → [`Error::NoTrigger`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_beta_prompt(
    p: &SentenceLm,
    q: &SentenceLm,
    neutral: &SentenceLm,
    neutral_len: usize,
    b: &BehaviorScore,
    max_len: usize,
    trials: usize,
    rng: &RngSpec,
) -> Result<EstimateReport> {
    estimate_beta_impl(p, q, Some((neutral, neutral_len, b)), max_len, trials, rng)
}

fn estimate_beta_impl(
    p: &SentenceLm,
    q: &SentenceLm,
    trigger: Option<(&SentenceLm, usize, &BehaviorScore)>,
    max_len: usize,
    trials: usize,
    rng: &RngSpec,
) -> Result<EstimateReport> {
    require_trials(trials)?;
    let mut per_length = Vec::with_capacity(max_len + 1);
    let mut flag = None;
    for n in 0..=max_len {
        let mut kls = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut stream = rng.stream((n * trials + t) as u64);
            let mut prefix: SentenceSeq = match trigger {
                None => Vec::new(),
                Some((neutral, neutral_len, b)) => {
                    let mut s0 = neutral.sample_seq(&[], neutral_len, &mut stream)?;
                    s0.push(pick_trigger(p, &s0, b)?);
                    s0
                }
            };
            prefix.extend(p.sample_seq(&prefix, n, &mut stream)?);
            let kl = conditional_kl_exact(p, q, &prefix)?;
            if !kl.is_finite() {
                flag = Some(EstimateFlag::InfiniteKl);
            }
            kls.push(kl.nats);
        }
        let (mean, stderr) = mean_stderr(&kls);
        per_length.push(LengthStat { n, mean, stderr });
    }
    let best = per_length
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.mean.total_cmp(&b.mean))
        .map(|(i, _)| i)
        .expect("at least one length");
    Ok(EstimateReport {
        point_estimate: per_length[best].mean,
        standard_error: per_length[best].stderr,
        trials,
        per_length,
        flag,
    })
}

/// Most probable negatively scored sentence under `p`'s conditional at
/// `prefix` (deterministic; ties break to the lowest index).
pub(crate) fn pick_trigger(p: &SentenceLm, prefix: &[usize], b: &BehaviorScore) -> Result<usize> {
    let row = p.next_dist(prefix)?;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..row.len() {
        let admissible = b.is_negative(i) && row.prob(i) > 0.0;
        if admissible && best.is_none_or(|(_, bp)| row.prob(i) > bp) {
            best = Some((i, row.prob(i)));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoTrigger)
}

/// Unbiased sample variance and its standard error.
///
/// The stderr uses the asymptotic moment formula
/// `SE(s²) = √((m₄ − s⁴·(T−3)/(T−1)) / T)` with `m₄` the central fourth
/// moment, falling back to the normal-theory `s²·√(2/(T−1))` if the inner
/// term is non-positive (possible for tiny samples).
fn variance_stats(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    if !mean.is_finite() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / t;
    let inner = (m4 - s2 * s2 * (t - 3.0) / (t - 1.0)) / t;
    let se = if inner > 0.0 {
        inner.sqrt()
    } else {
        s2 * (2.0 / (t - 1.0)).sqrt()
    };
    (s2, se)
}

/// Monte Carlo σ² estimate: for each `n` in `1..=max_len`, the sample
/// variance over `trials` draws `s ∼ p(·|prefix)` of the conditional
/// sequence log-ratio `ln(P_p(s|prefix)) − ln(P_q(s|prefix))`. The headline
/// estimate is `σ̂² = max_n variance(n)/n` (the rate that upper-bounds every
/// per-length variance), with the matching scaled stderr.
pub fn estimate_sigma(
    p: &SentenceLm,
    q: &SentenceLm,
    prefix: &[usize],
    max_len: usize,
    trials: usize,
    rng: &RngSpec,
) -> Result<EstimateReport> {
    require_trials(trials)?;
    if max_len == 0 {
        return Err(Error::InvalidParam {
            name: "max_len",
            value: 0.0,
            constraint: "must be >= 1",
        });
    }
    let lp_prefix_p = p.log_prob_seq(prefix)?;
    let lp_prefix_q = q.log_prob_seq(prefix)?;
    if lp_prefix_p == f64::NEG_INFINITY {
        // The sampling side must be able to produce the prefix.
        let err = p.next_dist(prefix).unwrap_err();
        return Err(err);
    }
    let mut per_length = Vec::with_capacity(max_len);
    let mut flag = None;
    for n in 1..=max_len {
        let mut ratios = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut stream = rng.stream(((n - 1) * trials + t) as u64);
            let s = p.sample_seq(prefix, n, &mut stream)?;
            let mut full = prefix.to_vec();
            full.extend_from_slice(&s);
            let lr_p = p.log_prob_seq(&full)? - lp_prefix_p;
            let lp_full_q = q.log_prob_seq(&full)?;
            let ratio = if lp_full_q == f64::NEG_INFINITY || lp_prefix_q == f64::NEG_INFINITY {
                flag = Some(EstimateFlag::InfiniteLogRatio);
                f64::INFINITY
            } else {
                lr_p - (lp_full_q - lp_prefix_q)
            };
            ratios.push(ratio);
        }
        let (variance, stderr) = variance_stats(&ratios);
        per_length.push(LengthStat {
            n,
            mean: variance,
            stderr,
        });
    }
    let best = per_length
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| (a.mean / a.n as f64).total_cmp(&(b.mean / b.n as f64)))
        .map(|(i, _)| i)
        .expect("at least one length");
    let n_best = per_length[best].n as f64;
    Ok(EstimateReport {
        point_estimate: per_length[best].mean / n_best,
        standard_error: per_length[best].stderr / n_best,
        trials,
        per_length,
        flag,
    })
}

/// How edges are admitted during a joint state walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeRule {
    /// Follow symbols with positive probability under `p` (the sampling
    /// side); `q` may lose support, after which its conditional is undefined.
    SampledFromP,
    /// Follow only symbols positive under both models (prefixes on which both
    /// conditionals exist).
    BothSupported,
}

/// One jointly reachable conditioning state of a model pair.
struct JointState {
    /// Representative prefix reaching the state.
    prefix: SentenceSeq,
    /// `p`'s conditional at the state.
    p_row: crate::model::Dist,
    /// `q`'s conditional, `None` once `q` has lost support along the path.
    q_row: Option<crate::model::Dist>,
}

/// Walks all jointly reachable `(p state, q state)` pairs of two finite-state
/// models. Deterministic order (breadth-first, symbols ascending).
fn joint_states(p: &SentenceLm, q: &SentenceLm, rule: EdgeRule) -> Result<Vec<JointState>> {
    if !p.is_finite_state() || !q.is_finite_state() {
        return Err(Error::NotAComponent);
    }
    let mut out = Vec::new();
    let mut seen: BTreeSet<(SentenceSeq, Option<SentenceSeq>)> = BTreeSet::new();
    let mut queue: VecDeque<SentenceSeq> = VecDeque::new();
    let start_key = (p.state_key(&[])?, Some(q.state_key(&[])?));
    seen.insert(start_key);
    queue.push_back(Vec::new());
    while let Some(prefix) = queue.pop_front() {
        if out.len() >= STATE_SPACE_CAP {
            return Err(Error::StateSpaceExceeded {
                cap: STATE_SPACE_CAP,
            });
        }
        let p_row = p.next_dist(&prefix)?;
        let q_row = q.next_dist(&prefix).ok();
        for sym in 0..p_row.len() {
            let p_ok = p_row.prob(sym) > 0.0;
            let q_ok = q_row.as_ref().is_some_and(|r| r.prob(sym) > 0.0);
            let follow = match rule {
                EdgeRule::SampledFromP => p_ok,
                EdgeRule::BothSupported => p_ok && q_ok,
            };
            if !follow {
                continue;
            }
            let mut next_prefix = prefix.clone();
            next_prefix.push(sym);
            let p_key = p.state_key(&next_prefix)?;
            let q_key = if q_ok && q_row.is_some() {
                Some(q.state_key(&next_prefix)?)
            } else {
                None
            };
            if seen.insert((p_key, q_key)) {
                queue.push_back(next_prefix);
            }
        }
        out.push(JointState {
            prefix,
            p_row,
            q_row,
        });
    }
    Ok(out)
}

/// Exact per-state KL extremes over all jointly reachable states.
#[derive(Debug, Clone)]
pub struct BetaRange {
    /// Minimum conditional KL over reachable states — a certified lower bound
    /// on `E_{s∼p}[D(p(·|s) ‖ q(·|s))]` for every prefix length.
    pub min: f64,
    /// Maximum conditional KL — a certified upper bound on the same mean
    /// (infinite when `q` loses support somewhere).
    pub max: f64,
    /// Representative prefix attaining the minimum.
    pub min_state: SentenceSeq,
    /// Representative prefix attaining the maximum.
    pub max_state: SentenceSeq,
    /// True when some reachable state has infinite KL.
    pub any_infinite: bool,
}

/// Certifies the exact range of the conditional KL `D(p(·|s) ‖ q(·|s))` over
/// every conditioning state reachable with positive `p`-probability.
///
/// Because every per-length mean `E_{s∼p,|s|=n}[KL]` is a convex combination
/// of per-state values, `min` is a certified β (lower bound for all n) and
/// `max` a certified β′-style upper bound. Finite-state models only.
pub fn certify_beta_range(p: &SentenceLm, q: &SentenceLm) -> Result<BetaRange> {
    let states = joint_states(p, q, EdgeRule::SampledFromP)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut min_state = Vec::new();
    let mut max_state = Vec::new();
    let mut any_infinite = false;
    for st in &states {
        let kl = match &st.q_row {
            Some(q_row) => kl_between_rows(&st.p_row, q_row),
            None => KlValue::infinite(0),
        };
        if !kl.is_finite() {
            any_infinite = true;
        }
        if kl.nats < min {
            min = kl.nats;
            min_state = st.prefix.clone();
        }
        if kl.nats > max {
            max = kl.nats;
            max_state = st.prefix.clone();
        }
    }
    Ok(BetaRange {
        min,
        max,
        min_state,
        max_state,
        any_infinite,
    })
}

/// Result of the strict-dominance check on negatively scored sentences.
#[derive(Debug, Clone)]
pub struct PositivityCertificate {
    /// True when `pos(s|s0) < neg(s|s0)` strictly for every reachable state
    /// `s0` and every sentence `s` with `b(s) < 0`.
    pub holds: bool,
    /// `(prefix, symbol)` violating strict dominance, when `holds` is false.
    pub witness: Option<(SentenceSeq, usize)>,
}

/// Checks that the well-behaved model assigns strictly less probability than
/// the ill-behaved model to every negatively scored sentence, at every
/// conditioning state reachable under both models.
pub fn check_positivity(
    pos: &SentenceLm,
    neg: &SentenceLm,
    b: &BehaviorScore,
) -> Result<PositivityCertificate> {
    if pos.vocab_size() != b.len() || neg.vocab_size() != b.len() {
        return Err(Error::BehaviorTable {
            detail: "score table and model vocabularies disagree".to_string(),
        });
    }
    let states = joint_states(neg, pos, EdgeRule::BothSupported)?;
    for st in &states {
        let pos_row = st
            .q_row
            .as_ref()
            .expect("both-supported walk keeps q alive");
        for sym in 0..st.p_row.len() {
            if b.is_negative(sym) && pos_row.prob(sym) >= st.p_row.prob(sym) {
                return Ok(PositivityCertificate {
                    holds: false,
                    witness: Some((st.prefix.clone(), sym)),
                });
            }
        }
    }
    Ok(PositivityCertificate {
        holds: true,
        witness: None,
    })
}

/// Bundle certifying a mixture's negative-distinguishability profile: prior
/// α echoed, β estimated (Monte Carlo) and certified (exact state extremes),
/// plus the γ-negativity certificate of the ill-behaved component.
#[derive(Debug, Clone)]
pub struct AbgReport {
    /// Mixture prior of the ill-behaved component.
    pub alpha: f64,
    /// Monte Carlo β estimate, `estimate_beta(P⁻, P⁺, …)`.
    pub beta: EstimateReport,
    /// Exact per-state KL extremes of (P⁻ ‖ P⁺).
    pub beta_certified: BetaRange,
    /// γ-negativity certificate for P⁻.
    pub gamma: GammaCertificate,
}

/// Certifies the α/β/γ profile of a mixture of finite-state components.
pub fn check_abg(
    model: &SentenceLm,
    b: &BehaviorScore,
    gamma: f64,
    max_len: usize,
    trials: usize,
    rng: &RngSpec,
) -> Result<AbgReport> {
    let mx = model.as_mixture()?;
    Ok(AbgReport {
        alpha: mx.alpha(),
        beta: estimate_beta(mx.negative(), mx.positive(), max_len, trials, rng)?,
        beta_certified: certify_beta_range(mx.negative(), mx.positive())?,
        gamma: certify_gamma_negative(mx.negative(), b, gamma)?,
    })
}

/// Convenience: state keys of a Markov transition table in display form (for
/// error reporting and the CLI `validate` summary).
pub fn describe_states(model: &SentenceLm) -> Result<Vec<String>> {
    Ok(model
        .reachable_states()?
        .iter()
        .map(|s| crate::model::state_key_string(&s.prefix))
        .collect())
}
