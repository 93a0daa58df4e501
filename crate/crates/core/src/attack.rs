//! Constructive adversarial prompts, decay-curve measurement, and the
//! multi-turn conversation simulator.
//!
//! All attacks exploit one mechanism: every sentence `s` appended to the
//! context moves the mixture posterior by the log-likelihood ratio
//! `ln P⁻(s|ctx) − ln P⁺(s|ctx)`. Accumulate enough ratio and the mixture's
//! conditional collapses onto the ill-behaved component.
//!
//! * [`greedy_prompt`] — per-step argmax of the conditional log-ratio; the
//!   deterministic witness used by the existence arguments.
//! * [`sampled_prompt`] — ancestral sampling from the ill-behaved component;
//!   the experimental protocol.
//! * [`prefixed_attack`] — re-misalignment after an aligned prefix: one
//!   negatively scored trigger sentence, then greedy extension until the
//!   cumulative ratio clears the prefix's adverse ratio plus the behavior
//!   margin.
//! * [`converse`] — an n-turn conversation in which every attacker query
//!   respects the per-turn caps of [`theorem3_budgets`] while the model's
//!   answers are sampled from the full mixture conditional.
//! * [`misalignment_curve`] / [`kl_decay_curve`] — behavior expectation and
//!   conditional KL as functions of prompt length, the measured curves that
//!   the closed-form envelopes must dominate.
//!
//! Both prompt constructors accept an optional *proxy attacker*: any
//! [`SentenceLm`] standing in for the true ill-behaved component. Selection
//! and sampling then use the proxy, while the recorded trace always carries
//! the true component log-ratios, so the effect of an imperfect proxy is
//! measurable.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{behavior_expectation_exact, mean_stderr, BehaviorScore};
use crate::bounds::{theorem3_budgets, BoundParams, CurvePoint, CurveSeries};
use crate::divergence::{conditional_kl_exact, pick_trigger};
use crate::error::{Error, Result};
use crate::model::{Dist, MixtureLm, RngSpec, SentenceLm, SentenceSeq};

/// How an attack prompt is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    /// Deterministic per-step argmax of the conditional log-ratio.
    Greedy,
    /// Ancestral sampling from the attacker distribution.
    Sampled,
}

impl std::fmt::Display for AttackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Greedy => write!(f, "greedy"),
            Self::Sampled => write!(f, "sampled"),
        }
    }
}

/// An attack prompt together with its log-ratio ledger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTrace {
    /// The constructed prompt (attack sentences only, excluding any aligned
    /// prefix it was built after).
    pub prompt: SentenceSeq,
    /// True per-step log-ratio `ln P⁻(sₖ|ctx) − ln P⁺(sₖ|ctx)` at each step
    /// (`+∞` once the well-behaved component loses support, `−∞` if the
    /// ill-behaved one does — possible only under a proxy attacker).
    pub per_step_log_ratio: Vec<f64>,
    /// Sum of the per-step ratios; a `−∞` step dominates a `+∞` one (a
    /// prompt the ill-behaved component cannot produce proves nothing).
    pub cumulative_log_ratio: f64,
    /// Construction mode.
    pub mode: AttackMode,
    /// True when construction stopped early: no admissible symbol remained,
    /// or a target threshold was not reached within the length budget.
    pub truncated: bool,
}

/// Incremental context walker shared by all attack constructors: tracks the
/// conditional rows of both true components along the growing context and
/// records the true per-step log-ratios.
struct TraceBuilder<'a> {
    neg: &'a SentenceLm,
    pos: &'a SentenceLm,
    ctx: SentenceSeq,
    neg_alive: bool,
    pos_alive: bool,
    prompt: SentenceSeq,
    steps: Vec<f64>,
    finite_sum: f64,
    saw_pos_inf: bool,
    saw_neg_inf: bool,
}

impl<'a> TraceBuilder<'a> {
    /// Starts a trace after `prefix`. The prefix must be supported under the
    /// ill-behaved component; the well-behaved side may already be dead.
    fn new(mix: &'a MixtureLm, prefix: &[usize]) -> Result<Self> {
        // Errors with the offending position if the ill-behaved component
        // cannot produce the prefix.
        mix.negative().next_dist(prefix)?;
        let pos_alive = mix.positive().log_prob_seq(prefix)? > f64::NEG_INFINITY;
        Ok(Self {
            neg: mix.negative(),
            pos: mix.positive(),
            ctx: prefix.to_vec(),
            neg_alive: true,
            pos_alive,
            prompt: Vec::new(),
            steps: Vec::new(),
            finite_sum: 0.0,
            saw_pos_inf: false,
            saw_neg_inf: false,
        })
    }

    /// Current conditional rows of the true components (None once dead).
    fn rows(&self) -> Result<(Option<Dist>, Option<Dist>)> {
        let neg_row = if self.neg_alive {
            Some(self.neg.next_dist(&self.ctx)?)
        } else {
            None
        };
        let pos_row = if self.pos_alive {
            Some(self.pos.next_dist(&self.ctx)?)
        } else {
            None
        };
        Ok((neg_row, pos_row))
    }

    /// True per-step log-ratio of appending `sym` given the current rows.
    fn ratio_of(neg_row: &Option<Dist>, pos_row: &Option<Dist>, sym: usize) -> f64 {
        let lp_neg = neg_row
            .as_ref()
            .map_or(f64::NEG_INFINITY, |r| r.log_prob(sym));
        let lp_pos = pos_row
            .as_ref()
            .map_or(f64::NEG_INFINITY, |r| r.log_prob(sym));
        if lp_neg == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else if lp_pos == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            lp_neg - lp_pos
        }
    }

    /// Appends `sym`, recording its true log-ratio and updating support.
    fn push(&mut self, sym: usize, neg_row: &Option<Dist>, pos_row: &Option<Dist>) {
        let ratio = Self::ratio_of(neg_row, pos_row, sym);
        if ratio == f64::INFINITY {
            self.saw_pos_inf = true;
        } else if ratio == f64::NEG_INFINITY {
            self.saw_neg_inf = true;
        } else {
            self.finite_sum += ratio;
        }
        if neg_row.as_ref().is_none_or(|r| r.prob(sym) == 0.0) {
            self.neg_alive = false;
        }
        if pos_row.as_ref().is_none_or(|r| r.prob(sym) == 0.0) {
            self.pos_alive = false;
        }
        self.steps.push(ratio);
        self.ctx.push(sym);
        self.prompt.push(sym);
    }

    /// Cumulative log-ratio with the documented infinity precedence.
    fn cumulative(&self) -> f64 {
        if self.saw_neg_inf {
            f64::NEG_INFINITY
        } else if self.saw_pos_inf {
            f64::INFINITY
        } else {
            self.finite_sum
        }
    }

    fn finish(self, mode: AttackMode, truncated: bool) -> PromptTrace {
        PromptTrace {
            cumulative_log_ratio: self.cumulative(),
            prompt: self.prompt,
            per_step_log_ratio: self.steps,
            mode,
            truncated,
        }
    }
}

/// The attacker's view for one step: its own conditional row for
/// admissibility/sampling, plus the ranking ratio for greedy selection.
fn attacker_row(
    builder: &TraceBuilder<'_>,
    attacker: Option<&SentenceLm>,
    neg_row: &Option<Dist>,
) -> Result<Option<Dist>> {
    match attacker {
        None => Ok(neg_row.clone()),
        Some(a) => match a.next_dist(&builder.ctx) {
            Ok(row) => Ok(Some(row)),
            // A context the proxy cannot produce ends its usefulness.
            Err(Error::UnsupportedPrefix { .. }) => Ok(None),
            Err(other) => Err(other),
        },
    }
}

/// One greedy step: the admissible symbol (positive probability under the
/// attacker's row) maximizing the attacker-side log-ratio, ties broken to
/// the lowest index. Returns `None` when no symbol is admissible.
fn greedy_pick(att_row: &Dist, pos_row: &Option<Dist>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for sym in 0..att_row.len() {
        if att_row.prob(sym) == 0.0 {
            continue;
        }
        let lp_pos = pos_row
            .as_ref()
            .map_or(f64::NEG_INFINITY, |r| r.log_prob(sym));
        let ratio = if lp_pos == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            att_row.log_prob(sym) - lp_pos
        };
        if best.is_none_or(|(_, b)| ratio > b) {
            best = Some((sym, ratio));
        }
    }
    best.map(|(sym, _)| sym)
}

/// Constructs a prompt of `length` sentences by per-step argmax of the
/// conditional log-ratio `ln P⁻(s|ctx) − ln P⁺(s|ctx)`, the deterministic
/// witness whose cumulative ratio dominates the summed conditional KLs.
pub fn greedy_prompt(mix: &SentenceLm, length: usize) -> Result<PromptTrace> {
    greedy_prompt_with(mix, None, length)
}

/// [`greedy_prompt`] with an optional proxy attacker ranking the steps in
/// place of the true ill-behaved component.
pub fn greedy_prompt_with(
    mix: &SentenceLm,
    attacker: Option<&SentenceLm>,
    length: usize,
) -> Result<PromptTrace> {
    let mx = mix.as_mixture()?;
    let mut builder = TraceBuilder::new(mx, &[])?;
    for _ in 0..length {
        let (neg_row, pos_row) = builder.rows()?;
        let att_row = attacker_row(&builder, attacker, &neg_row)?;
        let Some(row) = att_row else {
            return Ok(builder.finish(AttackMode::Greedy, true));
        };
        let Some(sym) = greedy_pick(&row, &pos_row) else {
            return Ok(builder.finish(AttackMode::Greedy, true));
        };
        builder.push(sym, &neg_row, &pos_row);
    }
    Ok(builder.finish(AttackMode::Greedy, false))
}

/// Draws a prompt of `length` sentences ancestrally from the ill-behaved
/// component's exact conditionals, recording the true log-ratio trace.
pub fn sampled_prompt(
    mix: &SentenceLm,
    length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PromptTrace> {
    sampled_prompt_with(mix, None, length, rng)
}

/// [`sampled_prompt`] with an optional proxy attacker as the sampling
/// distribution.
pub fn sampled_prompt_with(
    mix: &SentenceLm,
    attacker: Option<&SentenceLm>,
    length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PromptTrace> {
    let mx = mix.as_mixture()?;
    let mut builder = TraceBuilder::new(mx, &[])?;
    for _ in 0..length {
        let (neg_row, pos_row) = builder.rows()?;
        let att_row = attacker_row(&builder, attacker, &neg_row)?;
        let Some(row) = att_row else {
            return Ok(builder.finish(AttackMode::Sampled, true));
        };
        let sym = row.sample(rng);
        builder.push(sym, &neg_row, &pos_row);
    }
    Ok(builder.finish(AttackMode::Sampled, false))
}

/// Re-misalignment after an aligned prefix: appends one negatively scored
/// trigger sentence (the most probable `b < 0` sentence under the
/// ill-behaved conditional), then extends greedily until the cumulative
/// log-ratio reaches
/// `β′·|s₀| + σ·√(|s₀|/δ) + ln(4/(α·ε))`,
/// the adverse-prefix allowance plus the margin that forces the behavior
/// expectation within ε of the ill-behaved component's.
///
/// The trace covers only the attack suffix; its first sentence has `b < 0`.
/// If the threshold is still unmet after `max_len` sentences the trace is
/// returned truncated (flagged) rather than unbounded.
#[allow(clippy::too_many_arguments)]
pub fn prefixed_attack(
    mix: &SentenceLm,
    aligned_prefix: &[usize],
    b: &BehaviorScore,
    target_epsilon: f64,
    delta: f64,
    beta_prime: f64,
    sigma: f64,
    max_len: usize,
) -> Result<PromptTrace> {
    let mx = mix.as_mixture()?;
    for (name, value, ok, constraint) in [
        (
            "target_epsilon",
            target_epsilon,
            target_epsilon > 0.0 && target_epsilon.is_finite(),
            "must be finite and > 0",
        ),
        (
            "delta",
            delta,
            delta > 0.0 && delta < 1.0,
            "must lie strictly inside (0, 1)",
        ),
        (
            "beta_prime",
            beta_prime,
            beta_prime >= 0.0 && !beta_prime.is_nan(),
            "must be >= 0",
        ),
        (
            "sigma",
            sigma,
            sigma >= 0.0 && sigma.is_finite(),
            "must be finite and >= 0",
        ),
        ("max_len", max_len as f64, max_len >= 1, "must be >= 1"),
    ] {
        if !ok {
            return Err(Error::InvalidParam {
                name,
                value,
                constraint,
            });
        }
    }
    // The aligned prefix must be producible by the well-behaved component
    // (it is "aligned text") and by the ill-behaved one (the attacker's
    // conditionals must exist after it).
    mx.positive().next_dist(aligned_prefix)?;
    let mut builder = TraceBuilder::new(mx, aligned_prefix)?;
    let s0 = aligned_prefix.len() as f64;
    let threshold =
        beta_prime * s0 + sigma * (s0 / delta).sqrt() + (4.0 / (mx.alpha() * target_epsilon)).ln();

    let trigger = pick_trigger(mx.negative(), aligned_prefix, b)?;
    let (neg_row, pos_row) = builder.rows()?;
    builder.push(trigger, &neg_row, &pos_row);

    while builder.cumulative() < threshold && builder.prompt.len() < max_len {
        let (neg_row, pos_row) = builder.rows()?;
        let Some(row) = neg_row.clone() else {
            return Ok(builder.finish(AttackMode::Greedy, true));
        };
        let Some(sym) = greedy_pick(&row, &pos_row) else {
            return Ok(builder.finish(AttackMode::Greedy, true));
        };
        builder.push(sym, &neg_row, &pos_row);
    }
    let truncated = builder.cumulative() < threshold;
    Ok(builder.finish(AttackMode::Greedy, truncated))
}

/// One conversation turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// Attacker query (greedy, within the turn's cap).
    pub query: SentenceSeq,
    /// Model answer sampled from the full mixture conditional (empty for the
    /// final turn — the conversation ends on the attacker's last query).
    pub answer: SentenceSeq,
}

/// A full simulated conversation with its budget accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConversationTranscript {
    /// Queries and answers in order.
    pub turns: Vec<Turn>,
    /// Per-turn query caps (real-valued; queries use the floor).
    pub per_turn_caps: Vec<f64>,
    /// Exact behavior expectation of the mixture after the final query.
    pub final_behavior: f64,
    /// Master seed that drove the answer sampling.
    pub rng_seed: u64,
}

/// Simulates an `n_turns` conversation: each attacker query is a greedy
/// log-ratio maximizer of at most `⌊capᵢ⌋` sentences (caps from
/// [`theorem3_budgets`] with constant answer length), and each model answer
/// is `answer_len` sentences sampled from the full mixture conditional
/// (stream `i` for turn `i`; the final turn's answer is empty).
///
/// A cap below one sentence cannot hold a query and is an error naming the
/// turn.
pub fn converse(
    mix: &SentenceLm,
    b: &BehaviorScore,
    n_turns: usize,
    answer_len: usize,
    params: &BoundParams,
    rng: &RngSpec,
) -> Result<ConversationTranscript> {
    let mx = mix.as_mixture()?;
    if n_turns == 0 {
        return Err(Error::InvalidParam {
            name: "n_turns",
            value: 0.0,
            constraint: "must be >= 1",
        });
    }
    let budgets = theorem3_budgets(params, &vec![answer_len; n_turns])?;
    let mut history: SentenceSeq = Vec::new();
    let mut turns = Vec::with_capacity(n_turns);
    for (i, &cap) in budgets.per_turn_caps.iter().enumerate() {
        let q_len = cap.floor();
        if q_len < 1.0 {
            return Err(Error::InfeasibleCap { turn: i, cap });
        }
        let q_len = q_len as usize;
        let mut builder = TraceBuilder::new(mx, &history)?;
        for _ in 0..q_len {
            let (neg_row, pos_row) = builder.rows()?;
            let Some(row) = neg_row.clone() else { break };
            let Some(sym) = greedy_pick(&row, &pos_row) else {
                break;
            };
            builder.push(sym, &neg_row, &pos_row);
        }
        let query = builder.prompt.clone();
        history.extend_from_slice(&query);
        let answer = if i + 1 < n_turns {
            let mut stream = rng.stream(i as u64);
            mix.sample_seq(&history, answer_len, &mut stream)?
        } else {
            Vec::new()
        };
        history.extend_from_slice(&answer);
        turns.push(Turn { query, answer });
    }
    let final_behavior = behavior_expectation_exact(mix, &history, b)?;
    Ok(ConversationTranscript {
        turns,
        per_turn_caps: budgets.per_turn_caps,
        final_behavior,
        rng_seed: rng.master_seed,
    })
}

/// One measured point of a decay curve: Monte Carlo mean and standard error
/// at a prompt length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredPoint {
    /// Prompt length.
    pub n: usize,
    /// Mean of the exact metric over attack prompts of that length.
    pub mean: f64,
    /// Standard error of the mean (0 in greedy mode — one prompt per length).
    pub stderr: f64,
}

/// A measured decay curve (lengths ascending by construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCurve {
    /// Points at lengths `0..=max_len`.
    pub points: Vec<MeasuredPoint>,
}

impl MeasuredCurve {
    /// Projects onto a fit-ready series (means only).
    pub fn series(&self) -> CurveSeries {
        CurveSeries {
            points: self
                .points
                .iter()
                .map(|p| CurvePoint {
                    n: p.n,
                    value: p.mean,
                })
                .collect(),
            fit: None,
        }
    }
}

fn check_curve_args(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParam {
            name: "trials",
            value: 0.0,
            constraint: "must be >= 1",
        });
    }
    Ok(())
}

/// Behavior expectation of the mixture after attack prompts of each length
/// `0..=max_len`. Greedy mode evaluates the single deterministic prompt per
/// length; sampled mode averages the exact expectation over `trials` prompts
/// drawn from the ill-behaved component (stream `n·trials + t` per cell).
pub fn misalignment_curve(
    mix: &SentenceLm,
    b: &BehaviorScore,
    max_len: usize,
    mode: AttackMode,
    trials: usize,
    rng: &RngSpec,
) -> Result<MeasuredCurve> {
    let mx = mix.as_mixture()?;
    check_curve_args(trials)?;
    let mut points = Vec::with_capacity(max_len + 1);
    for n in 0..=max_len {
        let (mean, stderr) = match mode {
            AttackMode::Greedy => {
                let trace = greedy_prompt(mix, n)?;
                (behavior_expectation_exact(mix, &trace.prompt, b)?, 0.0)
            }
            AttackMode::Sampled => {
                let mut values = Vec::with_capacity(trials);
                for t in 0..trials {
                    let mut stream = rng.stream((n * trials + t) as u64);
                    let prompt = mx.negative().sample_seq(&[], n, &mut stream)?;
                    values.push(behavior_expectation_exact(mix, &prompt, b)?);
                }
                mean_stderr(&values)
            }
        };
        points.push(MeasuredPoint { n, mean, stderr });
    }
    Ok(MeasuredCurve { points })
}

/// Conditional KL from the ill-behaved component to the full mixture after
/// prompts of each length `0..=max_len` drawn from the ill-behaved
/// component, averaged over `trials` per length (stream `n·trials + t`).
/// This is the measured curve the decay envelope `ln(1+e^{ln(1/α)−βn})`
/// must dominate.
pub fn kl_decay_curve(
    mix: &SentenceLm,
    max_len: usize,
    trials: usize,
    rng: &RngSpec,
) -> Result<MeasuredCurve> {
    let mx = mix.as_mixture()?;
    check_curve_args(trials)?;
    let mut points = Vec::with_capacity(max_len + 1);
    for n in 0..=max_len {
        let mut values = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut stream = rng.stream((n * trials + t) as u64);
            let prompt = mx.negative().sample_seq(&[], n, &mut stream)?;
            values.push(conditional_kl_exact(mx.negative(), mix, &prompt)?.nats);
        }
        let (mean, stderr) = mean_stderr(&values);
        points.push(MeasuredPoint { n, mean, stderr });
    }
    Ok(MeasuredCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{sigmoid_bound, theorem1_length};
    use crate::divergence::certify_beta_range;

    fn cat(probs: &[f64]) -> SentenceLm {
        SentenceLm::categorical(probs.to_vec()).unwrap()
    }

    fn desk_params(alpha: f64) -> BoundParams {
        BoundParams {
            alpha,
            beta: 1.0,
            beta_prime: 2.0,
            sigma: 1.0,
            gamma: -0.5,
            epsilon: 0.1,
            delta: 0.2,
            eta: 0.0,
        }
    }

    /// Identical components: every per-step ratio is 0.
    #[test]
    fn greedy_identical_components_zero_ratio() {
        let c = cat(&[0.4, 0.6]);
        let mix = SentenceLm::mixture(0.3, c.clone(), c).unwrap();
        let trace = greedy_prompt(&mix, 5).unwrap();
        assert_eq!(trace.prompt.len(), 5);
        assert_eq!(trace.cumulative_log_ratio, 0.0);
        assert!(!trace.truncated);
        for r in &trace.per_step_log_ratio {
            assert_eq!(*r, 0.0);
        }
    }

    /// Order-0 pair: the argmax symbol repeats and the cumulative ratio is
    /// exactly length × the single-step maximum (ln 5 for these rows).
    #[test]
    fn greedy_order0_repeats_argmax() {
        let mix = SentenceLm::mixture(0.2, cat(&[0.5, 0.5]), cat(&[0.9, 0.1])).unwrap();
        let trace = greedy_prompt(&mix, 4).unwrap();
        assert_eq!(trace.prompt, vec![1, 1, 1, 1]);
        let step = (0.5_f64 / 0.1).ln();
        assert!((trace.cumulative_log_ratio - 4.0 * step).abs() < 1e-12);
        // Invariant: cumulative = Σ per-step.
        let sum: f64 = trace.per_step_log_ratio.iter().sum();
        assert!((trace.cumulative_log_ratio - sum).abs() < 1e-9);
    }

    /// Ties break to the lowest vocabulary index.
    #[test]
    fn greedy_tie_breaks_low() {
        // Symbols 0 and 1 have identical ratios ln(0.45/0.3); symbol 2 is worse.
        let mix = SentenceLm::mixture(0.5, cat(&[0.45, 0.45, 0.1]), cat(&[0.3, 0.3, 0.4])).unwrap();
        let trace = greedy_prompt(&mix, 3).unwrap();
        assert_eq!(trace.prompt, vec![0, 0, 0]);
    }

    /// A symbol the well-behaved component cannot produce has ratio +∞ and
    /// is preferred. Once that component is dead, every admissible
    /// continuation ties at +∞ and the tie breaks to the lowest index.
    #[test]
    fn greedy_prefers_positive_dead_symbol() {
        let mix = SentenceLm::mixture(0.5, cat(&[0.4, 0.6]), cat(&[1.0, 0.0])).unwrap();
        let trace = greedy_prompt(&mix, 2).unwrap();
        assert_eq!(trace.prompt, vec![1, 0]);
        assert_eq!(trace.per_step_log_ratio[0], f64::INFINITY);
        assert_eq!(trace.per_step_log_ratio[1], f64::INFINITY);
        assert_eq!(trace.cumulative_log_ratio, f64::INFINITY);
    }

    /// Greedy dominance: every per-step greedy ratio is at least the exact
    /// conditional KL at the same context (argmax ≥ mean under P⁻).
    #[test]
    fn greedy_dominates_conditional_kl() {
        let neg = cat(&[0.5, 0.3, 0.2]);
        let pos = cat(&[0.2, 0.3, 0.5]);
        let mix = SentenceLm::mixture(0.25, neg.clone(), pos.clone()).unwrap();
        let trace = greedy_prompt(&mix, 6).unwrap();
        let mut ctx: SentenceSeq = Vec::new();
        for (k, &r) in trace.per_step_log_ratio.iter().enumerate() {
            let kl = conditional_kl_exact(&neg, &pos, &ctx).unwrap().nats;
            assert!(r >= kl - 1e-12, "step {k}: ratio {r} < KL {kl}");
            ctx.push(trace.prompt[k]);
        }
    }

    /// Sampling from identical components keeps the expected ratio at 0, and
    /// order-0 sampled cumulative means match n × exact KL within 3·stderr.
    #[test]
    fn sampled_cumulative_matches_expected_kl() {
        let neg = cat(&[0.5, 0.5]);
        let pos = cat(&[0.9, 0.1]);
        let mix = SentenceLm::mixture(0.2, neg.clone(), pos.clone()).unwrap();
        let kl = conditional_kl_exact(&neg, &pos, &[]).unwrap().nats;
        let spec = RngSpec::new(33);
        let n = 3;
        let mut cums = Vec::new();
        for t in 0..1000 {
            let mut stream = spec.stream(t);
            let trace = sampled_prompt(&mix, n, &mut stream).unwrap();
            assert_eq!(trace.mode, AttackMode::Sampled);
            cums.push(trace.cumulative_log_ratio);
        }
        let (mean, stderr) = mean_stderr(&cums);
        let expected = n as f64 * kl;
        assert!(
            (mean - expected).abs() <= 3.0 * stderr,
            "mean {mean} vs {expected} (stderr {stderr})"
        );
    }

    /// Proxy attacker: sampling follows the proxy, but the ledger records
    /// the true component ratios. A proxy equal to P⁻ is indistinguishable
    /// from the default.
    #[test]
    fn proxy_attacker_keeps_true_ledger() {
        let neg = cat(&[0.5, 0.5]);
        let pos = cat(&[0.9, 0.1]);
        let mix = SentenceLm::mixture(0.2, neg.clone(), pos).unwrap();
        let spec = RngSpec::new(7);
        let a = sampled_prompt(&mix, 16, &mut spec.stream(0)).unwrap();
        let b = sampled_prompt_with(&mix, Some(&neg), 16, &mut spec.stream(0)).unwrap();
        assert_eq!(a.prompt, b.prompt);
        assert_eq!(a.per_step_log_ratio, b.per_step_log_ratio);
        // A degenerate proxy produces prompts whose true ratio the ledger
        // still prices with the real components: symbol 0 has ratio ln(5/9).
        let proxy = cat(&[1.0, 0.0]);
        let c = sampled_prompt_with(&mix, Some(&proxy), 2, &mut spec.stream(1)).unwrap();
        assert_eq!(c.prompt, vec![0, 0]);
        let step = (0.5_f64 / 0.9).ln();
        assert!((c.cumulative_log_ratio - 2.0 * step).abs() < 1e-12);
    }

    /// Sufficiency: once the cumulative ratio clears ln(1/α)+ln(1/ε)+ln 4,
    /// the exact behavior expectation is within ε of the ill-behaved
    /// component's (checked exactly along a greedy trace).
    #[test]
    fn sufficiency_along_greedy_trace() {
        let neg = cat(&[0.6, 0.4]);
        let pos = cat(&[0.1, 0.9]);
        let alpha = 0.05;
        let mix = SentenceLm::mixture(alpha, neg.clone(), pos.clone()).unwrap();
        let b = BehaviorScore::new(vec![-1.0, 1.0]).unwrap();
        let trace = greedy_prompt(&mix, 12).unwrap();
        for eps in [0.5_f64, 0.2, 0.05] {
            let need = (1.0 / alpha).ln() + (1.0 / eps).ln() + 4.0_f64.ln();
            let mut cum = 0.0;
            for k in 0..trace.prompt.len() {
                cum += trace.per_step_log_ratio[k];
                if cum >= need {
                    let ctx = &trace.prompt[..=k];
                    let b_mix = behavior_expectation_exact(&mix, ctx, &b).unwrap();
                    let b_neg = behavior_expectation_exact(&neg, ctx, &b).unwrap();
                    assert!(
                        b_mix <= b_neg + eps + 1e-12,
                        "eps {eps}: {b_mix} vs {b_neg} at step {k}"
                    );
                }
            }
        }
    }

    /// Posterior weight is the logistic of (cumulative ratio − prior odds):
    /// recomputing it from the trace matches the model exactly, and it
    /// increases monotonically along a positive-ratio greedy trace.
    #[test]
    fn posterior_tracks_cumulative_ratio() {
        let mix = SentenceLm::mixture(0.1, cat(&[0.5, 0.5]), cat(&[0.9, 0.1])).unwrap();
        let trace = greedy_prompt(&mix, 8).unwrap();
        let log_odds = (0.9_f64 / 0.1).ln();
        let mut cum = 0.0;
        let mut prev_w = mix.posterior_weight(&[]).unwrap();
        for k in 0..trace.prompt.len() {
            cum += trace.per_step_log_ratio[k];
            let w = mix.posterior_weight(&trace.prompt[..=k]).unwrap();
            let predicted = 1.0 / (1.0 + (log_odds - cum).exp());
            assert!((w - predicted).abs() < 1e-9, "step {k}: {w} vs {predicted}");
            assert!(w > prev_w, "posterior must increase along positive ratios");
            prev_w = w;
        }
    }

    /// Empty aligned prefix: the attack is the trigger followed by greedy
    /// extension, stopping at the behavior-margin threshold.
    #[test]
    fn prefixed_attack_empty_prefix() {
        let neg = cat(&[0.7, 0.3]);
        let pos = cat(&[0.1, 0.9]);
        let alpha = 0.1;
        let mix = SentenceLm::mixture(alpha, neg.clone(), pos).unwrap();
        let b = BehaviorScore::new(vec![-1.0, 1.0]).unwrap();
        let eps = 0.2;
        let trace = prefixed_attack(&mix, &[], &b, eps, 0.1, 2.0, 1.0, 64).unwrap();
        assert!(
            b.is_negative(trace.prompt[0]),
            "first sentence is the trigger"
        );
        assert_eq!(trace.prompt[0], 0, "most probable negative sentence");
        assert!(!trace.truncated);
        let threshold = (4.0 / (alpha * eps)).ln();
        assert!(trace.cumulative_log_ratio >= threshold);
        // One sentence shorter would miss the threshold: stop is tight.
        let sum_but_last: f64 = trace.per_step_log_ratio[..trace.per_step_log_ratio.len() - 1]
            .iter()
            .sum();
        assert!(sum_but_last < threshold);
        // And the achieved behavior honors the margin.
        let b_mix = behavior_expectation_exact(&mix, &trace.prompt, &b).unwrap();
        let b_neg = behavior_expectation_exact(&neg, &trace.prompt, &b).unwrap();
        assert!(b_mix <= b_neg + eps + 1e-12);
    }

    /// A longer aligned prefix demands a longer attack (threshold grows).
    #[test]
    fn prefixed_attack_length_grows_with_prefix() {
        let neg = cat(&[0.7, 0.3]);
        let pos = cat(&[0.1, 0.9]);
        let mix = SentenceLm::mixture(0.1, neg, pos.clone()).unwrap();
        let b = BehaviorScore::new(vec![-1.0, 1.0]).unwrap();
        let mut lens = Vec::new();
        for s0_len in [0usize, 2, 4, 8] {
            // Aligned prefixes drawn deterministically from the well-behaved
            // component's most likely symbol.
            let prefix = vec![1usize; s0_len];
            let trace = prefixed_attack(&mix, &prefix, &b, 0.2, 0.1, 2.0, 1.0, 256).unwrap();
            assert!(!trace.truncated);
            lens.push(trace.prompt.len());
        }
        for pair in lens.windows(2) {
            assert!(pair[1] >= pair[0], "lengths {lens:?} not non-decreasing");
        }
        assert!(
            lens[3] > lens[0],
            "longest prefix must cost extra sentences"
        );
    }

    /// Attacks demand a trigger and a supported prefix.
    #[test]
    fn prefixed_attack_error_cases() {
        let mix = SentenceLm::mixture(0.1, cat(&[0.7, 0.3]), cat(&[0.1, 0.9])).unwrap();
        let all_positive = BehaviorScore::new(vec![0.5, 1.0]).unwrap();
        assert!(matches!(
            prefixed_attack(&mix, &[], &all_positive, 0.2, 0.1, 2.0, 1.0, 16).unwrap_err(),
            Error::NoTrigger
        ));
        let dead_pos = SentenceLm::mixture(0.1, cat(&[0.7, 0.3]), cat(&[0.0, 1.0])).unwrap();
        let b = BehaviorScore::new(vec![-1.0, 1.0]).unwrap();
        // Prefix [0] is impossible under the well-behaved component.
        assert!(matches!(
            prefixed_attack(&dead_pos, &[0], &b, 0.2, 0.1, 2.0, 1.0, 16).unwrap_err(),
            Error::UnsupportedPrefix { .. }
        ));
    }

    /// Degenerate conversation (one turn, zero-length answers) produces
    /// exactly the greedy prompt of the cap's floor.
    #[test]
    fn converse_degenerate_matches_greedy() {
        let alpha = 0.05;
        let mix = SentenceLm::mixture(alpha, cat(&[0.5, 0.5]), cat(&[0.9, 0.1])).unwrap();
        let b = BehaviorScore::new(vec![-1.0, 1.0]).unwrap();
        let params = desk_params(alpha);
        let transcript = converse(&mix, &b, 1, 0, &params, &RngSpec::new(9)).unwrap();
        assert_eq!(transcript.turns.len(), 1);
        assert!(transcript.turns[0].answer.is_empty());
        let cap = transcript.per_turn_caps[0];
        let q_len = cap.floor() as usize;
        assert_eq!(transcript.turns[0].query.len(), q_len);
        let trace = greedy_prompt(&mix, q_len).unwrap();
        assert_eq!(transcript.turns[0].query, trace.prompt);
        let expected = behavior_expectation_exact(&mix, &trace.prompt, &b).unwrap();
        assert!((transcript.final_behavior - expected).abs() < 1e-15);
        assert_eq!(transcript.rng_seed, 9);
    }

    /// Transcript queries respect the caps; answers have the requested
    /// length; the final answer is empty; reruns are identical.
    #[test]
    fn converse_respects_caps_and_determinism() {
        let mix = SentenceLm::mixture(0.05, cat(&[0.6, 0.4]), cat(&[0.2, 0.8])).unwrap();
        let b = BehaviorScore::new(vec![-0.8, 0.6]).unwrap();
        let params = desk_params(0.05);
        let t1 = converse(&mix, &b, 3, 2, &params, &RngSpec::new(21)).unwrap();
        assert_eq!(t1.turns.len(), 3);
        for (i, turn) in t1.turns.iter().enumerate() {
            assert!(turn.query.len() as f64 <= t1.per_turn_caps[i]);
            if i + 1 < 3 {
                assert_eq!(turn.answer.len(), 2);
            } else {
                assert!(turn.answer.is_empty());
            }
        }
        let t2 = converse(&mix, &b, 3, 2, &params, &RngSpec::new(21)).unwrap();
        assert_eq!(t1.turns, t2.turns);
        assert_eq!(t1.final_behavior, t2.final_behavior);
    }

    /// A cap below one sentence is rejected with the turn index.
    #[test]
    fn converse_infeasible_cap() {
        let mix = SentenceLm::mixture(0.5, cat(&[0.5, 0.5]), cat(&[0.5, 0.5])).unwrap();
        let b = BehaviorScore::new(vec![-1.0, 1.0]).unwrap();
        // Huge β with tiny everything else: cap = 0/… + L1/n + 1 < … — force
        // it with β′=0, σ=0, and β so large the shared term vanishes; the
        // cap is then 1.0 + tiny ≥ 1, so instead shrink via epsilon > 1
        // making ln(1/ε) negative enough to pull the cap below 1.
        let params = BoundParams {
            alpha: 0.5,
            beta: 1.0,
            beta_prime: 0.0,
            sigma: 0.0,
            gamma: -0.5,
            epsilon: 20.0,
            delta: 0.5,
            eta: 0.0,
        };
        let err = converse(&mix, &b, 1, 0, &params, &RngSpec::new(1)).unwrap_err();
        assert!(
            matches!(err, Error::InfeasibleCap { turn: 0, .. }),
            "got {err}"
        );
    }

    /// Mid-conversation model answers have expected per-sentence log-ratio
    /// at most the certified swapped-role maximum (the resistance property).
    #[test]
    fn converse_answers_respect_resistance() {
        let neg = cat(&[0.6, 0.3, 0.1]);
        let pos = cat(&[0.1, 0.3, 0.6]);
        let mix = SentenceLm::mixture(0.05, neg.clone(), pos.clone()).unwrap();
        let b = BehaviorScore::new(vec![-1.0, 0.1, 1.0]).unwrap();
        let params = desk_params(0.05);
        let transcript = converse(&mix, &b, 3, 2, &params, &RngSpec::new(5)).unwrap();
        let beta_prime_cert = certify_beta_range(&neg, &pos).unwrap().max;
        // Replay the conversation, checking the exact expected log-ratio of
        // the mixture conditional at every answer position.
        let mut history: SentenceSeq = Vec::new();
        for (i, turn) in transcript.turns.iter().enumerate() {
            history.extend_from_slice(&turn.query);
            for &sym in &turn.answer {
                let row = mix.next_dist(&history).unwrap();
                let neg_row = neg.next_dist(&history).unwrap();
                let pos_row = pos.next_dist(&history).unwrap();
                let mut expected_ratio = 0.0;
                for s in 0..row.len() {
                    if row.prob(s) > 0.0 {
                        expected_ratio += row.prob(s) * (neg_row.log_prob(s) - pos_row.log_prob(s));
                    }
                }
                assert!(
                    expected_ratio <= beta_prime_cert + 1e-12,
                    "turn {i}: {expected_ratio} > {beta_prime_cert}"
                );
                history.push(sym);
            }
        }
    }

    /// The n=0 curve point is the unprompted mixture expectation
    /// α·B⁻ + (1−α)·B⁺, and greedy curves on order-0 models are monotone
    /// non-increasing.
    #[test]
    fn misalignment_curve_shape() {
        let neg = cat(&[0.8, 0.2]);
        let pos = cat(&[0.05, 0.95]);
        let alpha = 0.1;
        let mix = SentenceLm::mixture(alpha, neg.clone(), pos.clone()).unwrap();
        let b = BehaviorScore::new(vec![-1.0, 1.0]).unwrap();
        let curve =
            misalignment_curve(&mix, &b, 8, AttackMode::Greedy, 1, &RngSpec::new(3)).unwrap();
        let b_neg = behavior_expectation_exact(&neg, &[], &b).unwrap();
        let b_pos = behavior_expectation_exact(&pos, &[], &b).unwrap();
        let expected0 = alpha * b_neg + (1.0 - alpha) * b_pos;
        assert!((curve.points[0].mean - expected0).abs() < 1e-12);
        for pair in curve.points.windows(2) {
            assert!(pair[1].mean <= pair[0].mean + 1e-12, "not monotone");
        }
        // Greedy curves carry zero stderr.
        for p in &curve.points {
            assert_eq!(p.stderr, 0.0);
        }
    }

    /// With {0,1} scores and a strictly negative component, every sampled
    /// curve point is dominated by the sigmoid envelope at the certified β.
    #[test]
    fn misalignment_curve_under_sigmoid_envelope() {
        // P⁻ concentrated on symbol 0 (score 0), P⁺ mostly on symbol 1
        // (score 1) with shared support.
        let neg = cat(&[1.0, 0.0]);
        let pos = cat(&[0.2, 0.8]);
        let alpha = 0.2;
        let mix = SentenceLm::mixture(alpha, neg.clone(), pos.clone()).unwrap();
        let b = BehaviorScore::new(vec![0.0, 1.0]).unwrap();
        let beta_cert = certify_beta_range(&neg, &pos).unwrap().min;
        let curve =
            misalignment_curve(&mix, &b, 6, AttackMode::Sampled, 64, &RngSpec::new(17)).unwrap();
        for p in &curve.points {
            let bound = sigmoid_bound(alpha, beta_cert, p.n as f64).unwrap();
            assert!(p.mean <= bound + 1e-12, "n={}: {} > {}", p.n, p.mean, bound);
        }
    }

    /// Disjoint supports: the n=0 KL point is exactly ln(1/α), and the curve
    /// dies to zero immediately (posterior locks on after one sentence).
    #[test]
    fn kl_curve_disjoint_starts_at_log_inv_alpha() {
        let mix = SentenceLm::mixture(0.25, cat(&[1.0, 0.0]), cat(&[0.0, 1.0])).unwrap();
        let curve = kl_decay_curve(&mix, 3, 4, &RngSpec::new(2)).unwrap();
        assert!(
            (curve.points[0].mean - 1.386_294_361_119_890_6).abs() < 1e-12,
            "got {}",
            curve.points[0].mean
        );
        for p in &curve.points[1..] {
            assert!(p.mean.abs() < 1e-12, "n={} mean {}", p.n, p.mean);
        }
    }

    /// The measured KL curve decays to zero for long prompts and reruns
    /// bit-identically with the same seed.
    #[test]
    fn kl_curve_decays_and_is_deterministic() {
        let mix = SentenceLm::mixture(0.1, cat(&[0.7, 0.3]), cat(&[0.2, 0.8])).unwrap();
        let a = kl_decay_curve(&mix, 48, 16, &RngSpec::new(4)).unwrap();
        let b = kl_decay_curve(&mix, 48, 16, &RngSpec::new(4)).unwrap();
        assert_eq!(a, b);
        let last = a.points.last().unwrap();
        assert!(
            last.mean < 1e-4,
            "KL should have decayed, got {}",
            last.mean
        );
        let first = &a.points[0];
        assert!(first.mean > 0.01, "prompt-free KL should be visible");
    }

    /// Theorem-1 sufficiency end to end: at n = ⌈theorem1_length⌉ the greedy
    /// cumulative ratio clears ln(1/α) + ln(1/ε) + ln 4.
    #[test]
    fn greedy_reaches_theorem1_threshold() {
        let neg = cat(&[0.5, 0.5]);
        let pos = cat(&[0.9, 0.1]);
        let alpha = 1e-3;
        let mix = SentenceLm::mixture(alpha, neg.clone(), pos.clone()).unwrap();
        // Certified per-step floor: the greedy step ratio is ln 5; use the
        // exact KL as β (greedy dominates it).
        let beta = conditional_kl_exact(&neg, &pos, &[]).unwrap().nats;
        let eps = 0.05;
        let params = BoundParams {
            alpha,
            beta,
            beta_prime: 2.0,
            sigma: 0.0,
            gamma: -1.0,
            epsilon: eps,
            delta: 0.5,
            eta: 0.0,
        };
        let n = theorem1_length(&params).unwrap().ceil() as usize;
        let trace = greedy_prompt(&mix, n).unwrap();
        let need = (1.0 / alpha).ln() + (1.0 / eps).ln() + 4.0_f64.ln();
        assert!(
            trace.cumulative_log_ratio >= need,
            "{} < {need} at n={n}",
            trace.cumulative_log_ratio
        );
    }
}
