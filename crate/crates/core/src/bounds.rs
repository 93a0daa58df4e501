//! Closed-form prompt-length bounds, decay curves, and curve fitting.
//!
//! Given the distinguishability profile of a mixture — prior weight α of the
//! ill-behaved component, per-sentence KL lower bound β, upper bound β′,
//! log-ratio variance rate σ², behavior ceiling γ — these functions evaluate:
//!
//! * [`theorem1_length`] — prompt length `(ln(1/α) + ln(1/ε) + ln 4)/β` that
//!   guarantees an ε-misaligning prompt exists.
//! * [`theorem2_length`] — the same guarantee after an arbitrary aligned
//!   prefix of length `|s₀|`, with probability 1−δ:
//!   `L₁ + (β′/β)|s₀| + (σ/β)√(|s₀|/δ) + 1`.
//! * [`theorem3_budgets`] — per-turn prompt caps for an n-turn conversation,
//!   `(β′/β)|aᵢ| + (σ/β)√(n|aᵢ|/δ) + (ln(1/ε)+ln(1/α)+ln 4)/(nβ) + 1`.
//! * [`generalized_length`] — the length beyond which *most* prompts drawn
//!   from the ill-behaved component misalign:
//!   `max{(2/β)(ln(1/α)+ln(1/ε)+ln 4), 4σ²/(β²δ)}`.
//! * [`kl_decay_bound`] / [`sigmoid_bound`] — the per-length envelopes
//!   `ln(1 + e^{ln(1/α)−βn})` and `1/(1 + e^{βn−ln(1/α)})`.
//! * [`lemma_bounds`] — exact evaluation of the posterior-convergence
//!   inequalities for one mixture and prefix.
//! * [`fit_alpha_beta`] — the inverse problem: least-squares recovery of
//!   `(α̂, β̂)` from a measured decay curve, default window chosen by
//!   [`default_fit_range`].
//! * [`power_law_accumulation`] — divergence accumulation `Σ β/k^η` when the
//!   per-step KL is allowed to decay as a power law.
//!
//! Lengths are returned real-valued and unrounded; execution-time code (the
//! attack planners) applies the ceiling, so tests can check formula values
//! exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logistic, SentenceLm};

/// Distinguishability and tolerance parameters feeding every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Prior weight of the ill-behaved component, strictly inside (0, 1).
    pub alpha: f64,
    /// Per-sentence KL lower bound (nats), > 0.
    pub beta: f64,
    /// Per-sentence KL upper bound with roles swapped (nats), ≥ 0.
    pub beta_prime: f64,
    /// Log-ratio standard-deviation rate (per √sentence), ≥ 0.
    pub sigma: f64,
    /// Behavior ceiling of the ill-behaved component, in [-1, 0).
    pub gamma: f64,
    /// Behavior slack ε of the misalignment target, > 0.
    pub epsilon: f64,
    /// Failure probability budget δ, strictly inside (0, 1).
    pub delta: f64,
    /// Power-law decay exponent for the relaxed accumulation model, in [0, 1).
    #[serde(default)]
    pub eta: f64,
}

impl BoundParams {
    /// Checks every range constraint; violations name the offending field.
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, f64, bool, &str); 8] = [
            (
                "alpha",
                self.alpha,
                self.alpha.is_finite() && self.alpha > 0.0 && self.alpha < 1.0,
                "must lie strictly inside (0, 1)",
            ),
            (
                "beta",
                self.beta,
                self.beta > 0.0 && !self.beta.is_nan(),
                "must be > 0",
            ),
            (
                "beta_prime",
                self.beta_prime,
                self.beta_prime >= 0.0 && !self.beta_prime.is_nan(),
                "must be >= 0",
            ),
            (
                "sigma",
                self.sigma,
                self.sigma.is_finite() && self.sigma >= 0.0,
                "must be finite and >= 0",
            ),
            (
                "gamma",
                self.gamma,
                self.gamma >= -1.0 && self.gamma < 0.0,
                "must lie in [-1, 0)",
            ),
            (
                "epsilon",
                self.epsilon,
                self.epsilon.is_finite() && self.epsilon > 0.0,
                "must be finite and > 0",
            ),
            (
                "delta",
                self.delta,
                self.delta > 0.0 && self.delta < 1.0,
                "must lie strictly inside (0, 1)",
            ),
            (
                "eta",
                self.eta,
                (0.0..1.0).contains(&self.eta),
                "must lie in [0, 1)",
            ),
        ];
        for (name, value, ok, constraint) in checks {
            if !ok {
                return Err(Error::InvalidParam {
                    name,
                    value,
                    constraint,
                });
            }
        }
        Ok(())
    }

    /// Non-fatal oddities worth surfacing: the formulas still evaluate, but
    /// the scenario they model assumes otherwise.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.beta_prime < self.beta {
            out.push(format!(
                "beta_prime ({}) is below beta ({}); the bounds assume the \
                 swapped-role divergence dominates",
                self.beta_prime, self.beta
            ));
        }
        out
    }

    /// `ln(1/α)`.
    pub fn log_inv_alpha(&self) -> f64 {
        (1.0 / self.alpha).ln()
    }

    /// `ln(1/ε)` (negative when ε > 1).
    pub fn log_inv_epsilon(&self) -> f64 {
        (1.0 / self.epsilon).ln()
    }
}

/// `ln 4`, the union-bound constant shared by all length formulas.
fn ln_4() -> f64 {
    4.0_f64.ln()
}

/// Numerically stable softplus `ln(1 + eˣ)`, exact at ±∞.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Prompt length guaranteeing an ε-misaligning prompt exists:
/// `(ln(1/α) + ln(1/ε) + ln 4)/β`. Real-valued; callers ceil.
pub fn theorem1_length(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    Ok((p.log_inv_alpha() + p.log_inv_epsilon() + ln_4()) / p.beta)
}

/// Prompt length that re-misaligns after an aligned prefix of `s0_len`
/// sentences, with probability 1−δ:
/// `L₁ + (β′/β)·|s₀| + (σ/β)·√(|s₀|/δ) + 1`.
pub fn theorem2_length(p: &BoundParams, s0_len: usize) -> Result<f64> {
    let l1 = theorem1_length(p)?;
    let s0 = s0_len as f64;
    Ok(l1 + (p.beta_prime / p.beta) * s0 + (p.sigma / p.beta) * (s0 / p.delta).sqrt() + 1.0)
}

/// Per-turn prompt budgets for a multi-turn conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnBudgets {
    /// Length cap for each turn's prompt (same order as the answer lengths).
    pub per_turn_caps: Vec<f64>,
    /// Total prompt budget across all turns; equals the sum of the caps,
    /// which distributes the one-shot budget `L₁` evenly over turns.
    pub total: f64,
}

/// Per-turn prompt caps sustaining misalignment across an n-turn
/// conversation with answer lengths `answer_lens`:
/// `capᵢ = (β′/β)|aᵢ| + (σ/β)√(n|aᵢ|/δ) + (ln(1/ε)+ln(1/α)+ln 4)/(nβ) + 1`.
pub fn theorem3_budgets(p: &BoundParams, answer_lens: &[usize]) -> Result<TurnBudgets> {
    p.validate()?;
    if answer_lens.is_empty() {
        return Err(Error::InvalidParam {
            name: "answer_lens",
            value: 0.0,
            constraint: "must contain at least one turn",
        });
    }
    let n = answer_lens.len() as f64;
    let shared = (p.log_inv_epsilon() + p.log_inv_alpha() + ln_4()) / (n * p.beta);
    let per_turn_caps: Vec<f64> = answer_lens
        .iter()
        .map(|&a| {
            let a = a as f64;
            (p.beta_prime / p.beta) * a
                + (p.sigma / p.beta) * (n * a / p.delta).sqrt()
                + shared
                + 1.0
        })
        .collect();
    let total = per_turn_caps.iter().sum();
    Ok(TurnBudgets {
        per_turn_caps,
        total,
    })
}

/// Length beyond which most prompts sampled from the ill-behaved component
/// are themselves misaligning:
/// `max{(2/β)(ln(1/α) + ln(1/ε) + ln 4), 4σ²/(β²δ)}`.
pub fn generalized_length(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    let first = (2.0 / p.beta) * (p.log_inv_alpha() + p.log_inv_epsilon() + ln_4());
    let second = 4.0 * p.sigma * p.sigma / (p.beta * p.beta * p.delta);
    Ok(first.max(second))
}

fn check_decay_args(alpha: f64, beta: f64, n: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidParam {
            name: "alpha",
            value: alpha,
            constraint: "must lie strictly inside (0, 1)",
        });
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidParam {
            name: "beta",
            value: beta,
            constraint: "must be > 0",
        });
    }
    if !n.is_finite() || n < 0.0 {
        return Err(Error::InvalidParam {
            name: "n",
            value: n,
            constraint: "must be finite and >= 0",
        });
    }
    Ok(())
}

/// Exponent `ln(1/α) − β·n`, guarding the `β = ∞, n = 0` corner (where the
/// naive product is NaN but the prompt-free value `ln(1/α)` is intended).
fn decay_exponent(alpha: f64, beta: f64, n: f64) -> f64 {
    let lia = (1.0 / alpha).ln();
    if n == 0.0 {
        lia
    } else {
        lia - beta * n
    }
}

/// Upper envelope of the KL divergence from the ill-behaved component after
/// an n-sentence prompt drawn from it: `ln(1 + e^{ln(1/α) − βn})`.
/// Strictly decreasing in `n`; `β = +∞` (certified disjoint supports) is
/// accepted and collapses the bound to 0 for any `n > 0`.
pub fn kl_decay_bound(alpha: f64, beta: f64, n: f64) -> Result<f64> {
    check_decay_args(alpha, beta, n)?;
    Ok(softplus(decay_exponent(alpha, beta, n)))
}

/// Upper envelope of the behavior expectation (for {0,1}-valued scores with
/// a perfectly-behaved ill-behaved component): the reverse sigmoid
/// `1/(1 + e^{βn − ln(1/α)})`, centered at `n = ln(1/α)/β`.
pub fn sigmoid_bound(alpha: f64, beta: f64, n: f64) -> Result<f64> {
    check_decay_args(alpha, beta, n)?;
    Ok(logistic(decay_exponent(alpha, beta, n)))
}

/// Exact right-hand sides of the posterior-convergence inequalities for one
/// mixture and prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaBounds {
    /// Bound on the relative deviation of the mixture conditional from the
    /// ill-behaved conditional, `max_s |P(s|s₀)/P⁻(s|s₀) − 1|`:
    /// `C · max{max_s P⁺(s|s₀)/P⁻(s|s₀), 1}` with
    /// `C = ((1−α)/α)·(P⁺(s₀)/P⁻(s₀))`.
    pub ratio_bound: f64,
    /// Bound on the behavior-expectation gap `|B_P(s₀) − B_{P⁻}(s₀)|`: `2C`.
    pub behavior_gap_bound: f64,
}

/// Evaluates both posterior-convergence bounds exactly for `model` (a
/// mixture) at `prefix`. The prefix must be supported under the ill-behaved
/// component; a prefix impossible under the well-behaved component gives
/// `C = 0` and both bounds collapse to 0 (the conditional has fully
/// converged).
pub fn lemma_bounds(model: &SentenceLm, prefix: &[usize]) -> Result<LemmaBounds> {
    let mx = model.as_mixture()?;
    let neg_row = mx.negative().next_dist(prefix)?;
    let lp_neg = mx.negative().log_prob_seq(prefix)?;
    let lp_pos = mx.positive().log_prob_seq(prefix)?;
    let alpha = mx.alpha();
    // C = ((1−α)/α)·exp(ln P⁺(s₀) − ln P⁻(s₀)); exp(−∞) = 0 handles the
    // positive-support-dead case exactly.
    let c = ((1.0 - alpha) / alpha) * (lp_pos - lp_neg).exp();
    if c == 0.0 {
        return Ok(LemmaBounds {
            ratio_bound: 0.0,
            behavior_gap_bound: 0.0,
        });
    }
    let pos_row = mx.positive().next_dist(prefix)?;
    let mut sup_ratio = 0.0_f64;
    for i in 0..neg_row.len() {
        // The deviation is defined on the ill-behaved support; symbols it
        // cannot produce are outside the quantifier.
        if neg_row.prob(i) > 0.0 {
            sup_ratio = sup_ratio.max(pos_row.prob(i) / neg_row.prob(i));
        }
    }
    Ok(LemmaBounds {
        ratio_bound: c * sup_ratio.max(1.0),
        behavior_gap_bound: 2.0 * c,
    })
}

/// One measured point of a decay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Prompt length.
    pub n: usize,
    /// Measured value (mean KL or behavior expectation) at that length.
    pub value: f64,
}

/// A fitted line `value = intercept − slope·n` over a length window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// Fitted value at `n = 0`; `ln(1/α̂)` under the decay model.
    pub intercept: f64,
    /// Fitted decay rate per sentence; `β̂` under the decay model.
    pub slope: f64,
    /// Inclusive length window `[lo, hi]` the fit used.
    pub fit_range: (usize, usize),
}

/// A measured decay curve with an optional fit attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    /// Measured points, lengths strictly increasing.
    pub points: Vec<CurvePoint>,
    /// Fit over a sub-window, when one has been computed.
    pub fit: Option<LineFit>,
}

impl CurveSeries {
    /// Builds a series, enforcing strictly increasing lengths.
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        for pair in points.windows(2) {
            if pair[1].n <= pair[0].n {
                return Err(Error::DegenerateFit {
                    detail: format!(
                        "curve lengths must be strictly increasing (saw {} then {})",
                        pair[0].n, pair[1].n
                    ),
                });
            }
        }
        Ok(Self { points, fit: None })
    }
}

/// Default fitting window: the longest *initial* segment of the curve whose
/// values stay at or above `ln 2` — the short-prompt regime where the decay
/// bound is near-linear. Returns the inclusive `(lo, hi)` length window, or
/// `None` when no point qualifies.
pub fn default_fit_range(curve: &CurveSeries) -> Option<(usize, usize)> {
    let ln2 = 2.0_f64.ln();
    let mut last = None;
    for pt in &curve.points {
        if pt.value >= ln2 {
            last = Some(pt.n);
        } else {
            break;
        }
    }
    last.map(|hi| (curve.points[0].n, hi))
}

/// Result of fitting the decay model to a measured curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Recovered prior weight `α̂ = e^{−intercept}`.
    pub alpha_hat: f64,
    /// Recovered divergence rate `β̂ = slope`.
    pub beta_hat: f64,
    /// The fitted line.
    pub fit: LineFit,
    /// Per-point residual `value − (intercept − slope·n)` inside the window,
    /// in curve order.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of `value = intercept − slope·n` over the points with
/// lengths inside the inclusive `fit_range` window, inverting the decay
/// model to `α̂ = e^{−intercept}`, `β̂ = slope`.
///
/// Fewer than two points in the window, or a window with no length spread,
/// is a [`Error::DegenerateFit`].
pub fn fit_alpha_beta(curve: &CurveSeries, fit_range: (usize, usize)) -> Result<FitResult> {
    let (lo, hi) = fit_range;
    let pts: Vec<&CurvePoint> = curve
        .points
        .iter()
        .filter(|pt| pt.n >= lo && pt.n <= hi)
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateFit {
            detail: format!(
                "fit window [{lo}, {hi}] covers {} point(s); need at least 2",
                pts.len()
            ),
        });
    }
    let t = pts.len() as f64;
    let x_mean = pts.iter().map(|pt| pt.n as f64).sum::<f64>() / t;
    let y_mean = pts.iter().map(|pt| pt.value).sum::<f64>() / t;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for pt in &pts {
        let dx = pt.n as f64 - x_mean;
        sxx += dx * dx;
        sxy += dx * (pt.value - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit {
            detail: "all lengths in the fit window are equal".to_string(),
        });
    }
    // Ordinary least squares for y = a + b·x, then flip to y = intercept − slope·n.
    let b = sxy / sxx;
    let intercept = y_mean - b * x_mean;
    let slope = -b;
    let residuals = pts
        .iter()
        .map(|pt| pt.value - (intercept - slope * pt.n as f64))
        .collect();
    Ok(FitResult {
        alpha_hat: (-intercept).exp(),
        beta_hat: slope,
        fit: LineFit {
            intercept,
            slope,
            fit_range,
        },
        residuals,
    })
}

/// Accumulated divergence over `n` sentences when the per-step rate decays
/// as a power law `β/k^η`: the exact partial sum `Σ_{k=1}^n β/k^η`. For
/// `η = 0` this is `β·n` exactly (no summation error).
pub fn power_law_accumulation(beta: f64, eta: f64, n: usize) -> Result<f64> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParam {
            name: "beta",
            value: beta,
            constraint: "must be finite and >= 0",
        });
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParam {
            name: "eta",
            value: eta,
            constraint: "must lie in [0, 1)",
        });
    }
    if eta == 0.0 {
        return Ok(beta * n as f64);
    }
    Ok((1..=n).map(|k| beta / (k as f64).powf(eta)).sum())
}
