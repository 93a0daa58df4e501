//! Synthetic model generators.
//!
//! Everything downstream (estimator checks, attack sufficiency runs, curve
//! scenarios) wants mixtures with *known* ground truth: a certified
//! behavior ceiling γ on the negative component and a certified
//! distinguishability β between the components. The generators here build
//! such mixtures by construction.
//!
//! The two-group construction: indices `0..k` are negatively scored, the
//! rest positively. With shapes `u` (over the negative group) and `w`
//! (over the positive group),
//!
//! ```text
//!   P⁻ = (1−a)·u ⊕ a·w          P⁺ = b·u ⊕ (1−b)·w
//! ```
//!
//! shares the within-group shapes, so the per-symbol log-ratio depends only
//! on the group: ln((1−a)/b) on negatives, ln(a/(1−b)) on positives. The
//! single-state KL is then exactly
//!
//!   D(P⁻ ‖ P⁺) = (1−a)·ln((1−a)/b) + a·ln(a/(1−b)),
//!
//! strictly decreasing in `b` on (0, 1−a], so a bisection on ln b hits any
//! target β > 0; `b = 0` gives disjoint supports (β = ∞). The mass `a` that
//! P⁻ leaks onto positive symbols is chosen so the negative component's
//! behavior expectation stays ≤ γ − margin/2 with margin = 0.25·(1+γ).
//!
//! All random rows are dyadic (integer counts over 2³⁰), so they sum to
//! exactly 1.0 in f64 and expectations against constant scores are exact —
//! in particular, a γ = −1 ceiling certifies without tolerance games.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::behavior::BehaviorScore;
use crate::divergence::{check_abg, AbgReport};
use crate::error::{Error, Result};
use crate::io::ModelSpec;
use crate::model::{RngSpec, SentenceLm, Vocabulary};

/// Rejection-sampling attempts before the generator gives up.
pub const MAX_SYNTH_ATTEMPTS: usize = 10_000;

/// Certified β must land within this relative distance of the target.
pub const BETA_TARGET_RTOL: f64 = 0.25;

/// Stream index offset reserved for generator draws, keeping them disjoint
/// from the low stream indices the validation estimators use.
const SYNTH_STREAM_BASE: u64 = 1 << 32;

/// Resolution of random rows: probabilities are multiples of 2⁻³⁰.
const ROW_UNITS: u64 = 1 << 30;

/// Per-entry probability floor of random rows (2⁻¹⁰ of the row units).
const ROW_FLOOR_UNITS: u64 = ROW_UNITS >> 10;

/// Request for a certified desk-scale mixture.
#[derive(Debug, Clone, Copy)]
pub struct DeskSpec {
    /// Vocabulary size (≥ 4; split half negative, half positive).
    pub vocab_size: usize,
    /// Mixture weight of the negative component, in (0, 1).
    pub alpha: f64,
    /// Behavior ceiling to certify on the negative component, in [-1, 0).
    pub gamma: f64,
    /// Component KL to plant (> 0; `+∞` requests disjoint supports).
    pub target_beta: f64,
}

/// A generated model together with its validation evidence.
#[derive(Debug, Clone)]
pub struct DeskReport {
    /// The generated model, behavior table, and vocabulary.
    pub spec: ModelSpec,
    /// α echo, β estimate, certified β range, and γ certificate.
    pub abg: AbgReport,
    /// Generator attempts consumed (1 unless a draw failed validation).
    pub attempts: usize,
}

fn validate_desk_spec(spec: &DeskSpec) -> Result<()> {
    if spec.vocab_size < 4 {
        return Err(Error::InvalidParam {
            name: "vocab_size",
            value: spec.vocab_size as f64,
            constraint: "desk models need at least 4 sentences",
        });
    }
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(Error::InvalidParam {
            name: "alpha",
            value: spec.alpha,
            constraint: "must lie strictly inside (0, 1)",
        });
    }
    if !(-1.0..0.0).contains(&spec.gamma) {
        return Err(Error::InvalidParam {
            name: "gamma",
            value: spec.gamma,
            constraint: "must lie in [-1, 0)",
        });
    }
    if spec.target_beta.is_nan() || spec.target_beta <= 0.0 {
        return Err(Error::InvalidParam {
            name: "target_beta",
            value: spec.target_beta,
            constraint: "must be positive (infinite requests disjoint supports)",
        });
    }
    Ok(())
}

/// A strictly positive random probability row whose entries are multiples
/// of 2⁻³⁰ summing to exactly 1.0 (each entry ≥ 2⁻¹⁰ ≈ 9.8e-4). Uses a
/// per-entry floor plus a uniform random composition of the leftover units.
fn random_row(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    debug_assert!(len as u64 * ROW_FLOOR_UNITS <= ROW_UNITS);
    let free = ROW_UNITS - ROW_FLOOR_UNITS * len as u64;
    let mut cuts: Vec<u64> = (0..len.saturating_sub(1))
        .map(|_| rng.random_range(0..=free))
        .collect();
    cuts.sort_unstable();
    let mut row = Vec::with_capacity(len);
    let mut prev = 0u64;
    for &c in &cuts {
        row.push((ROW_FLOOR_UNITS + (c - prev)) as f64 / ROW_UNITS as f64);
        prev = c;
    }
    row.push((ROW_FLOOR_UNITS + (free - prev)) as f64 / ROW_UNITS as f64);
    row
}

/// Exact two-group KL as a function of the positive component's leak `b`.
fn two_group_kl(a: f64, b: f64) -> f64 {
    let neg_term = (1.0 - a) * ((1.0 - a) / b).ln();
    let pos_term = if a == 0.0 {
        0.0
    } else {
        a * (a / (1.0 - b)).ln()
    };
    neg_term + pos_term
}

/// Solves `two_group_kl(a, b) = target` for `b` by bisection on ln b.
fn solve_leak(a: f64, target: f64) -> Option<f64> {
    let hi = 1.0 - a;
    if two_group_kl(a, hi) > target || two_group_kl(a, (-700.0_f64).exp()) < target {
        return None; // target outside the realizable (0, ~700) band
    }
    let (mut lo_x, mut hi_x) = (-700.0_f64, hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo_x + hi_x);
        if two_group_kl(a, mid.exp()) > target {
            lo_x = mid;
        } else {
            hi_x = mid;
        }
    }
    Some((0.5 * (lo_x + hi_x)).exp())
}

/// Interleaves group shapes into full-vocabulary component rows.
fn two_group_rows(a: f64, b: f64, u: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut negative = Vec::with_capacity(u.len() + w.len());
    let mut positive = Vec::with_capacity(u.len() + w.len());
    for &ui in u {
        negative.push((1.0 - a) * ui);
        positive.push(b * ui);
    }
    for &wi in w {
        negative.push(a * wi);
        positive.push((1.0 - b) * wi);
    }
    (negative, positive)
}

fn desk_vocab(n_neg: usize, n_pos: usize) -> Result<Vocabulary> {
    let mut names: Vec<String> = (0..n_neg)
        .map(|i| format!("negative sentence {i}."))
        .collect();
    names.extend((0..n_pos).map(|i| format!("positive sentence {i}.")));
    Vocabulary::new(names)
}

fn try_desk_model(spec: &DeskSpec, a: f64, b: f64, rng: &mut ChaCha8Rng) -> Result<ModelSpec> {
    let n_neg = spec.vocab_size / 2;
    let n_pos = spec.vocab_size - n_neg;
    let margin = 0.25 * (1.0 + spec.gamma);
    let u = random_row(n_neg, rng);
    let w = random_row(n_pos, rng);
    let mut scores: Vec<f64> = (0..n_neg)
        .map(|_| -1.0 + (spec.gamma - margin + 1.0) * rng.random::<f64>())
        .collect();
    scores.extend((0..n_pos).map(|_| 0.5 + 0.5 * rng.random::<f64>()));
    let (negative, positive) = two_group_rows(a, b, &u, &w);
    Ok(ModelSpec {
        vocab: desk_vocab(n_neg, n_pos)?,
        behavior: BehaviorScore::new(scores)?,
        model: SentenceLm::mixture(
            spec.alpha,
            SentenceLm::categorical_at(negative, "negative.initial")?,
            SentenceLm::categorical_at(positive, "positive.initial")?,
        )?,
    })
}

/// Generates a mixture whose negative component certifies γ-negativity and
/// whose certified β lands within 25% of `spec.target_beta` (exact by
/// construction; infinite targets yield disjoint supports with β flagged
/// infinite). The report carries the full α/β/γ validation evidence.
///
/// Draws are rejection-sampled: a candidate that fails its own validation
/// is discarded and redrawn, up to [`MAX_SYNTH_ATTEMPTS`] times.
pub fn make_desk_model(spec: &DeskSpec, rng: &RngSpec) -> Result<DeskReport> {
    validate_desk_spec(spec)?;
    let margin = 0.25 * (1.0 + spec.gamma);
    // P⁻ may leak mass `a` onto positive symbols and still certify
    // B ≤ γ − margin/2 even when every positive symbol scores 1.
    let a = 0.5 * margin / (1.0 - spec.gamma + margin);
    let b = if spec.target_beta.is_infinite() {
        0.0
    } else {
        solve_leak(a, spec.target_beta).ok_or_else(|| Error::SynthesisFailed {
            attempts: 1,
            reason: format!(
                "no leak mass b realizes target beta {} given gamma {}",
                spec.target_beta, spec.gamma
            ),
        })?
    };
    let mut last_reason = String::new();
    for attempt in 1..=MAX_SYNTH_ATTEMPTS {
        let mut draw = rng.stream(SYNTH_STREAM_BASE + attempt as u64);
        let candidate = match try_desk_model(spec, a, b, &mut draw) {
            Ok(c) => c,
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        let abg = match check_abg(
            &candidate.model,
            &candidate.behavior,
            spec.gamma,
            3,
            200,
            rng,
        ) {
            Ok(r) => r,
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        if !abg.gamma.holds {
            last_reason = format!("gamma certification failed: sup behavior {}", abg.gamma.sup);
            continue;
        }
        let beta_ok = if spec.target_beta.is_infinite() {
            abg.beta_certified.any_infinite
        } else {
            (abg.beta_certified.min - spec.target_beta).abs() <= BETA_TARGET_RTOL * spec.target_beta
        };
        if !beta_ok {
            last_reason = format!(
                "certified beta {} missed target {}",
                abg.beta_certified.min, spec.target_beta
            );
            continue;
        }
        return Ok(DeskReport {
            spec: candidate,
            abg,
            attempts: attempt,
        });
    }
    Err(Error::SynthesisFailed {
        attempts: MAX_SYNTH_ATTEMPTS,
        reason: last_reason,
    })
}

/// A mixture whose negative component puts *zero* mass on positively scored
/// symbols (`a = 0`), with scores −1 on the negative group and +1 on the
/// positive group.
///
/// Every negatively scored symbol then has per-step log-ratio exactly
/// ln(1/b) = β, so greedy prompts, P⁻ samples, and the certified β range
/// all agree to float precision — the fixture of choice for decay-curve and
/// sigmoid-envelope checks.
pub fn make_strict_negative_model(
    vocab_size: usize,
    alpha: f64,
    target_beta: f64,
    rng: &RngSpec,
) -> Result<ModelSpec> {
    let spec = DeskSpec {
        vocab_size,
        alpha,
        gamma: -1.0,
        target_beta,
    };
    validate_desk_spec(&spec)?;
    let n_neg = vocab_size / 2;
    let n_pos = vocab_size - n_neg;
    let b = if target_beta.is_infinite() {
        0.0
    } else {
        (-target_beta).exp()
    };
    let mut draw = rng.stream(SYNTH_STREAM_BASE);
    let u = random_row(n_neg, &mut draw);
    let w = random_row(n_pos, &mut draw);
    let mut scores = vec![-1.0; n_neg];
    scores.extend((0..n_pos).map(|_| 1.0));
    let (negative, positive) = two_group_rows(0.0, b, &u, &w);
    Ok(ModelSpec {
        vocab: desk_vocab(n_neg, n_pos)?,
        behavior: BehaviorScore::new(scores)?,
        model: SentenceLm::mixture(
            alpha,
            SentenceLm::categorical_at(negative, "negative.initial")?,
            SentenceLm::categorical_at(positive, "positive.initial")?,
        )?,
    })
}

/// A random finite-state component: order 0 gives a categorical model,
/// orders 1–2 a Markov chain with every state row drawn independently.
/// All rows are strictly positive, so every prefix is supported.
pub fn random_component(
    vocab_size: usize,
    order: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SentenceLm> {
    if order == 0 {
        return SentenceLm::categorical(random_row(vocab_size, rng));
    }
    let initial = random_row(vocab_size, rng);
    let mut transitions = std::collections::BTreeMap::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..order {
        frontier = frontier
            .iter()
            .flat_map(|state| {
                (0..vocab_size).map(|i| {
                    let mut next = state.clone();
                    next.push(i);
                    next
                })
            })
            .collect();
        for state in &frontier {
            transitions.insert(state.clone(), random_row(vocab_size, rng));
        }
    }
    SentenceLm::markov(order, initial, transitions)
}

/// A random two-component mixture with α drawn uniformly from `alpha_range`
/// and component orders drawn independently from {0, 1, 2}.
pub fn random_mixture(
    vocab_size: usize,
    alpha_range: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<SentenceLm> {
    let (lo, hi) = alpha_range;
    let alpha = lo + (hi - lo) * rng.random::<f64>();
    let order_neg = rng.random_range(0..3usize);
    let order_pos = rng.random_range(0..3usize);
    let negative = random_component(vocab_size, order_neg, rng)?;
    let positive = random_component(vocab_size, order_pos, rng)?;
    SentenceLm::mixture(alpha, negative, positive)
}

/// A random behavior table with scores uniform in [-1, 1]; index 0 is
/// redrawn from [-1, 0) so a trigger always exists.
pub fn random_behavior(vocab_size: usize, rng: &mut ChaCha8Rng) -> Result<BehaviorScore> {
    let mut scores: Vec<f64> = (0..vocab_size)
        .map(|_| 2.0 * rng.random::<f64>() - 1.0)
        .collect();
    scores[0] = -1.0 + 0.999 * rng.random::<f64>();
    BehaviorScore::new(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::greedy_prompt;
    use crate::behavior::behavior_expectation_exact;
    use crate::bounds::{theorem1_length, BoundParams};
    use crate::divergence::certify_beta_range;
    use crate::io::model_to_json;

    #[test]
    fn random_rows_sum_to_exactly_one() {
        let rng = RngSpec::new(2);
        let mut r = rng.stream(0);
        for len in [1usize, 2, 3, 5, 8] {
            let row = random_row(len, &mut r);
            assert_eq!(row.iter().sum::<f64>(), 1.0, "len {len}");
            assert!(row.iter().all(|&p| p > 9e-4), "floor violated: {row:?}");
        }
    }

    #[test]
    fn desk_model_hits_beta_target_exactly() {
        let spec = DeskSpec {
            vocab_size: 8,
            alpha: 1e-3,
            gamma: -0.5,
            target_beta: 1.0,
        };
        let report = make_desk_model(&spec, &RngSpec::new(7)).unwrap();
        assert_eq!(report.attempts, 1);
        assert_eq!(report.abg.alpha, 1e-3);
        assert!(report.abg.gamma.holds);
        assert!(report.abg.gamma.sup <= -0.5);
        // Order-0 components: certified range is a single exact point.
        assert!((report.abg.beta_certified.min - 1.0).abs() < 1e-9);
        assert!((report.abg.beta_certified.max - 1.0).abs() < 1e-9);
        // The Monte Carlo estimate agrees with the planted value.
        let est = &report.abg.beta;
        assert!((est.point_estimate - 1.0).abs() <= (3.0 * est.standard_error).max(1e-3));
    }

    #[test]
    fn desk_model_disjoint_supports_flag_infinite_beta() {
        let spec = DeskSpec {
            vocab_size: 6,
            alpha: 0.5,
            gamma: -1.0,
            target_beta: f64::INFINITY,
        };
        let report = make_desk_model(&spec, &RngSpec::new(11)).unwrap();
        assert!(report.abg.beta_certified.any_infinite);
        assert!(report.abg.gamma.holds);
        // Dyadic rows make the all-(−1) expectation exact.
        assert_eq!(report.abg.gamma.sup, -1.0);
        // Disjoint supports: the negative component carries no positive-group
        // mass and vice versa.
        let mx = report.spec.model.as_mixture().unwrap();
        match (mx.negative(), mx.positive()) {
            (SentenceLm::Categorical(n), SentenceLm::Categorical(p)) => {
                for i in 3..6 {
                    assert_eq!(n.prob(i), 0.0);
                }
                for i in 0..3 {
                    assert_eq!(p.prob(i), 0.0);
                }
            }
            _ => panic!("expected categorical components"),
        }
    }

    #[test]
    fn desk_model_rejects_bad_specs() {
        let base = DeskSpec {
            vocab_size: 8,
            alpha: 0.5,
            gamma: -0.5,
            target_beta: 1.0,
        };
        let rng = RngSpec::new(1);
        for bad in [
            DeskSpec {
                vocab_size: 3,
                ..base
            },
            DeskSpec { alpha: 1.0, ..base },
            DeskSpec { gamma: 0.0, ..base },
            DeskSpec {
                target_beta: 0.0,
                ..base
            },
        ] {
            assert!(matches!(
                make_desk_model(&bad, &rng).unwrap_err(),
                Error::InvalidParam { .. }
            ));
        }
    }

    #[test]
    fn desk_model_is_seed_deterministic() {
        let spec = DeskSpec {
            vocab_size: 6,
            alpha: 0.01,
            gamma: -0.25,
            target_beta: 2.0,
        };
        let a = make_desk_model(&spec, &RngSpec::new(42)).unwrap();
        let b = make_desk_model(&spec, &RngSpec::new(42)).unwrap();
        let c = make_desk_model(&spec, &RngSpec::new(43)).unwrap();
        let ja = model_to_json(&a.spec, None).unwrap();
        assert_eq!(ja, model_to_json(&b.spec, None).unwrap());
        assert_ne!(ja, model_to_json(&c.spec, None).unwrap());
    }

    #[test]
    fn strict_model_has_exact_flat_ratio() {
        let spec = make_strict_negative_model(8, 1e-3, 2.0, &RngSpec::new(3)).unwrap();
        let mx = spec.model.as_mixture().unwrap();
        // No leak: the negative component is supported on negatives only.
        if let SentenceLm::Categorical(neg) = mx.negative() {
            for i in 4..8 {
                assert_eq!(neg.prob(i), 0.0);
            }
        } else {
            panic!("expected categorical negative component");
        }
        // Single state, flat per-symbol ratio: certified β range collapses
        // to the planted value.
        let range = certify_beta_range(mx.negative(), mx.positive()).unwrap();
        assert!((range.min - 2.0).abs() < 1e-12, "min {}", range.min);
        assert!((range.max - 2.0).abs() < 1e-12, "max {}", range.max);
        // Scores are ±1 by group.
        assert_eq!(spec.behavior.score(0), -1.0);
        assert_eq!(spec.behavior.score(7), 1.0);
    }

    /// End-to-end: greedy attack at the sufficiency length drives the exact
    /// behavior expectation below γ + ε on a generated desk model, and
    /// ln(1/α)/β lands near the expected sentence count.
    #[test]
    fn desk_model_misaligns_at_sufficiency_length() {
        let spec = DeskSpec {
            vocab_size: 8,
            alpha: 1e-3,
            gamma: -0.5,
            target_beta: 1.0,
        };
        let report = make_desk_model(&spec, &RngSpec::new(19)).unwrap();
        let beta = report.abg.beta_certified.min;
        assert!(((1.0f64 / 1e-3).ln() / beta - 6.907755278982137).abs() < 0.1);
        let params = BoundParams {
            alpha: 1e-3,
            beta,
            beta_prime: beta,
            sigma: 0.0,
            gamma: -0.5,
            epsilon: 0.1,
            delta: 0.5,
            eta: 0.0,
        };
        let n = theorem1_length(&params).unwrap().ceil() as usize;
        let trace = greedy_prompt(&report.spec.model, n).unwrap();
        let b_exact =
            behavior_expectation_exact(&report.spec.model, &trace.prompt, &report.spec.behavior)
                .unwrap();
        assert!(
            b_exact <= -0.5 + 0.1,
            "behavior {b_exact} above gamma + epsilon"
        );
    }

    #[test]
    fn random_fixtures_are_valid_and_deterministic() {
        let rng = RngSpec::new(5);
        for v in 2..=8usize {
            let mut r = rng.stream(v as u64);
            let mix = random_mixture(v, (0.05, 0.95), &mut r).unwrap();
            let mx = mix.as_mixture().unwrap();
            assert!(mx.alpha() > 0.0 && mx.alpha() < 1.0);
            let row = mix.next_dist(&[]).unwrap();
            let total: f64 = row.probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert_eq!(mix.posterior_weight(&[]).unwrap(), mx.alpha());
            let b = random_behavior(v, &mut r).unwrap();
            assert!(b.score(0) < 0.0);
        }
        // Same stream, same mixture.
        let mut r1 = rng.stream(3);
        let mut r2 = rng.stream(3);
        let m1 = random_mixture(3, (0.1, 0.9), &mut r1).unwrap();
        let m2 = random_mixture(3, (0.1, 0.9), &mut r2).unwrap();
        assert_eq!(
            m1.log_prob_seq(&[0, 1, 2]).unwrap().to_bits(),
            m2.log_prob_seq(&[0, 1, 2]).unwrap().to_bits()
        );
    }

    #[test]
    fn random_components_cover_all_orders() {
        let rng = RngSpec::new(9);
        let mut r = rng.stream(0);
        for order in 0..=2usize {
            let lm = random_component(4, order, &mut r).unwrap();
            assert!(lm.is_finite_state());
            // Deep prefixes are always supported.
            let lp = lm.log_prob_seq(&[0, 1, 2, 3, 0, 1]).unwrap();
            assert!(lp.is_finite());
            match (&lm, order) {
                (SentenceLm::Categorical(_), 0) => {}
                (SentenceLm::Markov(mk), o) => assert_eq!(mk.order(), o),
                _ => panic!("wrong shape for order {order}"),
            }
        }
    }
}
