//! Property-based invariants over randomized models and parameters.
//!
//! Models are derived deterministically from a proptest-chosen seed through
//! the crate's own fixture generators, so every failure shrinks to a seed
//! that reproduces exactly.

use proptest::prelude::*;

use mixalign::{
    certify_beta_range, conditional_kl_exact, enumerate_all, exact_log_ratio_moments,
    exact_mean_conditional_kl, generalized_length, greedy_prompt, kl_decay_bound, kl_decay_curve,
    make_strict_negative_model, model_from_json, model_to_json, power_law_accumulation,
    random_behavior, random_component, random_mixture, sigmoid_bound, theorem1_length,
    theorem2_length, theorem3_budgets, BehaviorScore, BoundParams, EnumerationBudget, ModelSpec,
    RngSpec, SentenceLm, Vocabulary,
};

/// Mixture fixture derived from a seed: all rows strictly positive, so every
/// prefix is supported and every conditional KL is finite.
fn seeded_mixture(seed: u64, vocab: usize) -> SentenceLm {
    let mut r = RngSpec::new(seed).stream(0);
    random_mixture(vocab, (0.05, 0.95), &mut r).unwrap()
}

fn seeded_behavior(seed: u64, vocab: usize) -> BehaviorScore {
    let mut r = RngSpec::new(seed).stream(1);
    random_behavior(vocab, &mut r).unwrap()
}

/// All sequences over `vocab` symbols of length exactly `len`.
fn all_seqs(vocab: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .iter()
            .flat_map(|s| {
                (0..vocab).map(|y| {
                    let mut t = s.clone();
                    t.push(y);
                    t
                })
            })
            .collect();
    }
    out
}

fn params_strategy() -> impl Strategy<Value = BoundParams> {
    (
        1e-6..0.5f64,
        0.1..30.0f64,
        1.0..3.0f64,
        0.0..8.0f64,
        -1.0..-0.01f64,
        1e-4..0.9f64,
        0.01..0.99f64,
        0.0..0.9f64,
    )
        .prop_map(
            |(alpha, beta, bp_factor, sigma, gamma, epsilon, delta, eta)| BoundParams {
                alpha,
                beta,
                beta_prime: beta * bp_factor,
                sigma,
                gamma,
                epsilon,
                delta,
                eta,
            },
        )
}

proptest! {
    /// Conditional rows are probability distributions at every sampled
    /// context: entries in [0, 1], summing to 1 within 1e-12.
    #[test]
    fn next_dist_rows_normalize(seed in any::<u64>(), vocab in 2usize..=6, len in 0usize..=4) {
        let mix = seeded_mixture(seed, vocab);
        let mut r = RngSpec::new(seed).stream(2);
        let prefix = mix.sample_seq(&[], len, &mut r).unwrap();
        let row = mix.next_dist(&prefix).unwrap();
        let total: f64 = row.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "sum {total}");
        prop_assert!(row.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    /// The mixture conditional equals the posterior-reweighted combination
    /// of component conditionals, recomputed here from sequence
    /// probabilities alone, within 1e-12 per entry.
    #[test]
    fn mixture_conditional_matches_reweighting(seed in any::<u64>(), vocab in 2usize..=5) {
        let mix = seeded_mixture(seed, vocab);
        let mx = mix.as_mixture().unwrap();
        for prefix in all_seqs(vocab, 2) {
            let w_neg = {
                let pn = mx.negative().log_prob_seq(&prefix).unwrap().exp();
                let pp = mx.positive().log_prob_seq(&prefix).unwrap().exp();
                mx.alpha() * pn / (mx.alpha() * pn + (1.0 - mx.alpha()) * pp)
            };
            let neg_row = mx.negative().next_dist(&prefix).unwrap();
            let pos_row = mx.positive().next_dist(&prefix).unwrap();
            let row = mix.next_dist(&prefix).unwrap();
            for y in 0..vocab {
                let expected = w_neg * neg_row.prob(y) + (1.0 - w_neg) * pos_row.prob(y);
                prop_assert!(
                    (row.prob(y) - expected).abs() < 1e-12,
                    "prefix {prefix:?} symbol {y}: {} vs {expected}",
                    row.prob(y)
                );
            }
        }
    }

    /// Chain rule: extending a sequence one sentence at a time through
    /// next_dist reproduces log_prob_seq within 1e-10.
    #[test]
    fn chain_rule_consistency(seed in any::<u64>(), vocab in 2usize..=4) {
        let mix = seeded_mixture(seed, vocab);
        for seq in all_seqs(vocab, 3) {
            let direct = mix.log_prob_seq(&seq).unwrap();
            let mut acc = 0.0;
            for k in 0..seq.len() {
                acc += mix.next_dist(&seq[..k]).unwrap().log_prob(seq[k]);
            }
            prop_assert!((direct - acc).abs() < 1e-10, "{seq:?}: {direct} vs {acc}");
        }
    }

    /// Posterior odds evolve multiplicatively: appending y multiplies the
    /// against-odds by the component likelihood ratio at that step. Odds are
    /// rebuilt from component sequence probabilities (never by inverting a
    /// saturated posterior weight, which would lose the tail).
    #[test]
    fn posterior_odds_recurrence(seed in any::<u64>(), vocab in 2usize..=5, len in 0usize..=3) {
        let mix = seeded_mixture(seed, vocab);
        let mx = mix.as_mixture().unwrap();
        let mut r = RngSpec::new(seed).stream(3);
        let prefix = mix.sample_seq(&[], len, &mut r).unwrap();
        let odds = {
            let pn = mx.negative().log_prob_seq(&prefix).unwrap();
            let pp = mx.positive().log_prob_seq(&prefix).unwrap();
            (mx.alpha() / (1.0 - mx.alpha())) * (pn - pp).exp()
        };
        let neg_row = mx.negative().next_dist(&prefix).unwrap();
        let pos_row = mx.positive().next_dist(&prefix).unwrap();
        for y in 0..vocab {
            let mut ext = prefix.clone();
            ext.push(y);
            let w_ext = mix.posterior_weight(&ext).unwrap();
            let ext_odds = odds * (neg_row.prob(y) / pos_row.prob(y));
            let expected = ext_odds / (1.0 + ext_odds);
            prop_assert!(
                (w_ext - expected).abs() < 1e-12,
                "symbol {y}: {w_ext} vs {expected}"
            );
        }
    }

    /// Greedy dominance: the chosen symbol's log-ratio is at least the
    /// conditional KL at the same context (an argmax beats the mean).
    #[test]
    fn greedy_step_dominates_conditional_kl(seed in any::<u64>(), vocab in 2usize..=6) {
        let mix = seeded_mixture(seed, vocab);
        let mx = mix.as_mixture().unwrap();
        let trace = greedy_prompt(&mix, 5).unwrap();
        let mut ctx: Vec<usize> = Vec::new();
        for (k, &ratio) in trace.per_step_log_ratio.iter().enumerate() {
            let kl = conditional_kl_exact(mx.negative(), mx.positive(), &ctx).unwrap();
            prop_assert!(ratio >= kl.nats - 1e-12, "step {k}: {ratio} < {}", kl.nats);
            ctx.push(trace.prompt[k]);
        }
    }

    /// Sufficiency along greedy traces: once the cumulative log-ratio clears
    /// ln(1/α) + ln(1/ε) + ln 4, the mixture's behavior expectation is
    /// within ε of the ill-behaved component's.
    #[test]
    fn greedy_sufficiency_threshold(seed in any::<u64>(), vocab in 2usize..=6) {
        let mix = seeded_mixture(seed, vocab);
        let mx = mix.as_mixture().unwrap();
        let b = seeded_behavior(seed, vocab);
        let trace = greedy_prompt(&mix, 10).unwrap();
        for eps in [0.5_f64, 0.1] {
            let need = (1.0 / mx.alpha()).ln() + (1.0 / eps).ln() + 4.0_f64.ln();
            let mut cum = 0.0;
            for k in 0..trace.prompt.len() {
                cum += trace.per_step_log_ratio[k];
                if cum >= need {
                    let ctx = &trace.prompt[..=k];
                    let b_mix =
                        mixalign::behavior_expectation_exact(&mix, ctx, &b).unwrap();
                    let b_neg =
                        mixalign::behavior_expectation_exact(mx.negative(), ctx, &b).unwrap();
                    prop_assert!(b_mix <= b_neg + eps + 1e-9, "{b_mix} vs {b_neg} + {eps}");
                }
            }
        }
    }

    /// Bound monotonicity: the one-shot length falls as β grows and rises as
    /// α or ε shrink; the prefixed length strictly grows with the prefix.
    #[test]
    fn bound_lengths_are_monotone(p in params_strategy()) {
        let t1 = theorem1_length(&p).unwrap();
        let harder_beta = BoundParams { beta: p.beta * 1.5, ..p };
        prop_assert!(theorem1_length(&harder_beta).unwrap() < t1);
        let smaller_alpha = BoundParams { alpha: p.alpha / 2.0, ..p };
        prop_assert!(theorem1_length(&smaller_alpha).unwrap() > t1);
        let smaller_eps = BoundParams { epsilon: p.epsilon / 2.0, ..p };
        prop_assert!(theorem1_length(&smaller_eps).unwrap() > t1);

        let t2_short = theorem2_length(&p, 2).unwrap();
        let t2_long = theorem2_length(&p, 3).unwrap();
        prop_assert!(t2_long > t2_short);
        prop_assert!(t2_short >= t1 + 1.0 - 1e-12, "prefix can only lengthen the attack");
    }

    /// Turn budgets: every cap is ≥ 1 sentence of room plus the answer-scaled
    /// terms, and the total is exactly the sum of the caps.
    #[test]
    fn turn_budget_caps_sum_to_total(p in params_strategy(), lens in prop::collection::vec(0usize..20, 1..6)) {
        let budgets = theorem3_budgets(&p, &lens).unwrap();
        prop_assert_eq!(budgets.per_turn_caps.len(), lens.len());
        let sum: f64 = budgets.per_turn_caps.iter().sum();
        prop_assert_eq!(sum.to_bits(), budgets.total.to_bits());
        for cap in &budgets.per_turn_caps {
            prop_assert!(*cap >= 1.0);
        }
    }

    /// The generalized length dominates both of its arms, and collapses to
    /// twice the one-shot form when σ = 0.
    #[test]
    fn generalized_length_dominates_arms(p in params_strategy()) {
        let g = generalized_length(&p).unwrap();
        let arm1 = (2.0 / p.beta)
            * ((1.0 / p.alpha).ln() + (1.0 / p.epsilon).ln() + 4.0_f64.ln());
        let arm2 = 4.0 * p.sigma * p.sigma / (p.beta * p.beta * p.delta);
        prop_assert!(g >= arm1 && g >= arm2);
        let no_sigma = BoundParams { sigma: 0.0, ..p };
        let g0 = generalized_length(&no_sigma).unwrap();
        prop_assert!((g0 - 2.0 * theorem1_length(&p).unwrap()).abs() < 1e-12);
    }

    /// Decay bounds are strictly decreasing in prompt length and the
    /// power-law accumulation is exact at η = 0 and increasing in n.
    #[test]
    fn decay_bounds_decrease_accumulation_grows(
        alpha in 1e-6..0.5f64,
        beta in 0.1..20.0f64,
        eta in 0.0..0.9f64,
    ) {
        for n in 0..8 {
            let k0 = kl_decay_bound(alpha, beta, n as f64).unwrap();
            let k1 = kl_decay_bound(alpha, beta, (n + 1) as f64).unwrap();
            prop_assert!(k1 < k0);
            let s0 = sigmoid_bound(alpha, beta, n as f64).unwrap();
            let s1 = sigmoid_bound(alpha, beta, (n + 1) as f64).unwrap();
            prop_assert!(s1 < s0);
        }
        let exact = power_law_accumulation(beta, 0.0, 7).unwrap();
        prop_assert_eq!(exact.to_bits(), (beta * 7.0).to_bits());
        let mut prev = 0.0;
        for n in 1..6 {
            let v = power_law_accumulation(beta, eta, n).unwrap();
            prop_assert!(v > prev);
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Enumeration oracle: per-length probabilities sum to 1 within 1e-9
    /// for random components of any order.
    #[test]
    fn enumerated_lengths_normalize(seed in any::<u64>(), vocab in 2usize..=4, order in 0usize..=2) {
        let mut r = RngSpec::new(seed).stream(0);
        let lm = random_component(vocab, order, &mut r).unwrap();
        let budget = EnumerationBudget::new(vocab, 3).unwrap();
        let all = enumerate_all(&lm, &budget).unwrap();
        for len in 1..=3usize {
            let total: f64 = all
                .iter()
                .filter(|(s, _)| s.len() == len)
                .map(|(_, lp)| lp.exp())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "len {len}: {total}");
        }
    }

    /// The certified β range brackets the exact per-length mean conditional
    /// KL at every length (each conditional KL lies in [min, max], hence so
    /// does any mixture of them).
    #[test]
    fn certified_range_brackets_oracle_means(seed in any::<u64>(), vocab in 2usize..=4) {
        let mut r = RngSpec::new(seed).stream(0);
        let p = random_component(vocab, (seed % 2) as usize, &mut r).unwrap();
        let q = random_component(vocab, ((seed >> 1) % 2) as usize, &mut r).unwrap();
        let range = certify_beta_range(&p, &q).unwrap();
        prop_assert!(!range.any_infinite);
        let budget = EnumerationBudget::new(vocab, 3).unwrap();
        for n in 0..=3usize {
            let mean = exact_mean_conditional_kl(&p, &q, n, &budget).unwrap();
            prop_assert!(
                mean >= range.min - 1e-9 && mean <= range.max + 1e-9,
                "n={n}: {mean} outside [{}, {}]",
                range.min,
                range.max
            );
        }
    }

    /// Order-0 log-ratio moments are additive across sentence positions:
    /// mean and variance at length 3 are exactly three times length 1.
    #[test]
    fn order0_moments_are_additive(seed in any::<u64>(), vocab in 2usize..=4) {
        let mut r = RngSpec::new(seed).stream(0);
        let p = random_component(vocab, 0, &mut r).unwrap();
        let q = random_component(vocab, 0, &mut r).unwrap();
        let budget = EnumerationBudget::new(vocab, 3).unwrap();
        let (m1, v1) = exact_log_ratio_moments(&p, &q, &[], 1, &budget).unwrap();
        let (m3, v3) = exact_log_ratio_moments(&p, &q, &[], 3, &budget).unwrap();
        prop_assert!((m3 - 3.0 * m1).abs() < 1e-9 * (1.0 + m1.abs()), "{m3} vs 3×{m1}");
        prop_assert!((v3 - 3.0 * v1).abs() < 1e-9 * (1.0 + v1.abs()), "{v3} vs 3×{v1}");
    }

    /// Model files round-trip bit for bit: serialize, parse, re-serialize,
    /// compare bytes.
    #[test]
    fn model_files_round_trip(seed in any::<u64>(), vocab in 2usize..=5) {
        let mix = seeded_mixture(seed, vocab);
        let spec = ModelSpec {
            vocab: Vocabulary::new((0..vocab).map(|i| format!("s{i}.")).collect()).unwrap(),
            behavior: seeded_behavior(seed, vocab),
            model: mix,
        };
        let json = model_to_json(&spec, None).unwrap();
        let back = model_from_json(&json).unwrap();
        prop_assert_eq!(model_to_json(&back, None).unwrap(), json);
    }

    /// On strict-negative fixtures the measured KL decay curve sits under
    /// the closed-form decay bound at the certified β (the curve is exact:
    /// order-0 components make every sampled prompt equivalent).
    #[test]
    fn kl_curve_under_decay_bound(seed in any::<u64>(), beta_i in 1usize..=4) {
        let beta = beta_i as f64 * 0.5;
        let spec = make_strict_negative_model(6, 0.01, beta, &RngSpec::new(seed)).unwrap();
        let mx = spec.model.as_mixture().unwrap();
        let certified = certify_beta_range(mx.negative(), mx.positive()).unwrap();
        let curve = kl_decay_curve(&spec.model, 10, 2, &RngSpec::new(seed ^ 1)).unwrap();
        for point in &curve.points {
            let bound = kl_decay_bound(0.01, certified.min, point.n as f64).unwrap();
            prop_assert!(
                point.mean <= bound + 1e-9,
                "n={}: {} above {}",
                point.n,
                point.mean,
                bound
            );
        }
    }
}
