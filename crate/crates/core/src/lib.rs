//! Exactly computable sentence-level mixture language models, with
//! divergence estimators, alignment-bound arithmetic, adversarial prompt
//! construction, and brute-force verification oracles.
//!
//! # Model
//!
//! Sentences are atoms: a [`Vocabulary`] maps sentence strings to indices,
//! and a [`SentenceLm`] assigns probabilities to sequences of indices. The
//! central object is the two-component mixture
//!
//! ```text
//!   P = α·P⁻ + (1−α)·P⁺,             0 < α < 1,
//! ```
//!
//! whose conditional next-sentence distribution reweights the components by
//! their Bayesian posterior given the prefix. Components are categorical or
//! low-order Markov chains, so every probability, every KL divergence, and
//! every behavior expectation is computable in closed form — no sampling
//! error unless sampling is requested.
//!
//! # What the crate answers
//!
//! * How *bad* can the model be made to act? A [`BehaviorScore`] grades each
//!   sentence in [-1, 1]; [`certify_gamma_negative`] proves a ceiling γ on
//!   the negative component's expected score over all reachable states.
//! * How *distinguishable* are the components? [`estimate_beta`],
//!   [`estimate_sigma`], and [`certify_beta_range`] measure the per-sentence
//!   KL separation β and its variance proxy σ², by Monte Carlo and by exact
//!   state-space walks.
//! * How *long* must an adversarial prompt be? [`theorem1_length`],
//!   [`theorem2_length`], [`theorem3_budgets`], and [`generalized_length`]
//!   turn (α, β, β′, σ, ε, δ) into sentence budgets; [`kl_decay_bound`] and
//!   [`sigmoid_bound`] describe how alignment evidence decays with prompt
//!   length.
//! * Do the bounds *bind*? [`greedy_prompt`], [`sampled_prompt`],
//!   [`prefixed_attack`], and [`converse`] construct the prompts; the
//!   resulting [`PromptTrace`]s and curves ([`misalignment_curve`],
//!   [`kl_decay_curve`]) are compared against the bounds point by point.
//! * Is any of it right? The [`oracle`] module recomputes the estimators'
//!   targets by full enumeration on tiny instances, and [`synth`] builds
//!   models whose β and γ are known exactly by construction.
//!
//! # Determinism
//!
//! Every randomized operation takes an [`RngSpec`] (a master seed) and
//! derives one independent ChaCha8 stream per trial, so results are
//! reproducible bit for bit regardless of scheduling, and any single trial
//! can be replayed in isolation.

pub mod attack;
pub mod behavior;
pub mod bounds;
pub mod divergence;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod synth;

pub use attack::{
    converse, greedy_prompt, greedy_prompt_with, kl_decay_curve, misalignment_curve,
    prefixed_attack, sampled_prompt, sampled_prompt_with, AttackMode, ConversationTranscript,
    MeasuredCurve, MeasuredPoint, PromptTrace, Turn,
};
pub use behavior::{
    behavior_expectation_exact, behavior_expectation_mc, certify_gamma_negative, BehaviorScore,
    GammaCertificate, McEstimate,
};
pub use bounds::{
    default_fit_range, fit_alpha_beta, generalized_length, kl_decay_bound, lemma_bounds,
    power_law_accumulation, sigmoid_bound, theorem1_length, theorem2_length, theorem3_budgets,
    BoundParams, CurvePoint, CurveSeries, FitResult, LemmaBounds, LineFit, TurnBudgets,
};
pub use divergence::{
    certify_beta_range, check_abg, check_positivity, conditional_kl_exact, describe_states,
    estimate_beta, estimate_beta_prompt, estimate_sigma, AbgReport, BetaRange, EstimateFlag,
    EstimateReport, KlValue, LengthStat, PositivityCertificate,
};
pub use error::{Error, Result};
pub use io::{load_model, model_from_json, model_to_json, save_model, ModelSpec};
pub use model::{
    Dist, MarkovLm, MixtureLm, ReachableState, RngSpec, SentenceLm, SentenceSeq, Vocabulary,
    MAX_VOCAB, MIN_VOCAB,
};
pub use oracle::{
    enumerate_all, exact_expectation_over_seqs, exact_log_ratio_moments, exact_mean_conditional_kl,
    EnumerationBudget, MAX_ORACLE_LEN, MAX_ORACLE_VOCAB,
};
pub use synth::{
    make_desk_model, make_strict_negative_model, random_behavior, random_component, random_mixture,
    DeskReport, DeskSpec, BETA_TARGET_RTOL, MAX_SYNTH_ATTEMPTS,
};
