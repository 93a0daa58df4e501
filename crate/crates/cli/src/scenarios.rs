//! One function per CLI scenario.
//!
//! Every scenario returns its one-line summary on success; artifacts are
//! written as a side effect. All randomness flows from the `--seed` flag
//! through [`RngSpec`] streams, so a scenario rerun with identical flags and
//! input bytes produces byte-identical artifacts.

use std::path::Path;

use anyhow::{bail, Context, Result};

use mixalign::{
    behavior_expectation_exact, certify_beta_range, certify_gamma_negative, conditional_kl_exact,
    converse, estimate_beta, estimate_beta_prompt, estimate_sigma, generalized_length,
    greedy_prompt, kl_decay_bound, kl_decay_curve, lemma_bounds, load_model, make_desk_model,
    misalignment_curve, model_from_json, prefixed_attack, random_behavior, random_mixture,
    sampled_prompt, save_model, sigmoid_bound, theorem1_length, theorem2_length, AttackMode,
    BoundParams, DeskSpec, EstimateReport, MeasuredCurve, ModelSpec, RngSpec, SentenceLm,
};

use crate::fmt::fmt_g;
use crate::provenance::{csv_header, ConfigHash};

/// Neutral-context length used by the trigger-prefixed β estimate: one
/// mixture-sampled sentence precedes the trigger.
const NEUTRAL_PREFIX_LEN: usize = 1;

/// Length of each sampled model answer in a simulated conversation.
const CONVERSE_ANSWER_LEN: usize = 2;

/// Probe depth and width for the internal σ estimate that parametrizes
/// prefixed attacks and conversation budgets.
const SIGMA_PROBE_MAX_LEN: usize = 3;
const SIGMA_PROBE_TRIALS: usize = 200;

/// Seed salt separating the internal σ probe's RNG from the scenario's own
/// streams (a distinct master seed, so stream indices cannot collide).
const SIGMA_PROBE_SALT: u64 = 0x5349_474d_4121;

/// Absolute float-dust tolerance for the exact inequalities `verify` checks.
const VERIFY_TOL: f64 = 1e-9;

/// Prefix lengths the bounds table tabulates the re-misalignment length at.
const BOUNDS_PREFIX_LENS: [usize; 4] = [0, 2, 4, 8];

/// Loads a model file, returning the parsed spec together with the raw bytes
/// (the bytes feed the config hash, so provenance tracks content, not path).
fn load_model_and_bytes(path: &Path) -> Result<(ModelSpec, Vec<u8>)> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading model file {}", path.display()))?;
    let text = String::from_utf8(bytes.clone())
        .with_context(|| format!("model file {} is not UTF-8", path.display()))?;
    let spec =
        model_from_json(&text).with_context(|| format!("parsing model file {}", path.display()))?;
    Ok((spec, bytes))
}

fn write_artifact(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("writing artifact {}", path.display()))
}

/// Internal σ estimate: square root of the fitted per-sentence variance rate
/// of the log-ratio `ln p − ln q` under `p`. Deterministic given `seed`.
fn probe_sigma(p: &SentenceLm, q: &SentenceLm, seed: u64) -> Result<f64> {
    let report = estimate_sigma(
        p,
        q,
        &[],
        SIGMA_PROBE_MAX_LEN,
        SIGMA_PROBE_TRIALS,
        &RngSpec::new(seed ^ SIGMA_PROBE_SALT),
    )?;
    if let Some(flag) = report.flag {
        bail!("σ probe hit {flag}: the components do not share support");
    }
    Ok(report.point_estimate.sqrt())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

pub fn run_validate(model: &Path) -> Result<String> {
    let spec = load_model(model).with_context(|| format!("validating {}", model.display()))?;
    let vocab = spec.model.vocab_size();
    let detail = match &spec.model {
        SentenceLm::Mixture(mx) => format!(
            "kind=mixture alpha={} negative-states={} positive-states={}",
            fmt_g(mx.alpha()),
            mx.negative().reachable_states()?.len(),
            mx.positive().reachable_states()?.len(),
        ),
        SentenceLm::Markov(_) => {
            format!(
                "kind=markov states={}",
                spec.model.reachable_states()?.len()
            )
        }
        SentenceLm::Categorical(_) => "kind=categorical states=1".to_string(),
    };
    Ok(format!(
        "validate: ok file={} vocab={vocab} {detail}",
        model.display()
    ))
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EstimateWhat {
    /// Per-sentence divergence rate of the ill-behaved component.
    Beta,
    /// The same rate measured after a neutral context plus trigger sentence.
    BetaPrompt,
    /// Per-sentence variance rate of the sequence log-ratio.
    Sigma,
}

impl EstimateWhat {
    fn name(self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::BetaPrompt => "beta-prompt",
            Self::Sigma => "sigma",
        }
    }
}

fn estimate_csv(hash: &str, report: &EstimateReport) -> String {
    let mut out = csv_header(hash);
    out.push_str("n,mean,stderr,trials\n");
    for stat in &report.per_length {
        out.push_str(&format!(
            "{},{},{},{}\n",
            stat.n,
            fmt_g(stat.mean),
            fmt_g(stat.stderr),
            report.trials
        ));
    }
    out
}

pub fn run_estimate(
    what: EstimateWhat,
    model: &Path,
    max_len: usize,
    trials: usize,
    seed: u64,
    out: &Path,
) -> Result<String> {
    let (spec, bytes) = load_model_and_bytes(model)?;
    let mx = spec.model.as_mixture()?;
    let rng = RngSpec::new(seed);
    let report = match what {
        EstimateWhat::Beta => estimate_beta(mx.negative(), mx.positive(), max_len, trials, &rng)?,
        EstimateWhat::BetaPrompt => estimate_beta_prompt(
            mx.negative(),
            mx.positive(),
            &spec.model,
            NEUTRAL_PREFIX_LEN,
            &spec.behavior,
            max_len,
            trials,
            &rng,
        )?,
        EstimateWhat::Sigma => {
            estimate_sigma(mx.negative(), mx.positive(), &[], max_len, trials, &rng)?
        }
    };
    let hash = ConfigHash::new("estimate")
        .knob("what", what.name())
        .input_bytes("model", &bytes)
        .knob("max_len", max_len)
        .knob("trials", trials)
        .knob("seed", seed)
        .finish();
    write_artifact(out, &estimate_csv(&hash, &report))?;
    let flag = report
        .flag
        .map_or_else(|| "none".to_string(), |f| f.to_string());
    Ok(format!(
        "estimate-{}: point={} stderr={} trials={trials} flag={flag} seed={seed} out={}",
        what.name(),
        fmt_g(report.point_estimate),
        fmt_g(report.standard_error),
        out.display()
    ))
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CliAttackMode {
    /// Deterministic per-step log-ratio argmax.
    Greedy,
    /// Ancestral sampling from the ill-behaved component.
    Sample,
}

#[allow(clippy::too_many_arguments)]
pub fn run_attack(
    model: &Path,
    mode: CliAttackMode,
    max_len: usize,
    seed: u64,
    prefix_len: Option<usize>,
    epsilon: f64,
    delta: f64,
) -> Result<String> {
    let (spec, _) = load_model_and_bytes(model)?;
    let mix = &spec.model;
    let mx = mix.as_mixture()?;
    let rng = RngSpec::new(seed);
    let (prefix, trace) = match prefix_len {
        Some(k) => {
            if mode != CliAttackMode::Greedy {
                bail!("--prefix-len requires --mode greedy (the re-misalignment attack is greedy)");
            }
            let prefix = mx
                .positive()
                .sample_seq(&[], k, &mut rng.stream(1))
                .context("sampling the aligned prefix from the well-behaved component")?;
            let swapped = certify_beta_range(mx.positive(), mx.negative())?;
            if !swapped.max.is_finite() {
                bail!(
                    "aligned text can reach states the ill-behaved component cannot produce; \
                     the re-misalignment threshold is infinite"
                );
            }
            let sigma = probe_sigma(mx.positive(), mx.negative(), seed)?;
            let trace = prefixed_attack(
                mix,
                &prefix,
                &spec.behavior,
                epsilon,
                delta,
                swapped.max,
                sigma,
                max_len,
            )?;
            (prefix, trace)
        }
        None => {
            let trace = match mode {
                CliAttackMode::Greedy => greedy_prompt(mix, max_len)?,
                CliAttackMode::Sample => sampled_prompt(mix, max_len, &mut rng.stream(0))?,
            };
            (Vec::new(), trace)
        }
    };
    let mut context = prefix.clone();
    context.extend_from_slice(&trace.prompt);
    let behavior = behavior_expectation_exact(mix, &context, &spec.behavior)?;
    let posterior = mix.posterior_weight(&context)?;
    let prefix_part = prefix_len.map_or_else(String::new, |k| format!(" prefix-len={k}"));
    Ok(format!(
        "attack: mode={}{prefix_part} len={} cum-log-ratio={} truncated={} \
         posterior-negative={} behavior={} seed={seed}",
        trace.mode,
        trace.prompt.len(),
        fmt_g(trace.cumulative_log_ratio),
        trace.truncated,
        fmt_g(posterior),
        fmt_g(behavior),
    ))
}

// ---------------------------------------------------------------------------
// curve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CurveMetric {
    /// Conditional KL from the ill-behaved component to the mixture.
    Kl,
    /// Behavior expectation of the mixture after sampled attack prompts.
    Behavior,
}

impl CurveMetric {
    fn name(self) -> &'static str {
        match self {
            Self::Kl => "kl",
            Self::Behavior => "behavior",
        }
    }
}

fn curve_csv(hash: &str, curve: &MeasuredCurve, bounds: &[f64]) -> String {
    let mut out = csv_header(hash);
    out.push_str("n,mean,stderr,bound\n");
    for (point, bound) in curve.points.iter().zip(bounds) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            point.n,
            fmt_g(point.mean),
            fmt_g(point.stderr),
            fmt_g(*bound)
        ));
    }
    out
}

pub fn run_curve(
    model: &Path,
    metric: CurveMetric,
    max_len: usize,
    trials: usize,
    seed: u64,
    out: &Path,
) -> Result<String> {
    let (spec, bytes) = load_model_and_bytes(model)?;
    let mix = &spec.model;
    let mx = mix.as_mixture()?;
    let rng = RngSpec::new(seed);
    let certified = certify_beta_range(mx.negative(), mx.positive())?;
    let curve = match metric {
        CurveMetric::Kl => kl_decay_curve(mix, max_len, trials, &rng)?,
        CurveMetric::Behavior => misalignment_curve(
            mix,
            &spec.behavior,
            max_len,
            AttackMode::Sampled,
            trials,
            &rng,
        )?,
    };
    let bounds: Vec<f64> = curve
        .points
        .iter()
        .map(|p| match metric {
            CurveMetric::Kl => kl_decay_bound(mx.alpha(), certified.min, p.n as f64),
            CurveMetric::Behavior => sigmoid_bound(mx.alpha(), certified.min, p.n as f64),
        })
        .collect::<mixalign::Result<_>>()?;
    let hash = ConfigHash::new("curve")
        .knob("metric", metric.name())
        .input_bytes("model", &bytes)
        .knob("max_len", max_len)
        .knob("trials", trials)
        .knob("seed", seed)
        .finish();
    write_artifact(out, &curve_csv(&hash, &curve, &bounds))?;
    let last = curve.points.last().expect("curve always has the n=0 point");
    Ok(format!(
        "curve-{}: lengths=0..{max_len} trials={trials} final-mean={} final-bound={} \
         beta-certified={} seed={seed} out={}",
        metric.name(),
        fmt_g(last.mean),
        fmt_g(*bounds.last().expect("one bound per point")),
        fmt_g(certified.min),
        out.display()
    ))
}

// ---------------------------------------------------------------------------
// converse
// ---------------------------------------------------------------------------

pub fn run_converse(
    model: &Path,
    turns: usize,
    delta: f64,
    epsilon: f64,
    seed: u64,
    out: &Path,
) -> Result<String> {
    let (spec, bytes) = load_model_and_bytes(model)?;
    let mix = &spec.model;
    let mx = mix.as_mixture()?;
    let certified = certify_beta_range(mx.negative(), mx.positive())?;
    let swapped = certify_beta_range(mx.positive(), mx.negative())?;
    if !swapped.max.is_finite() {
        bail!(
            "model answers can reach states the ill-behaved component cannot produce; \
             per-turn budgets would be infinite"
        );
    }
    let gamma_cert = certify_gamma_negative(mx.negative(), &spec.behavior, 0.0)?;
    if gamma_cert.sup >= 0.0 {
        bail!(
            "ill-behaved component is not behavior-negative (sup {}); \
             conversation budgets are undefined",
            fmt_g(gamma_cert.sup)
        );
    }
    let params = BoundParams {
        alpha: mx.alpha(),
        beta: certified.min,
        beta_prime: swapped.max,
        sigma: probe_sigma(mx.positive(), mx.negative(), seed)?,
        gamma: gamma_cert.sup,
        epsilon,
        delta,
        eta: 0.0,
    };
    let transcript = converse(
        mix,
        &spec.behavior,
        turns,
        CONVERSE_ANSWER_LEN,
        &params,
        &RngSpec::new(seed),
    )?;
    let hash = ConfigHash::new("converse")
        .input_bytes("model", &bytes)
        .knob("turns", turns)
        .knob("delta", delta)
        .knob("epsilon", epsilon)
        .knob("seed", seed)
        .finish();
    let artifact = serde_json::json!({
        "config_hash": hash,
        "scenario": "converse",
        "params": params,
        "answer_len": CONVERSE_ANSWER_LEN,
        "transcript": transcript,
    });
    let mut text = serde_json::to_string_pretty(&artifact)?;
    text.push('\n');
    write_artifact(out, &text)?;
    let query_total: usize = transcript.turns.iter().map(|t| t.query.len()).sum();
    let answer_total: usize = transcript.turns.iter().map(|t| t.answer.len()).sum();
    Ok(format!(
        "converse: turns={turns} query-sentences={query_total} answer-sentences={answer_total} \
         final-behavior={} budget-total={} seed={seed} out={}",
        fmt_g(transcript.final_behavior),
        fmt_g(transcript.per_turn_caps.iter().sum::<f64>()),
        out.display()
    ))
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

pub fn run_bounds(params_path: &Path, out: &Path) -> Result<String> {
    let bytes = std::fs::read(params_path)
        .with_context(|| format!("reading parameter file {}", params_path.display()))?;
    let params: BoundParams = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing parameter file {}", params_path.display()))?;
    params.validate()?;
    let theorem1 = theorem1_length(&params)?;
    let generalized = generalized_length(&params)?;
    let hash = ConfigHash::new("bounds")
        .input_bytes("params", &bytes)
        .finish();
    let mut csv = csv_header(&hash);
    csv.push_str("quantity,value\n");
    let mut push = |name: &str, value: f64| {
        csv.push_str(&format!("{name},{}\n", fmt_g(value)));
    };
    push("alpha", params.alpha);
    push("beta", params.beta);
    push("beta_prime", params.beta_prime);
    push("sigma", params.sigma);
    push("gamma", params.gamma);
    push("epsilon", params.epsilon);
    push("delta", params.delta);
    push("eta", params.eta);
    push("sigma_over_beta", params.sigma / params.beta);
    push("beta_prime_over_beta", params.beta_prime / params.beta);
    push("theorem1_length", theorem1);
    let mut t2_at_4 = f64::NAN;
    for s0 in BOUNDS_PREFIX_LENS {
        let value = theorem2_length(&params, s0)?;
        if s0 == 4 {
            t2_at_4 = value;
        }
        push(&format!("theorem2_length_s0_{s0}"), value);
    }
    push("generalized_length", generalized);
    write_artifact(out, &csv)?;
    Ok(format!(
        "bounds: sigma/beta={} beta'/beta={} theorem1={} theorem2(s0=4)={} generalized={} out={}",
        fmt_g(params.sigma / params.beta),
        fmt_g(params.beta_prime / params.beta),
        fmt_g(theorem1),
        fmt_g(t2_at_4),
        fmt_g(generalized),
        out.display()
    ))
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// All prefixes over `vocab` symbols of length `0..=max_len`, shortest
/// first.
fn all_prefixes(vocab: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|p| {
                (0..vocab).map(|y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

/// A mixture whose components have disjoint supports over `2·half` symbols.
fn disjoint_mixture(half: usize, alpha: f64) -> Result<SentenceLm> {
    let mut neg = vec![0.0; 2 * half];
    let mut pos = vec![0.0; 2 * half];
    for i in 0..half {
        neg[i] = 1.0 / half as f64;
        pos[half + i] = 1.0 / half as f64;
    }
    Ok(SentenceLm::mixture(
        alpha,
        SentenceLm::categorical(neg)?,
        SentenceLm::categorical(pos)?,
    )?)
}

/// Exact inequality suite over seeded random mixtures:
///
/// * ratio-dev — the mixture conditional's relative deviation from the
///   ill-behaved conditional never exceeds its closed-form bound;
/// * behavior-gap — the behavior-expectation gap never exceeds twice the
///   posterior odds factor;
/// * kl-cap — the conditional KL to the mixture never exceeds the posterior
///   surprisal `−ln w⁻`;
/// * disjoint-kl — disjoint supports give KL exactly `ln(1/α)`.
pub fn run_verify(trials: usize, seed: u64) -> Result<String> {
    if trials == 0 {
        bail!("--trials must be >= 1");
    }
    let rng = RngSpec::new(seed);
    let mut ratio_dev_pass = 0usize;
    let mut behavior_gap_pass = 0usize;
    let mut kl_cap_pass = 0usize;
    for case in 0..trials {
        let vocab = 2 + case % 4;
        let mut model_rng = rng.stream(2 * case as u64);
        let mut behavior_rng = rng.stream(2 * case as u64 + 1);
        let mix = random_mixture(vocab, (0.05, 0.95), &mut model_rng)?;
        let b = random_behavior(vocab, &mut behavior_rng)?;
        let mx = mix.as_mixture()?;
        let mut ratio_ok = true;
        let mut gap_ok = true;
        let mut cap_ok = true;
        for prefix in all_prefixes(vocab, 2) {
            let bounds = lemma_bounds(&mix, &prefix)?;
            let mix_row = mix.next_dist(&prefix)?;
            let neg_row = mx.negative().next_dist(&prefix)?;
            let mut deviation = 0.0f64;
            for y in 0..vocab {
                if neg_row.prob(y) > 0.0 {
                    deviation = deviation.max((mix_row.prob(y) / neg_row.prob(y) - 1.0).abs());
                }
            }
            ratio_ok &= deviation <= bounds.ratio_bound + VERIFY_TOL;
            let gap = (behavior_expectation_exact(&mix, &prefix, &b)?
                - behavior_expectation_exact(mx.negative(), &prefix, &b)?)
            .abs();
            gap_ok &= gap <= bounds.behavior_gap_bound + VERIFY_TOL;
            let kl = conditional_kl_exact(mx.negative(), &mix, &prefix)?.nats;
            cap_ok &= kl <= -mix.posterior_weight(&prefix)?.ln() + VERIFY_TOL;
        }
        ratio_dev_pass += usize::from(ratio_ok);
        behavior_gap_pass += usize::from(gap_ok);
        kl_cap_pass += usize::from(cap_ok);
    }
    let disjoint_alphas = [0.5, 0.25, 1e-3];
    let mut disjoint_pass = 0usize;
    for alpha in disjoint_alphas {
        let mix = disjoint_mixture(2, alpha)?;
        let mx = mix.as_mixture()?;
        let kl = conditional_kl_exact(mx.negative(), &mix, &[])?.nats;
        disjoint_pass += usize::from((kl - (1.0 / alpha).ln()).abs() <= VERIFY_TOL);
    }
    let summary = format!(
        "verify: ratio-dev {ratio_dev_pass}/{trials} behavior-gap {behavior_gap_pass}/{trials} \
         kl-cap {kl_cap_pass}/{trials} disjoint-kl {disjoint_pass}/{} seed={seed}",
        disjoint_alphas.len()
    );
    let all_pass = ratio_dev_pass == trials
        && behavior_gap_pass == trials
        && kl_cap_pass == trials
        && disjoint_pass == disjoint_alphas.len();
    if !all_pass {
        bail!("verification failed: {summary}");
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn run_synth(
    vocab: usize,
    alpha: f64,
    gamma: f64,
    beta: f64,
    seed: u64,
    out: &Path,
) -> Result<String> {
    let desk = DeskSpec {
        vocab_size: vocab,
        alpha,
        gamma,
        target_beta: beta,
    };
    let report = make_desk_model(&desk, &RngSpec::new(seed))?;
    let hash = ConfigHash::new("synth")
        .knob("vocab", vocab)
        .knob("alpha", alpha)
        .knob("gamma", gamma)
        .knob("beta", beta)
        .knob("seed", seed)
        .finish();
    save_model(out, &report.spec, Some(&hash))?;
    let cert = &report.abg.beta_certified;
    Ok(format!(
        "synth: vocab={vocab} alpha={} gamma={} beta-target={} beta-certified=[{},{}] \
         gamma-sup={} attempts={} seed={seed} out={}",
        fmt_g(alpha),
        fmt_g(gamma),
        fmt_g(beta),
        fmt_g(cert.min),
        fmt_g(cert.max),
        fmt_g(report.abg.gamma.sup),
        report.attempts,
        out.display()
    ))
}

// ---------------------------------------------------------------------------
// shared smoke tests
// ---------------------------------------------------------------------------
