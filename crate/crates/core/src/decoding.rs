//! Logit filtering and sampling: greedy, top-k, nucleus, temperature, the
//! self-debiasing reweighting, and the sequence decoder with its stopping
//! rules.
//!
//! Determinism contract: sorting ties break toward the lower token id,
//! temperature applies before the strategy filter, and sampling is
//! inverse-CDF over ascending token ids, so a fixed rng stream fully
//! determines a decode.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lm::{LmBackend, LogitVector, TokenId};

/// Strategy for turning a next-token distribution into a choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Greedy,
    TopK { k: usize },
    Nucleus { p: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::TopK { .. } => "top-k",
            Strategy::Nucleus { .. } => "nucleus",
        }
    }
}

/// Self-debiasing configuration: one alternative prompt per non-target
/// label plus the decay constant applied to tokens the alternatives prefer.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasParams {
    pub lambda: f64,
    pub prompts: Vec<Vec<TokenId>>,
}

/// Decoding configuration. Only the fields of the chosen strategy are
/// consulted; nucleus with p = 0.9 and temperature 1.0 are the defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeParams {
    pub strategy: Strategy,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub debias: Option<DebiasParams>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            strategy: Strategy::Nucleus { p: 0.9 },
            temperature: 1.0,
            max_new_tokens: 64,
            debias: None,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            Strategy::Greedy => {}
            Strategy::TopK { k } => {
                if k < 1 {
                    return Err(Error::InvalidK);
                }
            }
            Strategy::Nucleus { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidP(p));
                }
            }
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        if let Some(debias) = &self.debias {
            if debias.lambda.is_nan() || debias.lambda < 0.0 {
                return Err(Error::InvalidLambda(debias.lambda));
            }
        }
        Ok(())
    }
}

/// Why a decode stopped. When several conditions coincide the precedence is
/// quote over EOS over max-length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Quote,
    Eos,
    MaxLength,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Quote => "quote",
            StopReason::Eos => "eos",
            StopReason::MaxLength => "max-length",
        }
    }
}

/// Full per-step record of one generation. The stop token itself is
/// excluded from `generated`; `step_probs` holds each chosen token's
/// probability under the final filtered distribution it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTrace {
    pub prompt: Vec<TokenId>,
    pub generated: Vec<TokenId>,
    pub step_probs: Vec<f64>,
    pub stop: StopReason,
}

/// Divide every log-probability by `t` and renormalize.
pub fn apply_temperature(logits: &LogitVector, t: f64) -> Result<LogitVector> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidTemperature(t));
    }
    Ok(LogitVector::from_log_scores(
        logits.values().iter().map(|v| v / t).collect(),
    ))
}

/// Token ids sorted by descending probability, ties toward the lower id.
fn sorted_by_prob(logits: &LogitVector) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..logits.len()).collect();
    ids.sort_by(|&a, &b| {
        logits.values()[b]
            .partial_cmp(&logits.values()[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    ids
}

fn keep_only(logits: &LogitVector, keep: &[usize]) -> LogitVector {
    let mut values = vec![f64::NEG_INFINITY; logits.len()];
    for &id in keep {
        values[id] = logits.values()[id];
    }
    LogitVector::from_log_scores(values)
}

/// Keep the k most probable tokens and renormalize; ties at the k-th rank
/// go to the lower token id.
pub fn filter_top_k(logits: &LogitVector, k: usize) -> Result<LogitVector> {
    if k < 1 {
        return Err(Error::InvalidK);
    }
    if k >= logits.len() {
        return Ok(LogitVector::from_log_scores(logits.values().to_vec()));
    }
    let order = sorted_by_prob(logits);
    Ok(keep_only(logits, &order[..k]))
}

/// Keep the smallest probability-sorted prefix whose cumulative mass
/// reaches `p`, then renormalize the survivors.
pub fn filter_nucleus(logits: &LogitVector, p: f64) -> Result<LogitVector> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidP(p));
    }
    let order = sorted_by_prob(logits);
    let mut keep = Vec::new();
    let mut cum = 0.0;
    for id in order {
        let prob = logits.values()[id].exp();
        if prob <= 0.0 {
            break;
        }
        keep.push(id);
        cum += prob;
        if cum >= p {
            break;
        }
    }
    if keep.is_empty() {
        return Err(Error::DegenerateDistribution);
    }
    Ok(keep_only(logits, &keep))
}

/// Downweight tokens that any competing distribution prefers: with
/// Δ(w) = p_target(w) − max_b p_b(w), tokens with Δ < 0 are scaled by
/// exp(λ·Δ) before renormalizing.
pub fn debias_logits(
    target: &LogitVector,
    biased: &[LogitVector],
    lambda: f64,
) -> Result<LogitVector> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidLambda(lambda));
    }
    for b in biased {
        if b.len() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: target.len(),
                got: b.len(),
            });
        }
    }
    let values = (0..target.len())
        .map(|w| {
            let p_target = target.values()[w].exp();
            let p_biased = biased
                .iter()
                .map(|b| b.values()[w].exp())
                .fold(f64::NEG_INFINITY, f64::max);
            let delta = p_target - p_biased;
            if delta >= 0.0 || p_target <= 0.0 {
                target.values()[w]
            } else {
                // ln(alpha * p_target) with alpha = exp(lambda * delta)
                target.values()[w] + lambda * delta
            }
        })
        .collect();
    Ok(LogitVector::from_log_scores(values))
}

/// Inverse-CDF draw over ascending token ids from a normalized
/// distribution.
pub fn sample_token(dist: &LogitVector, rng: &mut impl Rng) -> Result<TokenId> {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive: Option<TokenId> = None;
    for (id, &v) in dist.values().iter().enumerate() {
        let prob = v.exp();
        if prob <= 0.0 {
            continue;
        }
        last_positive = Some(id as TokenId);
        cum += prob;
        if u < cum {
            return Ok(id as TokenId);
        }
    }
    // rounding left u above the accumulated mass
    last_positive.ok_or(Error::DegenerateDistribution)
}

/// Decode a continuation of `prompt`, stopping at the quotation-mark token
/// (when the prompt opened a quote), at EOS, or at the token budget. The
/// stop token is excluded from the generated text and recorded in the stop
/// reason instead.
pub fn decode_sequence(
    backend: &dyn LmBackend,
    prompt: &[TokenId],
    params: &DecodeParams,
    stop_on_quote: bool,
    rng: &mut impl Rng,
) -> Result<GenerationTrace> {
    params.validate()?;
    let vocab = backend.vocab();
    vocab.check_ids(prompt)?;
    let quote = vocab.quote();
    let eos = vocab.eos();

    let mut ctx = prompt.to_vec();
    let mut generated = Vec::new();
    let mut step_probs = Vec::new();
    let mut stop = StopReason::MaxLength;

    for _ in 0..params.max_new_tokens {
        let mut logits = backend.next_token_logits(&ctx)?;
        if let Some(debias) = &params.debias {
            let mut biased = Vec::with_capacity(debias.prompts.len());
            for alt_prompt in &debias.prompts {
                let mut alt_ctx = alt_prompt.clone();
                alt_ctx.extend_from_slice(&generated);
                biased.push(backend.next_token_logits(&alt_ctx)?);
            }
            logits = debias_logits(&logits, &biased, debias.lambda)?;
        }
        let logits = apply_temperature(&logits, params.temperature)?;
        let dist = match params.strategy {
            Strategy::Greedy => filter_top_k(&logits, 1)?,
            Strategy::TopK { k } => filter_top_k(&logits, k)?,
            Strategy::Nucleus { p } => filter_nucleus(&logits, p)?,
        };
        let token = match params.strategy {
            Strategy::Greedy => dist.argmax(),
            _ => sample_token(&dist, rng)?,
        };
        if stop_on_quote && token == quote {
            stop = StopReason::Quote;
            break;
        }
        if token == eos {
            stop = StopReason::Eos;
            break;
        }
        step_probs.push(dist.prob(token));
        generated.push(token);
        ctx.push(token);
    }

    Ok(GenerationTrace {
        prompt: prompt.to_vec(),
        generated,
        step_probs,
        stop,
    })
}
