//! One round of edge-cloud speculative decoding.
//!
//! The edge drafts `L` tokens with the SLM, quantizing each draft
//! distribution onto `Q_ℓ`. Under quantize-sample ([`DraftMode::QuantizeSample`])
//! the token is drawn from the quantized distribution itself; under
//! sample-quantize it is drawn from the raw distribution and only the
//! transmitted copy is quantized. The cloud sees token ids and lattice points
//! only ([`Uplink`]), verifies left to right with `min(1, p/q̂)`, and on the
//! first rejection resamples from `max(0, p - q̂)` normalized. If every draft
//! survives, a bonus token is drawn from `p_{L+1}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{quantize, LatticePoint};
use crate::lm::{DecodeState, ModelPair};
use crate::policy::Action;
use crate::prob::{ProbVector, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DraftMode {
    #[serde(rename = "qs")]
    QuantizeSample,
    #[serde(rename = "sq")]
    SampleQuantize,
}

impl DraftMode {
    pub fn label(self) -> &'static str {
        match self {
            DraftMode::QuantizeSample => "qs",
            DraftMode::SampleQuantize => "sq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraftBlock {
    tokens: Vec<Token>,
    quantized: Vec<LatticePoint>,
    raw: Vec<ProbVector>,
    mode: DraftMode,
}

impl DraftBlock {
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn quantized(&self) -> &[LatticePoint] {
        &self.quantized
    }

    /// The SLM distributions before quantization. Never sent to the cloud.
    pub fn raw(&self) -> &[ProbVector] {
        &self.raw
    }

    pub fn mode(&self) -> DraftMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn uplink(&self) -> Uplink<'_> {
        Uplink {
            tokens: &self.tokens,
            quantized: &self.quantized,
            mode: self.mode,
        }
    }
}

/// What the cloud receives: draft ids and their quantized distributions.
#[derive(Debug, Clone, Copy)]
pub struct Uplink<'a> {
    pub tokens: &'a [Token],
    pub quantized: &'a [LatticePoint],
    pub mode: DraftMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    /// `α_l` for every drafted position, including those after the first
    /// rejection.
    pub accept_probs: Vec<f64>,
    pub accepted: usize,
    /// Resampled token on rejection, bonus token otherwise.
    pub server_token: Token,
    pub resample_dist: ProbVector,
    /// `p_1 .. p_{L+1}`.
    pub llm_dists: Vec<ProbVector>,
    pub zero_quantized_events: u32,
}

/// Draws exactly from `o / ℓ` with integer arithmetic.
fn sample_lattice<R: Rng + ?Sized>(point: &LatticePoint, rng: &mut R) -> Token {
    let mut u = rng.gen_range(0..point.ell());
    for (i, &c) in point.counts().iter().enumerate() {
        if u < c {
            return i as Token;
        }
        u -= c;
    }
    unreachable!("lattice numerators sum to ell")
}

pub fn draft<M: ModelPair + ?Sized, R: Rng + ?Sized>(
    models: &M,
    state: &DecodeState,
    draft_len: u32,
    ell: u32,
    mode: DraftMode,
    rng: &mut R,
) -> Result<DraftBlock> {
    if draft_len == 0 {
        return Err(Error::Config("draft length must be at least 1".into()));
    }
    let n = draft_len as usize;
    let mut context = state.prefix().to_vec();
    let mut block = DraftBlock {
        tokens: Vec::with_capacity(n),
        quantized: Vec::with_capacity(n),
        raw: Vec::with_capacity(n),
        mode,
    };
    for _ in 0..n {
        let q = models.slm_dist(&context)?;
        let q_hat = quantize(&q, ell)?;
        let token = match mode {
            DraftMode::QuantizeSample => sample_lattice(&q_hat, rng),
            DraftMode::SampleQuantize => q.sample(rng),
        };
        context.push(token);
        block.tokens.push(token);
        block.quantized.push(q_hat);
        block.raw.push(q);
    }
    Ok(block)
}

/// `min(1, p / q̂)` for a drafted token.
///
/// A zero `q̂` cannot occur under quantize-sample and is reported as an
/// error. Under sample-quantize it can; the token is accepted iff the
/// target assigns it positive mass.
pub fn accept_prob(p_tok: f64, q_hat_tok: f64, mode: DraftMode) -> Result<f64> {
    if q_hat_tok > 0.0 {
        return Ok((p_tok / q_hat_tok).min(1.0));
    }
    match mode {
        DraftMode::QuantizeSample => Err(Error::ZeroQuantizedDraft { token: u32::MAX }),
        DraftMode::SampleQuantize => Ok(if p_tok > 0.0 { 1.0 } else { 0.0 }),
    }
}

/// `max(0, p - q̂)` normalized.
pub fn residual_dist(p: &ProbVector, q_hat: &ProbVector) -> Result<ProbVector> {
    let weights: Vec<f64> = p
        .as_slice()
        .iter()
        .zip(q_hat.as_slice())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::ResidualUndefined);
    }
    ProbVector::from_weights(weights)
}

/// Residual used after a rejection. Under sample-quantize a rejection can
/// happen even when `p == q̂` (a zero-`q̂` draft with zero target mass); the
/// target distribution itself is used then.
pub(crate) fn rejection_dist(p: &ProbVector, q_hat: &ProbVector, mode: DraftMode) -> Result<ProbVector> {
    match (residual_dist(p, q_hat), mode) {
        (Err(Error::ResidualUndefined), DraftMode::SampleQuantize) => Ok(p.clone()),
        (other, _) => other,
    }
}

pub fn verify<M: ModelPair + ?Sized, R: Rng + ?Sized>(
    models: &M,
    state: &DecodeState,
    uplink: Uplink<'_>,
    rng: &mut R,
) -> Result<VerifyOutcome> {
    let n = uplink.tokens.len();
    if n == 0 || uplink.quantized.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n.max(1),
            got: uplink.quantized.len(),
        });
    }
    models.vocab().check(uplink.tokens)?;

    let mut context = state.prefix().to_vec();
    let mut llm_dists = Vec::with_capacity(n + 1);
    for l in 0..=n {
        llm_dists.push(models.llm_dist(&context)?);
        if l < n {
            context.push(uplink.tokens[l]);
        }
    }

    let mut accept_probs = Vec::with_capacity(n);
    let mut zero_quantized_events = 0;
    for (l, (&x, q_hat)) in uplink.tokens.iter().zip(uplink.quantized).enumerate() {
        let q_hat_x = q_hat.prob(x as usize);
        if q_hat_x == 0.0 {
            zero_quantized_events += 1;
        }
        let alpha = accept_prob(llm_dists[l].get(x), q_hat_x, uplink.mode).map_err(|e| match e {
            Error::ZeroQuantizedDraft { .. } => Error::ZeroQuantizedDraft { token: x },
            other => other,
        })?;
        accept_probs.push(alpha);
    }

    let mut accepted = n;
    for (l, &alpha) in accept_probs.iter().enumerate() {
        if rng.gen::<f64>() >= alpha {
            accepted = l;
            break;
        }
    }
    let resample_dist = if accepted < n {
        rejection_dist(
            &llm_dists[accepted],
            &uplink.quantized[accepted].dequantize(),
            uplink.mode,
        )?
    } else {
        llm_dists[n].clone()
    };
    let server_token = resample_dist.sample(rng);

    Ok(VerifyOutcome {
        accept_probs,
        accepted,
        server_token,
        resample_dist,
        llm_dists,
        zero_quantized_events,
    })
}

/// Result of [`step`] apart from the new decode state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub draft_len: u32,
    pub ell: u32,
    pub accepted: u32,
    pub accept_probs: Vec<f64>,
    pub appended: Vec<Token>,
    pub appended_entropies: Vec<f64>,
    pub zero_quantized_events: u32,
}

/// Draft, verify and append `x_1..x_N` plus the server token.
pub fn step<M: ModelPair + ?Sized, R: Rng + ?Sized>(
    models: &M,
    state: &DecodeState,
    action: &Action,
    mode: DraftMode,
    rng: &mut R,
) -> Result<(DecodeState, StepOutcome)> {
    let block = draft(models, state, action.draft_len, action.ell, mode, rng)?;
    let outcome = verify(models, state, block.uplink(), rng)?;
    let n = outcome.accepted;

    let mut appended = block.tokens()[..n].to_vec();
    appended.push(outcome.server_token);

    let mut confidences: Vec<f64> = (0..n).map(|l| block.raw()[l].get(block.tokens()[l])).collect();
    let server_conf = if n < block.len() {
        block.raw()[n].get(outcome.server_token)
    } else {
        models.slm_next(state, block.tokens())?.get(outcome.server_token)
    };
    confidences.push(server_conf);

    let appended_entropies = outcome.llm_dists[..=n].iter().map(ProbVector::entropy).collect();
    let next = state.append_confidences(&appended, &confidences);
    Ok((
        next,
        StepOutcome {
            draft_len: action.draft_len,
            ell: action.ell,
            accepted: n as u32,
            accept_probs: outcome.accept_probs,
            appended,
            appended_entropies,
            zero_quantized_events: outcome.zero_quantized_events,
        },
    ))
}
