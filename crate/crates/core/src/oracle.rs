//! Exact output distribution of one protocol round by enumeration.
//!
//! Every draft sequence is weighted by its drafting probability and every
//! accept/reject branch by its acceptance probability, with no sampling.
//! Used to check that quantize-sample drafting reproduces the target model
//! exactly and to exhibit the bias of sample-quantize drafting.

use std::collections::BTreeMap;

use crate::engine::{accept_prob, rejection_dist, DraftMode};
use crate::error::{Error, Result};
use crate::lattice::quantize;
use crate::lm::{DecodeState, ModelPair};
use crate::prob::{ProbVector, Token};

/// Largest number of draft sequences (`V^L`) the oracle will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Distribution over the token block appended by one round.
pub type BlockDist = BTreeMap<Vec<Token>, f64>;

struct Enumerator<'a, M: ?Sized> {
    models: &'a M,
    draft_len: usize,
    ell: u32,
    mode: DraftMode,
    out: BlockDist,
}

impl<M: ModelPair + ?Sized> Enumerator<'_, M> {
    fn emit(&mut self, accepted: &[Token], dist: &ProbVector, mass: f64) {
        for (y, &p) in dist.as_slice().iter().enumerate() {
            if p > 0.0 {
                let mut block = accepted.to_vec();
                block.push(y as Token);
                *self.out.entry(block).or_insert(0.0) += mass * p;
            }
        }
    }

    /// `mass` is the probability of having drafted and accepted `accepted`.
    fn descend(&mut self, context: &mut Vec<Token>, accepted: &mut Vec<Token>, mass: f64) -> Result<()> {
        let p = self.models.llm_dist(context)?;
        if accepted.len() == self.draft_len {
            self.emit(accepted, &p, mass);
            return Ok(());
        }
        let q = self.models.slm_dist(context)?;
        let q_hat = quantize(&q, self.ell)?.dequantize();
        let drafting = match self.mode {
            DraftMode::QuantizeSample => &q_hat,
            DraftMode::SampleQuantize => &q,
        };

        let mut rejected = 0.0;
        for (x, &dx) in drafting.as_slice().iter().enumerate() {
            if dx == 0.0 {
                continue;
            }
            let x = x as Token;
            let w = mass * dx;
            let alpha = accept_prob(p.get(x), q_hat.get(x), self.mode)?;
            rejected += w * (1.0 - alpha);
            if alpha > 0.0 {
                context.push(x);
                accepted.push(x);
                self.descend(context, accepted, w * alpha)?;
                accepted.pop();
                context.pop();
            }
        }
        if rejected > 0.0 {
            let residual = rejection_dist(&p, &q_hat, self.mode)?;
            self.emit(accepted, &residual, rejected);
        }
        Ok(())
    }
}

/// Exact distribution of the appended block `x_1..x_N, x̃`.
pub fn exact_block_dist<M: ModelPair + ?Sized>(
    models: &M,
    state: &DecodeState,
    draft_len: u32,
    ell: u32,
    mode: DraftMode,
) -> Result<BlockDist> {
    if draft_len == 0 {
        return Err(Error::Config("draft length must be at least 1".into()));
    }
    let vocab = models.vocab().size() as u128;
    let size = vocab.checked_pow(draft_len).unwrap_or(u128::MAX);
    if size > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut e = Enumerator {
        models,
        draft_len: draft_len as usize,
        ell,
        mode,
        out: BlockDist::new(),
    };
    e.descend(&mut state.prefix().to_vec(), &mut Vec::new(), 1.0)?;
    Ok(e.out)
}

fn marginal_first(blocks: &BlockDist, vocab: usize) -> Vec<f64> {
    let mut first = vec![0.0; vocab];
    for (block, &p) in blocks {
        first[block[0] as usize] += p;
    }
    first
}

/// Exact marginal of the first token appended to the prefix.
pub fn exact_first_token_dist<M: ModelPair + ?Sized>(
    models: &M,
    state: &DecodeState,
    draft_len: u32,
    ell: u32,
    mode: DraftMode,
) -> Result<ProbVector> {
    let blocks = exact_block_dist(models, state, draft_len, ell, mode)?;
    let first = marginal_first(&blocks, models.vocab().size() as usize);
    Ok(ProbVector::from_raw(first))
}

/// Exact distribution of the second generated token given that the first
/// was `first`. When the round ends after `first`, the next round (same
/// draft length and resolution) supplies the second token.
pub fn exact_second_token_dist<M: ModelPair + ?Sized>(
    models: &M,
    state: &DecodeState,
    draft_len: u32,
    ell: u32,
    mode: DraftMode,
    first: Token,
) -> Result<ProbVector> {
    let vocab = models.vocab().size() as usize;
    let blocks = exact_block_dist(models, state, draft_len, ell, mode)?;
    let mut joint = vec![0.0; vocab];
    let mut ended = 0.0;
    for (block, &p) in blocks.iter().filter(|(b, _)| b[0] == first) {
        match block.get(1) {
            Some(&second) => joint[second as usize] += p,
            None => ended += p,
        }
    }
    if ended > 0.0 {
        let extended = state.append_confidences(&[first], &[0.0]);
        let next = exact_first_token_dist(models, &extended, draft_len, ell, mode)?;
        for (j, n) in joint.iter_mut().zip(next.as_slice()) {
            *j += ended * n;
        }
    }
    ProbVector::from_weights(joint)
}

/// Exact `E[tokens appended]` for one round.
pub fn exact_expected_appended<M: ModelPair + ?Sized>(
    models: &M,
    state: &DecodeState,
    draft_len: u32,
    ell: u32,
    mode: DraftMode,
) -> Result<f64> {
    let blocks = exact_block_dist(models, state, draft_len, ell, mode)?;
    Ok(blocks.iter().map(|(b, p)| b.len() as f64 * p).sum())
}
