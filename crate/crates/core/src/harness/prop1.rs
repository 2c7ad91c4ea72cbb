//! Exactness sweep of quantize-sample drafting over a small-vocabulary grid,
//! with sample-quantize alongside for contrast.

use std::time::Instant;

use crate::engine::DraftMode;
use crate::error::Result;
use crate::lm::{DecodeState, ModelConfig, ModelPair, SyntheticModels};
use crate::oracle::{exact_first_token_dist, exact_second_token_dist};
use crate::rng::{stream_rng, Stream};

use rand::Rng;

pub const GRID_VOCAB: u32 = 4;
pub const GRID_DRAFT_LENS: [u32; 3] = [1, 2, 3];
pub const GRID_ELLS: [u32; 3] = [1, 2, 4];
pub const GRID_PERTURBATIONS: [f64; 2] = [0.3, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Row {
    pub seed: u64,
    pub prefix: Vec<u32>,
    pub draft_len: u32,
    pub ell: u32,
    pub perturbation: f64,
    /// Max elementwise gap between the first-token law and the target.
    pub qs_first_dev: f64,
    /// Same for the second token, over every first token of positive mass.
    pub qs_second_dev: f64,
    pub qs_tv: f64,
    pub sq_tv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub rows: Vec<Prop1Row>,
    pub max_first_dev: f64,
    pub max_second_dev: f64,
    pub elapsed_s: f64,
}

impl Prop1Report {
    pub fn max_deviation(&self) -> f64 {
        self.max_first_dev.max(self.max_second_dev)
    }

    /// The `ℓ = 1` row with the largest sample-quantize bias.
    pub fn worst_sq_at_ell1(&self) -> Option<&Prop1Row> {
        self.rows
            .iter()
            .filter(|r| r.ell == 1)
            .max_by(|a, b| a.sq_tv.total_cmp(&b.sq_tv))
    }
}

fn row(base: &ModelConfig, seed: u64, draft_len: u32, ell: u32, eps: f64) -> Result<Prop1Row> {
    let models = SyntheticModels::new(ModelConfig {
        seed: base.seed.wrapping_add(seed),
        slm_perturbation: eps,
        vocab_size: GRID_VOCAB,
        eos_id: 0,
        eos_logit_offset: 0.0,
        ..base.clone()
    })?;
    let mut rng = stream_rng(seed, Stream::Prompt);
    let prefix: Vec<u32> = (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..GRID_VOCAB)).collect();
    let state = DecodeState::new(prefix.clone());
    let target = models.llm_dist(&prefix)?;

    let qs = exact_first_token_dist(&models, &state, draft_len, ell, DraftMode::QuantizeSample)?;
    let sq = exact_first_token_dist(&models, &state, draft_len, ell, DraftMode::SampleQuantize)?;
    let mut second = 0.0f64;
    for x in 0..GRID_VOCAB {
        if qs.get(x) <= 0.0 {
            continue;
        }
        let got = exact_second_token_dist(&models, &state, draft_len, ell, DraftMode::QuantizeSample, x)?;
        let mut ctx = prefix.clone();
        ctx.push(x);
        second = second.max(got.max_abs_diff(&models.llm_dist(&ctx)?));
    }
    Ok(Prop1Row {
        seed,
        prefix,
        draft_len,
        ell,
        perturbation: eps,
        qs_first_dev: qs.max_abs_diff(&target),
        qs_second_dev: second,
        qs_tv: qs.total_variation(&target),
        sq_tv: sq.total_variation(&target),
    })
}

/// Runs the grid `seeds × L × ℓ × ε`. The model seed is offset by the grid
/// seed and the prefix (length 0 to 3) is drawn from it.
pub fn verify_prop1(base: &ModelConfig, seeds: &[u64]) -> Result<Prop1Report> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for &seed in seeds {
        for l in GRID_DRAFT_LENS {
            for ell in GRID_ELLS {
                for eps in GRID_PERTURBATIONS {
                    rows.push(row(base, seed, l, ell, eps)?);
                }
            }
        }
    }
    let max_first_dev = rows.iter().map(|r| r.qs_first_dev).fold(0.0, f64::max);
    let max_second_dev = rows.iter().map(|r| r.qs_second_dev).fold(0.0, f64::max);
    Ok(Prop1Report {
        rows,
        max_first_dev,
        max_second_dev,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
