//! Shared fixtures for the benchmarks.

use qsd_core::{DecodeState, ModelConfig, ProbVector, SyntheticModels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dirichlet(1)-distributed probability vectors.
pub fn random_probs(vocab: usize, count: usize, seed: u64) -> Vec<ProbVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let w: Vec<f64> = (0..vocab).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
            ProbVector::from_weights(w).expect("positive weights")
        })
        .collect()
}

pub fn models(vocab: u32) -> SyntheticModels {
    SyntheticModels::new(ModelConfig {
        vocab_size: vocab,
        ..ModelConfig::default()
    })
    .expect("valid model config")
}

pub fn prompt(vocab: u32, len: usize, seed: u64) -> DecodeState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DecodeState::new((0..len).map(|_| rng.gen_range(1..vocab)).collect())
}
