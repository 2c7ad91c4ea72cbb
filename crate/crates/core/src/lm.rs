//! Synthetic draft (SLM) and target (LLM) language models.
//!
//! Both models map a token context to a next-token distribution through
//! hash-derived logits, so any prefix can be evaluated exactly and
//! reproducibly. The SLM sees the LLM's logits plus an independent
//! hash-derived perturbation scaled by `slm_perturbation`; at zero the two
//! models coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{ProbVector, Token};

/// Vocabulary size and end-of-sequence id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabSpec {
    size: u32,
    eos_id: Token,
}

impl VocabSpec {
    pub fn new(size: u32, eos_id: Token) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config(format!("vocabulary size {size} < 2")));
        }
        if eos_id >= size {
            return Err(Error::TokenOutOfRange { token: eos_id, vocab: size });
        }
        Ok(Self { size, eos_id })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn eos_id(&self) -> Token {
        self.eos_id
    }

    /// Bits to send one token id losslessly, `ceil(log2 V)`.
    pub fn token_bits(&self) -> u32 {
        crate::timing::ceil_log2(self.size as u64)
    }

    pub fn check(&self, tokens: &[Token]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.size) {
            Some(&token) => Err(Error::TokenOutOfRange { token, vocab: self.size }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub seed: u64,
    pub temperature: f64,
    /// SLM/LLM divergence in `[0, 1]`.
    pub slm_perturbation: f64,
    pub logit_scale: f64,
    /// Added to the end-of-sequence logit before scaling; negative values
    /// lengthen episodes.
    pub eos_logit_offset: f64,
    /// Log-scale spread of a per-prompt sharpness factor keyed on the first
    /// context token; 0 makes every context equally hard.
    pub difficulty_spread: f64,
    pub vocab_size: u32,
    pub eos_id: Token,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            temperature: 1.0,
            slm_perturbation: 0.3,
            logit_scale: 3.0,
            eos_logit_offset: 0.0,
            difficulty_spread: 1.0,
            vocab_size: 256,
            eos_id: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<VocabSpec> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.slm_perturbation) {
            return Err(Error::Config(format!(
                "slm_perturbation {} outside [0, 1]",
                self.slm_perturbation
            )));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return Err(Error::Config(format!("logit_scale {} must be positive", self.logit_scale)));
        }
        if !(self.difficulty_spread >= 0.0 && self.difficulty_spread.is_finite()) {
            return Err(Error::Config(format!(
                "difficulty_spread {} must be non-negative",
                self.difficulty_spread
            )));
        }
        VocabSpec::new(self.vocab_size, self.eos_id)
    }
}

/// Prompt plus generated tokens, with the SLM confidence of every generated
/// token.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState {
    prefix: Vec<Token>,
    prompt_len: usize,
    confidences: Vec<f64>,
}

impl DecodeState {
    pub fn new(prompt: Vec<Token>) -> Self {
        let prompt_len = prompt.len();
        Self {
            prefix: prompt,
            prompt_len,
            confidences: Vec::new(),
        }
    }

    pub fn prefix(&self) -> &[Token] {
        &self.prefix
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    pub fn generated(&self) -> usize {
        self.prefix.len() - self.prompt_len
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn contains(&self, token: Token) -> bool {
        self.prefix.contains(&token)
    }

    /// Appends tokens with their SLM probabilities.
    pub fn append_confidences(&self, tokens: &[Token], slm_probs: &[f64]) -> Self {
        assert_eq!(tokens.len(), slm_probs.len(), "token/confidence length mismatch");
        debug_assert!(slm_probs.iter().all(|f| (0.0..=1.0).contains(f)));
        let mut next = self.clone();
        next.prefix.extend_from_slice(tokens);
        next.confidences.extend_from_slice(slm_probs);
        next
    }
}

/// A draft/target model pair sharing one vocabulary.
pub trait ModelPair {
    fn vocab(&self) -> VocabSpec;

    /// Target-model next-token distribution given the full context.
    fn llm_dist(&self, context: &[Token]) -> Result<ProbVector>;

    /// Draft-model next-token distribution given the full context.
    fn slm_dist(&self, context: &[Token]) -> Result<ProbVector>;

    fn llm_next(&self, state: &DecodeState, extra: &[Token]) -> Result<ProbVector> {
        self.llm_dist(&joined(state.prefix(), extra))
    }

    fn slm_next(&self, state: &DecodeState, extra: &[Token]) -> Result<ProbVector> {
        self.slm_dist(&joined(state.prefix(), extra))
    }
}

fn joined(prefix: &[Token], extra: &[Token]) -> Vec<Token> {
    let mut ctx = Vec::with_capacity(prefix.len() + extra.len());
    ctx.extend_from_slice(prefix);
    ctx.extend_from_slice(extra);
    ctx
}

#[derive(Debug, Clone)]
pub struct SyntheticModels {
    vocab: VocabSpec,
    cfg: ModelConfig,
}

const LOGIT_SALT: u64 = 0x243f_6a88_85a3_08d3;
const PERTURB_SALT: u64 = 0x1319_8a2e_0370_7344;
const DIFFICULTY_SALT: u64 = 0xa409_3822_299f_31d0;

impl SyntheticModels {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let vocab = cfg.validate()?;
        Ok(Self { vocab, cfg })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn context_hash(&self, context: &[Token]) -> Result<u64> {
        self.vocab.check(context)?;
        let mut h = mix64(self.cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        for &t in context {
            h = mix64(h ^ (t as u64).wrapping_add(0x632b_e59b_d9b4_e019));
        }
        // Length is folded in so that contexts differing only by trailing
        // structure cannot collide trivially.
        Ok(mix64(h ^ context.len() as u64))
    }

    /// Logit scale for contexts opening with `context[0]`.
    fn scale(&self, context: &[Token]) -> f64 {
        match context.first() {
            Some(&t) if self.cfg.difficulty_spread > 0.0 => {
                let z = std_normal(mix64(self.cfg.seed ^ DIFFICULTY_SALT), t as u64, DIFFICULTY_SALT);
                self.cfg.logit_scale * (self.cfg.difficulty_spread * z).exp()
            }
            _ => self.cfg.logit_scale,
        }
    }

    fn logits(&self, ctx_hash: u64, scale: f64, perturbation: f64) -> Vec<f64> {
        (0..self.vocab.size() as u64)
            .map(|v| {
                let mut z = std_normal(ctx_hash, v, LOGIT_SALT);
                if perturbation != 0.0 {
                    z += perturbation * std_normal(ctx_hash, v, PERTURB_SALT);
                }
                if v == self.vocab.eos_id() as u64 {
                    z += self.cfg.eos_logit_offset;
                }
                scale * z
            })
            .collect()
    }
}

impl ModelPair for SyntheticModels {
    fn vocab(&self) -> VocabSpec {
        self.vocab
    }

    fn llm_dist(&self, context: &[Token]) -> Result<ProbVector> {
        let h = self.context_hash(context)?;
        Ok(ProbVector::softmax(
            &self.logits(h, self.scale(context), 0.0),
            self.cfg.temperature,
        ))
    }

    fn slm_dist(&self, context: &[Token]) -> Result<ProbVector> {
        let h = self.context_hash(context)?;
        Ok(ProbVector::softmax(
            &self.logits(h, self.scale(context), self.cfg.slm_perturbation),
            self.cfg.temperature,
        ))
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit_open(bits: u64) -> f64 {
    // (0, 1): never exactly zero so the logarithm below stays finite.
    ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Box-Muller standard normal keyed by (context, vocabulary entry, salt).
fn std_normal(ctx_hash: u64, v: u64, salt: u64) -> f64 {
    let a = mix64(ctx_hash ^ mix64(v ^ salt));
    let b = mix64(a ^ salt.rotate_left(17));
    let u1 = unit_open(a);
    let u2 = unit_open(b);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models(eps: f64, temperature: f64, vocab: u32) -> SyntheticModels {
        SyntheticModels::new(ModelConfig {
            seed: 11,
            temperature,
            slm_perturbation: eps,
            vocab_size: vocab,
            difficulty_spread: 0.0,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn vocab_token_bits() {
        assert_eq!(VocabSpec::new(1024, 0).unwrap().token_bits(), 10);
        assert_eq!(VocabSpec::new(1000, 0).unwrap().token_bits(), 10);
        assert_eq!(VocabSpec::new(2, 1).unwrap().token_bits(), 1);
        assert!(VocabSpec::new(1, 0).is_err());
        assert!(VocabSpec::new(4, 4).is_err());
    }

    #[test]
    fn deterministic_and_bitwise_stable() {
        let m = models(0.5, 1.0, 16);
        let a = m.llm_dist(&[1, 2, 3]).unwrap();
        let b = m.llm_dist(&[1, 2, 3]).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_eq!(m.slm_dist(&[4]).unwrap(), m.slm_dist(&[4]).unwrap());
    }

    #[test]
    fn context_order_matters() {
        let m = models(0.5, 1.0, 16);
        assert_ne!(m.llm_dist(&[1, 2]).unwrap(), m.llm_dist(&[2, 1]).unwrap());
    }

    #[test]
    fn out_of_range_token_is_rejected() {
        let m = models(0.5, 1.0, 4);
        assert!(matches!(
            m.llm_dist(&[0, 4]),
            Err(Error::TokenOutOfRange { token: 4, vocab: 4 })
        ));
    }

    #[test]
    fn v4_output_is_normalized_and_matches_independent_softmax() {
        let m = models(0.0, 0.8, 4);
        let ctx = [3, 1, 2];
        let p = m.llm_dist(&ctx).unwrap();
        let sum: f64 = p.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.entropy() <= 4f64.ln() + 1e-15);

        // Independent softmax on the same logits without max shifting.
        let h = m.context_hash(&ctx).unwrap();
        let exps: Vec<f64> = m.logits(h, m.scale(&ctx), 0.0).iter().map(|l| (l / 0.8).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (a, e) in p.as_slice().iter().zip(&exps) {
            assert!((a - e / z).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_perturbation_makes_models_identical() {
        let m = models(0.0, 1.0, 32);
        for ctx in [vec![], vec![5], vec![7, 7, 1]] {
            assert_eq!(m.llm_dist(&ctx).unwrap(), m.slm_dist(&ctx).unwrap());
        }
    }

    #[test]
    fn full_perturbation_diverges() {
        let m = models(1.0, 1.0, 4);
        let tv = m
            .llm_dist(&[1, 2])
            .unwrap()
            .total_variation(&m.slm_dist(&[1, 2]).unwrap());
        assert!(tv > 0.0);
    }

    #[test]
    fn mean_divergence_is_monotone_in_perturbation() {
        let mean_tv = |eps: f64| {
            let m = models(eps, 1.0, 8);
            (0..100u32)
                .map(|i| {
                    let ctx = [i % 8, (i / 8) % 8, (i * 7 + 3) % 8];
                    m.llm_dist(&ctx).unwrap().total_variation(&m.slm_dist(&ctx).unwrap())
                })
                .sum::<f64>()
                / 100.0
        };
        let tvs: Vec<f64> = [0.0, 0.25, 0.5, 1.0].into_iter().map(mean_tv).collect();
        assert_eq!(tvs[0], 0.0);
        assert!(tvs.windows(2).all(|w| w[0] <= w[1]), "{tvs:?}");
    }

    #[test]
    fn high_temperature_tends_to_uniform() {
        let m = models(0.3, 1e8, 8);
        for &p in m.llm_dist(&[1]).unwrap().as_slice() {
            assert!((p - 0.125).abs() < 1e-6);
        }
    }

    #[test]
    fn difficulty_is_keyed_on_the_first_token() {
        let flat = models(0.3, 1.0, 16);
        assert_eq!(flat.scale(&[3, 1]), flat.config().logit_scale);
        let m = SyntheticModels::new(ModelConfig {
            difficulty_spread: 0.8,
            ..flat.config().clone()
        })
        .unwrap();
        assert_eq!(m.scale(&[]), m.config().logit_scale);
        assert_eq!(m.scale(&[3, 1]), m.scale(&[3, 9, 9]));
        let scales: Vec<f64> = (0..16).map(|t| m.scale(&[t])).collect();
        assert!(scales.iter().any(|&s| s > 2.0 * scales[0]) || scales.iter().any(|&s| s < 0.5 * scales[0]));
        assert!(ModelConfig {
            difficulty_spread: -1.0,
            ..ModelConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn append_confidences_bookkeeping() {
        let s = DecodeState::new(vec![1, 2, 3]);
        assert_eq!(s.append_confidences(&[], &[]), s);
        let t = s.append_confidences(&[4, 5], &[0.5, 0.37]);
        assert_eq!(t.generated(), 2);
        assert_eq!(t.confidences(), &[0.5, 0.37]);
        assert_eq!(t.prefix(), &[1, 2, 3, 4, 5]);
        assert_eq!(t.prompt_len(), 3);
    }
}
