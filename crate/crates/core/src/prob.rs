//! Categorical distributions over the vocabulary.

use rand::Rng;

use crate::error::{Error, Result};

/// Maximum tolerated deviation of a distribution's total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-12;

pub type Token = u32;

/// A validated categorical distribution: non-negative entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProbVector("empty".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidProbVector(format!("entry {i} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidProbVector(format!("mass {total} != 1")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights with positive total mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidProbVector("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidProbVector("zero total weight".into()));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Wraps entries already known to form a distribution.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        Self(probs)
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    pub fn one_hot(size: usize, index: usize) -> Self {
        let mut v = vec![0.0; size];
        v[index] = 1.0;
        Self(v)
    }

    /// Temperature softmax of `logits`, shifted by the max for stability.
    pub fn softmax(logits: &[f64], temperature: f64) -> Self {
        debug_assert!(temperature > 0.0);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits
            .iter()
            .map(|&l| ((l - max) / temperature).exp())
            .collect();
        let total: f64 = exps.iter().sum();
        Self(exps.into_iter().map(|e| e / total).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, token: Token) -> f64 {
        self.0[token as usize]
    }

    /// Inverse-CDF draw. Zero-probability entries are never returned.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Token {
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > 0.0 {
                cumulative += p;
                last_positive = i;
                if u < cumulative {
                    return i as Token;
                }
            }
        }
        last_positive as Token
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn total_variation(&self, other: &ProbVector) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &ProbVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
