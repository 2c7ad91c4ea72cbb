//! Per-iteration latency: drafting, uplink, verification and downlink.
//!
//! ```text
//! T_u = L (ceil(log2 V) + b) / C_u
//! T_d = (ceil(log2 L) + ceil(log2 V)) / C_d
//! T   = L T_SLM + T_u + T_LLM + T_d
//! ```

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::policy::RewardRecord;

/// `ceil(log2 n)` from the integer bit length; `ceil_log2(1) == 0`.
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingParams {
    /// Seconds per SLM token.
    pub t_slm: f64,
    /// Seconds per LLM verification pass.
    pub t_llm: f64,
    /// Preamble time added to each finite-rate transmission.
    pub fixed_overhead_s: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            t_slm: 0.005,
            t_llm: 0.032,
            fixed_overhead_s: 0.0,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_slm > 0.0 && self.t_llm > 0.0) {
            return Err(Error::Config(format!(
                "t_slm ({}) and t_llm ({}) must be positive",
                self.t_slm, self.t_llm
            )));
        }
        if self.fixed_overhead_s < 0.0 {
            return Err(Error::Config("fixed_overhead_s must be non-negative".into()));
        }
        Ok(())
    }
}

/// Link rate in bits/s, or an ideal delay-free link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkRate {
    Finite(f64),
    Infinite,
}

impl Serialize for LinkRate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LinkRate::Finite(r) => s.serialize_f64(*r),
            LinkRate::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for LinkRate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Rate(f64),
            Named(String),
        }
        match Raw::deserialize(d)? {
            Raw::Rate(r) => Ok(LinkRate::Finite(r)),
            Raw::Named(s) if s.eq_ignore_ascii_case("infinite") => Ok(LinkRate::Infinite),
            Raw::Named(s) => Err(serde::de::Error::custom(format!(
                "expected a rate in bits/s or \"infinite\", got {s:?}"
            ))),
        }
    }
}

pub fn uplink_time(draft_len: u32, bits: u32, vocab: u32, uplink_rate: f64) -> Result<f64> {
    if !(uplink_rate > 0.0) {
        return Err(Error::NonPositiveRate(uplink_rate));
    }
    let payload = draft_len as u64 * (ceil_log2(vocab as u64) as u64 + bits as u64);
    Ok(payload as f64 / uplink_rate)
}

pub fn downlink_time(draft_len: u32, vocab: u32, downlink: LinkRate) -> Result<f64> {
    match downlink {
        LinkRate::Infinite => Ok(0.0),
        LinkRate::Finite(rate) if rate > 0.0 => {
            let payload = ceil_log2(draft_len as u64) as u64 + ceil_log2(vocab as u64) as u64;
            Ok(payload as f64 / rate)
        }
        LinkRate::Finite(rate) => Err(Error::NonPositiveRate(rate)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyBreakdown {
    pub draft: f64,
    pub uplink: f64,
    pub verify: f64,
    pub downlink: f64,
    pub total: f64,
}

pub fn iteration_latency(
    draft_len: u32,
    bits: u32,
    vocab: u32,
    params: &TimingParams,
    uplink_rate: f64,
    downlink: LinkRate,
) -> Result<LatencyBreakdown> {
    let overhead = params.fixed_overhead_s;
    let draft = draft_len as f64 * params.t_slm;
    let uplink = uplink_time(draft_len, bits, vocab, uplink_rate)? + overhead;
    let downlink = match downlink {
        LinkRate::Infinite => 0.0,
        finite => downlink_time(draft_len, vocab, finite)? + overhead,
    };
    let verify = params.t_llm;
    Ok(LatencyBreakdown {
        draft,
        uplink,
        verify,
        downlink,
        total: draft + uplink + verify + downlink,
    })
}

/// Everything observed in one protocol round.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub draft_len: u32,
    pub ell: u32,
    pub bits: u32,
    pub accepted: u32,
    pub tokens_appended: u32,
    pub alphas: Vec<f64>,
    pub latency: LatencyBreakdown,
    pub reward: RewardRecord,
    pub channel: ChannelState,
    /// Entropy (nats) of the LLM distribution at each appended position.
    pub appended_entropies: Vec<f64>,
    /// Draft tokens with zero quantized probability (sample-then-quantize only).
    pub zero_quantized_events: u32,
}

impl IterationRecord {
    pub fn total_time(&self) -> f64 {
        self.latency.total
    }
}

pub fn total_latency(records: &[IterationRecord]) -> f64 {
    records.iter().map(|r| r.latency.total).sum()
}
