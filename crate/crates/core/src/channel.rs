//! Two-state Markov uplink: the rate alternates between a low and a high
//! value, with one transition between consecutive protocol iterations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timing::LinkRate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkState {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Low,
    High,
    /// Drawn from the stationary distribution.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub rate_low: f64,
    pub rate_high: f64,
    pub p_low_to_high: f64,
    pub p_high_to_low: f64,
    pub downlink_rate: LinkRate,
    pub initial_state: InitialState,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            rate_low: 40_000.0,
            rate_high: 400_000.0,
            p_low_to_high: 0.1,
            p_high_to_low: 0.1,
            downlink_rate: LinkRate::Infinite,
            initial_state: InitialState::Stationary,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_low > 0.0 && self.rate_low <= self.rate_high) {
            return Err(Error::Config(format!(
                "need 0 < rate_low <= rate_high, got {} and {}",
                self.rate_low, self.rate_high
            )));
        }
        for p in [self.p_low_to_high, self.p_high_to_low] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("transition probability {p} outside [0, 1]")));
            }
        }
        if let LinkRate::Finite(r) = self.downlink_rate {
            if !(r > 0.0) {
                return Err(Error::NonPositiveRate(r));
            }
        }
        Ok(())
    }

    pub fn rate(&self, state: LinkState) -> f64 {
        match state {
            LinkState::Low => self.rate_low,
            LinkState::High => self.rate_high,
        }
    }

    pub fn state(&self, current: LinkState) -> ChannelState {
        ChannelState {
            current,
            uplink_rate: self.rate(current),
            downlink_rate: self.downlink_rate,
        }
    }

    pub fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelState> {
        let current = match self.initial_state {
            InitialState::Low => LinkState::Low,
            InitialState::High => LinkState::High,
            InitialState::Stationary => {
                if rng.gen::<f64>() < stationary_fraction_high(self)? {
                    LinkState::High
                } else {
                    LinkState::Low
                }
            }
        };
        Ok(self.state(current))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub current: LinkState,
    pub uplink_rate: f64,
    pub downlink_rate: LinkRate,
}

impl ChannelState {
    pub fn advance<R: Rng + ?Sized>(&self, cfg: &ChannelConfig, rng: &mut R) -> ChannelState {
        let u: f64 = rng.gen();
        let next = match self.current {
            LinkState::Low if u < cfg.p_low_to_high => LinkState::High,
            LinkState::High if u < cfg.p_high_to_low => LinkState::Low,
            same => same,
        };
        cfg.state(next)
    }
}

/// Long-run fraction of iterations spent in the high-rate state.
pub fn stationary_fraction_high(cfg: &ChannelConfig) -> Result<f64> {
    let total = cfg.p_low_to_high + cfg.p_high_to_low;
    if total <= 0.0 {
        return Err(Error::StationaryUndefined);
    }
    Ok(cfg.p_low_to_high / total)
}
