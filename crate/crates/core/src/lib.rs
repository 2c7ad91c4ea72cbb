//! Edge-cloud speculative decoding with quantize-sample drafting, a
//! communication-aware latency model and a DQN controller for draft length
//! and lattice resolution.

pub mod agent;
pub mod channel;
pub mod engine;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod lm;
pub mod oracle;
pub mod policy;
pub mod prob;
pub mod rng;
pub mod timing;

pub use agent::{AgentConfig, DqnAgent, QPolicy, ReplayBuffer, Transition, ValueNetwork};
pub use channel::{ChannelConfig, ChannelState, InitialState, LinkState};
pub use engine::{draft, step, verify, DraftBlock, DraftMode, StepOutcome, Uplink, VerifyOutcome};
pub use error::{Error, Result};
pub use harness::{Config, RunRecord, StoppingRule};
pub use lattice::{bit_cost, quantize, rank, unrank, BitBudget, LatticePoint};
pub use lm::{DecodeState, ModelConfig, ModelPair, SyntheticModels, VocabSpec};
pub use policy::{Action, ActionSpace, ActionsConfig, Policy, PolicyObservation};
pub use prob::{ProbVector, Token};
pub use timing::{IterationRecord, LatencyBreakdown, LinkRate, TimingParams};
