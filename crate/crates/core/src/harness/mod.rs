//! Configuration, episode simulation and experiment grids.

mod bandit;
mod config;
mod episode;
mod experiment;
mod prop1;

pub use bandit::{iid_channel, BanditEnv};
pub use config::{Config, PolicyConfig, PolicySpec, RunConfig};
pub use episode::{
    entropy_per_token, run_episode, synthetic_prompt, DecodeEnv, EpisodeState, RunRecord, Simulator, StoppingRule,
};
pub use experiment::{
    cells_csv, fmt_g9, run_experiment, runs_csv, summarize, train_ddqn, write_outputs, CellSummary,
    ExperimentOutput, CELLS_HEADER, RUNS_HEADER,
};
pub use prop1::{verify_prop1, Prop1Report, Prop1Row, GRID_DRAFT_LENS, GRID_ELLS, GRID_PERTURBATIONS, GRID_VOCAB};
