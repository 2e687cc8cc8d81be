//! Multi-dueling bandit simulation.
//!
//! The crate is organised bottom-up:
//!
//! * [`env`]: preference environments, duel sampling, feedback matrices and regret.
//! * [`mab`]: multi-armed bandit policies (Beta-Bernoulli Thompson sampling, UCB1, EXP3).
//! * [`gp`]: exact Gaussian-process posterior inference over a finite arm grid.
//! * [`dueling`]: SelfSparring policies (independent and kernelized) and sparring baselines.
//! * [`runner`]: configuration, seeded repetitions, regret aggregation and result files.

pub mod dueling;
pub mod env;
pub mod error;
pub mod gp;
pub mod mab;
pub mod runner;
mod select;

pub use dueling::{DuelingPolicy, RoundRecord};
pub use env::{ArmIndex, FeedbackMatrix, FeedbackMechanism, LinkFunction, PreferenceEnvironment};
pub use error::{Error, Result};
pub use gp::{GpPosterior, GpSnapshot, Kernel};
pub use mab::{BanditPolicy, BetaState, Exp3State, Ucb1State};
pub use runner::{AggregateResult, ExperimentConfig, RegretTrace};

/// Random source used throughout the simulator.
///
/// ChaCha is portable across platforms, so a seed reproduces a run bit for bit.
pub type RandomSource = rand_chacha::ChaCha8Rng;
