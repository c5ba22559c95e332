//! Desk-scale two-level policy learner.
//!
//! An SVO policy picks a social value orientation bin conditioned on the
//! previous SVO distribution (carried in the observation); an action policy
//! picks a move conditioned on the observation and the sampled bin. Each
//! policy's clipped surrogate is driven by the *other* stream's advantage:
//! the action ratio by the SVO advantage (team-level reward) and the SVO
//! ratio by the action advantage (SVO-weighted reward).

pub mod gae;
pub mod loss;
pub mod network;
pub mod policy;
pub mod rollout;
pub mod train;

pub use gae::{gae_advantages, gae_segmented};
pub use loss::{clipped_surrogate, smp3o_loss, LossConfig, LossReport, Sample};
pub use network::{NetConfig, PolicyLayout};
pub use policy::{team_step, Decision, Policy, TeamStep};
pub use rollout::{collect_rollout, make_slots, Curriculum, EnvSlot, EpisodeStat};
pub use train::{curves_csv, train, Checkpoint, IterationStats, Optimizer, TrainConfig, TrainOutcome};
