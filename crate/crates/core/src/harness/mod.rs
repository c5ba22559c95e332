//! Benchmark harness: episode runner, scripted SVO policies, instance
//! batches, the corridor case study and paired t-tests.

mod bench;
mod episode;
mod scripted;
pub mod stats;

pub use bench::{
    corridor_case_study, expected_goals, run_batch, BenchConfig, BenchmarkReport, CaseStudyConfig, CaseStudyReport,
    InstanceResult,
};
pub use episode::{run_episode, EpisodeResult, PolicySpec, TraceRecord};
pub use scripted::{retreat_action, scripted_policy_step, ScriptedMode, ScriptedStep};
pub use stats::{paired_t_test, TTest};
