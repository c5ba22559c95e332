//! Socially-aware multi-agent pathfinding.
//!
//! The crate is organised bottom-up:
//!
//! * [`mapgen`] builds grid maps (random, room, maze, corridor) and start/goal
//!   scenarios, and reads/writes the `.map` text format.
//! * [`pathing`] provides BFS distance fields and deterministic shortest
//!   path flows.
//! * [`gridworld`] is the discrete-time environment: simultaneous moves,
//!   reward table, blocking detection and observations.
//! * [`social`] selects partners from weighted path-flow overlap, keeps fixed
//!   partners stable, and redistributes rewards by social value orientation.
//! * [`resolver`] turns intended joint actions into a collision-free joint
//!   action using SVO-ordered tie-breaking.
//! * [`learner`] trains a small two-headed policy (SVO + action) with a
//!   cross-advantage clipped surrogate.
//! * [`execution`] builds an action dependency graph from a discrete plan
//!   and replays it in continuous time.
//! * [`harness`] runs benchmark batches, paired t-tests and the corridor
//!   case study.
//!
//! Data-parallel loops go through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.
//! Results never depend on which path runs.

pub mod error;
pub mod exec;
pub mod execution;
pub mod geom;
pub mod gridworld;
pub mod harness;
pub mod learner;
pub mod mapgen;
pub mod pathing;
pub mod resolver;
pub mod rng;
pub mod social;

pub use error::{Error, Result};
pub use exec::Exec;
pub use geom::{Action, Cell};
pub use mapgen::{GridMap, Scenario};
