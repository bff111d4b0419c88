//! Model-based offline reinforcement learning with pessimistic MDPs.
//!
//! The pipeline: collect a static dataset, fit a dynamics model, flag
//! state-action pairs the model cannot vouch for, build a pessimistic MDP
//! that sends those pairs to an absorbing HALT state, and plan in it. The
//! [`theory`] module checks the accompanying value bounds exactly on tabular
//! instances.

pub mod dataset;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod mdp;
pub mod nn;
pub mod planner;
pub mod pmdp;
pub mod rng;
pub mod runner;
pub(crate) mod textfmt;
pub mod theory;
pub mod usad;

pub use error::{Error, Result};
