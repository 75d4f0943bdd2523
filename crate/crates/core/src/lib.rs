//! Metro line energy simulation and a from-scratch PPO agent that reschedules
//! cruise speeds and dwell times to overlap regenerative braking with traction.
//!
//! The crate is layered bottom-up:
//!
//! * [`line_data`]: station/segment tables and direction reversal.
//! * [`dynamics`]: single-train force laws, speed-profile planning, motion integration.
//! * [`network_sim`]: the multi-train world, disturbances, and the energy ledger.
//! * [`mdp_env`]: observation/action/reward wrapper around the world.
//! * [`ppo`]: MLPs with hand-written backprop, losses, Adam, and the training loop.
//! * [`report`] and [`cli`]: baseline/train/evaluate/compare plumbing.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod line_data;
pub mod mdp_env;
pub mod network_sim;
pub mod ppo;
pub mod report;
pub mod units;

pub use error::{Error, Result};
