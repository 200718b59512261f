//! Link-level simulation and deep reinforcement learning for rate selection
//! in cross-packet HARQ (XP-HARQ) over time-correlated Rayleigh fading.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`]: first-order Gauss-Markov fading and per-slot mutual information.
//! * [`protocol`]: XP-HARQ and HARQ-IR cycle state machines, outage and
//!   throughput accounting.
//! * [`mdp`]: the slot-level environment seen by a learning agent.
//! * [`nn`]: dense networks with exact backpropagation and Adam.
//! * [`ddpg`]: the actor-critic agent with prioritized replay.
//! * [`baselines`]: statistical-CSI XP-HARQ, fixed-rate HARQ-IR and ergodic capacity.
//! * [`experiment`]: configuration, training/evaluation orchestration, sweeps,
//!   CSV and SVG output.
//!
//! Monte Carlo loops are data-parallel through [`par`]; with the `parallel`
//! feature disabled everything runs sequentially and produces identical numbers.

pub mod baselines;
pub mod channel;
pub mod checkpoint;
pub mod ddpg;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod nn;
pub mod par;
pub mod protocol;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
