//! Desk-scale laboratory for multi-driver order dispatching and repositioning.
//!
//! * [`sim`]: continuous-time event-driven engine polling one driver per decision point
//! * [`scenarios`]: Regional, Hot-Cold, Distribute and the two historical domains
//! * [`features`]: observation encoding
//! * [`nn`] and [`policy`]: dense layers with exact gradients and the attention-pooling network
//! * [`train`]: transition builders, DQN and PPO
//! * [`baselines`]: myopic revenue / pickup-distance dispatchers
//! * [`harness`]: experiment runner behind the CLI

pub mod baselines;
pub mod error;
pub mod features;
pub mod geom;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod scenarios;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
