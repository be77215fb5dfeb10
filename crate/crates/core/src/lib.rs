//! Multi-robot multi-target tracking with submodular coordination.

pub mod bounds;
pub mod coordination;
pub mod error;
pub mod harness;
pub mod mcts;
pub mod objective;
pub mod seeds;
pub mod sensing;
pub mod submodular;
pub mod world;

pub use error::{Error, Result};
