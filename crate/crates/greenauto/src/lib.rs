//! Energy-aware neural architecture search: an expanded cell-based search
//! space, analytic kernel-level energy prediction, a training-free accuracy
//! proxy, Pareto-front search steered by a min-norm multi-gradient direction,
//! and a simulated on-device measurement harness.

pub mod cli;
pub mod error;
pub mod measure;
pub mod mopt;
pub mod netexec;
pub mod orchestrator;
pub mod proxies;
pub mod rng;
pub mod space;

pub use error::{Error, Result};
