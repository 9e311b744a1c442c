//! Behavior-consistency rewards and evaluation for text world models.
//!
//! The crate is organised by stage: [`model`] holds the shared trajectory
//! types, [`envsim`] the toy environments and world models, [`scorer`] the
//! frozen reference agent, [`reward`] the likelihood-gap rewards,
//! [`metrics`] the evaluation arithmetic, [`perturb`] the page perturbation
//! study and [`pipelines`] the end-to-end protocols.

pub mod envsim;
pub mod exec;
pub mod metrics;
pub mod model;
pub mod openai;
pub mod perturb;
pub mod pipelines;
pub mod reward;
pub mod scorer;
pub mod util;

pub use exec::Executor;
