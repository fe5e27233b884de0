//! Regeneration structure of stochastic recursions: break times, cycles and
//! their laws, with exact oracles and worked models.

pub mod core;
pub mod regen;
pub mod stats;
pub mod oracle;
pub mod walk;
pub mod contact;
pub mod bins;
pub mod harris;
pub mod acceptance;
pub mod cli;
