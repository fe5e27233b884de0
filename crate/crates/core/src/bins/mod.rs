//! Infinite-bin models: the basic discrete model, its mutually-prime
//! extension and the continuous-space random-links model.

pub mod basic;
pub mod links;
pub mod prime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use basic::{scan_bins_basic, BasicAdapter, BasicScanConfig, BinState, BinFuture};
pub use links::{LinkDriving, LinkParams, LinkState};
pub use prime::{find_word, scan_bins_prime, PrimeScanConfig, PrimeWord};

/// Errors raised by the bin models.
#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum BinsError {
    #[error("P(ξ = 1) = 0: the basic scanner needs mass at 1; use the mutually-prime scanner")]
    NoMassAtOne,
    #[error("invalid law: {0}")]
    Law(String),
    #[error("i1 = {i1} and i2 = {i2} must satisfy 1 < i1 < i2 and be coprime")]
    Pair { i1: u64, i2: u64 },
    #[error("no word of length at most {bound} forces the top bin above i1")]
    SearchBound { bound: usize },
    #[error("invalid links parameters: {0}")]
    Links(String),
}
