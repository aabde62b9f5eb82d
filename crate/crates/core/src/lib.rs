//! Early detection of partial synchronization in ring networks of coupled
//! Duffing oscillators.
//!
//! Pairwise transversely directed Lyapunov exponents are tracked while the
//! network is integrated; a calibrated power-law threshold on the largest gap
//! of their spectrum flags nontrivial dynamics long before any pair of nodes
//! actually synchronizes. The final synchronization pattern is summarized by
//! the dynamical phenomena indicator.

pub mod config;
pub mod detector;
pub mod dpi;
pub mod error;
pub mod model;
pub mod msf;
pub mod sweep;
pub mod tdle;
pub mod threshold;

pub use error::{Error, Result};
