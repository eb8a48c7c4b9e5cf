//! Random two-sided matching markets with interview signaling.
//!
//! The crate simulates markets in which applicants and firms hold noisy
//! pre-interview scores, signal a handful of partners, interview along the
//! resulting bipartite graph and are then matched by deferred acceptance.
//! Around that pipeline sit stability metrics, proposal passing and exact
//! message passing on trees, and a brute-force oracle for small instances.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod market;
pub mod matching;
pub mod oracle;
pub mod prefs;
pub mod signaling;
pub mod treealg;

pub use error::{Error, Result};
pub use graph::InterviewGraph;
pub use market::{MarketConfig, MarketInstance, ScoreDistribution, TierSpec};
pub use matching::{Matching, Side};
pub use signaling::Mechanism;
