//! Distribution- and polarity-aware amortized fair ranking.
//!
//! Attention and relevance are accumulated per individual over a stream of
//! queries; unfairness is the worst-case divergence between an individual's
//! (or group's) cumulative attention distribution and cumulative relevance
//! distribution. Queries carry a real-valued polarity vector that scales the
//! value of the attention they hand out, so attention on a harmful query can
//! count against an individual rather than for them.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: datasets, query events, the position-bias attention model,
//!   assignments and the cumulative [`Ledger`].
//! - [`divergence`]: the `L1`, `L2var` and `W1` divergences and the
//!   prospective divergence of a hypothetical placement.
//! - [`metrics`]: individual/group unfairness, IAA, EUR, DP, fairwashing.
//! - [`assign`]: exact assignment solvers (Hungarian, bottleneck with a
//!   quality side constraint, constrained min-sum) and a brute-force oracle.
//! - [`rerank`]: the online engine and the offline coordinate-descent mode.
//! - [`bounds`]: Chernoff/Hoeffding tail bounds and a Monte Carlo verifier.
//! - [`synth`]: synthetic dataset and random-instance generators.
//! - [`io`]: stream/groups/run/report file formats.
//! - [`sweep`] and [`verify`]: experiment and self-check harnesses.

pub mod assign;
pub mod bounds;
pub mod divergence;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rerank;
pub mod sweep;
pub mod synth;
pub mod verify;

pub use divergence::DivergenceKind;
pub use error::{Error, Result};
pub use metrics::{MetricValue, MetricsReport};
pub use model::{
    AttentionModel, Dataset, Ledger, PolarityMode, QueryEvent, Ranking,
};
pub use rerank::{Objective, RerankConfig, RunResult};

/// Absolute tolerance used for every feasibility comparison against the
/// quality threshold.
pub const FEASIBILITY_TOL: f64 = 1e-9;
