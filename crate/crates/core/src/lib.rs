//! Policy abstractions, policy metrics and metric-aligned policy
//! representations.
//!
//! Exact metrics on tabular MDPs live in [`metrics`], sample-based estimates
//! in [`mmd`] and [`record`], the parameter encoder in [`lpe`], representation
//! training in [`repr`], and the downstream experiments in [`policy_opt`] and
//! [`ope`].

pub mod env;
pub mod error;
pub mod lpe;
pub mod mdp;
pub mod metrics;
pub mod mmd;
pub mod nn;
pub mod ope;
pub mod policy_opt;
pub mod record;
pub mod repr;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/tabular-metrics.md")]
    pub struct TabularMetrics;
    #[doc = include_str!("../../../book/src/mmd.md")]
    pub struct Mmd;
    #[doc = include_str!("../../../book/src/encoder.md")]
    pub struct Encoder;
    #[doc = include_str!("../../../book/src/representations.md")]
    pub struct Representations;
    #[doc = include_str!("../../../book/src/policy-optimization.md")]
    pub struct PolicyOptimization;
    #[doc = include_str!("../../../book/src/off-policy-evaluation.md")]
    pub struct OffPolicyEvaluation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
