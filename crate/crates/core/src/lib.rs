//! Analytical FLOPs cost model for LLM-based rerankers.
//!
//! Architectures are described by a handful of integers ([`ArchConfig`]).
//! [`estimator`] turns a call (prompt length, output length) into exact FLOPs,
//! [`strategies`] replays the call pattern of common reranking algorithms,
//! and [`metrics`] relates effectiveness to cost.

pub mod arch;
pub mod decimal;
pub mod error;
pub mod estimator;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod strategies;

pub use arch::{ArchConfig, Family, Registry, Stack};
pub use error::{Error, Result};
pub use estimator::{CallSpec, PromptParts, QueryCost};
pub use metrics::{MetricReport, Qrels, QueryReport, RankedList};
pub use pipeline::{evaluate, EvalOptions};
pub use strategies::{simulate, CallTrace, Relevance, StrategyConfig, StrategyKind, TokenModel};
