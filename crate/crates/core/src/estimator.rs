//! Closed-form FLOPs for prompt consumption and KV-cached generation.
//!
//! Every count is an exact integer. Two FLOPs are charged per weight touched
//! (one multiply, one add); nonlinearities, biases and normalization are
//! ignored. Attention score and value terms scale with the grouped K/V width
//! `d_attn * n_KV / n_Q`, which is `d_attn` for multi-head attention.
//!
//! Standard grouped-query attention still computes one score per query head,
//! so scaling the score/value terms by `n_KV / n_Q` under-counts them. The
//! scaled form is kept because it is the published estimator:
//!
//! ```
//! use rerank_flops::{ArchConfig, Family, estimator::flops_ctx};
//! let mha = ArchConfig::new("mha", Family::DecoderOnly, 1, 8, 8, 4, 4).unwrap();
//! let gqa = ArchConfig::new("gqa", Family::DecoderOnly, 1, 8, 8, 4, 1).unwrap();
//! // Both have the same Q/O weights; the quadratic term shrinks by n_KV / n_Q.
//! let quad = |c: &ArchConfig| flops_ctx(c, 8) - 2 * c.params(c.prompt_stack()).unwrap() * 8;
//! assert_eq!(quad(&mha), 4 * quad(&gqa));
//! ```

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchConfig, Family};
use crate::decimal::{self, Rational};
use crate::error::{Error, Result};
use crate::strategies::CallTrace;

pub const PETA: u128 = 1_000_000_000_000_000;

/// Optional decomposition of a prompt: task prefix, query and
/// `w` documents of average length `l_doc`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptParts {
    pub n_p: u64,
    pub n_q: u64,
    pub w: u64,
    pub l_doc: Rational,
}

impl PromptParts {
    /// `n_p + n_q + w * l_doc`, rounded half-up once.
    pub fn n_ctx(&self) -> Result<u64> {
        let total = Rational::from_integer(BigInt::from(self.n_p) + self.n_q)
            + &self.l_doc * Rational::from_integer(self.w.into());
        decimal::round_half_up_u64(&total)
            .ok_or_else(|| Error::InvalidCall(format!("prompt length {total} out of range")))
    }
}

/// Token accounting for one LLM invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallSpec {
    pub n_ctx: u64,
    pub n_opt: u64,
    pub parts: Option<PromptParts>,
}

impl CallSpec {
    pub fn new(n_ctx: u64, n_opt: u64) -> Self {
        CallSpec {
            n_ctx,
            n_opt,
            parts: None,
        }
    }

    pub fn from_parts(parts: PromptParts, n_opt: u64) -> Result<Self> {
        if parts.l_doc < Rational::from_integer(0.into()) {
            return Err(Error::InvalidCall("l_doc must be non-negative".into()));
        }
        Ok(CallSpec {
            n_ctx: parts.n_ctx()?,
            n_opt,
            parts: Some(parts),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(parts) = &self.parts {
            let expected = parts.n_ctx()?;
            if expected != self.n_ctx {
                return Err(Error::InvalidCall(format!(
                    "n_ctx {} disagrees with its decomposition ({expected})",
                    self.n_ctx
                )));
            }
        }
        Ok(())
    }
}

/// Aggregated cost of one or more calls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCost {
    pub flops_exact: u128,
    pub calls: u64,
    pub in_tokens_total: u128,
    pub out_tokens_total: u128,
}

impl QueryCost {
    pub fn petaflops_exact(&self) -> Rational {
        decimal::ratio(BigInt::from(self.flops_exact), BigInt::from(PETA))
    }

    pub fn petaflops(&self) -> f64 {
        self.flops_exact.to_f64().unwrap_or(f64::INFINITY) / PETA as f64
    }
}

impl Add for QueryCost {
    type Output = QueryCost;
    fn add(self, rhs: QueryCost) -> QueryCost {
        QueryCost {
            flops_exact: self.flops_exact + rhs.flops_exact,
            calls: self.calls + rhs.calls,
            in_tokens_total: self.in_tokens_total + rhs.in_tokens_total,
            out_tokens_total: self.out_tokens_total + rhs.out_tokens_total,
        }
    }
}

impl AddAssign for QueryCost {
    fn add_assign(&mut self, rhs: QueryCost) {
        *self = *self + rhs;
    }
}

impl Sum for QueryCost {
    fn sum<I: Iterator<Item = QueryCost>>(iter: I) -> QueryCost {
        iter.fold(QueryCost::default(), Add::add)
    }
}

/// Per-term view of a call's FLOPs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Breakdown {
    pub ctx_weights: u128,
    pub ctx_attention: u128,
    pub cross_kv: u128,
    pub opt_weights: u128,
    pub opt_attention: u128,
}

impl Breakdown {
    pub fn total(&self) -> u128 {
        self.ctx_weights + self.ctx_attention + self.cross_kv + self.opt_weights + self.opt_attention
    }
}

fn kv(cfg: &ArchConfig) -> u128 {
    cfg.kv_width() as u128
}

fn prompt_params(cfg: &ArchConfig) -> u128 {
    cfg.params(cfg.prompt_stack()).expect("prompt stack matches family")
}

fn generation_params(cfg: &ArchConfig) -> u128 {
    cfg.params(cfg.generation_stack()).expect("generation stack matches family")
}

fn ctx_terms(cfg: &ArchConfig, n_ctx: u64) -> (u128, u128) {
    let n = n_ctx as u128;
    (
        2 * prompt_params(cfg) * n,
        4 * cfg.n_layer as u128 * n * n * kv(cfg),
    )
}

fn opt_terms(cfg: &ArchConfig, n_ctx: u64, n_opt: u64) -> (u128, u128) {
    let (c, o) = (n_ctx as u128, n_opt as u128);
    let weights = 2 * generation_params(cfg) * o;
    let attention = if o == 0 {
        0
    } else {
        2 * cfg.n_layer as u128 * kv(cfg) * (2 * o * c + o * (o - 1))
    };
    (weights, attention)
}

/// FLOPs to consume an `n_ctx`-token prompt: `2 N n_ctx + 4 n_layer n_ctx^2 d_kv`.
/// Encoder-decoder models use the encoder's parameter count.
pub fn flops_ctx(cfg: &ArchConfig, n_ctx: u64) -> u128 {
    let (w, a) = ctx_terms(cfg, n_ctx);
    w + a
}

/// FLOPs to generate the `i`-th output token (1-based) with a KV cache.
pub fn flops_opt_token(cfg: &ArchConfig, n_ctx: u64, i: u64) -> u128 {
    assert!(i >= 1, "token index is 1-based");
    2 * generation_params(cfg)
        + 4 * cfg.n_layer as u128 * (n_ctx as u128 + (i - 1) as u128) * kv(cfg)
}

/// FLOPs to generate `n_opt` tokens after an `n_ctx`-token prompt.
pub fn flops_opt(cfg: &ArchConfig, n_ctx: u64, n_opt: u64) -> u128 {
    let (w, a) = opt_terms(cfg, n_ctx, n_opt);
    w + a
}

/// One-time cross-attention K/V projection of the encoder outputs.
pub fn flops_cross_kv(cfg: &ArchConfig, n_ctx: u64) -> Result<u128> {
    if cfg.family != Family::EncoderDecoder {
        return Err(Error::StackMismatch {
            stack: "cross-attention",
            family: cfg.family.as_str(),
        });
    }
    Ok(4 * cfg.n_layer as u128 * n_ctx as u128 * cfg.d_model as u128 * kv(cfg))
}

pub fn breakdown(cfg: &ArchConfig, call: &CallSpec) -> Breakdown {
    let (ctx_weights, ctx_attention) = ctx_terms(cfg, call.n_ctx);
    let (opt_weights, opt_attention) = opt_terms(cfg, call.n_ctx, call.n_opt);
    let cross_kv = match cfg.family {
        Family::EncoderDecoder => flops_cross_kv(cfg, call.n_ctx).expect("family checked"),
        Family::DecoderOnly => 0,
    };
    Breakdown {
        ctx_weights,
        ctx_attention,
        cross_kv,
        opt_weights,
        opt_attention,
    }
}

pub fn flops_call(cfg: &ArchConfig, call: &CallSpec) -> QueryCost {
    QueryCost {
        flops_exact: breakdown(cfg, call).total(),
        calls: 1,
        in_tokens_total: call.n_ctx as u128,
        out_tokens_total: call.n_opt as u128,
    }
}

pub fn estimate_trace(cfg: &ArchConfig, trace: &CallTrace) -> Result<QueryCost> {
    if trace.calls.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(trace.calls.iter().map(|c| flops_call(cfg, c)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Registry;

    fn toy() -> ArchConfig {
        ArchConfig::new("toy", Family::DecoderOnly, 2, 8, 32, 2, 2).unwrap()
    }

    #[test]
    fn toy_ctx() {
        assert_eq!(flops_ctx(&toy(), 4), 13312);
        assert_eq!(flops_ctx(&toy(), 0), 0);
    }

    #[test]
    fn toy_ctx_gqa() {
        let cfg = ArchConfig::new("toy", Family::DecoderOnly, 2, 8, 32, 4, 1).unwrap();
        let n_prime = cfg.params(cfg.prompt_stack()).unwrap();
        assert_eq!(flops_ctx(&cfg, 4), 2 * n_prime * 4 + 256);
    }

    #[test]
    fn toy_opt() {
        assert_eq!(flops_opt(&toy(), 4, 3), 10176);
        let per_token: Vec<u128> = (1..=3).map(|i| flops_opt_token(&toy(), 4, i)).collect();
        assert_eq!(per_token, vec![3328, 3392, 3456]);
        assert_eq!(flops_opt(&toy(), 4, 0), 0);
        assert_eq!(flops_opt(&toy(), 4, 1), 2 * 1536 + 4 * 2 * 4 * 8);
    }

    #[test]
    fn cross_kv() {
        let ed = ArchConfig::new("toy", Family::EncoderDecoder, 2, 8, 32, 2, 2).unwrap();
        assert_eq!(flops_cross_kv(&ed, 4).unwrap(), 2048);
        assert_eq!(flops_cross_kv(&ed, 0).unwrap(), 0);
        assert!(flops_cross_kv(&toy(), 4).is_err());
        let large = Registry::bundled().get("flan-t5-large").unwrap().clone();
        assert_eq!(flops_cross_kv(&large, 152).unwrap(), 4 * 24 * 152 * 1024 * 1024);
    }

    #[test]
    fn call_totals() {
        let cost = flops_call(&toy(), &CallSpec::new(4, 3));
        assert_eq!(cost.flops_exact, 23488);
        assert_eq!((cost.calls, cost.in_tokens_total, cost.out_tokens_total), (1, 4, 3));
        assert_eq!(flops_call(&toy(), &CallSpec::new(0, 0)).flops_exact, 0);
    }

    #[test]
    fn flan_t5_large_pointwise_call() {
        // 2 * 239_075_328 * 152 + 4 * 24 * 152^2 * 1024 + 4 * 24 * 152 * 1024^2
        let large = Registry::bundled().get("flan-t5-large").unwrap().clone();
        let cost = flops_call(&large, &CallSpec::new(152, 0));
        assert_eq!(cost.flops_exact, 90_250_936_320);
    }

    #[test]
    fn prompt_parts_round_half_up() {
        let parts = PromptParts {
            n_p: 20,
            n_q: 8,
            w: 3,
            l_doc: decimal::ratio(235, 2), // 117.5 -> 352.5 docs
        };
        let call = CallSpec::from_parts(parts, 5).unwrap();
        assert_eq!(call.n_ctx, 381);
        call.validate().unwrap();
        let mut bad = call.clone();
        bad.n_ctx = 10;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_trace_is_an_error() {
        let trace = CallTrace::new("x", 1, vec![]);
        assert!(matches!(estimate_trace(&toy(), &trace), Err(Error::EmptyTrace)));
        let one = CallTrace::new("x", 1, vec![CallSpec::new(4, 3)]);
        assert_eq!(
            estimate_trace(&toy(), &one).unwrap(),
            flops_call(&toy(), &CallSpec::new(4, 3))
        );
    }

    #[test]
    fn petaflop_view() {
        let cost = QueryCost {
            flops_exact: 9 * PETA / 1000,
            ..Default::default()
        };
        assert_eq!(cost.petaflops_exact(), decimal::ratio(9, 1000));
        assert!((cost.petaflops() - 0.009).abs() < 1e-15);
    }
}
