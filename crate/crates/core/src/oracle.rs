//! Brute-force FLOP counter used to check the closed forms.
//!
//! Walks every layer and every processed token position, charging each matrix
//! multiply individually. It shares no formulas with `estimator`.

use crate::arch::{ArchConfig, Family};
use crate::error::{Error, Result};
use crate::estimator::CallSpec;

pub const MAX_CTX: u64 = 4096;
pub const MAX_OPT: u64 = 1024;

/// A `rows x cols` weight applied to one token vector.
fn matvec(rows: u64, cols: u64) -> u128 {
    let mut flops = 0u128;
    for _ in 0..rows {
        // one multiply and one add per weight
        flops += 2 * cols as u128;
    }
    flops
}

struct Shapes {
    d_model: u64,
    d_ff: u64,
    q_width: u64,
    kv_width: u64,
}

impl Shapes {
    fn of(cfg: &ArchConfig) -> Self {
        let q_width = cfg.d_attn.unwrap_or(cfg.d_model);
        let head = q_width / cfg.n_q;
        let mut kv_width = 0;
        for _ in 0..cfg.n_kv {
            kv_width += head;
        }
        Shapes {
            d_model: cfg.d_model,
            d_ff: cfg.d_ff,
            q_width,
            kv_width,
        }
    }

    fn self_attention_weights(&self) -> u128 {
        matvec(self.q_width, self.d_model)
            + matvec(self.kv_width, self.d_model)
            + matvec(self.kv_width, self.d_model)
            + matvec(self.d_model, self.q_width)
    }

    fn cross_attention_weights(&self) -> u128 {
        // K/V of the encoder output are projected once per call, not per token.
        matvec(self.q_width, self.d_model) + matvec(self.d_model, self.q_width)
    }

    fn feed_forward(&self) -> u128 {
        matvec(self.d_ff, self.d_model) + matvec(self.d_model, self.d_ff)
    }

    /// Scores against `keys` cached keys plus the weighted sum of their values.
    fn attend(&self, keys: u64) -> u128 {
        let mut flops = 0u128;
        for _ in 0..keys {
            flops += 2 * self.kv_width as u128; // q . k
            flops += 2 * self.kv_width as u128; // p * v
        }
        flops
    }
}

/// Exact FLOPs of one call, counted token by token.
pub fn oracle_flops_call(cfg: &ArchConfig, call: &CallSpec) -> Result<u128> {
    if call.n_ctx > MAX_CTX || call.n_opt > MAX_OPT {
        return Err(Error::OracleLimit(format!(
            "n_ctx {} / n_opt {} exceeds {MAX_CTX} / {MAX_OPT}",
            call.n_ctx, call.n_opt
        )));
    }
    let s = Shapes::of(cfg);
    let mut total = 0u128;

    // Prompt: full (masked) self-attention, so every position scores all n_ctx keys.
    for _layer in 0..cfg.n_layer {
        for _pos in 0..call.n_ctx {
            total += s.self_attention_weights() + s.feed_forward() + s.attend(call.n_ctx);
        }
    }

    match cfg.family {
        Family::DecoderOnly => {
            for _layer in 0..cfg.n_layer {
                for i in 1..=call.n_opt {
                    let visible = call.n_ctx + (i - 1);
                    total += s.self_attention_weights() + s.feed_forward() + s.attend(visible);
                }
            }
        }
        Family::EncoderDecoder => {
            for _layer in 0..cfg.n_layer {
                for _pos in 0..call.n_ctx {
                    total += matvec(s.kv_width, s.d_model) + matvec(s.kv_width, s.d_model);
                }
                for i in 1..=call.n_opt {
                    total += s.self_attention_weights()
                        + s.cross_attention_weights()
                        + s.feed_forward()
                        + s.attend(i - 1)
                        + s.attend(call.n_ctx);
                }
            }
        }
    }
    Ok(total)
}
