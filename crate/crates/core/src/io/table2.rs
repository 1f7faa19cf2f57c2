use serde::{Deserialize, Serialize};

use crate::decimal::{self, Rational};
use crate::error::{Error, Result};
use crate::strategies::CallTrace;

const BUNDLED: &str = include_str!("../../data/table2.toml");

/// One published result row. Cells keep their printed text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2Row {
    pub dataset: String,
    pub model: String,
    pub method: String,
    pub ndcg: String,
    pub llm_calls: String,
    pub in_tokens: String,
    pub out_tokens: String,
    pub pflops: String,
    pub rpp: String,
    pub qpp: String,
}

fn cell(text: &str) -> Rational {
    decimal::parse_decimal(text).expect("snapshot cells are decimals")
}

/// Half a unit in the last printed decimal place of `text`.
pub fn half_unit(text: &str) -> Rational {
    let places = text.split_once('.').map_or(0, |(_, f)| f.len() as u32);
    decimal::ratio(1, 2 * 10u64.pow(places))
}

impl Table2Row {
    pub fn ndcg(&self) -> Rational {
        cell(&self.ndcg)
    }
    pub fn llm_calls(&self) -> Rational {
        cell(&self.llm_calls)
    }
    pub fn in_tokens(&self) -> Rational {
        cell(&self.in_tokens)
    }
    pub fn out_tokens(&self) -> Rational {
        cell(&self.out_tokens)
    }
    pub fn pflops(&self) -> Rational {
        cell(&self.pflops)
    }
    pub fn rpp(&self) -> Rational {
        cell(&self.rpp)
    }
    pub fn qpp(&self) -> Rational {
        cell(&self.qpp)
    }

    /// A trace with the row's average call count (rounded) and per-call token averages.
    pub fn trace(&self) -> CallTrace {
        let calls = decimal::round_half_up_u64(&self.llm_calls()).unwrap_or(0);
        CallTrace::uniform(&self.method, 100, calls, &self.in_tokens(), &self.out_tokens())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table2 {
    #[serde(rename = "row")]
    pub rows: Vec<Table2Row>,
}

impl Table2 {
    pub fn bundled() -> Self {
        toml::from_str(BUNDLED).expect("bundled snapshot is valid")
    }

    pub fn find(&self, dataset: &str, model: &str, method: &str) -> Result<&Table2Row> {
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.model == model && r.method == method)
            .ok_or_else(|| Error::InvalidArgument(format!("no snapshot row for {dataset}/{model}/{method}")))
    }
}
