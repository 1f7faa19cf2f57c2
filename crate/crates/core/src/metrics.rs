//! Ranking quality and FLOPs-normalized efficiency metrics.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::decimal::{self, Rational};
use crate::error::{Error, Result};
use crate::estimator::{QueryCost, PETA};

/// Graded relevance judgments, `query -> doc -> grade`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous grade if the pair was already judged.
    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(qid.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade)
    }

    pub fn grade(&self, qid: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|docs| docs.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn contains_query(&self, qid: &str) -> bool {
        self.judgments.contains_key(qid)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: Rational,
    pub rank: u32,
}

/// One query's ranking. Entries are ordered by rank, ranks run 1..=n, and
/// scores never increase with rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedList {
    pub query_id: String,
    pub docs: Vec<RankedDoc>,
}

fn by_score_then_id(a: &(String, Rational), b: &(String, Rational)) -> Ordering {
    b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl RankedList {
    /// Ranks documents by descending score; ties go to the smaller doc id.
    pub fn from_scores(query_id: impl Into<String>, mut scored: Vec<(String, Rational)>) -> Self {
        scored.sort_by(by_score_then_id);
        RankedList {
            query_id: query_id.into(),
            docs: scored
                .into_iter()
                .enumerate()
                .map(|(i, (doc_id, score))| RankedDoc {
                    doc_id,
                    score,
                    rank: i as u32 + 1,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.docs.iter().enumerate() {
            if d.rank as usize != i + 1 {
                return Err(Error::InvalidArgument(format!(
                    "query {}: rank {} at position {}",
                    self.query_id,
                    d.rank,
                    i + 1
                )));
            }
        }
        if self.docs.windows(2).any(|w| w[1].score > w[0].score) {
            return Err(Error::InvalidArgument(format!(
                "query {}: scores increase with rank",
                self.query_id
            )));
        }
        Ok(())
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.doc_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ndcg {
    pub value: f64,
    /// The query has no judgments at all; `value` is 0.
    pub unjudged_query: bool,
}

fn gain(grade: u32) -> f64 {
    (grade as f64).exp2() - 1.0
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG@k with exponential gain `2^rel - 1` and `log2(rank + 1)` discount.
/// Unjudged documents have grade 0.
pub fn ndcg_at_k(run: &RankedList, qrels: &Qrels, k: usize) -> Result<Ndcg> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let Some(judged) = qrels.query(&run.query_id) else {
        return Ok(Ndcg {
            value: 0.0,
            unjudged_query: true,
        });
    };

    let mut ranked: Vec<(String, Rational)> = run
        .docs
        .iter()
        .map(|d| (d.doc_id.clone(), d.score.clone()))
        .collect();
    ranked.sort_by(by_score_then_id);
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, (doc, _))| gain(qrels.grade(&run.query_id, doc)) * discount(i + 1))
        .sum();

    let mut ideal: Vec<u32> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) * discount(i + 1))
        .sum();

    let value = if idcg > 0.0 { dcg / idcg } else { 0.0 };
    Ok(Ndcg {
        value,
        unjudged_query: false,
    })
}

/// Ranking metric per PetaFLOP: `m / (flops / 1e15)`.
pub fn rpp(metric: &Rational, cost: &QueryCost) -> Result<Rational> {
    rpp_pf(metric, &cost.petaflops_exact())
}

pub fn rpp_pf(metric: &Rational, petaflops: &Rational) -> Result<Rational> {
    if *petaflops <= Rational::zero() {
        return Err(Error::ZeroCost);
    }
    Ok(metric / petaflops)
}

/// Queries per PetaFLOP: `1 / (mean flops / 1e15)`.
pub fn qpp(costs: &[QueryCost]) -> Result<Rational> {
    if costs.is_empty() {
        return Err(Error::EmptyReport);
    }
    if costs.iter().any(|c| c.flops_exact == 0) {
        return Err(Error::ZeroCost);
    }
    let total = costs
        .iter()
        .fold(BigInt::zero(), |acc, c| acc + BigInt::from(c.flops_exact));
    Ok(Rational::new(
        BigInt::from(costs.len()) * BigInt::from(PETA),
        total,
    ))
}

pub fn qpp_pf(petaflops: &[Rational]) -> Result<Rational> {
    if petaflops.is_empty() {
        return Err(Error::EmptyReport);
    }
    let total: Rational = petaflops.iter().sum();
    if total <= Rational::zero() || petaflops.iter().any(|c| *c <= Rational::zero()) {
        return Err(Error::ZeroCost);
    }
    Ok(Rational::from_integer(BigInt::from(petaflops.len())) / total)
}

/// Upper bound on BM25 scoring FLOPs: 11 per query-token/document pair.
pub fn bm25_flops(query_len: u64, n_docs: u64) -> u128 {
    11 * query_len as u128 * n_docs as u128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub qid: String,
    pub ndcg: f64,
    pub cost: QueryCost,
}

/// Effectiveness and efficiency of one strategy/model over a query set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub model: String,
    pub strategy: String,
    pub k: usize,
    pub queries: Vec<QueryReport>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MetricReport {
    fn ensure_queries(&self) -> Result<()> {
        if self.queries.is_empty() {
            Err(Error::EmptyReport)
        } else {
            Ok(())
        }
    }

    fn n(&self) -> Rational {
        Rational::from_integer(BigInt::from(self.queries.len()))
    }

    fn metric(q: &QueryReport) -> Rational {
        decimal::from_f64(q.ndcg).unwrap_or_else(Rational::zero)
    }

    pub fn mean_ndcg(&self) -> Result<Rational> {
        self.ensure_queries()?;
        Ok(self.queries.iter().map(Self::metric).sum::<Rational>() / self.n())
    }

    pub fn total_cost(&self) -> QueryCost {
        self.queries.iter().map(|q| q.cost).sum()
    }

    pub fn mean_calls(&self) -> Result<Rational> {
        self.ensure_queries()?;
        Ok(decimal::ratio(self.total_cost().calls, 1) / self.n())
    }

    /// Average prompt tokens per call.
    pub fn in_avg(&self) -> Result<Rational> {
        let total = self.total_cost();
        if total.calls == 0 {
            return Err(Error::EmptyTrace);
        }
        Ok(decimal::ratio(total.in_tokens_total, total.calls))
    }

    pub fn out_avg(&self) -> Result<Rational> {
        let total = self.total_cost();
        if total.calls == 0 {
            return Err(Error::EmptyTrace);
        }
        Ok(decimal::ratio(total.out_tokens_total, total.calls))
    }

    pub fn mean_petaflops(&self) -> Result<Rational> {
        self.ensure_queries()?;
        Ok(decimal::ratio(self.total_cost().flops_exact, PETA) / self.n())
    }

    /// Mean metric over mean cost.
    pub fn rpp(&self) -> Result<Rational> {
        rpp_pf(&self.mean_ndcg()?, &self.mean_petaflops()?)
    }

    /// Mean of per-query RPP.
    pub fn rpp_per_query_mean(&self) -> Result<Rational> {
        self.ensure_queries()?;
        let mut sum = Rational::zero();
        for q in &self.queries {
            sum += rpp(&Self::metric(q), &q.cost)?;
        }
        Ok(sum / self.n())
    }

    pub fn qpp(&self) -> Result<Rational> {
        let costs: Vec<QueryCost> = self.queries.iter().map(|q| q.cost).collect();
        qpp(&costs)
    }

    pub fn mean_ndcg_f64(&self) -> f64 {
        self.mean_ndcg()
            .ok()
            .and_then(|v| v.to_f64())
            .unwrap_or(0.0)
    }
}
