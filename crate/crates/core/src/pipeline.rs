//! Run-level evaluation: rerank each query's candidates with a simulated
//! strategy, score the result and price the calls.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::arch::ArchConfig;
use crate::decimal;
use crate::error::{Error, Result};
use crate::estimator::estimate_trace;
use crate::io::TokenStats;
use crate::metrics::{ndcg_at_k, MetricReport, Qrels, QueryReport, RankedList};
use crate::strategies::{simulate, CallTrace, Relevance, StrategyConfig, StrategyKind};

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub kind: StrategyKind,
    /// NDCG cutoff.
    pub k: usize,
    /// Candidates taken from the top of each run list.
    pub n_docs: usize,
    pub top_k: Option<usize>,
    pub window: Option<usize>,
    pub step: Option<usize>,
    pub repeats: Option<usize>,
    /// Calls used for every query when `kind` is a fixed trace.
    pub fixed: Option<CallTrace>,
    /// Worker threads; 0 picks a default.
    pub jobs: usize,
}

impl EvalOptions {
    pub fn new(kind: StrategyKind) -> Self {
        EvalOptions {
            kind,
            k: 10,
            n_docs: 100,
            top_k: None,
            window: None,
            step: None,
            repeats: None,
            fixed: None,
            jobs: 0,
        }
    }

    fn strategy(&self, stats: &TokenStats, model: &str, qid: &str) -> StrategyConfig {
        let tokens = stats.token_model(self.kind, Some(model), Some(qid));
        let mut cfg = match &self.fixed {
            Some(trace) if self.kind == StrategyKind::FixedTrace => {
                StrategyConfig::fixed_trace(trace.clone())
            }
            _ => StrategyConfig::new(self.kind, tokens),
        };
        if let Some(v) = self.top_k {
            cfg.top_k = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.step {
            cfg.step = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        cfg
    }
}

fn rerank_query(
    list: &RankedList,
    qrels: &Qrels,
    arch: &ArchConfig,
    stats: &TokenStats,
    opts: &EvalOptions,
) -> Result<QueryReport> {
    let n = list.len().min(opts.n_docs);
    let candidates = &list.docs[..n];
    let grades: Vec<u32> = candidates
        .iter()
        .map(|d| qrels.grade(&list.query_id, &d.doc_id))
        .collect();
    let relevance = Relevance::from_grades(&grades);
    let cfg = opts.strategy(stats, &arch.name, &list.query_id);
    let trace = simulate(&cfg, n, &relevance)?;
    let cost = estimate_trace(arch, &trace)?;

    let order: Vec<usize> = trace.final_order.unwrap_or_else(|| (0..n).collect());
    let ids = order
        .iter()
        .map(|&i| candidates[i].doc_id.clone())
        .chain(list.docs[n..].iter().map(|d| d.doc_id.clone()));
    let total = list.len() as u64;
    let scored = ids
        .enumerate()
        .map(|(pos, id)| (id, decimal::ratio(total - pos as u64, 1)))
        .collect();
    let reranked = RankedList::from_scores(list.query_id.clone(), scored);
    let ndcg = ndcg_at_k(&reranked, qrels, opts.k)?;
    Ok(QueryReport {
        qid: list.query_id.clone(),
        ndcg: ndcg.value,
        cost,
    })
}

/// Evaluates one strategy on one model over the queries present in both the
/// run and the judgments. Queries are reported in id order.
pub fn evaluate(
    dataset: &str,
    run: &[RankedList],
    qrels: &Qrels,
    arch: &ArchConfig,
    stats: &TokenStats,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    if opts.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if opts.n_docs == 0 {
        return Err(Error::InvalidArgument("n_docs must be at least 1".into()));
    }
    let mut warnings = Vec::new();
    let mut lists: BTreeMap<&str, &RankedList> = BTreeMap::new();
    for list in run {
        if !qrels.contains_query(&list.query_id) {
            warnings.push(format!("query {} has no judgments; skipped", list.query_id));
        } else if list.is_empty() {
            warnings.push(format!("query {} has no candidates; skipped", list.query_id));
        } else {
            lists.insert(&list.query_id, list);
        }
    }
    for qid in qrels.query_ids() {
        if !run.iter().any(|l| l.query_id == qid) {
            warnings.push(format!("query {qid} is judged but missing from the run"));
        }
    }
    let too_small: Vec<&str> = if opts.kind.compares_documents() {
        lists
            .iter()
            .filter(|(_, l)| l.len().min(opts.n_docs) < 2)
            .map(|(q, _)| *q)
            .collect()
    } else {
        Vec::new()
    };
    for q in too_small {
        warnings.push(format!("query {q} has fewer than 2 candidates; skipped"));
        lists.remove(q);
    }
    if lists.is_empty() {
        return Err(Error::EmptyReport);
    }

    let work: Vec<&RankedList> = lists.into_values().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    let queries = pool.install(|| {
        work.par_iter()
            .map(|list| rerank_query(list, qrels, arch, stats, opts))
            .collect::<Result<Vec<_>>>()
    })?;

    Ok(MetricReport {
        dataset: dataset.to_string(),
        model: arch.name.clone(),
        strategy: match &opts.fixed {
            Some(t) if opts.kind == StrategyKind::FixedTrace => t.strategy_name.clone(),
            _ => opts.kind.name().to_string(),
        },
        k: opts.k,
        queries,
        warnings,
    })
}
