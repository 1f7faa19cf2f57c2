//! Model-free simulation of reranking strategies.
//!
//! Each simulator replays the control flow of its reranking algorithm over a
//! candidate list, resolving every LLM comparison against a ground-truth
//! [`Relevance`] ordering, and records the prompt/output token accounting of
//! each call it would issue.

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decimal::{self, Rational};
use crate::error::{Error, Result};
use crate::estimator::{CallSpec, PromptParts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    PointwiseQlm,
    PointwiseYesNo,
    PairwiseAllpair,
    PairwiseHeapsort,
    PairwiseBubblesort,
    SetwiseHeapsort,
    SetwiseBubblesort,
    ListwiseSlidingWindow,
    ListwiseLikelihood,
    FixedTrace,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 10] = [
        StrategyKind::PointwiseQlm,
        StrategyKind::PointwiseYesNo,
        StrategyKind::PairwiseAllpair,
        StrategyKind::PairwiseHeapsort,
        StrategyKind::PairwiseBubblesort,
        StrategyKind::SetwiseHeapsort,
        StrategyKind::SetwiseBubblesort,
        StrategyKind::ListwiseSlidingWindow,
        StrategyKind::ListwiseLikelihood,
        StrategyKind::FixedTrace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::PointwiseQlm => "pointwise.qlm",
            StrategyKind::PointwiseYesNo => "pointwise.yes_no",
            StrategyKind::PairwiseAllpair => "pairwise.allpair",
            StrategyKind::PairwiseHeapsort => "pairwise.heapsort",
            StrategyKind::PairwiseBubblesort => "pairwise.bubblesort",
            StrategyKind::SetwiseHeapsort => "setwise.heapsort",
            StrategyKind::SetwiseBubblesort => "setwise.bubblesort",
            StrategyKind::ListwiseSlidingWindow => "listwise.generation",
            StrategyKind::ListwiseLikelihood => "listwise.likelihood",
            StrategyKind::FixedTrace => "fixed",
        }
    }

    /// Documents per call: 2 for pairwise, parent plus two children for
    /// setwise, a window of 4 for listwise.
    pub fn default_window(self) -> usize {
        match self {
            StrategyKind::PointwiseQlm | StrategyKind::PointwiseYesNo | StrategyKind::FixedTrace => 1,
            StrategyKind::PairwiseAllpair
            | StrategyKind::PairwiseHeapsort
            | StrategyKind::PairwiseBubblesort => 2,
            StrategyKind::SetwiseHeapsort | StrategyKind::SetwiseBubblesort => 3,
            StrategyKind::ListwiseSlidingWindow | StrategyKind::ListwiseLikelihood => 4,
        }
    }

    /// Average generated tokens per call when no statistics override it.
    pub fn default_n_opt(self) -> Rational {
        match self {
            StrategyKind::PairwiseAllpair
            | StrategyKind::SetwiseHeapsort
            | StrategyKind::SetwiseBubblesort => decimal::ratio(5, 1),
            StrategyKind::PairwiseHeapsort | StrategyKind::PairwiseBubblesort => {
                decimal::ratio(10, 1)
            }
            StrategyKind::ListwiseSlidingWindow => decimal::ratio(21, 2),
            _ => Rational::zero(),
        }
    }

    /// Likelihood-scored kinds read logits and never generate.
    pub fn scores_without_generation(self) -> bool {
        matches!(
            self,
            StrategyKind::PointwiseQlm | StrategyKind::PointwiseYesNo | StrategyKind::ListwiseLikelihood
        )
    }

    pub fn compares_documents(self) -> bool {
        matches!(
            self,
            StrategyKind::PairwiseAllpair
                | StrategyKind::PairwiseHeapsort
                | StrategyKind::PairwiseBubblesort
                | StrategyKind::SetwiseHeapsort
                | StrategyKind::SetwiseBubblesort
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let alias = match s.as_str() {
            "listwise.sliding_window" | "listwise.sliding-window" => "listwise.generation",
            "pointwise.yesno" | "pointwise.yes-no" => "pointwise.yes_no",
            "fixed_trace" | "fixed-trace" | "trace" => "fixed",
            other => other,
        };
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Per-call token model. `n_ctx`, when set, is an average prompt length that
/// replaces the `n_p + n_q + w * l_doc` decomposition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenModel {
    pub n_p: u64,
    pub n_q: u64,
    pub l_doc: Rational,
    pub n_ctx: Option<Rational>,
    pub n_opt: Rational,
}

impl TokenModel {
    pub fn fixed(n_ctx: Rational, n_opt: Rational) -> Self {
        TokenModel {
            n_p: 0,
            n_q: 0,
            l_doc: Rational::zero(),
            n_ctx: Some(n_ctx),
            n_opt,
        }
    }

    pub fn decomposed(n_p: u64, n_q: u64, l_doc: Rational, n_opt: Rational) -> Self {
        TokenModel {
            n_p,
            n_q,
            l_doc,
            n_ctx: None,
            n_opt,
        }
    }

    /// The call at position `index` of a trace, covering `w` documents.
    pub fn call(&self, index: u64, w: usize, generate: bool) -> Result<CallSpec> {
        let n_opt = if generate {
            decimal::spread(&self.n_opt, index)
        } else {
            0
        };
        match &self.n_ctx {
            Some(avg) => Ok(CallSpec::new(decimal::spread(avg, index), n_opt)),
            None => CallSpec::from_parts(
                PromptParts {
                    n_p: self.n_p,
                    n_q: self.n_q,
                    w: w as u64,
                    l_doc: self.l_doc.clone(),
                },
                n_opt,
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// How many leading positions must be correctly ordered.
    pub top_k: usize,
    /// Documents per call for setwise and listwise kinds.
    pub window: usize,
    /// Sliding-window stride.
    pub step: usize,
    /// Sliding-window passes.
    pub repeats: usize,
    pub tokens: TokenModel,
    /// Calls replayed by [`StrategyKind::FixedTrace`].
    pub fixed: Option<CallTrace>,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, tokens: TokenModel) -> Self {
        StrategyConfig {
            kind,
            top_k: 10,
            window: kind.default_window(),
            step: 2,
            repeats: 5,
            tokens,
            fixed: None,
        }
    }

    pub fn fixed_trace(trace: CallTrace) -> Self {
        let mut cfg = Self::new(
            StrategyKind::FixedTrace,
            TokenModel::fixed(Rational::zero(), Rational::zero()),
        );
        cfg.fixed = Some(trace);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidStrategy(msg));
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        match self.kind {
            StrategyKind::PairwiseAllpair
            | StrategyKind::PairwiseHeapsort
            | StrategyKind::PairwiseBubblesort
                if self.window != 2 =>
            {
                return bad(format!("pairwise strategies compare 2 documents, not {}", self.window));
            }
            StrategyKind::SetwiseHeapsort
            | StrategyKind::SetwiseBubblesort
            | StrategyKind::ListwiseSlidingWindow
            | StrategyKind::ListwiseLikelihood
                if self.window < 2 =>
            {
                return bad(format!("{} needs a window of at least 2", self.kind));
            }
            StrategyKind::FixedTrace if self.fixed.is_none() => {
                return bad("fixed strategy needs a trace file".into());
            }
            _ => {}
        }
        if self.step == 0 || self.repeats == 0 {
            return bad("step and repeats must be at least 1".into());
        }
        if self.tokens.l_doc < Rational::zero()
            || self.tokens.n_opt < Rational::zero()
            || self.tokens.n_ctx.as_ref().is_some_and(|v| *v < Rational::zero())
        {
            return bad("token counts must be non-negative".into());
        }
        Ok(())
    }
}

/// Ground-truth relevance of the candidates: `rank_of(i)` is the true rank
/// (0 = most relevant) of the document at initial position `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relevance {
    ranks: Vec<usize>,
}

impl Relevance {
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        let n = ranks.len();
        let mut seen = vec![false; n];
        for &r in &ranks {
            if r >= n || std::mem::replace(&mut seen[r], true) {
                return Err(Error::NotAPermutation(n));
            }
        }
        Ok(Relevance { ranks })
    }

    /// The initial order is already correct.
    pub fn identity(n: usize) -> Self {
        Relevance {
            ranks: (0..n).collect(),
        }
    }

    pub fn random(n: usize, seed: u64) -> Self {
        let mut ranks: Vec<usize> = (0..n).collect();
        ranks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Relevance { ranks }
    }

    /// Orders by grade (higher first); equal grades keep their initial order.
    pub fn from_grades(grades: &[u32]) -> Self {
        let mut by_grade: Vec<usize> = (0..grades.len()).collect();
        by_grade.sort_by_key(|&i| std::cmp::Reverse(grades[i]));
        let mut ranks = vec![0; grades.len()];
        for (rank, &pos) in by_grade.iter().enumerate() {
            ranks[pos] = rank;
        }
        Relevance { ranks }
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn rank_of(&self, doc: usize) -> usize {
        self.ranks[doc]
    }

    fn better(&self, a: usize, b: usize) -> bool {
        self.ranks[a] < self.ranks[b]
    }

    /// Candidate positions sorted from most to least relevant.
    pub fn ideal_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.ranks.len()).collect();
        order.sort_by_key(|&i| self.ranks[i]);
        order
    }
}

/// The calls issued for one query under one strategy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallTrace {
    pub strategy_name: String,
    pub n_docs: usize,
    pub calls: Vec<CallSpec>,
    /// Candidate positions in the order the strategy would output, when known.
    pub final_order: Option<Vec<usize>>,
}

impl CallTrace {
    pub fn new(strategy_name: impl Into<String>, n_docs: usize, calls: Vec<CallSpec>) -> Self {
        CallTrace {
            strategy_name: strategy_name.into(),
            n_docs,
            calls,
            final_order: None,
        }
    }

    /// `n_calls` calls whose prompt and output lengths average `in_avg` and
    /// `out_avg`, e.g. to replay published per-call averages.
    pub fn uniform(
        strategy_name: impl Into<String>,
        n_docs: usize,
        n_calls: u64,
        in_avg: &Rational,
        out_avg: &Rational,
    ) -> Self {
        let calls = (0..n_calls)
            .map(|i| CallSpec::new(decimal::spread(in_avg, i), decimal::spread(out_avg, i)))
            .collect();
        Self::new(strategy_name, n_docs, calls)
    }

    pub fn in_tokens_total(&self) -> u128 {
        self.calls.iter().map(|c| c.n_ctx as u128).sum()
    }

    pub fn out_tokens_total(&self) -> u128 {
        self.calls.iter().map(|c| c.n_opt as u128).sum()
    }

    /// Appends `other`'s calls; the final order no longer describes the whole.
    pub fn concat(mut self, other: CallTrace) -> CallTrace {
        self.calls.extend(other.calls);
        self.n_docs = self.n_docs.max(other.n_docs);
        self.final_order = None;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStats {
    pub calls: u64,
    pub in_avg: Rational,
    pub out_avg: Rational,
}

pub fn trace_stats(trace: &CallTrace) -> Result<TraceStats> {
    let n = trace.calls.len() as u64;
    if n == 0 {
        return Err(Error::EmptyTrace);
    }
    Ok(TraceStats {
        calls: n,
        in_avg: decimal::ratio(trace.in_tokens_total(), n),
        out_avg: decimal::ratio(trace.out_tokens_total(), n),
    })
}

struct Recorder<'a> {
    tokens: &'a TokenModel,
    generate: bool,
    calls: Vec<CallSpec>,
}

impl Recorder<'_> {
    fn call(&mut self, docs: usize) -> Result<()> {
        let spec = self.tokens.call(self.calls.len() as u64, docs, self.generate)?;
        self.calls.push(spec);
        Ok(())
    }
}

/// Simulates `cfg` over `n_docs` candidates whose true order is `relevance`.
pub fn simulate(cfg: &StrategyConfig, n_docs: usize, relevance: &Relevance) -> Result<CallTrace> {
    cfg.validate()?;
    if relevance.len() != n_docs {
        return Err(Error::OrderingLength {
            expected: n_docs,
            got: relevance.len(),
        });
    }
    if n_docs == 0 {
        return Err(Error::InvalidStrategy("no documents to rerank".into()));
    }
    if cfg.kind.compares_documents() && n_docs < 2 {
        return Err(Error::InvalidStrategy(format!(
            "{} needs at least 2 documents",
            cfg.kind
        )));
    }
    if cfg.kind == StrategyKind::FixedTrace {
        let fixed = cfg.fixed.as_ref().expect("validated");
        let mut trace = CallTrace::new(fixed.strategy_name.clone(), n_docs, fixed.calls.clone());
        trace.final_order = None;
        return Ok(trace);
    }

    let mut rec = Recorder {
        tokens: &cfg.tokens,
        generate: !cfg.kind.scores_without_generation(),
        calls: Vec::new(),
    };
    let top_k = cfg.top_k.min(n_docs);
    let order = match cfg.kind {
        StrategyKind::PointwiseQlm | StrategyKind::PointwiseYesNo => {
            for _ in 0..n_docs {
                rec.call(1)?;
            }
            relevance.ideal_order()
        }
        StrategyKind::PairwiseAllpair => {
            // Both presentation orders of every pair.
            for a in 0..n_docs {
                for b in 0..n_docs {
                    if a != b {
                        rec.call(2)?;
                    }
                }
            }
            relevance.ideal_order()
        }
        StrategyKind::PairwiseHeapsort => heapsort(&mut rec, relevance, n_docs, top_k, 2, true)?,
        StrategyKind::SetwiseHeapsort => {
            heapsort(&mut rec, relevance, n_docs, top_k, cfg.window - 1, false)?
        }
        StrategyKind::PairwiseBubblesort | StrategyKind::SetwiseBubblesort => {
            bubblesort(&mut rec, relevance, n_docs, top_k, cfg.window)?
        }
        StrategyKind::ListwiseSlidingWindow | StrategyKind::ListwiseLikelihood => {
            sliding_window(&mut rec, relevance, n_docs, cfg.window, cfg.step, cfg.repeats)?
        }
        StrategyKind::FixedTrace => unreachable!(),
    };
    Ok(CallTrace {
        strategy_name: cfg.kind.name().to_string(),
        n_docs,
        calls: rec.calls,
        final_order: Some(order),
    })
}

/// Max-heap over candidate positions with `arity` children per node, then
/// `top_k` extractions. Pairwise mode spends one call per parent/child
/// comparison; setwise mode one call per node with all its children.
fn heapsort(
    rec: &mut Recorder<'_>,
    rel: &Relevance,
    n: usize,
    top_k: usize,
    arity: usize,
    pairwise: bool,
) -> Result<Vec<usize>> {
    let mut arr: Vec<usize> = (0..n).collect();

    let mut sift = |arr: &mut Vec<usize>, len: usize, mut node: usize| -> Result<()> {
        loop {
            let first = arity * node + 1;
            if first >= len {
                return Ok(());
            }
            let children = first..(first + arity).min(len);
            let mut largest = node;
            if pairwise {
                for c in children {
                    rec.call(2)?;
                    if rel.better(arr[c], arr[largest]) {
                        largest = c;
                    }
                }
            } else {
                rec.call(1 + children.len())?;
                for c in children {
                    if rel.better(arr[c], arr[largest]) {
                        largest = c;
                    }
                }
            }
            if largest == node {
                return Ok(());
            }
            arr.swap(node, largest);
            node = largest;
        }
    };

    for node in (0..=n / arity).rev() {
        sift(&mut arr, n, node)?;
    }
    let mut ranked = 0;
    for end in (1..n).rev() {
        arr.swap(0, end);
        ranked += 1;
        if ranked == top_k {
            break;
        }
        sift(&mut arr, end, 0)?;
    }
    arr.reverse();
    Ok(arr)
}

/// Bottom-to-top bubble passes with groups of `group` documents; the best of
/// each group moves to its front. Stops after `top_k` passes and skips the
/// stretch at the bottom that an unchanged pass proved settled.
fn bubblesort(
    rec: &mut Recorder<'_>,
    rel: &Relevance,
    n: usize,
    top_k: usize,
    group: usize,
) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let group = group.min(n) as isize;
    let n = n as isize;
    let stride = group - 1;
    let initial_start = n - group;
    let mut last_start = initial_start;
    for pass in 0..top_k as isize {
        let mut start = last_start;
        let mut end = last_start + group;
        let mut changed = false;
        loop {
            if start < pass {
                start = pass;
            }
            if end - start < 2 {
                end = (start + group).min(n);
            }
            let window = &order[start as usize..end as usize];
            let len = window.len();
            rec.call(len)?;
            let best = (0..len)
                .min_by_key(|&j| rel.rank_of(window[j]))
                .expect("window is non-empty");
            if best != 0 {
                order.swap(start as usize, start as usize + best);
                if !changed {
                    changed = true;
                    if last_start != initial_start && best == len - 1 {
                        last_start += len as isize - 1;
                    }
                }
            }
            if start == pass {
                break;
            }
            if !changed {
                last_start -= stride;
            }
            start -= stride;
            end -= stride;
        }
    }
    Ok(order)
}

/// `repeats` passes of a `window`-document window moved from the bottom of
/// the list to the top by `step`; each call reorders its window.
fn sliding_window(
    rec: &mut Recorder<'_>,
    rel: &Relevance,
    n: usize,
    window: usize,
    step: usize,
    repeats: usize,
) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let window = window.min(n);
    for _ in 0..repeats {
        let mut start = n - window;
        loop {
            rec.call(window)?;
            order[start..start + window].sort_by_key(|&d| rel.rank_of(d));
            if start == 0 {
                break;
            }
            start = start.saturating_sub(step);
        }
    }
    Ok(order)
}
