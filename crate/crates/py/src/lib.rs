use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rerank_flops::decimal;
use rerank_flops::estimator::{self, CallSpec};
use rerank_flops::io::{self as rio, ReportFormat, TokenStats};
use rerank_flops::metrics::{self, Qrels, RankedList};
use rerank_flops::oracle;
use rerank_flops::strategies::trace_stats;
use rerank_flops::{CallTrace, EvalOptions, Family, Registry, Relevance, Stack, StrategyConfig, StrategyKind};

fn err(e: rerank_flops::Error) -> PyErr {
    if e.is_internal() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn registry() -> PyResult<Registry> {
    Registry::from_env().map_err(err)
}

/// Architecture description: layer count, widths and head counts.
#[pyclass(name = "ArchConfig", module = "rerank_flops", from_py_object)]
#[derive(Clone)]
struct PyArchConfig {
    inner: rerank_flops::ArchConfig,
}

#[pymethods]
impl PyArchConfig {
    #[new]
    #[pyo3(signature = (name, family, n_layer, d_model, d_ff, n_q, n_kv, d_attn=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        family: &str,
        n_layer: u64,
        d_model: u64,
        d_ff: u64,
        n_q: u64,
        n_kv: u64,
        d_attn: Option<u64>,
    ) -> PyResult<Self> {
        let family: Family = family.parse().map_err(err)?;
        let mut cfg = rerank_flops::ArchConfig::new(name, family, n_layer, d_model, d_ff, n_q, n_kv);
        if let Some(d) = d_attn {
            cfg = cfg.and_then(|c| c.with_d_attn(d));
        }
        Ok(Self { inner: cfg.map_err(err)? })
    }

    /// A bundled (or RERANK_FLOPS_REGISTRY) model by name, or a TOML path.
    #[staticmethod]
    fn load(name_or_path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: registry()?.resolve(name_or_path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: rerank_flops::ArchConfig::from_toml(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }
    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.as_str()
    }
    #[getter]
    fn n_layer(&self) -> u64 {
        self.inner.n_layer
    }
    #[getter]
    fn d_model(&self) -> u64 {
        self.inner.d_model
    }
    #[getter]
    fn d_ff(&self) -> u64 {
        self.inner.d_ff
    }
    #[getter]
    fn d_attn(&self) -> u64 {
        self.inner.d_attn()
    }
    #[getter]
    fn n_q(&self) -> u64 {
        self.inner.n_q
    }
    #[getter]
    fn n_kv(&self) -> u64 {
        self.inner.n_kv
    }
    #[getter]
    fn kv_width(&self) -> u64 {
        self.inner.kv_width()
    }

    /// Parameter count of one stack: "decoder", "encoder" or "cross-decoder".
    fn params(&self, stack: &str) -> PyResult<u128> {
        let stack = match stack {
            "decoder" => Stack::Decoder,
            "encoder" => Stack::Encoder,
            "cross-decoder" | "cross_decoder" => Stack::CrossDecoder,
            other => return Err(PyValueError::new_err(format!("unknown stack '{other}'"))),
        };
        self.inner.params(stack).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ArchConfig(name={:?}, family={:?}, n_layer={}, d_model={}, d_ff={}, d_attn={}, n_q={}, n_kv={})",
            self.inner.name,
            self.inner.family.as_str(),
            self.inner.n_layer,
            self.inner.d_model,
            self.inner.d_ff,
            self.inner.d_attn(),
            self.inner.n_q,
            self.inner.n_kv
        )
    }
}

#[pyfunction]
fn models() -> PyResult<Vec<String>> {
    Ok(registry()?.names())
}

#[pyfunction]
fn flops_ctx(cfg: &PyArchConfig, n_ctx: u64) -> u128 {
    estimator::flops_ctx(&cfg.inner, n_ctx)
}

#[pyfunction]
fn flops_opt(cfg: &PyArchConfig, n_ctx: u64, n_opt: u64) -> u128 {
    estimator::flops_opt(&cfg.inner, n_ctx, n_opt)
}

#[pyfunction]
#[pyo3(signature = (cfg, n_ctx, n_opt=0))]
fn flops_call(cfg: &PyArchConfig, n_ctx: u64, n_opt: u64) -> u128 {
    estimator::flops_call(&cfg.inner, &CallSpec::new(n_ctx, n_opt)).flops_exact
}

#[pyfunction]
#[pyo3(signature = (cfg, n_ctx, n_opt=0))]
fn oracle_flops_call(cfg: &PyArchConfig, n_ctx: u64, n_opt: u64) -> PyResult<u128> {
    oracle::oracle_flops_call(&cfg.inner, &CallSpec::new(n_ctx, n_opt)).map_err(err)
}

/// Per-term FLOPs of one call as a dict.
#[pyfunction]
#[pyo3(signature = (cfg, n_ctx, n_opt=0))]
fn breakdown<'py>(py: Python<'py>, cfg: &PyArchConfig, n_ctx: u64, n_opt: u64) -> PyResult<Bound<'py, PyDict>> {
    let b = estimator::breakdown(&cfg.inner, &CallSpec::new(n_ctx, n_opt));
    let d = PyDict::new(py);
    d.set_item("prompt_weights", b.ctx_weights)?;
    d.set_item("prompt_attention", b.ctx_attention)?;
    d.set_item("cross_kv", b.cross_kv)?;
    d.set_item("output_weights", b.opt_weights)?;
    d.set_item("output_attention", b.opt_attention)?;
    d.set_item("total", b.total())?;
    Ok(d)
}

fn trace_dict<'py>(py: Python<'py>, cfg: &rerank_flops::ArchConfig, trace: &CallTrace) -> PyResult<Bound<'py, PyDict>> {
    let cost = estimator::estimate_trace(cfg, trace).map_err(err)?;
    let stats = trace_stats(trace).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("strategy", &trace.strategy_name)?;
    d.set_item("calls", cost.calls)?;
    d.set_item("in_tokens", cost.in_tokens_total)?;
    d.set_item("out_tokens", cost.out_tokens_total)?;
    d.set_item("in_avg", decimal::to_f64(&stats.in_avg))?;
    d.set_item("out_avg", decimal::to_f64(&stats.out_avg))?;
    d.set_item("flops", cost.flops_exact)?;
    d.set_item("petaflops", cost.petaflops())?;
    d.set_item("final_order", trace.final_order.clone())?;
    Ok(d)
}

/// Total cost of a list of `(n_ctx, n_opt)` calls.
#[pyfunction]
fn estimate_trace<'py>(py: Python<'py>, cfg: &PyArchConfig, calls: Vec<(u64, u64)>) -> PyResult<Bound<'py, PyDict>> {
    let calls = calls.into_iter().map(|(c, o)| CallSpec::new(c, o)).collect();
    trace_dict(py, &cfg.inner, &CallTrace::new("trace", 0, calls))
}

/// Simulates a strategy over `n_docs` candidates in a seeded random true order.
#[pyfunction]
#[pyo3(signature = (strategy, n_docs=100, model="flan-t5-large", stats="trec-dl19", seed=0, window=None, step=None, repeats=None, top_k=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    strategy: &str,
    n_docs: usize,
    model: &str,
    stats: &str,
    seed: u64,
    window: Option<usize>,
    step: Option<usize>,
    repeats: Option<usize>,
    top_k: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: StrategyKind = strategy.parse().map_err(err)?;
    let cfg = registry()?.resolve(model).map_err(err)?;
    let stats = TokenStats::resolve(stats).map_err(err)?;
    let mut sc = StrategyConfig::new(kind, stats.token_model(kind, Some(&cfg.name), None));
    if let Some(v) = window {
        sc.window = v;
    }
    if let Some(v) = step {
        sc.step = v;
    }
    if let Some(v) = repeats {
        sc.repeats = v;
    }
    if let Some(v) = top_k {
        sc.top_k = v;
    }
    let trace = rerank_flops::simulate(&sc, n_docs, &Relevance::random(n_docs, seed)).map_err(err)?;
    trace_dict(py, &cfg, &trace)
}

/// NDCG@k of `ranking` (doc ids, best first) against `{doc_id: grade}`.
#[pyfunction]
#[pyo3(signature = (ranking, qrels, k=10))]
fn ndcg_at_k(ranking: Vec<String>, qrels: HashMap<String, u32>, k: usize) -> PyResult<f64> {
    let mut judged = Qrels::new();
    for (doc, grade) in &qrels {
        judged.insert("q", doc, grade.to_owned());
    }
    let n = ranking.len() as u64;
    let scored = ranking
        .into_iter()
        .enumerate()
        .map(|(i, d)| (d, decimal::ratio(n - i as u64, 1)))
        .collect();
    let list = RankedList::from_scores("q", scored);
    Ok(metrics::ndcg_at_k(&list, &judged, k).map_err(err)?.value)
}

/// Metric per PetaFLOP for one query.
#[pyfunction]
fn rpp(metric: f64, flops: u128) -> PyResult<f64> {
    let m = decimal::from_f64(metric).ok_or_else(|| PyValueError::new_err("metric must be finite"))?;
    let cost = estimator::QueryCost {
        flops_exact: flops,
        calls: 1,
        ..Default::default()
    };
    Ok(decimal::to_f64(&metrics::rpp(&m, &cost).map_err(err)?))
}

/// Queries per PetaFLOP over per-query FLOPs.
#[pyfunction]
fn qpp(flops: Vec<u128>) -> PyResult<f64> {
    let costs: Vec<estimator::QueryCost> = flops
        .into_iter()
        .map(|f| estimator::QueryCost {
            flops_exact: f,
            calls: 1,
            ..Default::default()
        })
        .collect();
    Ok(decimal::to_f64(&metrics::qpp(&costs).map_err(err)?))
}

/// Runs the evaluation pipeline on TREC files and returns the rendered report.
#[pyfunction]
#[pyo3(signature = (run, qrels, strategy, model="flan-t5-large", stats="trec-dl19", k=10, n_docs=100, jobs=0, format="json"))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    run: PathBuf,
    qrels: PathBuf,
    strategy: &str,
    model: &str,
    stats: &str,
    k: usize,
    n_docs: usize,
    jobs: usize,
    format: &str,
) -> PyResult<String> {
    let kind: StrategyKind = strategy.parse().map_err(err)?;
    let format: ReportFormat = format.parse().map_err(err)?;
    let cfg = registry()?.resolve(model).map_err(err)?;
    let stats = TokenStats::resolve(stats).map_err(err)?;
    let run = rio::parse_run(&run).map_err(err)?.value;
    let qrels = rio::parse_qrels(&qrels).map_err(err)?.value;
    let mut opts = EvalOptions::new(kind);
    opts.k = k;
    opts.n_docs = n_docs;
    opts.jobs = jobs;
    let report = rerank_flops::evaluate(&stats.dataset, &run, &qrels, &cfg, &stats, &opts).map_err(err)?;
    let bytes = rio::emit_report(&[report], format).map_err(err)?;
    String::from_utf8(bytes).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "rerank_flops")]
fn rerank_flops_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyArchConfig>()?;
    m.add_function(wrap_pyfunction!(models, m)?)?;
    m.add_function(wrap_pyfunction!(flops_ctx, m)?)?;
    m.add_function(wrap_pyfunction!(flops_opt, m)?)?;
    m.add_function(wrap_pyfunction!(flops_call, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_flops_call, m)?)?;
    m.add_function(wrap_pyfunction!(breakdown, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(rpp, m)?)?;
    m.add_function(wrap_pyfunction!(qpp, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
