mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rerank_flops::decimal::{self, Rational};
use rerank_flops::estimator::{breakdown, estimate_trace, Breakdown};
use rerank_flops::io::{self, ReportFormat, Table2, TokenStats};
use rerank_flops::metrics::MetricReport;
use rerank_flops::oracle::oracle_flops_call;
use rerank_flops::strategies::trace_stats;
use rerank_flops::{
    evaluate, simulate, ArchConfig, CallSpec, CallTrace, EvalOptions, Registry, Relevance,
    StrategyConfig, StrategyKind,
};
use serde::Deserialize;
use serde_json::json;

use crate::config::FileConfig;

/// FLOPs cost model for LLM rerankers.
///
/// Models are looked up in the bundled registry, in the directory named by
/// RERANK_FLOPS_REGISTRY, or read from a TOML path.
#[derive(Parser)]
#[command(name = "rerank-flops", version, about)]
struct Cli {
    /// TOML file with defaults for any flag, one table per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// FLOPs of a single call (or a call trace) with a per-term breakdown.
    Estimate(EstimateArgs),
    /// Replay a reranking strategy over synthetic candidates and price it.
    Simulate(SimulateArgs),
    /// Rerank a TREC run with a simulated strategy; report NDCG, cost, RPP and QPP.
    Evaluate(EvaluateArgs),
    /// Re-emit saved reports, or compare them with the published results snapshot.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    /// Registry name or path to a model TOML.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n_ctx: Option<u64>,
    #[arg(long)]
    n_opt: Option<u64>,
    /// Sum over a call trace file instead of one call.
    #[arg(long, conflicts_with_all = ["n_ctx", "n_opt"])]
    trace: Option<PathBuf>,
    /// text or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, hide = true)]
    #[serde(default)]
    oracle_check: bool,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    model: Option<String>,
    /// Bundled statistics name (dl19, dl20) or a statistics TOML path.
    #[arg(long)]
    stats: Option<String>,
    /// Seed for the synthetic relevance order.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Call trace used by the `fixed` strategy.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the simulated calls as a trace file.
    #[arg(long)]
    emit_trace: Option<PathBuf>,
    /// text or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateArgs {
    /// TREC run file (qid Q0 docid rank score tag).
    #[arg(long)]
    run: Option<PathBuf>,
    /// TREC qrels file (qid iter docid grade).
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    stats: Option<String>,
    /// Dataset label for the report; defaults to the statistics' dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// NDCG cutoff.
    #[arg(long)]
    k: Option<usize>,
    /// Candidates reranked per query.
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// markdown, csv or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArgs {
    /// Report JSON written by `evaluate --format json`.
    #[arg(long)]
    #[serde(default)]
    input: Vec<PathBuf>,
    /// Compare against a bundled snapshot (only `table2`). Without inputs the
    /// snapshot's own call counts and token averages are priced.
    #[arg(long)]
    against: Option<String>,
    /// markdown, csv or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn registry() -> Result<Registry> {
    Ok(Registry::from_env()?)
}

fn model(name: Option<&str>, default: &str) -> Result<ArchConfig> {
    Ok(registry()?.resolve(name.unwrap_or(default))?)
}

fn kind(name: Option<&str>) -> Result<StrategyKind> {
    let name = name.ok_or_else(|| anyhow!("--strategy is required"))?;
    Ok(name.parse()?)
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn text_or_json(format: Option<&str>) -> Result<bool> {
    match format.unwrap_or("text") {
        "text" => Ok(false),
        "json" => Ok(true),
        other => bail!("unknown format '{other}' (text, json)"),
    }
}

fn pf(flops: u128) -> String {
    decimal::format_significant(&decimal::ratio(flops, rerank_flops::estimator::PETA), 6)
}

fn add(a: Breakdown, b: Breakdown) -> Breakdown {
    Breakdown {
        ctx_weights: a.ctx_weights + b.ctx_weights,
        ctx_attention: a.ctx_attention + b.ctx_attention,
        cross_kv: a.cross_kv + b.cross_kv,
        opt_weights: a.opt_weights + b.opt_weights,
        opt_attention: a.opt_attention + b.opt_attention,
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let json_out = text_or_json(args.format.as_deref())?;
    let cfg = model(args.model.as_deref(), "flan-t5-large")?;
    let trace = match &args.trace {
        Some(path) => io::parse_trace(path)?,
        None => {
            let call = CallSpec::new(
                args.n_ctx.ok_or_else(|| anyhow!("--n-ctx is required without --trace"))?,
                args.n_opt.unwrap_or(0),
            );
            CallTrace::new("single", 0, vec![call])
        }
    };
    let cost = estimate_trace(&cfg, &trace)?;
    let parts = trace
        .calls
        .iter()
        .map(|c| breakdown(&cfg, c))
        .fold(Breakdown::default(), add);
    if parts.total() != cost.flops_exact {
        return Err(rerank_flops::Error::Invariant("breakdown does not sum to the total".into()).into());
    }
    if args.oracle_check {
        for call in &trace.calls {
            let brute = oracle_flops_call(&cfg, call)?;
            let closed = breakdown(&cfg, call).total();
            if brute != closed {
                return Err(rerank_flops::Error::Invariant(format!(
                    "closed form {closed} != oracle {brute} for n_ctx {} n_opt {}",
                    call.n_ctx, call.n_opt
                ))
                .into());
            }
        }
    }

    if json_out {
        let out = json!({
            "model": cfg.name,
            "family": cfg.family.as_str(),
            "calls": cost.calls,
            "in_tokens": cost.in_tokens_total.to_string(),
            "out_tokens": cost.out_tokens_total.to_string(),
            "flops": cost.flops_exact.to_string(),
            "petaflops": pf(cost.flops_exact),
            "breakdown": {
                "prompt_weights": parts.ctx_weights.to_string(),
                "prompt_attention": parts.ctx_attention.to_string(),
                "cross_kv": parts.cross_kv.to_string(),
                "output_weights": parts.opt_weights.to_string(),
                "output_attention": parts.opt_attention.to_string(),
            },
            "oracle_checked": args.oracle_check,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    println!("model             {} ({})", cfg.name, cfg.family.as_str());
    if trace.calls.len() == 1 {
        println!("n_ctx             {}", trace.calls[0].n_ctx);
        println!("n_opt             {}", trace.calls[0].n_opt);
    } else {
        println!("calls             {}", cost.calls);
        println!("in tokens         {}", cost.in_tokens_total);
        println!("out tokens        {}", cost.out_tokens_total);
    }
    println!("flops             {}", cost.flops_exact);
    println!("petaflops         {}", pf(cost.flops_exact));
    println!("breakdown");
    println!("  prompt weights    {}", parts.ctx_weights);
    println!("  prompt attention  {}", parts.ctx_attention);
    println!("  cross-attn kv     {}", parts.cross_kv);
    println!("  output weights    {}", parts.opt_weights);
    println!("  output attention  {}", parts.opt_attention);
    if args.oracle_check {
        println!("oracle            agrees");
    }
    Ok(())
}

fn strategy_config(
    kind: StrategyKind,
    stats: &TokenStats,
    model: &str,
    trace: Option<&Path>,
) -> Result<StrategyConfig> {
    if kind == StrategyKind::FixedTrace {
        let path = trace.ok_or_else(|| anyhow!("the fixed strategy needs --trace"))?;
        return Ok(StrategyConfig::fixed_trace(io::parse_trace(path)?));
    }
    Ok(StrategyConfig::new(kind, stats.token_model(kind, Some(model), None)))
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let json_out = text_or_json(args.format.as_deref())?;
    let kind = kind(args.strategy.as_deref())?;
    let cfg = model(args.model.as_deref(), "flan-t5-large")?;
    let stats = TokenStats::resolve(args.stats.as_deref().unwrap_or("trec-dl19"))?;
    let mut strategy = strategy_config(kind, &stats, &cfg.name, args.trace.as_deref())?;
    if let Some(v) = args.window {
        strategy.window = v;
    }
    if let Some(v) = args.step {
        strategy.step = v;
    }
    if let Some(v) = args.repeats {
        strategy.repeats = v;
    }
    if let Some(v) = args.top_k {
        strategy.top_k = v;
    }
    let n_docs = args
        .n_docs
        .or(strategy.fixed.as_ref().map(|t| t.n_docs).filter(|&n| n > 0))
        .or(stats.n_docs)
        .unwrap_or(100);
    let seed = args.seed.unwrap_or(0);
    let trace = simulate(&strategy, n_docs, &Relevance::random(n_docs, seed))?;
    let cost = estimate_trace(&cfg, &trace)?;
    let ts = trace_stats(&trace)?;
    if let Some(path) = &args.emit_trace {
        fs::write(path, io::emit_trace(&trace)).with_context(|| format!("writing {}", path.display()))?;
    }

    let in_avg = decimal::format_trimmed(&ts.in_avg, 2);
    let out_avg = decimal::format_trimmed(&ts.out_avg, 2);
    if json_out {
        let out = json!({
            "strategy": trace.strategy_name,
            "model": cfg.name,
            "n_docs": n_docs,
            "seed": seed,
            "calls": ts.calls,
            "in_avg": in_avg,
            "out_avg": out_avg,
            "flops": cost.flops_exact.to_string(),
            "petaflops": pf(cost.flops_exact),
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    println!("strategy   {}", trace.strategy_name);
    println!("model      {}", cfg.name);
    println!("n_docs     {n_docs}");
    println!("seed       {seed}");
    println!("calls      {}", ts.calls);
    println!("in avg     {in_avg}");
    println!("out avg    {out_avg}");
    println!("flops      {}", cost.flops_exact);
    println!("petaflops  {}", pf(cost.flops_exact));
    Ok(())
}

fn report_format(name: Option<&str>) -> Result<ReportFormat> {
    Ok(name.unwrap_or("markdown").parse()?)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let format = report_format(args.format.as_deref())?;
    let run_path = args.run.as_deref().ok_or_else(|| anyhow!("--run is required"))?;
    let qrels_path = args.qrels.as_deref().ok_or_else(|| anyhow!("--qrels is required"))?;
    let kind = kind(args.strategy.as_deref())?;
    let cfg = model(args.model.as_deref(), "flan-t5-large")?;
    let stats = TokenStats::resolve(args.stats.as_deref().unwrap_or("trec-dl19"))?;

    let run = io::parse_run(run_path)?;
    let qrels = io::parse_qrels(qrels_path)?;
    for w in run.warnings.iter() {
        eprintln!("warning: {}: {w}", run_path.display());
    }
    for w in qrels.warnings.iter() {
        eprintln!("warning: {}: {w}", qrels_path.display());
    }

    let mut opts = EvalOptions::new(kind);
    opts.k = args.k.unwrap_or(10);
    opts.n_docs = args.n_docs.or(stats.n_docs).unwrap_or(100);
    opts.top_k = args.top_k;
    opts.window = args.window;
    opts.step = args.step;
    opts.repeats = args.repeats;
    opts.jobs = args.jobs.unwrap_or(0);
    if kind == StrategyKind::FixedTrace {
        let path = args.trace.as_deref().ok_or_else(|| anyhow!("the fixed strategy needs --trace"))?;
        opts.fixed = Some(io::parse_trace(path)?);
    }
    let dataset = args.dataset.clone().unwrap_or_else(|| stats.dataset.clone());
    let report = evaluate(&dataset, &run.value, &qrels.value, &cfg, &stats, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let bytes = io::emit_report(std::slice::from_ref(&report), format)?;
    write_out(args.output.as_deref(), &bytes)
}

struct Deviation {
    dataset: String,
    model: String,
    method: String,
    metric: &'static str,
    ours: String,
    published: String,
    relative: Rational,
}

fn deviation(
    row: &rerank_flops::io::Table2Row,
    metric: &'static str,
    ours: &Rational,
    published: &Rational,
    decimals: u32,
) -> Deviation {
    let relative = if published.is_integer() && *published == Rational::from_integer(0.into()) {
        Rational::from_integer(0.into())
    } else {
        (ours - published) / published
    };
    Deviation {
        dataset: row.dataset.clone(),
        model: row.model.clone(),
        method: row.method.clone(),
        metric,
        ours: decimal::format_fixed(ours, decimals),
        published: decimal::format_fixed(published, decimals),
        relative,
    }
}

fn compare_reports(reports: &[MetricReport], table: &Table2) -> Result<Vec<Deviation>> {
    let mut out = Vec::new();
    for r in reports {
        let row = match table.find(&r.dataset, &r.model, &r.strategy) {
            Ok(row) => row,
            Err(_) => {
                eprintln!(
                    "warning: no snapshot row for {}/{}/{}; skipped",
                    r.dataset, r.model, r.strategy
                );
                continue;
            }
        };
        out.push(deviation(row, "ndcg", &r.mean_ndcg()?, &row.ndcg(), 3));
        out.push(deviation(row, "llm_calls", &r.mean_calls()?, &row.llm_calls(), 1));
        out.push(deviation(row, "in", &r.in_avg()?, &row.in_tokens(), 2));
        out.push(deviation(row, "out", &r.out_avg()?, &row.out_tokens(), 2));
        out.push(deviation(row, "pflops", &r.mean_petaflops()?, &row.pflops(), 3));
        out.push(deviation(row, "rpp", &r.rpp()?, &row.rpp(), 2));
        out.push(deviation(row, "qpp", &r.qpp()?, &row.qpp(), 3));
    }
    Ok(out)
}

fn replay_snapshot(table: &Table2) -> Result<Vec<Deviation>> {
    let registry = registry()?;
    let mut out = Vec::new();
    for row in &table.rows {
        let cfg = registry.get(&row.model)?;
        let cost = estimate_trace(cfg, &row.trace())?;
        let ours = cost.petaflops_exact();
        let rpp = rerank_flops::metrics::rpp_pf(&row.ndcg(), &ours)?;
        let qpp = rerank_flops::metrics::qpp_pf(std::slice::from_ref(&ours))?;
        out.push(deviation(row, "pflops", &ours, &row.pflops(), 3));
        out.push(deviation(row, "rpp", &rpp, &row.rpp(), 2));
        out.push(deviation(row, "qpp", &qpp, &row.qpp(), 3));
    }
    Ok(out)
}

fn percent(v: &Rational) -> String {
    let pct = v * Rational::from_integer(100.into());
    let s = decimal::format_fixed(&pct, 2);
    if s.starts_with('-') {
        format!("{s}%")
    } else {
        format!("+{s}%")
    }
}

fn emit_deviations(rows: &[Deviation], format: ReportFormat) -> Result<Vec<u8>> {
    const HEADER: [&str; 7] = ["dataset", "model", "method", "metric", "ours", "published", "deviation"];
    let cells = |d: &Deviation| {
        [
            d.dataset.clone(),
            d.model.clone(),
            d.method.clone(),
            d.metric.to_string(),
            d.ours.clone(),
            d.published.clone(),
            percent(&d.relative),
        ]
    };
    match format {
        ReportFormat::Markdown => {
            let mut s = format!("| {} |\n|{}\n", HEADER.join(" | "), "---|".repeat(HEADER.len()));
            for d in rows {
                s.push_str(&format!("| {} |\n", cells(d).join(" | ")));
            }
            Ok(s.into_bytes())
        }
        ReportFormat::Csv => {
            let mut s = format!("{}\n", HEADER.join(","));
            for d in rows {
                s.push_str(&cells(d).join(","));
                s.push('\n');
            }
            Ok(s.into_bytes())
        }
        ReportFormat::Json => {
            let items: Vec<_> = rows
                .iter()
                .map(|d| {
                    let c = cells(d);
                    json!({
                        "dataset": c[0], "model": c[1], "method": c[2], "metric": c[3],
                        "ours": c[4], "published": c[5], "deviation": c[6],
                    })
                })
                .collect();
            let mut out = serde_json::to_vec_pretty(&items)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let format = report_format(args.format.as_deref())?;
    let mut reports = Vec::new();
    for path in &args.input {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        reports.extend(io::parse_report(&bytes).with_context(|| path.display().to_string())?);
    }
    let bytes = match args.against.as_deref() {
        None => {
            if reports.is_empty() {
                bail!("nothing to report: give --input and/or --against table2");
            }
            io::emit_report(&reports, format)?
        }
        Some("table2") => {
            let table = Table2::bundled();
            let rows = if reports.is_empty() {
                replay_snapshot(&table)?
            } else {
                compare_reports(&reports, &table)?
            };
            if rows.is_empty() {
                bail!("no report matched a snapshot row");
            }
            emit_deviations(&rows, format)?
        }
        Some(other) => bail!("unknown snapshot '{other}' (only table2 is bundled)"),
    };
    write_out(args.output.as_deref(), &bytes)
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a.merge(file.estimate)),
        Command::Simulate(a) => cmd_simulate(a.merge(file.simulate)),
        Command::Evaluate(a) => cmd_evaluate(a.merge(file.evaluate)),
        Command::Report(a) => cmd_report(a.merge(file.report)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let internal = err
                .chain()
                .filter_map(|e| e.downcast_ref::<rerank_flops::Error>())
                .any(rerank_flops::Error::is_internal);
            ExitCode::from(if internal { 2 } else { 1 })
        }
    }
}
