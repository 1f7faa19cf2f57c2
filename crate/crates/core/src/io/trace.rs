use std::fmt::Write as _;
use std::path::Path;

use super::read_text;
use crate::error::{Error, Result};
use crate::estimator::CallSpec;
use crate::strategies::CallTrace;

/// Reads a fixed call trace:
///
/// ```text
/// strategy tourrank 100
/// 1652 28
/// 1650 27
/// ```
///
/// The header names the strategy and optionally the candidate count; each
/// following line is one call's `n_ctx n_opt`. Blank lines and `#` comments
/// are skipped.
pub fn parse_trace_str(text: &str) -> Result<CallTrace> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing 'strategy <name>' header"))?;
    let cols: Vec<&str> = header.split_whitespace().collect();
    if cols.first() != Some(&"strategy") || !(2..=3).contains(&cols.len()) {
        return Err(Error::parse(header_line, "expected header 'strategy <name> [n_docs]'"));
    }
    let n_docs = match cols.get(2) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::parse(header_line, format!("n_docs '{v}' is not an integer")))?,
        None => 0,
    };

    let mut calls = Vec::new();
    for (line, l) in lines {
        let cols: Vec<&str> = l.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(Error::parse(line, format!("expected 'n_ctx n_opt', found {} columns", cols.len())));
        }
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::parse(line, format!("'{s}' is not a non-negative integer")))
        };
        calls.push(CallSpec::new(num(cols[0])?, num(cols[1])?));
    }
    if calls.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(CallTrace::new(cols[1], n_docs, calls))
}

pub fn parse_trace(path: &Path) -> Result<CallTrace> {
    parse_trace_str(&read_text(path)?).map_err(|e| e.with_path(path))
}

pub fn emit_trace(trace: &CallTrace) -> String {
    let mut out = format!("strategy {} {}\n", trace.strategy_name, trace.n_docs);
    for c in &trace.calls {
        let _ = writeln!(out, "{} {}", c.n_ctx, c.n_opt);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_header_and_calls() {
        let t = parse_trace_str("# IRL\nstrategy irl 100\n4469 0\n\n4470 0 # second\n").unwrap();
        assert_eq!(t.strategy_name, "irl");
        assert_eq!(t.n_docs, 100);
        assert_eq!(t.calls, vec![CallSpec::new(4469, 0), CallSpec::new(4470, 0)]);
        assert_eq!(parse_trace_str(&emit_trace(&t)).unwrap(), t);
    }

    #[test]
    fn errors_are_located() {
        assert!(matches!(parse_trace_str("1 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_trace_str("strategy x\n1 2\n3\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(parse_trace_str("strategy x\n"), Err(Error::EmptyTrace)));
        assert!(parse_trace_str("").is_err());
    }
}
