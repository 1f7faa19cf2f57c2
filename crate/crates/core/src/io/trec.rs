use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::{read_text, Warning};
use crate::decimal::{self, Rational};
use crate::error::{Error, Result};
use crate::metrics::{Qrels, RankedList};

/// Parsed value plus the warnings raised while reading it.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, cols)| !cols.is_empty())
}

/// Reads a 6-column TREC run: `qid Q0 docid rank score tag`.
///
/// Lists come back sorted by query id. A query whose ranks disagree with its
/// scores is re-ranked by score with a warning.
pub fn parse_run_str(text: &str) -> Result<Parsed<Vec<RankedList>>> {
    struct Entry {
        doc: String,
        rank: u32,
        score: Rational,
    }
    let mut by_query: BTreeMap<String, Vec<Entry>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut warnings = Vec::new();

    for (line, cols) in content_lines(text) {
        if cols.len() != 6 {
            return Err(Error::parse(
                line,
                format!("expected 6 columns (qid Q0 docid rank score tag), found {}", cols.len()),
            ));
        }
        let rank: u32 = cols[3]
            .parse()
            .map_err(|_| Error::parse(line, format!("rank '{}' is not a non-negative integer", cols[3])))?;
        let score = decimal::parse_decimal(cols[4])
            .ok_or_else(|| Error::parse(line, format!("score '{}' is not a number", cols[4])))?;
        let (qid, doc) = (cols[0].to_string(), cols[2].to_string());
        if !seen.insert((qid.clone(), doc.clone())) {
            warnings.push(Warning::at(line, format!("duplicate document {doc} for query {qid} ignored")));
            continue;
        }
        by_query.entry(qid).or_default().push(Entry { doc, rank, score });
    }

    let lists = by_query
        .into_iter()
        .map(|(qid, mut entries)| {
            entries.sort_by_key(|e| e.rank);
            let given: Vec<String> = entries.iter().map(|e| e.doc.clone()).collect();
            let contiguous = entries.iter().enumerate().all(|(i, e)| e.rank as usize == i + 1);
            let list = RankedList::from_scores(
                qid.clone(),
                entries.into_iter().map(|e| (e.doc, e.score)).collect(),
            );
            if !contiguous || list.doc_ids().ne(given.iter().map(String::as_str)) {
                warnings.push(Warning::new(format!(
                    "query {qid}: ranks disagree with scores; re-ranked by score"
                )));
            }
            list
        })
        .collect();
    Ok(Parsed {
        value: lists,
        warnings,
    })
}

pub fn parse_run(path: &Path) -> Result<Parsed<Vec<RankedList>>> {
    parse_run_str(&read_text(path)?).map_err(|e| e.with_path(path))
}

/// Reads 4-column TREC qrels: `qid iter docid grade`. Negative grades are
/// clamped to 0 and a repeated pair keeps its last grade, both with warnings.
pub fn parse_qrels_str(text: &str) -> Result<Parsed<Qrels>> {
    let mut qrels = Qrels::new();
    let mut warnings = Vec::new();
    for (line, cols) in content_lines(text) {
        if cols.len() != 4 {
            return Err(Error::parse(
                line,
                format!("expected 4 columns (qid iter docid grade), found {}", cols.len()),
            ));
        }
        let raw: i64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(line, format!("grade '{}' is not an integer", cols[3])))?;
        let grade = if raw < 0 {
            warnings.push(Warning::at(line, format!("negative grade {raw} clamped to 0")));
            0
        } else {
            u32::try_from(raw).map_err(|_| Error::parse(line, format!("grade {raw} too large")))?
        };
        if let Some(prev) = qrels.insert(cols[0], cols[2], grade) {
            warnings.push(Warning::at(
                line,
                format!("duplicate judgment for {} {} (was {prev}); keeping {grade}", cols[0], cols[2]),
            ));
        }
    }
    Ok(Parsed {
        value: qrels,
        warnings,
    })
}

pub fn parse_qrels(path: &Path) -> Result<Parsed<Qrels>> {
    parse_qrels_str(&read_text(path)?).map_err(|e| e.with_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_run() {
        let p = parse_run_str("q1 Q0 d7 1 12.5 bm25\n").unwrap();
        assert_eq!(p.value.len(), 1);
        let doc = &p.value[0].docs[0];
        assert_eq!((doc.doc_id.as_str(), doc.rank), ("d7", 1));
        assert_eq!(doc.score, decimal::ratio(25, 2));
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn interleaved_queries_are_grouped() {
        let text = "q2 Q0 a 1 3 t\nq1 Q0 b 1 9 t\nq2 Q0 c 2 2 t\nq1 Q0 d 2 1 t\n";
        let p = parse_run_str(text).unwrap();
        let ids: Vec<_> = p.value.iter().map(|l| l.query_id.as_str()).collect();
        assert_eq!(ids, ["q1", "q2"]);
        assert_eq!(p.value[1].doc_ids().collect::<Vec<_>>(), ["a", "c"]);
    }

    #[test]
    fn five_columns_is_located_error() {
        let err = parse_run_str("q1 Q0 d7 1 12.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn inconsistent_ranks_are_rescored() {
        let p = parse_run_str("q1 Q0 a 1 1.0 t\nq1 Q0 b 2 5.0 t\n").unwrap();
        assert_eq!(p.value[0].doc_ids().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(p.warnings.len(), 1);
        p.value[0].validate().unwrap();
    }

    #[test]
    fn qrels_basic_and_warnings() {
        let p = parse_qrels_str("q1 0 d7 2\n").unwrap();
        assert_eq!(p.value.grade("q1", "d7"), 2);

        let p = parse_qrels_str("q1 0 d7 2\nq1 0 d7 1\n").unwrap();
        assert_eq!(p.value.grade("q1", "d7"), 1);
        assert_eq!(p.warnings.len(), 1);

        let p = parse_qrels_str("q1 0 d7 -1\n").unwrap();
        assert_eq!(p.value.grade("q1", "d7"), 0);
        assert_eq!(p.warnings[0].line, Some(1));

        let err = parse_qrels_str("q1 0 d7 2\nq1 0 d8 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
