use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_text;
use crate::decimal::{Decimal, Rational};
use crate::error::{Error, Result};
use crate::strategies::{StrategyKind, TokenModel};

/// Token counts at one level of a statistics file. Unset fields inherit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEntry {
    pub n_p: Option<u64>,
    pub n_q: Option<u64>,
    pub l_doc: Option<Decimal>,
    /// Average prompt length per call; replaces the decomposition.
    pub n_ctx: Option<Decimal>,
    pub n_opt: Option<Decimal>,
}

impl TokenEntry {
    fn apply(&self, model: &mut TokenModel) {
        let decomposes = self.n_p.is_some() || self.n_q.is_some() || self.l_doc.is_some();
        if let Some(v) = self.n_p {
            model.n_p = v;
        }
        if let Some(v) = self.n_q {
            model.n_q = v;
        }
        if let Some(v) = &self.l_doc {
            model.l_doc = v.0.clone();
        }
        match &self.n_ctx {
            Some(v) => model.n_ctx = Some(v.0.clone()),
            None if decomposes => model.n_ctx = None,
            None => {}
        }
        if let Some(v) = &self.n_opt {
            model.n_opt = v.0.clone();
        }
    }

    fn negative(&self) -> bool {
        let zero = Rational::from_integer(0.into());
        [&self.l_doc, &self.n_ctx, &self.n_opt]
            .into_iter()
            .flatten()
            .any(|d| d.0 < zero)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEntry {
    #[serde(default)]
    strategies: BTreeMap<String, TokenEntry>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryEntry {
    n_p: Option<u64>,
    n_q: Option<u64>,
    l_doc: Option<Decimal>,
    n_ctx: Option<Decimal>,
    n_opt: Option<Decimal>,
    #[serde(default)]
    strategies: BTreeMap<String, TokenEntry>,
}

impl QueryEntry {
    fn base(&self) -> TokenEntry {
        TokenEntry {
            n_p: self.n_p,
            n_q: self.n_q,
            l_doc: self.l_doc.clone(),
            n_ctx: self.n_ctx.clone(),
            n_opt: self.n_opt.clone(),
        }
    }
}

/// Token statistics for a dataset.
///
/// Layers, from weakest to strongest: built-in per-strategy output lengths,
/// `[defaults]`, `[strategies."<kind>"]`, `[models."<model>".strategies."<kind>"]`,
/// `[queries."<qid>"]` and `[queries."<qid>".strategies."<kind>"]`. A layer
/// that sets `n_p`, `n_q` or `l_doc` without `n_ctx` switches back to the
/// per-call decomposition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenStats {
    #[serde(default)]
    pub dataset: String,
    pub n_docs: Option<usize>,
    #[serde(default)]
    defaults: TokenEntry,
    #[serde(default)]
    strategies: BTreeMap<String, TokenEntry>,
    #[serde(default)]
    models: BTreeMap<String, ModelEntry>,
    #[serde(default)]
    queries: BTreeMap<String, QueryEntry>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("trec-dl19", include_str!("../../data/stats/trec-dl19.toml")),
    ("trec-dl20", include_str!("../../data/stats/trec-dl20.toml")),
];

impl TokenStats {
    pub fn from_toml(text: &str) -> Result<Self> {
        let stats: TokenStats = toml::from_str(text).map_err(|e| Error::Format {
            path: None,
            msg: e.message().to_string(),
        })?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?).map_err(|e| e.with_path(path))
    }

    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    /// Bundled statistics by name (`trec-dl19`, `dl19`, ...).
    pub fn bundled(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_lowercase();
        let key = if key.starts_with("trec-") { key } else { format!("trec-{key}") };
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == key)
            .ok_or_else(|| Error::InvalidArgument(format!(
                "no bundled statistics '{name}'; available: {}",
                Self::bundled_names().join(", ")
            )))?;
        Ok(Self::from_toml(text).expect("bundled statistics are valid"))
    }

    /// A bundled name, or else a path to a statistics file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.is_file() {
            Self::from_path(path)
        } else {
            Self::bundled(name_or_path)
        }
    }

    fn validate(&self) -> Result<()> {
        let mut entries: Vec<(&String, &TokenEntry)> = self.strategies.iter().collect();
        for m in self.models.values() {
            entries.extend(m.strategies.iter());
        }
        for q in self.queries.values() {
            entries.extend(q.strategies.iter());
        }
        for (name, entry) in &entries {
            name.parse::<StrategyKind>()?;
            if entry.negative() {
                return Err(Error::Format {
                    path: None,
                    msg: format!("negative token count for {name}"),
                });
            }
        }
        let query_bases = self.queries.values().map(QueryEntry::base);
        if std::iter::once(self.defaults.clone()).chain(query_bases).any(|e| e.negative()) {
            return Err(Error::Format {
                path: None,
                msg: "negative token count".into(),
            });
        }
        Ok(())
    }

    pub fn token_model(&self, kind: StrategyKind, model: Option<&str>, qid: Option<&str>) -> TokenModel {
        let mut tm = TokenModel::decomposed(0, 0, Rational::from_integer(0.into()), kind.default_n_opt());
        let name = kind.name();
        self.defaults.apply(&mut tm);
        if let Some(e) = self.strategies.get(name) {
            e.apply(&mut tm);
        }
        if let Some(e) = model.and_then(|m| self.models.get(m)).and_then(|m| m.strategies.get(name)) {
            e.apply(&mut tm);
        }
        if let Some(q) = qid.and_then(|q| self.queries.get(q)) {
            q.base().apply(&mut tm);
            if let Some(e) = q.strategies.get(name) {
                e.apply(&mut tm);
            }
        }
        tm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decimal::parse_decimal;

    fn dec(s: &str) -> Rational {
        parse_decimal(s).unwrap()
    }

    #[test]
    fn bundled_layers() {
        let stats = TokenStats::bundled("dl19").unwrap();
        assert_eq!(stats.n_docs, Some(100));
        let large = stats.token_model(StrategyKind::ListwiseSlidingWindow, Some("flan-t5-large"), None);
        assert_eq!(large.n_ctx, Some(dec("486.21")));
        assert_eq!(large.n_opt, dec("10.54"));
        let xl = stats.token_model(StrategyKind::ListwiseSlidingWindow, Some("flan-t5-xl"), None);
        assert_eq!(xl.n_opt, dec("11.87"));
        // no explicit averages: decomposition from [defaults], built-in output length
        let qwen = stats.token_model(StrategyKind::FixedTrace, Some("qwen2.5-7b"), None);
        assert_eq!(qwen.n_ctx, None);
        assert_eq!((qwen.n_p, qwen.n_q), (72, 8));
    }

    #[test]
    fn query_entries_override() {
        let stats = TokenStats::from_toml(
            r#"
            [defaults]
            n_p = 10
            n_q = 5
            l_doc = 100
            [strategies."setwise.heapsort"]
            n_ctx = 300
            [queries.q7]
            n_q = 12
            [queries.q7.strategies."setwise.heapsort"]
            n_opt = 3
            "#,
        )
        .unwrap();
        let base = stats.token_model(StrategyKind::SetwiseHeapsort, None, None);
        assert_eq!(base.n_ctx, Some(dec("300")));
        assert_eq!(base.n_opt, dec("5"));
        let q = stats.token_model(StrategyKind::SetwiseHeapsort, None, Some("q7"));
        assert_eq!((q.n_ctx, q.n_q, q.n_opt), (None, 12, dec("3")));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(TokenStats::from_toml("[strategies.\"pairwise.quick\"]\nn_opt = 1\n").is_err());
        assert!(TokenStats::from_toml("[defaults]\nl_doc = -3\n").is_err());
        let err = TokenStats::from_toml("[defaults]\nn_x = 3\n").unwrap_err();
        assert!(err.to_string().contains("n_x"), "{err}");
        assert!(TokenStats::bundled("msmarco").is_err());
    }
}
