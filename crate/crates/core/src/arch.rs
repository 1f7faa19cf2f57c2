//! Transformer architecture configurations and parameter counts.
//!
//! Only attention and feed-forward weights are counted. Embeddings, the LM
//! head, biases and layer-norm parameters are sub-leading and excluded, so the
//! counts here are smaller than the totals published on model cards.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(alias = "decoder_only", alias = "decoder-only")]
    DecoderOnly,
    #[serde(alias = "encoder_decoder", alias = "encoder-decoder")]
    EncoderDecoder,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::DecoderOnly => "decoder-only",
            Family::EncoderDecoder => "encoder-decoder",
        }
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "decoder-only" | "decoderonly" => Ok(Family::DecoderOnly),
            "encoder-decoder" | "encoderdecoder" => Ok(Family::EncoderDecoder),
            other => Err(Error::InvalidConfig(format!(
                "unknown family '{other}' (decoder-only, encoder-decoder)"
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which weight stack a parameter count refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stack {
    /// The single stack of a decoder-only model.
    Decoder,
    /// The encoder of an encoder-decoder model.
    Encoder,
    /// The decoder of an encoder-decoder model, with cross-attention.
    CrossDecoder,
}

impl Stack {
    fn as_str(self) -> &'static str {
        match self {
            Stack::Decoder => "decoder-only",
            Stack::Encoder => "encoder",
            Stack::CrossDecoder => "encoder-decoder decoder",
        }
    }
}

/// Transformer hyper-parameters.
///
/// For encoder-decoder models `n_layer` is the depth of each stack; encoder and
/// decoder are assumed to have the same depth, as in T5.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default)]
    pub name: String,
    pub family: Family,
    pub n_layer: u64,
    pub d_model: u64,
    pub d_ff: u64,
    /// Width of the Q/K/V projections before the head split. Defaults to `d_model`.
    #[serde(default)]
    pub d_attn: Option<u64>,
    #[serde(rename = "n_Q", alias = "n_q")]
    pub n_q: u64,
    #[serde(rename = "n_KV", alias = "n_kv")]
    pub n_kv: u64,
}

impl ArchConfig {
    pub fn new(
        name: impl Into<String>,
        family: Family,
        n_layer: u64,
        d_model: u64,
        d_ff: u64,
        n_q: u64,
        n_kv: u64,
    ) -> Result<Self> {
        let cfg = ArchConfig {
            name: name.into(),
            family,
            n_layer,
            d_model,
            d_ff,
            d_attn: None,
            n_q,
            n_kv,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_d_attn(mut self, d_attn: u64) -> Result<Self> {
        self.d_attn = Some(d_attn);
        self.validate()?;
        Ok(self)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ArchConfig = toml::from_str(text).map_err(|e| Error::Format {
            path: None,
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| e.with_path(path))?;
        if cfg.name.is_empty() {
            cfg.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ArchConfig always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layer", self.n_layer),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("d_attn", self.d_attn()),
            ("n_Q", self.n_q),
            ("n_KV", self.n_kv),
        ];
        if let Some((key, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{key} must be at least 1")));
        }
        if self.n_kv > self.n_q || !self.n_q.is_multiple_of(self.n_kv) {
            return Err(Error::InvalidConfig(format!(
                "n_Q ({}) must be a multiple of n_KV ({})",
                self.n_q, self.n_kv
            )));
        }
        if !self.d_attn().is_multiple_of(self.n_q) {
            return Err(Error::InvalidConfig(format!(
                "d_attn ({}) must split evenly across n_Q ({}) heads",
                self.d_attn(),
                self.n_q
            )));
        }
        Ok(())
    }

    pub fn d_attn(&self) -> u64 {
        self.d_attn.unwrap_or(self.d_model)
    }

    pub fn is_mha(&self) -> bool {
        self.n_kv == self.n_q
    }

    pub fn head_dim(&self) -> u64 {
        self.d_attn() / self.n_q
    }

    /// Width of the K and V projections: `d_attn * n_KV / n_Q`.
    pub fn kv_width(&self) -> u64 {
        self.head_dim() * self.n_kv
    }

    /// Attention and feed-forward parameter count of one stack.
    ///
    /// Per layer, self-attention holds Q and O at `d_attn` and K and V at the
    /// grouped width; the encoder-decoder decoder adds a cross-attention Q and O.
    pub fn params(&self, stack: Stack) -> Result<u128> {
        let ok = matches!(
            (self.family, stack),
            (Family::DecoderOnly, Stack::Decoder)
                | (Family::EncoderDecoder, Stack::Encoder | Stack::CrossDecoder)
        );
        if !ok {
            return Err(Error::StackMismatch {
                stack: stack.as_str(),
                family: self.family.as_str(),
            });
        }
        let d_attn = self.d_attn() as u128;
        let attn = match stack {
            Stack::Decoder | Stack::Encoder => d_attn + self.kv_width() as u128,
            Stack::CrossDecoder => 2 * d_attn + self.kv_width() as u128,
        };
        Ok(2 * self.d_model as u128 * self.n_layer as u128 * (attn + self.d_ff as u128))
    }

    /// The stack that consumes the prompt.
    pub fn prompt_stack(&self) -> Stack {
        match self.family {
            Family::DecoderOnly => Stack::Decoder,
            Family::EncoderDecoder => Stack::Encoder,
        }
    }

    /// The stack that generates output tokens.
    pub fn generation_stack(&self) -> Stack {
        match self.family {
            Family::DecoderOnly => Stack::Decoder,
            Family::EncoderDecoder => Stack::CrossDecoder,
        }
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("flan-t5-large", include_str!("../data/registry/flan-t5-large.toml")),
    ("flan-t5-xl", include_str!("../data/registry/flan-t5-xl.toml")),
    ("flan-t5-xxl", include_str!("../data/registry/flan-t5-xxl.toml")),
    ("llama-3.1-8b", include_str!("../data/registry/llama-3.1-8b.toml")),
    ("qwen2.5-3b", include_str!("../data/registry/qwen2.5-3b.toml")),
    ("qwen2.5-7b", include_str!("../data/registry/qwen2.5-7b.toml")),
    ("qwen2.5-14b", include_str!("../data/registry/qwen2.5-14b.toml")),
];

/// Environment variable naming an extra directory of `*.toml` model configs.
pub const REGISTRY_ENV: &str = "RERANK_FLOPS_REGISTRY";

/// Named model configurations.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    models: BTreeMap<String, ArchConfig>,
}

impl Registry {
    pub fn bundled() -> Self {
        let mut models = BTreeMap::new();
        for (name, text) in BUNDLED {
            let mut cfg = ArchConfig::from_toml(text).expect("bundled config is valid");
            if cfg.name.is_empty() {
                cfg.name = name.to_string();
            }
            models.insert(name.to_string(), cfg);
        }
        Registry { models }
    }

    /// Bundled configs, overlaid with the directory named by [`REGISTRY_ENV`] if set.
    pub fn from_env() -> Result<Self> {
        let mut reg = Self::bundled();
        if let Some(dir) = std::env::var_os(REGISTRY_ENV) {
            reg.load_dir(Path::new(&dir))?;
        }
        Ok(reg)
    }

    /// Adds every `*.toml` in `dir`, keyed by file stem. Existing names are replaced.
    pub fn load_dir(&mut self, dir: &Path) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for path in paths {
            let cfg = ArchConfig::from_path(&path)?;
            let key = path.file_stem().unwrap().to_string_lossy().into_owned();
            self.models.insert(key, cfg);
        }
        Ok(())
    }

    pub fn insert(&mut self, cfg: ArchConfig) {
        self.models.insert(cfg.name.clone(), cfg);
    }

    pub fn get(&self, name: &str) -> Result<&ArchConfig> {
        self.models.get(name).ok_or_else(|| Error::UnknownModel {
            name: name.to_string(),
            available: self.names(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }

    /// Resolves a registry name, or failing that a path to a config file.
    pub fn resolve(&self, name_or_path: &str) -> Result<ArchConfig> {
        if let Ok(cfg) = self.get(name_or_path) {
            return Ok(cfg.clone());
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return ArchConfig::from_path(path);
        }
        self.get(name_or_path).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(family: Family) -> ArchConfig {
        ArchConfig::new("toy", family, 2, 8, 32, 2, 2).unwrap()
    }

    #[test]
    fn toy_param_counts() {
        assert_eq!(toy(Family::DecoderOnly).params(Stack::Decoder).unwrap(), 1536);
        let ed = toy(Family::EncoderDecoder);
        assert_eq!(ed.params(Stack::Encoder).unwrap(), 1536);
        assert_eq!(ed.params(Stack::CrossDecoder).unwrap(), 1792);
    }

    #[test]
    fn gqa_count_uses_grouped_kv() {
        // 2 * 8 * 2 * ((1 + 1/4) * 8 + 32) = 32 * 42
        let cfg = ArchConfig::new("gqa", Family::DecoderOnly, 2, 8, 32, 4, 1).unwrap();
        assert_eq!(cfg.params(Stack::Decoder).unwrap(), 1344);
    }

    #[test]
    fn stack_family_mismatch_rejected() {
        let err = toy(Family::DecoderOnly).params(Stack::CrossDecoder).unwrap_err();
        assert!(matches!(err, Error::StackMismatch { .. }));
        assert!(toy(Family::EncoderDecoder).params(Stack::Decoder).is_err());
        assert!(toy(Family::DecoderOnly).params(Stack::Encoder).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(ArchConfig::new("x", Family::DecoderOnly, 0, 8, 8, 1, 1).is_err());
        assert!(ArchConfig::new("x", Family::DecoderOnly, 1, 8, 8, 2, 4).is_err());
        assert!(ArchConfig::new("x", Family::DecoderOnly, 1, 8, 8, 6, 4).is_err());
        assert!(ArchConfig::new("x", Family::DecoderOnly, 1, 9, 8, 2, 2).is_err());
    }

    #[test]
    fn toml_defaults_d_attn_and_rejects_unknown_keys() {
        let cfg = ArchConfig::from_toml(
            "family = \"DecoderOnly\"\nn_layer = 2\nd_model = 8\nd_ff = 32\nn_Q = 2\nn_KV = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.d_attn(), 8);
        let err = ArchConfig::from_toml(
            "family = \"DecoderOnly\"\nn_layer = 2\nd_model = 8\nd_ff = 32\nn_Q = 2\nn_KV = 2\nvocab = 3\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("vocab"), "{err}");
    }

    #[test]
    fn bundled_registry_loads() {
        let reg = Registry::bundled();
        assert_eq!(reg.names().len(), 7);
        let large = reg.get("flan-t5-large").unwrap();
        assert_eq!(large.family, Family::EncoderDecoder);
        assert!(reg.get("llama-3.1-8b").unwrap().n_kv < 32);
        let err = reg.get("nope").unwrap_err().to_string();
        assert!(err.contains("flan-t5-xl"), "{err}");
    }
}
