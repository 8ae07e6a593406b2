//! Run configuration: a TOML file with `${VAR}` environment interpolation,
//! overridden by command-line flags.

use crate::backends::{BackendConfig, GenerationParams};
use crate::corpus::DEFAULT_CHUNK_SIZE;
use crate::retrieval::DEFAULT_TOP_K;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kb_store_path: PathBuf,
    pub demo_pool_path: PathBuf,
    pub output_dir: PathBuf,
    /// Optional postings cache for the knowledge-base index.
    pub index_cache_path: Option<PathBuf>,
    /// Name recorded in the run report; defaults to the generations file stem.
    pub model_name: Option<String>,
    pub afg_backend: BackendConfig,
    pub afv_backend: BackendConfig,
    pub embedding_backend: Option<BackendConfig>,
    /// `parse`, `logits`, or `ensemble`.
    pub strategy: String,
    /// `token-f1` or `embedding-f1`.
    pub scorer: String,
    /// `bm25`, or `embedding` to rank passages with `embedding_backend`.
    pub retrieval: String,
    pub generation: GenerationParams,
    pub chunk_size: usize,
    pub top_k_passages: usize,
    pub seed: Option<u64>,
    pub abstention_patterns: Option<Vec<String>>,
    /// Open/close tags of reasoning blocks stripped before fact parsing;
    /// an empty list disables stripping.
    pub reasoning_tags: Option<Vec<String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kb_store_path: PathBuf::from("kb.fekb"),
            demo_pool_path: PathBuf::from("demos.jsonl"),
            output_dir: PathBuf::from("out"),
            index_cache_path: None,
            model_name: None,
            afg_backend: BackendConfig::default(),
            afv_backend: BackendConfig::default(),
            embedding_backend: None,
            strategy: "parse".into(),
            scorer: "token-f1".into(),
            retrieval: "bm25".into(),
            generation: GenerationParams::default(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            top_k_passages: DEFAULT_TOP_K,
            seed: None,
            abstention_patterns: None,
            reasoning_tags: None,
        }
    }
}

/// Replaces every `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').ok_or("unterminated ${ in config")?;
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("invalid variable name {name:?} in config"));
        }
        let value = lookup(name).ok_or_else(|| format!("environment variable {name} is not set"))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let text = interpolate_env(text, |k| std::env::var(k).ok())?;
        toml::from_str(&text).map_err(|e| e.to_string())
    }

    /// Loads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.kb_store_path);
        fix(&mut self.demo_pool_path);
        fix(&mut self.output_dir);
        if let Some(p) = self.index_cache_path.as_mut() {
            fix(p);
        }
        for b in [&mut self.afg_backend, &mut self.afv_backend]
            .into_iter()
            .chain(self.embedding_backend.as_mut())
        {
            if let Some(p) = b.script.as_mut() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.top_k_passages == 0 {
            return Err("top_k_passages must be >= 1".into());
        }
        if crate::afv::ValidationStrategy::from_name(&self.strategy).is_none() {
            return Err(format!("unknown strategy {:?}", self.strategy));
        }
        if !matches!(self.scorer.as_str(), "token-f1" | "embedding-f1") {
            return Err(format!("unknown scorer {:?}", self.scorer));
        }
        match (self.retrieval.as_str(), &self.embedding_backend) {
            ("bm25", _) | ("embedding", Some(_)) => {}
            ("embedding", None) => return Err("retrieval = \"embedding\" needs an embedding_backend".into()),
            (other, _) => return Err(format!("unknown retrieval mode {other:?}")),
        }
        if let Some(tags) = &self.reasoning_tags {
            if !(tags.is_empty() || tags.len() == 2) {
                return Err("reasoning_tags must be [open, close] or []".into());
            }
        }
        self.generation.validate().map_err(|e| e.to_string())
    }

    /// Generation params with the run seed applied.
    pub fn generation_params(&self) -> GenerationParams {
        let mut p = self.generation.clone();
        if p.seed.is_none() {
            p.seed = self.seed;
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation() {
        let env = |k: &str| (k == "KEY").then(|| "secret".to_string());
        assert_eq!(interpolate_env("a=${KEY}b", env).unwrap(), "a=secretb");
        assert!(interpolate_env("${MISSING}", env).is_err());
        assert!(interpolate_env("${KEY", env).is_err());
        assert_eq!(interpolate_env("no vars", env).unwrap(), "no vars");
    }

    #[test]
    fn parses_partial_file() {
        let cfg = RunConfig::from_toml_str(
            r#"
            strategy = "ensemble"
            top_k_passages = 3
            [afv_backend]
            kind = "mock"
            script = "afv.jsonl"
            parallelism = 4
            [generation]
            max_new_tokens = 64
            temperature = 0.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.top_k_passages, 3);
        assert_eq!(cfg.afv_backend.parallelism, 4);
        assert_eq!(cfg.generation.max_new_tokens, 64);
        assert_eq!(cfg.chunk_size, 256);
        assert!(cfg.validate().is_ok());
        assert!(RunConfig::from_toml_str("bogus_key = 1").is_err());
        let bad = RunConfig {
            top_k_passages: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
