//! Run configuration: TOML file sections merged with command-line flags (flags win).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use polymerlab::env::from_pairs;
use polymerlab::EnvModel;

pub const SEED_ENV: &str = "POLYMERLAB_SEED";

/// Contents of a `--config` file.
///
/// ```toml
/// [model]
/// family = "centered_poisson"
/// rate = 1.0
///
/// [run]
/// seed = 7
/// m = 1000
/// beta = 0.3
/// ```
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: Option<toml::Table>,
    #[serde(default)]
    pub run: RunParams,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("malformed config {}: {}", path.display(), e.message()))
    }
}

/// Numeric run parameters; every field is optional and falls back to a per-command default.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub seed: Option<u64>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub ts: Option<Vec<f64>>,
    pub us: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub ns: Option<Vec<usize>>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunParams {
    /// Field-wise `self` if set, otherwise `fallback`.
    pub fn or(self, fallback: RunParams) -> RunParams {
        RunParams {
            seed: self.seed.or(fallback.seed),
            m: self.m.or(fallback.m),
            n: self.n.or(fallback.n),
            beta: self.beta.or(fallback.beta),
            betas: self.betas.or(fallback.betas),
            t: self.t.or(fallback.t),
            ts: self.ts.or(fallback.ts),
            us: self.us.or(fallback.us),
            n_max: self.n_max.or(fallback.n_max),
            ns: self.ns.or(fallback.ns),
            workers: self.workers.or(fallback.workers),
            out: self.out.or(fallback.out),
        }
    }

    /// Seed from flags or config, then from `POLYMERLAB_SEED`.
    pub fn seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV} is not an unsigned integer: `{v}`")),
            Err(_) => bail!("a seed is required: pass --seed, set `seed` under [run], or set {SEED_ENV}"),
        }
    }

    pub fn betas_or(&self, default: &[f64]) -> Vec<f64> {
        self.betas.clone().or(self.beta.map(|b| vec![b])).unwrap_or_else(|| default.to_vec())
    }

    pub fn ts_or(&self, default: &[f64]) -> Vec<f64> {
        self.ts.clone().or(self.t.map(|t| vec![t])).unwrap_or_else(|| default.to_vec())
    }

    pub fn ns_or(&self, default: &[usize]) -> Vec<usize> {
        self.ns.clone().or(self.n.map(|n| vec![n])).unwrap_or_else(|| default.to_vec())
    }

    /// A single beta; a one-element `betas` list is accepted too.
    pub fn beta_or(&self, default: f64) -> Result<f64> {
        match (&self.beta, &self.betas) {
            (Some(b), _) => Ok(*b),
            (None, Some(v)) if v.len() == 1 => Ok(v[0]),
            (None, Some(_)) => bail!("this command takes a single --beta"),
            (None, None) => Ok(default),
        }
    }
}

/// Model keys collected from flags; merged over the `[model]` section.
#[derive(Clone, Debug, Default)]
pub struct ModelFlags {
    pub model: Option<String>,
    pub pairs: Vec<(&'static str, f64)>,
}

fn toml_to_string(key: &str, v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        other => bail!("[model] `{key}` must be a string or number, got {}", other.type_str()),
    })
}

/// Resolves the environment model, or `None` when neither flags nor config mention one.
pub fn resolve_model(section: Option<&toml::Table>, flags: &ModelFlags) -> Result<Option<EnvModel>> {
    let mut pairs: BTreeMap<String, String> = BTreeMap::new();
    if let Some(table) = section {
        for (k, v) in table {
            pairs.insert(k.clone(), toml_to_string(k, v)?);
        }
    }
    if let Some(m) = &flags.model {
        if m.contains('=') {
            pairs.clear();
            for item in m.split([',', ';']).map(str::trim).filter(|s| !s.is_empty()) {
                let (k, v) =
                    item.split_once('=').with_context(|| format!("expected key=value in --model, got `{item}`"))?;
                pairs.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else if pairs.get("family").is_some_and(|f| f != m) {
            // a different family from the command line discards the file's parameters
            pairs.clear();
            pairs.insert("family".into(), m.clone());
        } else {
            pairs.insert("family".into(), m.clone());
        }
    }
    for (k, v) in &flags.pairs {
        pairs.insert((*k).to_string(), v.to_string());
    }
    if pairs.is_empty() {
        return Ok(None);
    }
    let family = pairs.entry("family".into()).or_insert_with(|| "gaussian".into()).clone();
    if matches!(family.as_str(), "gaussian" | "normal") && !pairs.contains_key("variance") && !pairs.contains_key("var")
    {
        pairs.insert("variance".into(), "1".into());
    }
    Ok(Some(from_pairs(&pairs)?))
}
