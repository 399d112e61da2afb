//! Replicate-parallel Monte Carlo over environment realizations.
//!
//! Replicate `r` always sees the field generated from `(seed, r)`, and per-replicate
//! results are reduced in index order, so estimates are bit-identical for every
//! worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::field::{sample_replicate, EnvField};

/// One-sided acceptance margin, in standard errors, used by every inequality check.
pub const SIGMA_MARGIN: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(replicates)`.
    pub stderr: f64,
    pub replicates: usize,
    pub master_seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], master_seed: u64) -> Result<Self> {
        let m = samples.len();
        if m < 2 {
            return Err(Error::invalid(format!("an estimate needs at least 2 replicates, got {m}")));
        }
        let mean = samples.iter().sum::<f64>() / m as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
        Ok(Self { mean, stderr: (var / m as f64).sqrt(), replicates: m, master_seed })
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_stderr(&self, other: &McEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Environment ensemble: `replicates` independent fields of `n` steps drawn from `model`.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub model: EnvModel,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Caps the worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Ensemble {
    pub fn new(model: EnvModel, n: usize, replicates: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ensemble needs n >= 1"));
        }
        if replicates < 2 {
            return Err(Error::invalid(format!("ensemble needs M >= 2 replicates, got {replicates}")));
        }
        Ok(Self { model, n, replicates, seed, workers: None })
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn field(&self, replicate: usize) -> Result<EnvField<f64>> {
        sample_replicate(&self.model, self.n, self.seed, replicate as u64)
    }

    /// Evaluates `f` on every replicate field; results come back in replicate order.
    pub fn map<R, F>(&self, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&EnvField<f64>) -> Result<R> + Sync + Send,
    {
        let run = || (0..self.replicates).into_par_iter().map(|r| f(&self.field(r)?)).collect::<Result<Vec<R>>>();
        match self.workers {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {k} workers: {e}")))?
                .install(run),
            None => run(),
        }
    }

    /// Mean and standard error of a scalar observable.
    pub fn estimate(&self, f: impl Fn(&EnvField<f64>) -> Result<f64> + Sync + Send) -> Result<McEstimate> {
        McEstimate::from_samples(&self.map(f)?, self.seed)
    }
}
