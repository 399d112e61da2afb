//! Realizations of the environment on the lattice reachable by an n-step walk.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::lattice::{site_count, site_index, site_position};
use crate::scalar::Scalar;

/// One realization of `eta(i, x)` for `1 <= i <= n`, `|x| <= i`, `x ≡ i (mod 2)`.
///
/// Layer `i` is stored densely at index `(x + i) / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvField<T> {
    layers: Vec<Vec<T>>,
    seed: u64,
    replicate: u64,
    model: String,
}

impl<T: Scalar> EnvField<T> {
    /// Builds a field from explicit layers; `layers[i - 1]` must hold `i + 1` values.
    pub fn from_layers(layers: Vec<Vec<T>>, model: impl Into<String>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an environment field needs n >= 1 steps"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.len() != k + 2 {
                return Err(Error::invalid(format!("layer {} must have {} sites, got {}", k + 1, k + 2, layer.len())));
            }
        }
        Ok(Self { layers, seed: 0, replicate: 0, model: model.into() })
    }

    pub fn from_fn(n: usize, mut value: impl FnMut(usize, i64) -> T) -> Result<Self> {
        let layers = (1..=n).map(|i| (0..=i).map(|k| value(i, site_position(i, k))).collect()).collect();
        Self::from_layers(layers, "custom")
    }

    pub fn n(&self) -> usize {
        self.layers.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self) -> u64 {
        self.replicate
    }

    pub fn model_tag(&self) -> &str {
        &self.model
    }

    pub fn site_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Values at step `i` (1-based), indexed by `(x + i) / 2`.
    pub fn layer(&self, step: usize) -> &[T] {
        &self.layers[step - 1]
    }

    pub fn value(&self, step: usize, x: i64) -> Option<T> {
        if step == 0 || step > self.n() {
            return None;
        }
        site_index(step, x).map(|k| self.layers[step - 1][k])
    }

    pub fn set(&mut self, step: usize, x: i64, v: T) -> Result<()> {
        let k = (1..=self.n())
            .contains(&step)
            .then(|| site_index(step, x))
            .flatten()
            .ok_or_else(|| Error::invalid(format!("site ({step}, {x}) is not on the lattice")))?;
        self.layers[step - 1][k] = v;
        Ok(())
    }

    /// Applies `f` to every site value.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            layers: self.layers.iter().map(|l| l.iter().map(|&v| f(v)).collect()).collect(),
            seed: self.seed,
            replicate: self.replicate,
            model: self.model.clone(),
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn shifted(&self, offset: T) -> Self {
        self.map(|v| v + offset)
    }

    /// Iterates over `(i, x, value)`.
    pub fn sites(&self) -> impl Iterator<Item = (usize, i64, T)> + '_ {
        self.layers.iter().enumerate().flat_map(|(k, layer)| {
            let i = k + 1;
            layer.iter().enumerate().map(move |(j, &v)| (i, site_position(i, j), v))
        })
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream key of site `(i, x)` in replicate `r` under `seed`.
pub fn site_key(seed: u64, replicate: u64, step: usize, x: i64) -> u64 {
    let h = mix(seed ^ 0x5eed_0fd1_5ea5_e5e5);
    let h = mix(h ^ replicate);
    let h = mix(h ^ step as u64);
    mix(h ^ x as u64)
}

/// Samples replicate 0 of the field for `seed`.
pub fn sample_field<T: Scalar>(model: &EnvModel, n: usize, seed: u64) -> Result<EnvField<T>> {
    sample_replicate(model, n, seed, 0)
}

/// Samples replicate `r`. Each site value is a pure function of `(seed, r, i, x)`, so
/// fields can be regenerated in any order and shared across parameter grids.
pub fn sample_replicate<T: Scalar>(model: &EnvModel, n: usize, seed: u64, replicate: u64) -> Result<EnvField<T>> {
    if n == 0 {
        return Err(Error::invalid("an environment field needs n >= 1 steps"));
    }
    let sampler = model.sampler();
    let mut layers = Vec::with_capacity(n);
    for i in 1..=n {
        let layer = (0..=i)
            .map(|k| {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(site_key(seed, replicate, i, site_position(i, k)));
                T::lit(rng.sample(&sampler))
            })
            .collect();
        layers.push(layer);
    }
    debug_assert_eq!(layers.iter().map(Vec::len).sum::<usize>(), site_count(n));
    Ok(EnvField { layers, seed, replicate, model: model.spec_string() })
}
