//! Single-path transfer matrix: `ln Z_n`, `ln W_n`, polymer marginals and the replica overlap.

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::field::EnvField;
use crate::lattice::{for_each_path, site_index, walk_step, walk_step_back};
use crate::scalar::{ln_sum, rescale_max, Scalar};

/// Largest `n` accepted by [`brute_force_log_partition`].
pub const BRUTE_FORCE_MAX_STEPS: usize = 14;

/// `E[e^{beta H_i}; S_i = x]` over the admissible `x` of step `i`, stored as
/// `exp(log_scale) * weights` with `max(weights) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightLayer<T> {
    step: usize,
    weights: Vec<T>,
    log_scale: T,
}

impl<T: Scalar> WeightLayer<T> {
    pub fn origin() -> Self {
        Self { step: 0, weights: vec![T::one()], log_scale: T::zero() }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn log_scale(&self) -> T {
        self.log_scale
    }

    /// Moves one step forward through `field` at inverse temperature `beta`.
    pub fn advance(&self, field: &EnvField<T>, beta: T) -> Self {
        let mut next = Vec::new();
        walk_step(&self.weights, &mut next);
        let (boltz, shift) = boltzmann(field.layer(self.step + 1), beta);
        for (w, b) in next.iter_mut().zip(&boltz) {
            *w = *w * *b;
        }
        let log_scale = self.log_scale + shift + rescale_max(&mut next);
        Self { step: self.step + 1, weights: next, log_scale }
    }

    /// `ln` of the total mass `sum_x E[e^{beta H_i}; S_i = x]`.
    pub fn log_total(&self) -> T {
        self.log_scale + ln_sum(&self.weights)
    }
}

/// `e^{beta eta - m}` for a layer with `m = max(beta eta)`; returns the factors and `m`.
fn boltzmann<T: Scalar>(layer: &[T], beta: T) -> (Vec<T>, T) {
    let m = layer.iter().map(|&e| beta * e).fold(T::neg_infinity(), T::max);
    (layer.iter().map(|&e| (beta * e - m).exp()).collect(), m)
}

/// Forward sweep; calls `visit` with each normalized layer.
fn forward<T: Scalar>(field: &EnvField<T>, beta: T, mut visit: impl FnMut(usize, &[T])) -> T {
    let mut weights = vec![T::one()];
    let mut next = Vec::new();
    let mut log_scale = T::zero();
    for i in 1..=field.n() {
        walk_step(&weights, &mut next);
        let (boltz, shift) = boltzmann(field.layer(i), beta);
        for (w, b) in next.iter_mut().zip(&boltz) {
            *w = *w * *b;
        }
        log_scale = log_scale + shift + rescale_max(&mut next);
        std::mem::swap(&mut weights, &mut next);
        visit(i, &weights);
    }
    log_scale + ln_sum(&weights)
}

/// `ln Z_n(beta) = ln E exp(beta H_n(S))`, computed exactly in `O(n^2)`.
pub fn log_partition<T: Scalar>(field: &EnvField<T>, beta: T) -> T {
    if beta.is_zero() {
        // Z_n(0) = 1; the rescaled sweep would only add rounding
        return T::zero();
    }
    forward(field, beta, |_, _| {})
}

/// `ln W_n(beta) = ln Z_n(beta) - n lambda(beta)`.
pub fn log_w<T: Scalar>(field: &EnvField<T>, beta: T, model: &EnvModel) -> Result<T> {
    let lambda = model.lambda(beta.to_f64_lossy())?;
    Ok(log_w_with_cumulant(field, beta, T::lit(lambda)))
}

/// `ln Z_n(beta) - n * lambda_at_beta` for an explicitly supplied cumulant value.
pub fn log_w_with_cumulant<T: Scalar>(field: &EnvField<T>, beta: T, lambda_at_beta: T) -> T {
    log_partition(field, beta) - T::lit(field.n() as f64) * lambda_at_beta
}

/// Polymer-measure marginals `P_{n,beta}(S_i = x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals<T> {
    layers: Vec<Vec<T>>,
}

impl<T: Scalar> Marginals<T> {
    pub fn n(&self) -> usize {
        self.layers.len()
    }

    /// Probabilities at step `i`, indexed by `(x + i) / 2`.
    pub fn layer(&self, step: usize) -> &[T] {
        &self.layers[step - 1]
    }

    pub fn get(&self, step: usize, x: i64) -> Option<T> {
        if step == 0 || step > self.n() {
            return None;
        }
        site_index(step, x).map(|k| self.layers[step - 1][k])
    }

    /// `sum_{i,x} P(S_i = x)^2 = E^{⊗2}_{n,beta} L_n`.
    pub fn overlap(&self) -> T {
        self.layers.iter().flatten().map(|&p| p * p).sum()
    }
}

/// Forward-backward marginals of the polymer measure.
pub fn marginals<T: Scalar>(field: &EnvField<T>, beta: T) -> Marginals<T> {
    let n = field.n();
    let mut fwd: Vec<Vec<T>> = Vec::with_capacity(n);
    forward(field, beta, |_, w| fwd.push(w.to_vec()));

    // back[k] ∝ E[exp(beta sum_{j > i} eta(j, S_j)) | S_i = x_k]
    let mut back = vec![T::one(); n + 1];
    let mut scratch = Vec::new();
    let mut layers = vec![Vec::new(); n];
    for i in (1..=n).rev() {
        let row: Vec<T> = fwd[i - 1].iter().zip(&back).map(|(&f, &b)| f * b).collect();
        let total: T = row.iter().copied().sum();
        layers[i - 1] = row.into_iter().map(|p| p / total).collect();
        if i > 1 {
            let (boltz, _) = boltzmann(field.layer(i), beta);
            let weighted: Vec<T> = back.iter().zip(&boltz).map(|(&b, &w)| b * w).collect();
            walk_step_back(&weighted, &mut scratch);
            rescale_max(&mut scratch);
            std::mem::swap(&mut back, &mut scratch);
        }
    }
    Marginals { layers }
}

/// `E^{⊗2}_{n,beta} L_n(S^1, S^2) = sum_{i,x} P_{n,beta}(S_i = x)^2`, in `(0, n]`.
pub fn overlap_expectation<T: Scalar>(field: &EnvField<T>, beta: T) -> T {
    marginals(field, beta).overlap()
}

/// A nearest-neighbour path `S_0 = 0, S_1, ..., S_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    steps: Vec<i8>,
}

impl Path {
    pub fn from_steps(steps: Vec<i8>) -> Result<Self> {
        if let Some(s) = steps.iter().find(|s| s.abs() != 1) {
            return Err(Error::invalid(format!("path steps must be +1 or -1, got {s}")));
        }
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `S_1, ..., S_n`.
    pub fn positions(&self) -> Vec<i64> {
        self.steps
            .iter()
            .scan(0i64, |s, &d| {
                *s += d as i64;
                Some(*s)
            })
            .collect()
    }

    /// `H_n(S) = sum_i eta(i, S_i)` over the first `min(n, len)` steps.
    pub fn energy<T: Scalar>(&self, field: &EnvField<T>) -> T {
        energy_of(field, &self.positions())
    }
}

pub(crate) fn energy_of<T: Scalar>(field: &EnvField<T>, positions: &[i64]) -> T {
    positions
        .iter()
        .take(field.n())
        .enumerate()
        .map(|(k, &x)| field.value(k + 1, x).expect("walk positions are lattice sites"))
        .sum()
}

/// Log-sum-exp of `values`.
pub(crate) fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let m = values.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

/// `ln(2^{-n} sum_S e^{beta H_n(S)})` by enumerating every path.
pub fn brute_force_log_partition<T: Scalar>(field: &EnvField<T>, beta: T) -> Result<T> {
    let n = field.n();
    if n > BRUTE_FORCE_MAX_STEPS {
        return Err(Error::OracleTooLarge { n, cap: BRUTE_FORCE_MAX_STEPS });
    }
    let mut exponents = Vec::with_capacity(1 << n);
    for_each_path(n, |pos| exponents.push(beta * energy_of(field, pos)));
    Ok(log_sum_exp(&exponents) - T::lit(n as f64 * std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_replicate;
    use proptest::prelude::*;

    const E: f64 = std::f64::consts::E;

    fn two_step() -> EnvField<f64> {
        EnvField::from_layers(vec![vec![0.0, 1.0], vec![0.0, 1.0, 0.0]], "test").unwrap()
    }

    #[test]
    fn log_partition_examples() {
        let f = two_step();
        assert_eq!(log_partition(&f, 0.0), 0.0);
        let expected = 2.0 * ((1.0 + E) / 2.0).ln();
        assert!((log_partition(&f, 1.0) - expected).abs() < 1e-14);
        assert!((brute_force_log_partition(&f, 1.0).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 1.240229).abs() < 1e-6);

        let one = EnvField::from_layers(vec![vec![0.7, 0.7]], "test").unwrap();
        assert!((log_partition(&one, 2.0f64) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn log_w_examples() {
        let f = two_step();
        let g = EnvModel::gaussian(1.0).unwrap();
        assert_eq!(log_w(&f, 0.0, &g).unwrap(), 0.0);
        let beta = 0.8;
        let lw = log_w(&f, beta, &g).unwrap();
        assert!((lw - (log_partition(&f, beta) - 2.0 * beta * beta / 2.0)).abs() < 1e-15);
        let composed = log_w_with_cumulant(&f, 1.0, 0.3);
        assert!((composed - (2.0 * ((1.0 + E) / 2.0).ln() - 0.6)).abs() < 1e-14);
        assert!(log_w(&f, 9.0, &g).is_err());
    }

    #[test]
    fn marginal_examples() {
        let f = two_step();
        let m0 = marginals(&f, 0.0);
        assert_eq!(m0.layer(1), &[0.5, 0.5]);
        assert_eq!(m0.layer(2), &[0.25, 0.5, 0.25]);
        let m1 = marginals(&f, 1.0);
        assert!((m1.get(1, 1).unwrap() - E / (1.0 + E)).abs() < 1e-14);
        assert!((m1.get(1, 1).unwrap() - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn overlap_examples() {
        let one = EnvField::from_layers(vec![vec![0.3, -0.2]], "t").unwrap();
        assert_eq!(overlap_expectation(&one, 0.0), 0.5);
        assert_eq!(overlap_expectation(&two_step(), 0.0), 0.875);

        // A field with a strict maximizer along the zig-zag path.
        let n = 12;
        let field = EnvField::from_fn(n, |i, x| if x == (i % 2) as i64 { 1.0 } else { 0.0 }).unwrap();
        let ov = overlap_expectation(&field, 20.0);
        assert!(ov >= n as f64 - 0.01 && ov <= n as f64 + 1e-12, "{ov}");
    }

    #[test]
    fn overlap_at_zero_beta_is_binomial() {
        let m = EnvModel::centered_poisson(1.0).unwrap();
        let f: EnvField<f64> = sample_replicate(&m, 30, 3, 0).unwrap();
        // sum_i sum_x b(i, x)^2 with b binomial = sum_i C(2i, i) / 4^i.
        let mut exact = 0.0;
        let mut c = 1.0;
        for i in 1..=30 {
            c *= (2 * i - 1) as f64 / (2 * i) as f64;
            exact += c;
        }
        assert!((overlap_expectation(&f, 0.0) - exact).abs() < 1e-12);
    }

    #[test]
    fn oracle_refuses_large_n() {
        let f = EnvField::<f64>::from_fn(15, |_, _| 0.0).unwrap();
        assert!(matches!(brute_force_log_partition(&f, 1.0), Err(Error::OracleTooLarge { n: 15, cap: 14 })));
    }

    #[test]
    fn layer_api_agrees_with_log_partition() {
        let m = EnvModel::gaussian(1.0).unwrap();
        let f: EnvField<f64> = sample_replicate(&m, 25, 8, 1).unwrap();
        let mut layer = WeightLayer::origin();
        for _ in 0..f.n() {
            layer = layer.advance(&f, 0.9);
            assert!(layer.weights().iter().all(|&w| w > 0.0 && w <= 1.0));
            assert_eq!(layer.weights().iter().copied().fold(0.0, f64::max), 1.0);
        }
        assert!((layer.log_total() - log_partition(&f, 0.9)).abs() < 1e-12);
    }

    #[test]
    fn path_energy() {
        let p = Path::from_steps(vec![1, -1]).unwrap();
        assert_eq!(p.positions(), vec![1, 0]);
        assert_eq!(p.energy(&two_step()), 2.0);
        assert!(Path::from_steps(vec![1, 0]).is_err());
    }

    #[test]
    fn single_precision_tracks_double() {
        let m = EnvModel::gaussian(1.0).unwrap();
        let f64f: EnvField<f64> = sample_replicate(&m, 64, 1, 0).unwrap();
        let f32f: EnvField<f32> = sample_replicate(&m, 64, 1, 0).unwrap();
        let a = log_partition(&f64f, 0.7);
        let b = log_partition(&f32f, 0.7f32) as f64;
        assert!((a - b).abs() < 1e-4 * a.abs().max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dp_matches_enumeration(seed in any::<u64>(), n in 1usize..=9, beta in 0.0f64..3.0) {
            let m = EnvModel::centered_gamma(2.0, 0.3).unwrap();
            let f: EnvField<f64> = sample_replicate(&m, n, seed, 0).unwrap();
            let dp = log_partition(&f, beta);
            let bf = brute_force_log_partition(&f, beta).unwrap();
            prop_assert!((dp - bf).abs() <= 1e-10);
        }

        #[test]
        fn marginals_normalize(seed in any::<u64>(), n in 1usize..=40, beta in 0.0f64..4.0) {
            let m = EnvModel::gaussian(1.0).unwrap();
            let f: EnvField<f64> = sample_replicate(&m, n, seed, 0).unwrap();
            let marg = marginals(&f, beta);
            for i in 1..=n {
                let s: f64 = marg.layer(i).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
            let ov = marg.overlap();
            prop_assert!(ov > 0.0 && ov <= n as f64 + 1e-12);
        }

        #[test]
        fn raising_a_site_raises_log_partition(seed in any::<u64>(), n in 1usize..=20, pick in any::<u64>(), bump in 0.01f64..1.0) {
            let m = EnvModel::gaussian(1.0).unwrap();
            let f: EnvField<f64> = sample_replicate(&m, n, seed, 0).unwrap();
            let i = 1 + (pick % n as u64) as usize;
            let k = (pick / n as u64 % (i as u64 + 1)) as usize;
            let x = crate::lattice::site_position(i, k);
            let mut g = f.clone();
            g.set(i, x, f.value(i, x).unwrap() + bump).unwrap();
            prop_assert!(log_partition(&g, 0.5) > log_partition(&f, 0.5));
        }

        #[test]
        fn recentering_leaves_log_w(seed in any::<u64>(), n in 1usize..=30, shift in -2.0f64..2.0, beta in 0.0f64..2.0) {
            let m = EnvModel::centered_poisson(1.0).unwrap();
            let f: EnvField<f64> = sample_replicate(&m, n, seed, 0).unwrap();
            let lam = m.lambda(beta).unwrap();
            let base = log_w_with_cumulant(&f, beta, lam);
            let moved = log_w_with_cumulant(&f.shifted(shift), beta, lam + beta * shift);
            prop_assert!((base - moved).abs() <= 1e-10);
        }
    }
}
