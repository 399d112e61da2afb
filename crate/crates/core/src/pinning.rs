//! Homogeneous pinning of the difference walk `D = S^1 - S^2`.
//!
//! `D` moves by -2, 0, +2 with probabilities 1/4, 1/2, 1/4 and `L_n` counts the steps
//! `1 <= i <= n` with `D_i = 0`, so `E^{⊗2} e^{t L_n}` only needs an `O(n)` state.

use crate::error::{Error, Result};
use crate::lattice::for_each_path;
use crate::polymer::log_sum_exp;
use crate::scalar::{ln_sum, rescale_max, Scalar};

pub const PINNING_BRUTE_FORCE_MAX_STEPS: usize = 8;
/// Below this value of `n_max * t^2` the finite-size estimate of `F(t)` is flagged.
pub const PINNING_WARNING_THRESHOLD: f64 = 50.0;

/// `ln E^{⊗2} e^{t L_m}` for every `m = 1..=n_max` (entry `m - 1`).
pub fn log_pinning_sequence<T: Scalar>(n_max: usize, t: T) -> Vec<T> {
    if t == T::zero() {
        return vec![T::zero(); n_max];
    }
    let quarter = T::lit(0.25);
    let half = T::lit(0.5);
    // Off-contact sites carry e^{-t} and the log scale gains t per step, so every
    // weight stays in [0, 1] for any t >= 0.
    let off = (-t).exp();
    let mut prev = vec![T::one()];
    let mut next: Vec<T> = Vec::new();
    let mut log_scale = T::zero();
    let mut out = Vec::with_capacity(n_max);
    for i in 1..=n_max {
        // index j holds D / 2 = j - i
        next.clear();
        next.resize(2 * i + 1, T::zero());
        for (j, &w) in prev.iter().enumerate() {
            next[j] = next[j] + quarter * w;
            next[j + 1] = next[j + 1] + half * w;
            next[j + 2] = next[j + 2] + quarter * w;
        }
        for (j, w) in next.iter_mut().enumerate() {
            if j != i {
                *w = *w * off;
            }
        }
        log_scale = log_scale + t + rescale_max(&mut next);
        out.push(log_scale + ln_sum(&next));
        std::mem::swap(&mut prev, &mut next);
    }
    out
}

/// `ln E^{⊗2} e^{t L_n(S^1, S^2)}`, exact in `O(n^2)`.
pub fn log_pinning<T: Scalar>(n: usize, t: T) -> Result<T> {
    if n == 0 {
        return Err(Error::invalid("pinning system needs n >= 1"));
    }
    if !(t >= T::zero()) {
        return Err(Error::invalid(format!("pinning parameter must be >= 0, got {t}")));
    }
    Ok(*log_pinning_sequence(n, t).last().expect("n >= 1"))
}

/// `F_n(beta) = (1 / 2n) ln E^{⊗2} e^{2 beta^2 L_n}`.
pub fn f_n<T: Scalar>(beta: T, n: usize) -> Result<T> {
    let t = T::lit(2.0) * beta * beta;
    Ok(log_pinning(n, t)? / T::lit(2.0 * n as f64))
}

/// Finite-size estimates of the pinning free energy `F(t) = lim (1/n) ln E^{⊗2} e^{t L_n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PinningCurve<T> {
    pub t: T,
    pub n_max: usize,
    /// `(n, (1/n) ln E^{⊗2} e^{t L_n})` for `n = n_max, n_max/2, n_max/4, ...`.
    pub values: Vec<(usize, T)>,
    /// `(1/n_max) ln E^{⊗2} e^{t L_{n_max}}`.
    pub raw: T,
    /// Two-point slope between `n_max / 2` and `n_max`; the headline estimate.
    pub slope: T,
    /// Set when `n_max * t^2` is below [`PINNING_WARNING_THRESHOLD`].
    pub undersized: bool,
}

impl<T: Scalar> PinningCurve<T> {
    pub fn estimate(&self) -> T {
        self.slope
    }

    /// Two-point slopes `(ln Z_n - ln Z_{n/2}) / (n/2)` paired with each `values` entry.
    pub fn slopes(&self) -> Vec<Option<T>> {
        self.values
            .iter()
            .map(|&(n, v)| {
                let half = n / 2;
                let prev = self.values.iter().find(|&&(m, _)| m == half)?;
                let n_t = T::lit(n as f64);
                let h_t = T::lit(half as f64);
                Some((v * n_t - prev.1 * h_t) / (n_t - h_t))
            })
            .collect()
    }
}

pub fn pinning_free_energy<T: Scalar>(t: T, n_max: usize) -> Result<PinningCurve<T>> {
    if !(t >= T::zero()) {
        return Err(Error::invalid(format!("pinning parameter must be >= 0, got {t}")));
    }
    if n_max < 2 {
        return Err(Error::invalid(format!("n_max must be >= 2, got {n_max}")));
    }
    let seq = log_pinning_sequence(n_max, t);
    let per_step = |n: usize| seq[n - 1] / T::lit(n as f64);
    let mut values = Vec::new();
    let mut n = n_max;
    while n >= 1 {
        values.push((n, per_step(n)));
        n /= 2;
    }
    let half = n_max / 2;
    let slope = (seq[n_max - 1] - seq[half - 1]) / T::lit((n_max - half) as f64);
    let undersized = t > T::zero() && (n_max as f64) * (t * t).to_f64_lossy() < PINNING_WARNING_THRESHOLD;
    if undersized {
        log::warn!("pinning estimate at t = {t} with n_max = {n_max} is below the correlation-length threshold");
    }
    Ok(PinningCurve { t, n_max, values, raw: per_step(n_max), slope, undersized })
}

/// `ln E^{⊗2} e^{t L_n}` by enumerating all `4^n` pairs of paths.
pub fn brute_force_pinning<T: Scalar>(n: usize, t: T) -> Result<T> {
    if n > PINNING_BRUTE_FORCE_MAX_STEPS {
        return Err(Error::OracleTooLarge { n, cap: PINNING_BRUTE_FORCE_MAX_STEPS });
    }
    if n == 0 {
        return Err(Error::invalid("pinning system needs n >= 1"));
    }
    let mut paths = Vec::with_capacity(1 << n);
    for_each_path(n, |p| paths.push(p.to_vec()));
    let mut exponents = Vec::with_capacity(paths.len() * paths.len());
    for a in &paths {
        for b in &paths {
            let contacts = a.iter().zip(b).filter(|(x, y)| x == y).count();
            exponents.push(t * T::lit(contacts as f64));
        }
    }
    Ok(log_sum_exp(&exponents) - T::lit(2.0 * n as f64 * std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Free energy of the renewal of returns of `D`: the return-time generating
    /// function is `1 - sqrt(1 - s)`, so `F(t) = -ln(1 - (1 - e^{-t})^2)`.
    fn renewal_free_energy(t: f64) -> f64 {
        -(1.0 - (-(-t).exp_m1()).powi(2)).ln()
    }

    #[test]
    fn small_examples() {
        assert_eq!(log_pinning(5, 0.0f64).unwrap(), 0.0);
        let ln2 = std::f64::consts::LN_2;
        assert!((log_pinning(1, ln2).unwrap() - 1.5f64.ln()).abs() < 1e-15);
        assert!((log_pinning(2, ln2).unwrap() - (17.0f64 / 8.0).ln()).abs() < 1e-15);
        assert!((brute_force_pinning(2, ln2).unwrap() - (17.0f64 / 8.0).ln()).abs() < 1e-15);
        assert!((brute_force_pinning(1, ln2).unwrap() - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn f_n_examples() {
        assert_eq!(f_n(0.0f64, 10).unwrap(), 0.0);
        let v = f_n(0.5f64, 1).unwrap();
        assert!((v - 0.5 * (0.5 * 0.5f64.exp() + 0.5).ln()).abs() < 1e-15);
        assert!((v - 0.140465).abs() < 1e-6);
    }

    #[test]
    fn oracle_equivalence() {
        for n in 1..=PINNING_BRUTE_FORCE_MAX_STEPS {
            for t in [0.0, 0.3, std::f64::consts::LN_2, 1.5] {
                let dp = log_pinning(n, t).unwrap();
                let bf = brute_force_pinning(n, t).unwrap();
                assert!((dp - bf).abs() <= 1e-10, "n={n} t={t}: {dp} vs {bf}");
            }
        }
        assert!(brute_force_pinning::<f64>(9, 0.1).is_err());
    }

    #[test]
    fn free_endpoint_sequence_is_subadditive() {
        // Restarting away from D = 0 can only lose contacts: Z_{n+m} <= Z_n Z_m.
        for t in [0.05, 0.4, 1.5] {
            let seq = log_pinning_sequence(300, t);
            for n in 1..150 {
                for m in [1, 7, n, 150] {
                    assert!(seq[n + m - 1] <= seq[n - 1] + seq[m - 1] + 1e-12, "t={t} n={n} m={m}");
                }
            }
            for n in 1..seq.len() {
                let a = seq[n - 1] / n as f64;
                let b = seq[n] / (n + 1) as f64;
                assert!(b <= a + 1e-15, "t={t} n={n}: {a} < {b}");
            }
        }
    }

    #[test]
    fn convex_nondecreasing_in_t() {
        let h = 0.05;
        let vals: Vec<f64> = (0..40).map(|k| log_pinning(50, k as f64 * h).unwrap()).collect();
        for w in vals.windows(3) {
            assert!(w[1] >= w[0]);
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-10);
        }
    }

    #[test]
    fn converges_to_renewal_free_energy() {
        for t in [0.4, 1.0] {
            let curve = pinning_free_energy(t, 4000).unwrap();
            let exact = renewal_free_energy(t);
            assert!(curve.slope > 0.0);
            assert!((curve.slope - exact).abs() < 1e-3 * exact, "t={t}: {} vs {exact}", curve.slope);
            // the slope converges faster than the raw ratio
            assert!((curve.slope - exact).abs() < (curve.raw - exact).abs());
        }
    }

    #[test]
    fn positive_for_positive_t_and_flags_small_systems() {
        let c = pinning_free_energy(0.1f64, 1000).unwrap();
        assert!(c.slope > 0.0 && c.raw > 0.0);
        assert!(c.undersized);
        assert!(!pinning_free_energy(0.4f64, 4000).unwrap().undersized);
        assert_eq!(pinning_free_energy(0.0f64, 16).unwrap().slope, 0.0);
        assert!(pinning_free_energy(0.1f64, 1).is_err());
    }

    #[test]
    fn large_t_does_not_overflow() {
        let v = log_pinning(200, 800.0f64).unwrap();
        assert!(v.is_finite());
        let f32v = log_pinning(200, 2.0f32).unwrap() as f64;
        assert!((f32v - log_pinning(200, 2.0f64).unwrap()).abs() < 1e-3);
    }
}
