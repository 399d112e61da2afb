//! Two-replica transfer matrix for the interpolation functional
//!
//! ```text
//! phi_n(t, u) = (1 / 2n) ln E^{⊗2} exp(sqrt(t) beta H_n(S^1, S^2) - 2n lambda(sqrt(t) beta) + u beta^2 L_n(S^1, S^2))
//! ```
//!
//! evaluated for a single environment realization, with its exact `u`- and `t`-derivatives.
//! Environment averages are taken by [`fkg_gap`] and [`path_check`].

use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::field::EnvField;
use crate::lattice::for_each_path;
use crate::mc::{Ensemble, McEstimate};
use crate::pinning;
use crate::polymer::{energy_of, log_sum_exp};
use crate::scalar::{rescale_max, Scalar};

/// Smallest `t` at which [`dphi_dt`] is evaluated; the `1 / sqrt(t)` factor is singular at 0.
pub const T_MIN: f64 = 0.05;
pub const REPLICA_BRUTE_FORCE_MAX_STEPS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPoint {
    pub t: f64,
    pub u: f64,
    pub beta: f64,
}

impl InterpolationPoint {
    pub fn new(t: f64, u: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("t must lie in [0, 1], got {t}")));
        }
        if !(u >= 0.0) || !u.is_finite() {
            return Err(Error::invalid(format!("u must be finite and >= 0, got {u}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { t, u, beta })
    }

    /// Inverse temperature seen by each replica, `sqrt(t) beta`.
    pub fn field_beta(&self) -> f64 {
        self.t.sqrt() * self.beta
    }

    /// Contact reward `u beta^2`.
    pub fn contact_reward(&self) -> f64 {
        self.u * self.beta * self.beta
    }

    /// Requires `sqrt(t) beta <= B / 2`.
    pub fn check_model(&self, model: &EnvModel) -> Result<()> {
        let half = 0.5 * model.mgf_bound();
        if self.field_beta() > half {
            return Err(Error::Domain { beta: self.field_beta(), bound: half });
        }
        Ok(())
    }
}

/// Two-replica DP state over `(x^1, x^2)`, row-major, max-rescaled.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaLayer<T> {
    step: usize,
    weights: Vec<T>,
    log_scale: T,
}

impl<T: Scalar> ReplicaLayer<T> {
    pub fn origin() -> Self {
        Self { step: 0, weights: vec![T::one()], log_scale: T::zero() }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Side length `step + 1` of the weight matrix.
    pub fn side(&self) -> usize {
        self.step + 1
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn log_scale(&self) -> T {
        self.log_scale
    }

    /// One step with each replica tilted by `e^{field_beta * eta}` and contacts by `e^{reward}`.
    pub fn advance(&self, field: &EnvField<T>, field_beta: T, reward: T) -> Self {
        let mut scratch = Vec::new();
        let mut next = Vec::new();
        pair_step(&self.weights, self.side(), &mut scratch, &mut next);
        let tilt = Tilt::new(field.layer(self.step + 1), field_beta, reward);
        let side = self.side() + 1;
        for k1 in 0..side {
            for k2 in 0..side {
                next[k1 * side + k2] = next[k1 * side + k2] * tilt.weight(k1, k2);
            }
        }
        let log_scale = self.log_scale + tilt.log_shift + rescale_max(&mut next);
        Self { step: self.step + 1, weights: next, log_scale }
    }

    pub fn log_total(&self) -> T {
        self.log_scale + self.weights.iter().copied().sum::<T>().ln()
    }
}

/// Both replicas take an independent simple-random-walk step.
fn pair_step<T: Scalar>(prev: &[T], side: usize, scratch: &mut Vec<T>, next: &mut Vec<T>) {
    let half = T::lit(0.5);
    let out = side + 1;
    scratch.clear();
    scratch.resize(side * out, T::zero());
    for a in 0..side {
        let row = &prev[a * side..(a + 1) * side];
        let dst = &mut scratch[a * out..(a + 1) * out];
        for k in 0..out {
            let up = if k >= 1 { row[k - 1] } else { T::zero() };
            let down = if k < side { row[k] } else { T::zero() };
            dst[k] = half * (up + down);
        }
    }
    next.clear();
    next.resize(out * out, T::zero());
    for k1 in 0..out {
        for k2 in 0..out {
            let up = if k1 >= 1 { scratch[(k1 - 1) * out + k2] } else { T::zero() };
            let down = if k1 < side { scratch[k1 * out + k2] } else { T::zero() };
            next[k1 * out + k2] = half * (up + down);
        }
    }
}

/// Per-layer tilt `e^{s eta(x^1) + s eta(x^2) + reward 1{x^1 = x^2}}`, shifted to be <= 1.
struct Tilt<T> {
    boltz: Vec<T>,
    off_contact: T,
    log_shift: T,
}

impl<T: Scalar> Tilt<T> {
    fn new(layer: &[T], s: T, reward: T) -> Self {
        let m = layer.iter().map(|&e| s * e).fold(T::neg_infinity(), T::max);
        let boltz = layer.iter().map(|&e| (s * e - m).exp()).collect();
        // With a positive reward the off-contact pairs carry e^{-reward} instead.
        let (off_contact, reward_shift) =
            if reward > T::zero() { ((-reward).exp(), reward) } else { (T::one(), T::zero()) };
        Self { boltz, off_contact, log_shift: m + m + reward_shift }
    }

    #[inline]
    fn weight(&self, k1: usize, k2: usize) -> T {
        let w = self.boltz[k1] * self.boltz[k2];
        if k1 == k2 {
            w
        } else {
            w * self.off_contact
        }
    }
}

/// `ln E^{⊗2} e^{s H_n + reward L_n}` and, optionally, the tilted means of `H_n` and `L_n`.
struct Sweep<T> {
    log_z: T,
    mean_energy: T,
    mean_overlap: T,
}

fn sweep<T: Scalar>(field: &EnvField<T>, s: T, reward: T, observables: bool) -> Sweep<T> {
    let mut z = vec![T::one()];
    let mut acc_h = vec![T::zero()];
    let mut acc_l = vec![T::zero()];
    let (mut zs, mut hs, mut ls) = (Vec::new(), Vec::new(), Vec::new());
    let mut scratch = Vec::new();
    let mut log_scale = T::zero();
    for i in 1..=field.n() {
        let side = i;
        let out = i + 1;
        let layer = field.layer(i);
        let tilt = Tilt::new(layer, s, reward);
        pair_step(&z, side, &mut scratch, &mut zs);
        if observables {
            pair_step(&acc_h, side, &mut scratch, &mut hs);
            pair_step(&acc_l, side, &mut scratch, &mut ls);
        }
        for k1 in 0..out {
            for k2 in 0..out {
                let idx = k1 * out + k2;
                let w = tilt.weight(k1, k2);
                let base = zs[idx];
                if observables {
                    let contact = if k1 == k2 { T::one() } else { T::zero() };
                    hs[idx] = (hs[idx] + base * (layer[k1] + layer[k2])) * w;
                    ls[idx] = (ls[idx] + base * contact) * w;
                }
                zs[idx] = base * w;
            }
        }
        let shift = rescale_max(&mut zs);
        log_scale = log_scale + tilt.log_shift + shift;
        if observables {
            let inv = (-shift).exp();
            for v in hs.iter_mut().chain(ls.iter_mut()) {
                *v = *v * inv;
            }
            std::mem::swap(&mut acc_h, &mut hs);
            std::mem::swap(&mut acc_l, &mut ls);
        }
        std::mem::swap(&mut z, &mut zs);
    }
    let total: T = z.iter().copied().sum();
    let (mean_energy, mean_overlap) = if observables {
        (acc_h.iter().copied().sum::<T>() / total, acc_l.iter().copied().sum::<T>() / total)
    } else {
        (T::nan(), T::nan())
    };
    Sweep { log_z: log_scale + total.ln(), mean_energy, mean_overlap }
}

/// `phi_n(t, u)` for one environment realization, `O(n^3)`.
pub fn phi<T: Scalar>(field: &EnvField<T>, pt: &InterpolationPoint, model: &EnvModel) -> Result<T> {
    pt.check_model(model)?;
    let lambda = model.lambda(pt.field_beta())?;
    let n = field.n() as f64;
    let sw = sweep(field, T::lit(pt.field_beta()), T::lit(pt.contact_reward()), false);
    Ok((sw.log_z - T::lit(2.0 * n * lambda)) / T::lit(2.0 * n))
}

/// Means of `H_n(S^1, S^2)` and `L_n(S^1, S^2)` under the two-replica measure
/// with density proportional to `exp(sqrt(t) beta H_n + u beta^2 L_n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GibbsObservables<T> {
    pub energy: T,
    pub overlap: T,
}

pub fn gibbs_observables<T: Scalar>(
    field: &EnvField<T>,
    pt: &InterpolationPoint,
    model: &EnvModel,
) -> Result<GibbsObservables<T>> {
    pt.check_model(model)?;
    let sw = sweep(field, T::lit(pt.field_beta()), T::lit(pt.contact_reward()), true);
    Ok(GibbsObservables { energy: sw.mean_energy, overlap: sw.mean_overlap })
}

/// `d phi_n / du = (beta^2 / 2n) <L_n>`.
pub fn dphi_du<T: Scalar>(field: &EnvField<T>, pt: &InterpolationPoint, model: &EnvModel) -> Result<T> {
    let obs = gibbs_observables(field, pt, model)?;
    Ok(du_from(&obs, pt, field.n()))
}

/// `d phi_n / dt = (beta / (4n sqrt(t))) (<H_n> - 2n lambda'(sqrt(t) beta))`, for `t >= T_MIN`.
pub fn dphi_dt<T: Scalar>(field: &EnvField<T>, pt: &InterpolationPoint, model: &EnvModel) -> Result<T> {
    check_t_min(pt)?;
    let obs = gibbs_observables(field, pt, model)?;
    dt_from(&obs, pt, field.n(), model)
}

/// Both partial derivatives from a single sweep.
pub fn derivatives<T: Scalar>(field: &EnvField<T>, pt: &InterpolationPoint, model: &EnvModel) -> Result<(T, T)> {
    check_t_min(pt)?;
    let obs = gibbs_observables(field, pt, model)?;
    Ok((du_from(&obs, pt, field.n()), dt_from(&obs, pt, field.n(), model)?))
}

fn check_t_min(pt: &InterpolationPoint) -> Result<()> {
    if pt.t < T_MIN {
        return Err(Error::BelowTMin { t: pt.t, t_min: T_MIN });
    }
    Ok(())
}

fn du_from<T: Scalar>(obs: &GibbsObservables<T>, pt: &InterpolationPoint, n: usize) -> T {
    T::lit(pt.beta * pt.beta / (2.0 * n as f64)) * obs.overlap
}

fn dt_from<T: Scalar>(obs: &GibbsObservables<T>, pt: &InterpolationPoint, n: usize, model: &EnvModel) -> Result<T> {
    let n = n as f64;
    let lp = model.lambda_prime(pt.field_beta())?;
    let pref = pt.beta / (4.0 * n * pt.t.sqrt());
    Ok(T::lit(pref) * (obs.energy - T::lit(2.0 * n * lp)))
}

struct PairTable<T> {
    energies: Vec<T>,
    positions: Vec<Vec<i64>>,
}

fn pair_table<T: Scalar>(field: &EnvField<T>) -> Result<PairTable<T>> {
    let n = field.n();
    if n > REPLICA_BRUTE_FORCE_MAX_STEPS {
        return Err(Error::OracleTooLarge { n, cap: REPLICA_BRUTE_FORCE_MAX_STEPS });
    }
    let mut energies = Vec::new();
    let mut positions = Vec::new();
    for_each_path(n, |p| {
        energies.push(energy_of(field, p));
        positions.push(p.to_vec());
    });
    Ok(PairTable { energies, positions })
}

fn contacts(a: &[i64], b: &[i64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// `phi_n(t, u)` by enumerating all `4^n` path pairs.
pub fn brute_force_phi<T: Scalar>(field: &EnvField<T>, pt: &InterpolationPoint, model: &EnvModel) -> Result<T> {
    let table = pair_table(field)?;
    pt.check_model(model)?;
    let n = field.n() as f64;
    let s = T::lit(pt.field_beta());
    let reward = T::lit(pt.contact_reward());
    let mut exps = Vec::with_capacity(table.energies.len().pow(2));
    for (ha, pa) in table.energies.iter().zip(&table.positions) {
        for (hb, pb) in table.energies.iter().zip(&table.positions) {
            exps.push(s * (*ha + *hb) + reward * T::lit(contacts(pa, pb) as f64));
        }
    }
    let lambda = model.lambda(pt.field_beta())?;
    let log_e = log_sum_exp(&exps) - T::lit(2.0 * n * std::f64::consts::LN_2);
    Ok((log_e - T::lit(2.0 * n * lambda)) / T::lit(2.0 * n))
}

/// Tilted means of `H_n` and `L_n` by enumerating all `4^n` path pairs.
pub fn brute_force_gibbs<T: Scalar>(
    field: &EnvField<T>,
    pt: &InterpolationPoint,
    model: &EnvModel,
) -> Result<GibbsObservables<T>> {
    let table = pair_table(field)?;
    pt.check_model(model)?;
    let s = T::lit(pt.field_beta());
    let reward = T::lit(pt.contact_reward());
    let mut items = Vec::new();
    for (ha, pa) in table.energies.iter().zip(&table.positions) {
        for (hb, pb) in table.energies.iter().zip(&table.positions) {
            let l = T::lit(contacts(pa, pb) as f64);
            items.push((s * (*ha + *hb) + reward * l, *ha + *hb, l));
        }
    }
    let m = items.iter().map(|i| i.0).fold(T::neg_infinity(), T::max);
    let (mut z, mut h, mut l) = (T::zero(), T::zero(), T::zero());
    for (e, hh, ll) in items {
        let w = (e - m).exp();
        z = z + w;
        h = h + w * hh;
        l = l + w * ll;
    }
    Ok(GibbsObservables { energy: h / z, overlap: l / z })
}

/// Whether the sign lemma for `d/du - d/dt` is asserted: it needs `lambda''(0) < 1`.
pub fn fkg_lemma_applies(model: &EnvModel) -> bool {
    model.variance() < 1.0
}

/// Monte Carlo estimate of `E[d phi_n / du - d phi_n / dt]` at `pt`.
pub fn fkg_gap(ens: &Ensemble, pt: &InterpolationPoint) -> Result<McEstimate> {
    check_t_min(pt)?;
    pt.check_model(&ens.model)?;
    if !fkg_lemma_applies(&ens.model) {
        log::warn!(
            "environment variance {} >= 1: the sign of the FKG gap is reported but not asserted",
            ens.model.variance()
        );
    }
    ens.estimate(|field| {
        let (du, dt) = derivatives(field, pt, &ens.model)?;
        Ok(du - dt)
    })
}

/// Monte Carlo estimate of `E[phi_n(t, 2 - t)] - phi_n(0, 2)`; the second term is the
/// environment-free pinning value `F_n(beta)`.
pub fn path_check(ens: &Ensemble, t: f64, beta: f64) -> Result<McEstimate> {
    let pt = InterpolationPoint::new(t, 2.0 - t, beta)?;
    pt.check_model(&ens.model)?;
    if t == 0.0 {
        return Ok(McEstimate { mean: 0.0, stderr: 0.0, replicates: ens.replicates, master_seed: ens.seed });
    }
    let reference = pinning::f_n(beta, ens.n)?;
    ens.estimate(|field| Ok(phi(field, &pt, &ens.model)? - reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_replicate;
    use crate::pinning::log_pinning;
    use crate::polymer::{log_w, overlap_expectation};

    fn field(model: &EnvModel, n: usize, r: u64) -> EnvField<f64> {
        sample_replicate(model, n, 77, r).unwrap()
    }

    #[test]
    fn phi_examples() {
        let g = EnvModel::gaussian(0.25).unwrap();
        let f = field(&g, 6, 0);
        let origin = InterpolationPoint::new(0.0, 0.0, 0.7).unwrap();
        assert_eq!(phi(&f, &origin, &g).unwrap(), 0.0);

        let pin = InterpolationPoint::new(0.0, 1.3, 0.7).unwrap();
        let expected = log_pinning(6, 1.3 * 0.49).unwrap() / 12.0;
        assert!((phi(&f, &pin, &g).unwrap() - expected).abs() < 1e-10);
        assert!((brute_force_phi(&f, &pin, &g).unwrap() - expected).abs() < 1e-10);

        let top = InterpolationPoint::new(1.0, 0.0, 0.7).unwrap();
        let expected = log_w(&f, 0.7, &g).unwrap() / 6.0;
        assert!((phi(&f, &top, &g).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn gibbs_examples() {
        let g = EnvModel::gaussian(1.0).unwrap();
        for (n, ov) in [(1, 0.5), (2, 0.875)] {
            let f = field(&g, n, 1);
            let obs = gibbs_observables(&f, &InterpolationPoint::new(0.0, 0.0, 1.0).unwrap(), &g).unwrap();
            assert!((obs.overlap - ov).abs() < 1e-14);
            assert!((overlap_expectation(&f, 0.0) - ov).abs() < 1e-14);
        }
        for n in 1..=6 {
            let f = field(&g, n, 2);
            for pt in [InterpolationPoint::new(0.0, 0.0, 0.5).unwrap(), InterpolationPoint::new(0.6, 1.5, 0.8).unwrap()]
            {
                let dp = gibbs_observables(&f, &pt, &g).unwrap();
                let bf = brute_force_gibbs(&f, &pt, &g).unwrap();
                assert!((dp.energy - bf.energy).abs() < 1e-10);
                assert!((dp.overlap - bf.overlap).abs() < 1e-10);
            }
        }
        // Large contact reward pins the replicas together.
        let f = field(&g, 10, 3);
        let obs = gibbs_observables(&f, &InterpolationPoint::new(0.5, 400.0, 1.0).unwrap(), &g).unwrap();
        assert!((obs.overlap - 10.0).abs() < 1e-8, "{}", obs.overlap);
    }

    #[test]
    fn du_at_origin_is_environment_free() {
        let p = EnvModel::centered_poisson(1.0).unwrap();
        let beta = 0.4;
        let pt = InterpolationPoint::new(0.0, 0.0, beta).unwrap();
        let n = 9;
        let mut expected = 0.0;
        let mut c = 1.0;
        for i in 1..=n {
            c *= (2 * i - 1) as f64 / (2 * i) as f64;
            expected += c;
        }
        expected *= beta * beta / (2.0 * n as f64);
        for r in 0..3 {
            let v = dphi_du(&field(&p, n, r), &pt, &p).unwrap();
            assert!((v - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let g = EnvModel::centered_gamma(2.0, 0.2).unwrap();
        let f = field(&g, 12, 4);
        let pt = InterpolationPoint::new(0.5, 0.8, 0.9).unwrap();
        let h = 1e-4;
        let at = |t: f64, u: f64| phi(&f, &InterpolationPoint::new(t, u, 0.9).unwrap(), &g).unwrap();
        let fd_u = (at(0.5, 0.8 + h) - at(0.5, 0.8 - h)) / (2.0 * h);
        let fd_t = (at(0.5 + h, 0.8) - at(0.5 - h, 0.8)) / (2.0 * h);
        let (du, dt) = derivatives(&f, &pt, &g).unwrap();
        assert!((fd_u - du).abs() <= 1e-5 * du.abs(), "{fd_u} vs {du}");
        assert!((fd_t - dt).abs() <= 1e-5 * dt.abs(), "{fd_t} vs {dt}");
        assert!((dphi_du(&f, &pt, &g).unwrap() - du).abs() < 1e-15);
        assert!((dphi_dt(&f, &pt, &g).unwrap() - dt).abs() < 1e-15);
    }

    #[test]
    fn convex_nondecreasing_in_u() {
        let g = EnvModel::gaussian(0.25).unwrap();
        let f = field(&g, 15, 5);
        let vals: Vec<f64> = (0..30)
            .map(|k| phi(&f, &InterpolationPoint::new(0.7, k as f64 * 0.1, 0.6).unwrap(), &g).unwrap())
            .collect();
        for w in vals.windows(3) {
            assert!(w[1] >= w[0]);
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-10);
        }
    }

    #[test]
    fn domain_and_refusals() {
        let g = EnvModel::gaussian(1.0).unwrap();
        let f = field(&g, 8, 0);
        assert!(InterpolationPoint::new(1.2, 0.0, 1.0).is_err());
        assert!(InterpolationPoint::new(0.5, -1.0, 1.0).is_err());
        assert!(phi(&f, &InterpolationPoint::new(1.0, 0.0, 4.5).unwrap(), &g).is_err());
        assert!(dphi_dt(&f, &InterpolationPoint::new(0.01, 0.0, 1.0).unwrap(), &g).is_err());
        assert!(matches!(
            brute_force_phi(&f, &InterpolationPoint::new(0.5, 0.0, 1.0).unwrap(), &g),
            Err(Error::OracleTooLarge { n: 8, cap: 7 })
        ));
    }

    #[test]
    fn layer_api_agrees_with_phi() {
        let g = EnvModel::gaussian(0.25).unwrap();
        let f = field(&g, 9, 6);
        let pt = InterpolationPoint::new(0.36, 1.0, 0.5).unwrap();
        let mut layer = ReplicaLayer::origin();
        for _ in 0..f.n() {
            layer = layer.advance(&f, pt.field_beta(), pt.contact_reward());
            assert!(layer.weights().iter().all(|&w| w > 0.0 && w <= 1.0));
        }
        let n = 9.0;
        let lam = g.lambda(pt.field_beta()).unwrap();
        let via_layers = (layer.log_total() - 2.0 * n * lam) / (2.0 * n);
        assert!((via_layers - phi(&f, &pt, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn path_check_at_zero_is_exact() {
        let ens = Ensemble::new(EnvModel::gaussian(0.25).unwrap(), 8, 4, 3).unwrap();
        let e = path_check(&ens, 0.0, 0.3).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));
    }
}
