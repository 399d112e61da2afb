//! Lévy–Khinchine triples `(c0, sigma2, pi)` and integration against the jump measure.
//!
//! The compensation convention is the unit truncation:
//!
//! ```text
//! lambda(beta) = c0 beta + sigma2 beta^2 / 2 + ∫ (e^{beta u} - 1 - beta u 1{|u| <= 1}) pi(du)
//! ```
//!
//! Triples written with a different truncation radius must be converted with
//! [`LevyTriple::from_truncation`] before use.

use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Relative disagreement tolerated between the fine and the half-size Gauss–Legendre rules.
const QUADRATURE_RTOL: f64 = 1e-9;
const QUADRATURE_ATOL: f64 = 1e-14;

pub const DEFAULT_QUADRATURE_NODES: usize = 256;

/// Part of the real line an integral runs over. `u = 0` is never charged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    All,
    Negative,
    Positive,
}

impl Region {
    fn contains(self, u: f64) -> bool {
        match self {
            Region::All => u != 0.0,
            Region::Negative => u < 0.0,
            Region::Positive => u > 0.0,
        }
    }
}

/// Absolutely continuous part of a jump measure, integrated by Gauss–Legendre on `[lower, upper]`.
#[derive(Clone)]
pub struct JumpDensity {
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lower: f64,
    upper: f64,
    nodes: usize,
    fine: Arc<GaussLegendre>,
    coarse: Arc<GaussLegendre>,
}

impl fmt::Debug for JumpDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpDensity")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("nodes", &self.nodes)
            .finish_non_exhaustive()
    }
}

impl JumpDensity {
    pub fn new(
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lower: f64,
        upper: f64,
        nodes: usize,
    ) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::invalid(format!(
                "jump density bounds must be finite with lower < upper, got [{lower}, {upper}]"
            )));
        }
        if nodes < 4 {
            return Err(Error::invalid(format!("quadrature node count {nodes} is below 4")));
        }
        let rule = |n: usize| GaussLegendre::new(NonZeroUsize::new(n).expect("n >= 2"));
        Ok(Self {
            density: Arc::new(density),
            lower,
            upper,
            nodes,
            fine: Arc::new(rule(nodes)),
            coarse: Arc::new(rule(nodes / 2)),
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.density)(u)
    }

    /// Panels of `[lower, upper] ∩ region`, split at -1, 0 and 1 so the truncation
    /// indicator never sits inside a panel.
    fn panels(&self, region: Region) -> Vec<(f64, f64)> {
        let (lo, hi) = match region {
            Region::All => (self.lower, self.upper),
            Region::Negative => (self.lower, self.upper.min(0.0)),
            Region::Positive => (self.lower.max(0.0), self.upper),
        };
        if !(lo < hi) {
            return Vec::new();
        }
        let mut cuts = vec![lo];
        cuts.extend([-1.0, 0.0, 1.0].into_iter().filter(|&c| c > lo && c < hi));
        cuts.push(hi);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn integrate_on(&self, lo: f64, hi: f64, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        self.integrate_panels(&[(lo, hi)], g)
    }

    fn integrate_panels(&self, panels: &[(f64, f64)], g: &dyn Fn(f64) -> f64) -> Result<f64> {
        let f = |u: f64| {
            let d = (self.density)(u);
            if d == 0.0 {
                0.0
            } else {
                d * g(u)
            }
        };
        let mut fine = 0.0;
        let mut coarse = 0.0;
        for &(a, b) in panels {
            fine += self.fine.integrate(a, b, f);
            coarse += self.coarse.integrate(a, b, f);
        }
        if !fine.is_finite() {
            return Err(Error::Divergent(format!("jump-density integral evaluated to {fine}")));
        }
        if (fine - coarse).abs() > QUADRATURE_RTOL * fine.abs() + QUADRATURE_ATOL {
            return Err(Error::Quadrature(format!(
                "{} nodes give {fine:e}, {} nodes give {coarse:e}",
                self.nodes,
                self.nodes / 2
            )));
        }
        Ok(fine)
    }
}

/// Jump measure `pi` on the punctured line: finitely many atoms plus an optional density.
#[derive(Clone, Debug, Default)]
pub struct JumpMeasure {
    atoms: Vec<(f64, f64)>,
    density: Option<JumpDensity>,
}

impl JumpMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Atoms as `(location, mass)`. Zero-mass atoms are dropped.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut kept = Vec::new();
        for (loc, mass) in atoms {
            if !loc.is_finite() || loc == 0.0 {
                return Err(Error::invalid(format!("jump atom location must be finite and nonzero, got {loc}")));
            }
            if !mass.is_finite() || mass < 0.0 {
                return Err(Error::invalid(format!("jump atom mass must be nonnegative, got {mass}")));
            }
            if mass > 0.0 {
                kept.push((loc, mass));
            }
        }
        Ok(Self { atoms: kept, density: None })
    }

    /// Attaches a density part; rejects densities with `∫ min(1, u^2) pi(du)` not finite.
    pub fn with_density(mut self, density: JumpDensity) -> Result<Self> {
        let levy_mass = density.integrate_panels(&density.panels(Region::All), &|u| (u * u).min(1.0))?;
        if !levy_mass.is_finite() {
            return Err(Error::Divergent("∫ min(1, u^2) pi(du) is not finite".into()));
        }
        self.density = Some(density);
        Ok(self)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&JumpDensity> {
        self.density.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.density.is_none()
    }

    /// `∫_region g(u) pi(du)`.
    pub fn integrate(&self, region: Region, g: impl Fn(f64) -> f64) -> Result<f64> {
        let atoms: f64 = self.atoms.iter().filter(|(u, _)| region.contains(*u)).map(|&(u, m)| m * g(u)).sum();
        let dens = match &self.density {
            Some(d) => d.integrate_panels(&d.panels(region), &g)?,
            None => 0.0,
        };
        Ok(atoms + dens)
    }

    /// Flags a positive-side integral whose integrand has not decayed at the density's
    /// upper bound: the mass on `[upper, 2 upper]` must be negligible next to the total.
    fn check_positive_tail(&self, g: &dyn Fn(f64) -> f64, total: f64) -> Result<()> {
        let Some(d) = &self.density else { return Ok(()) };
        if d.upper <= 0.0 {
            return Ok(());
        }
        let tail = d.integrate_on(d.upper, 2.0 * d.upper, g).unwrap_or(f64::INFINITY);
        if !tail.is_finite() || tail.abs() > 1e-8 * total.abs().max(1e-300) {
            return Err(Error::Divergent(format!(
                "positive-side integrand still carries mass {tail:e} beyond the cutoff {}",
                d.upper
            )));
        }
        Ok(())
    }
}

/// Drift, Gaussian variance and jump measure of an infinitely divisible law.
#[derive(Clone, Debug)]
pub struct LevyTriple {
    pub c0: f64,
    pub sigma2: f64,
    pub jumps: JumpMeasure,
}

fn in_unit(u: f64) -> bool {
    u.abs() <= 1.0
}

impl LevyTriple {
    pub fn new(c0: f64, sigma2: f64, jumps: JumpMeasure) -> Result<Self> {
        if !c0.is_finite() {
            return Err(Error::invalid(format!("drift c0 must be finite, got {c0}")));
        }
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!("Gaussian variance must be >= 0, got {sigma2}")));
        }
        Ok(Self { c0, sigma2, jumps })
    }

    /// Converts a triple compensated with `1{|u| <= radius}` to the unit-truncation convention.
    ///
    /// Only the drift changes: `c0 = c0_r + ∫ u (1{|u| <= 1} - 1{|u| <= radius}) pi(du)`.
    pub fn from_truncation(c0_radius: f64, radius: f64, sigma2: f64, jumps: JumpMeasure) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("truncation radius must be positive, got {radius}")));
        }
        let shift = jumps.integrate(Region::All, |u| {
            let a = if in_unit(u) { 1.0 } else { 0.0 };
            let b = if u.abs() <= radius { 1.0 } else { 0.0 };
            u * (a - b)
        })?;
        Self::new(c0_radius + shift, sigma2, jumps)
    }

    pub fn lambda(&self, beta: f64) -> Result<f64> {
        let jumps = self.jumps.integrate(Region::All, |u| {
            let e = (beta * u).exp_m1();
            if in_unit(u) {
                e - beta * u
            } else {
                e
            }
        })?;
        Ok(self.c0 * beta + 0.5 * self.sigma2 * beta * beta + jumps)
    }

    pub fn lambda_prime(&self, beta: f64) -> Result<f64> {
        let jumps = self.jumps.integrate(Region::All, |u| {
            if in_unit(u) {
                u * (beta * u).exp_m1()
            } else {
                u * (beta * u).exp()
            }
        })?;
        Ok(self.c0 + self.sigma2 * beta + jumps)
    }

    pub fn lambda_second(&self, beta: f64) -> Result<f64> {
        let jumps = self.jumps.integrate(Region::All, |u| u * u * (beta * u).exp())?;
        Ok(self.sigma2 + jumps)
    }

    /// Right-hand side of the integration-by-parts identity
    ///
    /// `E[eta f(eta)] = c0 E f + sigma2 E f' + ∫ (E f(eta + u) - 1{|u| <= 1} E f(eta)) u pi(du)`
    ///
    /// where `shifted_mean(a) = E f(eta + a)` and `mean_derivative = E f'(eta)`.
    pub fn ibp_rhs(&self, shifted_mean: impl Fn(f64) -> f64, mean_derivative: f64) -> Result<f64> {
        let base = shifted_mean(0.0);
        let jumps = self.jumps.integrate(Region::All, |u| {
            let compensator = if in_unit(u) { base } else { 0.0 };
            (shifted_mean(u) - compensator) * u
        })?;
        Ok(self.c0 * base + self.sigma2 * mean_derivative + jumps)
    }

    /// `sigma2 + ∫_{u<0} u^2 pi(du) + ∫_{u>0} u^2 e^{B u} pi(du)`.
    pub fn lemma_constant(&self, big_b: f64) -> Result<f64> {
        let negative = self.jumps.integrate(Region::Negative, |u| u * u)?;
        let g = move |u: f64| u * u * (big_b * u).exp();
        let positive = self.jumps.integrate(Region::Positive, g)?;
        if !positive.is_finite() {
            return Err(Error::Divergent(format!("∫_(u>0) u^2 e^(Bu) pi(du) diverges at B = {big_b}")));
        }
        self.jumps.check_positive_tail(&g, positive)?;
        Ok(self.sigma2 + negative + positive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_reject_zero_location() {
        assert!(JumpMeasure::from_atoms([(0.0, 1.0)]).is_err());
        assert!(JumpMeasure::from_atoms([(1.0, -1.0)]).is_err());
        assert_eq!(JumpMeasure::from_atoms([(1.0, 0.0)]).unwrap().atoms().len(), 0);
    }

    #[test]
    fn truncation_conversion_moves_only_drift() {
        // Atom at u = 1.5 is compensated under radius 2 but not under radius 1.
        let jumps = JumpMeasure::from_atoms([(1.5, 0.4)]).unwrap();
        let converted = LevyTriple::from_truncation(0.1, 2.0, 0.0, jumps.clone()).unwrap();
        assert!((converted.c0 - (0.1 - 0.6)).abs() < 1e-15);
        // The lambda computed in the radius-2 convention by hand.
        let beta = 0.7;
        let by_hand = 0.1 * beta + 0.4 * ((beta * 1.5f64).exp() - 1.0 - beta * 1.5);
        assert!((converted.lambda(beta).unwrap() - by_hand).abs() < 1e-14);
    }

    #[test]
    fn density_quadrature_matches_exponential_moments() {
        // pi(du) = e^{-u} du on (0, 60): ∫ u^2 pi = 2.
        let d = JumpDensity::new(|u| (-u).exp(), 0.0, 60.0, 256).unwrap();
        let m = JumpMeasure::empty().with_density(d).unwrap();
        let v = m.integrate(Region::All, |u| u * u).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        assert_eq!(m.integrate(Region::Negative, |u| u * u).unwrap(), 0.0);
    }

    #[test]
    fn undersampled_density_is_reported() {
        let d = JumpDensity::new(|u| (40.0 * u).sin().powi(2) + 1.0, 0.5, 30.0, 8).unwrap();
        let m = JumpMeasure { atoms: vec![], density: Some(d) };
        assert!(matches!(m.integrate(Region::All, |u| u), Err(Error::Quadrature(_))));
    }

    #[test]
    fn lemma_constant_detects_divergence() {
        // e^{-u} decay against e^{2u}: the cutoff carries most of the mass.
        let d = JumpDensity::new(|u| (-u).exp(), 0.0, 120.0, 256).unwrap();
        let t = LevyTriple::new(0.0, 0.0, JumpMeasure::empty().with_density(d).unwrap()).unwrap();
        assert!(t.lemma_constant(0.5).is_ok());
        assert!(matches!(t.lemma_constant(2.0), Err(Error::Divergent(_))));
    }
}
