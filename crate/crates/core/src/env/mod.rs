//! Infinitely divisible environment laws.
//!
//! Every shipped family is centered (`E eta = 0`), carries its Lévy–Khinchine triple, and
//! exposes closed-form cumulants so the triple machinery can be checked against them.

mod levy;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use levy::{JumpDensity, JumpMeasure, LevyTriple, Region, DEFAULT_QUADRATURE_NODES};

/// Interface cap on the MGF domain for families whose log-MGF is finite everywhere.
pub const UNBOUNDED_MGF_CAP: f64 = 8.0;
/// Default MGF bound for the centered Gamma family, as a fraction of `1 / scale`.
pub const GAMMA_BOUND_FRACTION: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EnvFamily {
    Gaussian {
        variance: f64,
    },
    /// `eta = X - rate` with `X ~ Poisson(rate)`.
    CenteredPoisson {
        rate: f64,
    },
    /// `eta = G - shape * scale` with `G ~ Gamma(shape, scale)`.
    CenteredGamma {
        shape: f64,
        scale: f64,
    },
    /// Centered compound Poisson with jumps `a_plus` (probability `p_plus`) or `a_minus`.
    #[serde(rename = "compound_poisson")]
    CompoundPoissonTwoAtom {
        rate: f64,
        a_plus: f64,
        a_minus: f64,
        p_plus: f64,
    },
}

impl EnvFamily {
    pub fn name(&self) -> &'static str {
        match self {
            EnvFamily::Gaussian { .. } => "gaussian",
            EnvFamily::CenteredPoisson { .. } => "centered_poisson",
            EnvFamily::CenteredGamma { .. } => "centered_gamma",
            EnvFamily::CompoundPoissonTwoAtom { .. } => "compound_poisson",
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            EnvFamily::Gaussian { variance } => positive("variance", variance),
            EnvFamily::CenteredPoisson { rate } => positive("rate", rate),
            EnvFamily::CenteredGamma { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)
            }
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => {
                positive("rate", rate)?;
                positive("a_plus", a_plus)?;
                positive("-a_minus", -a_minus)?;
                if (0.0..=1.0).contains(&p_plus) {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("p_plus must lie in [0, 1], got {p_plus}")))
                }
            }
        }
    }

    fn default_mgf_bound(&self) -> f64 {
        match *self {
            EnvFamily::CenteredGamma { scale, .. } => GAMMA_BOUND_FRACTION / scale,
            _ => UNBOUNDED_MGF_CAP,
        }
    }

    /// Largest admissible MGF bound: the log-MGF must stay finite on `[-B, B]`.
    fn max_mgf_bound(&self) -> f64 {
        match *self {
            EnvFamily::CenteredGamma { scale, .. } => 1.0 / scale,
            _ => f64::INFINITY,
        }
    }

    fn triple(&self, mgf_bound: f64, nodes: usize) -> Result<LevyTriple> {
        match *self {
            EnvFamily::Gaussian { variance } => LevyTriple::new(0.0, variance, JumpMeasure::empty()),
            EnvFamily::CenteredPoisson { rate } => {
                // Atom at u = 1 sits inside the truncation, so the compensator already centers it.
                LevyTriple::new(0.0, 0.0, JumpMeasure::from_atoms([(1.0, rate)])?)
            }
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => {
                let jumps = JumpMeasure::from_atoms([(a_plus, rate * p_plus), (a_minus, rate * (1.0 - p_plus))])?;
                let mean: f64 = jumps.atoms().iter().map(|&(u, m)| u * m).sum();
                let compensated: f64 = jumps.atoms().iter().filter(|(u, _)| u.abs() <= 1.0).map(|&(u, m)| u * m).sum();
                LevyTriple::new(compensated - mean, 0.0, jumps)
            }
            EnvFamily::CenteredGamma { shape, scale } => {
                // pi(du) = shape e^{-u/scale} / u du on u > 0. Cut where the slowest
                // integrand, e^{-(1/scale - B) u}, has decayed by e^{-60}.
                let decay = 1.0 / scale - mgf_bound;
                let upper = (60.0 / decay).max(2.0);
                let density = JumpDensity::new(
                    move |u: f64| if u > 0.0 { shape * (-u / scale).exp() / u } else { 0.0 },
                    0.0,
                    upper,
                    nodes,
                )?;
                let jumps = JumpMeasure::empty().with_density(density)?;
                // ∫_0^1 u pi(du) - shape * scale
                let c0 = shape * scale * (-(-1.0 / scale).exp_m1()) - shape * scale;
                LevyTriple::new(c0, 0.0, jumps)
            }
        }
    }
}

/// An environment law together with its triple and MGF domain bound `B`.
#[derive(Clone, Debug)]
pub struct EnvModel {
    family: EnvFamily,
    triple: LevyTriple,
    mgf_bound: f64,
    nodes: usize,
}

impl PartialEq for EnvModel {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family && self.mgf_bound == other.mgf_bound && self.nodes == other.nodes
    }
}

impl EnvModel {
    pub fn new(family: EnvFamily) -> Result<Self> {
        family.validate()?;
        Self::build(family, family.default_mgf_bound(), DEFAULT_QUADRATURE_NODES)
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        Self::new(EnvFamily::Gaussian { variance })
    }

    pub fn centered_poisson(rate: f64) -> Result<Self> {
        Self::new(EnvFamily::CenteredPoisson { rate })
    }

    pub fn centered_gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::new(EnvFamily::CenteredGamma { shape, scale })
    }

    pub fn compound_poisson(rate: f64, a_plus: f64, a_minus: f64, p_plus: f64) -> Result<Self> {
        Self::new(EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus })
    }

    fn build(family: EnvFamily, mgf_bound: f64, nodes: usize) -> Result<Self> {
        let triple = family.triple(mgf_bound, nodes)?;
        Ok(Self { family, triple, mgf_bound, nodes })
    }

    pub fn with_mgf_bound(self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || bound >= self.family.max_mgf_bound() || !bound.is_finite() {
            return Err(Error::invalid(format!(
                "MGF bound {bound} must be positive, finite and below {}",
                self.family.max_mgf_bound()
            )));
        }
        Self::build(self.family, bound, self.nodes)
    }

    pub fn with_quadrature_nodes(self, nodes: usize) -> Result<Self> {
        Self::build(self.family, self.mgf_bound, nodes)
    }

    pub fn family(&self) -> EnvFamily {
        self.family
    }

    pub fn triple(&self) -> &LevyTriple {
        &self.triple
    }

    pub fn mgf_bound(&self) -> f64 {
        self.mgf_bound
    }

    /// Variance of `eta`, i.e. `lambda''(0)`.
    pub fn variance(&self) -> f64 {
        match self.family {
            EnvFamily::Gaussian { variance } => variance,
            EnvFamily::CenteredPoisson { rate } => rate,
            EnvFamily::CenteredGamma { shape, scale } => shape * scale * scale,
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => {
                rate * (p_plus * a_plus * a_plus + (1.0 - p_plus) * a_minus * a_minus)
            }
        }
    }

    fn check_domain(&self, beta: f64) -> Result<()> {
        if beta.is_finite() && beta.abs() <= self.mgf_bound {
            Ok(())
        } else {
            Err(Error::Domain { beta, bound: self.mgf_bound })
        }
    }

    /// `lambda(beta) = ln E e^{beta eta}` in closed form.
    pub fn lambda(&self, beta: f64) -> Result<f64> {
        self.check_domain(beta)?;
        Ok(match self.family {
            EnvFamily::Gaussian { variance } => 0.5 * variance * beta * beta,
            EnvFamily::CenteredPoisson { rate } => rate * (beta.exp_m1() - beta),
            EnvFamily::CenteredGamma { shape, scale } => -shape * (-scale * beta).ln_1p() - shape * scale * beta,
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => {
                rate * (p_plus * ((beta * a_plus).exp_m1() - beta * a_plus)
                    + (1.0 - p_plus) * ((beta * a_minus).exp_m1() - beta * a_minus))
            }
        })
    }

    pub fn lambda_prime(&self, beta: f64) -> Result<f64> {
        self.check_domain(beta)?;
        Ok(match self.family {
            EnvFamily::Gaussian { variance } => variance * beta,
            EnvFamily::CenteredPoisson { rate } => rate * beta.exp_m1(),
            EnvFamily::CenteredGamma { shape, scale } => shape * scale * scale * beta / (1.0 - scale * beta),
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => {
                rate * (p_plus * a_plus * (beta * a_plus).exp_m1()
                    + (1.0 - p_plus) * a_minus * (beta * a_minus).exp_m1())
            }
        })
    }

    pub fn lambda_second(&self, beta: f64) -> Result<f64> {
        self.check_domain(beta)?;
        Ok(match self.family {
            EnvFamily::Gaussian { variance } => variance,
            EnvFamily::CenteredPoisson { rate } => rate * beta.exp(),
            EnvFamily::CenteredGamma { shape, scale } => {
                let d = 1.0 - scale * beta;
                shape * scale * scale / (d * d)
            }
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => {
                rate * (p_plus * a_plus * a_plus * (beta * a_plus).exp()
                    + (1.0 - p_plus) * a_minus * a_minus * (beta * a_minus).exp())
            }
        })
    }

    /// `lambda` evaluated through the Lévy–Khinchine formula on the triple.
    pub fn lambda_from_triple(&self, beta: f64) -> Result<f64> {
        self.check_domain(beta)?;
        self.triple.lambda(beta)
    }

    pub fn lambda_prime_from_triple(&self, beta: f64) -> Result<f64> {
        self.check_domain(beta)?;
        self.triple.lambda_prime(beta)
    }

    pub fn lambda_second_from_triple(&self, beta: f64) -> Result<f64> {
        self.check_domain(beta)?;
        self.triple.lambda_second(beta)
    }

    /// Residual of the integration-by-parts identity for `f(eta) = e^{s eta}`.
    ///
    /// The left side `E[eta e^{s eta}] = lambda'(s) e^{lambda(s)}` uses the closed-form
    /// cumulants; every moment on the right side is evaluated from the triple.
    pub fn ibp_residual(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) || s > 0.5 * self.mgf_bound {
            return Err(Error::Domain { beta: s, bound: 0.5 * self.mgf_bound });
        }
        let lhs = self.lambda_prime(s)? * self.lambda(s)?.exp();
        let mgf = self.triple.lambda(s)?.exp();
        let rhs = self.triple.ibp_rhs(|a| (s * a).exp() * mgf, s * mgf)?;
        Ok((lhs - rhs).abs())
    }

    /// Constant `c = sigma2 + ∫_{u<0} u^2 pi(du) + ∫_{u>0} u^2 e^{B u} pi(du)` for which
    /// `p_n'(beta) >= -(c beta / n) E E^{⊗2} L_n` holds on `[0, B/2]`.
    pub fn lemma_c(&self, big_b: f64) -> Result<f64> {
        if !(big_b >= 0.0) {
            return Err(Error::invalid(format!("B must be >= 0, got {big_b}")));
        }
        if big_b > self.mgf_bound {
            return Err(Error::Domain { beta: big_b, bound: self.mgf_bound });
        }
        self.triple.lemma_constant(big_b)
    }

    /// Law of `factor * eta`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::invalid(format!("rescaling factor must be positive, got {factor}")));
        }
        let family = match self.family {
            EnvFamily::Gaussian { variance } => EnvFamily::Gaussian { variance: variance * factor * factor },
            EnvFamily::CenteredPoisson { rate } => {
                EnvFamily::CompoundPoissonTwoAtom { rate, a_plus: factor, a_minus: -factor, p_plus: 1.0 }
            }
            EnvFamily::CenteredGamma { shape, scale } => EnvFamily::CenteredGamma { shape, scale: scale * factor },
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => {
                EnvFamily::CompoundPoissonTwoAtom { rate, a_plus: a_plus * factor, a_minus: a_minus * factor, p_plus }
            }
        };
        Self::build(family, self.mgf_bound / factor, self.nodes)
    }

    pub fn sampler(&self) -> EnvSampler {
        let sampler = match self.family {
            EnvFamily::Gaussian { variance } => {
                SamplerKind::Gaussian(Normal::new(0.0, variance.sqrt()).expect("validated variance"))
            }
            EnvFamily::CenteredPoisson { rate } => {
                SamplerKind::Poisson { counts: Poisson::new(rate).expect("validated rate"), mean: rate }
            }
            EnvFamily::CenteredGamma { shape, scale } => SamplerKind::Gamma {
                draw: Gamma::new(shape, scale).expect("validated shape/scale"),
                mean: shape * scale,
            },
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => SamplerKind::Compound {
                up: Poisson::new(rate * p_plus).ok(),
                down: Poisson::new(rate * (1.0 - p_plus)).ok(),
                a_plus,
                a_minus,
                mean: rate * (p_plus * a_plus + (1.0 - p_plus) * a_minus),
            },
        };
        EnvSampler(sampler)
    }

    /// Canonical key-value rendering, parseable by [`FromStr`].
    pub fn spec_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for EnvModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "family={}", self.family.name())?;
        match self.family {
            EnvFamily::Gaussian { variance } => write!(f, ", variance={variance}")?,
            EnvFamily::CenteredPoisson { rate } => write!(f, ", rate={rate}")?,
            EnvFamily::CenteredGamma { shape, scale } => write!(f, ", shape={shape}, scale={scale}")?,
            EnvFamily::CompoundPoissonTwoAtom { rate, a_plus, a_minus, p_plus } => {
                write!(f, ", rate={rate}, a_plus={a_plus}, a_minus={a_minus}, p_plus={p_plus}")?
            }
        }
        if self.mgf_bound != self.family.default_mgf_bound() {
            write!(f, ", mgf_bound={}", self.mgf_bound)?;
        }
        if self.nodes != DEFAULT_QUADRATURE_NODES {
            write!(f, ", nodes={}", self.nodes)?;
        }
        Ok(())
    }
}

/// Draws i.i.d. environment values.
#[derive(Clone, Debug)]
pub struct EnvSampler(SamplerKind);

#[derive(Clone, Debug)]
enum SamplerKind {
    Gaussian(Normal<f64>),
    Poisson { counts: Poisson<f64>, mean: f64 },
    Gamma { draw: Gamma<f64>, mean: f64 },
    Compound { up: Option<Poisson<f64>>, down: Option<Poisson<f64>>, a_plus: f64, a_minus: f64, mean: f64 },
}

impl Distribution<f64> for EnvSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.0 {
            SamplerKind::Gaussian(d) => d.sample(rng),
            SamplerKind::Poisson { counts, mean } => counts.sample(rng) - mean,
            SamplerKind::Gamma { draw, mean } => draw.sample(rng) - mean,
            SamplerKind::Compound { up, down, a_plus, a_minus, mean } => {
                let ups = up.as_ref().map_or(0.0, |d| d.sample(rng));
                let downs = down.as_ref().map_or(0.0, |d| d.sample(rng));
                ups * a_plus + downs * a_minus - mean
            }
        }
    }
}

/// Parses `family=<name>, key=value, ...`.
///
/// Families and keys:
/// - `gaussian`: `variance` (alias `var`)
/// - `centered_poisson`: `rate`
/// - `centered_gamma`: `shape`, `scale`
/// - `compound_poisson`: `rate`, `a_plus`, `a_minus`, `p_plus`
///
/// Every family also accepts `mgf_bound` and `nodes` (quadrature node count).
impl FromStr for EnvModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for item in s.split([',', ';']).map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) =
                item.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got `{item}`")))?;
            pairs.insert(k.trim().to_string(), v.trim().trim_matches('"').to_string());
        }
        from_pairs(&pairs)
    }
}

/// Builds a model from already-split key-value pairs (a config section).
pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<EnvModel> {
    let mut used = vec!["family"];
    let family_name = pairs.get("family").ok_or_else(|| Error::Parse("missing `family`".into()))?;
    let mut num = |keys: &[&'static str], default: Option<f64>| -> Result<f64> {
        for &k in keys {
            used.push(k);
            if let Some(v) = pairs.get(k) {
                return v.parse::<f64>().map_err(|_| Error::Parse(format!("`{k}` is not a number: `{v}`")));
            }
        }
        default.ok_or_else(|| Error::Parse(format!("family `{family_name}` requires `{}`", keys[0])))
    };
    let family = match family_name.as_str() {
        "gaussian" | "normal" => EnvFamily::Gaussian { variance: num(&["variance", "var"], None)? },
        "centered_poisson" | "poisson" => EnvFamily::CenteredPoisson { rate: num(&["rate"], None)? },
        "centered_gamma" | "gamma" => {
            EnvFamily::CenteredGamma { shape: num(&["shape"], None)?, scale: num(&["scale"], None)? }
        }
        "compound_poisson" => EnvFamily::CompoundPoissonTwoAtom {
            rate: num(&["rate"], None)?,
            a_plus: num(&["a_plus"], None)?,
            a_minus: num(&["a_minus"], None)?,
            p_plus: num(&["p_plus"], None)?,
        },
        other => return Err(Error::Parse(format!("unknown family `{other}`"))),
    };
    let bound = pairs.get("mgf_bound").map(|v| v.parse::<f64>()).transpose();
    let nodes = pairs.get("nodes").map(|v| v.parse::<usize>()).transpose();
    used.extend(["mgf_bound", "nodes"]);
    if let Some(extra) = pairs.keys().find(|k| !used.contains(&k.as_str())) {
        return Err(Error::Parse(format!("unknown key `{extra}` for family `{family_name}`")));
    }
    let mut model = EnvModel::new(family)?;
    if let Some(n) = nodes.map_err(|_| Error::Parse("`nodes` must be an integer".into()))? {
        model = model.with_quadrature_nodes(n)?;
    }
    if let Some(b) = bound.map_err(|_| Error::Parse("`mgf_bound` is not a number".into()))? {
        model = model.with_mgf_bound(b)?;
    }
    Ok(model)
}
