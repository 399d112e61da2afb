//! Seeded Monte Carlo experiments over environment replicates.
//!
//! Every check reports `(estimate, stderr, margin)` and decides pass/fail with a one-sided
//! margin of [`SIGMA_MARGIN`] standard errors. All thresholds here are policy choices.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde_json::{json, Value};

use crate::env::{EnvFamily, EnvModel};
use crate::error::{Error, Result};
use crate::field::{sample_replicate, EnvField};
use crate::lattice::site_position;
use crate::mc::{Ensemble, McEstimate, SIGMA_MARGIN};
use crate::pinning::{self, PinningCurve};
use crate::polymer::{self, log_w, overlap_expectation};
use crate::replica::{self, fkg_gap, fkg_lemma_applies, path_check, InterpolationPoint};
use crate::report::{fmt_f64, Report, Table};

/// `n(beta) = ceil(SCALING_N_FACTOR / beta^4)` for scaling runs.
pub const SCALING_N_FACTOR: f64 = 50.0;
pub const SCALING_N_CAP: usize = 4096;
/// Accepted range of the fitted exponent of `-p_n(beta)` against `beta`.
pub const SCALING_SLOPE_BAND: (f64, f64) = (3.2, 4.8);
/// Step of the central difference in `beta` used by the Gaussian equality check.
pub const EQUALITY_FD_STEP: f64 = 0.02;
/// Accepted ratio between `n Var[(1/n) ln Z_n]` at two sizes.
pub const VARIANCE_RATIO_LIMIT: f64 = 2.5;
pub const IBP_TOLERANCE: f64 = 1e-6;
pub const PINNING_RATIO_BAND: (f64, f64) = (0.7, 1.3);

fn policy() -> Value {
    json!({
        "sigma_margin": SIGMA_MARGIN,
        "scaling_n_factor": SCALING_N_FACTOR,
        "scaling_n_cap": SCALING_N_CAP,
        "scaling_slope_band": [SCALING_SLOPE_BAND.0, SCALING_SLOPE_BAND.1],
        "equality_fd_step": EQUALITY_FD_STEP,
        "variance_ratio_limit": VARIANCE_RATIO_LIMIT,
        "ibp_tolerance": IBP_TOLERANCE,
        "t_min": replica::T_MIN,
        "note": "numeric thresholds are implementation policy, not constants of the theory",
    })
}

/// Thresholds shared by all reports, for run manifests.
pub fn policy_summary() -> Value {
    policy()
}

fn est_json(e: &McEstimate) -> Value {
    json!({ "mean": e.mean, "stderr": e.stderr, "replicates": e.replicates, "master_seed": e.master_seed })
}

/// `p_n(beta) = (1/n) E ln W_n(beta)` over the ensemble.
pub fn estimate_pn(ens: &Ensemble, beta: f64) -> Result<McEstimate> {
    ens.model.lambda(beta)?;
    let n = ens.n as f64;
    ens.estimate(|field| Ok(log_w(field, beta, &ens.model)? / n))
}

/// Mean of `W_n(beta)`; equals one in expectation.
pub fn normalized_partition_mean(ens: &Ensemble, beta: f64) -> Result<McEstimate> {
    ens.estimate(|field| Ok(log_w(field, beta, &ens.model)?.exp()))
}

#[derive(Clone, Debug)]
pub struct FreeEnergyRow {
    pub beta: f64,
    pub n: usize,
    pub estimate: McEstimate,
    /// `SIGMA_MARGIN * stderr - mean`; Jensen's inequality says `p_n <= 0`.
    pub jensen_margin: f64,
}

#[derive(Clone, Debug)]
pub struct FreeEnergyReport {
    pub rows: Vec<FreeEnergyRow>,
}

pub fn free_energy(ens: &Ensemble, betas: &[f64]) -> Result<FreeEnergyReport> {
    let rows = betas
        .iter()
        .map(|&beta| {
            let estimate = estimate_pn(ens, beta)?;
            let jensen_margin = SIGMA_MARGIN * estimate.stderr - estimate.mean;
            Ok(FreeEnergyRow { beta, n: ens.n, estimate, jensen_margin })
        })
        .collect::<Result<_>>()?;
    Ok(FreeEnergyReport { rows })
}

impl Report for FreeEnergyReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["beta", "n", "replicates", "seed", "mean", "stderr", "margin", "pass"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.beta),
                r.n.to_string(),
                r.estimate.replicates.to_string(),
                r.estimate.master_seed.to_string(),
                fmt_f64(r.estimate.mean),
                fmt_f64(r.estimate.stderr),
                fmt_f64(r.jensen_margin),
                (r.jensen_margin >= 0.0).to_string(),
            ]);
        }
        t
    }

    fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.jensen_margin >= 0.0)
    }

    fn summary(&self) -> Value {
        json!({ "check": "p_n(beta) <= 0 (Jensen)", "points": self.rows.len() })
    }
}

/// Comparison of `p_n(beta)` with `(1 - e^c) F_n(beta)`.
#[derive(Clone, Debug)]
pub struct WatReport {
    pub beta: f64,
    pub n: usize,
    /// MGF bound used for the constant, `B = 2 beta`.
    pub big_b: f64,
    pub c: f64,
    pub pinning: f64,
    pub rhs: f64,
    pub estimate: McEstimate,
    /// `mean - (rhs - SIGMA_MARGIN * stderr)`.
    pub margin: f64,
}

/// Checks `p_n(beta) >= (1 - e^c) F_n(beta)` with `c` from [`EnvModel::lemma_c`] at `B = 2 beta`,
/// the smallest bound for which `beta <= B / 2`.
pub fn wat_check(ens: &Ensemble, beta: f64) -> Result<WatReport> {
    if !(beta >= 0.0) || beta > 0.5 * ens.model.mgf_bound() {
        return Err(Error::Domain { beta, bound: 0.5 * ens.model.mgf_bound() });
    }
    let big_b = 2.0 * beta;
    let c = ens.model.lemma_c(big_b)?;
    let pinning = pinning::f_n(beta, ens.n)?;
    let rhs = if pinning == 0.0 { 0.0 } else { -c.exp_m1() * pinning };
    let estimate = estimate_pn(ens, beta)?;
    let margin = estimate.mean - (rhs - SIGMA_MARGIN * estimate.stderr);
    Ok(WatReport { beta, n: ens.n, big_b, c, pinning, rhs, estimate, margin })
}

impl Report for WatReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "beta",
            "n",
            "replicates",
            "seed",
            "B",
            "c",
            "F_n",
            "rhs",
            "mean",
            "stderr",
            "margin",
            "pass",
        ]);
        t.push(vec![
            fmt_f64(self.beta),
            self.n.to_string(),
            self.estimate.replicates.to_string(),
            self.estimate.master_seed.to_string(),
            fmt_f64(self.big_b),
            fmt_f64(self.c),
            fmt_f64(self.pinning),
            fmt_f64(self.rhs),
            fmt_f64(self.estimate.mean),
            fmt_f64(self.estimate.stderr),
            fmt_f64(self.margin),
            self.passed().to_string(),
        ]);
        t
    }

    fn passed(&self) -> bool {
        self.margin >= 0.0
    }

    fn summary(&self) -> Value {
        json!({
            "check": "p_n(beta) >= (1 - e^c) F_n(beta) - 3 stderr",
            "c": self.c,
            "rhs": self.rhs,
            "estimate": est_json(&self.estimate),
            "margin": self.margin,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ScalingPoint {
    pub beta: f64,
    pub n: usize,
    pub estimate: McEstimate,
    pub used: bool,
}

#[derive(Clone, Debug)]
pub struct ScalingResult {
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `ln(-p_n)` against `ln beta`.
    pub slope: f64,
    /// Intercept `ln C` of the same fit.
    pub intercept: f64,
    /// Delta-method standard error of the slope.
    pub slope_stderr: f64,
    pub slope_ci: (f64, f64),
    pub caveat: String,
}

/// System size used for the scaling point at `beta`.
pub fn scaling_n(beta: f64) -> usize {
    ((SCALING_N_FACTOR / beta.powi(4)).ceil() as usize).clamp(1, SCALING_N_CAP)
}

/// Unweighted least squares of `ln(-mean)` on `ln beta`; each point is `(beta, mean, stderr)`
/// with `mean < 0`. Returns `(slope, intercept, slope_stderr)`.
pub fn fit_log_slope(points: &[(f64, f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Fit(format!("need at least two usable points, got {}", points.len())));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (-p.1).ln()).collect();
    let k = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("all points share the same beta".into()));
    }
    let weights: Vec<f64> = xs.iter().map(|x| (x - xbar) / sxx).collect();
    let slope: f64 = weights.iter().zip(&ys).map(|(w, y)| w * y).sum();
    let intercept = ybar - slope * xbar;
    // var ln(-mean) ≈ (stderr / mean)^2
    let var: f64 = weights.iter().zip(points).map(|(w, p)| w * w * (p.2 / p.1).powi(2)).sum();
    Ok((slope, intercept, var.sqrt()))
}

/// Fits the exponent of `-p_n(beta) ≈ C beta^slope` on a grid with `n = scaling_n(beta)`.
pub fn scaling_fit(
    model: &EnvModel,
    betas: &[f64],
    replicates: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<ScalingResult> {
    scaling_fit_with(model, betas, scaling_n, replicates, seed, workers)
}

/// [`scaling_fit`] with an explicit size policy `n_of(beta)`.
pub fn scaling_fit_with(
    model: &EnvModel,
    betas: &[f64],
    n_of: impl Fn(f64) -> usize,
    replicates: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<ScalingResult> {
    let mut distinct: Vec<f64> = betas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Fit("a scaling fit needs at least two distinct beta values".into()));
    }
    if let Some(&b) = betas.iter().find(|&&b| !(b > 0.0)) {
        return Err(Error::invalid(format!("scaling betas must be positive, got {b}")));
    }
    let mut points = Vec::new();
    for &beta in betas {
        let n = n_of(beta);
        let ens = Ensemble::new(model.clone(), n, replicates, seed)?.with_workers(workers);
        let estimate = estimate_pn(&ens, beta)?;
        let used = estimate.mean < 0.0;
        if !used {
            log::warn!("scaling point beta = {beta} has non-negative mean {}; excluded from the fit", estimate.mean);
        }
        points.push(ScalingPoint { beta, n, estimate, used });
    }
    let usable: Vec<(f64, f64, f64)> =
        points.iter().filter(|p| p.used).map(|p| (p.beta, p.estimate.mean, p.estimate.stderr)).collect();
    let (slope, intercept, slope_stderr) = fit_log_slope(&usable)?;
    let half = 1.96 * slope_stderr;
    Ok(ScalingResult {
        points,
        slope,
        intercept,
        slope_stderr,
        slope_ci: (slope - half, slope + half),
        caveat: "p_n <= p_- for every n (the sequence n p_n is superadditive), so finite-n estimates \
                 overstate |p_-| and bias the fitted slope"
            .into(),
    })
}

impl ScalingResult {
    pub fn slope_in_band(&self) -> bool {
        (SCALING_SLOPE_BAND.0..=SCALING_SLOPE_BAND.1).contains(&self.slope)
    }
}

impl Report for ScalingResult {
    fn table(&self) -> Table {
        let mut t =
            Table::new(&["beta", "n", "replicates", "seed", "mean", "stderr", "log_beta", "log_neg_mean", "used"]);
        for p in &self.points {
            t.push(vec![
                fmt_f64(p.beta),
                p.n.to_string(),
                p.estimate.replicates.to_string(),
                p.estimate.master_seed.to_string(),
                fmt_f64(p.estimate.mean),
                fmt_f64(p.estimate.stderr),
                fmt_f64(p.beta.ln()),
                fmt_f64(if p.used { (-p.estimate.mean).ln() } else { f64::NAN }),
                p.used.to_string(),
            ]);
        }
        t
    }

    fn passed(&self) -> bool {
        self.slope_in_band()
    }

    fn summary(&self) -> Value {
        json!({
            "slope": self.slope,
            "intercept": self.intercept,
            "fitted_C": self.intercept.exp(),
            "slope_stderr": self.slope_stderr,
            "slope_ci95": [self.slope_ci.0, self.slope_ci.1],
            "band": [SCALING_SLOPE_BAND.0, SCALING_SLOPE_BAND.1],
            "excluded": self.points.iter().filter(|p| !p.used).map(|p| p.beta).collect::<Vec<_>>(),
            "caveat": self.caveat,
        })
    }
}

/// `p_n` at `n` and `2n` for each beta: superadditivity predicts `p_{2n} >= p_n`.
#[derive(Clone, Debug)]
pub struct DoublingRow {
    pub beta: f64,
    pub n: usize,
    pub base: McEstimate,
    pub doubled: McEstimate,
    /// `(p_{2n} - p_n) + SIGMA_MARGIN * combined stderr`.
    pub margin: f64,
}

pub fn doubling_check(
    model: &EnvModel,
    betas: &[f64],
    ns: &[usize],
    replicates: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<DoublingRow>> {
    betas
        .iter()
        .zip(ns)
        .map(|(&beta, &n)| {
            let base_ens = Ensemble::new(model.clone(), n, replicates, seed)?.with_workers(workers);
            let base = estimate_pn(&base_ens, beta)?;
            let doubled = estimate_pn(&base_ens.with_n(2 * n), beta)?;
            let margin = doubled.mean - base.mean + SIGMA_MARGIN * base.combined_stderr(&doubled);
            Ok(DoublingRow { beta, n, base, doubled, margin })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct MonotonicityRow {
    pub beta: f64,
    pub estimate: McEstimate,
    /// `p(beta_k) - p(beta_{k-1})`, absent on the first row.
    pub step: Option<f64>,
    pub combined_stderr: Option<f64>,
    /// `SIGMA_MARGIN * combined - step`.
    pub margin: Option<f64>,
    /// Fraction of realizations whose own `(1/n) ln W_n` did not increase (diagnostic only).
    pub realization_monotone: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MonotonicityReport {
    pub n: usize,
    pub rows: Vec<MonotonicityRow>,
}

/// `p_n(beta)` on an increasing grid with common fields; passes when every successive
/// increase stays within `SIGMA_MARGIN` combined standard errors.
pub fn monotonicity_check(ens: &Ensemble, betas: &[f64]) -> Result<MonotonicityReport> {
    if betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("monotonicity grid must be strictly increasing"));
    }
    for &b in betas {
        ens.model.lambda(b)?;
    }
    let n = ens.n as f64;
    let per_field: Vec<Vec<f64>> =
        ens.map(|field| betas.iter().map(|&b| Ok(log_w(field, b, &ens.model)? / n)).collect())?;
    let mut rows = Vec::new();
    for (k, &beta) in betas.iter().enumerate() {
        let col: Vec<f64> = per_field.iter().map(|r| r[k]).collect();
        let estimate = McEstimate::from_samples(&col, ens.seed)?;
        let (step, combined, margin, frac) = if k == 0 {
            (None, None, None, None)
        } else {
            let prev: &McEstimate = &rows.last().map(|r: &MonotonicityRow| r.estimate).expect("k > 0");
            let step = estimate.mean - prev.mean;
            let combined = estimate.combined_stderr(prev);
            let down = per_field.iter().filter(|r| r[k] <= r[k - 1]).count();
            (
                Some(step),
                Some(combined),
                Some(SIGMA_MARGIN * combined - step),
                Some(down as f64 / per_field.len() as f64),
            )
        };
        rows.push(MonotonicityRow {
            beta,
            estimate,
            step,
            combined_stderr: combined,
            margin,
            realization_monotone: frac,
        });
    }
    Ok(MonotonicityReport { n: ens.n, rows })
}

impl Report for MonotonicityReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "beta",
            "n",
            "replicates",
            "seed",
            "mean",
            "stderr",
            "step",
            "combined_stderr",
            "margin",
            "pass",
            "realization_monotone_fraction",
        ]);
        let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.beta),
                self.n.to_string(),
                r.estimate.replicates.to_string(),
                r.estimate.master_seed.to_string(),
                fmt_f64(r.estimate.mean),
                fmt_f64(r.estimate.stderr),
                opt(r.step),
                opt(r.combined_stderr),
                opt(r.margin),
                r.margin.is_none_or(|m| m >= 0.0).to_string(),
                opt(r.realization_monotone),
            ]);
        }
        t
    }

    fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.margin.is_none_or(|m| m >= 0.0))
    }

    fn summary(&self) -> Value {
        json!({ "check": "p_n(beta) non-increasing in beta within 3 combined stderr", "points": self.rows.len() })
    }
}

/// Empirical tails of `±(1/n)(ln Z_n - mean)` against `exp(-n x^2 / 4K)`.
#[derive(Clone, Debug)]
pub struct TailReport {
    pub n: usize,
    pub beta: f64,
    pub replicates: usize,
    pub mean: f64,
    /// `n Var[(1/n) ln Z_n]`.
    pub scaled_variance: f64,
    pub x_grid: Vec<f64>,
    pub exceed_plus: Vec<f64>,
    pub exceed_minus: Vec<f64>,
    /// Smallest `K` with `exp(-n x^2 / 4K)` above both tails on the grid.
    pub k_hat: f64,
    /// Smallest `K` for the two-branch bound of [`concentration_bound`]; often zero at small `n`
    /// because the linear branch alone covers the observed tails.
    pub k_two_branch: f64,
    /// `exp(-n x^2 / 4 k_hat)` on the grid.
    pub bound: Vec<f64>,
}

/// Two-branch concentration bound: `exp(-n x^2 / 4K)` on `(0, 2K]`, `exp(-n (x - K))` beyond.
pub fn concentration_bound(n: usize, x: f64, k: f64) -> f64 {
    let n = n as f64;
    if x <= 2.0 * k {
        (-n * x * x / (4.0 * k)).exp()
    } else {
        (-n * (x - k)).exp()
    }
}

/// Smallest `K >= 0` with `concentration_bound(n, x, K) >= freq`. The bound is continuous and
/// increasing in `K`, with both branches meeting at `K = x / 2`.
fn minimal_k(n: usize, x: f64, freq: f64) -> f64 {
    if freq <= 0.0 || x <= 0.0 {
        return 0.0;
    }
    if freq >= 1.0 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    if freq >= (-nf * x / 2.0).exp() {
        nf * x * x / (4.0 * -freq.ln())
    } else {
        (x + freq.ln() / nf).max(0.0)
    }
}

/// `exp(-n x^2 / 4K)`.
pub fn gaussian_bound(n: usize, x: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    (-(n as f64) * x * x / (4.0 * k)).exp()
}

fn minimal_gaussian_k(n: usize, x: f64, freq: f64) -> f64 {
    if freq <= 0.0 || x <= 0.0 {
        0.0
    } else if freq >= 1.0 {
        f64::INFINITY
    } else {
        n as f64 * x * x / (4.0 * -freq.ln())
    }
}

pub const TAIL_GRID_POINTS: usize = 25;

pub fn concentration_tails(ens: &Ensemble, beta: f64) -> Result<TailReport> {
    let n = ens.n as f64;
    let values = ens.map(|field| Ok(polymer::log_partition(field, beta) / n))?;
    let est = McEstimate::from_samples(&values, ens.seed)?;
    let m = values.len() as f64;
    let var = values.iter().map(|v| (v - est.mean).powi(2)).sum::<f64>() / (m - 1.0);
    let devs: Vec<f64> = values.iter().map(|v| v - est.mean).collect();
    let x_max = devs.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let x_grid: Vec<f64> = (0..TAIL_GRID_POINTS).map(|k| x_max * k as f64 / (TAIL_GRID_POINTS - 1) as f64).collect();
    let freq = |pred: &dyn Fn(f64) -> bool| devs.iter().filter(|&&d| pred(d)).count() as f64 / m;
    let exceed_plus: Vec<f64> = x_grid.iter().map(|&x| freq(&|d| d > x)).collect();
    let exceed_minus: Vec<f64> = x_grid.iter().map(|&x| freq(&|d| -d > x)).collect();
    let worst = |k_of: &dyn Fn(f64, f64) -> f64| {
        x_grid
            .iter()
            .zip(exceed_plus.iter().zip(&exceed_minus))
            .map(|(&x, (&p, &q))| k_of(x, p.max(q)))
            .fold(0.0f64, f64::max)
    };
    let k_hat = worst(&|x, f| minimal_gaussian_k(ens.n, x, f));
    let k_two_branch = worst(&|x, f| minimal_k(ens.n, x, f));
    let bound = x_grid.iter().map(|&x| gaussian_bound(ens.n, x, k_hat)).collect();
    Ok(TailReport {
        n: ens.n,
        beta,
        replicates: ens.replicates,
        mean: est.mean,
        scaled_variance: n * var,
        x_grid,
        exceed_plus,
        exceed_minus,
        k_hat,
        k_two_branch,
        bound,
    })
}

impl TailReport {
    /// Whether the fitted bound dominates both empirical tails on the grid (x > 0).
    pub fn dominated(&self) -> bool {
        self.x_grid
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .all(|(k, _)| self.exceed_plus[k].max(self.exceed_minus[k]) <= self.bound[k] * (1.0 + 1e-12))
    }

    pub fn tails_nonincreasing(&self) -> bool {
        let mono = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
        mono(&self.exceed_plus) && mono(&self.exceed_minus)
    }
}

impl Report for TailReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["n", "beta", "x", "exceed_plus", "exceed_minus", "bound", "pass"]);
        for k in 0..self.x_grid.len() {
            let ok =
                self.x_grid[k] == 0.0 || self.exceed_plus[k].max(self.exceed_minus[k]) <= self.bound[k] * (1.0 + 1e-12);
            t.push(vec![
                self.n.to_string(),
                fmt_f64(self.beta),
                fmt_f64(self.x_grid[k]),
                fmt_f64(self.exceed_plus[k]),
                fmt_f64(self.exceed_minus[k]),
                fmt_f64(self.bound[k]),
                ok.to_string(),
            ]);
        }
        t
    }

    fn passed(&self) -> bool {
        self.dominated() && self.tails_nonincreasing()
    }

    fn summary(&self) -> Value {
        json!({
            "n": self.n,
            "beta": self.beta,
            "mean": self.mean,
            "scaled_variance": self.scaled_variance,
            "k_hat": self.k_hat,
            "k_two_branch": self.k_two_branch,
            "dominated": self.dominated(),
        })
    }
}

/// `n Var[(1/n) ln Z_n]` at two sizes should stay within a bounded ratio.
#[derive(Clone, Copy, Debug)]
pub struct VarianceScaling {
    pub small_n: usize,
    pub large_n: usize,
    pub ratio: f64,
}

impl VarianceScaling {
    pub fn new(small: &TailReport, large: &TailReport) -> Self {
        Self { small_n: small.n, large_n: large.n, ratio: large.scaled_variance / small.scaled_variance }
    }

    pub fn passed(&self) -> bool {
        self.ratio >= 1.0 / VARIANCE_RATIO_LIMIT && self.ratio <= VARIANCE_RATIO_LIMIT
    }
}

/// Report over several system sizes: tails for each plus pairwise variance scaling.
#[derive(Clone, Debug)]
pub struct ConcentrationReport {
    pub tails: Vec<TailReport>,
    pub scaling: Vec<VarianceScaling>,
}

pub fn concentration(
    model: &EnvModel,
    beta: f64,
    ns: &[usize],
    replicates: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<ConcentrationReport> {
    let tails = ns
        .iter()
        .map(|&n| concentration_tails(&Ensemble::new(model.clone(), n, replicates, seed)?.with_workers(workers), beta))
        .collect::<Result<Vec<_>>>()?;
    let scaling = tails.windows(2).map(|w| VarianceScaling::new(&w[0], &w[1])).collect();
    Ok(ConcentrationReport { tails, scaling })
}

impl Report for ConcentrationReport {
    fn table(&self) -> Table {
        let mut out = Table::new(&["n", "beta", "x", "exceed_plus", "exceed_minus", "bound", "pass"]);
        for t in &self.tails {
            for row in t.table().rows() {
                out.push(row.clone());
            }
        }
        out
    }

    /// Pass/fail is the variance-scaling verdict; tail dominance is reported alongside.
    fn passed(&self) -> bool {
        self.scaling.iter().all(VarianceScaling::passed)
    }

    fn summary(&self) -> Value {
        json!({
            "tails": self.tails.iter().map(Report::summary).collect::<Vec<_>>(),
            "variance_scaling": self.scaling.iter().map(|s| json!({
                "small_n": s.small_n, "large_n": s.large_n, "ratio": s.ratio, "pass": s.passed(),
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqualityMode {
    /// Gaussian environment: `p_n'(beta) = -(sigma2 beta / n) E <L_n>`.
    Equality,
    /// General infinitely divisible environment: `p_n'(beta) >= -(c beta / n) E <L_n>`.
    Inequality,
}

#[derive(Clone, Debug)]
pub struct EqualityReport {
    pub beta: f64,
    pub n: usize,
    pub step: f64,
    pub mode: EqualityMode,
    pub c: f64,
    /// Central difference of `p_n` in beta on common fields.
    pub derivative: McEstimate,
    /// `-(c beta / n) E E^{⊗2}_{n,beta} L_n` on the same fields.
    pub overlap_term: McEstimate,
    /// Per-field difference `derivative - overlap_term` (diagnostic).
    pub paired: McEstimate,
    pub combined_stderr: f64,
    pub margin: f64,
}

/// Compares the finite-difference derivative of `p_n` with the replica-overlap expression.
pub fn gaussian_equality_check(ens: &Ensemble, beta: f64) -> Result<EqualityReport> {
    let h = EQUALITY_FD_STEP;
    if beta < h {
        return Err(Error::invalid(format!("beta must be >= the difference step {h}, got {beta}")));
    }
    if beta + h > 0.5 * ens.model.mgf_bound() {
        return Err(Error::Domain { beta: beta + h, bound: 0.5 * ens.model.mgf_bound() });
    }
    let (mode, c) = match ens.model.family() {
        EnvFamily::Gaussian { variance } => (EqualityMode::Equality, variance),
        _ => (EqualityMode::Inequality, ens.model.lemma_c(2.0 * beta)?),
    };
    let n = ens.n as f64;
    let pairs = ens.map(|field| {
        let up = log_w(field, beta + h, &ens.model)?;
        let down = log_w(field, beta - h, &ens.model)?;
        let d = (up - down) / (2.0 * h * n);
        let o = -(c * beta / n) * overlap_expectation(field, beta);
        Ok((d, o))
    })?;
    let ds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let os: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let derivative = McEstimate::from_samples(&ds, ens.seed)?;
    let overlap_term = McEstimate::from_samples(&os, ens.seed)?;
    let paired = McEstimate::from_samples(&diffs, ens.seed)?;
    let combined = derivative.combined_stderr(&overlap_term);
    let gap = derivative.mean - overlap_term.mean;
    let margin = match mode {
        EqualityMode::Equality => SIGMA_MARGIN * combined - gap.abs(),
        EqualityMode::Inequality => gap + SIGMA_MARGIN * combined,
    };
    Ok(EqualityReport {
        beta,
        n: ens.n,
        step: h,
        mode,
        c,
        derivative,
        overlap_term,
        paired,
        combined_stderr: combined,
        margin,
    })
}

impl Report for EqualityReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "beta",
            "n",
            "replicates",
            "seed",
            "mode",
            "c",
            "fd_step",
            "derivative_mean",
            "derivative_stderr",
            "overlap_mean",
            "overlap_stderr",
            "combined_stderr",
            "paired_mean",
            "paired_stderr",
            "margin",
            "pass",
        ]);
        t.push(vec![
            fmt_f64(self.beta),
            self.n.to_string(),
            self.derivative.replicates.to_string(),
            self.derivative.master_seed.to_string(),
            match self.mode {
                EqualityMode::Equality => "equality".into(),
                EqualityMode::Inequality => "inequality".into(),
            },
            fmt_f64(self.c),
            fmt_f64(self.step),
            fmt_f64(self.derivative.mean),
            fmt_f64(self.derivative.stderr),
            fmt_f64(self.overlap_term.mean),
            fmt_f64(self.overlap_term.stderr),
            fmt_f64(self.combined_stderr),
            fmt_f64(self.paired.mean),
            fmt_f64(self.paired.stderr),
            fmt_f64(self.margin),
            self.passed().to_string(),
        ]);
        t
    }

    fn passed(&self) -> bool {
        self.margin >= 0.0
    }

    fn summary(&self) -> Value {
        json!({
            "mode": format!("{:?}", self.mode),
            "c": self.c,
            "derivative": est_json(&self.derivative),
            "overlap_term": est_json(&self.overlap_term),
            "paired_difference": est_json(&self.paired),
            "margin": self.margin,
        })
    }
}

#[derive(Clone, Debug)]
pub struct FkgRow {
    pub point: InterpolationPoint,
    pub estimate: McEstimate,
    /// `mean + SIGMA_MARGIN * stderr`.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct FkgReport {
    pub n: usize,
    /// False when the environment variance is >= 1; rows are reported but not asserted.
    pub asserted: bool,
    pub rows: Vec<FkgRow>,
}

pub fn fkg_grid(ens: &Ensemble, beta: f64, ts: &[f64], us: &[f64]) -> Result<FkgReport> {
    let mut rows = Vec::new();
    for &t in ts {
        for &u in us {
            let point = InterpolationPoint::new(t, u, beta)?;
            let estimate = fkg_gap(ens, &point)?;
            rows.push(FkgRow { point, estimate, margin: estimate.mean + SIGMA_MARGIN * estimate.stderr });
        }
    }
    Ok(FkgReport { n: ens.n, asserted: fkg_lemma_applies(&ens.model), rows })
}

impl Report for FkgReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["t", "u", "beta", "n", "replicates", "seed", "mean", "stderr", "margin", "pass"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.point.t),
                fmt_f64(r.point.u),
                fmt_f64(r.point.beta),
                self.n.to_string(),
                r.estimate.replicates.to_string(),
                r.estimate.master_seed.to_string(),
                fmt_f64(r.estimate.mean),
                fmt_f64(r.estimate.stderr),
                fmt_f64(r.margin),
                (r.margin >= 0.0).to_string(),
            ]);
        }
        t
    }

    fn passed(&self) -> bool {
        !self.asserted || self.rows.iter().all(|r| r.margin >= 0.0)
    }

    fn summary(&self) -> Value {
        json!({
            "check": "E[d phi/du - d phi/dt] >= -3 stderr",
            "asserted": self.asserted,
            "min_margin": self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
        })
    }
}

#[derive(Clone, Debug)]
pub struct PathRow {
    pub t: f64,
    pub estimate: McEstimate,
    /// `SIGMA_MARGIN * stderr - mean`.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct PathReport {
    pub beta: f64,
    pub n: usize,
    pub rows: Vec<PathRow>,
}

pub fn path_grid(ens: &Ensemble, beta: f64, ts: &[f64]) -> Result<PathReport> {
    let rows = ts
        .iter()
        .map(|&t| {
            let estimate = path_check(ens, t, beta)?;
            Ok(PathRow { t, estimate, margin: SIGMA_MARGIN * estimate.stderr - estimate.mean })
        })
        .collect::<Result<_>>()?;
    Ok(PathReport { beta, n: ens.n, rows })
}

impl Report for PathReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["t", "u", "beta", "n", "replicates", "seed", "mean", "stderr", "margin", "pass"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.t),
                fmt_f64(2.0 - r.t),
                fmt_f64(self.beta),
                self.n.to_string(),
                r.estimate.replicates.to_string(),
                r.estimate.master_seed.to_string(),
                fmt_f64(r.estimate.mean),
                fmt_f64(r.estimate.stderr),
                fmt_f64(r.margin),
                (r.margin >= 0.0).to_string(),
            ]);
        }
        t
    }

    fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.margin >= 0.0)
    }

    fn summary(&self) -> Value {
        json!({ "check": "E phi_n(t, 2 - t) - phi_n(0, 2) <= 3 stderr", "points": self.rows.len() })
    }
}

/// Pinning free-energy curves and their ratio to the quadratic `t^2 / 2`.
#[derive(Clone, Debug)]
pub struct PinningReport {
    pub curves: Vec<PinningCurve<f64>>,
}

pub fn pinning_report(ts: &[f64], n_max: usize) -> Result<PinningReport> {
    let curves = ts.iter().map(|&t| pinning::pinning_free_energy(t, n_max)).collect::<Result<_>>()?;
    Ok(PinningReport { curves })
}

impl PinningReport {
    /// `F_hat(t) / (t^2 / 2)` for each curve.
    pub fn quadratic_ratios(&self) -> Vec<f64> {
        self.curves.iter().map(|c| c.slope / (0.5 * c.t * c.t)).collect()
    }

    /// Ratio at the first `t` lies in [`PINNING_RATIO_BAND`].
    pub fn band_pass(&self) -> bool {
        self.quadratic_ratios().first().is_some_and(|r| (PINNING_RATIO_BAND.0..=PINNING_RATIO_BAND.1).contains(r))
    }

    /// Successive ratios move monotonically toward one.
    pub fn trend_pass(&self) -> bool {
        self.quadratic_ratios().windows(2).all(|w| (w[1] - 1.0).abs() <= (w[0] - 1.0).abs())
    }
}

impl Report for PinningReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["t", "n", "per_step", "slope", "ratio_to_quadratic", "undersized"]);
        for c in &self.curves {
            for ((n, v), s) in c.values.iter().zip(c.slopes()) {
                t.push(vec![
                    fmt_f64(c.t),
                    n.to_string(),
                    fmt_f64(*v),
                    s.map_or_else(String::new, fmt_f64),
                    s.map_or_else(String::new, |s| fmt_f64(s / (0.5 * c.t * c.t))),
                    c.undersized.to_string(),
                ]);
            }
        }
        t
    }

    fn passed(&self) -> bool {
        self.curves.iter().all(|c| c.t == 0.0 || c.slope > 0.0)
    }

    fn summary(&self) -> Value {
        json!({
            "estimates": self.curves.iter().map(|c| json!({
                "t": c.t, "n_max": c.n_max, "raw": c.raw, "slope": c.slope, "undersized": c.undersized,
            })).collect::<Vec<_>>(),
            "ratios_to_t2_over_2": self.quadratic_ratios(),
            "band_pass": self.band_pass(),
            "trend_pass": self.trend_pass(),
        })
    }
}

/// Integration-by-parts residuals on `s in {0, B/8, B/4, B/2}`.
#[derive(Clone, Debug)]
pub struct IbpReport {
    pub rows: Vec<(String, f64, f64)>,
}

pub const IBP_FRACTIONS: [f64; 4] = [0.0, 0.125, 0.25, 0.5];

pub fn ibp_report(models: &[EnvModel]) -> Result<IbpReport> {
    let mut rows = Vec::new();
    for m in models {
        for frac in IBP_FRACTIONS {
            let s = frac * m.mgf_bound();
            rows.push((m.spec_string(), s, m.ibp_residual(s)?));
        }
    }
    Ok(IbpReport { rows })
}

impl Report for IbpReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["model", "s", "residual", "tolerance", "pass"]);
        for (m, s, r) in &self.rows {
            t.push(vec![
                m.clone(),
                fmt_f64(*s),
                fmt_f64(*r),
                fmt_f64(IBP_TOLERANCE),
                (*r <= IBP_TOLERANCE).to_string(),
            ]);
        }
        t
    }

    fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.2 <= IBP_TOLERANCE)
    }

    fn summary(&self) -> Value {
        json!({ "max_residual": self.rows.iter().map(|r| r.2).fold(0.0, f64::max) })
    }
}

/// The four shipped environment families at their reference parameters.
pub fn shipped_models() -> Vec<EnvModel> {
    vec![
        EnvModel::gaussian(0.25).expect("valid"),
        EnvModel::centered_poisson(1.0).expect("valid"),
        EnvModel::centered_gamma(2.0, 0.2).expect("valid"),
        EnvModel::compound_poisson(1.0, 1.0, -1.0, 0.5).expect("valid"),
    ]
}

/// Sizes of the oracle-equivalence suites.
#[derive(Clone, Copy, Debug)]
pub struct OracleSizes {
    pub instances: usize,
    pub max_n_partition: usize,
    pub max_n_phi: usize,
    pub max_n_pinning: usize,
}

impl OracleSizes {
    /// Sizes used by the command-line self test.
    pub const SELFTEST: Self = Self { instances: 200, max_n_partition: 8, max_n_phi: 6, max_n_pinning: 8 };
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

#[derive(Clone, Debug)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

fn random_model(rng: &mut Xoshiro256PlusPlus) -> EnvModel {
    let mut models = shipped_models();
    models.push(EnvModel::gaussian(1.0).expect("valid"));
    models.swap_remove(rng.random_range(0..models.len()))
}

fn random_field(rng: &mut Xoshiro256PlusPlus, model: &EnvModel, n: usize) -> Result<EnvField<f64>> {
    sample_replicate(model, n, rng.random(), rng.random())
}

/// Oracle equivalence of the DP engines against exhaustive enumeration.
pub fn oracle_suites(seed: u64, sizes: OracleSizes) -> Result<Vec<SuiteResult>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut suites = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..sizes.instances {
        let model = random_model(&mut rng);
        let n = rng.random_range(1..=sizes.max_n_partition);
        let field = random_field(&mut rng, &model, n)?;
        let beta = rng.random_range(0.0..2.0);
        let err = (polymer::log_partition(&field, beta) - polymer::brute_force_log_partition(&field, beta)?).abs();
        worst = worst.max(err);
    }
    suites.push(SuiteResult { name: "log_partition", instances: sizes.instances, max_error: worst, tolerance: 1e-10 });

    let mut worst = 0.0f64;
    for _ in 0..sizes.instances {
        let model = random_model(&mut rng);
        let n = rng.random_range(1..=sizes.max_n_phi);
        let field = random_field(&mut rng, &model, n)?;
        let beta_cap = (0.5 * model.mgf_bound()).min(1.5);
        let pt = InterpolationPoint::new(
            rng.random_range(0.0..=1.0),
            rng.random_range(0.0..3.0),
            rng.random_range(0.05..beta_cap),
        )?;
        let err = (replica::phi(&field, &pt, &model)? - replica::brute_force_phi(&field, &pt, &model)?).abs();
        worst = worst.max(err);
    }
    suites.push(SuiteResult { name: "phi", instances: sizes.instances, max_error: worst, tolerance: 1e-10 });

    let mut worst = 0.0f64;
    for _ in 0..sizes.instances {
        let n = rng.random_range(1..=sizes.max_n_pinning);
        let t: f64 = rng.random_range(0.0..2.0);
        let err = (pinning::log_pinning(n, t)? - pinning::brute_force_pinning(n, t)?).abs();
        worst = worst.max(err);
    }
    suites.push(SuiteResult { name: "log_pinning", instances: sizes.instances, max_error: worst, tolerance: 1e-10 });
    Ok(suites)
}

/// Exact identities linking the replica functional to the single-path and pinning engines.
pub fn identity_suites(seed: u64, instances: usize, max_n: usize) -> Result<Vec<SuiteResult>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x1de7);
    let (mut top, mut pin, mut cal) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..instances {
        let model = random_model(&mut rng);
        let n = rng.random_range(1..=max_n);
        let field = random_field(&mut rng, &model, n)?;
        let beta = rng.random_range(0.05..(0.5 * model.mgf_bound()).min(1.5));
        let nf = n as f64;

        let p = replica::phi(&field, &InterpolationPoint::new(1.0, 0.0, beta)?, &model)?;
        top = top.max((p - log_w(&field, beta, &model)? / nf).abs());

        let u = rng.random_range(0.0..3.0);
        let p = replica::phi(&field, &InterpolationPoint::new(0.0, u, beta)?, &model)?;
        pin = pin.max((p - pinning::log_pinning(n, u * beta * beta)? / (2.0 * nf)).abs());

        let t: f64 = rng.random_range(0.0..=1.0);
        let du = replica::dphi_du(&field, &InterpolationPoint::new(t, 0.0, beta)?, &model)?;
        let ov = overlap_expectation(&field, t.sqrt() * beta);
        cal = cal.max((du - beta * beta / (2.0 * nf) * ov).abs());
    }
    Ok(vec![
        SuiteResult { name: "phi(t=1,u=0) = log_w / n", instances, max_error: top, tolerance: 1e-10 },
        SuiteResult { name: "phi(t=0,u) = log_pinning / 2n", instances, max_error: pin, tolerance: 1e-10 },
        SuiteResult { name: "dphi_du(t,0) = beta^2 overlap / 2n", instances, max_error: cal, tolerance: 1e-10 },
    ])
}

/// `d ln Z_n / d eta(i, x) = beta P_{n,beta}(S_i = x)` against central differences.
/// Sites are drawn with `i` uniform and `x` from the polymer marginal at `i`.
pub fn gradient_suite(model: &EnvModel, n: usize, beta: f64, sites: usize, seed: u64) -> Result<SuiteResult> {
    let field: EnvField<f64> = sample_replicate(model, n, seed, 0)?;
    let marg = polymer::marginals(&field, beta);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x9ad);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..sites {
        let i = rng.random_range(1..=n);
        let probs = marg.layer(i);
        let mut target: f64 = rng.random();
        let mut k = 0;
        while k + 1 < probs.len() && target >= probs[k] {
            target -= probs[k];
            k += 1;
        }
        let x = site_position(i, k);
        let v = field.value(i, x).expect("lattice site");
        let (mut up, mut down) = (field.clone(), field.clone());
        up.set(i, x, v + h)?;
        down.set(i, x, v - h)?;
        let fd = (polymer::log_partition(&up, beta) - polymer::log_partition(&down, beta)) / (2.0 * h);
        let exact = beta * probs[k];
        worst = worst.max((fd - exact).abs() / exact.abs());
    }
    Ok(SuiteResult {
        name: "d ln Z / d eta = beta * marginal (relative)",
        instances: sites,
        max_error: worst,
        tolerance: 1e-5,
    })
}

/// Closed-form vs Lévy–Khinchine cumulants and integration by parts for the shipped families.
pub fn levy_suites() -> Result<Vec<SuiteResult>> {
    let mut worst = 0.0f64;
    let mut count = 0;
    for m in shipped_models() {
        for k in 0..=8 {
            let beta = m.mgf_bound() * k as f64 / 8.0;
            let a = m.lambda(beta)?;
            let b = m.lambda_from_triple(beta)?;
            worst = worst.max((a - b).abs() / a.abs().max(1e-300).max(1e-6));
            count += 1;
        }
    }
    let ibp = ibp_report(&shipped_models())?;
    Ok(vec![
        SuiteResult {
            name: "lambda closed form vs triple (relative)",
            instances: count,
            max_error: worst,
            tolerance: 1e-8,
        },
        SuiteResult {
            name: "integration by parts residual",
            instances: ibp.rows.len(),
            max_error: ibp.rows.iter().map(|r| r.2).fold(0.0, f64::max),
            tolerance: IBP_TOLERANCE,
        },
    ])
}

pub fn selftest(seed: u64) -> Result<SelftestReport> {
    let sizes = OracleSizes::SELFTEST;
    let mut suites = oracle_suites(seed, sizes)?;
    suites.extend(identity_suites(seed, 50, 12)?);
    suites.push(gradient_suite(&EnvModel::gaussian(1.0)?, 20, 0.7, 50, seed)?);
    suites.extend(levy_suites()?);
    Ok(SelftestReport { suites })
}

impl Report for SelftestReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["suite", "instances", "max_error", "tolerance", "pass"]);
        for s in &self.suites {
            t.push(vec![
                s.name.to_string(),
                s.instances.to_string(),
                fmt_f64(s.max_error),
                fmt_f64(s.tolerance),
                s.passed().to_string(),
            ]);
        }
        t
    }

    fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    fn summary(&self) -> Value {
        json!({ "suites": self.suites.len(), "failed": self.suites.iter().filter(|s| !s.passed()).map(|s| s.name).collect::<Vec<_>>() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(model: EnvModel, n: usize, m: usize) -> Ensemble {
        Ensemble::new(model, n, m, 12345).unwrap()
    }

    #[test]
    fn pn_at_zero_beta_is_exact() {
        let e = estimate_pn(&ens(EnvModel::gaussian(1.0).unwrap(), 16, 20), 0.0).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));
        assert!(estimate_pn(&ens(EnvModel::gaussian(1.0).unwrap(), 16, 20), 9.0).is_err());
    }

    #[test]
    fn wat_at_zero_beta_passes_exactly() {
        let r = wat_check(&ens(EnvModel::centered_poisson(1.0).unwrap(), 20, 10), 0.0).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert_eq!(r.estimate.mean, 0.0);
        assert!(r.passed());
        assert!(wat_check(&ens(EnvModel::centered_poisson(1.0).unwrap(), 20, 10), 4.5).is_err());
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let pts: Vec<(f64, f64, f64)> = [0.5, 0.7, 0.9].iter().map(|&b: &f64| (b, -0.3 * b.powi(4), 1e-4)).collect();
        let (slope, intercept, se) = fit_log_slope(&pts).unwrap();
        assert!((slope - 4.0).abs() < 1e-12);
        assert!((intercept - 0.3f64.ln()).abs() < 1e-12);
        assert!(se > 0.0);
        assert!(fit_log_slope(&pts[..1]).is_err());
        assert!(fit_log_slope(&[(0.5, -0.1, 0.01), (0.5, -0.2, 0.01)]).is_err());
    }

    #[test]
    fn scaling_refuses_degenerate_grid() {
        let g = EnvModel::gaussian(1.0).unwrap();
        assert!(matches!(scaling_fit(&g, &[1.0], 4, 1, None), Err(Error::Fit(_))));
        assert!(matches!(scaling_fit(&g, &[1.0, 1.0], 4, 1, None), Err(Error::Fit(_))));
        assert_eq!(scaling_n(0.6), 386);
        assert_eq!(scaling_n(1.0), 50);
        assert_eq!(scaling_n(0.1), SCALING_N_CAP);
    }

    #[test]
    fn minimal_k_inverts_the_bound() {
        for (n, x, f) in [(32, 0.05, 0.3), (64, 0.2, 1e-4), (10, 1.0, 1e-3)] {
            let k = minimal_k(n, x, f);
            assert!((concentration_bound(n, x, k) - f).abs() < 1e-12 * f.max(1e-300) + 1e-15, "{n} {x} {f}");
        }
        assert_eq!(minimal_k(10, 0.1, 0.0), 0.0);
        let k = minimal_gaussian_k(32, 0.05, 0.2);
        assert!((gaussian_bound(32, 0.05, k) - 0.2).abs() < 1e-14);
        // e^{-n x} already covers the frequency, so no K is needed
        assert_eq!(minimal_k(10, 1.0, 1e-9), 0.0);
    }

    #[test]
    fn tail_curves_nonincreasing_and_centered() {
        let r = concentration_tails(&ens(EnvModel::gaussian(1.0).unwrap(), 16, 400), 0.5).unwrap();
        assert!(r.tails_nonincreasing());
        assert!(r.dominated());
        assert!((r.exceed_plus[0] - 0.5).abs() < 0.1 && (r.exceed_minus[0] - 0.5).abs() < 0.1);
        assert!(r.exceed_plus.iter().all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn monotonicity_first_row_and_grid_validation() {
        let e = ens(EnvModel::gaussian(1.0).unwrap(), 16, 50);
        let r = monotonicity_check(&e, &[0.0, 0.5]).unwrap();
        assert_eq!(r.rows[0].estimate.mean, 0.0);
        assert!(r.rows[0].margin.is_none());
        assert!(r.passed());
        assert!(monotonicity_check(&e, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn equality_check_small_beta() {
        let r = gaussian_equality_check(&ens(EnvModel::gaussian(1.0).unwrap(), 16, 200), 0.03).unwrap();
        assert!(r.derivative.mean.abs() < 0.01 && r.overlap_term.mean.abs() < 0.01);
        assert_eq!(r.mode, EqualityMode::Equality);
        assert!(gaussian_equality_check(&ens(EnvModel::gaussian(1.0).unwrap(), 16, 10), 0.01).is_err());
    }

    #[test]
    fn selftest_passes() {
        let r = selftest(1).unwrap();
        for s in &r.suites {
            assert!(s.passed(), "{} max error {}", s.name, s.max_error);
        }
        let csv = r.table().to_csv_string();
        assert!(csv.starts_with("suite,instances,max_error,tolerance,pass\n"));
    }

    #[test]
    fn pinning_report_rows() {
        let r = pinning_report(&[0.4], 256).unwrap();
        let t = r.table();
        assert_eq!(t.rows().len(), 9); // 256, 128, ..., 1
        assert!(t.rows()[0][3].parse::<f64>().unwrap() > 0.0);
        assert_eq!(t.rows()[8][3], "");
    }
}
