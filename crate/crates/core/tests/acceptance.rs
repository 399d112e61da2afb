//! Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.
//!
//! Report lines go to stderr uncaptured; run with `--test-threads 1` to get them in order.

use std::io::Write;
use std::time::{Duration, Instant};

use polymerlab::experiments::{
    self, concentration, fkg_grid, gaussian_equality_check, identity_suites, oracle_suites, path_grid, pinning_report,
    scaling_fit, shipped_models, wat_check, OracleSizes, VarianceScaling, IBP_FRACTIONS, IBP_TOLERANCE,
    PINNING_RATIO_BAND, SCALING_SLOPE_BAND, VARIANCE_RATIO_LIMIT,
};
use polymerlab::report::Report;
use polymerlab::{Ensemble, EnvModel};

const SEED: u64 = 7;

/// Writes to the stderr handle directly so the line survives libtest output capture.
fn verdict(id: u32, title: &str, pass: bool, detail: String) {
    let line = format!("criterion {id:>2} [{}] {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().lock().write_all(line.as_bytes()).expect("stderr is writable");
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

#[test]
fn criterion_01_oracle_equivalence() {
    let start = Instant::now();
    let sizes = OracleSizes { instances: 200, max_n_partition: 10, max_n_phi: 6, max_n_pinning: 8 };
    let suites = oracle_suites(SEED, sizes).unwrap();
    let elapsed = start.elapsed();
    let pass = suites.iter().all(|s| s.passed() && s.tolerance <= 1e-10) && within(elapsed, 60);
    let detail = suites.iter().map(|s| format!("{} max {:.2e}", s.name, s.max_error)).collect::<Vec<_>>().join(", ");
    verdict(1, "DP vs brute force", pass, format!("{detail}; {:.1}s", elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_02_cross_module_identities() {
    let suites = identity_suites(SEED, 200, 16).unwrap();
    let pass = suites.iter().all(|s| s.passed() && s.tolerance <= 1e-10);
    let detail = suites.iter().map(|s| format!("{} max {:.2e}", s.name, s.max_error)).collect::<Vec<_>>().join("; ");
    verdict(2, "cross-module identities", pass, detail);
    assert!(pass);
}

#[test]
fn criterion_03_gradient() {
    let model = EnvModel::gaussian(1.0).unwrap();
    let suite = experiments::gradient_suite(&model, 20, 0.7, 50, SEED).unwrap();
    let pass = suite.instances == 50 && suite.max_error <= 1e-5;
    verdict(3, "d ln Z / d eta = beta * marginal", pass, format!("50 sites, max rel err {:.2e}", suite.max_error));
    assert!(pass);
}

#[test]
fn criterion_04_integration_by_parts() {
    let report = experiments::ibp_report(&shipped_models()).unwrap();
    let max = report.rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let pass = report.rows.len() == 4 * IBP_FRACTIONS.len() && max <= IBP_TOLERANCE && IBP_TOLERANCE <= 1e-6;
    verdict(4, "integration by parts", pass, format!("{} points, max residual {max:.2e}", report.rows.len()));
    assert!(pass);
}

#[test]
fn criterion_05_pinning_asymptotics() {
    let start = Instant::now();
    let report = pinning_report(&[0.4, 0.2, 0.1], 4000).unwrap();
    let elapsed = start.elapsed();
    let ratios = report.quadratic_ratios();
    let band = report.band_pass() && PINNING_RATIO_BAND == (0.7, 1.3);
    let trend = report.trend_pass();
    let pass = band && trend && within(elapsed, 30);
    verdict(
        5,
        "F(t) / (t^2/2) near one",
        pass,
        format!(
            "ratios at t = 0.4, 0.2, 0.1: {:.4}, {:.4}, {:.4} (band {}, trend {}); {:.1}s",
            ratios[0],
            ratios[1],
            ratios[2],
            band,
            trend,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_wat_inequality() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for model in [EnvModel::gaussian(0.25).unwrap(), EnvModel::centered_poisson(1.0).unwrap()] {
        let ens = Ensemble::new(model.clone(), 50, 1000, SEED).unwrap();
        let r = wat_check(&ens, 0.3).unwrap();
        pass &= r.passed();
        details.push(format!(
            "{}: mean {:.3e} se {:.1e} rhs {:.3e} margin {:.2e}",
            model.spec_string(),
            r.estimate.mean,
            r.estimate.stderr,
            r.rhs,
            r.margin
        ));
    }
    let elapsed = start.elapsed();
    pass &= within(elapsed, 300);
    verdict(6, "p_n >= (1 - e^c) F_n", pass, format!("{}; {:.1}s", details.join("; "), elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_07_fkg_and_path() {
    let ens = Ensemble::new(EnvModel::gaussian(0.25).unwrap(), 16, 2000, SEED).unwrap();
    let fkg = fkg_grid(&ens, 0.3, &[0.1, 0.5, 1.0], &[0.0, 1.0, 2.0]).unwrap();
    let path = path_grid(&ens, 0.3, &[0.5, 1.0]).unwrap();
    let fkg_min = fkg.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let path_min = path.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let pass = fkg.asserted && fkg.rows.len() == 9 && fkg.passed() && path.passed();
    verdict(7, "FKG gap and path check", pass, format!("min fkg margin {fkg_min:.2e}, min path margin {path_min:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_08_beta4_scaling() {
    let start = Instant::now();
    let model = EnvModel::gaussian(1.0).unwrap();
    let fit = scaling_fit(&model, &[0.6, 0.8, 1.0, 1.2], 400, SEED, None).unwrap();
    let elapsed = start.elapsed();
    let pass = fit.points.iter().all(|p| p.used)
        && fit.slope_in_band()
        && SCALING_SLOPE_BAND == (3.2, 4.8)
        && within(elapsed, 1800);
    verdict(
        8,
        "beta^4 scaling",
        pass,
        format!(
            "slope {:.3} (se {:.3}, ci [{:.3}, {:.3}]); {:.1}s",
            fit.slope,
            fit.slope_stderr,
            fit.slope_ci.0,
            fit.slope_ci.1,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_concentration() {
    let model = EnvModel::gaussian(1.0).unwrap();
    let report = concentration(&model, 0.5, &[32, 64], 1000, SEED, None).unwrap();
    let scaling: &VarianceScaling = &report.scaling[0];
    let dominated = report.tails.iter().all(|t| t.dominated() && t.tails_nonincreasing());
    let pass = scaling.passed() && VARIANCE_RATIO_LIMIT == 2.5 && dominated;
    let k = report
        .tails
        .iter()
        .map(|t| format!("K_hat(n={}) = {:.3e} (two-branch {:.3e})", t.n, t.k_hat, t.k_two_branch))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        9,
        "concentration",
        pass,
        format!(
            "n Var at 32 / 64: {:.4e} / {:.4e} (ratio {:.3}); tails dominated: {dominated}; {k}",
            report.tails[0].scaled_variance, report.tails[1].scaled_variance, scaling.ratio
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_gaussian_equality() {
    let eq = gaussian_equality_check(&Ensemble::new(EnvModel::gaussian(1.0).unwrap(), 32, 2000, SEED).unwrap(), 0.4)
        .unwrap();
    let ineq =
        gaussian_equality_check(&Ensemble::new(EnvModel::centered_poisson(1.0).unwrap(), 32, 2000, SEED).unwrap(), 0.4)
            .unwrap();
    let pass = eq.passed() && ineq.passed();
    verdict(
        10,
        "Gaussian equality and general inequality",
        pass,
        format!(
            "gaussian: fd {:.4e} vs overlap {:.4e} (combined se {:.1e}); poisson margin {:.2e}",
            eq.derivative.mean, eq.overlap_term.mean, eq.combined_stderr, ineq.margin
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_determinism() {
    let run = |workers: Option<usize>| {
        let mut csv = String::new();
        for model in [EnvModel::gaussian(0.25).unwrap(), EnvModel::centered_poisson(1.0).unwrap()] {
            let ens = Ensemble::new(model, 50, 1000, SEED).unwrap().with_workers(workers);
            csv += &wat_check(&ens, 0.3).unwrap().table().to_csv_string();
        }
        let ens = Ensemble::new(EnvModel::gaussian(0.25).unwrap(), 16, 2000, SEED).unwrap().with_workers(workers);
        csv += &fkg_grid(&ens, 0.3, &[0.1, 0.5, 1.0], &[0.0, 1.0, 2.0]).unwrap().table().to_csv_string();
        let eq = Ensemble::new(EnvModel::gaussian(1.0).unwrap(), 32, 2000, SEED).unwrap().with_workers(workers);
        csv += &gaussian_equality_check(&eq, 0.4).unwrap().table().to_csv_string();
        csv
    };
    let serial = run(Some(1));
    let parallel = run(Some(4));
    let default = run(None);
    let pass = serial == parallel && serial == default;
    verdict(
        11,
        "determinism across worker counts",
        pass,
        format!("{} CSV bytes compared for workers 1, 4, default", serial.len()),
    );
    assert!(pass);
}
