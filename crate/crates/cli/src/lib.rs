//! Command-line front end: resolves a run configuration, dispatches one experiment and writes
//! `<command>.csv` plus `<command>.manifest.json` into the output directory.
//!
//! Exit codes: 0 when the check passes, 2 when it fails beyond its margin, 1 on usage,
//! configuration or domain errors.

pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use polymerlab::experiments::{self, policy_summary};
use polymerlab::report::{Report, RunManifest, Table};
use polymerlab::{Ensemble, EnvModel};

use config::{resolve_model, FileConfig, ModelFlags, RunParams};

#[derive(Debug, Parser)]
#[command(name = "polymerlab", version, about = "Directed polymer free-energy experiments", propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// p_n(beta) on a beta grid with the Jensen bound and a monotonicity check.
    #[command(long_about = "p_n(beta) on a beta grid with the Jensen bound and a monotonicity check.\n\n\
        CSV columns: beta, n, replicates, seed, mean, stderr, margin, pass")]
    FreeEnergy,
    /// Fit of -p_n(beta) ~ C beta^slope with n = ceil(50 / beta^4) capped at 4096.
    #[command(long_about = "Fit of -p_n(beta) ~ C beta^slope with n = ceil(50 / beta^4) capped at 4096 \
        (or a fixed --n).\n\nCSV columns: beta, n, replicates, seed, mean, stderr, log_beta, log_neg_mean, used")]
    Scaling,
    /// p_n(beta) >= (1 - e^c) F_n(beta) with c from the Levy triple at B = 2 beta.
    #[command(long_about = "p_n(beta) >= (1 - e^c) F_n(beta) with c from the Levy triple at B = 2 beta.\n\n\
        CSV columns: beta, n, replicates, seed, B, c, F_n, rhs, mean, stderr, margin, pass")]
    Wat,
    /// E[d phi/du - d phi/dt] >= 0 on a (t, u) grid.
    #[command(long_about = "E[d phi/du - d phi/dt] >= 0 on a (t, u) grid.\n\n\
        CSV columns: t, u, beta, n, replicates, seed, mean, stderr, margin, pass")]
    Fkg,
    /// E phi_n(t, 2 - t) - phi_n(0, 2) <= 0 on a t grid.
    #[command(long_about = "E phi_n(t, 2 - t) - phi_n(0, 2) <= 0 on a t grid.\n\n\
        CSV columns: t, u, beta, n, replicates, seed, mean, stderr, margin, pass")]
    Path,
    /// Homogeneous pinning free energy with slope extrapolation.
    #[command(long_about = "Homogeneous pinning free energy with slope extrapolation.\n\n\
        CSV columns: t, n, per_step, slope, ratio_to_quadratic, undersized")]
    Pinning,
    /// Integration-by-parts residuals of the environment law.
    #[command(long_about = "Integration-by-parts residuals of the environment law at s in {0, B/8, B/4, B/2}; \
        all shipped families when no model is given.\n\nCSV columns: model, s, residual, tolerance, pass")]
    Ibp,
    /// Tails of (1/n) ln Z_n and n Var across system sizes.
    #[command(long_about = "Tails of (1/n) ln Z_n and n Var across system sizes.\n\n\
        CSV columns: n, beta, x, exceed_plus, exceed_minus, bound, pass")]
    Concentration,
    /// Finite-difference p_n'(beta) against the replica overlap.
    #[command(long_about = "Finite-difference p_n'(beta) against the replica overlap; an equality for Gaussian \
        environments and a one-sided inequality otherwise.\n\nCSV columns: beta, n, replicates, seed, mode, c, \
        fd_step, derivative_mean, derivative_stderr, overlap_mean, overlap_stderr, combined_stderr, paired_mean, \
        paired_stderr, margin, pass")]
    GaussianEq,
    /// Oracle-equivalence and identity suites on small systems.
    #[command(long_about = "Oracle-equivalence and identity suites on small systems.\n\n\
        CSV columns: suite, instances, max_error, tolerance, pass")]
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FreeEnergy => "free-energy",
            Command::Scaling => "scaling",
            Command::Wat => "wat",
            Command::Fkg => "fkg",
            Command::Path => "path",
            Command::Pinning => "pinning",
            Command::Ibp => "ibp",
            Command::Concentration => "concentration",
            Command::GaussianEq => "gaussian-eq",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML file with [model] and [run] sections; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Environment family (gaussian, centered_poisson, centered_gamma, compound_poisson)
    /// or a full spec such as `family=gaussian,variance=0.25`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub var: Option<f64>,
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    #[arg(long, global = true)]
    pub shape: Option<f64>,
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub a_plus: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub a_minus: Option<f64>,
    #[arg(long, global = true)]
    pub p_plus: Option<f64>,
    /// Upper end of the MGF domain used for bounds and domain checks.
    #[arg(long, global = true)]
    pub mgf_bound: Option<f64>,
    /// Master seed; falls back to the config file, then to POLYMERLAB_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of environment replicates.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub t: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub ts: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub us: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Caps worker threads (default: all cores); results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    fn run_params(&self) -> RunParams {
        RunParams {
            seed: self.seed,
            m: self.m,
            n: self.n,
            beta: self.beta,
            betas: self.betas.clone(),
            t: self.t,
            ts: self.ts.clone(),
            us: self.us.clone(),
            n_max: self.n_max,
            ns: self.ns.clone(),
            workers: self.workers,
            out: self.out.clone(),
        }
    }

    fn model_flags(&self) -> ModelFlags {
        let pairs = [
            ("variance", self.var),
            ("rate", self.rate),
            ("shape", self.shape),
            ("scale", self.scale),
            ("a_plus", self.a_plus),
            ("a_minus", self.a_minus),
            ("p_plus", self.p_plus),
            ("mgf_bound", self.mgf_bound),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect();
        ModelFlags { model: self.model.clone(), pairs }
    }
}

/// Files written by a successful run.
#[derive(Debug)]
pub struct Outcome {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub passed: bool,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let text = e.to_string();
                    let line = text.lines().next().unwrap_or("invalid arguments");
                    eprintln!(
                        "{}",
                        if line.starts_with("error:") { line.to_string() } else { format!("error: {line}") }
                    );
                    1
                }
            };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            println!(
                "{}: {} (csv: {}, manifest: {})",
                cli.command.name(),
                if out.passed { "PASS" } else { "FAIL" },
                out.csv.display(),
                out.manifest.display()
            );
            if out.passed {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            1
        }
    }
}

/// SHA-256 of the canonical JSON encoding of `config`.
pub fn config_hash(config: &Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(config).expect("config serializes")))
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let file = match &cli.common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let params = cli.common.run_params().or(file.run.clone());
    let model = resolve_model(file.model.as_ref(), &cli.common.model_flags())?;
    let name = cli.command.name();
    let (mut config, report) = dispatch(&cli.command, &params, model)?;
    config["command"] = json!(name);

    let out_dir = params.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join(format!("{name}.csv"));
    let manifest_path = out_dir.join(format!("{name}.manifest.json"));

    let table: Table = report.table();
    std::fs::write(&csv_path, table.to_csv_string()).with_context(|| format!("writing {}", csv_path.display()))?;
    let manifest = RunManifest {
        tool: "polymerlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        config_hash: config_hash(&config),
        config,
        csv: format!("{name}.csv"),
        passed: report.passed(),
        summary: report.summary(),
        policy: policy_summary(),
    };
    std::fs::write(&manifest_path, manifest.to_json())
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok(Outcome { csv: csv_path, manifest: manifest_path, passed: manifest.passed })
}

fn model_or_default(model: Option<EnvModel>) -> Result<EnvModel> {
    Ok(match model {
        Some(m) => m,
        None => EnvModel::gaussian(1.0)?,
    })
}

fn ensemble(model: &EnvModel, n: usize, m: usize, seed: u64, workers: Option<usize>) -> Result<Ensemble> {
    Ok(Ensemble::new(model.clone(), n, m, seed)?.with_workers(workers))
}

/// Free-energy rows plus, on a strictly increasing grid, the monotonicity verdict.
struct FreeEnergyRun {
    rows: experiments::FreeEnergyReport,
    monotone: Option<experiments::MonotonicityReport>,
}

impl Report for FreeEnergyRun {
    fn table(&self) -> Table {
        self.rows.table()
    }

    fn passed(&self) -> bool {
        self.rows.passed() && self.monotone.as_ref().is_none_or(Report::passed)
    }

    fn summary(&self) -> Value {
        json!({
            "jensen": self.rows.summary(),
            "jensen_pass": self.rows.passed(),
            "monotonicity": self.monotone.as_ref().map(|m| json!({
                "pass": m.passed(),
                "steps": m.rows.iter().skip(1).map(|r| json!({
                    "beta": r.beta, "step": r.step, "combined_stderr": r.combined_stderr,
                    "margin": r.margin, "realization_monotone_fraction": r.realization_monotone,
                })).collect::<Vec<_>>(),
            })),
        })
    }
}

fn dispatch(cmd: &Command, p: &RunParams, model: Option<EnvModel>) -> Result<(Value, Box<dyn Report>)> {
    let workers = p.workers;
    if workers == Some(0) {
        bail!("--workers must be at least 1");
    }
    Ok(match cmd {
        Command::FreeEnergy => {
            let model = model_or_default(model)?;
            let (seed, m, n) = (p.seed()?, p.m.unwrap_or(400), p.n.unwrap_or(64));
            let betas = p.betas_or(&[0.25, 0.5, 0.75, 1.0]);
            let ens = ensemble(&model, n, m, seed, workers)?;
            let rows = experiments::free_energy(&ens, &betas)?;
            let monotone = if betas.len() >= 2 && betas.windows(2).all(|w| w[1] > w[0]) {
                Some(experiments::monotonicity_check(&ens, &betas)?)
            } else {
                None
            };
            let config = json!({ "model": model.spec_string(), "seed": seed, "m": m, "n": n, "betas": betas });
            (config, Box::new(FreeEnergyRun { rows, monotone }))
        }
        Command::Scaling => {
            let model = model_or_default(model)?;
            let (seed, m) = (p.seed()?, p.m.unwrap_or(400));
            let betas = p.betas_or(&[0.6, 0.8, 1.0, 1.2]);
            let fit = match p.n {
                Some(n) => experiments::scaling_fit_with(&model, &betas, |_| n, m, seed, workers)?,
                None => experiments::scaling_fit(&model, &betas, m, seed, workers)?,
            };
            let n_policy = match p.n {
                Some(n) => json!(n),
                None => json!(format!(
                    "ceil({} / beta^4) capped at {}",
                    experiments::SCALING_N_FACTOR,
                    experiments::SCALING_N_CAP
                )),
            };
            let config = json!({ "model": model.spec_string(), "seed": seed, "m": m, "betas": betas, "n": n_policy });
            (config, Box::new(fit))
        }
        Command::Wat => {
            let model = model_or_default(model)?;
            let (seed, m, n, beta) = (p.seed()?, p.m.unwrap_or(1000), p.n.unwrap_or(50), p.beta_or(0.3)?);
            let r = experiments::wat_check(&ensemble(&model, n, m, seed, workers)?, beta)?;
            (json!({ "model": model.spec_string(), "seed": seed, "m": m, "n": n, "beta": beta }), Box::new(r))
        }
        Command::Fkg => {
            let model = model_or_default(model)?;
            let (seed, m, n, beta) = (p.seed()?, p.m.unwrap_or(2000), p.n.unwrap_or(16), p.beta_or(0.3)?);
            let ts = p.ts_or(&[0.1, 0.5, 1.0]);
            let us = p.us.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0]);
            let r = experiments::fkg_grid(&ensemble(&model, n, m, seed, workers)?, beta, &ts, &us)?;
            let config =
                json!({ "model": model.spec_string(), "seed": seed, "m": m, "n": n, "beta": beta, "ts": ts, "us": us });
            (config, Box::new(r))
        }
        Command::Path => {
            let model = model_or_default(model)?;
            let (seed, m, n, beta) = (p.seed()?, p.m.unwrap_or(2000), p.n.unwrap_or(16), p.beta_or(0.3)?);
            let ts = p.ts_or(&[0.5, 1.0]);
            let r = experiments::path_grid(&ensemble(&model, n, m, seed, workers)?, beta, &ts)?;
            let config = json!({ "model": model.spec_string(), "seed": seed, "m": m, "n": n, "beta": beta, "ts": ts });
            (config, Box::new(r))
        }
        Command::Pinning => {
            let ts = p.ts_or(&[0.4, 0.2, 0.1]);
            let n_max = p.n_max.unwrap_or(4000);
            let r = experiments::pinning_report(&ts, n_max)?;
            (json!({ "ts": ts, "n_max": n_max }), Box::new(r))
        }
        Command::Ibp => {
            let models = match model {
                Some(m) => vec![m],
                None => experiments::shipped_models(),
            };
            let r = experiments::ibp_report(&models)?;
            let names: Vec<String> = models.iter().map(EnvModel::spec_string).collect();
            (json!({ "models": names }), Box::new(r))
        }
        Command::Concentration => {
            let model = model_or_default(model)?;
            let (seed, m, beta) = (p.seed()?, p.m.unwrap_or(1000), p.beta_or(0.5)?);
            let ns = p.ns_or(&[32, 64]);
            let r = experiments::concentration(&model, beta, &ns, m, seed, workers)?;
            (json!({ "model": model.spec_string(), "seed": seed, "m": m, "beta": beta, "ns": ns }), Box::new(r))
        }
        Command::GaussianEq => {
            let model = model_or_default(model)?;
            let (seed, m, n, beta) = (p.seed()?, p.m.unwrap_or(2000), p.n.unwrap_or(32), p.beta_or(0.4)?);
            let r = experiments::gaussian_equality_check(&ensemble(&model, n, m, seed, workers)?, beta)?;
            (json!({ "model": model.spec_string(), "seed": seed, "m": m, "n": n, "beta": beta }), Box::new(r))
        }
        Command::Selftest => {
            // deterministic suites; the seed only picks the random instances
            let seed = p.seed.unwrap_or(0);
            let r = experiments::selftest(seed)?;
            (json!({ "seed": seed }), Box::new(r))
        }
    })
}
