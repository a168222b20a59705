//! Simulation harness: finite-sample replications against the limit law
//! over a grid of sample sizes and penalty scales.

mod cli;
mod output;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::{check_failures, sample_limit_batch, LimitLaw};
use crate::datagen::{build_covariance, gen_dataset, ScenarioSpec};
use crate::error::{Error, Result};
use crate::loss::{moments_analytic, moments_mc, MomentPair};
use crate::metrics::{mean_rre, recovery_rate, rmse, PatternProjector, ReplicationResult, Summary};
use crate::numerics::{RngStream, RNG_ALGORITHM};
use crate::penalty::{Pattern, PenaltySpec};
use crate::solver::{fit_from, SolveOptions};

pub use cli::{cli_main, cli_main_with};
pub use output::{emit_csv, emit_plot, parse_csv, write_metadata, Metric, CSV_HEADER};

/// Largest tolerated fraction of excluded finite-sample replications.
pub const MAX_EXCLUDED_RATE: f64 = 0.01;

pub(crate) const MOMENT_TAG: u64 = 1;
const LIMIT_TAG: u64 = 2;
const DATA_TAG: u64 = 3;

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_moment_draws() -> usize {
    1_000_000
}

/// A full simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    /// Penalty at unit scale; each grid point sets the scale to its `α`.
    pub penalty: PenaltySpec,
    pub sample_sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    pub replications: usize,
    /// Draws from the limit law per `α`.
    pub draws: usize,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solver: SolveOptions,
    /// Monte Carlo draws for `(C, C_Δ)` when no closed form exists.
    #[serde(default = "default_moment_draws")]
    pub moment_draws: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.penalty.validate(self.scenario.p())?;
        self.solver.validate()?;
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.replications == 0 || self.draws == 0 || self.moment_draws == 0 {
            return bad("replications, draws and moment_draws must be positive".into());
        }
        if self.sample_sizes.contains(&0) {
            return bad("sample sizes must be positive".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return bad(format!("alpha values must be finite and nonnegative, got {a}"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One grid cell; `sample_size = None` marks the limit law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sample_size: Option<usize>,
    pub alpha: f64,
    pub rmse: f64,
    pub rmse_se: f64,
    pub mean_rre: f64,
    pub rre_se: f64,
    pub recovery: f64,
    pub recovery_se: f64,
    /// Replications (or limit draws) attempted.
    pub replications: usize,
    pub converged: usize,
    pub excluded: usize,
}

/// Where the moment pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Analytic,
    MonteCarlo,
}

/// Run record written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_sha256: String,
    pub version: String,
    pub rng: String,
    pub moments: MomentSource,
    pub moment_draws: Option<usize>,
}

/// All rows of a study: each sample size in config order, then the limit
/// law, with the `α` grid in config order inside each.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub metadata: RunMetadata,
}

impl ResultTable {
    pub fn row(&self, sample_size: Option<usize>, alpha: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.sample_size == sample_size && r.alpha == alpha)
    }
}

/// `(C, C_Δ)` for a scenario: closed form when available, Monte Carlo
/// otherwise.
pub fn scenario_moments(
    scenario: &ScenarioSpec,
    moment_draws: usize,
    stream: &RngStream,
) -> Result<(MomentPair, MomentSource)> {
    let exx = build_covariance(&scenario.design)?;
    match moments_analytic(&scenario.loss, &exx, &scenario.theta0, scenario.noise.as_ref()) {
        Ok(m) => Ok((m, MomentSource::Analytic)),
        Err(Error::NoClosedForm(_)) => {
            let est = moments_mc(
                &scenario.loss,
                &exx,
                scenario.noise.as_ref(),
                &scenario.theta0,
                moment_draws,
                stream,
            )?;
            Ok((est.pair, MomentSource::MonteCarlo))
        }
        Err(e) => Err(e),
    }
}

fn summarize(sample_size: Option<usize>, alpha: f64, results: &[ReplicationResult], proj: &PatternProjector, target: &Pattern) -> Result<ResultRow> {
    let r: Summary = rmse(results)?;
    let e = mean_rre(results, proj, target)?;
    let c = recovery_rate(results, target)?;
    Ok(ResultRow {
        sample_size,
        alpha,
        rmse: r.value,
        rmse_se: r.std_error,
        mean_rre: e.value,
        rre_se: e.std_error,
        recovery: c.value,
        recovery_se: c.std_error,
        replications: results.len(),
        converged: r.used,
        excluded: r.excluded,
    })
}

/// Replications at sample size `n`, indexed `[replication][alpha]`. Each
/// replication draws one dataset and fits the `α` grid in order, warm
/// starting from the previous converged fit.
fn finite_cells(cfg: &ExperimentConfig, n: usize, root: &RngStream) -> Result<Vec<Vec<ReplicationResult>>> {
    let scenario = cfg.scenario.with_n(n);
    let p = scenario.p();
    let data_root = root.child(DATA_TAG).child(n as u64);
    let compiled = cfg.penalty.compile(p)?;
    (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let data = gen_dataset(&scenario, &data_root.with_stream(r as u64))?;
            let mut start = None;
            let mut out = Vec::with_capacity(cfg.alphas.len());
            for &alpha in &cfg.alphas {
                let pen = cfg.penalty.with_scale(alpha);
                let res = match fit_from(&data, &scenario.loss, &pen, &cfg.solver, start.as_ref()) {
                    Ok(rep) => {
                        start = Some(rep.minimizer.clone());
                        ReplicationResult::from_fit(rep.minimizer, &scenario.theta0, n, &compiled, true)?
                    }
                    Err(Error::NotConverged(rep)) => {
                        ReplicationResult::from_fit(rep.minimizer, &scenario.theta0, n, &compiled, false)?
                    }
                    Err(Error::SeparableData { .. }) => ReplicationResult::failed(p),
                    Err(e) => return Err(e),
                };
                out.push(res);
            }
            Ok(out)
        })
        .collect()
}

/// Runs the grid. Rows are deterministic in `(config, seed)` and do not
/// depend on the number of threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, 0);
    let scenario = &cfg.scenario;
    let p = scenario.p();
    let theta0 = &scenario.theta0;
    let compiled = cfg.penalty.compile(p)?;
    let target = compiled.pattern(theta0, 0.0);
    let proj = PatternProjector::new(&cfg.penalty, theta0)?;
    let mut rows = Vec::new();

    for &n in &cfg.sample_sizes {
        let cells = finite_cells(cfg, n, &root)?;
        for (k, &alpha) in cfg.alphas.iter().enumerate() {
            let results: Vec<ReplicationResult> = cells.iter().map(|rep| rep[k].clone()).collect();
            let row = summarize(Some(n), alpha, &results, &proj, &target)?;
            if row.excluded as f64 > MAX_EXCLUDED_RATE * row.replications as f64 {
                return Err(Error::TooManyFailures {
                    failed: row.excluded,
                    total: row.replications,
                });
            }
            rows.push(row);
        }
    }

    let (moments, source) = scenario_moments(scenario, cfg.moment_draws, &root.child(MOMENT_TAG))?;
    let limit_stream = root.child(LIMIT_TAG);
    for &alpha in &cfg.alphas {
        let law = LimitLaw::new(theta0.clone(), moments.clone(), cfg.penalty.with_scale(alpha))?;
        let draws = sample_limit_batch(&law, cfg.draws, &limit_stream, &cfg.solver)?;
        let mut failed = 0;
        let results = draws
            .into_iter()
            .map(|d| match d {
                Ok(u) => ReplicationResult::from_limit(u, theta0, &compiled),
                Err(Error::NotConverged(_)) => {
                    failed += 1;
                    Ok(ReplicationResult::failed(p))
                }
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        check_failures(failed, cfg.draws)?;
        rows.push(summarize(None, alpha, &results, &proj, &target)?);
    }

    Ok(ResultTable {
        rows,
        metadata: RunMetadata {
            seed: cfg.seed,
            config_sha256: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_ALGORITHM.to_string(),
            moments: source,
            moment_draws: (source == MomentSource::MonteCarlo).then_some(cfg.moment_draws),
        },
    })
}
