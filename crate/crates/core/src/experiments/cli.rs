//! Command-line entry point.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use super::{emit_csv, emit_plot, run_experiment, scenario_moments, write_metadata, ExperimentConfig, Metric, MOMENT_TAG};
use crate::asymptotics::{
    check_failures, irrepresentability_check, limit_pattern_distribution, recovery_probability_formula_with,
    sample_limit_batch, LimitLaw, PatternDistribution, SigmaForm,
};
use crate::datagen::{gen_dataset, paper_penalty, paper_scenario, ScenarioSpec};
use crate::error::{Error, Result};
use crate::metrics::{mean_rre, recovery_rate, rmse, PatternProjector, ReplicationResult};
use crate::numerics::{serde_vector, RngStream, Vector};
use crate::penalty::{Pattern, PenaltySpec};
use crate::solver::{fit_from, SolveOptions, SolveReport};

#[derive(Parser, Debug)]
#[command(name = "polypat", version, about = "Penalized M-estimation: fits, limit laws and pattern recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SigmaArg {
    Derived,
    Printed,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one dataset and fit it.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo summary of a limit law.
    Limit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        draws: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Recovery probability from the Gaussian formula and from direct draws.
    Recovery {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long, value_enum, default_value = "derived")]
        sigma_form: SigmaArg,
        #[command(flatten)]
        common: Common,
    },
    /// Full grid of sample sizes and penalty scales.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// The reference SLOPE logistic study.
    PaperFigures {
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 5000)]
        draws: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [500usize, 1000, 5000, 10000])]
        sample_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.25f64, 0.5, 1.0, 2.0])]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        moment_draws: usize,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Fit { common, .. }
            | Command::Limit { common, .. }
            | Command::Recovery { common, .. }
            | Command::Experiment { common, .. }
            | Command::PaperFigures { common, .. } => common,
        }
    }
}

/// Runs the CLI with process stdout and stderr; returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_main_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`cli_main`] with explicit output streams. Exit codes: 0 success, 1 bad
/// input, 2 numerical failure.
pub fn cli_main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                0
            } else {
                let _ = write!(err, "{e}");
                1
            };
        }
    };
    let result = match cli.command.common().threads {
        Some(0) => Err(Error::ConfigInvalid("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| run(&cli.command))),
        None => run(&cli.command),
    };
    match result {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(dir.join(name), s)?;
    Ok(())
}

fn run(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Fit { config, common } => fit_cmd(&read_config(config)?, common),
        Command::Limit { config, draws, common } => limit_cmd(&read_config(config)?, *draws, common),
        Command::Recovery {
            config,
            draws,
            sigma_form,
            common,
        } => {
            let form = match sigma_form {
                SigmaArg::Derived => SigmaForm::Derived,
                SigmaArg::Printed => SigmaForm::Printed,
            };
            recovery_cmd(&read_config(config)?, *draws, form, common)
        }
        Command::Experiment {
            config,
            reps,
            draws,
            common,
        } => {
            let mut cfg: ExperimentConfig = read_config(config)?;
            if let Some(r) = reps {
                cfg.replications = *r;
            }
            if let Some(d) = draws {
                cfg.draws = *d;
            }
            experiment_cmd(cfg, common)
        }
        Command::PaperFigures {
            reps,
            draws,
            sample_sizes,
            alphas,
            moment_draws,
            common,
        } => {
            let cfg = ExperimentConfig {
                scenario: paper_scenario(),
                penalty: paper_penalty(),
                sample_sizes: sample_sizes.clone(),
                alphas: alphas.clone(),
                replications: *reps,
                draws: *draws,
                seed: 0,
                output_dir: PathBuf::from("paper-figures"),
                solver: SolveOptions::default(),
                moment_draws: *moment_draws,
            };
            experiment_cmd(cfg, common)
        }
    }
}

/// Config of the `fit` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    scenario: ScenarioSpec,
    penalty: PenaltySpec,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    solver: SolveOptions,
}

#[derive(Serialize)]
struct FitRecord<'a> {
    seed: u64,
    n: usize,
    pattern: String,
    #[serde(with = "serde_vector")]
    theta_hat: Vector,
    report: &'a SolveReport,
}

fn fmt_vector(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fit_cmd(cfg: &FitConfig, common: &Common) -> Result<String> {
    let seed = common.seed.unwrap_or(cfg.seed);
    cfg.scenario.validate()?;
    let p = cfg.scenario.p();
    let pen = cfg.penalty.compile(p)?;
    let data = gen_dataset(&cfg.scenario, &RngStream::new(seed, 0))?;
    let report = match fit_from(&data, &cfg.scenario.loss, &cfg.penalty, &cfg.solver, None) {
        Ok(r) => r,
        Err(Error::NotConverged(r)) => *r,
        Err(e) => return Err(e),
    };
    let pattern = pen.pattern(&report.minimizer, crate::metrics::PATTERN_TOL);
    let mut s = String::new();
    writeln!(s, "theta_hat: {}", fmt_vector(&report.minimizer)).unwrap();
    writeln!(s, "pattern: {pattern}").unwrap();
    writeln!(s, "kkt_residual: {:.6e} (tolerance {:.6e})", report.kkt_residual, report.kkt_tolerance).unwrap();
    writeln!(s, "iterations: {}", report.iterations).unwrap();
    writeln!(s, "objective: {:.16e}", report.objective).unwrap();
    writeln!(s, "converged: {}", report.converged).unwrap();
    if let Some(dir) = &common.out {
        let rec = FitRecord {
            seed,
            n: cfg.scenario.n,
            pattern: pattern.to_string(),
            theta_hat: report.minimizer.clone(),
            report: &report,
        };
        write_json(dir, "fit.json", &rec)?;
    }
    if !report.converged {
        return Err(Error::NotConverged(Box::new(report)));
    }
    Ok(s)
}

fn default_draws() -> usize {
    5000
}

fn default_moment_draws() -> usize {
    1_000_000
}

/// Config of the `limit` and `recovery` subcommands: either an explicit
/// `law`, or a `scenario` and `penalty` whose moments are derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawConfig {
    #[serde(default)]
    law: Option<LimitLaw>,
    #[serde(default)]
    scenario: Option<ScenarioSpec>,
    #[serde(default)]
    penalty: Option<PenaltySpec>,
    /// Overrides the penalty scale.
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default = "default_draws")]
    draws: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    solver: SolveOptions,
    #[serde(default = "default_moment_draws")]
    moment_draws: usize,
}

impl LawConfig {
    fn resolve(&self, seed: u64) -> Result<LimitLaw> {
        self.solver.validate()?;
        let law = match (&self.law, &self.scenario, &self.penalty) {
            (Some(l), None, None) => l.clone(),
            (None, Some(sc), Some(pen)) => {
                sc.validate()?;
                let (m, _) = scenario_moments(sc, self.moment_draws, &RngStream::new(seed, 0).child(MOMENT_TAG))?;
                LimitLaw::new(sc.theta0.clone(), m, pen.clone())?
            }
            _ => {
                return Err(Error::ConfigInvalid(
                    "give either 'law', or both 'scenario' and 'penalty'".into(),
                ))
            }
        };
        match self.alpha {
            Some(a) => law.with_scale(a),
            None => Ok(law),
        }
    }
}

const LIMIT_STREAM: u64 = 10;
const FORMULA_STREAM: u64 = 11;
const DIRECT_STREAM: u64 = 12;

#[derive(Serialize)]
struct PatternRow {
    pattern: String,
    count: usize,
    probability: f64,
    std_error: f64,
}

fn pattern_rows(d: &PatternDistribution) -> Vec<PatternRow> {
    let mut rows: Vec<PatternRow> = d
        .iter()
        .map(|(p, c)| PatternRow {
            pattern: p.to_string(),
            count: c,
            probability: d.probability(p),
            std_error: d.std_error(p),
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.pattern.cmp(&b.pattern)));
    rows
}

#[derive(Serialize)]
struct LimitRecord {
    seed: u64,
    draws: usize,
    failed: usize,
    true_pattern: String,
    rmse: f64,
    rmse_se: f64,
    mean_rre: f64,
    rre_se: f64,
    recovery: f64,
    recovery_se: f64,
    patterns: Vec<PatternRow>,
}

fn limit_cmd(cfg: &LawConfig, draws: Option<usize>, common: &Common) -> Result<String> {
    let seed = common.seed.unwrap_or(cfg.seed);
    let draws = draws.unwrap_or(cfg.draws);
    if draws == 0 {
        return Err(Error::ConfigInvalid("draws must be positive".into()));
    }
    let law = cfg.resolve(seed)?;
    let pen = law.penalty().compile(law.dim())?;
    let target = law.true_pattern()?;
    let stream = RngStream::new(seed, LIMIT_STREAM);
    let mut failed = 0;
    let results = sample_limit_batch(&law, draws, &stream, &cfg.solver)?
        .into_iter()
        .filter_map(|d| match d {
            Ok(u) => Some(ReplicationResult::from_limit(u, law.theta0(), &pen)),
            Err(Error::NotConverged(_)) => {
                failed += 1;
                None
            }
            Err(e) => Some(Err(e)),
        })
        .collect::<Result<Vec<_>>>()?;
    check_failures(failed, draws)?;
    let proj = PatternProjector::new(law.penalty(), law.theta0())?;
    let r = rmse(&results)?;
    let e = mean_rre(&results, &proj, &target)?;
    let c = recovery_rate(&results, &target)?;
    let dist = PatternDistribution::from_patterns(results.iter().map(|r| r.pattern.clone()), failed, stream);
    let rows = pattern_rows(&dist);
    let mut s = String::new();
    writeln!(s, "draws: {draws} (failed {failed})").unwrap();
    writeln!(s, "true pattern: {target}").unwrap();
    writeln!(s, "rmse: {:.6} ± {:.6}", r.value, r.std_error).unwrap();
    writeln!(s, "mean rre: {:.6} ± {:.6}", e.value, e.std_error).unwrap();
    writeln!(s, "recovery: {:.6} ± {:.6}", c.value, c.std_error).unwrap();
    writeln!(s, "patterns ({} distinct, most frequent first):", rows.len()).unwrap();
    for row in rows.iter().take(10) {
        writeln!(s, "  {:.6} ± {:.6}  {}", row.probability, row.std_error, row.pattern).unwrap();
    }
    if let Some(dir) = &common.out {
        let rec = LimitRecord {
            seed,
            draws,
            failed,
            true_pattern: target.to_string(),
            rmse: r.value,
            rmse_se: r.std_error,
            mean_rre: e.value,
            rre_se: e.std_error,
            recovery: c.value,
            recovery_se: c.std_error,
            patterns: rows,
        };
        write_json(dir, "limit.json", &rec)?;
    }
    Ok(s)
}

#[derive(Serialize)]
struct RecoveryRecord {
    seed: u64,
    draws: usize,
    true_pattern: String,
    sigma_form: SigmaForm,
    formula: f64,
    formula_se: f64,
    direct: f64,
    direct_se: f64,
    irrepresentability_margin: f64,
    irrepresentable: bool,
}

fn recovery_cmd(cfg: &LawConfig, draws: Option<usize>, form: SigmaForm, common: &Common) -> Result<String> {
    let seed = common.seed.unwrap_or(cfg.seed);
    let draws = draws.unwrap_or(cfg.draws);
    let law = cfg.resolve(seed)?;
    let target: Pattern = law.true_pattern()?;
    let f = recovery_probability_formula_with(&law, draws, &RngStream::new(seed, FORMULA_STREAM), form)?;
    let d = limit_pattern_distribution(&law, draws, &RngStream::new(seed, DIRECT_STREAM), &cfg.solver)?;
    let irr = irrepresentability_check(&law)?;
    let (dp, dse) = (d.probability(&target), d.std_error(&target));
    let mut s = String::new();
    writeln!(s, "true pattern: {target}").unwrap();
    writeln!(s, "formula: {:.6} ± {:.6}", f.probability, f.std_error).unwrap();
    writeln!(s, "direct:  {:.6} ± {:.6}", dp, dse).unwrap();
    writeln!(
        s,
        "difference: {:.6} ({:.2} combined standard errors)",
        f.probability - dp,
        z_score(f.probability - dp, f.std_error, dse)
    )
    .unwrap();
    writeln!(s, "irrepresentability margin: {:.6} ({})", irr.margin, if irr.holds { "holds" } else { "fails" }).unwrap();
    if let Some(dir) = &common.out {
        let rec = RecoveryRecord {
            seed,
            draws,
            true_pattern: target.to_string(),
            sigma_form: form,
            formula: f.probability,
            formula_se: f.std_error,
            direct: dp,
            direct_se: dse,
            irrepresentability_margin: irr.margin,
            irrepresentable: irr.holds,
        };
        write_json(dir, "recovery.json", &rec)?;
    }
    Ok(s)
}

fn z_score(diff: f64, a: f64, b: f64) -> f64 {
    let se = (a * a + b * b).sqrt();
    if se == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / se
    }
}

fn experiment_cmd(mut cfg: ExperimentConfig, common: &Common) -> Result<String> {
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let table = run_experiment(&cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    emit_csv(&table, &dir.join("results.csv"))?;
    for m in Metric::ALL {
        emit_plot(&table, m, &dir.join(format!("{}.svg", m.name())))?;
    }
    write_metadata(&table.metadata, &dir.join("metadata.json"))?;
    let mut resolved = cfg.clone();
    resolved.output_dir = PathBuf::new();
    write_json(dir, "config.json", &resolved)?;
    let mut s = String::new();
    writeln!(s, "{:>10} {:>8} {:>10} {:>10} {:>10}", "n", "alpha", "rmse", "mean_rre", "recovery").unwrap();
    for r in &table.rows {
        let n = r.sample_size.map_or("asymptotic".to_string(), |n| n.to_string());
        writeln!(s, "{n:>10} {:>8.4} {:>10.5} {:>10.5} {:>10.5}", r.alpha, r.rmse, r.mean_rre, r.recovery).unwrap();
    }
    writeln!(s, "config sha256: {}", table.metadata.config_sha256).unwrap();
    Ok(s)
}
