//! Batch front end for `esig-core`: parse a run config, call the library and
//! write a JSON or CSV report.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use esig_core::{
    esig_1d, esig_good_part, esig_limit, expected_signature_mc, initial_condition_defect, pde_residual, ConvergenceReport,
    EsigProvider, EsigResult, ExactLowLevels, McEstimate, ModelParams, OneDimClosedForm, PdeResidual, Probe,
    SquareMatrix, Tensor, TruncatedTensorSeries,
};
use serde::{Deserialize, Serialize};

pub use config::{Command, RunConfig};

/// Largest residual `check` accepts for the scalar closed forms.
pub const CHECK_TOLERANCE_1D: f64 = 1e-6;
/// Largest residual `check` accepts for the exact low levels when d > 1.
pub const CHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "esig", version, about = "Expected signatures of damped momentum processes and their small-mass limit")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for the parallel stages.
    #[arg(long, env = "ESIG_THREADS")]
    pub threads: Option<usize>,
    /// Overrides `seed` in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags or config: exit status 1.
    Usage(String),
    /// A numerical check failed: exit status 2.
    Validation(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) => m,
        }
    }
}

impl From<esig_core::Error> for CliError {
    fn from(e: esig_core::Error) -> Self {
        use esig_core::Error as E;
        match e {
            E::SkewSymmetry(_)
            | E::ImaginaryResidue(_)
            | E::QuadratureNonConvergence { .. }
            | E::DegenerateFit { .. }
            | E::Cholesky
            | E::Singular
            | E::Overflow => CliError::Validation(e.to_string()),
            E::NonHurwitz { .. } => CliError::Usage(format!("M: {e}")),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// JSON envelope: the resolved config next to the command's payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub config: RunConfig,
    pub result: T,
}

/// One entry of the `mc` side-by-side table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub level: usize,
    pub index: Vec<usize>,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub good_part: f64,
    pub limit: f64,
    /// Exact finite-mass value where a closed form exists.
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub estimate: McEstimate,
    pub comparison: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub levels: Vec<PdeResidual>,
    pub initial_condition_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("threads: must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::usage(format!("config: cannot read {}: {e}", cli.config.display())))?;
    let cfg = RunConfig::resolve(cli.command, &text, cli.seed)?;
    let r = render(&cfg, cli.format)?;
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &r.body).map_err(|e| CliError::usage(format!("out: cannot write {}: {e}", path.display())))?;
            if let Some(table) = &r.table {
                print!("{table}");
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(r.body.as_bytes()).map_err(|e| CliError::usage(format!("out: {e}")))?;
        }
    }
    match r.failure {
        Some(msg) => Err(CliError::Validation(msg)),
        None => Ok(()),
    }
}

/// Output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub body: String,
    /// Set when the computation finished but a check did not hold.
    pub failure: Option<String>,
    /// Terminal table printed alongside a report written to a file.
    pub table: Option<String>,
}

impl Rendered {
    fn plain(body: String) -> Self {
        Rendered { body, failure: None, table: None }
    }
}

pub fn render(cfg: &RunConfig, format: Format) -> Result<Rendered, CliError> {
    match cfg.command {
        Command::Compute => {
            let r = esig_good_part(&params(cfg)?, cfg.t)?;
            Ok(Rendered::plain(series_output(cfg, r, format)?))
        }
        Command::Limit => {
            let m = matrix(cfg)?;
            let r = esig_limit(&m, &cfg.p, cfg.t, cfg.depth)?;
            Ok(Rendered::plain(series_output(cfg, r, format)?))
        }
        Command::Sweep => {
            let grid = cfg.m_grid.clone().unwrap_or_default();
            let template = ModelParams::new(matrix(cfg)?, grid[0], cfg.p.clone(), cfg.depth)?;
            let r = esig_core::convergence_sweep(&template, cfg.t, cfg.n.unwrap_or(cfg.depth), &grid)?;
            let body = match format {
                Format::Json => json(cfg, &r)?,
                Format::Csv => sweep_csv(&r)?,
            };
            Ok(Rendered::plain(body))
        }
        Command::Mc => {
            let r = mc_report(cfg)?;
            let body = match format {
                Format::Json => json(cfg, &r)?,
                Format::Csv => comparison_csv(&r.comparison)?,
            };
            Ok(Rendered { body, failure: None, table: Some(comparison_table(&r.comparison)) })
        }
        Command::Check => {
            let r = check_report(cfg)?;
            let failure = (!r.passed).then(|| {
                let worst = r.levels.iter().map(|l| l.max_residual).fold(0.0, f64::max);
                format!("PDE residual {worst:e} exceeds {:e}", r.tolerance)
            });
            let body = match format {
                Format::Json => json(cfg, &r)?,
                Format::Csv => check_csv(&r)?,
            };
            Ok(Rendered { body, failure, table: None })
        }
    }
}

fn matrix(cfg: &RunConfig) -> Result<SquareMatrix, CliError> {
    Ok(SquareMatrix::from_row_major(cfg.d, &cfg.row_major())?)
}

fn params(cfg: &RunConfig) -> Result<ModelParams, CliError> {
    let m = cfg.m.ok_or_else(|| CliError::usage("m: required"))?;
    Ok(ModelParams::new(matrix(cfg)?, m, cfg.p.clone(), cfg.depth)?)
}

fn json<T: Serialize>(cfg: &RunConfig, result: &T) -> Result<String, CliError> {
    let report = Report { config: cfg.clone(), result };
    let mut s = serde_json::to_string_pretty(&report).map_err(|e| CliError::usage(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Multi-index of the flat row-major offset `k` in a level-`level` tensor.
pub fn multi_index(dim: usize, level: usize, mut k: usize) -> Vec<usize> {
    let mut idx = vec![0; level];
    for slot in idx.iter_mut().rev() {
        *slot = k % dim;
        k /= dim;
    }
    idx
}

fn index_label(idx: &[usize]) -> String {
    idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn csv_finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::usage(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::usage(format!("csv: {e}")))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::usage(format!("csv: {e}"))
}

fn series_output(cfg: &RunConfig, r: EsigResult, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => json(cfg, &r),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["level", "index", "value"]).map_err(csv_err)?;
            for (n, lvl) in r.series.levels().iter().enumerate() {
                for (k, v) in lvl.entries().iter().enumerate() {
                    let idx = index_label(&multi_index(lvl.dim(), n, k));
                    w.write_record([n.to_string(), idx, v.to_string()]).map_err(csv_err)?;
                }
            }
            csv_finish(w)
        }
    }
}

fn sweep_csv(r: &ConvergenceReport) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "m", "error", "bound", "slope", "status"]).map_err(csv_err)?;
    let slope = r.slope.map(|s| s.to_string()).unwrap_or_default();
    let status = match r.status {
        esig_core::SweepStatus::Fitted => "fitted",
        esig_core::SweepStatus::Floor => "floor",
    };
    for (m, e, b) in r.rows() {
        w.write_record([r.level.to_string(), m.to_string(), e.to_string(), b.to_string(), slope.clone(), status.into()])
            .map_err(csv_err)?;
    }
    csv_finish(w)
}

fn exact_series(pr: &ModelParams, t: f64) -> Result<Vec<Option<Tensor<f64>>>, CliError> {
    let depth = pr.depth;
    if pr.dim() == 1 {
        let s: TruncatedTensorSeries<f64> = esig_1d(pr.matrix.get(0, 0) / pr.mass, 1.0, pr.p[0], t, depth)?;
        return Ok(s.levels().iter().cloned().map(Some).collect());
    }
    let low = ExactLowLevels::new(pr);
    (0..=depth).map(|n| if n <= 2 { low.level(n, t, &pr.p).map(Some).map_err(CliError::from) } else { Ok(None) }).collect()
}

pub fn mc_report(cfg: &RunConfig) -> Result<McReport, CliError> {
    let pr = params(cfg)?;
    let est = expected_signature_mc(
        &pr,
        cfg.t,
        cfg.depth,
        cfg.paths.unwrap_or(config::DEFAULT_PATHS),
        cfg.steps.unwrap_or(config::DEFAULT_STEPS),
        cfg.seed.unwrap_or(0),
    )?;
    let good = esig_good_part(&pr, cfg.t)?.series;
    let lim = esig_limit(&pr.matrix, &pr.p, cfg.t, cfg.depth)?.series;
    let exact = exact_series(&pr, cfg.t)?;
    let mut rows = Vec::new();
    for n in 0..=cfg.depth {
        let lvl = est.mean.level(n);
        for k in 0..lvl.entries().len() {
            rows.push(ComparisonRow {
                level: n,
                index: multi_index(cfg.d, n, k),
                mc_mean: lvl.entries()[k],
                mc_stderr: est.stderr.level(n).entries()[k],
                good_part: good.level(n).entries()[k],
                limit: lim.level(n).entries()[k],
                exact: exact[n].as_ref().map(|e| e.entries()[k]),
            });
        }
    }
    Ok(McReport { estimate: est, comparison: rows })
}

fn comparison_csv(rows: &[ComparisonRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "index", "mc_mean", "mc_stderr", "good_part", "limit", "exact"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            index_label(&r.index),
            r.mc_mean.to_string(),
            r.mc_stderr.to_string(),
            r.good_part.to_string(),
            r.limit.to_string(),
            r.exact.map(|e| e.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    csv_finish(w)
}

/// Fixed-width table for the terminal.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut s = format!(
        "{:>5} {:>8} {:>14} {:>11} {:>14} {:>14} {:>14}\n",
        "level", "index", "mc_mean", "mc_stderr", "good_part", "limit", "exact"
    );
    for r in rows {
        let exact = r.exact.map(|e| format!("{e:>14.8}")).unwrap_or_else(|| format!("{:>14}", "-"));
        s.push_str(&format!(
            "{:>5} {:>8} {:>14.8} {:>11.3e} {:>14.8} {:>14.8} {}\n",
            r.level,
            index_label(&r.index),
            r.mc_mean,
            r.mc_stderr,
            r.good_part,
            r.limit,
            exact
        ));
    }
    s
}

fn check_probes(cfg: &RunConfig) -> Vec<Probe> {
    let mut v = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let shift = -1.0 + 0.5 * j as f64;
            v.push(Probe { t: cfg.t * (i + 1) as f64 / 5.0, p: cfg.p.iter().map(|x| x + shift).collect() });
        }
    }
    v
}

pub fn check_report(cfg: &RunConfig) -> Result<CheckReport, CliError> {
    let pr = params(cfg)?;
    let probes = check_probes(cfg);
    let momenta: Vec<Vec<f64>> = probes.iter().map(|p| p.p.clone()).collect();
    let (provider, top, tolerance): (Box<dyn EsigProvider>, usize, f64) = if cfg.d == 1 {
        (Box::new(OneDimClosedForm::new(&pr)?), cfg.depth, CHECK_TOLERANCE_1D)
    } else {
        (Box::new(ExactLowLevels::new(&pr)), cfg.depth.min(2), CHECK_TOLERANCE)
    };
    let levels = (1..=top).map(|n| pde_residual(provider.as_ref(), &pr, n, &probes)).collect::<Result<Vec<_>, _>>()?;
    let defect = initial_condition_defect(provider.as_ref(), top, &momenta)?;
    let passed = levels.iter().all(|l| l.max_residual <= tolerance) && defect <= 1e-12;
    Ok(CheckReport { levels, initial_condition_defect: defect, tolerance, passed })
}

fn check_csv(r: &CheckReport) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "t", "p", "residual"]).map_err(csv_err)?;
    for lvl in &r.levels {
        for (pr, res) in lvl.probes.iter().zip(&lvl.residuals) {
            let p = pr.p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            w.write_record([lvl.level.to_string(), pr.t.to_string(), p, res.to_string()]).map_err(csv_err)?;
        }
    }
    csv_finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_is_row_major() {
        assert_eq!(multi_index(2, 2, 1), vec![0, 1]);
        assert_eq!(multi_index(2, 2, 2), vec![1, 0]);
        assert_eq!(multi_index(3, 3, 26), vec![2, 2, 2]);
        assert!(multi_index(4, 0, 0).is_empty());
    }

    #[test]
    fn error_classes() {
        let skew: CliError = esig_core::Error::SkewSymmetry(1.0).into();
        assert_eq!(skew.exit_code(), 2);
        let nh: CliError = esig_core::Error::NonHurwitz { min_real_part: -1.0 }.into();
        assert_eq!(nh.exit_code(), 1);
        assert!(nh.message().starts_with("M:"));
    }
}
