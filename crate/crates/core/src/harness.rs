//! Experiment orchestration: traces, stop rules, residuals, seeded sweeps
//! over n and log-log scaling fits.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{AgentConfiguration, DensityField};
use crate::error::{CoverageError, Result};
use crate::lifted::{run_dynamic, ChainVariant, DynamicParams, MovementRule};
use crate::rng::{cell_seed, SplitMix64};
use crate::static_law::{run_static, static_step};

/// Offset used to separate coincident starting agents for the dynamic law.
pub const START_PERTURBATION: f64 = 1e-6;

/// Default sum-of-squares stopping tolerance.
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    Static,
    Dynamic,
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Law::Static => "static",
            Law::Dynamic => "dynamic",
        })
    }
}

impl FromStr for Law {
    type Err = CoverageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Law::Static),
            "dynamic" => Ok(Law::Dynamic),
            other => Err(CoverageError::Domain(format!("unknown law `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    MaxRounds(usize),
    /// Stop once sum_i (x_i - x_i*)^2 <= tol against the optimum for the
    /// current agent count, or after `max_rounds`.
    Converged { tol: f64, max_rounds: usize },
}

impl StopRule {
    pub fn converged(tol: f64, max_rounds: usize) -> Self {
        StopRule::Converged { tol, max_rounds }
    }

    pub fn max_rounds(&self) -> usize {
        match *self {
            StopRule::MaxRounds(m) => m,
            StopRule::Converged { max_rounds, .. } => max_rounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopFired {
    Converged,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub positions: Vec<f64>,
    pub phi: f64,
    pub residual: f64,
    pub zsum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMetadata {
    pub law: Law,
    pub field: String,
    pub n: usize,
    pub big_u: Option<usize>,
    pub variant: Option<ChainVariant>,
    pub rule: Option<MovementRule>,
    pub seed: Option<u64>,
    pub stop_fired: Option<StopFired>,
}

impl TraceMetadata {
    pub fn new(law: Law, field: &DensityField, n: usize) -> Self {
        Self {
            law,
            field: field.name().to_string(),
            n,
            big_u: None,
            variant: None,
            rule: None,
            seed: None,
            stop_fired: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTrace {
    pub metadata: TraceMetadata,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    #[serde(flatten)]
    pub metadata: TraceMetadata,
    pub rounds: usize,
    pub final_positions: Vec<f64>,
    pub final_phi: f64,
    pub phi_star: f64,
    pub final_residual: f64,
    pub final_squared_error: f64,
}

impl ExperimentTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    /// Round at which the run stopped.
    pub fn rounds(&self) -> usize {
        self.last().t
    }

    pub fn converged(&self) -> bool {
        self.metadata.stop_fired == Some(StopFired::Converged)
    }

    pub fn summary(&self, field: &DensityField) -> Result<TraceSummary> {
        let last = self.last();
        let config = AgentConfiguration::new(last.positions.clone())?;
        Ok(TraceSummary {
            metadata: self.metadata.clone(),
            rounds: last.t,
            final_positions: last.positions.clone(),
            final_phi: last.phi,
            phi_star: field.total_mass() / (2 * config.len()) as f64,
            final_residual: last.residual,
            final_squared_error: squared_error(field, &config)?,
        })
    }

    /// `t, x_1..x_n, phi, residual, zsum` with n the starting agent count.
    /// Rows of a run whose agent count changed leave missing columns empty.
    pub fn to_csv(&self) -> String {
        let width = self.records.iter().map(|r| r.positions.len()).max().unwrap_or(0);
        let mut out = String::from("t");
        for i in 1..=width {
            out.push_str(&format!(",x_{i}"));
        }
        out.push_str(",phi,residual,zsum\n");
        for r in &self.records {
            out.push_str(&r.t.to_string());
            for i in 0..width {
                out.push(',');
                if let Some(x) = r.positions.get(i) {
                    out.push_str(&fmt_f64(*x));
                }
            }
            out.push_str(&format!(",{},{},", fmt_f64(r.phi), fmt_f64(r.residual)));
            if let Some(z) = r.zsum {
                out.push_str(&fmt_f64(z));
            }
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Builds a trace round by round and decides when the stop rule fires.
pub(crate) struct Tracer<'a> {
    field: &'a DensityField,
    stop: StopRule,
    meta: TraceMetadata,
    records: Vec<TraceRecord>,
    optimum: Option<AgentConfiguration>,
}

impl<'a> Tracer<'a> {
    pub(crate) fn new(field: &'a DensityField, stop: StopRule, meta: TraceMetadata) -> Result<Self> {
        if let StopRule::Converged { tol, .. } = stop {
            if tol.is_nan() || tol < 0.0 {
                return Err(CoverageError::Domain(format!("stopping tolerance {tol} must be >= 0")));
            }
        }
        Ok(Self { field, stop, meta, records: Vec::new(), optimum: None })
    }

    fn squared_error(&mut self, config: &AgentConfiguration) -> f64 {
        let n = config.len();
        if self.optimum.as_ref().map(|o| o.len()) != Some(n) {
            self.optimum = Some(self.field.optimal_configuration(n).expect("n >= 1").0);
        }
        let opt = self.optimum.as_ref().expect("just set");
        config.positions().iter().zip(opt.positions()).map(|(x, o)| (x - o) * (x - o)).sum()
    }

    /// Appends the record for round `t`; returns the finished trace when
    /// the stop rule fires. `may_stop = false` defers the convergence test
    /// (the round limit still applies).
    pub(crate) fn record_gated(
        &mut self,
        t: usize,
        config: &AgentConfiguration,
        zsum: Option<f64>,
        may_stop: bool,
    ) -> Option<ExperimentTrace> {
        self.records.push(TraceRecord {
            t,
            positions: config.positions().to_vec(),
            phi: self.field.coverage(config),
            residual: optimality_residual(self.field, config),
            zsum,
        });
        let stop = self.stop;
        let fired = match stop {
            StopRule::Converged { tol, .. } if may_stop && self.squared_error(config) <= tol => {
                Some(StopFired::Converged)
            }
            rule if t >= rule.max_rounds() => Some(StopFired::MaxRounds),
            _ => None,
        };
        fired.map(|f| {
            self.meta.stop_fired = Some(f);
            ExperimentTrace { metadata: self.meta.clone(), records: std::mem::take(&mut self.records) }
        })
    }

    pub(crate) fn record(
        &mut self,
        t: usize,
        config: &AgentConfiguration,
        zsum: Option<f64>,
    ) -> Option<ExperimentTrace> {
        self.record_gated(t, config, zsum, true)
    }
}

/// Largest deviation of the n+1 optimality quantities 2F(x_1),
/// F(x_{i+1}) - F(x_i), 2(F(1) - F(x_n)) from their mean.
pub fn optimality_residual(field: &DensityField, config: &AgentConfiguration) -> f64 {
    let y: Vec<f64> = config.positions().iter().map(|&x| field.cdf_unchecked(x)).collect();
    let n = y.len();
    let mut q = Vec::with_capacity(n + 1);
    q.push(2.0 * y[0]);
    q.extend(y.windows(2).map(|w| w[1] - w[0]));
    q.push(2.0 * (field.total_mass() - y[n - 1]));
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    q.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
}

/// sum_i (x_i - x_i*)^2 against the optimum for the same n.
pub fn squared_error(field: &DensityField, config: &AgentConfiguration) -> Result<f64> {
    let (opt, _) = field.optimal_configuration(config.len())?;
    Ok(config.positions().iter().zip(opt.positions()).map(|(x, o)| (x - o) * (x - o)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceTime {
    Converged(usize),
    /// Criterion unmet at the end of the trace, whose last round is given.
    NotConverged(usize),
}

impl ConvergenceTime {
    pub fn rounds(self) -> usize {
        match self {
            ConvergenceTime::Converged(t) | ConvergenceTime::NotConverged(t) => t,
        }
    }
}

/// First round from which sum_i (x_i - x_i*)^2 <= tol holds through the end
/// of the trace.
pub fn convergence_time(field: &DensityField, trace: &ExperimentTrace, tol: f64) -> Result<ConvergenceTime> {
    let mut first = None;
    for r in trace.records.iter().rev() {
        let config = AgentConfiguration::new(r.positions.clone())?;
        if squared_error(field, &config)? <= tol {
            first = Some(r.t);
        } else {
            break;
        }
    }
    Ok(match first {
        Some(t) => ConvergenceTime::Converged(t),
        None => ConvergenceTime::NotConverged(trace.rounds()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Sorted draws of n independent uniforms.
    #[serde(alias = "random")]
    RandomUniformOrderStatistics,
    AllOne,
    AllZeroPerturbed,
}

impl InitMode {
    pub fn name(self) -> &'static str {
        match self {
            InitMode::RandomUniformOrderStatistics => "random-uniform-order-statistics",
            InitMode::AllOne => "all-one",
            InitMode::AllZeroPerturbed => "all-zero-perturbed",
        }
    }

    /// Starting positions. `all-one` is exact for the static law; the
    /// dynamic law needs distinct starts and gets 1 - (n - i) * 1e-6.
    /// `all-zero-perturbed` is i * 1e-6 for both laws.
    pub fn positions(self, n: usize, law: Law, rng: &mut SplitMix64) -> Result<AgentConfiguration> {
        let x = match self {
            InitMode::RandomUniformOrderStatistics => {
                let mut x: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
                x.sort_by(f64::total_cmp);
                x
            }
            InitMode::AllOne => match law {
                Law::Static => vec![1.0; n],
                Law::Dynamic => (1..=n).map(|i| 1.0 - (n - i) as f64 * START_PERTURBATION).collect(),
            },
            InitMode::AllZeroPerturbed => (1..=n).map(|i| i as f64 * START_PERTURBATION).collect(),
        };
        AgentConfiguration::new(x)
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitMode {
    type Err = CoverageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "random-uniform-order-statistics" => Ok(InitMode::RandomUniformOrderStatistics),
            "all-one" => Ok(InitMode::AllOne),
            "all-zero-perturbed" => Ok(InitMode::AllZeroPerturbed),
            other => Err(CoverageError::Domain(format!("unknown init mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub tol: f64,
    pub max_rounds: usize,
    pub dynamic: DynamicParams,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_rounds: 1_000_000, dynamic: DynamicParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub mean_rounds: f64,
    pub std_rounds: f64,
    pub runs: usize,
    /// Runs that hit the round limit; they count as `max_rounds`.
    pub unconverged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub law: Law,
    pub field: String,
    pub init: InitMode,
    pub seed: u64,
    pub tol: f64,
    pub rows: Vec<SweepRow>,
    pub fit: Option<LogLogFit>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mean_rounds,std_rounds,runs\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.n, fmt_f64(r.mean_rounds), fmt_f64(r.std_rounds), r.runs));
        }
        out
    }
}

/// Least-squares line through (ln x, ln y).
pub fn fit_loglog(points: &[(f64, f64)]) -> Option<LogLogFit> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LogLogFit { slope, intercept: my - slope * mx, r2 })
}

/// Runs one law to the stop rule from the given start.
pub fn run_law(
    law: Law,
    field: &DensityField,
    config0: &AgentConfiguration,
    stop: StopRule,
    dynamic: DynamicParams,
) -> Result<ExperimentTrace> {
    match law {
        Law::Static => run_static(field, config0, stop),
        Law::Dynamic => run_dynamic(field, config0, dynamic, stop),
    }
}

/// Mean and spread of convergence rounds per n, every (n, run) cell seeded
/// independently. Cells run in parallel; results are reduced in (n, run)
/// order.
pub fn sweep(
    law: Law,
    field: &DensityField,
    n_list: &[usize],
    runs: usize,
    init: InitMode,
    seed: u64,
    config: &SweepConfig,
) -> Result<SweepTable> {
    if runs == 0 {
        return Err(CoverageError::Domain("a sweep needs at least one run".into()));
    }
    let cells: Vec<(usize, usize)> =
        n_list.iter().flat_map(|&n| (0..runs).map(move |r| (n, r))).collect();
    let outcomes: Vec<Result<(usize, bool)>> = cells
        .par_iter()
        .map(|&(n, run)| {
            let mut rng = SplitMix64::new(cell_seed(seed, n, run));
            let start = init.positions(n, law, &mut rng)?;
            let stop = StopRule::converged(config.tol, config.max_rounds);
            let trace = run_law(law, field, &start, stop, config.dynamic)?;
            Ok((trace.rounds(), trace.converged()))
        })
        .collect();

    let mut rows = Vec::with_capacity(n_list.len());
    let mut it = outcomes.into_iter();
    for &n in n_list {
        let mut counts = Vec::with_capacity(runs);
        let mut unconverged = 0;
        for _ in 0..runs {
            let (t, ok) = it.next().expect("one outcome per cell")?;
            counts.push(t as f64);
            if !ok {
                unconverged += 1;
            }
        }
        let mean = counts.iter().sum::<f64>() / runs as f64;
        let std = if runs > 1 {
            (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt()
        } else {
            0.0
        };
        rows.push(SweepRow { n, mean_rounds: mean, std_rounds: std, runs, unconverged });
    }
    let fit = fit_loglog(&rows.iter().map(|r| (r.n as f64, r.mean_rounds)).collect::<Vec<_>>());
    Ok(SweepTable { law, field: field.name().to_string(), init, seed, tol: config.tol, rows, fit })
}

/// 3(n+1)^2 ln(sqrt(2) n F^(1) / eps), where F^ is F normalized by rho_min.
pub fn static_round_budget(n: usize, normalized_mass: f64, eps: f64) -> f64 {
    let k = (n + 1) as f64;
    3.0 * k * k * (std::f64::consts::SQRT_2 * n as f64 * normalized_mass / eps).ln()
}

/// Rounds of the static law until every normalized mass coordinate
/// F(x_i)/rho_min is within `eps` of its optimal value.
pub fn static_rounds_to_mass_tolerance(
    field: &DensityField,
    config0: &AgentConfiguration,
    eps: f64,
    max_rounds: usize,
) -> Result<Option<usize>> {
    let rho_min = field.rho_min();
    if rho_min <= 0.0 {
        return Err(CoverageError::Domain("mass normalization needs rho_min > 0".into()));
    }
    let (opt, _) = field.optimal_configuration(config0.len())?;
    let target: Vec<f64> = opt.positions().iter().map(|&x| field.cdf_unchecked(x)).collect();
    let mut config = config0.clone();
    for t in 0..=max_rounds {
        let within = config
            .positions()
            .iter()
            .zip(&target)
            .all(|(&x, y)| (field.cdf_unchecked(x) - y).abs() / rho_min <= eps);
        if within {
            return Ok(Some(t));
        }
        config = static_step(field, &config)?;
    }
    Ok(None)
}
