//! `linecover`: optimal coverage experiments on the unit interval.
//!
//! Exit codes: 0 ok, 2 usage, 3 parse, 4 numeric. Failures print a JSON
//! object `{"error": kind, "message": ...}` on stderr.

mod scenario;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linecover::harness::{fmt_f64, run_law, sweep, SweepConfig};
use linecover::lifted::LiftedChain;
use linecover::rng::SplitMix64;
use linecover::spectral::{build_system, contraction_bound, second_modulus, spectrum};
use linecover::{AgentConfiguration, ChainVariant, CoverageError, InitMode, Law, MovementRule, StopRule};
use serde_json::json;

use scenario::{load_density, Init, Scenario};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Core(CoverageError),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Core(CoverageError::Parse(_)) => 3,
            CliError::Core(_) | CliError::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self.code() {
            2 => "usage",
            3 => "parse",
            _ => "numeric",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Parse(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

impl From<CoverageError> for CliError {
    fn from(e: CoverageError) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "linecover", version, about = "Optimal coverage of a density on [0, 1] by mobile agents")]
struct Cli {
    /// Directory for CSV/JSON artifacts. Nothing is written when unset.
    #[arg(long, global = true, env = "LINECOVER_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal positions and optimal coverage for n agents.
    Optimal {
        /// Preset name (uniform, quadratic) or density JSON file.
        #[arg(long, default_value = "uniform")]
        density: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
    },
    /// Run one law and emit a trace.
    Simulate(RunArgs),
    /// Mean convergence rounds over seeded runs for each n.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 40)]
        runs: usize,
    },
    /// Second and last eigenvalues of the gap operator for a range of sizes.
    Spectral {
        #[arg(long, default_value_t = 3)]
        k_min: usize,
        #[arg(long, default_value_t = 50)]
        k_max: usize,
    },
    /// Transition matrix, stationary distribution and mixing of the lifted chain.
    Chain {
        #[arg(long)]
        n: usize,
        /// Round-trip estimate; defaults to n.
        #[arg(long)]
        big_u: Option<usize>,
        #[arg(long, default_value = "uniformized")]
        variant: ChainVariant,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_steps: usize,
    },
}

/// Scenario file plus flag overrides.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    law: Option<Law>,
    #[arg(long)]
    density: Option<String>,
    /// Agent count; `sweep` takes a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// random, all-one or all-zero-perturbed.
    #[arg(long, conflicts_with = "positions")]
    init: Option<InitMode>,
    /// Explicit comma-separated start.
    #[arg(long, value_delimiter = ',')]
    positions: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    big_u: Option<usize>,
    #[arg(long)]
    variant: Option<ChainVariant>,
    #[arg(long)]
    rule: Option<MovementRule>,
}

impl RunArgs {
    fn scenario(&self) -> Result<Scenario, CliError> {
        let mut s = match &self.scenario {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                Scenario::from_json(&text)?
            }
            None => Scenario::default(),
        };
        if let Some(v) = self.law {
            s.law = v;
        }
        if let Some(v) = &self.density {
            s.density = v.clone();
        }
        if let Some(&v) = self.n.first() {
            s.n = v;
        }
        if let Some(v) = self.init {
            s.init = Init::Mode(v);
        }
        if let Some(v) = &self.positions {
            s.init = Init::Positions(v.clone());
            if self.n.is_empty() {
                s.n = v.len();
            }
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.tol {
            s.stop.tol = v;
        }
        if let Some(v) = self.max_rounds {
            s.stop.max_rounds = v;
        }
        if self.big_u.is_some() {
            s.dynamic.big_u = self.big_u;
        }
        if let Some(v) = self.variant {
            s.dynamic.variant = v;
        }
        if let Some(v) = self.rule {
            s.dynamic.rule = v;
        }
        Ok(s)
    }
}

fn write_artifact(dir: Option<&Path>, name: &str, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn cmd_optimal(density: &str, n: usize) -> Result<String, CliError> {
    let field = load_density(density)?;
    let (opt, phi_star) = field.optimal_configuration(n)?;
    Ok(pretty(&json!({
        "density": field.name(),
        "n": n,
        "positions": opt.positions(),
        "phi_star": phi_star,
    })))
}

fn cmd_simulate(args: &RunArgs, out: Option<&Path>) -> Result<String, CliError> {
    if args.n.len() > 1 {
        return Err(CliError::Usage("simulate takes a single --n".into()));
    }
    let s = args.scenario()?;
    s.validate()?;
    let field = load_density(&s.density)?;
    let start = match &s.init {
        Init::Positions(x) => AgentConfiguration::new(x.clone())?,
        Init::Mode(mode) => mode.positions(s.n, s.law, &mut SplitMix64::new(s.seed))?,
    };
    let stop = StopRule::converged(s.stop.tol, s.stop.max_rounds);
    let mut trace = run_law(s.law, &field, &start, stop, s.dynamic.into())?;
    trace.metadata.seed = Some(s.seed);
    let summary = trace.summary(&field)?;
    write_artifact(out, "scenario.json", &s.canonical())?;
    write_artifact(out, "trace.csv", &trace.to_csv())?;
    let mut report = serde_json::to_value(&summary).expect("summary serializes");
    report["converged"] = json!(trace.converged());
    let text = pretty(&report);
    write_artifact(out, "summary.json", &text)?;
    Ok(text)
}

fn cmd_sweep(args: &RunArgs, runs: usize, out: Option<&Path>) -> Result<String, CliError> {
    let mut s = args.scenario()?;
    let n_list: Vec<usize> = if args.n.is_empty() { vec![s.n] } else { args.n.clone() };
    if runs == 0 {
        return Err(CliError::Usage("--runs must be >= 1".into()));
    }
    let init = match s.init {
        Init::Mode(m) => m,
        Init::Positions(_) => return Err(CliError::Usage("sweeps need an init mode, not positions".into())),
    };
    for &n in &n_list {
        s.n = n;
        s.validate()?;
    }
    let field = load_density(&s.density)?;
    let config = SweepConfig { tol: s.stop.tol, max_rounds: s.stop.max_rounds, dynamic: s.dynamic.into() };
    let table = sweep(s.law, &field, &n_list, runs, init, s.seed, &config)?;
    let csv = table.to_csv();
    write_artifact(out, "sweep.csv", &csv)?;
    write_artifact(out, "sweep.json", &pretty(&serde_json::to_value(&table).expect("table serializes")))?;
    Ok(csv.trim_end().to_string())
}

fn cmd_spectral(k_min: usize, k_max: usize, out: Option<&Path>) -> Result<String, CliError> {
    if k_min < 3 || k_max < k_min {
        return Err(CliError::Usage(format!("need 3 <= k-min <= k-max, got {k_min}..{k_max}")));
    }
    let mut csv = String::from("k,lambda_2,lambda_k,bound,margin\n");
    for k in k_min..=k_max {
        let eig = spectrum(&build_system(k)?)?;
        let bound = contraction_bound(k);
        let margin = bound - second_modulus(&eig);
        csv.push_str(&format!(
            "{k},{},{},{},{}\n",
            fmt_f64(eig[k - 2]),
            fmt_f64(eig[0]),
            fmt_f64(bound),
            fmt_f64(margin)
        ));
    }
    write_artifact(out, "spectral.csv", &csv)?;
    Ok(csv.trim_end().to_string())
}

fn cmd_chain(
    n: usize,
    big_u: Option<usize>,
    variant: ChainVariant,
    eps: f64,
    max_steps: usize,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let big_u = big_u.unwrap_or(n);
    let chain = LiftedChain::build(n, big_u, variant)?;
    let pi = chain.stationary()?;
    let profile = chain.mixing_profile(eps, max_steps)?;
    let rows: Vec<&[f64]> = (0..chain.states()).map(|i| chain.row(i)).collect();
    let report = json!({
        "n": n,
        "big_u": big_u,
        "variant": variant,
        "k": rows,
        "pi": pi,
        "stationarity_residual": chain.stationarity_residual(&pi),
        "eps": eps,
        "t_mix": profile.t_mix,
        "vcurve": profile.vcurve,
        "spreading_min": chain.spreading_min(),
    });
    write_artifact(out, "chain_k.csv", &chain.to_csv())?;
    let mut pi_csv = String::from("state,pi\n");
    for (i, p) in pi.iter().enumerate() {
        let label = if i < n { format!("{}", i + 1) } else { format!("{}'", i - n + 1) };
        pi_csv.push_str(&format!("{label},{}\n", fmt_f64(*p)));
    }
    write_artifact(out, "chain_pi.csv", &pi_csv)?;
    let mut v_csv = String::from("t,v\n");
    for (t, v) in profile.vcurve.iter().enumerate() {
        v_csv.push_str(&format!("{t},{}\n", fmt_f64(*v)));
    }
    write_artifact(out, "chain_mixing.csv", &v_csv)?;
    Ok(pretty(&report))
}

fn run(cli: Cli) -> Result<String, CliError> {
    let out = cli.out_dir.as_deref();
    match cli.command {
        Command::Optimal { density, n } => cmd_optimal(&density, n as usize),
        Command::Simulate(args) => cmd_simulate(&args, out),
        Command::Sweep { run, runs } => cmd_sweep(&run, runs, out),
        Command::Spectral { k_min, k_max } => cmd_spectral(k_min, k_max, out),
        Command::Chain { n, big_u, variant, eps, max_steps } => cmd_chain(n, big_u, variant, eps, max_steps, out),
    }
}

fn fail(err: CliError) -> ExitCode {
    let body = json!({ "error": err.kind(), "code": err.code(), "message": err.message() });
    eprintln!("{body}");
    ExitCode::from(err.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::Usage(e.to_string().trim_end().to_string())),
    };
    match run(cli) {
        Ok(text) => {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}
