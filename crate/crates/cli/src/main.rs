//! Command-line front end: scenario generation, single-solver runs, and
//! three-way comparisons, all writing the same artifact formats as the
//! library harness.
//!
//! Exit codes: 0 success, 2 usage, 3 power budget infeasible, 4 solver
//! diverged or stalled, 5 no route, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamflow_core::adal::{AdalConfig, ScalingMode};
use beamflow_core::harness::{
    benchmark_spec, run_compare_selected, write_artifacts, CompareOutcome, CompareSpec,
    HarnessError, SolverChoice,
};
use beamflow_core::netmodel::{grid_scenario, GridSpec, NetworkScenario};
use beamflow_core::primal_dual::PrimalDualConfig;
use beamflow_core::problem::CommoditySet;
use beamflow_core::SolveError;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_DIVERGED: u8 = 4;
const EXIT_NO_ROUTE: u8 = 5;

#[derive(Parser)]
#[command(name = "beamflow", version, about = "Directional-network power allocation solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a grid scenario to a JSON file.
    Generate(GenerateArgs),
    /// Run one solver on an instance and write its artifacts.
    Solve(SolveArgs),
    /// Race solvers on one instance and write a comparison report.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Lattice spacing in meters.
    #[arg(long, default_value_t = 1000.0)]
    spacing: f64,
    /// Uniform positional jitter amplitude in meters.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Station position in meters, e.g. `--station -500 2000`; default is the
    /// node centroid. Odd unjittered grids need an explicit position (the
    /// centroid lands on the middle node).
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["X", "Y"])]
    station: Option<Vec<f64>>,
    /// Output scenario file.
    #[arg(long)]
    out: PathBuf,
}

/// Where the instance comes from: a scenario/commodities file pair, or the
/// stock benchmark.
#[derive(Args)]
#[command(group = clap::ArgGroup::new("instance").required(true).args(["scenario", "benchmark"]))]
struct InstanceArgs {
    /// Scenario JSON file.
    #[arg(long, requires = "commodities")]
    scenario: Option<PathBuf>,
    /// Commodities JSON file: a list of {"source", "sink", "rate"} records.
    #[arg(long, requires = "scenario")]
    commodities: Option<PathBuf>,
    /// Stock unjittered 6x6 instance with two crossing nine-unit demands and
    /// tuned solver settings.
    #[arg(long)]
    benchmark: bool,
}

impl InstanceArgs {
    fn resolve(&self) -> Result<CompareSpec, Failure> {
        if self.benchmark {
            return Ok(benchmark_spec());
        }
        let scenario_path = self.scenario.as_ref().expect("clap enforces the group");
        let commodities_path = self.commodities.as_ref().expect("clap requires it");
        let scenario = NetworkScenario::load(scenario_path).map_err(HarnessError::from)?;
        let commodities = CommoditySet::load(commodities_path).map_err(HarnessError::from)?;
        Ok(CompareSpec {
            scenario,
            commodities,
            pd: PrimalDualConfig::default(),
            adal: AdalConfig::default(),
        })
    }
}

#[derive(Args)]
struct PdArgs {
    /// Primal-dual step size.
    #[arg(long)]
    pd_alpha: Option<f64>,
    #[arg(long)]
    pd_max_iters: Option<usize>,
    #[arg(long)]
    pd_violation_tol: Option<f64>,
    /// Stopping-check and trace cadence in iterations.
    #[arg(long)]
    pd_trace_every: Option<usize>,
}

impl PdArgs {
    fn apply(&self, config: &mut PrimalDualConfig) {
        if let Some(v) = self.pd_alpha {
            config.alpha = v;
        }
        if let Some(v) = self.pd_max_iters {
            config.max_iters = v;
        }
        if let Some(v) = self.pd_violation_tol {
            config.violation_tol = v;
        }
        if let Some(v) = self.pd_trace_every {
            config.trace_every = v;
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    ConstantDiagonal,
    FullDiagonal,
    Unscaled,
}

impl From<ScalingArg> for ScalingMode {
    fn from(arg: ScalingArg) -> ScalingMode {
        match arg {
            ScalingArg::ConstantDiagonal => ScalingMode::ConstantDiagonal,
            ScalingArg::FullDiagonal => ScalingMode::FullDiagonal,
            ScalingArg::Unscaled => ScalingMode::Unscaled,
        }
    }
}

#[derive(Args)]
struct AdalArgs {
    /// Augmented Lagrangian penalty coefficient.
    #[arg(long)]
    rho: Option<f64>,
    /// Relaxation factor in (0, 1/max_degree); default 0.9/max_degree.
    #[arg(long)]
    tau: Option<f64>,
    /// Inner projected-gradient stopping residual.
    #[arg(long)]
    inner_tol: Option<f64>,
    #[arg(long)]
    inner_max_iters: Option<usize>,
    #[arg(long)]
    armijo_step: Option<f64>,
    #[arg(long)]
    armijo_beta: Option<f64>,
    #[arg(long)]
    armijo_sigma: Option<f64>,
    /// Inner-direction preconditioner.
    #[arg(long, value_enum)]
    scaling: Option<ScalingArg>,
    #[arg(long)]
    adal_max_outer: Option<usize>,
    #[arg(long)]
    adal_violation_tol: Option<f64>,
    /// Worker threads for the per-node solves; 0 means one per core.
    #[arg(long, env = "BEAMFLOW_THREADS")]
    threads: Option<usize>,
}

impl AdalArgs {
    fn apply(&self, config: &mut AdalConfig) {
        if let Some(v) = self.rho {
            config.rho = v;
        }
        if let Some(v) = self.tau {
            config.tau = Some(v);
        }
        if let Some(v) = self.inner_tol {
            config.inner_tol = v;
        }
        if let Some(v) = self.inner_max_iters {
            config.inner_max_iters = v;
        }
        if let Some(v) = self.armijo_step {
            config.armijo.initial_step = v;
        }
        if let Some(v) = self.armijo_beta {
            config.armijo.beta = v;
        }
        if let Some(v) = self.armijo_sigma {
            config.armijo.sigma = v;
        }
        if let Some(v) = self.scaling {
            config.scaling = v.into();
        }
        if let Some(v) = self.adal_max_outer {
            config.max_outer_iters = v;
        }
        if let Some(v) = self.adal_violation_tol {
            config.violation_tol = v;
        }
        if let Some(v) = self.threads {
            config.threads = v;
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Pd,
    Adal,
    Ospf,
}

impl From<SolverArg> for SolverChoice {
    fn from(arg: SolverArg) -> SolverChoice {
        match arg {
            SolverArg::Pd => SolverChoice::Pd,
            SolverArg::Adal => SolverChoice::Adal,
            SolverArg::Ospf => SolverChoice::Ospf,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_enum)]
    solver: SolverArg,
    /// Output directory for summary.json, trace and power CSVs.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pd: PdArgs,
    #[command(flatten)]
    adal: AdalArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Which solvers to race; at least two.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["pd", "adal", "ospf"])]
    solvers: Vec<SolverArg>,
    /// Output directory for report.json, trace and power CSVs.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pd: PdArgs,
    #[command(flatten)]
    adal: AdalArgs,
}

/// A failed run: what to print and what to exit with.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(err: HarnessError) -> Failure {
        let code = match &err {
            HarnessError::Solve(SolveError::Diverged { .. })
            | HarnessError::Solve(SolveError::LineSearchFailure { .. }) => EXIT_DIVERGED,
            HarnessError::Route(_) => EXIT_NO_ROUTE,
            _ => EXIT_ERROR,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Solve(args) => cmd_solve(&args),
        Command::Compare(args) => cmd_compare(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<u8, Failure> {
    let station = args.station.as_ref().map(|xy| [xy[0], xy[1]]);
    let spec = GridSpec {
        rows: args.rows,
        cols: args.cols,
        spacing_m: args.spacing,
        jitter_m: args.jitter,
        seed: args.seed,
        station,
        ..GridSpec::default()
    };
    let scenario = grid_scenario(&spec).map_err(HarnessError::from)?;
    scenario.save(&args.out).map_err(HarnessError::from)?;
    println!(
        "wrote {} ({} nodes, {} arcs)",
        args.out.display(),
        scenario.nodes.len(),
        scenario.edges.len()
    );
    Ok(0)
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, Failure> {
    let mut spec = args.instance.resolve()?;
    args.pd.apply(&mut spec.pd);
    args.adal.apply(&mut spec.adal);

    let choice: SolverChoice = args.solver.into();
    let outcome = run_compare_selected(&spec, &[choice])?;
    write_solve_artifacts(&outcome, &args.out)?;

    let summary = &outcome.report.solvers[0];
    println!(
        "{}: stop={} iterations={} objective={:.6} violation={:.3e}",
        summary.solver, summary.stop, summary.iterations, summary.objective, summary.violation
    );

    if !summary.all_feasible {
        let over: Vec<String> = outcome.powers[0]
            .nodes
            .iter()
            .filter(|n| !n.feasible)
            .map(|n| n.node_id.to_string())
            .collect();
        eprintln!(
            "error: power budget exceeded at node{} {}",
            if over.len() == 1 { "" } else { "s" },
            over.join(", ")
        );
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(0)
}

/// Single-solver artifacts: `summary.json` plus the same per-solver CSVs the
/// comparison writes.
fn write_solve_artifacts(outcome: &CompareOutcome, dir: &Path) -> Result<(), Failure> {
    let io_failure = |path: &Path, source: std::io::Error| {
        Failure::from(HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;

    let summary = &outcome.report.solvers[0];
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    let summary_path = dir.join("summary.json");
    std::fs::write(&summary_path, text).map_err(|e| io_failure(&summary_path, e))?;

    let name = outcome.traces[0].solver.name();
    let trace_path = dir.join(format!("trace_{name}.csv"));
    outcome.traces[0]
        .write_csv(&trace_path)
        .map_err(|e| io_failure(&trace_path, e))?;
    let power_path = dir.join(format!("power_{name}.csv"));
    outcome.powers[0]
        .write_csv(&power_path)
        .map_err(|e| io_failure(&power_path, e))?;

    if let Some(armijo) = &outcome.armijo {
        let hist_path = dir.join("armijo_hist.csv");
        armijo
            .write_histogram_csv(&hist_path)
            .map_err(|e| io_failure(&hist_path, e))?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<u8, Failure> {
    let mut selection: Vec<SolverChoice> = Vec::new();
    for arg in &args.solvers {
        let choice: SolverChoice = (*arg).into();
        if !selection.contains(&choice) {
            selection.push(choice);
        }
    }
    if selection.len() < 2 {
        return Err(Failure::usage(
            "compare needs at least two distinct solvers; use solve for a single one",
        ));
    }

    let mut spec = args.instance.resolve()?;
    args.pd.apply(&mut spec.pd);
    args.adal.apply(&mut spec.adal);

    let outcome = run_compare_selected(&spec, &selection)?;
    write_artifacts(&outcome, &args.out)?;

    for summary in &outcome.report.solvers {
        println!(
            "{}: stop={} iterations={} objective={:.6} violation={:.3e} intra_power_w={:.6}",
            summary.solver,
            summary.stop,
            summary.iterations,
            summary.objective,
            summary.violation,
            summary.intra_power_w
        );
    }
    println!("report: {}", args.out.join("report.json").display());
    Ok(0)
}
