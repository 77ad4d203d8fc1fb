//! Side-by-side evaluation of the solvers, plus a brute-force reference
//! optimizer for instances small enough to enumerate.
//!
//! [`run_compare`] solves one instance with the primal-dual method, the
//! augmented Lagrangian method, and the shortest-path baseline, then prices
//! all three with the same power model so the results are directly
//! comparable. [`write_artifacts`] lays the outcome down as a JSON report
//! plus per-solver CSV files, none of which embed timestamps, so reruns of
//! the same spec produce byte-identical artifacts.
//!
//! [`oracle_solve_small`] is the reference optimizer: it enumerates every
//! simple path of every commodity and minimizes over path rates directly.
//! Cycles only ever raise the objective, so the path formulation reaches the
//! same minimum as the arc formulation; no solver machinery is shared, which
//! is the point.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adal::{self, AdalConfig, ArmijoSummary};
use crate::netmodel::{grid_scenario, GridSpec, NetworkScenario, ScenarioError};
use crate::ospf::{self, EdgeMetric, RouteError};
use crate::primal_dual::{self, PrimalDualConfig};
use crate::problem::{
    build_problem, Commodity, CommoditySet, FlowState, PowerReport, ProblemError, ProblemQ,
};
use crate::trace::{SolveTrace, SolverKind, StopReason, TracePoint};
use crate::SolveError;

/// The oracle gives up once a commodity admits more simple paths than this.
pub const ORACLE_PATH_CAP: usize = 10_000;

/// Violation thresholds reported as iteration milestones, with their labels.
pub const MILESTONES: [(&str, f64); 3] = [("1e-1", 1e-1), ("1e-2", 1e-2), ("1e-3", 1e-3)];

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("commodity {index} admits more than {cap} simple paths")]
    TooManyPaths { index: usize, cap: usize },
    #[error("commodity {index} has no path from source to sink")]
    NoPath { index: usize },
}

/// Reference optimum for a small instance.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub flows: FlowState,
    pub objective: f64,
    /// Enumerated arc-id paths per commodity.
    pub paths: Vec<Vec<Vec<usize>>>,
    /// Rate placed on each path, aligned with `paths`.
    pub path_rates: Vec<Vec<f64>>,
}

/// All simple source-to-sink paths as arc-id lists; `None` once more than
/// `cap` are found.
fn enumerate_arc_paths(
    problem: &ProblemQ,
    source: usize,
    sink: usize,
    cap: usize,
) -> Option<Vec<Vec<usize>>> {
    fn recurse(
        problem: &ProblemQ,
        sink: usize,
        node: usize,
        arcs: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
        found: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> bool {
        if node == sink {
            if found.len() == cap {
                return false;
            }
            found.push(arcs.clone());
            return true;
        }
        for &a in problem.topology().out_arcs(node) {
            let next = problem.topology().arc(a).to;
            if on_path[next] {
                continue;
            }
            on_path[next] = true;
            arcs.push(a);
            let ok = recurse(problem, sink, next, arcs, on_path, found, cap);
            arcs.pop();
            on_path[next] = false;
            if !ok {
                return false;
            }
        }
        true
    }

    let mut on_path = vec![false; problem.num_nodes()];
    on_path[source] = true;
    let mut found = Vec::new();
    let ok = recurse(
        problem,
        sink,
        source,
        &mut Vec::new(),
        &mut on_path,
        &mut found,
        cap,
    );
    ok.then_some(found)
}

/// Marginal cost of pushing an extra unit along the arc path at the given
/// flows: the sum of the arcs' congestion derivatives.
pub fn path_marginal_cost(problem: &ProblemQ, flows: &FlowState, arc_path: &[usize]) -> f64 {
    arc_path
        .iter()
        .map(|&a| std::f64::consts::LN_2 * problem.weight(a) * flows.arc_total(a).exp2())
        .sum()
}

fn flows_from_path_rates(
    problem: &ProblemQ,
    paths: &[Vec<Vec<usize>>],
    rates: &[Vec<f64>],
) -> FlowState {
    let mut flows = problem.zero_flows();
    for m in 0..paths.len() {
        for (path, &y) in paths[m].iter().zip(&rates[m]) {
            for &a in path {
                flows.set(a, m, flows.get(a, m) + y);
            }
        }
    }
    flows
}

/// Shifts rate between two paths of one commodity to the exact pairwise
/// optimum, updating `flows` in place. The objective restricted to such a
/// shift is strictly convex, so bisection on its derivative is exact.
fn pair_exchange(
    problem: &ProblemQ,
    flows: &mut FlowState,
    paths: &[Vec<usize>],
    rates: &mut [f64],
    m: usize,
    p: usize,
    q: usize,
) {
    let only_p: Vec<usize> = paths[p]
        .iter()
        .copied()
        .filter(|a| !paths[q].contains(a))
        .collect();
    let only_q: Vec<usize> = paths[q]
        .iter()
        .copied()
        .filter(|a| !paths[p].contains(a))
        .collect();
    if only_p.is_empty() && only_q.is_empty() {
        return;
    }
    // delta moves rate from p to q.
    let (lo, hi) = (-rates[q], rates[p]);
    if hi <= lo {
        return;
    }
    let derivative = |delta: f64| -> f64 {
        let up: f64 = only_q
            .iter()
            .map(|&a| problem.weight(a) * (flows.arc_total(a) + delta).exp2())
            .sum();
        let down: f64 = only_p
            .iter()
            .map(|&a| problem.weight(a) * (flows.arc_total(a) - delta).exp2())
            .sum();
        std::f64::consts::LN_2 * (up - down)
    };

    let delta = if derivative(lo) >= 0.0 {
        lo
    } else if derivative(hi) <= 0.0 {
        hi
    } else {
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if derivative(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    if delta == 0.0 {
        return;
    }
    rates[p] = (rates[p] - delta).max(0.0);
    rates[q] = (rates[q] + delta).max(0.0);
    for &a in &only_p {
        flows.set(a, m, (flows.get(a, m) - delta).max(0.0));
    }
    for &a in &only_q {
        flows.set(a, m, (flows.get(a, m) + delta).max(0.0));
    }
}

/// Minimizes the objective over per-path rates by sweeping exact pairwise
/// exchanges until a full sweep stops improving. Pairwise shifts span the
/// tangent cone of the rate simplex, so a sweep with no improvement is a
/// global optimum of this convex problem, up to the sweep tolerance.
pub fn oracle_solve_small(problem: &ProblemQ) -> Result<OracleSolution, OracleError> {
    let mut paths = Vec::with_capacity(problem.num_commodities());
    for (index, c) in problem.commodities().iter().enumerate() {
        let source = problem.scenario().node_index(c.source).expect("validated");
        let sink = problem.scenario().node_index(c.sink).expect("validated");
        let found = enumerate_arc_paths(problem, source, sink, ORACLE_PATH_CAP).ok_or(
            OracleError::TooManyPaths {
                index,
                cap: ORACLE_PATH_CAP,
            },
        )?;
        if found.is_empty() {
            return Err(OracleError::NoPath { index });
        }
        paths.push(found);
    }

    let mut rates: Vec<Vec<f64>> = paths
        .iter()
        .zip(problem.commodities())
        .map(|(ps, c)| vec![c.rate / ps.len() as f64; ps.len()])
        .collect();
    let mut flows = flows_from_path_rates(problem, &paths, &rates);

    for _ in 0..10_000 {
        let before = problem.objective(&flows);
        for m in 0..paths.len() {
            for p in 0..paths[m].len() {
                for q in (p + 1)..paths[m].len() {
                    pair_exchange(problem, &mut flows, &paths[m], &mut rates[m], m, p, q);
                }
            }
        }
        // Rebuild to shed the drift of incremental updates.
        flows = flows_from_path_rates(problem, &paths, &rates);
        let after = problem.objective(&flows);
        if before - after <= 1e-13 * before.abs() {
            break;
        }
    }

    let objective = problem.objective(&flows);
    Ok(OracleSolution {
        flows,
        objective,
        paths,
        path_rates: rates,
    })
}

/// One instance plus the solver settings to race on it.
#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub scenario: NetworkScenario,
    pub commodities: CommoditySet,
    pub pd: PrimalDualConfig,
    pub adal: AdalConfig,
}

/// The stock benchmark: an unjittered 6 by 6 lattice with two crossing
/// demands between opposite corners, nine rate units each.
pub fn benchmark_spec() -> CompareSpec {
    let scenario = grid_scenario(&GridSpec::default()).expect("stock grid is valid");
    let commodities = CommoditySet::new(vec![
        Commodity {
            source: 1,
            sink: 36,
            rate: 9.0,
        },
        Commodity {
            source: 6,
            sink: 31,
            rate: 9.0,
        },
    ])
    .expect("stock demands are valid");
    CompareSpec {
        scenario,
        commodities,
        // The averaged iterate needs tens of millions of cheap steps to
        // certify feasibility at 1e-3 (it forgets the startup transient at
        // O(1/k)); the step size sits safely below the stability edge of the
        // stiffest, most loaded arcs.
        pd: PrimalDualConfig {
            alpha: 3e-3,
            max_iters: 80_000_000,
            violation_tol: 1e-3,
            trace_every: 1000,
        },
        // Outer feasibility stalls at a few multiples of inner_tol, so the
        // default inner tolerance cannot certify 1e-3 here.
        adal: AdalConfig {
            inner_tol: 1e-4,
            ..AdalConfig::default()
        },
    }
}

/// Iterations needed to reach one violation threshold; `None` if the run
/// never got there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    pub threshold: String,
    pub iters: Option<usize>,
}

/// One solver's results on the shared instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: String,
    pub objective: f64,
    pub violation: f64,
    pub iterations: usize,
    pub stop: String,
    pub milestones: Vec<Milestone>,
    /// Power spent on internal beams, watts, network-wide.
    pub intra_power_w: f64,
    /// Power left for station beams, watts, network-wide.
    pub station_power_w: f64,
    /// Combined station-link SNR under the recovered powers.
    pub station_snr: f64,
    /// Aggregate station uplink rate, bits/s.
    pub station_rate_bps: f64,
    pub all_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub solvers: Vec<SolverSummary>,
}

impl ComparisonReport {
    pub fn to_json_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Everything `run_compare` produces: the serializable report plus the full
/// traces and power breakdowns behind it, ordered pd, adal, ospf.
#[derive(Debug)]
pub struct CompareOutcome {
    pub problem: ProblemQ,
    pub report: ComparisonReport,
    pub traces: Vec<SolveTrace>,
    pub powers: Vec<PowerReport>,
    /// Final flows per solver, aligned with `traces`.
    pub flows: Vec<FlowState>,
    /// Line-search effort of the augmented Lagrangian run, when it ran.
    pub armijo: Option<ArmijoSummary>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error("failed writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn summarize(problem: &ProblemQ, flows: &FlowState, trace: &SolveTrace) -> (SolverSummary, PowerReport) {
    let power = problem.recover_powers(flows);
    let station_snr = problem.station_received_snr(&power);
    let station_power_w: f64 = power.nodes.iter().map(|n| n.station_power_w).sum();
    let milestones = MILESTONES
        .iter()
        .map(|(label, threshold)| Milestone {
            threshold: label.to_string(),
            iters: trace.iters_to_violation(*threshold),
        })
        .collect();
    let summary = SolverSummary {
        solver: trace.solver.name().to_string(),
        objective: problem.objective(flows),
        violation: problem.violation(flows),
        iterations: trace.iterations,
        stop: trace.stop.name().to_string(),
        milestones,
        intra_power_w: power.total_intra_power_w,
        station_power_w,
        station_snr,
        station_rate_bps: problem.station_rate_bps(&power),
        all_feasible: power.all_feasible,
    };
    (summary, power)
}

/// One of the three methods the harness can race.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Pd,
    Adal,
    Ospf,
}

impl SolverChoice {
    pub const ALL: [SolverChoice; 3] = [SolverChoice::Pd, SolverChoice::Adal, SolverChoice::Ospf];

    pub fn name(self) -> &'static str {
        match self {
            SolverChoice::Pd => "pd",
            SolverChoice::Adal => "adal",
            SolverChoice::Ospf => "ospf",
        }
    }

    pub fn parse(text: &str) -> Option<SolverChoice> {
        match text {
            "pd" => Some(SolverChoice::Pd),
            "adal" => Some(SolverChoice::Adal),
            "ospf" => Some(SolverChoice::Ospf),
            _ => None,
        }
    }
}

/// Solves the instance with all three methods and prices the results on the
/// shared power model.
pub fn run_compare(spec: &CompareSpec) -> Result<CompareOutcome, HarnessError> {
    run_compare_selected(spec, &SolverChoice::ALL)
}

/// Like [`run_compare`] but only runs the listed methods. The report always
/// keeps the canonical pd, adal, ospf order regardless of selection order.
pub fn run_compare_selected(
    spec: &CompareSpec,
    selection: &[SolverChoice],
) -> Result<CompareOutcome, HarnessError> {
    if selection.is_empty() {
        return Err(HarnessError::Solve(SolveError::InvalidConfig(
            "no solvers selected".into(),
        )));
    }
    let problem = build_problem(spec.scenario.clone(), spec.commodities.clone())?;

    let mut solvers = Vec::new();
    let mut traces = Vec::new();
    let mut powers = Vec::new();
    let mut all_flows = Vec::new();
    let mut armijo = None;
    for choice in SolverChoice::ALL {
        if !selection.contains(&choice) {
            continue;
        }
        let (flows, trace) = match choice {
            SolverChoice::Pd => {
                let outcome = primal_dual::solve(&problem, &spec.pd)?;
                (outcome.flows, outcome.trace)
            }
            SolverChoice::Adal => {
                let outcome = adal::solve(&problem, &spec.adal)?;
                armijo = Some(outcome.armijo);
                (outcome.flows, outcome.trace)
            }
            SolverChoice::Ospf => {
                let route = ospf::route_ospf(&problem, EdgeMetric::Distance)?;
                let trace = SolveTrace {
                    solver: SolverKind::Ospf,
                    points: vec![TracePoint {
                        iter: 0,
                        objective: problem.objective(&route.flows),
                        violation: problem.violation(&route.flows),
                        avg_objective: None,
                        avg_violation: None,
                        armijo: None,
                        elapsed_s: 0.0,
                    }],
                    stop: StopReason::Direct,
                    iterations: 0,
                };
                (route.flows, trace)
            }
        };
        let (summary, power) = summarize(&problem, &flows, &trace);
        solvers.push(summary);
        powers.push(power);
        traces.push(trace);
        all_flows.push(flows);
    }

    Ok(CompareOutcome {
        problem,
        report: ComparisonReport { solvers },
        traces,
        powers,
        flows: all_flows,
        armijo,
    })
}

/// Writes `report.json`, per-solver `trace_*.csv` and `power_*.csv`, and
/// `armijo_hist.csv` into the directory, creating it if needed.
pub fn write_artifacts(outcome: &CompareOutcome, dir: &Path) -> Result<(), HarnessError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let report_path = dir.join("report.json");
    std::fs::write(&report_path, outcome.report.to_json_string()).map_err(io_err(&report_path))?;

    for (trace, power) in outcome.traces.iter().zip(&outcome.powers) {
        let name = trace.solver.name();
        let trace_path = dir.join(format!("trace_{name}.csv"));
        trace.write_csv(&trace_path).map_err(io_err(&trace_path))?;
        let power_path = dir.join(format!("power_{name}.csv"));
        power.write_csv(&power_path).map_err(io_err(&power_path))?;
    }

    if let Some(armijo) = &outcome.armijo {
        let hist_path = dir.join("armijo_hist.csv");
        armijo
            .write_histogram_csv(&hist_path)
            .map_err(io_err(&hist_path))?;
    }
    Ok(())
}
