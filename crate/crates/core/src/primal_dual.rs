//! First-order primal-dual solver with iterate averaging.
//!
//! Each iteration takes one projected subgradient step on the flows and one
//! ascent step on the per-node prices, both computed from the same snapshot,
//! so every update only needs state from the arc's own endpoints. The raw
//! iterates oscillate; the running average of them is what converges, and it
//! is what `solve` returns.

use crate::audit::{AccessRecorder, NoAudit};
use crate::problem::{DualState, FlowState, ProblemQ};
use crate::trace::{SolveTrace, SolverKind, StopReason, TracePoint};
use crate::SolveError;

#[derive(Debug, Clone)]
pub struct PrimalDualConfig {
    /// Step size shared by the flow and price updates.
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once the averaged iterate's violation drops this low.
    pub violation_tol: f64,
    /// Metrics and the stopping rule are evaluated every this many
    /// iterations; the trace records points at the same cadence.
    pub trace_every: usize,
}

impl Default for PrimalDualConfig {
    fn default() -> Self {
        PrimalDualConfig {
            alpha: 1e-3,
            max_iters: 500_000,
            violation_tol: 1e-3,
            trace_every: 100,
        }
    }
}

impl PrimalDualConfig {
    fn validate(&self) -> Result<(), SolveError> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(SolveError::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.max_iters == 0 {
            return Err(SolveError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !self.violation_tol.is_finite() || self.violation_tol < 0.0 {
            return Err(SolveError::InvalidConfig(format!(
                "violation_tol must be nonnegative, got {}",
                self.violation_tol
            )));
        }
        if self.trace_every == 0 {
            return Err(SolveError::InvalidConfig("trace_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PrimalDualState {
    pub flows: FlowState,
    pub prices: DualState,
    /// Running mean of all flow iterates so far.
    pub avg_flows: FlowState,
    /// Completed iterations.
    pub iter: usize,
}

impl PrimalDualState {
    pub fn new(problem: &ProblemQ) -> Self {
        PrimalDualState {
            flows: problem.zero_flows(),
            prices: DualState::zeros(problem.num_nodes(), problem.num_commodities()),
            avg_flows: problem.zero_flows(),
            iter: 0,
        }
    }
}

/// One projected subgradient step on every flow variable, holding prices
/// fixed. The update for arc `(i, j)`, commodity `m` is
/// `x <- max(0, x - alpha * (ln2 * w_ij * 2^(arc total) + p_j(m) - p_i(m)))`
/// where the arc total is read before any commodity of the arc moves.
pub fn primal_step(
    flows: &mut FlowState,
    prices: &DualState,
    problem: &ProblemQ,
    alpha: f64,
    recorder: &impl AccessRecorder,
) {
    let m = problem.num_commodities();
    for (a, arc) in problem.topology().arcs().iter().enumerate() {
        recorder.flow_read(arc.from, arc.from, arc.to);
        recorder.multiplier_read(arc.from, arc.from);
        recorder.multiplier_read(arc.from, arc.to);
        let congestion = std::f64::consts::LN_2 * problem.weight(a) * flows.arc_total(a).exp2();
        for k in 0..m {
            let price_gap = prices.get(arc.to, k) - prices.get(arc.from, k);
            let updated = flows.get(a, k) - alpha * (congestion + price_gap);
            flows.set(a, k, updated.max(0.0));
        }
    }
}

/// One price ascent step on every node: `p_i(m) <- p_i(m) - alpha * r_i(m)`
/// with `r` the conservation residual of the given flows. A node reads only
/// its incident arcs.
pub fn dual_step(
    prices: &mut DualState,
    flows: &FlowState,
    problem: &ProblemQ,
    alpha: f64,
    recorder: &impl AccessRecorder,
) {
    let residuals = crate::problem::local_node_residuals(problem, flows, recorder);
    apply_price_step(prices, &residuals, problem.num_commodities(), alpha, recorder);
}

fn apply_price_step(
    prices: &mut DualState,
    residuals: &[f64],
    m: usize,
    alpha: f64,
    recorder: &impl AccessRecorder,
) {
    for i in 0..prices.num_nodes() {
        recorder.multiplier_read(i, i);
        for k in 0..m {
            let updated = prices.get(i, k) - alpha * residuals[i * m + k];
            prices.set(i, k, updated);
        }
    }
}

/// Folds the k-th iterate into the running mean:
/// `avg <- avg + (x - avg) / k`. `iter_completed` is 1 for the first iterate.
pub fn average_update(avg: &mut FlowState, flows: &FlowState, iter_completed: usize) {
    assert!(iter_completed >= 1, "averaging starts at iteration 1");
    let k = iter_completed as f64;
    let m = avg.num_commodities();
    for a in 0..avg.num_arcs() {
        for c in 0..m {
            let updated = avg.get(a, c) + (flows.get(a, c) - avg.get(a, c)) / k;
            // The mean of nonnegative values only goes negative through
            // floating-point noise; clip it away.
            avg.set(a, c, updated.max(0.0));
        }
    }
}

#[derive(Debug)]
pub struct PrimalDualOutcome {
    /// The averaged iterate; the method's actual answer.
    pub flows: FlowState,
    pub trace: SolveTrace,
    pub state: PrimalDualState,
}

pub fn solve(problem: &ProblemQ, config: &PrimalDualConfig) -> Result<PrimalDualOutcome, SolveError> {
    solve_with(problem, config, &NoAudit)
}

pub fn solve_with(
    problem: &ProblemQ,
    config: &PrimalDualConfig,
    recorder: &impl AccessRecorder,
) -> Result<PrimalDualOutcome, SolveError> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut state = PrimalDualState::new(problem);
    let mut points = Vec::new();
    points.push(measure(problem, &state, 0, start));

    let mut stop = StopReason::MaxIters;
    for k in 1..=config.max_iters {
        // Jacobi semantics: the price step must see the pre-update flows, so
        // capture the residuals before the flows move.
        let residuals = crate::problem::local_node_residuals(problem, &state.flows, recorder);
        primal_step(&mut state.flows, &state.prices, problem, config.alpha, recorder);
        apply_price_step(
            &mut state.prices,
            &residuals,
            problem.num_commodities(),
            config.alpha,
            recorder,
        );
        state.iter = k;
        average_update(&mut state.avg_flows, &state.flows, k);

        if k % config.trace_every == 0 || k == config.max_iters {
            let point = measure(problem, &state, k, start);
            // The raw iterate can swing through benign values at the check
            // cadence while the average is already ruined, so test both.
            let avg_objective = point.avg_objective.expect("primal-dual traces averages");
            let avg_violation = point.avg_violation.expect("primal-dual traces averages");
            let finite = point.objective.is_finite()
                && point.violation.is_finite()
                && avg_objective.is_finite()
                && avg_violation.is_finite();
            points.push(point);
            if !finite {
                return Err(SolveError::Diverged {
                    iter: k,
                    what: "objective or violation",
                });
            }
            if avg_violation <= config.violation_tol {
                stop = StopReason::ViolationTol;
                break;
            }
        }
    }

    let iterations = state.iter;
    Ok(PrimalDualOutcome {
        flows: state.avg_flows.clone(),
        trace: SolveTrace {
            solver: SolverKind::PrimalDual,
            points,
            stop,
            iterations,
        },
        state,
    })
}

fn measure(
    problem: &ProblemQ,
    state: &PrimalDualState,
    iter: usize,
    start: std::time::Instant,
) -> TracePoint {
    TracePoint {
        iter,
        objective: problem.objective(&state.flows),
        violation: problem.violation(&state.flows),
        avg_objective: Some(problem.objective(&state.avg_flows)),
        avg_violation: Some(problem.violation(&state.avg_flows)),
        armijo: None,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}
