//! Distributed augmented Lagrangian solver.
//!
//! Each outer iteration runs in three stages. First every node minimizes a
//! local augmented Lagrangian over its own outgoing flows, all working from
//! the same snapshot of the network state; the subproblems only need flow
//! state from two hops out and multipliers from one hop out, so the stage is
//! embarrassingly parallel. Second, the new flows are blended into the
//! iterate with a relaxation factor `tau`, which must stay below the
//! reciprocal of the maximum node degree for the scheme to contract. Third,
//! every node takes a multiplier ascent step of `rho * tau` times its own
//! conservation residual, evaluated at the updated flows.
//!
//! The inner minimizer is a projected gradient method with Armijo
//! backtracking; dividing the gradient by a diagonal curvature model (see
//! [`ScalingMode`]) keeps the accepted steps near unity, which is where most
//! of the method's speed comes from.

pub mod local;

use std::path::Path;

use rayon::prelude::*;

use crate::audit::{AccessRecorder, NoAudit};
use crate::problem::{DualState, FlowState, ProblemQ};
use crate::trace::{ArmijoIterStats, SolveTrace, SolverKind, StopReason, TracePoint};
use crate::SolveError;

use local::{armijo_inner_solve, InnerError, NodeLocalView, ARMIJO_MAX_TRIALS};

/// Diagonal model used to precondition the inner gradient steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// Penalty curvature only. Every coordinate sits in exactly two penalty
    /// rows, so this diagonal is the constant `2 * rho`.
    ConstantDiagonal,
    /// Penalty curvature plus the objective's diagonal curvature at the
    /// current point.
    FullDiagonal,
    /// No preconditioning; raw steepest descent.
    Unscaled,
}

/// Backtracking line-search parameters for the inner solves.
#[derive(Debug, Clone, Copy)]
pub struct ArmijoParams {
    /// Step applied before any backtracking.
    pub initial_step: f64,
    /// Multiplicative shrink after a rejected trial.
    pub beta: f64,
    /// Fraction of the predicted decrease a trial must deliver.
    pub sigma: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            initial_step: 1.0,
            beta: 0.5,
            sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdalConfig {
    /// Penalty coefficient of the augmented Lagrangian.
    pub rho: f64,
    /// Relaxation factor. `None` resolves to `0.9 / max_degree`; an explicit
    /// value must lie in `(0, 1/max_degree)`.
    pub tau: Option<f64>,
    /// Projected-gradient residual at which an inner solve stops.
    pub inner_tol: f64,
    /// Iteration cap per inner solve.
    pub inner_max_iters: usize,
    pub armijo: ArmijoParams,
    pub scaling: ScalingMode,
    /// Worker threads for the per-node solves; 0 means one per core. The
    /// result does not depend on the thread count.
    pub threads: usize,
    pub max_outer_iters: usize,
    /// Stop once the iterate's violation drops this low.
    pub violation_tol: f64,
}

impl Default for AdalConfig {
    fn default() -> Self {
        AdalConfig {
            rho: 1.0,
            tau: None,
            inner_tol: 1e-3,
            inner_max_iters: 200,
            armijo: ArmijoParams::default(),
            scaling: ScalingMode::ConstantDiagonal,
            threads: 0,
            max_outer_iters: 5000,
            violation_tol: 1e-3,
        }
    }
}

impl AdalConfig {
    pub fn validate(&self, max_degree: usize) -> Result<(), SolveError> {
        if !self.rho.is_finite() || self.rho <= 0.0 {
            return Err(SolveError::InvalidConfig(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if let Some(tau) = self.tau {
            let bound = 1.0 / max_degree.max(1) as f64;
            if !tau.is_finite() || tau <= 0.0 || tau >= bound {
                return Err(SolveError::InvalidConfig(format!(
                    "tau must lie in (0, {bound}) for maximum degree {max_degree}, got {tau}"
                )));
            }
        }
        if !self.inner_tol.is_finite() || self.inner_tol < 0.0 {
            return Err(SolveError::InvalidConfig(format!(
                "inner_tol must be nonnegative, got {}",
                self.inner_tol
            )));
        }
        if self.inner_max_iters == 0 {
            return Err(SolveError::InvalidConfig(
                "inner_max_iters must be at least 1".into(),
            ));
        }
        let a = &self.armijo;
        if !a.initial_step.is_finite() || a.initial_step <= 0.0 {
            return Err(SolveError::InvalidConfig(format!(
                "armijo initial_step must be positive, got {}",
                a.initial_step
            )));
        }
        if !(a.beta > 0.0 && a.beta < 1.0) {
            return Err(SolveError::InvalidConfig(format!(
                "armijo beta must lie in (0, 1), got {}",
                a.beta
            )));
        }
        if !(a.sigma > 0.0 && a.sigma < 1.0) {
            return Err(SolveError::InvalidConfig(format!(
                "armijo sigma must lie in (0, 1), got {}",
                a.sigma
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(SolveError::InvalidConfig(
                "max_outer_iters must be at least 1".into(),
            ));
        }
        if !self.violation_tol.is_finite() || self.violation_tol < 0.0 {
            return Err(SolveError::InvalidConfig(format!(
                "violation_tol must be nonnegative, got {}",
                self.violation_tol
            )));
        }
        Ok(())
    }

    /// Relaxation factor actually used on a graph with this maximum degree.
    pub fn resolved_tau(&self, max_degree: usize) -> f64 {
        match self.tau {
            Some(tau) => tau,
            None => 0.9 / max_degree.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdalState {
    pub flows: FlowState,
    pub multipliers: DualState,
    /// Completed outer iterations.
    pub iter: usize,
}

impl AdalState {
    pub fn new(problem: &ProblemQ) -> Self {
        AdalState {
            flows: problem.zero_flows(),
            multipliers: DualState::zeros(problem.num_nodes(), problem.num_commodities()),
            iter: 0,
        }
    }
}

/// Inner-solve effort aggregated over the nodes of one outer iteration.
#[derive(Debug, Clone)]
pub struct OuterStats {
    /// Accepted projected-gradient iterations, summed over nodes.
    pub inner_iters: usize,
    /// Armijo trials, summed over nodes.
    pub total_trials: usize,
    /// Sum of the accepted step factors.
    pub sum_steps: f64,
    /// Nodes whose inner solve reached the stationarity tolerance.
    pub converged_nodes: usize,
    /// Nodes that ran an inner solve (out-degree above zero).
    pub solved_nodes: usize,
    /// Entry `t` counts inner iterations accepted at exactly `t` trials.
    /// Entry 0 is unused.
    pub trial_histogram: Vec<u64>,
}

impl OuterStats {
    fn empty() -> Self {
        OuterStats {
            inner_iters: 0,
            total_trials: 0,
            sum_steps: 0.0,
            converged_nodes: 0,
            solved_nodes: 0,
            trial_histogram: vec![0; ARMIJO_MAX_TRIALS + 1],
        }
    }

    pub fn iter_stats(&self) -> ArmijoIterStats {
        let (mean_step, mean_armijo_trials) = if self.inner_iters == 0 {
            (0.0, 0.0)
        } else {
            let n = self.inner_iters as f64;
            (self.sum_steps / n, self.total_trials as f64 / n)
        };
        ArmijoIterStats {
            inner_iters: self.inner_iters,
            mean_step,
            mean_armijo_trials,
        }
    }
}

/// Line-search effort accumulated over a whole solve.
#[derive(Debug, Clone)]
pub struct ArmijoSummary {
    pub inner_iters: usize,
    pub total_trials: usize,
    pub sum_steps: f64,
    /// Entry `t` counts inner iterations accepted at exactly `t` trials.
    pub trial_histogram: Vec<u64>,
}

impl ArmijoSummary {
    fn new() -> Self {
        ArmijoSummary {
            inner_iters: 0,
            total_trials: 0,
            sum_steps: 0.0,
            trial_histogram: vec![0; ARMIJO_MAX_TRIALS + 1],
        }
    }

    fn absorb(&mut self, stats: &OuterStats) {
        self.inner_iters += stats.inner_iters;
        self.total_trials += stats.total_trials;
        self.sum_steps += stats.sum_steps;
        for (mine, theirs) in self.trial_histogram.iter_mut().zip(&stats.trial_histogram) {
            *mine += theirs;
        }
    }

    /// Mean Armijo trials per accepted inner iteration.
    pub fn mean_trials(&self) -> f64 {
        if self.inner_iters == 0 {
            0.0
        } else {
            self.total_trials as f64 / self.inner_iters as f64
        }
    }

    /// Mean accepted step factor.
    pub fn mean_step(&self) -> f64 {
        if self.inner_iters == 0 {
            0.0
        } else {
            self.sum_steps / self.inner_iters as f64
        }
    }

    /// Writes `trials,iterations` rows for every trial count up to the cap,
    /// zero rows included so reruns are byte-identical.
    pub fn write_histogram_csv(&self, path: &Path) -> std::io::Result<()> {
        use std::io::Write as _;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "trials,iterations")?;
        for t in 1..=ARMIJO_MAX_TRIALS {
            writeln!(out, "{},{}", t, self.trial_histogram[t])?;
        }
        out.flush()
    }
}

/// Runs one outer iteration in place: parallel inner solves from the current
/// snapshot, relaxation by `tau`, then the multiplier ascent step.
///
/// `tau` is passed explicitly rather than read from the config so callers
/// can probe the relaxation; [`solve`] resolves it from the config once.
pub fn outer_step(
    state: &mut AdalState,
    problem: &ProblemQ,
    config: &AdalConfig,
    tau: f64,
    recorder: &impl AccessRecorder,
) -> Result<OuterStats, SolveError> {
    let m = problem.num_commodities();
    let topology = problem.topology();
    let active: Vec<usize> = (0..problem.num_nodes())
        .filter(|&i| !topology.out_arcs(i).is_empty())
        .collect();

    // Every subproblem reads the same snapshot; nothing is written until all
    // of them are done, so the node order cannot influence the result.
    let flows = &state.flows;
    let multipliers = &state.multipliers;
    let solves: Vec<Result<(NodeLocalView, local::InnerSolveResult), (usize, InnerError)>> =
        active
            .par_iter()
            .map(|&i| {
                let view = NodeLocalView::build(i, problem, flows, multipliers, recorder);
                armijo_inner_solve(
                    &view,
                    config.rho,
                    config.inner_tol,
                    config.inner_max_iters,
                    &config.armijo,
                    config.scaling,
                )
                .map(|result| (view, result))
                .map_err(|err| (i, err))
            })
            .collect();

    let mut stats = OuterStats::empty();
    let mut updates = Vec::with_capacity(solves.len());
    for solve in solves {
        // The first failing node in index order reports, whatever the
        // thread interleaving was.
        let (view, result) = solve.map_err(|(node, err)| match err {
            InnerError::LineSearchExhausted => SolveError::LineSearchFailure {
                node: problem.node_id(node),
                outer: state.iter + 1,
                max_trials: ARMIJO_MAX_TRIALS,
            },
            InnerError::BadDiagonal(_) => SolveError::Diverged {
                iter: state.iter + 1,
                what: "inner scaling diagonal",
            },
        })?;
        stats.inner_iters += result.iterations;
        stats.total_trials += result.total_trials;
        stats.sum_steps += result.sum_steps;
        stats.converged_nodes += result.converged as usize;
        stats.solved_nodes += 1;
        for t in 1..=ARMIJO_MAX_TRIALS {
            stats.trial_histogram[t] += u64::from(result.trial_histogram[t]);
        }
        updates.push((view, result));
    }

    for (view, result) in &updates {
        let deg = view.degree();
        for (a, &arc) in view.out_arc_ids.iter().enumerate() {
            for k in 0..m {
                let current = state.flows.get(arc, k);
                let blended = current + tau * (result.x[k * deg + a] - current);
                // Exact in reals for tau <= 1; clip the rounding residue.
                state.flows.set(arc, k, blended.max(0.0));
            }
        }
    }

    let residuals = crate::problem::local_node_residuals(problem, &state.flows, recorder);
    for i in 0..problem.num_nodes() {
        recorder.multiplier_read(i, i);
        for k in 0..m {
            let updated =
                state.multipliers.get(i, k) + config.rho * tau * residuals[i * m + k];
            state.multipliers.set(i, k, updated);
        }
    }

    state.iter += 1;
    Ok(stats)
}

#[derive(Debug)]
pub struct AdalOutcome {
    /// The final iterate.
    pub flows: FlowState,
    pub trace: SolveTrace,
    pub armijo: ArmijoSummary,
    pub state: AdalState,
}

pub fn solve(problem: &ProblemQ, config: &AdalConfig) -> Result<AdalOutcome, SolveError> {
    solve_with(problem, config, &NoAudit)
}

pub fn solve_with(
    problem: &ProblemQ,
    config: &AdalConfig,
    recorder: &impl AccessRecorder,
) -> Result<AdalOutcome, SolveError> {
    let max_degree = problem.neighborhoods().max_degree();
    config.validate(max_degree)?;
    let tau = config.resolved_tau(max_degree);
    if config.threads == 0 {
        solve_loop(problem, config, tau, recorder)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| SolveError::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| solve_loop(problem, config, tau, recorder))
    }
}

fn solve_loop(
    problem: &ProblemQ,
    config: &AdalConfig,
    tau: f64,
    recorder: &impl AccessRecorder,
) -> Result<AdalOutcome, SolveError> {
    let start = std::time::Instant::now();
    let mut state = AdalState::new(problem);
    let mut summary = ArmijoSummary::new();
    let mut points = vec![TracePoint {
        iter: 0,
        objective: problem.objective(&state.flows),
        violation: problem.violation(&state.flows),
        avg_objective: None,
        avg_violation: None,
        armijo: None,
        elapsed_s: 0.0,
    }];

    let mut stop = StopReason::MaxIters;
    for k in 1..=config.max_outer_iters {
        let stats = outer_step(&mut state, problem, config, tau, recorder)?;
        summary.absorb(&stats);
        let objective = problem.objective(&state.flows);
        let violation = problem.violation(&state.flows);
        points.push(TracePoint {
            iter: k,
            objective,
            violation,
            avg_objective: None,
            avg_violation: None,
            armijo: Some(stats.iter_stats()),
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        if !objective.is_finite() || !violation.is_finite() {
            return Err(SolveError::Diverged {
                iter: k,
                what: "objective or violation",
            });
        }
        if violation <= config.violation_tol {
            stop = StopReason::ViolationTol;
            break;
        }
    }

    let iterations = state.iter;
    Ok(AdalOutcome {
        flows: state.flows.clone(),
        trace: SolveTrace {
            solver: SolverKind::Adal,
            points,
            stop,
            iterations,
        },
        armijo: summary,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::RecordingAudit;
    use crate::netmodel::{grid_scenario, GridSpec, NetworkScenario, NodeRecord};
    use crate::problem::{build_problem, Commodity, CommoditySet};

    fn two_node_problem(rate: f64) -> ProblemQ {
        // Equal arc and station distances, so the forward weight is 1.
        let scenario = NetworkScenario {
            nodes: vec![
                NodeRecord {
                    id: 1,
                    position: [0.0, 0.0],
                },
                NodeRecord {
                    id: 2,
                    position: [100.0, 0.0],
                },
            ],
            station: [0.0, 100.0],
            edges: vec![(1, 2), (2, 1)],
            carrier_freq_hz: 1.0e9,
            bandwidth_hz: 5.0e6,
            noise_temp_k: 290.0,
            p_max_w: 100.0,
        };
        let commodities = CommoditySet::new(vec![Commodity {
            source: 1,
            sink: 2,
            rate,
        }])
        .unwrap();
        build_problem(scenario, commodities).unwrap()
    }

    fn diamond_problem(rate: f64) -> ProblemQ {
        let scenario = NetworkScenario {
            nodes: vec![
                NodeRecord {
                    id: 1,
                    position: [0.0, 0.0],
                },
                NodeRecord {
                    id: 2,
                    position: [1000.0, 1000.0],
                },
                NodeRecord {
                    id: 3,
                    position: [1000.0, -1000.0],
                },
                NodeRecord {
                    id: 4,
                    position: [2000.0, 0.0],
                },
            ],
            station: [1000.0, 0.0],
            edges: vec![(1, 2), (1, 3), (2, 4), (3, 4)],
            carrier_freq_hz: 1.0e9,
            bandwidth_hz: 5.0e6,
            noise_temp_k: 290.0,
            p_max_w: 100.0,
        };
        let commodities = CommoditySet::new(vec![Commodity {
            source: 1,
            sink: 4,
            rate,
        }])
        .unwrap();
        build_problem(scenario, commodities).unwrap()
    }

    fn grid_problem(rows: usize, cols: usize, source: u32, sink: u32, rate: f64) -> ProblemQ {
        // Off-lattice station: the centroid default lands on the middle
        // node of odd unjittered grids, which validation rejects.
        let scenario = grid_scenario(&GridSpec {
            rows,
            cols,
            station: Some([-1000.0, -1000.0]),
            ..GridSpec::default()
        })
        .unwrap();
        let commodities = CommoditySet::new(vec![Commodity { source, sink, rate }]).unwrap();
        build_problem(scenario, commodities).unwrap()
    }

    #[test]
    fn tau_resolves_from_the_maximum_degree() {
        let problem = grid_problem(6, 6, 1, 36, 9.0);
        let config = AdalConfig::default();
        let d = problem.neighborhoods().max_degree();
        assert_eq!(d, 4);
        assert!((config.resolved_tau(d) - 0.225).abs() < 1e-15);

        let explicit = AdalConfig {
            tau: Some(0.1),
            ..AdalConfig::default()
        };
        assert_eq!(explicit.resolved_tau(d), 0.1);
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let ok = AdalConfig::default();
        assert!(ok.validate(4).is_ok());

        let cases = [
            AdalConfig {
                rho: 0.0,
                ..AdalConfig::default()
            },
            AdalConfig {
                tau: Some(0.0),
                ..AdalConfig::default()
            },
            // At the boundary 1/max_degree, not inside it.
            AdalConfig {
                tau: Some(0.25),
                ..AdalConfig::default()
            },
            AdalConfig {
                inner_max_iters: 0,
                ..AdalConfig::default()
            },
            AdalConfig {
                armijo: ArmijoParams {
                    sigma: 1.0,
                    ..ArmijoParams::default()
                },
                ..AdalConfig::default()
            },
            AdalConfig {
                armijo: ArmijoParams {
                    beta: 1.0,
                    ..ArmijoParams::default()
                },
                ..AdalConfig::default()
            },
            AdalConfig {
                max_outer_iters: 0,
                ..AdalConfig::default()
            },
        ];
        for bad in cases {
            assert!(matches!(
                bad.validate(4),
                Err(SolveError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn zero_tau_leaves_the_state_unchanged() {
        let problem = two_node_problem(3.0);
        let mut state = AdalState::new(&problem);
        state.flows.set(0, 0, 1.5);
        state.multipliers.set(0, 0, -2.0);
        let before_flows = state.flows.clone();
        let before_multipliers = state.multipliers.clone();

        let config = AdalConfig::default();
        let stats = outer_step(&mut state, &problem, &config, 0.0, &NoAudit).unwrap();

        assert_eq!(state.flows.as_slice(), before_flows.as_slice());
        assert_eq!(
            state.multipliers.as_slice(),
            before_multipliers.as_slice()
        );
        assert_eq!(state.iter, 1);
        // The inner solves still ran; only the blend was inert.
        assert_eq!(stats.solved_nodes, 2);
    }

    #[test]
    fn multiplier_step_is_rho_tau_times_the_updated_residual() {
        let problem = diamond_problem(2.0);
        let mut state = AdalState::new(&problem);
        // Start somewhere nontrivial so the residuals are not symmetric.
        state.flows.set(0, 0, 0.7);
        state.multipliers.set(3, 0, 0.3);
        let before = state.multipliers.clone();

        let config = AdalConfig {
            rho: 2.5,
            ..AdalConfig::default()
        };
        let tau = 0.2;
        outer_step(&mut state, &problem, &config, tau, &NoAudit).unwrap();

        let residuals = problem.conservation_residual(&state.flows);
        for i in 0..problem.num_nodes() {
            let step = state.multipliers.get(i, 0) - before.get(i, 0);
            assert!(
                (step - config.rho * tau * residuals.get(i, 0)).abs() < 1e-12,
                "node {i}: step {step} vs residual {}",
                residuals.get(i, 0)
            );
        }
    }

    #[test]
    fn solve_routes_a_single_arc_demand() {
        let problem = two_node_problem(3.0);
        let config = AdalConfig {
            // The violation stalls at a few multiples of inner_tol, so a deep
            // feasibility target needs comparably tight inner solves.
            inner_tol: 1e-6,
            violation_tol: 1e-6,
            max_outer_iters: 20_000,
            ..AdalConfig::default()
        };
        let outcome = solve(&problem, &config).unwrap();

        assert_eq!(outcome.trace.stop, StopReason::ViolationTol);
        let fwd = problem.topology().arc_index(0, 1).unwrap();
        let rev = problem.topology().arc_index(1, 0).unwrap();
        assert!((outcome.flows.get(fwd, 0) - 3.0).abs() < 1e-2);
        assert!(outcome.flows.get(rev, 0).abs() < 1e-2);

        // At a fixed point the multiplier gap balances the congestion
        // derivative: lambda_2 - lambda_1 = ln2 * w * 2^3 with w = 1.
        let gap = outcome.state.multipliers.get(1, 0) - outcome.state.multipliers.get(0, 0);
        let expected = std::f64::consts::LN_2 * 8.0;
        assert!((gap - expected).abs() < 1e-2, "gap {gap} vs {expected}");
    }

    #[test]
    fn solve_splits_the_symmetric_diamond() {
        let problem = diamond_problem(2.0);
        let config = AdalConfig {
            violation_tol: 1e-4,
            ..AdalConfig::default()
        };
        let outcome = solve(&problem, &config).unwrap();

        assert_eq!(outcome.trace.stop, StopReason::ViolationTol);
        let upper = problem.topology().arc_index(0, 1).unwrap();
        let lower = problem.topology().arc_index(0, 2).unwrap();
        assert!((outcome.flows.get(upper, 0) - 1.0).abs() < 1e-2);
        assert!((outcome.flows.get(lower, 0) - 1.0).abs() < 1e-2);
        assert!(outcome.flows.min_value() >= 0.0);
    }

    #[test]
    fn iterates_stay_nonnegative_throughout() {
        let problem = grid_problem(3, 3, 1, 9, 3.0);
        let config = AdalConfig {
            max_outer_iters: 60,
            violation_tol: 0.0,
            ..AdalConfig::default()
        };
        let outcome = solve(&problem, &config).unwrap();
        assert!(outcome.flows.min_value() >= 0.0);
        assert!(outcome.state.flows.min_value() >= 0.0);
    }

    #[test]
    fn thread_count_does_not_change_the_result() {
        let problem = grid_problem(3, 3, 1, 9, 3.0);
        let runs: Vec<AdalOutcome> = [1usize, 2, 4]
            .iter()
            .map(|&threads| {
                let config = AdalConfig {
                    threads,
                    max_outer_iters: 50,
                    violation_tol: 0.0,
                    ..AdalConfig::default()
                };
                solve(&problem, &config).unwrap()
            })
            .collect();

        for other in &runs[1..] {
            assert_eq!(runs[0].flows.as_slice(), other.flows.as_slice());
            assert_eq!(
                runs[0].state.multipliers.as_slice(),
                other.state.multipliers.as_slice()
            );
            let pairs = runs[0].trace.points.iter().zip(&other.trace.points);
            for (a, b) in pairs {
                assert_eq!(a.objective.to_bits(), b.objective.to_bits());
                assert_eq!(a.violation.to_bits(), b.violation.to_bits());
            }
        }
    }

    #[test]
    fn node_reads_stay_within_two_hops() {
        let problem = grid_problem(3, 3, 1, 9, 3.0);
        let audit = RecordingAudit::new();
        let config = AdalConfig {
            max_outer_iters: 5,
            violation_tol: 0.0,
            threads: 1,
            ..AdalConfig::default()
        };
        solve_with(&problem, &config, &audit).unwrap();

        assert!(!audit.is_empty());
        let hoods = problem.neighborhoods();
        for (viewer, from, _to) in audit.flow_reads() {
            let allowed = from == viewer || hoods.two_hop(viewer).binary_search(&from).is_ok();
            assert!(
                allowed,
                "node {viewer} read a flow owned by {from}, outside its two-hop set"
            );
        }
        for (viewer, owner) in audit.multiplier_reads() {
            let allowed = owner == viewer || hoods.one_hop(viewer).binary_search(&owner).is_ok();
            assert!(
                allowed,
                "node {viewer} read a multiplier owned by {owner}, outside one hop"
            );
        }
    }

    #[test]
    fn trace_carries_line_search_effort() {
        let problem = diamond_problem(2.0);
        let outcome = solve(&problem, &AdalConfig::default()).unwrap();

        assert!(outcome.trace.points[0].armijo.is_none());
        for point in &outcome.trace.points[1..] {
            let armijo = point.armijo.expect("every iteration reports effort");
            assert!(armijo.mean_armijo_trials >= 1.0 || armijo.inner_iters == 0);
            assert!(armijo.mean_step <= 1.0 + 1e-12);
        }

        let summary = &outcome.armijo;
        let hist_iters: u64 = summary.trial_histogram.iter().sum();
        let hist_trials: u64 = summary
            .trial_histogram
            .iter()
            .enumerate()
            .map(|(t, &count)| t as u64 * count)
            .sum();
        assert_eq!(hist_iters, summary.inner_iters as u64);
        assert_eq!(hist_trials, summary.total_trials as u64);
        assert!(summary.mean_trials() >= 1.0);
        assert!(summary.mean_step() > 0.0);
    }

    #[test]
    fn histogram_csv_has_one_row_per_trial_count() {
        let problem = two_node_problem(1.0);
        let config = AdalConfig {
            max_outer_iters: 10,
            violation_tol: 0.0,
            ..AdalConfig::default()
        };
        let outcome = solve(&problem, &config).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        outcome.armijo.write_histogram_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trials,iterations");
        assert_eq!(lines.len(), 1 + ARMIJO_MAX_TRIALS);
        assert!(lines[1].starts_with("1,"));
    }
}
