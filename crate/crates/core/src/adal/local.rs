//! Per-node augmented-Lagrangian subproblems.
//!
//! A node's decision variables are the flows on its own outgoing arcs, one
//! per commodity. Everything else the subproblem needs is frozen into a
//! [`NodeLocalView`] at construction: two-hop flow state collapses into the
//! constants `z_self` and `z_nbr`, one-hop multipliers into per-arc gaps.
//! The quadratic penalty is kept only over the rows the node's variables
//! actually touch (itself and its arc targets); the remaining rows of the
//! network-wide penalty do not depend on this node's variables, so dropping
//! them shifts the value by a constant and leaves gradients and line-search
//! decisions untouched.

use crate::audit::AccessRecorder;
use crate::problem::{DualState, FlowState, ProblemQ};

use super::{ArmijoParams, ScalingMode};

/// Backtracking gives up after this many shrink trials in one iteration.
pub const ARMIJO_MAX_TRIALS: usize = 60;

/// Everything node `i` may legally see, snapshot at one outer iteration.
///
/// Local vectors are commodity-major: entry `(m, a)` of a length
/// `num_commodities * degree` vector sits at `m * degree + a`, with `a`
/// indexing the node's outgoing arcs in global arc order.
#[derive(Debug, Clone)]
pub struct NodeLocalView {
    node: usize,
    /// Global arc ids of this node's outgoing arcs.
    pub(super) out_arc_ids: Vec<usize>,
    weights: Vec<f64>,
    pub(super) own_flows: Vec<f64>,
    /// Own multiplier minus the target's, per `(m, a)`.
    lambda_gap: Vec<f64>,
    /// Constant part of the penalty row owned by this node, per commodity:
    /// `-inflow - demand` at the snapshot.
    pub(crate) z_self: Vec<f64>,
    /// Constant part of each target's penalty row, per `(m, a)`: the
    /// target's `outflow - inflow - demand` with the inflow on our own arc
    /// excluded.
    pub(crate) z_nbr: Vec<f64>,
    num_commodities: usize,
}

impl NodeLocalView {
    /// Snapshots the two-hop flow neighborhood and one-hop multipliers of
    /// `node`. Every remote read is reported to the recorder.
    pub fn build(
        node: usize,
        problem: &ProblemQ,
        flows: &FlowState,
        multipliers: &DualState,
        recorder: &impl AccessRecorder,
    ) -> Self {
        let topology = problem.topology();
        let m = problem.num_commodities();
        let out_arc_ids: Vec<usize> = topology.out_arcs(node).to_vec();
        let deg = out_arc_ids.len();
        let targets: Vec<usize> = out_arc_ids.iter().map(|&a| topology.arc(a).to).collect();
        let weights: Vec<f64> = out_arc_ids.iter().map(|&a| problem.weight(a)).collect();

        let mut own_flows = vec![0.0; m * deg];
        for (a, &arc) in out_arc_ids.iter().enumerate() {
            recorder.flow_read(node, node, targets[a]);
            for k in 0..m {
                own_flows[k * deg + a] = flows.get(arc, k);
            }
        }

        recorder.multiplier_read(node, node);
        let mut lambda_gap = vec![0.0; m * deg];
        for (a, &target) in targets.iter().enumerate() {
            recorder.multiplier_read(node, target);
            for k in 0..m {
                lambda_gap[k * deg + a] = multipliers.get(node, k) - multipliers.get(target, k);
            }
        }

        // z_self: what the conservation row of `node` reads at zero own
        // outflow, i.e. -inflow - demand.
        let mut z_self = vec![0.0; m];
        for k in 0..m {
            z_self[k] = -problem.demand(node, k);
        }
        for &a in topology.in_arcs(node) {
            let arc = topology.arc(a);
            recorder.flow_read(node, arc.from, arc.to);
            for k in 0..m {
                z_self[k] -= flows.get(a, k);
            }
        }

        // z_nbr: each target's conservation row with our own arc's
        // contribution removed. Needs the target's incident flows, all of
        // which sit within two hops of `node`.
        let mut z_nbr = vec![0.0; m * deg];
        for (a, &target) in targets.iter().enumerate() {
            for k in 0..m {
                z_nbr[k * deg + a] = -problem.demand(target, k);
            }
            for &out in topology.out_arcs(target) {
                let arc = topology.arc(out);
                recorder.flow_read(node, arc.from, arc.to);
                for k in 0..m {
                    z_nbr[k * deg + a] += flows.get(out, k);
                }
            }
            for &inc in topology.in_arcs(target) {
                let arc = topology.arc(inc);
                if arc.from == node {
                    continue;
                }
                recorder.flow_read(node, arc.from, arc.to);
                for k in 0..m {
                    z_nbr[k * deg + a] -= flows.get(inc, k);
                }
            }
        }

        NodeLocalView {
            node,
            out_arc_ids,
            weights,
            own_flows,
            lambda_gap,
            z_self,
            z_nbr,
            num_commodities: m,
        }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn degree(&self) -> usize {
        self.out_arc_ids.len()
    }

    /// Dimension of the local variable vector.
    pub fn dim(&self) -> usize {
        self.num_commodities * self.degree()
    }

    pub fn num_commodities(&self) -> usize {
        self.num_commodities
    }

    /// The node's own flows at the snapshot, in local layout.
    pub fn own_flows(&self) -> &[f64] {
        &self.own_flows
    }

    fn arc_total(&self, x: &[f64], a: usize) -> f64 {
        let deg = self.degree();
        (0..self.num_commodities).map(|k| x[k * deg + a]).sum()
    }

    /// Local augmented Lagrangian at candidate `x`:
    /// objective + multiplier coupling + penalty over the touched rows.
    pub fn al_value(&self, x: &[f64], rho: f64) -> f64 {
        assert_eq!(x.len(), self.dim());
        let deg = self.degree();
        let mut value = 0.0;
        for a in 0..deg {
            value += self.weights[a] * self.arc_total(x, a).exp2();
        }
        for idx in 0..x.len() {
            value += self.lambda_gap[idx] * x[idx];
        }
        let mut penalty = 0.0;
        for k in 0..self.num_commodities {
            let mut own_row = self.z_self[k];
            for a in 0..deg {
                own_row += x[k * deg + a];
            }
            penalty += own_row * own_row;
            for a in 0..deg {
                let target_row = self.z_nbr[k * deg + a] - x[k * deg + a];
                penalty += target_row * target_row;
            }
        }
        value + 0.5 * rho * penalty
    }

    /// Gradient of [`al_value`](Self::al_value) at `x`.
    pub fn al_gradient(&self, x: &[f64], rho: f64) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let deg = self.degree();
        let mut g = vec![0.0; x.len()];
        let congestion: Vec<f64> = (0..deg)
            .map(|a| std::f64::consts::LN_2 * self.weights[a] * self.arc_total(x, a).exp2())
            .collect();
        for k in 0..self.num_commodities {
            let mut own_row = self.z_self[k];
            for a in 0..deg {
                own_row += x[k * deg + a];
            }
            for a in 0..deg {
                let idx = k * deg + a;
                g[idx] = congestion[a]
                    + self.lambda_gap[idx]
                    + rho * (own_row + x[idx] - self.z_nbr[idx]);
            }
        }
        g
    }

    /// Diagonal model of the local Hessian, one entry per coordinate.
    pub fn al_hessian_diag(&self, x: &[f64], rho: f64, mode: ScalingMode) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let deg = self.degree();
        match mode {
            // Each coordinate appears in exactly two penalty rows with unit
            // coefficient, so the penalty's diagonal is the constant 2 rho.
            ScalingMode::ConstantDiagonal | ScalingMode::Unscaled => vec![2.0 * rho; x.len()],
            ScalingMode::FullDiagonal => {
                let mut diag = vec![0.0; x.len()];
                for a in 0..deg {
                    let curvature = std::f64::consts::LN_2 * std::f64::consts::LN_2
                        * self.weights[a]
                        * self.arc_total(x, a).exp2();
                    for k in 0..self.num_commodities {
                        diag[k * deg + a] = 2.0 * rho + curvature;
                    }
                }
                diag
            }
        }
    }
}

/// Errors internal to one node's inner solve; the outer loop attaches node
/// and iteration context.
#[derive(Debug)]
pub enum InnerError {
    LineSearchExhausted,
    BadDiagonal(f64),
}

/// Descent direction for the current gradient: steepest descent for
/// `Unscaled`, diagonally preconditioned otherwise.
pub fn scaled_direction(
    gradient: &[f64],
    diag: &[f64],
    mode: ScalingMode,
) -> Result<Vec<f64>, InnerError> {
    match mode {
        ScalingMode::Unscaled => Ok(gradient.iter().map(|g| -g).collect()),
        ScalingMode::ConstantDiagonal | ScalingMode::FullDiagonal => {
            debug_assert_eq!(gradient.len(), diag.len());
            let mut dir = Vec::with_capacity(gradient.len());
            for (g, d) in gradient.iter().zip(diag) {
                if !(*d > 0.0) || !d.is_finite() {
                    return Err(InnerError::BadDiagonal(*d));
                }
                dir.push(-g / d);
            }
            Ok(dir)
        }
    }
}

/// Outcome of one node's inner solve.
#[derive(Debug, Clone)]
pub struct InnerSolveResult {
    /// Approximate minimizer of the local augmented Lagrangian.
    pub x: Vec<f64>,
    /// Accepted projected-gradient steps.
    pub iterations: usize,
    /// Armijo trials summed over all iterations (an iteration accepted at
    /// the first trial contributes 1).
    pub total_trials: usize,
    /// Sum of the accepted step factors, for mean-step reporting.
    pub sum_steps: f64,
    /// `trial_histogram[t]` counts iterations that needed exactly `t`
    /// trials.
    pub trial_histogram: [u32; ARMIJO_MAX_TRIALS + 1],
    /// Whether the stationarity test passed before the iteration cap.
    pub converged: bool,
}

/// Minimizes the node's local augmented Lagrangian over the nonnegative
/// orthant by projected gradient steps with Armijo backtracking.
///
/// Stops when the projected-gradient residual `||[x - g]_+ - x||_2` falls to
/// `inner_tol`, when the iteration cap hits, or when the projected trial
/// point stops moving.
pub fn armijo_inner_solve(
    view: &NodeLocalView,
    rho: f64,
    inner_tol: f64,
    inner_max_iters: usize,
    armijo: &ArmijoParams,
    mode: ScalingMode,
) -> Result<InnerSolveResult, InnerError> {
    let mut x = view.own_flows().to_vec();
    let mut result = InnerSolveResult {
        x: Vec::new(),
        iterations: 0,
        total_trials: 0,
        sum_steps: 0.0,
        trial_histogram: [0; ARMIJO_MAX_TRIALS + 1],
        converged: false,
    };
    if view.dim() == 0 {
        result.converged = true;
        return Ok(result);
    }

    for _ in 0..inner_max_iters {
        let g = view.al_gradient(&x, rho);
        let residual_sq: f64 = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| {
                let moved = (xi - gi).max(0.0) - xi;
                moved * moved
            })
            .sum();
        if residual_sq.sqrt() <= inner_tol {
            result.converged = true;
            break;
        }

        let diag = view.al_hessian_diag(&x, rho, mode);
        let dir = scaled_direction(&g, &diag, mode)?;
        let trial_point: Vec<f64> = x
            .iter()
            .zip(&dir)
            .map(|(&xi, &di)| (xi + armijo.initial_step * di).max(0.0))
            .collect();
        let u: Vec<f64> = trial_point.iter().zip(&x).map(|(t, xi)| t - xi).collect();
        if u.iter().all(|&ui| ui == 0.0) {
            // The projected step cannot move; nothing more to do here.
            break;
        }
        // Projection keeps <dir, u> nonnegative, so the Armijo test demands
        // a genuine decrease.
        let dir_dot_u: f64 = dir.iter().zip(&u).map(|(d, ui)| d * ui).sum();
        let f0 = view.al_value(&x, rho);

        let mut accepted = false;
        let mut factor = 1.0;
        for trial in 1..=ARMIJO_MAX_TRIALS {
            let candidate: Vec<f64> = x
                .iter()
                .zip(&u)
                .map(|(&xi, &ui)| (xi + factor * ui).max(0.0))
                .collect();
            if f0 - view.al_value(&candidate, rho) >= armijo.sigma * factor * dir_dot_u {
                x = candidate;
                result.iterations += 1;
                result.total_trials += trial;
                result.sum_steps += factor;
                result.trial_histogram[trial] += 1;
                accepted = true;
                break;
            }
            factor *= armijo.beta;
        }
        if !accepted {
            return Err(InnerError::LineSearchExhausted);
        }
    }

    result.x = x;
    Ok(result)
}
