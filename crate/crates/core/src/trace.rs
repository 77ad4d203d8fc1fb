//! Per-iteration solve records shared by all solvers.

use std::io::Write as _;
use std::path::Path;

/// Which algorithm produced a trace or report entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    PrimalDual,
    Adal,
    Ospf,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::PrimalDual => "pd",
            SolverKind::Adal => "adal",
            SolverKind::Ospf => "ospf",
        }
    }
}

/// Why a solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The violation metric reached the configured tolerance.
    ViolationTol,
    /// The iteration budget ran out first.
    MaxIters,
    /// Single-shot method; nothing iterated.
    Direct,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::ViolationTol => "violation_tol",
            StopReason::MaxIters => "max_iters",
            StopReason::Direct => "direct",
        }
    }
}

/// Line-search effort aggregated over all nodes of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoIterStats {
    pub inner_iters: usize,
    pub mean_step: f64,
    pub mean_armijo_trials: f64,
}

/// Metrics sampled at one iteration. `objective` and `violation` describe
/// the solver's current iterate; the `avg_*` pair describes the running
/// average when the solver reports one (primal-dual does, the rest do not).
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub objective: f64,
    pub violation: f64,
    pub avg_objective: Option<f64>,
    pub avg_violation: Option<f64>,
    pub armijo: Option<ArmijoIterStats>,
    /// Wall-clock seconds since the solve started. Diagnostic only; kept out
    /// of written artifacts so identical runs produce identical files.
    pub elapsed_s: f64,
}

impl TracePoint {
    /// Violation of what the solver would currently return as its answer.
    pub fn solution_violation(&self) -> f64 {
        self.avg_violation.unwrap_or(self.violation)
    }
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub solver: SolverKind,
    pub points: Vec<TracePoint>,
    pub stop: StopReason,
    /// Iterations actually executed (the trace may sample more coarsely).
    pub iterations: usize,
}

impl SolveTrace {
    /// First traced iteration whose solution violation is at or below the
    /// threshold. Resolution is the trace's sampling stride.
    pub fn iters_to_violation(&self, threshold: f64) -> Option<usize> {
        self.points
            .iter()
            .find(|p| p.solution_violation() <= threshold)
            .map(|p| p.iter)
    }

    pub fn final_point(&self) -> Option<&TracePoint> {
        self.points.last()
    }

    /// Writes the trace as CSV. Columns adapt to the solver: primal-dual
    /// traces carry the averaged iterate's metrics, augmented-Lagrangian
    /// traces carry line-search effort. No timestamps, so reruns are
    /// byte-identical.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let with_avg = self.solver == SolverKind::PrimalDual;
        let with_armijo = self.solver == SolverKind::Adal;
        let mut header = String::from("iter,objective,violation");
        if with_avg {
            header.push_str(",avg_objective,avg_violation");
        }
        if with_armijo {
            header.push_str(",inner_iters,mean_step,mean_armijo_trials");
        }
        writeln!(out, "{header}")?;
        for p in &self.points {
            let mut row = format!("{},{},{}", p.iter, p.objective, p.violation);
            if with_avg {
                match (p.avg_objective, p.avg_violation) {
                    (Some(o), Some(v)) => row.push_str(&format!(",{o},{v}")),
                    _ => row.push_str(",,"),
                }
            }
            if with_armijo {
                match p.armijo {
                    Some(a) => row.push_str(&format!(
                        ",{},{},{}",
                        a.inner_iters, a.mean_step, a.mean_armijo_trials
                    )),
                    None => row.push_str(",,,"),
                }
            }
            writeln!(out, "{row}")?;
        }
        out.flush()
    }
}
