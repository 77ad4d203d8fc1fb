//! Power allocation for multi-beam directional wireless networks.
//!
//! A node in such a network points one beam per neighbor plus one at a central
//! station, and splits a fixed power budget among them. Whatever traffic the
//! network carries internally eats into the power left for the station links,
//! so routing decisions and beam powers are coupled. This crate models the
//! network, casts the allocation as a convex multicommodity-flow problem over
//! link rates, and solves it three ways:
//!
//! - [`primal_dual`]: a first-order primal-dual subgradient method with
//!   iterate averaging,
//! - [`adal`]: an accelerated distributed augmented Lagrangian method whose
//!   per-node subproblems touch only two-hop flow state and one-hop
//!   multipliers,
//! - [`ospf`]: a minimum-distance shortest-path baseline that routes each
//!   demand along one path.
//!
//! [`harness`] compares the three on equal footing and [`netmodel`] /
//! [`problem`] hold the geometry, RF math, and problem data they share.

pub mod adal;
pub mod audit;
pub mod harness;
pub mod netmodel;
pub mod ospf;
pub mod primal_dual;
pub mod problem;
pub mod trace;

use thiserror::Error;

/// Failure modes shared by the iterative solvers.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    /// An iterate stopped being finite. Usually a step size too large for the
    /// instance.
    #[error("solver diverged at iteration {iter}: {what} is not finite")]
    Diverged { iter: usize, what: &'static str },
    /// The Armijo backtracking loop exhausted its trial budget at one node.
    #[error(
        "line search failed at node {node} (outer iteration {outer}): \
         no acceptable step within {max_trials} trials"
    )]
    LineSearchFailure {
        node: u32,
        outer: usize,
        max_trials: usize,
    },
}
