//! Release gate: every shipping criterion runs in one test so a single
//! `cargo test -p beamflow-core --test acceptance -- --nocapture` prints one
//! `ACCEPTANCE n (...): PASS|FAIL` line per criterion. Criteria keep running
//! after a failure; the test asserts at the end so one miss never hides the
//! status of the rest. The whole gate is deterministic and takes a few
//! minutes, dominated by the primal-dual run on the stock benchmark.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use beamflow_core::adal::{self, local::NodeLocalView, AdalConfig, ArmijoSummary, ScalingMode};
use beamflow_core::audit::{NoAudit, RecordingAudit};
use beamflow_core::harness::{
    benchmark_spec, oracle_solve_small, path_marginal_cost, run_compare,
};
use beamflow_core::netmodel::{
    capacity, capacity_inverse, grid_scenario, GridSpec, NetworkScenario, NodeRecord,
};
use beamflow_core::primal_dual::{self, PrimalDualConfig};
use beamflow_core::problem::{
    build_problem, Commodity, CommoditySet, DualState, FlowState, ProblemQ,
};
use beamflow_core::trace::StopReason;

/// `Ok` carries the measured numbers behind a PASS, `Err` the reasons for a
/// FAIL.
type Verdict = Result<String, String>;

/// One solver output kept for the cross-cutting criteria (capacity
/// saturation, nonnegativity).
struct SolvedRun {
    label: String,
    problem: ProblemQ,
    flows: FlowState,
}

#[test]
fn acceptance_gate() {
    let mut runs: Vec<SolvedRun> = Vec::new();
    let mut scaled_armijo: Option<ArmijoSummary> = None;

    let r1 = gradient_fidelity();
    let r2 = locality_audit(&mut runs, &mut scaled_armijo);
    let r3 = oracle_equivalence(&mut runs);
    let r5 = benchmark_orderings(&mut runs);
    let r6 = line_search_scaling(scaled_armijo.as_ref());
    // These two sweep every output the earlier criteria produced, so they
    // run last regardless of their numbering.
    let r4 = capacity_saturation(&runs);
    let r7 = property_suites(&runs);

    let labeled = [
        (1, "gradient fidelity", r1),
        (2, "locality audit", r2),
        (3, "oracle equivalence", r3),
        (4, "capacity saturation", r4),
        (5, "benchmark orderings", r5),
        (6, "line-search scaling", r6),
        (7, "property suites", r7),
    ];
    let mut failures = Vec::new();
    for (number, name, result) in labeled {
        match result {
            Ok(detail) => println!("ACCEPTANCE {number} ({name}): PASS [{detail}]"),
            Err(reason) => {
                println!("ACCEPTANCE {number} ({name}): FAIL [{reason}]");
                failures.push(format!("{number} ({name}): {reason}"));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "acceptance criteria failed:\n{}",
        failures.join("\n")
    );
}

fn verdict(detail: String, faults: Vec<String>) -> Verdict {
    if faults.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} [{detail}]", faults.join("; ")))
    }
}

/// Criterion 1: on 200 randomized small instances, the analytic local
/// gradient matches a central finite difference of the local value
/// (relative error < 1e-6) and an independently built dense-incidence
/// gradient (absolute error < 1e-10), inside 10 seconds.
fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_fd = 0.0f64;
    let mut worst_dense = 0.0f64;
    let mut views = 0usize;
    for case in 0..200 {
        let rho = [0.1, 1.0, 10.0][case % 3];
        let problem = random_instance(&mut rng);
        let (flows, multipliers) = random_point(&problem, &mut rng);
        for node in 0..problem.num_nodes() {
            if problem.topology().out_arcs(node).is_empty() {
                continue;
            }
            let view = NodeLocalView::build(node, &problem, &flows, &multipliers, &NoAudit);
            let x: Vec<f64> = (0..view.dim()).map(|_| rng.gen_range(0.0..2.0)).collect();
            let grad = view.al_gradient(&x, rho);

            let mut probe = x.clone();
            for idx in 0..x.len() {
                // Step size balances truncation against the cancellation
                // noise of differencing values that can reach ~1e4.
                let h = 1e-4 * x[idx].abs().max(1.0);
                probe[idx] = x[idx] + h;
                let above = view.al_value(&probe, rho);
                probe[idx] = x[idx] - h;
                let below = view.al_value(&probe, rho);
                probe[idx] = x[idx];
                let fd = (above - below) / (2.0 * h);
                worst_fd = worst_fd.max((fd - grad[idx]).abs() / grad[idx].abs().max(1.0));
            }

            let dense = dense_gradient(&problem, &flows, &multipliers, node, &x, rho);
            for (d, g) in dense.iter().zip(&grad) {
                worst_dense = worst_dense.max((d - g).abs());
            }
            views += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let detail = format!(
        "{views} node views, fd rel {worst_fd:.1e}, dense abs {worst_dense:.1e}, {elapsed:.1}s"
    );
    let mut faults = Vec::new();
    if worst_fd >= 1e-6 {
        faults.push(format!("finite-difference mismatch {worst_fd:.1e}"));
    }
    if worst_dense >= 1e-10 {
        faults.push(format!("dense-oracle mismatch {worst_dense:.1e}"));
    }
    if elapsed >= 10.0 {
        faults.push(format!("over the 10s budget ({elapsed:.1}s)"));
    }
    verdict(detail, faults)
}

/// Criterion 2: a full benchmark solve under an instrumented recorder makes
/// zero reads outside the allowed footprint: flow state within two hops of
/// the viewer, multipliers within one hop.
fn locality_audit(
    runs: &mut Vec<SolvedRun>,
    scaled_armijo: &mut Option<ArmijoSummary>,
) -> Verdict {
    let start = Instant::now();
    let spec = benchmark_spec();
    let problem =
        build_problem(spec.scenario, spec.commodities).expect("benchmark instance builds");
    let audit = RecordingAudit::new();
    let outcome = adal::solve_with(&problem, &spec.adal, &audit)
        .map_err(|e| format!("solver failed: {e}"))?;

    let hoods = problem.neighborhoods();
    let flow_reads = audit.flow_reads();
    let multiplier_reads = audit.multiplier_reads();
    let mut faults = Vec::new();
    if flow_reads.is_empty() || multiplier_reads.is_empty() {
        faults.push("recorder saw no reads".to_string());
    }
    for &(viewer, from, _to) in &flow_reads {
        if from != viewer && hoods.two_hop(viewer).binary_search(&from).is_err() {
            faults.push(format!(
                "node {viewer} read flow state owned by node {from}, outside two hops"
            ));
            break;
        }
    }
    for &(viewer, owner) in &multiplier_reads {
        if owner != viewer && hoods.one_hop(viewer).binary_search(&owner).is_err() {
            faults.push(format!(
                "node {viewer} read the multiplier of node {owner}, outside one hop"
            ));
            break;
        }
    }
    if outcome.trace.stop != StopReason::ViolationTol {
        faults.push(format!(
            "run stopped on {} instead of converging",
            outcome.trace.stop.name()
        ));
    }
    let detail = format!(
        "{} flow + {} multiplier read patterns over {} outers, {:.0}s",
        flow_reads.len(),
        multiplier_reads.len(),
        outcome.trace.iterations,
        start.elapsed().as_secs_f64()
    );
    *scaled_armijo = Some(outcome.armijo);
    runs.push(SolvedRun {
        label: "benchmark adal (audited)".into(),
        problem,
        flows: outcome.flows,
    });
    verdict(detail, faults)
}

/// Criterion 3: both iterative solvers land within 0.5% of the
/// path-enumeration optimum, with violation under 1e-3, on two instances
/// small enough to enumerate; 60 seconds per solve. Also checks the lower
/// bound: an iterate may undershoot the optimum only through the demand it
/// has not delivered yet, priced at the steepest path marginal.
fn oracle_equivalence(runs: &mut Vec<SolvedRun>) -> Verdict {
    let mut faults = Vec::new();
    let mut details = Vec::new();
    let cases = [
        (
            "diamond",
            diamond_problem(2.0),
            // Large enough to forget the averaging transient quickly, small
            // enough to keep the raw iterate out of a limit cycle.
            PrimalDualConfig {
                alpha: 1e-2,
                max_iters: 4_000_000,
                violation_tol: 1e-3,
                trace_every: 1000,
            },
            AdalConfig::default(),
        ),
        (
            "grid3",
            grid3_problem(3.0),
            PrimalDualConfig {
                alpha: 5e-3,
                max_iters: 4_000_000,
                violation_tol: 1e-3,
                trace_every: 1000,
            },
            // Feasibility stalls at a few multiples of inner_tol, so the
            // default inner tolerance cannot certify 1e-3.
            AdalConfig {
                inner_tol: 1e-4,
                ..AdalConfig::default()
            },
        ),
    ];
    for (name, problem, pd_config, adal_config) in cases {
        let oracle = oracle_solve_small(&problem).expect("instance is enumerable");
        let steepest_marginal = oracle
            .paths
            .iter()
            .flatten()
            .map(|p| path_marginal_cost(&problem, &oracle.flows, p))
            .fold(0.0f64, f64::max);
        for solver in ["pd", "adal"] {
            let start = Instant::now();
            let (flows, stop) = match solver {
                "pd" => primal_dual::solve(&problem, &pd_config)
                    .map(|o| (o.flows, o.trace.stop))
                    .map_err(|e| format!("pd on {name}: {e}"))?,
                _ => adal::solve(&problem, &adal_config)
                    .map(|o| (o.flows, o.trace.stop))
                    .map_err(|e| format!("adal on {name}: {e}"))?,
            };
            let elapsed = start.elapsed().as_secs_f64();
            let objective = problem.objective(&flows);
            let violation = problem.violation(&flows);
            let gap = objective / oracle.objective - 1.0;
            details.push(format!(
                "{name}/{solver} gap {gap:+.1e} viol {violation:.1e} {elapsed:.1}s"
            ));
            if gap.abs() > 5e-3 {
                faults.push(format!("{name}/{solver}: gap {gap:+.1e} exceeds 0.5%"));
            }
            if violation >= 1e-3 {
                faults.push(format!("{name}/{solver}: violation {violation:.1e}"));
            }
            if stop != StopReason::ViolationTol {
                faults.push(format!("{name}/{solver}: stopped on {}", stop.name()));
            }
            if objective < oracle.objective - violation * steepest_marginal - 1e-9 {
                faults.push(format!(
                    "{name}/{solver}: objective undercuts the optimum beyond its feasibility slack"
                ));
            }
            if elapsed >= 60.0 {
                faults.push(format!("{name}/{solver}: over the 60s budget ({elapsed:.1}s)"));
            }
            runs.push(SolvedRun {
                label: format!("{name} {solver}"),
                problem: problem.clone(),
                flows,
            });
        }
    }
    verdict(details.join(", "), faults)
}

/// Criterion 4: for every solver output collected above, the recovered beam
/// power carries exactly the rate the flows placed on the arc:
/// `capacity(P, f)` returns the arc total to 1e-10.
fn capacity_saturation(runs: &[SolvedRun]) -> Verdict {
    let mut worst = 0.0f64;
    let mut arcs = 0usize;
    for run in runs {
        let power = run.problem.recover_powers(&run.flows);
        let scenario = run.problem.scenario();
        for a in 0..run.problem.num_arcs() {
            let arc = run.problem.topology().arc(a);
            let gain = scenario
                .path_loss(scenario.distance(arc.from, arc.to))
                .expect("arc lengths are positive");
            let back = capacity(power.arc_power_w[a], gain).expect("recovered power is valid");
            worst = worst.max((back - run.flows.arc_total(a)).abs());
            arcs += 1;
        }
    }
    let detail = format!("{arcs} arcs across {} outputs, worst {worst:.1e}", runs.len());
    let mut faults = Vec::new();
    if runs.is_empty() {
        faults.push("no solver outputs were collected".to_string());
    }
    if worst >= 1e-10 {
        faults.push(format!("rate reconstruction off by {worst:.1e}"));
    }
    verdict(detail, faults)
}

/// Criterion 5: the stock benchmark race. The augmented Lagrangian method
/// must spend at most a tenth of the baseline's intra-network power, match
/// or beat its station SNR, and certify violation 1e-2 in fewer iterations
/// than the primal-dual method; ten-minute budget for the whole race.
fn benchmark_orderings(runs: &mut Vec<SolvedRun>) -> Verdict {
    let start = Instant::now();
    let outcome = run_compare(&benchmark_spec()).map_err(|e| format!("compare failed: {e}"))?;
    let elapsed = start.elapsed().as_secs_f64();
    let [pd, adal, ospf] = &outcome.report.solvers[..] else {
        return Err("expected three solver summaries".into());
    };

    let milestone = |s: &beamflow_core::harness::SolverSummary| {
        s.milestones
            .iter()
            .find(|m| m.threshold == "1e-2")
            .and_then(|m| m.iters)
    };
    let adal_iters = milestone(adal);
    let pd_iters = milestone(pd);

    let mut faults = Vec::new();
    if !(adal.intra_power_w <= ospf.intra_power_w / 10.0) {
        faults.push(format!(
            "intra power {:.3} W not a tenth of the baseline's {:.3} W",
            adal.intra_power_w, ospf.intra_power_w
        ));
    }
    if !(adal.station_snr >= ospf.station_snr) {
        faults.push(format!(
            "station snr {:.6e} below the baseline's {:.6e}",
            adal.station_snr, ospf.station_snr
        ));
    }
    match (adal_iters, pd_iters) {
        (Some(a), Some(p)) if a < p => {}
        _ => faults.push(format!(
            "iterations to violation 1e-2 not ordered: adal {adal_iters:?} vs pd {pd_iters:?}"
        )),
    }
    for s in [pd, adal] {
        if s.stop != "violation_tol" {
            faults.push(format!("{} stopped on {} before reaching tolerance", s.solver, s.stop));
        }
    }
    if elapsed >= 600.0 {
        faults.push(format!("over the 10min budget ({elapsed:.0}s)"));
    }
    let detail = format!(
        "intra {:.3}/{:.3} W, snr {:.6e}/{:.6e}, 1e-2 iters {}/{}, {:.0}s",
        adal.intra_power_w,
        ospf.intra_power_w,
        adal.station_snr,
        ospf.station_snr,
        fmt_iters(adal_iters),
        fmt_iters(pd_iters),
        elapsed
    );
    for (summary, flows) in outcome.report.solvers.iter().zip(outcome.flows) {
        runs.push(SolvedRun {
            label: format!("benchmark {}", summary.solver),
            problem: outcome.problem.clone(),
            flows,
        });
    }
    verdict(detail, faults)
}

fn fmt_iters(iters: Option<usize>) -> String {
    iters.map_or_else(|| "never".to_string(), |i| i.to_string())
}

/// Criterion 6: preconditioning the inner solves must pay. Mean backtracking
/// trials per inner iteration stay under 5 with the constant diagonal and
/// strictly under the unscaled run's mean on the same instance.
fn line_search_scaling(scaled: Option<&ArmijoSummary>) -> Verdict {
    let scaled =
        scaled.ok_or_else(|| "no scaled run to compare against (criterion 2 failed)".to_string())?;
    let start = Instant::now();
    let spec = benchmark_spec();
    let problem =
        build_problem(spec.scenario, spec.commodities).expect("benchmark instance builds");
    let config = AdalConfig {
        scaling: ScalingMode::Unscaled,
        ..spec.adal
    };
    let unscaled = adal::solve(&problem, &config)
        .map_err(|e| format!("unscaled run failed: {e}"))?
        .armijo;

    let (lo, hi) = (scaled.mean_trials(), unscaled.mean_trials());
    let mut faults = Vec::new();
    if lo >= 5.0 {
        faults.push(format!("scaled mean {lo:.2} trials/iteration reaches 5"));
    }
    if !(lo < hi) {
        faults.push(format!("scaled mean {lo:.2} not below unscaled mean {hi:.2}"));
    }
    let detail = format!(
        "scaled {lo:.2} vs unscaled {hi:.2} trials/iteration, {:.0}s",
        start.elapsed().as_secs_f64()
    );
    verdict(detail, faults)
}

/// Criterion 7: structural properties. Objective convexity along random
/// chords, affinity of the conservation residuals in the flows,
/// nonnegativity of every collected output, bitwise thread-count
/// determinism of the outer sweep, and capacity/inverse round-trips.
fn property_suites(runs: &[SolvedRun]) -> Verdict {
    let mut faults = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let problem = grid3_problem(3.0);

    // f(lx + (1-l)y) <= l f(x) + (1-l) f(y) on random chords.
    let mut worst_convexity = f64::NEG_INFINITY;
    for _ in 0..60 {
        let x = random_flows(&problem, &mut rng);
        let y = random_flows(&problem, &mut rng);
        let (fx, fy) = (problem.objective(&x), problem.objective(&y));
        for lambda in [0.25, 0.5, 0.75] {
            let blend = blend_flows(&x, &y, lambda);
            let lhs = problem.objective(&blend);
            let rhs = lambda * fx + (1.0 - lambda) * fy;
            worst_convexity = worst_convexity.max((lhs - rhs) / rhs.abs().max(1.0));
        }
    }
    if worst_convexity >= 1e-9 {
        faults.push(format!("convexity violated by {worst_convexity:.1e}"));
    }

    // Residuals are affine in the flows: r(x+y) = r(x) + r(y) - r(0), the
    // constant offset being the demand vector.
    let zero_res = problem.conservation_residual(&problem.zero_flows());
    let mut worst_affine = 0.0f64;
    for _ in 0..40 {
        let x = random_flows(&problem, &mut rng);
        let y = random_flows(&problem, &mut rng);
        let rx = problem.conservation_residual(&x);
        let ry = problem.conservation_residual(&y);
        let rs = problem.conservation_residual(&add_flows(&x, &y));
        for i in 0..problem.num_nodes() {
            for k in 0..problem.num_commodities() {
                let expected = rx.get(i, k) + ry.get(i, k) - zero_res.get(i, k);
                worst_affine = worst_affine.max((rs.get(i, k) - expected).abs());
            }
        }
    }
    if worst_affine >= 1e-12 {
        faults.push(format!("residuals drift from affinity by {worst_affine:.1e}"));
    }

    // Every output any criterion produced stays entrywise nonnegative.
    for run in runs {
        if run.flows.min_value() < 0.0 {
            faults.push(format!("{} produced a negative flow", run.label));
        }
    }

    // The outer sweep reads one frozen snapshot per iteration, so worker
    // count must not change a single bit of the trajectory.
    let base = AdalConfig {
        inner_tol: 1e-4,
        violation_tol: 0.0,
        max_outer_iters: 30,
        threads: 1,
        ..AdalConfig::default()
    };
    let reference = adal::solve(&problem, &base).map_err(|e| format!("1-thread run: {e}"))?;
    for threads in [2, 4] {
        let config = AdalConfig {
            threads,
            ..base.clone()
        };
        let run = adal::solve(&problem, &config).map_err(|e| format!("{threads}-thread run: {e}"))?;
        if !bits_equal(reference.flows.as_slice(), run.flows.as_slice())
            || !bits_equal(
                reference.state.multipliers.as_slice(),
                run.state.multipliers.as_slice(),
            )
        {
            faults.push(format!(
                "{threads}-thread run left the single-thread trajectory"
            ));
        }
    }

    // capacity and capacity_inverse are mutual inverses over realistic
    // rates and link gains.
    let scenario = problem.scenario();
    let mut worst_roundtrip = 0.0f64;
    for _ in 0..100 {
        let rate = rng.gen_range(0.0..20.0);
        let gain = scenario
            .path_loss(rng.gen_range(50.0..5000.0))
            .expect("positive distance");
        let power = capacity_inverse(rate, gain).expect("valid rate");
        let back = capacity(power, gain).expect("valid power");
        worst_roundtrip = worst_roundtrip.max((back - rate).abs() / rate.abs().max(1.0));
    }
    if worst_roundtrip >= 1e-12 {
        faults.push(format!("capacity roundtrip off by {worst_roundtrip:.1e}"));
    }

    let detail = format!(
        "convexity excess {worst_convexity:.1e}, affinity {worst_affine:.1e}, \
         {} outputs checked, roundtrip {worst_roundtrip:.1e}",
        runs.len()
    );
    verdict(detail, faults)
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Connected digraph on 2..=6 nodes with 1..=3 commodities. Positions keep
/// 100 m apart and the station sits far outside the box, so arc weights and
/// penalty rows stay in a range where a 1e-10 absolute comparison is
/// meaningful.
fn random_instance(rng: &mut ChaCha8Rng) -> ProblemQ {
    let n: usize = rng.gen_range(2..=6);
    let mut positions: Vec<[f64; 2]> = Vec::new();
    'sampling: for _ in 0..10_000 {
        if positions.len() == n {
            break;
        }
        let p = [rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0)];
        for q in &positions {
            if (p[0] - q[0]).hypot(p[1] - q[1]) < 100.0 {
                continue 'sampling;
            }
        }
        positions.push(p);
    }
    assert_eq!(positions.len(), n, "position sampling starved");

    // Random spanning tree plus a few extra links, every link both ways.
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for i in 2..=n as u32 {
        let j = rng.gen_range(1..i);
        edges.push((j, i));
        edges.push((i, j));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let u = rng.gen_range(1..=n as u32);
        let v = rng.gen_range(1..=n as u32);
        if u != v && !edges.contains(&(u, v)) {
            edges.push((u, v));
            edges.push((v, u));
        }
    }

    let scenario = NetworkScenario {
        nodes: positions
            .iter()
            .enumerate()
            .map(|(i, &position)| NodeRecord {
                id: i as u32 + 1,
                position,
            })
            .collect(),
        station: [2500.0, 2500.0],
        edges,
        carrier_freq_hz: 1.0e9,
        bandwidth_hz: 5.0e6,
        noise_temp_k: 290.0,
        p_max_w: 100.0,
    };
    let commodities = CommoditySet::new(
        (0..rng.gen_range(1..=3))
            .map(|_| {
                let source = rng.gen_range(1..=n as u32);
                let mut sink = rng.gen_range(1..=n as u32);
                while sink == source {
                    sink = rng.gen_range(1..=n as u32);
                }
                Commodity {
                    source,
                    sink,
                    rate: rng.gen_range(0.5..4.0),
                }
            })
            .collect(),
    )
    .expect("generated commodities are valid");
    build_problem(scenario, commodities).expect("generated instance builds")
}

/// Random flows (with a sprinkling of exact zeros) and multipliers.
fn random_point(problem: &ProblemQ, rng: &mut ChaCha8Rng) -> (FlowState, DualState) {
    let mut flows = problem.zero_flows();
    for a in 0..problem.num_arcs() {
        for k in 0..problem.num_commodities() {
            if !rng.gen_bool(0.3) {
                flows.set(a, k, rng.gen_range(0.0..1.5));
            }
        }
    }
    let mut multipliers = DualState::zeros(problem.num_nodes(), problem.num_commodities());
    for i in 0..problem.num_nodes() {
        for k in 0..problem.num_commodities() {
            multipliers.set(i, k, rng.gen_range(-3.0..3.0));
        }
    }
    (flows, multipliers)
}

/// Rebuilds the local gradient from scratch with dense incidence matrices:
/// residuals come from `B x - d` with the candidate substituted on the
/// node's own arcs, the coupling from a full-row `B^T (lambda + rho r)`
/// sum. An arc's incidence column is zero outside its two endpoints, so the
/// full-row sum equals the view's touched-rows-only penalty gradient.
fn dense_gradient(
    problem: &ProblemQ,
    flows: &FlowState,
    multipliers: &DualState,
    node: usize,
    x: &[f64],
    rho: f64,
) -> Vec<f64> {
    let topology = problem.topology();
    let n = problem.num_nodes();
    let num_arcs = problem.num_arcs();
    let m = problem.num_commodities();
    let out: Vec<usize> = topology.out_arcs(node).to_vec();
    let deg = out.len();

    let mut incidence = vec![vec![0.0f64; num_arcs]; n];
    for a in 0..num_arcs {
        let arc = topology.arc(a);
        incidence[arc.from][a] = 1.0;
        incidence[arc.to][a] = -1.0;
    }

    let mut per_commodity = vec![vec![0.0f64; num_arcs]; m];
    for (k, xs) in per_commodity.iter_mut().enumerate() {
        for (a, value) in xs.iter_mut().enumerate() {
            *value = flows.get(a, k);
        }
        for (slot, &a) in out.iter().enumerate() {
            xs[a] = x[k * deg + slot];
        }
    }

    let mut g = vec![0.0; m * deg];
    for k in 0..m {
        let residual: Vec<f64> = (0..n)
            .map(|i| {
                let bx: f64 = (0..num_arcs).map(|a| incidence[i][a] * per_commodity[k][a]).sum();
                bx - problem.demand(i, k)
            })
            .collect();
        for (slot, &a) in out.iter().enumerate() {
            let total: f64 = (0..m).map(|kk| per_commodity[kk][a]).sum();
            let congestion = std::f64::consts::LN_2 * problem.weight(a) * total.exp2();
            let coupling: f64 = (0..n)
                .map(|i| incidence[i][a] * (multipliers.get(i, k) + rho * residual[i]))
                .sum();
            g[k * deg + slot] = congestion + coupling;
        }
    }
    g
}

/// Four nodes in a symmetric diamond: two equal-length two-arc routes from
/// node 1 to node 4.
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

/// 3 by 3 lattice with one corner-to-corner demand; off-lattice station
/// because the centroid default would land on the middle node.
fn grid3_problem(rate: f64) -> ProblemQ {
    let scenario = grid_scenario(&GridSpec {
        rows: 3,
        cols: 3,
        station: Some([-1000.0, -1000.0]),
        ..GridSpec::default()
    })
    .unwrap();
    let commodities = CommoditySet::new(vec![Commodity {
        source: 1,
        sink: 9,
        rate,
    }])
    .unwrap();
    build_problem(scenario, commodities).unwrap()
}

fn random_flows(problem: &ProblemQ, rng: &mut ChaCha8Rng) -> FlowState {
    let mut flows = problem.zero_flows();
    for a in 0..problem.num_arcs() {
        for k in 0..problem.num_commodities() {
            flows.set(a, k, rng.gen_range(0.0..2.0));
        }
    }
    flows
}

fn blend_flows(x: &FlowState, y: &FlowState, lambda: f64) -> FlowState {
    let values = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    FlowState::from_values(values, x.num_arcs(), x.num_commodities())
}

fn add_flows(x: &FlowState, y: &FlowState) -> FlowState {
    let values = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| a + b)
        .collect();
    FlowState::from_values(values, x.num_arcs(), x.num_commodities())
}
