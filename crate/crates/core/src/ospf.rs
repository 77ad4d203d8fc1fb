//! Shortest-path routing baseline.
//!
//! Routes every commodity along one shortest path, the way a link-state
//! protocol with additive costs would, and converts the result into a flow
//! assignment so it can be priced with the same power model as the
//! optimizing solvers. Ties between equal-cost paths are broken toward the
//! lexicographically smallest node sequence, which makes routes on symmetric
//! topologies deterministic.

use thiserror::Error;

use crate::problem::{FlowState, ProblemQ};

/// Arc cost driving the route choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMetric {
    /// Euclidean arc length.
    Distance,
    /// Unit cost per arc.
    Hops,
}

#[derive(Debug, Error)]
pub enum RouteError {
    /// Node ids of the commodity endpoints that could not be connected.
    #[error("no route from node {source_id} to node {sink_id}")]
    NoRoute { source_id: u32, sink_id: u32 },
}

fn arc_costs(problem: &ProblemQ, metric: EdgeMetric) -> Vec<f64> {
    let scenario = problem.scenario();
    problem
        .topology()
        .arcs()
        .iter()
        .map(|arc| match metric {
            EdgeMetric::Distance => scenario.distance(arc.from, arc.to),
            EdgeMetric::Hops => 1.0,
        })
        .collect()
}

/// Is candidate `(dist, path)` strictly better than the incumbent?
fn better(dist: f64, path: &[usize], incumbent: &Option<(f64, Vec<usize>)>) -> bool {
    match incumbent {
        None => true,
        Some((d, p)) => dist < *d || (dist == *d && path < p.as_slice()),
    }
}

/// Single-pair shortest path under the metric, as a node-index sequence
/// starting at `source` and ending at `sink`. Among equal-cost paths the
/// lexicographically smallest sequence wins. `None` when `sink` is
/// unreachable.
///
/// Dijkstra over the key `(distance, node sequence)`: costs are strictly
/// positive and a path is lexicographically larger than its own prefix, so
/// the key strictly grows along every arc and greedy settling is exact.
pub fn shortest_path(
    problem: &ProblemQ,
    metric: EdgeMetric,
    source: usize,
    sink: usize,
) -> Option<Vec<usize>> {
    let topology = problem.topology();
    let costs = arc_costs(problem, metric);
    let n = topology.num_nodes();
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
    let mut settled = vec![false; n];
    best[source] = Some((0.0, vec![source]));

    loop {
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if settled[i] {
                continue;
            }
            if let Some((d, p)) = &best[i] {
                if match pick {
                    None => true,
                    Some(j) => {
                        let (dj, pj) = best[j].as_ref().unwrap();
                        *d < *dj || (*d == *dj && p < pj)
                    }
                } {
                    pick = Some(i);
                }
            }
        }
        let Some(u) = pick else { break };
        settled[u] = true;
        if u == sink {
            break;
        }
        let (du, pu) = best[u].clone().unwrap();
        for &a in topology.out_arcs(u) {
            let arc = topology.arc(a);
            if settled[arc.to] {
                continue;
            }
            let dist = du + costs[a];
            let mut path = pu.clone();
            path.push(arc.to);
            if better(dist, &path, &best[arc.to]) {
                best[arc.to] = Some((dist, path));
            }
        }
    }

    best[sink].take().map(|(_, path)| path)
}

/// Single-path routes for every commodity.
#[derive(Debug, Clone)]
pub struct OspfRoute {
    /// Node-index path per commodity, in commodity order.
    pub paths: Vec<Vec<usize>>,
    /// Each commodity's whole rate placed on its path's arcs.
    pub flows: FlowState,
}

/// Routes each commodity along its metric-shortest path and loads the full
/// rate onto every arc of that path.
pub fn route_ospf(problem: &ProblemQ, metric: EdgeMetric) -> Result<OspfRoute, RouteError> {
    let topology = problem.topology();
    let mut flows = problem.zero_flows();
    let mut paths = Vec::with_capacity(problem.num_commodities());
    for (m, c) in problem.commodities().iter().enumerate() {
        let source = problem.scenario().node_index(c.source).expect("validated");
        let sink = problem.scenario().node_index(c.sink).expect("validated");
        let path = shortest_path(problem, metric, source, sink).ok_or(RouteError::NoRoute {
            source_id: c.source,
            sink_id: c.sink,
        })?;
        for pair in path.windows(2) {
            let arc = topology
                .arc_index(pair[0], pair[1])
                .expect("consecutive path nodes share an arc");
            flows.set(arc, m, flows.get(arc, m) + c.rate);
        }
        paths.push(path);
    }
    Ok(OspfRoute { paths, flows })
}
