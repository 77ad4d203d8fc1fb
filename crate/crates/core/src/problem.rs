//! The convex flow problem behind beam power allocation.
//!
//! Each commodity is a point-to-point traffic demand. A flow assignment gives
//! every arc a total rate; carrying that rate costs transmit power that grows
//! as `2^rate`, weighted per arc by how much station-link SNR the transmitter
//! gives up per watt spent on the arc. Minimizing the weighted sum is the
//! same as maximizing the power left over for everyone's station beams.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{
    capacity_inverse, Neighborhoods, NetworkScenario, RfError, ScenarioError, Topology,
};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Rf(#[from] RfError),
    #[error("invalid commodity {index}: {reason}")]
    BadCommodity { index: usize, reason: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse commodity JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One traffic demand: `rate` bits/s/Hz from `source` to `sink`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Commodity {
    pub source: u32,
    pub sink: u32,
    pub rate: f64,
}

/// Validated list of commodities.
#[derive(Debug, Clone, PartialEq)]
pub struct CommoditySet {
    commodities: Vec<Commodity>,
}

impl CommoditySet {
    pub fn new(commodities: Vec<Commodity>) -> Result<Self, ProblemError> {
        for (index, c) in commodities.iter().enumerate() {
            if c.source == c.sink {
                return Err(ProblemError::BadCommodity {
                    index,
                    reason: format!("source and sink are both node {}", c.source),
                });
            }
            if !c.rate.is_finite() || c.rate <= 0.0 {
                return Err(ProblemError::BadCommodity {
                    index,
                    reason: format!("rate must be positive and finite, got {}", c.rate),
                });
            }
        }
        Ok(CommoditySet { commodities })
    }

    pub fn as_slice(&self) -> &[Commodity] {
        &self.commodities
    }

    pub fn len(&self) -> usize {
        self.commodities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commodities.is_empty()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ProblemError> {
        let commodities: Vec<Commodity> = serde_json::from_str(text)?;
        Self::new(commodities)
    }

    pub fn to_json_string(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(&self.commodities).expect("commodities serialize");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> Result<Self, ProblemError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProblemError> {
        std::fs::write(path, self.to_json_string()).map_err(|source| ProblemError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Per-arc, per-commodity flow rates. Arc-major: all commodities of arc 0,
/// then arc 1, and so on. Entries are nonnegative by construction; `set`
/// rejects anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    values: Vec<f64>,
    num_arcs: usize,
    num_commodities: usize,
}

impl FlowState {
    pub fn zeros(num_arcs: usize, num_commodities: usize) -> Self {
        FlowState {
            values: vec![0.0; num_arcs * num_commodities],
            num_arcs,
            num_commodities,
        }
    }

    pub fn from_values(values: Vec<f64>, num_arcs: usize, num_commodities: usize) -> Self {
        assert_eq!(values.len(), num_arcs * num_commodities);
        assert!(
            values.iter().all(|&v| v >= 0.0),
            "flow values must be nonnegative"
        );
        FlowState {
            values,
            num_arcs,
            num_commodities,
        }
    }

    pub fn num_arcs(&self) -> usize {
        self.num_arcs
    }

    pub fn num_commodities(&self) -> usize {
        self.num_commodities
    }

    #[inline]
    pub fn get(&self, arc: usize, commodity: usize) -> f64 {
        self.values[arc * self.num_commodities + commodity]
    }

    #[inline]
    pub fn set(&mut self, arc: usize, commodity: usize, value: f64) {
        assert!(value >= 0.0, "flow values must be nonnegative, got {value}");
        self.values[arc * self.num_commodities + commodity] = value;
    }

    /// Total rate carried by an arc across all commodities.
    #[inline]
    pub fn arc_total(&self, arc: usize) -> f64 {
        let base = arc * self.num_commodities;
        self.values[base..base + self.num_commodities].iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Per-node, per-commodity scalars: Lagrange multipliers or prices.
/// Node-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    values: Vec<f64>,
    num_nodes: usize,
    num_commodities: usize,
}

impl DualState {
    pub fn zeros(num_nodes: usize, num_commodities: usize) -> Self {
        DualState {
            values: vec![0.0; num_nodes * num_commodities],
            num_nodes,
            num_commodities,
        }
    }

    #[inline]
    pub fn get(&self, node: usize, commodity: usize) -> f64 {
        self.values[node * self.num_commodities + commodity]
    }

    #[inline]
    pub fn set(&mut self, node: usize, commodity: usize, value: f64) {
        self.values[node * self.num_commodities + commodity] = value;
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_commodities(&self) -> usize {
        self.num_commodities
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Flow-conservation residuals: `outflow - inflow - demand` per node and
/// commodity. Zero everywhere means the flow routes every demand exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    values: Vec<f64>,
    num_nodes: usize,
    num_commodities: usize,
}

impl Residuals {
    #[inline]
    pub fn get(&self, node: usize, commodity: usize) -> f64 {
        self.values[node * self.num_commodities + commodity]
    }

    /// Sum of absolute residuals, the violation metric used for stopping
    /// rules and cross-solver comparisons.
    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Per-node power split implied by a flow assignment.
#[derive(Debug, Clone, Serialize)]
pub struct NodeBudget {
    pub node_id: u32,
    /// Power spent on this node's outgoing arcs, watts.
    pub intra_power_w: f64,
    /// What remains for the station beam: `p_max - intra`. Negative when the
    /// budget is blown, in which case `feasible` is false.
    pub station_power_w: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerReport {
    pub arc_power_w: Vec<f64>,
    pub nodes: Vec<NodeBudget>,
    pub total_intra_power_w: f64,
    pub all_feasible: bool,
}

impl PowerReport {
    /// Writes `node,intra_power_w,station_power_w,feasible` rows.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "node,intra_power_w,station_power_w,feasible")?;
        for n in &self.nodes {
            writeln!(
                out,
                "{},{},{},{}",
                n.node_id, n.intra_power_w, n.station_power_w, n.feasible
            )?;
        }
        out.flush()
    }
}

/// A fully prepared problem instance: validated scenario, arc indexing,
/// neighbor sets, per-arc objective weights, and the demand vector.
#[derive(Debug, Clone)]
pub struct ProblemQ {
    scenario: NetworkScenario,
    topology: Topology,
    neighborhoods: Neighborhoods,
    commodities: CommoditySet,
    /// Objective weight per arc: station-link SNR lost per unit of arc SNR,
    /// `f_station(from) / f_arc = (d_arc / d_station(from))^2`.
    weights: Vec<f64>,
    /// Path loss factor per arc.
    arc_gain: Vec<f64>,
    /// Path loss factor of each node's station link.
    station_gain: Vec<f64>,
    /// Net supply per node and commodity: `+rate` at the source, `-rate` at
    /// the sink, zero elsewhere. Node-major.
    demand: Vec<f64>,
}

pub fn build_problem(
    scenario: NetworkScenario,
    commodities: CommoditySet,
) -> Result<ProblemQ, ProblemError> {
    let topology = Topology::from_scenario(&scenario)?;
    let neighborhoods = Neighborhoods::build(&topology);
    let n = scenario.node_count();
    let m = commodities.len();

    let station_gain: Vec<f64> = (0..n)
        .map(|i| scenario.path_loss(scenario.station_distance(i)))
        .collect::<Result<_, _>>()?;
    let mut arc_gain = Vec::with_capacity(topology.num_arcs());
    let mut weights = Vec::with_capacity(topology.num_arcs());
    for arc in topology.arcs() {
        let gain = scenario.path_loss(scenario.distance(arc.from, arc.to))?;
        arc_gain.push(gain);
        weights.push(station_gain[arc.from] / gain);
    }

    let mut demand = vec![0.0; n * m];
    for (index, c) in commodities.as_slice().iter().enumerate() {
        let err = |reason: String| ProblemError::BadCommodity { index, reason };
        let source = scenario
            .node_index(c.source)
            .ok_or_else(|| err(format!("source {} is not a node", c.source)))?;
        let sink = scenario
            .node_index(c.sink)
            .ok_or_else(|| err(format!("sink {} is not a node", c.sink)))?;
        demand[source * m + index] += c.rate;
        demand[sink * m + index] -= c.rate;
    }

    Ok(ProblemQ {
        scenario,
        topology,
        neighborhoods,
        commodities,
        weights,
        arc_gain,
        station_gain,
        demand,
    })
}

impl ProblemQ {
    pub fn scenario(&self) -> &NetworkScenario {
        &self.scenario
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn neighborhoods(&self) -> &Neighborhoods {
        &self.neighborhoods
    }

    pub fn commodities(&self) -> &[Commodity] {
        self.commodities.as_slice()
    }

    pub fn num_nodes(&self) -> usize {
        self.scenario.node_count()
    }

    pub fn num_arcs(&self) -> usize {
        self.topology.num_arcs()
    }

    pub fn num_commodities(&self) -> usize {
        self.commodities.len()
    }

    pub fn node_id(&self, index: usize) -> u32 {
        self.scenario.nodes[index].id
    }

    pub fn weight(&self, arc: usize) -> f64 {
        self.weights[arc]
    }

    pub fn arc_gain(&self, arc: usize) -> f64 {
        self.arc_gain[arc]
    }

    pub fn station_gain(&self, node: usize) -> f64 {
        self.station_gain[node]
    }

    pub fn demand(&self, node: usize, commodity: usize) -> f64 {
        self.demand[node * self.num_commodities() + commodity]
    }

    pub fn zero_flows(&self) -> FlowState {
        FlowState::zeros(self.num_arcs(), self.num_commodities())
    }

    fn check_dims(&self, x: &FlowState) {
        assert_eq!(x.num_arcs(), self.num_arcs(), "flow state arc count");
        assert_eq!(
            x.num_commodities(),
            self.num_commodities(),
            "flow state commodity count"
        );
    }

    /// Objective of the flow problem: `sum_a w_a * 2^(total rate on a)`.
    /// Strictly convex in each arc total and separable across arcs.
    pub fn objective(&self, x: &FlowState) -> f64 {
        self.check_dims(x);
        (0..self.num_arcs())
            .map(|a| self.weights[a] * x.arc_total(a).exp2())
            .sum()
    }

    pub fn conservation_residual(&self, x: &FlowState) -> Residuals {
        self.check_dims(x);
        let m = self.num_commodities();
        let mut values = self.demand.iter().map(|d| -d).collect::<Vec<f64>>();
        for (a, arc) in self.topology.arcs().iter().enumerate() {
            for k in 0..m {
                let v = x.get(a, k);
                values[arc.from * m + k] += v;
                values[arc.to * m + k] -= v;
            }
        }
        Residuals {
            values,
            num_nodes: self.num_nodes(),
            num_commodities: m,
        }
    }

    /// L1 norm of the conservation residuals.
    pub fn violation(&self, x: &FlowState) -> f64 {
        self.conservation_residual(x).l1()
    }

    /// Converts flow rates back to beam powers. Each arc gets exactly the
    /// power that makes its capacity equal its carried rate; each node's
    /// station beam gets whatever the budget leaves.
    pub fn recover_powers(&self, x: &FlowState) -> PowerReport {
        self.check_dims(x);
        let arc_power_w: Vec<f64> = (0..self.num_arcs())
            .map(|a| {
                capacity_inverse(x.arc_total(a), self.arc_gain[a])
                    .expect("flow totals are nonnegative and gains are validated")
            })
            .collect();

        let p_max = self.scenario.p_max_w;
        let mut nodes = Vec::with_capacity(self.num_nodes());
        let mut total = 0.0;
        let mut all_feasible = true;
        for i in 0..self.num_nodes() {
            let intra: f64 = self.topology.out_arcs(i).iter().map(|&a| arc_power_w[a]).sum();
            let station = p_max - intra;
            let feasible = station >= 0.0;
            all_feasible &= feasible;
            total += intra;
            nodes.push(NodeBudget {
                node_id: self.node_id(i),
                intra_power_w: intra,
                station_power_w: station,
                feasible,
            });
        }
        PowerReport {
            arc_power_w,
            nodes,
            total_intra_power_w: total,
            all_feasible,
        }
    }

    /// Sum of station-link SNRs under the given power split.
    pub fn station_received_snr(&self, report: &PowerReport) -> f64 {
        report
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| n.station_power_w * self.station_gain[i])
            .sum()
    }

    /// Aggregate uplink rate at the station in bits/s, treating the combined
    /// station-link SNR as one wideband channel.
    pub fn station_rate_bps(&self, report: &PowerReport) -> f64 {
        let snr = self.station_received_snr(report);
        self.scenario.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2
    }
}

/// Conservation residuals gathered the way a distributed node would: each
/// node sums only its own incident arcs, reporting every read. Node-major
/// layout, same as [`Residuals`].
pub(crate) fn local_node_residuals(
    problem: &ProblemQ,
    flows: &FlowState,
    recorder: &impl crate::audit::AccessRecorder,
) -> Vec<f64> {
    let m = problem.num_commodities();
    let topology = problem.topology();
    let mut residuals = vec![0.0; problem.num_nodes() * m];
    for i in 0..problem.num_nodes() {
        for k in 0..m {
            let mut r = -problem.demand(i, k);
            for &a in topology.out_arcs(i) {
                r += flows.get(a, k);
            }
            for &a in topology.in_arcs(i) {
                r -= flows.get(a, k);
            }
            residuals[i * m + k] = r;
        }
        for &a in topology.out_arcs(i).iter().chain(topology.in_arcs(i)) {
            let arc = topology.arc(a);
            recorder.flow_read(i, arc.from, arc.to);
        }
    }
    residuals
}
