//! Network geometry, graph topology, and RF link math.
//!
//! A scenario is a set of nodes on the plane, a central station, a directed
//! arc set, and the radio constants shared by every link. Link quality is
//! distance-driven: `path_loss` folds noise density, bandwidth, and spreading
//! loss into a single factor `f` such that a beam transmitting `P` watts over
//! a link with factor `f` sees SNR `f * P`.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Boltzmann constant, J/K (exact SI value).
pub const BOLTZMANN_J_PER_K: f64 = 1.380649e-23;
/// Speed of light, m/s (exact SI value).
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum RfError {
    #[error("path loss needs a positive finite distance, got {0} m")]
    BadDistance(f64),
    #[error("link capacity needs a nonnegative finite power, got {0} W")]
    BadPower(f64),
    #[error("inverse capacity needs a nonnegative finite rate, got {0}")]
    BadRate(f64),
    #[error("path loss factor must be positive and finite, got {0}")]
    BadGain(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u32,
    /// Planar position in meters.
    pub position: [f64; 2],
}

/// A deployed network: node geometry, directed arcs, and RF constants.
///
/// Node ids are externally visible and must be exactly `1..=N`. Arcs are
/// directed; an undirected link is two arcs. All distances feeding the link
/// math must be strictly positive, which `validate` enforces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub nodes: Vec<NodeRecord>,
    /// Central station position in meters.
    pub station: [f64; 2],
    /// Directed arcs as `(from_id, to_id)` pairs.
    pub edges: Vec<(u32, u32)>,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_temp_k: f64,
    /// Per-node transmit power budget, watts.
    pub p_max_w: f64,
}

/// On-disk form. Identical to [`NetworkScenario`] except for the optional
/// `undirected` flag, which expands each listed pair into both arcs on load.
#[derive(Deserialize)]
struct ScenarioFile {
    nodes: Vec<NodeRecord>,
    station: [f64; 2],
    edges: Vec<(u32, u32)>,
    #[serde(default)]
    undirected: bool,
    carrier_freq_hz: f64,
    bandwidth_hz: f64,
    noise_temp_k: f64,
    p_max_w: f64,
}

impl NetworkScenario {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Index of the node with the given external id.
    pub fn node_index(&self, id: u32) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn position(&self, index: usize) -> [f64; 2] {
        self.nodes[index].position
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        dist(self.nodes[a].position, self.nodes[b].position)
    }

    pub fn station_distance(&self, a: usize) -> f64 {
        dist(self.nodes[a].position, self.station)
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_PER_S / self.carrier_freq_hz
    }

    /// Thermal noise density kT, W/Hz.
    pub fn noise_density_w_per_hz(&self) -> f64 {
        BOLTZMANN_J_PER_K * self.noise_temp_k
    }

    /// Path loss factor `f` for a link of the given length: the SNR produced
    /// per transmitted watt, `1 / (kT * W * (4 pi / lambda)^2 * d^2)`.
    pub fn path_loss(&self, distance_m: f64) -> Result<f64, RfError> {
        if !distance_m.is_finite() || distance_m <= 0.0 {
            return Err(RfError::BadDistance(distance_m));
        }
        let spreading = 4.0 * PI / self.wavelength_m();
        let denom = self.noise_density_w_per_hz()
            * self.bandwidth_hz
            * spreading
            * spreading
            * distance_m
            * distance_m;
        Ok(1.0 / denom)
    }

    /// Checks every structural and physical constraint, reporting the first
    /// violated field by name.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |field: &'static str, reason: String| ScenarioError::Invalid { field, reason };

        if self.nodes.is_empty() {
            return Err(invalid("nodes", "scenario has no nodes".into()));
        }
        let n = self.nodes.len() as u32;
        let mut seen = HashSet::new();
        for node in &self.nodes {
            if node.id < 1 || node.id > n {
                return Err(invalid(
                    "nodes",
                    format!("node id {} outside contiguous range 1..={n}", node.id),
                ));
            }
            if !seen.insert(node.id) {
                return Err(invalid("nodes", format!("duplicate node id {}", node.id)));
            }
            if !node.position.iter().all(|c| c.is_finite()) {
                return Err(invalid(
                    "nodes",
                    format!("node {} has a non-finite position", node.id),
                ));
            }
        }
        if !self.station.iter().all(|c| c.is_finite()) {
            return Err(invalid("station", "station position is not finite".into()));
        }

        let mut arcs = HashSet::new();
        for &(from, to) in &self.edges {
            if from == to {
                return Err(invalid("edges", format!("self-loop at node {from}")));
            }
            for id in [from, to] {
                if self.node_index(id).is_none() {
                    return Err(invalid("edges", format!("arc endpoint {id} is not a node")));
                }
            }
            if !arcs.insert((from, to)) {
                return Err(invalid("edges", format!("duplicate arc ({from}, {to})")));
            }
        }

        for (field, value) in [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_temp_k", self.noise_temp_k),
            ("p_max_w", self.p_max_w),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(invalid(field, format!("must be positive and finite, got {value}")));
            }
        }

        // Every distance the link math touches must be strictly positive:
        // arc lengths, and each node's range to the station (every node keeps
        // a station beam regardless of its arcs).
        for &(from, to) in &self.edges {
            let a = self.node_index(from).unwrap();
            let b = self.node_index(to).unwrap();
            if self.distance(a, b) <= 0.0 {
                return Err(invalid(
                    "edges",
                    format!("nodes {from} and {to} are coincident"),
                ));
            }
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if self.station_distance(idx) <= 0.0 {
                return Err(invalid(
                    "station",
                    format!("node {} is coincident with the station", node.id),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let mut edges = file.edges;
        if file.undirected {
            let reversed: Vec<(u32, u32)> = edges.iter().map(|&(a, b)| (b, a)).collect();
            edges.extend(reversed);
        }
        let scenario = NetworkScenario {
            nodes: file.nodes,
            station: file.station,
            edges,
            carrier_freq_hz: file.carrier_freq_hz,
            bandwidth_hz: file.bandwidth_hz,
            noise_temp_k: file.noise_temp_k,
            p_max_w: file.p_max_w,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario serializes");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json_string()).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Shannon rate of a link in bits/s/Hz: `log2(1 + f * P)`.
pub fn capacity(power_w: f64, gain: f64) -> Result<f64, RfError> {
    if !power_w.is_finite() || power_w < 0.0 {
        return Err(RfError::BadPower(power_w));
    }
    check_gain(gain)?;
    Ok((gain * power_w).ln_1p() / std::f64::consts::LN_2)
}

/// Power needed to carry `rate` bits/s/Hz over a link with path loss factor
/// `gain`: `(2^rate - 1) / f`. Mutual inverse of [`capacity`].
pub fn capacity_inverse(rate: f64, gain: f64) -> Result<f64, RfError> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(RfError::BadRate(rate));
    }
    check_gain(gain)?;
    Ok((rate * std::f64::consts::LN_2).exp_m1() / gain)
}

fn check_gain(gain: f64) -> Result<(), RfError> {
    if !gain.is_finite() || gain <= 0.0 {
        return Err(RfError::BadGain(gain));
    }
    Ok(())
}

/// A directed arc between node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
}

/// Indexed arc structure over a validated scenario. Arc ids are assigned in
/// `(from, to)` order, so they are stable under reordering of the edge list.
#[derive(Debug, Clone)]
pub struct Topology {
    arcs: Vec<Arc>,
    out_arcs: Vec<Vec<usize>>,
    in_arcs: Vec<Vec<usize>>,
}

impl Topology {
    pub fn from_scenario(scenario: &NetworkScenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let n = scenario.node_count();
        let mut arcs: Vec<Arc> = scenario
            .edges
            .iter()
            .map(|&(from, to)| Arc {
                from: scenario.node_index(from).unwrap(),
                to: scenario.node_index(to).unwrap(),
            })
            .collect();
        arcs.sort_by_key(|a| (a.from, a.to));

        let mut out_arcs = vec![Vec::new(); n];
        let mut in_arcs = vec![Vec::new(); n];
        for (idx, arc) in arcs.iter().enumerate() {
            out_arcs[arc.from].push(idx);
            in_arcs[arc.to].push(idx);
        }
        Ok(Topology {
            arcs,
            out_arcs,
            in_arcs,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.out_arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn arc(&self, id: usize) -> Arc {
        self.arcs[id]
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn out_arcs(&self, node: usize) -> &[usize] {
        &self.out_arcs[node]
    }

    pub fn in_arcs(&self, node: usize) -> &[usize] {
        &self.in_arcs[node]
    }

    pub fn arc_index(&self, from: usize, to: usize) -> Option<usize> {
        self.arcs
            .binary_search_by_key(&(from, to), |a| (a.from, a.to))
            .ok()
    }
}

/// One- and two-hop neighbor sets per node, all sorted by node index.
///
/// `one_hop(i)` is the undirected neighbor set (out or in arc either way);
/// `two_hop(i)` additionally holds every neighbor-of-a-neighbor other than
/// `i` itself. Distributed solvers are allowed to read flow state from
/// `two_hop(i)` and multipliers from `one_hop(i)` only.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    out: Vec<Vec<usize>>,
    inward: Vec<Vec<usize>>,
    one_hop: Vec<Vec<usize>>,
    two_hop: Vec<Vec<usize>>,
    max_degree: usize,
}

impl Neighborhoods {
    pub fn build(topology: &Topology) -> Self {
        let n = topology.num_nodes();
        let mut out = vec![Vec::new(); n];
        let mut inward = vec![Vec::new(); n];
        for arc in topology.arcs() {
            out[arc.from].push(arc.to);
            inward[arc.to].push(arc.from);
        }
        let mut one_hop = Vec::with_capacity(n);
        for i in 0..n {
            out[i].sort_unstable();
            out[i].dedup();
            inward[i].sort_unstable();
            inward[i].dedup();
            let mut union = out[i].clone();
            union.extend_from_slice(&inward[i]);
            union.sort_unstable();
            union.dedup();
            one_hop.push(union);
        }
        let mut two_hop = Vec::with_capacity(n);
        for i in 0..n {
            let mut reach = one_hop[i].clone();
            for &j in &one_hop[i] {
                reach.extend(one_hop[j].iter().copied().filter(|&k| k != i));
            }
            reach.sort_unstable();
            reach.dedup();
            two_hop.push(reach);
        }
        let max_degree = one_hop.iter().map(Vec::len).max().unwrap_or(0);
        Neighborhoods {
            out,
            inward,
            one_hop,
            two_hop,
            max_degree,
        }
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.inward[i]
    }

    pub fn one_hop(&self, i: usize) -> &[usize] {
        &self.one_hop[i]
    }

    pub fn two_hop(&self, i: usize) -> &[usize] {
        &self.two_hop[i]
    }

    /// Maximum undirected degree over all nodes.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }
}

/// Parameters for the rectangular-lattice scenario generator.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    /// Each coordinate is perturbed uniformly in `[-jitter_m, jitter_m]`.
    pub jitter_m: f64,
    pub seed: u64,
    /// Station position; defaults to the centroid of the deployed nodes.
    /// On odd unjittered grids the centroid coincides with the middle node,
    /// which validation rejects; pass an explicit position there.
    pub station: Option<[f64; 2]>,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_temp_k: f64,
    pub p_max_w: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 6,
            cols: 6,
            spacing_m: 1000.0,
            jitter_m: 0.0,
            seed: 0,
            station: None,
            carrier_freq_hz: 1.0e9,
            bandwidth_hz: 5.0e6,
            noise_temp_k: 290.0,
            p_max_w: 100.0,
        }
    }
}

/// Builds a rows x cols lattice with 4-adjacency, both arc directions per
/// link. Node ids are 1-based in row-major order; node `k` sits near
/// `(col * spacing, row * spacing)`. Same spec (including seed) always
/// produces the identical scenario.
pub fn grid_scenario(spec: &GridSpec) -> Result<NetworkScenario, ScenarioError> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(ScenarioError::Invalid {
            field: "nodes",
            reason: "grid needs at least one row and column".into(),
        });
    }
    if !spec.spacing_m.is_finite() || spec.spacing_m <= 0.0 {
        return Err(ScenarioError::Invalid {
            field: "nodes",
            reason: format!("grid spacing must be positive, got {}", spec.spacing_m),
        });
    }
    if !spec.jitter_m.is_finite() || spec.jitter_m < 0.0 {
        return Err(ScenarioError::Invalid {
            field: "nodes",
            reason: format!("jitter must be nonnegative, got {}", spec.jitter_m),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Uniform::new_inclusive(-spec.jitter_m, spec.jitter_m);
    let mut nodes = Vec::with_capacity(spec.rows * spec.cols);
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let id = (row * spec.cols + col + 1) as u32;
            let mut position = [col as f64 * spec.spacing_m, row as f64 * spec.spacing_m];
            if spec.jitter_m > 0.0 {
                position[0] += jitter.sample(&mut rng);
                position[1] += jitter.sample(&mut rng);
            }
            nodes.push(NodeRecord { id, position });
        }
    }

    let station = spec.station.unwrap_or_else(|| {
        let n = nodes.len() as f64;
        let sum = nodes
            .iter()
            .fold([0.0, 0.0], |acc, node| {
                [acc[0] + node.position[0], acc[1] + node.position[1]]
            });
        [sum[0] / n, sum[1] / n]
    });

    let mut edges = Vec::new();
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let id = (row * spec.cols + col + 1) as u32;
            if col + 1 < spec.cols {
                edges.push((id, id + 1));
                edges.push((id + 1, id));
            }
            if row + 1 < spec.rows {
                let below = id + spec.cols as u32;
                edges.push((id, below));
                edges.push((below, id));
            }
        }
    }

    let scenario = NetworkScenario {
        nodes,
        station,
        edges,
        carrier_freq_hz: spec.carrier_freq_hz,
        bandwidth_hz: spec.bandwidth_hz,
        noise_temp_k: spec.noise_temp_k,
        p_max_w: spec.p_max_w,
    };
    scenario.validate()?;
    Ok(scenario)
}
