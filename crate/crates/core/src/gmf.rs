//! Generalized mean field: q(x) = prod_c q_c(x_{C_c}) over disjoint clusters.
//!
//! Each cluster marginal is an explicit table over the 2^m configurations of
//! its members. Bit b of a table index is member b's spin (1 = +1, 0 = -1),
//! members in ascending node order.
//!
//! A cluster update sets
//!
//! ```text
//! q_c(x_C) ∝ exp{ sum_{cliques inside C} theta phi(x) + sum_{border cliques} theta <phi>_{other clusters} }
//! ```
//!
//! For a border edge (i, j) with i in C the peripheral potential is
//! x_i <x_j>, so the border terms reduce to an extra field on i.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mrf::{data_lines, fmt_real, next_line, parse_f64, parse_usize, MarkovRandomField};
use crate::partition::Partition;
use crate::rng;

pub const MAX_CLUSTER_SIZE: usize = 16;
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GmfState {
    partition: Partition,
    members: Vec<Vec<usize>>,
    tables: Vec<Vec<f64>>,
}

fn check_cluster_sizes(partition: &Partition) -> Result<()> {
    let largest = partition.max_cluster_size();
    if largest > MAX_CLUSTER_SIZE {
        return Err(Error::Capacity { what: "cluster size", got: largest, limit: MAX_CLUSTER_SIZE });
    }
    Ok(())
}

impl GmfState {
    pub fn uniform(partition: Partition) -> Result<Self> {
        check_cluster_sizes(&partition)?;
        let members = partition.clusters();
        let tables = members.iter().map(|m| vec![1.0 / (1usize << m.len()) as f64; 1 << m.len()]).collect();
        Ok(Self { partition, members, tables })
    }

    /// Independent flat-Dirichlet draw for every table.
    pub fn random(partition: Partition, seed: u64) -> Result<Self> {
        let mut state = Self::uniform(partition)?;
        let mut rng = rng::from_seed(seed);
        for t in &mut state.tables {
            for v in t.iter_mut() {
                *v = -(1.0 - rng.random::<f64>()).ln();
            }
            let s: f64 = t.iter().sum();
            t.iter_mut().for_each(|v| *v /= s);
        }
        Ok(state)
    }

    /// Tables must have 2^|C_c| nonnegative entries; normalization is checked
    /// separately by [`GmfState::check_normalized`].
    pub fn from_tables(partition: Partition, tables: Vec<Vec<f64>>) -> Result<Self> {
        check_cluster_sizes(&partition)?;
        let members = partition.clusters();
        if tables.len() != members.len() {
            return Err(Error::InvalidArgument(format!("{} tables for {} clusters", tables.len(), members.len())));
        }
        for (c, (t, m)) in tables.iter().zip(&members).enumerate() {
            if t.len() != 1 << m.len() {
                return Err(Error::InvalidArgument(format!(
                    "table {c} has {} entries, expected {}",
                    t.len(),
                    1usize << m.len()
                )));
            }
            if t.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument(format!("table {c} has a negative or non-finite entry")));
            }
        }
        Ok(Self { partition, members, tables })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    pub fn table(&self, cluster: usize) -> &[f64] {
        &self.tables[cluster]
    }

    pub fn set_table(&mut self, cluster: usize, table: Vec<f64>) {
        assert_eq!(table.len(), self.tables[cluster].len());
        self.tables[cluster] = table;
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        for (c, t) in self.tables.iter().enumerate() {
            let sum: f64 = t.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Unnormalized { cluster: c, sum });
            }
        }
        Ok(())
    }

    /// P(X_i = +1) for every node.
    pub fn singleton_marginals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.partition.n()];
        for (members, table) in self.members.iter().zip(&self.tables) {
            for (b, &node) in members.iter().enumerate() {
                out[node] = table.iter().enumerate().filter(|(s, _)| s >> b & 1 == 1).map(|(_, p)| p).sum();
            }
        }
        out
    }

    /// <X_i> = 2 P(X_i = +1) - 1.
    pub fn means(&self) -> Vec<f64> {
        self.singleton_marginals().into_iter().map(|p| 2.0 * p - 1.0).collect()
    }

    /// Sum of cluster entropies.
    pub fn entropy(&self) -> f64 {
        self.tables.iter().flat_map(|t| t.iter()).filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
    }

    /// Text form: a line with k, then per cluster a line of node ids and a
    /// line of its 2^m table entries.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.members.len());
        for (members, table) in self.members.iter().zip(&self.tables) {
            let ids: Vec<String> = members.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(s, "{}", ids.join(" "));
            let vals: Vec<String> = table.iter().map(|&v| fmt_real(v)).collect();
            let _ = writeln!(s, "{}", vals.join(" "));
        }
        s
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = data_lines(r);
        let (line, head) = next_line(&mut lines, "cluster count")?;
        let k = parse_usize(head.trim(), line)?;
        let mut clusters = Vec::with_capacity(k);
        let mut tables = Vec::with_capacity(k);
        for _ in 0..k {
            let (line, ids) = next_line(&mut lines, "cluster members")?;
            let ids = ids.split_whitespace().map(|t| parse_usize(t, line)).collect::<Result<Vec<_>>>()?;
            let (line, vals) = next_line(&mut lines, "cluster table")?;
            let vals = vals.split_whitespace().map(|t| parse_f64(t, line)).collect::<Result<Vec<_>>>()?;
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Parse { line, msg: "cluster members must be ascending".into() });
            }
            clusters.push(ids);
            tables.push(vals);
        }
        let n = clusters.iter().map(Vec::len).sum();
        let partition = Partition::from_clusters(&clusters, n)?;
        Self::from_tables(partition, tables)
    }
}

/// Cliques touching one cluster, by edge index into `mrf.edges()`. Every
/// member node is an internal singleton clique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterNeighborhood {
    pub members: Vec<usize>,
    pub internal_edges: Vec<usize>,
    /// Edges with exactly one endpoint in the cluster.
    pub border_edges: Vec<usize>,
    /// Outside nodes sharing an edge with the cluster, ascending.
    pub markov_blanket: Vec<usize>,
}

pub fn build_neighborhoods(mrf: &MarkovRandomField, partition: &Partition) -> Result<Vec<ClusterNeighborhood>> {
    if partition.n() != mrf.n() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} nodes, model has {}",
            partition.n(),
            mrf.n()
        )));
    }
    let mut out: Vec<ClusterNeighborhood> = partition
        .clusters()
        .into_iter()
        .map(|members| ClusterNeighborhood {
            members,
            internal_edges: Vec::new(),
            border_edges: Vec::new(),
            markov_blanket: Vec::new(),
        })
        .collect();
    for (e, &(i, j)) in mrf.edges().iter().enumerate() {
        let (ci, cj) = (partition.cluster_of(i), partition.cluster_of(j));
        if ci == cj {
            out[ci].internal_edges.push(e);
        } else {
            out[ci].border_edges.push(e);
            out[ci].markov_blanket.push(j);
            out[cj].border_edges.push(e);
            out[cj].markov_blanket.push(i);
        }
    }
    for nb in &mut out {
        nb.markov_blanket.sort_unstable();
        nb.markov_blanket.dedup();
    }
    Ok(out)
}

/// The expectation of a border edge's potential x_i x_j over the cluster
/// holding j: a function of x_i alone, x_i * mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeripheralPotential {
    /// Endpoint inside the cluster being updated.
    pub node: usize,
    /// <X_j> under j's cluster marginal.
    pub mean: f64,
}

impl PeripheralPotential {
    pub fn value(&self, x_node: i8) -> f64 {
        f64::from(x_node) * self.mean
    }
}

/// Peripheral potential of edge `edge` = (i, j) as seen from `cluster`,
/// which must contain exactly one endpoint.
pub fn peripheral_potential(
    mrf: &MarkovRandomField,
    edge: usize,
    cluster: usize,
    state: &GmfState,
) -> Result<PeripheralPotential> {
    let &(i, j) = mrf.edges().get(edge).ok_or_else(|| Error::InvalidArgument(format!("no edge {edge}")))?;
    let p = state.partition();
    let (inside, outside) = match (p.cluster_of(i) == cluster, p.cluster_of(j) == cluster) {
        (true, false) => (i, j),
        (false, true) => (j, i),
        _ => return Err(Error::InvalidArgument(format!("edge ({i}, {j}) is not on the border of cluster {cluster}"))),
    };
    Ok(PeripheralPotential { node: inside, mean: node_mean(state, outside) })
}

/// <X_node> from its cluster table.
pub fn node_mean(state: &GmfState, node: usize) -> f64 {
    let c = state.partition().cluster_of(node);
    let b = state.members(c).binary_search(&node).expect("node listed in its cluster");
    state.table(c).iter().enumerate().map(|(s, p)| if s >> b & 1 == 1 { *p } else { -*p }).sum()
}

/// Local form of a cluster's internal energy: fields per member bit and
/// couplings between member bits.
struct LocalModel {
    fields: Vec<f64>,
    couplings: Vec<(usize, usize, f64)>,
}

impl LocalModel {
    fn new(mrf: &MarkovRandomField, nb: &ClusterNeighborhood) -> Self {
        let local = |node: usize| nb.members.binary_search(&node).expect("internal edge endpoint");
        let fields = nb.members.iter().map(|&i| mrf.theta_node()[i]).collect();
        let couplings = nb
            .internal_edges
            .iter()
            .map(|&e| {
                let (i, j) = mrf.edges()[e];
                (local(i), local(j), mrf.theta_edge()[e])
            })
            .collect();
        Self { fields, couplings }
    }

    fn energy(&self, fields: &[f64], s: usize) -> f64 {
        let sp = |b: usize| if s >> b & 1 == 1 { 1.0 } else { -1.0 };
        let mut e: f64 = fields.iter().enumerate().map(|(b, h)| h * sp(b)).sum();
        for &(a, b, t) in &self.couplings {
            e += t * sp(a) * sp(b);
        }
        e
    }
}

fn normalized_from_log(logw: Vec<f64>) -> Vec<f64> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logw.into_iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    w
}

/// New table for cluster `cluster` given every other cluster's current table.
pub fn update_cluster(
    mrf: &MarkovRandomField,
    nb: &ClusterNeighborhood,
    state: &GmfState,
    cluster: usize,
) -> Result<Vec<f64>> {
    let m = nb.members.len();
    if m > MAX_CLUSTER_SIZE {
        return Err(Error::Capacity { what: "cluster size", got: m, limit: MAX_CLUSTER_SIZE });
    }
    let model = LocalModel::new(mrf, nb);
    let mut fields = model.fields.clone();
    for &e in &nb.border_edges {
        let pp = peripheral_potential(mrf, e, cluster, state)?;
        let b = nb.members.binary_search(&pp.node).expect("border endpoint in cluster");
        fields[b] += mrf.theta_edge()[e] * pp.mean;
    }
    let logw = (0..1usize << m).map(|s| model.energy(&fields, s)).collect();
    Ok(normalized_from_log(logw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmfConfig {
    /// Stop when no node marginal moves more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Weight of the old table in the geometric mix old^d * new^(1-d).
    pub damping: f64,
    pub init: Init,
    pub seed: u64,
}

impl Default for GmfConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_sweeps: 1000, damping: 0.0, init: Init::Uniform, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub sweeps: usize,
    /// Largest node-marginal change in the last sweep.
    pub residual: f64,
    pub converged: bool,
    /// Lower bound on log Z after each sweep.
    pub objective_trace: Vec<f64>,
}

/// Asynchronous GMF: sweeps the clusters in index order until the node
/// marginals stop moving.
pub fn run_gmf(
    mrf: &MarkovRandomField,
    partition: &Partition,
    config: &GmfConfig,
) -> Result<(GmfState, ConvergenceReport)> {
    if !(0.0..1.0).contains(&config.damping) {
        return Err(Error::InvalidArgument(format!("damping {} outside [0, 1)", config.damping)));
    }
    let neighborhoods = build_neighborhoods(mrf, partition)?;
    let mut state = match config.init {
        Init::Uniform => GmfState::uniform(partition.clone())?,
        Init::Random => GmfState::random(partition.clone(), config.seed)?,
    };
    let decoupled = neighborhoods.iter().all(|nb| nb.border_edges.is_empty());
    let mut report =
        ConvergenceReport { sweeps: 0, residual: f64::INFINITY, converged: false, objective_trace: Vec::new() };
    let mut marginals = state.singleton_marginals();
    while report.sweeps < config.max_sweeps {
        for (c, nb) in neighborhoods.iter().enumerate() {
            let mut table = update_cluster(mrf, nb, &state, c)?;
            if config.damping > 0.0 {
                let d = config.damping;
                let logw =
                    state.table(c).iter().zip(&table).map(|(&old, &new)| d * old.ln() + (1.0 - d) * new.ln()).collect();
                table = normalized_from_log(logw);
            }
            state.set_table(c, table);
        }
        report.sweeps += 1;
        let next = state.singleton_marginals();
        report.residual = next.iter().zip(&marginals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        marginals = next;
        report.objective_trace.push(gmf_lower_bound(mrf, &state)?);
        if decoupled && config.damping == 0.0 {
            // No messages: one sweep reaches the fixed point.
            report.residual = 0.0;
        }
        if report.residual < config.tol {
            report.converged = true;
            break;
        }
    }
    Ok((state, report))
}

/// E_q[log p~(X)] + H(q), a lower bound on log Z.
pub fn gmf_lower_bound(mrf: &MarkovRandomField, state: &GmfState) -> Result<f64> {
    let neighborhoods = build_neighborhoods(mrf, state.partition())?;
    let means = state.means();
    let mut expected = 0.0;
    for (nb, table) in neighborhoods.iter().zip(state.tables()) {
        let model = LocalModel::new(mrf, nb);
        expected += table
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(s, p)| p * model.energy(&model.fields, s))
            .sum::<f64>();
    }
    for ((i, j), t) in mrf.edge_params() {
        if state.partition().cluster_of(i) != state.partition().cluster_of(j) {
            expected += t * means[i] * means[j];
        }
    }
    Ok(expected + state.entropy())
}
