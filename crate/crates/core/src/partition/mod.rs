//! Balanced graph partitioning for choosing GMF clusters.
//!
//! An affinity matrix is built from the model ([`AffinityMatrix::from_mrf`]),
//! the k-equipartition problem is relaxed to an SDP ([`solve_relaxation`]),
//! and the relaxed solution is rounded back to an equal-size partition
//! ([`round_kmeans`], [`round_random_projection`]).

mod affinity;
mod brute;
mod rounding;
mod sdp;

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mrf::{data_lines, next_line, parse_fields, parse_usize};
use crate::rng;

pub use affinity::{AffinityMatrix, AffinityScheme, INVERSE_COUPLING_EPS};
pub use brute::{brute_force_equipartition, count_equipartitions, BRUTE_FORCE_CAP};
pub use rounding::{round_kmeans, round_random_projection, KMEANS_RESTARTS, RANDOM_PROJECTION_TRIALS};
pub use sdp::{solve_relaxation, RelaxationResult, SolverOptions, SolverReport};

/// Whether a cut should be minimized or maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    /// True when `a` is a strictly better cut value than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Min => a < b,
            Direction::Max => a > b,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Min => "min",
            Direction::Max => "max",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Direction::Min),
            "max" => Ok(Direction::Max),
            other => Err(Error::InvalidArgument(format!("unknown direction `{other}`"))),
        }
    }
}

/// A disjoint cover of the nodes `0..n` by `k` non-empty clusters.
///
/// Cluster ids are `0..k`. The partitioning routines always return
/// equipartitions; GMF accepts any partition (component-aligned clusters,
/// singletons, the whole graph).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidPartition("no nodes".into()));
        }
        if k == 0 {
            return Err(Error::InvalidPartition("k must be at least 1".into()));
        }
        let mut sizes = vec![0usize; k];
        for (node, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(Error::InvalidPartition(format!("node {node} assigned to cluster {c}, but k = {k}")));
            }
            sizes[c] += 1;
        }
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("cluster {c} is empty")));
        }
        Ok(Self { assignment, k })
    }

    /// Like [`Partition::new`], but also requires all clusters to have n/k nodes.
    pub fn equal(assignment: Vec<usize>, k: usize) -> Result<Self> {
        let p = Self::new(assignment, k)?;
        if !p.is_equipartition() {
            return Err(Error::InvalidPartition(format!("cluster sizes {:?} are not all equal", p.sizes())));
        }
        Ok(p)
    }

    pub fn from_clusters(clusters: &[Vec<usize>], n: usize) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n];
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                if i >= n {
                    return Err(Error::InvalidPartition(format!("node {i} out of range")));
                }
                if assignment[i] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("node {i} in two clusters")));
                }
                assignment[i] = c;
            }
        }
        if let Some(i) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidPartition(format!("node {i} not covered")));
        }
        Self::new(assignment, clusters.len())
    }

    pub fn whole(n: usize) -> Self {
        Self { assignment: vec![0; n], k: 1 }
    }

    pub fn singletons(n: usize) -> Self {
        Self { assignment: (0..n).collect(), k: n }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }

    pub fn max_cluster_size(&self) -> usize {
        self.sizes().into_iter().max().unwrap_or(0)
    }

    pub fn is_equipartition(&self) -> bool {
        self.n() % self.k == 0 && self.sizes().iter().all(|&s| s == self.n() / self.k)
    }

    /// Members of each cluster in ascending node order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Relabels clusters by order of first appearance, so two partitions
    /// with the same blocks compare equal.
    pub fn canonical(&self) -> Self {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&c| {
                if map[c] == usize::MAX {
                    map[c] = next;
                    next += 1;
                }
                map[c]
            })
            .collect();
        Self { assignment, k: self.k }
    }

    /// The n x k 0/1 indicator matrix X with X e_k = e_n.
    pub fn indicator_matrix(&self) -> nalgebra::DMatrix<f64> {
        let mut x = nalgebra::DMatrix::zeros(self.n(), self.k);
        for (i, &c) in self.assignment.iter().enumerate() {
            x[(i, c)] = 1.0;
        }
        x
    }

    /// Text format: a line `k`, then one `node cluster` line per node
    /// (0-based ids).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.k);
        for (i, c) in self.assignment.iter().enumerate() {
            let _ = writeln!(s, "{i} {c}");
        }
        s
    }

    /// Parses the format written by [`Partition::to_text`]; `n` is taken
    /// from the number of node lines.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = data_lines(r);
        let (line, head) = next_line(&mut lines, "cluster count")?;
        let k = parse_usize(parse_fields(&head, 1, line)?[0], line)?;
        let mut pairs = Vec::new();
        for item in lines {
            let (line, text) = item?;
            let f = parse_fields(&text, 2, line)?;
            pairs.push((parse_usize(f[0], line)?, parse_usize(f[1], line)?, line));
        }
        let n = pairs.len();
        let mut assignment = vec![usize::MAX; n];
        for (i, c, line) in pairs {
            if i >= n || assignment[i] != usize::MAX {
                return Err(Error::Parse { line, msg: format!("bad or repeated node index {i}") });
            }
            assignment[i] = c;
        }
        Self::new(assignment, k)
    }
}

/// Uniformly random permutation of the nodes chopped into k blocks of n/k.
pub fn random_equipartition(n: usize, k: usize, seed: u64) -> Result<Partition> {
    check_equipartition_shape(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::from_seed(seed));
    let m = n / k;
    let mut assignment = vec![0; n];
    for (pos, &node) in order.iter().enumerate() {
        assignment[node] = pos / m;
    }
    Partition::equal(assignment, k)
}

pub(crate) fn check_equipartition_shape(n: usize, k: usize) -> Result<()> {
    if k == 0 || n == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n, got n = {n}, k = {k}")));
    }
    if n % k != 0 {
        return Err(Error::InvalidArgument(format!("k = {k} does not divide n = {n}")));
    }
    Ok(())
}

/// Cut value divided by the relaxation bound; 1 when both are zero.
pub fn feasible_to_bound_ratio(feasible: f64, bound: f64) -> f64 {
    const ZERO: f64 = 1e-9;
    if feasible.abs() <= ZERO && bound.abs() <= ZERO {
        1.0
    } else {
        feasible / bound
    }
}
