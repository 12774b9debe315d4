//! Pairwise binary Markov random fields over spins x_i in {-1, +1}.
//!
//! The unnormalized log density is
//!
//! ```text
//! log p~(x) = sum_i theta_i x_i + sum_{(i,j) in E} theta_ij x_i x_j
//! ```
//!
//! Parameters are stored signed. Code that needs positive clique weights
//! (the KL bound, coupling-based affinities) uses |theta| and folds the sign
//! into the potential.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Attractive,
    Repulsive,
    Mixed,
}

impl Coupling {
    /// Sampling interval for theta_ij given the coupling scale.
    pub fn range(self, w_coup: f64) -> (f64, f64) {
        match self {
            Coupling::Attractive => (0.0, w_coup),
            Coupling::Repulsive => (-w_coup, 0.0),
            Coupling::Mixed => (-w_coup, w_coup),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Coupling::Attractive => "attractive",
            Coupling::Repulsive => "repulsive",
            Coupling::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attractive" => Ok(Coupling::Attractive),
            "repulsive" => Ok(Coupling::Repulsive),
            "mixed" => Ok(Coupling::Mixed),
            other => Err(Error::InvalidArgument(format!("unknown coupling type `{other}`"))),
        }
    }
}

impl std::fmt::Display for Coupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of the random graph / random parameter generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomModelSpec {
    pub n: usize,
    pub edge_prob: f64,
    /// theta_i ~ U(-w_obs, w_obs)
    pub w_obs: f64,
    pub w_coup: f64,
    pub coupling: Coupling,
    pub seed: u64,
}

impl RandomModelSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidModel("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(Error::InvalidModel(format!("edge probability {} outside [0, 1]", self.edge_prob)));
        }
        if !(self.w_obs >= 0.0 && self.w_obs.is_finite()) {
            return Err(Error::InvalidModel(format!("w_obs = {} must be >= 0", self.w_obs)));
        }
        if !(self.w_coup >= 0.0 && self.w_coup.is_finite()) {
            return Err(Error::InvalidModel(format!("w_coup = {} must be >= 0", self.w_coup)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovRandomField {
    n: usize,
    /// Canonical (i < j), in insertion order.
    edges: Vec<(usize, usize)>,
    theta_node: Vec<f64>,
    theta_edge: Vec<f64>,
    /// Per node: (neighbor, theta_ij).
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl MarkovRandomField {
    pub fn new(theta_node: Vec<f64>, edges: Vec<(usize, usize)>, theta_edge: Vec<f64>) -> Result<Self> {
        let n = theta_node.len();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one node".into()));
        }
        if edges.len() != theta_edge.len() {
            return Err(Error::InvalidModel(format!("{} edges but {} edge parameters", edges.len(), theta_edge.len())));
        }
        if let Some(t) = theta_node.iter().chain(&theta_edge).find(|t| !t.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite parameter {t}")));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut canonical = Vec::with_capacity(edges.len());
        for &(i, j) in &edges {
            if i >= n || j >= n {
                return Err(Error::InvalidModel(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::InvalidModel(format!("self-loop on node {i}")));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::InvalidModel(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            canonical.push(e);
        }
        let mut adjacency = vec![Vec::new(); n];
        for (&(i, j), &t) in canonical.iter().zip(&theta_edge) {
            adjacency[i].push((j, t));
            adjacency[j].push((i, t));
        }
        Ok(Self { n, edges: canonical, theta_node, theta_edge, adjacency })
    }

    /// Model with no edges.
    pub fn independent(theta_node: Vec<f64>) -> Result<Self> {
        Self::new(theta_node, Vec::new(), Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn theta_node(&self) -> &[f64] {
        &self.theta_node
    }

    pub fn theta_edge(&self) -> &[f64] {
        &self.theta_edge
    }

    /// Edges with their parameters.
    pub fn edge_params(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edges.iter().copied().zip(self.theta_edge.iter().copied())
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Same structure, new parameters.
    pub fn with_params(&self, theta_node: Vec<f64>, theta_edge: Vec<f64>) -> Result<Self> {
        Self::new(theta_node, self.edges.clone(), theta_edge)
    }

    pub fn log_unnormalized_prob(&self, x: &[i8]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::InvalidAssignment(format!(
                "assignment has length {}, model has {} nodes",
                x.len(),
                self.n
            )));
        }
        if let Some(v) = x.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::InvalidAssignment(format!("spin value {v} not in {{-1, +1}}")));
        }
        Ok(self.energy_unchecked(x))
    }

    pub(crate) fn energy_unchecked(&self, x: &[i8]) -> f64 {
        let node: f64 = self.theta_node.iter().zip(x).map(|(t, &s)| t * f64::from(s)).sum();
        let pair: f64 = self.edge_params().map(|((i, j), t)| t * f64::from(x[i] * x[j])).sum();
        node + pair
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for &(v, _) in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Writes the plain-text model format:
    ///
    /// ```text
    /// n m
    /// i theta_i        (n lines)
    /// i j theta_ij     (m lines)
    /// ```
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n, self.edges.len());
        for (i, t) in self.theta_node.iter().enumerate() {
            let _ = writeln!(s, "{i} {}", fmt_real(*t));
        }
        for ((i, j), t) in self.edge_params() {
            let _ = writeln!(s, "{i} {j} {}", fmt_real(t));
        }
        s
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = data_lines(r);
        let (line, header) =
            lines.next().transpose()?.ok_or(Error::Parse { line: 0, msg: "empty model file".into() })?;
        let head = parse_fields(&header, 2, line)?;
        let n = parse_usize(head[0], line)?;
        let m = parse_usize(head[1], line)?;
        let mut theta_node = vec![f64::NAN; n];
        for _ in 0..n {
            let (line, text) = next_line(&mut lines, "node line")?;
            let f = parse_fields(&text, 2, line)?;
            let i = parse_usize(f[0], line)?;
            if i >= n || !theta_node[i].is_nan() {
                return Err(Error::Parse { line, msg: format!("bad or repeated node index {i}") });
            }
            theta_node[i] = parse_f64(f[1], line)?;
        }
        let mut edges = Vec::with_capacity(m);
        let mut theta_edge = Vec::with_capacity(m);
        for _ in 0..m {
            let (line, text) = next_line(&mut lines, "edge line")?;
            let f = parse_fields(&text, 3, line)?;
            edges.push((parse_usize(f[0], line)?, parse_usize(f[1], line)?));
            theta_edge.push(parse_f64(f[2], line)?);
        }
        if let Some((line, _)) = lines.next().transpose()? {
            return Err(Error::Parse { line, msg: "trailing data after edge list".into() });
        }
        Self::new(theta_node, edges, theta_edge)
    }
}

/// Each of the n(n-1)/2 pairs becomes an edge with probability `edge_prob`;
/// then theta_i ~ U(-w_obs, w_obs) and theta_ij ~ U(range of coupling).
pub fn generate_random_mrf(spec: &RandomModelSpec) -> Result<MarkovRandomField> {
    spec.validate()?;
    let mut rng = rng::from_seed(spec.seed);
    let n = spec.n;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(spec.edge_prob) {
                edges.push((i, j));
            }
        }
    }
    let theta_node = (0..n).map(|_| uniform(&mut rng, -spec.w_obs, spec.w_obs)).collect();
    let (lo, hi) = spec.coupling.range(spec.w_coup);
    let theta_edge = edges.iter().map(|_| uniform(&mut rng, lo, hi)).collect();
    MarkovRandomField::new(theta_node, edges, theta_edge)
}

fn uniform(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Shortest decimal representation that round-trips (always >= 12
/// significant digits of accuracy).
pub(crate) fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) type NumberedLine = std::result::Result<(usize, String), std::io::Error>;

/// Non-empty, non-comment lines with 1-based line numbers.
pub(crate) fn data_lines<R: BufRead>(r: R) -> impl Iterator<Item = NumberedLine> {
    r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
        Err(e) => Some(Err(e)),
    })
}

pub(crate) fn next_line(lines: &mut impl Iterator<Item = NumberedLine>, what: &str) -> Result<(usize, String)> {
    lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Parse { line: 0, msg: format!("unexpected end of input, expected {what}") })
}

pub(crate) fn parse_fields(text: &str, want: usize, line: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = text.split_whitespace().collect();
    if f.len() != want {
        return Err(Error::Parse { line, msg: format!("expected {want} fields, got {}", f.len()) });
    }
    Ok(f)
}

pub(crate) fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("`{s}` is not a non-negative integer") })
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("`{s}` is not a number") })
}
