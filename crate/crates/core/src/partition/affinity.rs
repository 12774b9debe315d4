use std::io::BufRead;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Partition;
use crate::error::{Error, Result};
use crate::mrf::MarkovRandomField;

/// Couplings smaller than this in magnitude are clamped before inverting.
pub const INVERSE_COUPLING_EPS: f64 = 1e-6;

/// How edge weights are derived from the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityScheme {
    /// a_ij = 1 on every edge.
    Unit,
    /// a_ij = |theta_ij|.
    Coupling,
    /// a_ij = 1 / max(|theta_ij|, eps).
    InverseCoupling,
}

impl AffinityScheme {
    pub const ALL: [AffinityScheme; 3] =
        [AffinityScheme::Unit, AffinityScheme::Coupling, AffinityScheme::InverseCoupling];

    pub fn as_str(self) -> &'static str {
        match self {
            AffinityScheme::Unit => "unit",
            AffinityScheme::Coupling => "coupling",
            AffinityScheme::InverseCoupling => "inverse_coupling",
        }
    }

    fn weight(self, theta: f64) -> f64 {
        match self {
            AffinityScheme::Unit => 1.0,
            AffinityScheme::Coupling => theta.abs(),
            AffinityScheme::InverseCoupling => 1.0 / theta.abs().max(INVERSE_COUPLING_EPS),
        }
    }
}

impl std::str::FromStr for AffinityScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(AffinityScheme::Unit),
            "coupling" => Ok(AffinityScheme::Coupling),
            "inverse_coupling" | "inverse" => Ok(AffinityScheme::InverseCoupling),
            other => Err(Error::InvalidArgument(format!("unknown affinity scheme `{other}`"))),
        }
    }
}

/// Symmetric, nonnegative, zero-diagonal edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    a: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn from_mrf(mrf: &MarkovRandomField, scheme: AffinityScheme) -> Self {
        let n = mrf.n();
        let mut a = DMatrix::zeros(n, n);
        for ((i, j), t) in mrf.edge_params() {
            let w = scheme.weight(t);
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        Self { a }
    }

    pub fn from_dense(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidArgument("affinity matrix must be square".into()));
        }
        let n = a.nrows();
        for i in 0..n {
            if a[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = a[(i, j)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("bad weight {v} at ({i}, {j})")));
                }
                if v != a[(j, i)] {
                    return Err(Error::InvalidArgument(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { a })
    }

    /// Unit weight on each listed edge.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidArgument(format!("bad edge ({i}, {j})")));
            }
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        Ok(Self { a })
    }

    /// Reads the model edge-list format; edge parameters are the weights and
    /// must be nonnegative, node lines are ignored.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mrf = MarkovRandomField::read_text(r)?;
        let n = mrf.n();
        let mut a = DMatrix::zeros(n, n);
        for ((i, j), w) in mrf.edge_params() {
            if w < 0.0 {
                return Err(Error::InvalidArgument(format!("negative weight on ({i}, {j})")));
            }
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        Ok(Self { a })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i, j)]
    }

    pub fn total_weight(&self) -> f64 {
        self.a.sum() / 2.0
    }

    /// L = Diag(A e) - A.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = -self.a.clone();
        for i in 0..n {
            l[(i, i)] = self.a.row(i).sum();
        }
        l
    }

    /// Total weight of edges whose endpoints lie in different clusters.
    pub fn cut_weight(&self, part: &Partition) -> f64 {
        let n = self.n();
        let mut cut = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if part.cluster_of(i) != part.cluster_of(j) {
                    cut += self.a[(i, j)];
                }
            }
        }
        cut
    }

    /// The same quantity computed as 1/2 tr(X^T L X).
    pub fn cut_weight_trace(&self, part: &Partition) -> f64 {
        let x = part.indicator_matrix();
        0.5 * (x.transpose() * self.laplacian() * x).trace()
    }
}
