//! KL sandwich a W <= KL(q || p) <= b W for the GMF fixed point, where W is
//! the total |theta| over cliques cut by the partition.
//!
//! With signed parameters the positive weight of an edge is |theta_ij| and
//! its potential is sign(theta_ij) x_i x_j, which still ranges over [-1, 1].
//! Every cut edge touches k_beta = 2 clusters, so the general constants
//! reduce to a = 0, b = 4.

use crate::error::{Error, Result};
use crate::exact::{exact_kl_of_product, ExactSummary};
use crate::gmf::GmfState;
use crate::mrf::MarkovRandomField;
use crate::partition::Partition;

/// Slack used when deciding whether the sandwich holds.
pub const BOUND_SLACK: f64 = 1e-9;

/// One cross-border clique: how many clusters it touches and the range of
/// its (sign-folded) potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossClique {
    pub weight: f64,
    pub clusters: usize,
    pub phi_min: f64,
    pub phi_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Sum of positive weights of cut cliques.
    pub w: f64,
    pub a_phi: f64,
    pub b_phi: f64,
    pub a_z: f64,
    pub b_z: f64,
    pub a: f64,
    pub b: f64,
    /// k Delta_phi W when every cut clique touches the same number k of
    /// clusters.
    pub special_case_bound: Option<f64>,
    pub cut_cliques: usize,
}

impl BoundReport {
    pub fn lower(&self) -> f64 {
        self.a * self.w
    }

    pub fn upper(&self) -> f64 {
        self.b * self.w
    }
}

/// Constants from a list of cut cliques. With no cut cliques everything is
/// zero and the sandwich pins KL to 0.
pub fn bound_constants(cliques: &[CrossClique]) -> BoundReport {
    if cliques.is_empty() {
        return BoundReport {
            w: 0.0,
            a_phi: 0.0,
            b_phi: 0.0,
            a_z: 0.0,
            b_z: 0.0,
            a: 0.0,
            b: 0.0,
            special_case_bound: Some(0.0),
            cut_cliques: 0,
        };
    }
    let min = |f: &dyn Fn(&CrossClique) -> f64| cliques.iter().map(f).fold(f64::INFINITY, f64::min);
    let max = |f: &dyn Fn(&CrossClique) -> f64| cliques.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let w: f64 = cliques.iter().map(|c| c.weight).sum();
    let km1 = |c: &CrossClique| (c.clusters - 1) as f64;
    let a_phi = min(&|c| km1(c) * c.phi_min);
    let b_phi = max(&|c| km1(c) * c.phi_max);
    let b_z = max(&|c| c.clusters as f64 * c.phi_max - c.phi_min);
    let a_z = min(&|c| km1(c) * c.phi_min + (c.phi_min - c.phi_max));
    let a = (a_phi - b_z).max(0.0);
    let b = b_phi - a_z;
    let k = cliques[0].clusters;
    let special_case_bound = cliques.iter().all(|c| c.clusters == k).then(|| {
        let delta = max(&|c| c.phi_max) - min(&|c| c.phi_min);
        k as f64 * delta * w
    });
    BoundReport { w, a_phi, b_phi, a_z, b_z, a, b, special_case_bound, cut_cliques: cliques.len() }
}

/// Cut edges of a pairwise spin model as cross-border cliques.
pub fn cross_cliques(mrf: &MarkovRandomField, partition: &Partition) -> Result<Vec<CrossClique>> {
    if partition.n() != mrf.n() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} nodes, model has {}",
            partition.n(),
            mrf.n()
        )));
    }
    Ok(mrf
        .edge_params()
        .filter(|((i, j), _)| partition.cluster_of(*i) != partition.cluster_of(*j))
        .map(|(_, t)| CrossClique { weight: t.abs(), clusters: 2, phi_min: -1.0, phi_max: 1.0 })
        .collect())
}

pub fn compute_bound_constants(mrf: &MarkovRandomField, partition: &Partition) -> Result<BoundReport> {
    Ok(bound_constants(&cross_cliques(mrf, partition)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub kl: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
    pub report: BoundReport,
}

/// Exact KL of `state` against the sandwich for its partition.
pub fn verify_bound(
    mrf: &MarkovRandomField,
    partition: &Partition,
    state: &GmfState,
    oracle: &ExactSummary,
) -> Result<BoundCheck> {
    if state.partition() != partition {
        return Err(Error::InvalidArgument("state was built on a different partition".into()));
    }
    let report = compute_bound_constants(mrf, partition)?;
    let kl = exact_kl_of_product(mrf, state, oracle.log_partition)?;
    let (lower, upper) = (report.lower(), report.upper());
    let holds = lower - BOUND_SLACK <= kl && kl <= upper + BOUND_SLACK;
    Ok(BoundCheck { kl, lower, upper, holds, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_summary;
    use crate::gmf::{run_gmf, GmfConfig};
    use crate::mrf::{generate_random_mrf, Coupling, RandomModelSpec};
    use crate::partition::random_equipartition;

    fn model(n: usize, seed: u64, coupling: Coupling) -> MarkovRandomField {
        generate_random_mrf(&RandomModelSpec { n, edge_prob: 0.4, w_obs: 0.5, w_coup: 1.5, coupling, seed }).unwrap()
    }

    #[test]
    fn pairwise_spin_constants() {
        // a_phi = (2-1)(-1), b_phi = (2-1)(1), b_Z = 2*1 - (-1), a_Z = -1 + (-1 - 1)
        let r = bound_constants(&[CrossClique { weight: 0.7, clusters: 2, phi_min: -1.0, phi_max: 1.0 }]);
        assert_eq!((r.a_phi, r.b_phi, r.b_z, r.a_z), (-1.0, 1.0, 3.0, -3.0));
        assert_eq!((r.a, r.b), (0.0, 4.0));
        assert!((r.special_case_bound.unwrap() - 4.0 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_cut_collapses() {
        let m = model(6, 1, Coupling::Mixed);
        let r = compute_bound_constants(&m, &Partition::whole(6)).unwrap();
        assert_eq!((r.w, r.lower(), r.upper()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_cut_edge() {
        let m = MarkovRandomField::new(vec![0.0; 2], vec![(0, 1)], vec![-0.3]).unwrap();
        let r = compute_bound_constants(&m, &Partition::singletons(2)).unwrap();
        assert!((r.w - 0.3).abs() < 1e-15);
        assert!((r.upper() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn upper_bound_is_four_w() {
        for seed in 0..10 {
            let m = model(10, seed, Coupling::Mixed);
            let p = random_equipartition(10, 5, seed).unwrap();
            let r = compute_bound_constants(&m, &p).unwrap();
            let w: f64 =
                m.edge_params().filter(|((i, j), _)| p.cluster_of(*i) != p.cluster_of(*j)).map(|(_, t)| t.abs()).sum();
            assert!((r.upper() - 4.0 * w).abs() < 1e-12);
            assert_eq!(r.special_case_bound, Some(r.upper()));
        }
    }

    #[test]
    fn constants_ignore_internal_parameters() {
        let m = model(10, 3, Coupling::Mixed);
        let p = random_equipartition(10, 2, 9).unwrap();
        let before = compute_bound_constants(&m, &p).unwrap();
        let theta_edge: Vec<f64> = m
            .edge_params()
            .map(|((i, j), t)| if p.cluster_of(i) == p.cluster_of(j) { t * 3.0 - 1.0 } else { t })
            .collect();
        let theta_node: Vec<f64> = m.theta_node().iter().map(|t| t + 0.7).collect();
        let after = compute_bound_constants(&m.with_params(theta_node, theta_edge).unwrap(), &p).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn w_grows_with_cut_edges() {
        let base = MarkovRandomField::new(vec![0.0; 4], vec![(0, 2)], vec![0.5]).unwrap();
        let more = MarkovRandomField::new(vec![0.0; 4], vec![(0, 2), (1, 3)], vec![0.5, -0.2]).unwrap();
        let p = Partition::new(vec![0, 0, 1, 1], 2).unwrap();
        let w0 = compute_bound_constants(&base, &p).unwrap().w;
        let w1 = compute_bound_constants(&more, &p).unwrap().w;
        assert!(w1 > w0);
    }

    #[test]
    fn strongly_coupled_pair() {
        let m = MarkovRandomField::new(vec![0.1, 0.0], vec![(0, 1)], vec![2.0]).unwrap();
        let p = Partition::singletons(2);
        let (s, r) = run_gmf(&m, &p, &GmfConfig::default()).unwrap();
        assert!(r.converged);
        let check = verify_bound(&m, &p, &s, &exact_summary(&m).unwrap()).unwrap();
        assert!(check.kl > 0.0 && check.holds);
        assert!(check.kl <= 8.0);
    }

    #[test]
    fn holds_on_random_fixed_points() {
        for seed in 0..30 {
            let coupling = [Coupling::Attractive, Coupling::Repulsive, Coupling::Mixed][seed as usize % 3];
            let m = model(10, seed, coupling);
            let k = if seed % 2 == 0 { 2 } else { 5 };
            let p = random_equipartition(10, k, seed).unwrap();
            let (s, r) = run_gmf(&m, &p, &GmfConfig::default()).unwrap();
            assert!(r.converged);
            let check = verify_bound(&m, &p, &s, &exact_summary(&m).unwrap()).unwrap();
            assert!(check.holds, "{check:?}");
            assert!(check.kl >= -1e-9);
        }
    }
}
