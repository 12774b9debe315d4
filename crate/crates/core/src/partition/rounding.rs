//! Rounding a relaxed solution Y back to an equal-size partition.
//!
//! Both heuristics factor Y = V V^T (eigendecomposition, negative eigenvalues
//! clamped to zero) and treat row i of V as the embedding of node i.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{AffinityMatrix, Direction, Partition, RelaxationResult};
use crate::error::{Error, Result};
use crate::rng;

pub const KMEANS_RESTARTS: usize = 20;
pub const RANDOM_PROJECTION_TRIALS: usize = 100;
const LLOYD_MAX_ITER: usize = 100;

/// Rows of U diag(sqrt(max(lambda, 0))) for Y = U diag(lambda) U^T.
pub(crate) fn embed(y: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (y + y.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        v.column_mut(c).scale_mut(s);
    }
    v
}

/// Equal-size K-means on the rows of the factorized relaxation, keeping the
/// restart with the best cut in the requested direction.
pub fn round_kmeans(
    res: &RelaxationResult,
    a: &AffinityMatrix,
    k: usize,
    direction: Direction,
    restarts: usize,
    seed: u64,
) -> Result<Partition> {
    let n = check(res, a, k, restarts)?;
    let points = embed(&res.y);
    let m = n / k;
    let candidates: Vec<Vec<usize>> = (0..restarts)
        .into_par_iter()
        .map(|r| balanced_kmeans(&points, k, m, &mut rng::stream(seed, r as u64)))
        .collect();
    pick_best(candidates, a, k, direction)
}

/// Goemans–Williamson / Frieze–Jerrum style rounding: each trial draws k
/// Gaussian directions, sends every node to the direction it projects on
/// most strongly, then repairs cluster sizes.
pub fn round_random_projection(
    res: &RelaxationResult,
    a: &AffinityMatrix,
    k: usize,
    direction: Direction,
    trials: usize,
    seed: u64,
) -> Result<Partition> {
    let n = check(res, a, k, trials)?;
    let points = embed(&res.y);
    let m = n / k;
    let candidates: Vec<Vec<usize>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64);
            let dirs = DMatrix::<f64>::from_fn(points.ncols(), k, |_, _| rng.sample(StandardNormal));
            let scores = &points * dirs;
            repair_sizes(&scores, m)
        })
        .collect();
    pick_best(candidates, a, k, direction)
}

fn check(res: &RelaxationResult, a: &AffinityMatrix, k: usize, count: usize) -> Result<usize> {
    let n = a.n();
    if res.y.nrows() != n || res.y.ncols() != n {
        return Err(Error::InvalidArgument("relaxation size does not match affinity matrix".into()));
    }
    super::check_equipartition_shape(n, k)?;
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    Ok(n)
}

/// Lowest-index candidate among those with the best cut.
fn pick_best(candidates: Vec<Vec<usize>>, a: &AffinityMatrix, k: usize, direction: Direction) -> Result<Partition> {
    let mut best: Option<(Partition, f64)> = None;
    for assignment in candidates {
        let p = Partition::equal(assignment, k)?;
        let cut = a.cut_weight(&p);
        if best.as_ref().is_none_or(|(_, v)| direction.better(cut, *v)) {
            best = Some((p, cut));
        }
    }
    Ok(best.expect("at least one candidate").0)
}

/// Assigns points to centroids by ascending distance subject to capacity m
/// per cluster. Ties go to the lower point index, then the lower cluster.
fn capacity_assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>, m: usize) -> Vec<usize> {
    let n = points.nrows();
    let k = centroids.nrows();
    let mut pairs = Vec::with_capacity(n * k);
    for i in 0..n {
        for c in 0..k {
            let d = (points.row(i) - centroids.row(c)).norm_squared();
            pairs.push((d, i, c));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut assignment = vec![usize::MAX; n];
    let mut load = vec![0usize; k];
    let mut placed = 0;
    for (_, i, c) in pairs {
        if assignment[i] == usize::MAX && load[c] < m {
            assignment[i] = c;
            load[c] += 1;
            placed += 1;
            if placed == n {
                break;
            }
        }
    }
    assignment
}

fn balanced_kmeans(points: &DMatrix<f64>, k: usize, m: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let n = points.nrows();
    let dim = points.ncols();
    let seeds = index::sample(rng, n, k);
    let mut centroids = DMatrix::from_fn(k, dim, |c, d| points[(seeds.index(c), d)]);
    let mut assignment = capacity_assign(points, &centroids, m);
    for _ in 0..LLOYD_MAX_ITER {
        centroids.fill(0.0);
        for (i, &c) in assignment.iter().enumerate() {
            let mut row = centroids.row_mut(c);
            row += points.row(i);
        }
        centroids /= m as f64;
        let next = capacity_assign(points, &centroids, m);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    assignment
}

/// Argmax assignment on `scores` (n x k), then while some cluster holds more
/// than m nodes, moves the surplus node that loses the least score to its
/// best cluster that still has room.
fn repair_sizes(scores: &DMatrix<f64>, m: usize) -> Vec<usize> {
    let (n, k) = scores.shape();
    let mut assignment: Vec<usize> = (0..n)
        .map(|i| (0..k).max_by(|&a, &b| scores[(i, a)].total_cmp(&scores[(i, b)]).then(b.cmp(&a))).unwrap())
        .collect();
    let mut load = vec![0usize; k];
    for &c in &assignment {
        load[c] += 1;
    }
    while load.iter().any(|&l| l > m) {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            let from = assignment[i];
            if load[from] <= m {
                continue;
            }
            for to in (0..k).filter(|&c| load[c] < m) {
                let loss = scores[(i, from)] - scores[(i, to)];
                if best.is_none_or(|(l, _, _)| loss < l) {
                    best = Some((loss, i, to));
                }
            }
        }
        let (_, i, to) = best.expect("an over-full cluster implies an under-full one");
        load[assignment[i]] -= 1;
        load[to] += 1;
        assignment[i] = to;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{
        brute_force_equipartition, random_equipartition, solve_relaxation, SolverOptions, SolverReport,
    };

    fn complete(n: usize) -> AffinityMatrix {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        AffinityMatrix::from_edges(n, &edges).unwrap()
    }

    fn fake_result(y: DMatrix<f64>, k: usize) -> RelaxationResult {
        RelaxationResult {
            y,
            bound: 0.0,
            k,
            direction: Direction::Min,
            report: SolverReport {
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                gap: 0.0,
                primal_objective: 0.0,
                dual_objective: 0.0,
                converged: true,
            },
        }
    }

    #[test]
    fn embedding_reproduces_y() {
        let p = random_equipartition(9, 3, 4).unwrap();
        let x = p.indicator_matrix();
        let y = &x * x.transpose();
        let v = embed(&y);
        assert!((&v * v.transpose() - &y).norm() < 1e-10);
    }

    #[test]
    fn block_constant_y_recovers_partition() {
        let a = AffinityMatrix::from_edges(12, &[(0, 1), (2, 3), (4, 9), (7, 11), (5, 6)]).unwrap();
        for seed in 0..5 {
            let p = random_equipartition(12, 4, seed).unwrap();
            let x = p.indicator_matrix();
            let res = fake_result(&x * x.transpose(), 4);
            for dir in [Direction::Min, Direction::Max] {
                let got = round_kmeans(&res, &a, 4, dir, 5, seed).unwrap();
                assert_eq!(got.canonical(), p.canonical());
                assert_eq!(a.cut_weight(&got), a.cut_weight(&p));
            }
        }
    }

    #[test]
    fn k4_rounds_to_cut_four() {
        let a = complete(4);
        let res = solve_relaxation(&a, 2, Direction::Min, &SolverOptions::default()).unwrap();
        let p = round_kmeans(&res, &a, 2, Direction::Min, KMEANS_RESTARTS, 1).unwrap();
        assert_eq!(a.cut_weight(&p), 4.0);
        let p = round_random_projection(&res, &a, 2, Direction::Min, 10, 1).unwrap();
        assert_eq!(a.cut_weight(&p), 4.0);
    }

    #[test]
    fn empty_graph_random_projection() {
        let a = AffinityMatrix::from_edges(6, &[]).unwrap();
        let res = solve_relaxation(&a, 3, Direction::Max, &SolverOptions::default()).unwrap();
        let p = round_random_projection(&res, &a, 3, Direction::Max, 20, 3).unwrap();
        assert!(p.is_equipartition());
        assert_eq!(a.cut_weight(&p), 0.0);
    }

    #[test]
    fn capacity_assignment_is_balanced() {
        // All points nearest centroid 0: greedy must still fill each cluster.
        let points = DMatrix::from_row_slice(6, 1, &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        let centroids = DMatrix::from_row_slice(3, 1, &[0.0, 10.0, 20.0]);
        let got = capacity_assign(&points, &centroids, 2);
        // 0, 1 fill cluster 0; the far clusters then take the nearest leftovers.
        assert_eq!(got, vec![0, 0, 2, 2, 1, 1]);
    }

    #[test]
    fn repair_moves_smallest_margin() {
        // Everyone prefers cluster 0; node 2 (loss 0.1) then node 3 (loss 3)
        // move to cluster 1.
        let scores = DMatrix::from_row_slice(4, 2, &[5.0, 0.0, 4.0, 0.0, 1.0, 0.9, 3.0, 0.0]);
        assert_eq!(repair_sizes(&scores, 2), vec![0, 0, 1, 1]);
    }

    #[test]
    fn rounding_is_deterministic_and_sandwiched() {
        use crate::mrf::{generate_random_mrf, Coupling, RandomModelSpec};
        for seed in 0..6 {
            let spec =
                RandomModelSpec { n: 10, edge_prob: 0.5, w_obs: 0.0, w_coup: 1.0, coupling: Coupling::Mixed, seed };
            let a = AffinityMatrix::from_mrf(&generate_random_mrf(&spec).unwrap(), super::super::AffinityScheme::Unit);
            for dir in [Direction::Min, Direction::Max] {
                let res = solve_relaxation(&a, 2, dir, &SolverOptions::default()).unwrap();
                let p1 = round_kmeans(&res, &a, 2, dir, KMEANS_RESTARTS, seed).unwrap();
                let p2 = round_kmeans(&res, &a, 2, dir, KMEANS_RESTARTS, seed).unwrap();
                assert_eq!(p1, p2);
                let (_, opt) = brute_force_equipartition(&a, 2, dir).unwrap();
                let cut = a.cut_weight(&p1);
                match dir {
                    Direction::Min => assert!(res.bound <= opt + 1e-6 && opt <= cut + 1e-9),
                    Direction::Max => assert!(res.bound >= opt - 1e-6 && opt >= cut - 1e-9),
                }
            }
        }
    }
}
