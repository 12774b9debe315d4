//! SDP relaxation of k-equipartition and a small dense interior-point solver.
//!
//! The relaxation replaces X X^T (X the n x k cluster indicator) by a matrix
//! variable Y subject to
//!
//! ```text
//! diag(Y) = e,   Y e = m e,   Y >= 0 elementwise,   Y PSD
//! ```
//!
//! and optimizes 1/2 tr(L Y), minimizing for MinCut and maximizing for
//! MaxCut. The elementwise constraint is carried by a nonnegative slack
//! block, so the solver sees the standard primal form
//!
//! ```text
//! min <C, X> + c.x   s.t.  <A_a, X> + a_a.x = b_a,  X PSD,  x >= 0
//! ```
//!
//! solved by an infeasible primal-dual path-following method (HKM search
//! direction, Mehrotra predictor-corrector).

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{check_equipartition_shape, AffinityMatrix, Direction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on relative primal/dual infeasibility and relative duality gap.
    pub tol: f64,
    /// When progress stalls before `tol` is reached, the best iterate is
    /// still returned if it is within this looser tolerance.
    pub accept_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, accept_tol: 1e-6, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    /// ||b - A(X)|| / (1 + ||b||)
    pub primal_residual: f64,
    /// ||C - A^T y - Z|| / (1 + ||C||)
    pub dual_residual: f64,
    /// |pobj - dobj| / (1 + |pobj| + |dobj|)
    pub gap: f64,
    /// Objectives in units of 1/2 tr(L Y).
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// All three measures are below `tol`.
    pub converged: bool,
}

impl SolverReport {
    fn worst(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.gap)
    }
}

impl fmt::Display for SolverReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, primal residual {:.3e}, dual residual {:.3e}, gap {:.3e}",
            self.iterations, self.primal_residual, self.dual_residual, self.gap
        )
    }
}

#[derive(Debug, Clone)]
pub struct RelaxationResult {
    /// Relaxed n x n solution.
    pub y: DMatrix<f64>,
    /// Relaxed optimum, taken from the dual objective: a lower bound on the
    /// MinCut value, an upper bound on the MaxCut value.
    pub bound: f64,
    pub k: usize,
    pub direction: Direction,
    pub report: SolverReport,
}

impl RelaxationResult {
    /// Largest violation among the constraints, as
    /// (diag, row sums, negative entries, negative eigenvalue).
    pub fn violations(&self) -> (f64, f64, f64, f64) {
        let n = self.y.nrows();
        let m = (n / self.k) as f64;
        let diag = (0..n).map(|i| (self.y[(i, i)] - 1.0).abs()).fold(0.0, f64::max);
        let rows = (0..n).map(|i| (self.y.row(i).sum() - m).abs()).fold(0.0, f64::max);
        let neg = self.y.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        let eig = (-self.y.clone().symmetric_eigenvalues().min()).max(0.0);
        (diag, rows, neg, eig)
    }
}

/// Solves the SDP relaxation of k-equi-MinCut (`Direction::Min`) or
/// k-equi-MaxCut (`Direction::Max`) for the graph with affinities `a`.
pub fn solve_relaxation(
    a: &AffinityMatrix,
    k: usize,
    direction: Direction,
    opts: &SolverOptions,
) -> Result<RelaxationResult> {
    let n = a.n();
    check_equipartition_shape(n, k)?;
    if k < 2 {
        return Err(Error::InvalidArgument("relaxation needs k >= 2".into()));
    }
    if !(opts.tol > 0.0) || !(opts.accept_tol >= opts.tol) {
        return Err(Error::InvalidArgument(format!(
            "tolerances {} / {} must be positive and ordered",
            opts.tol, opts.accept_tol
        )));
    }
    let m = n / k;
    let lap = a.laplacian();

    if m == 1 {
        // Every node alone: Y = I is the only feasible point.
        let y = DMatrix::identity(n, n);
        let bound = 0.5 * lap.trace();
        let report = SolverReport {
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
            primal_objective: bound,
            dual_objective: bound,
            converged: true,
        };
        return Ok(RelaxationResult { y, bound, k, direction, report });
    }

    // Solve with the objective scaled to unit magnitude.
    let scale = lap.amax();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let problem = equipartition_problem(&(&lap / scale), m, direction);
    let rho = (m - 1) as f64 / (n - 1) as f64;
    let x0 = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho });
    let xl0 = DVector::from_element(problem.nl, rho);
    let sol = solve_conic(&problem, x0, xl0, opts)?;

    let y = (&sol.x + sol.x.transpose()) * 0.5;
    let sign = match direction {
        Direction::Min => scale,
        Direction::Max => -scale,
    };
    let mut report = sol.report;
    report.primal_objective *= sign;
    report.dual_objective *= sign;
    let bound = report.dual_objective;
    Ok(RelaxationResult { y, bound, k, direction, report })
}

/// Sparse constraint row: entries of the symmetric matrix coefficient (both
/// triangles listed) and of the linear block.
#[derive(Debug, Clone, Default)]
struct Constraint {
    psd: Vec<(usize, usize, f64)>,
    lin: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
struct ConicProblem {
    n: usize,
    nl: usize,
    c_psd: DMatrix<f64>,
    c_lin: DVector<f64>,
    rows: Vec<Constraint>,
    b: DVector<f64>,
}

fn equipartition_problem(lap: &DMatrix<f64>, m: usize, direction: Direction) -> ConicProblem {
    let n = lap.nrows();
    let sign = match direction {
        Direction::Min => 0.5,
        Direction::Max => -0.5,
    };
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        rows.push(Constraint { psd: vec![(i, i, 1.0)], lin: vec![] });
        b.push(1.0);
    }
    for i in 0..n {
        let mut psd = vec![(i, i, 1.0)];
        for j in (0..n).filter(|&j| j != i) {
            psd.push((i, j, 0.5));
            psd.push((j, i, 0.5));
        }
        rows.push(Constraint { psd, lin: vec![] });
        b.push(m as f64);
    }
    let mut slot = 0;
    for i in 0..n {
        for j in i + 1..n {
            rows.push(Constraint { psd: vec![(i, j, 0.5), (j, i, 0.5)], lin: vec![(slot, -1.0)] });
            b.push(0.0);
            slot += 1;
        }
    }
    ConicProblem { n, nl: slot, c_psd: lap * sign, c_lin: DVector::zeros(slot), rows, b: DVector::from_vec(b) }
}

struct ConicSolution {
    x: DMatrix<f64>,
    report: SolverReport,
}

struct Direction5 {
    dx: DMatrix<f64>,
    dxl: DVector<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    dzl: DVector<f64>,
}

impl ConicProblem {
    fn apply(&self, x: &DMatrix<f64>, xl: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| {
                r.psd.iter().map(|&(p, q, v)| v * x[(p, q)]).sum::<f64>()
                    + r.lin.iter().map(|&(l, v)| v * xl[l]).sum::<f64>()
            }),
        )
    }

    fn apply_psd(&self, g: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| r.psd.iter().map(|&(p, q, v)| v * g[(p, q)]).sum::<f64>()),
        )
    }

    fn apply_lin(&self, g: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| r.lin.iter().map(|&(l, v)| v * g[l]).sum::<f64>()),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut s = DMatrix::zeros(self.n, self.n);
        let mut l = DVector::zeros(self.nl);
        for (r, &ya) in self.rows.iter().zip(y.iter()) {
            for &(p, q, v) in &r.psd {
                s[(p, q)] += ya * v;
            }
            for &(i, v) in &r.lin {
                l[i] += ya * v;
            }
        }
        (s, l)
    }

    /// M_ab = <A_a, X A_b Z^-1> + sum_l a_al a_bl x_l / z_l.
    fn schur(&self, x: &DMatrix<f64>, zi: &DMatrix<f64>, xl: &DVector<f64>, zl: &DVector<f64>) -> DMatrix<f64> {
        let nc = self.rows.len();
        let n = self.n;
        let mut mat = DMatrix::zeros(nc, nc);
        let mut g = DMatrix::zeros(n, n);
        for (bi, rb) in self.rows.iter().enumerate() {
            g.fill(0.0);
            for &(r, c, beta) in &rb.psd {
                // g += beta * X[:, r] Zi[c, :]
                for q in 0..n {
                    let zc = beta * zi[(c, q)];
                    if zc == 0.0 {
                        continue;
                    }
                    for p in 0..n {
                        g[(p, q)] += x[(p, r)] * zc;
                    }
                }
            }
            for (ai, ra) in self.rows.iter().enumerate().skip(bi) {
                let v: f64 = ra.psd.iter().map(|&(p, q, alpha)| alpha * g[(p, q)]).sum();
                mat[(ai, bi)] = v;
            }
        }
        let ratio = xl.component_div(zl);
        let mut by_slot: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nl];
        for (ai, r) in self.rows.iter().enumerate() {
            for &(l, v) in &r.lin {
                by_slot[l].push((ai, v));
            }
        }
        for (l, users) in by_slot.iter().enumerate() {
            for &(a1, v1) in users {
                for &(a2, v2) in users {
                    if a1 >= a2 {
                        mat[(a1, a2)] += v1 * v2 * ratio[l];
                    }
                }
            }
        }
        for i in 0..nc {
            for j in i + 1..nc {
                mat[(i, j)] = mat[(j, i)];
            }
        }
        mat
    }
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Largest step alpha with X + alpha dX still PSD (infinity if unbounded).
fn psd_step(chol: &Cholesky<f64, Dyn>, d: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let s = &linv * d * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let lmin = s.symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn lin_step(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    x.iter().zip(d.iter()).filter(|(_, &di)| di < 0.0).map(|(&xi, &di)| -xi / di).fold(f64::INFINITY, f64::min)
}

fn solve_conic(
    p: &ConicProblem,
    mut x: DMatrix<f64>,
    mut xl: DVector<f64>,
    opts: &SolverOptions,
) -> Result<ConicSolution> {
    const STEP_FRACTION: f64 = 0.98;
    const REFINE_STEPS: usize = 3;
    const STALL_ITERS: usize = 8;
    let n = p.n;
    let nu = (n + p.nl) as f64;
    let scale = 1.0 + frob(&p.c_psd).max(p.c_lin.norm());
    let mut y = DVector::zeros(p.rows.len());
    let mut z = DMatrix::identity(n, n) * scale;
    let mut zl = DVector::from_element(p.nl, scale);
    let bnorm = 1.0 + p.b.norm();
    let cnorm = 1.0 + (frob(&p.c_psd).powi(2) + p.c_lin.norm_squared()).sqrt();

    let mut best: Option<ConicSolution> = None;
    let mut since_best = 0;
    let mut report = SolverReport {
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        converged: false,
    };

    for it in 0..=opts.max_iter {
        let rp = &p.b - p.apply(&x, &xl);
        let (aty, atyl) = p.adjoint(&y);
        let rd = &p.c_psd - aty - &z;
        let rdl = &p.c_lin - atyl - &zl;
        let pobj = dot(&p.c_psd, &x) + p.c_lin.dot(&xl);
        let dobj = p.b.dot(&y);
        let mu = (dot(&x, &z) + xl.dot(&zl)) / nu;

        report.iterations = it;
        report.primal_residual = rp.norm() / bnorm;
        report.dual_residual = (frob(&rd).powi(2) + rdl.norm_squared()).sqrt() / cnorm;
        report.gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        report.primal_objective = pobj;
        report.dual_objective = dobj;

        if report.worst() < opts.tol {
            report.converged = true;
            return Ok(ConicSolution { x, report });
        }
        if best.as_ref().is_none_or(|b| report.worst() < 0.9 * b.report.worst()) {
            best = Some(ConicSolution { x: x.clone(), report: report.clone() });
            since_best = 0;
        } else {
            since_best += 1;
        }
        let stalled = since_best >= STALL_ITERS && best.as_ref().is_some_and(|b| b.report.worst() < opts.accept_tol);
        if it == opts.max_iter || !mu.is_finite() || stalled {
            break;
        }

        let (Some(xchol), Some(zchol)) = (x.clone().cholesky(), z.clone().cholesky()) else {
            break;
        };
        let zi = zchol.inverse();
        let mut schur = p.schur(&x, &zi, &xl, &zl);
        let mchol = match schur.clone().cholesky() {
            Some(c) => c,
            None => {
                let reg = 1e-12 * schur.diagonal().max().max(1.0);
                for i in 0..schur.nrows() {
                    schur[(i, i)] += reg;
                }
                match schur.cholesky() {
                    Some(c) => c,
                    None => break,
                }
            }
        };

        let direction = |sigma: f64, corr: Option<(&DMatrix<f64>, &DVector<f64>)>| -> Direction5 {
            let mut ps = &zi * (sigma * mu) - &x;
            let mut pl = DVector::from_iterator(p.nl, zl.iter().zip(xl.iter()).map(|(&zj, &xj)| sigma * mu / zj - xj));
            if let Some((cs, cl)) = corr {
                ps -= cs * &zi;
                pl -= cl.component_div(&zl);
            }
            let ts = &ps - &x * &rd * &zi;
            let tl = &pl - xl.component_mul(&rdl).component_div(&zl);
            let rhs = &rp - p.apply_psd(&ts) - p.apply_lin(&tl);
            let mut dy = mchol.solve(&rhs);
            let step = |dy: &DVector<f64>| {
                let (atdy, atdyl) = p.adjoint(dy);
                let dz = &rd - atdy;
                let dzl = &rdl - atdyl;
                let dx = &ps - &x * &dz * &zi;
                let dx = (&dx + dx.transpose()) * 0.5;
                let dxl = &pl - xl.component_mul(&dzl).component_div(&zl);
                (dx, dxl, dz, dzl)
            };
            let (mut dx, mut dxl, mut dz, mut dzl) = step(&dy);
            // Iterative refinement against the primal equations themselves.
            for _ in 0..REFINE_STEPS {
                let defect = &rp - p.apply(&dx, &dxl);
                if defect.norm() <= 1e-15 * bnorm {
                    break;
                }
                dy += mchol.solve(&defect);
                (dx, dxl, dz, dzl) = step(&dy);
            }
            Direction5 { dx, dxl, dy, dz, dzl }
        };

        let aff = direction(0.0, None);
        let ap = psd_step(&xchol, &aff.dx).min(lin_step(&xl, &aff.dxl)).min(1.0);
        let ad = psd_step(&zchol, &aff.dz).min(lin_step(&zl, &aff.dzl)).min(1.0);
        let mu_aff =
            (dot(&(&x + &aff.dx * ap), &(&z + &aff.dz * ad)) + (&xl + &aff.dxl * ap).dot(&(&zl + &aff.dzl * ad))) / nu;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        let corr_s = &aff.dx * &aff.dz;
        let corr_l = aff.dxl.component_mul(&aff.dzl);
        let d = direction(sigma, Some((&corr_s, &corr_l)));
        let ap = (STEP_FRACTION * psd_step(&xchol, &d.dx).min(lin_step(&xl, &d.dxl))).min(1.0);
        let ad = (STEP_FRACTION * psd_step(&zchol, &d.dz).min(lin_step(&zl, &d.dzl))).min(1.0);
        if ap.max(ad) < 1e-12 {
            break;
        }

        x += &d.dx * ap;
        x = (&x + x.transpose()) * 0.5;
        xl += &d.dxl * ap;
        y += &d.dy * ad;
        z += &d.dz * ad;
        z = (&z + z.transpose()) * 0.5;
        zl += &d.dzl * ad;
    }
    match best {
        Some(b) if b.report.worst() < opts.accept_tol => Ok(b),
        _ => Err(Error::NotConverged(report)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::brute_force_equipartition;

    fn complete(n: usize) -> AffinityMatrix {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        AffinityMatrix::from_edges(n, &edges).unwrap()
    }

    fn assert_feasible(res: &RelaxationResult) {
        let (d, r, neg, eig) = res.violations();
        assert!(d < 1e-6 && r < 1e-6 && neg < 1e-8 && eig < 1e-6, "{d} {r} {neg} {eig}");
    }

    #[test]
    fn k4_bisection_bound() {
        for dir in [Direction::Min, Direction::Max] {
            let res = solve_relaxation(&complete(4), 2, dir, &SolverOptions::default()).unwrap();
            assert_feasible(&res);
            // Every bisection of K4 cuts exactly 4 edges, and on the feasible
            // set sum_ij Y_ij = n m fixes 1/2 tr(LY) = (n^2 - n m) / 2 = 4.
            assert!((res.bound - 4.0).abs() < 1e-6, "{}", res.bound);
        }
    }

    #[test]
    fn empty_graph_bound_is_zero() {
        let a = AffinityMatrix::from_edges(6, &[]).unwrap();
        let res = solve_relaxation(&a, 3, Direction::Min, &SolverOptions::default()).unwrap();
        assert!(res.bound.abs() < 1e-7);
        assert_feasible(&res);
    }

    #[test]
    fn singleton_blocks_are_trivial() {
        let a = complete(4);
        let res = solve_relaxation(&a, 4, Direction::Min, &SolverOptions::default()).unwrap();
        assert_eq!(res.bound, 6.0);
        assert_eq!(res.y, DMatrix::identity(4, 4));
    }

    #[test]
    fn rejects_bad_arguments() {
        let a = complete(6);
        assert!(solve_relaxation(&a, 4, Direction::Min, &SolverOptions::default()).is_err());
        assert!(solve_relaxation(&a, 1, Direction::Min, &SolverOptions::default()).is_err());
        let bad = SolverOptions { tol: 0.0, ..Default::default() };
        assert!(solve_relaxation(&a, 2, Direction::Min, &bad).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let opts = SolverOptions { max_iter: 2, ..Default::default() };
        match solve_relaxation(&complete(6), 2, Direction::Min, &opts) {
            Err(Error::NotConverged(r)) => assert!(!r.converged && r.iterations <= 2),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn two_disjoint_cliques_are_tight() {
        // Two K4's: the optimal bisection cuts nothing and the relaxation
        // must find a bound of zero.
        let mut edges = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in i + 1..4 {
                    edges.push((base + i, base + j));
                }
            }
        }
        let a = AffinityMatrix::from_edges(8, &edges).unwrap();
        let res = solve_relaxation(&a, 2, Direction::Min, &SolverOptions::default()).unwrap();
        assert!(res.bound.abs() < 1e-6, "{}", res.bound);
        assert_feasible(&res);
    }

    #[test]
    fn bounds_bracket_brute_force() {
        use crate::mrf::{generate_random_mrf, Coupling, RandomModelSpec};
        for seed in 0..8 {
            let spec =
                RandomModelSpec { n: 8, edge_prob: 0.4, w_obs: 0.0, w_coup: 1.0, coupling: Coupling::Mixed, seed };
            let a = AffinityMatrix::from_mrf(
                &generate_random_mrf(&spec).unwrap(),
                crate::partition::AffinityScheme::Coupling,
            );
            for k in [2, 4] {
                let lo = solve_relaxation(&a, k, Direction::Min, &SolverOptions::default()).unwrap();
                let hi = solve_relaxation(&a, k, Direction::Max, &SolverOptions::default()).unwrap();
                let (_, min) = brute_force_equipartition(&a, k, Direction::Min).unwrap();
                let (_, max) = brute_force_equipartition(&a, k, Direction::Max).unwrap();
                assert!(lo.bound <= min + 1e-6, "{} > {}", lo.bound, min);
                assert!(hi.bound >= max - 1e-6, "{} < {}", hi.bound, max);
                assert_feasible(&lo);
                assert_feasible(&hi);
            }
        }
    }
}
