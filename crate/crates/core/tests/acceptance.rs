//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p gmfpart --test acceptance`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gmfpart::bounds::verify_bound;
use gmfpart::exact::{exact_kl_of_product, exact_summary};
use gmfpart::gmf::{gmf_lower_bound, run_gmf, GmfConfig, GmfState};
use gmfpart::harness::{
    l1_error, run_bound_campaign, run_inference_experiment, run_partition_benchmark, ExperimentConfig,
    InferenceResults, PartitionScheme, Rounding, NAIVE_MF_LABEL,
};
use gmfpart::mrf::{generate_random_mrf, Coupling, MarkovRandomField, RandomModelSpec};
use gmfpart::partition::{
    brute_force_equipartition, random_equipartition, round_kmeans, round_random_projection, solve_relaxation,
    AffinityMatrix, AffinityScheme, Direction, Partition, SolverOptions, KMEANS_RESTARTS, RANDOM_PROJECTION_TRIALS,
};
use gmfpart::rng;
use rand::Rng as _;

const COUPLINGS: [Coupling; 3] = [Coupling::Attractive, Coupling::Repulsive, Coupling::Mixed];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within_budget(elapsed: Duration, minutes: u64) -> bool {
    elapsed <= Duration::from_secs(60 * minutes)
}

/// Every state of the model in index order, as spins.
fn spins(n: usize, s: u64) -> Vec<i8> {
    (0..n).map(|i| if s >> i & 1 == 1 { 1 } else { -1 }).collect()
}

/// log Z by plain enumeration.
fn brute_log_z(mrf: &MarkovRandomField) -> f64 {
    let e: Vec<f64> = (0..1u64 << mrf.n()).map(|s| mrf.log_unnormalized_prob(&spins(mrf.n(), s)).unwrap()).collect();
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + e.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// KL(q || p) = sum_x q(x) (log q(x) - log p(x)) over all 2^n states.
fn brute_kl(mrf: &MarkovRandomField, q: &GmfState) -> f64 {
    let n = mrf.n();
    let log_z = brute_log_z(mrf);
    let k = q.partition().k();
    let mut kl = 0.0;
    for s in 0..1u64 << n {
        let mut qx = 1.0;
        for c in 0..k {
            let idx = q.members(c).iter().enumerate().fold(0usize, |acc, (b, &i)| acc | ((s >> i & 1) as usize) << b);
            qx *= q.table(c)[idx];
        }
        if qx > 0.0 {
            let logp = mrf.log_unnormalized_prob(&spins(n, s)).unwrap() - log_z;
            kl += qx * (qx.ln() - logp);
        }
    }
    kl
}

/// Textbook naive mean field: mu_i <- tanh(theta_i + sum_j theta_ij mu_j),
/// sequential in node order from mu = 0.
fn textbook_naive_mf(mrf: &MarkovRandomField) -> Vec<f64> {
    let n = mrf.n();
    let mut nbrs = vec![Vec::new(); n];
    for (&(i, j), &t) in mrf.edges().iter().zip(mrf.theta_edge()) {
        nbrs[i].push((j, t));
        nbrs[j].push((i, t));
    }
    let mut mu = vec![0.0f64; n];
    for _ in 0..100_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let field = mrf.theta_node()[i] + nbrs[i].iter().map(|&(j, t)| t * mu[j]).sum::<f64>();
            let new = field.tanh();
            change = change.max((new - mu[i]).abs());
            mu[i] = new;
        }
        if change < 1e-14 {
            break;
        }
    }
    mu.iter().map(|m| (1.0 + m) / 2.0).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 101;
    let res = run_bound_campaign(&cfg).unwrap();
    let fixed: Vec<_> = res.records.iter().filter(|r| r.state == gmfpart::harness::StateKind::FixedPoint).collect();
    let violations = fixed.iter().filter(|r| !(r.kl >= 0.0 && r.kl <= 4.0 * r.w + 1e-9)).count();
    let lib_violations = res.violations();
    let elapsed = start.elapsed();
    let models: std::collections::BTreeSet<usize> = fixed.iter().map(|r| r.model).collect();
    let pass = models.len() == 200
        && violations == 0
        && lib_violations == 0
        && res.unconverged() == 0
        && within_budget(elapsed, 5);
    outcome(
        pass,
        format!(
            "{} models, {} fixed points, {} violations of 0 <= KL <= 4W + 1e-9, {} unconverged, \
             {} violations among {} random states, {:.1}s",
            models.len(),
            fixed.len(),
            violations,
            res.unconverged(),
            res.random_state_violations(),
            res.records.len() - fixed.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst_kl = 0.0f64;
    let mut worst_lb = 0.0f64;
    for i in 0..100u64 {
        let mut r = rng::stream(202, i);
        let n = r.random_range(2..=12usize);
        let mrf = generate_random_mrf(&RandomModelSpec {
            n,
            edge_prob: r.random_range(0.2..0.8),
            w_obs: r.random_range(0.0..1.5),
            w_coup: r.random_range(0.1..2.0),
            coupling: COUPLINGS[i as usize % 3],
            seed: r.random(),
        })
        .unwrap();
        let divisors: Vec<usize> = (1..=n).filter(|k| n % k == 0).collect();
        let k = divisors[r.random_range(0..divisors.len())];
        let part = random_equipartition(n, k, r.random()).unwrap();
        let q = if i % 2 == 0 {
            GmfState::random(part, r.random()).unwrap()
        } else {
            run_gmf(&mrf, &part, &GmfConfig::default()).unwrap().0
        };
        let oracle = exact_summary(&mrf).unwrap();
        let kl = exact_kl_of_product(&mrf, &q, oracle.log_partition).unwrap();
        let reference = brute_kl(&mrf, &q);
        worst_kl = worst_kl.max((kl - reference).abs());
        let lb = gmf_lower_bound(&mrf, &q).unwrap();
        worst_lb = worst_lb.max((lb - (brute_log_z(&mrf) - reference)).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst_kl <= 1e-8 && worst_lb <= 1e-8 && within_budget(elapsed, 1);
    outcome(
        pass,
        format!(
            "100 pairs, max |KL - enumerated KL| = {worst_kl:.2e}, max |bound - (log Z - KL)| = {worst_lb:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let opts = SolverOptions::default();
    let mut violations = Vec::new();
    let mut checks = 0;
    for i in 0..50u64 {
        let n = [8, 10, 12][i as usize % 3];
        let mut r = rng::stream(303, i);
        let mrf = generate_random_mrf(&RandomModelSpec {
            n,
            edge_prob: r.random_range(0.2..0.7),
            w_obs: 0.0,
            w_coup: 1.0,
            coupling: Coupling::Mixed,
            seed: r.random(),
        })
        .unwrap();
        let scheme = if i % 2 == 0 { AffinityScheme::Unit } else { AffinityScheme::Coupling };
        let a = AffinityMatrix::from_mrf(&mrf, scheme);
        for dir in [Direction::Min, Direction::Max] {
            let res = solve_relaxation(&a, 2, dir, &opts).unwrap();
            let (_, opt) = brute_force_equipartition(&a, 2, dir).unwrap();
            let km = a.cut_weight(&round_kmeans(&res, &a, 2, dir, KMEANS_RESTARTS, i).unwrap());
            let rp = a.cut_weight(&round_random_projection(&res, &a, 2, dir, RANDOM_PROJECTION_TRIALS, i).unwrap());
            for cut in [km, rp] {
                checks += 1;
                let ok = match dir {
                    Direction::Min => res.bound <= opt + 1e-6 && opt <= cut + 1e-6,
                    Direction::Max => res.bound >= opt - 1e-6 && opt >= cut - 1e-6,
                };
                if !ok {
                    violations.push(format!("graph {i} {dir:?}: bound {} opt {opt} cut {cut}", res.bound));
                }
            }
        }
    }
    let detail = format!(
        "50 graphs, {checks} sandwich checks (min and max, kmeans and rp), {} violations{}",
        violations.len(),
        violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
    );
    outcome(violations.is_empty(), detail)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 404;
    cfg.trials = 30;
    cfg.model.n = 24;
    cfg.model.edge_prob = vec![0.3];
    cfg.model.coupling = vec![Coupling::Mixed];
    cfg.model.w_obs = vec![0.1];
    cfg.model.w_coup = vec![1.0];
    cfg.partition.k = vec![3, 4, 6, 8];
    cfg.partition.affinity = AffinityScheme::Unit;
    cfg.partition.roundings = vec![Rounding::Kmeans, Rounding::RandomProjection];
    let res = run_partition_benchmark(&cfg).unwrap();
    let elapsed = start.elapsed();
    let mut pass = within_budget(elapsed, 30);
    let mut parts = Vec::new();
    for k in [3, 4, 6, 8] {
        let minc = res.summary(0.3, k, Direction::Min, Rounding::Kmeans).unwrap();
        let maxc = res.summary(0.3, k, Direction::Max, Rounding::Kmeans).unwrap();
        let maxc_rp = res.summary(0.3, k, Direction::Max, Rounding::RandomProjection).unwrap();
        pass &= (1.0..=1.15).contains(&minc.mean_ratio);
        pass &= (0.90..=1.0).contains(&maxc.mean_ratio);
        pass &= maxc_rp.mean_ratio < maxc.mean_ratio;
        parts.push(format!(
            "k={k}: MinC {:.3}±{:.3}, MaxC {:.3}±{:.3}, MaxC rp {:.3}±{:.3}",
            minc.mean_ratio, minc.std_ratio, maxc.mean_ratio, maxc.std_ratio, maxc_rp.mean_ratio, maxc_rp.std_ratio
        ));
    }
    outcome(pass, format!("mean f/b over 30 trials; {}; {:.1}s", parts.join("; "), elapsed.as_secs_f64()))
}

fn figure_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 505;
    cfg.trials = 20;
    cfg.model.n = 24;
    cfg.model.edge_prob = vec![0.3];
    cfg.model.coupling = vec![Coupling::Mixed];
    cfg.model.w_obs = vec![0.1];
    cfg.model.w_coup = vec![1.0];
    cfg.partition.k = vec![3, 4, 6, 8];
    cfg.partition.schemes = PartitionScheme::ALL.to_vec();
    cfg
}

/// Per-scheme means over all trials and all k.
fn scheme_means(res: &InferenceResults, field: fn(&gmfpart::harness::TrialRecord) -> f64) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in &res.records {
        let e = acc.entry(r.scheme.clone()).or_default();
        e.0 += field(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}

fn criterion_5(res: &InferenceResults, elapsed: Duration) -> Outcome {
    let l1 = scheme_means(res, |r| r.l1_error);
    let naive = l1[NAIVE_MF_LABEL];
    let schemes: Vec<String> = PartitionScheme::ALL.iter().map(|s| s.to_string()).collect();
    let above_naive: Vec<&String> = schemes.iter().filter(|s| l1[*s] > naive).collect();
    let best = l1["minc-coupling"];
    let beaten_by: Vec<&String> =
        schemes.iter().filter(|s| *s == "random" || s.starts_with("maxc-")).filter(|s| l1[*s] < best).collect();
    let per_k_above = res.summaries.iter().filter(|s| s.scheme != NAIVE_MF_LABEL && s.mean_l1 > naive).count();
    let pass = above_naive.is_empty() && beaten_by.is_empty() && within_budget(elapsed, 60);
    let table: Vec<String> = schemes.iter().map(|s| format!("{s} {:.4}", l1[s])).collect();
    outcome(
        pass,
        format!(
            "mean l1: naive-mf {naive:.4}, {}; schemes above naive: {above_naive:?} ({per_k_above} of 28 (scheme, k) cells); \
             schemes beating minc-coupling: {beaten_by:?}; {:.1}s",
            table.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6(res: &InferenceResults) -> Outcome {
    let above = res.records.iter().filter(|r| r.gmf_lower_bound > r.log_z).count();
    let schemes: Vec<String> = PartitionScheme::ALL.iter().map(|s| s.to_string()).collect();
    let l1 = scheme_means(res, |r| r.l1_error);
    let gap = scheme_means(res, |r| r.gap);
    let rank = |m: &BTreeMap<String, f64>| {
        let mut v: Vec<&String> = schemes.iter().collect();
        v.sort_by(|a, b| m[*a].total_cmp(&m[*b]));
        v
    };
    let (rl, rg) = (rank(&l1), rank(&gap));
    let best_agree = rl[0] == rg[0];
    let worst_agree = rl[rl.len() - 1] == rg[rg.len() - 1];
    let ratio_defined = res.records.iter().filter(|r| r.ratio.is_some()).count();
    outcome(
        above == 0 && best_agree && worst_agree,
        format!(
            "{} records, {above} with bound > log Z, {ratio_defined} with a defined ratio; \
             l1 ranking {rl:?}; gap ranking {rg:?}",
            res.records.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut worst_l1 = 0.0f64;
    let mut worst_kl = 0.0f64;
    let mut multi = 0;
    for i in 0..20u64 {
        let mut r = rng::stream(707, i);
        let n = 14;
        let mrf = generate_random_mrf(&RandomModelSpec {
            n,
            edge_prob: r.random_range(0.05..0.2),
            w_obs: r.random_range(0.0..1.0),
            w_coup: r.random_range(0.5..2.0),
            coupling: COUPLINGS[i as usize % 3],
            seed: r.random(),
        })
        .unwrap();
        let oracle = exact_summary(&mrf).unwrap();
        let components = mrf.connected_components();
        if components.len() > 1 {
            multi += 1;
        }
        for part in [Partition::whole(n), Partition::from_clusters(&components, n).unwrap()] {
            let (q, report) = run_gmf(&mrf, &part, &GmfConfig::default()).unwrap();
            assert!(report.converged);
            worst_l1 = worst_l1.max(l1_error(&q.singleton_marginals(), &oracle.singleton_marginals).unwrap());
            let check = verify_bound(&mrf, &part, &q, &oracle).unwrap();
            worst_kl = worst_kl.max(check.kl.abs());
        }
    }
    outcome(
        worst_l1 < 1e-8 && worst_kl < 1e-8 && multi > 0,
        format!(
            "20 models ({multi} with several components), k = 1 and component-aligned: max l1 {worst_l1:.2e}, max |KL| {worst_kl:.2e}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let mut r = rng::stream(808, i);
        let n = r.random_range(2..=16usize);
        let mrf = generate_random_mrf(&RandomModelSpec {
            n,
            edge_prob: r.random_range(0.1..0.6),
            w_obs: r.random_range(0.0..1.0),
            w_coup: r.random_range(0.1..1.0),
            coupling: COUPLINGS[i as usize % 3],
            seed: r.random(),
        })
        .unwrap();
        let cfg = GmfConfig { tol: 1e-13, max_sweeps: 100_000, ..GmfConfig::default() };
        let (q, _) = run_gmf(&mrf, &Partition::singletons(n), &cfg).unwrap();
        let reference = textbook_naive_mf(&mrf);
        for (a, b) in q.singleton_marginals().iter().zip(&reference) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-8, format!("50 models, max |P_gmf - P_naive| = {worst:.2e}"))
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn criterion_9() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 909;
    cfg.trials = 4;
    cfg.model.n = 12;
    cfg.model.edge_prob = vec![0.3, 0.5];
    cfg.model.w_obs = vec![0.5];
    cfg.model.w_coup = vec![1.0];
    cfg.partition.k = vec![2, 3, 4];
    cfg.campaign.models = 12;
    cfg.campaign.n = vec![8, 10];
    let run = || {
        let gp = run_partition_benchmark(&cfg).unwrap();
        let inf = run_inference_experiment(&cfg).unwrap();
        let bounds = run_bound_campaign(&cfg).unwrap();
        vec![
            ("gp_trials", gp.trials_csv().unwrap()),
            ("gp_summary", gp.summary_csv().unwrap()),
            ("inference_trials", inf.trials_csv().unwrap()),
            ("inference_summary", inf.summary_csv().unwrap()),
            ("bounds_trials", bounds.trials_csv().unwrap()),
        ]
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    let again = in_pool(4, run);
    let differing: Vec<&str> = one
        .iter()
        .zip(&four)
        .zip(&again)
        .filter(|((a, b), c)| a.1 != b.1 || b.1 != c.1)
        .map(|((a, _), _)| a.0)
        .collect();
    let bytes: usize = one.iter().map(|(_, b)| b.len()).sum();
    outcome(
        differing.is_empty(),
        format!("5 CSVs ({bytes} bytes) compared across 1, 4 and 4 worker threads; differing: {differing:?}"),
    )
}

fn report(results: &mut Vec<bool>, id: &str, title: &str, o: Outcome) {
    println!("[{}] criterion {id} ({title}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    results.push(o.pass);
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: &str| filter.is_empty() || filter.iter().any(|f| f == id);
    let mut results = Vec::new();
    if wanted("1") {
        report(&mut results, "1", "KL sandwich campaign", criterion_1());
    }
    if wanted("2") {
        report(&mut results, "2", "oracle self-consistency", criterion_2());
    }
    if wanted("3") {
        report(&mut results, "3", "SDP sandwich", criterion_3());
    }
    if wanted("4") {
        report(&mut results, "4", "partition benchmark f/b", criterion_4());
    }
    if wanted("5") || wanted("6") {
        let start = Instant::now();
        let res = run_inference_experiment(&figure_config()).unwrap();
        let elapsed = start.elapsed();
        if wanted("5") {
            report(&mut results, "5", "l1 error ordering", criterion_5(&res, elapsed));
        }
        if wanted("6") {
            report(&mut results, "6", "lower bound correspondence", criterion_6(&res));
        }
    }
    if wanted("7") {
        report(&mut results, "7", "exact degenerate partitions", criterion_7());
    }
    if wanted("8") {
        report(&mut results, "8", "naive mean field equivalence", criterion_8());
    }
    if wanted("9") {
        report(&mut results, "9", "determinism across worker counts", criterion_9());
    }
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
