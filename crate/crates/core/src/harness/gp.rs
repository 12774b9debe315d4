//! Partition benchmark: relaxation bound, rounded cut and their ratio on
//! random graphs, per edge probability, k, direction and rounding.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_bytes_with_header, mean, std_dev, write_file, ExperimentConfig, Rounding};
use crate::error::Result;
use crate::mrf::{generate_random_mrf, RandomModelSpec};
use crate::partition::{
    feasible_to_bound_ratio, round_kmeans, round_random_projection, solve_relaxation, AffinityMatrix, Direction,
};
use crate::rng;

pub const GP_TRIALS_FILE: &str = "gp_trials.csv";
pub const GP_SUMMARY_FILE: &str = "gp_summary.csv";
pub const GP_TIMINGS_FILE: &str = "gp_timings.csv";
pub const GP_SCHEMA_FILE: &str = "gp_schema.txt";

const GP_TRIALS_HEADER: [&str; 10] =
    ["setting", "p", "k", "direction", "rounding", "trial", "seed", "bound", "feasible", "ratio"];
const GP_SUMMARY_HEADER: [&str; 10] =
    ["setting", "p", "k", "direction", "rounding", "trials", "mean_bound", "mean_feasible", "mean_ratio", "std_ratio"];

const GP_SCHEMA: &str = "\
gp_trials.csv: one row per (setting, trial, k, direction, rounding)
  setting    model setting label (p, coupling, w_obs, w_coup)
  p          edge probability
  k          number of clusters
  direction  min (equi-MinCut) or max (equi-MaxCut)
  rounding   kmeans or rp (random projection)
  trial      trial index within the setting
  seed       seed of the random model
  bound      SDP relaxation bound (lower for min, upper for max)
  feasible   cut weight of the rounded equipartition
  ratio      feasible / bound, 1 when both are zero

gp_summary.csv: one row per (setting, k, direction, rounding)
  trials         number of trials
  mean_bound     mean relaxation bound
  mean_feasible  mean rounded cut
  mean_ratio     mean of ratio
  std_ratio      sample standard deviation of ratio

gp_timings.csv: wall-clock milliseconds per (setting, trial); not deterministic
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpRecord {
    pub setting: String,
    pub p: f64,
    pub k: usize,
    pub direction: Direction,
    pub rounding: Rounding,
    pub trial: usize,
    pub seed: u64,
    pub bound: f64,
    pub feasible: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSummary {
    pub setting: String,
    pub p: f64,
    pub k: usize,
    pub direction: Direction,
    pub rounding: Rounding,
    pub trials: usize,
    pub mean_bound: f64,
    pub mean_feasible: f64,
    pub mean_ratio: f64,
    pub std_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    setting: String,
    trial: usize,
    runtime_ms: f64,
}

#[derive(Debug, Clone)]
pub struct GpResults {
    pub records: Vec<GpRecord>,
    pub summaries: Vec<GpSummary>,
    timings: Vec<Timing>,
}

impl GpResults {
    pub fn summary(&self, p: f64, k: usize, direction: Direction, rounding: Rounding) -> Option<&GpSummary> {
        self.summaries.iter().find(|s| s.p == p && s.k == k && s.direction == direction && s.rounding == rounding)
    }

    pub fn trials_csv(&self) -> Result<Vec<u8>> {
        csv_bytes_with_header(&GP_TRIALS_HEADER, &self.records)
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        csv_bytes_with_header(&GP_SUMMARY_HEADER, &self.summaries)
    }

    /// Writes the CSVs, the schema and the resolved config into `dir`.
    pub fn write(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        write_file(dir, GP_TRIALS_FILE, &self.trials_csv()?)?;
        write_file(dir, GP_SUMMARY_FILE, &self.summary_csv()?)?;
        write_file(dir, GP_TIMINGS_FILE, &csv_bytes_with_header(&["setting", "trial", "runtime_ms"], &self.timings)?)?;
        write_file(dir, GP_SCHEMA_FILE, GP_SCHEMA.as_bytes())?;
        cfg.write_resolved(dir)?;
        Ok(())
    }
}

pub(crate) fn model_seed(master: u64, setting: usize, trial: usize) -> u64 {
    rng::derive_seed(master, ((setting as u64) << 32) | trial as u64)
}

pub fn run_partition_benchmark(cfg: &ExperimentConfig) -> Result<GpResults> {
    cfg.validate_partition_benchmark()?;
    let settings = cfg.settings();
    let opts = cfg.solver_options();
    let part = &cfg.partition;
    let jobs: Vec<(usize, usize)> = (0..settings.len()).flat_map(|s| (0..cfg.trials).map(move |t| (s, t))).collect();

    let per_trial: Vec<(Vec<GpRecord>, Timing)> = jobs
        .par_iter()
        .map(|&(s, trial)| -> Result<_> {
            let start = Instant::now();
            let setting = &settings[s];
            let label = setting.label();
            let seed = model_seed(cfg.seed, s, trial);
            let mrf = generate_random_mrf(&RandomModelSpec {
                n: cfg.model.n,
                edge_prob: setting.edge_prob,
                w_obs: setting.w_obs,
                w_coup: setting.w_coup,
                coupling: setting.coupling,
                seed,
            })?;
            let a = AffinityMatrix::from_mrf(&mrf, part.affinity);
            let mut rows = Vec::new();
            for &k in &part.k {
                let round_seed = rng::derive_seed(seed, k as u64);
                for direction in [Direction::Min, Direction::Max] {
                    let res = solve_relaxation(&a, k, direction, &opts)?;
                    for &rounding in &part.roundings {
                        let p = match rounding {
                            Rounding::Kmeans => round_kmeans(&res, &a, k, direction, part.kmeans_restarts, round_seed)?,
                            Rounding::RandomProjection => {
                                round_random_projection(&res, &a, k, direction, part.rp_trials, round_seed)?
                            }
                        };
                        let feasible = a.cut_weight(&p);
                        rows.push(GpRecord {
                            setting: label.clone(),
                            p: setting.edge_prob,
                            k,
                            direction,
                            rounding,
                            trial,
                            seed,
                            bound: res.bound,
                            feasible,
                            ratio: feasible_to_bound_ratio(feasible, res.bound),
                        });
                    }
                }
            }
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok((rows, Timing { setting: label, trial, runtime_ms }))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut timings = Vec::new();
    for (rows, t) in per_trial {
        records.extend(rows);
        timings.push(t);
    }
    let mut summaries = Vec::new();
    for setting in &settings {
        let label = setting.label();
        for &k in &part.k {
            for direction in [Direction::Min, Direction::Max] {
                for &rounding in &part.roundings {
                    let group: Vec<&GpRecord> = records
                        .iter()
                        .filter(|r| {
                            r.setting == label && r.k == k && r.direction == direction && r.rounding == rounding
                        })
                        .collect();
                    let col = |f: fn(&GpRecord) -> f64| group.iter().map(|r| f(r)).collect::<Vec<_>>();
                    let ratios = col(|r| r.ratio);
                    summaries.push(GpSummary {
                        setting: label.clone(),
                        p: setting.edge_prob,
                        k,
                        direction,
                        rounding,
                        trials: group.len(),
                        mean_bound: mean(&col(|r| r.bound)),
                        mean_feasible: mean(&col(|r| r.feasible)),
                        mean_ratio: mean(&ratios),
                        std_ratio: std_dev(&ratios),
                    });
                }
            }
        }
    }
    Ok(GpResults { records, summaries, timings })
}
