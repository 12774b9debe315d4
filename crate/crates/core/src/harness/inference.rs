//! Inference experiment: exact marginals and log Z against naive mean field
//! and GMF on clusters from every partition scheme.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gp::model_seed;
use super::{
    csv_bytes_with_header, l1_error, mean, scheme_partition, std_dev, write_file, ExperimentConfig, SchemePartition,
};
use crate::bounds::verify_bound;
use crate::error::{Error, Result};
use crate::exact::exact_summary_with_limit;
use crate::gmf::run_gmf;
use crate::mrf::{generate_random_mrf, RandomModelSpec};
use crate::partition::Partition;
use crate::rng;

pub const NAIVE_MF_LABEL: &str = "naive-mf";
/// The bound / log Z ratio is only reported when |log Z| exceeds this.
pub const RATIO_MIN_LOG_Z: f64 = 0.5;

pub const INFERENCE_TRIALS_FILE: &str = "inference_trials.csv";
pub const INFERENCE_SUMMARY_FILE: &str = "inference_summary.csv";
pub const INFERENCE_TIMINGS_FILE: &str = "inference_timings.csv";
pub const INFERENCE_SCHEMA_FILE: &str = "inference_schema.txt";

const TRIALS_HEADER: [&str; 18] = [
    "setting",
    "trial",
    "seed",
    "scheme",
    "k",
    "cut_bound",
    "cut_feasible",
    "l1_error",
    "gmf_lower_bound",
    "log_z",
    "gap",
    "ratio",
    "w",
    "kl_lower",
    "kl_upper",
    "bound_holds",
    "sweeps",
    "converged",
];
const SUMMARY_HEADER: [&str; 13] = [
    "setting",
    "scheme",
    "k",
    "trials",
    "mean_l1",
    "std_l1",
    "mean_gap",
    "std_gap",
    "mean_ratio",
    "ratio_trials",
    "mean_sweeps",
    "bound_violations",
    "unconverged",
];

const INFERENCE_SCHEMA: &str = "\
inference_trials.csv: one row per (setting, trial, scheme, k)
  setting          model setting label (p, coupling, w_obs, w_coup)
  trial            trial index within the setting
  seed             seed of the random model
  scheme           minc-<affinity>, maxc-<affinity>, random, or naive-mf
  k                number of clusters (n for naive-mf)
  cut_bound        SDP bound of the scheme's cut on its own affinity (empty for random, naive-mf)
  cut_feasible     rounded cut weight on the scheme's affinity (empty for random, naive-mf)
  l1_error         mean over nodes of |P_gmf(X_i = +1) - P(X_i = +1)|
  gmf_lower_bound  E_q[log p~] + H(q) at the GMF fixed point
  log_z            exact log partition function
  gap              log_z - gmf_lower_bound, equal to KL(q || p)
  ratio            gmf_lower_bound / log_z, empty unless |log_z| > 0.5
  w                total |theta_ij| over edges cut by the clusters
  kl_lower         lower end of the KL sandwich (0 for pairwise spin models)
  kl_upper         upper end of the KL sandwich (4 w for pairwise spin models)
  bound_holds      kl_lower <= gap <= kl_upper up to 1e-9
  sweeps           GMF sweeps performed
  converged        GMF reached its tolerance

inference_summary.csv: one row per (setting, scheme, k)
  trials            number of trials
  mean_l1, std_l1   mean and sample standard deviation of l1_error
  mean_gap, std_gap mean and sample standard deviation of gap
  mean_ratio        mean of ratio over trials where it is defined (empty if none)
  ratio_trials      number of trials with a defined ratio
  mean_sweeps       mean GMF sweeps
  bound_violations  trials with bound_holds = false
  unconverged       trials with converged = false

inference_timings.csv: wall-clock milliseconds per (setting, trial, scheme, k); not deterministic

l1_error.svg, bound_ratio.svg and the matching *_series.csv files plot the
summary means against k, one panel per setting.
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub setting: String,
    pub trial: usize,
    pub seed: u64,
    pub scheme: String,
    pub k: usize,
    pub cut_bound: Option<f64>,
    pub cut_feasible: Option<f64>,
    pub l1_error: f64,
    pub gmf_lower_bound: f64,
    pub log_z: f64,
    pub gap: f64,
    pub ratio: Option<f64>,
    pub w: f64,
    pub kl_lower: f64,
    pub kl_upper: f64,
    pub bound_holds: bool,
    pub sweeps: usize,
    pub converged: bool,
    #[serde(skip)]
    pub runtime_ms: f64,
}

impl TrialRecord {
    fn is_finite(&self) -> bool {
        [self.l1_error, self.gmf_lower_bound, self.log_z, self.gap, self.w, self.kl_lower, self.kl_upper]
            .iter()
            .chain(self.cut_bound.iter())
            .chain(self.cut_feasible.iter())
            .chain(self.ratio.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSummary {
    pub setting: String,
    pub scheme: String,
    pub k: usize,
    pub trials: usize,
    pub mean_l1: f64,
    pub std_l1: f64,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub mean_ratio: Option<f64>,
    pub ratio_trials: usize,
    pub mean_sweeps: f64,
    pub bound_violations: usize,
    pub unconverged: usize,
}

#[derive(Debug, Clone, Serialize)]
struct Timing<'a> {
    setting: &'a str,
    trial: usize,
    scheme: &'a str,
    k: usize,
    runtime_ms: f64,
}

#[derive(Debug, Clone)]
pub struct InferenceResults {
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<InferenceSummary>,
}

impl InferenceResults {
    pub fn trials_csv(&self) -> Result<Vec<u8>> {
        csv_bytes_with_header(&TRIALS_HEADER, &self.records)
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        csv_bytes_with_header(&SUMMARY_HEADER, &self.summaries)
    }

    /// Writes CSVs, schema, resolved config and plots into `dir`.
    pub fn write(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        write_file(dir, INFERENCE_TRIALS_FILE, &self.trials_csv()?)?;
        write_file(dir, INFERENCE_SUMMARY_FILE, &self.summary_csv()?)?;
        let timings: Vec<Timing> = self
            .records
            .iter()
            .map(|r| Timing {
                setting: &r.setting,
                trial: r.trial,
                scheme: &r.scheme,
                k: r.k,
                runtime_ms: r.runtime_ms,
            })
            .collect();
        write_file(
            dir,
            INFERENCE_TIMINGS_FILE,
            &csv_bytes_with_header(&["setting", "trial", "scheme", "k", "runtime_ms"], &timings)?,
        )?;
        write_file(dir, INFERENCE_SCHEMA_FILE, INFERENCE_SCHEMA.as_bytes())?;
        cfg.write_resolved(dir)?;
        super::emit_plots(&dir.join(INFERENCE_SUMMARY_FILE), dir)?;
        Ok(())
    }

    pub fn summary(&self, setting: &str, scheme: &str, k: usize) -> Option<&InferenceSummary> {
        self.summaries.iter().find(|s| s.setting == setting && s.scheme == scheme && s.k == k)
    }
}

pub fn run_inference_experiment(cfg: &ExperimentConfig) -> Result<InferenceResults> {
    cfg.validate_inference()?;
    let settings = cfg.settings();
    let n = cfg.model.n;
    let opts = cfg.solver_options();
    let gmf_cfg = cfg.gmf_config();
    let part = &cfg.partition;
    let jobs: Vec<(usize, usize)> = (0..settings.len()).flat_map(|s| (0..cfg.trials).map(move |t| (s, t))).collect();

    let per_trial: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(s, trial)| -> Result<Vec<TrialRecord>> {
            let setting = &settings[s];
            let label = setting.label();
            let seed = model_seed(cfg.seed, s, trial);
            let mrf = generate_random_mrf(&RandomModelSpec {
                n,
                edge_prob: setting.edge_prob,
                w_obs: setting.w_obs,
                w_coup: setting.w_coup,
                coupling: setting.coupling,
                seed,
            })?;
            let oracle = exact_summary_with_limit(&mrf, cfg.oracle.max_nodes)?;

            let mut rows = Vec::new();
            let mut record = |scheme: String, k: usize, sp: SchemePartition, start: Instant| -> Result<()> {
                let (state, report) = run_gmf(&mrf, &sp.partition, &gmf_cfg)?;
                let check = verify_bound(&mrf, &sp.partition, &state, &oracle)?;
                let lower_bound = oracle.log_partition - check.kl;
                let log_z = oracle.log_partition;
                let row = TrialRecord {
                    setting: label.clone(),
                    trial,
                    seed,
                    scheme,
                    k,
                    cut_bound: sp.cut_bound,
                    cut_feasible: sp.cut_feasible,
                    l1_error: l1_error(&state.singleton_marginals(), &oracle.singleton_marginals)?,
                    gmf_lower_bound: lower_bound,
                    log_z,
                    gap: check.kl,
                    ratio: (log_z.abs() > RATIO_MIN_LOG_Z).then(|| lower_bound / log_z),
                    w: check.report.w,
                    kl_lower: check.lower,
                    kl_upper: check.upper,
                    bound_holds: check.holds,
                    sweeps: report.sweeps,
                    converged: report.converged,
                    runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                };
                if !row.is_finite() {
                    return Err(Error::InvalidArgument(format!("non-finite trial record {row:?}")));
                }
                rows.push(row);
                Ok(())
            };

            let start = Instant::now();
            let naive = SchemePartition { partition: Partition::singletons(n), cut_bound: None, cut_feasible: None };
            record(NAIVE_MF_LABEL.to_string(), n, naive, start)?;
            for &k in &part.k {
                for (si, &scheme) in part.schemes.iter().enumerate() {
                    let start = Instant::now();
                    let sub = rng::derive_seed(seed, 1 + (si as u64) * 1024 + k as u64);
                    let sp = scheme_partition(&mrf, scheme, k, part.inference_rounding, part, &opts, sub)?;
                    record(scheme.to_string(), k, sp, start)?;
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();

    let mut keys: Vec<(String, usize)> = vec![(NAIVE_MF_LABEL.to_string(), n)];
    for &k in &part.k {
        keys.extend(part.schemes.iter().map(|s| (s.to_string(), k)));
    }
    let mut summaries = Vec::new();
    for setting in &settings {
        let label = setting.label();
        for (scheme, k) in &keys {
            let group: Vec<&TrialRecord> =
                records.iter().filter(|r| r.setting == label && &r.scheme == scheme && r.k == *k).collect();
            summaries.push(summarize(&label, scheme, *k, &group));
        }
    }
    Ok(InferenceResults { records, summaries })
}

fn summarize(setting: &str, scheme: &str, k: usize, group: &[&TrialRecord]) -> InferenceSummary {
    let l1: Vec<f64> = group.iter().map(|r| r.l1_error).collect();
    let gap: Vec<f64> = group.iter().map(|r| r.gap).collect();
    let ratios: Vec<f64> = group.iter().filter_map(|r| r.ratio).collect();
    let sweeps: Vec<f64> = group.iter().map(|r| r.sweeps as f64).collect();
    InferenceSummary {
        setting: setting.to_string(),
        scheme: scheme.to_string(),
        k,
        trials: group.len(),
        mean_l1: mean(&l1),
        std_l1: std_dev(&l1),
        mean_gap: mean(&gap),
        std_gap: std_dev(&gap),
        mean_ratio: (!ratios.is_empty()).then(|| mean(&ratios)),
        ratio_trials: ratios.len(),
        mean_sweeps: mean(&sweeps),
        bound_violations: group.iter().filter(|r| !r.bound_holds).count(),
        unconverged: group.iter().filter(|r| !r.converged).count(),
    }
}
