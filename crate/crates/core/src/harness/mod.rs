//! Experiment drivers: the partition benchmark, the inference experiment,
//! the bound-verification campaign and plot emission.
//!
//! Trials run in parallel, each on its own RNG stream derived from the
//! master seed and the trial index, and are collected in trial order, so
//! every CSV is byte-identical for a given config whatever the number of
//! worker threads. Wall-clock timings go to a separate file.

mod campaign;
mod config;
mod gp;
mod inference;
mod plot;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use campaign::{run_bound_campaign, CampaignRecord, CampaignResults, StateKind};
pub use config::{
    CampaignSettings, ExperimentConfig, GmfSettings, ModelGrid, ModelSetting, OracleSettings, PartitionSettings,
    RESOLVED_CONFIG_FILE,
};
pub use gp::{run_partition_benchmark, GpRecord, GpResults, GpSummary};
pub use inference::{
    run_inference_experiment, InferenceResults, InferenceSummary, TrialRecord, NAIVE_MF_LABEL, RATIO_MIN_LOG_Z,
};
pub use plot::{emit_plots, render_svg, PlotMetric};

use crate::error::{Error, Result};
use crate::mrf::MarkovRandomField;
use crate::partition::{
    random_equipartition, round_kmeans, round_random_projection, solve_relaxation, AffinityMatrix, AffinityScheme,
    Direction, Partition, SolverOptions,
};

/// Mean absolute difference of P(X_i = +1) over nodes.
pub fn l1_error(approx: &[f64], exact: &[f64]) -> Result<f64> {
    if approx.len() != exact.len() || approx.is_empty() {
        return Err(Error::InvalidArgument(format!("marginal vectors of length {} and {}", approx.len(), exact.len())));
    }
    let total: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / approx.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rounding {
    #[serde(rename = "kmeans")]
    Kmeans,
    #[serde(rename = "rp")]
    RandomProjection,
}

impl Rounding {
    pub fn as_str(self) -> &'static str {
        match self {
            Rounding::Kmeans => "kmeans",
            Rounding::RandomProjection => "rp",
        }
    }
}

impl FromStr for Rounding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Rounding::Kmeans),
            "rp" => Ok(Rounding::RandomProjection),
            other => Err(Error::InvalidArgument(format!("unknown rounding `{other}`"))),
        }
    }
}

/// How GMF clusters are chosen: an equi-MinCut / equi-MaxCut on one of the
/// affinity schemes, or a uniformly random equipartition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PartitionScheme {
    Cut { direction: Direction, affinity: AffinityScheme },
    Random,
}

impl PartitionScheme {
    pub const ALL: [PartitionScheme; 7] = [
        PartitionScheme::Cut { direction: Direction::Min, affinity: AffinityScheme::Coupling },
        PartitionScheme::Cut { direction: Direction::Min, affinity: AffinityScheme::Unit },
        PartitionScheme::Cut { direction: Direction::Min, affinity: AffinityScheme::InverseCoupling },
        PartitionScheme::Cut { direction: Direction::Max, affinity: AffinityScheme::Coupling },
        PartitionScheme::Cut { direction: Direction::Max, affinity: AffinityScheme::Unit },
        PartitionScheme::Cut { direction: Direction::Max, affinity: AffinityScheme::InverseCoupling },
        PartitionScheme::Random,
    ];
}

impl fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionScheme::Cut { direction, affinity } => {
                write!(f, "{}c-{}", direction.as_str(), affinity.as_str())
            }
            PartitionScheme::Random => f.write_str("random"),
        }
    }
}

impl FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            return Ok(PartitionScheme::Random);
        }
        let bad = || Error::InvalidArgument(format!("unknown partition scheme `{s}`"));
        let (dir, aff) = s.split_once('-').ok_or_else(bad)?;
        let direction = match dir {
            "minc" => Direction::Min,
            "maxc" => Direction::Max,
            _ => return Err(bad()),
        };
        let affinity = aff.parse().map_err(|_| bad())?;
        Ok(PartitionScheme::Cut { direction, affinity })
    }
}

impl TryFrom<String> for PartitionScheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PartitionScheme> for String {
    fn from(s: PartitionScheme) -> String {
        s.to_string()
    }
}

/// A partition chosen by a scheme, with its cut statistics on the scheme's
/// own affinity (absent for random cuts).
#[derive(Debug, Clone)]
pub struct SchemePartition {
    pub partition: Partition,
    pub cut_bound: Option<f64>,
    pub cut_feasible: Option<f64>,
}

/// Builds the k-cluster partition a scheme prescribes for `mrf`.
pub fn scheme_partition(
    mrf: &MarkovRandomField,
    scheme: PartitionScheme,
    k: usize,
    rounding: Rounding,
    settings: &PartitionSettings,
    opts: &SolverOptions,
    seed: u64,
) -> Result<SchemePartition> {
    let n = mrf.n();
    let PartitionScheme::Cut { direction, affinity } = scheme else {
        let partition = random_equipartition(n, k, seed)?;
        return Ok(SchemePartition { partition, cut_bound: None, cut_feasible: None });
    };
    let a = AffinityMatrix::from_mrf(mrf, affinity);
    if k == 1 {
        let partition = Partition::whole(n);
        return Ok(SchemePartition { partition, cut_bound: Some(0.0), cut_feasible: Some(0.0) });
    }
    let (partition, bound) = cut_partition(&a, k, direction, rounding, settings, opts, seed)?;
    let feasible = a.cut_weight(&partition);
    Ok(SchemePartition { partition, cut_bound: Some(bound), cut_feasible: Some(feasible) })
}

fn cut_partition(
    a: &AffinityMatrix,
    k: usize,
    direction: Direction,
    rounding: Rounding,
    settings: &PartitionSettings,
    opts: &SolverOptions,
    seed: u64,
) -> Result<(Partition, f64)> {
    let res = solve_relaxation(a, k, direction, opts)?;
    let p = match rounding {
        Rounding::Kmeans => round_kmeans(&res, a, k, direction, settings.kmeans_restarts, seed)?,
        Rounding::RandomProjection => round_random_projection(&res, a, k, direction, settings.rp_trials, seed)?,
    };
    Ok((p, res.bound))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub(crate) fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))
}

pub(crate) fn csv_bytes_with_header<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        let mut line = header.join(",");
        line.push('\n');
        return Ok(line.into_bytes());
    }
    csv_bytes(rows)
}

pub(crate) fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() }))
        .collect()
}

pub(crate) fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), bytes)?;
    Ok(())
}
