//! Experiment configuration, read from a TOML file.
//!
//! Every field has a default, so an empty file is a valid config. Unknown
//! keys are rejected. The resolved config (defaults filled in, command-line
//! overrides applied) is written next to every set of results.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PartitionScheme, Rounding};
use crate::error::{Error, Result};
use crate::gmf::{self, GmfConfig, Init};
use crate::mrf::Coupling;
use crate::partition::{AffinityScheme, SolverOptions, KMEANS_RESTARTS, RANDOM_PROJECTION_TRIALS};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub out_dir: PathBuf,
    pub model: ModelGrid,
    pub partition: PartitionSettings,
    pub gmf: GmfSettings,
    pub oracle: OracleSettings,
    pub campaign: CampaignSettings,
}

/// Model settings. Every combination of the listed values is one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelGrid {
    pub n: usize,
    pub edge_prob: Vec<f64>,
    pub coupling: Vec<Coupling>,
    pub w_obs: Vec<f64>,
    pub w_coup: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSettings {
    pub k: Vec<usize>,
    /// Schemes compared by the inference experiment.
    pub schemes: Vec<PartitionScheme>,
    /// Rounding used to build GMF clusters.
    pub inference_rounding: Rounding,
    /// Affinity used by the partition benchmark.
    pub affinity: AffinityScheme,
    /// Roundings compared by the partition benchmark.
    pub roundings: Vec<Rounding>,
    pub kmeans_restarts: usize,
    pub rp_trials: usize,
    pub sdp_tol: f64,
    pub sdp_accept_tol: f64,
    pub sdp_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmfSettings {
    pub tol: f64,
    pub max_sweeps: usize,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub max_nodes: usize,
}

/// The bound-verification campaign draws its own models: model i has
/// n = n[i mod len], coupling type cycling through `coupling`, w_coup and
/// w_obs uniform on (0, max], and is checked with random equipartitions
/// for k = 2 and k = n / 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSettings {
    pub models: usize,
    pub n: Vec<usize>,
    pub edge_prob: Vec<f64>,
    pub coupling: Vec<Coupling>,
    pub w_coup_max: f64,
    pub w_obs_max: f64,
    /// Extra random (non fixed point) cluster marginals checked per
    /// model and partition.
    pub random_states: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 20,
            out_dir: PathBuf::from("results"),
            model: ModelGrid::default(),
            partition: PartitionSettings::default(),
            gmf: GmfSettings::default(),
            oracle: OracleSettings::default(),
            campaign: CampaignSettings::default(),
        }
    }
}

impl Default for ModelGrid {
    fn default() -> Self {
        Self {
            n: 24,
            edge_prob: vec![0.3],
            coupling: vec![Coupling::Mixed],
            w_obs: vec![0.1, 1.0],
            w_coup: vec![0.5, 1.0, 2.0],
        }
    }
}

impl Default for PartitionSettings {
    fn default() -> Self {
        let opts = SolverOptions::default();
        Self {
            k: vec![3, 4, 6, 8],
            schemes: PartitionScheme::ALL.to_vec(),
            inference_rounding: Rounding::Kmeans,
            affinity: AffinityScheme::Unit,
            roundings: vec![Rounding::Kmeans, Rounding::RandomProjection],
            kmeans_restarts: KMEANS_RESTARTS,
            rp_trials: RANDOM_PROJECTION_TRIALS,
            sdp_tol: opts.tol,
            sdp_accept_tol: opts.accept_tol,
            sdp_max_iter: opts.max_iter,
        }
    }
}

impl Default for GmfSettings {
    fn default() -> Self {
        let g = GmfConfig::default();
        Self { tol: g.tol, max_sweeps: g.max_sweeps, damping: g.damping }
    }
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { max_nodes: crate::exact::DEFAULT_MAX_NODES }
    }
}

impl Default for CampaignSettings {
    fn default() -> Self {
        Self {
            models: 200,
            n: vec![10, 12, 14],
            edge_prob: vec![0.3, 0.5],
            coupling: vec![Coupling::Attractive, Coupling::Repulsive, Coupling::Mixed],
            w_coup_max: 2.0,
            w_obs_max: 1.0,
            random_states: 1,
        }
    }
}

/// One point of the model grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSetting {
    pub index: usize,
    pub edge_prob: f64,
    pub coupling: Coupling,
    pub w_obs: f64,
    pub w_coup: f64,
}

impl ModelSetting {
    pub fn label(&self) -> String {
        format!("p{}_{}_wobs{}_wcoup{}", self.edge_prob, self.coupling, self.w_obs, self.w_coup)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Writes `resolved_config.toml` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_toml())?;
        Ok(path)
    }

    /// Settings in grid order: edge probability, coupling, w_obs, w_coup.
    pub fn settings(&self) -> Vec<ModelSetting> {
        let m = &self.model;
        let mut out = Vec::new();
        for &edge_prob in &m.edge_prob {
            for &coupling in &m.coupling {
                for &w_obs in &m.w_obs {
                    for &w_coup in &m.w_coup {
                        out.push(ModelSetting { index: out.len(), edge_prob, coupling, w_obs, w_coup });
                    }
                }
            }
        }
        out
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.partition.sdp_tol,
            accept_tol: self.partition.sdp_accept_tol,
            max_iter: self.partition.sdp_max_iter,
        }
    }

    pub fn gmf_config(&self) -> GmfConfig {
        GmfConfig {
            tol: self.gmf.tol,
            max_sweeps: self.gmf.max_sweeps,
            damping: self.gmf.damping,
            init: Init::Uniform,
            seed: 0,
        }
    }

    /// Checks shared by every experiment.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        let m = &self.model;
        if m.n < 2 {
            return bad(format!("model.n = {} must be at least 2", m.n));
        }
        if m.edge_prob.is_empty() || m.coupling.is_empty() || m.w_obs.is_empty() || m.w_coup.is_empty() {
            return bad("model lists must be non-empty".into());
        }
        if let Some(p) = m.edge_prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("edge probability {p} outside [0, 1]"));
        }
        if let Some(w) = m.w_obs.iter().chain(&m.w_coup).find(|w| !(**w >= 0.0 && w.is_finite())) {
            return bad(format!("weight scale {w} must be finite and >= 0"));
        }
        let p = &self.partition;
        if p.k.is_empty() {
            return bad("partition.k must be non-empty".into());
        }
        for &k in &p.k {
            if k == 0 || m.n % k != 0 {
                return bad(format!("k = {k} does not divide n = {}", m.n));
            }
        }
        if p.kmeans_restarts < 1 || p.rp_trials < 1 {
            return bad("rounding restarts must be at least 1".into());
        }
        if !(p.sdp_tol > 0.0 && p.sdp_accept_tol >= p.sdp_tol) {
            return bad("need 0 < sdp_tol <= sdp_accept_tol".into());
        }
        if !(self.gmf.tol > 0.0) || self.gmf.max_sweeps < 1 || !(0.0..1.0).contains(&self.gmf.damping) {
            return bad("gmf needs tol > 0, max_sweeps >= 1, damping in [0, 1)".into());
        }
        Ok(())
    }

    /// Extra checks for the inference experiment: non-empty scheme list,
    /// clusters small enough for explicit tables, and n within the oracle.
    pub fn validate_inference(&self) -> Result<()> {
        self.validate()?;
        let n = self.model.n;
        if self.partition.schemes.is_empty() {
            return Err(Error::Config("partition.schemes must be non-empty".into()));
        }
        if let Some(k) = self.partition.k.iter().find(|&&k| n / k > gmf::MAX_CLUSTER_SIZE) {
            return Err(Error::Config(format!(
                "k = {k} gives clusters of {} nodes, limit is {}",
                n / k,
                gmf::MAX_CLUSTER_SIZE
            )));
        }
        if n > self.oracle.max_nodes {
            return Err(Error::Config(format!("n = {n} exceeds oracle.max_nodes = {}", self.oracle.max_nodes)));
        }
        Ok(())
    }

    pub fn validate_partition_benchmark(&self) -> Result<()> {
        self.validate()?;
        if self.partition.roundings.is_empty() {
            return Err(Error::Config("partition.roundings must be non-empty".into()));
        }
        if let Some(k) = self.partition.k.iter().find(|&&k| k < 2) {
            return Err(Error::Config(format!("partition benchmark needs k >= 2, got {k}")));
        }
        Ok(())
    }

    pub fn validate_campaign(&self) -> Result<()> {
        let c = &self.campaign;
        if c.models < 1 || c.n.is_empty() || c.edge_prob.is_empty() || c.coupling.is_empty() {
            return Err(Error::Config("campaign needs models >= 1 and non-empty n / edge_prob / coupling".into()));
        }
        if let Some(n) = c.n.iter().find(|&&n| n < 4 || n % 2 != 0 || n > self.oracle.max_nodes) {
            return Err(Error::Config(format!("campaign n = {n} must be even, >= 4 and within the oracle")));
        }
        if let Some(n) = c.n.iter().find(|&&n| n / 2 > gmf::MAX_CLUSTER_SIZE) {
            return Err(Error::Config(format!("campaign n = {n} gives clusters over the table limit")));
        }
        if !(c.w_coup_max > 0.0 && c.w_obs_max >= 0.0) {
            return Err(Error::Config("campaign weight maxima must be positive".into()));
        }
        Ok(())
    }
}
