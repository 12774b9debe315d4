//! KL sandwich verification campaign over many small random models.

use std::path::Path;

use rand::{Rng as _, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_bytes_with_header, write_file, ExperimentConfig};
use crate::bounds::verify_bound;
use crate::error::Result;
use crate::exact::exact_summary_with_limit;
use crate::gmf::{run_gmf, GmfState};
use crate::mrf::{generate_random_mrf, Coupling, RandomModelSpec};
use crate::partition::random_equipartition;
use crate::rng;

pub const BOUNDS_TRIALS_FILE: &str = "bounds_trials.csv";
pub const BOUNDS_SCHEMA_FILE: &str = "bounds_schema.txt";

const HEADER: [&str; 17] = [
    "model",
    "n",
    "coupling",
    "edge_prob",
    "w_obs",
    "w_coup",
    "seed",
    "k",
    "state",
    "w",
    "kl",
    "kl_lower",
    "kl_upper",
    "holds",
    "sweeps",
    "converged",
    "replicate",
];

const SCHEMA: &str = "\
bounds_trials.csv: one row per (model, k, state)
  model      model index
  n          number of nodes
  coupling   attractive, repulsive or mixed
  edge_prob  edge probability
  w_obs      theta_i ~ U(-w_obs, w_obs)
  w_coup     coupling scale
  seed       seed of the random model
  k          number of clusters of the random equipartition (2 or n/2)
  state      fixed_point (converged GMF) or random (arbitrary normalized cluster marginals)
  w          total |theta_ij| over cut edges
  kl         exact KL(q || p)
  kl_lower   lower end of the sandwich
  kl_upper   upper end of the sandwich
  holds      kl_lower <= kl <= kl_upper up to 1e-9
  sweeps     GMF sweeps (0 for random states)
  converged  GMF reached its tolerance (false for random states)
  replicate  index among the random states of this model and k
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    FixedPoint,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub model: usize,
    pub n: usize,
    pub coupling: Coupling,
    pub edge_prob: f64,
    pub w_obs: f64,
    pub w_coup: f64,
    pub seed: u64,
    pub k: usize,
    pub state: StateKind,
    pub w: f64,
    pub kl: f64,
    pub kl_lower: f64,
    pub kl_upper: f64,
    pub holds: bool,
    pub sweeps: usize,
    pub converged: bool,
    pub replicate: usize,
}

#[derive(Debug, Clone)]
pub struct CampaignResults {
    pub records: Vec<CampaignRecord>,
}

impl CampaignResults {
    fn of_kind(&self, kind: StateKind) -> impl Iterator<Item = &CampaignRecord> {
        self.records.iter().filter(move |r| r.state == kind)
    }

    /// Fixed-point checks where the sandwich fails.
    pub fn violations(&self) -> usize {
        self.of_kind(StateKind::FixedPoint).filter(|r| !r.holds).count()
    }

    pub fn unconverged(&self) -> usize {
        self.of_kind(StateKind::FixedPoint).filter(|r| !r.converged).count()
    }

    /// Sandwich failures among the arbitrary (non fixed point) states.
    pub fn random_state_violations(&self) -> usize {
        self.of_kind(StateKind::Random).filter(|r| !r.holds).count()
    }

    pub fn trials_csv(&self) -> Result<Vec<u8>> {
        csv_bytes_with_header(&HEADER, &self.records)
    }

    pub fn write(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        write_file(dir, BOUNDS_TRIALS_FILE, &self.trials_csv()?)?;
        write_file(dir, BOUNDS_SCHEMA_FILE, SCHEMA.as_bytes())?;
        cfg.write_resolved(dir)?;
        Ok(())
    }
}

pub fn run_bound_campaign(cfg: &ExperimentConfig) -> Result<CampaignResults> {
    cfg.validate_campaign()?;
    let c = &cfg.campaign;
    let gmf_cfg = cfg.gmf_config();
    let per_model: Vec<Vec<CampaignRecord>> = (0..c.models)
        .into_par_iter()
        .map(|i| -> Result<Vec<CampaignRecord>> {
            let mut r = rng::stream(cfg.seed, i as u64);
            let n = c.n[i % c.n.len()];
            let coupling = c.coupling[(i / c.n.len()) % c.coupling.len()];
            let edge_prob = c.edge_prob[(i / (c.coupling.len() * c.n.len())) % c.edge_prob.len()];
            let w_coup = (1.0 - r.random::<f64>()) * c.w_coup_max;
            let w_obs = (1.0 - r.random::<f64>()) * c.w_obs_max;
            let seed = r.next_u64();
            let mrf = generate_random_mrf(&RandomModelSpec { n, edge_prob, w_obs, w_coup, coupling, seed })?;
            let oracle = exact_summary_with_limit(&mrf, cfg.oracle.max_nodes)?;
            let mut rows = Vec::new();
            for k in [2, n / 2] {
                let partition = random_equipartition(n, k, rng::derive_seed(seed, k as u64))?;
                let (state, report) = run_gmf(&mrf, &partition, &gmf_cfg)?;
                let mut states = vec![(StateKind::FixedPoint, 0, state, report.sweeps, report.converged)];
                for rep in 0..c.random_states {
                    let s = GmfState::random(partition.clone(), rng::derive_seed(seed, (k * 1000 + rep + 1) as u64))?;
                    states.push((StateKind::Random, rep, s, 0, false));
                }
                for (kind, replicate, state, sweeps, converged) in states {
                    let check = verify_bound(&mrf, &partition, &state, &oracle)?;
                    rows.push(CampaignRecord {
                        model: i,
                        n,
                        coupling,
                        edge_prob,
                        w_obs,
                        w_coup,
                        seed,
                        k,
                        state: kind,
                        w: check.report.w,
                        kl: check.kl,
                        kl_lower: check.lower,
                        kl_upper: check.upper,
                        holds: check.holds,
                        sweeps,
                        converged,
                        replicate,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(CampaignResults { records: per_model.into_iter().flatten().collect() })
}
