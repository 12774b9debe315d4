//! Brute-force ground truth by enumerating all 2^n spin states.
//!
//! States are visited in Gray-code order so each step flips one spin and the
//! energy update costs O(degree). The state space is split into a fixed
//! number of contiguous blocks (a function of n only) that are enumerated in
//! parallel and merged by log-sum-exp in block order, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmf::{self, GmfState};
use crate::mrf::MarkovRandomField;

pub const DEFAULT_MAX_NODES: usize = 26;

/// Energies are recomputed from scratch this often to stop drift.
const RESYNC_MASK: u64 = (1 << 12) - 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSummary {
    pub log_partition: f64,
    /// P(X_i = +1) per node.
    pub singleton_marginals: Vec<f64>,
}

impl ExactSummary {
    /// log p(x) for a full assignment.
    pub fn log_prob(&self, mrf: &MarkovRandomField, x: &[i8]) -> Result<f64> {
        Ok(mrf.log_unnormalized_prob(x)? - self.log_partition)
    }
}

pub fn exact_summary(mrf: &MarkovRandomField) -> Result<ExactSummary> {
    exact_summary_with_limit(mrf, DEFAULT_MAX_NODES)
}

pub fn exact_summary_with_limit(mrf: &MarkovRandomField, max_nodes: usize) -> Result<ExactSummary> {
    let n = mrf.n();
    if n > max_nodes || n > 62 {
        return Err(Error::Capacity { what: "node count for enumeration", got: n, limit: max_nodes.min(62) });
    }
    let top_bits = if n > 16 { 6 } else { 0 };
    let low_bits = n - top_bits;
    let blocks: Vec<BlockSum> =
        (0..1u64 << top_bits).into_par_iter().map(|b| enumerate_block(mrf, low_bits, b)).collect();

    let shift = blocks.iter().map(|b| b.shift).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut plus = vec![0.0; n];
    for b in &blocks {
        let f = (b.shift - shift).exp();
        total += b.total * f;
        for (p, q) in plus.iter_mut().zip(&b.plus) {
            *p += q * f;
        }
    }
    Ok(ExactSummary {
        log_partition: shift + total.ln(),
        singleton_marginals: plus.iter().map(|p| (p / total).clamp(0.0, 1.0)).collect(),
    })
}

/// Weights relative to `shift`: total = sum exp(E - shift), plus[i] restricted
/// to states with x_i = +1.
struct BlockSum {
    shift: f64,
    total: f64,
    plus: Vec<f64>,
}

fn spin(state: u64, i: usize) -> f64 {
    if state >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn energy_and_fields(mrf: &MarkovRandomField, state: u64) -> (f64, Vec<f64>) {
    let n = mrf.n();
    let mut fields = mrf.theta_node().to_vec();
    for ((i, j), t) in mrf.edge_params() {
        fields[i] += t * spin(state, j);
        fields[j] += t * spin(state, i);
    }
    let mut e: f64 = (0..n).map(|i| mrf.theta_node()[i] * spin(state, i)).sum();
    e += mrf.edge_params().map(|((i, j), t)| t * spin(state, i) * spin(state, j)).sum::<f64>();
    (e, fields)
}

/// Enumerates the 2^low_bits states whose high bits equal `block`.
fn enumerate_block(mrf: &MarkovRandomField, low_bits: usize, block: u64) -> BlockSum {
    let n = mrf.n();
    let mut state = block << low_bits;
    let (mut e, mut fields) = energy_and_fields(mrf, state);
    let mut shift = e;
    let mut total = 0.0;
    let mut plus = vec![0.0; n];

    let accumulate = |state: u64, e: f64, shift: &mut f64, total: &mut f64, plus: &mut [f64]| {
        if e > *shift {
            let f = (*shift - e).exp();
            *total *= f;
            plus.iter_mut().for_each(|p| *p *= f);
            *shift = e;
        }
        let w = (e - *shift).exp();
        *total += w;
        let mut bits = state;
        while bits != 0 {
            plus[bits.trailing_zeros() as usize] += w;
            bits &= bits - 1;
        }
    };

    accumulate(state, e, &mut shift, &mut total, &mut plus);
    for t in 1..1u64 << low_bits {
        let i = t.trailing_zeros() as usize;
        let old = spin(state, i);
        e -= 2.0 * old * fields[i];
        state ^= 1 << i;
        for &(j, theta) in mrf.neighbors(i) {
            fields[j] -= 2.0 * theta * old;
        }
        if t & RESYNC_MASK == 0 {
            (e, fields) = energy_and_fields(mrf, state);
        }
        accumulate(state, e, &mut shift, &mut total, &mut plus);
    }
    BlockSum { shift, total, plus }
}

/// KL(q || p) for a product-of-clusters q, via
/// KL = log Z - (E_q[log p~] + H(q)). Costs O(sum_c 2^|C_c|), not 2^n.
pub fn exact_kl_of_product(mrf: &MarkovRandomField, q: &GmfState, log_partition: f64) -> Result<f64> {
    q.check_normalized(gmf::NORMALIZATION_TOL)?;
    Ok(log_partition - gmf::gmf_lower_bound(mrf, q)?)
}
