//! Client, edge and cloud steps of hierarchical federated learning with local
//! Gaussian noise, plus the per-round privacy/utility/secrecy ledger.

pub mod data;
pub mod model;

pub use data::{load_or_synthesize, synthetic_mixture, DataSplit, Dataset};
pub use model::{ForwardPass, Mlp, ModelState};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{eavesdropper_capacity, round_secrecy_level, sigma2_window, LinkBudget, RateReport, SigmaWindow};
use crate::error::{domain, Error, Result};
use crate::rng::{pair_index, substream, Domain};

/// `S_k` times the gradient of the shard's regularized loss.
pub fn local_gradient(net: &Mlp, model: &ModelState, shard: &Dataset, lambda_reg: f64) -> Result<Vec<f64>> {
    if shard.is_empty() {
        return Err(domain("empty shard"));
    }
    let s = shard.len() as f64;
    let mut g = net.loss_gradient(model, shard, lambda_reg)?;
    g.iter_mut().for_each(|v| *v *= s);
    Ok(g)
}

/// Adds i.i.d. `N(0, sigma2)` to every coordinate.
pub fn add_ldp_noise<R: Rng + ?Sized>(grad: &[f64], sigma2: f64, rng: &mut R) -> Vec<f64> {
    if sigma2 <= 0.0 {
        return grad.to_vec();
    }
    let s = sigma2.sqrt();
    grad.iter().map(|&g| g + s * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Coordinate-wise sum of the users' vectors.
pub fn edge_aggregate(noisy: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = noisy.first().ok_or_else(|| domain("nothing to aggregate"))?;
    let mut sum = vec![0.0; first.len()];
    for v in noisy {
        if v.len() != sum.len() {
            return Err(Error::Dimension { expected: sum.len(), got: v.len() });
        }
        sum.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    Ok(sum)
}

/// `m - (mu / S) * decoded`, advancing the round counter.
pub fn cloud_update(model: &ModelState, decoded_grad_sum: &[f64], s_total: usize, mu: f64) -> Result<ModelState> {
    if decoded_grad_sum.len() != model.m.len() {
        return Err(Error::Dimension { expected: model.m.len(), got: decoded_grad_sum.len() });
    }
    if s_total == 0 {
        return Err(domain("total sample count must be positive"));
    }
    let step = mu / s_total as f64;
    Ok(ModelState {
        m: model.m.iter().zip(decoded_grad_sum).map(|(w, g)| w - step * g).collect(),
        round: model.round + 1,
    })
}

/// Per-coordinate mutual information `1/2 log2(1 + S sigma_w^2 / (K sigma^2))`.
///
/// Returns `+inf` when there is signal but no noise.
pub fn privacy_mi_per_coord(s_ell: f64, sigma_w2: f64, users: usize, sigma2: f64) -> f64 {
    let signal = s_ell * sigma_w2;
    if signal <= 0.0 {
        return 0.0;
    }
    let noise = users as f64 * sigma2;
    if noise <= 0.0 {
        return f64::INFINITY;
    }
    0.5 * (signal / noise).ln_1p() / std::f64::consts::LN_2
}

/// Plug-in `sigma_w^2`: mean over users of `|W_k|^2 / (q S_k)`.
pub fn estimate_sigma_w2(per_user: &[Vec<f64>], s_lk: &[usize]) -> Result<f64> {
    if per_user.is_empty() {
        return Err(domain("need at least one user"));
    }
    if per_user.len() != s_lk.len() {
        return Err(Error::Dimension { expected: per_user.len(), got: s_lk.len() });
    }
    let total: f64 = per_user
        .iter()
        .zip(s_lk)
        .map(|(w, &s)| w.iter().map(|x| x * x).sum::<f64>() / (w.len() as f64 * s as f64))
        .sum();
    Ok(total / per_user.len() as f64)
}

/// Clean and noised user gradients of one round and their noisy sum.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub per_user: Vec<Vec<f64>>,
    pub noisy_per_user: Vec<Vec<f64>>,
    pub aggregate: Vec<f64>,
}

impl GradientBundle {
    /// Computes every user's gradient in parallel; user `k` of round `t`
    /// draws its noise from the `(t, k)` substream.
    pub fn compute(
        net: &Mlp,
        model: &ModelState,
        shards: &[Dataset],
        lambda_reg: f64,
        sigma2: f64,
        seed: u64,
        round: u64,
    ) -> Result<Self> {
        let per_user =
            shards.par_iter().map(|s| local_gradient(net, model, s, lambda_reg)).collect::<Result<Vec<_>>>()?;
        let noisy_per_user: Vec<Vec<f64>> = per_user
            .par_iter()
            .enumerate()
            .map(|(k, g)| add_ldp_noise(g, sigma2, &mut substream(seed, Domain::LdpNoise, pair_index(round, k as u64))))
            .collect();
        let aggregate = edge_aggregate(&noisy_per_user)?;
        Ok(GradientBundle { per_user, noisy_per_user, aggregate })
    }

    /// `|sum_k eta_k|^2 / q` for this round.
    pub fn noise_energy_per_coord(&self) -> f64 {
        let q = self.aggregate.len();
        let mut eta = vec![0.0; q];
        for (clean, noisy) in self.per_user.iter().zip(&self.noisy_per_user) {
            for ((e, c), n) in eta.iter_mut().zip(clean).zip(noisy) {
                *e += n - c;
            }
        }
        eta.iter().map(|e| e * e).sum::<f64>() / q as f64
    }
}

/// Everything the ledger needs from one round.
#[derive(Debug, Clone)]
pub struct LedgerInputs {
    pub round: usize,
    pub sigma_w2_hat: f64,
    pub sigma2: f64,
    pub users: usize,
    pub s_ell: f64,
    pub eps: f64,
    pub utility_budget: f64,
    /// Measured `|eta|^2 / q` for the round.
    pub utility_empirical: f64,
    pub budget: LinkBudget,
    pub power: f64,
    /// `q R_t(D)`, zero when the round sent nothing.
    pub accounted_bits: f64,
    /// Payload of each block actually sent.
    pub chunk_bits: Vec<u32>,
    /// One report per distinct block plan of the round.
    pub round_rates: Vec<RateReport>,
    /// Blocks sent under each entry of `round_rates`.
    pub rate_block_counts: Vec<usize>,
    pub eve_success_rate: f64,
}

/// Privacy, utility and secrecy bookkeeping after a round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacySecrecyLedger {
    pub round: usize,
    pub sigma_w2_hat: f64,
    /// Running maximum of the plug-in `sigma_w^2`.
    pub sigma_w2_max: f64,
    /// This round's per-coordinate mutual information.
    pub mi_round_bits: f64,
    /// Max-form bound over the rounds so far.
    pub mi_bound_bits: f64,
    /// Per-round average over the rounds so far.
    pub mi_average_bits: f64,
    /// `K sigma^2`.
    pub utility_distortion: f64,
    /// Running mean of the measured `|eta|^2 / q`.
    pub utility_empirical: f64,
    pub sigma_window: SigmaWindow,
    pub sigma_feasible: bool,
    /// `[1 - C_e / b]^+` minimized over this round's blocks.
    pub secrecy_delta_round: f64,
    /// Running minimum of `secrecy_delta_round`.
    pub secrecy_delta_bound: f64,
    /// `[1 - C_e / (q R_t(D))]^+` for the round as one block.
    pub secrecy_delta_single_block: f64,
    /// Running minimum of `secrecy_delta_single_block`.
    pub secrecy_delta_single_block_bound: f64,
    pub round_rates: Vec<RateReport>,
    pub rate_block_counts: Vec<usize>,
    pub eve_success_rate: f64,
}

pub fn build_ledger(inputs: &LedgerInputs, previous: Option<&PrivacySecrecyLedger>) -> PrivacySecrecyLedger {
    let i = inputs;
    let sigma_w2_max = previous.map_or(i.sigma_w2_hat, |p| p.sigma_w2_max.max(i.sigma_w2_hat));
    let mi_round = privacy_mi_per_coord(i.s_ell, i.sigma_w2_hat, i.users, i.sigma2);
    let rounds_before = previous.map_or(0, |p| p.round) as f64;
    let mi_bound = previous.map_or(mi_round, |p| p.mi_bound_bits.max(mi_round));
    let mi_average =
        previous.map_or(mi_round, |p| (p.mi_average_bits * rounds_before + mi_round) / (rounds_before + 1.0));
    let utility_empirical = previous.map_or(i.utility_empirical, |p| {
        (p.utility_empirical * rounds_before + i.utility_empirical) / (rounds_before + 1.0)
    });
    let window = sigma2_window(i.eps, i.utility_budget, i.users, i.s_ell, sigma_w2_max);
    let leak = eavesdropper_capacity(&i.budget, i.power);
    let delta_round = i.chunk_bits.iter().map(|&b| round_secrecy_level(leak, f64::from(b))).fold(1.0, f64::min);
    let delta_single = round_secrecy_level(leak, i.accounted_bits);
    PrivacySecrecyLedger {
        round: i.round,
        sigma_w2_hat: i.sigma_w2_hat,
        sigma_w2_max,
        mi_round_bits: mi_round,
        mi_bound_bits: mi_bound,
        mi_average_bits: mi_average,
        utility_distortion: i.users as f64 * i.sigma2,
        utility_empirical,
        sigma_feasible: window.contains(i.sigma2),
        sigma_window: window,
        secrecy_delta_round: delta_round,
        secrecy_delta_bound: previous.map_or(delta_round, |p| p.secrecy_delta_bound.min(delta_round)),
        secrecy_delta_single_block: delta_single,
        secrecy_delta_single_block_bound: previous
            .map_or(delta_single, |p| p.secrecy_delta_single_block_bound.min(delta_single)),
        round_rates: i.round_rates.clone(),
        rate_block_counts: i.rate_block_counts.clone(),
        eve_success_rate: i.eve_success_rate,
    }
}
