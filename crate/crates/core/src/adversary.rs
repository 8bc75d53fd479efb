//! Eavesdropper attacks on captured block transcripts and the conversion of
//! attack outcomes into leakage and secrecy figures.
//!
//! Eve knows every channel coefficient, the constellations and the schedule,
//! but never the codec dither.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::analysis::{eavesdropper_capacity, q_func, secrecy_level_bound, LinkBudget};
use crate::codec::{modulo_d, BlockCodec, MessagePair, PamConstellation};
use crate::error::{domain, Error, Result};

/// Threshold on the log-likelihood ratio (nats) of the undithered feedback
/// model against uniform residuals before Eve trusts her sequence estimate.
pub const SEQUENCE_ACCEPT_LLR: f64 = 6.907_755_278_982_137; // ln(1000)

/// What Eve holds for one block.
#[derive(Debug, Clone, Copy)]
pub struct EveObservation<'a> {
    pub z_seq: &'a [Complex64],
    /// Public code and full CSI.
    pub codec: &'a BlockCodec,
    /// Forward inputs from the second use on. They carry only estimation
    /// errors, so handing them to Eve adds no message information by itself
    /// while letting her cancel them from the feedback uses.
    pub refinement_genie: Option<&'a [Complex64]>,
}

impl<'a> EveObservation<'a> {
    pub fn new(z_seq: &'a [Complex64], codec: &'a BlockCodec) -> Result<Self> {
        if z_seq.len() != codec.n_t() {
            return Err(Error::Dimension { expected: codec.n_t(), got: z_seq.len() });
        }
        Ok(EveObservation { z_seq, codec, refinement_genie: None })
    }

    /// Attaches the transcript's forward inputs; `x_seq[0]` is never used.
    pub fn with_refinement_genie(mut self, x_seq: &'a [Complex64]) -> Result<Self> {
        if x_seq.len() != self.codec.n_t() {
            return Err(Error::Dimension { expected: self.codec.n_t(), got: x_seq.len() });
        }
        self.refinement_genie = Some(x_seq);
        Ok(self)
    }

    /// Posterior standard deviation of a normalized PAM point seen on the first use.
    fn first_use_std(&self) -> f64 {
        let ch = &self.codec.realization;
        let s = &self.codec.schedule;
        // The first feedback symbol rides on the same use; it is treated as
        // Gaussian with the variance of a uniform fold.
        let fb_interference = if s.n_t > 1 { ch.g_fb.norm_sqr() * s.d * s.d / 12.0 } else { 0.0 };
        ((0.5 * self.codec.noise.sigmae_2 + fb_interference) / (ch.g.norm_sqr() * s.p_half)).sqrt()
    }

    /// First-use observation derotated by `g` and scaled to the PAM range.
    fn first_use_point(&self) -> Option<[f64; 2]> {
        let g = self.codec.realization.g;
        if g.norm_sqr() == 0.0 {
            return None;
        }
        let r = self.z_seq[0] / g / self.codec.schedule.p_half.sqrt();
        Some([r.re, r.im])
    }
}

fn random_pair<R: Rng + ?Sized>(codec: &BlockCodec, rng: &mut R) -> MessagePair {
    codec.random_message(rng)
}

/// Nearest-center decision on the first channel use; a uniform guess when `g = 0`.
pub fn attack_first_use<R: Rng + ?Sized>(obs: &EveObservation, rng: &mut R) -> MessagePair {
    match obs.first_use_point() {
        Some([re, im]) => MessagePair { re: obs.codec.re.nearest(re), im: obs.codec.im.nearest(im) },
        None => random_pair(obs.codec, rng),
    }
}

/// Outcome of the sequence attack with its acceptance statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceAttack {
    pub guess: MessagePair,
    /// Summed log-likelihood ratio of both sub-channels.
    pub llr: f64,
    /// Whether the feedback-refined estimate replaced the first-use one.
    pub accepted: bool,
}

/// Sequence attack.
///
/// Eve runs the legitimate decoder's refinement on the feedback observations
/// as if the dither were zero: each derotated feedback sample is matched to
/// `M_d[gamma_i theta]` and fused into a Gaussian estimate of `theta`. With
/// the refinement genie attached she also removes the forward interference
/// and the decoder's known error offset. A sequential likelihood-ratio test
/// of that model against uniform residuals decides whether the refined
/// estimate is used; otherwise the first-use decision stands.
pub fn attack_full_sequence<R: Rng + ?Sized>(obs: &EveObservation, rng: &mut R) -> SequenceAttack {
    let first = attack_first_use(obs, rng);
    let codec = obs.codec;
    let s = &codec.schedule;
    let ch = &codec.realization;
    if s.n_t < 2 || ch.g_fb.norm_sqr() == 0.0 {
        return SequenceAttack { guess: first, llr: 0.0, accepted: false };
    }
    let g_ratio = ch.g / ch.g_fb;
    let ratio2 = g_ratio.norm_sqr();
    let eve_noise = codec.noise.sigmae_2 / (2.0 * ch.g_fb.norm_sqr());
    let amp = s.p_half.sqrt();

    let (mut mean, var) = match obs.first_use_point() {
        Some(p) => (p, obs.first_use_std().powi(2)),
        None => ([0.0; 2], codec.re.second_moment()),
    };
    let mut var = [var, var];
    let first_var = var[0];
    let ln_d = s.d.ln();
    let mut llr = 0.0;
    for k in 0..s.n_t - 1 {
        let mut u = obs.z_seq[k] / ch.g_fb;
        let gamma = s.gamma[k];
        let fwd_var = if k == 0 {
            u -= g_ratio * amp * Complex64::new(mean[0], mean[1]);
            ratio2 * s.p_half * first_var
        } else if let Some(x) = obs.refinement_genie {
            u -= g_ratio * x[k];
            0.0
        } else {
            ratio2 * s.p_half
        };
        // The next forward input reveals the decoder's error up to feedback noise.
        let (offset, err_var) = match obs.refinement_genie {
            Some(x) => (x[k + 1] / s.lambda[k], s.fb_noise_var),
            None => (Complex64::new(0.0, 0.0), gamma * gamma * s.alpha[k]),
        };
        let meas_var = (err_var + fwd_var + eve_noise) / (gamma * gamma);
        for (c, (obs_c, off_c)) in [(u.re, offset.re), (u.im, offset.im)].into_iter().enumerate() {
            let resid = modulo_d(obs_c - off_c - gamma * mean[c], s.d);
            let pred = gamma * gamma * (var[c] + meas_var);
            llr += ln_d - 0.5 * (2.0 * std::f64::consts::PI * pred).ln() - resid * resid / (2.0 * pred);
            let gain = var[c] / (var[c] + meas_var);
            mean[c] += gain * resid / gamma;
            var[c] *= meas_var / (var[c] + meas_var);
        }
    }
    if llr > SEQUENCE_ACCEPT_LLR {
        let guess = MessagePair { re: codec.re.nearest(mean[0]), im: codec.im.nearest(mean[1]) };
        SequenceAttack { guess, llr, accepted: true }
    } else {
        SequenceAttack { guess: first, llr, accepted: false }
    }
}

/// Largest constellation whose mixture density is summed center by center.
pub const EXACT_MI_MAX_LEVELS: u64 = 1 << 12;

/// Simpson rule for `-p log2 p` over `[lo, hi]` with at most `h_max` spacing.
fn entropy_integral(lo: f64, hi: f64, h_max: f64, density: impl Fn(f64) -> f64) -> f64 {
    let n = (((hi - lo) / h_max).ceil() as usize).max(2).next_multiple_of(2);
    let h = (hi - lo) / n as f64;
    let f = |y: f64| {
        let p = density(y);
        if p > 0.0 {
            -p * p.log2()
        } else {
            0.0
        }
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    sum * h / 3.0
}

/// `I(theta; a theta + n)` in bits for `theta` uniform on `pam` and `snr = a^2 / Var(n)`.
///
/// Constellations above [`EXACT_MI_MAX_LEVELS`] use the continuous uniform
/// limit, capped at `log2 m`.
pub fn pam_mutual_information(pam: &PamConstellation, snr: f64) -> f64 {
    if snr <= 0.0 || pam.m_levels() == 1 {
        return 0.0;
    }
    // Work in units of the noise standard deviation.
    let a = snr.sqrt();
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let edge = 3f64.sqrt() * a;
    let h_y = if pam.m_levels() <= EXACT_MI_MAX_LEVELS {
        let centers: Vec<f64> = pam.centers().iter().map(|c| a * c).collect();
        let m = centers.len() as f64;
        // Every mixture component has unit width, so a fixed step resolves the density.
        entropy_integral(-edge - 12.0, edge + 12.0, 0.02, |y| {
            centers.iter().map(|c| (-0.5 * (y - c) * (y - c)).exp()).sum::<f64>() / (m * norm)
        })
    } else {
        entropy_integral(-edge - 12.0, edge + 12.0, 0.01, |y| (q_func(y - edge) - q_func(y + edge)) / (2.0 * edge))
    };
    let h_n = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).log2();
    (h_y - h_n).clamp(0.0, f64::from(pam.bits()))
}

/// Exact `I(W; g X_1 + eta_e)` in bits.
///
/// The real first observation also carries `g_fb X_fb_1`, which is uniform and
/// independent of the message, so this is an upper bound on first-use leakage.
pub fn first_use_mutual_information(codec: &BlockCodec) -> f64 {
    let g2 = codec.realization.g.norm_sqr();
    let snr = g2 * 2.0 * codec.schedule.p_half / codec.noise.sigmae_2;
    pam_mutual_information(&codec.re, snr) + pam_mutual_information(&codec.im, snr)
}

/// `log2 p(msg | Z_1)` under the Gaussian first-use likelihood with a uniform
/// prior; exact when `g_fb = 0`.
pub fn first_use_log2_posterior(obs: &EveObservation, msg: MessagePair) -> f64 {
    let Some(point) = obs.first_use_point() else {
        return -f64::from(obs.codec.payload_bits());
    };
    let s2 = obs.first_use_std().powi(2);
    let dim = |pam: &PamConstellation, y: f64, k: u64| {
        let log_like = |c: f64| -(y - c) * (y - c) / (2.0 * s2);
        let own = log_like(pam.center(k));
        let top = (0..pam.m_levels()).map(|j| log_like(pam.center(j))).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = (0..pam.m_levels()).map(|j| (log_like(pam.center(j)) - top).exp()).sum();
        (own - top - total.ln()) / std::f64::consts::LN_2
    };
    dim(&obs.codec.re, point[0], msg.re) + dim(&obs.codec.im, point[1], msg.im)
}

/// Eve's guess against the truth for one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackTrial {
    pub sent: u128,
    pub guessed: u128,
}

/// Summary of many attack trials at one payload size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecrecyReport {
    pub trials: usize,
    pub payload_bits: u32,
    /// Analytical bound `[1 - C_e / payload]^+`.
    pub delta_bound: f64,
    /// `log2(1 + |g|^2 P / sigma_e^2)`.
    pub leakage_budget_bits: f64,
    pub recovery_rate: f64,
    pub chance_rate: f64,
    /// Error rate of each payload bit, most significant first.
    pub bit_error_rates: Vec<f64>,
    /// Fano lower bound on `I(W; Z)` implied by the recovery rate.
    pub implied_leakage_bits: f64,
    /// `implied_leakage_bits <= leakage_budget_bits + 0.5`.
    pub within_budget: bool,
}

/// Minimum trial count accepted by [`equivocation_report`].
pub const MIN_TRIALS: usize = 1000;

/// Slack in bits allowed between the Fano-implied leakage and the capacity budget.
pub const LEAKAGE_SLACK_BITS: f64 = 0.5;

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Leakage lower bound `B - h(Pe) - Pe log2(2^B - 1)` from a decoding error rate.
pub fn fano_leakage_bits(payload_bits: u32, error_rate: f64) -> f64 {
    let b = f64::from(payload_bits);
    let log_rest = if payload_bits >= 53 { b } else { (2f64.powi(payload_bits as i32) - 1.0).log2() };
    let rest = if payload_bits == 0 { 0.0 } else { error_rate * log_rest };
    (b - binary_entropy(error_rate) - rest).max(0.0)
}

pub fn equivocation_report(
    trials: &[AttackTrial],
    payload_bits: u32,
    budget: &LinkBudget,
    power: f64,
) -> Result<SecrecyReport> {
    if trials.len() < MIN_TRIALS {
        return Err(Error::InsufficientTrials { needed: MIN_TRIALS, got: trials.len() });
    }
    if payload_bits > 128 {
        return Err(domain(format!("payload of {payload_bits} bits exceeds 128")));
    }
    let n = trials.len() as f64;
    let hits = trials.iter().filter(|t| t.sent == t.guessed).count() as f64;
    let bit_error_rates = (0..payload_bits)
        .map(|b| {
            let shift = payload_bits - 1 - b;
            trials.iter().filter(|t| ((t.sent ^ t.guessed) >> shift) & 1 == 1).count() as f64 / n
        })
        .collect();
    let recovery_rate = hits / n;
    let leakage_budget_bits = eavesdropper_capacity(budget, power);
    let implied = fano_leakage_bits(payload_bits, 1.0 - recovery_rate);
    Ok(SecrecyReport {
        trials: trials.len(),
        payload_bits,
        delta_bound: secrecy_level_bound(budget, power, &[f64::from(payload_bits)]),
        leakage_budget_bits,
        recovery_rate,
        chance_rate: 2f64.powi(-(payload_bits as i32)),
        bit_error_rates,
        implied_leakage_bits: implied,
        within_budget: implied <= leakage_budget_bits + LEAKAGE_SLACK_BITS,
    })
}
