//! Closed-form calculators for the achievable rate, secrecy level and
//! privacy/utility window of the feedback coding scheme.
//!
//! Everything here is a pure function of value types. Rates are in bits.

mod qfunc;

pub use qfunc::{q_func, q_inv};

use serde::Serialize;

use crate::error::{domain, infeasible, Result};

/// Signal-to-noise ratios and channel gains seen by one transmission round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBudget {
    /// Forward SNR, `P / sigma1^2`.
    pub snr_fwd: f64,
    /// Feedback SNR, `P_fb / sigma2^2`.
    pub snr_fb: f64,
    /// `|h|^2` of the forward channel.
    pub h_mod2: f64,
    /// `|h_fb|^2` of the feedback channel.
    pub hfb_mod2: f64,
    /// `|g|^2` of the eavesdropper's forward tap.
    pub g_mod2: f64,
    /// Eavesdropper noise variance.
    pub sigma_e2: f64,
}

impl LinkBudget {
    pub fn new(snr_fwd: f64, snr_fb: f64, h_mod2: f64, hfb_mod2: f64, g_mod2: f64, sigma_e2: f64) -> Result<Self> {
        let budget = LinkBudget { snr_fwd, snr_fb, h_mod2, hfb_mod2, g_mod2, sigma_e2 };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("snr_fwd", self.snr_fwd),
            ("snr_fb", self.snr_fb),
            ("h_mod2", self.h_mod2),
            ("hfb_mod2", self.hfb_mod2),
            ("sigma_e2", self.sigma_e2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.g_mod2 >= 0.0 && self.g_mod2.is_finite()) {
            return Err(domain(format!("g_mod2 must be non-negative, got {}", self.g_mod2)));
        }
        Ok(())
    }

    /// Effective forward SNR `|h|^2 SNR`.
    pub fn fwd_gain(&self) -> f64 {
        self.h_mod2 * self.snr_fwd
    }

    /// Effective feedback SNR `|h_fb|^2 SNR_fb`.
    pub fn fb_gain(&self) -> f64 {
        self.hfb_mod2 * self.snr_fb
    }
}

/// Achievable rate of one block of `n_t` channel uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    pub n_t: usize,
    pub rate_bits_per_use: f64,
    /// Modulo-aliasing budget `L`.
    pub l: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub feasible: bool,
}

impl RateReport {
    /// Bits carried by the whole block, `n_t * R_t`.
    pub fn block_bits(&self) -> f64 {
        self.n_t as f64 * self.rate_bits_per_use
    }
}

/// Admissible range of the per-user LDP noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaWindow {
    pub lower: f64,
    pub upper: f64,
    pub nonempty: bool,
}

impl SigmaWindow {
    pub fn contains(&self, sigma2: f64) -> bool {
        self.lower <= sigma2 && sigma2 <= self.upper
    }
}

/// Aliasing budget `L = (1/3) [Q^-1(tau / (8 (n_t - 1)))]^2`.
pub fn aliasing_budget(tau: f64, n_t: usize) -> Result<f64> {
    if n_t < 2 {
        return Err(domain(format!("aliasing budget needs n_t >= 2, got {n_t}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    let x = q_inv(tau / (8.0 * (n_t - 1) as f64))?;
    Ok(x * x / 3.0)
}

/// Decision threshold `Q^-1(tau / 8)` of the final nearest-center decoder.
pub fn decision_quantile(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    q_inv(tau / 8.0)
}

/// Achievable rate `R_t` for error probability `tau` at blocklength `n_t`.
///
/// Infeasible configurations (feedback outage, or a non-positive rate) are
/// reported through `feasible = false` with a zero rate.
pub fn achievable_rate(budget: &LinkBudget, tau: f64, n_t: usize) -> Result<RateReport> {
    budget.validate()?;
    if n_t == 0 {
        return Err(domain("blocklength must be at least 1"));
    }
    let q = decision_quantile(tau)?;
    let s = budget.fwd_gain();
    let head = (3.0 * s / (q * q)).log2();
    let outage =
        |l: f64, psi1: f64, psi2: f64| RateReport { n_t, rate_bits_per_use: 0.0, l, psi1, psi2, feasible: false };

    if n_t == 1 {
        if head <= 0.0 {
            return Ok(outage(0.0, 1.0, 1.0));
        }
        return Ok(RateReport { n_t, rate_bits_per_use: head, l: 0.0, psi1: 1.0, psi2: 1.0, feasible: true });
    }

    let l = aliasing_budget(tau, n_t)?;
    let fb = budget.fb_gain();
    if fb <= l {
        return Ok(outage(l, f64::NAN, f64::INFINITY));
    }
    let psi1 = 1.0 + l * s / fb;
    let psi2 = 1.0 / (1.0 - l / fb);
    let total = head + (n_t - 1) as f64 * (s / (psi1 * psi2)).ln_1p() / std::f64::consts::LN_2;
    if total <= 0.0 {
        return Ok(outage(l, psi1, psi2));
    }
    Ok(RateReport { n_t, rate_bits_per_use: total / n_t as f64, l, psi1, psi2, feasible: true })
}

/// Gaussian rate-distortion function in bits per coordinate.
pub fn rate_distortion(distortion: f64, source_var: f64) -> Result<f64> {
    if distortion.is_nan() || source_var.is_nan() || distortion < 0.0 || source_var < 0.0 {
        return Err(domain(format!(
            "rate_distortion needs D >= 0 and variance >= 0, got D = {distortion}, var = {source_var}"
        )));
    }
    if distortion >= source_var {
        return Ok(0.0);
    }
    if distortion == 0.0 {
        return Err(infeasible("zero distortion requires an infinite rate"));
    }
    Ok(0.5 * (source_var / distortion).log2())
}

/// Eavesdropper capacity `log2(1 + |g|^2 P / sigma_e^2)` in bits per use.
pub fn eavesdropper_capacity(budget: &LinkBudget, power: f64) -> f64 {
    (budget.g_mod2 * power / budget.sigma_e2).ln_1p() / std::f64::consts::LN_2
}

/// Secrecy level of a single round carrying `payload_bits`, `[1 - C_e / payload]^+`.
///
/// A round with no payload leaks nothing and scores 1.
pub fn round_secrecy_level(leakage_bits: f64, payload_bits: f64) -> f64 {
    if payload_bits <= 0.0 {
        return 1.0;
    }
    (1.0 - leakage_bits / payload_bits).clamp(0.0, 1.0)
}

/// Upper bound on the achievable secrecy level over all rounds.
///
/// `payload_bits[t]` is `q R_t(D)`; rounds without transmission are ignored.
pub fn secrecy_level_bound(budget: &LinkBudget, power: f64, payload_bits: &[f64]) -> f64 {
    let leak = eavesdropper_capacity(budget, power);
    payload_bits.iter().filter(|&&b| b > 0.0).map(|&b| round_secrecy_level(leak, b)).fold(1.0, f64::min)
}

/// Window of LDP noise variances meeting both the privacy budget `eps` and
/// the utility budget `utility` for `users` users.
pub fn sigma2_window(eps: f64, utility: f64, users: usize, s_ell: f64, sigma_w2_max: f64) -> SigmaWindow {
    let k = users as f64;
    let lower = s_ell * sigma_w2_max / (k * (2f64.powf(2.0 * eps) - 1.0));
    let upper = utility / k;
    SigmaWindow { lower, upper, nonempty: lower <= upper }
}

/// Upload latency `M / (R * uses_per_second)` in seconds.
pub fn latency(m_bits: f64, rate_bits_per_use: f64, uses_per_second: f64) -> Result<f64> {
    if m_bits == 0.0 {
        return Ok(0.0);
    }
    let throughput = rate_bits_per_use * uses_per_second;
    if throughput.is_nan() || throughput <= 0.0 {
        return Err(infeasible(format!("non-positive throughput {throughput}")));
    }
    Ok(m_bits / throughput)
}

/// Splits a block payload between the two real sub-channels; the odd bit
/// goes to the in-phase one.
pub fn split_payload_bits(bits: u32) -> (u32, u32) {
    (bits - bits / 2, bits / 2)
}

/// Whether `bits` fit in one block with the given rate report.
///
/// Each real sub-channel carries half of `n_t R_t`, so the larger share of an
/// odd payload must fit in that half.
pub fn fits_block(report: &RateReport, bits: u32) -> bool {
    if !report.feasible {
        return false;
    }
    let (re, _) = split_payload_bits(bits);
    2.0 * re as f64 <= report.block_bits()
}

/// Smallest blocklength in `2..=n_max` whose rate carries `payload_bits`.
pub fn plan_blocklength(payload_bits: u32, budget: &LinkBudget, tau: f64, n_max: usize) -> Result<RateReport> {
    if payload_bits == 0 {
        return Err(domain("payload must carry at least one bit"));
    }
    for n_t in 2..=n_max {
        let report = achievable_rate(budget, tau, n_t)?;
        if fits_block(&report, payload_bits) {
            return Ok(report);
        }
    }
    Err(infeasible(format!("{payload_bits} bits do not fit in any blocklength up to {n_max}")))
}
