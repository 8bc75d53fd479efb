//! Fixtures shared by the benchmarks.

use fblsec_core::analysis::achievable_rate;
use fblsec_core::codec::BlockCodec;
use fblsec_core::{ChannelRealization, LinkBudget, NoiseSpec};

pub const P: f64 = 10.0;
pub const P_FB: f64 = 31.62;
pub const TAU: f64 = 1e-3;

pub fn unit_noise() -> NoiseSpec {
    NoiseSpec::new(1.0, 1.0, 1.0).expect("positive variances")
}

pub fn unit_budget() -> LinkBudget {
    ChannelRealization::unit().budget(P, P_FB, &unit_noise()).expect("valid budget")
}

/// Unit-gain codec filled to the achievable rate at blocklength `n_t`.
pub fn rate_matched_codec(n_t: usize) -> BlockCodec {
    let report = achievable_rate(&unit_budget(), TAU, n_t).expect("valid rate");
    let per_sub = (report.block_bits() / 2.0).floor() as u32;
    BlockCodec::for_payload(ChannelRealization::unit(), unit_noise(), P, P_FB, TAU, n_t, 2 * per_sub)
        .expect("feasible codec")
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_build() {
        assert_eq!(super::rate_matched_codec(10).payload_bits(), 18);
    }
}
