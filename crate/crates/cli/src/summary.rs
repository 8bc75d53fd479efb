//! Per-round and aggregate reporting over a run's ledgers.

use fblsec_core::hfl::PrivacySecrecyLedger;
use serde::Serialize;

/// One line of the summary table; `round` is empty on the aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scope: &'static str,
    pub round: Option<usize>,
    pub channel_uses: usize,
    /// Blocklength-weighted achievable rate in bits per channel use.
    pub rate_bits_per_use: f64,
    pub secrecy_delta_bound: f64,
    pub secrecy_delta_single_block_bound: f64,
    pub eve_success_rate: f64,
    pub mi_bound_bits: f64,
    pub mi_average_bits: f64,
    pub utility_distortion: f64,
    pub utility_empirical: f64,
}

/// `(sum N R, sum N, blocks)` of one ledger.
fn weighted(l: &PrivacySecrecyLedger) -> (f64, usize, usize) {
    l.round_rates.iter().zip(&l.rate_block_counts).fold((0.0, 0, 0), |(nr, n, b), (r, &count)| {
        let uses = count * r.n_t;
        (nr + uses as f64 * r.rate_bits_per_use, n + uses, b + count)
    })
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

/// One row per ledger followed by the aggregate row; `None` when there are no ledgers.
pub fn emit_summary(ledgers: &[PrivacySecrecyLedger]) -> Option<Vec<SummaryRow>> {
    let last = ledgers.last()?;
    let mut rows = Vec::with_capacity(ledgers.len() + 1);
    let (mut nr_all, mut n_all, mut hits_all, mut blocks_all) = (0.0, 0, 0.0, 0);
    for l in ledgers {
        let (nr, n, blocks) = weighted(l);
        nr_all += nr;
        n_all += n;
        hits_all += l.eve_success_rate * blocks as f64;
        blocks_all += blocks;
        rows.push(SummaryRow {
            scope: "round",
            round: Some(l.round),
            channel_uses: n,
            rate_bits_per_use: ratio(nr, n),
            secrecy_delta_bound: l.secrecy_delta_bound,
            secrecy_delta_single_block_bound: l.secrecy_delta_single_block_bound,
            eve_success_rate: l.eve_success_rate,
            mi_bound_bits: l.mi_bound_bits,
            mi_average_bits: l.mi_average_bits,
            utility_distortion: l.utility_distortion,
            utility_empirical: l.utility_empirical,
        });
    }
    rows.push(SummaryRow {
        scope: "aggregate",
        round: None,
        channel_uses: n_all,
        rate_bits_per_use: ratio(nr_all, n_all),
        secrecy_delta_bound: last.secrecy_delta_bound,
        secrecy_delta_single_block_bound: last.secrecy_delta_single_block_bound,
        eve_success_rate: ratio(hits_all, blocks_all),
        mi_bound_bits: last.mi_bound_bits,
        mi_average_bits: last.mi_average_bits,
        utility_distortion: last.utility_distortion,
        utility_empirical: last.utility_empirical,
    });
    Some(rows)
}
