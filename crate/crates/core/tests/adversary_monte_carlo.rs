use fblsec_core::adversary::{
    attack_first_use, attack_full_sequence, equivocation_report, AttackTrial, EveObservation,
};
use fblsec_core::analysis::q_func;
use fblsec_core::codec::{BlockCodec, Dither};
use fblsec_core::rng::{substream, Domain};
use fblsec_core::{ChannelRealization, NoiseSpec};
use num_complex::Complex64;
use rayon::prelude::*;

fn codec(g: f64, g_fb: f64, sigma_e2: f64, bits: u32, n_t: usize) -> BlockCodec {
    let one = Complex64::new(1.0, 0.0);
    let ch = ChannelRealization { h: one, h_fb: one, g: Complex64::new(g, 0.0), g_fb: Complex64::new(g_fb, 0.0) };
    BlockCodec::for_payload(ch, NoiseSpec::new(1.0, 1.0, sigma_e2).unwrap(), 10.0, 31.62, 1e-3, n_t, bits).unwrap()
}

/// (first-use hits, sequence hits, sequence acceptances, trials)
fn race(codec: &BlockCodec, trials: u64, dither_on: bool, seed: u64) -> (u64, u64, u64, u64) {
    (0..trials)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, Domain::Adversary, b);
            let msg = codec.random_message(&mut rng);
            let dither = if dither_on {
                Dither::sample(&mut rng, codec.n_t(), codec.schedule.d)
            } else {
                Dither::zeros(codec.n_t())
            };
            let t = codec.transmit_block(msg, &dither, &mut rng, true);
            let obs =
                EveObservation::new(t.z_seq.as_ref().unwrap(), codec).unwrap().with_refinement_genie(&t.x_seq).unwrap();
            let first = attack_first_use(&obs, &mut rng) == msg;
            let seq = attack_full_sequence(&obs, &mut rng);
            (u64::from(first), u64::from(seq.guess == msg), u64::from(seq.accepted), 1)
        })
        .reduce(|| (0, 0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3))
}

fn two_proportion_p_value(x1: u64, x2: u64, n: u64) -> f64 {
    let (p1, p2) = (x1 as f64 / n as f64, x2 as f64 / n as f64);
    let pooled = (x1 + x2) as f64 / (2 * n) as f64;
    let se = (pooled * (1.0 - pooled) * 2.0 / n as f64).sqrt();
    if se == 0.0 {
        return 1.0;
    }
    2.0 * q_func(((p1 - p2) / se).abs())
}

#[test]
fn undithered_feedback_leaks_to_sequence_attack() {
    // Strong forward view, weak but clean view of the feedback link.
    let c = codec(1.0, 0.02, 1e-7, 12, 10);
    let (first, seq, accepted, n) = race(&c, 20_000, false, 1);
    let (first, seq) = (first as f64 / n as f64, seq as f64 / n as f64);
    assert!(accepted as f64 / n as f64 > 0.99);
    assert!(seq > 0.95 && seq > first + 0.3, "first {first}, sequence {seq}");
}

#[test]
fn dithered_feedback_gives_no_advantage() {
    let c = codec(1.0, 0.02, 1e-7, 12, 10);
    let (first, seq, accepted, n) = race(&c, 100_000, true, 2);
    let p = two_proportion_p_value(first, seq, n);
    assert!(p > 0.01, "first {first}, sequence {seq}, p = {p}");
    assert!(accepted < n / 1000);
    assert!(first as f64 / n as f64 > 0.1);
}

#[test]
fn blind_eavesdropper_stays_at_chance() {
    let c = codec(0.0, 0.0, 1.0, 4, 5);
    let (first, seq, _, n) = race(&c, 10_000, true, 3);
    let p = 1.0 / 16.0;
    let band = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
    assert!((first as f64 / n as f64 - p).abs() < band);
    assert!((seq as f64 / n as f64 - p).abs() < band);
}

#[test]
fn recovery_grows_with_eavesdropper_snr() {
    let mut last = 0.0;
    for (i, snr) in [0.1, 1.0, 3.0, 10.0, 100.0].into_iter().enumerate() {
        let c = codec(1.0, 0.0, 10.0 / snr, 6, 5);
        let (hits, _, _, n) = race(&c, 40_000, true, 10 + i as u64);
        let rate = hits as f64 / n as f64;
        assert!(rate + 3.0 * (rate.max(1e-4) / n as f64).sqrt() >= last, "snr {snr}: {rate} < {last}");
        last = rate;
    }
}

#[test]
fn twenty_bit_payload_resists_capacity_limited_eve() {
    // |g|^2 P / sigma_e^2 = 3 with no feedback tap, the strongest first-use view.
    let c = codec(1.0, 0.0, 10.0 / 3.0, 20, 11);
    let n = 200_000u64;
    let trials: Vec<AttackTrial> = (0..n)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(4, Domain::Adversary, b);
            let msg = c.random_message(&mut rng);
            let t = c.transmit_block(msg, &Dither::sample(&mut rng, c.n_t(), c.schedule.d), &mut rng, true);
            let obs = EveObservation::new(t.z_seq.as_ref().unwrap(), &c).unwrap();
            let guess = attack_first_use(&obs, &mut rng);
            AttackTrial { sent: msg.to_payload(20), guessed: guess.to_payload(20) }
        })
        .collect();
    let report = equivocation_report(&trials, 20, &c.budget().unwrap(), 10.0).unwrap();
    assert!(report.recovery_rate <= 10.0 * 2f64.powi(2 - 20));
    assert!((report.bit_error_rates[19] - 0.5).abs() < 0.01);
    assert!((report.bit_error_rates[9] - 0.5).abs() < 0.01);
    assert!(report.within_budget);
    assert!((report.delta_bound - 0.9).abs() < 1e-12);
}
