use fblsec_core::analysis::{achievable_rate, q_func};
use fblsec_core::codec::{simulate_blocks, BlockCodec, Dither, MessagePair};
use fblsec_core::rng::{pair_index, substream, Domain};
use fblsec_core::stats::{ks_distance, mean_var};
use fblsec_core::{ChannelRealization, NoiseSpec};
use rayon::prelude::*;

const TAU: f64 = 1e-3;
const P: f64 = 10.0;
const P_FB: f64 = 31.62;
const TRIALS: u64 = 100_000;

fn noise() -> NoiseSpec {
    NoiseSpec::new(1.0, 1.0, 1.0).unwrap()
}

/// Codec with `floor(N R / 2)` bits per sub-channel from the rate formula.
fn rate_matched(n_t: usize) -> BlockCodec {
    let budget = ChannelRealization::unit().budget(P, P_FB, &noise()).unwrap();
    let report = achievable_rate(&budget, TAU, n_t).unwrap();
    let per_sub = (report.block_bits() / 2.0).floor() as u32;
    BlockCodec::for_payload(ChannelRealization::unit(), noise(), P, P_FB, TAU, n_t, 2 * per_sub).unwrap()
}

#[test]
fn block_error_within_budget() {
    for (i, &n_t) in [5usize, 10, 20].iter().enumerate() {
        let codec = rate_matched(n_t);
        let stats = simulate_blocks(&codec, TRIALS, 2024, i as u64).unwrap();
        let rate = stats.block_error_rate();
        assert!(rate <= TAU, "n_t = {n_t}: {rate}");
        assert!(rate >= TAU / 100.0, "n_t = {n_t}: {rate}");
    }
}

#[test]
fn aliasing_frequency_matches_fold_probability() {
    let codec = rate_matched(10);
    let stats = simulate_blocks(&codec, 200_000, 7, 0).unwrap();
    // Until the first fold the pre-fold quantity is Gaussian with variance
    // P_fb / (2L), so each sub-channel step folds with probability 2 Q(sqrt(3L)).
    let per_step = 2.0 * q_func((3.0 * codec.schedule.l).sqrt());
    assert!((per_step - TAU / (4.0 * 9.0)).abs() / per_step < 1e-9);
    let expect = 1.0 - (1.0 - per_step).powi(18);
    let n = stats.blocks as f64;
    let band = 4.0 * (expect * (1.0 - expect) / n).sqrt();
    let got = stats.aliased_block_rate();
    assert!((got - expect).abs() <= band, "{got} vs {expect}");
    assert!(stats.aliasing_rate() >= got / 18.0);
}

#[test]
fn error_variance_follows_recursion() {
    let codec = rate_matched(10);
    let n = codec.n_t();
    // Per step: [sum eps^2 re, sum eps^2 im], plus aliasing-free count.
    let (sums, clean) = (0..TRIALS)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(31, Domain::Test, b);
            let msg = codec.random_message(&mut rng);
            let dither = Dither::sample(&mut rng, n, codec.schedule.d);
            let t = codec.transmit_block(msg, &dither, &mut rng, false);
            if t.aliasing_events > 0 {
                return (vec![[0.0; 2]; n], 0u64);
            }
            (t.eps.iter().map(|e| [e[0] * e[0], e[1] * e[1]]).collect(), 1)
        })
        .reduce(
            || (vec![[0.0; 2]; n], 0),
            |(mut a, ca), (b, cb)| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x[0] += y[0];
                    x[1] += y[1];
                }
                (a, ca + cb)
            },
        );
    assert!(clean > TRIALS - 200);
    for (i, s) in sums.iter().enumerate() {
        let alpha = codec.schedule.alpha[i];
        for v in s {
            let var = v / clean as f64;
            assert!((var - alpha).abs() / alpha < 0.05, "i = {}: {var} vs {alpha}", i + 1);
        }
    }
}

fn collect<F>(codec: &BlockCodec, msg: MessagePair, seed: u64, pick: F) -> Vec<f64>
where
    F: Fn(&fblsec_core::codec::BlockTranscript) -> f64 + Sync,
{
    (0..TRIALS)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, Domain::Test, pair_index(msg.re, b));
            let dither = Dither::sample(&mut rng, codec.n_t(), codec.schedule.d);
            pick(&codec.transmit_block(msg, &dither, &mut rng, false))
        })
        .collect()
}

#[test]
fn feedback_power_and_masking() {
    let codec = rate_matched(10);
    let top = codec.re.m_levels() - 1;
    let low = MessagePair { re: 0, im: 0 };
    let high = MessagePair { re: top, im: top };
    for step in [0usize, 4, 8] {
        let a = collect(&codec, low, 41, |t| t.x_fb_seq[step].re);
        let b = collect(&codec, high, 43, |t| t.x_fb_seq[step].re);
        let power = a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64;
        assert!((power - P_FB / 2.0).abs() / (P_FB / 2.0) < 0.02, "step {step}: {power}");
        let ks = ks_distance(&a, &b);
        assert!(ks < 0.02, "step {step}: ks = {ks}");
    }
}

#[test]
fn forward_power_per_use() {
    let codec = rate_matched(10);
    let mut rng = substream(55, Domain::Test, 0);
    let mut acc = [[0.0; 2]; 10];
    for _ in 0..TRIALS {
        let msg = codec.random_message(&mut rng);
        let dither = Dither::sample(&mut rng, 10, codec.schedule.d);
        let t = codec.transmit_block(msg, &dither, &mut rng, false);
        for (a, x) in acc.iter_mut().zip(&t.x_seq) {
            a[0] += x.re * x.re;
            a[1] += x.im * x.im;
        }
    }
    let half = P / 2.0;
    let first = half * codec.re.second_moment();
    for (i, a) in acc.iter().enumerate() {
        for &s in a {
            let power = s / TRIALS as f64;
            let target = if i == 0 { first } else { half };
            assert!((power - target).abs() / target < 0.03, "use {}: {power}", i + 1);
        }
    }
    let (mean, _) = mean_var(&acc.iter().map(|a| a[0]).collect::<Vec<_>>());
    assert!(mean / (TRIALS as f64) <= half * 1.03);
}
