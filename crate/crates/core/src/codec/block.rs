use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{modulo_d, sample_dither, PamConstellation, SubChannelSchedule};
use crate::analysis::{split_payload_bits, LinkBudget};
use crate::channel::{ChannelRealization, Derotator, NoiseSpec};
use crate::error::{domain, Result};
use crate::rng::{pair_index, substream, Domain};

/// Message indices carried on the real and imaginary sub-channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct MessagePair {
    pub re: u64,
    pub im: u64,
}

impl MessagePair {
    /// Splits a `bits`-wide payload: the high `ceil(bits/2)` bits go to the real part.
    pub fn from_payload(payload: u128, bits: u32) -> Self {
        let (_, lo) = split_payload_bits(bits);
        let mask = (1u128 << lo) - 1;
        MessagePair { re: (payload >> lo) as u64, im: (payload & mask) as u64 }
    }

    pub fn to_payload(self, bits: u32) -> u128 {
        let (_, lo) = split_payload_bits(bits);
        (u128::from(self.re) << lo) | u128::from(self.im)
    }
}

/// Dither sequences shared by the edge and cloud servers, one per sub-channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Dither {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Dither {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n_t: usize, d: f64) -> Self {
        let steps = n_t.saturating_sub(1);
        Dither { re: sample_dither(rng, steps, d), im: sample_dither(rng, steps, d) }
    }

    pub fn zeros(n_t: usize) -> Self {
        let steps = n_t.saturating_sub(1);
        Dither { re: vec![0.0; steps], im: vec![0.0; steps] }
    }
}

/// Everything observable about one block, for decoding, auditing and attacks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockTranscript {
    pub msg_sent: MessagePair,
    pub msg_decoded: MessagePair,
    /// Forward inputs `X_1..X_N`.
    pub x_seq: Vec<Complex64>,
    /// Feedback inputs `X_fb_1..X_fb_{N-1}`.
    pub x_fb_seq: Vec<Complex64>,
    /// Eavesdropper outputs `Z_1..Z_N`, when captured.
    pub z_seq: Option<Vec<Complex64>>,
    pub error: bool,
    /// Sub-channel feedback steps whose folded argument left `[-d/2, d/2)`.
    pub aliasing_events: u32,
    /// Estimation error `theta_hat - theta` after each forward use, per sub-channel.
    pub eps: Vec<[f64; 2]>,
    /// Derotated forward outputs per use.
    pub y_fwd: Vec<[f64; 2]>,
    /// The realization the whole block ran on.
    pub realization: ChannelRealization,
}

/// Encoder and decoder for one quasi-static realization and blocklength.
#[derive(Debug, Clone)]
pub struct BlockCodec {
    pub schedule: SubChannelSchedule,
    pub re: PamConstellation,
    pub im: PamConstellation,
    pub realization: ChannelRealization,
    pub noise: NoiseSpec,
    fwd: Derotator,
    fb: Derotator,
}

impl BlockCodec {
    pub fn new(
        schedule: SubChannelSchedule,
        re: PamConstellation,
        im: PamConstellation,
        realization: ChannelRealization,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let fwd = Derotator::new(realization.h)?;
        let fb = Derotator::new(realization.h_fb)?;
        Ok(BlockCodec { schedule, re, im, realization, noise, fwd, fb })
    }

    /// Builds the codec carrying `bits` payload bits in `n_t` channel uses.
    pub fn for_payload(
        realization: ChannelRealization,
        noise: NoiseSpec,
        p: f64,
        p_fb: f64,
        tau: f64,
        n_t: usize,
        bits: u32,
    ) -> Result<Self> {
        let budget = realization.budget(p, p_fb, &noise)?;
        let schedule = super::build_schedule(&budget, tau, n_t, p, p_fb)?;
        let (hi, lo) = split_payload_bits(bits);
        Self::new(schedule, PamConstellation::new(hi)?, PamConstellation::new(lo)?, realization, noise)
    }

    pub fn n_t(&self) -> usize {
        self.schedule.n_t
    }

    pub fn payload_bits(&self) -> u32 {
        self.re.bits() + self.im.bits()
    }

    pub fn budget(&self) -> Result<LinkBudget> {
        self.realization.budget(2.0 * self.schedule.p_half, 2.0 * self.schedule.p_fb_half, &self.noise)
    }

    /// Runs one block; noise is drawn from `rng` in channel-use order.
    pub fn transmit_block<R: Rng + ?Sized>(
        &self,
        msg: MessagePair,
        dither: &Dither,
        rng: &mut R,
        capture_eve: bool,
    ) -> BlockTranscript {
        let s = &self.schedule;
        let n = s.n_t;
        let amp = s.p_half.sqrt();
        let half = 0.5 * s.d;
        let theta = [self.re.center(msg.re), self.im.center(msg.im)];
        let ch = &self.realization;

        let mut x_seq = Vec::with_capacity(n);
        let mut x_fb_seq = Vec::with_capacity(n.saturating_sub(1));
        let mut z_seq = capture_eve.then(|| Vec::with_capacity(n));
        let mut eps = Vec::with_capacity(n);
        let mut y_fwd = Vec::with_capacity(n);

        let mut x = Complex64::new(amp * theta[0], amp * theta[1]);
        let (yr, yi) = self.fwd.apply(ch.forward_use(x, &self.noise, rng));
        let mut est = [yr / amp, yi / amp];
        x_seq.push(x);
        eps.push([est[0] - theta[0], est[1] - theta[1]]);
        y_fwd.push([yr, yi]);

        let mut aliasing_events = 0;
        for k in 0..n - 1 {
            let gamma = s.gamma[k];
            let v = [dither.re[k], dither.im[k]];
            let fb_in = [modulo_d(gamma * est[0] + v[0], s.d), modulo_d(gamma * est[1] + v[1], s.d)];
            let x_fb = Complex64::new(fb_in[0], fb_in[1]);
            if let Some(z) = z_seq.as_mut() {
                z.push(ch.eve_use(x, x_fb, &self.noise, rng));
            }
            x_fb_seq.push(x_fb);
            let (fr, fi) = self.fb.apply(ch.feedback_use(x_fb, &self.noise, rng));
            let fb_out = [fr, fi];

            let mut next = [0.0; 2];
            for c in 0..2 {
                let folded = gamma * (est[c] - theta[c]) + (fb_out[c] - fb_in[c]);
                if !(-half..half).contains(&folded) {
                    aliasing_events += 1;
                }
                let eps_tilde = modulo_d(fb_out[c] - gamma * theta[c] - v[c], s.d) / gamma;
                next[c] = s.lambda[k] * gamma * eps_tilde;
            }
            x = Complex64::new(next[0], next[1]);
            let (yr, yi) = self.fwd.apply(ch.forward_use(x, &self.noise, rng));
            est[0] -= s.beta[k] * yr;
            est[1] -= s.beta[k] * yi;
            x_seq.push(x);
            eps.push([est[0] - theta[0], est[1] - theta[1]]);
            y_fwd.push([yr, yi]);
        }
        if let Some(z) = z_seq.as_mut() {
            z.push(ch.eve_use(x, Complex64::new(0.0, 0.0), &self.noise, rng));
        }

        let msg_decoded = MessagePair { re: self.re.nearest(est[0]), im: self.im.nearest(est[1]) };
        BlockTranscript {
            msg_sent: msg,
            error: msg_decoded != msg,
            msg_decoded,
            x_seq,
            x_fb_seq,
            z_seq,
            aliasing_events,
            eps,
            y_fwd,
            realization: *ch,
        }
    }

    /// Uniformly random message pair for this codec's constellations.
    pub fn random_message<R: Rng + ?Sized>(&self, rng: &mut R) -> MessagePair {
        MessagePair { re: rng.random_range(0..self.re.m_levels()), im: rng.random_range(0..self.im.m_levels()) }
    }
}

/// Aggregate counts over many blocks of one codec.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BlockStats {
    pub blocks: u64,
    pub block_errors: u64,
    /// Folds counted over all steps; one fold usually cascades into later steps.
    pub aliasing_events: u64,
    /// Blocks with at least one fold.
    pub aliased_blocks: u64,
    /// Sub-channel feedback steps observed: `2 (N - 1)` per block.
    pub aliasing_opportunities: u64,
}

impl BlockStats {
    pub fn block_error_rate(&self) -> f64 {
        self.block_errors as f64 / self.blocks.max(1) as f64
    }

    pub fn aliased_block_rate(&self) -> f64 {
        self.aliased_blocks as f64 / self.blocks.max(1) as f64
    }

    pub fn aliasing_rate(&self) -> f64 {
        self.aliasing_events as f64 / self.aliasing_opportunities.max(1) as f64
    }

    fn merge(self, o: Self) -> Self {
        BlockStats {
            blocks: self.blocks + o.blocks,
            block_errors: self.block_errors + o.block_errors,
            aliasing_events: self.aliasing_events + o.aliasing_events,
            aliased_blocks: self.aliased_blocks + o.aliased_blocks,
            aliasing_opportunities: self.aliasing_opportunities + o.aliasing_opportunities,
        }
    }
}

/// Runs `blocks` independent blocks with uniform messages and fresh dither.
///
/// Block `b` draws from substreams indexed by `(stream, b)`, so the result is
/// independent of thread count.
pub fn simulate_blocks(codec: &BlockCodec, blocks: u64, seed: u64, stream: u64) -> Result<BlockStats> {
    if blocks == 0 {
        return Err(domain("need at least one block"));
    }
    let steps = 2 * (codec.n_t() as u64 - 1);
    let stats = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let idx = pair_index(stream, b);
            let mut side = substream(seed, Domain::Messages, idx);
            let msg = codec.random_message(&mut side);
            let dither = Dither::sample(&mut side, codec.n_t(), codec.schedule.d);
            let mut rng = substream(seed, Domain::ChannelNoise, idx);
            let t = codec.transmit_block(msg, &dither, &mut rng, false);
            BlockStats {
                blocks: 1,
                block_errors: u64::from(t.error),
                aliasing_events: u64::from(t.aliasing_events),
                aliased_blocks: u64::from(t.aliasing_events > 0),
                aliasing_opportunities: steps,
            }
        })
        .reduce(BlockStats::default, BlockStats::merge);
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn noise(snr: f64, snr_fb: f64) -> NoiseSpec {
        NoiseSpec::new(10.0 / snr, 31.62 / snr_fb, 1.0).unwrap()
    }

    #[test]
    fn payload_split_roundtrip() {
        for bits in 0..=80u32 {
            let payload = if bits == 0 { 0 } else { 0xdead_beef_cafe_f00d_1234u128 & ((1u128 << bits) - 1) };
            let m = MessagePair::from_payload(payload, bits);
            assert_eq!(m.to_payload(bits), payload);
            let (hi, lo) = split_payload_bits(bits);
            assert!(m.re < 1 << hi && m.im < 1 << lo);
        }
    }

    #[test]
    fn near_noiseless_blocks_decode() {
        let codec =
            BlockCodec::for_payload(ChannelRealization::unit(), noise(1e6, 1e6), 10.0, 31.62, 1e-3, 5, 8).unwrap();
        let mut rng = substream(3, Domain::Test, 0);
        for _ in 0..1000 {
            let msg = codec.random_message(&mut rng);
            let dither = Dither::sample(&mut rng, 5, codec.schedule.d);
            let t = codec.transmit_block(msg, &dither, &mut rng, true);
            assert!(!t.error);
            assert_eq!(t.msg_decoded, msg);
            assert_eq!(t.z_seq.as_ref().unwrap().len(), 5);
            assert_eq!(t.x_fb_seq.len(), 4);
        }
    }

    #[test]
    fn same_seed_same_transcript() {
        let codec =
            BlockCodec::for_payload(ChannelRealization::unit(), noise(10.0, 31.62), 10.0, 31.62, 1e-3, 10, 18).unwrap();
        let run = || {
            let mut rng = substream(9, Domain::Test, 4);
            let msg = codec.random_message(&mut rng);
            let dither = Dither::sample(&mut rng, 10, codec.schedule.d);
            codec.transmit_block(msg, &dither, &mut rng, true)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn error_recursion_replays_exactly() {
        // Without aliasing the error obeys eps_i = eps_{i-1} - beta (lambda (gamma eps_{i-1} + n_fb) + n_fwd);
        // replaying the transcript through the decoder update must reproduce every step.
        let codec =
            BlockCodec::for_payload(ChannelRealization::unit(), noise(10.0, 31.62), 10.0, 31.62, 1e-3, 10, 18).unwrap();
        let mut rng = substream(5, Domain::Test, 1);
        let s = &codec.schedule;
        let mut checked = 0;
        for _ in 0..200 {
            let msg = codec.random_message(&mut rng);
            let dither = Dither::sample(&mut rng, 10, s.d);
            let t = codec.transmit_block(msg, &dither, &mut rng, false);
            assert_eq!(t.realization, codec.realization);
            if t.aliasing_events > 0 {
                continue;
            }
            for k in 0..9 {
                for c in 0..2 {
                    let replay = t.eps[k][c] - s.beta[k] * t.y_fwd[k + 1][c];
                    assert!((replay - t.eps[k + 1][c]).abs() < 1e-9);
                    // Forward input is lambda gamma times the recovered error plus feedback noise.
                    let x = if c == 0 { t.x_seq[k + 1].re } else { t.x_seq[k + 1].im };
                    let recovered = x / (s.lambda[k] * s.gamma[k]);
                    assert!((recovered - t.eps[k][c]).abs() < 8.0 * (s.fb_noise_var.sqrt() / s.gamma[k]) + 1e-9);
                }
            }
            checked += 1;
        }
        assert!(checked > 150);
    }

    #[test]
    fn single_use_block() {
        let codec =
            BlockCodec::for_payload(ChannelRealization::unit(), noise(1e8, 31.62), 10.0, 31.62, 1e-3, 1, 2).unwrap();
        let mut rng = substream(1, Domain::Test, 2);
        let msg = MessagePair { re: 1, im: 0 };
        let t = codec.transmit_block(msg, &Dither::zeros(1), &mut rng, true);
        assert_eq!(t.x_seq.len(), 1);
        assert!(t.x_fb_seq.is_empty());
        assert!(!t.error);
    }

    #[test]
    fn simulate_is_thread_count_independent() {
        let codec =
            BlockCodec::for_payload(ChannelRealization::unit(), noise(10.0, 31.62), 10.0, 31.62, 1e-3, 10, 18).unwrap();
        let a = simulate_blocks(&codec, 2000, 11, 0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_blocks(&codec, 2000, 11, 0).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.aliasing_opportunities, 2000 * 18);
    }
}
