//! One training run over the coded uplink, traced alongside an uncoded
//! baseline and the eavesdropper's own reconstruction.
//!
//! Each round the edge quantizes the noisy aggregate, the payload is cut into
//! codec blocks on a fresh fading realization, and the cloud applies whatever
//! it decoded. Realizations whose feedback link cannot carry the plan are
//! redrawn up to `max_redraws` times; after that the round is skipped and the
//! cloud applies a zero update. Eve shares the initial model, knows the
//! quantizer header and dither, and applies her decoded indices to her own copy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{attack_full_sequence, EveObservation};
use crate::analysis::{achievable_rate, eavesdropper_capacity, rate_distortion, LinkBudget, RateReport};
use crate::channel::{ChannelRealization, NoiseSpec};
use crate::codec::{BlockCodec, Dither, MessagePair};
use crate::error::{domain, Error, Result};
use crate::hfl::{
    build_ledger, cloud_update, estimate_sigma_w2, DataSplit, GradientBundle, LedgerInputs, Mlp, ModelState,
    PrivacySecrecyLedger,
};
use crate::rng::{pair_index, substream, Domain};
use crate::source::{
    chunk, dequantize_with_dither, join_chunks, quantize_with_dither, split_chunks, Chunk, QuantizerParams,
};

/// Physical, protocol and learning parameters of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Forward transmit power `P`.
    pub p: f64,
    /// Feedback transmit power.
    pub p_fb: f64,
    pub sigma1_2: f64,
    pub sigma2_2: f64,
    pub sigmae_2: f64,
    /// Per-round decoding error budget.
    pub tau: f64,
    /// Quantizer distortion `D`.
    pub distortion: f64,
    /// Utility budget `U`.
    pub utility: f64,
    /// Privacy budget in bits per coordinate.
    pub eps: f64,
    /// Users `K`.
    pub users: usize,
    /// Hidden width; the parameter count `q` follows from it.
    pub hidden: usize,
    /// Rounds `T`.
    pub rounds: usize,
    /// Learning rate.
    pub mu: f64,
    pub lambda_reg: f64,
    /// Per-user LDP noise variance.
    pub sigma2: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Longest admissible codec block.
    pub n_max: usize,
    /// Extra realizations drawn after a feedback outage before skipping the round.
    pub max_redraws: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            p: 10.0,
            p_fb: 31.62,
            sigma1_2: 1.0,
            sigma2_2: 1.0,
            sigmae_2: 1.0,
            tau: 1e-6,
            distortion: 1e-4,
            utility: 5.0,
            eps: 0.1,
            users: 10,
            hidden: 20,
            rounds: 30,
            mu: 1.0,
            lambda_reg: 5e-5,
            sigma2: 0.5,
            n_train: 1000,
            n_test: 1000,
            n_max: 100,
            max_redraws: 100,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be positive and finite, got {v}")))
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p", self.p),
            ("p_fb", self.p_fb),
            ("sigma1_2", self.sigma1_2),
            ("sigma2_2", self.sigma2_2),
            ("sigmae_2", self.sigmae_2),
            ("distortion", self.distortion),
            ("utility", self.utility),
            ("eps", self.eps),
        ] {
            positive(name, v)?;
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(domain(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(domain(format!("mu must be nonnegative, got {}", self.mu)));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(domain(format!("lambda_reg must be nonnegative, got {}", self.lambda_reg)));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(domain(format!("sigma2 must be nonnegative, got {}", self.sigma2)));
        }
        for (name, v, min) in [
            ("users", self.users, 1),
            ("hidden", self.hidden, 1),
            ("n_train", self.n_train, 1),
            ("n_test", self.n_test, 1),
            ("n_max", self.n_max, 2),
        ] {
            if v < min {
                return Err(domain(format!("{name} must be at least {min}, got {v}")));
            }
        }
        if self.n_train < self.users {
            return Err(domain(format!("n_train ({}) must be at least users ({})", self.n_train, self.users)));
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::new(self.sigma1_2, self.sigma2_2, self.sigmae_2)
    }

    pub fn net(&self, input: usize, classes: usize) -> Mlp {
        Mlp { input, hidden: self.hidden, output: classes }
    }

    pub fn budget(&self, realization: &ChannelRealization) -> Result<LinkBudget> {
        realization.budget(self.p, self.p_fb, &self.noise()?)
    }
}

/// What happened on the coded uplink in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundOutcome {
    Sent,
    /// `R_t(D) = 0`: nothing to send.
    ZeroRate,
    /// Every realization drawn was in feedback outage.
    Outage,
}

/// Per-round trace of the three models and the coded link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub outcome: RoundOutcome,
    /// Realizations drawn, including the one used.
    pub realizations_drawn: usize,
    pub outages: usize,
    pub h_mod2: f64,
    pub hfb_mod2: f64,
    pub g_mod2: f64,
    pub gfb_mod2: f64,
    pub sigma_w2_hat: f64,
    /// `S sigma_w^2 + K sigma^2`.
    pub source_var_model: f64,
    /// Mean square of the aggregate actually quantized.
    pub source_var_empirical: f64,
    pub index_width: u32,
    pub clipped: usize,
    pub accounted_bits: u64,
    pub payload_bits: u64,
    pub blocks: usize,
    pub channel_uses: usize,
    /// `sum N_t R_t / sum N_t` over the round's blocks.
    pub achievable_rate: f64,
    pub block_errors: usize,
    pub aliasing_events: u64,
    /// Measured `|W_hat - W'|^2 / q` at the cloud.
    pub cloud_mse: f64,
    pub eve_capacity_bits: f64,
    pub eve_block_hits: usize,
    pub eve_bit_error_rate: f64,
    pub baseline_accuracy: f64,
    pub coded_accuracy: f64,
    pub eve_accuracy: f64,
    pub baseline_loss: f64,
    pub coded_loss: f64,
}

/// Output of [`run_training`].
#[derive(Debug, Clone, Serialize)]
pub struct TrainingRun {
    pub data_source: &'static str,
    pub params: usize,
    pub initial_accuracy: f64,
    pub records: Vec<RoundRecord>,
    pub ledgers: Vec<PrivacySecrecyLedger>,
    #[serde(skip)]
    pub baseline: ModelState,
    #[serde(skip)]
    pub coded: ModelState,
    #[serde(skip)]
    pub eve: ModelState,
}

impl TrainingRun {
    pub fn outage_rounds(&self) -> usize {
        self.records.iter().filter(|r| r.outcome == RoundOutcome::Outage).count()
    }

    pub fn total_outages(&self) -> usize {
        self.records.iter().map(|r| r.outages).sum()
    }
}

/// Result of sending one quantized payload over one realization.
#[derive(Debug, Clone)]
pub struct LinkResult {
    pub chunks: Vec<Chunk>,
    /// One report per distinct plan, in the order of the codecs.
    pub rates: Vec<RateReport>,
    pub rate_block_counts: Vec<usize>,
    pub decoded: Vec<u128>,
    pub eve: Vec<u128>,
    pub block_errors: usize,
    pub aliasing_events: u64,
    pub eve_hits: usize,
    pub eve_bit_errors: u64,
}

type LinkPlan = (Vec<Chunk>, Vec<(Chunk, BlockCodec)>);

/// Chunk plan plus one codec per distinct `(bits, n_t)`, or `Infeasible`.
fn plan_link(cfg: &SystemConfig, realization: ChannelRealization, payload_bits: u64) -> Result<LinkPlan> {
    let noise = cfg.noise()?;
    let budget = cfg.budget(&realization)?;
    let chunks = chunk(payload_bits, &budget, cfg.tau, cfg.n_max)?;
    let mut codecs: Vec<(Chunk, BlockCodec)> = Vec::new();
    for c in &chunks {
        if !codecs.iter().any(|(k, _)| k == c) {
            codecs.push((*c, BlockCodec::for_payload(realization, noise, cfg.p, cfg.p_fb, c.tau, c.n_t, c.bits)?));
        }
    }
    Ok((chunks, codecs))
}

/// Sends `values` block by block; block `i` of round `round` uses the `(round, i)` substreams.
pub fn transmit_payload(
    chunks: &[Chunk],
    codecs: &[(Chunk, BlockCodec)],
    values: &[u128],
    budget: &LinkBudget,
    seed: u64,
    round: u64,
) -> Result<LinkResult> {
    let find = |c: &Chunk| codecs.iter().find(|(k, _)| k == c).map(|(_, codec)| codec);
    let per_block: Vec<(u128, u128, bool, u32)> = chunks
        .par_iter()
        .zip(values.par_iter())
        .enumerate()
        .map(|(i, (c, &v))| {
            let codec = find(c).ok_or_else(|| domain("chunk without a codec"))?;
            let idx = pair_index(round, i as u64);
            let mut noise_rng = substream(seed, Domain::ChannelNoise, idx);
            let dither = Dither::sample(&mut substream(seed, Domain::Dither, idx), codec.n_t(), codec.schedule.d);
            let msg = MessagePair::from_payload(v, c.bits);
            let t = codec.transmit_block(msg, &dither, &mut noise_rng, true);
            let z = t.z_seq.as_deref().ok_or_else(|| domain("missing eavesdropper capture"))?;
            let obs = EveObservation::new(z, codec)?;
            let guess = attack_full_sequence(&obs, &mut substream(seed, Domain::Adversary, idx)).guess;
            Ok((t.msg_decoded.to_payload(c.bits), guess.to_payload(c.bits), t.error, t.aliasing_events))
        })
        .collect::<Result<_>>()?;
    let mut out = LinkResult {
        chunks: chunks.to_vec(),
        rates: Vec::new(),
        rate_block_counts: Vec::new(),
        decoded: Vec::with_capacity(chunks.len()),
        eve: Vec::with_capacity(chunks.len()),
        block_errors: 0,
        aliasing_events: 0,
        eve_hits: 0,
        eve_bit_errors: 0,
    };
    for ((dec, eve, err, alias), &sent) in per_block.into_iter().zip(values) {
        out.decoded.push(dec);
        out.eve.push(eve);
        out.block_errors += usize::from(err);
        out.aliasing_events += u64::from(alias);
        out.eve_hits += usize::from(eve == sent);
        out.eve_bit_errors += u64::from((eve ^ sent).count_ones());
    }
    for (c, _) in codecs {
        out.rates.push(achievable_rate(budget, c.tau, c.n_t)?);
        out.rate_block_counts.push(chunks.iter().filter(|k| *k == c).count());
    }
    Ok(out)
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Trains the baseline, coded and eavesdropper models for `cfg.rounds` rounds.
pub fn run_training(cfg: &SystemConfig, data: &DataSplit, seed: u64) -> Result<TrainingRun> {
    cfg.validate()?;
    let net = cfg.net(data.train.dim, data.train.classes);
    let shards = data.train.shards(cfg.users)?;
    let s_lk: Vec<usize> = shards.iter().map(|s| s.len()).collect();
    let s_total: usize = s_lk.iter().sum();
    let q = net.num_params();

    let init = net.init(&mut substream(seed, Domain::ModelInit, 0));
    let initial_accuracy = net.accuracy(&init, &data.test)?;
    let (mut baseline, mut coded, mut eve) = (init.clone(), init.clone(), init);
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut ledgers: Vec<PrivacySecrecyLedger> = Vec::with_capacity(cfg.rounds);

    for t in 1..=cfg.rounds {
        let round = t as u64;
        let base_bundle = GradientBundle::compute(&net, &baseline, &shards, cfg.lambda_reg, cfg.sigma2, seed, round)?;
        baseline = cloud_update(&baseline, &base_bundle.aggregate, s_total, cfg.mu)?;

        let bundle = GradientBundle::compute(&net, &coded, &shards, cfg.lambda_reg, cfg.sigma2, seed, round)?;
        let w = &bundle.aggregate;
        let sigma_w2_hat = estimate_sigma_w2(&bundle.per_user, &s_lk)?;
        let source_var_model = s_total as f64 * sigma_w2_hat + cfg.users as f64 * cfg.sigma2;
        let source_var_empirical = mean_square(w);
        let peak = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let rate = if source_var_model > 0.0 { rate_distortion(cfg.distortion, source_var_model)? } else { 0.0 };

        let mut outcome = RoundOutcome::ZeroRate;
        let mut drawn = 0;
        let mut realization =
            ChannelRealization::sample(&mut substream(seed, Domain::Realization, pair_index(round, 0)));
        let mut link = None;
        let mut params_used = None;
        let mut payload_used = None;
        if rate > 0.0 {
            let params = QuantizerParams::covering(cfg.distortion, source_var_model, peak)?;
            let qdither = params.sample_dither(q, &mut substream(seed, Domain::Quantizer, round));
            let payload = quantize_with_dither(w, &params, &qdither)?;
            outcome = RoundOutcome::Outage;
            for attempt in 0..=cfg.max_redraws {
                drawn += 1;
                realization = ChannelRealization::sample(&mut substream(
                    seed,
                    Domain::Realization,
                    pair_index(round, attempt as u64),
                ));
                match plan_link(cfg, realization, payload.actual_bits()) {
                    Ok(plan) => {
                        link = Some(plan);
                        outcome = RoundOutcome::Sent;
                        break;
                    }
                    Err(Error::Infeasible(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            params_used = Some((params, qdither));
            payload_used = Some(payload);
        }
        let budget = cfg.budget(&realization)?;
        let eve_capacity = eavesdropper_capacity(&budget, cfg.p);

        let mut record_link = None;
        let (decoded, eve_decoded, payload_bits, width, clipped, accounted) = match (link, params_used, payload_used) {
            (Some((chunks, codecs)), Some((params, qdither)), Some(payload)) => {
                let values = split_chunks(&payload.indices, &chunks)?;
                let res = transmit_payload(&chunks, &codecs, &values, &budget, seed, round)?;
                let mut cloud = payload.clone();
                cloud.indices = join_chunks(&res.decoded, &chunks)?;
                let mut spy = payload.clone();
                spy.indices = join_chunks(&res.eve, &chunks)?;
                let decoded = dequantize_with_dither(&cloud, &params, &qdither)?;
                let eve_decoded = dequantize_with_dither(&spy, &params, &qdither)?;
                let out = (
                    decoded,
                    eve_decoded,
                    payload.actual_bits(),
                    payload.width,
                    payload.clipped,
                    payload.accounted_bits,
                );
                record_link = Some(res);
                out
            }
            (_, params, payload) => {
                let width = params.map_or(0, |(p, _)| p.width);
                let (clipped, accounted) = payload.map_or((0, 0), |p| (p.clipped, p.accounted_bits));
                (vec![0.0; q], vec![0.0; q], 0, width, clipped, accounted)
            }
        };
        let cloud_mse = mse(&decoded, w);
        coded = cloud_update(&coded, &decoded, s_total, cfg.mu)?;
        eve = cloud_update(&eve, &eve_decoded, s_total, cfg.mu)?;

        let (chunk_bits, rates, counts, blocks, uses, achievable, errors, aliasing, hits, ber) = match &record_link {
            Some(r) => {
                let uses: usize = r.chunks.iter().map(|c| c.n_t).sum();
                let weighted: f64 = r
                    .rates
                    .iter()
                    .zip(&r.rate_block_counts)
                    .map(|(rep, &n)| (n * rep.n_t) as f64 * rep.rate_bits_per_use)
                    .sum();
                (
                    r.chunks.iter().map(|c| c.bits).collect(),
                    r.rates.clone(),
                    r.rate_block_counts.clone(),
                    r.chunks.len(),
                    uses,
                    weighted / uses as f64,
                    r.block_errors,
                    r.aliasing_events,
                    r.eve_hits,
                    r.eve_bit_errors as f64 / payload_bits as f64,
                )
            }
            None => (Vec::new(), Vec::new(), Vec::new(), 0, 0, 0.0, 0, 0, 0, f64::NAN),
        };

        let ledger = build_ledger(
            &LedgerInputs {
                round: t,
                sigma_w2_hat,
                sigma2: cfg.sigma2,
                users: cfg.users,
                s_ell: s_total as f64,
                eps: cfg.eps,
                utility_budget: cfg.utility,
                utility_empirical: bundle.noise_energy_per_coord(),
                budget,
                power: cfg.p,
                accounted_bits: if outcome == RoundOutcome::Sent { accounted as f64 } else { 0.0 },
                chunk_bits,
                round_rates: rates,
                rate_block_counts: counts,
                eve_success_rate: if blocks > 0 { hits as f64 / blocks as f64 } else { 0.0 },
            },
            ledgers.last(),
        );
        ledgers.push(ledger);

        let base_fp = net.forward_and_loss(&baseline, &data.train, cfg.lambda_reg)?;
        let coded_fp = net.forward_and_loss(&coded, &data.train, cfg.lambda_reg)?;
        let record = RoundRecord {
            round: t,
            outcome,
            realizations_drawn: drawn,
            outages: if outcome == RoundOutcome::Sent { drawn - 1 } else { drawn },
            h_mod2: realization.h.norm_sqr(),
            hfb_mod2: realization.h_fb.norm_sqr(),
            g_mod2: realization.g.norm_sqr(),
            gfb_mod2: realization.g_fb.norm_sqr(),
            sigma_w2_hat,
            source_var_model,
            source_var_empirical,
            index_width: width,
            clipped,
            accounted_bits: accounted,
            payload_bits,
            blocks,
            channel_uses: uses,
            achievable_rate: achievable,
            block_errors: errors,
            aliasing_events: aliasing,
            cloud_mse,
            eve_capacity_bits: eve_capacity,
            eve_block_hits: hits,
            eve_bit_error_rate: ber,
            baseline_accuracy: net.accuracy(&baseline, &data.test)?,
            coded_accuracy: net.accuracy(&coded, &data.test)?,
            eve_accuracy: net.accuracy(&eve, &data.test)?,
            baseline_loss: base_fp.loss,
            coded_loss: coded_fp.loss,
        };
        log::info!(
            "round {t}: {:?}, {} blocks, accuracy baseline {:.3} coded {:.3} eve {:.3}",
            record.outcome,
            record.blocks,
            record.baseline_accuracy,
            record.coded_accuracy,
            record.eve_accuracy
        );
        records.push(record);
    }
    Ok(TrainingRun { data_source: data.source, params: q, initial_accuracy, records, ledgers, baseline, coded, eve })
}
