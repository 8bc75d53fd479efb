//! The five campaigns. Each returns its CSV tables in memory; writing and the
//! manifest live in [`crate::output`].

use std::path::Path;

use fblsec_core::analysis::{
    achievable_rate, eavesdropper_capacity, rate_distortion, round_secrecy_level, sigma2_window,
};
use fblsec_core::codec::{simulate_blocks, BlockCodec};
use fblsec_core::hfl::{load_or_synthesize, synthetic_mixture, DataSplit};
use fblsec_core::pipeline::{run_training, RoundOutcome, SystemConfig, TrainingRun};
use fblsec_core::rng::{pair_index, substream, Domain};
use fblsec_core::source::chunk;
use fblsec_core::{ChannelRealization, Error};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CampaignConfig, Scenario};
use crate::summary::emit_summary;

/// One CSV file held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: usize,
    pub bytes: Vec<u8>,
}

impl Table {
    pub fn from_rows<T: Serialize>(name: &str, rows: &[T]) -> Result<Table, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Error::Domain(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Domain(format!("csv: {e}")))?;
        let header = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
        let columns = String::from_utf8_lossy(header).split(',').map(str::to_string).collect();
        Ok(Table { name: format!("{name}.csv"), columns, rows: rows.len(), bytes })
    }
}

/// Monte Carlo points drawn, split into feasible and feedback-outage ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OutageCount {
    pub realizations: u64,
    pub feasible: u64,
    pub outage: u64,
}

impl OutageCount {
    fn add(&mut self, feasible: bool) {
        self.realizations += 1;
        if feasible {
            self.feasible += 1;
        } else {
            self.outage += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub scenario: Scenario,
    pub tables: Vec<Table>,
    pub outage: OutageCount,
    pub data_source: Option<&'static str>,
}

pub fn run_scenario(cfg: &CampaignConfig) -> Result<ScenarioOutput, Error> {
    match cfg.campaign.scenario {
        Scenario::RateVsBlocklength => rate_vs_blocklength(cfg),
        Scenario::SecrecyLevelVsRound => secrecy_level_vs_round(cfg),
        Scenario::LearningCurves => learning_curves(cfg),
        Scenario::PrivacyUtilitySweep => privacy_utility_sweep(cfg),
        Scenario::CodecValidation => codec_validation(cfg),
    }
}

/// The configured dataset, falling back to the synthetic mixture.
pub fn load_data(cfg: &CampaignConfig) -> DataSplit {
    let s = &cfg.system;
    match cfg.campaign.dataset.as_str() {
        "synthetic" => synthetic_mixture(cfg.campaign.seed, s.n_train, s.n_test, 784),
        dir => load_or_synthesize(Some(Path::new(dir)), cfg.campaign.seed, s.n_train, s.n_test),
    }
}

#[derive(Serialize)]
struct RateRow {
    realization: usize,
    round: usize,
    n_t: usize,
    h_mod2: f64,
    hfb_mod2: f64,
    g_mod2: f64,
    feasible: bool,
    rate_bits_per_use: f64,
    block_bits: f64,
    aliasing_budget: f64,
    psi1: f64,
    psi2: f64,
    eve_capacity_bits: f64,
}

#[derive(Serialize)]
struct RateMeanRow {
    n_t: usize,
    realizations: usize,
    feasible: usize,
    outage: usize,
    /// Mean over feasible realizations.
    mean_rate_feasible: f64,
    /// Mean with outage realizations counted as rate zero.
    mean_rate: f64,
}

fn rate_vs_blocklength(cfg: &CampaignConfig) -> Result<ScenarioOutput, Error> {
    let s = &cfg.system;
    let c = &cfg.campaign;
    let noise = s.noise()?;
    let per_realization: Vec<Vec<RateRow>> = (0..c.realizations)
        .into_par_iter()
        .map(|r| {
            let real = ChannelRealization::sample(&mut substream(c.seed, Domain::Realization, r as u64));
            let budget = real.budget(s.p, s.p_fb, &noise)?;
            let cap = eavesdropper_capacity(&budget, s.p);
            (2..=c.n_t_max)
                .map(|n_t| {
                    let rep = achievable_rate(&budget, s.tau, n_t)?;
                    Ok(RateRow {
                        realization: r,
                        round: 0,
                        n_t,
                        h_mod2: budget.h_mod2,
                        hfb_mod2: budget.hfb_mod2,
                        g_mod2: budget.g_mod2,
                        feasible: rep.feasible,
                        rate_bits_per_use: rep.rate_bits_per_use,
                        block_bits: rep.block_bits(),
                        aliasing_budget: rep.l,
                        psi1: rep.psi1,
                        psi2: rep.psi2,
                        eve_capacity_bits: cap,
                    })
                })
                .collect()
        })
        .collect::<Result<_, Error>>()?;
    let rows: Vec<RateRow> = per_realization.into_iter().flatten().collect();
    let mut outage = OutageCount::default();
    rows.iter().for_each(|r| outage.add(r.feasible));
    let means: Vec<RateMeanRow> = (2..=c.n_t_max)
        .map(|n_t| {
            let at: Vec<&RateRow> = rows.iter().filter(|r| r.n_t == n_t).collect();
            let ok: Vec<f64> = at.iter().filter(|r| r.feasible).map(|r| r.rate_bits_per_use).collect();
            let sum: f64 = ok.iter().sum();
            RateMeanRow {
                n_t,
                realizations: at.len(),
                feasible: ok.len(),
                outage: at.len() - ok.len(),
                mean_rate_feasible: if ok.is_empty() { 0.0 } else { sum / ok.len() as f64 },
                mean_rate: sum / at.len() as f64,
            }
        })
        .collect();
    Ok(ScenarioOutput {
        scenario: Scenario::RateVsBlocklength,
        tables: vec![
            Table::from_rows("rate_vs_blocklength", &rows)?,
            Table::from_rows("rate_vs_blocklength_mean", &means)?,
        ],
        outage,
        data_source: None,
    })
}

#[derive(Serialize)]
struct SecrecyRow {
    round: usize,
    realization: usize,
    sigma_w2_hat: f64,
    source_var_model: f64,
    rate_distortion_bits: f64,
    accounted_bits: f64,
    payload_bits: u64,
    g_mod2: f64,
    eve_capacity_bits: f64,
    feasible: bool,
    blocks: usize,
    delta_single_block: f64,
    delta_per_block: f64,
}

#[derive(Serialize)]
struct SecrecyMeanRow {
    round: usize,
    realizations: usize,
    feasible: usize,
    outage: usize,
    sigma_w2_hat: f64,
    accounted_bits: f64,
    mean_delta_single_block: f64,
    mean_delta_per_block: f64,
    /// Running minimum over rounds of `mean_delta_single_block`.
    delta_bound_single_block: f64,
    /// Running minimum over rounds of `mean_delta_per_block`.
    delta_bound_per_block: f64,
}

fn secrecy_level_vs_round(cfg: &CampaignConfig) -> Result<ScenarioOutput, Error> {
    let s = &cfg.system;
    let c = &cfg.campaign;
    let data = load_data(cfg);
    let run = run_training(s, &data, c.seed)?;
    let noise = s.noise()?;
    let q = run.params as f64;
    let mut rows = Vec::with_capacity(run.records.len() * c.realizations);
    let mut means = Vec::with_capacity(run.records.len());
    let mut outage = OutageCount::default();
    let (mut bound_single, mut bound_block) = (1.0f64, 1.0f64);
    for rec in &run.records {
        let rd = if rec.source_var_model > 0.0 { rate_distortion(s.distortion, rec.source_var_model)? } else { 0.0 };
        let accounted = (q * rd).ceil();
        let payload =
            if rec.payload_bits > 0 { rec.payload_bits } else { u64::from(rec.index_width) * run.params as u64 };
        let round_rows: Vec<SecrecyRow> = (0..c.realizations)
            .into_par_iter()
            .map(|r| {
                let idx = pair_index(rec.round as u64, r as u64);
                let real = ChannelRealization::sample(&mut substream(c.seed, Domain::Realization, idx));
                let budget = real.budget(s.p, s.p_fb, &noise)?;
                let cap = eavesdropper_capacity(&budget, s.p);
                let plan = match chunk(payload, &budget, s.tau, s.n_max) {
                    Ok(p) => Some(p),
                    Err(Error::Infeasible(_)) => None,
                    Err(e) => return Err(e),
                };
                let blocks = plan.as_ref().map_or(0, Vec::len);
                let delta_block = plan
                    .as_ref()
                    .map_or(1.0, |p| p.iter().map(|k| round_secrecy_level(cap, f64::from(k.bits))).fold(1.0, f64::min));
                Ok(SecrecyRow {
                    round: rec.round,
                    realization: r,
                    sigma_w2_hat: rec.sigma_w2_hat,
                    source_var_model: rec.source_var_model,
                    rate_distortion_bits: rd,
                    accounted_bits: accounted,
                    payload_bits: payload,
                    g_mod2: budget.g_mod2,
                    eve_capacity_bits: cap,
                    feasible: plan.is_some(),
                    blocks,
                    delta_single_block: round_secrecy_level(cap, accounted),
                    delta_per_block: delta_block,
                })
            })
            .collect::<Result<_, Error>>()?;
        let ok: Vec<&SecrecyRow> = round_rows.iter().filter(|r| r.feasible).collect();
        let mean = |f: fn(&SecrecyRow) -> f64| {
            if ok.is_empty() {
                1.0
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
            }
        };
        let (ms, mb) = (mean(|r| r.delta_single_block), mean(|r| r.delta_per_block));
        bound_single = bound_single.min(ms);
        bound_block = bound_block.min(mb);
        round_rows.iter().for_each(|r| outage.add(r.feasible));
        means.push(SecrecyMeanRow {
            round: rec.round,
            realizations: round_rows.len(),
            feasible: ok.len(),
            outage: round_rows.len() - ok.len(),
            sigma_w2_hat: rec.sigma_w2_hat,
            accounted_bits: accounted,
            mean_delta_single_block: ms,
            mean_delta_per_block: mb,
            delta_bound_single_block: bound_single,
            delta_bound_per_block: bound_block,
        });
        rows.extend(round_rows);
    }
    Ok(ScenarioOutput {
        scenario: Scenario::SecrecyLevelVsRound,
        tables: vec![
            Table::from_rows("secrecy_level_vs_round", &rows)?,
            Table::from_rows("secrecy_level_vs_round_mean", &means)?,
        ],
        outage,
        data_source: Some(data.source),
    })
}

#[derive(Serialize)]
struct LearningRow {
    round: usize,
    /// Index of the realization the round was sent on; empty when not sent.
    realization: Option<usize>,
    outcome: RoundOutcome,
    realizations_drawn: usize,
    outages: usize,
    baseline_accuracy: f64,
    coded_accuracy: f64,
    eve_accuracy: f64,
    baseline_loss: f64,
    coded_loss: f64,
    sigma_w2_hat: f64,
    source_var_model: f64,
    index_width: u32,
    payload_bits: u64,
    accounted_bits: u64,
    blocks: usize,
    channel_uses: usize,
    achievable_rate: f64,
    block_errors: usize,
    cloud_mse: f64,
    eve_capacity_bits: f64,
    eve_block_hits: usize,
    eve_bit_error_rate: f64,
    mi_round_bits: f64,
    mi_bound_bits: f64,
    sigma_lower: f64,
    sigma_upper: f64,
    sigma_feasible: bool,
    secrecy_delta_round: f64,
    secrecy_delta_bound: f64,
    secrecy_delta_single_block: f64,
}

fn training_outage(run: &TrainingRun, outage: &mut OutageCount) {
    for r in &run.records {
        outage.realizations += r.realizations_drawn as u64;
        outage.outage += r.outages as u64;
        outage.feasible += (r.realizations_drawn - r.outages) as u64;
    }
}

fn learning_curves(cfg: &CampaignConfig) -> Result<ScenarioOutput, Error> {
    let data = load_data(cfg);
    let run = run_training(&cfg.system, &data, cfg.campaign.seed)?;
    let rows: Vec<LearningRow> = run
        .records
        .iter()
        .zip(&run.ledgers)
        .map(|(r, l)| LearningRow {
            round: r.round,
            realization: (r.outcome == RoundOutcome::Sent).then(|| r.realizations_drawn - 1),
            outcome: r.outcome,
            realizations_drawn: r.realizations_drawn,
            outages: r.outages,
            baseline_accuracy: r.baseline_accuracy,
            coded_accuracy: r.coded_accuracy,
            eve_accuracy: r.eve_accuracy,
            baseline_loss: r.baseline_loss,
            coded_loss: r.coded_loss,
            sigma_w2_hat: r.sigma_w2_hat,
            source_var_model: r.source_var_model,
            index_width: r.index_width,
            payload_bits: r.payload_bits,
            accounted_bits: r.accounted_bits,
            blocks: r.blocks,
            channel_uses: r.channel_uses,
            achievable_rate: r.achievable_rate,
            block_errors: r.block_errors,
            cloud_mse: r.cloud_mse,
            eve_capacity_bits: r.eve_capacity_bits,
            eve_block_hits: r.eve_block_hits,
            eve_bit_error_rate: r.eve_bit_error_rate,
            mi_round_bits: l.mi_round_bits,
            mi_bound_bits: l.mi_bound_bits,
            sigma_lower: l.sigma_window.lower,
            sigma_upper: l.sigma_window.upper,
            sigma_feasible: l.sigma_feasible,
            secrecy_delta_round: l.secrecy_delta_round,
            secrecy_delta_bound: l.secrecy_delta_bound,
            secrecy_delta_single_block: l.secrecy_delta_single_block,
        })
        .collect();
    let summary = emit_summary(&run.ledgers).unwrap_or_default();
    let mut outage = OutageCount::default();
    training_outage(&run, &mut outage);
    Ok(ScenarioOutput {
        scenario: Scenario::LearningCurves,
        tables: vec![Table::from_rows("learning_curves", &rows)?, Table::from_rows("learning_summary", &summary)?],
        outage,
        data_source: Some(data.source),
    })
}

#[derive(Serialize)]
struct SweepRow {
    sigma2: f64,
    utility: f64,
    eps: f64,
    users: usize,
    s_ell: f64,
    sigma_w2_max: f64,
    sigma_lower: f64,
    sigma_upper: f64,
    window_nonempty: bool,
    feasible: bool,
    mi_bound_bits: f64,
    mi_average_bits: f64,
    utility_distortion: f64,
    utility_empirical: f64,
    baseline_accuracy: f64,
    coded_accuracy: f64,
    eve_accuracy: f64,
    outage_rounds: usize,
}

fn privacy_utility_sweep(cfg: &CampaignConfig) -> Result<ScenarioOutput, Error> {
    let c = &cfg.campaign;
    let data = load_data(cfg);
    let s_ell = data.train.len() as f64;
    let mut rows = Vec::new();
    let mut outage = OutageCount::default();
    for &sigma2 in &c.sweep_sigma2 {
        let sys = SystemConfig { sigma2, ..cfg.system.clone() };
        let run = run_training(&sys, &data, c.seed)?;
        training_outage(&run, &mut outage);
        let last = run.ledgers.last().ok_or_else(|| Error::Domain("no rounds to sweep".into()))?;
        let rec = run.records.last().ok_or_else(|| Error::Domain("no rounds to sweep".into()))?;
        for &utility in &c.sweep_utility {
            for &eps in &c.sweep_eps {
                let w = sigma2_window(eps, utility, sys.users, s_ell, last.sigma_w2_max);
                rows.push(SweepRow {
                    sigma2,
                    utility,
                    eps,
                    users: sys.users,
                    s_ell,
                    sigma_w2_max: last.sigma_w2_max,
                    sigma_lower: w.lower,
                    sigma_upper: w.upper,
                    window_nonempty: w.nonempty,
                    feasible: w.contains(sigma2),
                    mi_bound_bits: last.mi_bound_bits,
                    mi_average_bits: last.mi_average_bits,
                    utility_distortion: last.utility_distortion,
                    utility_empirical: last.utility_empirical,
                    baseline_accuracy: rec.baseline_accuracy,
                    coded_accuracy: rec.coded_accuracy,
                    eve_accuracy: rec.eve_accuracy,
                    outage_rounds: run.outage_rounds(),
                });
            }
        }
    }
    Ok(ScenarioOutput {
        scenario: Scenario::PrivacyUtilitySweep,
        tables: vec![Table::from_rows("privacy_utility_sweep", &rows)?],
        outage,
        data_source: Some(data.source),
    })
}

#[derive(Serialize)]
struct ValidationRow {
    realization: usize,
    round: usize,
    n_t: usize,
    feasible: bool,
    bits: u32,
    /// Achievable rate of the plan.
    rate: f64,
    /// Payload bits per channel use actually carried.
    payload_rate: f64,
    tau: f64,
    blocks: u64,
    block_errors: u64,
    empirical_err: f64,
    /// Fraction of blocks with at least one modulo fold.
    aliasing_rate: f64,
    aliasing_events: u64,
}

fn codec_validation(cfg: &CampaignConfig) -> Result<ScenarioOutput, Error> {
    let s = &cfg.system;
    let c = &cfg.campaign;
    let noise = s.noise()?;
    let real = ChannelRealization::unit();
    let budget = real.budget(s.p, s.p_fb, &noise)?;
    let mut rows = Vec::new();
    let mut outage = OutageCount::default();
    for (i, &n_t) in c.validation_n_t.iter().enumerate() {
        let rep = achievable_rate(&budget, c.validation_tau, n_t)?;
        let per_sub = ((rep.block_bits() / 2.0).floor().max(0.0) as u32).min(fblsec_core::codec::MAX_SUBCHANNEL_BITS);
        let codec = if rep.feasible && per_sub > 0 {
            match BlockCodec::for_payload(real, noise, s.p, s.p_fb, c.validation_tau, n_t, 2 * per_sub) {
                Ok(codec) => Some(codec),
                Err(Error::Infeasible(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        outage.add(codec.is_some());
        let row = match codec {
            Some(codec) => {
                let st = simulate_blocks(&codec, c.blocks, c.seed, i as u64)?;
                ValidationRow {
                    realization: 0,
                    round: 0,
                    n_t,
                    feasible: true,
                    bits: codec.payload_bits(),
                    rate: rep.rate_bits_per_use,
                    payload_rate: f64::from(codec.payload_bits()) / n_t as f64,
                    tau: c.validation_tau,
                    blocks: st.blocks,
                    block_errors: st.block_errors,
                    empirical_err: st.block_error_rate(),
                    aliasing_rate: st.aliased_block_rate(),
                    aliasing_events: st.aliasing_events,
                }
            }
            None => ValidationRow {
                realization: 0,
                round: 0,
                n_t,
                feasible: false,
                bits: 0,
                rate: rep.rate_bits_per_use,
                payload_rate: 0.0,
                tau: c.validation_tau,
                blocks: 0,
                block_errors: 0,
                empirical_err: 0.0,
                aliasing_rate: 0.0,
                aliasing_events: 0,
            },
        };
        rows.push(row);
    }
    Ok(ScenarioOutput {
        scenario: Scenario::CodecValidation,
        tables: vec![Table::from_rows("codec_validation", &rows)?],
        outage,
        data_source: None,
    })
}
