use fblsec_core::hfl::{synthetic_mixture, DataSplit, Mlp};
use fblsec_core::pipeline::{run_training, RoundOutcome, SystemConfig};
use fblsec_core::rng::{substream, Domain};
use fblsec_core::stats::moving_average;

fn small_config() -> SystemConfig {
    SystemConfig { users: 4, hidden: 6, rounds: 8, n_train: 200, n_test: 200, ..SystemConfig::default() }
}

fn small_data(seed: u64) -> DataSplit {
    synthetic_mixture(seed, 200, 200, 24)
}

#[test]
fn near_noiseless_run_tracks_centralized_descent() {
    let cfg = SystemConfig {
        sigma2: 0.0,
        distortion: 1e-14,
        sigma1_2: 1e-10,
        sigma2_2: 1e-10,
        sigmae_2: 1e-10,
        ..small_config()
    };
    let data = small_data(5);
    let seed = 17;
    let net = Mlp { input: 24, hidden: cfg.hidden, output: 10 };
    let mut m = net.init(&mut substream(seed, Domain::ModelInit, 0));
    for t in 1..=cfg.rounds {
        let g = net.loss_gradient(&m, &data.train, cfg.lambda_reg).unwrap();
        m.m.iter_mut().zip(&g).for_each(|(w, d)| *w -= cfg.mu * d);
        let run = run_training(&SystemConfig { rounds: t, ..cfg.clone() }, &data, seed).unwrap();
        assert_eq!(run.records[t - 1].outcome, RoundOutcome::Sent);
        assert_eq!(run.records[t - 1].block_errors, 0);
        let worst = run.coded.m.iter().zip(&m.m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "round {t}: deviation {worst}");
        let base = run.baseline.m.iter().zip(&m.m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(base < 1e-9, "round {t}: baseline deviation {base}");
    }
}

#[test]
fn same_seed_same_run() {
    let cfg = small_config();
    let a = run_training(&cfg, &small_data(1), 3).unwrap();
    let b = run_training(&cfg, &small_data(1), 3).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.ledgers, b.ledgers);
    assert_eq!(a.coded, b.coded);
    let c = run_training(&cfg, &small_data(1), 4).unwrap();
    assert_ne!(a.coded, c.coded);
}

#[test]
fn permanent_outage_skips_every_round() {
    // A feedback SNR below any aliasing budget makes every realization infeasible.
    let cfg = SystemConfig { p_fb: 1e-3, max_redraws: 3, rounds: 3, ..small_config() };
    let run = run_training(&cfg, &small_data(2), 1).unwrap();
    for r in &run.records {
        assert_eq!(r.outcome, RoundOutcome::Outage);
        assert_eq!(r.realizations_drawn, 4);
        assert_eq!(r.outages, 4);
        assert_eq!(r.blocks, 0);
    }
    assert_eq!(run.outage_rounds(), 3);
    let net = Mlp { input: 24, hidden: cfg.hidden, output: 10 };
    let init = net.init(&mut substream(1, Domain::ModelInit, 0));
    assert_eq!(run.coded.m, init.m);
    assert_eq!(run.eve.m, init.m);
    assert_ne!(run.baseline.m, init.m);
    for l in &run.ledgers {
        assert_eq!(l.secrecy_delta_round, 1.0);
    }
}

#[test]
fn outage_accounting_adds_up() {
    let cfg = SystemConfig { rounds: 12, ..small_config() };
    let run = run_training(&cfg, &small_data(3), 9).unwrap();
    for r in &run.records {
        let used = usize::from(r.outcome == RoundOutcome::Sent);
        assert_eq!(r.outages + used, r.realizations_drawn);
        if r.outcome == RoundOutcome::Sent {
            assert!(r.blocks > 0 && r.payload_bits > 0);
            assert_eq!(r.payload_bits, (r.index_width as usize * run.params) as u64);
        }
    }
}

#[test]
fn ldp_utility_identity() {
    let cfg = SystemConfig { rounds: 10, ..small_config() };
    let run = run_training(&cfg, &small_data(4), 2).unwrap();
    let last = run.ledgers.last().unwrap();
    let target = cfg.users as f64 * cfg.sigma2;
    assert_eq!(last.utility_distortion, target);
    assert!((last.utility_empirical - target).abs() / target < 0.03, "{}", last.utility_empirical);
}

#[test]
fn cloud_distortion_matches_quantizer() {
    let cfg = SystemConfig { rounds: 6, ..small_config() };
    let run = run_training(&cfg, &small_data(6), 8).unwrap();
    for r in run.records.iter().filter(|r| r.outcome == RoundOutcome::Sent && r.block_errors == 0) {
        // Dithered cells give exactly uniform error of variance D per coordinate.
        let se = cfg.distortion * (0.8f64 / run.params as f64).sqrt();
        assert!((r.cloud_mse - cfg.distortion).abs() < 5.0 * se, "round {}: {}", r.round, r.cloud_mse);
        assert_eq!(r.clipped, 0);
    }
}

#[test]
fn gradient_variance_decays_after_warmup() {
    let cfg = SystemConfig::default();
    let data = synthetic_mixture(7, cfg.n_train, cfg.n_test, 784);
    let run = run_training(&cfg, &data, 5).unwrap();
    let sw: Vec<f64> = run.records.iter().map(|r| r.sigma_w2_hat).collect();
    let ma = moving_average(&sw, 5);
    let peak = ma.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
    let tail = &ma[peak..];
    // Kendall rank correlation of the post-peak average against the round index.
    let n = tail.len();
    let concordant: i64 =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (tail[j] - tail[i]).signum() as i64).sum();
    let kendall = concordant as f64 / (n * (n - 1) / 2) as f64;
    assert!(peak <= 10, "warmup peak at round {}", peak + 1);
    assert!(kendall < -0.3, "kendall {kendall} over {ma:?}");
    assert!(*tail.last().unwrap() < 0.1 * tail[0], "{ma:?}");
}
