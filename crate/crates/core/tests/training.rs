use c3_core::embedding::{iwkr_forward_batch, bce_loss, train, MlpParams, ModelSelection, TrainingConfig};
use c3_core::rng;
use c3_core::LoggedSample;
use rand::Rng;

/// Two tight, nearby clusters of (context, arm) inputs: a fresh network maps
/// both to roughly the same place. One cluster is always rewarded, the other
/// never.
fn clusters(n: usize, seed: u64) -> Vec<LoggedSample> {
    let mut g = rng::stream(seed, "clusters");
    (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { 0.1 } else { -0.1 };
            let jitter = |g: &mut rng::Rng| c + g.random_range(-0.02..0.02);
            LoggedSample::new(
                vec![jitter(&mut g), jitter(&mut g)],
                vec![jitter(&mut g), jitter(&mut g)],
                f64::from(i % 2 == 0),
                0,
            )
        })
        .collect()
}

fn config() -> TrainingConfig {
    TrainingConfig {
        epochs: 10,
        batch_size: 16,
        learning_rate: 1e-2,
        sample_fraction: 1.0,
        ..TrainingConfig::default()
    }
}

fn init(seed: u64) -> MlpParams {
    MlpParams::init(&[4, 16, 2], &mut rng::stream(seed, "init")).unwrap()
}

fn batch_bce(params: &MlpParams, data: &[LoggedSample]) -> f64 {
    let (refs, queries) = data.split_at(data.len() / 5);
    let r: Vec<&LoggedSample> = refs.iter().collect();
    let q: Vec<&LoggedSample> = queries.iter().collect();
    let p = iwkr_forward_batch(params, &q, &r, &config()).unwrap();
    p.iter().zip(queries).map(|(&p, s)| bce_loss(p, s.reward)).sum::<f64>() / q.len() as f64
}

#[test]
fn separates_clusters() {
    let data = clusters(400, 1);
    let before = batch_bce(&init(1), &data);
    let report = train(&data, &config(), init(1)).unwrap();
    let after = batch_bce(&report.params, &data);
    assert!(after < 0.3, "BCE {before} -> {after}");
    assert!(report.epoch_losses.iter().all(|l| l.is_finite()));
    assert!(report.epoch_losses.last().unwrap() <= report.epoch_losses.first().unwrap());
}

#[test]
fn same_seed_same_trace() {
    let data = clusters(200, 2);
    let a = train(&data, &config(), init(2)).unwrap();
    let b = train(&data, &config(), init(2)).unwrap();
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert_eq!(a.params, b.params);
    let c = train(&data, &TrainingConfig { seed: 9, ..config() }, init(2)).unwrap();
    assert_ne!(a.epoch_losses, c.epoch_losses);
}

#[test]
fn best_validation_selection() {
    let data = clusters(300, 3);
    let cfg = TrainingConfig {
        validation_fraction: 0.2,
        selection: ModelSelection::BestValidation,
        ..config()
    };
    let report = train(&data, &cfg, init(3)).unwrap();
    assert_eq!(report.validation_losses.len(), cfg.epochs);
    let best = report
        .validation_losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(report.selected_epoch, Some(best));
}

#[test]
fn multi_interval_training_runs() {
    let mut data = clusters(300, 4);
    for (i, s) in data.iter_mut().enumerate() {
        s.interval = (i % 3) as i64;
    }
    let cfg = TrainingConfig { time_intervals: 3, ..config() };
    let report = train(&data, &cfg, init(4)).unwrap();
    assert!(report.epoch_losses.iter().all(|l| l.is_finite()));
    let bad = TrainingConfig { time_intervals: 2, ..config() };
    assert!(train(&data, &bad, init(4)).is_err());
}
