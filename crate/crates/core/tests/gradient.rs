//! Analytic gradients of the training loss against central finite
//! differences.

use c3_core::embedding::loss::bin_of;
use c3_core::embedding::{iwkr_forward_batch, loss_and_grad, MlpParams, TrainingConfig};
use c3_core::rng;
use c3_core::LoggedSample;
use rand::Rng;

const H: f64 = 1e-5;
const REL: f64 = 1e-4;
const ABS: f64 = 1e-6;

struct Instance {
    params: MlpParams,
    queries: Vec<LoggedSample>,
    refs: Vec<LoggedSample>,
    config: TrainingConfig,
}

fn random_instance(seed: u64) -> Instance {
    let mut g = rng::stream(seed, "gradient-instance");
    let input = g.random_range(2..=6);
    let ctx = g.random_range(1..input);
    let hidden = g.random_range(2..=8);
    let out = g.random_range(1..=2);
    let params = MlpParams::init(&[input, hidden, out], &mut g).unwrap();
    let intervals = g.random_range(1..=2);
    let row = |g: &mut rng::Rng| {
        let x: Vec<f64> = (0..input).map(|_| g.random_range(-1.0..1.0)).collect();
        LoggedSample::new(
            x[..ctx].to_vec(),
            x[ctx..].to_vec(),
            f64::from(g.random::<bool>()),
            g.random_range(0..intervals) as i64,
        )
    };
    let refs: Vec<LoggedSample> = (0..g.random_range(3..=10)).map(|_| row(&mut g)).collect();
    let queries: Vec<LoggedSample> = (0..g.random_range(1..=16)).map(|_| row(&mut g)).collect();
    let config = TrainingConfig {
        sigma: g.random_range(0.5..2.0),
        lambda_ece: [0.0, 2.0, 5.0][g.random_range(0..3)],
        ece_bins: 5,
        time_intervals: intervals,
        weight_gradient: true,
        ..TrainingConfig::default()
    };
    Instance { params, queries, refs, config }
}

fn refs_of(v: &[LoggedSample]) -> Vec<&LoggedSample> {
    v.iter().collect()
}

/// Signature of the piecewise structure of the loss: every prediction's bin,
/// and the sign of each bin's calibration gap. The loss is smooth while this
/// stays fixed.
fn regime(inst: &Instance, params: &MlpParams) -> (Vec<usize>, Vec<i8>) {
    let q = refs_of(&inst.queries);
    let r = refs_of(&inst.refs);
    let p = iwkr_forward_batch(params, &q, &r, &inst.config).unwrap();
    let bins = inst.config.ece_bins;
    let ids: Vec<usize> = p.iter().map(|&x| bin_of(x, bins)).collect();
    let mut gap = vec![0.0; bins];
    for ((&b, &x), s) in ids.iter().zip(&p).zip(&inst.queries) {
        gap[b] += x - s.reward;
    }
    let signs = gap.iter().map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 }).collect();
    (ids, signs)
}

fn with_param(params: &MlpParams, i: usize, delta: f64) -> MlpParams {
    let mut p = params.clone();
    *p.iter_mut().nth(i).unwrap() += delta;
    p
}

/// (coordinates checked, coordinates skipped at kinks, worst mismatch)
fn check(inst: &Instance) -> (usize, usize, Vec<String>) {
    let q = refs_of(&inst.queries);
    let r = refs_of(&inst.refs);
    let (_, grad) = loss_and_grad(&inst.params, &q, &r, &inst.config).unwrap();
    let analytic: Vec<f64> = grad.iter().copied().collect();
    let base = regime(inst, &inst.params);
    let (mut checked, mut skipped) = (0, 0);
    let mut failures = Vec::new();
    for (i, &a) in analytic.iter().enumerate() {
        let plus = with_param(&inst.params, i, H);
        let minus = with_param(&inst.params, i, -H);
        if regime(inst, &plus) != base || regime(inst, &minus) != base {
            skipped += 1;
            continue;
        }
        let lp = loss_and_grad(&plus, &q, &r, &inst.config).unwrap().0;
        let lm = loss_and_grad(&minus, &q, &r, &inst.config).unwrap().0;
        let fd = (lp - lm) / (2.0 * H);
        checked += 1;
        let err = (a - fd).abs();
        if err > ABS && err > REL * a.abs().max(fd.abs()) {
            failures.push(format!("coord {i}: analytic {a:e}, fd {fd:e}"));
        }
    }
    (checked, skipped, failures)
}

#[test]
fn gradients_match_finite_differences() {
    let mut instances = 0;
    let mut total_skipped = 0;
    let mut total_checked = 0;
    let mut largest: f64 = 0.0;
    for seed in 0..30 {
        let inst = random_instance(seed);
        let (checked, skipped, failures) = check(&inst);
        let q = refs_of(&inst.queries);
        let r = refs_of(&inst.refs);
        let g = loss_and_grad(&inst.params, &q, &r, &inst.config).unwrap().1;
        largest = g.iter().fold(largest, |m, v| m.max(v.abs()));
        assert!(failures.is_empty(), "seed {seed}: {failures:?}");
        total_checked += checked;
        total_skipped += skipped;
        instances += 1;
    }
    assert!(instances >= 20);
    assert!(largest > 1e-2, "gradients are all tiny: {largest}");
    assert!(total_skipped * 100 < total_checked, "{total_skipped} of {total_checked} skipped");
}
