//! Self-supervised training of the embedding model through IWKR.
//!
//! Each epoch subsamples the data, splits it into references and queries,
//! and for every mini-batch of queries: embeds the references, computes
//! their importance weights, predicts each query's reward by IWKR over the
//! references from the query's own time interval, and takes an Adam step on
//! `mean BCE + lambda * ECE`.
//!
//! Importance weights are held constant inside a step (recomputed from the
//! fresh embeddings every batch) unless `weight_gradient` is set.
//! Identical inputs are embedded once per batch, which keeps the one-hot
//! studies cheap; the arithmetic is the same as embedding every row.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::data::LoggedSample;
use crate::embedding::loss::{bce_grad, bce_loss, ece_grad, ece_loss};
use crate::embedding::mlp::{MlpParams, Trace};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::rng;

/// How the final parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelSelection {
    /// Parameters after the last epoch.
    #[default]
    FinalEpoch,
    /// Parameters with the lowest validation loss (needs `validation_fraction`).
    BestValidation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub lambda_ece: f64,
    pub ece_bins: usize,
    /// Share of each epoch's subsample used as references.
    pub ref_fraction: f64,
    /// Share of the dataset drawn each epoch.
    pub sample_fraction: f64,
    /// Number of time intervals; every sample's interval is in `[0, T)`.
    pub time_intervals: usize,
    pub sigma: f64,
    pub truncation_radius: Option<f64>,
    pub seed: u64,
    /// Held-out share of the dataset for validation losses; 0 disables.
    pub validation_fraction: f64,
    pub selection: ModelSelection,
    /// Differentiate through the importance weights too.
    pub weight_gradient: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            batch_size: 16,
            learning_rate: 1e-3,
            lr_decay: 0.99,
            lambda_ece: 5.0,
            ece_bins: 5,
            ref_fraction: 0.2,
            sample_fraction: 0.5,
            time_intervals: 1,
            sigma: 1.0,
            truncation_radius: None,
            seed: 0,
            validation_fraction: 0.0,
            selection: ModelSelection::FinalEpoch,
            weight_gradient: false,
        }
    }
}

impl TrainingConfig {
    pub fn kernel(&self) -> Result<KernelConfig> {
        let k = KernelConfig {
            sigma: self.sigma,
            truncation_radius: self.truncation_radius,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.ece_bins == 0 {
            return bad("ece_bins must be at least 1".into());
        }
        if !(self.ref_fraction > 0.0 && self.ref_fraction < 1.0) {
            return bad(format!("ref_fraction must be in (0, 1), got {}", self.ref_fraction));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad(format!(
                "sample_fraction must be in (0, 1], got {}",
                self.sample_fraction
            ));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        if self.time_intervals == 0 {
            return bad("time_intervals must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return bad(format!("lr_decay must be positive, got {}", self.lr_decay));
        }
        if !(self.lambda_ece.is_finite() && self.lambda_ece >= 0.0) {
            return bad(format!("lambda_ece must be non-negative, got {}", self.lambda_ece));
        }
        if self.selection == ModelSelection::BestValidation && self.validation_fraction == 0.0 {
            return bad("best-validation selection needs validation_fraction > 0".into());
        }
        Ok(())
    }
}

/// References and queries with identical inputs collapsed.
struct Plan {
    inputs: Vec<Vec<f64>>,
    ref_unique: Vec<usize>,
    ref_reward: Vec<f64>,
    /// Distinct unique ids among references, with multiplicities.
    ref_groups: Vec<(usize, f64)>,
    /// Position of each reference's unique id in `ref_groups`.
    ref_group_of: Vec<usize>,
    by_interval: HashMap<i64, Vec<usize>>,
    ref_mean_reward: f64,
    query_unique: Vec<usize>,
    query_reward: Vec<f64>,
    query_interval: Vec<i64>,
}

impl Plan {
    fn new(queries: &[&LoggedSample], refs: &[&LoggedSample]) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut inputs = Vec::new();
        let mut intern = |s: &LoggedSample| -> usize {
            let x = s.input();
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                inputs.push(x);
                inputs.len() - 1
            })
        };
        let ref_unique: Vec<usize> = refs.iter().map(|s| intern(s)).collect();
        let query_unique: Vec<usize> = queries.iter().map(|s| intern(s)).collect();

        let mut group_pos: HashMap<usize, usize> = HashMap::new();
        let mut ref_groups: Vec<(usize, f64)> = Vec::new();
        let ref_group_of = ref_unique
            .iter()
            .map(|&u| {
                let pos = *group_pos.entry(u).or_insert_with(|| {
                    ref_groups.push((u, 0.0));
                    ref_groups.len() - 1
                });
                ref_groups[pos].1 += 1.0;
                pos
            })
            .collect();

        let mut by_interval: HashMap<i64, Vec<usize>> = HashMap::new();
        for (j, s) in refs.iter().enumerate() {
            by_interval.entry(s.interval).or_default().push(j);
        }
        let ref_reward: Vec<f64> = refs.iter().map(|s| s.reward).collect();
        let ref_mean_reward = if refs.is_empty() {
            0.5
        } else {
            ref_reward.iter().sum::<f64>() / refs.len() as f64
        };
        Self {
            inputs,
            ref_unique,
            ref_reward,
            ref_groups,
            ref_group_of,
            by_interval,
            ref_mean_reward,
            query_unique,
            query_reward: queries.iter().map(|s| s.reward).collect(),
            query_interval: queries.iter().map(|s| s.interval).collect(),
        }
    }
}

struct BatchResult {
    loss: f64,
    predictions: Vec<f64>,
    grad: Option<MlpParams>,
}

/// Forward (and optionally backward) pass over the queries `batch` of `plan`.
fn evaluate(
    params: &MlpParams,
    plan: &Plan,
    batch: &[usize],
    kernel: &KernelConfig,
    config: &TrainingConfig,
    with_grad: bool,
) -> Result<BatchResult> {
    let n_unique = plan.inputs.len();
    let mut traces: Vec<Option<Trace>> = vec![None; n_unique];
    let embed = |u: usize, traces: &mut Vec<Option<Trace>>| -> Result<()> {
        if traces[u].is_none() {
            traces[u] = Some(params.forward_trace(&plan.inputs[u])?);
        }
        Ok(())
    };
    for &(u, _) in &plan.ref_groups {
        embed(u, &mut traces)?;
    }
    for &q in batch {
        embed(plan.query_unique[q], &mut traces)?;
    }
    let emb = |u: usize| traces[u].as_ref().expect("embedded above").output();

    // Accumulators over distinct reference embeddings, with multiplicity.
    let groups = &plan.ref_groups;
    let mut group_sum = vec![0.0; groups.len()];
    for a in 0..groups.len() {
        group_sum[a] += groups[a].1;
        let sa = emb(groups[a].0);
        for b in (a + 1)..groups.len() {
            let k = kernel.eval(sa, emb(groups[b].0));
            group_sum[a] += groups[b].1 * k;
            group_sum[b] += groups[a].1 * k;
        }
    }
    let g_ref = |j: usize| group_sum[plan.ref_group_of[j]];

    let inv_s2 = 1.0 / (kernel.sigma * kernel.sigma);
    let empty: Vec<usize> = Vec::new();
    let nq = batch.len();
    let mut preds = Vec::with_capacity(nq);
    // Per query: (masked refs, kernel values, total weighted mass) or fallback.
    let mut local: Vec<Option<(Vec<f64>, f64)>> = Vec::with_capacity(nq);
    for &q in batch {
        let qe = emb(plan.query_unique[q]);
        let refs = plan.by_interval.get(&plan.query_interval[q]).unwrap_or(&empty);
        let kv: Vec<f64> = refs
            .iter()
            .map(|&j| kernel.eval(qe, emb(plan.ref_unique[j])))
            .collect();
        let (mut num, mut den) = (0.0, 0.0);
        for (&j, &k) in refs.iter().zip(&kv) {
            let a = k / g_ref(j);
            num += a * plan.ref_reward[j];
            den += a;
        }
        if den > 0.0 {
            preds.push(num / den);
            local.push(Some((kv, den)));
        } else {
            preds.push(plan.ref_mean_reward);
            local.push(None);
        }
    }

    let rewards: Vec<f64> = batch.iter().map(|&q| plan.query_reward[q]).collect();
    let bce: f64 = preds
        .iter()
        .zip(&rewards)
        .map(|(&p, &r)| bce_loss(p, r))
        .sum::<f64>()
        / nq as f64;
    let ece = if config.lambda_ece > 0.0 {
        ece_loss(&preds, &rewards, config.ece_bins)?
    } else {
        0.0
    };
    let loss = bce + config.lambda_ece * ece;
    if !with_grad {
        return Ok(BatchResult {
            loss,
            predictions: preds,
            grad: None,
        });
    }

    let ece_g = if config.lambda_ece > 0.0 {
        ece_grad(&preds, &rewards, config.ece_bins)?
    } else {
        vec![0.0; nq]
    };
    let dim = params.output_dim();
    let mut emb_grad: Vec<Vec<f64>> = vec![Vec::new(); n_unique];
    let add = |u: usize, v: &[f64], scale: f64, emb_grad: &mut Vec<Vec<f64>>| {
        let g = &mut emb_grad[u];
        if g.is_empty() {
            g.resize(dim, 0.0);
        }
        for (a, b) in g.iter_mut().zip(v) {
            *a += scale * b;
        }
    };
    let mut w_grad = vec![0.0; groups.len()];
    let mut diff = vec![0.0; dim];

    for (bi, &q) in batch.iter().enumerate() {
        let Some((kv, den)) = &local[bi] else { continue };
        let p = preds[bi];
        let dp = bce_grad(p, rewards[bi]) / nq as f64 + config.lambda_ece * ece_g[bi];
        if dp == 0.0 {
            continue;
        }
        let qu = plan.query_unique[q];
        let qe = emb(qu).to_vec();
        let refs = &plan.by_interval[&plan.query_interval[q]];
        for (&j, &k) in refs.iter().zip(kv) {
            if k == 0.0 {
                continue;
            }
            let gj = g_ref(j);
            let a = k / gj;
            // d loss / d a_ij
            let ga = dp * (plan.ref_reward[j] - p) / den;
            let su = plan.ref_unique[j];
            let se = emb(su);
            for (d, (x, y)) in diff.iter_mut().zip(se.iter().zip(&qe)) {
                *d = x - y;
            }
            // d a / d q = a (s - q) / sigma^2, d a / d s = -that
            let c = ga * a * inv_s2;
            add(qu, &diff, c, &mut emb_grad);
            add(su, &diff, -c, &mut emb_grad);
            if config.weight_gradient {
                // a = k * w, w = 1 / g  =>  d a / d g = -k / g^2
                w_grad[plan.ref_group_of[j]] += ga * (-k / (gj * gj));
            }
        }
    }

    if config.weight_gradient {
        // g_a = m_a + sum_{b != a} m_b k(s_a, s_b)
        for a in 0..groups.len() {
            if w_grad[a] == 0.0 {
                continue;
            }
            let ua = groups[a].0;
            let sa = emb(ua).to_vec();
            for b in 0..groups.len() {
                if b == a {
                    continue;
                }
                let ub = groups[b].0;
                let sb = emb(ub);
                let k = kernel.eval(&sa, sb);
                if k == 0.0 {
                    continue;
                }
                for (d, (x, y)) in diff.iter_mut().zip(sb.iter().zip(&sa)) {
                    *d = x - y;
                }
                let c = w_grad[a] * groups[b].1 * k * inv_s2;
                add(ua, &diff, c, &mut emb_grad);
                add(ub, &diff, -c, &mut emb_grad);
            }
        }
    }

    let mut grad = params.zeros_like();
    for (u, g) in emb_grad.iter().enumerate() {
        if g.is_empty() || g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let trace = traces[u].as_ref().expect("only embedded rows get gradients");
        params.backward(trace, g, &mut grad);
    }
    Ok(BatchResult {
        loss,
        predictions: preds,
        grad: Some(grad),
    })
}

fn check_inputs(params: &MlpParams, rows: &[&LoggedSample]) -> Result<()> {
    for s in rows {
        let d = s.context.len() + s.arm.len();
        if d != params.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: params.input_dim(),
                found: d,
            });
        }
        crate::kernel::check_reward(s.reward)?;
    }
    Ok(())
}

/// IWKR predictions for `queries` against `refs` under the embedding `params`.
///
/// Queries whose interval has no references (or no kernel mass) get the
/// mean reward of the references.
pub fn iwkr_forward_batch(
    params: &MlpParams,
    queries: &[&LoggedSample],
    refs: &[&LoggedSample],
    config: &TrainingConfig,
) -> Result<Vec<f64>> {
    if refs.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    check_inputs(params, queries)?;
    check_inputs(params, refs)?;
    if queries.is_empty() {
        return Ok(Vec::new());
    }
    let plan = Plan::new(queries, refs);
    let all: Vec<usize> = (0..queries.len()).collect();
    let kernel = config.kernel()?;
    Ok(evaluate(params, &plan, &all, &kernel, config, false)?.predictions)
}

/// Loss `mean BCE + lambda * ECE` over `queries` and its gradient.
pub fn loss_and_grad(
    params: &MlpParams,
    queries: &[&LoggedSample],
    refs: &[&LoggedSample],
    config: &TrainingConfig,
) -> Result<(f64, MlpParams)> {
    if refs.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    if queries.is_empty() {
        return Err(Error::Empty("query batch"));
    }
    check_inputs(params, queries)?;
    check_inputs(params, refs)?;
    let plan = Plan::new(queries, refs);
    let all: Vec<usize> = (0..queries.len()).collect();
    let kernel = config.kernel()?;
    let r = evaluate(params, &plan, &all, &kernel, config, true)?;
    if !r.loss.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            batch: 0,
            loss: r.loss,
        });
    }
    Ok((r.loss, r.grad.expect("requested")))
}

/// Adam with the usual defaults.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grad: &MlpParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: MlpParams,
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Validation loss per epoch, when a validation split is configured.
    pub validation_losses: Vec<f64>,
    /// Epoch whose parameters were returned (`None` when `epochs == 0`).
    pub selected_epoch: Option<usize>,
}

fn take_fraction(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

/// Train the embedding model on `dataset` starting from `init`.
pub fn train(dataset: &[LoggedSample], config: &TrainingConfig, init: MlpParams) -> Result<TrainReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let rows: Vec<&LoggedSample> = dataset.iter().collect();
    check_inputs(&init, &rows)?;
    if let Some(s) = dataset
        .iter()
        .find(|s| s.interval < 0 || s.interval >= config.time_intervals as i64)
    {
        return Err(Error::InvalidConfig(format!(
            "interval {} outside [0, {})",
            s.interval, config.time_intervals
        )));
    }
    let kernel = config.kernel()?;
    let mut rng = rng::stream(config.seed, "training");

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = take_fraction(dataset.len(), config.validation_fraction);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_rows: Vec<&LoggedSample> = val_idx.iter().map(|&i| &dataset[i]).collect();
    let mut train_idx = train_idx.to_vec();
    if train_idx.len() < 2 {
        return Err(Error::Empty("training split (need at least two rows)"));
    }

    let mut params = init;
    let mut adam = Adam::new(params.num_params());
    let mut report = TrainReport {
        params: params.clone(),
        epoch_losses: Vec::new(),
        validation_losses: Vec::new(),
        selected_epoch: None,
    };
    let mut best_val = f64::INFINITY;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate * config.lr_decay.powi(epoch as i32);
        train_idx.shuffle(&mut rng);
        let m = take_fraction(train_idx.len(), config.sample_fraction).max(2);
        let sub = &train_idx[..m];
        let n_ref = take_fraction(m, config.ref_fraction).clamp(1, m - 1);
        let refs: Vec<&LoggedSample> = sub[..n_ref].iter().map(|&i| &dataset[i]).collect();
        let queries: Vec<&LoggedSample> = sub[n_ref..].iter().map(|&i| &dataset[i]).collect();
        let plan = Plan::new(&queries, &refs);

        let mut total = 0.0;
        let mut batches = 0;
        let q_order: Vec<usize> = (0..queries.len()).collect();
        for (bi, batch) in q_order.chunks(config.batch_size).enumerate() {
            let r = evaluate(&params, &plan, batch, &kernel, config, true)?;
            if !r.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss: r.loss,
                });
            }
            adam.step(&mut params, r.grad.as_ref().expect("requested"), lr);
            total += r.loss;
            batches += 1;
        }
        report.epoch_losses.push(total / batches as f64);

        if !val_rows.is_empty() {
            let vplan = Plan::new(&val_rows, &refs);
            let all: Vec<usize> = (0..val_rows.len()).collect();
            let v = evaluate(&params, &vplan, &all, &kernel, config, false)?.loss;
            report.validation_losses.push(v);
            if config.selection == ModelSelection::BestValidation && v < best_val {
                best_val = v;
                report.params = params.clone();
                report.selected_epoch = Some(epoch);
            }
        }
        if config.selection == ModelSelection::FinalEpoch {
            report.selected_epoch = Some(epoch);
        }
    }
    if config.selection == ModelSelection::FinalEpoch {
        report.params = params;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ReferenceStore;
    use rand::Rng;

    fn sample(ctx: &[f64], arm: &[f64], r: f64, t: i64) -> LoggedSample {
        LoggedSample::new(ctx.to_vec(), arm.to_vec(), r, t)
    }

    fn random_rows(g: &mut crate::rng::Rng, n: usize, dc: usize, da: usize, t: i64) -> Vec<LoggedSample> {
        (0..n)
            .map(|_| {
                let c: Vec<f64> = (0..dc).map(|_| g.random_range(-1.0..1.0)).collect();
                let a: Vec<f64> = (0..da).map(|_| g.random_range(-1.0..1.0)).collect();
                sample(&c, &a, f64::from(g.random::<bool>() as u8), g.random_range(0..t))
            })
            .collect()
    }

    #[test]
    fn single_ref_per_interval() {
        let mut g = rng::stream(1, "t");
        let p = MlpParams::init(&[2, 4, 2], &mut g).unwrap();
        let refs = [sample(&[0.1], &[1.0], 1.0, 0), sample(&[0.7], &[0.0], 0.0, 1)];
        let queries = [sample(&[0.1], &[1.0], 0.0, 0), sample(&[0.7], &[0.0], 1.0, 1)];
        let rr: Vec<&LoggedSample> = refs.iter().collect();
        let qq: Vec<&LoggedSample> = queries.iter().collect();
        let cfg = TrainingConfig::default();
        assert_eq!(iwkr_forward_batch(&p, &qq, &rr, &cfg).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn empty_interval_falls_back_to_mean_reward() {
        let p = MlpParams::zeros(&[2, 2]).unwrap();
        let refs = [sample(&[0.1], &[1.0], 1.0, 0), sample(&[0.2], &[1.0], 0.0, 0), sample(&[0.3], &[1.0], 1.0, 0)];
        let q = [sample(&[0.1], &[1.0], 0.0, 5)];
        let rr: Vec<&LoggedSample> = refs.iter().collect();
        let qq: Vec<&LoggedSample> = q.iter().collect();
        let out = iwkr_forward_batch(&p, &qq, &rr, &TrainingConfig::default()).unwrap();
        assert!((out[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(iwkr_forward_batch(&p, &qq, &[], &TrainingConfig::default()).is_err());
    }

    /// Composition oracle: embed with the MLP, build a store, query it.
    #[test]
    fn batch_matches_store_composition() {
        let mut g = rng::stream(5, "t");
        let p = MlpParams::init(&[3, 6, 2], &mut g).unwrap();
        let refs = random_rows(&mut g, 40, 1, 2, 3);
        let queries = random_rows(&mut g, 12, 1, 2, 3);
        let cfg = TrainingConfig { sigma: 0.8, ..Default::default() };
        let rr: Vec<&LoggedSample> = refs.iter().collect();
        let qq: Vec<&LoggedSample> = queries.iter().collect();
        let got = iwkr_forward_batch(&p, &qq, &rr, &cfg).unwrap();

        let emb: Vec<f64> = refs.iter().flat_map(|s| p.forward(&s.input()).unwrap()).collect();
        let store = ReferenceStore::from_samples(
            2,
            KernelConfig::new(0.8).unwrap(),
            emb,
            refs.iter().map(|s| s.reward).collect(),
            Some(refs.iter().map(|s| s.interval).collect()),
        )
        .unwrap();
        for (q, &v) in queries.iter().zip(&got) {
            let mask: Vec<usize> = (0..refs.len()).filter(|&j| refs[j].interval == q.interval).collect();
            let e = store.iwkr_estimate(&p.forward(&q.input()).unwrap(), Some(&mask));
            let expected = e.unwrap_or(refs.iter().map(|s| s.reward).sum::<f64>() / refs.len() as f64);
            assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
        }

        // One interval everywhere: masking is vacuous.
        let flat = |rows: &[LoggedSample]| -> Vec<LoggedSample> {
            rows.iter().map(|s| LoggedSample { interval: 0, ..s.clone() }).collect()
        };
        let (fr, fq) = (flat(&refs), flat(&queries));
        let rr: Vec<&LoggedSample> = fr.iter().collect();
        let qq: Vec<&LoggedSample> = fq.iter().collect();
        let got = iwkr_forward_batch(&p, &qq, &rr, &cfg).unwrap();
        for (q, &v) in fq.iter().zip(&got) {
            let e = store.iwkr_estimate(&p.forward(&q.input()).unwrap(), None).unwrap();
            assert!((v - e).abs() < 1e-10);
        }
    }

    #[test]
    fn perfect_prediction_has_flat_loss() {
        let p = MlpParams::zeros(&[2, 3, 2]).unwrap();
        let r = [sample(&[0.5], &[1.0], 1.0, 0)];
        let q = [sample(&[0.5], &[1.0], 1.0, 0)];
        let cfg = TrainingConfig { lambda_ece: 0.0, ..Default::default() };
        let (loss, grad) = loss_and_grad(&p, &[&q[0]], &[&r[0]], &cfg).unwrap();
        assert!(loss < 1e-6);
        assert!(grad.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn duplicated_batch_keeps_loss() {
        let mut g = rng::stream(8, "t");
        let p = MlpParams::init(&[3, 5, 2], &mut g).unwrap();
        let refs = random_rows(&mut g, 20, 1, 2, 1);
        let queries = random_rows(&mut g, 6, 1, 2, 1);
        let rr: Vec<&LoggedSample> = refs.iter().collect();
        let qq: Vec<&LoggedSample> = queries.iter().collect();
        let qq2: Vec<&LoggedSample> = queries.iter().chain(queries.iter()).collect();
        let cfg = TrainingConfig::default();
        let (a, ga) = loss_and_grad(&p, &qq, &rr, &cfg).unwrap();
        let (b, gb) = loss_and_grad(&p, &qq2, &rr, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
        for (x, y) in ga.iter().zip(gb.iter()) {
            assert!((x - y).abs() < 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let mut g = rng::stream(3, "t");
        let p = MlpParams::init(&[3, 4, 2], &mut g).unwrap();
        let data = random_rows(&mut g, 50, 1, 2, 1);
        let cfg = TrainingConfig { epochs: 0, ..Default::default() };
        let rep = train(&data, &cfg, p.clone()).unwrap();
        assert_eq!(rep.params, p);
        assert!(rep.epoch_losses.is_empty());
    }

    #[test]
    fn config_validation() {
        let ok = TrainingConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainingConfig { ece_bins: 0, ..ok.clone() },
            TrainingConfig { ref_fraction: 1.0, ..ok.clone() },
            TrainingConfig { sample_fraction: 0.0, ..ok.clone() },
            TrainingConfig { sigma: 0.0, ..ok.clone() },
            TrainingConfig { batch_size: 0, ..ok.clone() },
            TrainingConfig { selection: ModelSelection::BestValidation, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn out_of_range_interval_is_rejected() {
        let p = MlpParams::zeros(&[2, 2]).unwrap();
        let data = vec![sample(&[0.0], &[1.0], 1.0, 0), sample(&[0.0], &[1.0], 0.0, 3)];
        let cfg = TrainingConfig { time_intervals: 2, ..Default::default() };
        assert!(train(&data, &cfg, p).is_err());
    }
}
