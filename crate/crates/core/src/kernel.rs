//! RBF kernel, the reference store and kernel-regression estimators.
//!
//! The kernel is the Gaussian RBF `exp(-||s - s'||^2 / (2 sigma^2))`,
//! optionally truncated to compact support. Note that one common way of
//! writing this kernel drops the square on the norm; the squared form is
//! used everywhere here (it is the standard Gaussian and is smooth at 0).
//!
//! The store keeps, for every sample `i`, the accumulator
//! `g_i = sum_j k(s_i, s_j)` over the whole store (self-term included), so
//! the importance weight is `w_i = 1 / g_i` in `(0, 1]`. Appending a sample
//! costs O(n) given its kernel vector; removing `k` samples costs O(n k).
//! Neither keeps the n x n kernel matrix around. Because subtraction drifts,
//! the accumulators are recomputed from scratch every `checkpoint_interval`
//! mutations.

use crate::error::{Error, Result};

/// Default number of mutations between full accumulator recomputations.
pub const DEFAULT_CHECKPOINT_INTERVAL: usize = 10_000;

/// RBF bandwidth and optional truncation radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub sigma: f64,
    pub truncation_radius: Option<f64>,
}

impl KernelConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        let config = Self {
            sigma,
            truncation_radius: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn truncated(sigma: f64, radius: f64) -> Result<Self> {
        let config = Self {
            sigma,
            truncation_radius: Some(radius),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if let Some(r) = self.truncation_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "truncation radius must be positive and finite, got {r}"
                )));
            }
        }
        Ok(())
    }

    /// Kernel value from a squared distance. Dimensions are not checked.
    #[inline]
    pub fn eval_sq(&self, dist_sq: f64) -> f64 {
        if let Some(r) = self.truncation_radius {
            if dist_sq > r * r {
                return 0.0;
            }
        }
        (-dist_sq / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Unchecked kernel evaluation on equal-length slices.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval_sq(squared_distance(a, b))
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Kernel value between two points.
pub fn rbf(s: &[f64], s_prime: &[f64], config: &KernelConfig) -> Result<f64> {
    if s.len() != s_prime.len() {
        return Err(Error::DimensionMismatch {
            expected: s.len(),
            found: s_prime.len(),
        });
    }
    Ok(config.eval(s, s_prime))
}

pub(crate) fn check_reward(r: f64) -> Result<f64> {
    if r == 0.0 || r == 1.0 {
        Ok(r)
    } else {
        Err(Error::InvalidReward(r))
    }
}

/// Embedded samples, binary rewards and their kernel-sum accumulators.
///
/// Mutation needs `&mut self`; every read-only query borrows immutably and
/// can run from many threads at once.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStore {
    dim: usize,
    embeddings: Vec<f64>,
    rewards: Vec<f64>,
    accumulators: Vec<f64>,
    time_labels: Option<Vec<i64>>,
    config: KernelConfig,
    checkpoint_interval: Option<usize>,
    mutations: usize,
}

impl ReferenceStore {
    /// Empty store for `dim`-dimensional embeddings.
    pub fn new(dim: usize, config: KernelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            dim,
            embeddings: Vec::new(),
            rewards: Vec::new(),
            accumulators: Vec::new(),
            time_labels: None,
            config,
            checkpoint_interval: Some(DEFAULT_CHECKPOINT_INTERVAL),
            mutations: 0,
        })
    }

    /// Build a store from samples and compute accumulators from scratch.
    pub fn from_samples(
        dim: usize,
        config: KernelConfig,
        embeddings: Vec<f64>,
        rewards: Vec<f64>,
        time_labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        config.validate()?;
        if dim == 0 && !embeddings.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 0,
                found: embeddings.len(),
            });
        }
        let n = rewards.len();
        if embeddings.len() != n * dim {
            return Err(Error::LengthMismatch {
                expected: n * dim,
                found: embeddings.len(),
            });
        }
        for &r in &rewards {
            check_reward(r)?;
        }
        if let Some(labels) = &time_labels {
            if labels.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: labels.len(),
                });
            }
        }
        let mut store = Self {
            dim,
            embeddings,
            rewards,
            accumulators: vec![0.0; n],
            time_labels,
            config,
            checkpoint_interval: Some(DEFAULT_CHECKPOINT_INTERVAL),
            mutations: 0,
        };
        store.init_weights();
        Ok(store)
    }

    /// Reassemble a store from stored parts without recomputing anything.
    /// Used by deserialization, which must reproduce accumulators exactly.
    pub fn from_raw_parts(
        dim: usize,
        config: KernelConfig,
        embeddings: Vec<f64>,
        rewards: Vec<f64>,
        accumulators: Vec<f64>,
        time_labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        config.validate()?;
        let n = rewards.len();
        if embeddings.len() != n * dim {
            return Err(Error::LengthMismatch {
                expected: n * dim,
                found: embeddings.len(),
            });
        }
        if accumulators.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: accumulators.len(),
            });
        }
        if time_labels.as_ref().is_some_and(|l| l.len() != n) {
            return Err(Error::LabelMismatch);
        }
        for &r in &rewards {
            check_reward(r)?;
        }
        Ok(Self {
            dim,
            embeddings,
            rewards,
            accumulators,
            time_labels,
            config,
            checkpoint_interval: Some(DEFAULT_CHECKPOINT_INTERVAL),
            mutations: 0,
        })
    }

    /// Set (or disable with `None`) the automatic recomputation period.
    pub fn set_checkpoint_interval(&mut self, every: Option<usize>) {
        self.checkpoint_interval = every.filter(|&k| k > 0);
    }

    pub fn checkpoint_interval(&self) -> Option<usize> {
        self.checkpoint_interval
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major `n x dim` embedding matrix.
    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Kernel-sum accumulators `g_i` (reciprocal importance weights).
    pub fn accumulators(&self) -> &[f64] {
        &self.accumulators
    }

    pub fn time_labels(&self) -> Option<&[i64]> {
        self.time_labels.as_deref()
    }

    pub fn importance_weight(&self, i: usize) -> f64 {
        1.0 / self.accumulators[i]
    }

    pub fn importance_weights(&self) -> Vec<f64> {
        self.accumulators.iter().map(|g| 1.0 / g).collect()
    }

    /// Mutations since the last full recomputation.
    pub fn mutations_since_checkpoint(&self) -> usize {
        self.mutations
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `k(query, s_i)` for every stored sample.
    pub fn kernel_vector(&self, query: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(query)?;
        if self.dim == 0 {
            return Ok(vec![1.0; self.len()]);
        }
        Ok(self
            .embeddings
            .chunks_exact(self.dim)
            .map(|s| self.config.eval(query, s))
            .collect())
    }

    /// Recompute every accumulator with the full O(n^2) double loop.
    pub fn init_weights(&mut self) {
        let n = self.len();
        let mut g = vec![0.0; n];
        for i in 0..n {
            g[i] += 1.0;
            let si = self.embedding(i);
            for j in (i + 1)..n {
                let k = self.config.eval(si, self.embedding(j));
                g[i] += k;
                g[j] += k;
            }
        }
        self.accumulators = g;
        self.mutations = 0;
    }

    /// Full recomputation; resets the drift accumulated by incremental updates.
    pub fn recompute_checkpoint(&mut self) {
        self.init_weights();
    }

    fn after_mutation(&mut self, count: usize) {
        self.mutations += count;
        if let Some(every) = self.checkpoint_interval {
            if self.mutations >= every {
                self.init_weights();
            }
        }
    }

    fn push(&mut self, embedding: &[f64], reward: f64, kvec: &[f64]) {
        let mut new_g = 1.0;
        for (g, &k) in self.accumulators.iter_mut().zip(kvec) {
            *g += k;
            new_g += k;
        }
        self.embeddings.extend_from_slice(embedding);
        self.rewards.push(reward);
        self.accumulators.push(new_g);
    }

    fn check_append(&self, embedding: &[f64], reward: f64, kvec: &[f64]) -> Result<()> {
        self.check_dim(embedding)?;
        check_reward(reward)?;
        if kvec.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: kvec.len(),
            });
        }
        Ok(())
    }

    /// Append an unlabeled sample. `kvec` must be `kernel_vector(embedding)`
    /// computed against the store as it is before the append.
    pub fn append_sample(&mut self, embedding: &[f64], reward: f64, kvec: &[f64]) -> Result<()> {
        self.check_append(embedding, reward, kvec)?;
        if self.time_labels.is_some() {
            return Err(Error::LabelMismatch);
        }
        self.push(embedding, reward, kvec);
        self.after_mutation(1);
        Ok(())
    }

    /// Append a sample tagged with a time-interval label.
    pub fn append_labeled_sample(
        &mut self,
        embedding: &[f64],
        reward: f64,
        label: i64,
        kvec: &[f64],
    ) -> Result<()> {
        self.check_append(embedding, reward, kvec)?;
        let empty = self.is_empty();
        match &mut self.time_labels {
            Some(labels) => labels.push(label),
            None if empty => self.time_labels = Some(vec![label]),
            None => return Err(Error::LabelMismatch),
        }
        self.push(embedding, reward, kvec);
        self.after_mutation(1);
        Ok(())
    }

    /// Compute the kernel vector and append in one go.
    pub fn insert(&mut self, embedding: &[f64], reward: f64) -> Result<()> {
        let kvec = self.kernel_vector(embedding)?;
        self.append_sample(embedding, reward, &kvec)
    }

    /// Remove the given samples, subtracting their kernel contributions from
    /// every survivor. Survivors keep their relative order.
    pub fn remove_samples(&mut self, indices: &[usize]) -> Result<()> {
        let n = self.len();
        let mut removed = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if removed[i] {
                return Err(Error::DuplicateIndex(i));
            }
            removed[i] = true;
        }
        if indices.is_empty() {
            return Ok(());
        }

        for i in (0..n).filter(|&i| !removed[i]) {
            let si = self.embedding(i);
            let lost: f64 = indices
                .iter()
                .map(|&j| self.config.eval(si, self.embedding(j)))
                .sum();
            // The self-term keeps every survivor at or above 1.
            self.accumulators[i] = (self.accumulators[i] - lost).max(1.0);
        }

        let dim = self.dim;
        let mut keep = removed.iter().map(|r| !r);
        self.rewards.retain(|_| keep.next().unwrap_or(true));
        let mut keep = removed.iter().map(|r| !r);
        self.accumulators.retain(|_| keep.next().unwrap_or(true));
        if let Some(labels) = &mut self.time_labels {
            let mut keep = removed.iter().map(|r| !r);
            labels.retain(|_| keep.next().unwrap_or(true));
        }
        if dim > 0 {
            let mut write = 0;
            for i in 0..n {
                if !removed[i] {
                    self.embeddings
                        .copy_within(i * dim..(i + 1) * dim, write * dim);
                    write += 1;
                }
            }
            self.embeddings.truncate(write * dim);
        }
        self.after_mutation(indices.len());
        Ok(())
    }

    fn check_mask(&self, mask: Option<&[usize]>) -> Result<()> {
        if let Some(m) = mask {
            if let Some(&bad) = m.iter().find(|&&i| i >= self.len()) {
                return Err(Error::IndexOutOfRange {
                    index: bad,
                    len: self.len(),
                });
            }
        }
        Ok(())
    }

    /// Nadaraya-Watson estimate at `query` over the masked-in samples.
    pub fn nwkr_estimate(&self, query: &[f64], mask: Option<&[usize]>) -> Result<f64> {
        self.check_mask(mask)?;
        let kvec = self.kernel_vector(query)?;
        nwkr_from_kernel(&kvec, &self.rewards, mask)
    }

    /// Importance-weighted kernel regression estimate at `query`.
    pub fn iwkr_estimate(&self, query: &[f64], mask: Option<&[usize]>) -> Result<f64> {
        self.check_mask(mask)?;
        let kvec = self.kernel_vector(query)?;
        iwkr_from_kernel(&kvec, &self.rewards, &self.accumulators, mask)
    }
}

fn masked<'a>(n: usize, mask: Option<&'a [usize]>) -> Box<dyn Iterator<Item = usize> + 'a> {
    match mask {
        Some(m) => Box::new(m.iter().copied()),
        None => Box::new(0..n),
    }
}

/// Nadaraya-Watson estimate from a precomputed kernel vector.
pub fn nwkr_from_kernel(kvec: &[f64], rewards: &[f64], mask: Option<&[usize]>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in masked(kvec.len(), mask) {
        num += kvec[i] * rewards[i];
        den += kvec[i];
    }
    ratio(num, den)
}

/// Importance-weighted estimate from a precomputed kernel vector and the
/// store accumulators (`w_i = 1 / g_i`).
pub fn iwkr_from_kernel(
    kvec: &[f64],
    rewards: &[f64],
    accumulators: &[f64],
    mask: Option<&[usize]>,
) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in masked(kvec.len(), mask) {
        let a = kvec[i] / accumulators[i];
        num += a * rewards[i];
        den += a;
    }
    ratio(num, den)
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if den > 0.0 && den.is_finite() {
        Ok((num / den).clamp(0.0, 1.0))
    } else {
        Err(Error::NoSupport)
    }
}
