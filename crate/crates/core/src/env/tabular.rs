//! Classification datasets turned into bandits: one arm per class, reward 1
//! for the true label and 0 otherwise.
//!
//! The online stream interleaves four training steps with one evaluation
//! step. Every step is played and observed; only evaluation steps count
//! toward regret. Inputs are used as given, without standardization.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::LoggedSample;
use crate::env::{one_hot, Environment, Step};
use crate::error::{Error, Result};
use crate::rng;

/// Training steps per evaluation step in the online stream.
pub const TRAIN_PER_EVAL: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl TabularDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch { expected: features.len(), found: labels.len() });
        }
        if features.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let dim = features[0].len();
        if let Some(row) = features.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self { features, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Read a CSV with a header row, float feature columns and a trailing
    /// non-negative integer label column. Ragged rows are rejected.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let width = rdr.headers().map_err(|e| Error::Dataset(e.to_string()))?.len();
        if width < 2 {
            return Err(Error::Dataset("need at least one feature and a label column".into()));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Dataset(e.to_string()))?;
            let line = i + 2;
            let row = rec
                .iter()
                .take(width - 1)
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Dataset(format!("line {line}: bad feature {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let raw = &rec[width - 1];
            let label = raw
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Dataset(format!("line {line}: bad label {raw:?}")))?;
            features.push(row);
            labels.push(label);
        }
        Self::new(features, labels)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Linearly separable 2-D data with unequal class sizes. Points are
    /// uniform on `[-2, 2]^2`; the label is the argmax of `w_k . x + b_k`.
    pub fn synthetic_separable<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let labels = features.iter().map(|x| separable_label(x)).collect();
        Self { features, labels, num_classes: SEPARABLE_W.len() }
    }
}

const SEPARABLE_W: [[f64; 2]; 4] = [[1.0, 0.0], [-0.6, 0.8], [-0.6, -0.8], [0.0, -1.0]];
const SEPARABLE_B: [f64; 4] = [0.6, 0.0, -0.2, -0.3];

/// Label of the synthetic separable task.
pub fn separable_label(x: &[f64]) -> usize {
    let scores = SEPARABLE_W
        .iter()
        .zip(SEPARABLE_B)
        .map(|(w, b)| w[0] * x[0] + w[1] * x[1] + b);
    crate::agents::argmax(scores)
}

/// A dataset split into disjoint training and test index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularBanditTask {
    pub data: TabularDataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl TabularBanditTask {
    /// Shuffle and take `n_train` training and `n_test` test rows.
    pub fn split<R: Rng + ?Sized>(data: TabularDataset, n_train: usize, n_test: usize, rng: &mut R) -> Result<Self> {
        if n_train + n_test > data.len() {
            return Err(Error::InvalidConfig(format!(
                "split of {n_train} + {n_test} rows from a dataset of {}",
                data.len()
            )));
        }
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(rng);
        let test = idx.split_off(n_train);
        idx.truncate(n_train);
        let mut test = test;
        test.truncate(n_test);
        Ok(Self { data, train: idx, test })
    }

    pub fn num_arms(&self) -> usize {
        self.data.num_classes
    }

    /// Length of the interleaved stream: whole 4 + 1 blocks while both
    /// splits last.
    pub fn stream_len(&self) -> usize {
        let blocks = (self.train.len() / TRAIN_PER_EVAL).min(self.test.len());
        blocks * (TRAIN_PER_EVAL + 1)
    }

    /// Training rows with every arm's reward revealed.
    pub fn training_samples(&self) -> Vec<LoggedSample> {
        let k = self.num_arms();
        self.train
            .iter()
            .flat_map(|&i| {
                let x = &self.data.features[i];
                let y = self.data.labels[i];
                (0..k).map(move |a| LoggedSample::new(x.clone(), one_hot(a, k), f64::from(a == y), 0))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularStep {
    pub row: usize,
    pub context: Vec<f64>,
    pub arms: Vec<Vec<f64>>,
    pub label: usize,
    pub eval: bool,
}

impl TabularStep {
    pub fn reward(&self, arm: usize) -> f64 {
        f64::from(arm == self.label)
    }
}

/// Step `cursor` of the interleaved stream.
pub fn tabular_step(task: &TabularBanditTask, cursor: usize) -> Result<TabularStep> {
    if cursor >= task.stream_len() {
        return Err(Error::Exhausted(task.stream_len()));
    }
    let block = cursor / (TRAIN_PER_EVAL + 1);
    let pos = cursor % (TRAIN_PER_EVAL + 1);
    let eval = pos == TRAIN_PER_EVAL;
    let row = if eval {
        task.test[block]
    } else {
        task.train[block * TRAIN_PER_EVAL + pos]
    };
    let k = task.num_arms();
    Ok(TabularStep {
        row,
        context: task.data.features[row].clone(),
        arms: (0..k).map(|a| one_hot(a, k)).collect(),
        label: task.data.labels[row],
        eval,
    })
}

#[derive(Debug, Clone)]
pub struct TabularBanditEnv {
    task: TabularBanditTask,
    cursor: usize,
}

impl TabularBanditEnv {
    pub fn new(task: TabularBanditTask) -> Self {
        Self { task, cursor: 0 }
    }

    /// The synthetic separable task: `n_train` training and `n_test` test
    /// rows, drawn and split from the seed's environment stream.
    pub fn synthetic(n_train: usize, n_test: usize, seed: u64) -> Result<Self> {
        let mut g = rng::stream(seed, "env/data");
        let data = TabularDataset::synthetic_separable(n_train + n_test, &mut g);
        Ok(Self::new(TabularBanditTask::split(data, n_train, n_test, &mut g)?))
    }

    pub fn task(&self) -> &TabularBanditTask {
        &self.task
    }
}

impl Environment for TabularBanditEnv {
    fn context_dim(&self) -> usize {
        self.task.data.dim()
    }

    fn arm_dim(&self) -> usize {
        self.task.num_arms()
    }

    fn next_step(&mut self) -> Option<Step> {
        let s = tabular_step(&self.task, self.cursor).ok()?;
        let step = Step {
            index: self.cursor,
            means: (0..s.arms.len()).map(|a| s.reward(a)).collect(),
            context: s.context,
            arms: s.arms,
            eval: s.eval,
            interval: 0,
        };
        self.cursor += 1;
        Some(step)
    }

    fn reward(&mut self, step: &Step, arm: usize) -> f64 {
        step.means[arm]
    }

    fn warm_start_data(&mut self) -> Vec<LoggedSample> {
        self.task.training_samples()
    }
}

/// Context-free arms with fixed Bernoulli means.
#[derive(Debug, Clone)]
pub struct BernoulliArmsEnv {
    means: Vec<f64>,
    horizon: usize,
    step: usize,
    reward_rng: rng::Rng,
}

impl BernoulliArmsEnv {
    pub fn new(means: Vec<f64>, horizon: usize, seed: u64) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Empty("arm means"));
        }
        if let Some(m) = means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::InvalidConfig(format!("arm mean {m} outside [0, 1]")));
        }
        Ok(Self { means, horizon, step: 0, reward_rng: rng::stream(seed, "env/reward") })
    }
}

impl Environment for BernoulliArmsEnv {
    fn context_dim(&self) -> usize {
        0
    }

    fn arm_dim(&self) -> usize {
        self.means.len()
    }

    fn next_step(&mut self) -> Option<Step> {
        if self.step >= self.horizon {
            return None;
        }
        let k = self.means.len();
        let step = Step {
            index: self.step,
            context: Vec::new(),
            arms: (0..k).map(|a| one_hot(a, k)).collect(),
            means: self.means.clone(),
            eval: true,
            interval: 0,
        };
        self.step += 1;
        Some(step)
    }

    fn reward(&mut self, step: &Step, arm: usize) -> f64 {
        f64::from(self.reward_rng.random::<f64>() < step.means[arm])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small_task(n_train: usize, n_test: usize) -> TabularBanditTask {
        let mut g = rng::stream(3, "t");
        let data = TabularDataset::synthetic_separable(n_train + n_test, &mut g);
        TabularBanditTask::split(data, n_train, n_test, &mut g).unwrap()
    }

    #[test]
    fn five_step_window() {
        let task = small_task(40, 10);
        let flags: Vec<bool> = (0..5).map(|c| tabular_step(&task, c).unwrap().eval).collect();
        assert_eq!(flags, [false, false, false, false, true]);
    }

    #[test]
    fn reward_is_label_indicator() {
        let task = small_task(8, 2);
        let s = tabular_step(&task, 0).unwrap();
        for a in 0..task.num_arms() {
            assert_eq!(s.reward(a), if a == s.label { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn full_pass_has_requested_eval_steps() {
        let task = small_task(4000, 1000);
        let steps: Vec<TabularStep> = (0..task.stream_len()).map(|c| tabular_step(&task, c).unwrap()).collect();
        assert_eq!(steps.len(), 5000);
        assert_eq!(steps.iter().filter(|s| s.eval).count(), 1000);
        assert!(matches!(tabular_step(&task, 5000), Err(Error::Exhausted(5000))));
        let train: HashSet<usize> = steps.iter().filter(|s| !s.eval).map(|s| s.row).collect();
        let test: HashSet<usize> = steps.iter().filter(|s| s.eval).map(|s| s.row).collect();
        assert!(train.is_disjoint(&test));
        assert!(train.iter().all(|r| task.train.contains(r)));
        assert_eq!(test.len(), 1000);
    }

    #[test]
    fn splits_are_disjoint() {
        let task = small_task(300, 100);
        let a: HashSet<_> = task.train.iter().collect();
        assert!(task.test.iter().all(|i| !a.contains(i)));
    }

    #[test]
    fn oversized_split_rejected() {
        let mut g = rng::stream(0, "t");
        let data = TabularDataset::synthetic_separable(10, &mut g);
        assert!(TabularBanditTask::split(data, 8, 3, &mut g).is_err());
    }

    #[test]
    fn synthetic_classes_are_imbalanced() {
        let data = TabularDataset::synthetic_separable(20_000, &mut rng::stream(1, "t"));
        let mut counts = [0usize; 4];
        for &l in &data.labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c > 1000), "{counts:?}");
        let max = *counts.iter().max().unwrap() as f64 / 20_000.0;
        assert!(max > 0.35, "{counts:?}");
    }

    #[test]
    fn csv_round_trip() {
        let text = "x0,x1,label\n0.5,-1,2\n1e-3, 4 ,0\n";
        let d = TabularDataset::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(d.features, vec![vec![0.5, -1.0], vec![1e-3, 4.0]]);
        assert_eq!(d.labels, vec![2, 0]);
        assert_eq!(d.num_classes, 3);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let ragged = "a,b,label\n1,2,0\n1,0\n";
        assert!(matches!(TabularDataset::from_csv_reader(ragged.as_bytes()), Err(Error::Dataset(_))));
        let bad_label = "a,label\n1,x\n";
        assert!(TabularDataset::from_csv_reader(bad_label.as_bytes()).is_err());
        let negative = "a,label\n1,-1\n";
        assert!(TabularDataset::from_csv_reader(negative.as_bytes()).is_err());
        let bad_feature = "a,label\nnan,1\n";
        assert!(TabularDataset::from_csv_reader(bad_feature.as_bytes()).is_err());
        assert!(matches!(TabularDataset::from_csv_reader("a,label\n".as_bytes()), Err(Error::Empty(_))));
    }

    #[test]
    fn csv_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "f,label\n1,1\n2,0\n").unwrap();
        let d = TabularDataset::from_csv_path(&path).unwrap();
        assert_eq!(d.len(), 2);
        assert!(TabularDataset::from_csv_path(dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn training_samples_reveal_every_arm() {
        let task = small_task(8, 2);
        let rows = task.training_samples();
        assert_eq!(rows.len(), 8 * task.num_arms());
        assert_eq!(rows.iter().map(|r| r.reward).sum::<f64>(), 8.0);
    }

    #[test]
    fn bernoulli_env_rates() {
        let mut env = BernoulliArmsEnv::new(vec![0.9, 0.1], 10_000, 5).unwrap();
        let mut hits = 0.0;
        while let Some(s) = env.next_step() {
            hits += env.reward(&s, 0);
        }
        // 3 sd of Binomial(10^4, 0.9) is 90.
        assert!((hits - 9000.0).abs() < 90.0);
    }
}
