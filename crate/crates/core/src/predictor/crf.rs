//! Linear-chain CRF over dense label indices and sparse binary features.
//!
//! Weights are one flat vector: `features × labels` unigram weights (feature
//! `f`, label `y` at `f * labels + y`) followed, when transitions are enabled,
//! by a `labels × labels` transition block (`prev * labels + next`).
//! All inference runs in log space.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsConfig};
use crate::error::{Error, Result};

/// One observation sequence: active feature ids per position.
pub type FeatureSeq = Vec<Vec<u32>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub features: FeatureSeq,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Crf {
    labels: usize,
    features: usize,
    transitions: bool,
    weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Features seen fewer times than this are dropped before training.
    pub min_frequency: usize,
    /// Inverse L2 strength: the penalty is `|w|^2 / (2 * cost)`.
    pub cost: f64,
    pub tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_iterations: 35, min_frequency: 3, cost: 4.0, tolerance: 1e-4 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    /// Regularized negative log-likelihood at the start and after each step.
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl TrainReport {
    pub fn iterations(&self) -> usize {
        self.objective.len() - 1
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Crf {
    pub fn new(labels: usize, features: usize, transitions: bool) -> Self {
        let n = Self::weight_count(labels, features, transitions);
        Crf { labels, features, transitions, weights: vec![0.0; n] }
    }

    pub fn from_weights(labels: usize, features: usize, transitions: bool, weights: Vec<f64>) -> Result<Self> {
        let n = Self::weight_count(labels, features, transitions);
        if labels == 0 || weights.len() != n {
            return Err(Error::Checkpoint(format!("expected {n} CRF weights, got {}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Checkpoint("non-finite CRF weight".into()));
        }
        Ok(Crf { labels, features, transitions, weights })
    }

    pub fn weight_count(labels: usize, features: usize, transitions: bool) -> usize {
        features * labels + if transitions { labels * labels } else { 0 }
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn has_transitions(&self) -> bool {
        self.transitions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn transition(&self, prev: usize, next: usize) -> f64 {
        if self.transitions {
            self.weights[self.features * self.labels + prev * self.labels + next]
        } else {
            0.0
        }
    }

    fn emissions(&self, feats: &[Vec<u32>]) -> Vec<Vec<f64>> {
        feats
            .iter()
            .map(|active| {
                let mut s = vec![0.0; self.labels];
                for &f in active {
                    let row = &self.weights[f as usize * self.labels..(f as usize + 1) * self.labels];
                    s.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                s
            })
            .collect()
    }

    fn forward_from(&self, emit: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let l = self.labels;
        let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(emit.len());
        let mut buf = vec![0.0; l];
        for (k, e) in emit.iter().enumerate() {
            let row = if k == 0 {
                e.clone()
            } else {
                let prev = &alpha[k - 1];
                (0..l)
                    .map(|j| {
                        for i in 0..l {
                            buf[i] = prev[i] + self.transition(i, j);
                        }
                        e[j] + logsumexp(&buf)
                    })
                    .collect()
            };
            alpha.push(row);
        }
        alpha
    }

    fn backward_from(&self, emit: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let l = self.labels;
        let n = emit.len();
        let mut beta = vec![vec![0.0; l]; n];
        let mut buf = vec![0.0; l];
        for k in (0..n.saturating_sub(1)).rev() {
            for i in 0..l {
                for j in 0..l {
                    buf[j] = self.transition(i, j) + emit[k + 1][j] + beta[k + 1][j];
                }
                beta[k][i] = logsumexp(&buf);
            }
        }
        beta
    }

    /// Log forward scores, one row per position.
    pub fn forward(&self, feats: &[Vec<u32>]) -> Vec<Vec<f64>> {
        self.forward_from(&self.emissions(feats))
    }

    /// Log backward scores, one row per position.
    pub fn backward(&self, feats: &[Vec<u32>]) -> Vec<Vec<f64>> {
        self.backward_from(&self.emissions(feats))
    }

    pub fn log_partition(&self, feats: &[Vec<u32>]) -> f64 {
        self.forward(feats).last().map_or(0.0, |a| logsumexp(a))
    }

    /// Unnormalized log score of one labelling.
    pub fn score(&self, feats: &[Vec<u32>], labels: &[usize]) -> f64 {
        let emit = self.emissions(feats);
        let mut s = 0.0;
        for (k, &y) in labels.iter().enumerate() {
            s += emit[k][y];
            if k > 0 {
                s += self.transition(labels[k - 1], y);
            }
        }
        s
    }

    pub fn log_likelihood(&self, seq: &Sequence) -> f64 {
        self.score(&seq.features, &seq.labels) - self.log_partition(&seq.features)
    }

    /// Per-position label marginals.
    pub fn marginals(&self, feats: &[Vec<u32>]) -> Vec<Vec<f64>> {
        let emit = self.emissions(feats);
        let alpha = self.forward_from(&emit);
        let beta = self.backward_from(&emit);
        let Some(last) = alpha.last() else { return Vec::new() };
        let z = logsumexp(last);
        alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y - z).exp()).collect())
            .collect()
    }

    /// Distribution of the final label given the observations only; every
    /// earlier label is summed out by the forward recursion.
    pub fn frontier_marginal(&self, feats: &[Vec<u32>]) -> Vec<f64> {
        let alpha = self.forward(feats);
        let Some(last) = alpha.last() else {
            return vec![1.0 / self.labels as f64; self.labels];
        };
        let z = logsumexp(last);
        last.iter().map(|a| (a - z).exp()).collect()
    }

    pub fn viterbi(&self, feats: &[Vec<u32>]) -> Vec<usize> {
        let emit = self.emissions(feats);
        let n = emit.len();
        if n == 0 {
            return Vec::new();
        }
        let l = self.labels;
        let mut delta = emit[0].clone();
        let mut back = vec![vec![0usize; l]; n];
        for k in 1..n {
            let mut next = vec![0.0; l];
            for j in 0..l {
                let (bi, bv) = (0..l)
                    .map(|i| (i, delta[i] + self.transition(i, j)))
                    .fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
                next[j] = bv + emit[k][j];
                back[k][j] = bi;
            }
            delta = next;
        }
        let mut y = argmax(&delta);
        let mut path = vec![y; n];
        for k in (1..n).rev() {
            y = back[k][y];
            path[k - 1] = y;
        }
        path
    }

    /// Negative log-likelihood of one sequence; adds its gradient into `grad`.
    fn accumulate(&self, seq: &Sequence, grad: &mut [f64]) -> f64 {
        let l = self.labels;
        let emit = self.emissions(&seq.features);
        let alpha = self.forward_from(&emit);
        let beta = self.backward_from(&emit);
        let z = logsumexp(alpha.last().expect("non-empty sequence"));
        let n = emit.len();
        for k in 0..n {
            let node: Vec<f64> = (0..l).map(|y| (alpha[k][y] + beta[k][y] - z).exp()).collect();
            for &f in &seq.features[k] {
                let base = f as usize * l;
                for y in 0..l {
                    grad[base + y] += node[y];
                }
                grad[base + seq.labels[k]] -= 1.0;
            }
            if self.transitions && k > 0 {
                let base = self.features * l;
                for i in 0..l {
                    for j in 0..l {
                        let p = alpha[k - 1][i] + self.transition(i, j) + emit[k][j] + beta[k][j] - z;
                        grad[base + i * l + j] += p.exp();
                    }
                }
                grad[base + seq.labels[k - 1] * l + seq.labels[k]] -= 1.0;
            }
        }
        let mut gold = 0.0;
        for k in 0..n {
            gold += emit[k][seq.labels[k]];
            if k > 0 {
                gold += self.transition(seq.labels[k - 1], seq.labels[k]);
            }
        }
        z - gold
    }

    /// Regularized objective `sum NLL + |w|^2 / (2 cost)` and its gradient.
    /// Sequences are split into fixed chunks so the floating-point summation
    /// order does not depend on thread scheduling.
    pub fn objective(&self, seqs: &[Sequence], cost: f64) -> (f64, Vec<f64>) {
        const CHUNK: usize = 64;
        let n = self.weights.len();
        let parts: Vec<(f64, Vec<f64>)> = seqs
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; n];
                let v = chunk.iter().map(|s| self.accumulate(s, &mut g)).sum::<f64>();
                (v, g)
            })
            .collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        for (v, g) in parts {
            value += v;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        for (gi, wi) in grad.iter_mut().zip(&self.weights) {
            value += wi * wi / (2.0 * cost);
            *gi += wi / cost;
        }
        (value, grad)
    }

    /// Fits the weights with L-BFGS starting from the current values.
    pub fn train(&mut self, seqs: &[Sequence], config: &TrainConfig) -> Result<TrainReport> {
        if seqs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        for s in seqs {
            if s.features.len() != s.labels.len() || s.labels.is_empty() {
                return Err(Error::InvalidScore("sequence features and labels differ in length".into()));
            }
            if let Some(&y) = s.labels.iter().find(|&&y| y >= self.labels) {
                return Err(Error::UnknownLabel(y));
            }
            if let Some(&f) = s.features.iter().flatten().find(|&&f| f as usize >= self.features) {
                return Err(Error::UnknownId { kind: "feature", id: f as usize });
            }
        }
        let shape = (self.labels, self.features, self.transitions);
        let lbfgs = LbfgsConfig { max_iterations: config.max_iterations, tolerance: config.tolerance, ..Default::default() };
        let result = minimize(
            self.weights.clone(),
            |w| {
                let model = Crf { labels: shape.0, features: shape.1, transitions: shape.2, weights: w.to_vec() };
                model.objective(seqs, config.cost)
            },
            lbfgs,
        );
        self.weights = result.x;
        Ok(TrainReport { objective: result.values, converged: result.converged })
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, labels: usize, features: usize, scale: f64) -> Crf {
        let n = Crf::weight_count(labels, features, true);
        let w = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        Crf::from_weights(labels, features, true, w).unwrap()
    }

    fn random_feats(rng: &mut ChaCha8Rng, len: usize, features: usize) -> FeatureSeq {
        (0..len)
            .map(|_| (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..features as u32)).collect())
            .collect()
    }

    fn enumerate(labels: usize, len: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            out = out.into_iter().flat_map(|p| (0..labels).map(move |y| [p.clone(), vec![y]].concat())).collect();
        }
        out
    }

    #[test]
    fn zero_weights_give_uniform_frontier() {
        let crf = Crf::new(4, 3, true);
        let p = crf.frontier_marginal(&[vec![0], vec![1, 2]]);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn partition_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let crf = random_model(&mut rng, 3, 5, 2.0);
            let feats = random_feats(&mut rng, 4, 5);
            let brute: Vec<f64> = enumerate(3, 4).iter().map(|y| crf.score(&feats, y)).collect();
            let z = crf.log_partition(&feats);
            assert!((z - logsumexp(&brute)).abs() < 1e-10 * z.abs().max(1.0));
            let beta0 = crf.backward(&feats)[0].clone();
            let e0 = crf.emissions(&feats)[0].clone();
            let zb = logsumexp(&beta0.iter().zip(&e0).map(|(a, b)| a + b).collect::<Vec<_>>());
            assert!((z - zb).abs() < 1e-10 * z.abs().max(1.0));
        }
    }

    #[test]
    fn node_marginals_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let crf = random_model(&mut rng, 5, 6, 3.0);
        let feats = random_feats(&mut rng, 7, 6);
        for row in crf.marginals(&feats) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let crf = random_model(&mut rng, 3, 4, 1.0);
        let seqs: Vec<Sequence> = (0..3)
            .map(|_| Sequence {
                features: random_feats(&mut rng, 4, 4),
                labels: (0..4).map(|_| rng.gen_range(0..3)).collect(),
            })
            .collect();
        let (_, grad) = crf.objective(&seqs, 4.0);
        let h = 1e-5;
        for i in 0..crf.weights.len() {
            let mut plus = crf.clone();
            plus.weights[i] += h;
            let mut minus = crf.clone();
            minus.weights[i] -= h;
            let fd = (plus.objective(&seqs, 4.0).0 - minus.objective(&seqs, 4.0).0) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-6);
            assert!((fd - grad[i]).abs() / denom < 1e-5, "weight {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let crf = random_model(&mut rng, 3, 4, 2.0);
            let feats = random_feats(&mut rng, 5, 4);
            let best = enumerate(3, 5)
                .into_iter()
                .max_by(|a, b| crf.score(&feats, a).total_cmp(&crf.score(&feats, b)))
                .unwrap();
            assert_eq!(crf.score(&feats, &crf.viterbi(&feats)), crf.score(&feats, &best));
        }
    }

    #[test]
    fn training_overfits_one_sequence() {
        let feats: FeatureSeq = vec![vec![0], vec![1], vec![2], vec![1], vec![0]];
        let labels = vec![0, 1, 2, 1, 0];
        let seqs = vec![Sequence { features: feats.clone(), labels: labels.clone() }];
        let mut crf = Crf::new(3, 3, true);
        let cfg = TrainConfig { max_iterations: 100, cost: 100.0, ..Default::default() };
        let report = crf.train(&seqs, &cfg).unwrap();
        assert!(report.objective.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(crf.viterbi(&feats), labels);
    }

    #[test]
    fn large_weights_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let crf = random_model(&mut rng, 5, 4, 50.0);
        let feats = random_feats(&mut rng, 9, 4);
        assert!(crf.frontier_marginal(&feats).iter().all(|p| p.is_finite()));
        assert!(crf.log_partition(&feats).is_finite());
    }

    #[test]
    fn rejects_bad_training_input() {
        let mut crf = Crf::new(2, 1, true);
        assert!(matches!(crf.train(&[], &TrainConfig::default()), Err(Error::EmptyCorpus)));
        let bad = Sequence { features: vec![vec![0]], labels: vec![5] };
        assert!(matches!(crf.train(&[bad], &TrainConfig::default()), Err(Error::UnknownLabel(5))));
    }
}
