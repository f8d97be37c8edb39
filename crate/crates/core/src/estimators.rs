//! Performance estimation: the synthetic accuracy oracle, the minibatch-loss
//! proxy, the random-forest accuracy predictor, and Kendall's tau.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops::arch_flops;
use crate::rng::{structural_noise, substream_indexed};
use crate::space::{ArchitectureConfig, SearchSpace};

// ---------------------------------------------------------------------------
// Synthetic accuracy oracle
// ---------------------------------------------------------------------------

/// Parameters of the synthetic accuracy oracle
/// `clamp(a - b*exp(-flops/lambda) + epsilon*h(arch), 0, 1)`.
///
/// The defaults span roughly 0.60..0.82 over the 200..2000 MFLOPs range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            a: 0.82,
            b: 0.30,
            lambda: 500.0,
            epsilon: 0.02,
            seed: 0,
        }
    }
}

impl OracleParams {
    pub fn check(&self) -> Result<()> {
        if !(0.0 < self.a && self.a <= 1.0) {
            return Err(Error::Config(format!("oracle a out of (0,1]: {}", self.a)));
        }
        if !(0.0 <= self.b && self.b < self.a) {
            return Err(Error::Config(format!("oracle b out of [0,a): {}", self.b)));
        }
        if self.lambda <= 0.0 {
            return Err(Error::Config(format!("oracle lambda must be positive: {}", self.lambda)));
        }
        if !(0.0..0.1).contains(&self.epsilon) {
            return Err(Error::Config(format!("oracle epsilon out of [0,0.1): {}", self.epsilon)));
        }
        Ok(())
    }

    /// The FLOPs-only part of the oracle, before structural perturbation.
    pub fn curve(&self, flops_mflops: f64) -> f64 {
        self.a - self.b * (-flops_mflops / self.lambda).exp()
    }
}

/// Deterministic synthetic ground-truth accuracy of an architecture.
pub fn oracle_accuracy(
    params: &OracleParams,
    space: &SearchSpace,
    arch: &ArchitectureConfig,
) -> Result<f64> {
    let flops = arch_flops(space, arch)?;
    let h = structural_noise(params.seed, &space.encode(arch)?);
    Ok((params.curve(flops.0) + params.epsilon * h).clamp(0.0, 1.0))
}

/// Minibatch-loss score for a given evaluated accuracy: the negated noisy
/// cross-entropy proxy, so higher is still better.
pub fn minibatch_loss_proxy<R: Rng + ?Sized>(
    accuracy: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> f64 {
    let noise = if noise_sigma > 0.0 {
        Normal::new(0.0, noise_sigma).expect("sigma checked").sample(rng)
    } else {
        0.0
    };
    -(-accuracy.ln() + noise)
}

// ---------------------------------------------------------------------------
// Random-forest accuracy predictor
// ---------------------------------------------------------------------------

/// Forest hyperparameters; the defaults are 100 trees of depth at most 15.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 15,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf_value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                TreeNode::Leaf { leaf_value } => return leaf_value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], node: usize) -> usize {
            match nodes[node] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Random-forest regressor mapping encoded architectures to accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPredictor {
    pub version: u32,
    pub config: ForestConfig,
    pub n_features: usize,
    pub seed: u64,
    pub sample_count: usize,
    pub trees: Vec<RegressionTree>,
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    targets: &'a [f64],
    config: &'a ForestConfig,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    /// Greedy variance-reduction split over all features; thresholds at
    /// midpoints of consecutive distinct sorted values.
    fn best_split(&self, indices: &[usize]) -> Option<(usize, f64)> {
        let n_features = self.features[indices[0]].len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut column: Vec<(f64, f64)> = Vec::with_capacity(indices.len());
        for feature in 0..n_features {
            column.clear();
            column.extend(
                indices
                    .iter()
                    .map(|&i| (self.features[i][feature], self.targets[i])),
            );
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total_sum: f64 = column.iter().map(|c| c.1).sum();
            let total_sq: f64 = column.iter().map(|c| c.1 * c.1).sum();
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for split in 1..column.len() {
                left_sum += column[split - 1].1;
                left_sq += column[split - 1].1 * column[split - 1].1;
                if column[split].0 == column[split - 1].0 {
                    continue;
                }
                if split < self.config.min_samples_leaf
                    || column.len() - split < self.config.min_samples_leaf
                {
                    continue;
                }
                let left_n = split as f64;
                let right_n = (column.len() - split) as f64;
                let right_sum = total_sum - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / left_n)
                    + (right_sq - right_sum * right_sum / right_n);
                if best.map_or(true, |(b, _, _)| sse < b) {
                    let threshold = (column[split - 1].0 + column[split].0) / 2.0;
                    best = Some((sse, feature, threshold));
                }
            }
        }
        best.map(|(_, feature, threshold)| (feature, threshold))
    }

    fn build(&mut self, indices: &[usize], depth: usize) -> usize {
        let mean = self.targets_mean(indices);
        let pure = indices
            .iter()
            .all(|&i| self.targets[i] == self.targets[indices[0]]);
        if depth >= self.config.max_depth || indices.len() < 2 || pure {
            self.nodes.push(TreeNode::Leaf { leaf_value: mean });
            return self.nodes.len() - 1;
        }
        let Some((feature, threshold)) = self.best_split(indices) else {
            self.nodes.push(TreeNode::Leaf { leaf_value: mean });
            return self.nodes.len() - 1;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.features[i][feature] <= threshold);
        let node = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { leaf_value: mean }); // placeholder
        let left = self.build(&left_idx, depth + 1);
        let right = self.build(&right_idx, depth + 1);
        self.nodes[node] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        node
    }

    fn targets_mean(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&i| self.targets[i]).sum::<f64>() / indices.len() as f64
    }
}

/// Fit a random forest on (feature vector, accuracy) pairs.
///
/// Each tree fits a bootstrap resample using its own seeded substream, so
/// parallel and sequential fits agree exactly.
pub fn fit_predictor(
    features: &[Vec<f64>],
    targets: &[f64],
    config: ForestConfig,
    seed: u64,
) -> Result<AccuracyPredictor> {
    if features.is_empty() || targets.is_empty() {
        return Err(Error::EmptyInput("predictor training set"));
    }
    if features.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: targets.len(),
        });
    }
    let n_features = features[0].len();
    if features.iter().any(|f| f.len() != n_features) {
        return Err(Error::Config("ragged feature matrix".into()));
    }
    let n = features.len();
    let trees: Vec<RegressionTree> = (0..config.n_trees as u64)
        .into_par_iter()
        .map(|tree_idx| {
            let indices: Vec<usize> = if config.bootstrap {
                let mut rng = substream_indexed(seed, "forest.tree", tree_idx);
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                features,
                targets,
                config: &config,
                nodes: Vec::new(),
            };
            builder.build(&indices, 0);
            RegressionTree {
                nodes: builder.nodes,
            }
        })
        .collect();
    Ok(AccuracyPredictor {
        version: 1,
        config,
        n_features,
        seed,
        sample_count: n,
        trees,
    })
}

impl AccuracyPredictor {
    /// Mean of the per-tree predictions.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: features.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(features)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let predictor: AccuracyPredictor = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if predictor.version != 1 {
            return Err(Error::Config(format!(
                "unsupported predictor version {}",
                predictor.version
            )));
        }
        Ok(predictor)
    }
}

// ---------------------------------------------------------------------------
// Kendall's tau
// ---------------------------------------------------------------------------

/// Tie-corrected Kendall's tau-b over all pairs:
/// `(C - D) / sqrt((C + D + Tx)(C + D + Ty))`, where Tx counts pairs tied in
/// x only and Ty pairs tied in y only.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateRanks("need at least two observations"));
    }
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut ties_x = 0u64;
    let mut ties_y = 0u64;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = x[i].total_cmp(&x[j]);
            let dy = y[i].total_cmp(&y[j]);
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => ties_x += 1,
                (_, Equal) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom_x = concordant + discordant + ties_x;
    let denom_y = concordant + discordant + ties_y;
    if denom_x == 0 || denom_y == 0 {
        return Err(Error::DegenerateRanks("all observations tied in one list"));
    }
    Ok((concordant as f64 - discordant as f64) / ((denom_x as f64) * (denom_y as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::space::default_space;

    #[test]
    fn oracle_curve_values() {
        let params = OracleParams::default();
        // 0.82 - 0.30*e^{-1}
        assert!((params.curve(500.0) - 0.7096).abs() < 1e-4);
        // asymptote
        assert!((params.curve(1e9) - 0.82).abs() < 1e-12);
    }

    #[test]
    fn oracle_is_deterministic() {
        let space = default_space();
        let params = OracleParams::default();
        let arch = space.uniform_sample(&mut seeded_rng(1));
        let a = oracle_accuracy(&params, &space, &arch).unwrap();
        let b = oracle_accuracy(&params, &space, &arch).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn oracle_epsilon_zero_is_monotone_in_flops() {
        let space = default_space();
        let params = OracleParams {
            epsilon: 0.0,
            ..Default::default()
        };
        let mut rng = seeded_rng(2);
        for _ in 0..200 {
            let arch = space.uniform_sample(&mut rng);
            let axis = rand::Rng::gen_range(&mut rng, 0..space.axis_count());
            if arch.choice_indices[axis] + 1 >= space.axes()[axis].choices.len() {
                continue;
            }
            let mut bumped = arch.clone();
            bumped.choice_indices[axis] += 1;
            let lo = oracle_accuracy(&params, &space, &arch).unwrap();
            let hi = oracle_accuracy(&params, &space, &bumped).unwrap();
            assert!(hi >= lo);
        }
    }

    #[test]
    fn loss_proxy_values_and_noise() {
        let mut rng = seeded_rng(3);
        assert!((minibatch_loss_proxy(0.5, 0.0, &mut rng) - 0.5f64.ln()).abs() < 1e-12);

        let sigma = 0.01;
        let samples: Vec<f64> = (0..1000)
            .map(|_| minibatch_loss_proxy(0.7, sigma, &mut rng))
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let std = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
            / (samples.len() - 1) as f64)
            .sqrt();
        assert!((std - sigma).abs() / sigma < 0.1, "std = {std}");
    }

    #[test]
    fn loss_proxy_preserves_accuracy_order() {
        let mut rng = seeded_rng(4);
        let a = minibatch_loss_proxy(0.6, 0.0, &mut rng);
        let b = minibatch_loss_proxy(0.8, 0.0, &mut rng);
        assert!(b > a);
    }

    #[test]
    fn forest_constant_targets() {
        let features: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let targets = vec![0.5; 16];
        let forest = fit_predictor(&features, &targets, ForestConfig::default(), 0).unwrap();
        assert_eq!(forest.predict(&[3.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn forest_single_pair() {
        let forest =
            fit_predictor(&[vec![1.0, 2.0]], &[0.7], ForestConfig::default(), 0).unwrap();
        assert!((forest.predict(&[9.0, 9.0]).unwrap() - 0.7).abs() < 1e-12);
        for tree in &forest.trees {
            assert_eq!(tree.nodes.len(), 1);
        }
    }

    #[test]
    fn forest_memorizes_without_bootstrap() {
        let mut rng = seeded_rng(5);
        let features: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..4).map(|_| rand::Rng::gen_range(&mut rng, 0.0..10.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..32).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
        let config = ForestConfig {
            bootstrap: false,
            n_trees: 3,
            ..Default::default()
        };
        let forest = fit_predictor(&features, &targets, config, 0).unwrap();
        for (f, &t) in features.iter().zip(&targets) {
            assert!((forest.predict(f).unwrap() - t).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_depth_bound_and_prediction_range() {
        let mut rng = seeded_rng(6);
        let features: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..6).map(|_| rand::Rng::gen_range(&mut rng, 0.0..4.0)).collect())
            .collect();
        let targets: Vec<f64> = features.iter().map(|f| f.iter().sum::<f64>() / 24.0).collect();
        let config = ForestConfig {
            max_depth: 4,
            n_trees: 10,
            ..Default::default()
        };
        let forest = fit_predictor(&features, &targets, config, 1).unwrap();
        let (lo, hi) = targets
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &t| {
                (l.min(t), h.max(t))
            });
        for tree in &forest.trees {
            assert!(tree.depth() <= 4);
        }
        let p = forest.predict(&features[0]).unwrap();
        assert!(p >= lo && p <= hi);
    }

    #[test]
    fn forest_fit_is_deterministic() {
        let features: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let targets: Vec<f64> = (0..50).map(|i| (i % 5) as f64 / 4.0).collect();
        let cfg = ForestConfig {
            n_trees: 8,
            ..Default::default()
        };
        let a = fit_predictor(&features, &targets, cfg, 42).unwrap();
        let b = fit_predictor(&features, &targets, cfg, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predictor_round_trips_through_json() {
        let features: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 8) as f64, (i % 5) as f64]).collect();
        let targets: Vec<f64> = (0..40).map(|i| ((i * 13) % 11) as f64 / 10.0).collect();
        let cfg = ForestConfig {
            n_trees: 5,
            ..Default::default()
        };
        let forest = fit_predictor(&features, &targets, cfg, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rf.json");
        forest.save(&path).unwrap();
        let loaded = AccuracyPredictor::load(&path).unwrap();
        assert_eq!(forest, loaded);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let forest = fit_predictor(&[vec![1.0, 2.0]], &[0.7], ForestConfig::default(), 0).unwrap();
        assert!(matches!(
            forest.predict(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kendall_perfect_and_reversed() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let rev: Vec<f64> = x.iter().rev().cloned().collect();
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &rev).unwrap(), -1.0);
    }

    #[test]
    fn kendall_hand_computed_example() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![1.0, 3.0, 2.0, 4.0];
        assert!((kendall_tau(&x, &y).unwrap() - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn kendall_errors() {
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn kendall_symmetric_and_monotone_invariant() {
        let mut rng = seeded_rng(8);
        for _ in 0..20 {
            let x: Vec<f64> = (0..30).map(|_| rand::Rng::gen_range(&mut rng, 0..10) as f64).collect();
            let y: Vec<f64> = (0..30).map(|_| rand::Rng::gen_range(&mut rng, 0..10) as f64).collect();
            let (Ok(a), Ok(b)) = (kendall_tau(&x, &y), kendall_tau(&y, &x)) else {
                continue;
            };
            assert!((a - b).abs() < 1e-12);
            let x2: Vec<f64> = x.iter().map(|v| (v + 1.0).powi(3)).collect();
            assert!((kendall_tau(&x2, &y).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_generalizes_on_synthetic_oracle() {
        let space = default_space();
        let params = OracleParams::default();
        let mut rng = seeded_rng(21);
        let pairs: Vec<(Vec<f64>, f64)> = (0..512)
            .map(|_| {
                let arch = space.uniform_sample(&mut rng);
                let features = space.encode(&arch).unwrap().iter().map(|&v| v as f64).collect();
                let acc = oracle_accuracy(&params, &space, &arch).unwrap();
                (features, acc)
            })
            .collect();
        let (train, test) = pairs.split_at(256);
        let features: Vec<Vec<f64>> = train.iter().map(|(f, _)| f.clone()).collect();
        let targets: Vec<f64> = train.iter().map(|(_, t)| *t).collect();
        let forest = fit_predictor(&features, &targets, ForestConfig::default(), 0).unwrap();
        let predicted: Vec<f64> = test.iter().map(|(f, _)| forest.predict(f).unwrap()).collect();
        let actual: Vec<f64> = test.iter().map(|(_, t)| *t).collect();
        let tau = kendall_tau(&predicted, &actual).unwrap();
        assert!(tau > 0.7, "tau = {tau}");
    }
}
