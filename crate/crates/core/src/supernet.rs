//! Simulated weight-sharing supernet and the attentive training loop.
//!
//! Shared weights are modeled as one skill value per (axis, choice) in
//! [0, 1]. Training an architecture bumps the skill of each of its chosen
//! options by `s <- s + eta * (1 - s)`; evaluating an architecture scales its
//! oracle accuracy by the mean skill of its options. Options shared across
//! architectures therefore benefit from any training that touches them, and
//! under-sampled options underperform.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{minibatch_loss_proxy, oracle_accuracy, AccuracyPredictor, OracleParams};
use crate::flops::arch_flops;
use crate::pareto::{
    best_pareto, bucket_stats, select_attentive, worst_pareto, BucketSummary, EvaluatedPoint,
    FrontReport, ScoredCandidate, SelectionMode,
};
use crate::sampler::{
    rejection_sample, sample_target_flops, SamplerTables, FACTORIZED_MAX_TRIALS,
};
use crate::space::{ArchitectureConfig, SearchSpace};

const TARGET_RESAMPLE_LIMIT: usize = 10;

/// Simulated shared weights: per-axis, per-choice skill values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupernetState {
    pub skills: Vec<Vec<f64>>,
    pub step_count: u64,
    pub eta: f64,
}

impl SupernetState {
    pub fn new(space: &SearchSpace, initial_skill: f64, eta: f64) -> Self {
        SupernetState {
            skills: space
                .axes()
                .iter()
                .map(|a| vec![initial_skill; a.choices.len()])
                .collect(),
            step_count: 0,
            eta,
        }
    }

    /// Saturating skill bump on every option the architecture uses.
    fn train_arch(&mut self, arch: &ArchitectureConfig) {
        for (axis, &idx) in arch.choice_indices.iter().enumerate() {
            let s = &mut self.skills[axis][idx];
            *s += self.eta * (1.0 - *s);
        }
    }

    fn mean_skill(&self, arch: &ArchitectureConfig) -> f64 {
        let sum: f64 = arch
            .choice_indices
            .iter()
            .enumerate()
            .map(|(axis, &idx)| self.skills[axis][idx])
            .sum();
        sum / self.skills.len() as f64
    }
}

/// Which sub-network the per-bin candidate set trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    Uniform,
    BestUp,
    WorstUp,
}

/// How candidate performance is estimated during training.
#[derive(Debug, Clone)]
pub enum EstimatorKind {
    /// Noisy loss of the current supernet evaluation, as a minibatch proxy.
    SupernetLoss { noise_sigma: f64 },
    /// Predicted accuracy from a pretrained surrogate.
    PredictedAcc(AccuracyPredictor),
}

/// One sampling strategy: mode, candidates per draw, draws per step,
/// estimator, and an optional offline attentive pool.
#[derive(Debug, Clone)]
pub struct StrategyConfig {
    pub mode: SamplingMode,
    pub k: usize,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub offline_pool: Option<Vec<ArchitectureConfig>>,
}

impl StrategyConfig {
    pub fn uniform() -> Self {
        StrategyConfig {
            mode: SamplingMode::Uniform,
            k: 1,
            n: 2,
            estimator: EstimatorKind::SupernetLoss { noise_sigma: 0.01 },
            offline_pool: None,
        }
    }

    /// BestUp-k / WorstUp-k (acc): predictor-guided, k defaults to 50.
    pub fn attentive_acc(mode: SamplingMode, predictor: AccuracyPredictor) -> Self {
        StrategyConfig {
            mode,
            k: 50,
            n: 2,
            estimator: EstimatorKind::PredictedAcc(predictor),
            offline_pool: None,
        }
    }

    /// BestUp-k / WorstUp-k (loss): minibatch-loss guided, k defaults to 3.
    pub fn attentive_loss(mode: SamplingMode) -> Self {
        StrategyConfig {
            mode,
            k: 3,
            n: 2,
            estimator: EstimatorKind::SupernetLoss { noise_sigma: 0.01 },
            offline_pool: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.k < 1 || self.n < 1 {
            return Err(Error::Config("strategy needs k >= 1 and n >= 1".into()));
        }
        if self.mode == SamplingMode::Uniform && self.k != 1 {
            return Err(Error::Config("uniform sampling forces k = 1".into()));
        }
        Ok(())
    }
}

/// Record of one attentive draw within a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawLog {
    pub target_bin: u32,
    pub candidate_encodings: Vec<Vec<u32>>,
    pub scores: Vec<f64>,
    pub selected: usize,
}

/// Record of one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub draws: Vec<DrawLog>,
    /// Skill updates applied: sandwich pair plus one per draw.
    pub updates: usize,
    /// Estimator evaluations spent on candidates (k per draw).
    pub eval_cost: usize,
}

/// Simulated accuracy of a sub-network under the current shared weights.
pub fn eval_subnet(
    state: &SupernetState,
    params: &OracleParams,
    space: &SearchSpace,
    arch: &ArchitectureConfig,
) -> Result<f64> {
    Ok(oracle_accuracy(params, space, arch)? * state.mean_skill(arch))
}

fn draw_candidates<R: Rng + ?Sized>(
    space: &SearchSpace,
    tables: &SamplerTables,
    strategy: &StrategyConfig,
    rng: &mut R,
) -> Result<(u32, Vec<ArchitectureConfig>)> {
    for _ in 0..TARGET_RESAMPLE_LIMIT {
        let target_bin = sample_target_flops(&tables.prior, rng)?;
        if let Some(pool) = &strategy.offline_pool {
            let members: Vec<&ArchitectureConfig> = pool
                .iter()
                .filter(|arch| {
                    arch_flops(space, arch)
                        .map(|f| tables.prior.binning.bin(f) == target_bin)
                        .unwrap_or(false)
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            let picks = (0..strategy.k)
                .map(|_| members[rng.gen_range(0..members.len())].clone())
                .collect();
            return Ok((target_bin, picks));
        }
        let mut candidates = Vec::with_capacity(strategy.k);
        let mut failed = false;
        for _ in 0..strategy.k {
            match rejection_sample(space, &tables.conditional, target_bin, FACTORIZED_MAX_TRIALS, rng)
            {
                Ok(sample) => candidates.push(sample.arch),
                Err(Error::MaxTrialsExceeded { .. }) | Err(Error::UnpopulatedBin { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !failed {
            return Ok((target_bin, candidates));
        }
    }
    Err(Error::Training(format!(
        "no valid candidates after {TARGET_RESAMPLE_LIMIT} target resamples"
    )))
}

/// One attentive training step: sandwich updates on the smallest and largest
/// sub-networks, then `n` estimator-guided selections among same-bin
/// candidate sets.
pub fn train_step<R: Rng + ?Sized>(
    state: &mut SupernetState,
    space: &SearchSpace,
    tables: &SamplerTables,
    params: &OracleParams,
    strategy: &StrategyConfig,
    rng: &mut R,
) -> Result<StepLog> {
    strategy.check()?;
    state.train_arch(&space.smallest_arch());
    state.train_arch(&space.largest_arch());
    let mut updates = 2;
    let mut eval_cost = 0;
    let mut draws = Vec::with_capacity(strategy.n);
    for _ in 0..strategy.n {
        let (target_bin, candidates) = draw_candidates(space, tables, strategy, rng)?;
        let mut scored = Vec::with_capacity(candidates.len());
        for arch in &candidates {
            let score = match &strategy.estimator {
                EstimatorKind::SupernetLoss { noise_sigma } => {
                    let acc = eval_subnet(state, params, space, arch)?;
                    minibatch_loss_proxy(acc, *noise_sigma, rng)
                }
                EstimatorKind::PredictedAcc(predictor) => {
                    let features: Vec<f64> =
                        space.encode(arch)?.iter().map(|&v| v as f64).collect();
                    predictor.predict(&features)?
                }
            };
            eval_cost += 1;
            scored.push(ScoredCandidate {
                score,
                flops: arch_flops(space, arch)?.0,
                encoding: space.encode(arch)?,
            });
        }
        let selected = match strategy.mode {
            SamplingMode::Uniform => 0,
            SamplingMode::BestUp => select_attentive(&scored, SelectionMode::Best)?,
            SamplingMode::WorstUp => select_attentive(&scored, SelectionMode::Worst)?,
        };
        state.train_arch(&candidates[selected]);
        updates += 1;
        draws.push(DrawLog {
            target_bin,
            candidate_encodings: scored.iter().map(|c| c.encoding.clone()).collect(),
            scores: scored.iter().map(|c| c.score).collect(),
            selected,
        });
    }
    state.step_count += 1;
    Ok(StepLog {
        step: state.step_count,
        draws,
        updates,
        eval_cost,
    })
}

/// Periodic probe-set evaluation of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub buckets: Vec<BucketSummary>,
    pub best_front: Vec<EvaluatedPoint>,
    pub worst_front: Vec<EvaluatedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
}

/// Training loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub steps: u64,
    pub snapshot_every: u64,
    pub initial_skill: f64,
    pub eta: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            steps: 5000,
            snapshot_every: 1000,
            initial_skill: 0.30,
            eta: 0.01,
        }
    }
}

/// Width of the probe-set FLOPs buckets, in MFLOPs.
pub const PROBE_BUCKET_MFLOPS: f64 = 50.0;

/// Draw a fixed probe set: up to `per_bucket` architectures per 50-MFLOP
/// bucket, taken from the populated sampler bins inside each bucket.
pub fn default_probe_set<R: Rng + ?Sized>(
    space: &SearchSpace,
    tables: &SamplerTables,
    per_bucket: usize,
    rng: &mut R,
) -> Result<Vec<ArchitectureConfig>> {
    let bins: Vec<u32> = tables.prior.populated_bins().collect();
    if bins.is_empty() {
        return Err(Error::EmptyPrior);
    }
    let step = tables.prior.binning.step;
    let bucket_of = |bin: u32| (bin as f64 * step / PROBE_BUCKET_MFLOPS).floor() as u32;
    let mut probe = Vec::new();
    let mut bucket_bins: Vec<(u32, Vec<u32>)> = Vec::new();
    for &bin in &bins {
        let bucket = bucket_of(bin);
        match bucket_bins.last_mut() {
            Some((b, list)) if *b == bucket => list.push(bin),
            _ => bucket_bins.push((bucket, vec![bin])),
        }
    }
    for (_, bins) in bucket_bins {
        for i in 0..per_bucket {
            let bin = bins[i % bins.len()];
            match rejection_sample(space, &tables.conditional, bin, FACTORIZED_MAX_TRIALS, rng) {
                Ok(sample) => probe.push(sample.arch),
                Err(Error::MaxTrialsExceeded { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(probe)
}

/// Evaluate the probe set under the current state and summarize it.
pub fn probe_snapshot(
    state: &SupernetState,
    space: &SearchSpace,
    params: &OracleParams,
    probe_set: &[ArchitectureConfig],
) -> Result<Snapshot> {
    let points: Vec<EvaluatedPoint> = probe_set
        .iter()
        .enumerate()
        .map(|(i, arch)| {
            Ok(EvaluatedPoint {
                arch_id: i as u64,
                flops: arch_flops(space, arch)?.0,
                score: eval_subnet(state, params, space, arch)?,
            })
        })
        .collect::<Result<_>>()?;
    let max_flops = points.iter().map(|p| p.flops).fold(0.0f64, f64::max);
    let edge_count = (max_flops / PROBE_BUCKET_MFLOPS).floor() as usize + 2;
    let edges: Vec<f64> = (0..edge_count)
        .map(|i| i as f64 * PROBE_BUCKET_MFLOPS)
        .collect();
    Ok(Snapshot {
        step: state.step_count,
        buckets: bucket_stats(&points, &edges)?,
        best_front: best_pareto(&points)?,
        worst_front: worst_pareto(&points)?,
    })
}

/// Run the attentive training loop, snapshotting the fixed probe set.
pub fn run_training<R: Rng + ?Sized>(
    space: &SearchSpace,
    tables: &SamplerTables,
    params: &OracleParams,
    strategy: &StrategyConfig,
    training: &TrainingConfig,
    probe_set: &[ArchitectureConfig],
    rng: &mut R,
) -> Result<(SupernetState, Trajectory)> {
    if training.steps == 0 {
        return Err(Error::Config("training needs at least one step".into()));
    }
    let mut state = SupernetState::new(space, training.initial_skill, training.eta);
    let mut trajectory = Trajectory::default();
    for step in 1..=training.steps {
        train_step(&mut state, space, tables, params, strategy, rng)?;
        if step % training.snapshot_every == 0 || step == training.steps {
            trajectory
                .snapshots
                .push(probe_snapshot(&state, space, params, probe_set)?);
        }
    }
    Ok((state, trajectory))
}

/// Offline attentive pool: the best or worst Pareto set of `pool_size`
/// uniform draws scored by the accuracy predictor.
pub fn build_offline_pool<R: Rng + ?Sized>(
    space: &SearchSpace,
    predictor: &AccuracyPredictor,
    pool_size: usize,
    mode: SelectionMode,
    rng: &mut R,
) -> Result<Vec<ArchitectureConfig>> {
    if pool_size == 0 {
        return Err(Error::EmptyInput("offline pool of size zero"));
    }
    let archs: Vec<ArchitectureConfig> =
        (0..pool_size).map(|_| space.uniform_sample(rng)).collect();
    let points: Vec<EvaluatedPoint> = archs
        .iter()
        .enumerate()
        .map(|(i, arch)| {
            let features: Vec<f64> = space.encode(arch)?.iter().map(|&v| v as f64).collect();
            Ok(EvaluatedPoint {
                arch_id: i as u64,
                flops: arch_flops(space, arch)?.0,
                score: predictor.predict(&features)?,
            })
        })
        .collect::<Result<_>>()?;
    let front = match mode {
        SelectionMode::Best => best_pareto(&points)?,
        SelectionMode::Worst => worst_pareto(&points)?,
    };
    Ok(front
        .iter()
        .map(|p| archs[p.arch_id as usize].clone())
        .collect())
}

/// Front report of a scored population; convenience for pool verification.
pub fn score_population(
    space: &SearchSpace,
    params: &OracleParams,
    state: &SupernetState,
    archs: &[ArchitectureConfig],
) -> Result<FrontReport> {
    let points: Vec<EvaluatedPoint> = archs
        .iter()
        .enumerate()
        .map(|(i, arch)| {
            Ok(EvaluatedPoint {
                arch_id: i as u64,
                flops: arch_flops(space, arch)?.0,
                score: eval_subnet(state, params, space, arch)?,
            })
        })
        .collect::<Result<_>>()?;
    FrontReport::compute(&points)
}
