//! Stage-2 resource-constrained evolutionary search over a trained scorer.
//!
//! HAT-style protocol: seed a constraint-satisfying population from the
//! FLOPs sampler, then iterate mutation and crossover from the top parents
//! with an elitist merge. The FLOPs constraint is strict (<).

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops::arch_flops;
use crate::sampler::{rejection_sample, SamplerTables, FACTORIZED_MAX_TRIALS};
use crate::space::{ArchitectureConfig, SearchSpace};

/// Evolution hyperparameters; defaults follow the two-stage NAS protocol
/// (population 512, 128 mutations + 128 crossovers, 20 iterations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub init_population: usize,
    pub mutate_size: usize,
    pub crossover_size: usize,
    pub iterations: usize,
    pub mutation_prob: f64,
    pub parent_fraction: f64,
    pub max_retries: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            init_population: 512,
            mutate_size: 128,
            crossover_size: 128,
            iterations: 20,
            mutation_prob: 0.1,
            parent_fraction: 0.25,
            max_retries: 100,
        }
    }
}

impl EvolutionConfig {
    pub fn check(&self) -> Result<()> {
        if self.init_population < 1 || self.mutate_size < 1 || self.crossover_size < 1 {
            return Err(Error::Config("evolution sizes must be >= 1".into()));
        }
        if !(0.0 < self.mutation_prob && self.mutation_prob <= 1.0) {
            return Err(Error::Config("mutation_prob must be in (0, 1]".into()));
        }
        if !(0.0 < self.parent_fraction && self.parent_fraction <= 1.0) {
            return Err(Error::Config("parent_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Search outcome for one FLOPs constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResult {
    pub constraint: f64,
    pub best_arch: ArchitectureConfig,
    pub best_score: f64,
    pub evaluated_count: u64,
    /// Best score after seeding and after each iteration.
    pub history: Vec<f64>,
}

/// Results across a set of constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub best_per_constraint: Vec<ConstraintResult>,
}

/// Resample each axis over its other choices with probability
/// `mutation_prob`; retried until the child satisfies the constraint, else
/// the parent is returned unchanged.
pub fn mutate<R: Rng + ?Sized>(
    space: &SearchSpace,
    parent: &ArchitectureConfig,
    mutation_prob: f64,
    constraint: f64,
    max_retries: usize,
    rng: &mut R,
) -> Result<ArchitectureConfig> {
    for _ in 0..max_retries {
        let mut child = parent.clone();
        for (axis, spec) in space.axes().iter().enumerate() {
            if spec.choices.len() > 1 && rng.gen::<f64>() < mutation_prob {
                let current = child.choice_indices[axis];
                let mut pick = rng.gen_range(0..spec.choices.len() - 1);
                if pick >= current {
                    pick += 1;
                }
                child.choice_indices[axis] = pick;
            }
        }
        space.enforce_coupling(&mut child);
        if arch_flops(space, &child)?.0 < constraint {
            return Ok(child);
        }
    }
    Ok(parent.clone())
}

/// Uniform per-axis crossover; retried for the constraint, falling back to
/// the better-scoring parent.
pub fn crossover<R: Rng + ?Sized>(
    space: &SearchSpace,
    parent_a: (&ArchitectureConfig, f64),
    parent_b: (&ArchitectureConfig, f64),
    constraint: f64,
    max_retries: usize,
    rng: &mut R,
) -> Result<ArchitectureConfig> {
    for _ in 0..max_retries {
        let mut child = ArchitectureConfig {
            choice_indices: parent_a
                .0
                .choice_indices
                .iter()
                .zip(&parent_b.0.choice_indices)
                .map(|(&a, &b)| if rng.gen::<bool>() { a } else { b })
                .collect(),
        };
        space.enforce_coupling(&mut child);
        if arch_flops(space, &child)?.0 < constraint {
            return Ok(child);
        }
    }
    Ok(if parent_a.1 >= parent_b.1 {
        parent_a.0.clone()
    } else {
        parent_b.0.clone()
    })
}

fn seed_population<R: Rng + ?Sized>(
    space: &SearchSpace,
    tables: &SamplerTables,
    size: usize,
    constraint: f64,
    rng: &mut R,
) -> Result<Vec<ArchitectureConfig>> {
    let binning = tables.prior.binning;
    let feasible: Vec<(u32, u64)> = tables
        .prior
        .counts
        .iter()
        .filter(|(&bin, &count)| count > 0 && binning.lower_edge(bin) < constraint)
        .map(|(&bin, &count)| (bin, count))
        .collect();
    let total: u64 = feasible.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return Err(Error::ConstraintUnsatisfiable { constraint });
    }
    let mut population = Vec::with_capacity(size);
    let mut attempts = 0u64;
    let budget = size as u64 * 1000;
    while population.len() < size {
        attempts += 1;
        if attempts > budget {
            return Err(Error::ConstraintUnsatisfiable { constraint });
        }
        let mut draw = rng.gen_range(0..total);
        let bin = feasible
            .iter()
            .find(|(_, count)| {
                if draw < *count {
                    true
                } else {
                    draw -= count;
                    false
                }
            })
            .map(|(bin, _)| *bin)
            .expect("counts sum to total");
        match rejection_sample(space, &tables.conditional, bin, FACTORIZED_MAX_TRIALS, rng) {
            Ok(sample) => {
                if arch_flops(space, &sample.arch)?.0 < constraint {
                    population.push(sample.arch);
                }
            }
            Err(Error::MaxTrialsExceeded { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(population)
}

/// Run the evolutionary search for a single FLOPs constraint.
///
/// `eval_fn` scores an architecture (higher is better) and must be pure;
/// duplicate architectures are scored once via a memo on their indices.
pub fn evolutionary_search<R, F>(
    space: &SearchSpace,
    tables: &SamplerTables,
    eval_fn: F,
    config: &EvolutionConfig,
    constraint: f64,
    rng: &mut R,
) -> Result<ConstraintResult>
where
    R: Rng + ?Sized,
    F: Fn(&ArchitectureConfig) -> Result<f64>,
{
    config.check()?;
    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut evaluated_count = 0u64;
    let mut score_of = |arch: &ArchitectureConfig, count: &mut u64| -> Result<f64> {
        *count += 1;
        if let Some(&score) = memo.get(&arch.choice_indices) {
            return Ok(score);
        }
        let score = eval_fn(arch)?;
        memo.insert(arch.choice_indices.clone(), score);
        Ok(score)
    };

    let seeds = seed_population(space, tables, config.init_population, constraint, rng)?;
    let mut population: Vec<(ArchitectureConfig, f64)> = seeds
        .into_iter()
        .map(|arch| {
            let score = score_of(&arch, &mut evaluated_count)?;
            Ok((arch, score))
        })
        .collect::<Result<_>>()?;
    sort_population(space, &mut population);

    let mut history = vec![population[0].1];
    for _ in 0..config.iterations {
        let parent_count = ((config.parent_fraction * population.len() as f64).ceil() as usize)
            .clamp(1, population.len());
        let parents = &population[..parent_count];

        let mut children: Vec<ArchitectureConfig> = Vec::new();
        for _ in 0..config.mutate_size {
            let parent = &parents[rng.gen_range(0..parent_count)].0;
            children.push(mutate(
                space,
                parent,
                config.mutation_prob,
                constraint,
                config.max_retries,
                rng,
            )?);
        }
        for _ in 0..config.crossover_size {
            let a = &parents[rng.gen_range(0..parent_count)];
            let b = &parents[rng.gen_range(0..parent_count)];
            children.push(crossover(
                space,
                (&a.0, a.1),
                (&b.0, b.1),
                constraint,
                config.max_retries,
                rng,
            )?);
        }

        let mut scored: Vec<(ArchitectureConfig, f64)> = children
            .into_iter()
            .map(|arch| {
                let score = score_of(&arch, &mut evaluated_count)?;
                Ok((arch, score))
            })
            .collect::<Result<_>>()?;
        population.append(&mut scored);
        sort_population(space, &mut population);
        population.truncate(config.init_population);
        history.push(population[0].1);
    }

    let (best_arch, best_score) = population[0].clone();
    Ok(ConstraintResult {
        constraint,
        best_arch,
        best_score,
        evaluated_count,
        history,
    })
}

fn sort_population(_space: &SearchSpace, population: &mut [(ArchitectureConfig, f64)]) {
    population.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.choice_indices.cmp(&b.0.choice_indices))
    });
}

/// Run the search for each constraint in turn, sharing nothing but the rng.
pub fn search_constraints<R, F>(
    space: &SearchSpace,
    tables: &SamplerTables,
    eval_fn: F,
    config: &EvolutionConfig,
    constraints: &[f64],
    rng: &mut R,
) -> Result<EvolutionResult>
where
    R: Rng + ?Sized,
    F: Fn(&ArchitectureConfig) -> Result<f64>,
{
    let mut results = Vec::with_capacity(constraints.len());
    for &constraint in constraints {
        results.push(evolutionary_search(
            space, tables, &eval_fn, config, constraint, rng,
        )?);
    }
    Ok(EvolutionResult {
        best_per_constraint: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{oracle_accuracy, OracleParams};
    use crate::rng::seeded_rng;
    use crate::sampler::FlopsBinning;
    use crate::space::{default_space, tests_tiny_space};

    #[test]
    fn mutation_prob_zero_is_identity() {
        let space = default_space();
        let parent = space.uniform_sample(&mut seeded_rng(1));
        let child = mutate(&space, &parent, 0.0, f64::INFINITY, 10, &mut seeded_rng(2)).unwrap();
        assert_eq!(child, parent);
    }

    #[test]
    fn single_choice_axes_cannot_mutate() {
        let space = crate::space::SearchSpace::new(
            vec![96],
            vec![16],
            vec![crate::space::StageSpec {
                name: "mb1".into(),
                widths: vec![16],
                depths: vec![1],
                kernels: vec![3],
                expansions: vec![1],
                stride: 1,
                se: false,
            }],
            vec![128],
            6,
            10,
        )
        .unwrap();
        let parent = space.smallest_arch();
        let child = mutate(&space, &parent, 1.0, f64::INFINITY, 10, &mut seeded_rng(3)).unwrap();
        assert_eq!(child, parent);
    }

    #[test]
    fn mutation_respects_constraint_or_returns_parent() {
        let space = default_space();
        let constraint = 400.0;
        let mut rng = seeded_rng(4);
        let tables = SamplerTables::build(&space, 20_000, FlopsBinning::default(), 4).unwrap();
        let seeds = seed_population(&space, &tables, 20, constraint, &mut rng).unwrap();
        for parent in seeds {
            let child = mutate(&space, &parent, 0.5, constraint, 20, &mut rng).unwrap();
            let f = arch_flops(&space, &child).unwrap().0;
            assert!(f < constraint || child == parent);
        }
    }

    #[test]
    fn crossover_of_identical_parents() {
        let space = default_space();
        let parent = space.uniform_sample(&mut seeded_rng(5));
        let child = crossover(
            &space,
            (&parent, 0.5),
            (&parent, 0.5),
            f64::INFINITY,
            10,
            &mut seeded_rng(6),
        )
        .unwrap();
        assert_eq!(child, parent);
    }

    #[test]
    fn crossover_axes_come_from_parents_with_half_inheritance() {
        let space = default_space();
        let a = space.smallest_arch();
        let b = space.largest_arch();
        let mut rng = seeded_rng(7);
        let mut from_a = vec![0u64; space.axis_count()];
        let n = 10_000;
        for _ in 0..n {
            let child =
                crossover(&space, (&a, 0.0), (&b, 0.0), f64::INFINITY, 1, &mut rng).unwrap();
            for (axis, &idx) in child.choice_indices.iter().enumerate() {
                assert!(idx == a.choice_indices[axis] || idx == b.choice_indices[axis]);
                // distinct on every axis except single-choice ones
                if idx == a.choice_indices[axis] && idx != b.choice_indices[axis] {
                    from_a[axis] += 1;
                }
            }
        }
        for (axis, spec) in space.axes().iter().enumerate() {
            if spec.choices.len() > 1 {
                let ratio = from_a[axis] as f64 / n as f64;
                assert!((ratio - 0.5).abs() < 0.02, "{}: {ratio}", spec.name);
            }
        }
    }

    fn oracle_eval(
        space: &SearchSpace,
        params: OracleParams,
    ) -> impl Fn(&ArchitectureConfig) -> Result<f64> + '_ {
        move |arch| oracle_accuracy(&params, space, arch)
    }

    #[test]
    fn default_budget_is_5632_evaluation_slots() {
        let space = tests_tiny_space();
        let tables = SamplerTables::build(&space, 10_000, FlopsBinning::new(0.05).unwrap(), 8).unwrap();
        let params = OracleParams::default();
        let result = evolutionary_search(
            &space,
            &tables,
            oracle_eval(&space, params),
            &EvolutionConfig::default(),
            f64::INFINITY,
            &mut seeded_rng(9),
        )
        .unwrap();
        assert_eq!(result.evaluated_count, 512 + 20 * 256);
    }

    #[test]
    fn zero_iterations_returns_best_seed() {
        let space = default_space();
        let tables = SamplerTables::build(&space, 20_000, FlopsBinning::default(), 10).unwrap();
        let params = OracleParams::default();
        let config = EvolutionConfig {
            iterations: 0,
            init_population: 64,
            ..Default::default()
        };
        let mut rng = seeded_rng(11);
        let result = evolutionary_search(
            &space,
            &tables,
            oracle_eval(&space, params),
            &config,
            600.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(result.evaluated_count, 64);
        assert_eq!(result.history.len(), 1);
        assert_eq!(result.history[0], result.best_score);
    }

    #[test]
    fn search_is_deterministic_and_monotone() {
        let space = default_space();
        let tables = SamplerTables::build(&space, 20_000, FlopsBinning::default(), 12).unwrap();
        let params = OracleParams::default();
        let config = EvolutionConfig {
            init_population: 64,
            mutate_size: 16,
            crossover_size: 16,
            iterations: 5,
            ..Default::default()
        };
        let run = |seed| {
            evolutionary_search(
                &space,
                &tables,
                oracle_eval(&space, params),
                &config,
                500.0,
                &mut seeded_rng(seed),
            )
            .unwrap()
        };
        let a = run(13);
        let b = run(13);
        assert_eq!(a, b);
        assert!(a.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(arch_flops(&space, &a.best_arch).unwrap().0 < 500.0);
    }

    #[test]
    fn larger_budgets_never_hurt_with_monotone_oracle() {
        let space = default_space();
        let tables = SamplerTables::build(&space, 50_000, FlopsBinning::default(), 14).unwrap();
        let params = OracleParams {
            epsilon: 0.0,
            ..Default::default()
        };
        let config = EvolutionConfig {
            init_population: 64,
            mutate_size: 16,
            crossover_size: 16,
            iterations: 5,
            ..Default::default()
        };
        let result = search_constraints(
            &space,
            &tables,
            oracle_eval(&space, params),
            &config,
            &[250.0, 350.0, 450.0, 600.0],
            &mut seeded_rng(15),
        )
        .unwrap();
        let scores: Vec<f64> = result
            .best_per_constraint
            .iter()
            .map(|r| r.best_score)
            .collect();
        assert!(scores.windows(2).all(|w| w[1] >= w[0]), "{scores:?}");
    }

    #[test]
    fn unsatisfiable_constraint_errors() {
        let space = default_space();
        let tables = SamplerTables::build(&space, 5_000, FlopsBinning::default(), 16).unwrap();
        let params = OracleParams::default();
        assert!(matches!(
            evolutionary_search(
                &space,
                &tables,
                oracle_eval(&space, params),
                &EvolutionConfig::default(),
                10.0,
                &mut seeded_rng(17),
            ),
            Err(Error::ConstraintUnsatisfiable { .. })
        ));
    }
}
