//! Empirical FLOPs prior and factorized conditional tables, plus the
//! rejection samplers that draw FLOPs-constrained architectures from them.
//!
//! Tables are built offline from m uniform draws. FLOPs are discretized into
//! half-open bins [j*t, (j+1)*t); the prior is the bin histogram and the
//! conditionals are per-bin, per-axis choice frequencies. The factorized
//! proposal draws each axis independently from its conditional and accepts
//! when the proposal lands in the requested bin.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops::{arch_flops, Mflops};
use crate::rng::substream_indexed;
use crate::space::{ArchitectureConfig, SearchSpace};

/// Default proposal budget for the factorized sampler.
pub const FACTORIZED_MAX_TRIALS: u64 = 10_000;
/// Default proposal budget for the naive uniform baseline.
pub const NAIVE_MAX_TRIALS: u64 = 1_000_000;

const BUILD_CHUNK: u64 = 65_536;

/// FLOPs discretization with step t (default 25 MFLOPs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsBinning {
    pub step: f64,
}

impl Default for FlopsBinning {
    fn default() -> Self {
        FlopsBinning { step: 25.0 }
    }
}

impl FlopsBinning {
    pub fn new(step: f64) -> Result<Self> {
        if step <= 0.0 || !step.is_finite() {
            return Err(Error::Config(format!("bin step must be positive, got {step}")));
        }
        Ok(FlopsBinning { step })
    }

    pub fn bin(&self, flops: Mflops) -> u32 {
        (flops.0 / self.step).floor() as u32
    }

    /// Inclusive lower edge of a bin, in MFLOPs.
    pub fn lower_edge(&self, bin: u32) -> f64 {
        bin as f64 * self.step
    }
}

/// Histogram of FLOPs bins over m uniform architecture draws.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPrior {
    pub binning: FlopsBinning,
    pub counts: BTreeMap<u32, u64>,
    pub total: u64,
}

impl EmpiricalPrior {
    pub fn from_counts(binning: FlopsBinning, counts: BTreeMap<u32, u64>) -> Self {
        let total = counts.values().sum();
        EmpiricalPrior {
            binning,
            counts,
            total,
        }
    }

    pub fn probability(&self, bin: u32) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.counts.get(&bin).unwrap_or(&0) as f64 / self.total as f64
    }

    pub fn populated_bins(&self) -> impl Iterator<Item = u32> + '_ {
        self.counts.iter().filter(|(_, &c)| c > 0).map(|(&b, _)| b)
    }

    pub fn mode(&self) -> Option<u32> {
        self.counts
            .iter()
            .max_by_key(|(&bin, &count)| (count, std::cmp::Reverse(bin)))
            .map(|(&bin, _)| bin)
    }
}

/// Per-bin factorized proposal distributions: one categorical per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub binning: FlopsBinning,
    /// bin -> per-axis choice probabilities, in axis order.
    pub bins: BTreeMap<u32, Vec<Vec<f64>>>,
}

impl ConditionalTable {
    pub fn axis_distribution(&self, bin: u32, axis: usize) -> Option<&[f64]> {
        self.bins.get(&bin).and_then(|axes| axes.get(axis)).map(Vec::as_slice)
    }
}

/// An accepted constrained sample together with its proposal count.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub arch: ArchitectureConfig,
    pub trials: u64,
}

/// Build prior and conditional tables from `m` uniform draws.
///
/// Sampling is chunked and runs in parallel; each chunk uses an independent
/// substream of `seed` and counts merge by addition, so the result is
/// identical to a sequential build with the same chunking.
pub fn build_tables(
    space: &SearchSpace,
    m: u64,
    binning: FlopsBinning,
    seed: u64,
) -> Result<(EmpiricalPrior, ConditionalTable)> {
    if m == 0 {
        return Err(Error::Config("table construction needs m >= 1".into()));
    }
    let chunk_count = m.div_ceil(BUILD_CHUNK);
    let choice_counts: Vec<usize> = space.axes().iter().map(|a| a.choices.len()).collect();

    #[derive(Clone)]
    struct Accum {
        bins: BTreeMap<u32, (u64, Vec<Vec<u64>>)>,
    }

    let merged = (0..chunk_count)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = substream_indexed(seed, "sampler.build", chunk);
            let lo = chunk * BUILD_CHUNK;
            let hi = ((chunk + 1) * BUILD_CHUNK).min(m);
            let mut acc = Accum {
                bins: BTreeMap::new(),
            };
            for _ in lo..hi {
                let arch = space.uniform_sample(&mut rng);
                let flops = arch_flops(space, &arch).expect("uniform sample is valid");
                let bin = binning.bin(flops);
                let entry = acc.bins.entry(bin).or_insert_with(|| {
                    (0, choice_counts.iter().map(|&n| vec![0u64; n]).collect())
                });
                entry.0 += 1;
                for (axis, &idx) in arch.choice_indices.iter().enumerate() {
                    entry.1[axis][idx] += 1;
                }
            }
            acc
        })
        .reduce(
            || Accum {
                bins: BTreeMap::new(),
            },
            |mut a, b| {
                for (bin, (count, axes)) in b.bins {
                    let entry = a.bins.entry(bin).or_insert_with(|| {
                        (0, choice_counts.iter().map(|&n| vec![0u64; n]).collect())
                    });
                    entry.0 += count;
                    for (dst, src) in entry.1.iter_mut().zip(axes) {
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                a
            },
        );

    let mut prior_counts = BTreeMap::new();
    let mut cond_bins = BTreeMap::new();
    for (bin, (count, axes)) in merged.bins {
        prior_counts.insert(bin, count);
        let probs = axes
            .into_iter()
            .map(|choices| {
                choices
                    .into_iter()
                    .map(|c| c as f64 / count as f64)
                    .collect()
            })
            .collect();
        cond_bins.insert(bin, probs);
    }
    Ok((
        EmpiricalPrior::from_counts(binning, prior_counts),
        ConditionalTable {
            binning,
            bins: cond_bins,
        },
    ))
}

/// Draw a target FLOPs bin with probability proportional to its prior count.
pub fn sample_target_flops<R: Rng + ?Sized>(prior: &EmpiricalPrior, rng: &mut R) -> Result<u32> {
    if prior.total == 0 {
        return Err(Error::EmptyPrior);
    }
    let mut draw = rng.gen_range(0..prior.total);
    for (&bin, &count) in &prior.counts {
        if draw < count {
            return Ok(bin);
        }
        draw -= count;
    }
    unreachable!("counts sum to total")
}

fn weighted_choice<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if draw < w {
            return i;
        }
        draw -= w;
    }
    // numerical fallback: last positive-weight choice
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Rejection-sample an architecture for `target_bin` using the factorized
/// per-axis conditionals as the proposal.
pub fn rejection_sample<R: Rng + ?Sized>(
    space: &SearchSpace,
    conditional: &ConditionalTable,
    target_bin: u32,
    max_trials: u64,
    rng: &mut R,
) -> Result<SampleResult> {
    let axes = conditional
        .bins
        .get(&target_bin)
        .filter(|axes| !axes.is_empty())
        .ok_or(Error::UnpopulatedBin { bin: target_bin })?;
    for trial in 1..=max_trials {
        let mut arch = ArchitectureConfig {
            choice_indices: axes.iter().map(|w| weighted_choice(w, rng)).collect(),
        };
        space.enforce_coupling(&mut arch);
        let flops = arch_flops(space, &arch)?;
        if conditional.binning.bin(flops) == target_bin {
            return Ok(SampleResult { arch, trials: trial });
        }
    }
    Err(Error::MaxTrialsExceeded {
        bin: target_bin,
        max_trials,
    })
}

/// Baseline: propose uniformly from the whole space and reject on bin.
pub fn naive_rejection_sample<R: Rng + ?Sized>(
    space: &SearchSpace,
    binning: FlopsBinning,
    target_bin: u32,
    max_trials: u64,
    rng: &mut R,
) -> Result<SampleResult> {
    for trial in 1..=max_trials {
        let arch = space.uniform_sample(rng);
        let flops = arch_flops(space, &arch)?;
        if binning.bin(flops) == target_bin {
            return Ok(SampleResult { arch, trials: trial });
        }
    }
    Err(Error::MaxTrialsExceeded {
        bin: target_bin,
        max_trials,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TablesJson {
    step: f64,
    total: u64,
    bins: Vec<BinJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BinJson {
    bin: u32,
    count: u64,
    axes: Vec<AxisJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AxisJson {
    name: String,
    probs: Vec<f64>,
}

/// Prior and conditional tables bundled for persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerTables {
    pub prior: EmpiricalPrior,
    pub conditional: ConditionalTable,
}

impl SamplerTables {
    pub fn build(space: &SearchSpace, m: u64, binning: FlopsBinning, seed: u64) -> Result<Self> {
        let (prior, conditional) = build_tables(space, m, binning, seed)?;
        Ok(SamplerTables { prior, conditional })
    }

    pub fn to_json(&self, space: &SearchSpace) -> TablesJsonDoc {
        TablesJsonDoc(TablesJson {
            step: self.prior.binning.step,
            total: self.prior.total,
            bins: self
                .prior
                .counts
                .iter()
                .map(|(&bin, &count)| BinJson {
                    bin,
                    count,
                    axes: space
                        .axes()
                        .iter()
                        .enumerate()
                        .map(|(i, axis)| AxisJson {
                            name: axis.name.clone(),
                            probs: self.conditional.bins[&bin][i].clone(),
                        })
                        .collect(),
                })
                .collect(),
        })
    }

    pub fn save(&self, space: &SearchSpace, path: &Path) -> Result<()> {
        let doc = self.to_json(space);
        std::fs::write(path, serde_json::to_string_pretty(&doc.0)?)?;
        Ok(())
    }

    pub fn load(space: &SearchSpace, path: &Path) -> Result<Self> {
        let doc: TablesJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let binning = FlopsBinning::new(doc.step)?;
        let mut counts = BTreeMap::new();
        let mut bins = BTreeMap::new();
        for bin in doc.bins {
            counts.insert(bin.bin, bin.count);
            if bin.axes.len() != space.axis_count() {
                return Err(Error::Config(format!(
                    "tables have {} axes, space has {}",
                    bin.axes.len(),
                    space.axis_count()
                )));
            }
            for (axis, spec) in bin.axes.iter().zip(space.axes()) {
                if axis.name != spec.name || axis.probs.len() != spec.choices.len() {
                    return Err(Error::Config(format!(
                        "axis mismatch between tables and space at {}",
                        spec.name
                    )));
                }
            }
            bins.insert(bin.bin, bin.axes.into_iter().map(|a| a.probs).collect());
        }
        Ok(SamplerTables {
            prior: EmpiricalPrior::from_counts(binning, counts),
            conditional: ConditionalTable { binning, bins },
        })
    }
}

/// Serializable view of [`SamplerTables`]; kept opaque so the wire schema
/// stays fixed.
#[derive(Debug, Serialize)]
pub struct TablesJsonDoc(TablesJson);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::space::{default_space, tests_tiny_space, SearchSpace, StageSpec};

    fn single_arch_space() -> SearchSpace {
        SearchSpace::new(
            vec![96],
            vec![16],
            vec![StageSpec {
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
        .unwrap()
    }

    #[test]
    fn single_arch_prior_is_point_mass() {
        let space = single_arch_space();
        let (prior, cond) = build_tables(&space, 100, FlopsBinning::default(), 1).unwrap();
        assert_eq!(prior.counts.len(), 1);
        let bin = *prior.counts.keys().next().unwrap();
        assert_eq!(prior.probability(bin), 1.0);
        let f = arch_flops(&space, &space.smallest_arch()).unwrap();
        assert_eq!(bin, prior.binning.bin(f));

        let mut rng = seeded_rng(2);
        let s = rejection_sample(&space, &cond, bin, 10, &mut rng).unwrap();
        assert_eq!(s.trials, 1);
        let s = naive_rejection_sample(&space, prior.binning, bin, 10, &mut rng).unwrap();
        assert_eq!(s.trials, 1);
    }

    #[test]
    fn target_flops_ratio_and_determinism() {
        let binning = FlopsBinning::default();
        let prior = EmpiricalPrior::from_counts(
            binning,
            BTreeMap::from([(10, 750_000u64), (20, 250_000u64)]),
        );
        let mut rng = seeded_rng(7);
        let n = 100_000;
        let tens = (0..n)
            .filter(|_| sample_target_flops(&prior, &mut rng).unwrap() == 10)
            .count();
        let freq = tens as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.02, "freq = {freq}");

        let a: Vec<u32> = {
            let mut r = seeded_rng(9);
            (0..50).map(|_| sample_target_flops(&prior, &mut r).unwrap()).collect()
        };
        let b: Vec<u32> = {
            let mut r = seeded_rng(9);
            (0..50).map(|_| sample_target_flops(&prior, &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn empty_prior_errors() {
        let prior = EmpiricalPrior::from_counts(FlopsBinning::default(), BTreeMap::new());
        assert!(matches!(
            sample_target_flops(&prior, &mut seeded_rng(0)),
            Err(Error::EmptyPrior)
        ));
    }

    #[test]
    fn accepted_samples_land_in_bin() {
        let space = default_space();
        let tables = SamplerTables::build(&space, 50_000, FlopsBinning::default(), 3).unwrap();
        let mut rng = seeded_rng(4);
        for _ in 0..50 {
            let bin = sample_target_flops(&tables.prior, &mut rng).unwrap();
            let s = rejection_sample(&space, &tables.conditional, bin, FACTORIZED_MAX_TRIALS, &mut rng)
                .unwrap();
            let f = arch_flops(&space, &s.arch).unwrap();
            assert_eq!(tables.prior.binning.bin(f), bin);
        }
    }

    #[test]
    fn unpopulated_bin_errors() {
        let space = tests_tiny_space();
        let (prior, cond) = build_tables(&space, 1000, FlopsBinning::default(), 5).unwrap();
        let empty = prior.counts.keys().max().unwrap() + 1000;
        assert!(matches!(
            rejection_sample(&space, &cond, empty, 10, &mut seeded_rng(0)),
            Err(Error::UnpopulatedBin { .. })
        ));
        assert!(matches!(
            naive_rejection_sample(&space, prior.binning, empty, 50, &mut seeded_rng(0)),
            Err(Error::MaxTrialsExceeded { .. })
        ));
    }

    #[test]
    fn naive_trials_follow_geometric_law_at_mode() {
        // fine binning on the tiny space so acceptance is nontrivial
        let space = tests_tiny_space();
        let binning = FlopsBinning::new(0.05).unwrap();
        let (prior, _) = build_tables(&space, 100_000, binning, 11).unwrap();
        let mode = prior.mode().unwrap();
        let p = prior.probability(mode);
        assert!(p < 1.0);
        let mut rng = seeded_rng(13);
        let runs = 1000;
        let mean = (0..runs)
            .map(|_| {
                naive_rejection_sample(&space, binning, mode, NAIVE_MAX_TRIALS, &mut rng)
                    .unwrap()
                    .trials as f64
            })
            .sum::<f64>()
            / runs as f64;
        let expected = 1.0 / p;
        assert!(
            (mean - expected).abs() / expected < 0.2,
            "mean {mean}, expected {expected}"
        );
    }

    #[test]
    fn conditionals_match_exhaustive_enumeration_on_tiny_space() {
        let space = tests_tiny_space();
        let binning = FlopsBinning::new(0.05).unwrap();
        let (prior, cond) = build_tables(&space, 200_000, binning, 17).unwrap();

        // exhaustive conditionals: uniform over members of each bin
        let mut exact: BTreeMap<u32, Vec<Vec<f64>>> = BTreeMap::new();
        let mut totals: BTreeMap<u32, u64> = BTreeMap::new();
        for arch in space.enumerate_all() {
            let bin = binning.bin(arch_flops(&space, &arch).unwrap());
            let entry = exact.entry(bin).or_insert_with(|| {
                space.axes().iter().map(|a| vec![0.0; a.choices.len()]).collect()
            });
            for (axis, &idx) in arch.choice_indices.iter().enumerate() {
                entry[axis][idx] += 1.0;
            }
            *totals.entry(bin).or_default() += 1;
        }
        for (bin, axes) in &mut exact {
            for choices in axes.iter_mut() {
                for p in choices.iter_mut() {
                    *p /= totals[bin] as f64;
                }
            }
        }

        for bin in prior.populated_bins() {
            let measured = &cond.bins[&bin];
            let expected = &exact[&bin];
            for (m, e) in measured.iter().zip(expected) {
                let tv: f64 = m.iter().zip(e).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
                assert!(tv < 0.02, "bin {bin} tv {tv}");
            }
        }
    }

    #[test]
    fn lowest_bin_conditionals_concentrate_on_small_choices() {
        let space = tests_tiny_space();
        let binning = FlopsBinning::new(0.05).unwrap();
        let (prior, cond) = build_tables(&space, 50_000, binning, 19).unwrap();
        let lowest = prior.populated_bins().min().unwrap();
        // width axis is index 2 (resolution, stem, then stage width)
        let width = cond.axis_distribution(lowest, 2).unwrap();
        assert!(width[0] > width[1]);
    }

    #[test]
    fn table_build_is_deterministic_and_round_trips() {
        let space = tests_tiny_space();
        let a = SamplerTables::build(&space, 10_000, FlopsBinning::default(), 23).unwrap();
        let b = SamplerTables::build(&space, 10_000, FlopsBinning::default(), 23).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tables.json");
        a.save(&space, &path).unwrap();
        let loaded = SamplerTables::load(&space, &path).unwrap();
        assert_eq!(a.prior, loaded.prior);
        for (bin, axes) in &a.conditional.bins {
            for (axis, probs) in axes.iter().enumerate() {
                let l = loaded.conditional.axis_distribution(*bin, axis).unwrap();
                for (x, y) in probs.iter().zip(l) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
