//! Stage-wise mobile search space: axes, architecture encoding, validation,
//! and uniform sampling.
//!
//! A space is a fixed, ordered list of choice axes (resolution, stem width,
//! per-stage width/depth/kernel and, where searchable, expansion ratio, and
//! the head width). An architecture is one index into each axis.

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One searchable dimension: a name plus its ordered list of integer choices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceAxis {
    pub name: String,
    pub choices: Vec<u32>,
}

impl ChoiceAxis {
    fn check(&self) -> Result<()> {
        if self.choices.is_empty() {
            return Err(Error::Config(format!("axis {} has no choices", self.name)));
        }
        if !self.choices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "axis {} choices must be strictly increasing",
                self.name
            )));
        }
        Ok(())
    }
}

/// Searchable and fixed attributes of one MBConv stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub name: String,
    pub widths: Vec<u32>,
    pub depths: Vec<u32>,
    pub kernels: Vec<u32>,
    /// Expansion ratio choices; a single entry means the ratio is fixed and
    /// gets no axis.
    pub expansions: Vec<u32>,
    pub stride: u32,
    pub se: bool,
}

#[derive(Debug, Clone)]
struct StageAxes {
    width: usize,
    depth: usize,
    kernel: usize,
    expansion: Option<usize>,
}

/// The architecture search space: axis lists plus static per-stage metadata.
///
/// Axis order is fixed by construction (resolution, stem width, then each
/// stage's width/depth/kernel/expansion, then head width); encoding and
/// cardinality depend only on this order.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    resolutions: Vec<u32>,
    stem_widths: Vec<u32>,
    stages: Vec<StageSpec>,
    mbpool_widths: Vec<u32>,
    mbpool_expansion: u32,
    class_count: u32,
    couple_stem_width: bool,
    axes: Vec<ChoiceAxis>,
    resolution_axis: usize,
    stem_axis: usize,
    stage_axes: Vec<StageAxes>,
    mbpool_axis: usize,
}

/// One sub-network: an index into each axis of its space, in axis order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub choice_indices: Vec<usize>,
}

/// A single validation failure: the axis involved and what went wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub axis: String,
    pub message: String,
}

/// Fully resolved attributes of one stage of a concrete architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedStage {
    pub width: u32,
    pub depth: u32,
    pub kernel: u32,
    pub expansion: u32,
    pub stride: u32,
    pub se: bool,
}

/// A concrete architecture with every choice resolved to its integer value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedArch {
    pub resolution: u32,
    pub stem_width: u32,
    pub stages: Vec<ResolvedStage>,
    pub mbpool_width: u32,
    pub mbpool_expansion: u32,
    pub class_count: u32,
}

/// JSON wire form of an architecture, value-based rather than index-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchJson {
    pub resolution: u32,
    pub stem_width: u32,
    pub stages: Vec<StageJson>,
    pub mbpool_width: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageJson {
    pub width: u32,
    pub depth: u32,
    pub kernel: u32,
    pub expansion: u32,
}

impl SearchSpace {
    pub fn new(
        resolutions: Vec<u32>,
        stem_widths: Vec<u32>,
        stages: Vec<StageSpec>,
        mbpool_widths: Vec<u32>,
        mbpool_expansion: u32,
        class_count: u32,
    ) -> Result<Self> {
        Self::with_coupling(
            resolutions,
            stem_widths,
            stages,
            mbpool_widths,
            mbpool_expansion,
            class_count,
            false,
        )
    }

    /// As [`SearchSpace::new`], but optionally coupling the stem width to the
    /// first stage's width so they always agree.
    pub fn with_coupling(
        resolutions: Vec<u32>,
        stem_widths: Vec<u32>,
        stages: Vec<StageSpec>,
        mbpool_widths: Vec<u32>,
        mbpool_expansion: u32,
        class_count: u32,
        couple_stem_width: bool,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Config("at least one stage is required".into()));
        }
        if couple_stem_width && stem_widths != stages[0].widths {
            return Err(Error::Config(
                "stem/first-stage coupling requires identical width choices".into(),
            ));
        }
        let mut axes = Vec::new();
        let mut push = |name: String, choices: &[u32]| -> usize {
            axes.push(ChoiceAxis {
                name,
                choices: choices.to_vec(),
            });
            axes.len() - 1
        };
        let resolution_axis = push("resolution".into(), &resolutions);
        let stem_axis = push("stem.width".into(), &stem_widths);
        let mut stage_axes = Vec::with_capacity(stages.len());
        for stage in &stages {
            if stage.expansions.is_empty() {
                return Err(Error::Config(format!(
                    "stage {} has no expansion ratio",
                    stage.name
                )));
            }
            let width = push(format!("{}.width", stage.name), &stage.widths);
            let depth = push(format!("{}.depth", stage.name), &stage.depths);
            let kernel = push(format!("{}.kernel", stage.name), &stage.kernels);
            let expansion = if stage.expansions.len() > 1 {
                Some(push(format!("{}.expansion", stage.name), &stage.expansions))
            } else {
                None
            };
            stage_axes.push(StageAxes {
                width,
                depth,
                kernel,
                expansion,
            });
        }
        let mbpool_axis = push("mbpool.width".into(), &mbpool_widths);
        for axis in &axes {
            axis.check()?;
        }
        Ok(SearchSpace {
            resolutions,
            stem_widths,
            stages,
            mbpool_widths,
            mbpool_expansion,
            class_count,
            couple_stem_width,
            axes,
            resolution_axis,
            stem_axis,
            stage_axes,
            mbpool_axis,
        })
    }

    pub fn axes(&self) -> &[ChoiceAxis] {
        &self.axes
    }

    pub fn axis(&self, name: &str) -> Option<&ChoiceAxis> {
        self.axes.iter().find(|a| a.name == name)
    }

    pub fn axis_count(&self) -> usize {
        self.axes.len()
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn couples_stem_width(&self) -> bool {
        self.couple_stem_width
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn stem_widths(&self) -> &[u32] {
        &self.stem_widths
    }

    pub fn mbpool_widths(&self) -> &[u32] {
        &self.mbpool_widths
    }

    /// Number of distinct architectures: the product of per-axis choice
    /// counts (the coupled stem axis contributes no freedom).
    pub fn cardinality(&self) -> BigUint {
        let mut n = BigUint::from(1u32);
        for (i, axis) in self.axes.iter().enumerate() {
            if self.couple_stem_width && i == self.stem_axis {
                continue;
            }
            n *= BigUint::from(axis.choices.len());
        }
        n
    }

    /// All in-range violations for `arch`; empty means valid.
    pub fn validate(&self, arch: &ArchitectureConfig) -> Vec<Violation> {
        let mut violations = Vec::new();
        if arch.choice_indices.len() != self.axes.len() {
            violations.push(Violation {
                axis: "<arch>".into(),
                message: format!(
                    "length mismatch: expected {} indices, got {}",
                    self.axes.len(),
                    arch.choice_indices.len()
                ),
            });
            return violations;
        }
        for (axis, &idx) in self.axes.iter().zip(&arch.choice_indices) {
            if idx >= axis.choices.len() {
                violations.push(Violation {
                    axis: axis.name.clone(),
                    message: format!(
                        "{} index out of range: {} >= {}",
                        axis.name,
                        idx,
                        axis.choices.len()
                    ),
                });
            }
        }
        if violations.is_empty()
            && self.couple_stem_width
            && arch.choice_indices[self.stem_axis] != arch.choice_indices[self.stage_axes[0].width]
        {
            violations.push(Violation {
                axis: "stem.width".into(),
                message: "stem width must match first stage width (coupled space)".into(),
            });
        }
        violations
    }

    pub fn is_valid(&self, arch: &ArchitectureConfig) -> bool {
        self.validate(arch).is_empty()
    }

    fn check_valid(&self, arch: &ArchitectureConfig) -> Result<()> {
        let violations = self.validate(arch);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArchitecture(
                violations
                    .iter()
                    .map(|v| v.message.as_str())
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    /// Overwrite the stem width index with the first stage's width index
    /// when the space couples them; no-op otherwise.
    pub fn enforce_coupling(&self, arch: &mut ArchitectureConfig) {
        if self.couple_stem_width && arch.choice_indices.len() == self.axes.len() {
            arch.choice_indices[self.stem_axis] = arch.choice_indices[self.stage_axes[0].width];
        }
    }

    /// Draw every axis index independently and uniformly.
    pub fn uniform_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchitectureConfig {
        let mut indices: Vec<usize> = self
            .axes
            .iter()
            .map(|axis| rng.gen_range(0..axis.choices.len()))
            .collect();
        if self.couple_stem_width {
            indices[self.stem_axis] = indices[self.stage_axes[0].width];
        }
        ArchitectureConfig {
            choice_indices: indices,
        }
    }

    /// The architecture with every axis at its minimum choice.
    pub fn smallest_arch(&self) -> ArchitectureConfig {
        ArchitectureConfig {
            choice_indices: vec![0; self.axes.len()],
        }
    }

    /// The architecture with every axis at its maximum choice.
    pub fn largest_arch(&self) -> ArchitectureConfig {
        ArchitectureConfig {
            choice_indices: self.axes.iter().map(|a| a.choices.len() - 1).collect(),
        }
    }

    /// Feature vector of chosen integer values (not indices), in axis order.
    pub fn encode(&self, arch: &ArchitectureConfig) -> Result<Vec<u32>> {
        self.check_valid(arch)?;
        Ok(self
            .axes
            .iter()
            .zip(&arch.choice_indices)
            .map(|(axis, &idx)| axis.choices[idx])
            .collect())
    }

    /// Resolve an architecture to concrete per-stage attributes.
    pub fn resolve(&self, arch: &ArchitectureConfig) -> Result<ResolvedArch> {
        self.check_valid(arch)?;
        let value = |axis: usize| self.axes[axis].choices[arch.choice_indices[axis]];
        let stages = self
            .stages
            .iter()
            .zip(&self.stage_axes)
            .map(|(spec, ax)| ResolvedStage {
                width: value(ax.width),
                depth: value(ax.depth),
                kernel: value(ax.kernel),
                expansion: ax.expansion.map_or(spec.expansions[0], &value),
                stride: spec.stride,
                se: spec.se,
            })
            .collect();
        Ok(ResolvedArch {
            resolution: value(self.resolution_axis),
            stem_width: value(self.stem_axis),
            stages,
            mbpool_width: value(self.mbpool_axis),
            mbpool_expansion: self.mbpool_expansion,
            class_count: self.class_count,
        })
    }

    pub fn to_json(&self, arch: &ArchitectureConfig) -> Result<ArchJson> {
        let resolved = self.resolve(arch)?;
        Ok(ArchJson {
            resolution: resolved.resolution,
            stem_width: resolved.stem_width,
            stages: resolved
                .stages
                .iter()
                .map(|s| StageJson {
                    width: s.width,
                    depth: s.depth,
                    kernel: s.kernel,
                    expansion: s.expansion,
                })
                .collect(),
            mbpool_width: resolved.mbpool_width,
        })
    }

    pub fn from_json(&self, json: &ArchJson) -> Result<ArchitectureConfig> {
        if json.stages.len() != self.stages.len() {
            return Err(Error::InvalidArchitecture(format!(
                "expected {} stages, got {}",
                self.stages.len(),
                json.stages.len()
            )));
        }
        let mut indices = vec![0usize; self.axes.len()];
        let mut set = |axis: usize, value: u32| -> Result<()> {
            let choices = &self.axes[axis].choices;
            match choices.iter().position(|&c| c == value) {
                Some(idx) => {
                    indices[axis] = idx;
                    Ok(())
                }
                None => Err(Error::InvalidArchitecture(format!(
                    "{} has no choice {}",
                    self.axes[axis].name, value
                ))),
            }
        };
        set(self.resolution_axis, json.resolution)?;
        set(self.stem_axis, json.stem_width)?;
        for ((spec, ax), stage) in self.stages.iter().zip(&self.stage_axes).zip(&json.stages) {
            set(ax.width, stage.width)?;
            set(ax.depth, stage.depth)?;
            set(ax.kernel, stage.kernel)?;
            match ax.expansion {
                Some(axis) => set(axis, stage.expansion)?,
                None if stage.expansion != spec.expansions[0] => {
                    return Err(Error::InvalidArchitecture(format!(
                        "{} expansion is fixed at {}",
                        spec.name, spec.expansions[0]
                    )));
                }
                None => {}
            }
        }
        set(self.mbpool_axis, json.mbpool_width)?;
        let arch = ArchitectureConfig {
            choice_indices: indices,
        };
        self.check_valid(&arch)?;
        Ok(arch)
    }

    /// Iterate every architecture in the space, in lexicographic index order.
    /// Intended for exhaustive checks on small spaces.
    pub fn enumerate_all(&self) -> impl Iterator<Item = ArchitectureConfig> + '_ {
        let counts: Vec<usize> = self.axes.iter().map(|a| a.choices.len()).collect();
        let mut current: Option<Vec<usize>> = Some(vec![0; counts.len()]);
        std::iter::from_fn(move || {
            let indices = current.clone()?;
            // advance odometer
            let mut next = indices.clone();
            let mut axis = counts.len();
            loop {
                if axis == 0 {
                    current = None;
                    break;
                }
                axis -= 1;
                next[axis] += 1;
                if next[axis] < counts[axis] {
                    current = Some(next);
                    break;
                }
                next[axis] = 0;
            }
            Some(ArchitectureConfig {
                choice_indices: indices,
            })
        })
        .filter(move |arch| {
            !self.couple_stem_width
                || arch.choice_indices[self.stem_axis] == arch.choice_indices[self.stage_axes[0].width]
        })
    }
}

/// The default seven-stage mobile space: resolutions {192..288}, stem width
/// {16,24}, MBConv-1 through MBConv-7, and an efficient head with width
/// {1792,1984}. 28 searchable axes in total.
pub fn default_space() -> SearchSpace {
    default_space_with(false)
}

/// Default space with optional stem/first-stage width coupling.
pub fn default_space_with(couple_stem_width: bool) -> SearchSpace {
    let stage = |name: &str,
                 widths: &[u32],
                 depths: &[u32],
                 expansions: &[u32],
                 stride: u32,
                 se: bool| StageSpec {
        name: name.into(),
        widths: widths.to_vec(),
        depths: depths.to_vec(),
        kernels: vec![3, 5],
        expansions: expansions.to_vec(),
        stride,
        se,
    };
    SearchSpace::with_coupling(
        vec![192, 224, 256, 288],
        vec![16, 24],
        vec![
            stage("mb1", &[16, 24], &[1, 2], &[1], 1, false),
            stage("mb2", &[24, 32], &[3, 4, 5], &[4, 5, 6], 2, false),
            stage("mb3", &[32, 40], &[3, 4, 5, 6], &[4, 5, 6], 2, true),
            stage("mb4", &[64, 72], &[3, 4, 5, 6], &[4, 5, 6], 2, false),
            stage("mb5", &[112, 120, 128], &[3, 4, 5, 6, 7, 8], &[4, 5, 6], 1, true),
            stage("mb6", &[192, 200, 208, 216], &[3, 4, 5, 6, 7, 8], &[6], 2, true),
            stage("mb7", &[216, 224], &[1, 2], &[6], 1, true),
        ],
        vec![1792, 1984],
        6,
        1000,
        couple_stem_width,
    )
    .expect("default space is well formed")
}

/// A one-stage space with two binary axes; test fixture shared across modules.
#[cfg(test)]
pub(crate) fn tests_tiny_space() -> SearchSpace {
    SearchSpace::new(
        vec![96],
        vec![16],
        vec![StageSpec {
            name: "mb1".into(),
            widths: vec![16, 24],
            depths: vec![1, 2],
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    fn tiny_space() -> SearchSpace {
        tests_tiny_space()
    }

    #[test]
    fn default_space_matches_table() {
        let space = default_space();
        assert_eq!(space.axis_count(), 28);
        assert_eq!(space.axis("resolution").unwrap().choices, vec![192, 224, 256, 288]);
        assert_eq!(space.axis("stem.width").unwrap().choices, vec![16, 24]);
        assert_eq!(space.axis("mb5.width").unwrap().choices, vec![112, 120, 128]);
        assert_eq!(space.axis("mb6.depth").unwrap().choices, vec![3, 4, 5, 6, 7, 8]);
        assert_eq!(space.axis("mbpool.width").unwrap().choices, vec![1792, 1984]);
        // fixed expansions get no axis
        assert!(space.axis("mb1.expansion").is_none());
        assert!(space.axis("mb6.expansion").is_none());
        assert!(space.axis("mb2.expansion").is_some());
    }

    #[test]
    fn default_cardinality() {
        assert_eq!(
            default_space().cardinality(),
            BigUint::from(440_301_256_704u64)
        );
    }

    #[test]
    fn tiny_cardinalities() {
        // two binary axes (width, depth), everything else single-choice
        assert_eq!(tiny_space().cardinality(), BigUint::from(4u32));
    }

    #[test]
    fn validate_rejects_length_mismatch() {
        let space = default_space();
        let arch = ArchitectureConfig {
            choice_indices: vec![0; 27],
        };
        let violations = space.validate(&arch);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("length mismatch"));
    }

    #[test]
    fn validate_rejects_out_of_range_resolution() {
        let space = default_space();
        let mut arch = space.smallest_arch();
        arch.choice_indices[0] = 4;
        let violations = space.validate(&arch);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("resolution index out of range"));
    }

    #[test]
    fn extreme_archs() {
        let space = default_space();
        let small = space.resolve(&space.smallest_arch()).unwrap();
        let large = space.resolve(&space.largest_arch()).unwrap();
        assert_eq!(small.resolution, 192);
        assert_eq!(small.stem_width, 16);
        assert_eq!(large.mbpool_width, 1984);
        assert_eq!(large.resolution, 288);
    }

    #[test]
    fn encode_values_in_axis_order() {
        let space = default_space();
        let encoded = space.encode(&space.smallest_arch()).unwrap();
        assert_eq!(encoded.len(), 28);
        assert_eq!(encoded[0], 192);
        let largest = space.encode(&space.largest_arch()).unwrap();
        for (lo, hi) in encoded.iter().zip(&largest) {
            assert!(lo <= hi);
        }
    }

    #[test]
    fn encode_is_injective_on_small_space() {
        // exhaustive over the 3 multi-choice axes of the tiny space
        let space = tiny_space();
        let mut seen = std::collections::HashSet::new();
        let mut count = 0usize;
        for arch in space.enumerate_all() {
            assert!(seen.insert(space.encode(&arch).unwrap()));
            count += 1;
        }
        assert_eq!(count, 4);
    }

    #[test]
    fn uniform_sample_deterministic_and_valid() {
        let space = default_space();
        let a = space.uniform_sample(&mut seeded_rng(11));
        let b = space.uniform_sample(&mut seeded_rng(11));
        assert_eq!(a, b);
        assert!(space.is_valid(&a));
    }

    #[test]
    fn uniform_sample_resolution_frequency() {
        let space = default_space();
        let mut rng = seeded_rng(5);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| {
                let arch = space.uniform_sample(&mut rng);
                space.resolve(&arch).unwrap().resolution == 192
            })
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.25).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn single_choice_space_has_unique_arch() {
        let space = SearchSpace::new(
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
        .unwrap();
        let sampled = space.uniform_sample(&mut seeded_rng(0));
        assert_eq!(sampled, space.smallest_arch());
        assert_eq!(space.smallest_arch(), space.largest_arch());
        assert_eq!(space.cardinality(), BigUint::from(1u32));
    }

    #[test]
    fn json_round_trip() {
        let space = default_space();
        let arch = space.uniform_sample(&mut seeded_rng(17));
        let json = space.to_json(&arch).unwrap();
        let text = serde_json::to_string(&json).unwrap();
        let parsed: ArchJson = serde_json::from_str(&text).unwrap();
        assert_eq!(space.from_json(&parsed).unwrap(), arch);
    }

    #[test]
    fn coupled_space_ties_stem_to_first_stage() {
        let space = default_space_with(true);
        let mut rng = seeded_rng(3);
        for _ in 0..100 {
            let arch = space.uniform_sample(&mut rng);
            let resolved = space.resolve(&arch).unwrap();
            assert_eq!(resolved.stem_width, resolved.stages[0].width);
        }
        assert_eq!(
            space.cardinality() * BigUint::from(2u32),
            default_space().cardinality()
        );
    }

    proptest! {
        #[test]
        fn sampled_archs_always_validate(seed in any::<u64>()) {
            let space = default_space();
            let arch = space.uniform_sample(&mut seeded_rng(seed));
            prop_assert!(space.validate(&arch).is_empty());
        }
    }
}
