//! End-to-end experiment orchestration: configuration, seeding, persistence,
//! and report generation.
//!
//! All randomness flows from one root seed through named substreams
//! (sampler / probe / predictor / training / evolution), so each stage can be
//! rerun in isolation. Every artifact carries the run identifier, the hash of
//! the canonicalized configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{fit_predictor, kendall_tau, AccuracyPredictor, ForestConfig, OracleParams};
use crate::evolution::{search_constraints, EvolutionConfig, EvolutionResult};
use crate::flops::arch_flops;
use crate::rng::substream;
use crate::sampler::{FlopsBinning, SamplerTables};
use crate::space::{default_space_with, ArchitectureConfig, SearchSpace};
use crate::supernet::{
    default_probe_set, eval_subnet, run_training, EstimatorKind, SamplingMode, Snapshot,
    StrategyConfig, SupernetState, Trajectory, TrainingConfig,
};

/// Which estimator a configured strategy uses during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Loss,
    PredictedAcc,
}

/// One named training strategy in the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: String,
    pub mode: SamplingMode,
    pub k: usize,
    pub estimator: EstimatorChoice,
    /// Draw candidates from an offline Pareto pool of this size instead of
    /// the factorized sampler.
    #[serde(default)]
    pub offline_pool_size: Option<usize>,
}

/// Full experiment configuration; hashing its canonical JSON yields the run
/// identifier embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub couple_stem_width: bool,
    pub sampler_m: u64,
    pub bin_step: f64,
    pub oracle: OracleParams,
    pub forest: ForestConfig,
    /// Architectures sampled for predictor fitting; split half/half.
    pub predictor_samples: usize,
    /// Steps of the short uniform run whose weights feed the predictor.
    pub early_steps: u64,
    pub training: TrainingConfig,
    pub strategies: Vec<StrategySpec>,
    pub probe_per_bucket: usize,
    pub loss_noise_sigma: f64,
    pub evolution: EvolutionConfig,
    pub constraints: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            couple_stem_width: false,
            sampler_m: 1_000_000,
            bin_step: 25.0,
            oracle: OracleParams::default(),
            forest: ForestConfig::default(),
            predictor_samples: 1024,
            early_steps: 500,
            training: TrainingConfig::default(),
            strategies: vec![
                StrategySpec {
                    name: "uniform".into(),
                    mode: SamplingMode::Uniform,
                    k: 1,
                    estimator: EstimatorChoice::Loss,
                    offline_pool_size: None,
                },
                StrategySpec {
                    name: "worstup-50-acc".into(),
                    mode: SamplingMode::WorstUp,
                    k: 50,
                    estimator: EstimatorChoice::PredictedAcc,
                    offline_pool_size: None,
                },
                StrategySpec {
                    name: "bestup-3-loss".into(),
                    mode: SamplingMode::BestUp,
                    k: 3,
                    estimator: EstimatorChoice::Loss,
                    offline_pool_size: None,
                },
            ],
            probe_per_bucket: 64,
            loss_noise_sigma: 0.01,
            evolution: EvolutionConfig::default(),
            constraints: vec![250.0, 350.0, 450.0],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn space(&self) -> SearchSpace {
        default_space_with(self.couple_stem_width)
    }

    /// Hex run identifier: SHA-256 of the canonical (serde field order) JSON.
    pub fn run_id(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

/// CSV of one trajectory: a row per (snapshot, bucket).
pub fn trajectory_csv(run_id: &str, trajectory: &Trajectory) -> String {
    let mut out = format!("# run_id={run_id}\n");
    out.push_str("step,bucket_lo,bucket_hi,count,min,q1,median,q3,max\n");
    for snapshot in &trajectory.snapshots {
        for b in snapshot.buckets.iter().filter(|b| b.count > 0) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                snapshot.step,
                fmt_f(b.bucket_lo),
                fmt_f(b.bucket_hi),
                b.count,
                fmt_f(b.min),
                fmt_f(b.q1),
                fmt_f(b.median),
                fmt_f(b.q3),
                fmt_f(b.max)
            );
        }
    }
    out
}

/// CSV of a snapshot's best and worst fronts.
pub fn fronts_csv(run_id: &str, snapshot: &Snapshot) -> String {
    let mut out = format!("# run_id={run_id}\n");
    out.push_str("front,arch_id,flops,score\n");
    for (label, front) in [("best", &snapshot.best_front), ("worst", &snapshot.worst_front)] {
        for p in front {
            let _ = writeln!(out, "{label},{},{},{}", p.arch_id, fmt_f(p.flops), fmt_f(p.score));
        }
    }
    out
}

/// Pair file for predictor fitting: feature columns then the accuracy.
pub fn pairs_csv(features: &[Vec<f64>], targets: &[f64]) -> String {
    let d = features.first().map_or(0, Vec::len);
    let mut out = (0..d).map(|i| format!("f{i}")).collect::<Vec<_>>().join(",");
    out.push_str(",accuracy\n");
    for (f, t) in features.iter().zip(targets) {
        let row: Vec<String> = f.iter().map(|&v| fmt_f(v)).collect();
        let _ = writeln!(out, "{},{}", row.join(","), fmt_f(*t));
    }
    out
}

/// Parse a pair file written by [`pairs_csv`].
pub fn parse_pairs_csv(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut lines = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#'));
    lines.next(); // header row
    for line in lines {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|e| Error::Config(format!("bad csv cell: {e}"))))
            .collect::<Result<_>>()?;
        if cells.len() < 2 {
            return Err(Error::Config("pair rows need features and a target".into()));
        }
        targets.push(*cells.last().unwrap());
        features.push(cells[..cells.len() - 1].to_vec());
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("pair file"));
    }
    Ok((features, targets))
}

fn encode_f64(space: &SearchSpace, arch: &ArchitectureConfig) -> Result<Vec<f64>> {
    Ok(space.encode(arch)?.iter().map(|&v| v as f64).collect())
}

/// Everything `cmd_pipeline` produced, for callers that want the artifacts
/// in memory as well as on disk.
pub struct PipelineOutcome {
    pub run_id: String,
    pub tables: SamplerTables,
    pub predictor: AccuracyPredictor,
    pub early_holdout_tau: f64,
    pub early_vs_late_tau: f64,
    pub states: Vec<(String, SupernetState)>,
    pub evolution: EvolutionResult,
}

/// Run the full experimental flow into `out_dir`:
/// sampler tables, early uniform training, predictor fit/eval, full training
/// per strategy, bucket/front reports, then evolutionary search.
pub fn cmd_pipeline(config: &ExperimentConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    fs::create_dir_all(out_dir)?;
    let run_id = config.run_id();
    let space = config.space();
    config.oracle.check().map_err(|e| e.in_stage("config"))?;

    let manifest = serde_json::json!({ "run_id": run_id, "config": config });
    write_file(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;

    // sampler tables
    let binning = FlopsBinning::new(config.bin_step).map_err(|e| e.in_stage("sampler"))?;
    let tables = SamplerTables::build(&space, config.sampler_m, binning, config.seed)
        .map_err(|e| e.in_stage("sampler"))?;
    tables
        .save(&space, &out_dir.join("tables.json"))
        .map_err(|e| e.in_stage("sampler"))?;

    // fixed probe set for every training run
    let mut probe_rng = substream(config.seed, "probe");
    let probe = default_probe_set(&space, &tables, config.probe_per_bucket, &mut probe_rng)
        .map_err(|e| e.in_stage("probe"))?;

    // short uniform run: the early supernet whose evaluations feed the
    // predictor
    let early_cfg = TrainingConfig {
        steps: config.early_steps,
        snapshot_every: config.early_steps,
        ..config.training
    };
    let (early_state, _) = run_training(
        &space,
        &tables,
        &config.oracle,
        &StrategyConfig {
            estimator: EstimatorKind::SupernetLoss {
                noise_sigma: config.loss_noise_sigma,
            },
            ..StrategyConfig::uniform()
        },
        &early_cfg,
        &probe,
        &mut substream(config.seed, "training.early"),
    )
    .map_err(|e| e.in_stage("early-training"))?;

    // predictor: sample, evaluate on the early weights, fit on one half,
    // report tau on the other
    let mut pred_rng = substream(config.seed, "predictor.sample");
    let archs: Vec<ArchitectureConfig> = (0..config.predictor_samples)
        .map(|_| space.uniform_sample(&mut pred_rng))
        .collect();
    let features: Vec<Vec<f64>> = archs
        .iter()
        .map(|a| encode_f64(&space, a))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("predictor"))?;
    let targets: Vec<f64> = archs
        .iter()
        .map(|a| eval_subnet(&early_state, &config.oracle, &space, a))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("predictor"))?;
    write_file(&out_dir.join("pairs.csv"), &{
        let mut text = format!("# run_id={run_id}\n");
        text.push_str(&pairs_csv(&features, &targets));
        text
    })?;
    let half = archs.len() / 2;
    let predictor = fit_predictor(&features[..half], &targets[..half], config.forest, config.seed)
        .map_err(|e| e.in_stage("predictor"))?;
    predictor
        .save(&out_dir.join("rf.json"))
        .map_err(|e| e.in_stage("predictor"))?;
    let predicted: Vec<f64> = features[half..]
        .iter()
        .map(|f| predictor.predict(f))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("predictor"))?;
    let early_holdout_tau = kendall_tau(&predicted, &targets[half..])
        .map_err(|e| e.in_stage("predictor"))?;

    // full training per strategy
    let mut states = Vec::new();
    for spec in &config.strategies {
        let estimator = match spec.estimator {
            EstimatorChoice::Loss => EstimatorKind::SupernetLoss {
                noise_sigma: config.loss_noise_sigma,
            },
            EstimatorChoice::PredictedAcc => EstimatorKind::PredictedAcc(predictor.clone()),
        };
        let offline_pool = match spec.offline_pool_size {
            Some(size) => {
                let mode = match spec.mode {
                    SamplingMode::WorstUp => crate::pareto::SelectionMode::Worst,
                    _ => crate::pareto::SelectionMode::Best,
                };
                Some(
                    crate::supernet::build_offline_pool(
                        &space,
                        &predictor,
                        size,
                        mode,
                        &mut substream(config.seed, &format!("pool.{}", spec.name)),
                    )
                    .map_err(|e| e.in_stage("training"))?,
                )
            }
            None => None,
        };
        let strategy = StrategyConfig {
            mode: spec.mode,
            k: spec.k,
            n: 2,
            estimator,
            offline_pool,
        };
        let (state, trajectory) = run_training(
            &space,
            &tables,
            &config.oracle,
            &strategy,
            &config.training,
            &probe,
            &mut substream(config.seed, &format!("training.{}", spec.name)),
        )
        .map_err(|e| e.in_stage("training"))?;
        write_file(
            &out_dir.join(format!("trajectory_{}.csv", spec.name)),
            &trajectory_csv(&run_id, &trajectory),
        )?;
        if let Some(last) = trajectory.snapshots.last() {
            write_file(
                &out_dir.join(format!("fronts_{}.csv", spec.name)),
                &fronts_csv(&run_id, last),
            )?;
        }
        write_file(
            &out_dir.join(format!("state_{}.json", spec.name)),
            &serde_json::to_string(&state)?,
        )?;
        states.push((spec.name.clone(), state));
    }

    // early-fit predictor against the matured weights of the first strategy
    let late_state = &states
        .first()
        .ok_or_else(|| Error::Config("at least one strategy is required".into()))
        .map_err(|e| e.in_stage("training"))?
        .1;
    let late_actuals: Vec<f64> = archs[half..]
        .iter()
        .map(|a| eval_subnet(late_state, &config.oracle, &space, a))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("report"))?;
    let early_vs_late_tau =
        kendall_tau(&predicted, &late_actuals).map_err(|e| e.in_stage("report"))?;
    write_file(&out_dir.join("tau_report.csv"), &{
        let mut out = format!("# run_id={run_id}\n");
        out.push_str("comparison,tau\n");
        let _ = writeln!(out, "early_holdout,{}", fmt_f(early_holdout_tau));
        let _ = writeln!(out, "early_vs_late,{}", fmt_f(early_vs_late_tau));
        out
    })?;

    // stage-2 evolutionary search over the first trained supernet
    let scorer_state = late_state.clone();
    let evolution = search_constraints(
        &space,
        &tables,
        |arch| eval_subnet(&scorer_state, &config.oracle, &space, arch),
        &config.evolution,
        &config.constraints,
        &mut substream(config.seed, "evolution"),
    )
    .map_err(|e| e.in_stage("evolution"))?;
    for r in &evolution.best_per_constraint {
        let json = space.to_json(&r.best_arch).map_err(|e| e.in_stage("evolution"))?;
        let doc = serde_json::json!({
            "run_id": run_id,
            "constraint_mflops": r.constraint,
            "score": r.best_score,
            "flops_mflops": arch_flops(&space, &r.best_arch).map_err(|e| e.in_stage("evolution"))?.0,
            "arch": json,
        });
        write_file(
            &out_dir.join(format!("best_arch_{}mf.json", r.constraint as u64)),
            &serde_json::to_string_pretty(&doc)?,
        )?;
    }
    write_file(
        &out_dir.join("evolution.csv"),
        &evolution_result_csv(&run_id, &space, &evolution)?,
    )?;

    write_report(out_dir).map_err(|e| e.in_stage("report"))?;

    Ok(PipelineOutcome {
        run_id,
        tables,
        predictor,
        early_holdout_tau,
        early_vs_late_tau,
        states,
        evolution,
    })
}

fn evolution_result_csv(
    run_id: &str,
    space: &SearchSpace,
    result: &EvolutionResult,
) -> Result<String> {
    let mut out = format!("# run_id={run_id}\n");
    out.push_str("constraint,best_score,best_flops,evaluated_count\n");
    for r in &result.best_per_constraint {
        let flops = arch_flops(space, &r.best_arch)?.0;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f(r.constraint),
            fmt_f(r.best_score),
            fmt_f(flops),
            r.evaluated_count
        );
    }
    Ok(out)
}

/// Regenerate `report.csv` (final-step bucket summaries per strategy) from
/// the persisted trajectory CSVs; a pure function of the artifact directory.
pub fn write_report(out_dir: &Path) -> Result<()> {
    let mut trajectories: Vec<PathBuf> = fs::read_dir(out_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trajectory_") && n.ends_with(".csv"))
        })
        .collect();
    trajectories.sort();
    let mut run_id = String::from("unknown");
    let mut rows = Vec::new();
    for path in &trajectories {
        let name = path
            .file_stem()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .trim_start_matches("trajectory_")
            .to_string();
        let text = fs::read_to_string(path)?;
        if let Some(id) = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# run_id="))
        {
            run_id = id.to_string();
        }
        let data_rows: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("step,") && !l.is_empty())
            .collect();
        let last_step = data_rows
            .iter()
            .filter_map(|l| l.split(',').next()?.parse::<u64>().ok())
            .max();
        if let Some(step) = last_step {
            let prefix = format!("{step},");
            for row in data_rows.iter().filter(|l| l.starts_with(&prefix)) {
                rows.push(format!("{name},{row}"));
            }
        }
    }
    let mut out = format!("# run_id={run_id}\n");
    out.push_str("strategy,step,bucket_lo,bucket_hi,count,min,q1,median,q3,max\n");
    for row in rows {
        let _ = writeln!(out, "{row}");
    }
    write_file(&out_dir.join("report.csv"), &out)
}

/// Minimal static SVG of one snapshot's per-bucket five-number summaries.
pub fn snapshot_svg(snapshot: &Snapshot) -> String {
    let buckets: Vec<_> = snapshot.buckets.iter().filter(|b| b.count > 0).collect();
    let (width, height, margin) = (640.0, 360.0, 40.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    if buckets.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for b in &buckets {
        lo = lo.min(b.min);
        hi = hi.max(b.max);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let y = |v: f64| height - margin - (v - lo) / (hi - lo) * (height - 2.0 * margin);
    let slot = (width - 2.0 * margin) / buckets.len() as f64;
    for (i, b) in buckets.iter().enumerate() {
        let x0 = margin + i as f64 * slot + slot * 0.2;
        let w = slot * 0.6;
        let xc = x0 + w / 2.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{xc:.1}\" y1=\"{:.1}\" x2=\"{xc:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            y(b.min),
            y(b.max)
        );
        let _ = writeln!(
            svg,
            "<rect x=\"{x0:.1}\" y=\"{:.1}\" width=\"{w:.1}\" height=\"{:.1}\" fill=\"steelblue\" stroke=\"black\"/>",
            y(b.q3),
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{x0:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-width=\"2\"/>",
            y(b.median),
            x0 + w,
            y(b.median)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{xc:.1}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"middle\">{}</text>",
            height - margin / 2.0,
            b.bucket_lo as u64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
