//! Command implementations behind the CLI: capability modeling, the full
//! augmentation run, post-hoc evaluation, and energy replay. Each writes
//! its artifacts under the configured output directory and returns the
//! value it computed so tests can drive commands directly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::capability::{build_capability_tensor, CapabilityTensor};
use crate::closed_loop::{run_closed_loop, LoopResult, RoundLog, StopReason};
use crate::config::{DatasetConfig, RunConfig};
use crate::dataset::{
    ingest_ucr_tsv, ingest_windows_csv, split_by_group, write_windows_csv, LabeledDataset,
    Provenance,
};
use crate::energy::{read_decision_trace, replay_energy, EnergyIntervals, EnergyLedger};
use crate::error::{Error, Result};
use crate::model::{evaluate, EvalReport, ModelArtifact};
use crate::seeding::{derive_seed, rng_from, tag};

/// Global CLI options every command honors.
#[derive(Debug, Clone, Default)]
pub struct GlobalOpts {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Strip wall-clock fields from artifacts so reruns are bit-identical.
    pub canonical: bool,
}

impl GlobalOpts {
    fn seed_for(&self, cfg: &RunConfig) -> u64 {
        self.seed.unwrap_or(cfg.seed)
    }

    fn out_for(&self, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.out_dir.clone())
    }
}

/// Train/val/test splits loaded per the dataset section.
pub struct Splits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

/// Load the configured dataset and produce leakage-safe splits.
pub fn load_splits(cfg: &RunConfig, seed: u64) -> Result<Splits> {
    match &cfg.dataset {
        DatasetConfig::WindowsCsv { path, t, f } => {
            let mut dataset = ingest_windows_csv(path, *t, *f)?;
            if !cfg.split.by_group {
                for (i, w) in dataset.windows.iter_mut().enumerate() {
                    w.group_key = format!("row{i}");
                }
            }
            let spec = cfg.split.spec(derive_seed(seed, &[tag("split")]))?;
            let (train, val, test) = split_by_group(&dataset, &spec)?;
            Ok(Splits { train, val, test })
        }
        DatasetConfig::UcrTsv {
            train_path,
            test_path,
        } => {
            let (full_train, test) = ingest_ucr_tsv(train_path, test_path)?;
            let val_fraction = cfg.split.val / (cfg.split.train + cfg.split.val);
            let (train, val) =
                split_rows(&full_train, 1.0 - val_fraction, derive_seed(seed, &[tag("split")]))?;
            Ok(Splits { train, val, test })
        }
    }
}

/// Row-level two-way split (UCR files carry no grouping structure).
fn split_rows(
    dataset: &LabeledDataset,
    first_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    use rand::seq::SliceRandom;
    if dataset.len() < 2 {
        return Err(Error::invalid("need at least 2 rows to split"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_from(seed));
    let cut = ((dataset.len() as f64 * first_fraction).round() as usize)
        .clamp(1, dataset.len() - 1);
    let mut first_idx: Vec<usize> = order[..cut].to_vec();
    let mut second_idx: Vec<usize> = order[cut..].to_vec();
    first_idx.sort_unstable();
    second_idx.sort_unstable();
    let pick = |idx: &[usize]| {
        LabeledDataset::new(
            idx.iter().map(|&i| dataset.windows[i].clone()).collect(),
            dataset.steps,
            dataset.features,
            dataset.num_classes,
        )
    };
    Ok((pick(&first_idx)?, pick(&second_idx)?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut raw = serde_json::to_string_pretty(value)?;
    raw.push('\n');
    std::fs::write(path, raw)?;
    Ok(())
}

/// Build the capability tensor and write `capabilities.json` plus a
/// human-readable `capabilities.txt`. Returns the tensor and the rendered
/// table.
pub fn run_capabilities(cfg: &RunConfig, opts: &GlobalOpts) -> Result<(CapabilityTensor, String)> {
    cfg.validate()?;
    let seed = opts.seed_for(cfg);
    let out = opts.out_for(cfg);
    let splits = load_splits(cfg, seed)?;
    let generators = cfg.build_generators();
    let tensor = build_capability_tensor(
        &splits.train,
        &generators,
        &cfg.stats,
        derive_seed(seed, &[tag("capability")]),
    )?;
    std::fs::create_dir_all(&out)?;
    write_json(&out.join("capabilities.json"), &tensor.to_json())?;
    let table = tensor.render_table();
    std::fs::write(out.join("capabilities.txt"), &table)?;
    Ok((tensor, table))
}

/// Everything `augment` produced, for programmatic use.
pub struct AugmentOutcome {
    pub tensor: CapabilityTensor,
    pub results: Vec<LoopResult>,
    pub summary: serde_json::Value,
    pub out_dir: PathBuf,
}

/// Per-generator, per-class totals over the accepted rounds of a result.
fn generated_totals(result: &LoopResult, num_classes: usize) -> BTreeMap<String, Vec<usize>> {
    let mut totals: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for w in &result.final_train.windows {
        if let Provenance::Generated { generator_id, .. } = &w.provenance {
            totals
                .entry(generator_id.clone())
                .or_insert_with(|| vec![0; num_classes])[w.label] += 1;
        }
    }
    totals
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / values.len() as f64;
    (mean, var.sqrt())
}

fn test_accuracy(artifact: &Option<ModelArtifact>, test: &LabeledDataset) -> Option<f64> {
    let artifact = artifact.clone()?;
    let model = artifact.into_model().ok()?;
    evaluate(model.as_ref(), test).ok().map(|r| r.accuracy)
}

fn strip_wall_times(rounds: &[RoundLog], canonical: bool) -> Vec<RoundLog> {
    rounds
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if canonical {
                r.wall_time_ms = 0;
            }
            r
        })
        .collect()
}

/// Split, model capabilities, run the closed loop `repeats` times with
/// derived seeds, and write all run artifacts. Test data never enters the
/// loop; test accuracy is computed post hoc from the stored per-round
/// model artifacts.
pub fn run_augment(cfg: &RunConfig, opts: &GlobalOpts) -> Result<AugmentOutcome> {
    cfg.validate()?;
    let seed = opts.seed_for(cfg);
    let out = opts.out_for(cfg);
    std::fs::create_dir_all(&out)?;

    let splits = load_splits(cfg, seed)?;
    let generators = cfg.build_generators();
    let classifier = cfg.build_classifier();
    let tensor = build_capability_tensor(
        &splits.train,
        &generators,
        &cfg.stats,
        derive_seed(seed, &[tag("capability")]),
    )?;
    write_json(&out.join("capabilities.json"), &tensor.to_json())?;
    std::fs::write(out.join("capabilities.txt"), tensor.render_table())?;

    let mut results = Vec::with_capacity(cfg.repeats);
    for repeat in 0..cfg.repeats {
        let loop_cfg = cfg.loop_section.loop_config(
            splits.train.len(),
            derive_seed(seed, &[tag("repeat"), repeat as u64]),
        )?;
        let result = run_closed_loop(
            &splits.train,
            &splits.val,
            &generators,
            classifier.as_ref(),
            &tensor,
            &cfg.stats,
            &loop_cfg,
        )?;
        results.push(result);
    }

    // Primary artifacts come from the first repetition.
    let primary = &results[0];
    write_json(
        &out.join("rounds.json"),
        &strip_wall_times(&primary.rounds, opts.canonical),
    )?;
    write_json(&out.join("gaps.json"), &primary.gap_reports)?;
    write_windows_csv(&primary.final_train, out.join("augmented_train.csv"))?;
    if let Ok(artifact) = primary.final_model.artifact() {
        artifact.save(out.join("model.json"))?;
    }

    // Plot data: per-round gap index, accuracies and budget.
    let mut plot = String::from("t,Gamma_t,val_acc,test_acc,B_t,accepted\n");
    for (round, artifact) in primary.rounds.iter().zip(&primary.per_round_models) {
        let test_acc = test_accuracy(artifact, &splits.test)
            .map_or(String::new(), |a| format!("{a}"));
        plot.push_str(&format!(
            "{},{},{},{},{},{}\n",
            round.round,
            round.gamma,
            round.val_accuracy,
            test_acc,
            round.budget,
            round.accepted as u8
        ));
    }
    std::fs::write(out.join("plot.csv"), plot)?;

    let baseline_test = test_accuracy(&primary.baseline_model, &splits.test);
    let final_test = test_accuracy(
        &primary.final_model.artifact().ok().map(Some).unwrap_or(None),
        &splits.test,
    );

    let repeat_records: Vec<serde_json::Value> = results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "repeat": i,
                "stop_reason": r.stop_reason,
                "rounds": r.rounds.len(),
                "accepted_rounds": r.rounds.iter().filter(|x| x.accepted).count(),
                "initial_J": r.initial_joint,
                "final_J": r.final_joint,
                "initial_Gamma": r.initial_gamma,
                "final_Gamma": r.final_gamma,
                "initial_val_accuracy": r.initial_report.accuracy,
                "final_val_accuracy": r.final_report.accuracy,
                "baseline_test_accuracy": test_accuracy(&r.baseline_model, &splits.test),
                "final_test_accuracy": test_accuracy(
                    &r.final_model.artifact().ok().map(Some).unwrap_or(None),
                    &splits.test,
                ),
                "final_size": r.final_train.len(),
            })
        })
        .collect();

    let baseline_tests: Vec<f64> = repeat_records
        .iter()
        .filter_map(|r| r["baseline_test_accuracy"].as_f64())
        .collect();
    let final_tests: Vec<f64> = repeat_records
        .iter()
        .filter_map(|r| r["final_test_accuracy"].as_f64())
        .collect();
    let (baseline_mean, baseline_std) = mean_std(&baseline_tests);
    let (final_mean, final_std) = mean_std(&final_tests);

    let summary = json!({
        "stop_reason": primary.stop_reason,
        "rounds": primary.rounds.len(),
        "accepted_rounds": primary.rounds.iter().filter(|r| r.accepted).count(),
        "initial": {
            "J": primary.initial_joint,
            "Gamma": primary.initial_gamma,
            "val_accuracy": primary.initial_report.accuracy,
            "test_accuracy": baseline_test,
        },
        "final": {
            "J": primary.final_joint,
            "Gamma": primary.final_gamma,
            "val_accuracy": primary.final_report.accuracy,
            "test_accuracy": final_test,
        },
        "train_size": splits.train.len(),
        "final_size": primary.final_train.len(),
        "generated_per_class_per_generator": generated_totals(primary, splits.train.num_classes),
        "repeats": repeat_records,
        "test_accuracy_mean": final_mean,
        "test_accuracy_std": final_std,
        "baseline_test_accuracy_mean": baseline_mean,
        "baseline_test_accuracy_std": baseline_std,
    });
    write_json(&out.join("summary.json"), &summary)?;

    Ok(AugmentOutcome {
        tensor,
        results,
        summary,
        out_dir: out,
    })
}

/// Which split `evaluate` should score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitChoice::Train),
            "val" => Ok(SplitChoice::Val),
            "test" => Ok(SplitChoice::Test),
            other => Err(Error::Config(format!(
                "unknown split '{other}' (expected train|val|test)"
            ))),
        }
    }
}

/// Score a stored model artifact on a configured split or an explicit
/// windows CSV, writing `evaluation.json`.
pub fn run_evaluate(
    cfg: &RunConfig,
    model_path: &Path,
    split: SplitChoice,
    data_override: Option<&Path>,
    opts: &GlobalOpts,
) -> Result<EvalReport> {
    let seed = opts.seed_for(cfg);
    let out = opts.out_for(cfg);
    let model = ModelArtifact::load(model_path)?.into_model()?;
    let dataset = match data_override {
        Some(path) => match &cfg.dataset {
            DatasetConfig::WindowsCsv { t, f, .. } => ingest_windows_csv(path, *t, *f)?,
            DatasetConfig::UcrTsv { .. } => {
                return Err(Error::Config(
                    "--data overrides need a windows-csv dataset section for the shape".into(),
                ))
            }
        },
        None => {
            let splits = load_splits(cfg, seed)?;
            match split {
                SplitChoice::Train => splits.train,
                SplitChoice::Val => splits.val,
                SplitChoice::Test => splits.test,
            }
        }
    };
    let report = evaluate(model.as_ref(), &dataset)?;
    std::fs::create_dir_all(&out)?;
    write_json(&out.join("evaluation.json"), &report)?;
    Ok(report)
}

/// Replay a decision trace into an energy ledger and write `energy.json`.
pub fn run_energy_replay(
    trace_path: &Path,
    energy_per_sampling_mwh: f64,
    intervals: EnergyIntervals,
    out: &Path,
) -> Result<EnergyLedger> {
    let trace = read_decision_trace(trace_path)?;
    let ledger = replay_energy(&trace, energy_per_sampling_mwh, intervals)?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("energy.json"), &ledger)?;
    Ok(ledger)
}

/// Invariant helpers shared by integration tests and the acceptance suite.
pub fn accepted_budget_total(rounds: &[RoundLog]) -> usize {
    rounds
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.budget)
        .sum()
}

pub fn stop_reason_name(reason: StopReason) -> &'static str {
    match reason {
        StopReason::LaunchRejected => "launch_rejected",
        StopReason::GapThreshold => "gap_threshold",
        StopReason::RejectStreak => "reject_streak",
    }
}
