//! The multi-round augmentation loop: a launch injection gates whether
//! augmentation helps at all, then shrinking refinement rounds generate
//! candidates that are accepted only when the joint score strictly improves
//! and the gap index strictly drops.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::capability::CapabilityTensor;
use crate::dataset::{LabeledDataset, TimeWindow};
use crate::error::{Error, Result};
use crate::gap::{
    build_gap_context, compute_gap_vector, gap_index, plan_from_gaps, BudgetAllocation,
    GapContext, GapIndex, SchedulingPlan,
};
use crate::generators::Generator;
use crate::model::{evaluate, Classifier, EvalReport, ModelArtifact, TrainedModel};
use crate::seeding::{derive_seed, tag};
use crate::stats::StatsConfig;

/// Closed-loop hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Weights of (macro-F1, accuracy, macro-recall, macro-precision,
    /// gap index) in the joint score.
    pub eta: [f64; 5],
    pub b_min: usize,
    pub b_max: usize,
    /// Launch-round amplification factor.
    pub kappa: f64,
    /// Cross-round budget shrinkage in (0, 1).
    pub rho_r: f64,
    /// Retries after a rejected candidate within one round.
    pub retries: usize,
    /// Consecutive rejected rounds that stop the loop.
    pub max_reject_streak: usize,
    /// Stop once the gap index falls below this fraction of its initial value.
    pub stop_fraction: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            eta: [0.5, 0.3, 0.1, 0.1, 0.2],
            b_min: 30,
            b_max: 385,
            kappa: 1.6,
            rho_r: 0.9,
            retries: 3,
            max_reject_streak: 3,
            stop_fraction: 0.05,
            eps: 1e-8,
            seed: 42,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b_min > self.b_max {
            return Err(Error::Config("b_min must be <= b_max".into()));
        }
        if self.b_min == 0 {
            return Err(Error::Config("b_min must be >= 1".into()));
        }
        if !(self.rho_r > 0.0 && self.rho_r < 1.0) {
            return Err(Error::Config("rho_r must be in (0, 1)".into()));
        }
        if self.kappa < 1.0 {
            return Err(Error::Config("kappa must be >= 1".into()));
        }
        if self.eta.iter().any(|&e| e < 0.0) {
            return Err(Error::Config("eta weights must be nonnegative".into()));
        }
        if self.retries == 0 || self.max_reject_streak == 0 {
            return Err(Error::Config("retries and max_reject_streak must be >= 1".into()));
        }
        if self.stop_fraction < 0.0 {
            return Err(Error::Config("stop_fraction must be >= 0".into()));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(())
    }
}

/// Weighted combination of validation metrics minus the weighted gap index.
pub fn joint_score(report: &EvalReport, gamma: f64, eta: &[f64; 5]) -> f64 {
    eta[0] * report.macro_f1
        + eta[1] * report.accuracy
        + eta[2] * report.macro_recall
        + eta[3] * report.macro_precision
        - eta[4] * gamma
}

/// Launch budget: `round(kappa * (b_min + (b_max - b_min) * gamma))`,
/// with `kappa = 1` when `with_kappa` is false. Never below 1.
pub fn launch_budget(gamma: f64, cfg: &LoopConfig, with_kappa: bool) -> usize {
    debug_assert!((0.0..=1.0).contains(&gamma), "gamma out of range: {gamma}");
    let gamma = gamma.clamp(0.0, 1.0);
    let kappa = if with_kappa { cfg.kappa } else { 1.0 };
    let raw = kappa * (cfg.b_min as f64 + (cfg.b_max - cfg.b_min) as f64 * gamma);
    (raw.round() as usize).max(1)
}

/// Next-round budget: round-half-up shrink, floored at 1.
pub fn shrink_budget(budget: usize, rho_r: f64) -> usize {
    ((budget as f64 * rho_r).round() as usize).max(1)
}

/// Why the loop returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Round 0 failed the gate; the original data and baseline model stand.
    LaunchRejected,
    /// The gap index fell below `stop_fraction` of its initial value.
    GapThreshold,
    /// `max_reject_streak` consecutive rounds were rejected.
    RejectStreak,
}

/// Audit record of one closed-loop round.
///
/// For rejected rounds `joint`/`gamma` carry the previous accepted state
/// forward while `delta_*` report the last failed attempt's measured
/// changes (the orientation in the rejection tables). `gamma_reduction` is
/// the positively-oriented drop `prev - attempt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundLog {
    #[serde(rename = "t")]
    pub round: u32,
    #[serde(rename = "B_t")]
    pub budget: usize,
    pub allocation: BudgetAllocation,
    #[serde(rename = "J_t")]
    pub joint: f64,
    #[serde(rename = "Gamma_t")]
    pub gamma: f64,
    #[serde(rename = "delta_J")]
    pub delta_joint: f64,
    #[serde(rename = "delta_Gamma")]
    pub delta_gamma: f64,
    pub gamma_reduction: f64,
    pub accepted: bool,
    /// Retries consumed after the round's first candidate (0..=retries).
    pub attempts: usize,
    pub val_accuracy: f64,
    pub wall_time_ms: u64,
    /// Content hash of the round's (last) candidate set.
    pub candidate_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attempt_errors: Vec<String>,
}

/// Scheduling audit for one round, emitted alongside the round logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundGapReport {
    #[serde(rename = "t")]
    pub round: u32,
    pub per_class: Vec<crate::gap::GapVector>,
    #[serde(rename = "Gamma")]
    pub gamma_bar: f64,
    pub lambda: f64,
    pub p_cls: Vec<f64>,
    pub p_gen: Vec<Vec<f64>>,
    pub allocation: BudgetAllocation,
}

pub struct LoopResult {
    pub final_train: LabeledDataset,
    pub final_model: Box<dyn TrainedModel>,
    pub rounds: Vec<RoundLog>,
    pub gap_reports: Vec<RoundGapReport>,
    pub stop_reason: StopReason,
    pub initial_joint: f64,
    pub initial_gamma: f64,
    pub initial_report: EvalReport,
    pub final_joint: f64,
    pub final_gamma: f64,
    pub final_report: EvalReport,
    /// Artifact of the round-less baseline model, for post-hoc evaluation.
    pub baseline_model: Option<ModelArtifact>,
    /// Model artifact after each round (carried forward on rejection), for
    /// post-hoc evaluation.
    pub per_round_models: Vec<Option<ModelArtifact>>,
}

/// What the loop asks of one training-set state.
pub enum AssessStage {
    Baseline,
    Candidate { round: u32, attempt: usize },
}

pub struct Assessment {
    pub model: Box<dyn TrainedModel>,
    pub report: EvalReport,
    pub gaps: GapIndex,
    pub joint: f64,
}

/// Seam between the loop's control flow and the train/evaluate/gap
/// machinery. The production implementation trains the configured
/// classifier; tests script exact score sequences through it.
pub trait RoundAssessor {
    fn assess(&mut self, stage: AssessStage, train: &LabeledDataset) -> Result<Assessment>;
}

/// Production assessor: train on the candidate state, evaluate on the
/// validation split, recompute gaps, combine into the joint score.
pub struct StandardAssessor<'a> {
    classifier: &'a dyn Classifier,
    val: &'a LabeledDataset,
    ctx: &'a GapContext,
    eta: [f64; 5],
    seed: u64,
}

impl<'a> StandardAssessor<'a> {
    pub fn new(
        classifier: &'a dyn Classifier,
        val: &'a LabeledDataset,
        ctx: &'a GapContext,
        eta: [f64; 5],
        seed: u64,
    ) -> Self {
        StandardAssessor {
            classifier,
            val,
            ctx,
            eta,
            seed,
        }
    }
}

impl RoundAssessor for StandardAssessor<'_> {
    fn assess(&mut self, stage: AssessStage, train: &LabeledDataset) -> Result<Assessment> {
        let train_seed = match stage {
            AssessStage::Baseline => derive_seed(self.seed, &[tag("train"), u64::MAX]),
            AssessStage::Candidate { round, attempt } => {
                derive_seed(self.seed, &[tag("train"), round as u64, attempt as u64])
            }
        };
        let model = self.classifier.train(train, train_seed)?;
        let report = evaluate(model.as_ref(), self.val)?;
        let gaps: Vec<_> = (0..train.num_classes)
            .map(|c| compute_gap_vector(c, self.ctx, train, &report))
            .collect::<Result<_>>()?;
        let gaps = gap_index(gaps);
        let joint = joint_score(&report, gaps.gamma_bar, &self.eta);
        Ok(Assessment {
            model,
            report,
            gaps,
            joint,
        })
    }
}

fn digest_windows(windows: &[TimeWindow]) -> String {
    let mut state = 0x1234_5678_9abc_def0u64 ^ windows.len() as u64;
    for w in windows {
        state ^= crate::seeding::hash_values(&w.values) ^ (w.label as u64).rotate_left(17);
        state = state.rotate_left(7).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    format!("{state:016x}")
}

/// Generate one candidate set per the allocation. Pools are the *original*
/// real training windows; generated data never feeds back into generation.
fn generate_candidate(
    generators: &[Box<dyn Generator>],
    real_pools: &[Vec<&TimeWindow>],
    allocation: &BudgetAllocation,
    round: u32,
    attempt: usize,
    seed: u64,
) -> Result<Vec<TimeWindow>> {
    let mut out = Vec::with_capacity(allocation.total);
    for (c, row) in allocation.per_cell.iter().enumerate() {
        for (g, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let cell_seed = derive_seed(
                seed,
                &[tag("gen"), round as u64, attempt as u64, g as u64, c as u64],
            );
            let windows =
                generators[g].generate(c, count, &real_pools[c], round, cell_seed)?;
            out.extend(windows);
        }
    }
    Ok(out)
}

/// Run the full closed loop with the production assessor.
pub fn run_closed_loop(
    train: &LabeledDataset,
    val: &LabeledDataset,
    generators: &[Box<dyn Generator>],
    classifier: &dyn Classifier,
    tensor: &CapabilityTensor,
    stats_cfg: &StatsConfig,
    cfg: &LoopConfig,
) -> Result<LoopResult> {
    let ctx = build_gap_context(train, stats_cfg)?;
    let mut assessor = StandardAssessor::new(classifier, val, &ctx, cfg.eta, cfg.seed);
    run_closed_loop_with_assessor(train, generators, tensor, cfg, &mut assessor)
}

/// Closed loop over an arbitrary assessor (the production path wraps this).
pub fn run_closed_loop_with_assessor(
    train: &LabeledDataset,
    generators: &[Box<dyn Generator>],
    tensor: &CapabilityTensor,
    cfg: &LoopConfig,
    assessor: &mut dyn RoundAssessor,
) -> Result<LoopResult> {
    cfg.validate()?;
    if tensor.num_generators() != generators.len() || tensor.classes != train.num_classes {
        return Err(Error::invalid(format!(
            "capability tensor is {}x{}, need {}x{}",
            tensor.num_generators(),
            tensor.classes,
            generators.len(),
            train.num_classes
        )));
    }
    for (g, generator) in generators.iter().enumerate() {
        if tensor.generator_ids[g] != generator.id() {
            return Err(Error::invalid(format!(
                "tensor row {g} is '{}', generator is '{}'",
                tensor.generator_ids[g],
                generator.id()
            )));
        }
    }
    let real_pools: Vec<Vec<&TimeWindow>> = (0..train.num_classes)
        .map(|c| train.real_class_windows(c))
        .collect();

    let baseline = assessor.assess(AssessStage::Baseline, train)?;
    let initial_gamma = baseline.gaps.gamma_bar;
    let initial_joint = baseline.joint;
    let initial_report = baseline.report.clone();
    let baseline_artifact = baseline.model.artifact().ok();

    let mut rounds: Vec<RoundLog> = Vec::new();
    let mut gap_reports: Vec<RoundGapReport> = Vec::new();
    let mut per_round_models: Vec<Option<ModelArtifact>> = Vec::new();

    // ---- Round 0: launch injection -------------------------------------
    let launch = launch_budget(initial_gamma, cfg, true);
    let (plan0, alloc0) =
        plan_from_gaps(&baseline.gaps, &train.class_counts(), tensor, launch, cfg.eps)?;
    push_gap_report(&mut gap_reports, 0, &baseline.gaps, &plan0, &alloc0);

    let started = Instant::now();
    let mut errors: Vec<String> = Vec::new();
    let launch_outcome: Option<(Assessment, LabeledDataset, String)> = (|| {
        let candidate =
            match generate_candidate(generators, &real_pools, &alloc0, 0, 0, cfg.seed) {
                Ok(c) => c,
                Err(e) => {
                    errors.push(e.to_string());
                    return None;
                }
            };
        let digest = digest_windows(&candidate);
        let new_train = match train.with_appended(candidate) {
            Ok(t) => t,
            Err(e) => {
                errors.push(e.to_string());
                return None;
            }
        };
        match assessor.assess(
            AssessStage::Candidate {
                round: 0,
                attempt: 0,
            },
            &new_train,
        ) {
            Ok(a) => Some((a, new_train, digest)),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        }
    })();

    let (accepted0, round0_assessment) = match &launch_outcome {
        Some((a, _, _)) => {
            let delta = a.joint - initial_joint;
            (delta > 0.0 && a.gaps.gamma_bar < initial_gamma, Some(a))
        }
        None => (false, None),
    };

    let (delta_j0, gamma0, digest0) = match round0_assessment {
        Some(a) => (
            a.joint - initial_joint,
            a.gaps.gamma_bar,
            launch_outcome.as_ref().map(|o| o.2.clone()).unwrap(),
        ),
        None => (0.0, initial_gamma, String::new()),
    };
    rounds.push(RoundLog {
        round: 0,
        budget: launch,
        allocation: alloc0,
        joint: if accepted0 { initial_joint + delta_j0 } else { initial_joint },
        gamma: if accepted0 { gamma0 } else { initial_gamma },
        delta_joint: delta_j0,
        delta_gamma: gamma0 - initial_gamma,
        gamma_reduction: initial_gamma - gamma0,
        accepted: accepted0,
        attempts: 0,
        val_accuracy: round0_assessment
            .map(|a| a.report.accuracy)
            .unwrap_or(initial_report.accuracy),
        wall_time_ms: started.elapsed().as_millis() as u64,
        candidate_digest: digest0,
        attempt_errors: errors,
    });

    if !accepted0 {
        // Augmentation does not help: return the original data and model.
        per_round_models.push(baseline_artifact.clone());
        return Ok(LoopResult {
            final_train: train.clone(),
            final_joint: initial_joint,
            final_gamma: initial_gamma,
            final_report: initial_report.clone(),
            final_model: baseline.model,
            rounds,
            gap_reports,
            stop_reason: StopReason::LaunchRejected,
            initial_joint,
            initial_gamma,
            initial_report,
            baseline_model: baseline_artifact,
            per_round_models,
        });
    }

    let (mut state, mut cur_train, _) = launch_outcome.unwrap();
    per_round_models.push(state.model.artifact().ok());

    // ---- Refinement adjustment ------------------------------------------
    let mut budget = launch_budget(state.gaps.gamma_bar, cfg, false);
    let mut reject_streak = 0usize;
    let mut t: u32 = 1;
    let stop_reason = loop {
        let started = Instant::now();
        let (plan, alloc) = plan_from_gaps(
            &state.gaps,
            &cur_train.class_counts(),
            tensor,
            budget,
            cfg.eps,
        )?;
        push_gap_report(&mut gap_reports, t, &state.gaps, &plan, &alloc);

        let mut errors: Vec<String> = Vec::new();
        let mut accepted: Option<(Assessment, LabeledDataset)> = None;
        let mut attempts_used = cfg.retries;
        let mut last_delta_j = 0.0;
        let mut last_delta_gamma = 0.0;
        let mut last_digest = String::new();
        for attempt in 0..=cfg.retries {
            let candidate = match generate_candidate(
                generators,
                &real_pools,
                &alloc,
                t,
                attempt,
                cfg.seed,
            ) {
                Ok(c) => c,
                Err(e) => {
                    errors.push(format!("attempt {attempt}: {e}"));
                    continue;
                }
            };
            last_digest = digest_windows(&candidate);
            let new_train = match cur_train.with_appended(candidate) {
                Ok(tset) => tset,
                Err(e) => {
                    errors.push(format!("attempt {attempt}: {e}"));
                    continue;
                }
            };
            let assessment = match assessor.assess(
                AssessStage::Candidate { round: t, attempt },
                &new_train,
            ) {
                Ok(a) => a,
                Err(e) => {
                    errors.push(format!("attempt {attempt}: {e}"));
                    continue;
                }
            };
            last_delta_j = assessment.joint - state.joint;
            last_delta_gamma = assessment.gaps.gamma_bar - state.gaps.gamma_bar;
            if last_delta_j > 0.0 && assessment.gaps.gamma_bar < state.gaps.gamma_bar {
                attempts_used = attempt;
                accepted = Some((assessment, new_train));
                break;
            }
        }

        let is_accepted = accepted.is_some();
        if let Some((assessment, new_train)) = accepted {
            state = assessment;
            cur_train = new_train;
            reject_streak = 0;
        } else {
            reject_streak += 1;
        }
        rounds.push(RoundLog {
            round: t,
            budget,
            allocation: alloc,
            joint: state.joint,
            gamma: state.gaps.gamma_bar,
            delta_joint: last_delta_j,
            delta_gamma: last_delta_gamma,
            gamma_reduction: -last_delta_gamma,
            accepted: is_accepted,
            attempts: attempts_used,
            val_accuracy: state.report.accuracy,
            wall_time_ms: started.elapsed().as_millis() as u64,
            candidate_digest: last_digest,
            attempt_errors: errors,
        });
        per_round_models.push(state.model.artifact().ok());

        budget = shrink_budget(budget, cfg.rho_r);
        if state.gaps.gamma_bar <= cfg.stop_fraction * initial_gamma {
            break StopReason::GapThreshold;
        }
        if reject_streak >= cfg.max_reject_streak {
            break StopReason::RejectStreak;
        }
        t += 1;
    };

    Ok(LoopResult {
        final_train: cur_train,
        final_joint: state.joint,
        final_gamma: state.gaps.gamma_bar,
        final_report: state.report.clone(),
        final_model: state.model,
        rounds,
        gap_reports,
        stop_reason,
        initial_joint,
        initial_gamma,
        initial_report,
        baseline_model: baseline_artifact,
        per_round_models,
    })
}

fn push_gap_report(
    reports: &mut Vec<RoundGapReport>,
    round: u32,
    gaps: &GapIndex,
    plan: &SchedulingPlan,
    alloc: &BudgetAllocation,
) {
    reports.push(RoundGapReport {
        round,
        per_class: gaps.per_class.clone(),
        gamma_bar: gaps.gamma_bar,
        lambda: plan.lambda,
        p_cls: plan.class_probs.clone(),
        p_gen: plan.generator_probs.clone(),
        allocation: alloc.clone(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::CapabilityCell;
    use crate::dataset::testutil::synthetic_dataset;
    use crate::dataset::Provenance;
    use crate::generators::CopyGenerator;
    use crate::model::metrics::testutil::TableModel;

    fn eta() -> [f64; 5] {
        [0.5, 0.3, 0.1, 0.1, 0.2]
    }

    fn perfect_report(c: usize) -> EvalReport {
        EvalReport {
            accuracy: 1.0,
            macro_f1: 1.0,
            macro_precision: 1.0,
            macro_recall: 1.0,
            per_class_recall: vec![1.0; c],
            mean_normalized_entropy_per_class: vec![0.0; c],
            confusion: vec![vec![0; c]; c],
            absent_classes: vec![],
        }
    }

    #[test]
    fn joint_score_arithmetic() {
        let report = perfect_report(3);
        assert!((joint_score(&report, 0.0, &eta()) - 1.0).abs() < 1e-12);

        let zero = EvalReport {
            accuracy: 0.0,
            macro_f1: 0.0,
            macro_precision: 0.0,
            macro_recall: 0.0,
            per_class_recall: vec![0.0; 3],
            mean_normalized_entropy_per_class: vec![1.0; 3],
            confusion: vec![vec![0; 3]; 3],
            absent_classes: vec![],
        };
        assert!((joint_score(&zero, 1.0, &eta()) + 0.2).abs() < 1e-12);

        let flat = EvalReport {
            accuracy: 0.8,
            macro_f1: 0.8,
            macro_precision: 0.8,
            macro_recall: 0.8,
            per_class_recall: vec![0.8; 3],
            mean_normalized_entropy_per_class: vec![0.2; 3],
            confusion: vec![vec![0; 3]; 3],
            absent_classes: vec![],
        };
        assert!((joint_score(&flat, 0.25, &eta()) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn budget_formulas() {
        let cfg = LoopConfig::default();
        assert_eq!(launch_budget(0.0, &cfg, true), 48); // round(1.6 * 30)
        assert_eq!(launch_budget(1.0, &cfg, false), 385);
        assert_eq!(launch_budget(0.2564, &cfg, true), 194);
        assert_eq!(shrink_budget(100, 0.9), 90);
        assert_eq!(shrink_budget(1, 0.9), 1);
        assert_eq!(shrink_budget(159, 0.9), 143);
    }

    /// Assessor replaying a scripted (joint, gamma) sequence: one entry for
    /// the baseline, then one per round (all attempts within a round see
    /// the same values, as in the rejection tables).
    struct ScriptedAssessor {
        baseline: (f64, f64),
        rounds: Vec<(f64, f64)>,
        num_classes: usize,
    }

    impl RoundAssessor for ScriptedAssessor {
        fn assess(&mut self, stage: AssessStage, _train: &LabeledDataset) -> Result<Assessment> {
            let (joint, gamma) = match stage {
                AssessStage::Baseline => self.baseline,
                AssessStage::Candidate { round, .. } => self.rounds[round as usize],
            };
            let gaps = gap_index(
                (0..self.num_classes)
                    .map(|c| crate::gap::GapVector::new(c, gamma, gamma, gamma, gamma))
                    .collect(),
            );
            let mut report = perfect_report(self.num_classes);
            report.accuracy = joint;
            Ok(Assessment {
                model: Box::new(TableModel {
                    by_label: vec![vec![1.0 / self.num_classes as f64; self.num_classes]; self.num_classes],
                }),
                report,
                gaps,
                joint,
            })
        }
    }

    fn uniform_tensor(g: usize, c: usize, ids: Vec<String>) -> CapabilityTensor {
        CapabilityTensor {
            generator_ids: ids,
            classes: c,
            cells: vec![
                vec![
                    CapabilityCell {
                        similarity: 0.5,
                        contribution: 0.5,
                        raw_mi: 0.0,
                        baseline_mi: 0.0,
                        entropy: 1.0,
                    };
                    c
                ];
                g
            ],
        }
    }

    fn loop_fixture() -> (LabeledDataset, Vec<Box<dyn Generator>>, CapabilityTensor) {
        let train = synthetic_dataset(3, 12, 3, 2, 200);
        let generators: Vec<Box<dyn Generator>> = vec![Box::new(CopyGenerator)];
        let tensor = uniform_tensor(1, 3, vec!["copy".into()]);
        (train, generators, tensor)
    }

    /// Scripted replay of the linear-model rejection row: accept round 0,
    /// then three consecutive rejections stop the loop.
    #[test]
    fn table_accept_1000_pattern() {
        let (train, generators, tensor) = loop_fixture();
        let gamma = 0.2564;
        let j = 0.700;
        // Deltas: +0.030 then -0.016, -0.007, -0.007; gap reductions
        // 0.041, 0.010, 0.013, 0.011 (reductions, so rejected rounds would
        // have lowered gamma but failed the joint-score gate).
        let mut assessor = ScriptedAssessor {
            baseline: (j, gamma),
            rounds: vec![
                (j + 0.030, gamma - 0.041),
                (j + 0.030 - 0.016, gamma - 0.041 - 0.010),
                (j + 0.030 - 0.007, gamma - 0.041 - 0.013),
                (j + 0.030 - 0.007, gamma - 0.041 - 0.011),
            ],
            num_classes: 3,
        };
        let cfg = LoopConfig {
            retries: 3,
            max_reject_streak: 3,
            ..LoopConfig::default()
        };
        let result =
            run_closed_loop_with_assessor(&train, &generators, &tensor, &cfg, &mut assessor)
                .unwrap();

        assert_eq!(result.stop_reason, StopReason::RejectStreak);
        let flags: Vec<bool> = result.rounds.iter().map(|r| r.accepted).collect();
        assert_eq!(flags, vec![true, false, false, false]);
        assert_eq!(result.rounds.len(), 4);
        // Rejected rounds exhaust all retries.
        assert_eq!(result.rounds[1].attempts, cfg.retries);
        assert_eq!(result.rounds[0].attempts, 0);
        // Accepted round-0 log carries the improved state.
        assert!((result.rounds[0].delta_joint - 0.030).abs() < 1e-12);
        assert!((result.rounds[0].gamma_reduction - 0.041).abs() < 1e-12);
        // Rejected rounds carry the previous accepted state forward.
        assert!((result.rounds[1].joint - (j + 0.030)).abs() < 1e-12);
        assert!((result.rounds[1].gamma - (gamma - 0.041)).abs() < 1e-12);
        assert!((result.rounds[1].delta_joint + 0.016).abs() < 1e-12);
        // |final_train| = |train| + accepted budgets.
        let accepted_budget: usize = result
            .rounds
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.budget)
            .sum();
        assert_eq!(result.final_train.len(), train.len() + accepted_budget);
    }

    #[test]
    fn budget_shrinks_every_round_under_pure_rejection() {
        let (train, generators, tensor) = loop_fixture();
        let gamma = 0.3;
        // Round 0 accepted, then everything rejected.
        let mut assessor = ScriptedAssessor {
            baseline: (0.5, gamma),
            rounds: vec![
                (0.6, gamma - 0.05),
                (0.5, gamma),
                (0.5, gamma),
                (0.5, gamma),
            ],
            num_classes: 3,
        };
        let cfg = LoopConfig {
            b_min: 100,
            b_max: 100, // pin B(1) at 100 regardless of gamma
            rho_r: 0.9,
            retries: 2,
            max_reject_streak: 3,
            ..LoopConfig::default()
        };
        let result =
            run_closed_loop_with_assessor(&train, &generators, &tensor, &cfg, &mut assessor)
                .unwrap();
        let budgets: Vec<usize> = result.rounds[1..].iter().map(|r| r.budget).collect();
        assert_eq!(budgets, vec![100, 90, 81]);
        assert_eq!(result.stop_reason, StopReason::RejectStreak);
    }

    #[test]
    fn constant_predictor_rejects_the_launch() {
        let (train, generators, tensor) = loop_fixture();
        // Identical scores before and after: delta_J = 0 fails the strict gate.
        let mut assessor = ScriptedAssessor {
            baseline: (0.5, 0.3),
            rounds: vec![(0.5, 0.3)],
            num_classes: 3,
        };
        let cfg = LoopConfig::default();
        let result =
            run_closed_loop_with_assessor(&train, &generators, &tensor, &cfg, &mut assessor)
                .unwrap();
        assert_eq!(result.stop_reason, StopReason::LaunchRejected);
        assert_eq!(result.final_train.len(), train.len());
        assert!(result
            .final_train
            .windows
            .iter()
            .all(|w| w.provenance == Provenance::Real));
        assert_eq!(result.rounds.len(), 1);
        assert!(!result.rounds[0].accepted);
    }

    #[test]
    fn gap_threshold_stops_the_loop() {
        let (train, generators, tensor) = loop_fixture();
        let mut assessor = ScriptedAssessor {
            baseline: (0.5, 0.4),
            rounds: vec![
                (0.6, 0.3),
                (0.7, 0.01), // below 5% of 0.4 = 0.02
            ],
            num_classes: 3,
        };
        let cfg = LoopConfig::default();
        let result =
            run_closed_loop_with_assessor(&train, &generators, &tensor, &cfg, &mut assessor)
                .unwrap();
        assert_eq!(result.stop_reason, StopReason::GapThreshold);
        assert_eq!(result.rounds.len(), 2);
        assert!(result.rounds.iter().all(|r| r.accepted));
    }

    #[test]
    fn failing_assessment_counts_as_rejection_with_recorded_error() {
        struct FlakyAssessor {
            inner: ScriptedAssessor,
        }
        impl RoundAssessor for FlakyAssessor {
            fn assess(&mut self, stage: AssessStage, train: &LabeledDataset) -> Result<Assessment> {
                if let AssessStage::Candidate { round: 1, .. } = stage {
                    return Err(Error::Classifier("synthetic failure".into()));
                }
                self.inner.assess(stage, train)
            }
        }
        let (train, generators, tensor) = loop_fixture();
        let mut assessor = FlakyAssessor {
            inner: ScriptedAssessor {
                baseline: (0.5, 0.4),
                rounds: vec![(0.6, 0.3), (0.0, 0.0), (0.7, 0.01)],
                num_classes: 3,
            },
        };
        let cfg = LoopConfig {
            max_reject_streak: 5,
            ..LoopConfig::default()
        };
        let result =
            run_closed_loop_with_assessor(&train, &generators, &tensor, &cfg, &mut assessor)
                .unwrap();
        assert!(!result.rounds[1].accepted);
        assert_eq!(result.rounds[1].attempt_errors.len(), cfg.retries + 1);
        assert!(result.rounds[1].attempt_errors[0].contains("synthetic failure"));
        // Round 2 recovers and hits the gap threshold.
        assert_eq!(result.stop_reason, StopReason::GapThreshold);
    }

    #[test]
    fn mismatched_tensor_is_rejected() {
        let (train, generators, _) = loop_fixture();
        let tensor = uniform_tensor(1, 3, vec!["other".into()]);
        let mut assessor = ScriptedAssessor {
            baseline: (0.5, 0.3),
            rounds: vec![],
            num_classes: 3,
        };
        let err = run_closed_loop_with_assessor(
            &train,
            &generators,
            &tensor,
            &LoopConfig::default(),
            &mut assessor,
        )
        .unwrap_err();
        assert!(err.to_string().contains("tensor"), "{err}");
    }
}
