//! Penalty-method placement: a sequence of subproblems
//! `min WL_gamma + lambda_s * penalty`, each solved by a few Adam steps whose
//! learning rates and counts come from the evolved schedules.

use serde::{Deserialize, Serialize};

use crate::harness::StagePlan;
use crate::population::{Legality, Metrics, StageRecord};
use crate::sandbox::{classify_legality, CandidateHandle, CandidateRequest, DomainRules, ExecutionOutcome, LegalityVerdict};

use super::adam::{adam_step, AdamState};
use super::density::density_overflow;
use super::instance::MicroPlacementInstance;
use super::wirelength::{hpwl, smooth_wl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSettings {
    pub subproblems: usize,
    pub step_cap: usize,
    /// Initial smoothing, in bin widths.
    pub gamma_bins: f64,
    pub gamma_decay: f64,
    pub lambda_growth: f64,
    /// `learning_rate_prev` reported on the very first query.
    pub initial_learning_rate: f64,
    pub objective_cap: f64,
}

impl Default for PlacementSettings {
    fn default() -> Self {
        Self {
            subproblems: 40,
            step_cap: 100,
            gamma_bins: 4.0,
            gamma_decay: 0.98,
            lambda_growth: 1.1,
            initial_learning_rate: 0.01,
            objective_cap: 1e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrQuery {
    pub step_num: i64,
    pub log_objective: f64,
    pub log_objective_prev: f64,
    pub overflow: f64,
    pub log_lambda: f64,
    pub learning_rate_prev: f64,
    pub log_gradient_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepQuery {
    pub subproblem_index: i64,
    pub overflow: f64,
    pub log_lambda: f64,
}

pub trait LearningRateSource {
    fn learning_rate(&mut self, query: &LrQuery) -> Result<f64, LegalityVerdict>;
}

pub trait StepSource {
    fn steps(&mut self, query: &StepQuery) -> Result<i64, LegalityVerdict>;
}

impl LearningRateSource for CandidateHandle {
    fn learning_rate(&mut self, q: &LrQuery) -> Result<f64, LegalityVerdict> {
        CandidateHandle::learning_rate(
            self,
            &CandidateRequest::LearningRate {
                step_num: q.step_num,
                log_objective: q.log_objective,
                log_objective_prev: q.log_objective_prev,
                overflow: q.overflow,
                log_lambda: q.log_lambda,
                learning_rate_prev: q.learning_rate_prev,
                log_gradient_norm: q.log_gradient_norm,
            },
        )
    }
}

impl StepSource for CandidateHandle {
    fn steps(&mut self, q: &StepQuery) -> Result<i64, LegalityVerdict> {
        CandidateHandle::steps(
            self,
            &CandidateRequest::Steps {
                subproblem_index: q.subproblem_index,
                overflow: q.overflow,
                log_lambda: q.log_lambda,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLr(pub f64);

impl LearningRateSource for ConstantLr {
    fn learning_rate(&mut self, _: &LrQuery) -> Result<f64, LegalityVerdict> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedSteps(pub i64);

impl StepSource for FixedSteps {
    fn steps(&mut self, _: &StepQuery) -> Result<i64, LegalityVerdict> {
        Ok(self.0)
    }
}

/// Lagrangian multipliers, one per subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSchedule {
    pub lambdas: Vec<f64>,
}

impl SubproblemSchedule {
    pub fn geometric(lambda0: f64, growth: f64, count: usize) -> Self {
        assert!(lambda0 > 0.0 && growth > 1.0, "schedule must be positive and increasing");
        Self {
            lambdas: (0..count).map(|s| lambda0 * growth.powi(s as i32)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

pub fn initial_gamma(instance: &MicroPlacementInstance, settings: &PlacementSettings) -> f64 {
    settings.gamma_bins * instance.bin_width()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `lambda0` equalizing the wirelength and penalty gradient norms at the
/// initial positions; 1 when the penalty gradient vanishes.
pub fn calibrate_lambda0(instance: &MicroPlacementInstance, settings: &PlacementSettings) -> f64 {
    let pos = &instance.initial_positions;
    let (_, wl_grad) = smooth_wl(instance, pos, initial_gamma(instance, settings));
    let density = density_overflow(instance, pos);
    let pen = norm(&density.gradient);
    let wl = norm(&wl_grad);
    if pen > 0.0 && wl > 0.0 {
        wl / pen
    } else {
        1.0
    }
}

pub fn default_schedule(instance: &MicroPlacementInstance, settings: &PlacementSettings) -> SubproblemSchedule {
    SubproblemSchedule::geometric(calibrate_lambda0(instance, settings), settings.lambda_growth, settings.subproblems)
}

/// Pass iff the overflow target is met with a wirelength below the cap.
pub fn schedule_legality(final_metrics: &Metrics, target_overflow: f64, objective_cap: f64) -> LegalityVerdict {
    let (Some(&hpwl), Some(&overflow)) = (final_metrics.get("hpwl"), final_metrics.get("overflow")) else {
        return LegalityVerdict::new(Legality::RuntimeFailure, "final metrics lack hpwl/overflow");
    };
    classify_legality(
        &ExecutionOutcome::Completed {
            objective: hpwl,
            overflow: Some(overflow),
        },
        DomainRules::Target {
            target_overflow,
            objective_cap,
        },
    )
}

/// A stage interrupted by a candidate failure.
#[derive(Debug, Clone, PartialEq)]
pub struct StageAbort {
    pub verdict: LegalityVerdict,
    pub partial: StageRecord,
}

struct StageAccumulator {
    stage: usize,
    hpwl_before: f64,
    overflow_before: f64,
    steps: usize,
    log_grad_sum: f64,
}

/// Resumable state of one subproblem sequence.
#[derive(Debug, Clone)]
pub struct PlacementState {
    instance: MicroPlacementInstance,
    settings: PlacementSettings,
    schedule: SubproblemSchedule,
    plan: StagePlan,
    positions: Vec<f64>,
    adam: AdamState,
    gamma: f64,
    step_num: i64,
    lr_prev: f64,
    log_objective_prev: Option<f64>,
    overflow: f64,
    reached_target: bool,
    next_stage: usize,
    subproblems_run: usize,
}

impl PlacementState {
    pub fn new(
        instance: MicroPlacementInstance,
        settings: PlacementSettings,
        schedule: SubproblemSchedule,
        plan: StagePlan,
    ) -> Self {
        assert_eq!(plan.total, schedule.len(), "plan must cover every subproblem");
        let positions = instance.initial_positions.clone();
        let overflow = density_overflow(&instance, &positions).overflow;
        let reached_target = overflow <= instance.target_overflow;
        Self {
            gamma: initial_gamma(&instance, &settings),
            adam: AdamState::new(positions.len()),
            lr_prev: settings.initial_learning_rate,
            instance,
            settings,
            schedule,
            plan,
            positions,
            step_num: 0,
            log_objective_prev: None,
            overflow,
            reached_target,
            next_stage: 0,
            subproblems_run: 0,
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    pub fn hpwl(&self) -> f64 {
        hpwl(&self.instance, &self.positions)
    }

    pub fn is_complete(&self) -> bool {
        self.next_stage == self.plan.stage_count()
    }

    pub fn steps_taken(&self) -> i64 {
        self.step_num
    }

    fn clamp_steps(&self, requested: i64, subproblem: usize) -> usize {
        let cap = self.settings.step_cap as i64;
        if requested < 1 || requested > cap {
            tracing::warn!(subproblem, requested, cap, "step count clamped to [1, cap]");
        }
        requested.clamp(1, cap) as usize
    }

    /// Runs the subproblems of the next stage. On a candidate failure the
    /// partial record of the interrupted stage comes back with the verdict.
    pub fn run_stage(
        &mut self,
        lr: &mut dyn LearningRateSource,
        steps: &mut dyn StepSource,
    ) -> Result<StageRecord, StageAbort> {
        let stage = self.next_stage;
        assert!(stage < self.plan.stage_count(), "all stages already run");
        let mut acc = StageAccumulator {
            stage,
            hpwl_before: self.hpwl(),
            overflow_before: self.overflow,
            steps: 0,
            log_grad_sum: 0.0,
        };
        let result = self.advance(lr, steps, &mut acc);
        self.next_stage += 1;
        let record = self.stage_record(&acc, result.as_ref().err());
        match result {
            Ok(()) => Ok(record),
            Err(verdict) => Err(StageAbort {
                verdict,
                partial: record,
            }),
        }
    }

    fn advance(
        &mut self,
        lr: &mut dyn LearningRateSource,
        steps: &mut dyn StepSource,
        acc: &mut StageAccumulator,
    ) -> Result<(), LegalityVerdict> {
        for s in self.plan.range(acc.stage) {
            if self.reached_target {
                break;
            }
            let lambda = self.schedule.lambdas[s];
            let requested = steps.steps(&StepQuery {
                subproblem_index: s as i64,
                overflow: self.overflow,
                log_lambda: lambda.ln(),
            })?;
            let count = self.clamp_steps(requested, s);
            for _ in 0..count {
                let (wl, wl_grad) = smooth_wl(&self.instance, &self.positions, self.gamma);
                let density = density_overflow(&self.instance, &self.positions);
                let objective = wl + lambda * density.penalty;
                let grad: Vec<f64> = wl_grad.iter().zip(&density.gradient).map(|(a, b)| a + lambda * b).collect();
                let log_objective = objective.max(f64::MIN_POSITIVE).ln();
                let log_gradient_norm = norm(&grad).max(f64::MIN_POSITIVE).ln();
                let rate = lr.learning_rate(&LrQuery {
                    step_num: self.step_num,
                    log_objective,
                    log_objective_prev: self.log_objective_prev.unwrap_or(log_objective),
                    overflow: density.overflow,
                    log_lambda: lambda.ln(),
                    learning_rate_prev: self.lr_prev,
                    log_gradient_norm,
                })?;
                if !rate.is_finite() {
                    return Err(LegalityVerdict::new(
                        Legality::NonFinite,
                        format!("learning rate {rate} at step {}", self.step_num),
                    ));
                }
                if rate < 0.0 {
                    return Err(LegalityVerdict::new(
                        Legality::RuntimeFailure,
                        format!("negative learning rate {rate} at step {}", self.step_num),
                    ));
                }
                let delta = adam_step(&mut self.adam, &grad, rate)?;
                for (p, d) in self.positions.iter_mut().zip(&delta) {
                    *p += d;
                }
                if self.positions.iter().any(|p| !p.is_finite()) {
                    return Err(LegalityVerdict::new(Legality::NonFinite, "non-finite cell position"));
                }
                self.instance.clamp_positions(&mut self.positions);
                self.lr_prev = rate;
                self.log_objective_prev = Some(log_objective);
                self.step_num += 1;
                acc.steps += 1;
                acc.log_grad_sum += log_gradient_norm;
                self.overflow = density_overflow(&self.instance, &self.positions).overflow;
                if self.overflow <= self.instance.target_overflow {
                    self.reached_target = true;
                    break;
                }
            }
            self.subproblems_run += 1;
            self.gamma *= self.settings.gamma_decay;
        }
        Ok(())
    }

    fn stage_record(&self, acc: &StageAccumulator, failure: Option<&LegalityVerdict>) -> StageRecord {
        let stage = acc.stage;
        let (hpwl_before, overflow_before, n) = (acc.hpwl_before, acc.overflow_before, acc.steps);
        let lambda_now = self.schedule.lambdas[self.plan.range(stage).end - 1];
        let hpwl_after = self.hpwl();
        let (swl, _) = smooth_wl(&self.instance, &self.positions, self.gamma);
        let mean_log_grad = if n > 0 { acc.log_grad_sum / n as f64 } else { 0.0 };
        let summary = if let Some(v) = failure {
            format!(
                "stage {stage}: aborted after {n} steps ({v}); HPWL {hpwl_after:.2}, overflow {:.4}",
                self.overflow
            )
        } else if n == 0 {
            format!(
                "stage {stage}: target overflow already reached, no steps run; HPWL {hpwl_after:.2}, overflow {:.4}",
                self.overflow
            )
        } else {
            let trend = |before: f64, after: f64| if after < before { "fell" } else { "rose" };
            format!(
                "stage {stage}: overflow {} {overflow_before:.4} -> {:.4}, HPWL {} {hpwl_before:.2} -> {hpwl_after:.2} over {n} steps (lambda now {lambda_now:.3e}){}",
                trend(overflow_before, self.overflow),
                self.overflow,
                trend(hpwl_before, hpwl_after),
                if self.reached_target { "; target overflow reached" } else { "" }
            )
        };
        StageRecord::new(summary)
            .with_metric("hpwl", hpwl_after)
            .with_metric("smooth_wl", swl)
            .with_metric("overflow", self.overflow)
            .with_metric("delta_hpwl", hpwl_after - hpwl_before)
            .with_metric("delta_overflow", self.overflow - overflow_before)
            .with_metric("mean_log_gradient_norm", mean_log_grad)
            .with_metric("steps", n as f64)
            .with_metric("lambda", lambda_now)
    }

    pub fn final_metrics(&self) -> Metrics {
        let mut m = Metrics::new();
        m.insert("hpwl".into(), self.hpwl());
        m.insert("overflow".into(), self.overflow);
        m.insert("total_steps".into(), self.step_num as f64);
        m.insert("subproblems_run".into(), self.subproblems_run as f64);
        m
    }

    pub fn verdict(&self) -> LegalityVerdict {
        schedule_legality(&self.final_metrics(), self.instance.target_overflow, self.settings.objective_cap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutcome {
    pub records: Vec<StageRecord>,
    pub final_metrics: Metrics,
    pub score: Option<f64>,
    pub verdict: LegalityVerdict,
}

/// Runs every stage with one pair of schedules.
pub fn run_subproblem_sequence(
    instance: &MicroPlacementInstance,
    lr: &mut dyn LearningRateSource,
    steps: &mut dyn StepSource,
    schedule: SubproblemSchedule,
    plan: StagePlan,
    settings: &PlacementSettings,
) -> SequenceOutcome {
    let mut state = PlacementState::new(instance.clone(), settings.clone(), schedule, plan);
    let mut records = Vec::new();
    while !state.is_complete() {
        match state.run_stage(lr, steps) {
            Ok(r) => records.push(r),
            Err(abort) => {
                records.push(abort.partial);
                return SequenceOutcome {
                    records,
                    final_metrics: state.final_metrics(),
                    score: None,
                    verdict: abort.verdict,
                }
            }
        }
    }
    let verdict = state.verdict();
    let score = verdict.tag.is_pass().then(|| -state.hpwl());
    SequenceOutcome {
        records,
        final_metrics: state.final_metrics(),
        score,
        verdict,
    }
}
