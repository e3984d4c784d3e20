//! Iterative decomposition of the per-step joint line chance constraint.
//!
//! The loop alternates between the dispatch and the sample picture of that
//! dispatch:
//!
//! 1. draw one scenario set for the whole run;
//! 2. presolve with every view at risk `α / |𝒩|`;
//! 3. classify: empirical marginals of every view under the current dispatch,
//!    keeping the views with at least one violating sample;
//! 4. estimate the inclusion-exclusion correction `E` of those views;
//! 5. split `α + E` over them in proportion to their marginals;
//! 6. re-solve with only those views, and repeat from 3 until the objective
//!    settles.
//!
//! Views dropped in one pass are re-examined in the next, since
//! classification always runs over the full view set.

mod allocation;
mod violation;

use std::time::Instant;

use crate::baselines::MethodId;
use crate::error::{Error, Result};
use crate::model::Case;
use crate::qp::{self, QpStatus, SolverOptions};
use crate::reform::{assemble_opf, RiskBudget, RowKind, ViewRisk, RHO_MAX};
use crate::uncertainty::{draw_scenarios, ScenarioSet};

pub use allocation::{allocate, allocate_risk, allocate_uniform, Allocation, StepAllocation};
pub use violation::{
    build_violation_matrix, classify, estimate, estimate_e, estimate_joint_subset, Classification,
    EstimationResult, StepClassification, StepEstimate, ViolationMatrix,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkConfig {
    /// Joint risk of the line constraints at each step.
    pub alpha: f64,
    /// Risk of the supply-demand constraint at each step.
    pub epsilon: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Relative objective change that ends the loop.
    pub tolerance: f64,
    /// Cap on re-solves after the presolve.
    pub max_iterations: usize,
    pub solver: SolverOptions,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            epsilon: 1e-4,
            n_samples: 20_000,
            seed: 42,
            tolerance: 1e-5,
            max_iterations: 50,
            solver: SolverOptions::default(),
        }
    }
}

impl FrameworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Domain(format!(
                "alpha must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Domain(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::Domain("sample count must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("max iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleStatus {
    /// Single solve, nothing to iterate.
    Direct,
    Converged,
    /// Iteration cap reached; the schedule is the best iterate seen.
    NotConverged,
    /// A re-solve was infeasible; the schedule is the previous iterate.
    Fallback,
}

impl ScheduleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleStatus::Direct => "direct",
            ScheduleStatus::Converged => "converged",
            ScheduleStatus::NotConverged => "not_converged",
            ScheduleStatus::Fallback => "fallback",
        }
    }

    pub fn is_success(self) -> bool {
        matches!(self, ScheduleStatus::Direct | ScheduleStatus::Converged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// 0 is the presolve.
    pub iter: usize,
    pub objective: f64,
    /// Views taking part in this solve, summed over steps.
    pub possible_total: usize,
    /// Correction `E` used for this solve, summed over steps.
    pub correction_total: f64,
    /// Wall time since the start of the run.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSchedule {
    pub method: MethodId,
    /// Generator outputs, `[t][gen]`, MW.
    pub dispatch: Vec<Vec<f64>>,
    pub objective: f64,
    pub status: ScheduleStatus,
    pub trace: Vec<TraceEntry>,
    /// Views and risks the final dispatch was solved under, per step.
    pub constraints: Vec<Vec<ViewRisk>>,
    /// Steps where at least one line row carries a positive multiplier.
    pub binding: Vec<bool>,
    pub warnings: Vec<String>,
    /// Seed of the scenario set used by the method, if it used one.
    pub seed: Option<u64>,
}

impl DispatchSchedule {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn is_active(&self, t: usize, view: usize) -> bool {
        self.constraints[t].iter().any(|v| v.view == view)
    }
}

/// Outcome of a single dispatch solve for a given risk budget.
#[derive(Debug, Clone)]
pub(crate) enum BudgetSolve {
    Solved {
        dispatch: Vec<Vec<f64>>,
        objective: f64,
        binding: Vec<bool>,
    },
    Infeasible {
        rows: Vec<RowKind>,
    },
    IterationLimit,
}

pub(crate) fn solve_budget(
    case: &Case,
    budget: &RiskBudget,
    opts: &SolverOptions,
) -> Result<BudgetSolve> {
    let prog = assemble_opf(case, budget)?;
    let sol = qp::solve(&prog.qp, opts)?;
    Ok(match sol.status {
        QpStatus::Optimal => {
            let cmax = prog.qp.linear().iter().fold(0.0f64, |a, c| a.max(c.abs()));
            let threshold = 1e-4 * (1.0 + cmax);
            let mut binding = vec![false; prog.horizon];
            for (kind, mu) in prog.kinds.iter().zip(&sol.multipliers) {
                if let RowKind::Line { t, .. } = *kind {
                    if *mu > threshold {
                        binding[t] = true;
                    }
                }
            }
            BudgetSolve::Solved {
                dispatch: prog.unstack(&sol.x),
                objective: sol.objective,
                binding,
            }
        }
        QpStatus::Infeasible => BudgetSolve::Infeasible {
            rows: sol.infeasible_rows.iter().map(|&i| prog.kinds[i]).collect(),
        },
        QpStatus::IterationLimit => BudgetSolve::IterationLimit,
    })
}

fn describe_rows(case: &Case, rows: &[RowKind]) -> String {
    let names: Vec<String> = rows
        .iter()
        .map(|r| match *r {
            RowKind::GenMax { t, gen } => {
                format!("t={t} g_max of generator {}", case.network().generators()[gen].id)
            }
            RowKind::GenMin { t, gen } => {
                format!("t={t} g_min of generator {}", case.network().generators()[gen].id)
            }
            RowKind::RampUp { t, gen } => format!(
                "t={t} ramp-up of generator {}",
                case.network().generators()[gen].id
            ),
            RowKind::RampDown { t, gen } => format!(
                "t={t} ramp-down of generator {}",
                case.network().generators()[gen].id
            ),
            RowKind::Balance { t } => format!("t={t} supply-demand balance"),
            RowKind::Line { t, view } => {
                let v = &case.views()[view];
                format!("t={t} {} limit of line {}", v.direction.as_str(), v.line_id)
            }
        })
        .collect();
    names.join(", ")
}

/// Solves one budget and turns anything but an optimum into an error.
pub(crate) fn solve_direct(
    case: &Case,
    budget: &RiskBudget,
    config: &FrameworkConfig,
    method: MethodId,
    what: &str,
) -> Result<DispatchSchedule> {
    let start = Instant::now();
    match solve_budget(case, budget, &config.solver)? {
        BudgetSolve::Solved {
            dispatch,
            objective,
            binding,
        } => Ok(DispatchSchedule {
            method,
            dispatch,
            objective,
            status: ScheduleStatus::Direct,
            trace: vec![TraceEntry {
                iter: 0,
                objective,
                possible_total: budget.active_count(),
                correction_total: 0.0,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            }],
            constraints: budget.steps.clone(),
            binding,
            warnings: Vec::new(),
            seed: None,
        }),
        BudgetSolve::Infeasible { rows } => Err(Error::Framework(format!(
            "{what} infeasible (violated at the least-infeasible point: {})",
            describe_rows(case, &rows)
        ))),
        BudgetSolve::IterationLimit => Err(Error::Framework(format!(
            "{what}: QP solver hit its iteration limit"
        ))),
    }
}

/// Every view at every step with risk `α / |𝒩|`.
pub fn boole_budget(case: &Case, config: &FrameworkConfig) -> RiskBudget {
    let n = case.views().len();
    RiskBudget::uniform(config.epsilon, case.horizon(), n, config.alpha / n as f64)
}

pub fn presolve(case: &Case, config: &FrameworkConfig) -> Result<DispatchSchedule> {
    config.validate()?;
    solve_direct(
        case,
        &boole_budget(case, config),
        config,
        MethodId::Boole,
        "presolve",
    )
}

/// Loop options beyond the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopOptions {
    pub allocation: Allocation,
    /// Fixed number of re-solves; `None` iterates to convergence.
    pub passes: Option<usize>,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            allocation: Allocation::Adaptive,
            passes: None,
        }
    }
}

/// Risk budget for the next re-solve from the picture of the current one.
/// Risks above `RHO_MAX` are clamped and reported in `warnings`.
pub fn next_budget(
    cls: &Classification,
    est: &EstimationResult,
    alpha: f64,
    epsilon: f64,
    mode: Allocation,
    warnings: &mut Vec<String>,
) -> RiskBudget {
    let steps = cls
        .steps
        .iter()
        .zip(&est.steps)
        .enumerate()
        .map(|(t, (c, e))| {
            let budget = alpha + e.correction;
            allocate(c, mode)
                .factors
                .into_iter()
                .map(|(view, beta)| {
                    let mut risk = beta * budget;
                    if risk > RHO_MAX {
                        warnings.push(format!(
                            "t={t} view {}: allocated risk {risk:.6} clamped to {RHO_MAX}",
                            view + 1
                        ));
                        risk = RHO_MAX;
                    }
                    ViewRisk { view, risk }
                })
                .collect()
        })
        .collect();
    RiskBudget { epsilon, steps }
}

struct Iterate {
    dispatch: Vec<Vec<f64>>,
    objective: f64,
    binding: Vec<bool>,
    constraints: Vec<Vec<ViewRisk>>,
    /// In-sample joint violation at most α at every step; known once the
    /// iterate has been classified.
    in_sample_ok: Option<bool>,
}

fn in_sample_ok(est: &EstimationResult, alpha: f64) -> bool {
    est.steps.iter().all(|s| s.union <= alpha)
}

/// The full framework: one scenario set, presolve, then classification,
/// estimation, allocation and re-solve until the objective settles.
pub fn iterate(case: &Case, config: &FrameworkConfig) -> Result<DispatchSchedule> {
    config.validate()?;
    let scenarios = draw_scenarios(case.errors(), &case.forecasts(), config.n_samples, config.seed)?;
    iterate_with(case, config, &scenarios, LoopOptions::default())
}

pub fn iterate_with(
    case: &Case,
    config: &FrameworkConfig,
    scenarios: &ScenarioSet,
    opts: LoopOptions,
) -> Result<DispatchSchedule> {
    config.validate()?;
    let start = Instant::now();
    let ms = || start.elapsed().as_secs_f64() * 1e3;

    let pre_budget = boole_budget(case, config);
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut iterates = Vec::new();

    match solve_budget(case, &pre_budget, &config.solver)? {
        BudgetSolve::Solved {
            dispatch,
            objective,
            binding,
        } => {
            trace.push(TraceEntry {
                iter: 0,
                objective,
                possible_total: pre_budget.active_count(),
                correction_total: 0.0,
                wall_ms: ms(),
            });
            iterates.push(Iterate {
                dispatch,
                objective,
                binding,
                constraints: pre_budget.steps,
                in_sample_ok: None,
            });
        }
        BudgetSolve::Infeasible { rows } => {
            return Err(Error::Framework(format!(
                "presolve infeasible (violated at the least-infeasible point: {})",
                describe_rows(case, &rows)
            )))
        }
        BudgetSolve::IterationLimit => {
            return Err(Error::Framework(
                "presolve: QP solver hit its iteration limit".into(),
            ))
        }
    }

    let passes = opts.passes.unwrap_or(config.max_iterations);
    let mut status = match opts.passes {
        Some(_) => ScheduleStatus::Direct,
        None => ScheduleStatus::NotConverged,
    };

    for pass in 1..=passes {
        let current = iterates.last_mut().expect("presolve iterate");
        let vm = build_violation_matrix(&current.dispatch, scenarios, case)?;
        let cls = classify(&vm);
        let est = estimate(&vm, &cls);
        current.in_sample_ok = Some(in_sample_ok(&est, config.alpha));
        let prev_objective = current.objective;

        let budget = next_budget(
            &cls,
            &est,
            config.alpha,
            config.epsilon,
            opts.allocation,
            &mut warnings,
        );
        match solve_budget(case, &budget, &config.solver)? {
            BudgetSolve::Solved {
                dispatch,
                objective,
                binding,
            } => {
                trace.push(TraceEntry {
                    iter: pass,
                    objective,
                    possible_total: cls.possible_total(),
                    correction_total: est.correction_total(),
                    wall_ms: ms(),
                });
                iterates.push(Iterate {
                    dispatch,
                    objective,
                    binding,
                    constraints: budget.steps,
                    in_sample_ok: None,
                });
                let change = (objective - prev_objective).abs() / prev_objective.abs().max(1.0);
                if opts.passes.is_none() && change < config.tolerance {
                    status = ScheduleStatus::Converged;
                    break;
                }
            }
            BudgetSolve::Infeasible { rows } => {
                warnings.push(format!(
                    "re-solve {pass} infeasible ({}); keeping the previous iterate",
                    describe_rows(case, &rows)
                ));
                status = ScheduleStatus::Fallback;
                break;
            }
            BudgetSolve::IterationLimit => {
                warnings.push(format!(
                    "re-solve {pass} hit the QP iteration limit; keeping the previous iterate"
                ));
                status = ScheduleStatus::Fallback;
                break;
            }
        }
    }

    let chosen = if status == ScheduleStatus::NotConverged {
        warnings.push(format!(
            "no convergence within {} re-solves; returning the best iterate",
            passes
        ));
        let last = iterates.last_mut().expect("iterate");
        let vm = build_violation_matrix(&last.dispatch, scenarios, case)?;
        let cls = classify(&vm);
        last.in_sample_ok = Some(in_sample_ok(&estimate(&vm, &cls), config.alpha));
        let best = iterates
            .iter()
            .enumerate()
            .filter(|(_, it)| it.in_sample_ok == Some(true))
            .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective))
            .map(|(k, _)| k);
        best.unwrap_or(iterates.len() - 1)
    } else {
        iterates.len() - 1
    };
    let it = iterates.swap_remove(chosen);

    Ok(DispatchSchedule {
        method: MethodId::Iterative,
        dispatch: it.dispatch,
        objective: it.objective,
        status,
        trace,
        constraints: it.constraints,
        binding: it.binding,
        warnings,
        seed: scenarios.seed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_bounds() {
        let ok = FrameworkConfig::default();
        assert!(ok.validate().is_ok());
        for alpha in [0.0, 0.5, -0.1] {
            let c = FrameworkConfig { alpha, ..ok.clone() };
            assert!(matches!(c.validate(), Err(Error::Domain(_))));
        }
        let c = FrameworkConfig {
            tolerance: 0.0,
            ..ok.clone()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn clamps_oversized_risk() {
        let cls = Classification {
            n_samples: 4,
            steps: vec![StepClassification {
                counts: vec![4, 0],
                marginals: vec![1.0, 0.0],
                possible: vec![0],
            }],
        };
        let est = EstimationResult {
            steps: vec![StepEstimate {
                union_count: 4,
                correction_count: 0,
                union: 1.0,
                correction: 0.0,
            }],
        };
        let mut warnings = Vec::new();
        let b = next_budget(&cls, &est, 0.45, 1e-4, Allocation::Adaptive, &mut warnings);
        assert_eq!(b.steps[0], vec![ViewRisk { view: 0, risk: 0.45 }]);
        assert!(warnings.is_empty());

        let est = EstimationResult {
            steps: vec![StepEstimate {
                correction: 0.2,
                ..est.steps[0]
            }],
        };
        let b = next_budget(&cls, &est, 0.45, 1e-4, Allocation::Adaptive, &mut warnings);
        assert_eq!(b.steps[0][0].risk, RHO_MAX);
        assert_eq!(warnings.len(), 1);
    }
}
