//! Reference decompositions the framework is compared against.

use std::fmt;
use std::str::FromStr;

use crate::decomposition::{
    boole_budget, build_violation_matrix, iterate_with, presolve, solve_direct, Allocation,
    DispatchSchedule, FrameworkConfig, LoopOptions,
};
use crate::error::{Error, Result};
use crate::model::Case;
use crate::reform::RiskBudget;
use crate::uncertainty::{draw_scenarios, ScenarioSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    NoJcc,
    Boole,
    ImprovedBoole,
    ImprovingBound,
    Iterative,
}

impl MethodId {
    pub const ALL: [MethodId; 5] = [
        MethodId::NoJcc,
        MethodId::Boole,
        MethodId::ImprovedBoole,
        MethodId::ImprovingBound,
        MethodId::Iterative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::NoJcc => "no_jcc",
            MethodId::Boole => "boole",
            MethodId::ImprovedBoole => "improved_boole",
            MethodId::ImprovingBound => "improving_bound",
            MethodId::Iterative => "iterative",
        }
    }

    /// Whether the method draws a solve-side scenario set.
    pub fn uses_scenarios(self) -> bool {
        matches!(
            self,
            MethodId::ImprovedBoole | MethodId::ImprovingBound | MethodId::Iterative
        )
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "method",
                    format!(
                        "unknown method '{s}', expected one of: {}",
                        MethodId::ALL.map(MethodId::as_str).join(", ")
                    ),
                )
            })
    }
}

/// Supply-demand and generator constraints only.
pub fn solve_no_jcc(case: &Case, config: &FrameworkConfig) -> Result<DispatchSchedule> {
    config.validate()?;
    let budget = RiskBudget::empty(config.epsilon, case.horizon());
    solve_direct(case, &budget, config, MethodId::NoJcc, "no-JCC solve")
}

/// Every view at `α / |𝒩|`. Same code path as the presolve.
pub fn solve_boole(case: &Case, config: &FrameworkConfig) -> Result<DispatchSchedule> {
    presolve(case, config)
}

/// Uniform per-view risk once the all-events joint term is added to the budget.
pub fn improved_boole_risk(alpha: f64, joint: f64, n_views: usize) -> f64 {
    (alpha + joint) / n_views as f64
}

pub fn solve_improved_boole(case: &Case, config: &FrameworkConfig) -> Result<DispatchSchedule> {
    config.validate()?;
    let scenarios = draw_scenarios(case.errors(), &case.forecasts(), config.n_samples, config.seed)?;
    solve_improved_boole_with(case, config, &scenarios)
}

pub fn solve_improved_boole_with(
    case: &Case,
    config: &FrameworkConfig,
    scenarios: &ScenarioSet,
) -> Result<DispatchSchedule> {
    let pre = presolve(case, config)?;
    let vm = build_violation_matrix(&pre.dispatch, scenarios, case)?;
    let all: Vec<usize> = (0..case.views().len()).collect();
    let n = all.len();
    let ns = vm.n_samples() as f64;
    let joints: Vec<f64> = (0..case.horizon())
        .map(|t| vm.joint_count(t, &all) as f64 / ns)
        .collect();

    let mut schedule = if joints.iter().all(|&j| j == 0.0) {
        pre
    } else {
        let mut budget = boole_budget(case, config);
        for (step, &j) in budget.steps.iter_mut().zip(&joints) {
            let risk = improved_boole_risk(config.alpha, j, n);
            for v in step.iter_mut() {
                v.risk = risk;
            }
        }
        solve_direct(case, &budget, config, MethodId::ImprovedBoole, "improved Boole re-solve")?
    };
    schedule.method = MethodId::ImprovedBoole;
    schedule.seed = scenarios.seed();
    Ok(schedule)
}

pub fn solve_improving_bound(case: &Case, config: &FrameworkConfig) -> Result<DispatchSchedule> {
    config.validate()?;
    let scenarios = draw_scenarios(case.errors(), &case.forecasts(), config.n_samples, config.seed)?;
    solve_improving_bound_with(case, config, &scenarios)
}

/// Presolve, one classification and estimation, one re-solve at uniform
/// risk `(α + E) / |𝒩_p|`.
pub fn solve_improving_bound_with(
    case: &Case,
    config: &FrameworkConfig,
    scenarios: &ScenarioSet,
) -> Result<DispatchSchedule> {
    let opts = LoopOptions {
        allocation: Allocation::Uniform,
        passes: Some(1),
    };
    let mut schedule = iterate_with(case, config, scenarios, opts)?;
    schedule.method = MethodId::ImprovingBound;
    Ok(schedule)
}

/// Runs `method`, drawing the solve scenarios from `config` when needed.
pub fn solve_method(
    case: &Case,
    config: &FrameworkConfig,
    method: MethodId,
    scenarios: Option<&ScenarioSet>,
) -> Result<DispatchSchedule> {
    config.validate()?;
    let owned;
    let scenarios = match (method.uses_scenarios(), scenarios) {
        (false, _) => None,
        (true, Some(s)) => Some(s),
        (true, None) => {
            owned = draw_scenarios(case.errors(), &case.forecasts(), config.n_samples, config.seed)?;
            Some(&owned)
        }
    };
    match method {
        MethodId::NoJcc => solve_no_jcc(case, config),
        MethodId::Boole => solve_boole(case, config),
        MethodId::ImprovedBoole => {
            solve_improved_boole_with(case, config, scenarios.expect("scenarios"))
        }
        MethodId::ImprovingBound => {
            solve_improving_bound_with(case, config, scenarios.expect("scenarios"))
        }
        MethodId::Iterative => iterate_with(
            case,
            config,
            scenarios.expect("scenarios"),
            LoopOptions::default(),
        ),
    }
}
