//! Out-of-sample Monte Carlo checks of solved schedules.

use rayon::prelude::*;

use crate::baselines::{solve_method, solve_no_jcc, MethodId};
use crate::decomposition::{DispatchSchedule, FrameworkConfig};
use crate::error::{Error, Result};
use crate::grid::Direction;
use crate::model::Case;
use crate::uncertainty::{draw_scenarios, ScenarioSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PosRow {
    pub method: MethodId,
    pub t: usize,
    /// Fraction of evaluation samples with every monitored flow within limits.
    pub pos: f64,
    /// `3 sqrt(pos (1 - pos) / N_eval)`
    pub half_width: f64,
    /// `pos >= 1 - α - half_width`
    pub pass: bool,
    /// Whether a line row was binding at this step when the method solved.
    pub binding: bool,
}

/// Violation frequency of one view at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationRow {
    pub method: MethodId,
    pub t: usize,
    pub view: usize,
    pub line_id: u32,
    pub direction: Direction,
    pub frequency: f64,
    /// Whether the view was part of the method's final solve at this step.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PosReport {
    pub n_eval: usize,
    pub rows: Vec<PosRow>,
    pub violations: Vec<ViolationRow>,
}

impl PosReport {
    pub fn for_method(&self, method: MethodId) -> impl Iterator<Item = &PosRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn get(&self, method: MethodId, t: usize) -> Option<&PosRow> {
        self.rows.iter().find(|r| r.method == method && r.t == t)
    }
}

pub fn binomial_half_width(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Probability of success of `schedule` on a fresh scenario set drawn with
/// `eval_seed`, which must differ from the seed the schedule was solved with.
pub fn evaluate_pos(
    schedule: &DispatchSchedule,
    case: &Case,
    alpha: f64,
    n_eval: usize,
    eval_seed: u64,
) -> Result<PosReport> {
    if schedule.seed == Some(eval_seed) {
        return Err(Error::Domain(format!(
            "evaluation seed {eval_seed} equals the solve seed; evaluation scenarios must be independent"
        )));
    }
    let scenarios = draw_scenarios(case.errors(), &case.forecasts(), n_eval, eval_seed)?;
    evaluate_pos_on(schedule, case, alpha, &scenarios)
}

/// Same as [`evaluate_pos`] on a caller-supplied evaluation set.
pub fn evaluate_pos_on(
    schedule: &DispatchSchedule,
    case: &Case,
    alpha: f64,
    scenarios: &ScenarioSet,
) -> Result<PosReport> {
    let net = case.network();
    let horizon = case.horizon();
    if schedule.dispatch.len() != horizon || scenarios.horizon() != horizon {
        return Err(Error::Dimension(format!(
            "schedule covers {} steps and scenarios {}, horizon is {horizon}",
            schedule.dispatch.len(),
            scenarios.horizon()
        )));
    }
    if scenarios.n_wind() != net.n_wind() {
        return Err(Error::Dimension(format!(
            "scenarios have {} wind farms, case has {}",
            scenarios.n_wind(),
            net.n_wind()
        )));
    }
    if let Some(t) = schedule.dispatch.iter().position(|g| g.len() != net.n_gen()) {
        return Err(Error::Dimension(format!(
            "dispatch at step {t} has {} generators, case has {}",
            schedule.dispatch[t].len(),
            net.n_gen()
        )));
    }
    let sens = case.sensitivities();
    let views = case.views();
    let n_lines = sens.n_lines();
    let n_wind = net.n_wind();
    let ns = scenarios.n_samples();

    let per_step: Vec<(u64, Vec<u64>)> = (0..horizon)
        .into_par_iter()
        .map(|t| {
            let d = net.demand(t);
            let fixed: Vec<f64> = (0..n_lines)
                .map(|k| sens.fixed_flow(k, &schedule.dispatch[t], &d))
                .collect();
            let block = scenarios.step(t);
            let mut ok = 0u64;
            let mut counts = vec![0u64; views.len()];
            let mut flow = vec![0.0; n_lines];
            for s in 0..ns {
                let w = &block[s * n_wind..(s + 1) * n_wind];
                for k in 0..n_lines {
                    let mut acc = fixed[k];
                    for (j, &wj) in w.iter().enumerate() {
                        acc += sens.wind[(k, j)] * wj;
                    }
                    flow[k] = acc;
                }
                let mut all_in = true;
                for v in views {
                    if v.violated(flow[v.line]) {
                        counts[v.index] += 1;
                        all_in = false;
                    }
                }
                if all_in {
                    ok += 1;
                }
            }
            (ok, counts)
        })
        .collect();

    let mut rows = Vec::with_capacity(horizon);
    let mut violations = Vec::new();
    for (t, (ok, counts)) in per_step.into_iter().enumerate() {
        let pos = ok as f64 / ns as f64;
        let half_width = binomial_half_width(pos, ns);
        rows.push(PosRow {
            method: schedule.method,
            t,
            pos,
            half_width,
            pass: pos >= 1.0 - alpha - half_width,
            binding: schedule.binding.get(t).copied().unwrap_or(false),
        });
        for v in views {
            if counts[v.index] > 0 {
                violations.push(ViolationRow {
                    method: schedule.method,
                    t,
                    view: v.index,
                    line_id: v.line_id,
                    direction: v.direction,
                    frequency: counts[v.index] as f64 / ns as f64,
                    active: schedule.is_active(t, v.index),
                });
            }
        }
    }
    Ok(PosReport {
        n_eval: ns,
        rows,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub method: MethodId,
    pub objective: f64,
    /// `(f - f_no_jcc) / |f_no_jcc|`
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostReport {
    pub baseline: f64,
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn objective(&self, method: MethodId) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).map(|r| r.objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub n_eval: usize,
    pub eval_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_eval: 100_000,
            eval_seed: 4242,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub costs: CostReport,
    pub pos: PosReport,
    pub schedules: Vec<DispatchSchedule>,
    /// Methods that failed, with the rendered error.
    pub failures: Vec<(MethodId, String)>,
}

impl Comparison {
    pub fn schedule(&self, method: MethodId) -> Option<&DispatchSchedule> {
        self.schedules.iter().find(|s| s.method == method)
    }
}

/// Runs each method on one shared solve scenario set and evaluates all of
/// them on one shared, independent evaluation set. A failing method is
/// recorded and the rest continue.
pub fn compare_methods(
    case: &Case,
    config: &FrameworkConfig,
    eval: &EvalConfig,
    methods: &[MethodId],
) -> Result<Comparison> {
    config.validate()?;
    if eval.eval_seed == config.seed {
        return Err(Error::Domain(format!(
            "evaluation seed {} equals the solve seed; evaluation scenarios must be independent",
            eval.eval_seed
        )));
    }
    if eval.n_eval == 0 {
        return Err(Error::Domain("evaluation sample count must be at least 1".into()));
    }
    let solve_set = if methods.iter().any(|m| m.uses_scenarios()) {
        Some(draw_scenarios(case.errors(), &case.forecasts(), config.n_samples, config.seed)?)
    } else {
        None
    };
    let eval_set = draw_scenarios(case.errors(), &case.forecasts(), eval.n_eval, eval.eval_seed)?;

    let outcomes: Vec<(MethodId, Result<DispatchSchedule>)> = methods
        .par_iter()
        .map(|&m| (m, solve_method(case, config, m, solve_set.as_ref())))
        .collect();

    let baseline = match outcomes
        .iter()
        .find(|(m, _)| *m == MethodId::NoJcc)
        .and_then(|(_, r)| r.as_ref().ok())
    {
        Some(s) => s.objective,
        None => solve_no_jcc(case, config).map(|s| s.objective).unwrap_or(f64::NAN),
    };

    let mut costs = CostReport {
        baseline,
        rows: Vec::new(),
    };
    let mut pos = PosReport {
        n_eval: eval.n_eval,
        ..PosReport::default()
    };
    let mut schedules = Vec::new();
    let mut failures = Vec::new();
    for (method, outcome) in outcomes {
        match outcome {
            Ok(schedule) => {
                costs.rows.push(CostRow {
                    method,
                    objective: schedule.objective,
                    gap: (schedule.objective - baseline) / baseline.abs(),
                });
                let report = evaluate_pos_on(&schedule, case, config.alpha, &eval_set)?;
                pos.rows.extend(report.rows);
                pos.violations.extend(report.violations);
                schedules.push(schedule);
            }
            Err(e) => failures.push((method, e.to_string())),
        }
    }
    Ok(Comparison {
        costs,
        pos,
        schedules,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_width_formula() {
        assert_eq!(binomial_half_width(1.0, 100), 0.0);
        assert!((binomial_half_width(0.5, 100) - 0.15).abs() < 1e-15);
    }
}
