use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Case;
use crate::uncertainty::ScenarioSet;

/// Bit-packed violation indicators: for each step `t` and view `n`, bit `s`
/// is set iff sample `s` pushes the signed flow strictly past its bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationMatrix {
    n_samples: usize,
    n_views: usize,
    words: usize,
    // [t][n][word]
    bits: Vec<Vec<Vec<u64>>>,
}

impl ViolationMatrix {
    fn zeros(horizon: usize, n_views: usize, n_samples: usize) -> Self {
        let words = n_samples.div_ceil(64);
        Self {
            n_samples,
            n_views,
            words,
            bits: vec![vec![vec![0; words]; n_views]; horizon],
        }
    }

    /// Builds a matrix from explicit indicators, `rows[t][n][s]`.
    pub fn from_indicators(n_samples: usize, rows: &[Vec<Vec<bool>>]) -> Result<Self> {
        let n_views = rows.first().map_or(0, Vec::len);
        let mut vm = Self::zeros(rows.len(), n_views, n_samples);
        for (t, step) in rows.iter().enumerate() {
            if step.len() != n_views {
                return Err(Error::Dimension(format!(
                    "step {t} has {} views, expected {n_views}",
                    step.len()
                )));
            }
            for (n, row) in step.iter().enumerate() {
                if row.len() != n_samples {
                    return Err(Error::Dimension(format!(
                        "row ({t}, {n}) has {} samples, expected {n_samples}",
                        row.len()
                    )));
                }
                for (s, &v) in row.iter().enumerate() {
                    if v {
                        vm.bits[t][n][s / 64] |= 1 << (s % 64);
                    }
                }
            }
        }
        Ok(vm)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
    pub fn n_views(&self) -> usize {
        self.n_views
    }
    pub fn horizon(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, t: usize, n: usize, s: usize) -> bool {
        self.bits[t][n][s / 64] >> (s % 64) & 1 == 1
    }

    /// Number of violating samples of view `n` at step `t`.
    pub fn count(&self, t: usize, n: usize) -> u64 {
        self.bits[t][n].iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Samples on which every view in `subset` is violated.
    pub fn joint_count(&self, t: usize, subset: &[usize]) -> u64 {
        (0..self.words)
            .map(|k| {
                subset
                    .iter()
                    .fold(u64::MAX, |acc, &n| acc & self.bits[t][n][k])
                    .count_ones() as u64
            })
            .sum()
    }

    /// Samples on which at least one view in `subset` is violated.
    pub fn union_count(&self, t: usize, subset: &[usize]) -> u64 {
        (0..self.words)
            .map(|k| {
                subset
                    .iter()
                    .fold(0u64, |acc, &n| acc | self.bits[t][n][k])
                    .count_ones() as u64
            })
            .sum()
    }
}

/// Indicators of every view at every step for the given dispatch.
///
/// Per sample this is one linear map (the wind part of the flows); the
/// generator and load parts are shared by all samples of a step.
pub fn build_violation_matrix(
    dispatch: &[Vec<f64>],
    scenarios: &ScenarioSet,
    case: &Case,
) -> Result<ViolationMatrix> {
    let net = case.network();
    let horizon = net.horizon();
    if dispatch.len() != horizon || scenarios.horizon() != horizon {
        return Err(Error::Dimension(format!(
            "dispatch covers {} steps and scenarios {}, horizon is {horizon}",
            dispatch.len(),
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
    if let Some(t) = dispatch.iter().position(|g| g.len() != net.n_gen()) {
        return Err(Error::Dimension(format!(
            "dispatch at step {t} has {} generators, case has {}",
            dispatch[t].len(),
            net.n_gen()
        )));
    }

    let sens = case.sensitivities();
    let views = case.views();
    let n_lines = sens.n_lines();
    let n_wind = net.n_wind();
    let ns = scenarios.n_samples();
    let mut vm = ViolationMatrix::zeros(horizon, views.len(), ns);

    vm.bits
        .par_iter_mut()
        .enumerate()
        .for_each(|(t, rows)| {
            let d = net.demand(t);
            let fixed: Vec<f64> = (0..n_lines).map(|k| sens.fixed_flow(k, &dispatch[t], &d)).collect();
            let block = scenarios.step(t);
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
                for v in views {
                    if v.violated(flow[v.line]) {
                        rows[v.index][s / 64] |= 1 << (s % 64);
                    }
                }
            }
        });
    Ok(vm)
}

/// Empirical marginals of one step and the possible-event set.
#[derive(Debug, Clone, PartialEq)]
pub struct StepClassification {
    pub counts: Vec<u64>,
    pub marginals: Vec<f64>,
    /// Views with at least one violating sample, ascending.
    pub possible: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub n_samples: usize,
    pub steps: Vec<StepClassification>,
}

impl Classification {
    pub fn possible_total(&self) -> usize {
        self.steps.iter().map(|s| s.possible.len()).sum()
    }
}

pub fn classify(vm: &ViolationMatrix) -> Classification {
    let ns = vm.n_samples() as f64;
    let steps = (0..vm.horizon())
        .map(|t| {
            let counts: Vec<u64> = (0..vm.n_views()).map(|n| vm.count(t, n)).collect();
            let marginals = counts.iter().map(|&c| c as f64 / ns).collect();
            let possible = (0..counts.len()).filter(|&n| counts[n] > 0).collect();
            StepClassification {
                counts,
                marginals,
                possible,
            }
        })
        .collect();
    Classification {
        n_samples: vm.n_samples(),
        steps,
    }
}

/// Fraction of samples violating every view in `subset` at step `t`.
pub fn estimate_joint_subset(vm: &ViolationMatrix, t: usize, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Domain("joint probability of an empty subset".into()));
    }
    Ok(vm.joint_count(t, subset) as f64 / vm.n_samples() as f64)
}

/// Union probability and inclusion-exclusion correction of one step, also
/// kept as exact sample counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEstimate {
    pub union_count: u64,
    pub correction_count: u64,
    pub union: f64,
    pub correction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub steps: Vec<StepEstimate>,
}

impl EstimationResult {
    pub fn correction_total(&self) -> f64 {
        self.steps.iter().map(|s| s.correction).sum()
    }
}

/// `E = Σ_{n∈possible} P̂(y_n) - P̂(∪ y_n)`.
///
/// On one empirical measure the alternating sum over all intersections of
/// two or more events telescopes to exactly this difference, so the union is
/// counted directly instead of enumerating subsets.
pub fn estimate_e(vm: &ViolationMatrix, t: usize, possible: &[usize]) -> StepEstimate {
    let ns = vm.n_samples() as f64;
    let marginal_sum: u64 = possible.iter().map(|&n| vm.count(t, n)).sum();
    let union_count = vm.union_count(t, possible);
    let correction_count = marginal_sum - union_count;
    StepEstimate {
        union_count,
        correction_count,
        union: union_count as f64 / ns,
        correction: correction_count as f64 / ns,
    }
}

pub fn estimate(vm: &ViolationMatrix, cls: &Classification) -> EstimationResult {
    EstimationResult {
        steps: cls
            .steps
            .iter()
            .enumerate()
            .map(|(t, c)| estimate_e(vm, t, &c.possible))
            .collect(),
    }
}
