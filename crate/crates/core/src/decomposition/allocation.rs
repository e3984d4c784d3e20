use super::violation::StepClassification;

/// How the joint budget `α + E` is split over the possible events of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    /// Proportional to the empirical marginals.
    Adaptive,
    /// Equal shares.
    Uniform,
}

/// Factors `β_n` for the possible events of one step, in the order of
/// `possible`. They sum to one exactly; the last share absorbs rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct StepAllocation {
    pub factors: Vec<(usize, f64)>,
}

fn close_sum(mut factors: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    if let Some((_, rest)) = factors.split_last_mut() {
        let head: f64 = rest.iter().map(|(_, b)| b).sum();
        let last = factors.len() - 1;
        factors[last].1 = 1.0 - head;
    }
    factors
}

/// `β_n = P̂(y_n) / Σ_{m∈possible} P̂(y_m)`.
pub fn allocate_risk(step: &StepClassification) -> StepAllocation {
    let total: u64 = step.possible.iter().map(|&n| step.counts[n]).sum();
    let factors = step
        .possible
        .iter()
        .map(|&n| (n, step.counts[n] as f64 / total as f64))
        .collect();
    StepAllocation {
        factors: close_sum(factors),
    }
}

pub fn allocate_uniform(step: &StepClassification) -> StepAllocation {
    let k = step.possible.len() as f64;
    let factors = step.possible.iter().map(|&n| (n, 1.0 / k)).collect();
    StepAllocation {
        factors: close_sum(factors),
    }
}

pub fn allocate(step: &StepClassification, mode: Allocation) -> StepAllocation {
    match mode {
        Allocation::Adaptive => allocate_risk(step),
        Allocation::Uniform => allocate_uniform(step),
    }
}
