//! Deterministic equivalents of the single chance constraints under the
//! Gaussian error model, and assembly of the multi-period dispatch QP.
//!
//! Generators do not respond to the forecast error, so the spread of every
//! line flow and of the supply-demand balance is fixed by the covariance
//! alone and each chance constraint becomes a constant back-off of a linear
//! row.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{ConstraintView, SensitivityMatrix};
use crate::model::Case;
use crate::qp::QuadraticProgram;

/// Largest per-constraint risk the reformulation accepts.
pub const RHO_MAX: f64 = 0.5;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal distribution function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Inverse of [`std_normal_cdf`]: rational approximation (Acklam) followed by
/// one Halley step on the exact distribution function.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile needs 0 < p < 1, got {p}")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };

    let e = std_normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

fn check_risk(rho: f64, what: &str) -> Result<()> {
    if rho > 0.0 && rho <= RHO_MAX {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} risk must lie in (0, {RHO_MAX}], got {rho}"
        )))
    }
}

fn quad_form(a: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a[i] * cov[(i, j)] * a[j];
        }
    }
    acc.max(0.0)
}

/// A line chance constraint rewritten as `Σ_j coeff_j g_{t,j} <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TightenedConstraint {
    pub view: usize,
    pub t: usize,
    pub risk: f64,
    /// Standard deviation of the flow caused by the wind error, MW.
    pub sigma: f64,
    /// Back-off from the nominal limit, MW.
    pub margin: f64,
    /// Coefficients on the generators of step `t`.
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

pub fn tighten_line_scc(
    view: &ConstraintView,
    t: usize,
    rho: f64,
    sens: &SensitivityMatrix,
    cov: &DMatrix<f64>,
    w_bar: &[f64],
    d: &[f64],
) -> Result<TightenedConstraint> {
    check_risk(rho, "line")?;
    let k = view.line;
    let sign = view.sign();
    let lw = sens.wind_row(k);
    let sigma = quad_form(&lw, cov).sqrt();
    let margin = if sigma > 0.0 {
        std_normal_quantile(1.0 - rho)? * sigma
    } else {
        0.0
    };
    let wind_nominal: f64 = lw.iter().zip(w_bar).map(|(a, w)| a * w).sum();
    let load: f64 = (0..d.len()).map(|j| sens.load[(k, j)] * d[j]).sum();
    let coeffs = (0..sens.gen.ncols()).map(|j| sign * sens.gen[(k, j)]).collect();
    Ok(TightenedConstraint {
        view: view.index,
        t,
        risk: rho,
        sigma,
        margin,
        coeffs,
        rhs: view.bound - sign * (wind_nominal + load) - margin,
    })
}

/// Supply-demand chance constraint as `-Σ g_t <= rhs`, i.e.
/// `Σ g_t >= Σ d_t - Σ w̄_t + Φ⁻¹(1-ε) σ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRow {
    pub t: usize,
    pub margin: f64,
    pub rhs: f64,
}

pub fn tighten_balance_scc(
    t: usize,
    epsilon: f64,
    cov: &DMatrix<f64>,
    w_bar: &[f64],
    d: &[f64],
) -> Result<BalanceRow> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::Domain(format!(
            "balance risk must lie in (0, 0.5], got {epsilon}"
        )));
    }
    let ones = vec![1.0; w_bar.len()];
    let sigma = quad_form(&ones, cov).sqrt();
    let margin = if sigma > 0.0 {
        std_normal_quantile(1.0 - epsilon)? * sigma
    } else {
        0.0
    };
    let net_demand = d.iter().sum::<f64>() - w_bar.iter().sum::<f64>();
    Ok(BalanceRow {
        t,
        margin,
        rhs: -(net_demand + margin),
    })
}

/// A constraint view included in a solve at step `t`, with its risk level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRisk {
    pub view: usize,
    pub risk: f64,
}

/// Per-step risk levels for the views that take part in a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskBudget {
    pub epsilon: f64,
    pub steps: Vec<Vec<ViewRisk>>,
}

impl RiskBudget {
    /// No line views at any step.
    pub fn empty(epsilon: f64, horizon: usize) -> Self {
        Self {
            epsilon,
            steps: vec![Vec::new(); horizon],
        }
    }

    /// Every view at every step with the same risk.
    pub fn uniform(epsilon: f64, horizon: usize, n_views: usize, risk: f64) -> Self {
        let step: Vec<ViewRisk> = (0..n_views).map(|view| ViewRisk { view, risk }).collect();
        Self {
            epsilon,
            steps: vec![step; horizon],
        }
    }

    pub fn active_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    GenMax { t: usize, gen: usize },
    GenMin { t: usize, gen: usize },
    RampUp { t: usize, gen: usize },
    RampDown { t: usize, gen: usize },
    Balance { t: usize },
    Line { t: usize, view: usize },
}

/// The dispatch QP together with the meaning of each of its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfProgram {
    pub qp: QuadraticProgram,
    pub kinds: Vec<RowKind>,
    pub line_rows: Vec<TightenedConstraint>,
    pub n_gen: usize,
    pub horizon: usize,
}

impl OpfProgram {
    pub fn var(&self, t: usize, gen: usize) -> usize {
        t * self.n_gen + gen
    }

    /// Splits a stacked solution vector into per-step dispatch vectors.
    pub fn unstack(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.chunks(self.n_gen).map(<[f64]>::to_vec).collect()
    }
}

pub fn assemble_opf(case: &Case, budget: &RiskBudget) -> Result<OpfProgram> {
    let net = case.network();
    let horizon = net.horizon();
    if horizon == 0 {
        return Err(Error::invalid("horizon", "empty horizon"));
    }
    if budget.steps.len() != horizon {
        return Err(Error::Dimension(format!(
            "risk budget covers {} steps, horizon is {horizon}",
            budget.steps.len()
        )));
    }
    let gens = net.generators();
    let ng = gens.len();
    let mut qp = QuadraticProgram::new(ng * horizon);
    let mut kinds = Vec::new();
    let var = |t: usize, j: usize| t * ng + j;

    for t in 0..horizon {
        for (j, g) in gens.iter().enumerate() {
            qp.add_cost(var(t, j), g.c2, g.c1);
            qp.add_offset(g.c0);
        }
    }
    for t in 0..horizon {
        for (j, g) in gens.iter().enumerate() {
            qp.add_row(vec![(var(t, j), 1.0)], g.g_max);
            kinds.push(RowKind::GenMax { t, gen: j });
            qp.add_row(vec![(var(t, j), -1.0)], -g.g_min);
            kinds.push(RowKind::GenMin { t, gen: j });
        }
    }
    for t in 0..horizon.saturating_sub(1) {
        for (j, g) in gens.iter().enumerate() {
            qp.add_row(vec![(var(t + 1, j), 1.0), (var(t, j), -1.0)], g.ramp_up);
            kinds.push(RowKind::RampUp { t, gen: j });
            qp.add_row(vec![(var(t + 1, j), -1.0), (var(t, j), 1.0)], -g.ramp_down);
            kinds.push(RowKind::RampDown { t, gen: j });
        }
    }
    for t in 0..horizon {
        let bal = tighten_balance_scc(
            t,
            budget.epsilon,
            case.errors().covariance(t),
            &net.wind_forecast(t),
            &net.demand(t),
        )?;
        qp.add_row((0..ng).map(|j| (var(t, j), -1.0)).collect(), bal.rhs);
        kinds.push(RowKind::Balance { t });
    }

    let mut line_rows = Vec::new();
    for (t, step) in budget.steps.iter().enumerate() {
        let w_bar = net.wind_forecast(t);
        let d = net.demand(t);
        for vr in step {
            let view = case.views().get(vr.view).ok_or_else(|| {
                Error::Dimension(format!("risk budget names unknown view {}", vr.view))
            })?;
            let row = tighten_line_scc(
                view,
                t,
                vr.risk,
                case.sensitivities(),
                case.errors().covariance(t),
                &w_bar,
                &d,
            )?;
            let entries = row
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(j, &a)| (var(t, j), a))
                .collect();
            qp.add_row(entries, row.rhs);
            kinds.push(RowKind::Line { t, view: vr.view });
            line_rows.push(row);
        }
    }

    Ok(OpfProgram {
        qp,
        kinds,
        line_rows,
        n_gen: ng,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_symmetry_and_domain() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        for p in [1e-12, 1e-4, 0.01, 0.3, 0.7, 0.99, 1.0 - 1e-6] {
            let z = std_normal_quantile(p).unwrap();
            let back = std_normal_cdf(z);
            assert!((back - p).abs() < 1e-10, "p={p} z={z} back={back}");
            // 1 - p is only exact in floating point away from the far tail.
            if p >= 1e-6 {
                let m = std_normal_quantile(1.0 - p).unwrap();
                assert!((z + m).abs() < 1e-7, "asymmetric at {p}");
            }
        }
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn balance_margin() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let row = tighten_balance_scc(0, 1e-4, &cov, &[10.0, 5.0], &[40.0]).unwrap();
        assert!((row.margin - 7.4380).abs() < 1e-3, "{}", row.margin);
        assert!((row.rhs + 25.0 + row.margin).abs() < 1e-12);

        let zero = tighten_balance_scc(0, 1e-4, &DMatrix::zeros(2, 2), &[10.0, 5.0], &[40.0])
            .unwrap();
        assert_eq!(zero.margin, 0.0);
        assert_eq!(zero.rhs, -25.0);

        let half = tighten_balance_scc(0, 0.5, &cov, &[10.0, 5.0], &[40.0]).unwrap();
        assert_eq!(half.margin, 0.0);
        assert!(tighten_balance_scc(0, 0.0, &cov, &[1.0, 1.0], &[1.0]).is_err());
        assert!(tighten_balance_scc(0, 0.7, &cov, &[1.0, 1.0], &[1.0]).is_err());
    }

    fn single_line() -> (ConstraintView, SensitivityMatrix) {
        let view = ConstraintView {
            index: 0,
            line: 0,
            line_id: 7,
            direction: crate::grid::Direction::Upper,
            bound: 100.0,
        };
        let sens = SensitivityMatrix {
            line_ids: vec![7],
            gen: DMatrix::from_row_slice(1, 2, &[0.5, -0.25]),
            wind: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            load: DMatrix::from_row_slice(1, 1, &[-0.5]),
        };
        (view, sens)
    }

    #[test]
    fn line_margin_cases() {
        let (view, sens) = single_line();
        let id = DMatrix::identity(2, 2);
        let r = tighten_line_scc(&view, 0, 0.05, &sens, &id, &[20.0, 3.0], &[40.0]).unwrap();
        assert!((r.sigma - 1.0).abs() < 1e-15);
        assert!((r.margin - 1.6449).abs() < 1e-4);
        assert_eq!(r.coeffs, vec![0.5, -0.25]);
        // nominal part: 20 wind - 20 load
        assert!((r.rhs - (100.0 - 0.0 - r.margin)).abs() < 1e-12);

        let half = tighten_line_scc(&view, 0, 0.5, &sens, &id, &[20.0, 3.0], &[40.0]).unwrap();
        assert_eq!(half.margin, 0.0);
        let calm =
            tighten_line_scc(&view, 0, 0.05, &sens, &DMatrix::zeros(2, 2), &[0.0; 2], &[0.0])
                .unwrap();
        assert_eq!(calm.margin, 0.0);
        for bad in [0.0, 0.6, -1.0] {
            assert!(tighten_line_scc(&view, 0, bad, &sens, &id, &[0.0; 2], &[0.0]).is_err());
        }
    }

    #[test]
    fn margin_decreases_with_risk() {
        let (view, sens) = single_line();
        let cov = DMatrix::from_row_slice(2, 2, &[9.0, 1.0, 1.0, 4.0]);
        let mut last = f64::INFINITY;
        for rho in [1e-5, 1e-3, 0.01, 0.05, 0.1, 0.3, 0.5] {
            let m = tighten_line_scc(&view, 0, rho, &sens, &cov, &[0.0; 2], &[0.0])
                .unwrap()
                .margin;
            assert!(m < last);
            last = m;
        }
    }
}
