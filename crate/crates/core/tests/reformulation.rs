mod common;

use jccopf::grid::{ConstraintView, Direction, SensitivityMatrix};
use jccopf::qp::{solve, SolverOptions};
use jccopf::reform::{
    assemble_opf, std_normal_cdf, std_normal_quantile, tighten_balance_scc, tighten_line_scc, RiskBudget, RowKind,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{bisection_quantile, load, simpson_cdf};

#[test]
fn quantile_matches_quadrature_oracle() {
    for p in [1e-6, 1e-4, 0.001, 0.01, 0.025, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99, 0.9999] {
        let z = std_normal_quantile(p).unwrap();
        let oracle = bisection_quantile(p);
        assert!((z - oracle).abs() < 1e-7, "p={p}: {z} vs {oracle}");
        assert!((std_normal_cdf(z) - simpson_cdf(z)).abs() < 1e-10);
    }
}

#[test]
fn familiar_quantiles() {
    assert!((std_normal_quantile(0.95).unwrap() - 1.6448536269514722).abs() < 1e-12);
    assert!((std_normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-12);
    assert!((std_normal_quantile(1.0 - 1e-4).unwrap() - 3.7190164854556804).abs() < 1e-11);
}

fn one_line(lambda: &[f64]) -> (SensitivityMatrix, ConstraintView) {
    let sens = SensitivityMatrix {
        line_ids: vec![1],
        gen: DMatrix::from_element(1, 1, 0.5),
        wind: DMatrix::from_row_slice(1, lambda.len(), lambda),
        load: DMatrix::from_element(1, 1, -0.25),
    };
    let view = ConstraintView {
        index: 1,
        line: 0,
        line_id: 1,
        direction: Direction::Lower,
        bound: 80.0,
    };
    (sens, view)
}

#[test]
fn lower_view_row_is_written_for_the_negated_flow() {
    let (sens, view) = one_line(&[1.0]);
    let cov = DMatrix::from_element(1, 1, 100.0);
    let tc = tighten_line_scc(&view, 0, 0.05, &sens, &cov, &[20.0], &[40.0]).unwrap();
    // -(0.5 g + 20 - 10) <= 80 - 1.645 * 10
    assert_eq!(tc.coeffs, vec![-0.5]);
    assert!((tc.sigma - 10.0).abs() < 1e-12);
    assert!((tc.rhs - (80.0 + 10.0 - 16.448536269514722)).abs() < 1e-9, "{}", tc.rhs);
}

#[test]
fn zero_variance_row_is_the_nominal_limit() {
    let (sens, view) = one_line(&[1.0]);
    let tc = tighten_line_scc(&view, 0, 0.01, &sens, &DMatrix::zeros(1, 1), &[20.0], &[40.0]).unwrap();
    assert_eq!(tc.margin, 0.0);
    assert!((tc.rhs - 90.0).abs() < 1e-12);
}

#[test]
fn risk_outside_range_is_rejected() {
    let (sens, view) = one_line(&[1.0]);
    let cov = DMatrix::from_element(1, 1, 1.0);
    for rho in [0.0, -0.1, 0.6, 1.0, f64::NAN] {
        assert!(tighten_line_scc(&view, 0, rho, &sens, &cov, &[0.0], &[0.0]).is_err());
    }
    assert!(tighten_balance_scc(0, 0.0, &cov, &[0.0], &[0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_shrinks_as_risk_grows(
        lambda in prop::collection::vec(-1.0f64..1.0, 2),
        r1 in 0.001f64..0.5,
        r2 in 0.001f64..0.5,
    ) {
        prop_assume!(lambda.iter().any(|v| v.abs() > 1e-3));
        prop_assume!((r1 - r2).abs() > 1e-6);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let (sens, view) = one_line(&lambda);
        let cov = DMatrix::from_row_slice(2, 2, &[100.0, 30.0, 30.0, 50.0]);
        let a = tighten_line_scc(&view, 0, lo, &sens, &cov, &[0.0, 0.0], &[0.0]).unwrap();
        let b = tighten_line_scc(&view, 0, hi, &sens, &cov, &[0.0, 0.0], &[0.0]).unwrap();
        prop_assert!(a.margin > b.margin);
        prop_assert!(a.rhs < b.rhs);
    }

    #[test]
    fn quantile_is_monotone(p in 1e-9f64..0.999_999_999, q in 1e-9f64..0.999_999_999) {
        prop_assume!(p < q);
        prop_assert!(std_normal_quantile(p).unwrap() < std_normal_quantile(q).unwrap());
    }
}

#[test]
fn toy_case_dispatch_matches_equal_incremental_cost() {
    // Lines are far from their limits, so only the balance row binds and
    // both units sit at equal incremental cost 2 c2 g + c1.
    let case = load("three_bus.json");
    let eps = 1e-4;
    let prog = assemble_opf(&case, &RiskBudget::empty(eps, case.horizon())).unwrap();
    assert!(prog.kinds.iter().all(|k| !matches!(k, RowKind::Line { .. })));
    let sol = solve(&prog.qp, &SolverOptions::default()).unwrap();
    let d = prog.unstack(&sol.x);
    let z = std_normal_quantile(1.0 - eps).unwrap();
    for (t, (dem, wind)) in [(100.0, 20.0), (120.0, 30.0)].into_iter().enumerate() {
        let total = dem - wind + z * 5.0;
        // 0.02 g1 + 10 = 0.04 g2 + 11 and g1 + g2 = total
        let g2 = (0.02 * total - 1.0) / 0.06;
        let g1 = total - g2;
        assert!((d[t][0] - g1).abs() < 1e-6, "t={t}: {} vs {g1}", d[t][0]);
        assert!((d[t][1] - g2).abs() < 1e-6, "t={t}: {} vs {g2}", d[t][1]);
    }
}
