mod common;

use std::collections::BTreeSet;

use jccopf::decomposition::{
    build_violation_matrix, classify, estimate, iterate, iterate_with, presolve, LoopOptions,
};
use jccopf::io::case::CaseFile;
use jccopf::uncertainty::draw_scenarios;
use jccopf::{solve_method, FrameworkConfig, MethodId, ScheduleStatus};
use proptest::prelude::*;

use common::{case_path, load, random_violation_matrix, rng};

fn config(seed: u64) -> FrameworkConfig {
    FrameworkConfig {
        n_samples: 5000,
        seed,
        ..FrameworkConfig::default()
    }
}

#[test]
fn vacuous_limits_converge_in_two_iterations() {
    let mut file = CaseFile::load(case_path("five_bus.json")).unwrap();
    for line in &mut file.lines {
        line.limit_mw_upper = 1e6;
        line.limit_mw_lower = -1e6;
    }
    let case = file.to_case().unwrap();
    let cfg = config(11);
    let it = iterate(&case, &cfg).unwrap();
    assert_eq!(it.status, ScheduleStatus::Converged);
    assert_eq!(it.iterations(), 2);
    assert!(it.constraints.iter().all(|c| c.is_empty()));
    let free = solve_method(&case, &cfg, MethodId::NoJcc, None).unwrap();
    for (a, b) in it.dispatch.iter().flatten().zip(free.dispatch.iter().flatten()) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn final_schedule_is_a_fixed_point() {
    let case = load("five_bus.json");
    let cfg = FrameworkConfig::default();
    let scenarios = draw_scenarios(case.errors(), &case.forecasts(), cfg.n_samples, cfg.seed).unwrap();
    let fin = iterate_with(&case, &cfg, &scenarios, LoopOptions::default()).unwrap();
    assert_eq!(fin.status, ScheduleStatus::Converged);

    // The iterate whose picture produced the final budget.
    let prev = iterate_with(
        &case,
        &cfg,
        &scenarios,
        LoopOptions {
            passes: Some(fin.iterations() - 2),
            ..LoopOptions::default()
        },
    )
    .unwrap();
    let vm_prev = build_violation_matrix(&prev.dispatch, &scenarios, &case).unwrap();
    let cls_prev = classify(&vm_prev);
    let e_prev = estimate(&vm_prev, &cls_prev);

    let vm = build_violation_matrix(&fin.dispatch, &scenarios, &case).unwrap();
    let cls = classify(&vm);
    let e_fin = estimate(&vm, &cls);

    for t in 0..case.horizon() {
        let solved_under: BTreeSet<usize> = fin.constraints[t].iter().map(|v| v.view).collect();
        let now: BTreeSet<usize> = cls.steps[t].possible.iter().copied().collect();
        assert_eq!(solved_under, now, "t={t}");
    }
    let change: f64 = e_fin
        .steps
        .iter()
        .zip(&e_prev.steps)
        .map(|(a, b)| a.correction.abs() - b.correction.abs())
        .sum::<f64>()
        .abs();
    let allowance = cls.possible_total() as f64 / cfg.n_samples as f64;
    assert!(change < allowance, "sum |E| moved by {change}, allowed {allowance}");
}

#[test]
fn trace_is_reproducible() {
    let case = load("five_bus.json");
    let cfg = config(5);
    let a = iterate(&case, &cfg).unwrap();
    let b = iterate(&case, &cfg).unwrap();
    assert_eq!(a.dispatch, b.dispatch);
    assert_eq!(a.objective, b.objective);
    assert_eq!(a.status, b.status);
    let strip = |s: &jccopf::DispatchSchedule| {
        s.trace
            .iter()
            .map(|e| (e.iter, e.objective, e.possible_total, e.correction_total))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn presolve_is_the_boole_baseline() {
    let case = load("five_bus.json");
    let cfg = config(1);
    let p = presolve(&case, &cfg).unwrap();
    let b = solve_method(&case, &cfg, MethodId::Boole, None).unwrap();
    assert_eq!(p.dispatch, b.dispatch);
    assert_eq!(p.objective, b.objective);
}

#[test]
fn solve_and_eval_seeds_are_kept_apart() {
    let case = load("three_bus.json");
    let cfg = config(9);
    let s = iterate(&case, &cfg).unwrap();
    assert!(jccopf::evaluate_pos(&s, &case, cfg.alpha, 100, 9).is_err());
    assert!(jccopf::evaluate_pos(&s, &case, cfg.alpha, 100, 10).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// 0 <= E <= sum of marginals - largest marginal, in samples.
    #[test]
    fn correction_is_bounded(seed in any::<u64>(), n_views in 1usize..7, n_samples in 1usize..400) {
        let vm = random_violation_matrix(&mut rng(seed), n_views, n_samples);
        let cls = classify(&vm);
        let est = estimate(&vm, &cls);
        let counts = &cls.steps[0].counts;
        let total: u64 = counts.iter().sum();
        let max = counts.iter().copied().max().unwrap_or(0);
        let e = est.steps[0].correction_count;
        prop_assert!(e <= total - max);
        prop_assert_eq!(e, total - est.steps[0].union_count);
        prop_assert!(est.steps[0].correction >= 0.0);
    }
}
