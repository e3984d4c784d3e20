#![allow(dead_code)]

use jccopf::decomposition::ViolationMatrix;
use jccopf::qp::QuadraticProgram;
use jccopf::{parse_case, Case};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn case_path(name: &str) -> String {
    format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn load(name: &str) -> Case {
    parse_case(case_path(name)).expect("shipped case parses")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random violation pattern: one step, `n_views` rows, each with its own
/// violation rate, plus a shared driver so that rows overlap.
pub fn random_violation_matrix(r: &mut impl Rng, n_views: usize, n_samples: usize) -> ViolationMatrix {
    let rates: Vec<f64> = (0..n_views).map(|_| r.random_range(0.0..0.3)).collect();
    let shared: Vec<bool> = (0..n_samples).map(|_| r.random_bool(0.1)).collect();
    let rows: Vec<Vec<bool>> = rates
        .iter()
        .map(|&p| {
            let follow = r.random_bool(0.5);
            (0..n_samples)
                .map(|s| (follow && shared[s]) || r.random_bool(p))
                .collect()
        })
        .collect();
    ViolationMatrix::from_indicators(n_samples, &[rows]).expect("valid matrix")
}

/// Alternating sum over every intersection of two or more of `rows`, in
/// sample counts.
pub fn inclusion_exclusion_count(vm: &ViolationMatrix, t: usize, rows: &[usize]) -> i64 {
    let k = rows.len();
    let mut total = 0i64;
    for mask in 1u32..(1u32 << k) {
        let size = mask.count_ones();
        if size < 2 {
            continue;
        }
        let subset: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| rows[i]).collect();
        let joint = vm.joint_count(t, &subset) as i64;
        if size % 2 == 0 {
            total += joint;
        } else {
            total -= joint;
        }
    }
    total
}

/// Standard normal CDF by composite Simpson integration of the density.
pub fn simpson_cdf(z: f64) -> f64 {
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (a, b) = if z >= 0.0 { (0.0, z) } else { (z, 0.0) };
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut acc = pdf(a) + pdf(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
    }
    let area = acc * h / 3.0;
    if z >= 0.0 {
        0.5 + area
    } else {
        0.5 - area
    }
}

/// Quantile by bisection on [`simpson_cdf`].
pub fn bisection_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-9.0, 9.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if simpson_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Random strictly convex separable QP with a box and a few general rows,
/// all satisfied with slack at a random interior point.
pub fn random_qp(r: &mut impl Rng) -> QuadraticProgram {
    let n = r.random_range(1..=6usize);
    let mut qp = QuadraticProgram::new(n);
    let x0: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    for j in 0..n {
        qp.add_cost(j, r.random_range(0.1..5.0), r.random_range(-20.0..20.0));
        qp.add_row(vec![(j, 1.0)], 5.0);
        qp.add_row(vec![(j, -1.0)], 5.0);
    }
    for _ in 0..r.random_range(0..=4usize) {
        let entries: Vec<(usize, f64)> = (0..n).map(|j| (j, r.random_range(-2.0..2.0))).collect();
        let lhs: f64 = entries.iter().map(|&(j, a)| a * x0[j]).sum();
        let rhs = lhs + r.random_range(0.0..2.0);
        qp.add_row(entries, rhs);
    }
    qp
}

/// Exact optimum by enumerating candidate active sets of size up to `n`.
/// Strict convexity makes the optimum the best feasible equality-constrained
/// stationary point over all such sets.
pub fn brute_force_qp(qp: &QuadraticProgram) -> f64 {
    let n = qp.n_vars();
    let m = qp.n_rows();
    let q = qp.quad();
    let c = qp.linear();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for (i, row) in qp.rows().iter().enumerate() {
        for &(j, v) in &row.entries {
            a[(i, j)] += v;
        }
        b[i] = row.rhs;
    }
    let hinv = DVector::from_iterator(n, q.iter().map(|&qi| 0.5 / qi));
    let cv = DVector::from_column_slice(c);
    let mut best = f64::INFINITY;

    let mut stack: Vec<Vec<usize>> = vec![vec![]];
    while let Some(set) = stack.pop() {
        let start = set.last().map_or(0, |&i| i + 1);
        if set.len() < n {
            for i in start..m {
                let mut next = set.clone();
                next.push(i);
                stack.push(next);
            }
        }
        let k = set.len();
        let x = if k == 0 {
            -cv.component_mul(&hinv)
        } else {
            let as_ = DMatrix::from_fn(k, n, |r, j| a[(set[r], j)]);
            let bs = DVector::from_iterator(k, set.iter().map(|&i| b[i]));
            let scaled = DMatrix::from_fn(n, k, |j, r| as_[(r, j)] * hinv[j]);
            let s = &as_ * &scaled;
            let rhs = -bs - &as_ * cv.component_mul(&hinv);
            let Some(mu): Option<DVector<f64>> = s.clone().lu().solve(&rhs) else {
                continue;
            };
            let resid: DVector<f64> = &s * &mu - &rhs;
            if resid.amax() > 1e-9 * (1.0 + rhs.amax()) {
                continue;
            }
            -(cv.clone() + as_.transpose() * mu).component_mul(&hinv)
        };
        if (&a * &x - &b).max() <= 1e-9 {
            best = best.min(qp.objective(x.as_slice()));
        }
    }
    best
}
