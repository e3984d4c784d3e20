//! Convex separable quadratic programs
//!
//! ```text
//!     minimize    Σ q_j x_j² + cᵀx + offset
//!     subject to  A x <= b
//! ```
//!
//! solved with a primal-dual interior point method (Mehrotra
//! predictor-corrector) on the normal equations. Variable bounds are ordinary
//! rows of `A`. When the main loop stalls, a phase-one problem
//! `min t  s.t.  A x - t <= b` decides between infeasibility and a plain
//! iteration limit, and names the rows that stay violated at the
//! least-infeasible point.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// One sparse row of the constraint matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, a)| a * x[j]).sum()
    }

    fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, &(_, a)| m.max(a.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    quad: Vec<f64>,
    linear: Vec<f64>,
    offset: f64,
    rows: Vec<Row>,
}

impl QuadraticProgram {
    pub fn new(n: usize) -> Self {
        Self {
            quad: vec![0.0; n],
            linear: vec![0.0; n],
            offset: 0.0,
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.quad.len()
    }
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
    pub fn rows(&self) -> &[Row] {
        &self.rows
    }
    pub fn quad(&self) -> &[f64] {
        &self.quad
    }
    pub fn linear(&self) -> &[f64] {
        &self.linear
    }
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Adds `q x_j² + c x_j` to the objective.
    pub fn add_cost(&mut self, j: usize, q: f64, c: f64) {
        self.quad[j] += q;
        self.linear[j] += c;
    }

    pub fn add_offset(&mut self, c0: f64) {
        self.offset += c0;
    }

    /// Appends `Σ a_j x_j <= rhs` and returns its row index.
    pub fn add_row(&mut self, entries: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.rows.push(Row { entries, rhs });
        self.rows.len() - 1
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.offset
            + x.iter()
                .enumerate()
                .map(|(j, &v)| self.quad[j] * v * v + self.linear[j] * v)
                .sum::<f64>()
    }

    pub fn row_values(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(x)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if let Some(j) = self.quad.iter().position(|&q| !(q >= 0.0 && q.is_finite())) {
            return Err(Error::Domain(format!(
                "quadratic coefficient {j} must be finite and nonnegative"
            )));
        }
        if self.linear.iter().any(|c| !c.is_finite()) || !self.offset.is_finite() {
            return Err(Error::Domain("cost coefficients must be finite".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() || r.entries.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(Error::Domain(format!("row {i} has a bad entry")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    /// Multipliers `μ >= 0` of the rows, in row order.
    pub multipliers: Vec<f64>,
    /// `max(0, max_i (A x - b)_i)`
    pub primal_residual: f64,
    /// `‖2 q∘x + c + Aᵀμ‖∞`
    pub dual_residual: f64,
    /// `|μᵀ(A x - b)|`
    pub complementarity: f64,
    pub iterations: usize,
    /// Rows still violated at the least-infeasible point (infeasible status only).
    pub infeasible_rows: Vec<usize>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Absolute primal tolerance; `None` means `1e-8 (1 + ‖b‖∞)`.
    pub feas_tol: Option<f64>,
    pub opt_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: None,
            opt_tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

/// Primal, dual and complementarity residuals of `(x, μ)` for `qp`.
pub fn kkt_residuals(qp: &QuadraticProgram, x: &[f64], mu: &[f64]) -> (f64, f64, f64) {
    let ax = qp.row_values(x);
    let primal = qp
        .rows
        .iter()
        .zip(&ax)
        .fold(0.0f64, |m, (r, v)| m.max(v - r.rhs));
    let mut grad: Vec<f64> = (0..qp.n_vars())
        .map(|j| 2.0 * qp.quad[j] * x[j] + qp.linear[j])
        .collect();
    for (r, &m) in qp.rows.iter().zip(mu) {
        for &(j, a) in &r.entries {
            grad[j] += a * m;
        }
    }
    let dual = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let comp: f64 = qp
        .rows
        .iter()
        .zip(&ax)
        .zip(mu)
        .map(|((r, v), m)| m * (v - r.rhs))
        .sum();
    (primal, dual, comp.abs())
}

struct Ipm<'a> {
    qp: &'a QuadraticProgram,
    // rows scaled to unit infinity norm
    scale: Vec<f64>,
    reg: f64,
}

enum IpmOutcome {
    Converged { x: Vec<f64>, z: Vec<f64>, iters: usize },
    Stalled { x: Vec<f64>, z: Vec<f64>, iters: usize },
}

impl<'a> Ipm<'a> {
    fn new(qp: &'a QuadraticProgram, reg: f64) -> Self {
        let scale = qp
            .rows
            .iter()
            .map(|r| {
                let m = r.max_abs();
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            })
            .collect();
        Self { qp, scale, reg }
    }

    fn a_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.scale[i] * self.qp.rows[i].dot(x)
    }

    fn b(&self, i: usize) -> f64 {
        self.scale[i] * self.qp.rows[i].rhs
    }

    /// `y += Aᵀ v` in scaled row space.
    fn at_add(&self, v: &[f64], y: &mut [f64]) {
        for (i, r) in self.qp.rows.iter().enumerate() {
            let vi = v[i] * self.scale[i];
            if vi != 0.0 {
                for &(j, a) in &r.entries {
                    y[j] += a * vi;
                }
            }
        }
    }

    fn unscaled_mu(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.scale).map(|(z, s)| z * s).collect()
    }

    fn run(&self, x0: Option<&[f64]>, feas_tol: f64, opt_tol: f64, max_iter: usize) -> IpmOutcome {
        let qp = self.qp;
        let n = qp.n_vars();
        let m = qp.n_rows();
        let cnorm = qp.linear.iter().fold(0.0f64, |a, v| a.max(v.abs()));

        let mut x = match x0 {
            Some(x0) => x0.to_vec(),
            None => vec![0.0; n],
        };
        let mut s: Vec<f64> = (0..m).map(|i| (self.b(i) - self.a_dot(i, &x)).max(1.0)).collect();
        let mut z = vec![1.0; m];

        let mut best_rp = f64::INFINITY;
        let mut best_at = 0usize;
        let mut iters = 0usize;

        loop {
            // residuals (scaled)
            let mut rd: Vec<f64> = (0..n).map(|j| 2.0 * qp.quad[j] * x[j] + qp.linear[j]).collect();
            self.at_add(&z, &mut rd);
            let rp: Vec<f64> = (0..m).map(|i| self.a_dot(i, &x) + s[i] - self.b(i)).collect();
            let mu = if m > 0 {
                s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / m as f64
            } else {
                0.0
            };

            // convergence on unscaled measures
            let mu_orig = self.unscaled_mu(&z);
            let (primal, dual, comp) = kkt_residuals(qp, &x, &mu_orig);
            let rp_orig = rp
                .iter()
                .zip(&self.scale)
                .fold(0.0f64, |a, (r, sc)| a.max((r / sc).abs()));
            if primal <= feas_tol
                && rp_orig <= feas_tol
                && dual <= opt_tol * (1.0 + cnorm)
                && comp <= opt_tol
            {
                return IpmOutcome::Converged { x, z, iters };
            }

            if rp_orig < 0.9 * best_rp {
                best_rp = rp_orig;
                best_at = iters;
            }
            let zmax = z.iter().fold(0.0f64, |a, v| a.max(*v));
            let diverging = zmax > 1e12 * (1.0 + cnorm);
            let stalled = iters >= 60 && iters - best_at > 30 && rp_orig > feas_tol;
            if iters >= max_iter || diverging || stalled || iters >= 400 {
                return IpmOutcome::Stalled { x, z, iters };
            }
            iters += 1;

            // normal matrix
            let w: Vec<f64> = (0..m).map(|i| z[i] / s[i]).collect();
            let mut mat = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                mat[(j, j)] = 2.0 * qp.quad[j] + self.reg;
            }
            for (i, r) in qp.rows.iter().enumerate() {
                let wi = w[i] * self.scale[i] * self.scale[i];
                for &(j, a) in &r.entries {
                    for &(k, b) in &r.entries {
                        mat[(j, k)] += wi * a * b;
                    }
                }
            }
            let chol = match Cholesky::new(mat.clone()) {
                Some(c) => c,
                None => {
                    let bump = 1e-10 * (1.0 + mat.diagonal().amax());
                    for j in 0..n {
                        mat[(j, j)] += bump;
                    }
                    match Cholesky::new(mat) {
                        Some(c) => c,
                        None => return IpmOutcome::Stalled { x, z, iters },
                    }
                }
            };

            let solve = |rc: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
                // M dx = -rd + Aᵀ S⁻¹ (rc - Z rp)
                let v: Vec<f64> = (0..m).map(|i| (rc[i] - z[i] * rp[i]) / s[i]).collect();
                let mut rhs: Vec<f64> = rd.iter().map(|r| -r).collect();
                self.at_add(&v, &mut rhs);
                let dx = chol.solve(&DVector::from_vec(rhs));
                let dx: Vec<f64> = dx.iter().copied().collect();
                let ds: Vec<f64> = (0..m).map(|i| -rp[i] - self.a_dot(i, &dx)).collect();
                let dz: Vec<f64> = (0..m).map(|i| (-rc[i] - z[i] * ds[i]) / s[i]).collect();
                (dx, ds, dz)
            };
            let max_step = |ds: &[f64], dz: &[f64]| -> f64 {
                let mut a = 1.0f64;
                for i in 0..m {
                    if ds[i] < 0.0 {
                        a = a.min(-s[i] / ds[i]);
                    }
                    if dz[i] < 0.0 {
                        a = a.min(-z[i] / dz[i]);
                    }
                }
                a
            };

            // predictor
            let rc_aff: Vec<f64> = (0..m).map(|i| s[i] * z[i]).collect();
            let (_, ds_a, dz_a) = solve(&rc_aff);
            let a_aff = max_step(&ds_a, &dz_a);
            let mu_aff = if m > 0 {
                (0..m)
                    .map(|i| (s[i] + a_aff * ds_a[i]) * (z[i] + a_aff * dz_a[i]))
                    .sum::<f64>()
                    / m as f64
            } else {
                0.0
            };
            let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };

            // corrector
            let rc: Vec<f64> = (0..m)
                .map(|i| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu)
                .collect();
            let (dx, ds, dz) = solve(&rc);
            let step = (0.995 * max_step(&ds, &dz)).min(1.0);

            for j in 0..n {
                x[j] += step * dx[j];
            }
            for i in 0..m {
                s[i] = (s[i] + step * ds[i]).max(1e-300);
                z[i] = (z[i] + step * dz[i]).max(1e-300);
            }
        }
    }
}

fn default_feas_tol(qp: &QuadraticProgram) -> f64 {
    let bnorm = qp.rows.iter().fold(0.0f64, |a, r| a.max(r.rhs.abs()));
    1e-8 * (1.0 + bnorm)
}

pub fn solve(qp: &QuadraticProgram, opts: &SolverOptions) -> Result<QpSolution> {
    qp.validate()?;
    let feas_tol = opts.feas_tol.unwrap_or_else(|| default_feas_tol(qp));
    let ipm = Ipm::new(qp, 0.0);
    let (x, z, iters, converged) = match ipm.run(None, feas_tol, opts.opt_tol, opts.max_iter) {
        IpmOutcome::Converged { x, z, iters } => (x, z, iters, true),
        IpmOutcome::Stalled { x, z, iters } => (x, z, iters, false),
    };
    let mu = ipm.unscaled_mu(&z);
    let (primal, dual, comp) = kkt_residuals(qp, &x, &mu);
    let mut sol = QpSolution {
        objective: qp.objective(&x),
        x,
        status: QpStatus::Optimal,
        multipliers: mu,
        primal_residual: primal,
        dual_residual: dual,
        complementarity: comp,
        iterations: iters,
        infeasible_rows: Vec::new(),
    };
    if converged {
        return Ok(sol);
    }

    // Phase one: how infeasible is the row system at best?
    let (t, xp) = least_infeasible(qp, opts);
    if t > feas_tol {
        let ax = qp.row_values(&xp);
        sol.infeasible_rows = qp
            .rows
            .iter()
            .zip(&ax)
            .enumerate()
            .filter(|(_, (r, v))| **v - r.rhs > feas_tol.max(1e-6 * t))
            .map(|(i, _)| i)
            .collect();
        sol.status = QpStatus::Infeasible;
        sol.primal_residual = t;
        sol.objective = qp.objective(&xp);
        sol.x = xp;
    } else {
        sol.status = QpStatus::IterationLimit;
    }
    Ok(sol)
}

/// Minimizes the largest row violation (rows scaled to unit infinity norm).
/// Returns the unscaled largest violation and the point attaining it.
fn least_infeasible(qp: &QuadraticProgram, opts: &SolverOptions) -> (f64, Vec<f64>) {
    let n = qp.n_vars();
    let mut p1 = QuadraticProgram::new(n + 1);
    let t = n;
    p1.add_cost(t, 0.0, 1.0);
    for r in &qp.rows {
        let m = r.max_abs();
        let sc = if m > 0.0 { 1.0 / m } else { 1.0 };
        let mut e: Vec<(usize, f64)> = r.entries.iter().map(|&(j, a)| (j, a * sc)).collect();
        e.push((t, -1.0));
        p1.add_row(e, r.rhs * sc);
    }
    p1.add_row(vec![(t, -1.0)], 0.0);
    let ipm = Ipm::new(&p1, 1e-9);
    let x = match ipm.run(None, 1e-9, 1e-9, opts.max_iter.min(400)) {
        IpmOutcome::Converged { x, .. } | IpmOutcome::Stalled { x, .. } => x,
    };
    let xp = x[..n].to_vec();
    let ax = qp.row_values(&xp);
    let worst = qp
        .rows
        .iter()
        .zip(&ax)
        .fold(0.0f64, |a, (r, v)| a.max(v - r.rhs));
    (worst, xp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_default(qp: &QuadraticProgram) -> QpSolution {
        solve(qp, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn clipped_unconstrained_optimum() {
        // (x - 2)² = x² - 4x + 4, x <= 1
        let mut qp = QuadraticProgram::new(1);
        qp.add_cost(0, 1.0, -4.0);
        qp.add_offset(4.0);
        qp.add_row(vec![(0, 1.0)], 1.0);
        let sol = solve_default(&qp);
        assert!(sol.is_optimal());
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
        assert!((sol.objective - 1.0).abs() < 1e-7);
        assert!((sol.multipliers[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn no_constraints() {
        let mut qp = QuadraticProgram::new(1);
        qp.add_cost(0, 1.0, 0.0);
        let sol = solve_default(&qp);
        assert!(sol.is_optimal());
        assert!(sol.x[0].abs() < 1e-12);
        assert!(sol.objective.abs() < 1e-12);
    }

    #[test]
    fn two_variable_halfspace() {
        let mut qp = QuadraticProgram::new(2);
        qp.add_cost(0, 1.0, 0.0);
        qp.add_cost(1, 1.0, 0.0);
        qp.add_row(vec![(0, -1.0), (1, -1.0)], -2.0);
        let sol = solve_default(&qp);
        assert!(sol.is_optimal());
        assert!((sol.x[0] - 1.0).abs() < 1e-7 && (sol.x[1] - 1.0).abs() < 1e-7);
        assert!((sol.objective - 2.0).abs() < 1e-7);
    }

    #[test]
    fn linear_program_with_bounds() {
        // min -x - y  s.t. x + 2y <= 4, 0 <= x <= 3, 0 <= y
        let mut qp = QuadraticProgram::new(2);
        qp.add_cost(0, 0.0, -1.0);
        qp.add_cost(1, 0.0, -1.0);
        qp.add_row(vec![(0, 1.0), (1, 2.0)], 4.0);
        qp.add_row(vec![(0, 1.0)], 3.0);
        qp.add_row(vec![(0, -1.0)], 0.0);
        qp.add_row(vec![(1, -1.0)], 0.0);
        let sol = solve_default(&qp);
        assert!(sol.is_optimal());
        assert!((sol.objective + 3.5).abs() < 1e-6, "{}", sol.objective);
    }

    #[test]
    fn infeasible_rows_are_named() {
        // x <= 1, x >= 3, y <= 5
        let mut qp = QuadraticProgram::new(2);
        qp.add_cost(0, 1.0, 0.0);
        qp.add_cost(1, 1.0, 0.0);
        qp.add_row(vec![(0, 1.0)], 1.0);
        qp.add_row(vec![(0, -1.0)], -3.0);
        qp.add_row(vec![(1, 1.0)], 5.0);
        let sol = solve_default(&qp);
        assert_eq!(sol.status, QpStatus::Infeasible);
        assert_eq!(sol.infeasible_rows, vec![0, 1]);
        assert!((sol.primal_residual - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_negative_curvature() {
        let mut qp = QuadraticProgram::new(1);
        qp.add_cost(0, -1.0, 0.0);
        assert!(matches!(
            solve(&qp, &SolverOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn deterministic() {
        let mut qp = QuadraticProgram::new(3);
        for j in 0..3 {
            qp.add_cost(j, 0.5 + j as f64, -3.0 * j as f64);
            qp.add_row(vec![(j, 1.0)], 1.0 + j as f64 * 0.1);
        }
        qp.add_row(vec![(0, -1.0), (1, -1.0), (2, -1.0)], -2.5);
        let a = solve_default(&qp);
        let b = solve_default(&qp);
        assert_eq!(a, b);
    }
}
