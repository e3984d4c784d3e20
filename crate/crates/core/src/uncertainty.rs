//! Wind forecast-error model and the fixed scenario sets drawn from it.
//!
//! Draws come from ChaCha8 seeded with the run seed; time step `t` uses
//! stream `t` of that generator, so each step is reproducible on its own and
//! the steps can be drawn in parallel.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Zero-mean Gaussian error model with either one covariance for the whole
/// horizon or one per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    covariances: Vec<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
    shared: bool,
}

impl ErrorModel {
    pub fn shared(cov: DMatrix<f64>) -> Result<Self> {
        let factor = factor_covariance(&cov)?;
        Ok(Self {
            covariances: vec![cov],
            factors: vec![factor],
            shared: true,
        })
    }

    pub fn per_step(covs: Vec<DMatrix<f64>>) -> Result<Self> {
        if covs.is_empty() {
            return Err(Error::Model("per-step covariance list is empty".into()));
        }
        let n = covs[0].nrows();
        let mut factors = Vec::with_capacity(covs.len());
        for (t, c) in covs.iter().enumerate() {
            if c.nrows() != n {
                return Err(Error::Model(format!(
                    "covariance at step {t} is {}x{}, expected {n}x{n}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            factors.push(factor_covariance(c).map_err(|e| match e {
                Error::Model(m) => Error::Model(format!("step {t}: {m}")),
                other => other,
            })?);
        }
        Ok(Self {
            covariances: covs,
            factors,
            shared: false,
        })
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    /// Number of per-step matrices held (1 when shared).
    pub fn n_steps(&self) -> usize {
        self.covariances.len()
    }

    pub fn n_wind(&self) -> usize {
        self.covariances[0].nrows()
    }

    pub fn covariance(&self, t: usize) -> &DMatrix<f64> {
        if self.shared {
            &self.covariances[0]
        } else {
            &self.covariances[t]
        }
    }

    pub fn factor(&self, t: usize) -> &DMatrix<f64> {
        if self.shared {
            &self.factors[0]
        } else {
            &self.factors[t]
        }
    }

    /// Standard deviation of `a · δ_t`.
    pub fn std_of(&self, t: usize, a: &[f64]) -> f64 {
        let a = DVector::from_column_slice(a);
        let var = (a.transpose() * self.covariance(t) * &a)[(0, 0)];
        var.max(0.0).sqrt()
    }
}

/// Lower-triangular `L` with `L Lᵀ = Σ`. Zero pivots (semidefinite input)
/// produce zero columns; anything that cannot be reconstructed is rejected.
pub fn factor_covariance(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::Model(format!(
            "covariance must be square, got {}x{}",
            n,
            cov.ncols()
        )));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("covariance has non-finite entries".into()));
    }
    let scale = cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Model(format!(
                    "covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let tol = 1e-12 * scale * n.max(1) as f64;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::Model(format!(
                "covariance is not positive semidefinite (pivot {j} is {d:.3e})"
            )));
        }
        if d <= tol {
            // Zero pivot: the rest of the column must already be explained.
            for i in (j + 1)..n {
                let mut r = cov[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > 1e-9 * scale {
                    return Err(Error::Model(format!(
                        "covariance is not positive semidefinite (zero pivot {j} with coupling to {i})"
                    )));
                }
            }
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut r = cov[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / root;
        }
    }

    let recon = &l * l.transpose();
    let err = (recon - cov).abs().max();
    if err > 1e-9 * scale {
        return Err(Error::Model(format!(
            "covariance is not positive semidefinite (reconstruction error {err:.3e})"
        )));
    }
    Ok(l)
}

/// Wind power samples `w_t^s = w̄_t + δ_t^s`, one block per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    n_samples: usize,
    n_wind: usize,
    seed: Option<u64>,
    // per step, row-major n_samples x n_wind
    draws: Vec<Vec<f64>>,
}

impl ScenarioSet {
    /// Wraps externally supplied samples (for example loaded from a file).
    pub fn from_draws(draws: Vec<Vec<f64>>, n_samples: usize, n_wind: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::Domain("scenario set needs at least one sample".into()));
        }
        for (t, block) in draws.iter().enumerate() {
            if block.len() != n_samples * n_wind {
                return Err(Error::Dimension(format!(
                    "scenario block for step {t} has {} values, expected {}",
                    block.len(),
                    n_samples * n_wind
                )));
            }
        }
        Ok(Self {
            n_samples,
            n_wind,
            seed: None,
            draws,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
    pub fn n_wind(&self) -> usize {
        self.n_wind
    }
    pub fn horizon(&self) -> usize {
        self.draws.len()
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn sample(&self, t: usize, s: usize) -> &[f64] {
        &self.draws[t][s * self.n_wind..(s + 1) * self.n_wind]
    }

    /// All samples of step `t`, row-major.
    pub fn step(&self, t: usize) -> &[f64] {
        &self.draws[t]
    }
}

/// Standard-normal draws pushed through `factor` and shifted by `mean`,
/// `n` rows, row-major. Deterministic in `(seed, stream)`.
pub fn gaussian_block(
    factor: &DMatrix<f64>,
    mean: &[f64],
    n: usize,
    seed: u64,
    stream: u64,
) -> Vec<f64> {
    let dim = mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut out = Vec::with_capacity(n * dim);
    let mut z = vec![0.0; dim];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..dim {
            let mut acc = mean[i];
            for k in 0..=i {
                acc += factor[(i, k)] * z[k];
            }
            out.push(acc);
        }
    }
    out
}

pub fn draw_scenarios(
    model: &ErrorModel,
    forecasts: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    if n_samples == 0 {
        return Err(Error::Domain("N_s must be at least 1".into()));
    }
    if !model.is_shared() && model.n_steps() != forecasts.len() {
        return Err(Error::Dimension(format!(
            "{} per-step covariances for a horizon of {}",
            model.n_steps(),
            forecasts.len()
        )));
    }
    let n_wind = model.n_wind();
    if let Some(t) = forecasts.iter().position(|f| f.len() != n_wind) {
        return Err(Error::Dimension(format!(
            "forecast at step {t} has {} entries, model has {n_wind} wind farms",
            forecasts[t].len()
        )));
    }
    let draws = forecasts
        .par_iter()
        .enumerate()
        .map(|(t, mean)| gaussian_block(model.factor(t), mean, n_samples, seed, t as u64))
        .collect();
    Ok(ScenarioSet {
        n_samples,
        n_wind,
        seed: Some(seed),
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal_factors() {
        let l = factor_covariance(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
        let l = factor_covariance(&DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0])).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn semidefinite_and_indefinite_inputs() {
        // rank one
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let l = factor_covariance(&cov).unwrap();
        assert!((&l * l.transpose() - &cov).abs().max() < 1e-12);
        assert_eq!(factor_covariance(&DMatrix::zeros(2, 2)).unwrap(), DMatrix::zeros(2, 2));

        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(factor_covariance(&bad), Err(Error::Model(_))));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(factor_covariance(&bad), Err(Error::Model(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(factor_covariance(&asym), Err(Error::Model(_))));
    }

    #[test]
    fn zero_covariance_reproduces_forecast() {
        let model = ErrorModel::shared(DMatrix::zeros(2, 2)).unwrap();
        let f = vec![vec![10.0, 20.0], vec![30.0, 40.0]];
        let set = draw_scenarios(&model, &f, 50, 7).unwrap();
        for (t, ft) in f.iter().enumerate() {
            for s in 0..50 {
                assert_eq!(set.sample(t, s), ft.as_slice());
            }
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let model =
            ErrorModel::shared(DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0])).unwrap();
        let f = vec![vec![1.0, 2.0]; 3];
        let a = draw_scenarios(&model, &f, 100, 11).unwrap();
        let b = draw_scenarios(&model, &f, 100, 11).unwrap();
        let c = draw_scenarios(&model, &f, 100, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // distinct streams per step
        assert_ne!(a.step(0), a.step(1));
    }

    #[test]
    fn rejects_zero_samples_and_bad_shapes() {
        let model = ErrorModel::shared(DMatrix::identity(1, 1)).unwrap();
        assert!(draw_scenarios(&model, &[vec![0.0]], 0, 1).is_err());
        assert!(matches!(
            draw_scenarios(&model, &[vec![0.0, 1.0]], 5, 1),
            Err(Error::Dimension(_))
        ));
    }
}
