use crate::error::{Error, Result};
use crate::grid::{build_ptdf, constraint_views, ConstraintView, Network, SensitivityMatrix};
use crate::uncertainty::ErrorModel;

/// A network, its error model, and the quantities derived from them once.
#[derive(Debug, Clone)]
pub struct Case {
    network: Network,
    errors: ErrorModel,
    sens: SensitivityMatrix,
    views: Vec<ConstraintView>,
}

impl Case {
    pub fn new(network: Network, errors: ErrorModel) -> Result<Self> {
        if errors.n_wind() != network.n_wind() {
            return Err(Error::invalid(
                "uncertainty.covariance_mw2",
                format!(
                    "covariance is {0}x{0} but the case has {1} wind farms",
                    errors.n_wind(),
                    network.n_wind()
                ),
            ));
        }
        if !errors.is_shared() && errors.n_steps() != network.horizon() {
            return Err(Error::invalid(
                "uncertainty.covariance_mw2",
                format!(
                    "{} per-step covariances for a horizon of {}",
                    errors.n_steps(),
                    network.horizon()
                ),
            ));
        }
        let sens = build_ptdf(&network)?;
        let views = constraint_views(&network)?;
        Ok(Self {
            network,
            errors,
            sens,
            views,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }
    pub fn errors(&self) -> &ErrorModel {
        &self.errors
    }
    pub fn sensitivities(&self) -> &SensitivityMatrix {
        &self.sens
    }
    pub fn views(&self) -> &[ConstraintView] {
        &self.views
    }
    pub fn horizon(&self) -> usize {
        self.network.horizon()
    }

    /// Forecast vectors for every step.
    pub fn forecasts(&self) -> Vec<Vec<f64>> {
        (0..self.horizon())
            .map(|t| self.network.wind_forecast(t))
            .collect()
    }
}
