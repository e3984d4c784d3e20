//! Run configuration. Precedence: command-line flags, then the config file,
//! then built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::baselines::MethodId;
use crate::decomposition::FrameworkConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;

/// Every field optional; used for both the config file and parsed flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub n_samples: Option<usize>,
    pub n_eval: Option<usize>,
    pub seed: Option<u64>,
    pub eval_seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

impl PartialConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::invalid(format!("config.{}", e.path()), e.into_inner().to_string()))
    }

    /// Fields set in `self` win over `other`.
    pub fn or(self, other: PartialConfig) -> PartialConfig {
        PartialConfig {
            alpha: self.alpha.or(other.alpha),
            epsilon: self.epsilon.or(other.epsilon),
            n_samples: self.n_samples.or(other.n_samples),
            n_eval: self.n_eval.or(other.n_eval),
            seed: self.seed.or(other.seed),
            eval_seed: self.eval_seed.or(other.eval_seed),
            tolerance: self.tolerance.or(other.tolerance),
            max_iter: self.max_iter.or(other.max_iter),
            methods: self.methods.or(other.methods),
            out: self.out.or(other.out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub n_samples: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub eval_seed: u64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub methods: Vec<MethodId>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FrameworkConfig::default();
        let e = EvalConfig::default();
        Self {
            alpha: f.alpha,
            epsilon: f.epsilon,
            n_samples: f.n_samples,
            n_eval: e.n_eval,
            seed: f.seed,
            eval_seed: e.eval_seed,
            tolerance: f.tolerance,
            max_iter: f.max_iterations,
            methods: MethodId::ALL.to_vec(),
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Fills unset fields from the defaults and validates the result.
    pub fn resolve(partial: PartialConfig) -> Result<Self> {
        let d = RunConfig::default();
        let methods = match partial.methods {
            Some(names) => names
                .iter()
                .map(|s| s.parse::<MethodId>())
                .collect::<Result<Vec<_>>>()?,
            None => d.methods,
        };
        let cfg = RunConfig {
            alpha: partial.alpha.unwrap_or(d.alpha),
            epsilon: partial.epsilon.unwrap_or(d.epsilon),
            n_samples: partial.n_samples.unwrap_or(d.n_samples),
            n_eval: partial.n_eval.unwrap_or(d.n_eval),
            seed: partial.seed.unwrap_or(d.seed),
            eval_seed: partial.eval_seed.unwrap_or(d.eval_seed),
            tolerance: partial.tolerance.unwrap_or(d.tolerance),
            max_iter: partial.max_iter.unwrap_or(d.max_iter),
            methods,
            out: partial.out.unwrap_or(d.out),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(field, msg))
            }
        };
        check(
            self.alpha > 0.0 && self.alpha < 0.5,
            "alpha",
            format!("must lie in (0, 0.5), got {}", self.alpha),
        )?;
        check(
            self.epsilon > 0.0 && self.epsilon < 0.5,
            "epsilon",
            format!("must lie in (0, 0.5), got {}", self.epsilon),
        )?;
        check(self.n_samples > 0, "samples", "must be at least 1".into())?;
        check(self.n_eval > 0, "eval-samples", "must be at least 1".into())?;
        check(
            self.tolerance > 0.0,
            "tol",
            format!("must be positive, got {}", self.tolerance),
        )?;
        check(self.max_iter > 0, "max-iter", "must be at least 1".into())?;
        check(
            self.eval_seed != self.seed,
            "eval-seed",
            format!("must differ from the solve seed {}", self.seed),
        )?;
        check(!self.methods.is_empty(), "method", "no methods selected".into())?;
        Ok(())
    }

    pub fn framework(&self) -> FrameworkConfig {
        FrameworkConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            n_samples: self.n_samples,
            seed: self.seed,
            tolerance: self.tolerance,
            max_iterations: self.max_iter,
            ..FrameworkConfig::default()
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            n_eval: self.n_eval,
            eval_seed: self.eval_seed,
        }
    }
}
