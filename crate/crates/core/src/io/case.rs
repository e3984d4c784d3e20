//! JSON case files.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error, Result};
use crate::grid::{self, Bus, Generator, Line, LoadPoint, Network, WindFarm};
use crate::model::Case;
use crate::uncertainty::ErrorModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: u32,
    #[serde(default)]
    pub slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub reactance_pu: f64,
    pub limit_mw_upper: f64,
    pub limit_mw_lower: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitored: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRecord {
    pub id: u32,
    pub bus: u32,
    pub g_min_mw: f64,
    pub g_max_mw: f64,
    /// Nonpositive.
    pub ramp_down_mw: f64,
    pub ramp_up_mw: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindRecord {
    pub id: u32,
    pub bus: u32,
    pub forecast_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadRecord {
    pub id: u32,
    pub bus: u32,
    pub demand_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceRecord {
    Shared(Vec<Vec<f64>>),
    PerStep(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyRecord {
    pub covariance_mw2: CovarianceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub base_mva: f64,
    /// Optional; defaults to the length of the first load's demand series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    pub generators: Vec<GeneratorRecord>,
    pub wind: Vec<WindRecord>,
    pub loads: Vec<LoadRecord>,
    pub uncertainty: UncertaintyRecord,
}

fn matrix(rows: &[Vec<f64>], path: &str, diags: &mut Vec<Diagnostic>) -> Option<DMatrix<f64>> {
    let n = rows.len();
    if let Some(k) = rows.iter().position(|r| r.len() != n) {
        diags.push(Diagnostic::new(
            path,
            format!("row {k} has {} entries, matrix has {n} rows", rows[k].len()),
        ));
        return None;
    }
    Some(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl CaseFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::invalid(
                if path == "." { "case".to_string() } else { path },
                format!("{inner}"),
            )
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case file serializes")
    }

    pub fn horizon(&self) -> usize {
        self.horizon
            .or_else(|| self.loads.first().map(|l| l.demand_mw.len()))
            .unwrap_or(0)
    }

    /// Validates everything and reports every problem found.
    pub fn to_case(&self) -> Result<Case> {
        let horizon = self.horizon();
        let mut diags = Vec::new();

        let buses = self
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                is_slack: b.slack,
            })
            .collect();
        let mut lines: Vec<Line> = self
            .lines
            .iter()
            .map(|l| Line {
                id: l.id,
                from_bus: l.from,
                to_bus: l.to,
                reactance: l.reactance_pu,
                limit_upper: l.limit_mw_upper,
                limit_lower: l.limit_mw_lower,
                monitored: l.monitored.unwrap_or(false),
            })
            .collect();
        let wind: Vec<WindFarm> = self
            .wind
            .iter()
            .map(|w| WindFarm {
                id: w.id,
                bus: w.bus,
                forecast: w.forecast_mw.clone(),
            })
            .collect();
        if self.lines.iter().all(|l| l.monitored.is_none()) {
            grid::monitor_wind_adjacent(&mut lines, &wind);
        }
        let generators = self
            .generators
            .iter()
            .map(|g| Generator {
                id: g.id,
                bus: g.bus,
                g_min: g.g_min_mw,
                g_max: g.g_max_mw,
                ramp_down: g.ramp_down_mw,
                ramp_up: g.ramp_up_mw,
                c2: g.c2,
                c1: g.c1,
                c0: g.c0,
            })
            .collect();
        let loads = self
            .loads
            .iter()
            .map(|d| LoadPoint {
                id: d.id,
                bus: d.bus,
                demand: d.demand_mw.clone(),
            })
            .collect();

        let network = match Network::new(buses, lines, generators, wind, loads, horizon) {
            Ok(n) => Some(n),
            Err(Error::Invalid(d)) => {
                diags.extend(d);
                None
            }
            Err(e) => return Err(e),
        };

        let cov_path = "uncertainty.covariance_mw2";
        let model = match &self.uncertainty.covariance_mw2 {
            CovarianceRecord::Shared(rows) => matrix(rows, cov_path, &mut diags).and_then(|m| {
                ErrorModel::shared(m)
                    .map_err(|e| diags.push(Diagnostic::new(cov_path, e.to_string())))
                    .ok()
            }),
            CovarianceRecord::PerStep(steps) => {
                let mats: Option<Vec<_>> = steps
                    .iter()
                    .enumerate()
                    .map(|(t, rows)| matrix(rows, &format!("{cov_path}[{t}]"), &mut diags))
                    .collect();
                mats.and_then(|m| {
                    ErrorModel::per_step(m)
                        .map_err(|e| diags.push(Diagnostic::new(cov_path, e.to_string())))
                        .ok()
                })
            }
        };

        if let Some(m) = &model {
            if m.n_wind() != self.wind.len() {
                diags.push(Diagnostic::new(
                    cov_path,
                    format!(
                        "covariance is {0}x{0} but the case has {1} wind farms",
                        m.n_wind(),
                        self.wind.len()
                    ),
                ));
            }
        }

        match (network, model) {
            (Some(network), Some(model)) if diags.is_empty() => Case::new(network, model),
            _ => Err(Error::Invalid(diags)),
        }
    }
}

/// Reads and validates a case file.
pub fn parse_case(path: impl AsRef<Path>) -> Result<Case> {
    CaseFile::load(path)?.to_case()
}
