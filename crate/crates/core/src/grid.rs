//! Static network description and the DC sensitivities that map nodal
//! injections to line flows.
//!
//! Flow orientation is from-bus to to-bus: a positive flow leaves `from_bus`.
//! Loads are stored as positive consumption, and their sensitivity rows are
//! the PTDF of a withdrawal, so a flow is always
//! `gen · g + wind · w + load · d` with no sign juggling at call sites.

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    #[serde(default)]
    pub is_slack: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    /// Series reactance in per unit.
    pub reactance: f64,
    pub limit_upper: f64,
    pub limit_lower: f64,
    pub monitored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    pub g_min: f64,
    pub g_max: f64,
    /// Largest allowed decrease between consecutive steps, stored as a value <= 0.
    pub ramp_down: f64,
    pub ramp_up: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Generator {
    pub fn cost(&self, mw: f64) -> f64 {
        self.c2 * mw * mw + self.c1 * mw + self.c0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindFarm {
    pub id: u32,
    pub bus: u32,
    pub forecast: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadPoint {
    pub id: u32,
    pub bus: u32,
    pub demand: Vec<f64>,
}

/// Validated network plus time series. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    generators: Vec<Generator>,
    wind: Vec<WindFarm>,
    loads: Vec<LoadPoint>,
    horizon: usize,
    bus_index: HashMap<u32, usize>,
    slack: usize,
}

impl Network {
    /// Validates every field and collects all problems before failing.
    pub fn new(
        buses: Vec<Bus>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
        wind: Vec<WindFarm>,
        loads: Vec<LoadPoint>,
        horizon: usize,
    ) -> Result<Self> {
        let mut diags = Vec::new();
        let mut bus_index = HashMap::new();
        for (k, b) in buses.iter().enumerate() {
            if bus_index.insert(b.id, k).is_some() {
                diags.push(Diagnostic::new(
                    format!("buses[{k}].id"),
                    format!("duplicate bus id {}", b.id),
                ));
            }
        }
        let slacks: Vec<usize> = (0..buses.len()).filter(|&k| buses[k].is_slack).collect();
        if slacks.len() != 1 {
            diags.push(Diagnostic::new(
                "buses",
                format!("exactly one slack bus required, found {}", slacks.len()),
            ));
        }
        if horizon == 0 {
            diags.push(Diagnostic::new("horizon", "horizon must be at least 1"));
        }

        let check_bus = |diags: &mut Vec<Diagnostic>, path: String, bus: u32| {
            if !bus_index.contains_key(&bus) {
                diags.push(Diagnostic::new(path, format!("unknown bus {bus}")));
            }
        };

        let mut seen = HashSet::new();
        for (k, l) in lines.iter().enumerate() {
            let p = format!("lines[{k}]");
            if !seen.insert(l.id) {
                diags.push(Diagnostic::new(
                    format!("{p}.id"),
                    format!("duplicate line id {}", l.id),
                ));
            }
            check_bus(&mut diags, format!("{p}.from"), l.from_bus);
            check_bus(&mut diags, format!("{p}.to"), l.to_bus);
            if l.from_bus == l.to_bus {
                diags.push(Diagnostic::new(
                    format!("{p}.to"),
                    format!("line {} starts and ends at bus {}", l.id, l.from_bus),
                ));
            }
            if !(l.reactance.is_finite() && l.reactance > 0.0) {
                diags.push(Diagnostic::new(
                    format!("{p}.reactance_pu"),
                    format!("line {} reactance must be positive", l.id),
                ));
            }
            if !(l.limit_lower < l.limit_upper) {
                diags.push(Diagnostic::new(
                    format!("{p}.limit_mw_lower"),
                    format!(
                        "line {} lower limit {} not below upper limit {}",
                        l.id, l.limit_lower, l.limit_upper
                    ),
                ));
            }
        }

        if generators.is_empty() {
            diags.push(Diagnostic::new("generators", "at least one generator required"));
        }
        let mut seen = HashSet::new();
        for (k, g) in generators.iter().enumerate() {
            let p = format!("generators[{k}]");
            if !seen.insert(g.id) {
                diags.push(Diagnostic::new(
                    format!("{p}.id"),
                    format!("duplicate generator id {}", g.id),
                ));
            }
            check_bus(&mut diags, format!("{p}.bus"), g.bus);
            if !(g.g_min <= g.g_max) {
                diags.push(Diagnostic::new(
                    format!("{p}.g_max_mw"),
                    format!("generator {} has g_min above g_max", g.id),
                ));
            }
            if !(g.ramp_down <= 0.0 && g.ramp_up >= 0.0) {
                diags.push(Diagnostic::new(
                    format!("{p}.ramp_down_mw"),
                    format!(
                        "generator {} needs ramp_down <= 0 <= ramp_up, got [{}, {}]",
                        g.id, g.ramp_down, g.ramp_up
                    ),
                ));
            }
            if !(g.c2 >= 0.0) {
                diags.push(Diagnostic::new(
                    format!("{p}.c2"),
                    format!("generator {} has negative quadratic cost", g.id),
                ));
            }
        }

        if wind.is_empty() {
            diags.push(Diagnostic::new("wind", "at least one wind farm required"));
        }
        let mut seen = HashSet::new();
        for (k, w) in wind.iter().enumerate() {
            let p = format!("wind[{k}]");
            if !seen.insert(w.id) {
                diags.push(Diagnostic::new(
                    format!("{p}.id"),
                    format!("duplicate wind farm id {}", w.id),
                ));
            }
            check_bus(&mut diags, format!("{p}.bus"), w.bus);
            if w.forecast.len() != horizon {
                diags.push(Diagnostic::new(
                    format!("{p}.forecast_mw"),
                    format!(
                        "wind farm {} forecast has {} entries, horizon is {horizon}",
                        w.id,
                        w.forecast.len()
                    ),
                ));
            }
        }

        if loads.is_empty() {
            diags.push(Diagnostic::new("loads", "at least one load required"));
        }
        let mut seen = HashSet::new();
        for (k, d) in loads.iter().enumerate() {
            let p = format!("loads[{k}]");
            if !seen.insert(d.id) {
                diags.push(Diagnostic::new(
                    format!("{p}.id"),
                    format!("duplicate load id {}", d.id),
                ));
            }
            check_bus(&mut diags, format!("{p}.bus"), d.bus);
            if d.demand.len() != horizon {
                diags.push(Diagnostic::new(
                    format!("{p}.demand_mw"),
                    format!(
                        "load {} demand has {} entries, horizon is {horizon}",
                        d.id,
                        d.demand.len()
                    ),
                ));
            }
            if d.demand.iter().any(|&x| !(x >= 0.0)) {
                diags.push(Diagnostic::new(
                    format!("{p}.demand_mw"),
                    format!("load {} has a negative demand", d.id),
                ));
            }
        }

        if !diags.is_empty() {
            return Err(Error::Invalid(diags));
        }
        let slack = slacks[0];
        Ok(Self {
            buses,
            lines,
            generators,
            wind,
            loads,
            horizon,
            bus_index,
            slack,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }
    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }
    pub fn wind(&self) -> &[WindFarm] {
        &self.wind
    }
    pub fn loads(&self) -> &[LoadPoint] {
        &self.loads
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }
    pub fn n_wind(&self) -> usize {
        self.wind.len()
    }
    pub fn n_load(&self) -> usize {
        self.loads.len()
    }

    pub fn bus_position(&self, id: u32) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn slack_position(&self) -> usize {
        self.slack
    }

    pub fn monitored_lines(&self) -> impl Iterator<Item = &Line> {
        self.lines.iter().filter(|l| l.monitored)
    }

    /// Wind forecast vector at step `t`.
    pub fn wind_forecast(&self, t: usize) -> Vec<f64> {
        self.wind.iter().map(|w| w.forecast[t]).collect()
    }

    /// Load vector at step `t`.
    pub fn demand(&self, t: usize) -> Vec<f64> {
        self.loads.iter().map(|d| d.demand[t]).collect()
    }
}

/// Marks every line touching a wind bus as monitored. Used when a case
/// leaves the monitored set unspecified.
pub fn monitor_wind_adjacent(lines: &mut [Line], wind: &[WindFarm]) {
    let wind_buses: HashSet<u32> = wind.iter().map(|w| w.bus).collect();
    for l in lines {
        l.monitored = wind_buses.contains(&l.from_bus) || wind_buses.contains(&l.to_bus);
    }
}

fn check_connected(net: &Network) -> Result<()> {
    let n = net.buses.len();
    let mut adj = vec![Vec::new(); n];
    for l in &net.lines {
        let (a, b) = (net.bus_index[&l.from_bus], net.bus_index[&l.to_bus]);
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([net.slack]);
    seen[net.slack] = true;
    while let Some(k) = queue.pop_front() {
        for &j in &adj[k] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    let islanded: Vec<u32> = (0..n).filter(|&k| !seen[k]).map(|k| net.buses[k].id).collect();
    if islanded.is_empty() {
        Ok(())
    } else {
        Err(Error::Topology(format!(
            "network is disconnected; buses {islanded:?} cannot reach the slack bus"
        )))
    }
}

/// Nodal susceptance matrix (per unit) in bus-position order.
fn susceptance(net: &Network) -> DMatrix<f64> {
    let n = net.buses.len();
    let mut b = DMatrix::zeros(n, n);
    for l in &net.lines {
        let (i, j) = (net.bus_index[&l.from_bus], net.bus_index[&l.to_bus]);
        let y = 1.0 / l.reactance;
        b[(i, i)] += y;
        b[(j, j)] += y;
        b[(i, j)] -= y;
        b[(j, i)] -= y;
    }
    b
}

fn reduced_positions(net: &Network) -> Vec<usize> {
    (0..net.buses.len()).filter(|&k| k != net.slack).collect()
}

/// Full PTDF: one row per line (all lines, file order), one column per bus
/// (position order). Slack column is zero.
pub fn ptdf_full(net: &Network) -> Result<DMatrix<f64>> {
    check_connected(net)?;
    let n = net.buses.len();
    let keep = reduced_positions(net);
    let b = susceptance(net);
    let b_red = b.select_rows(&keep).select_columns(&keep);
    let x_red = b_red
        .try_inverse()
        .ok_or_else(|| Error::Topology("reduced susceptance matrix is singular".into()))?;

    // Bus reactance matrix with a zero row/column at the slack.
    let mut x = DMatrix::zeros(n, n);
    for (a, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            x[(i, j)] = x_red[(a, c)];
        }
    }

    let mut ptdf = DMatrix::zeros(net.lines.len(), n);
    for (r, l) in net.lines.iter().enumerate() {
        let (f, t) = (net.bus_index[&l.from_bus], net.bus_index[&l.to_bus]);
        for k in 0..n {
            ptdf[(r, k)] = (x[(f, k)] - x[(t, k)]) / l.reactance;
        }
    }
    if ptdf.iter().any(|v| !v.is_finite()) {
        return Err(Error::Topology("non-finite sensitivity factor".into()));
    }
    Ok(ptdf)
}

/// Line flows (all lines) for a net nodal injection vector in bus-position
/// order, by solving the reduced DC system directly.
pub fn dc_power_flow(net: &Network, injection: &[f64]) -> Result<Vec<f64>> {
    if injection.len() != net.buses.len() {
        return Err(Error::Dimension(format!(
            "injection vector has {} entries for {} buses",
            injection.len(),
            net.buses.len()
        )));
    }
    check_connected(net)?;
    let keep = reduced_positions(net);
    let b_red = susceptance(net).select_rows(&keep).select_columns(&keep);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| injection[k]));
    let theta_red = b_red
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Topology("reduced susceptance matrix is singular".into()))?;
    let mut theta = vec![0.0; net.buses.len()];
    for (a, &k) in keep.iter().enumerate() {
        theta[k] = theta_red[a];
    }
    Ok(net
        .lines
        .iter()
        .map(|l| {
            let (f, t) = (net.bus_index[&l.from_bus], net.bus_index[&l.to_bus]);
            (theta[f] - theta[t]) / l.reactance
        })
        .collect())
}

/// Injection-to-flow factors for the monitored lines, split by device class.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    pub line_ids: Vec<u32>,
    /// monitored lines x generators
    pub gen: DMatrix<f64>,
    /// monitored lines x wind farms
    pub wind: DMatrix<f64>,
    /// monitored lines x loads (withdrawal convention)
    pub load: DMatrix<f64>,
}

impl SensitivityMatrix {
    pub fn n_lines(&self) -> usize {
        self.line_ids.len()
    }

    /// Wind sensitivity row of monitored line `k`.
    pub fn wind_row(&self, k: usize) -> Vec<f64> {
        self.wind.row(k).iter().copied().collect()
    }

    /// Flow on monitored line `k` caused by everything except wind.
    pub fn fixed_flow(&self, k: usize, g: &[f64], d: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (j, &x) in g.iter().enumerate() {
            acc += self.gen[(k, j)] * x;
        }
        for (j, &x) in d.iter().enumerate() {
            acc += self.load[(k, j)] * x;
        }
        acc
    }
}

pub fn build_ptdf(net: &Network) -> Result<SensitivityMatrix> {
    let full = ptdf_full(net)?;
    let rows: Vec<usize> = (0..net.lines.len())
        .filter(|&r| net.lines[r].monitored)
        .collect();
    let line_ids = rows.iter().map(|&r| net.lines[r].id).collect();
    let col = |bus: u32| net.bus_index[&bus];
    let mut gen = DMatrix::zeros(rows.len(), net.generators.len());
    let mut wind = DMatrix::zeros(rows.len(), net.wind.len());
    let mut load = DMatrix::zeros(rows.len(), net.loads.len());
    for (k, &r) in rows.iter().enumerate() {
        for (j, g) in net.generators.iter().enumerate() {
            gen[(k, j)] = full[(r, col(g.bus))];
        }
        for (j, w) in net.wind.iter().enumerate() {
            wind[(k, j)] = full[(r, col(w.bus))];
        }
        for (j, d) in net.loads.iter().enumerate() {
            load[(k, j)] = -full[(r, col(d.bus))];
        }
    }
    Ok(SensitivityMatrix {
        line_ids,
        gen,
        wind,
        load,
    })
}

pub fn line_flows(sens: &SensitivityMatrix, g: &[f64], w: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    if g.len() != sens.gen.ncols() || w.len() != sens.wind.ncols() || d.len() != sens.load.ncols()
    {
        return Err(Error::Dimension(format!(
            "expected (g, w, d) lengths ({}, {}, {}), got ({}, {}, {})",
            sens.gen.ncols(),
            sens.wind.ncols(),
            sens.load.ncols(),
            g.len(),
            w.len(),
            d.len()
        )));
    }
    Ok((0..sens.n_lines())
        .map(|k| {
            let wind: f64 = w.iter().enumerate().map(|(j, &x)| sens.wind[(k, j)] * x).sum();
            sens.fixed_flow(k, g, d) + wind
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// `l <= l+`, signed value `x = l`
    Upper,
    /// `l >= l-`, signed value `x = -l`
    Lower,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Upper => 1.0,
            Direction::Lower => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Upper => "upper",
            Direction::Lower => "lower",
        }
    }
}

/// One side of one monitored line's limit, written uniformly as `x <= bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintView {
    /// Zero-based position in the view list; upper side of monitored line `k`
    /// sits at `2k`, lower side at `2k + 1`.
    pub index: usize,
    /// Position of the line among the monitored lines.
    pub line: usize,
    pub line_id: u32,
    pub direction: Direction,
    pub bound: f64,
}

impl ConstraintView {
    /// One-based view number.
    pub fn number(&self) -> usize {
        self.index + 1
    }

    pub fn sign(&self) -> f64 {
        self.direction.sign()
    }

    pub fn signed(&self, flow: f64) -> f64 {
        self.sign() * flow
    }

    /// Strict violation test `x > bound`.
    pub fn violated(&self, flow: f64) -> bool {
        self.signed(flow) > self.bound
    }
}

pub fn constraint_views(net: &Network) -> Result<Vec<ConstraintView>> {
    let mut views = Vec::new();
    for (k, l) in net.monitored_lines().enumerate() {
        views.push(ConstraintView {
            index: 2 * k,
            line: k,
            line_id: l.id,
            direction: Direction::Upper,
            bound: l.limit_upper,
        });
        views.push(ConstraintView {
            index: 2 * k + 1,
            line: k,
            line_id: l.id,
            direction: Direction::Lower,
            bound: -l.limit_lower,
        });
    }
    if views.is_empty() {
        return Err(Error::invalid("lines", "no monitored lines"));
    }
    Ok(views)
}
