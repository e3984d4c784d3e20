//! CSV inputs: externally generated wind scenarios and saved dispatches.

use std::path::Path;

use crate::error::{Diagnostic, Error, Result};
use crate::model::Case;
use crate::uncertainty::ScenarioSet;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(value: &str, path: &str, line: usize, col: &str) -> Result<T> {
    value.trim().parse().map_err(|_| {
        Error::invalid(
            format!("{path}:{line}"),
            format!("column {col}: cannot parse '{value}'"),
        )
    })
}

/// Parses `t,s,w_1,…,w_Nw` rows, one per (step, sample). Steps and samples
/// are zero-based and every pair must appear exactly once.
pub fn parse_scenarios(text: &str, source: &str, horizon: usize, n_wind: usize) -> Result<ScenarioSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid(source, "empty scenario file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let expected: Vec<String> = ["t".to_string(), "s".to_string()]
        .into_iter()
        .chain((1..=n_wind).map(|j| format!("w_{j}")))
        .collect();
    if cols != expected {
        return Err(Error::invalid(
            format!("{source}:1"),
            format!("header must be '{}'", expected.join(",")),
        ));
    }

    let mut rows = Vec::new();
    for (k, line) in lines {
        let lineno = k + 1;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != n_wind + 2 {
            return Err(Error::invalid(
                format!("{source}:{lineno}"),
                format!("expected {} columns, found {}", n_wind + 2, parts.len()),
            ));
        }
        let t: usize = field(parts[0], source, lineno, "t")?;
        let s: usize = field(parts[1], source, lineno, "s")?;
        let w = parts[2..]
            .iter()
            .enumerate()
            .map(|(j, v)| field::<f64>(v, source, lineno, &format!("w_{}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        if t >= horizon {
            return Err(Error::invalid(
                format!("{source}:{lineno}"),
                format!("step {t} outside horizon {horizon}"),
            ));
        }
        rows.push((t, s, w));
    }
    let n_samples = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if n_samples == 0 {
        return Err(Error::invalid(source, "no scenario rows"));
    }
    let mut draws = vec![vec![f64::NAN; n_samples * n_wind]; horizon];
    let mut seen = vec![vec![false; n_samples]; horizon];
    for (t, s, w) in rows {
        if std::mem::replace(&mut seen[t][s], true) {
            return Err(Error::invalid(source, format!("duplicate row for t={t}, s={s}")));
        }
        draws[t][s * n_wind..(s + 1) * n_wind].copy_from_slice(&w);
    }
    let missing: Vec<Diagnostic> = seen
        .iter()
        .enumerate()
        .flat_map(|(t, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &b)| !b)
                .map(move |(s, _)| Diagnostic::new(source, format!("missing row t={t}, s={s}")))
        })
        .take(10)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Invalid(missing));
    }
    ScenarioSet::from_draws(draws, n_samples, n_wind)
}

pub fn load_scenarios(path: impl AsRef<Path>, case: &Case) -> Result<ScenarioSet> {
    let path = path.as_ref();
    let text = read(path)?;
    parse_scenarios(
        &text,
        &path.display().to_string(),
        case.horizon(),
        case.network().n_wind(),
    )
}

/// Reads a `t,gen_id,mw` file back into `[t][gen]` order.
pub fn parse_dispatch(text: &str, source: &str, case: &Case) -> Result<Vec<Vec<f64>>> {
    let net = case.network();
    let mut out = vec![vec![f64::NAN; net.n_gen()]; case.horizon()];
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "t,gen_id,mw" => {}
        _ => {
            return Err(Error::invalid(
                format!("{source}:1"),
                "header must be 't,gen_id,mw'",
            ))
        }
    }
    for (k, line) in lines {
        let lineno = k + 1;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::invalid(
                format!("{source}:{lineno}"),
                "expected 3 columns",
            ));
        }
        let t: usize = field(parts[0], source, lineno, "t")?;
        let id: u32 = field(parts[1], source, lineno, "gen_id")?;
        let mw: f64 = field(parts[2], source, lineno, "mw")?;
        let j = net
            .generators()
            .iter()
            .position(|g| g.id == id)
            .ok_or_else(|| Error::invalid(format!("{source}:{lineno}"), format!("unknown generator {id}")))?;
        if t >= case.horizon() {
            return Err(Error::invalid(
                format!("{source}:{lineno}"),
                format!("step {t} outside horizon {}", case.horizon()),
            ));
        }
        out[t][j] = mw;
    }
    if out.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::invalid(source, "dispatch does not cover every (t, generator)"));
    }
    Ok(out)
}

pub fn load_dispatch(path: impl AsRef<Path>, case: &Case) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    parse_dispatch(&read(path)?, &path.display().to_string(), case)
}
