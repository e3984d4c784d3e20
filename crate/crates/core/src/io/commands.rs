use std::path::{Path, PathBuf};

use crate::baselines::{solve_method, MethodId};
use crate::decomposition::{DispatchSchedule, ScheduleStatus};
use crate::error::{Error, Result};
use crate::evaluation::{compare_methods, evaluate_pos};
use crate::io::case::parse_case;
use crate::io::config::RunConfig;
use crate::io::report::{
    cost_csv, dispatch_csv, fmt_num, multi_trace_csv, pos_csv, summary_csv, trace_csv,
    violations_csv,
};
use crate::io::tables::{load_dispatch, load_scenarios};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "JCCOPF_THREADS";

/// Sizes the global worker pool from `JCCOPF_THREADS` when it is set.
pub fn configure_threads_from_env() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid(THREADS_ENV, format!("expected a positive integer, got '{value}'")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub exit_code: i32,
    /// Warnings and notes for the user.
    pub messages: Vec<String>,
    pub files: Vec<PathBuf>,
}

struct OutDir {
    dir: PathBuf,
    files: Vec<(PathBuf, String)>,
}

impl OutDir {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, content: String) {
        self.files.push((self.dir.join(name), content));
    }

    fn write(self, force: bool) -> Result<Vec<PathBuf>> {
        if !force {
            if let Some((p, _)) = self.files.iter().find(|(p, _)| p.exists()) {
                return Err(Error::invalid(
                    "out",
                    format!("{} already exists; pass --force to overwrite", p.display()),
                ));
            }
        }
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut written = Vec::new();
        for (p, content) in self.files {
            std::fs::write(&p, content).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub case: PathBuf,
    pub method: MethodId,
    /// Solve-side scenarios from a file instead of drawing them.
    pub scenarios: Option<PathBuf>,
    pub force: bool,
    pub timing: bool,
}

fn failed_summary(method: MethodId, status: &str) -> String {
    format!("method,objective,iterations,converged,status,wall_ms\n{method},NaN,0,false,{status},0\n")
}

pub fn cmd_solve(args: &SolveArgs, cfg: &RunConfig) -> Result<CommandOutput> {
    let case = parse_case(&args.case)?;
    let scenarios = match &args.scenarios {
        Some(p) => Some(load_scenarios(p, &case)?),
        None => None,
    };
    let framework = cfg.framework();
    let mut out = OutDir::new(&cfg.out);
    let mut messages = Vec::new();
    let exit_code = match solve_method(&case, &framework, args.method, scenarios.as_ref()) {
        Ok(schedule) => {
            out.add("dispatch.csv", dispatch_csv(&schedule, &case));
            out.add("trace.csv", trace_csv(&schedule, args.timing));
            out.add("summary.csv", summary_csv(&schedule, args.timing));
            messages.extend(schedule.warnings.iter().cloned());
            messages.push(format!(
                "{}: objective {} after {} solve(s), status {}",
                schedule.method,
                fmt_num(schedule.objective),
                schedule.iterations(),
                schedule.status.as_str()
            ));
            if schedule.status.is_success() {
                0
            } else {
                1
            }
        }
        Err(e @ (Error::Framework(_) | Error::Domain(_))) => {
            out.add("summary.csv", failed_summary(args.method, "failed"));
            messages.push(format!("{}: {e}", args.method));
            1
        }
        Err(e) => return Err(e),
    };
    let files = out.write(args.force)?;
    Ok(CommandOutput {
        exit_code,
        messages,
        files,
    })
}

pub fn cmd_compare(case_path: &Path, cfg: &RunConfig, force: bool, timing: bool) -> Result<CommandOutput> {
    let case = parse_case(case_path)?;
    let cmp = compare_methods(&case, &cfg.framework(), &cfg.eval(), &cfg.methods)?;
    let mut out = OutDir::new(&cfg.out);
    out.add("cost.csv", cost_csv(&cmp.costs));
    out.add("pos.csv", pos_csv(&cmp.pos));
    out.add("violations.csv", violations_csv(&cmp.pos));
    out.add("trace.csv", multi_trace_csv(&cmp.schedules, timing));

    let mut messages = Vec::new();
    for s in &cmp.schedules {
        for w in &s.warnings {
            messages.push(format!("{}: {w}", s.method));
        }
        if !s.status.is_success() {
            messages.push(format!("{}: status {}", s.method, s.status.as_str()));
        }
    }
    for (m, e) in &cmp.failures {
        messages.push(format!("{m}: {e}"));
    }
    let files = out.write(force)?;
    Ok(CommandOutput {
        exit_code: if cmp.failures.is_empty() { 0 } else { 1 },
        messages,
        files,
    })
}

/// Evaluates a saved `dispatch.csv` on fresh scenarios.
pub fn cmd_evaluate(
    case_path: &Path,
    dispatch_path: &Path,
    cfg: &RunConfig,
    force: bool,
) -> Result<CommandOutput> {
    let case = parse_case(case_path)?;
    let dispatch = load_dispatch(dispatch_path, &case)?;
    let schedule = DispatchSchedule {
        method: MethodId::Iterative,
        dispatch,
        objective: f64::NAN,
        status: ScheduleStatus::Direct,
        trace: Vec::new(),
        constraints: vec![Vec::new(); case.horizon()],
        binding: vec![false; case.horizon()],
        warnings: Vec::new(),
        seed: None,
    };
    let report = evaluate_pos(&schedule, &case, cfg.alpha, cfg.n_eval, cfg.eval_seed)?;
    let mut out = OutDir::new(&cfg.out);
    // Rows are labelled by the file they came from rather than a method.
    let label = dispatch_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dispatch".into());
    let pos = pos_csv(&report).replacen("iterative,", &format!("{label},"), usize::MAX);
    let viol = violations_csv(&report).replacen("iterative,", &format!("{label},"), usize::MAX);
    out.add("pos.csv", pos);
    out.add("violations.csv", viol);
    let failing = report.rows.iter().filter(|r| !r.pass).count();
    let files = out.write(force)?;
    Ok(CommandOutput {
        exit_code: if failing == 0 { 0 } else { 1 },
        messages: vec![format!(
            "{failing} of {} steps below 1 - alpha beyond sampling noise",
            report.rows.len()
        )],
        files,
    })
}

pub fn cmd_validate(case_path: &Path) -> Result<CommandOutput> {
    let case = parse_case(case_path)?;
    let net = case.network();
    Ok(CommandOutput {
        exit_code: 0,
        messages: vec![format!(
            "ok: {} buses, {} lines ({} monitored, {} views), {} generators, {} wind farms, {} loads, horizon {}",
            net.buses().len(),
            net.lines().len(),
            net.monitored_lines().count(),
            case.views().len(),
            net.n_gen(),
            net.n_wind(),
            net.n_load(),
            case.horizon()
        )],
        files: Vec::new(),
    })
}
