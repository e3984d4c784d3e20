//! CSV rendering. Every real number is printed with ten significant digits
//! in plain decimal notation (scientific outside `[1e-4, 1e12)`), so
//! identical results give identical bytes on every platform.

use std::fmt::Write;

use crate::decomposition::DispatchSchedule;
use crate::evaluation::{CostReport, PosReport};
use crate::model::Case;

pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.9e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("exponent parses");
    if !(-4..12).contains(&exp) {
        return sci;
    }
    let decimals = (9 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `t,gen_id,mw`
pub fn dispatch_csv(schedule: &DispatchSchedule, case: &Case) -> String {
    let mut out = String::from("t,gen_id,mw\n");
    for (t, g) in schedule.dispatch.iter().enumerate() {
        for (gen, &mw) in case.network().generators().iter().zip(g) {
            writeln!(out, "{t},{},{}", gen.id, fmt_num(mw)).unwrap();
        }
    }
    out
}

fn trace_rows(out: &mut String, prefix: &str, schedule: &DispatchSchedule, timing: bool) {
    for e in &schedule.trace {
        let wall = if timing { fmt_num(e.wall_ms) } else { "0".into() };
        writeln!(
            out,
            "{prefix}{},{},{},{},{}",
            e.iter,
            fmt_num(e.objective),
            e.possible_total,
            fmt_num(e.correction_total),
            wall
        )
        .unwrap();
    }
}

/// `iter,objective,sum_Np,sum_E,wall_ms`; wall times are written only when
/// `timing` is set and are `0` otherwise.
pub fn trace_csv(schedule: &DispatchSchedule, timing: bool) -> String {
    let mut out = String::from("iter,objective,sum_Np,sum_E,wall_ms\n");
    trace_rows(&mut out, "", schedule, timing);
    out
}

/// Trace of several methods, with a leading `method` column.
pub fn multi_trace_csv(schedules: &[DispatchSchedule], timing: bool) -> String {
    let mut out = String::from("method,iter,objective,sum_Np,sum_E,wall_ms\n");
    for s in schedules {
        trace_rows(&mut out, &format!("{},", s.method), s, timing);
    }
    out
}

/// `method,objective,iterations,converged,status,wall_ms`
pub fn summary_csv(schedule: &DispatchSchedule, timing: bool) -> String {
    let wall = match (timing, schedule.trace.last()) {
        (true, Some(e)) => fmt_num(e.wall_ms),
        _ => "0".into(),
    };
    format!(
        "method,objective,iterations,converged,status,wall_ms\n{},{},{},{},{},{}\n",
        schedule.method,
        fmt_num(schedule.objective),
        schedule.iterations(),
        schedule.status.is_success(),
        schedule.status.as_str(),
        wall
    )
}

/// `method,t,pos,half_width,pass`
pub fn pos_csv(report: &PosReport) -> String {
    let mut out = String::from("method,t,pos,half_width,pass\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            r.t,
            fmt_num(r.pos),
            fmt_num(r.half_width),
            r.pass
        )
        .unwrap();
    }
    out
}

/// `method,objective,gap`
pub fn cost_csv(report: &CostReport) -> String {
    let mut out = String::from("method,objective,gap\n");
    for r in &report.rows {
        writeln!(out, "{},{},{}", r.method, fmt_num(r.objective), fmt_num(r.gap)).unwrap();
    }
    out
}

/// `method,t,view,line_id,direction,frequency,active`; views are one-based.
pub fn violations_csv(report: &PosReport) -> String {
    let mut out = String::from("method,t,view,line_id,direction,frequency,active\n");
    for v in &report.violations {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            v.method,
            v.t,
            v.view + 1,
            v.line_id,
            v.direction.as_str(),
            fmt_num(v.frequency),
            v.active
        )
        .unwrap();
    }
    out
}
