//! CSV emission and round-trip parsing for trajectories and check reports.
//! All numeric columns use C-style `%.12e` formatting so files are byte-
//! reproducible across runs and lossless at 12 significant digits.

use std::fmt::Write as _;

use crate::dynamics::{RunStatus, Trajectory, TrajectoryRecord};
use crate::error::{EqError, Result};
use crate::verify::CheckReport;

pub const TRAJECTORY_HEADER: &str = "step,time,dist_E,risk,aug_risk,reg_loss,param_norm";

/// C-style `%.12e`: sign, 12 fractional digits, two-digit signed exponent.
pub fn fmt_e12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{:.12e}", x);
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let e: i32 = exp.parse().expect("exponent digits");
    format!("{}e{}{:02}", mantissa, if e < 0 { '-' } else { '+' }, e.abs())
}

fn parse_field(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| EqError::Format(format!("bad numeric field {s:?}")))
}

pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in &traj.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            fmt_e12(r.time),
            fmt_e12(r.dist_e),
            fmt_e12(r.risk),
            fmt_e12(r.aug_risk),
            fmt_e12(r.reg_loss),
            fmt_e12(r.param_norm)
        );
    }
    if let RunStatus::Diverged { step } = traj.status {
        let _ = writeln!(out, "status=diverged,step={step}");
    }
    out
}

/// Parses a trajectory CSV back; returns the records and whether the file
/// carried a divergence footer.
pub fn trajectory_from_csv(text: &str) -> Result<(Vec<TrajectoryRecord>, bool)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRAJECTORY_HEADER => {}
        other => return Err(EqError::Format(format!("bad trajectory header {other:?}"))),
    }
    let mut records = Vec::new();
    let mut diverged = false;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        if line.starts_with("status=diverged") {
            diverged = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(EqError::Format(format!("expected 7 fields, got {}: {line:?}", f.len())));
        }
        records.push(TrajectoryRecord {
            step: f[0]
                .parse()
                .map_err(|_| EqError::Format(format!("bad step field {:?}", f[0])))?,
            time: parse_field(f[1])?,
            dist_e: parse_field(f[2])?,
            risk: parse_field(f[3])?,
            aug_risk: parse_field(f[4])?,
            reg_loss: parse_field(f[5])?,
            param_norm: parse_field(f[6])?,
        });
    }
    Ok((records, diverged))
}

pub fn checks_to_csv(reports: &[CheckReport]) -> String {
    let mut out = String::from("name,passed,residual,tolerance\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.name,
            r.passed,
            fmt_e12(r.residual),
            fmt_e12(r.tolerance)
        );
    }
    out
}
