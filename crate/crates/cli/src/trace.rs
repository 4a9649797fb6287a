use std::fmt::Write as _;
use std::path::Path;

use beamsteer_core::sim::ScenarioResult;

pub const HEADER: &str = "iter,t,exL,eyL,exR,eyR,d,theta_e,speed,wx,wy,wz,status";

/// One row per record; floats in shortest round-trip decimal.
pub fn trace_csv(result: &ScenarioResult) -> String {
    let mut out = String::with_capacity(64 * (result.records.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in &result.records {
        let (el, er) = (r.error_l(), r.error_r());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.iter, r.t, el.x, el.y, er.x, er.y, r.d, r.theta_e, r.speed, r.omega.x, r.omega.y, r.omega.z, r.status
        );
    }
    out
}

pub fn emit_trace(result: &ScenarioResult, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, trace_csv(result))
}
