use std::path::{Path, PathBuf};

use beamsteer_core::config::ScenarioConfig;
use beamsteer_core::sim::{run, ScenarioResult};
use log::{info, warn};
use rayon::prelude::*;

use crate::manifest::{Expectation, ManifestEntry, SuiteManifest};
use crate::parse::{emit_config, parse_config};
use crate::trace::trace_csv;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub name: String,
    pub outcome: String,
    /// Every unmet expectation, empty when the scenario passed.
    pub failures: Vec<String>,
    pub summary: Vec<(String, f64)>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadReport {
    pub name: String,
    pub value: Option<f64>,
    pub below: f64,
}

impl SpreadReport {
    pub fn passed(&self) -> bool {
        self.value.is_some_and(|v| v < self.below)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub scenarios: Vec<ScenarioReport>,
    pub spreads: Vec<SpreadReport>,
}

impl SuiteReport {
    pub fn exit_code(&self) -> i32 {
        let ok = self.scenarios.iter().all(ScenarioReport::passed) && self.spreads.iter().all(SpreadReport::passed);
        if ok {
            0
        } else {
            1
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.scenarios {
            let verdict = if s.passed() { "PASS" } else { "FAIL" };
            out.push_str(&format!("{verdict} {} ({})\n", s.name, s.outcome));
            for f in &s.failures {
                out.push_str(&format!("    {f}\n"));
            }
        }
        for s in &self.spreads {
            let verdict = if s.passed() { "PASS" } else { "FAIL" };
            let value = s.value.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!("{verdict} spread {}: {value} (below {})\n", s.name, s.below));
        }
        out
    }
}

fn check_assertion(expr: &str, result: &ScenarioResult) -> Result<(), String> {
    let parts: Vec<&str> = expr.split_whitespace().collect();
    let [lhs, op, rhs] = parts[..] else {
        return Err(format!("malformed assertion `{expr}`"));
    };
    if lhs == "outcome" {
        let tag = result.outcome.tag();
        return match op {
            "==" if tag == rhs => Ok(()),
            "!=" if tag != rhs => Ok(()),
            "==" | "!=" => Err(format!("`{expr}` failed: outcome is {tag}")),
            _ => Err(format!("malformed assertion `{expr}`")),
        };
    }
    let want: f64 = rhs.parse().map_err(|_| format!("malformed assertion `{expr}`"))?;
    let Some(got) = result.get(lhs) else {
        return Err(format!("`{expr}` failed: no `{lhs}` in the summary"));
    };
    let holds = match op {
        "<" => got < want,
        "<=" => got <= want,
        ">" => got > want,
        ">=" => got >= want,
        "==" => got == want,
        "!=" => got != want,
        _ => return Err(format!("malformed assertion `{expr}`")),
    };
    if holds {
        Ok(())
    } else {
        Err(format!("`{expr}` failed: {lhs} = {got}"))
    }
}

/// Writes the trace, summary and resolved configuration of a finished run.
fn write_outputs(out_dir: &Path, config: &ScenarioConfig, result: &ScenarioResult, csv: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let name = &config.name;
    std::fs::write(out_dir.join(format!("{name}.csv")), csv)?;
    std::fs::write(out_dir.join(format!("{name}.summary")), result.summary_report())?;
    std::fs::write(out_dir.join(format!("{name}.resolved.toml")), emit_config(config))
}

/// Loads, runs and writes one scenario file.
pub fn run_one(path: &Path, out_dir: &Path, seed: Option<u64>, name: Option<&str>) -> Result<ScenarioResult, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut config = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(name) = name {
        config.name = name.to_string();
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let result = run(&config, Some(base)).map_err(|e| format!("{}: {e}", config.name))?;
    let csv = trace_csv(&result);
    write_outputs(out_dir, &config, &result, &csv).map_err(|e| format!("cannot write outputs: {e}"))?;
    Ok(result)
}

fn run_entry(manifest: &SuiteManifest, entry: &ManifestEntry, out_dir: &Path) -> (ScenarioReport, Option<ScenarioResult>) {
    let path = manifest.base_dir.join(&entry.config);
    let result = match run_one(&path, out_dir, entry.seed, Some(&entry.name)) {
        Ok(r) => r,
        Err(e) => {
            let report = ScenarioReport {
                name: entry.name.clone(),
                outcome: "error".into(),
                failures: vec![e],
                summary: Vec::new(),
            };
            return (report, None);
        }
    };
    let mut failures = Vec::new();
    match (entry.expect, result.outcome.is_failure()) {
        (Expectation::Pass, true) => failures.push(format!("run failed with {}", result.outcome.tag())),
        (Expectation::Fail, false) => failures.push(format!("expected a failure, got {}", result.outcome.tag())),
        _ => {}
    }
    let csv = trace_csv(&result);
    if csv.contains("NaN") || csv.contains("inf") {
        failures.push("trace contains non-finite values".into());
    }
    failures.extend(entry.assert.iter().filter_map(|a| check_assertion(a, &result).err()));
    let report = ScenarioReport {
        name: entry.name.clone(),
        outcome: result.outcome.tag().to_string(),
        failures,
        summary: result.summary.iter().map(|(k, v)| (k.clone(), *v)).collect(),
    };
    (report, Some(result))
}

/// Runs every scenario of the manifest in parallel, then the spread checks.
pub fn run_suite(manifest: &SuiteManifest, out_dir: &Path) -> SuiteReport {
    if manifest.scenario.is_empty() {
        warn!("manifest lists no scenarios");
    }
    let runs: Vec<(ScenarioReport, Option<ScenarioResult>)> =
        manifest.scenario.par_iter().map(|e| run_entry(manifest, e, out_dir)).collect();
    for (r, _) in &runs {
        info!("{}: {}", r.name, r.outcome);
    }
    let spreads = manifest
        .spread
        .iter()
        .map(|s| {
            let values: Option<Vec<f64>> = s
                .scenarios
                .iter()
                .map(|n| runs.iter().find(|(r, _)| &r.name == n).and_then(|(_, res)| res.as_ref()?.get(&s.key)))
                .collect();
            let value = values.and_then(|v| {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
                (mean > 0.0).then(|| (hi - lo) / mean)
            });
            SpreadReport {
                name: s.name.clone(),
                value,
                below: s.below,
            }
        })
        .collect();
    SuiteReport {
        scenarios: runs.into_iter().map(|(r, _)| r).collect(),
        spreads,
    }
}

/// `--out`, then `BEAMSTEER_OUT`, then the manifest's `output`, then `out`.
pub fn output_dir(flag: Option<PathBuf>, manifest: Option<&SuiteManifest>) -> PathBuf {
    flag.or_else(|| std::env::var_os("BEAMSTEER_OUT").map(PathBuf::from))
        .or_else(|| manifest.and_then(|m| m.output.as_ref().map(|o| m.base_dir.join(o))))
        .unwrap_or_else(|| PathBuf::from("out"))
}
