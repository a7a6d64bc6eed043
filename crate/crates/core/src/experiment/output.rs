use std::fmt::Write as _;
use std::path::Path;

use super::result::ExperimentResult;
use crate::error::{Result, SaeError};
use crate::io_util::write_atomic;
use crate::metrics::reliability_csv;

pub const ROUNDS_CSV: &str = "rounds.csv";
pub const SELECTIONS_CSV: &str = "selections.csv";
pub const RELIABILITY_CSV: &str = "reliability.csv";
pub const PROBE_RELIABILITY_CSV: &str = "reliability_probe.csv";
pub const RESULT_JSON: &str = "result.json";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn rounds_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("seed,round,n_labeled,accuracy,nll,ece\n");
    for run in &result.seeds {
        for p in &run.trajectory.points {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6}",
                run.seed, p.round, p.n_labeled, p.accuracy, p.nll, p.ece
            );
        }
    }
    out
}

/// Evidential columns are empty for baselines and warm-start rows.
pub fn selections_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("seed,round,index,score,vacuity,dissonance,w_v,w_d\n");
    for run in &result.seeds {
        for r in &run.selections {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{},{},{}",
                run.seed,
                r.round,
                r.index,
                r.score,
                opt(r.vacuity),
                opt(r.dissonance),
                opt(r.w_v),
                opt(r.w_d)
            );
        }
    }
    out
}

/// Writes the CSV artifacts and `result.json` into `dir`, each atomically.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(ROUNDS_CSV), rounds_csv(result).as_bytes())?;
    write_atomic(&dir.join(SELECTIONS_CSV), selections_csv(result).as_bytes())?;
    write_atomic(
        &dir.join(RELIABILITY_CSV),
        reliability_csv(&result.final_calibration.bins).as_bytes(),
    )?;
    if let Some(probe) = &result.probe_final_calibration {
        write_atomic(&dir.join(PROBE_RELIABILITY_CSV), reliability_csv(&probe.bins).as_bytes())?;
    }
    let mut json = serde_json::to_string_pretty(result)?;
    json.push('\n');
    write_atomic(&dir.join(RESULT_JSON), json.as_bytes())
}

pub fn read_result(path: &Path) -> Result<ExperimentResult> {
    let file = if path.is_dir() { path.join(RESULT_JSON) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| SaeError::io(&file, e))?;
    serde_json::from_str(&text).map_err(|e| SaeError::Load {
        file,
        message: e.to_string(),
    })
}
