//! Plot-ready run artifacts. Everything except `metadata.json` is a pure
//! function of the plan, so repeated runs give byte-identical files.

use std::fs;
use std::io;
use std::path::Path;

use mppi_ipddp::dynamics::Trajectory;
use mppi_ipddp::export::{corridors_csv, trajectory_csv};
use mppi_ipddp::planner::{IterationTrace, PlanResult};
use serde_json::{json, Value};

fn rows(traj: &Trajectory) -> (Value, Value) {
    let states: Vec<Vec<f64>> = traj.states.iter().map(|x| x.iter().copied().collect()).collect();
    let controls: Vec<Vec<f64>> = traj.controls.iter().map(|u| u.iter().copied().collect()).collect();
    (json!(states), json!(controls))
}

fn trace_record(tr: &IterationTrace) -> Value {
    let mut rec = serde_json::to_value(tr).expect("trace serializes");
    let (coarse_x, coarse_u) = rows(&tr.coarse);
    let (states, controls) = rows(&tr.smoothed);
    let extra = json!({
        "coarse_states": coarse_x,
        "coarse_controls": coarse_u,
        "states": states,
        "controls": controls,
        "corridor_centers": tr.corridors.centers,
        "corridor_radii": tr.corridors.radii,
    });
    if let (Value::Object(rec), Value::Object(extra)) = (&mut rec, extra) {
        rec.extend(extra);
    }
    rec
}

/// One JSON object per outer iteration, timings excluded.
pub fn trace_jsonl(result: &PlanResult) -> String {
    result
        .traces
        .iter()
        .map(|tr| trace_record(tr).to_string() + "\n")
        .collect()
}

pub fn metadata(result: &PlanResult, threads: usize, total_seconds: f64) -> Value {
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "threads": threads,
        "total_seconds": total_seconds,
        "iteration_seconds": result.traces.iter().map(|t| t.wall_time).collect::<Vec<_>>(),
    })
}

pub fn write_all(
    dir: &Path,
    result: &PlanResult,
    with_trace: bool,
    threads: usize,
    total_seconds: f64,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(&result.trajectory))?;
    fs::write(dir.join("corridors.csv"), corridors_csv(&result.corridors))?;
    if with_trace {
        fs::write(dir.join("trace.jsonl"), trace_jsonl(result))?;
    }
    let meta = metadata(result, threads, total_seconds);
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")
}
