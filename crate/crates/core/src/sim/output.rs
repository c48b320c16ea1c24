//! Output files of a run.

use std::io::Write;
use std::path::Path;

use crate::sim::metrics::ExecutedTrajectories;
use crate::sim::runner::SimOutput;
use crate::{Error, Result};

pub const TRAJECTORY_COLUMNS: [&str; 16] = [
    "time",
    "uav_id",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "vcx",
    "vcy",
    "vcz",
    "ux",
    "uy",
    "uz",
    "gimbal_pitch",
    "gimbal_yaw",
];

fn f(x: f64) -> String {
    format!("{x:.6}")
}

/// One row per UAV and step, then the target rows (`uav_id = target`, command
/// and gimbal columns empty).
pub fn write_trajectories(exec: &ExecutedTrajectories, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_COLUMNS)?;
    for track in &exec.uavs {
        for (i, s) in track.samples.iter().enumerate() {
            let mut row = vec![format!("{:.3}", exec.time(i)), track.id.clone()];
            for v in [&s.position, &s.velocity, &s.velocity_cmd, &s.accel_cmd] {
                row.extend(v.iter().map(|x| f(*x)));
            }
            row.push(f(s.gimbal_pitch));
            row.push(f(s.gimbal_yaw));
            out.write_record(&row)?;
        }
    }
    for (i, (p, v)) in exec.target.iter().enumerate() {
        let mut row = vec![format!("{:.3}", exec.time(i)), "target".to_string()];
        row.extend(p.iter().chain(v.iter()).map(|x| f(*x)));
        row.extend(std::iter::repeat_n(String::new(), 8));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `trajectories.csv`, `metrics.json` and `events.csv` into `dir`.
pub fn write_outputs(output: &SimOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_trajectories(
        &output.trajectories,
        std::fs::File::create(dir.join("trajectories.csv"))?,
    )?;
    let json = serde_json::to_string_pretty(&output.metrics).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("metrics.json"), json + "\n")?;
    output.events.write_csv_file(&dir.join("events.csv"))
}
