//! Machine-readable outputs: the left/right-marked trajectory CSV and the
//! JSON reports. Floats are written in shortest round-trip decimal form, so
//! identical runs produce byte-identical files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use serde::Serialize;

use orps_core::{ImpulseSchedule, JumpRecord, PiecewiseTrajectory, Segment};

/// Write `trajectory.csv` with columns `t,side,y_1..y_n`; impulse times
/// appear twice with side markers L and R.
pub fn write_trajectory_csv(path: &Path, traj: &PiecewiseTrajectory) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    out.push_str(",side");
    for i in 1..=traj.dim {
        out.push_str(&format!(",y_{i}"));
    }
    out.push('\n');
    for (si, seg) in traj.segments.iter().enumerate() {
        for (ti, (t, v)) in seg.times.iter().zip(&seg.values).enumerate() {
            let side = if ti == 0 && si > 0 {
                "R"
            } else if ti + 1 == seg.times.len() && si + 1 < traj.segments.len() {
                "L"
            } else {
                "-"
            };
            out.push_str(&format!("{t}"));
            out.push(',');
            out.push_str(side);
            for x in v.iter() {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Read a trajectory CSV back; jump indices are resolved against the
/// schedule's extended impulse times.
pub fn read_trajectory_csv(path: &Path, schedule: &ImpulseSchedule) -> Result<PiecewiseTrajectory> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty trajectory file")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "t" || cols[1] != "side" {
        bail!("trajectory schema mismatch: expected header t,side,y_1..., got {header:?}");
    }
    let dim = cols.len() - 2;
    for (i, c) in cols[2..].iter().enumerate() {
        if *c != format!("y_{}", i + 1) {
            bail!("trajectory schema mismatch in column {c:?}");
        }
    }

    let mut segments: Vec<Segment> = Vec::new();
    let mut jumps: Vec<JumpRecord> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<DVector<f64>> = Vec::new();
    let mut pending_left: Option<(f64, DVector<f64>)> = None;

    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            bail!("trajectory row {} has {} fields, expected {}", lineno + 2, fields.len(), dim + 2);
        }
        let t: f64 = fields[0]
            .parse()
            .with_context(|| format!("bad time in row {}", lineno + 2))?;
        let side = fields[1];
        let v = DVector::from_iterator(
            dim,
            fields[2..]
                .iter()
                .map(|x| x.parse::<f64>().unwrap_or(f64::NAN)),
        );
        if v.iter().any(|x| !x.is_finite()) {
            bail!("non-finite state in row {}", lineno + 2);
        }
        match side {
            "-" => {
                if let Some((lt, _)) = pending_left.take() {
                    bail!("missing R row after L at t = {lt}");
                }
                times.push(t);
                values.push(v);
            }
            "L" => {
                times.push(t);
                values.push(v.clone());
                pending_left = Some((t, v));
            }
            "R" => {
                let (lt, left) = pending_left
                    .take()
                    .with_context(|| format!("R without matching L at t = {t}"))?;
                if (lt - t).abs() > 1e-12 * (1.0 + t.abs()) {
                    bail!("mismatched L/R pair at t = {lt} vs {t}");
                }
                // close the running segment and start a new one
                let start = times[0];
                segments.push(Segment::plain(start, t, times.clone(), values.clone()));
                let impulse_index = resolve_impulse(schedule, t)?;
                jumps.push(JumpRecord {
                    time: t,
                    impulse_index,
                    left,
                    right: v.clone(),
                });
                times = vec![t];
                values = vec![v];
            }
            other => bail!("unknown side marker {other:?} in row {}", lineno + 2),
        }
    }
    if times.is_empty() {
        bail!("trajectory file has no data rows");
    }
    let start = times[0];
    let end = *times.last().unwrap();
    segments.push(Segment::plain(start, end, times, values));
    Ok(PiecewiseTrajectory {
        dim,
        segments,
        jumps,
    })
}

fn resolve_impulse(schedule: &ImpulseSchedule, t: f64) -> Result<usize> {
    let m = schedule.len();
    if m == 0 {
        bail!("trajectory has a jump at t = {t} but the schedule has no impulses");
    }
    // jumps can only occur at extended impulse times
    for k in 0..(m * 4) {
        let tau = schedule.tau_ext(k);
        if (tau - t).abs() <= 1e-9 * (1.0 + t.abs()) {
            return Ok(k);
        }
    }
    bail!("jump at t = {t} does not match any impulse time")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
