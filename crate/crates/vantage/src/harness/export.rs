//! Run artifacts: `frames.csv`, `candidates.csv`, `summary.csv`, and the
//! `manifest` config echo. All numbers use shortest round-trip float
//! formatting, so identical runs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{RunResult, SweepRow};
use crate::planner::PolicyKind;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes `frames.csv`, `manifest`, and (when candidate diagnostics were
/// collected) `candidates.csv` into `dir`.
pub fn export_run(result: &RunResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();

    let mut frames = String::from(
        "frame,mid_frame,candidate,score,mpjpe_mid,mpjpe_cur,cam_x,cam_y,cam_z,cam_azimuth,cam_elevation\n",
    );
    for r in &result.records {
        frames.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.frame,
            r.mid_frame,
            r.candidate,
            opt(r.score),
            r.mpjpe_mid,
            r.mpjpe_cur,
            r.cam_position.x,
            r.cam_position.y,
            r.cam_position.z,
            r.cam_azimuth,
            r.cam_elevation,
        ));
    }
    write_file(&dir.join("frames.csv"), &frames)?;

    if !result.candidate_records.is_empty() {
        let mut cands =
            String::from("frame,candidate,azimuth,elevation,visible,score,realized_mpjpe\n");
        for c in &result.candidate_records {
            cands.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.frame,
                c.candidate,
                c.azimuth,
                c.elevation,
                c.visible,
                opt(c.score),
                opt(c.realized_mpjpe),
            ));
        }
        write_file(&dir.join("candidates.csv"), &cands)?;
    }

    let mut manifest = String::new();
    for (key, value) in &result.manifest {
        manifest.push_str(&format!("{key} = {value}\n"));
    }
    write_file(&dir.join("manifest"), &manifest)
}

/// Writes the policy summary table.
pub fn export_summary(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("policy,mean_mpjpe,std_mpjpe,runs\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.policy,
            row.mean,
            row.std,
            row.per_seed.len()
        ));
    }
    write_file(path.as_ref(), &out)
}

/// Reads back a summary written by [`export_summary`].
pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<(PolicyKind, f64, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("expected 4 columns, got {}", cols.len()),
            });
        }
        let parse = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("bad number '{v}'"),
            })
        };
        rows.push((PolicyKind::parse(cols[0])?, parse(cols[1])?, parse(cols[2])?));
    }
    Ok(rows)
}
