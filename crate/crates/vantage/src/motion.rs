//! Ground-truth subject motion: CSV ingestion plus synthetic generators that
//! stand in for recorded mocap clips.
//!
//! CSV format (UTF-8, LF): header `frame,fps,j0_x,j0_y,j0_z,...,j14_z`, one
//! row per frame, floating point in decimal. Joint order is the crate
//! convention documented in [`crate::skeleton`].

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::skeleton::{compute_bone_lengths, joint, BoneTopology, Pose, JOINT_COUNT};

/// An ordered sequence of ground-truth poses at a fixed frame rate.
#[derive(Debug, Clone)]
pub struct MotionSequence {
    pub frames: Vec<Pose>,
    pub fps: f64,
    pub name: String,
}

impl MotionSequence {
    /// Builds a sequence, checking that bone lengths stay constant across
    /// frames within `max_drift` meters.
    pub fn new(frames: Vec<Pose>, fps: f64, name: impl Into<String>, max_drift: f64) -> Result<Self> {
        let name = name.into();
        if frames.len() < 2 {
            return Err(Error::Config(format!(
                "sequence '{name}' needs >= 2 frames, got {}",
                frames.len()
            )));
        }
        let topo = BoneTopology::human();
        let reference = compute_bone_lengths(&frames[0], &topo);
        for (f, pose) in frames.iter().enumerate().skip(1) {
            let lengths = compute_bone_lengths(pose, &topo);
            for (b, (a, r)) in lengths.lengths.iter().zip(&reference.lengths).enumerate() {
                let drift = (a - r).abs();
                if drift > max_drift {
                    return Err(Error::Topology {
                        bone: b,
                        frame: f,
                        drift,
                        max: max_drift,
                    });
                }
            }
        }
        Ok(MotionSequence { frames, fps, name })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Expected CSV column count: frame, fps, then 45 coordinates.
const CSV_COLUMNS: usize = 2 + 3 * JOINT_COUNT;

fn csv_header() -> String {
    let mut header = String::from("frame,fps");
    for j in 0..JOINT_COUNT {
        header.push_str(&format!(",j{j}_x,j{j}_y,j{j}_z"));
    }
    header
}

/// Writes a sequence in the documented CSV format. Coordinates are printed
/// with Rust's shortest round-trip float formatting, so a save/load round
/// trip is bit exact.
pub fn save_sequence_csv(path: impl AsRef<Path>, seq: &MotionSequence) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&csv_header());
    out.push('\n');
    for (i, pose) in seq.frames.iter().enumerate() {
        out.push_str(&format!("{i},{}", seq.fps));
        for joint in pose.joints.iter() {
            out.push_str(&format!(",{},{},{}", joint.x, joint.y, joint.z));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a sequence from the documented CSV format. Fails on malformed rows
/// and on bone-length drift above 1e-3 m.
pub fn load_sequence_csv(path: impl AsRef<Path>) -> Result<MotionSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let display = path.display().to_string();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: display.clone(),
        line,
        msg,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let header_cols: Vec<&str> = header.split(',').collect();
    if header_cols.len() != CSV_COLUMNS || header_cols[0] != "frame" || header_cols[1] != "fps" {
        return Err(parse_err(
            1,
            format!(
                "expected header '{}' ({} columns), got {} columns",
                csv_header(),
                CSV_COLUMNS,
                header_cols.len()
            ),
        ));
    }

    let mut frames = Vec::new();
    let mut fps: Option<f64> = None;
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != CSV_COLUMNS {
            return Err(parse_err(
                lineno,
                format!("expected {CSV_COLUMNS} columns, got {}", cols.len()),
            ));
        }
        let row_fps: f64 = cols[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad fps value '{}'", cols[1])))?;
        match fps {
            None => fps = Some(row_fps),
            Some(f) if f != row_fps => {
                return Err(parse_err(
                    lineno,
                    format!("inconsistent fps: {f} vs {row_fps}"),
                ))
            }
            _ => {}
        }
        let mut joints = [Vector3::zeros(); JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            let mut coord = [0.0f64; 3];
            for (axis, c) in coord.iter_mut().enumerate() {
                let raw = cols[2 + 3 * j + axis];
                *c = raw
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad coordinate '{raw}'")))?;
                if !c.is_finite() {
                    return Err(parse_err(lineno, format!("non-finite coordinate '{raw}'")));
                }
            }
            joints[j] = Vector3::new(coord[0], coord[1], coord[2]);
        }
        frames.push(Pose::new(joints));
    }

    let fps = fps.ok_or_else(|| parse_err(2, "no data rows".into()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    MotionSequence::new(frames, fps, name, 1e-3)
}

/// Articulation of the template: legs and arms swing rigidly about their hip
/// and shoulder pivots, so bone lengths are exactly preserved.
fn articulated_template(phase: f64, leg_amp: f64, arm_amp: f64) -> Pose {
    let mut pose = Pose::template();
    let swing = |pose: &mut Pose, pivot: usize, moved: [usize; 2], angle: f64| {
        let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), angle);
        let p = pose.joints[pivot];
        for m in moved {
            pose.joints[m] = rot * (pose.joints[m] - p) + p;
        }
    };
    let leg = leg_amp * phase.sin();
    let arm = arm_amp * phase.sin();
    swing(&mut pose, joint::L_HIP, [joint::L_KNEE, joint::L_ANKLE], leg);
    swing(&mut pose, joint::R_HIP, [joint::R_KNEE, joint::R_ANKLE], -leg);
    swing(&mut pose, joint::L_SHOULDER, [joint::L_ELBOW, joint::L_WRIST], -arm);
    swing(&mut pose, joint::R_SHOULDER, [joint::R_ELBOW, joint::R_WRIST], arm);
    pose
}

/// Straight-line walk along +x at `speed` m/s.
pub fn synth_walk(n_frames: usize, speed: f64, rate: f64) -> MotionSequence {
    assert!(n_frames >= 2, "need at least 2 frames");
    assert!(rate > 0.0);
    let step_freq = (speed.abs() / 0.7).clamp(0.25, 3.0);
    let frames = (0..n_frames)
        .map(|i| {
            let t = i as f64 / rate;
            let pose = articulated_template(2.0 * std::f64::consts::PI * step_freq * t, 0.35, 0.25);
            pose.translated(&Vector3::new(speed * t, 0.0, 0.0))
        })
        .collect();
    MotionSequence::new(frames, rate, "walk", 1e-6).expect("generator preserves bone lengths")
}

/// Run around a circle of `radius` meters centered above the origin, at
/// `angular_speed` rad/s (positive = counter-clockwise seen from above).
pub fn synth_circle_run(n_frames: usize, radius: f64, angular_speed: f64, rate: f64) -> MotionSequence {
    assert!(n_frames >= 2, "need at least 2 frames");
    assert!(rate > 0.0 && radius > 0.0);
    let step_freq = (angular_speed.abs() * radius / 0.9).clamp(0.5, 4.0);
    let frames = (0..n_frames)
        .map(|i| {
            let t = i as f64 / rate;
            let theta = angular_speed * t;
            let pose = articulated_template(2.0 * std::f64::consts::PI * step_freq * t, 0.5, 0.4);
            let hip = pose.hip();
            // Face the direction of travel, then place the hip on the circle.
            let yaw = theta + angular_speed.signum() * std::f64::consts::FRAC_PI_2;
            let target = Vector3::new(radius * theta.cos(), radius * theta.sin(), hip.z);
            pose.yawed_about(&hip, yaw).translated(&(target - hip))
        })
        .collect();
    MotionSequence::new(frames, rate, "circle_run", 1e-6).expect("generator preserves bone lengths")
}

/// Spin in place about the vertical axis through the hip at `angular_speed`
/// rad/s, arms swinging.
pub fn synth_twirl_in_place(n_frames: usize, angular_speed: f64, rate: f64) -> MotionSequence {
    assert!(n_frames >= 2, "need at least 2 frames");
    assert!(rate > 0.0);
    let frames = (0..n_frames)
        .map(|i| {
            let t = i as f64 / rate;
            let pose = articulated_template(angular_speed * t, 0.15, 0.6);
            let hip = pose.hip();
            pose.yawed_about(&hip, angular_speed * t)
        })
        .collect();
    MotionSequence::new(frames, rate, "twirl", 1e-6).expect("generator preserves bone lengths")
}
