//! Experiment configuration: construction, the key-value config file format,
//! and the manifest echo.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimator::EnergyWeights;
use crate::motion::{load_sequence_csv, synth_circle_run, synth_twirl_in_place, synth_walk, MotionSequence};
use crate::planner::PolicyKind;
use crate::sensing::{DEFAULT_SIGMA_2D, DEFAULT_SIGMA_3D};

/// How the camera is allowed to move between control cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The camera may jump to any candidate on the ring.
    Teleport,
    /// The next view is restricted to a fixed multi-camera rig.
    FixedCameras,
    /// A simulated drone tracks velocity commands.
    Flight,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Teleport => "teleport",
            Mode::FixedCameras => "fixed_cameras",
            Mode::Flight => "flight",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "teleport" => Ok(Mode::Teleport),
            "fixed_cameras" => Ok(Mode::FixedCameras),
            "flight" => Ok(Mode::Flight),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// The ground-truth motion driving a run.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceSource {
    Walk { speed: f64 },
    CircleRun { radius: f64, angular_speed: f64 },
    Twirl { angular_speed: f64 },
    Csv(PathBuf),
}

impl SequenceSource {
    pub fn kind(&self) -> &'static str {
        match self {
            SequenceSource::Walk { .. } => "walk",
            SequenceSource::CircleRun { .. } => "circle_run",
            SequenceSource::Twirl { .. } => "twirl",
            SequenceSource::Csv(_) => "csv",
        }
    }

    /// Builds (or loads) at least `n_frames` frames at `rate` Hz.
    pub fn build(&self, n_frames: usize, rate: f64) -> Result<MotionSequence> {
        match self {
            SequenceSource::Walk { speed } => Ok(synth_walk(n_frames, *speed, rate)),
            SequenceSource::CircleRun {
                radius,
                angular_speed,
            } => Ok(synth_circle_run(n_frames, *radius, *angular_speed, rate)),
            SequenceSource::Twirl { angular_speed } => {
                Ok(synth_twirl_in_place(n_frames, *angular_speed, rate))
            }
            SequenceSource::Csv(path) => {
                let seq = load_sequence_csv(path)?;
                if (seq.fps - rate).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "sequence '{}' is {} fps but the run rate is {} Hz",
                        seq.name, seq.fps, rate
                    )));
                }
                if seq.len() < n_frames {
                    return Err(Error::Config(format!(
                        "sequence '{}' has {} frames, need {}",
                        seq.name,
                        seq.len(),
                        n_frames
                    )));
                }
                Ok(seq)
            }
        }
    }
}

/// Full description of one experiment; echoed verbatim into the run manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub policy: PolicyKind,
    pub sequence: SequenceSource,
    pub frames: usize,
    pub rate_hz: f64,
    pub seed: u64,
    pub sigma_2d: f64,
    pub sigma_3d: f64,
    /// Multiplier corrupting the scale of the 3D detections.
    pub scale_corruption: f64,
    pub k_past: usize,
    pub horizon: usize,
    pub ring_radius: f64,
    pub ring_count: usize,
    pub ring_height: f64,
    pub altitude_min: f64,
    pub altitude_max: f64,
    /// Ablation switch: predict candidate trajectories with the fitted
    /// flight model (true) or with uniform momentum-free offsets (false).
    pub use_flight_model: bool,
    /// Write per-candidate scores and rollout errors each cycle.
    pub dump_candidates: bool,
    /// Visibility margin (pixels) when filtering candidate views.
    pub candidate_margin_px: f64,
    /// Visibility margin when taking actual measurements; infinite by
    /// default, matching the noisy-ground-truth protocol.
    pub measurement_margin_px: f64,
    /// Number of calibration views taken before the run.
    pub calib_views: usize,
    /// Starting ring slot (teleport/flight azimuth index, rig index).
    pub start_slot: usize,
    /// Score only the future-pose block of the Hessian.
    pub score_future_only: bool,
    pub recon_weights: EnergyWeights,
    pub decision_weights: EnergyWeights,
    /// Per-cycle optimizer caps.
    pub opt_max_iters: usize,
    pub opt_tol_g: f64,
}

impl ExperimentConfig {
    /// Mode-specific defaults: teleport and fixed-camera runs use a short
    /// window (2 past frames, 1 future), flight runs a longer one (6 past,
    /// 3 future).
    pub fn new(mode: Mode) -> Self {
        let (k_past, horizon) = match mode {
            Mode::Teleport | Mode::FixedCameras => (2, 1),
            Mode::Flight => (6, 3),
        };
        ExperimentConfig {
            mode,
            policy: PolicyKind::Active,
            sequence: SequenceSource::Walk { speed: 1.0 },
            frames: 120,
            rate_hz: 5.0,
            seed: 0,
            sigma_2d: DEFAULT_SIGMA_2D,
            sigma_3d: DEFAULT_SIGMA_3D,
            scale_corruption: 1.0,
            k_past,
            horizon,
            ring_radius: 7.0,
            ring_count: 18,
            ring_height: 1.8,
            altitude_min: 0.25,
            altitude_max: 3.5,
            use_flight_model: true,
            dump_candidates: false,
            candidate_margin_px: 0.0,
            measurement_margin_px: f64::INFINITY,
            calib_views: 100,
            start_slot: 0,
            score_future_only: false,
            recon_weights: EnergyWeights::reconstruction(),
            decision_weights: EnergyWeights::decision(),
            opt_max_iters: 500,
            opt_tol_g: 1e-6,
        }
    }

    pub fn teleport() -> Self {
        Self::new(Mode::Teleport)
    }

    pub fn flight() -> Self {
        Self::new(Mode::Flight)
    }

    pub fn fixed_cameras() -> Self {
        Self::new(Mode::FixedCameras)
    }

    /// Parses a `key = value` config file ('#' starts a comment). `mode` and
    /// `sequence` are applied first, so their defaults can be overridden by
    /// later keys regardless of file order.
    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    idx + 1
                )));
            };
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mode = pairs
            .iter()
            .find(|(k, _)| k == "mode")
            .map(|(_, v)| Mode::parse(v))
            .transpose()?
            .unwrap_or(Mode::Teleport);
        let mut config = ExperimentConfig::new(mode);
        for (key, value) in pairs.iter().filter(|(k, _)| k == "sequence") {
            config.apply_kv(key, value)?;
        }
        for (key, value) in &pairs {
            if key == "mode" || key == "sequence" {
                continue;
            }
            config.apply_kv(key, value)?;
        }
        Ok(config)
    }

    /// Applies one configuration key. Unknown keys are errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn f64_of(key: &str, v: &str) -> Result<f64> {
            if v == "inf" {
                return Ok(f64::INFINITY);
            }
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: bad number '{v}'")))
        }
        fn usize_of(key: &str, v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: bad integer '{v}'")))
        }
        fn bool_of(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(Error::Config(format!("{key}: bad bool '{v}'"))),
            }
        }
        match key {
            "mode" => {
                self.mode = Mode::parse(value)?;
                // Window sizes follow the mode unless overridden by a later
                // explicit key (both parse paths apply `mode` first).
                let (k_past, horizon) = match self.mode {
                    Mode::Teleport | Mode::FixedCameras => (2, 1),
                    Mode::Flight => (6, 3),
                };
                self.k_past = k_past;
                self.horizon = horizon;
            }
            "policy" => self.policy = PolicyKind::parse(value)?,
            "sequence" => {
                self.sequence = match value {
                    "walk" => SequenceSource::Walk { speed: 1.0 },
                    "circle_run" => SequenceSource::CircleRun {
                        radius: 2.5,
                        angular_speed: 0.9,
                    },
                    "twirl" => SequenceSource::Twirl { angular_speed: 2.0 },
                    path if path.ends_with(".csv") => SequenceSource::Csv(PathBuf::from(path)),
                    other => {
                        return Err(Error::Config(format!("unknown sequence '{other}'")))
                    }
                }
            }
            "walk_speed" => match &mut self.sequence {
                SequenceSource::Walk { speed } => *speed = f64_of(key, value)?,
                _ => return Err(Error::Config("walk_speed needs sequence = walk".into())),
            },
            "circle_radius" => match &mut self.sequence {
                SequenceSource::CircleRun { radius, .. } => *radius = f64_of(key, value)?,
                _ => return Err(Error::Config("circle_radius needs sequence = circle_run".into())),
            },
            "circle_angular_speed" => match &mut self.sequence {
                SequenceSource::CircleRun { angular_speed, .. } => {
                    *angular_speed = f64_of(key, value)?
                }
                _ => {
                    return Err(Error::Config(
                        "circle_angular_speed needs sequence = circle_run".into(),
                    ))
                }
            },
            "twirl_angular_speed" => match &mut self.sequence {
                SequenceSource::Twirl { angular_speed } => *angular_speed = f64_of(key, value)?,
                _ => {
                    return Err(Error::Config(
                        "twirl_angular_speed needs sequence = twirl".into(),
                    ))
                }
            },
            "frames" => self.frames = usize_of(key, value)?,
            "rate_hz" => self.rate_hz = f64_of(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("seed: bad integer '{value}'")))?
            }
            "sigma_2d" => self.sigma_2d = f64_of(key, value)?,
            "sigma_3d" => self.sigma_3d = f64_of(key, value)?,
            "scale_corruption" => self.scale_corruption = f64_of(key, value)?,
            "k_past" => self.k_past = usize_of(key, value)?,
            "horizon" => self.horizon = usize_of(key, value)?,
            "ring_radius" => self.ring_radius = f64_of(key, value)?,
            "ring_count" => self.ring_count = usize_of(key, value)?,
            "ring_height" => self.ring_height = f64_of(key, value)?,
            "altitude_min" => self.altitude_min = f64_of(key, value)?,
            "altitude_max" => self.altitude_max = f64_of(key, value)?,
            "use_flight_model" => self.use_flight_model = bool_of(key, value)?,
            "dump_candidates" => self.dump_candidates = bool_of(key, value)?,
            "candidate_margin_px" => self.candidate_margin_px = f64_of(key, value)?,
            "measurement_margin_px" => self.measurement_margin_px = f64_of(key, value)?,
            "calib_views" => self.calib_views = usize_of(key, value)?,
            "start_slot" => self.start_slot = usize_of(key, value)?,
            "score_future_only" => self.score_future_only = bool_of(key, value)?,
            "w_recon_projection" => self.recon_weights.projection = f64_of(key, value)?,
            "w_recon_smoothness" => self.recon_weights.smoothness = f64_of(key, value)?,
            "w_recon_lift" => self.recon_weights.lift = f64_of(key, value)?,
            "w_recon_bone" => self.recon_weights.bone = f64_of(key, value)?,
            "opt_max_iters" => self.opt_max_iters = usize_of(key, value)?,
            "opt_tol_g" => self.opt_tol_g = f64_of(key, value)?,
            "w_decision_projection" => self.decision_weights.projection = f64_of(key, value)?,
            "w_decision_smoothness" => self.decision_weights.smoothness = f64_of(key, value)?,
            "w_decision_lift" => self.decision_weights.lift = f64_of(key, value)?,
            "w_decision_bone" => self.decision_weights.bone = f64_of(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// All configuration as sorted key-value pairs; the manifest contents.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let fmt = |v: f64| {
            if v.is_infinite() {
                "inf".to_string()
            } else {
                format!("{v}")
            }
        };
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        kv.insert("mode".into(), self.mode.as_str().into());
        kv.insert("policy".into(), self.policy.as_str().into());
        match &self.sequence {
            SequenceSource::Walk { speed } => {
                kv.insert("sequence".into(), "walk".into());
                kv.insert("walk_speed".into(), fmt(*speed));
            }
            SequenceSource::CircleRun {
                radius,
                angular_speed,
            } => {
                kv.insert("sequence".into(), "circle_run".into());
                kv.insert("circle_radius".into(), fmt(*radius));
                kv.insert("circle_angular_speed".into(), fmt(*angular_speed));
            }
            SequenceSource::Twirl { angular_speed } => {
                kv.insert("sequence".into(), "twirl".into());
                kv.insert("twirl_angular_speed".into(), fmt(*angular_speed));
            }
            SequenceSource::Csv(path) => {
                kv.insert("sequence".into(), path.display().to_string());
            }
        }
        kv.insert("frames".into(), format!("{}", self.frames));
        kv.insert("rate_hz".into(), fmt(self.rate_hz));
        kv.insert("seed".into(), format!("{}", self.seed));
        kv.insert("sigma_2d".into(), fmt(self.sigma_2d));
        kv.insert("sigma_3d".into(), fmt(self.sigma_3d));
        kv.insert("scale_corruption".into(), fmt(self.scale_corruption));
        kv.insert("k_past".into(), format!("{}", self.k_past));
        kv.insert("horizon".into(), format!("{}", self.horizon));
        kv.insert("ring_radius".into(), fmt(self.ring_radius));
        kv.insert("ring_count".into(), format!("{}", self.ring_count));
        kv.insert("ring_height".into(), fmt(self.ring_height));
        kv.insert("altitude_min".into(), fmt(self.altitude_min));
        kv.insert("altitude_max".into(), fmt(self.altitude_max));
        kv.insert("use_flight_model".into(), format!("{}", self.use_flight_model));
        kv.insert("dump_candidates".into(), format!("{}", self.dump_candidates));
        kv.insert("candidate_margin_px".into(), fmt(self.candidate_margin_px));
        kv.insert(
            "measurement_margin_px".into(),
            fmt(self.measurement_margin_px),
        );
        kv.insert("calib_views".into(), format!("{}", self.calib_views));
        kv.insert("start_slot".into(), format!("{}", self.start_slot));
        kv.insert("score_future_only".into(), format!("{}", self.score_future_only));
        kv.insert("opt_max_iters".into(), format!("{}", self.opt_max_iters));
        kv.insert("opt_tol_g".into(), fmt(self.opt_tol_g));
        kv.insert("w_recon_projection".into(), fmt(self.recon_weights.projection));
        kv.insert("w_recon_smoothness".into(), fmt(self.recon_weights.smoothness));
        kv.insert("w_recon_lift".into(), fmt(self.recon_weights.lift));
        kv.insert("w_recon_bone".into(), fmt(self.recon_weights.bone));
        kv.insert(
            "w_decision_projection".into(),
            fmt(self.decision_weights.projection),
        );
        kv.insert(
            "w_decision_smoothness".into(),
            fmt(self.decision_weights.smoothness),
        );
        kv.insert("w_decision_lift".into(), fmt(self.decision_weights.lift));
        kv.insert("w_decision_bone".into(), fmt(self.decision_weights.bone));
        kv.into_iter().collect()
    }

    /// Basic sanity checks before a run.
    pub fn validate(&self) -> Result<()> {
        if self.frames <= self.k_past + 1 {
            return Err(Error::Config(format!(
                "frames ({}) must exceed the window warm-up ({})",
                self.frames,
                self.k_past + 1
            )));
        }
        if self.k_past == 0 || self.horizon == 0 {
            return Err(Error::Config("k_past and horizon must be >= 1".into()));
        }
        if self.ring_radius <= 0.0 || self.ring_count == 0 {
            return Err(Error::Config("ring_radius and ring_count must be positive".into()));
        }
        if self.rate_hz <= 0.0 {
            return Err(Error::Config("rate_hz must be positive".into()));
        }
        if self.altitude_min >= self.altitude_max {
            return Err(Error::Config("altitude band is empty".into()));
        }
        Ok(())
    }
}
