//! Viewpoint selection policies: the active planner plus the predefined
//! baselines it is evaluated against. All policies choose among the same
//! candidate set; only the selection rule differs.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::planner::CandidateView;

/// Which selection rule drives the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Hessian-based uncertainty minimization.
    Active,
    /// Uniformly random among visible candidates.
    Random,
    /// Orbit the subject clockwise (seen from above).
    ConstantRotationCw,
    /// Orbit the subject counter-clockwise.
    ConstantRotationCcw,
    /// Hold the initial subject-relative bearing.
    ConstantAngle,
    /// Exhaustive rollout with the true next-frame measurement; picks the
    /// candidate with the lowest realized error.
    Oracle,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Active => "active",
            PolicyKind::Random => "random",
            PolicyKind::ConstantRotationCw => "constant_rotation_cw",
            PolicyKind::ConstantRotationCcw => "constant_rotation_ccw",
            PolicyKind::ConstantAngle => "constant_angle",
            PolicyKind::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(PolicyKind::Active),
            "random" => Ok(PolicyKind::Random),
            "constant_rotation_cw" | "constant_rotation" => Ok(PolicyKind::ConstantRotationCw),
            "constant_rotation_ccw" => Ok(PolicyKind::ConstantRotationCcw),
            "constant_angle" => Ok(PolicyKind::ConstantAngle),
            "oracle" => Ok(PolicyKind::Oracle),
            other => Err(Error::Config(format!("unknown policy '{other}'"))),
        }
    }

    pub fn all() -> [PolicyKind; 6] {
        [
            PolicyKind::Active,
            PolicyKind::Random,
            PolicyKind::ConstantRotationCw,
            PolicyKind::ConstantRotationCcw,
            PolicyKind::ConstantAngle,
            PolicyKind::Oracle,
        ]
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn visible_indices(candidates: &[CandidateView]) -> Vec<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.visible)
        .map(|(i, _)| i)
        .collect()
}

/// Uniformly random among visible candidates, from the run's policy stream.
pub fn select_random(candidates: &[CandidateView], rng: &mut ChaCha8Rng) -> Result<usize> {
    let visible = visible_indices(candidates);
    if visible.is_empty() {
        return Err(Error::NoVisibleCandidate);
    }
    Ok(visible[rng.gen_range(0..visible.len())])
}

/// Candidate whose id equals `slot`, or failing visibility the visible
/// candidate with the smallest cyclic id distance to it.
pub fn select_slot(candidates: &[CandidateView], slot: usize, count: usize) -> Result<usize> {
    let visible = visible_indices(candidates);
    if visible.is_empty() {
        return Err(Error::NoVisibleCandidate);
    }
    let dist = |id: usize| {
        let d = (id as i64 - slot as i64).rem_euclid(count as i64);
        d.min(count as i64 - d)
    };
    Ok(*visible
        .iter()
        .min_by_key(|&&i| (dist(candidates[i].id), candidates[i].id))
        .unwrap())
}

/// Visible candidate whose first camera's bearing from `subject` is closest
/// to `bearing` (a unit vector captured when the policy engaged).
pub fn select_nearest_bearing(
    candidates: &[CandidateView],
    subject: &Vector3<f64>,
    bearing: &Vector3<f64>,
) -> Result<usize> {
    let visible = visible_indices(candidates);
    if visible.is_empty() {
        return Err(Error::NoVisibleCandidate);
    }
    let mut best: Option<(usize, f64)> = None;
    for &i in &visible {
        let d = candidates[i].cameras[0].position - subject;
        if d.norm() < 1e-9 {
            continue;
        }
        let cos = (d / d.norm()).dot(bearing);
        if best.map_or(true, |(_, c)| cos > c) {
            best = Some((i, cos));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoVisibleCandidate)
}

/// Candidate with the lowest realized rollout error (the oracle baseline).
/// `realized` holds, per candidate, the next-frame error of actually moving
/// there; `None` marks candidates that were not rolled out.
pub fn select_oracle(candidates: &[CandidateView], realized: &[Option<f64>]) -> Result<usize> {
    assert_eq!(candidates.len(), realized.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (cand, err)) in candidates.iter().zip(realized).enumerate() {
        if !cand.visible {
            continue;
        }
        let Some(err) = err else { continue };
        if best.map_or(true, |(_, e)| *err < e) {
            best = Some((i, *err));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoVisibleCandidate)
}
