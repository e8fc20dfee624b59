//! Hessian-based uncertainty of the pose posterior.
//!
//! Viewing the window energy as the negative log posterior, its minimizer is
//! a MAP estimate and a local Gaussian fit has covariance equal to the
//! inverse Hessian. The uncertainty score is the trace of that covariance:
//! the sum of the reciprocals of the Hessian eigenvalues.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{EnergyWeights, EstimationWindow, WindowEnergy, FRAME_DIM};
use crate::geometry::Intrinsics;
use crate::optimize::{EnergyModel, SubsetEnergy};
use crate::skeleton::{BoneLengths, BoneTopology};

/// Controls for the Hessian computation and eigenvalue scoring.
#[derive(Debug, Clone)]
pub struct ScoreOpts {
    /// Central-difference step for the second derivatives.
    pub fd_step: f64,
    /// Eigenvalues below this floor are clamped before inversion, guarding
    /// near-singular directions.
    pub lambda_floor: f64,
    /// Restrict the Hessian to the future-pose block instead of all window
    /// variables.
    pub future_only: bool,
}

impl Default for ScoreOpts {
    fn default() -> Self {
        ScoreOpts {
            fd_step: 1e-4,
            lambda_floor: 1e-6,
            future_only: false,
        }
    }
}

/// Hessian of the energy, its eigenvalues, and the covariance-trace score.
#[derive(Debug, Clone)]
pub struct UncertaintyReport {
    pub hessian: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    /// `sum_i 1 / max(lambda_i, lambda_floor)`.
    pub score: f64,
}

/// Symmetric Hessian by central finite differences of the analytic gradient.
pub fn hessian_fd(model: &dyn EnergyModel, x: &[f64], step: f64) -> Result<DMatrix<f64>> {
    let n = model.dim();
    assert_eq!(x.len(), n);
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut g_plus = vec![0.0; n];
    let mut g_minus = vec![0.0; n];
    for j in 0..n {
        let x0 = x[j];
        xp[j] = x0 + step;
        model.gradient(&xp, &mut g_plus)?;
        xp[j] = x0 - step;
        model.gradient(&xp, &mut g_minus)?;
        xp[j] = x0;
        for i in 0..n {
            h[(i, j)] = (g_plus[i] - g_minus[i]) / (2.0 * step);
        }
    }
    // Exact symmetry by construction of the estimate.
    let ht = h.transpose();
    Ok((h + ht) * 0.5)
}

/// Covariance-trace score from the eigenvalues of the Hessian.
pub fn uncertainty_score(eigenvalues: &DVector<f64>, lambda_floor: f64) -> f64 {
    eigenvalues.iter().map(|&l| 1.0 / l.max(lambda_floor)).sum()
}

/// Hessian, eigenvalues, and score of an arbitrary energy at `x`.
pub fn uncertainty_report(
    model: &dyn EnergyModel,
    x: &[f64],
    opts: &ScoreOpts,
) -> Result<UncertaintyReport> {
    let hessian = hessian_fd(model, x, opts.fd_step)?;
    let eigenvalues = hessian.clone().symmetric_eigenvalues();
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::NumericalFailure(
            "eigendecomposition produced non-finite eigenvalues".into(),
        ));
    }
    let score = uncertainty_score(&eigenvalues, opts.lambda_floor);
    Ok(UncertaintyReport {
        hessian,
        eigenvalues,
        score,
    })
}

/// Uncertainty of the window posterior at its current configuration, with
/// whatever (real or synthetic) measurements the frames carry.
pub fn hessian(
    window: &EstimationWindow,
    weights: &EnergyWeights,
    calib: &BoneLengths,
    topo: &BoneTopology,
    k: &Intrinsics,
    opts: &ScoreOpts,
) -> Result<UncertaintyReport> {
    let model = WindowEnergy::new(window, weights, calib, topo, k);
    let x = window.poses_to_vec();
    if opts.future_only {
        let free: Vec<usize> = window
            .frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.observation.is_none())
            .flat_map(|(i, _)| i * FRAME_DIM..(i + 1) * FRAME_DIM)
            .collect();
        let sub = SubsetEnergy::new(&model, &x, free);
        let xf = sub.free_values();
        uncertainty_report(&sub, &xf, opts)
    } else {
        uncertainty_report(&model, &x, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct DiagonalQuadratic {
        weights: Vec<f64>,
    }

    impl EnergyModel for DiagonalQuadratic {
        fn dim(&self) -> usize {
            self.weights.len()
        }
        fn energy(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter().zip(&self.weights).map(|(x, w)| w * x * x).sum())
        }
        fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()> {
            for i in 0..x.len() {
                grad[i] = 2.0 * self.weights[i] * x[i];
            }
            Ok(())
        }
    }

    #[test]
    fn isotropic_quadratic_matches_closed_form() {
        // E = w |x|^2 over n variables: H = 2 w I, score = n / (2 w).
        let n = 7;
        let w = 0.8;
        let model = DiagonalQuadratic {
            weights: vec![w; n],
        };
        let x = vec![0.0; n];
        let report = uncertainty_report(&model, &x, &ScoreOpts::default()).unwrap();
        assert!((report.score - n as f64 / (2.0 * w)).abs() < 1e-8);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 2.0 * w } else { 0.0 };
                assert!((report.hessian[(i, j)] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn diagonal_quadratic_sums_per_axis_variances() {
        // Weights (0.5, 2): variances 1/(2*0.5) = 1 and 1/(2*2) = 0.25.
        let model = DiagonalQuadratic {
            weights: vec![0.5, 2.0],
        };
        let report = uncertainty_report(&model, &[0.3, -0.4], &ScoreOpts::default()).unwrap();
        assert!((report.score - 1.25).abs() < 1e-8, "score {}", report.score);
    }

    #[test]
    fn floor_guards_flat_directions() {
        let model = DiagonalQuadratic {
            weights: vec![1.0, 0.0],
        };
        let report = uncertainty_report(&model, &[0.0, 0.0], &ScoreOpts::default()).unwrap();
        assert!(report.score > 0.0 && report.score.is_finite());
        assert!((report.score - (0.5 + 1e6)).abs() / 1e6 < 1e-3);
    }
}
