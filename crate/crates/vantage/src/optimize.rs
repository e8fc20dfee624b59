//! First-order descent with backtracking line search, over a generic energy.
//!
//! Everything that gets minimized or differentiated in this crate (the
//! space-time pose energy, the calibration energy, forecast refinement, test
//! energies) implements [`EnergyModel`]; the Hessian-based uncertainty
//! machinery reuses the same trait.

use crate::error::{Error, Result};

/// A differentiable scalar energy over a flat parameter vector.
pub trait EnergyModel: Sync {
    fn dim(&self) -> usize;

    /// Energy value. May fail for infeasible points (e.g. a joint behind the
    /// camera); the line search treats failures as infinitely bad.
    fn energy(&self, x: &[f64]) -> Result<f64>;

    /// Analytic gradient, written into `grad` (length [`Self::dim`]).
    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()>;
}

/// Descent controls. Defaults: Armijo c = 1e-4, shrink 0.5, tol_g = 1e-6,
/// max_iters = 500.
#[derive(Debug, Clone)]
pub struct OptimizeOpts {
    /// Stop when the gradient infinity norm drops below this.
    pub tol_g: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step shrink factor for backtracking.
    pub shrink: f64,
}

impl Default for OptimizeOpts {
    fn default() -> Self {
        OptimizeOpts {
            tol_g: 1e-6,
            max_iters: 500,
            armijo_c: 1e-4,
            shrink: 0.5,
        }
    }
}

impl OptimizeOpts {
    /// Tight settings for one-off problems (calibration) where precision
    /// matters more than per-cycle latency.
    pub fn precise() -> Self {
        OptimizeOpts {
            tol_g: 1e-10,
            max_iters: 50_000,
            ..OptimizeOpts::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub initial_energy: f64,
    pub energy: f64,
    pub iterations: usize,
    pub grad_inf_norm: f64,
    /// True when the gradient tolerance was met (as opposed to running out of
    /// iterations or stalling at numerical precision).
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient descent with backtracking line search, in place on `x`.
///
/// The trial step length is seeded with a Barzilai-Borwein estimate from the
/// previous accepted step, then backtracked until the Armijo condition holds,
/// so the accepted energy sequence is strictly non-increasing.
pub fn minimize(model: &dyn EnergyModel, x: &mut [f64], opts: &OptimizeOpts) -> Result<OptimizeReport> {
    assert_eq!(x.len(), model.dim());
    let n = x.len();
    let mut energy = model.energy(x)?;
    if !energy.is_finite() {
        return Err(Error::Diverged(format!("initial energy {energy}")));
    }
    let initial_energy = energy;
    let mut grad = vec![0.0; n];
    model.gradient(x, &mut grad)?;

    let mut trial = vec![0.0; n];
    let mut prev_grad = vec![0.0; n];
    let mut last_accepted_step: Option<f64> = None;

    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let g_inf = inf_norm(&grad);
        if g_inf < opts.tol_g {
            converged = true;
            break;
        }
        let gg = dot(&grad, &grad);

        // Barzilai-Borwein seed: s = -step_prev * g_prev, y = g - g_prev,
        // t = (s.s)/(s.y). Falls back to a norm-scaled step on the first
        // iteration or when curvature is not positive.
        let mut t = match last_accepted_step {
            Some(prev) => {
                let mut sy = 0.0;
                for i in 0..n {
                    sy += -prev * prev_grad[i] * (grad[i] - prev_grad[i]);
                }
                let ss = prev * prev * dot(&prev_grad, &prev_grad);
                if sy > 1e-300 {
                    (ss / sy).clamp(1e-12, 1e6)
                } else {
                    prev * 2.0
                }
            }
            None => 1.0 / gg.sqrt().max(1.0),
        };

        // Backtrack until sufficient decrease (or the step underflows).
        let mut accepted = None;
        for _ in 0..80 {
            for i in 0..n {
                trial[i] = x[i] - t * grad[i];
            }
            match model.energy(&trial) {
                Ok(e) if e.is_finite() && e <= energy - opts.armijo_c * t * gg => {
                    accepted = Some(e);
                    break;
                }
                _ => t *= opts.shrink,
            }
        }
        let Some(e_new) = accepted else {
            // No productive step at machine precision; report where we stopped.
            break;
        };

        x.copy_from_slice(&trial);
        energy = e_new;
        last_accepted_step = Some(t);
        prev_grad.copy_from_slice(&grad);
        model.gradient(x, &mut grad)?;
        iterations += 1;
    }

    if !energy.is_finite() {
        return Err(Error::Diverged(format!("energy {energy} after {iterations} iterations")));
    }
    Ok(OptimizeReport {
        initial_energy,
        energy,
        iterations,
        grad_inf_norm: inf_norm(&grad),
        converged,
    })
}

/// Central finite-difference gradient, for validating analytic gradients.
pub fn fd_gradient(model: &dyn EnergyModel, x: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.dim()];
    let mut xp = x.to_vec();
    for i in 0..model.dim() {
        let x0 = x[i];
        xp[i] = x0 + step;
        let plus = model.energy(&xp)?;
        xp[i] = x0 - step;
        let minus = model.energy(&xp)?;
        xp[i] = x0;
        out[i] = (plus - minus) / (2.0 * step);
    }
    Ok(out)
}

/// View of a larger energy with only a subset of coordinates free; the rest
/// stay pinned at their values in `base`. Used to refine future poses while
/// holding the estimated past fixed.
pub struct SubsetEnergy<'a> {
    inner: &'a dyn EnergyModel,
    base: Vec<f64>,
    free: Vec<usize>,
}

impl<'a> SubsetEnergy<'a> {
    pub fn new(inner: &'a dyn EnergyModel, base: &[f64], free: Vec<usize>) -> Self {
        assert_eq!(base.len(), inner.dim());
        debug_assert!(free.iter().all(|&i| i < base.len()));
        SubsetEnergy {
            inner,
            base: base.to_vec(),
            free,
        }
    }

    /// Values of the free coordinates in `base`, i.e. the natural start point.
    pub fn free_values(&self) -> Vec<f64> {
        self.free.iter().map(|&i| self.base[i]).collect()
    }

    /// Full-dimensional vector with the free coordinates replaced by `x`.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }
}

impl EnergyModel for SubsetEnergy<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        self.inner.energy(&self.expand(x))
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()> {
        let full = self.expand(x);
        let mut full_grad = vec![0.0; self.inner.dim()];
        self.inner.gradient(&full, &mut full_grad)?;
        for (k, &i) in self.free.iter().enumerate() {
            grad[k] = full_grad[i];
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod test_energies {
    use super::*;

    /// E(x) = sum_i w_i (x_i - mu_i)^2.
    pub struct DiagonalQuadratic {
        pub weights: Vec<f64>,
        pub center: Vec<f64>,
    }

    impl EnergyModel for DiagonalQuadratic {
        fn dim(&self) -> usize {
            self.weights.len()
        }
        fn energy(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter()
                .zip(&self.weights)
                .zip(&self.center)
                .map(|((x, w), m)| w * (x - m) * (x - m))
                .sum())
        }
        fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()> {
            for i in 0..x.len() {
                grad[i] = 2.0 * self.weights[i] * (x[i] - self.center[i]);
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_energies::DiagonalQuadratic;
    use super::*;

    #[test]
    fn quadratic_converges_to_center() {
        let model = DiagonalQuadratic {
            weights: vec![0.5, 2.0, 10.0, 0.01],
            center: vec![1.0, -2.0, 3.0, 40.0],
        };
        let mut x = vec![0.0; 4];
        let report = minimize(&model, &mut x, &OptimizeOpts::default()).unwrap();
        assert!(report.converged);
        for (xi, mi) in x.iter().zip(&model.center) {
            assert!((xi - mi).abs() < 1e-4, "{xi} vs {mi}");
        }
        assert!(report.energy <= report.initial_energy);
    }

    #[test]
    fn stationary_start_does_not_move() {
        let model = DiagonalQuadratic {
            weights: vec![1.0, 1.0],
            center: vec![0.25, -0.5],
        };
        let mut x = vec![0.25, -0.5];
        let report = minimize(&model, &mut x, &OptimizeOpts::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(x, vec![0.25, -0.5]);
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let model = DiagonalQuadratic {
            weights: vec![0.3, 4.0, 1.5],
            center: vec![0.0, 1.0, -1.0],
        };
        let x = vec![0.7, -0.2, 2.0];
        let fd = fd_gradient(&model, &x, 1e-6).unwrap();
        let mut g = vec![0.0; 3];
        model.gradient(&x, &mut g).unwrap();
        for (a, b) in fd.iter().zip(&g) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn subset_energy_pins_fixed_coordinates() {
        let model = DiagonalQuadratic {
            weights: vec![1.0, 1.0, 1.0],
            center: vec![5.0, 6.0, 7.0],
        };
        let base = vec![0.0, 0.0, 0.0];
        let sub = SubsetEnergy::new(&model, &base, vec![2]);
        let mut x = sub.free_values();
        minimize(&sub, &mut x, &OptimizeOpts::default()).unwrap();
        assert!((x[0] - 7.0).abs() < 1e-4);
        let full = sub.expand(&x);
        assert_eq!(full[0], 0.0);
        assert_eq!(full[1], 0.0);
    }
}
