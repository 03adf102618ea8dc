//! Conditioning of a movement primitive on observations.
//!
//! Joint space: a Bayesian update of the weight Gaussian given an observed
//! joint configuration at a phase,
//!
//! ```text
//! K   = Σ_ω Ψ (Σ* + Ψᵀ Σ_ω Ψ)⁻¹
//! μ*_ω = μ_ω + K (y* − Ψᵀ μ_ω)
//! Σ*_ω = Σ_ω − K Ψᵀ Σ_ω
//! ```
//!
//! Task space: the joint configuration that best reaches a 3D target while
//! staying probable under the primitive's marginal, found by damped
//! Gauss-Newton on
//!
//! ```text
//! min_y  ‖f(y) − x*‖²_{Σ_x⁻¹} + ‖y − μ_y(z)‖²_{Σ_y(z)⁻¹}
//! ```
//!
//! starting from μ_y(z), with f the arm forward kinematics. The maximizer is
//! then applied through the joint-space update with a softened noise
//! κ·Σ_y(z) so the posterior stays nonsingular.

use super::{basis_matrix, MarginalGaussian, Phase, ProMP, PrompError, TaskTarget};
use crate::kinematics::{forward_kinematics, jacobian, ArmModel, JointAngles};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Softening factor for applying the task-space optimum.
pub const TASK_CONDITION_KAPPA: f64 = 0.01;

/// Fallback jitter when the innovation matrix is not invertible.
const INNOVATION_JITTER: f64 = 1e-12;

const MAX_ITERS: usize = 100;
const STEP_TOL: f64 = 1e-8;

/// Outcome of a task-space conditioning call.
#[derive(Debug, Clone)]
pub struct TaskConditioning {
    pub promp: ProMP,
    /// The joint configuration that solves the reach/stay-probable tradeoff.
    pub y_star: DVector<f64>,
    /// False when the solver exhausted its iteration budget; the best
    /// iterate is still applied.
    pub converged: bool,
    pub iterations: usize,
}

fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    what: &str,
) -> Result<Cholesky<f64, Dyn>, PrompError> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let n = m.nrows();
    let jittered = m + DMatrix::identity(n, n) * INNOVATION_JITTER;
    jittered
        .cholesky()
        .ok_or_else(|| PrompError::Numerical(format!("{what} not invertible even after jitter")))
}

impl ProMP {
    /// Conditions the primitive on an observed joint configuration `y_star`
    /// at phase `z` with observation covariance `noise_star`. Returns a new
    /// primitive; `self` is untouched.
    pub fn condition_joint_space(
        &self,
        z: Phase,
        y_star: &DVector<f64>,
        noise_star: &DMatrix<f64>,
    ) -> Result<ProMP, PrompError> {
        if y_star.len() != self.dof {
            return Err(PrompError::Dimension(format!(
                "observation has {} entries, expected {}",
                y_star.len(),
                self.dof
            )));
        }
        if noise_star.shape() != (self.dof, self.dof) {
            return Err(PrompError::Dimension(format!(
                "observation noise is {:?}, expected ({d}, {d})",
                noise_star.shape(),
                d = self.dof
            )));
        }

        let psi = basis_matrix(z, &self.basis, self.dof);
        let sigma_psi = &self.weight_cov * &psi; // N×D
        let innovation = noise_star + psi.transpose() * &sigma_psi; // D×D

        let chol = cholesky_with_jitter(&innovation, "innovation covariance")?;
        // K = Σ_ω Ψ A⁻¹ computed as (A⁻¹ (Σ_ω Ψ)ᵀ)ᵀ through the factorization.
        let gain = chol.solve(&sigma_psi.transpose()).transpose(); // N×D

        let residual = y_star - psi.transpose() * &self.mean_weights;
        let mean = &self.mean_weights + &gain * residual;
        let mut cov = &self.weight_cov - &gain * sigma_psi.transpose();
        // Symmetrize away the round-off skew of the rank-D downdate.
        cov = (&cov + cov.transpose()) * 0.5;

        Ok(ProMP {
            mean_weights: mean,
            weight_cov: cov,
            obs_noise: self.obs_noise.clone(),
            basis: self.basis.clone(),
            dof: self.dof,
        })
    }

    /// Conditions the primitive on a 3D task-space target at phase `z`.
    ///
    /// Requires a 4-DoF primitive (the arm's joint layout). The optimum is
    /// found by damped Gauss-Newton from the marginal mean, with the elbow
    /// clamped to its [0, π] range, then applied via joint-space
    /// conditioning with noise κ·Σ_y(z).
    pub fn condition_task_space(
        &self,
        z: Phase,
        target: &TaskTarget,
        model: &ArmModel,
    ) -> Result<TaskConditioning, PrompError> {
        if self.dof != 4 {
            return Err(PrompError::Dimension(format!(
                "task-space conditioning needs a 4-DoF primitive, got {}",
                self.dof
            )));
        }
        let MarginalGaussian { mean: mu, cov: sigma_y } = self.marginal(z);

        let accuracy = DMatrix::from_fn(3, 3, |i, j| target.accuracy[(i, j)]);
        let chol_x = cholesky_with_jitter(&accuracy, "task accuracy")?;
        let chol_y = cholesky_with_jitter(&sigma_y, "marginal covariance")?;

        let as_angles = |y: &DVector<f64>| JointAngles::from_array([y[0], y[1], y[2], y[3]]);
        let task_residual = |y: &DVector<f64>| {
            let fk = forward_kinematics(model, &as_angles(y));
            DVector::from_vec(vec![
                fk.x - target.position.x,
                fk.y - target.position.y,
                fk.z - target.position.z,
            ])
        };
        let cost = |y: &DVector<f64>| {
            let r = task_residual(y);
            let d = y - &mu;
            0.5 * r.dot(&chol_x.solve(&r)) + 0.5 * d.dot(&chol_y.solve(&d))
        };
        let clamp = |y: &mut DVector<f64>| {
            y[3] = y[3].clamp(0.0, std::f64::consts::PI);
        };

        let solve_from = |start: DVector<f64>| {
            let mut y = start;
            clamp(&mut y);
            let mut current_cost = cost(&y);
            // Damping is kept relative to the Hessian scale so the trust
            // region can close regardless of how tight the task accuracy is.
            let mut damping_rel = 1e-6;
            let mut converged = false;
            let mut iterations = 0;

            for iter in 1..=MAX_ITERS {
                iterations = iter;
                let jac = jacobian(model, &as_angles(&y));
                let jac = DMatrix::from_fn(3, 4, |i, j| jac[(i, j)]);
                let r = task_residual(&y);
                let d = &y - &mu;

                let grad = jac.transpose() * chol_x.solve(&r) + chol_y.solve(&d);
                let hessian = {
                    let jtj = jac.transpose() * chol_x.solve(&jac);
                    let sy_inv = chol_y.solve(&DMatrix::identity(4, 4));
                    jtj + sy_inv
                };
                let h_scale = (hessian.trace() / 4.0).max(f64::MIN_POSITIVE);

                let mut accepted = false;
                for _ in 0..40 {
                    let damped = &hessian + DMatrix::identity(4, 4) * (damping_rel * h_scale);
                    let Some(chol) = damped.cholesky() else {
                        damping_rel *= 10.0;
                        continue;
                    };
                    let delta = chol.solve(&(-&grad));
                    let mut y_new = &y + &delta;
                    clamp(&mut y_new);
                    let new_cost = cost(&y_new);
                    if new_cost < current_cost {
                        let moved = (&y_new - &y).norm();
                        y = y_new;
                        current_cost = new_cost;
                        damping_rel = (damping_rel / 3.0).max(1e-12);
                        accepted = true;
                        if moved < STEP_TOL {
                            converged = true;
                        }
                        break;
                    }
                    damping_rel *= 10.0;
                    if damping_rel > 1e12 {
                        break;
                    }
                }

                if !accepted {
                    // No descent step exists even fully damped: stationary.
                    converged = true;
                    break;
                }
                if converged {
                    break;
                }
            }
            (y, current_cost, converged, iterations)
        };

        let (mut y, mut best_cost, mut converged, mut iterations) = solve_from(mu.clone());

        // A redundant arm can stall in a folded configuration when the
        // target lies far from the prior's reach direction. If the result
        // clearly misses, retry from a straight pose aimed at the target and
        // keep whichever optimum costs less.
        let accuracy_scale = accuracy.diagonal().amax().sqrt();
        if task_residual(&y).norm() > 10.0 * accuracy_scale {
            let aim = crate::kinematics::aim_pose(&(target.position - model.origin()));
            let seed = DVector::from_vec(vec![
                aim.shoulder_yaw,
                aim.shoulder_pitch,
                aim.shoulder_roll,
                aim.elbow,
            ]);
            let (y2, cost2, conv2, iters2) = solve_from(seed);
            iterations += iters2;
            if cost2 < best_cost {
                y = y2;
                best_cost = cost2;
                converged = conv2;
            }
        }
        let _ = best_cost;

        let noise_star = &sigma_y * TASK_CONDITION_KAPPA;
        let promp = self.condition_joint_space(z, &y, &noise_star)?;
        Ok(TaskConditioning {
            promp,
            y_star: y,
            converged,
            iterations,
        })
    }
}
