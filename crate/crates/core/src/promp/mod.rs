//! Probabilistic movement primitives over joint-angle trajectories.
//!
//! A primitive is a Gaussian over basis-function weights: a trajectory value
//! at phase z is Ψ(z)ᵀω with ω ~ N(μ_ω, Σ_ω) plus observation noise.
//! Learning moment-matches per-trajectory regression weights; execution uses
//! the marginal at a phase; adaptation conditions the weight distribution on
//! joint-space or task-space observations.

mod basis;
mod condition;

pub use basis::{basis_matrix, basis_third_derivative};
pub use condition::TaskConditioning;

use crate::kinematics::JointAngleTrajectory;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Jitter added to a fitted weight covariance to keep it positive
/// semidefinite under floating-point error.
pub const COVARIANCE_JITTER: f64 = 1e-8;

/// Default ridge regularizer for weight fits.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-10;

/// Default observation noise: sub-degree command noise floor.
pub const DEFAULT_OBS_NOISE_STD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PrompError {
    #[error("invalid basis configuration: {0}")]
    InvalidBasis(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least 2 weight samples, got {got}")]
    NotEnoughSamples { got: usize },
    #[error("trajectory has {len} samples, need at least {need}")]
    TrajectoryTooShort { len: usize, need: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported file version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed primitive file: {0}")]
    Format(String),
}

/// Radial-basis layout over the phase interval [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub n_basis: usize,
    /// Strictly increasing centers in phase space.
    pub centers: Vec<f64>,
    /// Squared width (variance) of each bump, phase².
    pub width: f64,
    /// Normalize activations to sum to 1 per evaluation.
    pub normalize: bool,
}

impl BasisConfig {
    /// `n` bumps with equally spaced centers spanning [0, 1].
    pub fn equally_spaced(n: usize, width: f64, normalize: bool) -> Result<Self, PrompError> {
        if n < 2 {
            return Err(PrompError::InvalidBasis(format!(
                "n_basis must be >= 2, got {n}"
            )));
        }
        if !(width > 0.0) {
            return Err(PrompError::InvalidBasis(format!(
                "width must be positive, got {width}"
            )));
        }
        let centers = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Ok(Self {
            n_basis: n,
            centers,
            width,
            normalize,
        })
    }

    pub fn validate(&self) -> Result<(), PrompError> {
        if self.n_basis < 2 || self.centers.len() != self.n_basis {
            return Err(PrompError::InvalidBasis(format!(
                "{} centers for n_basis {}",
                self.centers.len(),
                self.n_basis
            )));
        }
        if !(self.width > 0.0) {
            return Err(PrompError::InvalidBasis("width must be positive".into()));
        }
        if self.centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PrompError::InvalidBasis(
                "centers must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self::equally_spaced(3, 0.01, true).unwrap()
    }
}

/// Normalized trajectory time in [0, 1]. Out-of-range construction clamps
/// and remembers that it did, since a controller may run past the nominal
/// duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    z: f64,
    clamped: bool,
}

impl Phase {
    pub fn new(z: f64) -> Self {
        if (0.0..=1.0).contains(&z) {
            Self { z, clamped: false }
        } else {
            Self {
                z: z.clamp(0.0, 1.0),
                clamped: true,
            }
        }
    }

    /// z = (t − t0) / duration for a frame index.
    pub fn from_frame(t: usize, t0: usize, duration: usize) -> Self {
        assert!(duration > 0, "phase duration must be positive");
        if t < t0 {
            return Self {
                z: 0.0,
                clamped: true,
            };
        }
        Self::new((t - t0) as f64 / duration as f64)
    }

    pub fn value(self) -> f64 {
        self.z
    }

    pub fn was_clamped(self) -> bool {
        self.clamped
    }
}

/// One per-trajectory regression result: the flattened weight vector, one
/// block of `n_basis` weights per degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSample {
    pub omega: DVector<f64>,
}

/// Weight regularizer for [`fit_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// (ΦᵀΦ + λI)⁻¹Φᵀτ
    Ridge(f64),
    /// (ΦᵀΦ + λΓᵀΓ)⁻¹Φᵀτ — penalizes the third phase-derivative.
    Jerk(f64),
}

impl Default for Regularizer {
    fn default() -> Self {
        Regularizer::Ridge(DEFAULT_RIDGE_LAMBDA)
    }
}

/// A 3D task-space target with its accuracy (covariance of the desired
/// end-effector position).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTarget {
    pub position: Vector3<f64>,
    pub accuracy: Matrix3<f64>,
}

impl TaskTarget {
    /// Isotropic accuracy with standard deviation `std` meters.
    pub fn isotropic(position: Vector3<f64>, std: f64) -> Self {
        Self {
            position,
            accuracy: Matrix3::identity() * std * std,
        }
    }
}

/// Gaussian over joint values at one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// The primitive itself: weight-space Gaussian plus basis layout and
/// observation noise. Values are immutable; conditioning returns new ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ProMP {
    pub mean_weights: DVector<f64>,
    pub weight_cov: DMatrix<f64>,
    pub obs_noise: DMatrix<f64>,
    pub basis: BasisConfig,
    pub dof: usize,
}

impl ProMP {
    /// Checks the structural invariants: consistent dimensions, symmetric
    /// covariances, weight covariance not indefinite beyond float dust.
    pub fn validate(&self) -> Result<(), PrompError> {
        self.basis.validate()?;
        let n = self.dof * self.basis.n_basis;
        if self.mean_weights.len() != n {
            return Err(PrompError::Dimension(format!(
                "mean has {} entries, expected {}",
                self.mean_weights.len(),
                n
            )));
        }
        if self.weight_cov.shape() != (n, n) {
            return Err(PrompError::Dimension(format!(
                "weight covariance is {:?}, expected ({n}, {n})",
                self.weight_cov.shape()
            )));
        }
        if self.obs_noise.shape() != (self.dof, self.dof) {
            return Err(PrompError::Dimension(format!(
                "observation noise is {:?}, expected ({}, {})",
                self.obs_noise.shape(),
                self.dof,
                self.dof
            )));
        }
        for (name, m) in [
            ("weight covariance", &self.weight_cov),
            ("observation noise", &self.obs_noise),
        ] {
            if !is_symmetric(m, 1e-9) {
                return Err(PrompError::Numerical(format!("{name} is not symmetric")));
            }
            if min_symmetric_eigenvalue(m) < -1e-10 {
                return Err(PrompError::Numerical(format!("{name} is indefinite")));
            }
        }
        Ok(())
    }

    /// Joint-value distribution at phase `z`: mean Ψᵀμ_ω, covariance
    /// ΨᵀΣ_ωΨ + Σ_y.
    pub fn marginal(&self, z: Phase) -> MarginalGaussian {
        let psi = basis_matrix(z, &self.basis, self.dof);
        let mean = psi.transpose() * &self.mean_weights;
        let cov = psi.transpose() * &self.weight_cov * &psi + &self.obs_noise;
        MarginalGaussian { mean, cov }
    }

    /// Draws one weight vector (deterministic for a given seed) and plays it
    /// out over the phase grid. Observation noise is not added.
    pub fn sample_trajectory(&self, phases: &[Phase], seed: u64) -> Vec<DVector<f64>> {
        let n = self.mean_weights.len();
        let root = psd_sqrt(&self.weight_cov);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let omega = &self.mean_weights + root * eps;
        phases
            .iter()
            .map(|&z| basis_matrix(z, &self.basis, self.dof).transpose() * &omega)
            .collect()
    }
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Square root factor A with AAᵀ = Σ. Cholesky where possible, otherwise an
/// eigendecomposition with negative eigenvalues clamped to zero (covers the
/// exactly-singular case, e.g. a zero covariance).
fn psd_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = sigma.clone().cholesky() {
        return chol.l();
    }
    let eig = ((sigma + sigma.transpose()) * 0.5).symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&vals)
}

/// Fits one weight vector to a T×D value matrix sampled at the given phases.
///
/// The basis is identical per dimension and dimensions share no weights, so
/// the stacked normal equations decouple into one K×K solve per dimension;
/// the solves use a symmetric factorization, never an explicit inverse.
pub fn fit_weights_matrix(
    values: &DMatrix<f64>,
    phases: &[f64],
    cfg: &BasisConfig,
    reg: Regularizer,
) -> Result<WeightSample, PrompError> {
    cfg.validate()?;
    let t = values.nrows();
    let dof = values.ncols();
    if phases.len() != t {
        return Err(PrompError::Dimension(format!(
            "{} phases for {} samples",
            phases.len(),
            t
        )));
    }
    if t < cfg.n_basis {
        return Err(PrompError::TrajectoryTooShort {
            len: t,
            need: cfg.n_basis,
        });
    }

    let k = cfg.n_basis;
    let mut phi = DMatrix::zeros(t, k);
    for (row, &z) in phases.iter().enumerate() {
        phi.row_mut(row).copy_from(&cfg.activations(z).transpose());
    }

    let mut normal = phi.transpose() * &phi;
    match reg {
        Regularizer::Ridge(lambda) => {
            for i in 0..k {
                normal[(i, i)] += lambda;
            }
        }
        Regularizer::Jerk(lambda) => {
            let mut gamma = DMatrix::zeros(t, k);
            for (row, &z) in phases.iter().enumerate() {
                gamma
                    .row_mut(row)
                    .copy_from(&cfg.activation_third_derivative(z).transpose());
            }
            normal += (gamma.transpose() * gamma) * lambda;
        }
    }

    let chol = normal.clone().cholesky().ok_or_else(|| {
        let eig = normal.symmetric_eigenvalues();
        let cond = eig.max() / eig.min().abs().max(f64::MIN_POSITIVE);
        PrompError::Numerical(format!(
            "singular normal matrix after regularization (condition ~{cond:.3e})"
        ))
    })?;

    let mut omega = DVector::zeros(dof * k);
    for d in 0..dof {
        let rhs = phi.transpose() * values.column(d);
        let w = chol.solve(&rhs);
        omega.rows_mut(d * k, k).copy_from(&w);
    }
    Ok(WeightSample { omega })
}

/// Fits weights to a 4-DoF joint-angle trajectory over its own phase grid.
pub fn fit_weights(
    traj: &JointAngleTrajectory,
    cfg: &BasisConfig,
    reg: Regularizer,
) -> Result<WeightSample, PrompError> {
    let t = traj.len();
    let mut values = DMatrix::zeros(t, 4);
    for (row, q) in traj.samples.iter().enumerate() {
        let arr = q.to_array();
        for d in 0..4 {
            values[(row, d)] = arr[d];
        }
    }
    fit_weights_matrix(&values, &traj.phases(), cfg, reg)
}

/// Moment-matches a primitive to per-trajectory weight fits: sample mean and
/// unbiased sample covariance plus PSD jitter.
pub fn fit_promp(
    samples: &[WeightSample],
    basis: BasisConfig,
    dof: usize,
    obs_noise: DMatrix<f64>,
) -> Result<ProMP, PrompError> {
    if samples.len() < 2 {
        return Err(PrompError::NotEnoughSamples { got: samples.len() });
    }
    basis.validate()?;
    let n = dof * basis.n_basis;
    for (i, s) in samples.iter().enumerate() {
        if s.omega.len() != n {
            return Err(PrompError::Dimension(format!(
                "sample {i} has {} weights, expected {n}",
                s.omega.len()
            )));
        }
    }

    let count = samples.len() as f64;
    let mut mean = DVector::zeros(n);
    for s in samples {
        mean += &s.omega;
    }
    mean /= count;

    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        let d = &s.omega - &mean;
        cov += &d * d.transpose();
    }
    cov /= count - 1.0;
    for i in 0..n {
        cov[(i, i)] += COVARIANCE_JITTER;
    }

    let promp = ProMP {
        mean_weights: mean,
        weight_cov: cov,
        obs_noise,
        basis,
        dof,
    };
    promp.validate()?;
    Ok(promp)
}

/// Isotropic observation noise (std in radians) for a given DoF count.
pub fn default_obs_noise(dof: usize) -> DMatrix<f64> {
    DMatrix::identity(dof, dof) * DEFAULT_OBS_NOISE_STD * DEFAULT_OBS_NOISE_STD
}

// ── Serialization ────────────────────────────────────────────────────────

const PROMP_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PrompFile {
    version: u32,
    dof: usize,
    basis: BasisConfig,
    mean_weights: Vec<f64>,
    /// Row-major.
    weight_cov: Vec<f64>,
    /// Row-major.
    obs_noise: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_row_major(data: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>, PrompError> {
    if data.len() != rows * cols {
        return Err(PrompError::Format(format!(
            "matrix payload has {} entries, expected {}",
            data.len(),
            rows * cols
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl ProMP {
    pub fn to_json(&self) -> String {
        let file = PrompFile {
            version: PROMP_FILE_VERSION,
            dof: self.dof,
            basis: self.basis.clone(),
            mean_weights: self.mean_weights.iter().copied().collect(),
            weight_cov: row_major(&self.weight_cov),
            obs_noise: row_major(&self.obs_noise),
        };
        serde_json::to_string_pretty(&file).expect("primitive serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, PrompError> {
        let file: PrompFile =
            serde_json::from_str(text).map_err(|e| PrompError::Format(e.to_string()))?;
        if file.version != PROMP_FILE_VERSION {
            return Err(PrompError::UnsupportedVersion(file.version));
        }
        let n = file.dof * file.basis.n_basis;
        let promp = ProMP {
            mean_weights: DVector::from_vec(file.mean_weights),
            weight_cov: from_row_major(&file.weight_cov, n, n)?,
            obs_noise: from_row_major(&file.obs_noise, file.dof, file.dof)?,
            basis: file.basis,
            dof: file.dof,
        };
        promp.validate()?;
        Ok(promp)
    }
}

#[cfg(test)]
pub(crate) fn random_promp(rng: &mut ChaCha8Rng, n_basis: usize, dof: usize) -> ProMP {
    use rand::Rng;
    let n = n_basis * dof;
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let cov = &a * a.transpose() + DMatrix::identity(n, n) * 1e-2;
    ProMP {
        mean_weights: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
        weight_cov: cov,
        obs_noise: DMatrix::identity(dof, dof) * 1e-4,
        basis: BasisConfig::equally_spaced(n_basis, 0.01, true).unwrap(),
        dof,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn phase_endpoints_and_midpoint() {
        assert_eq!(Phase::from_frame(10, 10, 20).value(), 0.0);
        assert_eq!(Phase::from_frame(30, 10, 20).value(), 1.0);
        assert_eq!(Phase::from_frame(20, 10, 20).value(), 0.5);
        assert!(!Phase::from_frame(20, 10, 20).was_clamped());
    }

    #[test]
    fn phase_clamps_out_of_range_with_flag() {
        let late = Phase::from_frame(45, 10, 20);
        assert_eq!(late.value(), 1.0);
        assert!(late.was_clamped());
        let early = Phase::from_frame(5, 10, 20);
        assert_eq!(early.value(), 0.0);
        assert!(early.was_clamped());
    }

    #[test]
    fn planted_weights_are_recovered_by_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = BasisConfig::default();
        for _ in 0..20 {
            let dof = 2;
            let omega_true =
                DVector::from_fn(cfg.n_basis * dof, |_, _| rng.gen_range(-2.0..2.0));
            let t = 50;
            let phases: Vec<f64> = (0..t).map(|i| i as f64 / (t - 1) as f64).collect();
            let mut values = DMatrix::zeros(t, dof);
            for (row, &z) in phases.iter().enumerate() {
                let y = basis_matrix(Phase::new(z), &cfg, dof).transpose() * &omega_true;
                for d in 0..dof {
                    values[(row, d)] = y[d];
                }
            }
            let fit =
                fit_weights_matrix(&values, &phases, &cfg, Regularizer::Ridge(1e-10)).unwrap();
            assert!(
                (fit.omega - &omega_true).norm() < 1e-6,
                "weights not recovered"
            );
        }
    }

    #[test]
    fn constant_trajectory_yields_constant_weights() {
        let cfg = BasisConfig::default();
        let t = 50;
        let c = 0.73;
        let phases: Vec<f64> = (0..t).map(|i| i as f64 / (t - 1) as f64).collect();
        let values = DMatrix::from_element(t, 1, c);
        let fit = fit_weights_matrix(&values, &phases, &cfg, Regularizer::default()).unwrap();
        for w in fit.omega.iter() {
            assert!((w - c).abs() < 1e-9, "weight {w} differs from {c}");
        }
    }

    #[test]
    fn huge_ridge_shrinks_weights_to_zero() {
        let cfg = BasisConfig::default();
        let t = 40;
        let phases: Vec<f64> = (0..t).map(|i| i as f64 / (t - 1) as f64).collect();
        let values = DMatrix::from_fn(t, 3, |i, j| ((i + j) as f64 * 0.37).sin() * 5.0);
        let fit = fit_weights_matrix(&values, &phases, &cfg, Regularizer::Ridge(1e12)).unwrap();
        assert!(fit.omega.norm() < 1e-6);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let cfg = BasisConfig::default();
        let values = DMatrix::zeros(2, 1);
        assert!(matches!(
            fit_weights_matrix(&values, &[0.0, 1.0], &cfg, Regularizer::default()),
            Err(PrompError::TrajectoryTooShort { len: 2, need: 3 })
        ));
    }

    #[test]
    fn jerk_fit_is_smoother_than_ridge_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = BasisConfig::default();
        let t = 60;
        let phases: Vec<f64> = (0..t).map(|i| i as f64 / (t - 1) as f64).collect();
        let values = DMatrix::from_fn(t, 1, |i, _| {
            let z = phases[i];
            0.5 * (2.0 * std::f64::consts::PI * z).sin() + rng.gen_range(-0.05..0.05)
        });

        let mean_sq_third_diff = |fit: &WeightSample| {
            let recon: Vec<f64> = phases
                .iter()
                .map(|&z| (basis_matrix(Phase::new(z), &cfg, 1).transpose() * &fit.omega)[0])
                .collect();
            let mut acc = 0.0;
            for i in 0..recon.len() - 3 {
                let d = recon[i + 3] - 3.0 * recon[i + 2] + 3.0 * recon[i + 1] - recon[i];
                acc += d * d;
            }
            acc / (recon.len() - 3) as f64
        };

        let ridge = fit_weights_matrix(&values, &phases, &cfg, Regularizer::Ridge(1e-10)).unwrap();
        let jerk = fit_weights_matrix(&values, &phases, &cfg, Regularizer::Jerk(1e-4)).unwrap();
        assert!(
            mean_sq_third_diff(&jerk) <= mean_sq_third_diff(&ridge) + 1e-15,
            "jerk fit rougher than ridge fit"
        );
    }

    #[test]
    fn two_point_moment_match() {
        let cfg = BasisConfig::default();
        let omega = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let samples = vec![
            WeightSample {
                omega: omega.clone(),
            },
            WeightSample {
                omega: -omega.clone(),
            },
        ];
        let p = fit_promp(&samples, cfg, 1, default_obs_noise(1)).unwrap();
        assert!(p.mean_weights.norm() < 1e-15);
        let expected =
            &omega * omega.transpose() * 2.0 + DMatrix::identity(3, 3) * COVARIANCE_JITTER;
        assert_relative_eq!(p.weight_cov, expected, epsilon = 1e-12);
    }

    #[test]
    fn identical_samples_leave_only_jitter() {
        let cfg = BasisConfig::default();
        let omega = DVector::from_vec(vec![0.3, 0.1, -0.7]);
        let samples = vec![WeightSample { omega }; 10];
        let p = fit_promp(&samples, cfg, 1, default_obs_noise(1)).unwrap();
        assert_relative_eq!(
            p.weight_cov,
            DMatrix::identity(3, 3) * COVARIANCE_JITTER,
            epsilon = 1e-15
        );
    }

    #[test]
    fn single_sample_is_rejected() {
        let samples = vec![WeightSample {
            omega: DVector::zeros(3),
        }];
        assert!(matches!(
            fit_promp(&samples, BasisConfig::default(), 1, default_obs_noise(1)),
            Err(PrompError::NotEnoughSamples { got: 1 })
        ));
    }

    #[test]
    fn many_fitted_weight_vectors_make_a_valid_primitive() {
        // 197 trajectories, fitted then moment-matched; the PSD invariant
        // must survive the whole round.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = BasisConfig::default();
        let t = 40;
        let phases: Vec<f64> = (0..t).map(|i| i as f64 / (t - 1) as f64).collect();
        let mut samples = Vec::new();
        for _ in 0..197 {
            let amp = rng.gen_range(0.5..1.5);
            let offset = rng.gen_range(-0.3..0.3);
            let values = DMatrix::from_fn(t, 4, |i, d| {
                let z = phases[i];
                offset + amp * (z * (1.2 + 0.1 * d as f64)).sin() + rng.gen_range(-0.02..0.02)
            });
            samples
                .push(fit_weights_matrix(&values, &phases, &cfg, Regularizer::default()).unwrap());
        }
        let p = fit_promp(&samples, cfg, 4, default_obs_noise(4)).unwrap();
        p.validate().unwrap();
        assert!(min_symmetric_eigenvalue(&p.weight_cov) >= -1e-10);
    }

    #[test]
    fn marginal_with_zero_weight_cov_is_pure_obs_noise() {
        let cfg = BasisConfig::default();
        let p = ProMP {
            mean_weights: DVector::from_vec(vec![0.1, 0.2, 0.3]),
            weight_cov: DMatrix::zeros(3, 3),
            obs_noise: DMatrix::identity(1, 1) * 0.25,
            basis: cfg,
            dof: 1,
        };
        for i in 0..=10 {
            let m = p.marginal(Phase::new(i as f64 / 10.0));
            assert_relative_eq!(m.cov[(0, 0)], 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn marginal_at_start_matches_common_start_statistics() {
        // Trajectories share a (jittered) common start value; the fitted
        // primitive's marginal mean at z = 0 must sit within one sample-std
        // of the empirical starts. Trajectories are drawn from the basis span
        // so the regression can represent them.
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let cfg = BasisConfig::default();
        let t = 40;
        let phases: Vec<f64> = (0..t).map(|i| i as f64 / (t - 1) as f64).collect();
        let start = 0.4;
        let psi0 = cfg.activations(0.0);
        let mut samples = Vec::new();
        let mut starts = Vec::new();
        for _ in 0..50 {
            let mut omega = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            // Pin the z = 0 reconstruction to the common start (plus jitter).
            let want = start + rng.gen_range(-0.02..0.02);
            let have = psi0.dot(&omega);
            omega += &psi0 * ((want - have) / psi0.norm_squared());

            let values = DMatrix::from_fn(t, 1, |i, _| {
                cfg.activations(phases[i]).dot(&omega) + rng.gen_range(-0.005..0.005)
            });
            starts.push(values[(0, 0)]);
            samples
                .push(fit_weights_matrix(&values, &phases, &cfg, Regularizer::default()).unwrap());
        }
        let p = fit_promp(&samples, cfg, 1, default_obs_noise(1)).unwrap();
        let m = p.marginal(Phase::new(0.0));
        let mean_start: f64 = starts.iter().sum::<f64>() / starts.len() as f64;
        let std_start: f64 = (starts.iter().map(|s| (s - mean_start).powi(2)).sum::<f64>()
            / (starts.len() - 1) as f64)
            .sqrt();
        assert!(
            (m.mean[0] - mean_start).abs() <= std_start,
            "marginal start {} vs empirical {} ± {}",
            m.mean[0],
            mean_start,
            std_start
        );
    }

    #[test]
    fn marginal_covariance_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let p = random_promp(&mut rng, 3, 2);
        for _ in 0..100 {
            let z = Phase::new(rng.gen_range(0.0..=1.0));
            let m = p.marginal(z);
            assert!(is_symmetric(&m.cov, 1e-10));
            assert!(min_symmetric_eigenvalue(&m.cov) >= -1e-12);
        }
    }

    #[test]
    fn zero_cov_sampling_reproduces_the_mean_path() {
        let cfg = BasisConfig::default();
        let p = ProMP {
            mean_weights: DVector::from_vec(vec![0.5, -0.25, 1.0]),
            weight_cov: DMatrix::zeros(3, 3),
            obs_noise: default_obs_noise(1),
            basis: cfg,
            dof: 1,
        };
        let phases: Vec<Phase> = (0..=20).map(|i| Phase::new(i as f64 / 20.0)).collect();
        let sampled = p.sample_trajectory(&phases, 99);
        for (&z, v) in phases.iter().zip(sampled.iter()) {
            let m = p.marginal(z);
            assert_relative_eq!(v[0], m.mean[0], epsilon = 1e-15);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let p = random_promp(&mut rng, 3, 2);
        let phases: Vec<Phase> = (0..=10).map(|i| Phase::new(i as f64 / 10.0)).collect();
        let a = p.sample_trajectory(&phases, 7);
        let b = p.sample_trajectory(&phases, 7);
        assert_eq!(a, b);
        let c = p.sample_trajectory(&phases, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_moments_match_the_marginal() {
        // 10⁴ draws at a fixed phase: empirical mean and covariance must sit
        // within 3 standard errors of the weight-space marginal (without
        // observation noise, which sampling does not add).
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let p = random_promp(&mut rng, 3, 2);
        let z = Phase::new(0.35);
        let m = p.marginal(z);
        let target_cov = &m.cov - &p.obs_noise;

        let n = 10_000usize;
        let dim = p.dof;
        let mut sum = DVector::zeros(dim);
        let mut draws = Vec::with_capacity(n);
        for seed in 0..n {
            let v = p.sample_trajectory(&[z], seed as u64).pop().unwrap();
            sum += &v;
            draws.push(v);
        }
        let mean = sum / n as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for v in &draws {
            let d = v - &mean;
            cov += &d * d.transpose();
        }
        cov /= (n - 1) as f64;

        for i in 0..dim {
            let se = (target_cov[(i, i)] / n as f64).sqrt();
            assert!(
                (mean[i] - m.mean[i]).abs() < 3.0 * se,
                "mean[{i}] off: {} vs {} (se {se})",
                mean[i],
                m.mean[i]
            );
            for j in 0..dim {
                let var_ij =
                    target_cov[(i, i)] * target_cov[(j, j)] + target_cov[(i, j)].powi(2);
                let se_ij = (var_ij / n as f64).sqrt();
                assert!(
                    (cov[(i, j)] - target_cov[(i, j)]).abs() < 3.0 * se_ij,
                    "cov[({i},{j})] off: {} vs {}",
                    cov[(i, j)],
                    target_cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn stretched_phase_grids_agree_at_equal_phase() {
        // Executing the same primitive slower or faster only re-samples the
        // phase axis; values at equal z are identical.
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let p = random_promp(&mut rng, 3, 2);
        let coarse: Vec<Phase> = (0..=10).map(|i| Phase::new(i as f64 / 10.0)).collect();
        let fine: Vec<Phase> = (0..=50).map(|i| Phase::new(i as f64 / 50.0)).collect();
        for (i, &z) in coarse.iter().enumerate() {
            let mc = p.marginal(z);
            let mf = p.marginal(fine[i * 5]);
            assert_relative_eq!(mc.mean, mf.mean, epsilon = 1e-15);
        }
    }

    #[test]
    fn json_round_trip_preserves_the_primitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let p = random_promp(&mut rng, 4, 3);
        let text = p.to_json();
        let q = ProMP::from_json(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn loader_rejects_wrong_version_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let p = random_promp(&mut rng, 3, 2);
        let mut v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        v["version"] = serde_json::json!(99);
        assert!(matches!(
            ProMP::from_json(&v.to_string()),
            Err(PrompError::UnsupportedVersion(99))
        ));

        let mut v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        v["weight_cov"].as_array_mut().unwrap().pop();
        assert!(ProMP::from_json(&v.to_string()).is_err());
    }
}
