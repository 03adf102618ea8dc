//! Radial-basis activations over the phase variable, their block-diagonal
//! matrix form and the analytic third phase-derivative used by the jerk
//! regularizer.

use super::{BasisConfig, Phase};
use nalgebra::{DMatrix, DVector};

impl BasisConfig {
    /// Gaussian bump of each basis function at phase `z`, optionally
    /// normalized so the activations sum to 1.
    pub fn activations(&self, z: f64) -> DVector<f64> {
        let phi = DVector::from_iterator(
            self.centers.len(),
            self.centers.iter().map(|c| {
                let d = z - c;
                (-d * d / (2.0 * self.width)).exp()
            }),
        );
        if self.normalize {
            let s = phi.sum();
            phi / s
        } else {
            phi
        }
    }

    /// Analytic third derivative of [`Self::activations`] with respect to z.
    ///
    /// For the normalized case the quotient rule is applied three times:
    /// with f = ψ·S, ψ⁽ᵏ⁾ falls out of f⁽ᵏ⁾ and the lower-order terms.
    pub fn activation_third_derivative(&self, z: f64) -> DVector<f64> {
        let k = self.centers.len();
        let mut phi = DVector::zeros(k);
        let mut d1 = DVector::zeros(k);
        let mut d2 = DVector::zeros(k);
        let mut d3 = DVector::zeros(k);
        let w = self.width;
        for (i, c) in self.centers.iter().enumerate() {
            let d = z - c;
            let p = (-d * d / (2.0 * w)).exp();
            phi[i] = p;
            d1[i] = -(d / w) * p;
            d2[i] = (d * d / (w * w) - 1.0 / w) * p;
            d3[i] = (d / (w * w)) * (3.0 - d * d / w) * p;
        }
        if !self.normalize {
            return d3;
        }
        let s: f64 = phi.sum();
        let s1: f64 = d1.sum();
        let s2: f64 = d2.sum();
        let s3: f64 = d3.sum();
        let psi = &phi / s;
        let psi1 = (&d1 - &psi * s1) / s;
        let psi2 = (&d2 - &psi1 * (2.0 * s1) - &psi * s2) / s;
        (&d3 - &psi2 * (3.0 * s1) - &psi1 * (3.0 * s2) - &psi * s3) / s
    }
}

fn block_diagonal(column: &DVector<f64>, dof: usize) -> DMatrix<f64> {
    let k = column.len();
    let mut m = DMatrix::zeros(dof * k, dof);
    for d in 0..dof {
        for i in 0..k {
            m[(d * k + i, d)] = column[i];
        }
    }
    m
}

/// Basis matrix Ψ(z): block-diagonal placement of the activation column, one
/// block per degree of freedom so dimensions share no weights. Shape is
/// (dof·n_basis) × dof; Ψᵀω maps a weight vector to joint values.
pub fn basis_matrix(z: Phase, cfg: &BasisConfig, dof: usize) -> DMatrix<f64> {
    block_diagonal(&cfg.activations(z.value()), dof)
}

/// Third phase-derivative Γ(z) of the basis matrix, same layout as
/// [`basis_matrix`].
pub fn basis_third_derivative(z: Phase, cfg: &BasisConfig, dof: usize) -> DMatrix<f64> {
    block_diagonal(&cfg.activation_third_derivative(z.value()), dof)
}
