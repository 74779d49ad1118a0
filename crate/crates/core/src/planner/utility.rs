//! Mediator utilities U : Δ^H_{S×A} → ℝ.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result};
use crate::model::{dot, linf};

/// A Lipschitz (in ‖·‖₁) utility with a (super)gradient oracle.
pub trait GeneralUtility: Debug + Send + Sync {
    fn value(&self, mu: &[f64]) -> f64;
    /// A supergradient for concave U, or the gradient for smooth U.
    fn gradient(&self, mu: &[f64]) -> Option<Vec<f64>>;
    /// L_U with |U(μ) − U(μ')| ≤ L_U‖μ − μ'‖₁ on the domain.
    fn lipschitz(&self) -> f64;
}

#[derive(Clone, Debug)]
pub enum Utility {
    /// U(μ) = ⟨c, μ⟩.
    Linear { c: Vec<f64> },
    LipschitzGeneral(Arc<dyn GeneralUtility>),
}

impl Utility {
    pub fn linear(c: Vec<f64>) -> Self {
        Utility::Linear { c }
    }

    pub fn value(&self, mu: &[f64]) -> f64 {
        match self {
            Utility::Linear { c } => dot(c, mu),
            Utility::LipschitzGeneral(u) => u.value(mu),
        }
    }

    pub fn gradient(&self, mu: &[f64]) -> Option<Vec<f64>> {
        match self {
            Utility::Linear { c } => Some(c.clone()),
            Utility::LipschitzGeneral(u) => u.gradient(mu),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Utility::Linear { c } => linf(c),
            Utility::LipschitzGeneral(u) => u.lipschitz(),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            Utility::Linear { c } => check_len("utility coefficients", n, c.len()),
            Utility::LipschitzGeneral(_) => Ok(()),
        }
    }
}

/// U(μ) = −‖μ − μ⁰‖₂², concave with its maximum at μ⁰.
#[derive(Clone, Debug)]
pub struct NegSquaredDistance {
    pub target: Vec<f64>,
}

impl GeneralUtility for NegSquaredDistance {
    fn value(&self, mu: &[f64]) -> f64 {
        -mu.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    fn gradient(&self, mu: &[f64]) -> Option<Vec<f64>> {
        Some(mu.iter().zip(&self.target).map(|(a, b)| -2.0 * (a - b)).collect())
    }

    fn lipschitz(&self) -> f64 {
        // |∂U/∂μ_i| = 2|μ_i − μ⁰_i| ≤ 2.
        2.0
    }
}

/// U⁺(μ) = θ̄ᵀΦμ + √β‖Φμ‖_{M}: the largest value in a linear utility
/// confidence ellipsoid {θ : ‖θ − θ̄‖_{M⁻¹} ≤ √β}. Convex in μ.
#[derive(Clone, Debug)]
pub struct OptimisticLinearUtility {
    /// Row-major d × n feature matrix Φ.
    pub features: Vec<f64>,
    pub d: usize,
    pub theta: Vec<f64>,
    /// M = (G + λI)⁻¹.
    pub inverse: DMatrix<f64>,
    pub beta: f64,
}

impl OptimisticLinearUtility {
    fn n(&self) -> usize {
        self.features.len() / self.d
    }

    pub fn embed(&self, mu: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.d, self.features.chunks(self.n()).map(|row| dot(row, mu)))
    }

    /// The ellipsoid member attaining U⁺ at μ: θ̄ + √β·Mx/‖x‖_M with x = Φμ.
    pub fn maximizing_theta(&self, mu: &[f64]) -> Vec<f64> {
        let x = self.embed(mu);
        let mx = &self.inverse * &x;
        let norm = x.dot(&mx).max(0.0).sqrt();
        if self.beta == 0.0 || norm == 0.0 || !norm.is_finite() {
            return self.theta.clone();
        }
        let s = self.beta.sqrt() / norm;
        self.theta.iter().zip(mx.iter()).map(|(t, m)| t + s * m).collect()
    }

    /// Φᵀθ.
    pub fn coefficients(&self, theta: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.n()];
        for (row, &t) in self.features.chunks(self.n()).zip(theta) {
            for (ci, x) in c.iter_mut().zip(row) {
                *ci += t * x;
            }
        }
        c
    }
}

impl GeneralUtility for OptimisticLinearUtility {
    fn value(&self, mu: &[f64]) -> f64 {
        let x = self.embed(mu);
        let mean: f64 = x.iter().zip(&self.theta).map(|(a, b)| a * b).sum();
        if self.beta == 0.0 {
            return mean;
        }
        mean + self.beta.sqrt() * x.dot(&(&self.inverse * &x)).max(0.0).sqrt()
    }

    fn gradient(&self, mu: &[f64]) -> Option<Vec<f64>> {
        Some(self.coefficients(&self.maximizing_theta(mu)))
    }

    fn lipschitz(&self) -> f64 {
        let theta_norm = self.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        let radius = (self.beta * self.inverse.norm()).sqrt();
        let col_max = self.features.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        (theta_norm + radius) * col_max * (self.d as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimistic_value_matches_maximizing_theta() {
        let u = OptimisticLinearUtility {
            features: vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.5],
            d: 2,
            theta: vec![0.2, 0.4],
            inverse: DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]),
            beta: 0.09,
        };
        let mu = [0.2, 0.3, 0.5];
        let theta = u.maximizing_theta(&mu);
        let via_theta = dot(&u.coefficients(&theta), &mu);
        assert!((u.value(&mu) - via_theta).abs() < 1e-12);
    }
}
