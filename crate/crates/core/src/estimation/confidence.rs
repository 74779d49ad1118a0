//! A fitted reward confidence set evaluated on whole densities.

use super::features::RewardClass;
use super::least_squares::Predictor;
use crate::model::Density;

/// r̄ and the width w of 𝓡̂ᵗ, evaluated at any density.
#[derive(Clone, Debug)]
pub struct RewardConfidence {
    pub class: RewardClass,
    pub predictor: Predictor,
}

impl RewardConfidence {
    fn map(&self, mu: &Density, f: impl Fn(&Predictor, &[f64]) -> f64) -> Vec<f64> {
        let d = self.class.dims;
        let mut phi = Vec::with_capacity(self.class.dim());
        (0..d.len())
            .map(|i| {
                let (h, s, a) = d.unindex(i);
                self.class.features.write(d, h, s, a, mu.step(h), &mut phi);
                f(&self.predictor, &phi)
            })
            .collect()
    }

    /// r̄ᵗ(μ), clamped to [0, r_max].
    pub fn mean_vector(&self, mu: &Density) -> Vec<f64> {
        self.map(mu, Predictor::value)
    }

    /// w(μ) ∈ [0, r_max].
    pub fn width_vector(&self, mu: &Density) -> Vec<f64> {
        self.map(mu, Predictor::width)
    }

    /// Both vectors in one pass.
    pub fn mean_and_width(&self, mu: &Density) -> (Vec<f64>, Vec<f64>) {
        (self.mean_vector(mu), self.width_vector(mu))
    }
}
