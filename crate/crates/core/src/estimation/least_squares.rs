//! Regularized least squares over a parametric class, its confidence
//! ellipsoid, widths and the β radius schedule.
//!
//! Observations arrive as (φ, y) pairs. The linear and tabular families keep
//! running sufficient statistics (Gram matrix ΦᵀΦ and Φᵀy) so each new datum
//! costs O(d²). The generalized linear family refits by damped Gauss–Newton
//! over the stored observations.
//!
//! Queries go through an immutable [`Predictor`] snapshot tagged with the
//! epoch (number of ingested observations) it was fitted at, so updates and
//! queries cannot interleave.

use nalgebra::{DMatrix, DVector};

use super::features::{Family, Link, RewardClass, UtilityClass};
use crate::error::{check_len, Error, Result};

/// How widths are computed from the fitted ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WidthRule {
    /// 2√β‖φ‖_{(G+λI)⁻¹}.
    Ellipsoid,
    /// Per-coordinate interval [θ̄_i ± √(β/(G_ii+λ))] ∩ [0, bound] for one-hot φ.
    Interval,
    /// 2√β·ratio·‖φ‖_{(G+λI)⁻¹}, ratio = sup g' / inf g' on the class domain.
    LinkEnvelope { ratio: f64 },
}

#[derive(Clone, Debug)]
pub struct LeastSquaresState {
    d: usize,
    lambda: f64,
    link: Link,
    rule: WidthRule,
    bound: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    features: Vec<f64>,
    targets: Vec<f64>,
    theta: Vec<f64>,
    epoch: u64,
    fitted_epoch: Option<u64>,
}

impl LeastSquaresState {
    pub fn new(d: usize, lambda: f64, link: Link, rule: WidthRule, bound: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("parameter dimension must be positive"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("ridge lambda must be a nonnegative finite number"));
        }
        Ok(LeastSquaresState {
            d,
            lambda,
            link,
            rule,
            bound,
            gram: DMatrix::zeros(d, d),
            xty: DVector::zeros(d),
            features: Vec::new(),
            targets: Vec::new(),
            theta: vec![0.0; d],
            epoch: 0,
            fitted_epoch: None,
        })
    }

    pub fn for_reward(class: &RewardClass, lambda: f64) -> Result<Self> {
        let rule = match class.family {
            Family::Linear => WidthRule::Ellipsoid,
            Family::Tabular => WidthRule::Interval,
            Family::GeneralizedLinear => WidthRule::LinkEnvelope {
                ratio: class.link_slope_ratio(),
            },
        };
        LeastSquaresState::new(class.dim(), lambda, class.link(), rule, class.r_max)
    }

    pub fn for_utility(class: &UtilityClass, lambda: f64) -> Result<Self> {
        LeastSquaresState::new(class.dim(), lambda, Link::Identity, WidthRule::Ellipsoid, class.u_max)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Number of observations ingested; bumps on every [`push`](Self::push).
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// The unregularized Gram matrix ΦᵀΦ.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn push(&mut self, phi: &[f64], y: f64) -> Result<()> {
        check_len("feature vector", self.d, phi.len())?;
        if !y.is_finite() || phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite observation"));
        }
        let v = DVector::from_column_slice(phi);
        self.gram.ger(1.0, &v, &v, 1.0);
        self.xty.axpy(y, &v, 1.0);
        self.features.extend_from_slice(phi);
        self.targets.push(y);
        self.epoch += 1;
        Ok(())
    }

    fn regularized_gram(&self) -> DMatrix<f64> {
        let mut g = self.gram.clone();
        for i in 0..self.d {
            g[(i, i)] += self.lambda;
        }
        g
    }

    fn predict_raw(&self, theta: &[f64], phi: &[f64]) -> f64 {
        self.link.apply(phi.iter().zip(theta).map(|(a, b)| a * b).sum())
    }

    /// Σᵢ (g(θᵀφᵢ) − yᵢ)² + λ‖θ‖².
    pub fn loss(&self, theta: &[f64]) -> f64 {
        let data: f64 = self
            .features
            .chunks(self.d)
            .zip(&self.targets)
            .map(|(phi, y)| (self.predict_raw(theta, phi) - y).powi(2))
            .sum();
        data + self.lambda * theta.iter().map(|t| t * t).sum::<f64>()
    }

    /// ‖∇ loss(θ)‖₂.
    pub fn gradient_norm(&self, theta: &[f64]) -> f64 {
        let mut grad: Vec<f64> = theta.iter().map(|t| 2.0 * self.lambda * t).collect();
        for (phi, y) in self.features.chunks(self.d).zip(&self.targets) {
            let z: f64 = phi.iter().zip(theta).map(|(a, b)| a * b).sum();
            let c = 2.0 * (self.link.apply(z) - y) * self.link.derivative(z);
            for (g, x) in grad.iter_mut().zip(phi) {
                *g += c * x;
            }
        }
        grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Recomputes θ̄ from all observations.
    pub fn fit(&mut self) -> Result<&[f64]> {
        self.theta = match (self.rule, self.link) {
            (WidthRule::Interval, _) => (0..self.d)
                .map(|i| {
                    let g = self.gram[(i, i)] + self.lambda;
                    if g > 0.0 {
                        self.xty[i] / g
                    } else {
                        0.0
                    }
                })
                .collect(),
            (_, Link::Identity) => self.solve_ridge()?,
            (_, Link::Logistic { .. }) => self.gauss_newton()?,
        };
        self.fitted_epoch = Some(self.epoch);
        Ok(&self.theta)
    }

    fn solve_ridge(&self) -> Result<Vec<f64>> {
        let g = self.regularized_gram();
        let scale = (0..self.d).fold(0.0_f64, |m, i| m.max(g[(i, i)]));
        let chol = g.cholesky().ok_or(Error::SingularGram)?;
        let l = chol.l_dirty();
        let min_pivot = (0..self.d).fold(f64::INFINITY, |m, i| m.min(l[(i, i)]));
        if self.lambda == 0.0 && !(min_pivot * min_pivot > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::SingularGram);
        }
        Ok(chol.solve(&self.xty).iter().copied().collect())
    }

    /// Levenberg–Marquardt damped Gauss–Newton, warm-started at the last fit.
    fn gauss_newton(&self) -> Result<Vec<f64>> {
        let d = self.d;
        let mut theta = self.theta.clone();
        let mut loss = self.loss(&theta);
        let mut damping = 1e-3;
        for _ in 0..200 {
            let mut jtj = DMatrix::<f64>::zeros(d, d);
            let mut jtr = DVector::<f64>::from_iterator(d, theta.iter().map(|t| self.lambda * t));
            for (phi, y) in self.features.chunks(d).zip(&self.targets) {
                let z: f64 = phi.iter().zip(&theta).map(|(a, b)| a * b).sum();
                let slope = self.link.derivative(z);
                let r = self.link.apply(z) - y;
                let j = DVector::from_iterator(d, phi.iter().map(|x| slope * x));
                jtj.ger(1.0, &j, &j, 1.0);
                jtr.axpy(r, &j, 1.0);
            }
            if 2.0 * jtr.norm() <= 1e-8 {
                break;
            }
            let mut improved = false;
            for _ in 0..30 {
                let mut m = jtj.clone();
                for i in 0..d {
                    m[(i, i)] += self.lambda + damping * (1.0 + jtj[(i, i)]);
                }
                let Some(chol) = m.cholesky() else {
                    damping *= 10.0;
                    continue;
                };
                let step = chol.solve(&(-&jtr));
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
                let cand_loss = self.loss(&cand);
                if cand_loss <= loss {
                    let rel = (loss - cand_loss) / loss.max(f64::MIN_POSITIVE);
                    theta = cand;
                    loss = cand_loss;
                    damping = (damping * 0.3).max(1e-12);
                    improved = rel > 0.0;
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                break;
            }
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numerical("Gauss-Newton fit diverged".into()));
        }
        Ok(theta)
    }

    /// Squared confidence-set distance of `theta` from the fit:
    /// ‖θ − θ̄‖²_{G+λI} for linear families, Σᵢ (g(θᵀφᵢ) − g(θ̄ᵀφᵢ))² + λ‖θ − θ̄‖²
    /// for the generalized linear family.
    pub fn distance_sq(&self, theta: &[f64]) -> Result<f64> {
        check_len("parameter", self.d, theta.len())?;
        let diff: Vec<f64> = theta.iter().zip(&self.theta).map(|(a, b)| a - b).collect();
        let ridge = self.lambda * diff.iter().map(|x| x * x).sum::<f64>();
        Ok(match self.link {
            Link::Identity => {
                let v = DVector::from_column_slice(&diff);
                (v.transpose() * &self.gram * &v)[(0, 0)] + ridge
            }
            Link::Logistic { .. } => {
                self.features
                    .chunks(self.d)
                    .map(|phi| (self.predict_raw(theta, phi) - self.predict_raw(&self.theta, phi)).powi(2))
                    .sum::<f64>()
                    + ridge
            }
        })
    }

    /// Immutable snapshot of the current fit with confidence radius β.
    pub fn predictor(&self, beta: f64) -> Result<Predictor> {
        if self.fitted_epoch != Some(self.epoch) {
            return Err(Error::invalid(
                "least-squares state changed since the last fit; call fit() before querying",
            ));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta must be a nonnegative finite number"));
        }
        let g = self.regularized_gram();
        let inverse = match self.rule {
            WidthRule::Interval => {
                let mut m = DMatrix::zeros(self.d, self.d);
                for i in 0..self.d {
                    m[(i, i)] = if g[(i, i)] > 0.0 { 1.0 / g[(i, i)] } else { f64::INFINITY };
                }
                m
            }
            _ => g.cholesky().ok_or(Error::SingularGram)?.inverse(),
        };
        Ok(Predictor {
            theta: self.theta.clone(),
            inverse,
            beta,
            bound: self.bound,
            link: self.link,
            rule: self.rule,
            epoch: self.epoch,
        })
    }
}

/// A fitted function f̄ together with its confidence width.
#[derive(Clone, Debug)]
pub struct Predictor {
    theta: Vec<f64>,
    inverse: DMatrix<f64>,
    beta: f64,
    bound: f64,
    link: Link,
    rule: WidthRule,
    epoch: u64,
}

impl Predictor {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// (G + λI)⁻¹ (diagonal for the interval rule).
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// g(θ̄ᵀφ) without clamping.
    pub fn raw(&self, phi: &[f64]) -> f64 {
        self.link.apply(phi.iter().zip(&self.theta).map(|(a, b)| a * b).sum())
    }

    /// g(θ̄ᵀφ) clamped to [0, bound].
    pub fn value(&self, phi: &[f64]) -> f64 {
        self.raw(phi).clamp(0.0, self.bound)
    }

    /// ‖φ‖_{(G+λI)⁻¹}.
    pub fn data_norm(&self, phi: &[f64]) -> f64 {
        let mut q = 0.0;
        for (i, &pi) in phi.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (j, &pj) in phi.iter().enumerate() {
                if pj != 0.0 {
                    q += pi * self.inverse[(i, j)] * pj;
                }
            }
        }
        if q.is_nan() {
            f64::INFINITY
        } else {
            q.max(0.0).sqrt()
        }
    }

    /// sup |f(φ) − f̃(φ)| over pairs in the confidence set, clamped to [0, bound].
    pub fn width(&self, phi: &[f64]) -> f64 {
        if self.beta == 0.0 {
            return 0.0;
        }
        match self.rule {
            WidthRule::Ellipsoid => (2.0 * self.beta.sqrt() * self.data_norm(phi)).min(self.bound),
            WidthRule::LinkEnvelope { ratio } => {
                (2.0 * self.beta.sqrt() * ratio * self.data_norm(phi)).min(self.bound)
            }
            WidthRule::Interval => {
                let Some(i) = phi.iter().position(|&x| x != 0.0) else {
                    return 0.0;
                };
                let inv = self.inverse[(i, i)];
                if !inv.is_finite() {
                    return self.bound;
                }
                let half = (self.beta * inv).sqrt() * phi[i].abs();
                let c = self.theta[i] * phi[i];
                ((c + half).min(self.bound) - (c - half).max(0.0)).clamp(0.0, self.bound)
            }
        }
    }

    /// Largest value in the confidence set: f̄ + √β‖φ‖ for the linear rule.
    pub fn upper(&self, phi: &[f64]) -> f64 {
        match self.rule {
            WidthRule::Ellipsoid => {
                if self.beta == 0.0 {
                    return self.value(phi);
                }
                (self.raw(phi) + self.beta.sqrt() * self.data_norm(phi)).clamp(0.0, self.bound)
            }
            _ => (self.value(phi) + self.width(phi)).min(self.bound),
        }
    }
}

/// β_t = 8σ²(log N − ln δ) + 2αt(8·r_max + √(8σ² ln(4t²/δ))).
pub fn beta_schedule(t: usize, delta: f64, alpha: f64, sigma: f64, log_covering: f64, r_max: f64) -> f64 {
    let s2 = sigma * sigma;
    let base = 8.0 * s2 * (log_covering - delta.ln());
    if t == 0 || alpha == 0.0 {
        return base;
    }
    let tf = t as f64;
    base + 2.0 * alpha * tf * (8.0 * r_max + (8.0 * s2 * (4.0 * tf * tf / delta).ln()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(d: usize, lambda: f64) -> LeastSquaresState {
        LeastSquaresState::new(d, lambda, Link::Identity, WidthRule::Ellipsoid, 1.0).unwrap()
    }

    #[test]
    fn interpolates_noiseless_data() {
        let mut ls = linear(2, 1e-8);
        let theta = [0.3, -0.2];
        for phi in [[1.0, 0.0], [0.5, 1.0], [0.2, 0.7]] {
            ls.push(&phi, phi[0] * theta[0] + phi[1] * theta[1]).unwrap();
        }
        let fit = ls.fit().unwrap().to_vec();
        assert!((fit[0] - 0.3).abs() < 1e-6 && (fit[1] + 0.2).abs() < 1e-6);
        assert!(ls.gradient_norm(&fit) < 1e-8);
    }

    #[test]
    fn constant_class() {
        let mut ls = linear(1, 0.0);
        ls.push(&[1.0], 0.5).unwrap();
        assert!((ls.fit().unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_gram_without_ridge() {
        let mut ls = linear(2, 0.0);
        ls.push(&[1.0, 1.0], 0.5).unwrap();
        assert!(matches!(ls.fit(), Err(Error::SingularGram)));
    }

    #[test]
    fn one_dimensional_width() {
        let mut ls = linear(1, 0.0);
        ls.push(&[1.0], 0.3).unwrap();
        ls.fit().unwrap();
        let p = ls.predictor(0.04).unwrap();
        assert!((p.width(&[1.0]) - 0.4).abs() < 1e-12);
        assert_eq!(ls.predictor(0.0).unwrap().width(&[1.0]), 0.0);
        assert_eq!(ls.predictor(1e6).unwrap().width(&[1.0]), 1.0);
    }

    #[test]
    fn stale_snapshot_is_rejected() {
        let mut ls = linear(1, 1e-6);
        ls.push(&[1.0], 0.3).unwrap();
        assert!(ls.predictor(1.0).is_err());
        ls.fit().unwrap();
        assert!(ls.predictor(1.0).is_ok());
    }

    #[test]
    fn tabular_intervals() {
        let mut ls = LeastSquaresState::new(3, 0.0, Link::Identity, WidthRule::Interval, 1.0).unwrap();
        for _ in 0..4 {
            ls.push(&[1.0, 0.0, 0.0], 0.9).unwrap();
        }
        ls.fit().unwrap();
        let p = ls.predictor(0.16).unwrap();
        // half-width √(0.16/4) = 0.2, interval [0.7, 1.1] ∩ [0, 1].
        assert!((p.width(&[1.0, 0.0, 0.0]) - 0.3).abs() < 1e-12);
        assert_eq!(p.width(&[0.0, 1.0, 0.0]), 1.0);
    }

    #[test]
    fn glm_fit_recovers_parameter() {
        let link = Link::Logistic { scale: 1.0 };
        let mut ls = LeastSquaresState::new(2, 1e-9, link, WidthRule::LinkEnvelope { ratio: 1.0 }, 1.0).unwrap();
        let theta = [0.8, -0.5];
        for i in 0..20 {
            let phi = [1.0, i as f64 / 10.0 - 1.0];
            ls.push(&phi, link.apply(phi[0] * theta[0] + phi[1] * theta[1])).unwrap();
        }
        let fit = ls.fit().unwrap().to_vec();
        assert!((fit[0] - 0.8).abs() < 1e-5 && (fit[1] + 0.5).abs() < 1e-5, "{fit:?}");
    }

    #[test]
    fn beta_formula() {
        assert_eq!(beta_schedule(10, 0.1, 0.0, 0.0, 3.0, 1.0), 0.0);
        let b1 = beta_schedule(10, 0.1, 0.0, 0.5, 3.0, 1.0);
        let b2 = beta_schedule(10, 0.1, 0.0, 1.0, 3.0, 1.0);
        assert!((b2 - 4.0 * b1).abs() < 1e-12);
        let t = 1000.0_f64;
        let expected = 8.0 * 0.25 * (1e6f64.ln() - 0.1f64.ln())
            + 2.0 / t * t * (8.0 + (8.0 * 0.25 * (4.0 * t * t / 0.1).ln()).sqrt());
        let got = beta_schedule(1000, 0.1, 1.0 / t, 0.5, 1e6f64.ln(), 1.0);
        assert!((got - expected).abs() < 1e-9);
    }
}
