//! Parametric reward and utility classes.
//!
//! A reward class maps a query (h, s, a, μ_h) to a feature vector φ ∈ ℝ^d and
//! predicts g(θᵀφ) clamped to [0, r_max]. The link g is the identity for the
//! linear and tabular families and a scaled logistic for the generalized
//! linear family.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{Density, Dims, IntrinsicReward};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Linear,
    GeneralizedLinear,
    Tabular,
}

/// How φ(h, s, a, μ_h) is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// e_{(h,s,a)}, d = H·S·A.
    OneHot,
    /// Fixed per-cell features `table[(h,s,a) * d_base + j]`, optionally
    /// followed by the crowd-aversion feature 1 − μ_h(s, a).
    Table {
        d_base: usize,
        table: Vec<f64>,
        #[serde(default)]
        congestion: bool,
    },
}

impl FeatureSpec {
    pub fn dim(&self, dims: Dims) -> usize {
        match self {
            FeatureSpec::OneHot => dims.len(),
            FeatureSpec::Table {
                d_base, congestion, ..
            } => d_base + usize::from(*congestion),
        }
    }

    fn validate(&self, dims: Dims) -> Result<()> {
        if let FeatureSpec::Table { d_base, table, .. } = self {
            check_len("feature table", dims.len() * d_base, table.len())?;
            if table.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("feature table has non-finite entries"));
            }
        }
        Ok(())
    }

    pub fn write(&self, dims: Dims, h: usize, s: usize, a: usize, step: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let i = dims.index(h, s, a);
        match self {
            FeatureSpec::OneHot => {
                out.resize(dims.len(), 0.0);
                out[i] = 1.0;
            }
            FeatureSpec::Table {
                d_base,
                table,
                congestion,
            } => {
                out.extend_from_slice(&table[i * d_base..(i + 1) * d_base]);
                if *congestion {
                    out.push(1.0 - step[s * dims.actions + a]);
                }
            }
        }
    }

    /// Largest ‖φ‖₂ over the domain (the congestion feature ranges over [0, 1]).
    pub fn max_norm(&self) -> f64 {
        match self {
            FeatureSpec::OneHot => 1.0,
            FeatureSpec::Table {
                d_base,
                table,
                congestion,
            } => {
                let extra = if *congestion { 1.0 } else { 0.0 };
                if *d_base == 0 {
                    return extra;
                }
                table
                    .chunks(*d_base)
                    .map(|row| (row.iter().map(|x| x * x).sum::<f64>() + extra).sqrt())
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// Output nonlinearity of a class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Link {
    Identity,
    /// g(z) = scale · σ(z).
    Logistic { scale: f64 },
}

impl Link {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Link::Identity => z,
            Link::Logistic { scale } => scale * sigmoid(z),
        }
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Link::Identity => 1.0,
            Link::Logistic { scale } => {
                let p = sigmoid(z);
                scale * p * (1.0 - p)
            }
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A reward function class {g(θᵀφ(·)) : ‖θ‖₂ ≤ C_θ} over [H]×S×A×Δ(S×A).
#[derive(Clone, Debug, PartialEq)]
pub struct RewardClass {
    pub family: Family,
    pub features: FeatureSpec,
    pub dims: Dims,
    pub c_theta: f64,
    pub c_phi: f64,
    pub r_max: f64,
}

impl RewardClass {
    pub fn new(
        family: Family,
        features: FeatureSpec,
        dims: Dims,
        c_theta: f64,
        c_phi: Option<f64>,
        r_max: f64,
    ) -> Result<Self> {
        features.validate(dims)?;
        if family == Family::Tabular && features != FeatureSpec::OneHot {
            return Err(Error::invalid("the tabular family requires one-hot features"));
        }
        if !(c_theta > 0.0 && r_max >= 0.0) {
            return Err(Error::invalid("C_theta must be positive and r_max nonnegative"));
        }
        let c_phi = c_phi.unwrap_or_else(|| features.max_norm());
        Ok(RewardClass {
            family,
            features,
            dims,
            c_theta,
            c_phi,
            r_max,
        })
    }

    /// One free value per (h, s, a) cell, each in [0, r_max].
    pub fn tabular(dims: Dims, r_max: f64) -> Self {
        RewardClass {
            family: Family::Tabular,
            features: FeatureSpec::OneHot,
            dims,
            c_theta: r_max.max(f64::MIN_POSITIVE) * (dims.len() as f64).sqrt(),
            c_phi: 1.0,
            r_max,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.dim(self.dims)
    }

    pub fn link(&self) -> Link {
        match self.family {
            Family::GeneralizedLinear => Link::Logistic { scale: self.r_max },
            _ => Link::Identity,
        }
    }

    pub fn features(&self, h: usize, s: usize, a: usize, step: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.features.write(self.dims, h, s, a, step, &mut out);
        out
    }

    pub fn predict(&self, theta: &[f64], h: usize, s: usize, a: usize, step: &[f64]) -> f64 {
        let phi = self.features(h, s, a, step);
        let z: f64 = phi.iter().zip(theta).map(|(x, t)| x * t).sum();
        self.link().apply(z).clamp(0.0, self.r_max)
    }

    /// r_θ(μ) as a vector over (h, s, a).
    pub fn predict_vector(&self, theta: &[f64], mu: &Density) -> Vec<f64> {
        let d = self.dims;
        (0..d.len())
            .map(|i| {
                let (h, s, a) = d.unindex(i);
                self.predict(theta, h, s, a, mu.step(h))
            })
            .collect()
    }

    /// Lipschitz constant of θ ↦ r_θ(x) in ‖·‖₂, uniformly in x.
    pub fn parameter_lipschitz(&self) -> f64 {
        match self.link() {
            Link::Identity => self.c_phi,
            Link::Logistic { scale } => scale * 0.25 * self.c_phi,
        }
    }

    /// Ratio of the largest to the smallest link slope on |z| ≤ C_θ·C_φ.
    pub fn link_slope_ratio(&self) -> f64 {
        match self.link() {
            Link::Identity => 1.0,
            Link::Logistic { scale } => {
                let lo = Link::Logistic { scale }.derivative(self.c_theta * self.c_phi);
                (scale * 0.25) / lo
            }
        }
    }

    /// log N(𝓡, α, ‖·‖∞) ≤ d · ln(1 + 2·C_θ·L/α).
    pub fn log_covering(&self, alpha: f64) -> f64 {
        log_covering_number(self.dim(), self.c_theta, self.parameter_lipschitz(), alpha)
    }

    /// Closed-form upper bound on dim_E(𝓡, ε) for the linear and generalized
    /// linear families.
    pub fn eluder_dimension_bound(&self, epsilon: f64) -> f64 {
        let e = std::f64::consts::E;
        let d = self.dim() as f64;
        match self.link() {
            Link::Identity => {
                3.0 * d * e / (e - 1.0)
                    * (3.0 + 3.0 * (2.0 * self.c_theta / epsilon).powi(2)).ln()
                    + 1.0
            }
            Link::Logistic { scale } => {
                let r = self.link_slope_ratio();
                let h_hi = scale * 0.25;
                3.0 * d * r * r * e / (e - 1.0)
                    * (3.0 * r * r + 3.0 * r * r * (2.0 * self.c_theta * h_hi / epsilon).powi(2))
                        .ln()
                    + 1.0
            }
        }
    }
}

pub fn log_covering_number(d: usize, c_theta: f64, lipschitz: f64, alpha: f64) -> f64 {
    d as f64 * (1.0 + 2.0 * c_theta * lipschitz / alpha).ln()
}

/// Named family selector for model JSON. `zero` means r* ≡ 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecFamily {
    #[default]
    Zero,
    Linear,
    GeneralizedLinear,
    Tabular,
}

/// Reward family plus the true parameter, as stored in model JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    #[serde(default)]
    pub family: SpecFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_spec: Option<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta: Vec<f64>,
    #[serde(rename = "C_theta", default, skip_serializing_if = "Option::is_none")]
    pub c_theta: Option<f64>,
    #[serde(rename = "C_phi", default, skip_serializing_if = "Option::is_none")]
    pub c_phi: Option<f64>,
}

impl RewardSpec {
    pub fn class(&self, dims: Dims, r_max: f64) -> Result<Option<RewardClass>> {
        let family = match self.family {
            SpecFamily::Zero => return Ok(None),
            SpecFamily::Linear => Family::Linear,
            SpecFamily::GeneralizedLinear => Family::GeneralizedLinear,
            SpecFamily::Tabular => Family::Tabular,
        };
        let features = match (&self.feature_spec, family) {
            (Some(f), _) => f.clone(),
            (None, Family::Tabular) => FeatureSpec::OneHot,
            (None, _) => return Err(Error::config("reward_spec.feature_spec", "required for this family")),
        };
        let theta_norm = self.theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c_theta = self.c_theta.unwrap_or(theta_norm.max(1.0));
        if family == Family::Tabular {
            let mut class = RewardClass::tabular(dims, r_max);
            if let Some(c) = self.c_theta {
                class.c_theta = c;
            }
            return Ok(Some(class));
        }
        RewardClass::new(family, features, dims, c_theta, self.c_phi, r_max).map(Some)
    }

    pub fn build(&self, dims: Dims, r_max: f64) -> Result<IntrinsicReward> {
        match self.class(dims, r_max)? {
            None => Ok(IntrinsicReward::Zero),
            Some(class) => {
                check_len("reward_spec.theta", class.dim(), self.theta.len())?;
                Ok(IntrinsicReward::Parametric {
                    class,
                    theta: self.theta.clone(),
                })
            }
        }
    }

    pub fn from_reward(reward: &IntrinsicReward) -> Self {
        match reward {
            IntrinsicReward::Zero => RewardSpec::default(),
            IntrinsicReward::Parametric { class, theta } => RewardSpec {
                family: match class.family {
                    Family::Linear => SpecFamily::Linear,
                    Family::GeneralizedLinear => SpecFamily::GeneralizedLinear,
                    Family::Tabular => SpecFamily::Tabular,
                },
                feature_spec: Some(class.features.clone()),
                theta: theta.clone(),
                c_theta: Some(class.c_theta),
                c_phi: Some(class.c_phi),
            },
        }
    }
}

/// Linear utility class {μ ↦ θᵀΦμ : ‖θ‖₂ ≤ C_θ}, outputs clamped to [0, U_max].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityClass {
    /// Row-major d × (H·S·A).
    pub features: Vec<f64>,
    pub d: usize,
    #[serde(rename = "C_theta")]
    pub c_theta: f64,
    #[serde(rename = "U_max")]
    pub u_max: f64,
}

impl UtilityClass {
    pub fn new(features: Vec<f64>, d: usize, c_theta: f64, u_max: f64, dims: Dims) -> Result<Self> {
        check_len("utility features", d * dims.len(), features.len())?;
        if d == 0 || !(c_theta > 0.0) || !(u_max > 0.0) {
            return Err(Error::invalid("utility class needs d > 0, C_theta > 0, U_max > 0"));
        }
        Ok(UtilityClass {
            features,
            d,
            c_theta,
            u_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn n(&self) -> usize {
        self.features.len() / self.d
    }

    /// Φμ.
    pub fn embed(&self, mu: &[f64]) -> Vec<f64> {
        self.features
            .chunks(self.n())
            .map(|row| row.iter().zip(mu).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Φᵀθ: the linear coefficient vector of U_θ.
    pub fn coefficients(&self, theta: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.n()];
        for (row, &t) in self.features.chunks(self.n()).zip(theta) {
            for (ci, x) in c.iter_mut().zip(row) {
                *ci += t * x;
            }
        }
        c
    }

    /// C_φ = sup over densities of ‖Φμ‖₂, bounded by the row-wise maxima times H.
    pub fn c_phi(&self, horizon: usize) -> f64 {
        self.features
            .chunks(self.n())
            .map(|row| {
                let m = row.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                (m * horizon as f64).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn log_covering(&self, alpha: f64, horizon: usize) -> f64 {
        log_covering_number(self.d, self.c_theta, self.c_phi(horizon), alpha)
    }
}
