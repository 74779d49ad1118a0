//! Experiment configuration: JSON schema, validation and resolution into a
//! concrete game, utility and population.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::LearnerKind;
use crate::error::{Error, Result};
use crate::estimation::{FeatureSpec, RewardClass, RewardSpec, SpecFamily, UtilityClass};
use crate::mediator::Strategy;
use crate::model::{compute_density, Dims, MfgModel, ModelSpec, Policy, Transitions};
use crate::planner::{best_utility_density, FrankWolfeOptions, NegSquaredDistance, Utility, UtilityOptimum};
use crate::rng::{child_rng, Stream};

/// One experiment: a game, a population, a mediator and a utility.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Explicit game. Exactly one of `model` and `generator` must be given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    pub population: Vec<PopulationGroup>,
    pub mediator: MediatorConfig,
    pub utility: UtilitySpec,
    #[serde(rename = "T")]
    pub rounds: usize,
    /// Population size; must equal the sum of the group counts when given.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    /// Reward-noise scale σ of revealed trajectories.
    #[serde(default)]
    pub sigma: f64,
    /// Utility-noise scale σ_U of revealed utility samples.
    #[serde(rename = "sigma_U", default)]
    pub sigma_u: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Output directory for `rounds.csv` and `summary.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    0.1
}

/// Random game: Dirichlet(1) kernel rows and initial distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    /// Defaults to the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub reward: GeneratedReward,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
}

fn default_r_max() -> f64 {
    1.0
}

/// Family of the generated intrinsic reward. Generated rewards are realizable
/// in their class: linear rewards use table features in [0, 1] and
/// parameters in [0, r_max/d], tabular rewards use cell values in [0, r_max].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratedReward {
    #[default]
    Zero,
    Linear {
        #[serde(default = "default_d_base")]
        d_base: usize,
        #[serde(default = "default_true")]
        congestion: bool,
    },
    Tabular,
}

fn default_d_base() -> usize {
    3
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationGroup {
    pub count: usize,
    pub kind: LearnerKind,
    #[serde(default)]
    pub params: LearnerParams,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerParams {
    /// OGD step scale η₀ (η_t = η₀/√t).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    /// Hedge rate η (default 1/√T).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub init: InitKind,
}

/// Starting point of a learner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Density of a random policy drawn from the agent's own stream.
    #[default]
    Random,
    /// Density of the uniform policy.
    Uniform,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediatorConfig {
    pub strategy: Strategy,
    /// Defaults to the top-level δ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Default OGD step scale for every OGD group without its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// σ assumed in β_t; defaults to the top-level σ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// σ_U assumed in β^U_k; defaults to the top-level σ_U.
    #[serde(rename = "sigma_U", default, skip_serializing_if = "Option::is_none")]
    pub sigma_u: Option<f64>,
    /// T_epoch = ⌈T^exponent⌉ (unknown-utility default 5/6).
    #[serde(rename = "T_epoch_exponent", default, skip_serializing_if = "Option::is_none")]
    pub t_epoch_exponent: Option<f64>,
    /// Explicit T_epoch (takes precedence over the exponent).
    #[serde(rename = "T_epoch", default, skip_serializing_if = "Option::is_none")]
    pub t_epoch: Option<usize>,
    #[serde(default = "default_beta_slack")]
    pub beta_slack: f64,
    /// Covering scale α of the reward class (default 1/T).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Covering scale α of the utility class (default 1/T).
    #[serde(rename = "alpha_U", default, skip_serializing_if = "Option::is_none")]
    pub alpha_u: Option<f64>,
    /// Reward class used by the mediator; defaults to the true reward's class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_class: Option<RewardSpec>,
    /// Utility class for the unknown-utility strategy; defaults to the class
    /// of a `linear_class` utility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility_class: Option<UtilityClass>,
    #[serde(default = "default_fw_iterations")]
    pub fw_iterations: usize,
    /// Run a known-utility mediator on the same observation stream and report
    /// the per-round difference of the emitted rewards (unknown-utility only).
    #[serde(default)]
    pub shadow: bool,
}

fn default_lambda() -> f64 {
    1e-6
}

fn default_beta_slack() -> f64 {
    1.1
}

fn default_fw_iterations() -> usize {
    FrankWolfeOptions::default().iterations
}

/// The mediator's objective U.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    /// U(μ) = ⟨c, μ⟩.
    Linear { c: Vec<f64> },
    /// c drawn uniformly from [0, 1]^{H·S·A}.
    LinearRandom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// U(μ) = −‖μ − target‖₂²; the target defaults to the uniform-policy density.
    NegSqDist {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Vec<f64>>,
    },
    /// U(μ) = θᵀΦμ with Φ a row-major d × (H·S·A) matrix.
    LinearClass {
        features: Vec<f64>,
        d: usize,
        theta: Vec<f64>,
        #[serde(rename = "C_theta", default, skip_serializing_if = "Option::is_none")]
        c_theta: Option<f64>,
        #[serde(rename = "U_max", default, skip_serializing_if = "Option::is_none")]
        u_max: Option<f64>,
    },
    /// Φ uniform in [0, 1], θ uniform in [0, 1/d]; C_θ = 1, U_max = H.
    LinearClassRandom {
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl ExperimentConfig {
    /// Parses JSON, reporting the offending field path and position.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(
                if path.is_empty() || path == "." { "<root>".to_string() } else { path },
                format!("{} (line {}, column {})", strip_position(&inner), inner.line(), inner.column()),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural checks that do not need the resolved game.
    pub fn validate(&self) -> Result<()> {
        if self.model.is_some() == self.generator.is_some() {
            return Err(Error::config("model", "give exactly one of `model` and `generator`"));
        }
        if self.rounds == 0 {
            return Err(Error::config("T", "must be at least 1"));
        }
        if self.population.is_empty() {
            return Err(Error::config("population", "needs at least one group"));
        }
        for (i, g) in self.population.iter().enumerate() {
            if g.count == 0 {
                return Err(Error::config(format!("population[{i}].count"), "must be at least 1"));
            }
            if let Some(eta0) = g.params.eta0 {
                if !(eta0 > 0.0 && eta0.is_finite()) {
                    return Err(Error::config(format!("population[{i}].params.eta0"), "must be positive"));
                }
            }
            if let Some(eta) = g.params.eta {
                if !(eta > 0.0 && eta.is_finite()) {
                    return Err(Error::config(format!("population[{i}].params.eta"), "must be positive"));
                }
            }
        }
        let total = self.population_size();
        if total == 0 {
            return Err(Error::config("N", "must be at least 1"));
        }
        if let Some(n) = self.agents {
            if n != total {
                return Err(Error::config(
                    "N",
                    format!("equals {n} but the population groups sum to {total}"),
                ));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma", "must be nonnegative"));
        }
        if !(self.sigma_u >= 0.0 && self.sigma_u.is_finite()) {
            return Err(Error::config("sigma_U", "must be nonnegative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0, 1)"));
        }
        let m = &self.mediator;
        if let Some(d) = m.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::config("mediator.delta", "must lie in (0, 1)"));
            }
        }
        if let Some(e) = m.eta0 {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::config("mediator.eta0", "must be positive"));
            }
        }
        if !(m.lambda >= 0.0 && m.lambda.is_finite()) {
            return Err(Error::config("mediator.lambda", "must be nonnegative"));
        }
        if !(m.beta_slack > 0.0 && m.beta_slack.is_finite()) {
            return Err(Error::config("mediator.beta_slack", "must be positive"));
        }
        if let Some(x) = m.t_epoch_exponent {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::config("mediator.T_epoch_exponent", "must lie in (0, 1]"));
            }
        }
        if m.t_epoch == Some(0) {
            return Err(Error::config("mediator.T_epoch", "must be at least 1"));
        }
        for (field, v) in [("mediator.sigma", m.sigma), ("mediator.sigma_U", m.sigma_u)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(field, "must be nonnegative"));
                }
            }
        }
        for (field, v) in [("mediator.alpha", m.alpha), ("mediator.alpha_U", m.alpha_u)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(field, "must be nonnegative"));
                }
            }
        }
        if m.shadow && m.strategy != Strategy::UnknownUtility {
            return Err(Error::config("mediator.shadow", "only available for the unknown_utility strategy"));
        }
        if let Some(g) = &self.generator {
            if g.states == 0 || g.actions == 0 || g.horizon == 0 {
                return Err(Error::config("generator", "S, A and H must be positive"));
            }
            if !(g.r_max >= 0.0 && g.r_max.is_finite()) {
                return Err(Error::config("generator.r_max", "must be nonnegative"));
            }
            if let GeneratedReward::Linear { d_base, congestion } = g.reward {
                if d_base + usize::from(congestion) == 0 {
                    return Err(Error::config("generator.reward", "linear rewards need at least one feature"));
                }
            }
        }
        Ok(())
    }

    pub fn population_size(&self) -> usize {
        self.population.iter().map(|g| g.count).sum()
    }
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

/// A configuration resolved into concrete objects.
#[derive(Clone, Debug)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub model: Arc<MfgModel>,
    pub utility: Utility,
    /// Set for `linear_class` utilities: the class and the true parameter.
    pub utility_class: Option<(UtilityClass, Vec<f64>)>,
    /// max_π U(μ^π) on the true game, cached for the steering gap.
    pub optimum: UtilityOptimum,
}

impl Setup {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = Arc::new(resolve_model(&config)?);
        let (utility, utility_class) = resolve_utility(&config, &model)?;
        let fw = FrankWolfeOptions {
            iterations: config.mediator.fw_iterations,
        };
        let optimum = best_utility_density(&model, &utility, fw)?;
        Ok(Setup {
            config,
            model,
            utility,
            utility_class,
            optimum,
        })
    }

    pub fn dims(&self) -> Dims {
        self.model.dims
    }

    pub fn rounds(&self) -> usize {
        self.config.rounds
    }
}

fn resolve_model(config: &ExperimentConfig) -> Result<MfgModel> {
    if let Some(spec) = &config.model {
        return spec.build().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("model", other.to_string()),
        });
    }
    let g = config.generator.as_ref().expect("validated");
    let dims = Dims::new(g.states, g.actions, g.horizon).map_err(|e| Error::config("generator", e.to_string()))?;
    let mut rng = child_rng(g.seed.unwrap_or(config.seed), Stream::ModelGeneration, 0, 0);
    let base = MfgModel::random(dims, &mut rng);
    let transitions: Transitions = base.transitions;
    let spec = match g.reward {
        GeneratedReward::Zero => RewardSpec::default(),
        GeneratedReward::Linear { d_base, congestion } => {
            let d = d_base + usize::from(congestion);
            let table: Vec<f64> = (0..dims.len() * d_base).map(|_| rng.random::<f64>()).collect();
            let theta: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * g.r_max / d as f64).collect();
            RewardSpec {
                family: SpecFamily::Linear,
                feature_spec: Some(FeatureSpec::Table {
                    d_base,
                    table,
                    congestion,
                }),
                theta,
                c_theta: Some((g.r_max / (d as f64).sqrt()).max(f64::MIN_POSITIVE)),
                c_phi: None,
            }
        }
        GeneratedReward::Tabular => RewardSpec {
            family: SpecFamily::Tabular,
            feature_spec: None,
            theta: (0..dims.len()).map(|_| rng.random::<f64>() * g.r_max).collect(),
            c_theta: None,
            c_phi: None,
        },
    };
    let reward = spec.build(dims, g.r_max)?;
    MfgModel::new(dims, base.mu1, transitions, reward, g.r_max)
}

fn resolve_utility(config: &ExperimentConfig, model: &MfgModel) -> Result<(Utility, Option<(UtilityClass, Vec<f64>)>)> {
    let dims = model.dims;
    let n = dims.len();
    match &config.utility {
        UtilitySpec::Linear { c } => {
            if c.len() != n {
                return Err(Error::config("utility.c", format!("needs {n} entries, got {}", c.len())));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("utility.c", "entries must be finite"));
            }
            Ok((Utility::linear(c.clone()), None))
        }
        UtilitySpec::LinearRandom { seed } => {
            let mut rng = child_rng(seed.unwrap_or(config.seed), Stream::UtilityGeneration, 0, 0);
            Ok((Utility::linear((0..n).map(|_| rng.random::<f64>()).collect()), None))
        }
        UtilitySpec::NegSqDist { target } => {
            let target = match target {
                Some(t) => {
                    if t.len() != n {
                        return Err(Error::config("utility.target", format!("needs {n} entries, got {}", t.len())));
                    }
                    t.clone()
                }
                None => compute_density(model, &Policy::uniform(dims))?.into_values(),
            };
            Ok((Utility::LipschitzGeneral(Arc::new(NegSquaredDistance { target })), None))
        }
        UtilitySpec::LinearClass {
            features,
            d,
            theta,
            c_theta,
            u_max,
        } => {
            if theta.len() != *d {
                return Err(Error::config("utility.theta", format!("needs {d} entries, got {}", theta.len())));
            }
            let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
            let class = UtilityClass::new(
                features.clone(),
                *d,
                c_theta.unwrap_or(norm.max(1.0)),
                u_max.unwrap_or(dims.horizon as f64),
                dims,
            )
            .map_err(|e| Error::config("utility", e.to_string()))?;
            let c = class.coefficients(theta);
            Ok((Utility::linear(c), Some((class, theta.clone()))))
        }
        UtilitySpec::LinearClassRandom { d, seed } => {
            if *d == 0 {
                return Err(Error::config("utility.d", "must be at least 1"));
            }
            let mut rng = child_rng(seed.unwrap_or(config.seed), Stream::UtilityGeneration, 1, 0);
            let features: Vec<f64> = (0..d * n).map(|_| rng.random::<f64>()).collect();
            let theta: Vec<f64> = (0..*d).map(|_| rng.random::<f64>() / *d as f64).collect();
            let class = UtilityClass::new(features, *d, 1.0, dims.horizon as f64, dims)?;
            let c = class.coefficients(&theta);
            Ok((Utility::linear(c), Some((class, theta))))
        }
    }
}

/// The reward class the mediator uses: the configured one or the true one.
pub(crate) fn mediator_reward_class(config: &ExperimentConfig, model: &MfgModel) -> Result<RewardClass> {
    if let Some(spec) = &config.mediator.reward_class {
        return spec
            .class(model.dims, model.r_max)
            .map_err(|e| Error::config("mediator.reward_class", e.to_string()))?
            .ok_or_else(|| Error::config("mediator.reward_class", "the zero family cannot be learned"));
    }
    match &model.reward {
        crate::model::IntrinsicReward::Parametric { class, .. } => Ok(class.clone()),
        crate::model::IntrinsicReward::Zero => Err(Error::config(
            "mediator.reward_class",
            "required when the game has no parametric intrinsic reward",
        )),
    }
}
