//! Steering strategies as stateful controllers.
//!
//! A [`Mediator`] only ever sees what the protocol reveals: after each round,
//! the population density μ̄ᵗ, one trajectory with noisy intrinsic rewards and
//! (for the unknown-utility strategy) one noisy utility sample. It never has
//! access to the agents or their policies.

use std::sync::Arc;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    beta_schedule, confidence_radii, episode_trigger, LeastSquaresState, RewardClass, RewardConfidence,
    TransitionConfidenceSet, TransitionCounts, UtilityClass,
};
use crate::model::{Density, Dims, MfgModel, Policy, Trajectory};
use crate::planner::{
    best_utility_density, optimistic_plan, optimistic_plan_linear_ellipsoid, FrankWolfeOptions,
    OptimisticLinearUtility, PlanResult, Utility,
};
use crate::steering::SteeringReward;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Target-density reward on a known model.
    KnownModel,
    /// Fixed R_z for the optimal policy of a known model.
    FixedPolicy,
    /// Unknown transitions, zero intrinsic reward: optimistic exploration with R_z.
    Scenario1,
    /// Unknown transitions and intrinsic reward: R_nz from a reward confidence set.
    Scenario2,
    /// Scenario 2 with an unknown utility learned from noisy samples.
    UnknownUtility,
}

/// What the protocol reveals to the mediator after a round.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub population_density: &'a Density,
    pub trajectory: &'a Trajectory,
    pub utility_sample: Option<f64>,
}

/// Public knowledge about the game: sizes, initial distribution, reward bound
/// and the horizon T of the interaction.
#[derive(Clone, Debug)]
pub struct MediatorPrior {
    pub dims: Dims,
    pub mu1: Vec<f64>,
    pub r_max: f64,
    pub rounds: usize,
}

impl MediatorPrior {
    pub fn from_model(model: &MfgModel, rounds: usize) -> Self {
        MediatorPrior {
            dims: model.dims,
            mu1: model.mu1.clone(),
            r_max: model.r_max,
            rounds,
        }
    }
}

/// Numeric settings of the learning strategies.
#[derive(Clone, Debug, PartialEq)]
pub struct MediatorSettings {
    pub delta: f64,
    pub lambda: f64,
    /// Reward-noise scale σ used in β_t.
    pub sigma: f64,
    /// Utility-noise scale σ_U used in β^U_k.
    pub sigma_u: f64,
    /// Covering scale α for the reward class (β_t).
    pub alpha: f64,
    /// Covering scale α for the utility class (β^U_k).
    pub alpha_u: f64,
    pub beta_slack: f64,
    /// Epoch cap T_epoch (the unknown-utility strategy, or forced elsewhere).
    pub t_epoch: Option<usize>,
    pub frank_wolfe: FrankWolfeOptions,
}

impl MediatorSettings {
    pub fn defaults(rounds: usize) -> Self {
        let alpha = 1.0 / rounds.max(1) as f64;
        MediatorSettings {
            delta: 0.1,
            lambda: 1e-6,
            sigma: 0.0,
            sigma_u: 0.0,
            alpha,
            alpha_u: alpha,
            beta_slack: 1.1,
            t_epoch: None,
            frank_wolfe: FrankWolfeOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("mediator.delta", "must lie in (0, 1)"));
        }
        if !(self.lambda >= 0.0) || !(self.sigma >= 0.0) || !(self.sigma_u >= 0.0) {
            return Err(Error::config("mediator", "lambda, sigma and sigma_U must be nonnegative"));
        }
        if !(self.alpha >= 0.0 && self.alpha_u >= 0.0 && self.beta_slack > 0.0) {
            return Err(Error::config("mediator", "alpha must be >= 0 and beta_slack > 0"));
        }
        if self.t_epoch == Some(0) {
            return Err(Error::config("mediator.T_epoch", "must be positive"));
        }
        Ok(())
    }
}

/// ⌈T^exponent⌉.
pub fn epoch_length(rounds: usize, exponent: f64) -> usize {
    ((rounds as f64).powf(exponent).ceil() as usize).max(1)
}

#[derive(Clone, Debug)]
struct RewardLearner {
    class: RewardClass,
    ls: LeastSquaresState,
    log_covering: f64,
}

#[derive(Clone, Debug)]
struct UtilityLearner {
    class: UtilityClass,
    ls: LeastSquaresState,
    log_covering: f64,
    current: Option<OptimisticLinearUtility>,
}

#[derive(Clone, Debug)]
pub struct Mediator {
    strategy: Strategy,
    prior: MediatorPrior,
    settings: MediatorSettings,
    fixed: Option<SteeringReward>,
    target_density: Option<Density>,
    policy: Policy,
    counts: TransitionCounts,
    confidence: TransitionConfidenceSet,
    utility: Option<Utility>,
    reward: Option<RewardLearner>,
    utility_learner: Option<UtilityLearner>,
    rounds_seen: usize,
    last_plan: Option<PlanResult>,
    last_emitted: Option<Arc<RewardConfidence>>,
}

impl Mediator {
    fn base(strategy: Strategy, prior: MediatorPrior, settings: MediatorSettings) -> Result<Self> {
        settings.validate()?;
        let dims = prior.dims;
        Ok(Mediator {
            strategy,
            policy: Policy::uniform(dims),
            counts: TransitionCounts::new(dims),
            confidence: TransitionConfidenceSet::full(dims),
            prior,
            settings,
            fixed: None,
            target_density: None,
            utility: None,
            reward: None,
            utility_learner: None,
            rounds_seen: 0,
            last_plan: None,
            last_emitted: None,
        })
    }

    /// Thm-1 style controller: R(μ) = μ* − μ + ‖μ* − μ‖∞·1 with μ* optimal on
    /// the known model.
    pub fn known_model(model: &MfgModel, utility: &Utility, rounds: usize, fw: FrankWolfeOptions) -> Result<Self> {
        let opt = best_utility_density(model, utility, fw)?;
        let mut m = Mediator::base(
            Strategy::KnownModel,
            MediatorPrior::from_model(model, rounds),
            MediatorSettings::defaults(rounds),
        )?;
        m.fixed = Some(SteeringReward::TargetDensity {
            target: opt.density.clone(),
        });
        m.target_density = Some(opt.density);
        m.policy = opt.policy;
        m.utility = Some(utility.clone());
        Ok(m)
    }

    /// Constant R_z for π* = argmax_π U(μ^π) on the known model.
    pub fn fixed_policy(model: &MfgModel, utility: &Utility, rounds: usize, fw: FrankWolfeOptions) -> Result<Self> {
        let opt = best_utility_density(model, utility, fw)?;
        let mut m = Mediator::base(
            Strategy::FixedPolicy,
            MediatorPrior::from_model(model, rounds),
            MediatorSettings::defaults(rounds),
        )?;
        m.fixed = Some(SteeringReward::PolicySteer {
            policy: opt.policy.clone(),
        });
        m.target_density = Some(opt.density);
        m.policy = opt.policy;
        m.utility = Some(utility.clone());
        Ok(m)
    }

    /// Optimistic exploration with unknown transitions and r* = 0.
    pub fn scenario1(prior: MediatorPrior, utility: Utility, settings: MediatorSettings) -> Result<Self> {
        utility.check_dim(prior.dims.len())?;
        let mut m = Mediator::base(Strategy::Scenario1, prior, settings)?;
        m.utility = Some(utility);
        Ok(m)
    }

    /// Optimistic exploration with unknown transitions and unknown r* ∈ `class`.
    pub fn scenario2(
        prior: MediatorPrior,
        utility: Utility,
        class: RewardClass,
        settings: MediatorSettings,
    ) -> Result<Self> {
        utility.check_dim(prior.dims.len())?;
        let mut m = Mediator::base(Strategy::Scenario2, prior, settings)?;
        m.utility = Some(utility);
        m.reward = Some(m.reward_learner(class)?);
        Ok(m)
    }

    /// Scenario 2 with a linear utility learned from noisy samples.
    pub fn unknown_utility(
        prior: MediatorPrior,
        utility_class: UtilityClass,
        class: RewardClass,
        settings: MediatorSettings,
    ) -> Result<Self> {
        if utility_class.features.len() != utility_class.d * prior.dims.len() {
            return Err(Error::config("mediator.utility_class", "feature matrix has the wrong size"));
        }
        let mut settings = settings;
        if settings.t_epoch.is_none() {
            settings.t_epoch = Some(epoch_length(prior.rounds, 5.0 / 6.0));
        }
        let mut m = Mediator::base(Strategy::UnknownUtility, prior, settings)?;
        m.reward = Some(m.reward_learner(class)?);
        let ls = LeastSquaresState::for_utility(&utility_class, m.settings.lambda)?;
        let log_covering = if m.settings.alpha_u > 0.0 {
            utility_class.log_covering(m.settings.alpha_u, m.prior.dims.horizon)
        } else {
            0.0
        };
        m.utility_learner = Some(UtilityLearner {
            class: utility_class,
            ls,
            log_covering,
            current: None,
        });
        Ok(m)
    }

    fn reward_learner(&self, class: RewardClass) -> Result<RewardLearner> {
        if class.dims != self.prior.dims {
            return Err(Error::config("mediator.reward_class", "dimensions differ from the model"));
        }
        let ls = LeastSquaresState::for_reward(&class, self.settings.lambda)?;
        let log_covering = if self.settings.alpha > 0.0 {
            class.log_covering(self.settings.alpha)
        } else {
            0.0
        };
        Ok(RewardLearner {
            class,
            ls,
            log_covering,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn settings(&self) -> &MediatorSettings {
        &self.settings
    }

    /// Current episode index k (1 before any trigger).
    pub fn episode(&self) -> usize {
        self.counts.episode_index()
    }

    /// Number of episode triggers so far.
    pub fn switches(&self) -> usize {
        self.counts.episode_index() - 1
    }

    pub fn boundaries(&self) -> &[usize] {
        self.counts.boundaries()
    }

    /// The current target policy π*^k.
    pub fn target_policy(&self) -> &Policy {
        &self.policy
    }

    pub fn target_density(&self) -> Option<&Density> {
        self.target_density.as_ref()
    }

    pub fn confidence_set(&self) -> &TransitionConfidenceSet {
        &self.confidence
    }

    pub fn counts(&self) -> &TransitionCounts {
        &self.counts
    }

    pub fn last_plan(&self) -> Option<&PlanResult> {
        self.last_plan.as_ref()
    }

    /// β_t for the round about to be played (data from all earlier rounds),
    /// multiplied by the configured slack.
    pub fn reward_beta(&self) -> Option<f64> {
        let r = self.reward.as_ref()?;
        let s = &self.settings;
        let t = self.rounds_seen + 1;
        Some(s.beta_slack * beta_schedule(t, s.delta, s.alpha, s.sigma, r.log_covering, r.class.r_max))
    }

    /// The reward least-squares state (for coverage diagnostics).
    pub fn reward_state(&self) -> Option<&LeastSquaresState> {
        self.reward.as_ref().map(|r| &r.ls)
    }

    /// The reward confidence set used for the last emitted reward.
    pub fn last_reward_confidence(&self) -> Option<&Arc<RewardConfidence>> {
        self.last_emitted.as_ref()
    }

    /// The current optimistic utility (unknown-utility strategy).
    pub fn utility_estimate(&self) -> Option<&OptimisticLinearUtility> {
        self.utility_learner.as_ref()?.current.as_ref()
    }

    /// The steering reward function for the next round.
    pub fn emit(&mut self) -> Result<SteeringReward> {
        if let Some(fixed) = &self.fixed {
            return Ok(fixed.clone());
        }
        match self.strategy {
            Strategy::Scenario1 => Ok(SteeringReward::PolicySteer {
                policy: self.policy.clone(),
            }),
            Strategy::Scenario2 | Strategy::UnknownUtility => {
                let beta = self.reward_beta().expect("reward learner present");
                let learner = self.reward.as_mut().expect("reward learner present");
                learner.ls.fit()?;
                let predictor = learner.ls.predictor(beta)?;
                let estimate = Arc::new(RewardConfidence {
                    class: learner.class.clone(),
                    predictor,
                });
                self.last_emitted = Some(estimate.clone());
                Ok(SteeringReward::NonZeroIntrinsic {
                    policy: self.policy.clone(),
                    estimate,
                    r_max: self.prior.r_max,
                })
            }
            Strategy::KnownModel | Strategy::FixedPolicy => unreachable!("fixed rewards handled above"),
        }
    }

    /// Ingests the round's observation; may close an episode and replan.
    pub fn observe(&mut self, obs: &Observation) -> Result<()> {
        let d = self.prior.dims;
        if obs.population_density.dims() != d {
            return Err(Error::invalid("observed density does not match the game"));
        }
        obs.trajectory.validate(d)?;
        self.rounds_seen += 1;
        if matches!(self.strategy, Strategy::KnownModel | Strategy::FixedPolicy) {
            return Ok(());
        }
        self.counts.ingest(obs.trajectory)?;
        if let Some(r) = self.reward.as_mut() {
            let mut phi = Vec::with_capacity(r.class.dim());
            for (h, step) in obs.trajectory.steps.iter().enumerate() {
                r.class
                    .features
                    .write(d, h, step.state, step.action, obs.population_density.step(h), &mut phi);
                r.ls.push(&phi, step.reward)?;
            }
        }
        if let Some(u) = self.utility_learner.as_mut() {
            let y = obs
                .utility_sample
                .ok_or_else(|| Error::invalid("the unknown-utility strategy needs a utility sample each round"))?;
            u.ls.push(&u.class.embed(obs.population_density.values()), y)?;
        }
        let t = self.rounds_seen;
        if episode_trigger(&self.counts, t, self.settings.t_epoch) {
            self.counts.close_episode(t);
            self.confidence = confidence_radii(&self.counts, self.prior.rounds.max(t), self.settings.delta)?;
            self.replan()?;
            debug!("round {t}: episode {} begins", self.counts.episode_index());
        }
        Ok(())
    }

    fn replan(&mut self) -> Result<()> {
        let plan = if let Some(u) = self.utility_learner.as_mut() {
            let k = self.counts.episode_index();
            let s = &self.settings;
            let beta = s.beta_slack * beta_schedule(k, s.delta, s.alpha_u, s.sigma_u, u.log_covering, u.class.u_max);
            u.ls.fit()?;
            let predictor = u.ls.predictor(beta)?;
            let optimistic = OptimisticLinearUtility {
                features: u.class.features.clone(),
                d: u.class.d,
                theta: predictor.theta().to_vec(),
                inverse: predictor.inverse().clone(),
                beta,
            };
            let plan = optimistic_plan_linear_ellipsoid(&self.confidence, &self.prior.mu1, &optimistic, 50)?;
            u.current = Some(optimistic);
            plan
        } else {
            let utility = self.utility.as_ref().expect("known utility");
            optimistic_plan(&self.confidence, &self.prior.mu1, utility, self.settings.frank_wolfe)?
        };
        self.policy = plan.policy.clone();
        self.last_plan = Some(plan);
        Ok(())
    }
}
