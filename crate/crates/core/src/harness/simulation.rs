//! The interaction protocol, one round at a time.
//!
//! Round t:
//! 1. the mediator commits to Rᵗ without seeing this round's play;
//! 2. every agent plays its current density and the population density μ̄ᵗ
//!    is aggregated in a fixed order;
//! 3. one agent chosen uniformly at random rolls out a trajectory with
//!    σ-noisy intrinsic rewards (plus a σ_U-noisy sample of U(μ̄ᵗ));
//! 4. every agent receives the payment vector (r* + Rᵗ)(μ̄ᵗ) and updates;
//! 5. the mediator observes (μ̄ᵗ, trajectory[, utility sample]).

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::agents::{
    default_eta0, BestResponseLearner, HedgeLearner, Learner, LearnerKind, OgdLearner, Projector, RegretLedger,
};
use crate::error::{Error, Result};
use crate::estimation::RewardClass;
use crate::harness::config::{mediator_reward_class, ExperimentConfig, InitKind, Setup};
use crate::harness::metrics::{compute_summary, RoundDiagnostics, RoundRecord, Summary};
use crate::mediator::{epoch_length, Mediator, MediatorPrior, MediatorSettings, Observation, Strategy};
use crate::model::{aggregate_population, compute_density, dot, Density, IntrinsicReward, Policy};
use crate::planner::FrankWolfeOptions;
use crate::polytope::polytope_constraints;
use crate::rng::{child_rng, Stream};
use crate::steering::SteeringReward;

/// A-priori bound R_max on ‖Rᵗ‖∞ for each strategy.
pub fn steering_bound(strategy: Strategy, r_max: f64) -> f64 {
    match strategy {
        Strategy::KnownModel => 2.0,
        Strategy::FixedPolicy | Strategy::Scenario1 => 4.0,
        Strategy::Scenario2 | Strategy::UnknownUtility => 2.0 * r_max + 4.0,
    }
}

/// Mediator settings implied by a configuration.
pub fn mediator_settings(config: &ExperimentConfig) -> MediatorSettings {
    let m = &config.mediator;
    let mut s = MediatorSettings::defaults(config.rounds);
    s.delta = m.delta.unwrap_or(config.delta);
    s.lambda = m.lambda;
    s.sigma = m.sigma.unwrap_or(config.sigma);
    s.sigma_u = m.sigma_u.unwrap_or(config.sigma_u);
    if let Some(a) = m.alpha {
        s.alpha = a;
    }
    if let Some(a) = m.alpha_u {
        s.alpha_u = a;
    }
    s.beta_slack = m.beta_slack;
    s.t_epoch = m
        .t_epoch
        .or_else(|| m.t_epoch_exponent.map(|x| epoch_length(config.rounds, x)))
        .or_else(|| (m.strategy == Strategy::UnknownUtility).then(|| epoch_length(config.rounds, 5.0 / 6.0)));
    s.frank_wolfe = FrankWolfeOptions {
        iterations: m.fw_iterations,
    };
    s
}

/// Builds the configured mediator. It is given the public prior only; the
/// known-model strategies additionally receive the true game by design.
pub fn build_mediator(setup: &Setup) -> Result<Mediator> {
    let config = &setup.config;
    let model = &setup.model;
    let settings = mediator_settings(config);
    let prior = MediatorPrior::from_model(model, config.rounds);
    match config.mediator.strategy {
        Strategy::KnownModel => Mediator::known_model(model, &setup.utility, config.rounds, settings.frank_wolfe),
        Strategy::FixedPolicy => Mediator::fixed_policy(model, &setup.utility, config.rounds, settings.frank_wolfe),
        Strategy::Scenario1 => Mediator::scenario1(prior, setup.utility.clone(), settings),
        Strategy::Scenario2 => {
            let class = mediator_reward_class(config, model)?;
            Mediator::scenario2(prior, setup.utility.clone(), class, settings)
        }
        Strategy::UnknownUtility => {
            let class = mediator_reward_class(config, model)?;
            let utility_class = match (&config.mediator.utility_class, &setup.utility_class) {
                (Some(c), _) => c.clone(),
                (None, Some((c, _))) => c.clone(),
                (None, None) => {
                    return Err(Error::config(
                        "mediator.utility_class",
                        "required unless the utility is of kind linear_class",
                    ))
                }
            };
            Mediator::unknown_utility(prior, utility_class, class, settings)
        }
    }
}

/// The known-utility mediator run alongside an unknown-utility one.
fn build_shadow(setup: &Setup, main: &Mediator) -> Result<Mediator> {
    let class = mediator_reward_class(&setup.config, &setup.model)?;
    Mediator::scenario2(
        MediatorPrior::from_model(&setup.model, setup.config.rounds),
        setup.utility.clone(),
        class,
        main.settings().clone(),
    )
}

/// Builds the configured population. Each agent draws its starting point
/// from its own stream, so population changes never perturb other streams.
pub fn build_population(setup: &Setup) -> Result<Vec<Box<dyn Learner>>> {
    let config = &setup.config;
    let model = &setup.model;
    let dims = model.dims;
    let strategy = config.mediator.strategy;
    let needs_projector = config.population.iter().any(|g| g.kind == LearnerKind::Ogd);
    let projector = if needs_projector {
        Some(Arc::new(Projector::new(polytope_constraints(model))?))
    } else {
        None
    };
    let default_eta = config
        .mediator
        .eta0
        .unwrap_or_else(|| default_eta0(dims, model.r_max, steering_bound(strategy, model.r_max)));
    let mut agents: Vec<Box<dyn Learner>> = Vec::with_capacity(config.population_size());
    let mut index = 0u64;
    for (gi, group) in config.population.iter().enumerate() {
        for _ in 0..group.count {
            let mut rng = child_rng(config.seed, Stream::AgentInit, index, 0);
            let policy = match group.params.init {
                InitKind::Random => Policy::random(dims, &mut rng),
                InitKind::Uniform => Policy::uniform(dims),
            };
            let agent: Box<dyn Learner> = match group.kind {
                LearnerKind::Ogd => {
                    let eta0 = group.params.eta0.unwrap_or(default_eta);
                    let start = compute_density(model, &policy)?;
                    Box::new(OgdLearner::new(projector.clone().expect("built above"), start, eta0)?)
                }
                LearnerKind::Hedge => {
                    let eta = group.params.eta.unwrap_or(1.0 / (config.rounds as f64).sqrt());
                    Box::new(
                        HedgeLearner::new(dims, eta)
                            .map_err(|e| Error::config(format!("population[{gi}]"), e.to_string()))?,
                    )
                }
                LearnerKind::BestResponse => Box::new(BestResponseLearner::new(model.clone(), policy)?),
            };
            agents.push(agent);
            index += 1;
        }
    }
    Ok(agents)
}

/// Per-agent and population regret ledgers.
#[derive(Clone, Debug, Default)]
pub struct RegretTrace {
    pub agents: Vec<RegretLedger>,
    pub population: RegretLedger,
}

/// A running experiment.
pub struct Simulation {
    setup: Setup,
    agents: Vec<Box<dyn Learner>>,
    mediator: Mediator,
    shadow: Option<Mediator>,
    /// True reward class and parameter, when the mediator's class contains r*.
    realizable: Option<(RewardClass, Vec<f64>)>,
    t: usize,
    records: Vec<RoundRecord>,
    regret: Option<RegretTrace>,
}

/// Final state of a run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub summary: Summary,
    /// Episode boundaries T_k of the mediator.
    pub boundaries: Vec<usize>,
    pub regret: Option<RegretTrace>,
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let setup = Setup::new(config)?;
        let agents = build_population(&setup)?;
        Simulation::with_agents(setup, agents)
    }

    /// A simulation over a caller-supplied population.
    pub fn with_agents(setup: Setup, agents: Vec<Box<dyn Learner>>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::config("population", "needs at least one agent"));
        }
        let dims = setup.dims();
        if agents.iter().any(|a| a.density().dims() != dims) {
            return Err(Error::invalid("agent densities do not match the game"));
        }
        let mediator = build_mediator(&setup)?;
        let shadow = if setup.config.mediator.shadow {
            Some(build_shadow(&setup, &mediator)?)
        } else {
            None
        };
        let realizable = match (&setup.model.reward, mediator.reward_state()) {
            (IntrinsicReward::Parametric { class, theta }, Some(_)) => {
                let used = mediator_reward_class(&setup.config, &setup.model)?;
                (used.family == class.family && used.features == class.features).then(|| (class.clone(), theta.clone()))
            }
            _ => None,
        };
        Ok(Simulation {
            setup,
            agents,
            mediator,
            shadow,
            realizable,
            t: 0,
            records: Vec::new(),
            regret: None,
        })
    }

    /// Keep per-agent and population regret ledgers (memory O(T·N·HSA)).
    pub fn track_regret(&mut self) {
        self.regret = Some(RegretTrace {
            agents: vec![RegretLedger::new(); self.agents.len()],
            population: RegretLedger::new(),
        });
    }

    pub fn setup(&self) -> &Setup {
        &self.setup
    }

    pub fn mediator(&self) -> &Mediator {
        &self.mediator
    }

    pub fn shadow(&self) -> Option<&Mediator> {
        self.shadow.as_ref()
    }

    pub fn agents(&self) -> &[Box<dyn Learner>] {
        &self.agents
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.setup.rounds()
    }

    /// Plays one round; errors carry the round index.
    pub fn step(&mut self) -> Result<&RoundRecord> {
        let t = self.t + 1;
        let record = self.play(t).map_err(|e| Error::Round {
            round: t,
            source: Box::new(e),
        })?;
        self.t = t;
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn run(mut self) -> Result<RunOutput> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> RunOutput {
        let summary = compute_summary(&self.records, self.mediator.switches());
        RunOutput {
            records: self.records,
            summary,
            boundaries: self.mediator.boundaries().to_vec(),
            regret: self.regret,
        }
    }

    fn play(&mut self, t: usize) -> Result<RoundRecord> {
        let seed = self.setup.config.seed;
        let model = self.setup.model.clone();
        let k = self.mediator.episode();

        // 1. Commit to Rᵗ.
        let reward = self.mediator.emit()?;
        let shadow_reward = match self.shadow.as_mut() {
            Some(s) => Some(s.emit()?),
            None => None,
        };
        let max_eps = match self.mediator.strategy() {
            Strategy::KnownModel | Strategy::FixedPolicy => 0.0,
            _ => self.mediator.confidence_set().max_radius(),
        };
        let p_star_covered = match self.mediator.strategy() {
            Strategy::KnownModel | Strategy::FixedPolicy => true,
            _ => self.mediator.confidence_set().contains(&model.transitions, 1e-9),
        };

        // 2. Aggregate the population density.
        let densities: Vec<Density> = self.agents.iter().map(|a| a.density().clone()).collect();
        let mu_bar = aggregate_population(&densities)?;

        // 3. One uniformly chosen agent reveals a trajectory.
        let chosen = child_rng(seed, Stream::AgentChoice, 0, t as u64).random_range(0..self.agents.len());
        let mut traj_rng = child_rng(seed, Stream::Trajectory, 0, t as u64);
        let trajectory = self.agents[chosen].trajectory(&model, &mu_bar, self.setup.config.sigma, &mut traj_rng)?;
        let utility = self.setup.utility.value(mu_bar.values());
        let utility_sample = match self.mediator.strategy() {
            Strategy::UnknownUtility => {
                let sigma_u = self.setup.config.sigma_u;
                let noise = if sigma_u > 0.0 {
                    let normal = Normal::new(0.0, sigma_u).map_err(|e| Error::invalid(e.to_string()))?;
                    normal.sample(&mut child_rng(seed, Stream::UtilityNoise, 0, t as u64))
                } else {
                    0.0
                };
                Some(utility + noise)
            }
            _ => None,
        };

        // 4. Payments and learner updates.
        let r_vec = reward.evaluate(&mu_bar)?;
        let r_star = model.reward_vector(&mu_bar);
        let payment: Vec<f64> = r_vec.iter().zip(&r_star).map(|(a, b)| a + b).collect();
        let cost = dot(&r_vec, mu_bar.values());
        let avg_payment =
            densities.iter().map(|x| dot(&r_vec, x.values())).sum::<f64>() / densities.len() as f64;
        if let Some(trace) = self.regret.as_mut() {
            for (ledger, x) in trace.agents.iter_mut().zip(&densities) {
                ledger.push(payment.clone(), x.values().to_vec())?;
            }
            trace.population.push(payment.clone(), mu_bar.values().to_vec())?;
        }
        self.agents
            .par_iter_mut()
            .map(|a| a.update(&payment))
            .collect::<Result<Vec<()>>>()?;

        let adj_cost = match self.mediator.strategy() {
            Strategy::Scenario2 | Strategy::UnknownUtility => {
                let r_max = model.r_max;
                cost - mu_bar
                    .values()
                    .iter()
                    .zip(&r_star)
                    .map(|(m, r)| m * (r_max - r))
                    .sum::<f64>()
            }
            _ => cost,
        };
        let mut diagnostics = RoundDiagnostics {
            avg_payment,
            reward_sup: r_vec.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
            reward_min: r_vec.iter().copied().fold(f64::INFINITY, f64::min),
            p_star_covered,
            ..RoundDiagnostics::default()
        };
        let mut max_width = 0.0;
        if let SteeringReward::NonZeroIntrinsic { estimate, .. } = &reward {
            let (mean, width) = estimate.mean_and_width(&mu_bar);
            max_width = width.iter().copied().fold(0.0, f64::max);
            diagnostics.width_mass = dot(&width, mu_bar.values());
            if let Some((class, theta)) = &self.realizable {
                let state = self.mediator.reward_state().expect("learned reward");
                let covered = state.distance_sq(theta)? <= estimate.predictor.beta();
                diagnostics.r_star_covered = Some(covered);
                if covered {
                    let truth = class.predict_vector(theta, &mu_bar);
                    let tol = 1e-9;
                    let ok = truth
                        .iter()
                        .zip(mean.iter().zip(&width))
                        .all(|(r, (m, w))| m - w <= r + tol && *r <= m + w + tol);
                    diagnostics.pessimism_ok = Some(ok);
                }
            }
        }
        if let Some(sr) = &shadow_reward {
            let other = sr.evaluate(&mu_bar)?;
            diagnostics.shadow_diff = Some(r_vec.iter().zip(&other).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())));
        }
        if let (Some(est), Some((_, theta))) = (self.mediator.utility_estimate(), &self.setup.utility_class) {
            diagnostics.utility_err =
                Some(est.theta.iter().zip(theta).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())));
        }

        // 5. The mediator observes the protocol's revelation.
        let obs = Observation {
            population_density: &mu_bar,
            trajectory: &trajectory,
            utility_sample,
        };
        self.mediator.observe(&obs)?;
        if let Some(s) = self.shadow.as_mut() {
            s.observe(&Observation {
                utility_sample: None,
                ..obs
            })?;
        }

        Ok(RoundRecord {
            t,
            k,
            utility,
            gap_inc: self.setup.optimum.value - utility,
            cost,
            adj_cost,
            l1_to_target: mu_bar.l1_distance(&self.setup.optimum.density),
            max_eps,
            max_width,
            diagnostics,
        })
    }
}
