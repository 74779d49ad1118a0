//! No-regret learners over occupancy measures and regret diagnostics.
//!
//! Learners receive full-information feedback: after each round, the realized
//! payment vector g = (r* + Rᵗ)(μ̄ᵗ) ∈ ℝ^{H·S·A}, and the next density they play
//! is a function of all vectors received so far.

mod projection;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use projection::{project_onto_polytope, project_simplex, Projector, MAX_SWEEPS, PROJECTION_TOL};

use crate::error::{check_len, Error, Result};
use crate::model::{compute_density, dot, induced_policy, sample_trajectory, Density, Dims, MfgModel, Policy, Trajectory};
use crate::planner::solve_mdp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Ogd,
    Hedge,
    BestResponse,
}

/// One agent's learning rule. The harness only reads the played density and
/// asks the agent itself to roll out a trajectory; it never inspects the
/// policy object directly.
pub trait Learner: Send + Sync {
    fn kind(&self) -> LearnerKind;

    /// The density x_t the agent plays this round.
    fn density(&self) -> &Density;

    /// The policy that realizes [`density`](Self::density).
    fn policy(&self) -> Policy;

    /// Incorporates the payment vector of the round just played.
    fn update(&mut self, reward_vector: &[f64]) -> Result<()>;

    /// Samples one episode of this agent's behavior.
    fn trajectory(
        &self,
        model: &MfgModel,
        population: &Density,
        noise_sigma: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Trajectory> {
        sample_trajectory(model, &self.policy(), population, noise_sigma, rng)
    }
}

/// Projected online gradient ascent on Ψ: x_{t+1} = Proj_Ψ(x_t + η_t g_t) with
/// η_t = η₀/√t.
#[derive(Clone, Debug)]
pub struct OgdLearner {
    projector: Arc<Projector>,
    density: Density,
    eta0: f64,
    t: usize,
}

impl OgdLearner {
    pub fn new(projector: Arc<Projector>, initial: Density, eta0: f64) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::invalid("OGD eta0 must be positive"));
        }
        if initial.dims() != projector.constraints().dims() {
            return Err(Error::invalid("initial density does not match the polytope"));
        }
        Ok(OgdLearner {
            projector,
            density: initial,
            eta0,
            t: 1,
        })
    }

    /// Step counter t (the next update uses η₀/√t).
    pub fn step_count(&self) -> usize {
        self.t
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }
}

/// η₀ = H/(G√2) with G = √(H·S·A)·(r_max + R_max): the step scale matching the
/// diameter and gradient bounds of Ψ.
pub fn default_eta0(dims: Dims, r_max: f64, steering_max: f64) -> f64 {
    let g = (dims.len() as f64).sqrt() * (r_max + steering_max);
    if g > 0.0 {
        dims.horizon as f64 / (g * 2f64.sqrt())
    } else {
        1.0
    }
}

/// One projected gradient step with explicit step size.
pub fn ogd_step(x: &Density, reward_vector: &[f64], eta: f64, projector: &Projector) -> Result<Density> {
    check_len("reward vector", x.values().len(), reward_vector.len())?;
    if reward_vector.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("reward vector has non-finite entries"));
    }
    if reward_vector.iter().all(|&g| g == 0.0) {
        return Ok(x.clone());
    }
    let moved: Vec<f64> = x.values().iter().zip(reward_vector).map(|(a, g)| a + eta * g).collect();
    projector.project(&moved)
}

impl Learner for OgdLearner {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Ogd
    }

    fn density(&self) -> &Density {
        &self.density
    }

    fn policy(&self) -> Policy {
        induced_policy(&self.density)
    }

    fn update(&mut self, reward_vector: &[f64]) -> Result<()> {
        let eta = self.eta0 / (self.t as f64).sqrt();
        self.density = ogd_step(&self.density, reward_vector, eta, &self.projector)?;
        self.t += 1;
        Ok(())
    }
}

/// Exponential weights p ∝ exp(1 + η·cumulative), evaluated with the maximum
/// subtracted in the exponent (the output is invariant to constant shifts).
pub fn hedge_weights(cumulative: &[f64], eta: f64) -> Vec<f64> {
    let z: Vec<f64> = cumulative.iter().map(|c| 1.0 + eta * c).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Adds `reward_vector` to the cumulative rewards and returns the new weights.
pub fn hedge_step_stateless(cumulative: &mut [f64], reward_vector: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_len("reward vector", cumulative.len(), reward_vector.len())?;
    if cumulative.len() < 2 || !(eta > 0.0) {
        return Err(Error::invalid("Hedge needs A >= 2 and eta > 0"));
    }
    cumulative.iter_mut().zip(reward_vector).for_each(|(c, r)| *c += r);
    Ok(hedge_weights(cumulative, eta))
}

/// Hedge for stateless games (S = H = 1).
#[derive(Clone, Debug)]
pub struct HedgeLearner {
    cumulative: Vec<f64>,
    eta: f64,
    density: Density,
}

impl HedgeLearner {
    pub fn new(dims: Dims, eta: f64) -> Result<Self> {
        if dims.states != 1 || dims.horizon != 1 {
            return Err(Error::invalid("Hedge is only available for stateless games (S = H = 1)"));
        }
        if dims.actions < 2 || !(eta > 0.0) {
            return Err(Error::invalid("Hedge needs A >= 2 and eta > 0"));
        }
        let cumulative = vec![0.0; dims.actions];
        let density = Density::from_raw(dims, hedge_weights(&cumulative, eta))?;
        Ok(HedgeLearner {
            cumulative,
            eta,
            density,
        })
    }
}

impl Learner for HedgeLearner {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Hedge
    }

    fn density(&self) -> &Density {
        &self.density
    }

    fn policy(&self) -> Policy {
        induced_policy(&self.density)
    }

    fn update(&mut self, reward_vector: &[f64]) -> Result<()> {
        let w = hedge_step_stateless(&mut self.cumulative, reward_vector, self.eta)?;
        self.density = Density::from_raw(self.density.dims(), w)?;
        Ok(())
    }
}

/// Exact best response to a reward vector on a known model.
pub fn best_response(model: &MfgModel, total_reward_vector: &[f64]) -> Result<Policy> {
    Ok(solve_mdp(&model.transitions, &model.mu1, total_reward_vector)?.0)
}

/// Plays the best response to the previous round's payment vector.
#[derive(Clone, Debug)]
pub struct BestResponseLearner {
    model: Arc<MfgModel>,
    policy: Policy,
    density: Density,
}

impl BestResponseLearner {
    pub fn new(model: Arc<MfgModel>, initial: Policy) -> Result<Self> {
        let density = compute_density(&model, &initial)?;
        Ok(BestResponseLearner {
            model,
            policy: initial,
            density,
        })
    }
}

impl Learner for BestResponseLearner {
    fn kind(&self) -> LearnerKind {
        LearnerKind::BestResponse
    }

    fn density(&self) -> &Density {
        &self.density
    }

    fn policy(&self) -> Policy {
        self.policy.clone()
    }

    fn update(&mut self, reward_vector: &[f64]) -> Result<()> {
        self.policy = best_response(&self.model, reward_vector)?;
        self.density = compute_density(&self.model, &self.policy)?;
        Ok(())
    }
}

/// A random policy-induced starting density.
pub fn random_initial_density<R: Rng + ?Sized>(model: &MfgModel, rng: &mut R) -> Result<Density> {
    compute_density(model, &Policy::random(model.dims, rng))
}

/// Per-round payment vectors and the densities played against them.
#[derive(Clone, Debug, Default)]
pub struct RegretLedger {
    rewards: Vec<Vec<f64>>,
    densities: Vec<Vec<f64>>,
}

impl RegretLedger {
    pub fn new() -> Self {
        RegretLedger::default()
    }

    pub fn push(&mut self, reward_vector: Vec<f64>, density: Vec<f64>) -> Result<()> {
        check_len("ledger density", reward_vector.len(), density.len())?;
        self.rewards.push(reward_vector);
        self.densities.push(density);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    pub fn densities(&self) -> &[Vec<f64>] {
        &self.densities
    }
}

/// max_{μ∈Ψ} Σ_{t=a}^{b} ⟨g_t, μ − x_t⟩ for the 1-based inclusive interval [a, b].
pub fn adaptive_regret(ledger: &RegretLedger, model: &MfgModel, a: usize, b: usize) -> Result<f64> {
    if !(1 <= a && a <= b && b <= ledger.len()) {
        return Err(Error::invalid(format!(
            "invalid interval [{a}, {b}] for a ledger of length {}",
            ledger.len()
        )));
    }
    let n = model.dims.len();
    let mut total = vec![0.0; n];
    let mut realized = 0.0;
    for t in (a - 1)..b {
        let g = &ledger.rewards[t];
        check_len("ledger reward", n, g.len())?;
        total.iter_mut().zip(g).for_each(|(s, x)| *s += x);
        realized += dot(g, &ledger.densities[t]);
    }
    let (_, best) = solve_mdp(&model.transitions, &model.mu1, &total)?;
    Ok(best - realized)
}

/// Largest interval regret over all intervals with endpoints on an evenly
/// spaced grid of `points` rounds (plus the two ends).
pub fn max_grid_adaptive_regret(ledger: &RegretLedger, model: &MfgModel, points: usize) -> Result<f64> {
    let t = ledger.len();
    if t < 2 {
        return Ok(0.0);
    }
    let mut grid: Vec<usize> = (0..points.max(2))
        .map(|i| 1 + (i * (t - 1)) / (points.max(2) - 1))
        .collect();
    grid.dedup();
    let mut best = f64::NEG_INFINITY;
    for (i, &a) in grid.iter().enumerate() {
        for &b in &grid[i + 1..] {
            best = best.max(adaptive_regret(ledger, model, a, b)?);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::polytope_constraints;

    fn stateless_model(a: usize) -> MfgModel {
        let dims = Dims::stateless(a);
        MfgModel::new(
            dims,
            vec![1.0],
            crate::model::Transitions::uniform(dims),
            crate::model::IntrinsicReward::Zero,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn ogd_simplex_example() {
        let model = stateless_model(2);
        let proj = Projector::new(polytope_constraints(&model)).unwrap();
        let x = Density::new(model.dims, vec![0.5, 0.5]).unwrap();
        let y = ogd_step(&x, &[1.0, 0.0], 0.2, &proj).unwrap();
        assert!((y.values()[0] - 0.6).abs() < 1e-12 && (y.values()[1] - 0.4).abs() < 1e-12);
        assert_eq!(ogd_step(&x, &[0.0, 0.0], 0.2, &proj).unwrap(), x);
    }

    #[test]
    fn hedge_examples() {
        assert_eq!(hedge_weights(&[0.0, 0.0, 0.0], 0.5), vec![1.0 / 3.0; 3]);
        let w = hedge_weights(&[10.0, 0.0], 0.1);
        let e = std::f64::consts::E;
        assert!((w[0] - e / (e + 1.0)).abs() < 1e-15);
        let shifted = hedge_weights(&[110.0, 100.0], 0.1);
        assert!((shifted[0] - w[0]).abs() < 1e-12);
    }

    #[test]
    fn one_step_regret() {
        let model = stateless_model(2);
        let mut ledger = RegretLedger::new();
        ledger.push(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert!((adaptive_regret(&ledger, &model, 1, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(adaptive_regret(&ledger, &model, 1, 2).is_err());
    }
}
