//! Finite-horizon mean-field game models and their state-action densities.
//!
//! Every per-(h, s, a) quantity in the crate shares one flattening: h-major,
//! then state, then action. [`Dims::index`] is the single source of truth for
//! that layout.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimation::{RewardClass, RewardSpec};

/// Mass tolerance for densities (per step).
pub const MASS_TOL: f64 = 1e-9;
/// Row-sum tolerance for transition rows, policy rows and initial distributions.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::invalid(format!(
                "S, A, H must be positive (got S={states}, A={actions}, H={horizon})"
            )));
        }
        Ok(Dims {
            states,
            actions,
            horizon,
        })
    }

    /// Stateless game: one state, one step.
    pub fn stateless(actions: usize) -> Self {
        Dims {
            states: 1,
            actions,
            horizon: 1,
        }
    }

    /// H·S·A.
    pub fn len(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// S·A, the length of one step block.
    pub fn step_len(&self) -> usize {
        self.states * self.actions
    }

    /// H·S, the number of (h, s) rows.
    pub fn rows(&self) -> usize {
        self.horizon * self.states
    }

    #[inline]
    pub fn index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    /// Inverse of [`Dims::index`].
    pub fn unindex(&self, i: usize) -> (usize, usize, usize) {
        let a = i % self.actions;
        let hs = i / self.actions;
        (hs / self.states, hs % self.states, a)
    }
}

fn check_distribution(what: &str, p: &[f64], tol: f64) -> Result<()> {
    if p.iter().any(|&x| !x.is_finite() || x < -tol) {
        return Err(Error::invalid(format!("{what} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::invalid(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Dirichlet(1, ..., 1) draw.
pub(crate) fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Draws an index from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Round-off: fall back to the last index with positive mass.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// A state-action density μ ∈ ℝ^{H·S·A}: one probability measure over S×A per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density {
    dims: Dims,
    values: Vec<f64>,
}

impl Density {
    /// Validating constructor: nonnegative with unit mass per step.
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        let d = Density::from_raw(dims, values)?;
        d.validate(MASS_TOL)?;
        Ok(d)
    }

    /// Only checks the length. Used for iterates that are members up to round-off.
    pub fn from_raw(dims: Dims, values: Vec<f64>) -> Result<Self> {
        check_len("density", dims.len(), values.len())?;
        Ok(Density { dims, values })
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.values.iter().any(|&x| !x.is_finite() || x < -tol) {
            return Err(Error::invalid("density has negative or non-finite entries"));
        }
        for h in 0..self.dims.horizon {
            let mass: f64 = self.step(h).iter().sum();
            if (mass - 1.0).abs() > tol {
                return Err(Error::invalid(format!("density step {h} has mass {mass}")));
            }
        }
        Ok(())
    }

    /// Uniform over S×A at every step. Not generally a member of Ψ_M.
    pub fn uniform(dims: Dims) -> Self {
        let v = 1.0 / dims.step_len() as f64;
        Density {
            dims,
            values: vec![v; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[self.dims.index(h, s, a)]
    }

    /// μ_h as a slice of length S·A.
    pub fn step(&self, h: usize) -> &[f64] {
        let n = self.dims.step_len();
        &self.values[h * n..(h + 1) * n]
    }

    /// μ_h(s) = Σ_a μ_h(s, a).
    pub fn state_mass(&self, h: usize, s: usize) -> f64 {
        let i = self.dims.index(h, s, 0);
        self.values[i..i + self.dims.actions].iter().sum()
    }

    pub fn l1_distance(&self, other: &Density) -> f64 {
        l1(&self.values, &other.values)
    }
}

pub(crate) fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn linf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Non-stationary Markov policy: π_h(·|s) for every (h, s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    dims: Dims,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(dims: Dims, probs: Vec<f64>) -> Result<Self> {
        check_len("policy", dims.len(), probs.len())?;
        let p = Policy { dims, probs };
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                check_distribution("policy row", p.row(h, s), PROB_TOL * dims.actions as f64)?;
            }
        }
        Ok(p)
    }

    pub fn uniform(dims: Dims) -> Self {
        Policy {
            dims,
            probs: vec![1.0 / dims.actions as f64; dims.len()],
        }
    }

    /// `actions[h * S + s]` is the action taken at (h, s).
    pub fn deterministic(dims: Dims, actions: &[usize]) -> Result<Self> {
        check_len("deterministic policy", dims.rows(), actions.len())?;
        let mut probs = vec![0.0; dims.len()];
        for (row, &a) in actions.iter().enumerate() {
            if a >= dims.actions {
                return Err(Error::invalid(format!("action {a} out of range")));
            }
            probs[row * dims.actions + a] = 1.0;
        }
        Ok(Policy { dims, probs })
    }

    pub fn random<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        let mut probs = Vec::with_capacity(dims.len());
        for _ in 0..dims.rows() {
            probs.extend(random_simplex(dims.actions, rng));
        }
        Policy { dims, probs }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs[self.dims.index(h, s, a)]
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let i = self.dims.index(h, s, 0);
        &self.probs[i..i + self.dims.actions]
    }

    /// Most likely action per (h, s), lowest index on ties.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.dims.rows())
            .map(|row| {
                let r = &self.probs[row * self.dims.actions..(row + 1) * self.dims.actions];
                let mut best = 0;
                for (a, &p) in r.iter().enumerate() {
                    if p > r[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }
}

/// Transition kernel P_h(s'|s, a), stored [h][s][a][s'].
///
/// All H layers are stored for a uniform layout; the last layer never
/// influences a density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    dims: Dims,
    p: Vec<f64>,
}

impl Transitions {
    pub fn new(dims: Dims, p: Vec<f64>) -> Result<Self> {
        check_len("transition tensor", dims.len() * dims.states, p.len())?;
        let t = Transitions { dims, p };
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                for a in 0..dims.actions {
                    check_distribution(
                        "transition row",
                        t.row(h, s, a),
                        PROB_TOL * dims.states as f64,
                    )?;
                }
            }
        }
        Ok(t)
    }

    /// Nested `[h][s][a][s']` arrays as found in model JSON.
    pub fn from_nested(dims: Dims, nested: &[Vec<Vec<Vec<f64>>>]) -> Result<Self> {
        check_len("P (horizon)", dims.horizon, nested.len())?;
        let mut p = Vec::with_capacity(dims.len() * dims.states);
        for layer in nested {
            check_len("P (states)", dims.states, layer.len())?;
            for by_action in layer {
                check_len("P (actions)", dims.actions, by_action.len())?;
                for row in by_action {
                    check_len("P (next states)", dims.states, row.len())?;
                    p.extend_from_slice(row);
                }
            }
        }
        Transitions::new(dims, p)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        let d = self.dims;
        (0..d.horizon)
            .map(|h| {
                (0..d.states)
                    .map(|s| (0..d.actions).map(|a| self.row(h, s, a).to_vec()).collect())
                    .collect()
            })
            .collect()
    }

    pub fn uniform(dims: Dims) -> Self {
        Transitions {
            dims,
            p: vec![1.0 / dims.states as f64; dims.len() * dims.states],
        }
    }

    pub fn random<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        let mut p = Vec::with_capacity(dims.len() * dims.states);
        for _ in 0..dims.len() {
            p.extend(random_simplex(dims.states, rng));
        }
        Transitions { dims, p }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let i = self.dims.index(h, s, a) * self.dims.states;
        &self.p[i..i + self.dims.states]
    }

    pub fn row_mut(&mut self, h: usize, s: usize, a: usize) -> &mut [f64] {
        let i = self.dims.index(h, s, a) * self.dims.states;
        let n = self.dims.states;
        &mut self.p[i..i + n]
    }

    /// max over (h < H−1, s, a) of ‖P_h(·|s,a) − Q_h(·|s,a)‖₁.
    pub fn max_row_l1(&self, other: &Transitions) -> f64 {
        let d = self.dims;
        let mut m = 0.0_f64;
        for h in 0..d.horizon.saturating_sub(1) {
            for s in 0..d.states {
                for a in 0..d.actions {
                    m = m.max(l1(self.row(h, s, a), other.row(h, s, a)));
                }
            }
        }
        m
    }
}

/// The agents' intrinsic reward r_h(s, a, μ_h), clamped to [0, r_max].
#[derive(Clone, Debug, PartialEq)]
pub enum IntrinsicReward {
    Zero,
    Parametric { class: RewardClass, theta: Vec<f64> },
}

impl IntrinsicReward {
    pub fn eval(&self, h: usize, s: usize, a: usize, step: &[f64]) -> f64 {
        match self {
            IntrinsicReward::Zero => 0.0,
            IntrinsicReward::Parametric { class, theta } => class.predict(theta, h, s, a, step),
        }
    }

    /// r(μ̄) ∈ ℝ^{H·S·A}: (r(μ̄))_{h,s,a} = r_h(s, a, μ̄_h).
    pub fn vector(&self, mu: &Density) -> Vec<f64> {
        let d = mu.dims();
        match self {
            IntrinsicReward::Zero => vec![0.0; d.len()],
            IntrinsicReward::Parametric { .. } => (0..d.len())
                .map(|i| {
                    let (h, s, a) = d.unindex(i);
                    self.eval(h, s, a, mu.step(h))
                })
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, IntrinsicReward::Zero)
    }
}

/// A finite-horizon decentralized MFG with density-independent transitions.
#[derive(Clone, Debug)]
pub struct MfgModel {
    pub dims: Dims,
    pub mu1: Vec<f64>,
    pub transitions: Transitions,
    pub reward: IntrinsicReward,
    pub r_max: f64,
}

impl MfgModel {
    pub fn new(
        dims: Dims,
        mu1: Vec<f64>,
        transitions: Transitions,
        reward: IntrinsicReward,
        r_max: f64,
    ) -> Result<Self> {
        check_len("mu1", dims.states, mu1.len())?;
        check_distribution("mu1", &mu1, PROB_TOL * dims.states as f64)?;
        if transitions.dims() != dims {
            return Err(Error::invalid("transition tensor dimensions differ from model"));
        }
        if !(r_max >= 0.0 && r_max.is_finite()) {
            return Err(Error::invalid("r_max must be a nonnegative finite number"));
        }
        if let IntrinsicReward::Parametric { class, theta } = &reward {
            if class.dims != dims {
                return Err(Error::invalid("reward class dimensions differ from model"));
            }
            check_len("reward theta", class.dim(), theta.len())?;
        }
        Ok(MfgModel {
            dims,
            mu1,
            transitions,
            reward,
            r_max,
        })
    }

    /// Random kernel and initial distribution with zero intrinsic reward.
    pub fn random<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        MfgModel {
            dims,
            mu1: random_simplex(dims.states, rng),
            transitions: Transitions::random(dims, rng),
            reward: IntrinsicReward::Zero,
            r_max: 0.0,
        }
    }

    /// Same game with a different kernel.
    pub fn with_transitions(&self, transitions: Transitions) -> Result<Self> {
        MfgModel::new(
            self.dims,
            self.mu1.clone(),
            transitions,
            self.reward.clone(),
            self.r_max,
        )
    }

    pub fn reward_vector(&self, mu: &Density) -> Vec<f64> {
        self.reward.vector(mu)
    }
}

/// Forward recursion μ_{h+1}(s,a) = π_{h+1}(a|s) Σ P_h(s|s',a') μ_h(s',a').
pub fn occupancy(transitions: &Transitions, mu1: &[f64], policy: &Policy) -> Result<Density> {
    let d = transitions.dims();
    if policy.dims() != d {
        return Err(Error::DimensionMismatch {
            what: "policy vs model",
            expected: d.len(),
            got: policy.dims().len(),
        });
    }
    check_len("mu1", d.states, mu1.len())?;
    let mut values = vec![0.0; d.len()];
    let mut state_mass = mu1.to_vec();
    for h in 0..d.horizon {
        for s in 0..d.states {
            for a in 0..d.actions {
                values[d.index(h, s, a)] = state_mass[s] * policy.prob(h, s, a);
            }
        }
        if h + 1 < d.horizon {
            let mut next = vec![0.0; d.states];
            for s in 0..d.states {
                for a in 0..d.actions {
                    let m = values[d.index(h, s, a)];
                    if m == 0.0 {
                        continue;
                    }
                    for (s2, p) in transitions.row(h, s, a).iter().enumerate() {
                        next[s2] += m * p;
                    }
                }
            }
            state_mass = next;
        }
    }
    Ok(Density { dims: d, values })
}

pub fn compute_density(model: &MfgModel, policy: &Policy) -> Result<Density> {
    occupancy(&model.transitions, &model.mu1, policy)
}

/// π̄_h(·|s) = μ_h(s,·)/μ_h(s), or uniform where μ_h(s) = 0.
pub fn induced_policy(density: &Density) -> Policy {
    let d = density.dims();
    let mut probs = vec![0.0; d.len()];
    for h in 0..d.horizon {
        for s in 0..d.states {
            let i = d.index(h, s, 0);
            let row = &density.values()[i..i + d.actions];
            let mass: f64 = row.iter().map(|x| x.max(0.0)).sum();
            if mass > 0.0 {
                for a in 0..d.actions {
                    probs[i + a] = row[a].max(0.0) / mass;
                }
            } else {
                probs[i..i + d.actions].fill(1.0 / d.actions as f64);
            }
        }
    }
    Policy { dims: d, probs }
}

/// Arithmetic mean, summed in list order.
pub fn aggregate_population(densities: &[Density]) -> Result<Density> {
    let first = densities
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty population"))?;
    let dims = first.dims();
    let mut values = vec![0.0; dims.len()];
    for d in densities {
        if d.dims() != dims {
            return Err(Error::DimensionMismatch {
                what: "population densities",
                expected: dims.len(),
                got: d.dims().len(),
            });
        }
        for (v, x) in values.iter_mut().zip(d.values()) {
            *v += x;
        }
    }
    let n = densities.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(Density { dims, values })
}

/// ⟨r, μ⟩.
pub fn expected_return(reward_vector: &[f64], density: &Density) -> Result<f64> {
    check_len("reward vector", density.dims().len(), reward_vector.len())?;
    Ok(dot(reward_vector, density.values()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// One episode of length H with noisy observed intrinsic rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn validate(&self, dims: Dims) -> Result<()> {
        check_len("trajectory", dims.horizon, self.steps.len())?;
        if self
            .steps
            .iter()
            .any(|st| st.state >= dims.states || st.action >= dims.actions)
        {
            return Err(Error::invalid("trajectory state or action out of range"));
        }
        Ok(())
    }
}

/// Samples s₁ ~ μ₁, a_h ~ π_h(·|s_h), s_{h+1} ~ P_h(·|s_h, a_h) and observes
/// r_h(s_h, a_h, μ̄_h) plus N(0, σ²) noise.
pub fn sample_trajectory<R: Rng + ?Sized>(
    model: &MfgModel,
    policy: &Policy,
    population: &Density,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let d = model.dims;
    if policy.dims() != d || population.dims() != d {
        return Err(Error::invalid("policy or population density does not match model"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid("noise sigma must be nonnegative"));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut steps = Vec::with_capacity(d.horizon);
    let mut s = sample_index(&model.mu1, rng);
    for h in 0..d.horizon {
        let a = sample_index(policy.row(h, s), rng);
        let mean = model.reward.eval(h, s, a, population.step(h));
        let xi = if noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        steps.push(Step {
            state: s,
            action: a,
            reward: mean + xi,
        });
        if h + 1 < d.horizon {
            s = sample_index(model.transitions.row(h, s, a), rng);
        }
    }
    Ok(Trajectory { steps })
}

/// JSON document for a model: `{S, A, H, mu1, P, reward_spec, r_max}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub mu1: Vec<f64>,
    #[serde(rename = "P")]
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub reward_spec: RewardSpec,
    #[serde(default)]
    pub r_max: f64,
}

impl ModelSpec {
    pub fn build(&self) -> Result<MfgModel> {
        let dims = Dims::new(self.states, self.actions, self.horizon)?;
        let transitions = Transitions::from_nested(dims, &self.transitions)?;
        let reward = self.reward_spec.build(dims, self.r_max)?;
        MfgModel::new(dims, self.mu1.clone(), transitions, reward, self.r_max)
    }

    pub fn from_model(model: &MfgModel) -> Self {
        ModelSpec {
            states: model.dims.states,
            actions: model.dims.actions,
            horizon: model.dims.horizon,
            mu1: model.mu1.clone(),
            transitions: model.transitions.to_nested(),
            reward_spec: RewardSpec::from_reward(&model.reward),
            r_max: model.r_max,
        }
    }
}
