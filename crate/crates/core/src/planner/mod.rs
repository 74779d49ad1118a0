//! Dynamic programming and optimistic planning.
//!
//! * [`solve_mdp`]: backward induction for a linear objective ⟨r, μ^π⟩.
//! * [`inner_max_l1`]: maximize ⟨p, v⟩ over an L1 ball intersected with the simplex.
//! * [`optimistic_plan`]: joint maximization over policies and kernels in a
//!   confidence set. Linear utilities use exact extended value iteration;
//!   general utilities use Frank–Wolfe in the lifted (μ, q) space, where
//!   q_h(s, a, s') = μ_h(s, a)·P̂_h(s'|s, a) and the confidence set becomes a
//!   set of linear constraints, so the final iterate always decomposes into a
//!   single (π, P̂) pair.
//!
//! All argmax ties break towards the smallest index.

mod utility;

pub use utility::{GeneralUtility, NegSquaredDistance, OptimisticLinearUtility, Utility};

use crate::error::{check_len, Error, Result};
use crate::estimation::TransitionConfidenceSet;
use crate::model::{dot, induced_policy, occupancy, Density, Dims, MfgModel, Policy, Transitions};

/// Index of the largest entry, smallest index on ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Optimal deterministic policy and value max_π ⟨reward, μ^π⟩ for the kernel
/// `transitions` and initial distribution `mu1`.
pub fn solve_mdp(transitions: &Transitions, mu1: &[f64], reward: &[f64]) -> Result<(Policy, f64)> {
    let d = transitions.dims();
    check_len("reward vector", d.len(), reward.len())?;
    check_len("mu1", d.states, mu1.len())?;
    let mut actions = vec![0usize; d.rows()];
    let mut v_next = vec![0.0; d.states];
    let mut q = vec![0.0; d.actions];
    for h in (0..d.horizon).rev() {
        let mut v = vec![0.0; d.states];
        for s in 0..d.states {
            for (a, qa) in q.iter_mut().enumerate() {
                let cont = if h + 1 < d.horizon {
                    dot(transitions.row(h, s, a), &v_next)
                } else {
                    0.0
                };
                *qa = reward[d.index(h, s, a)] + cont;
            }
            let a = argmax(&q);
            actions[h * d.states + s] = a;
            v[s] = q[a];
        }
        v_next = v;
    }
    Ok((Policy::deterministic(d, &actions)?, dot(mu1, &v_next)))
}

/// argmax ⟨p, values⟩ over {p ∈ Δ : ‖p − p_center‖₁ ≤ radius}: move up to
/// radius/2 of mass onto the best state, taken from the worst states first.
pub fn inner_max_l1(p_center: &[f64], radius: f64, values: &[f64]) -> Vec<f64> {
    let mut p = p_center.to_vec();
    if p.is_empty() {
        return p;
    }
    let best = argmax(values);
    let mut budget = (radius / 2.0).min(1.0 - p[best]).max(0.0);
    if budget == 0.0 {
        return p;
    }
    p[best] += budget;
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| i != best).collect();
    // Ascending value; stable, so equal values drain in index order.
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    for i in order {
        let take = budget.min(p[i]);
        p[i] -= take;
        budget -= take;
        if budget <= 0.0 {
            break;
        }
    }
    // Any leftover is round-off; return it to the best state.
    p[best] -= budget;
    p
}

/// Frank–Wolfe settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrankWolfeOptions {
    pub iterations: usize,
}

impl Default for FrankWolfeOptions {
    fn default() -> Self {
        FrankWolfeOptions { iterations: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct UtilityOptimum {
    pub policy: Policy,
    pub density: Density,
    pub value: f64,
    /// Frank–Wolfe duality gap max_v ⟨∇U(μ), v − μ⟩ at the returned point
    /// (0 for linear utilities).
    pub certificate: f64,
}

/// max_π U(μ^π) on a known model.
pub fn best_utility_density(model: &MfgModel, utility: &Utility, fw: FrankWolfeOptions) -> Result<UtilityOptimum> {
    let set = TransitionConfidenceSet::from_parts(model.transitions.clone(), vec![0.0; model.dims.len()])?;
    let plan = optimistic_plan(&set, &model.mu1, utility, fw)?;
    Ok(UtilityOptimum {
        policy: plan.policy,
        density: plan.density,
        value: plan.value,
        certificate: plan.certificate,
    })
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub policy: Policy,
    /// The kernel M̂ selected from the confidence set.
    pub transitions: Transitions,
    /// μ^π under M̂.
    pub density: Density,
    /// U(μ^π_{M̂}).
    pub value: f64,
    /// Frank–Wolfe gap for general utilities, 0 for linear ones.
    pub certificate: f64,
}

/// Extended value iteration: backward DP maximizing each backup over actions
/// and over the confidence ball of every transition row.
pub fn extended_value_iteration(
    set: &TransitionConfidenceSet,
    mu1: &[f64],
    reward: &[f64],
) -> Result<(Policy, Transitions, f64)> {
    let d = set.dims();
    check_len("reward vector", d.len(), reward.len())?;
    check_len("mu1", d.states, mu1.len())?;
    let mut chosen = set.center().clone();
    let mut actions = vec![0usize; d.rows()];
    let mut v_next = vec![0.0; d.states];
    let mut q = vec![0.0; d.actions];
    for h in (0..d.horizon).rev() {
        let mut v = vec![0.0; d.states];
        for s in 0..d.states {
            for (a, qa) in q.iter_mut().enumerate() {
                let cont = if h + 1 < d.horizon {
                    let row = inner_max_l1(set.center().row(h, s, a), set.row_radius(h, s, a), &v_next);
                    let c = dot(&row, &v_next);
                    chosen.row_mut(h, s, a).copy_from_slice(&row);
                    c
                } else {
                    0.0
                };
                *qa = reward[d.index(h, s, a)] + cont;
            }
            let a = argmax(&q);
            actions[h * d.states + s] = a;
            v[s] = q[a];
        }
        v_next = v;
    }
    Ok((Policy::deterministic(d, &actions)?, chosen, dot(mu1, &v_next)))
}

/// Lifted occupancy (μ, q) of a (π, P̂) pair; q is indexed like the kernel.
fn lifted(transitions: &Transitions, mu: &Density) -> Vec<f64> {
    let d = mu.dims();
    let mut q = vec![0.0; d.len() * d.states];
    for i in 0..d.len() {
        let (h, s, a) = d.unindex(i);
        let m = mu.values()[i];
        for (qs, p) in q[i * d.states..(i + 1) * d.states].iter_mut().zip(transitions.row(h, s, a)) {
            *qs = m * p;
        }
    }
    q
}

/// Recovers P̂ from (μ, q); rows with no mass keep the confidence-set center.
fn kernel_from_lifted(set: &TransitionConfidenceSet, mu: &[f64], q: &[f64]) -> Transitions {
    let d = set.dims();
    let mut p = set.center().clone();
    for (i, &m) in mu.iter().enumerate() {
        let (h, s, a) = d.unindex(i);
        if m > 1e-300 {
            let row = &q[i * d.states..(i + 1) * d.states];
            let total: f64 = row.iter().sum();
            p.row_mut(h, s, a).iter_mut().zip(row).for_each(|(x, y)| *x = y / total);
        }
    }
    p
}

/// argmax over π and P̂ ∈ 𝒫 of U(μ^π_{P̂}).
pub fn optimistic_plan(
    set: &TransitionConfidenceSet,
    mu1: &[f64],
    utility: &Utility,
    fw: FrankWolfeOptions,
) -> Result<PlanResult> {
    let d = set.dims();
    utility.check_dim(d.len())?;
    if set.radii().iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::invalid("confidence radii must be nonnegative"));
    }
    match utility {
        Utility::Linear { c } => {
            let (policy, transitions, value) = extended_value_iteration(set, mu1, c)?;
            let density = occupancy(&transitions, mu1, &policy)?;
            Ok(PlanResult {
                policy,
                transitions,
                density,
                value,
                certificate: 0.0,
            })
        }
        Utility::LipschitzGeneral(u) => frank_wolfe(set, mu1, u.as_ref(), fw),
    }
}

fn frank_wolfe(
    set: &TransitionConfidenceSet,
    mu1: &[f64],
    u: &dyn GeneralUtility,
    fw: FrankWolfeOptions,
) -> Result<PlanResult> {
    let d = set.dims();
    let gradient = |mu: &[f64]| {
        u.gradient(mu)
            .ok_or_else(|| Error::invalid("general utility has no gradient evaluator"))
            .and_then(|g| check_len("utility gradient", d.len(), g.len()).map(|_| g))
    };
    let oracle = |g: &[f64]| -> Result<(Density, Vec<f64>)> {
        let (pi, p, _) = extended_value_iteration(set, mu1, g)?;
        let mu = occupancy(&p, mu1, &pi)?;
        let q = lifted(&p, &mu);
        Ok((mu, q))
    };
    let start = Density::uniform(d);
    let (first, mut q) = oracle(&gradient(start.values())?)?;
    let mut mu = first.into_values();
    let mut certificate = f64::INFINITY;
    for j in 1..=fw.iterations {
        let g = gradient(&mu)?;
        let (v, qv) = oracle(&g)?;
        certificate = dot(&g, v.values()) - dot(&g, &mu);
        let gamma = 2.0 / (j as f64 + 2.0);
        for (m, x) in mu.iter_mut().zip(v.values()) {
            *m = (1.0 - gamma) * *m + gamma * x;
        }
        for (a, b) in q.iter_mut().zip(&qv) {
            *a = (1.0 - gamma) * *a + gamma * b;
        }
    }
    let transitions = kernel_from_lifted(set, &mu, &q);
    let mixed = Density::from_raw(d, mu)?;
    let policy = induced_policy(&mixed);
    let density = occupancy(&transitions, mu1, &policy)?;
    if fw.iterations == 0 {
        certificate = f64::NAN;
    }
    Ok(PlanResult {
        value: u.value(density.values()),
        policy,
        transitions,
        density,
        certificate: certificate.max(0.0),
    })
}

/// max over (θ, π, P̂) of θᵀΦμ^π_{P̂} for θ in a linear utility ellipsoid, by
/// alternating exact maximization (θ in closed form, (π, P̂) by extended value
/// iteration) from the center θ̄. Monotone; returns a deterministic policy.
pub fn optimistic_plan_linear_ellipsoid(
    set: &TransitionConfidenceSet,
    mu1: &[f64],
    utility: &OptimisticLinearUtility,
    max_rounds: usize,
) -> Result<PlanResult> {
    let mut theta = utility.theta.clone();
    let mut best: Option<PlanResult> = None;
    for _ in 0..max_rounds.max(1) {
        let c = utility.coefficients(&theta);
        let (policy, transitions, _) = extended_value_iteration(set, mu1, &c)?;
        let density = occupancy(&transitions, mu1, &policy)?;
        let value = utility.value(density.values());
        let improved = best.as_ref().is_none_or(|b| value > b.value + 1e-12);
        if !improved {
            break;
        }
        theta = utility.maximizing_theta(density.values());
        best = Some(PlanResult {
            policy,
            transitions,
            density,
            value,
            certificate: 0.0,
        });
    }
    Ok(best.expect("at least one planning round"))
}

/// All deterministic policies for tiny instances (S·H ≤ 16 rows), for tests
/// and the `verify` suites.
pub fn enumerate_deterministic_policies(dims: Dims) -> Vec<Policy> {
    let rows = dims.rows();
    let total = dims.actions.pow(rows as u32);
    (0..total)
        .map(|mut code| {
            let actions: Vec<usize> = (0..rows)
                .map(|_| {
                    let a = code % dims.actions;
                    code /= dims.actions;
                    a
                })
                .collect();
            Policy::deterministic(dims, &actions).expect("valid actions")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inner_max_examples() {
        assert_eq!(inner_max_l1(&[0.5, 0.5], 0.0, &[1.0, 0.0]), vec![0.5, 0.5]);
        let p = inner_max_l1(&[0.5, 0.5], 0.2, &[1.0, 0.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.4).abs() < 1e-15);
        let p = inner_max_l1(&[0.2, 0.3, 0.5], 2.0, &[0.0, 3.0, 1.0]);
        assert!(p.iter().zip([0.0, 1.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-15), "{p:?}");
    }

    #[test]
    fn solve_mdp_single_step_is_greedy() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let dims = Dims::new(3, 3, 1).unwrap();
        let model = MfgModel::random(dims, &mut r);
        let reward = vec![0.1, 0.5, 0.2, 0.9, 0.0, 0.3, 0.4, 0.4, 0.1];
        let (pi, _) = solve_mdp(&model.transitions, &model.mu1, &reward).unwrap();
        assert_eq!(pi.greedy_actions(), vec![1, 0, 0]);
    }

    #[test]
    fn zero_radius_matches_known_model() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let dims = Dims::new(2, 2, 3).unwrap();
        let model = MfgModel::random(dims, &mut r);
        let c: Vec<f64> = (0..dims.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let (_, v) = solve_mdp(&model.transitions, &model.mu1, &c).unwrap();
        let opt = best_utility_density(&model, &Utility::linear(c), FrankWolfeOptions::default()).unwrap();
        assert!((opt.value - v).abs() < 1e-12);
    }
}
