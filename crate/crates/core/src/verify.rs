//! Property suites over randomized instances: the algebraic identities,
//! norm bounds and structural lemmas the steering pipeline relies on.
//!
//! Each suite draws its instances from a seeded stream and reports the
//! number of cases, the largest deviation seen and whether it passed.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{hedge_weights, project_simplex, Projector};
use crate::error::Result;
use crate::estimation::TransitionConfidenceSet;
use crate::harness::{write_rounds_csv, ExperimentConfig, Simulation};
use crate::model::{
    compute_density, induced_policy, occupancy, Density, Dims, IntrinsicReward, MfgModel, Policy, Transitions,
};
use crate::planner::{enumerate_deterministic_policies, inner_max_l1, optimistic_plan, solve_mdp, FrankWolfeOptions, Utility};
use crate::polytope::polytope_constraints;
use crate::steering::{apply_policy_operator, nz_steering_reward, policy_steering_reward, shift_nonneg};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Outcome of one suite.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub violations: usize,
    /// Largest deviation from the property (suite-specific units).
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} cases={:<5} violations={:<3} max_err={:.3e} tol={:.1e} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.violations,
            self.max_error,
            self.tolerance,
            self.seconds
        )
    }
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    cases: usize,
    violations: usize,
    max_error: f64,
    start: Instant,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tally {
            name,
            tolerance,
            cases: 0,
            violations: 0,
            max_error: 0.0,
            start: Instant::now(),
        }
    }

    /// Records one case with deviation `err` (≤ tolerance passes).
    fn check(&mut self, err: f64) {
        self.cases += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        self.max_error = self.max_error.max(err);
        if err > self.tolerance {
            self.violations += 1;
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            name: self.name,
            cases: self.cases,
            violations: self.violations,
            max_error: self.max_error,
            tolerance: self.tolerance,
            passed: self.violations == 0 && self.cases > 0,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn rng(seed: u64, suite: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(crate::rng::splitmix64(seed ^ crate::rng::splitmix64(suite)))
}

fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> Dims {
    Dims::new(
        rng.random_range(1..=max),
        rng.random_range(1..=max),
        rng.random_range(1..=max),
    )
    .expect("positive sizes")
}

/// A member of Ψ that is generally not induced by a single deterministic
/// policy: a random convex combination of random policy densities.
fn random_member(model: &MfgModel, rng: &mut ChaCha8Rng) -> Result<Density> {
    let k = rng.random_range(1..=3);
    let mut weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut acc = vec![0.0; model.dims.len()];
    for w in weights {
        let mu = compute_density(model, &Policy::random(model.dims, rng))?;
        acc.iter_mut().zip(mu.values()).for_each(|(a, x)| *a += w * x);
    }
    Density::from_raw(model.dims, acc)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// ⟨R_π(μ), μ^π − μ⟩ = ‖(W^π − I)μ‖₂² = Σ_{h,s} μ_h(s)²‖π_h(·|s) − π̄_h(·|s)‖₂².
pub fn eq5_identity(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = rng(seed, 1);
    let mut tally = Tally::new("policy-reward identity", 1e-10);
    for _ in 0..cases {
        let dims = random_dims(&mut rng, 3);
        let model = MfgModel::random(dims, &mut rng);
        let pi = Policy::random(dims, &mut rng);
        let mu = random_member(&model, &mut rng)?;
        let mu_pi = compute_density(&model, &pi)?;
        let r = policy_steering_reward(&pi, &mu)?;
        let lhs = dot(&r, &mu_pi.values().iter().zip(mu.values()).map(|(a, b)| a - b).collect::<Vec<_>>());
        let w_mu = apply_policy_operator(&pi, &mu)?;
        let middle: f64 = w_mu.iter().zip(mu.values()).map(|(a, b)| (a - b).powi(2)).sum();
        let bar = induced_policy(&mu);
        let mut right = 0.0;
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                let m = mu.state_mass(h, s);
                let diff: f64 = pi.row(h, s).iter().zip(bar.row(h, s)).map(|(a, b)| (a - b).powi(2)).sum();
                right += m * m * diff;
            }
        }
        tally.check((lhs - middle).abs().max((middle - right).abs()));
    }
    Ok(tally.finish())
}

/// ‖R_π‖∞ ≤ 2, ‖R_z‖∞ ≤ 4, 0 ≤ R_nz ≤ 2r_max + 4. The reported error is the
/// largest excess over the respective bound.
pub fn boundedness(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = rng(seed, 2);
    let mut tally = Tally::new("steering-reward bounds", 1e-12);
    for _ in 0..cases {
        let dims = random_dims(&mut rng, 3);
        let model = MfgModel::random(dims, &mut rng);
        let pi = Policy::random(dims, &mut rng);
        let mu = random_member(&model, &mut rng)?;
        let r_max = rng.random_range(0.0..3.0);
        let r = policy_steering_reward(&pi, &mu)?;
        let rz = shift_nonneg(&r);
        let rbar: Vec<f64> = (0..dims.len()).map(|_| rng.random::<f64>() * r_max).collect();
        let width: Vec<f64> = (0..dims.len()).map(|_| rng.random::<f64>() * r_max).collect();
        let rnz = nz_steering_reward(&pi, &mu, &rbar, &width, r_max)?;
        let sup = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let excess = (sup(&r) - 2.0)
            .max(sup(&rz) - 4.0)
            .max(sup(&rnz) - (2.0 * r_max + 4.0))
            .max(-min(&rz))
            .max(-min(&rnz));
        tally.check(excess.max(0.0));
    }
    Ok(tally.finish())
}

/// Bμ = b for policy densities, the induced-policy round trip on members of
/// Ψ, and closedness of Ψ under convex combinations.
pub fn polytope(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = rng(seed, 3);
    let mut tally = Tally::new("occupancy polytope", 1e-9);
    for _ in 0..cases {
        let dims = random_dims(&mut rng, 3);
        let model = MfgModel::random(dims, &mut rng);
        let cons = polytope_constraints(&model);
        let a = compute_density(&model, &Policy::random(dims, &mut rng))?;
        let b = compute_density(&model, &Policy::random(dims, &mut rng))?;
        let lam: f64 = rng.random();
        let mix: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
        let mix = Density::from_raw(dims, mix)?;
        let back = compute_density(&model, &induced_policy(&mix))?;
        let err = cons
            .max_residual(a.values())?
            .max(cons.max_residual(mix.values())?)
            .max(l1(back.values(), mix.values()))
            .max(-mix.values().iter().copied().fold(0.0, f64::min));
        tally.check(err);
    }
    Ok(tally.finish())
}

/// The two density-difference inequalities: policy perturbation and kernel
/// perturbation. The error is the excess of the left side over the bound.
pub fn lipschitz(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = rng(seed, 4);
    let mut tally = Tally::new("density Lipschitz bounds", 1e-9);
    for _ in 0..cases {
        let dims = random_dims(&mut rng, 3);
        let model = MfgModel::random(dims, &mut rng);
        let pi = Policy::random(dims, &mut rng);
        let pi2 = perturb_policy(&pi, &mut rng)?;
        let mu = compute_density(&model, &pi)?;
        let mu2 = compute_density(&model, &pi2)?;
        let mut bound = 0.0;
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                bound += mu.state_mass(h, s) * l1(pi.row(h, s), pi2.row(h, s));
            }
        }
        bound *= dims.horizon as f64;
        tally.check((l1(mu.values(), mu2.values()) - bound).max(0.0));

        let other = perturb_kernel(&model.transitions, &mut rng)?;
        let mu3 = occupancy(&other, &model.mu1, &pi)?;
        let mut bound = 0.0;
        for h in 0..dims.horizon.saturating_sub(1) {
            for s in 0..dims.states {
                for a in 0..dims.actions {
                    bound += mu.get(h, s, a) * l1(model.transitions.row(h, s, a), other.row(h, s, a));
                }
            }
        }
        bound *= dims.horizon as f64;
        tally.check((l1(mu.values(), mu3.values()) - bound).max(0.0));
    }
    Ok(tally.finish())
}

fn perturb_policy(pi: &Policy, rng: &mut ChaCha8Rng) -> Result<Policy> {
    let other = Policy::random(pi.dims(), rng);
    let w: f64 = rng.random();
    let probs = pi.probs().iter().zip(other.probs()).map(|(a, b)| (1.0 - w) * a + w * b).collect();
    Policy::new(pi.dims(), probs)
}

fn perturb_kernel(p: &Transitions, rng: &mut ChaCha8Rng) -> Result<Transitions> {
    let other = Transitions::random(p.dims(), rng);
    let w: f64 = rng.random();
    let values = p.as_slice().iter().zip(other.as_slice()).map(|(a, b)| (1.0 - w) * a + w * b).collect();
    Transitions::new(p.dims(), values)
}

/// Expected second-half regret of stateless Hedge when the reward switches
/// from e₁ to e₂ halfway, computed from the closed-form weights.
pub fn hedge_second_half_regret(rounds: usize, eta: f64) -> f64 {
    let half = rounds / 2;
    let mut cumulative = [0.0, 0.0];
    let mut earned = 0.0;
    for t in 1..=rounds {
        let g = if t <= half { [1.0, 0.0] } else { [0.0, 1.0] };
        let p = hedge_weights(&cumulative, eta);
        if t > half {
            earned += dot(&g, &p);
        }
        cumulative[0] += g[0];
        cumulative[1] += g[1];
    }
    (rounds - half) as f64 - earned
}

/// Hedge fails adaptive regret: second-half regret ≥ T/4.
pub fn hedge_counterexample() -> SuiteReport {
    let mut tally = Tally::new("hedge counterexample", 0.0);
    let rounds = 2000;
    let regret = hedge_second_half_regret(rounds, 1.0 / (rounds as f64).sqrt());
    tally.check((rounds as f64 / 4.0 - regret).max(0.0));
    tally.finish()
}

/// Exact optimum of max ⟨v, p⟩ over {p ∈ Δ, ‖p − c‖₁ ≤ r} by enumerating the
/// basic feasible solutions of the lifted LP p = c + u − w (u, w ≥ 0).
pub fn l1_ball_lp_by_vertices(center: &[f64], radius: f64, values: &[f64]) -> f64 {
    let n = center.len();
    let vars = 2 * n;
    // Rows (a, rhs) of inequalities a·x ≤ rhs over x = (u, w).
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    ineq.push(((0..vars).map(|_| 1.0).collect(), radius));
    for i in 0..n {
        // −(c_i + u_i − w_i) ≤ 0.
        let mut a = vec![0.0; vars];
        a[i] = -1.0;
        a[n + i] = 1.0;
        ineq.push((a, center[i]));
    }
    for j in 0..vars {
        let mut a = vec![0.0; vars];
        a[j] = -1.0;
        ineq.push((a, 0.0));
    }
    let eq: Vec<f64> = (0..vars).map(|j| if j < n { 1.0 } else { -1.0 }).collect();
    let m = ineq.len();
    let mut best = f64::NEG_INFINITY;
    let mut choose = vec![0usize; vars - 1];
    fn next_combination(c: &mut [usize], m: usize) -> bool {
        let k = c.len();
        for i in (0..k).rev() {
            if c[i] < m - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, slot) in choose.iter_mut().enumerate() {
        *slot = i;
    }
    loop {
        let a = DMatrix::from_fn(vars, vars, |r, col| if r == 0 { eq[col] } else { ineq[choose[r - 1]].0[col] });
        let b = DVector::from_fn(vars, |r, _| if r == 0 { 0.0 } else { ineq[choose[r - 1]].1 });
        if let Some(x) = a.lu().solve(&b) {
            let feasible = ineq.iter().all(|(row, rhs)| dot(row, x.as_slice()) <= rhs + 1e-12)
                && dot(&eq, x.as_slice()).abs() <= 1e-12;
            if feasible {
                let obj: f64 = (0..n).map(|i| values[i] * (center[i] + x[i] - x[n + i])).sum();
                best = best.max(obj);
            }
        }
        if !next_combination(&mut choose, m) {
            break;
        }
    }
    best
}

/// Optimistic planning over a confidence set that contains the true kernel
/// never undershoots the true optimum; the L1-ball inner maximization matches
/// LP vertex enumeration.
pub fn planner_optimism(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = rng(seed, 5);
    let mut tally = Tally::new("planner optimism", 1e-9);
    let dims = Dims::new(2, 2, 2)?;
    let policies = enumerate_deterministic_policies(dims);
    for _ in 0..cases {
        let model = MfgModel::random(dims, &mut rng);
        let noise = Transitions::random(dims, &mut rng);
        let w = rng.random_range(0.0..0.5);
        let center_values: Vec<f64> = model
            .transitions
            .as_slice()
            .iter()
            .zip(noise.as_slice())
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        let center = Transitions::new(dims, center_values)?;
        let radii: Vec<f64> = (0..dims.len())
            .map(|i| {
                let (h, s, a) = dims.unindex(i);
                l1(center.row(h, s, a), model.transitions.row(h, s, a)) + rng.random_range(0.0..0.3)
            })
            .collect();
        let set = TransitionConfidenceSet::from_parts(center, radii)?;
        let c: Vec<f64> = (0..dims.len()).map(|_| rng.random::<f64>()).collect();
        let plan = optimistic_plan(&set, &model.mu1, &Utility::linear(c.clone()), FrankWolfeOptions::default())?;
        let truth = policies
            .iter()
            .map(|p| compute_density(&model, p).map(|mu| dot(&c, mu.values())))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        tally.check((truth - plan.value).max(0.0));

        let s = rng.random_range(2..=3);
        let center = crate::model::random_simplex(s, &mut rng);
        let radius = rng.random_range(0.0..2.5);
        let values: Vec<f64> = (0..s).map(|_| rng.random::<f64>()).collect();
        let p = inner_max_l1(&center, radius, &values);
        let feasible_err = (l1(&p, &center) - radius).max(0.0) + (p.iter().sum::<f64>() - 1.0).abs();
        let exact = l1_ball_lp_by_vertices(&center, radius, &values);
        tally.check(feasible_err.max((dot(&p, &values) - exact).abs()));
    }
    Ok(tally.finish())
}

/// compute_density equals the brute-force sum over all state-action paths.
pub fn density_enumeration(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = rng(seed, 6);
    let mut tally = Tally::new("density enumeration", 1e-12);
    for _ in 0..cases {
        let dims = random_dims(&mut rng, 3);
        let model = MfgModel::random(dims, &mut rng);
        let pi = Policy::random(dims, &mut rng);
        let mu = compute_density(&model, &pi)?;
        let mut brute = vec![0.0; dims.len()];
        let paths = (dims.states * dims.actions).pow(dims.horizon as u32);
        for code in 0..paths {
            let mut c = code;
            let mut prob = 1.0;
            let mut prev: Option<(usize, usize)> = None;
            let mut cells = Vec::with_capacity(dims.horizon);
            for h in 0..dims.horizon {
                let s = c % dims.states;
                c /= dims.states;
                let a = c % dims.actions;
                c /= dims.actions;
                prob *= match prev {
                    None => model.mu1[s],
                    Some((ps, pa)) => model.transitions.row(h - 1, ps, pa)[s],
                } * pi.prob(h, s, a);
                prev = Some((s, a));
                cells.push(dims.index(h, s, a));
            }
            for i in cells {
                brute[i] += prob;
            }
        }
        tally.check(mu.values().iter().zip(&brute).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok(tally.finish())
}

/// Projection onto Ψ: feasibility and the variational inequality
/// ⟨x − Proj(x), m − Proj(x)⟩ ≤ 0 against random members m; on stateless
/// games it matches the sorted-threshold simplex projection.
pub fn projection(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = rng(seed, 7);
    let mut tally = Tally::new("polytope projection", 1e-8);
    for _ in 0..cases {
        let dims = random_dims(&mut rng, 3);
        let model = MfgModel::random(dims, &mut rng);
        let cons = polytope_constraints(&model);
        let projector = Projector::new(cons.clone())?;
        let x: Vec<f64> = (0..dims.len()).map(|_| rng.random_range(-1.0..1.5)).collect();
        let p = projector.project(&x)?;
        let mut err = cons.max_residual(p.values())?.max(-p.values().iter().copied().fold(0.0, f64::min));
        for _ in 0..50 {
            let m = random_member(&model, &mut rng)?;
            let vi: f64 = (0..dims.len())
                .map(|i| (x[i] - p.values()[i]) * (m.values()[i] - p.values()[i]))
                .sum();
            err = err.max(vi);
        }
        tally.check(err);

        let a = rng.random_range(2..=4);
        let stateless = Dims::stateless(a);
        let game = MfgModel::new(
            stateless,
            vec![1.0],
            Transitions::uniform(stateless),
            IntrinsicReward::Zero,
            0.0,
        )?;
        let point: Vec<f64> = (0..a).map(|_| rng.random_range(-1.0..1.5)).collect();
        let projected = Projector::new(polytope_constraints(&game))?.project(&point)?;
        let exact = project_simplex(&point, 1.0);
        tally.check(projected.values().iter().zip(&exact).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
    }
    Ok(tally.finish())
}

/// The best response is at least as good as every deterministic policy.
pub fn best_response_optimality(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = rng(seed, 8);
    let mut tally = Tally::new("dynamic programming", 1e-12);
    let dims = Dims::new(2, 2, 2)?;
    let policies = enumerate_deterministic_policies(dims);
    for _ in 0..cases {
        let model = MfgModel::random(dims, &mut rng);
        let g: Vec<f64> = (0..dims.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, value) = solve_mdp(&model.transitions, &model.mu1, &g)?;
        let best = policies
            .iter()
            .map(|p| compute_density(&model, p).map(|mu| dot(&g, mu.values())))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        tally.check((value - best).abs());
    }
    Ok(tally.finish())
}

/// A small bundled experiment used by the determinism suite.
pub fn determinism_config() -> ExperimentConfig {
    ExperimentConfig::from_json_str(
        r#"{
            "generator": {"S": 2, "A": 2, "H": 2, "reward": {"family": "linear"}, "r_max": 1.0},
            "population": [{"count": 4, "kind": "ogd"}],
            "mediator": {"strategy": "scenario2"},
            "utility": {"kind": "linear_random"},
            "T": 60,
            "sigma": 0.2,
            "seed": 11
        }"#,
    )
    .expect("bundled configuration is valid")
}

/// Re-running a configuration with the same seed reproduces the CSV bytes.
pub fn determinism(seed: u64) -> Result<SuiteReport> {
    let mut tally = Tally::new("seeded determinism", 0.0);
    let mut config = determinism_config();
    config.seed = seed;
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let out = Simulation::new(config.clone())?.run()?;
        let mut buf = Vec::new();
        write_rounds_csv(&out.records, &mut buf)?;
        bytes.push(buf);
    }
    tally.check(if bytes[0] == bytes[1] { 0.0 } else { 1.0 });
    Ok(tally.finish())
}

/// Every suite with its default case count.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        eq5_identity(seed, 1000)?,
        boundedness(seed, 1000)?,
        polytope(seed, 500)?,
        lipschitz(seed, 500)?,
        hedge_counterexample(),
        planner_optimism(seed, 200)?,
        density_enumeration(seed, 200)?,
        projection(seed, 100)?,
        best_response_optimality(seed, 200)?,
        determinism(seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_lp_matches_hand_solution() {
        let v = l1_ball_lp_by_vertices(&[0.5, 0.5], 0.2, &[1.0, 0.0]);
        assert!((v - 0.6).abs() < 1e-12);
    }

    #[test]
    fn suites_pass_on_small_counts() {
        for r in [
            eq5_identity(1, 50).unwrap(),
            boundedness(1, 50).unwrap(),
            polytope(1, 50).unwrap(),
            lipschitz(1, 50).unwrap(),
            hedge_counterexample(),
        ] {
            assert!(r.passed, "{r}");
        }
    }
}
