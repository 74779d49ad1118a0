//! Steering-reward constructions.
//!
//! The policy operator W^π maps a density to (W^π μ)_{h,s,a} = π_h(a|s)·μ_h(s)
//! and is applied implicitly. The policy steering reward is
//! R_π(μ) = −(W^π − I)ᵀ(W^π − I)μ; writing v = W^π μ − μ this is
//! (R_π)_{h,s,a} = v_{h,s,a} − Σ_{a'} π_h(a'|s) v_{h,s,a'}.

use std::sync::Arc;

use log::warn;

use crate::error::{check_len, Error, Result};
use crate::estimation::RewardConfidence;
use crate::model::{linf, Density, IntrinsicReward, Policy};

/// Entries more negative than this are a bug, not round-off.
const NEGATIVE_TOL: f64 = 1e-9;

fn check_same_dims(policy: &Policy, mu: &Density) -> Result<()> {
    if policy.dims() != mu.dims() {
        return Err(Error::invalid("policy and density dimensions differ"));
    }
    Ok(())
}

/// μ* − μ + ‖μ* − μ‖∞·1.
pub fn target_density_reward(mu_star: &Density, mu: &Density) -> Result<Vec<f64>> {
    check_len("density", mu_star.values().len(), mu.values().len())?;
    let diff: Vec<f64> = mu_star.values().iter().zip(mu.values()).map(|(a, b)| a - b).collect();
    Ok(shift_nonneg(&diff))
}

/// W^π μ.
pub fn apply_policy_operator(policy: &Policy, mu: &Density) -> Result<Vec<f64>> {
    check_same_dims(policy, mu)?;
    let d = mu.dims();
    let mut out = vec![0.0; d.len()];
    for h in 0..d.horizon {
        for s in 0..d.states {
            let m = mu.state_mass(h, s);
            let row = policy.row(h, s);
            let base = d.index(h, s, 0);
            for a in 0..d.actions {
                out[base + a] = row[a] * m;
            }
        }
    }
    Ok(out)
}

/// R_π(μ) = −(W^π − I)ᵀ(W^π − I)μ.
pub fn policy_steering_reward(policy: &Policy, mu: &Density) -> Result<Vec<f64>> {
    let wmu = apply_policy_operator(policy, mu)?;
    let d = mu.dims();
    let v: Vec<f64> = wmu.iter().zip(mu.values()).map(|(a, b)| a - b).collect();
    let mut out = vec![0.0; d.len()];
    for h in 0..d.horizon {
        for s in 0..d.states {
            let base = d.index(h, s, 0);
            let row = policy.row(h, s);
            let block = &v[base..base + d.actions];
            let avg: f64 = row.iter().zip(block).map(|(p, x)| p * x).sum();
            for a in 0..d.actions {
                out[base + a] = block[a] - avg;
            }
        }
    }
    Ok(out)
}

/// raw + ‖raw‖∞·1.
pub fn shift_nonneg(raw: &[f64]) -> Vec<f64> {
    let m = linf(raw);
    raw.iter().map(|x| x + m).collect()
}

/// Clamps round-off negatives to zero; anything below −1e-9 is an error.
fn clamp_roundoff(mut v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let mut clamped = false;
    for x in v.iter_mut() {
        if *x < 0.0 {
            if *x < -NEGATIVE_TOL {
                return Err(Error::Numerical(format!("{what} has a negative entry {x}")));
            }
            *x = 0.0;
            clamped = true;
        }
    }
    if clamped {
        warn!("{what}: clamped round-off negatives to zero");
    }
    Ok(v)
}

/// R_π(μ) − (r̄ − w) + (r_max + ‖R_π(μ)‖∞)·1.
pub fn nz_steering_reward(
    policy: &Policy,
    mu: &Density,
    rbar: &[f64],
    width: &[f64],
    r_max: f64,
) -> Result<Vec<f64>> {
    let n = mu.values().len();
    check_len("reward estimate", n, rbar.len())?;
    check_len("width", n, width.len())?;
    if width.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("width entries must be nonnegative"));
    }
    let r_pi = policy_steering_reward(policy, mu)?;
    let shift = r_max + linf(&r_pi);
    let out = r_pi
        .iter()
        .zip(rbar.iter().zip(width))
        .map(|(r, (m, w))| r - (m - w) + shift)
        .collect();
    clamp_roundoff(out, "R_nz")
}

/// r_max·1 − r*(μ).
pub fn sandboxing_reward(r_star_at_mu: &[f64], r_max: f64) -> Result<Vec<f64>> {
    if r_star_at_mu
        .iter()
        .any(|&r| !(r >= -NEGATIVE_TOL && r <= r_max + NEGATIVE_TOL))
    {
        return Err(Error::invalid("intrinsic reward entries must lie in [0, r_max]"));
    }
    Ok(r_star_at_mu.iter().map(|r| (r_max - r).max(0.0)).collect())
}

/// A steering reward function μ ↦ R(μ) ≥ 0 announced by the mediator.
#[derive(Clone, Debug)]
pub enum SteeringReward {
    Zero,
    /// μ* − μ + ‖μ* − μ‖∞·1 (the known-model reward).
    TargetDensity { target: Density },
    /// R_z = R_π + ‖R_π‖∞·1.
    PolicySteer { policy: Policy },
    /// R_nz built from a reward confidence set.
    NonZeroIntrinsic {
        policy: Policy,
        estimate: Arc<RewardConfidence>,
        r_max: f64,
    },
    /// R_π shifted, plus the sandboxing comparator r_max·1 − r*(μ) for a known r*.
    Sandboxing {
        policy: Option<Policy>,
        reward: IntrinsicReward,
        r_max: f64,
    },
}

impl SteeringReward {
    pub fn evaluate(&self, mu: &Density) -> Result<Vec<f64>> {
        match self {
            SteeringReward::Zero => Ok(vec![0.0; mu.values().len()]),
            SteeringReward::TargetDensity { target } => target_density_reward(target, mu),
            SteeringReward::PolicySteer { policy } => {
                Ok(shift_nonneg(&policy_steering_reward(policy, mu)?))
            }
            SteeringReward::NonZeroIntrinsic {
                policy,
                estimate,
                r_max,
            } => {
                let (rbar, width) = estimate.mean_and_width(mu);
                nz_steering_reward(policy, mu, &rbar, &width, *r_max)
            }
            SteeringReward::Sandboxing {
                policy,
                reward,
                r_max,
            } => {
                let mut out = sandboxing_reward(&reward.vector(mu), *r_max)?;
                if let Some(p) = policy {
                    let r = shift_nonneg(&policy_steering_reward(p, mu)?);
                    out.iter_mut().zip(r).for_each(|(o, x)| *o += x);
                }
                Ok(out)
            }
        }
    }

    /// The a-priori cap R_max on ‖R(μ)‖∞.
    pub fn r_max_bound(&self) -> f64 {
        match self {
            SteeringReward::Zero => 0.0,
            SteeringReward::TargetDensity { .. } => 2.0,
            SteeringReward::PolicySteer { .. } => 4.0,
            SteeringReward::NonZeroIntrinsic { r_max, .. } => 2.0 * r_max + 4.0,
            SteeringReward::Sandboxing { policy, r_max, .. } => {
                r_max + if policy.is_some() { 4.0 } else { 0.0 }
            }
        }
    }

    /// The target policy this reward steers towards, if any.
    pub fn target_policy(&self) -> Option<&Policy> {
        match self {
            SteeringReward::PolicySteer { policy } | SteeringReward::NonZeroIntrinsic { policy, .. } => {
                Some(policy)
            }
            SteeringReward::Sandboxing { policy, .. } => policy.as_ref(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    fn stateless(values: &[f64]) -> Density {
        Density::new(Dims::stateless(values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn target_density_hand_example() {
        let r = target_density_reward(&stateless(&[1.0, 0.0]), &stateless(&[0.5, 0.5])).unwrap();
        assert_eq!(r, vec![1.0, 0.0]);
        let z = target_density_reward(&stateless(&[0.3, 0.7]), &stateless(&[0.3, 0.7])).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn policy_operator_hand_example() {
        let pi = Policy::new(Dims::stateless(2), vec![1.0, 0.0]).unwrap();
        let mu = stateless(&[0.5, 0.5]);
        assert_eq!(apply_policy_operator(&pi, &mu).unwrap(), vec![1.0, 0.0]);
        let r = policy_steering_reward(&pi, &mu).unwrap();
        assert_eq!(r, vec![0.0, -1.0]);
        // ⟨R, μ^π − μ⟩ = (0)(0.5) + (−1)(−0.5) = 0.5 = ‖(W−I)μ‖².
        assert_eq!(shift_nonneg(&r), vec![1.0, 0.0]);
    }

    #[test]
    fn sandboxing_examples() {
        assert_eq!(sandboxing_reward(&[0.0, 0.0], 1.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(sandboxing_reward(&[1.0, 1.0], 1.0).unwrap(), vec![0.0, 0.0]);
        let r = sandboxing_reward(&[0.3, 0.7], 1.0).unwrap();
        assert!((r[0] - 0.7).abs() < 1e-15 && (r[1] - 0.3).abs() < 1e-15);
        assert!(sandboxing_reward(&[1.5], 1.0).is_err());
    }

    #[test]
    fn nz_rejects_negative_width() {
        let pi = Policy::uniform(Dims::stateless(2));
        let mu = stateless(&[0.5, 0.5]);
        assert!(nz_steering_reward(&pi, &mu, &[0.0, 0.0], &[-0.1, 0.0], 1.0).is_err());
    }

    #[test]
    fn nz_perfect_estimate_is_sandboxing() {
        let pi = Policy::new(Dims::stateless(2), vec![0.4, 0.6]).unwrap();
        let mu = stateless(&[0.4, 0.6]);
        let r_star = [0.3, 0.8];
        let out = nz_steering_reward(&pi, &mu, &r_star, &[0.0, 0.0], 1.0).unwrap();
        let sb = sandboxing_reward(&r_star, 1.0).unwrap();
        for (a, b) in out.iter().zip(&sb) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
