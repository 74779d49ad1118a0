//! Visit counts, the episode-doubling rule and L1 transition confidence sets.

use crate::error::{Error, Result};
use crate::model::{Dims, Trajectory, Transitions};

/// Running visit statistics for the unknown transition kernel.
///
/// `episode[i]` is n_k(h,s,a), the visits inside the current episode;
/// `cumulative[i]` is N_k(h,s,a), the visits in all closed episodes. The
/// transition tallies used for the empirical center are frozen at each
/// episode boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionCounts {
    dims: Dims,
    episode: Vec<u64>,
    cumulative: Vec<u64>,
    tallies: Vec<u64>,
    closed_tallies: Vec<u64>,
    k: usize,
    boundaries: Vec<usize>,
    rounds: usize,
}

impl TransitionCounts {
    pub fn new(dims: Dims) -> Self {
        TransitionCounts {
            dims,
            episode: vec![0; dims.len()],
            cumulative: vec![0; dims.len()],
            tallies: vec![0; dims.len() * dims.states],
            closed_tallies: vec![0; dims.len() * dims.states],
            k: 1,
            boundaries: vec![0],
            rounds: 0,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Current episode index k (starts at 1).
    pub fn episode_index(&self) -> usize {
        self.k
    }

    /// Boundaries T_0 = 0, T_1, …, T_{k−1}.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Number of trajectories ingested so far.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn episode_counts(&self) -> &[u64] {
        &self.episode
    }

    pub fn cumulative_counts(&self) -> &[u64] {
        &self.cumulative
    }

    /// Raw transition tallies for (h, s, a), including the open episode.
    pub fn tally_row(&self, h: usize, s: usize, a: usize) -> &[u64] {
        let i = self.dims.index(h, s, a) * self.dims.states;
        &self.tallies[i..i + self.dims.states]
    }

    /// In-place version of [`update_counts`].
    pub fn ingest(&mut self, traj: &Trajectory) -> Result<()> {
        traj.validate(self.dims)?;
        let d = self.dims;
        for (h, step) in traj.steps.iter().enumerate() {
            let i = d.index(h, step.state, step.action);
            self.episode[i] += 1;
            if let Some(next) = traj.steps.get(h + 1) {
                self.tallies[i * d.states + next.state] += 1;
            }
        }
        self.rounds += 1;
        Ok(())
    }

    /// Closes episode k at round t: N ← N + n, n ← 0, k ← k + 1, T_k = t.
    pub fn close_episode(&mut self, t: usize) {
        for (n_cum, n) in self.cumulative.iter_mut().zip(self.episode.iter_mut()) {
            *n_cum += *n;
            *n = 0;
        }
        self.closed_tallies.copy_from_slice(&self.tallies);
        self.k += 1;
        self.boundaries.push(t);
    }

    /// P̄(·|h,s,a) from data up to the last boundary; `None` where N = 0 or
    /// at the last step (which has no successor).
    pub fn empirical_row(&self, h: usize, s: usize, a: usize) -> Option<Vec<f64>> {
        let d = self.dims;
        if h + 1 >= d.horizon {
            return None;
        }
        let i = d.index(h, s, a);
        let row = &self.closed_tallies[i * d.states..(i + 1) * d.states];
        let total: u64 = row.iter().sum();
        if total == 0 {
            return None;
        }
        Some(row.iter().map(|&c| c as f64 / total as f64).collect())
    }
}

/// Ingests one trajectory into a copy of `counts`.
pub fn update_counts(counts: &TransitionCounts, traj: &Trajectory) -> Result<TransitionCounts> {
    let mut next = counts.clone();
    next.ingest(traj)?;
    Ok(next)
}

/// True iff some cell has n_k ≥ max(1, N_k), or the epoch cap has elapsed.
///
/// The floor at 1 keeps never-visited cells (n = N = 0) from firing on every
/// round.
pub fn episode_trigger(counts: &TransitionCounts, t: usize, t_epoch: Option<usize>) -> bool {
    let doubled = counts
        .episode
        .iter()
        .zip(&counts.cumulative)
        .any(|(&n, &cum)| n >= cum.max(1));
    let last = *counts.boundaries.last().unwrap_or(&0);
    doubled || t_epoch.is_some_and(|e| t.saturating_sub(last) >= e)
}

/// ε(N) = √(2S·ln(T·H·S·A/δ) / max{1, N}).
pub fn confidence_radius(dims: Dims, n: u64, horizon_t: usize, delta: f64) -> f64 {
    let log_term = (horizon_t as f64 * dims.len() as f64 / delta).ln().max(0.0);
    (2.0 * dims.states as f64 * log_term / n.max(1) as f64).sqrt()
}

/// 𝒫 = {P̂ : ‖P̂_h(·|s,a) − P̄_h(·|s,a)‖₁ ≤ ε(h,s,a) for all rows}.
///
/// Rows without data (N = 0, or the final step, whose kernel never affects a
/// density) carry a uniform placeholder center and are unconstrained: their
/// effective radius is at least 2, the L1 diameter of the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionConfidenceSet {
    dims: Dims,
    center: Transitions,
    radii: Vec<f64>,
    observed: Vec<bool>,
}

impl TransitionConfidenceSet {
    /// The initial set 𝒫¹: every kernel.
    pub fn full(dims: Dims) -> Self {
        TransitionConfidenceSet {
            dims,
            center: Transitions::uniform(dims),
            radii: vec![2.0; dims.len()],
            observed: vec![false; dims.len()],
        }
    }

    /// A set with explicit center and radii (all rows treated as observed).
    pub fn from_parts(center: Transitions, radii: Vec<f64>) -> Result<Self> {
        let dims = center.dims();
        crate::error::check_len("radii", dims.len(), radii.len())?;
        if radii.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("confidence radii must be nonnegative"));
        }
        Ok(TransitionConfidenceSet {
            dims,
            center,
            radii,
            observed: vec![true; dims.len()],
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn center(&self) -> &Transitions {
        &self.center
    }

    /// ε(h,s,a) as given by the count formula (or the explicit radii).
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Radius actually enforced for the row.
    pub fn row_radius(&self, h: usize, s: usize, a: usize) -> f64 {
        let i = self.dims.index(h, s, a);
        if self.observed[i] {
            self.radii[i]
        } else {
            self.radii[i].max(2.0)
        }
    }

    /// Largest enforced radius over rows that affect densities (h < H − 1).
    pub fn max_radius(&self) -> f64 {
        let d = self.dims;
        let mut m = 0.0_f64;
        for h in 0..d.horizon.saturating_sub(1) {
            for s in 0..d.states {
                for a in 0..d.actions {
                    m = m.max(self.row_radius(h, s, a));
                }
            }
        }
        m
    }

    /// Membership with additive slack `tol` on each row's L1 distance.
    pub fn contains(&self, p: &Transitions, tol: f64) -> bool {
        let d = self.dims;
        if p.dims() != d {
            return false;
        }
        (0..d.horizon.saturating_sub(1)).all(|h| {
            (0..d.states).all(|s| {
                (0..d.actions).all(|a| {
                    let dist = crate::model::l1(p.row(h, s, a), self.center.row(h, s, a));
                    dist <= self.row_radius(h, s, a) + tol
                })
            })
        })
    }
}

/// Builds 𝒫 from N_k and the tallies frozen at the last episode boundary.
pub fn confidence_radii(
    counts: &TransitionCounts,
    horizon_t: usize,
    delta: f64,
) -> Result<TransitionConfidenceSet> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let d = counts.dims;
    let mut center = Transitions::uniform(d);
    let mut observed = vec![false; d.len()];
    let radii = counts
        .cumulative
        .iter()
        .map(|&n| confidence_radius(d, n, horizon_t, delta))
        .collect();
    for h in 0..d.horizon {
        for s in 0..d.states {
            for a in 0..d.actions {
                if let Some(row) = counts.empirical_row(h, s, a) {
                    center.row_mut(h, s, a).copy_from_slice(&row);
                    observed[d.index(h, s, a)] = true;
                }
            }
        }
    }
    Ok(TransitionConfidenceSet {
        dims: d,
        center,
        radii,
        observed,
    })
}
