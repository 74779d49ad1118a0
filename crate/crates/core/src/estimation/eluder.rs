//! Eluder-dimension diagnostics for linear classes.
//!
//! A point x is ε-independent of a sequence x₁…x_n with respect to
//! {θᵀφ : ‖θ‖₂ ≤ C} if some pair of class members differs by more than ε at x
//! while their squared differences on the sequence sum to at most ε². With
//! Δ = θ − θ̃ ranging over the ball of radius 2C, the largest gap is
//!
//!   max Δᵀφ  s.t.  ΔᵀGΔ ≤ ε², ‖Δ‖² ≤ 4C²,
//!
//! where G = Σ φ(x_j)φ(x_j)ᵀ. By conic duality this equals
//! min_{t∈[0,1]} √(φᵀ M_t⁻¹ φ) with M_t = tG/ε² + (1 − t)I/(4C²); the objective
//! is convex in t and is minimized by golden-section search.

use nalgebra::{DMatrix, DVector};

use super::features::RewardClass;

/// Largest |f(φ) − f̃(φ)| over class pairs that agree to within ε (in
/// squared-sum) on the sequence summarized by `gram`.
pub fn max_gap_linear(gram: &DMatrix<f64>, phi: &[f64], epsilon: f64, c_theta: f64) -> f64 {
    let d = phi.len();
    let v = DVector::from_column_slice(phi);
    if v.norm() == 0.0 {
        return 0.0;
    }
    let eval = |t: f64| -> f64 {
        let mut m = gram * (t / (epsilon * epsilon));
        let iso = (1.0 - t) / (4.0 * c_theta * c_theta);
        for i in 0..d {
            m[(i, i)] += iso;
        }
        match m.cholesky() {
            Some(c) => v.dot(&c.solve(&v)).max(0.0),
            None => f64::INFINITY,
        }
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..120 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = eval(x2);
        }
    }
    [eval(0.0), eval(1.0), f1, f2].into_iter().fold(f64::INFINITY, f64::min).sqrt()
}

/// Relative margin guarding the strict inequality against round-off.
const INDEPENDENCE_MARGIN: f64 = 1e-9;

/// True iff `phi` is ε-independent of the sequence with Gram matrix `gram`.
pub fn is_independent(gram: &DMatrix<f64>, phi: &[f64], epsilon: f64, c_theta: f64) -> bool {
    max_gap_linear(gram, phi, epsilon, c_theta) > epsilon * (1.0 + INDEPENDENCE_MARGIN)
}

/// Greedy lower bound on the eluder dimension from a finite candidate pool of
/// feature vectors: repeatedly append the independent candidate with the
/// smallest gap (lowest index on ties), which keeps the Gram matrix as small
/// as possible for later picks. Each candidate is used at most once.
pub fn eluder_sequence_length_features(candidates: &[Vec<f64>], epsilon: f64, c_theta: f64) -> usize {
    let Some(d) = candidates.first().map(Vec::len) else {
        return 0;
    };
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut used = vec![false; candidates.len()];
    let mut length = 0;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, phi) in candidates.iter().enumerate() {
            if used[i] {
                continue;
            }
            let gap = max_gap_linear(&gram, phi, epsilon, c_theta);
            if gap > epsilon * (1.0 + INDEPENDENCE_MARGIN) && best.is_none_or(|(_, g)| gap < g) {
                best = Some((i, gap));
            }
        }
        let Some((i, _)) = best else {
            return length;
        };
        used[i] = true;
        let v = DVector::from_column_slice(&candidates[i]);
        gram.ger(1.0, &v, &v, 1.0);
        length += 1;
    }
}

/// [`eluder_sequence_length_features`] for a reward class; candidates are
/// queries (h, s, a, μ_h). Generalized linear classes are measured through
/// their linear predictor.
pub fn eluder_sequence_length(
    class: &RewardClass,
    candidates: &[(usize, usize, usize, Vec<f64>)],
    epsilon: f64,
) -> usize {
    let feats: Vec<Vec<f64>> = candidates
        .iter()
        .map(|(h, s, a, step)| class.features(*h, *s, *a, step))
        .collect();
    eluder_sequence_length_features(&feats, epsilon, class.c_theta)
}
