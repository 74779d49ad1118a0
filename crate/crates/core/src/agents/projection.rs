//! Euclidean projection onto Ψ = {μ ≥ 0, Bμ = b}.
//!
//! Dykstra's alternating projections between the affine set (closed form via a
//! precomputed factorization of BBᵀ) and the nonnegative orthant. Every few
//! sweeps the current support is used to guess the active set, and the
//! equality-constrained problem on that support is solved directly; if the
//! guess satisfies the KKT conditions the exact projection is returned.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::model::Density;
use crate::polytope::PolytopeConstraints;

pub const PROJECTION_TOL: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 10_000;
const POLISH_EVERY: usize = 5;

/// Reusable projector for one polytope.
#[derive(Clone, Debug)]
pub struct Projector {
    constraints: PolytopeConstraints,
    b_dense: DMatrix<f64>,
    rhs: DVector<f64>,
    /// I − Bᵀ(BBᵀ)⁻¹B.
    null_projector: DMatrix<f64>,
    /// Bᵀ(BBᵀ)⁻¹b, the minimum-norm point of the affine set.
    offset: DVector<f64>,
}

impl Projector {
    pub fn new(constraints: PolytopeConstraints) -> Result<Self> {
        let b = constraints.dense_b();
        let rhs = constraints.dense_rhs();
        let bbt = &b * b.transpose();
        let inv = bbt
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| (&b * b.transpose()).pseudo_inverse(1e-12).ok())
            .ok_or_else(|| Error::Numerical("cannot factor B·Bᵀ".into()))?;
        let bt_inv = b.transpose() * inv;
        let n = b.ncols();
        let null_projector = DMatrix::identity(n, n) - &bt_inv * &b;
        let offset = &bt_inv * &rhs;
        Ok(Projector {
            constraints,
            b_dense: b,
            rhs,
            null_projector,
            offset,
        })
    }

    pub fn constraints(&self) -> &PolytopeConstraints {
        &self.constraints
    }

    fn affine(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.null_projector * x + &self.offset
    }

    /// Equality-constrained projection with coordinates outside `support`
    /// pinned at zero. Returns the candidate if it satisfies the KKT
    /// conditions of the full problem.
    fn polish(&self, point: &DVector<f64>, support: &[usize]) -> Option<DVector<f64>> {
        if support.is_empty() {
            return None;
        }
        let m = self.b_dense.nrows();
        let bs = DMatrix::from_fn(m, support.len(), |i, j| self.b_dense[(i, support[j])]);
        let ps = DVector::from_iterator(support.len(), support.iter().map(|&j| point[j]));
        // z_S = p_S − B_Sᵀλ with B_S z_S = b  ⇒  (B_S B_Sᵀ)λ = B_S p_S − b.
        let lhs = &bs * bs.transpose();
        let r = &bs * &ps - &self.rhs;
        let lambda = lhs.clone().svd(true, true).solve(&r, 1e-12).ok()?;
        let zs = &ps - bs.transpose() * &lambda;
        let mut z = DVector::zeros(point.len());
        for (k, &j) in support.iter().enumerate() {
            if zs[k] < -1e-12 {
                return None;
            }
            z[j] = zs[k].max(0.0);
        }
        if (&self.b_dense * &z - &self.rhs).amax() > 1e-10 {
            return None;
        }
        // Multipliers of the pinned coordinates: ν = z − p + Bᵀλ ≥ 0.
        let bt_lambda = self.b_dense.transpose() * &lambda;
        let mut in_support = vec![false; point.len()];
        support.iter().for_each(|&j| in_support[j] = true);
        for j in 0..point.len() {
            if !in_support[j] && bt_lambda[j] - point[j] < -1e-10 {
                return None;
            }
        }
        Some(z)
    }

    /// Primal residual of an orthant iterate: ‖Bz − b‖∞ plus any negativity.
    fn primal_residual(&self, z: &DVector<f64>) -> f64 {
        let primal = (&self.b_dense * z - &self.rhs).amax();
        let neg = z.iter().fold(0.0_f64, |m, &x| m.max(-x));
        primal.max(neg)
    }

    pub fn project(&self, point: &[f64]) -> Result<Density> {
        let dims = self.constraints.dims();
        check_len("point", dims.len(), point.len())?;
        if point.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("projection input has non-finite entries"));
        }
        let p = DVector::from_column_slice(point);
        // Members are fixed points.
        if point.iter().all(|&x| x >= 0.0) && (&self.b_dense * &p - &self.rhs).amax() <= 1e-12 {
            return Density::from_raw(dims, point.to_vec());
        }
        let mut x = p.clone();
        let mut inc_a = DVector::zeros(p.len());
        let mut inc_o = DVector::zeros(p.len());
        let mut best = x.clone();
        let mut best_res = f64::INFINITY;
        let n = p.len();
        for sweep in 0..MAX_SWEEPS {
            let y = self.affine(&(&x + &inc_a));
            inc_a = &x + &inc_a - &y;
            let shifted = &y + &inc_o;
            let x_new = shifted.map(|v| v.max(0.0));
            inc_o = shifted - &x_new;
            let change = (&x_new - &x).amax();
            x = x_new;
            if sweep % POLISH_EVERY == 0 {
                let mut support: Vec<usize> = (0..n).filter(|&j| y[j] > 1e-12 || x[j] > 1e-12).collect();
                if let Some(z) = self.polish(&p, &support) {
                    return Density::from_raw(dims, z.iter().copied().collect());
                }
                support.retain(|&j| x[j] > 1e-12);
                if let Some(z) = self.polish(&p, &support) {
                    return Density::from_raw(dims, z.iter().copied().collect());
                }
            }
            let res = self.primal_residual(&x);
            if res < best_res {
                best_res = res;
                best.copy_from(&x);
            }
            if res <= PROJECTION_TOL && change <= PROJECTION_TOL * 1e-2 {
                return Density::from_raw(dims, x.iter().copied().collect());
            }
        }
        Err(Error::ProjectionNotConverged {
            sweeps: MAX_SWEEPS,
            residual: best_res,
            best: best.iter().copied().collect(),
        })
    }
}

/// One-shot projection (builds a [`Projector`]).
pub fn project_onto_polytope(point: &[f64], constraints: &PolytopeConstraints) -> Result<Density> {
    Projector::new(constraints.clone())?.project(point)
}

/// Euclidean projection onto the scaled simplex {x ≥ 0, Σx = mass} by the
/// sorted-threshold rule.
pub fn project_simplex(v: &[f64], mass: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let t = (cumulative - mass) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}
