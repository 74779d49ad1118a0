//! Linear description of the occupancy polytope Ψ_M = {μ ≥ 0, Bμ = b}.
//!
//! B is block lower-bidiagonal: D = I_S ⊗ 1_Aᵀ on the diagonal (row (h, s)
//! sums μ_h(s, ·)) and −P_{h−1}ᵀ on the subdiagonal (inflow into s at step h).

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result};
use crate::model::{Dims, MfgModel};

#[derive(Clone, Debug)]
pub struct PolytopeConstraints {
    dims: Dims,
    /// Row-wise sparse B: `rows[h * S + s]` lists (column, value).
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
}

impl PolytopeConstraints {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    /// Bμ − b.
    pub fn residual(&self, mu: &[f64]) -> Result<Vec<f64>> {
        check_len("point", self.dims.len(), mu.len())?;
        Ok(self
            .rows
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| row.iter().map(|&(j, v)| v * mu[j]).sum::<f64>() - bi)
            .collect())
    }

    /// ‖Bμ − b‖_∞.
    pub fn max_residual(&self, mu: &[f64]) -> Result<f64> {
        Ok(crate::model::linf(&self.residual(mu)?))
    }

    /// Membership test with equality tolerance `tol` and nonnegativity slack `neg_tol`.
    pub fn contains(&self, mu: &[f64], tol: f64, neg_tol: f64) -> Result<bool> {
        Ok(mu.iter().all(|&x| x >= -neg_tol) && self.max_residual(mu)? <= tol)
    }

    pub fn dense_b(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.dims.len());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn dense_rhs(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.b)
    }

    /// Bᵀy.
    pub fn transpose_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.len()];
        for (row, &yi) in self.rows.iter().zip(y) {
            for &(j, v) in row {
                out[j] += v * yi;
            }
        }
        out
    }
}

pub fn polytope_constraints(model: &MfgModel) -> PolytopeConstraints {
    let d = model.dims;
    let mut rows = Vec::with_capacity(d.rows());
    let mut b = vec![0.0; d.rows()];
    for h in 0..d.horizon {
        for s in 0..d.states {
            let mut row: Vec<(usize, f64)> = (0..d.actions).map(|a| (d.index(h, s, a), 1.0)).collect();
            if h == 0 {
                b[s] = model.mu1[s];
            } else {
                for s_prev in 0..d.states {
                    for a_prev in 0..d.actions {
                        let p = model.transitions.row(h - 1, s_prev, a_prev)[s];
                        if p != 0.0 {
                            row.push((d.index(h - 1, s_prev, a_prev), -p));
                        }
                    }
                }
            }
            rows.push(row);
        }
    }
    PolytopeConstraints { dims: d, rows, b }
}
