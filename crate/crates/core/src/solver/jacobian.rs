//! Finite-difference Jacobians with distance-2 column coloring.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::solver::backend::{Regularization, SchemeBackend};
use crate::state::State;

/// Dof coupling graph and a coloring of it such that dofs sharing a color
/// never influence a common residual row.
#[derive(Debug, Clone)]
pub struct SparsityPattern {
    neighbors: Vec<Vec<usize>>,
    colors: Vec<usize>,
    color_count: usize,
}

impl SparsityPattern {
    pub fn from_neighbors(neighbors: Vec<Vec<usize>>) -> Self {
        let n = neighbors.len();
        let mut colors = vec![usize::MAX; n];
        let mut color_count = 0;
        let mut mark = Vec::new();
        for j in 0..n {
            mark.clear();
            for &a in &neighbors[j] {
                for &b in &neighbors[a] {
                    if colors[b] != usize::MAX {
                        mark.push(colors[b]);
                    }
                }
            }
            mark.sort_unstable();
            mark.dedup();
            let c = (0..).find(|c| mark.binary_search(c).is_err()).unwrap();
            colors[j] = c;
            color_count = color_count.max(c + 1);
        }
        Self { neighbors, colors, color_count }
    }

    pub fn for_backend(backend: &dyn SchemeBackend) -> Self {
        Self::from_neighbors(backend.dof_neighbors())
    }

    pub fn dof_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn color_count(&self) -> usize {
        self.color_count
    }

    pub fn neighbors(&self, dof: usize) -> &[usize] {
        &self.neighbors[dof]
    }

    /// Whether the residual rows of `row_dof` may depend on the unknowns of `col_dof`.
    pub fn contains(&self, row_dof: usize, col_dof: usize) -> bool {
        self.neighbors[col_dof].binary_search(&row_dof).is_ok()
    }
}

/// Direction in which a gas saturation moves away from the nearest kink of
/// the clamp `Z` (at 0 and 1), so that a one-sided difference stays on the
/// smooth piece containing the current state.
fn away_from_kink(s: f64) -> f64 {
    if (0.0..0.5).contains(&s) || s > 1.0 {
        1.0
    } else {
        -1.0
    }
}

/// One-sided difference Jacobian of the residual with respect to
/// `[p_g, p_w]`. Steps are signed per unknown to avoid differencing across
/// the saturation clamp.
pub fn fd_jacobian(
    backend: &dyn SchemeBackend,
    state: &State,
    prev: &State,
    reg: Option<Regularization>,
    pattern: &SparsityPattern,
    base: Option<&[f64]>,
) -> DMatrix<f64> {
    let n = backend.dof_count();
    let fluid = backend.fluid();
    let owned;
    let r0 = match base {
        Some(r) => r,
        None => {
            owned = backend.residual(state, prev, reg);
            &owned
        }
    };
    let x0 = state.unknowns();
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for phase in 0..2 {
        for color in 0..pattern.color_count() {
            let cols: Vec<usize> = (0..n).filter(|&j| pattern.colors[j] == color).collect();
            let mut x = x0.clone();
            let mut steps = Vec::with_capacity(cols.len());
            for &j in &cols {
                let c = phase * n + j;
                // p_g raises s_g, p_w lowers it
                let dir = away_from_kink(state.s_g()[j]) * if phase == 0 { 1.0 } else { -1.0 };
                let h = dir * 1e-7 * x0[c].abs().max(1.0);
                x[c] = x0[c] + h;
                steps.push(x[c] - x0[c]);
            }
            let r = backend.residual(&State::from_unknowns(fluid, &x), prev, reg);
            for (&j, &h) in cols.iter().zip(&steps) {
                for &i in pattern.neighbors(j) {
                    for row_phase in 0..2 {
                        let row = row_phase * n + i;
                        jac[(row, phase * n + j)] = (r[row] - r0[row]) / h;
                    }
                }
            }
        }
    }
    jac
}

/// Writes a residual vector and a Jacobian (nonzero entries only) as text.
pub fn dump_linearization(path: &Path, residual: &[f64], jacobian: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# residual {}", residual.len());
    for (i, r) in residual.iter().enumerate() {
        let _ = writeln!(out, "{i} {r:.17e}");
    }
    let nnz = jacobian.iter().filter(|v| **v != 0.0).count();
    let _ = writeln!(out, "# jacobian {} {} {}", jacobian.nrows(), jacobian.ncols(), nnz);
    for j in 0..jacobian.ncols() {
        for i in 0..jacobian.nrows() {
            let v = jacobian[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{i} {j} {v:.17e}");
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `J v` by a matrix-vector product, for directional-derivative checks.
pub fn apply(jac: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (jac * DVector::from_column_slice(v)).iter().copied().collect()
}
