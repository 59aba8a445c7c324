use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::backend::{Regularization, SchemeBackend};
use crate::solver::jacobian::{fd_jacobian, SparsityPattern};
use crate::solver::linear::linear_solve;
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOptions {
    /// Tolerance on the row-scaled ∞-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Extra iterations spent after reaching `tol` while the residual still
    /// drops by at least half per step.
    pub polish: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 40, max_halvings: 20, polish: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Row-scaled ∞-norm of the final residual.
    pub residual: f64,
    /// Unscaled ∞-norm of the final residual.
    pub residual_unscaled: f64,
    /// Scaled ∞-norm before each iteration and at the end.
    pub history: Vec<f64>,
}

pub fn scaled_inf_norm(r: &[f64], scales: &[f64]) -> f64 {
    let n = scales.len();
    r.iter().enumerate().map(|(i, v)| (v / scales[i % n]).abs()).fold(0.0, f64::max)
}

fn scaled_two_norm(r: &[f64], scales: &[f64]) -> f64 {
    let n = scales.len();
    r.iter().enumerate().map(|(i, v)| (v / scales[i % n]).powi(2)).sum::<f64>().sqrt()
}

pub fn inf_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Damped Newton iteration for `F^{ε,η}(p, prev) = 0` from `guess`.
pub fn newton_solve(
    backend: &dyn SchemeBackend,
    prev: &State,
    guess: &State,
    reg: Option<Regularization>,
    opts: &NewtonOptions,
    pattern: &SparsityPattern,
) -> Result<(State, NewtonReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParams("Newton tolerance must be positive".into()));
    }
    let scales = backend.row_scales();
    let fluid = backend.fluid();
    let mut state = guess.clone();
    let mut r = backend.residual(&state, prev, reg);
    let mut norm = scaled_inf_norm(&r, &scales);
    let mut history = vec![norm];
    for it in 0..opts.max_iter {
        if !norm.is_finite() {
            return Err(Error::Stagnation { iterations: it, residual: norm });
        }
        if norm <= opts.tol {
            let (state, r, norm, extra) = polish(backend, prev, state, r, norm, reg, opts, pattern, &scales, &mut history);
            return Ok((state, NewtonReport { iterations: it + extra, residual: norm, residual_unscaled: inf_norm(&r), history }));
        }
        let jac = fd_jacobian(backend, &state, prev, reg, pattern, Some(&r));
        let rhs = -DVector::from_column_slice(&r);
        let dx = linear_solve(&jac, &rhs)?;
        let x0 = state.unknowns();
        let f0 = scaled_two_norm(&r, &scales);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let x: Vec<f64> = x0.iter().zip(dx.iter()).map(|(a, d)| a + lambda * d).collect();
            let trial = State::from_unknowns(fluid, &x);
            let rt = backend.residual(&trial, prev, reg);
            let ft = scaled_two_norm(&rt, &scales);
            if ft.is_finite() && ft <= (1.0 - 1e-4 * lambda) * f0 {
                accepted = Some((trial, rt));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((s, rt)) => {
                state = s;
                r = rt;
                norm = scaled_inf_norm(&r, &scales);
                history.push(norm);
            }
            None => return Err(Error::Stagnation { iterations: it + 1, residual: norm }),
        }
    }
    if norm <= opts.tol {
        return Ok((state, NewtonReport { iterations: opts.max_iter, residual: norm, residual_unscaled: inf_norm(&r), history }));
    }
    Err(Error::Stagnation { iterations: opts.max_iter, residual: norm })
}

#[allow(clippy::too_many_arguments)]
fn polish(
    backend: &dyn SchemeBackend,
    prev: &State,
    mut state: State,
    mut r: Vec<f64>,
    mut norm: f64,
    reg: Option<Regularization>,
    opts: &NewtonOptions,
    pattern: &SparsityPattern,
    scales: &[f64],
    history: &mut Vec<f64>,
) -> (State, Vec<f64>, f64, usize) {
    let mut extra = 0;
    while extra < opts.polish && norm > 0.0 {
        let jac = fd_jacobian(backend, &state, prev, reg, pattern, Some(&r));
        let Ok(dx) = linear_solve(&jac, &-DVector::from_column_slice(&r)) else { break };
        let x: Vec<f64> = state.unknowns().iter().zip(dx.iter()).map(|(a, d)| a + d).collect();
        let trial = State::from_unknowns(backend.fluid(), &x);
        let rt = backend.residual(&trial, prev, reg);
        let nt = scaled_inf_norm(&rt, scales);
        if !(nt <= 0.5 * norm) {
            break;
        }
        (state, r, norm) = (trial, rt, nt);
        history.push(norm);
        extra += 1;
    }
    (state, r, norm, extra)
}
