//! `(ε, η)` continuation and the implicit time loop.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::backend::{Regularization, SchemeBackend};
use crate::solver::jacobian::SparsityPattern;
use crate::solver::newton::{inf_norm, newton_solve, NewtonOptions};
use crate::state::State;

/// Decreasing `ε` and `η` schedules, both ending at zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ladder {
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
    /// Rungs that may be inserted between two consecutive accepted rungs.
    pub max_refinements: usize,
}

impl Default for Ladder {
    /// `ε = 10⁻¹·4⁻ᵏ, k = 0..8` then `0`; `η = 10⁻²·4⁻ᵏ, k = 0..4` then `0`.
    fn default() -> Self {
        Self { eps: Self::geometric(1e-1, 4.0, 9), eta: Self::geometric(1e-2, 4.0, 5), max_refinements: 5 }
    }
}

impl Ladder {
    /// `first · factor⁻ᵏ` for `k < count`, followed by `0`.
    pub fn geometric(first: f64, factor: f64, count: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..count).map(|k| first * factor.powi(-(k as i32))).collect();
        v.push(0.0);
        v
    }

    /// The unregularized scheme only.
    pub fn trivial() -> Self {
        Self { eps: vec![0.0], eta: vec![0.0], max_refinements: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("eps", &self.eps), ("eta", &self.eta)] {
            if list.last() != Some(&0.0) {
                return Err(Error::InvalidParams(format!("{name} ladder must end at 0")));
            }
            if list.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidParams(format!("{name} ladder has negative or non-finite entries")));
            }
            if list.windows(2).any(|w| !(w[0] > w[1])) {
                return Err(Error::InvalidParams(format!("{name} ladder must be strictly decreasing")));
            }
        }
        Ok(())
    }

    /// `(ε_k, η_0)` for every `ε_k`, then `(0, η_k)` for the remaining `η_k`.
    pub fn rungs(&self) -> Vec<(f64, f64)> {
        let eta0 = self.eta[0];
        let mut out: Vec<(f64, f64)> = self.eps.iter().map(|&e| (e, eta0)).collect();
        out.extend(self.eta[1..].iter().map(|&h| (0.0, h)));
        out
    }

    /// Rungs leading to `(eps, eta)` in the same order: `ε` decreases first
    /// at the top `η`, then `η` decreases at the target `ε`.
    pub fn path_to(&self, eps: f64, eta: f64) -> Vec<(f64, f64)> {
        let top = self.eta.first().copied().unwrap_or(0.0).max(eta);
        let mut out: Vec<(f64, f64)> = self.eps.iter().filter(|&&e| e > eps).map(|&e| (e, top)).collect();
        out.push((eps, top));
        out.extend(self.eta.iter().filter(|&&h| h < top && h > eta).map(|&h| (eps, h)));
        if eta < top {
            out.push((eps, eta));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RungRecord {
    pub eps: f64,
    pub eta: f64,
    pub inserted: bool,
    pub iterations: usize,
    pub residual: f64,
    pub residual_unscaled: f64,
    pub sat_min: f64,
    pub sat_max: f64,
    pub zeta_p: f64,
    pub zeta_xi: f64,
    pub p_g_norm: f64,
    pub p_w_norm: f64,
    pub pc_norm: f64,
    /// Largest pressure change from the previous accepted rung.
    pub state_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ContinuationTrace {
    pub rungs: Vec<RungRecord>,
    pub failed_attempts: usize,
    /// Unscaled ∞-norm of the residual of the last rung (`F^{0,0}` for a
    /// full ladder) at the returned state.
    pub final_residual: f64,
}

/// `(min, max)` over both phase saturations.
pub fn saturation_bounds(state: &State) -> (f64, f64) {
    state.s_g().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
        (lo.min(s).min(1.0 - s), hi.max(s).max(1.0 - s))
    })
}

fn record(backend: &dyn SchemeBackend, state: &State, from: &State, eps: f64, eta: f64, inserted: bool, it: usize, res: f64, res_u: f64) -> RungRecord {
    let (sat_min, sat_max) = if state.is_empty() { (0.0, 1.0) } else { saturation_bounds(state) };
    let (zeta_p, zeta_xi) = backend.zeta_norms(state);
    let (p_g_norm, p_w_norm) = backend.pressure_norms(state);
    RungRecord {
        eps,
        eta,
        inserted,
        iterations: it,
        residual: res,
        residual_unscaled: res_u,
        sat_min,
        sat_max,
        zeta_p,
        zeta_xi,
        p_g_norm,
        p_w_norm,
        pc_norm: backend.norm_of_difference(state),
        state_change: state.max_abs_diff(from),
    }
}

/// Solves the unregularized scheme by walking down the ladder, warm-starting
/// each rung from the previous one. A failing rung triggers the insertion of
/// an intermediate rung between it and the last accepted one.
pub fn continuation_solve(
    backend: &dyn SchemeBackend,
    prev: &State,
    ladder: &Ladder,
    opts: &NewtonOptions,
) -> Result<(State, ContinuationTrace)> {
    ladder.validate()?;
    solve_path(backend, prev, &ladder.rungs(), ladder.max_refinements, opts)
}

/// Solves `F^{ε,η} = 0` for a single target through [`Ladder::path_to`].
pub fn continuation_to(
    backend: &dyn SchemeBackend,
    prev: &State,
    ladder: &Ladder,
    target: Regularization,
    opts: &NewtonOptions,
) -> Result<(State, ContinuationTrace)> {
    ladder.validate()?;
    if !(target.eps >= 0.0 && target.eta >= 0.0) {
        return Err(Error::InvalidParams("regularization parameters must be non-negative".into()));
    }
    solve_path(backend, prev, &ladder.path_to(target.eps, target.eta), ladder.max_refinements, opts)
}

/// Walks the given rungs; the trace's final residual is measured at the last.
pub fn solve_path(
    backend: &dyn SchemeBackend,
    prev: &State,
    rungs: &[(f64, f64)],
    max_refinements: usize,
    opts: &NewtonOptions,
) -> Result<(State, ContinuationTrace)> {
    let Some(&(eps_final, eta_final)) = rungs.last() else {
        return Err(Error::InvalidParams("empty continuation path".into()));
    };
    let pattern = SparsityPattern::for_backend(backend);
    let mut queue: VecDeque<((f64, f64), bool)> = rungs.iter().map(|&r| (r, false)).collect();
    let mut trace = ContinuationTrace::default();
    let mut current = prev.clone();
    let mut last_good: Option<(f64, f64)> = None;
    let mut refinements = 0;
    while let Some(((eps, eta), inserted)) = queue.pop_front() {
        let reg = Regularization::new(eps, eta);
        match newton_solve(backend, prev, &current, Some(reg), opts, &pattern) {
            Ok((state, rep)) => {
                let rec = record(backend, &state, &current, eps, eta, inserted, rep.iterations, rep.residual, rep.residual_unscaled);
                if !(rec.zeta_p.is_finite() && rec.zeta_xi.is_finite()) {
                    return Err(Error::ContinuationFailed {
                        last_good,
                        failed: (eps, eta),
                        reason: "non-finite zeta norm".into(),
                    });
                }
                trace.rungs.push(rec);
                current = state;
                last_good = Some((eps, eta));
                refinements = 0;
            }
            Err(e @ (Error::Stagnation { .. } | Error::SingularLinearization(_))) => {
                trace.failed_attempts += 1;
                let Some((pe, ph)) = last_good else {
                    return Err(Error::ContinuationFailed { last_good, failed: (eps, eta), reason: e.to_string() });
                };
                if refinements >= max_refinements {
                    return Err(Error::ContinuationFailed { last_good, failed: (eps, eta), reason: e.to_string() });
                }
                refinements += 1;
                let mid = |a: f64, b: f64| if b > 0.0 { (a * b).sqrt() } else { 0.25 * a };
                let inserted_rung = if eps != pe { (mid(pe, eps), eta) } else { (eps, mid(ph, eta)) };
                queue.push_front(((eps, eta), inserted));
                queue.push_front((inserted_rung, true));
            }
            Err(e) => return Err(e),
        }
    }
    let last = (eps_final, eta_final) != (0.0, 0.0);
    let reg = last.then(|| Regularization::new(eps_final, eta_final));
    trace.final_residual = inf_norm(&backend.residual(&current, prev, reg));
    Ok((current, trace))
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    #[serde(skip)]
    pub state: State,
    pub trace: ContinuationTrace,
}

/// Advances `round(t_final / δt)` implicit steps from `initial`. `observe` is
/// called after every accepted step.
pub fn time_loop(
    backend: &dyn SchemeBackend,
    initial: &State,
    t_final: f64,
    ladder: &Ladder,
    opts: &NewtonOptions,
    mut observe: impl FnMut(&StepRecord),
) -> Result<Vec<StepRecord>> {
    let dt = backend.dt();
    let steps = (t_final / dt).round();
    if !(steps >= 0.0) || (steps * dt - t_final).abs() > 1e-9 * t_final.abs().max(dt) {
        return Err(Error::InvalidParams(format!("t_final {t_final} is not a multiple of dt {dt}")));
    }
    let (lo, hi) = if initial.is_empty() { (0.0, 1.0) } else { saturation_bounds(initial) };
    if lo < -1e-12 || hi > 1.0 + 1e-12 {
        return Err(Error::InvalidParams(format!("initial saturations span [{lo}, {hi}], outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(steps as usize);
    let mut state = initial.clone();
    for step in 1..=steps as usize {
        let (next, trace) = continuation_solve(backend, &state, ladder, opts)
            .map_err(|e| Error::TimeStep { step, source: Box::new(e) })?;
        let rec = StepRecord { step, time: step as f64 * dt, state: next.clone(), trace };
        observe(&rec);
        out.push(rec);
        state = next;
    }
    Ok(out)
}

/// Positive root of `δt ν ε r² - √2 C_γ1 r - C_n = 0`.
pub fn existence_radius(c_n: f64, c_gamma1: f64, eps: f64, dt: f64, nu: f64) -> Result<f64> {
    let a = dt * nu * eps;
    if !(a > 0.0) {
        return Err(Error::InvalidParams("existence radius needs eps * dt * nu > 0".into()));
    }
    let b = std::f64::consts::SQRT_2 * c_gamma1;
    Ok((b + (b * b + 4.0 * a * c_n).sqrt()) / (2.0 * a))
}
