//! Numerical checks of the structural properties of the schemes: maximum
//! principle, energy decomposition, the mobility inequality behind the
//! global-pressure estimate, and the behaviour of the regularization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid::{FluidModel, PhaseId};
use crate::geometry::Point;
use crate::solver::backend::{Regularization, SchemeBackend};
use crate::solver::continuation::{saturation_bounds, ContinuationTrace};
use crate::solver::newton::inf_norm;
use crate::state::State;

/// Slack on the saturation bounds.
pub const SATURATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub dof: usize,
    pub phase: &'static str,
    pub saturation: f64,
    pub position: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxPrincipleReport {
    pub sat_min: f64,
    pub sat_max: f64,
    pub pass: bool,
    /// Dof with the largest bound violation.
    pub worst: Option<Violation>,
}

pub fn check_max_principle(backend: &dyn SchemeBackend, state: &State) -> MaxPrincipleReport {
    let positions = backend.dof_positions();
    let (mut sat_min, mut sat_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst: Option<(f64, Violation)> = None;
    for phase in PhaseId::ALL {
        for (dof, s) in state.saturation(phase).into_iter().enumerate() {
            sat_min = sat_min.min(s);
            sat_max = sat_max.max(s);
            let excess = (-s).max(s - 1.0);
            if excess > SATURATION_SLACK && worst.as_ref().map_or(true, |(e, _)| excess > *e) {
                let p: Point = positions[dof];
                worst = Some((excess, Violation { dof, phase: phase.name(), saturation: s, position: (p.x, p.y) }));
            }
        }
    }
    if state.is_empty() {
        (sat_min, sat_max) = (0.0, 1.0);
    }
    MaxPrincipleReport { sat_min, sat_max, pass: worst.is_none(), worst: worst.map(|(_, v)| v) }
}

/// Ratio bounds of `|u|_1 / ‖u‖` over dof vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormConstant {
    /// Largest ratio over random samples and the extremal candidate.
    pub estimate: f64,
    /// Ratio at `A⁻¹ w` (`A` the Gram matrix, `w` the `L¹` weights).
    pub extremal: f64,
    /// `sqrt(|w|ᵀ |A⁻¹| |w|)`, valid for every vector.
    pub upper_bound: f64,
}

/// Estimates the constant `C` of `|u|_1 ≤ C ‖u‖`. When `A⁻¹` is entrywise
/// non-negative the extremal ratio is the exact supremum.
pub fn estimate_norm_constant(backend: &dyn SchemeBackend, samples: usize, seed: u64) -> Result<NormConstant> {
    let a = backend.grad_gram();
    let w = DVector::from_vec(backend.l1_weights());
    let n = w.len();
    if n == 0 {
        return Ok(NormConstant { estimate: 0.0, extremal: 0.0, upper_bound: 0.0 });
    }
    let inv = a
        .cholesky()
        .ok_or_else(|| Error::InvalidParams("gradient norm is not definite (no Dirichlet boundary?)".into()))?
        .inverse();
    let ratio = |u: &[f64]| backend.l1_norm(u) / backend.grad_norm(u);
    let u_star = &inv * &w;
    let extremal = ratio(u_star.as_slice());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimate = extremal;
    for _ in 0..samples {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        estimate = estimate.max(ratio(&u));
    }
    let abs_inv: DMatrix<f64> = inv.abs();
    let wa = w.abs();
    let upper_bound = wa.dot(&(abs_inv * &wa)).sqrt();
    Ok(NormConstant { estimate, extremal, upper_bound })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// `Σ_α Σ_A F_α,A g_α(p_α,A)`.
    pub direct_pairing: f64,
    /// `Σ_α Σ_A m_A φ_A |g_α(p_α,A)|`, the dual norm matching the Newton test.
    pub g_norm: f64,
    /// Row-scaled ∞-norm of the residual at the evaluated state.
    pub residual: f64,
    pub zeta_p: f64,
    pub zeta_xi: f64,
    pub pc_norm: f64,
    /// `η δt · capillary_form`.
    pub gamma3_form: f64,
    /// `δt · mobility_form`.
    pub gamma2_form: f64,
    /// `δt ε Σ_α pressure_form(p_α)`.
    pub gamma2_lower: f64,
    pub c_n: f64,
    pub c_gamma1: f64,
    pub sat_min: f64,
    pub sat_max: f64,
}

impl EnergyReport {
    pub fn pairing_gap(&self) -> f64 {
        (self.gamma1 + self.gamma2 + self.gamma3 - self.direct_pairing).abs()
    }

    pub fn pairing_identity_holds(&self) -> bool {
        self.pairing_gap() <= 1e-9 * (1.0 + self.direct_pairing.abs())
    }
}

/// Relative difference with an absolute floor for vanishing references.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Decomposes `⟨F^{ε,η}(p), g(p)⟩` into accumulation, convection and
/// capillary contributions. `norm_constant` enters `C_γ1` only.
pub fn energy_decomposition(
    backend: &dyn SchemeBackend,
    state: &State,
    prev: &State,
    reg: Option<Regularization>,
    norm_constant: f64,
) -> EnergyReport {
    let fluid = backend.fluid();
    let n = state.len();
    let [gamma1, gamma2, gamma3] = backend.energy_gammas(state, prev, reg);
    let residual = backend.residual(state, prev, reg);
    let scales = backend.row_scales();
    let (mut direct_pairing, mut g_norm) = (0.0, 0.0);
    for (pi, phase) in PhaseId::ALL.into_iter().enumerate() {
        for (i, &p) in state.pressure(phase).iter().enumerate() {
            let g = fluid.g(phase, p);
            direct_pairing += residual[pi * n + i] * g;
            g_norm += scales[i] * g.abs();
        }
    }
    let (zeta_p, zeta_xi) = backend.zeta_norms(state);
    let (eps, eta) = reg.map_or((0.0, 0.0), |r| (r.eps, r.eta));
    let dt = backend.dt();
    let (_, phi1) = backend.porosity_bounds();
    let factor = backend.gamma1_factor();
    let h_sum: f64 = PhaseId::ALL
        .into_iter()
        .map(|phase| {
            let h: Vec<f64> = prev.pressure(phase).iter().map(|&p| fluid.h(phase, p)).collect();
            backend.l1_norm(&h)
        })
        .sum();
    let (sat_min, sat_max) = if state.is_empty() { (0.0, 1.0) } else { saturation_bounds(state) };
    EnergyReport {
        gamma1,
        gamma2,
        gamma3,
        direct_pairing,
        g_norm,
        residual: crate::solver::newton::scaled_inf_norm(&residual, &scales),
        zeta_p,
        zeta_xi,
        pc_norm: backend.norm_of_difference(state),
        gamma3_form: eta * dt * backend.capillary_form(state),
        gamma2_form: dt * backend.mobility_form(state, reg),
        gamma2_lower: dt * eps * (backend.pressure_form(state.p_g()) + backend.pressure_form(state.p_w())),
        c_n: factor * phi1 * h_sum,
        c_gamma1: factor * phi1 * norm_constant,
        sat_min,
        sat_max,
    }
}

/// Sampling ranges shared by the pointwise checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingOptions {
    pub samples: usize,
    pub seed: u64,
    /// Pressures are drawn from `[-range, range]`.
    pub pressure_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledCheck {
    pub samples: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` over the samples (negative on violation).
    pub worst_margin: f64,
    /// Largest `lhs / rhs` over samples with a positive right-hand side.
    pub worst_ratio: f64,
}

impl SampledCheck {
    fn new(samples: usize) -> Self {
        Self { samples, violations: 0, worst_margin: f64::INFINITY, worst_ratio: 0.0 }
    }

    fn record(&mut self, lhs: f64, rhs: f64, slack: f64) {
        let margin = rhs - lhs;
        if margin < -slack || !margin.is_finite() {
            self.violations += 1;
        }
        self.worst_margin = self.worst_margin.min(margin);
        if rhs > 0.0 {
            self.worst_ratio = self.worst_ratio.max(lhs / rhs);
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Two-point mobility inequality
/// `m0 ((δp)² + (δξ)²) ≤ M_g^up (δp_g)² + M_w^up (δp_w)²` for random pairs
/// of pressure couples.
pub fn check_lem1(fluid: &FluidModel, opts: &SamplingOptions) -> SampledCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let r = opts.pressure_range;
    let m0 = fluid.total_mobility_floor();
    let mut out = SampledCheck::new(opts.samples);
    for _ in 0..opts.samples {
        let mut draw = || rng.gen_range(-r..=r);
        let (pga, pwa, pgb, pwb) = (draw(), draw(), draw(), draw());
        let (lhs, rhs) = lem1_sides(fluid, m0, (pga, pwa), (pgb, pwb));
        out.record(lhs, rhs, 1e-12 * rhs + 1e-14);
    }
    out
}

/// Both sides of the two-point mobility inequality for points `A` and `B`.
pub fn lem1_sides(fluid: &FluidModel, m0: f64, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (sa, _) = fluid.coupling(a.0, a.1);
    let (sb, _) = fluid.coupling(b.0, b.1);
    let dp = fluid.global_pressure(b.0, sb) - fluid.global_pressure(a.0, sa);
    let dxi = fluid.xi(sb) - fluid.xi(sa);
    let (dpg, dpw) = (b.0 - a.0, b.1 - a.1);
    // upstream saturation of each phase, gas saturation of the upstream point
    let up = |dpa: f64| if dpa >= 0.0 { sb } else { sa };
    let mg = fluid.mobility(PhaseId::Gas, up(dpg));
    let mw = fluid.mobility(PhaseId::Wetting, 1.0 - up(dpw));
    (m0 * (dp * dp + dxi * dxi), mg * dpg * dpg + mw * dpw * dpw)
}

/// `|p̂_α(s)| ≤ |p_c(s)|` for `s` sampled in `[-0.5, 1.5]`.
pub fn check_corrective_bounds(fluid: &FluidModel, samples: usize, seed: u64) -> SampledCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SampledCheck::new(2 * samples);
    for _ in 0..samples {
        let s = rng.gen_range(-0.5..=1.5);
        let (pg, pw) = fluid.corrective_pressures(s);
        let pc = fluid.capillary_pressure(s).abs();
        out.record(pg.abs(), pc, 1e-12);
        out.record(pw.abs(), pc, 1e-12);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub samples: usize,
    /// States where `F^{0,0}` differs from the unregularized assembly in any bit.
    pub bit_mismatches: usize,
    /// Largest `‖F^{ε,η} - F^{0,0}‖_∞ / (ε + η)` observed.
    pub lipschitz_estimate: f64,
}

impl ConsistencyReport {
    pub fn pass(&self) -> bool {
        self.bit_mismatches == 0 && self.lipschitz_estimate.is_finite()
    }
}

/// Compares the regularized residual against the base scheme on random
/// states with saturations in `[0.05, 0.95]` and `(ε, η)` in `(0, 0.1]`.
pub fn check_regularization_consistency(backend: &dyn SchemeBackend, samples: usize, seed: u64) -> ConsistencyReport {
    let fluid = backend.fluid();
    let n = backend.dof_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConsistencyReport { samples, bit_mismatches: 0, lipschitz_estimate: 0.0 };
    for _ in 0..samples {
        let random_state = |rng: &mut ChaCha8Rng| {
            let p_w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p_g = p_w
                .iter()
                .map(|w| w + fluid.capillary_pressure(rng.gen_range(0.05..0.95)))
                .collect();
            State::new(fluid, p_g, p_w)
        };
        let state = random_state(&mut rng);
        let prev = random_state(&mut rng);
        let base = backend.residual(&state, &prev, None);
        let zero = backend.residual(&state, &prev, Some(Regularization::new(0.0, 0.0)));
        if base.iter().zip(&zero).any(|(a, b)| a.to_bits() != b.to_bits()) {
            report.bit_mismatches += 1;
        }
        let reg = Regularization::new(rng.gen_range(1e-6..0.1), rng.gen_range(1e-6..0.1));
        let f = backend.residual(&state, &prev, Some(reg));
        let diff: Vec<f64> = f.iter().zip(&base).map(|(a, b)| a - b).collect();
        report.lipschitz_estimate = report.lipschitz_estimate.max(inf_norm(&diff) / (reg.eps + reg.eta));
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    /// Per rung: `Σ‖ζ‖² + ε Σ_α ‖p_α‖² + η ‖p_g - p_w‖²`.
    pub energies: Vec<f64>,
    /// Largest energy over the rungs with `ε > 0`.
    pub eps_ladder_max: f64,
    /// Largest `Σ‖ζ‖²` over the rungs with `ε = 0`.
    pub eta_ladder_max: f64,
    pub pass: bool,
}

pub fn continuation_monitors(trace: &ContinuationTrace) -> Result<MonitorReport> {
    if trace.rungs.is_empty() {
        return Err(Error::InvalidParams("continuation trace has no rungs".into()));
    }
    let mut energies = Vec::with_capacity(trace.rungs.len());
    let (mut eps_ladder_max, mut eta_ladder_max) = (0.0f64, 0.0f64);
    let mut finite = true;
    for r in &trace.rungs {
        let zeta = r.zeta_p.powi(2) + r.zeta_xi.powi(2);
        let e = zeta + r.eps * (r.p_g_norm.powi(2) + r.p_w_norm.powi(2)) + r.eta * r.pc_norm.powi(2);
        finite &= e.is_finite() && zeta.is_finite();
        if r.eps > 0.0 {
            eps_ladder_max = eps_ladder_max.max(e);
        } else {
            eta_ladder_max = eta_ladder_max.max(zeta);
        }
        energies.push(e);
    }
    Ok(MonitorReport { energies, eps_ladder_max, eta_ladder_max, pass: finite })
}

/// One entry of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub pass: bool,
    /// Checks that only report diagnostics do not affect the outcome.
    pub gated: bool,
    pub margin: f64,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn push(&mut self, name: impl Into<String>, pass: bool, gated: bool, margin: f64, detail: impl Serialize) {
        let detail = serde_json::to_value(detail).unwrap_or(serde_json::Value::Null);
        self.checks.push(CheckRecord { name: name.into(), pass, gated, margin, detail });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass || !c.gated)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.gated && !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match (c.pass, c.gated) {
                (true, _) => "pass",
                (false, true) => "FAIL",
                (false, false) => "info",
            };
            out.push_str(&format!("{tag:4}  {:<44} margin {:+.3e}\n", c.name, c.margin));
        }
        let failed = self.failures().len();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

/// Settings of [`verify_case`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub sampling: SamplingOptions,
    pub consistency_samples: usize,
    pub norm_samples: usize,
    /// `η` values of the `F^{0,η}` solves checked for the maximum principle
    /// and the energy identities.
    pub eta_values: Vec<f64>,
    /// `ε` values of the `F^{ε,η}` solves checked for the convection bound.
    pub eps_values: Vec<f64>,
}

impl SuiteOptions {
    pub fn new(sampling: SamplingOptions, consistency_samples: usize, norm_samples: usize) -> Self {
        Self { sampling, consistency_samples, norm_samples, eta_values: vec![1e-2, 1e-4, 0.0], eps_values: vec![1e-2, 1e-4] }
    }
}

/// A converged state of one regularized problem.
/// Solves one time step from `initial` by continuation, then every
/// `F^{0,η}` and `F^{ε,η_0}` of the options warm-started from the result,
/// and runs all checks on the converged states.
pub fn verify_case(
    backend: &dyn SchemeBackend,
    initial: &State,
    ladder: &crate::solver::Ladder,
    newton: &crate::solver::NewtonOptions,
    opts: &SuiteOptions,
) -> VerificationReport {
    use crate::solver::{continuation_solve, existence_radius, newton_solve, SparsityPattern};

    let mut report = VerificationReport::default();
    let fluid = backend.fluid();
    let lem1 = check_lem1(fluid, &opts.sampling);
    report.push("lem1_sampling", lem1.pass(), true, lem1.worst_margin, &lem1);
    let corr = check_corrective_bounds(fluid, opts.sampling.samples, opts.sampling.seed);
    report.push("corrective_pressure_bounds", corr.pass(), true, corr.worst_margin, &corr);
    let cons = check_regularization_consistency(backend, opts.consistency_samples, opts.sampling.seed);
    report.push("regularization_consistency", cons.pass(), true, cons.lipschitz_estimate, &cons);

    let (state, trace) = match continuation_solve(backend, initial, ladder, newton) {
        Ok(v) => v,
        Err(e) => {
            report.push("continuation", false, true, f64::NAN, e.to_string());
            return report;
        }
    };
    let converged = trace.final_residual.is_finite();
    report.push("continuation", converged, true, trace.final_residual, &trace);
    match continuation_monitors(&trace) {
        Ok(m) => report.push("continuation_monitors", m.pass, true, m.eta_ladder_max, &m),
        Err(e) => report.push("continuation_monitors", false, true, f64::NAN, e.to_string()),
    }
    let mut worst_excess = f64::NEG_INFINITY;
    for r in trace.rungs.iter().filter(|r| r.eps == 0.0) {
        worst_excess = worst_excess.max((-r.sat_min).max(r.sat_max - 1.0));
    }
    report.push("max_principle_trace", worst_excess <= SATURATION_SLACK, true, -worst_excess, ());

    let norm_constant = match estimate_norm_constant(backend, opts.norm_samples, opts.sampling.seed) {
        Ok(c) => {
            report.push("norm_constant", true, false, c.estimate, c);
            c.estimate
        }
        Err(e) => {
            report.push("norm_constant", false, false, f64::NAN, e.to_string());
            f64::NAN
        }
    };

    let pattern = SparsityPattern::for_backend(backend);
    let eta0 = ladder.eta[0];
    let mut targets: Vec<Regularization> = opts.eta_values.iter().map(|&h| Regularization::new(0.0, h)).collect();
    targets.extend(opts.eps_values.iter().map(|&e| Regularization::new(e, eta0)));
    for reg in targets {
        let tag = format!("eps={:e},eta={:e}", reg.eps, reg.eta);
        let sol = match newton_solve(backend, initial, &state, Some(reg), newton, &pattern) {
            Ok((s, _)) => s,
            Err(e) => {
                report.push(format!("solve[{tag}]"), false, true, f64::NAN, e.to_string());
                continue;
            }
        };
        if reg.eps == 0.0 {
            let mp = check_max_principle(backend, &sol);
            let margin = mp.sat_min.min(1.0 - mp.sat_max);
            report.push(format!("max_principle[{tag}]"), mp.pass, true, margin, &mp);
        }
        let e = energy_decomposition(backend, &sol, initial, Some(reg), norm_constant);
        report.push(
            format!("energy_pairing[{tag}]"),
            e.pairing_identity_holds() && e.direct_pairing.abs() <= 10.0 * newton.tol * e.g_norm,
            true,
            e.pairing_gap(),
            &e,
        );
        let g3 = rel_diff(e.gamma3, e.gamma3_form);
        report.push(format!("gamma3_identity[{tag}]"), g3 <= 1e-10 || e.gamma3 == e.gamma3_form, true, g3, ());
        let applies = backend.gamma2_identity_applies();
        let g2 = rel_diff(e.gamma2, e.gamma2_form);
        report.push(format!("gamma2_identity[{tag}]"), g2 <= 1e-10 || e.gamma2 == e.gamma2_form, applies, g2, ());
        if reg.eps > 0.0 {
            let slack = 1e-12 * e.gamma2_lower.abs();
            report.push(format!("gamma2_lower_bound[{tag}]"), e.gamma2 >= e.gamma2_lower - slack, applies, e.gamma2 - e.gamma2_lower, ());
            let p_form = e.gamma2_lower / (backend.dt() * reg.eps);
            let nu = if p_form > 0.0 { e.gamma2 / (backend.dt() * reg.eps * p_form) } else { f64::NAN };
            let radius = existence_radius(e.c_n, e.c_gamma1, reg.eps, backend.dt(), nu).ok();
            report.push(
                format!("existence_radius[{tag}]"),
                true,
                false,
                radius.unwrap_or(f64::NAN),
                serde_json::json!({ "nu_empirical": nu, "c_n": e.c_n, "c_gamma1": e.c_gamma1, "radius": radius }),
            );
        }
    }
    report
}
