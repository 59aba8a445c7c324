//! Constitutive laws of the compressible immiscible two-phase model and the
//! nonlinear scalar transforms built on top of them.
//!
//! Everything here is a pure function of an immutable [`FluidModel`], so a
//! model can be shared freely between threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// The two fluid phases. The parity (`0` for gas, `1` for wetting) sets the
/// sign of the capillary regularization flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseId {
    Gas,
    Wetting,
}

impl PhaseId {
    pub const ALL: [PhaseId; 2] = [PhaseId::Gas, PhaseId::Wetting];

    pub fn parity(self) -> u8 {
        match self {
            PhaseId::Gas => 0,
            PhaseId::Wetting => 1,
        }
    }

    /// `(-1)^parity`.
    pub fn sign(self) -> f64 {
        match self {
            PhaseId::Gas => 1.0,
            PhaseId::Wetting => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseId::Gas => "gas",
            PhaseId::Wetting => "wetting",
        }
    }
}

/// Capillary pressure law `p_c(s_g)`, a strictly increasing bijection of the
/// real line with bounded derivative and `p_c(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CapillaryLaw {
    /// `p_c(s) = slope * s`.
    Linear { slope: f64 },
    /// `p_c(s) = slope * s + amplitude * tanh(sharpness * s)`.
    Smooth { slope: f64, amplitude: f64, sharpness: f64 },
}

impl CapillaryLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            CapillaryLaw::Linear { slope } if slope > 0.0 && slope.is_finite() => Ok(()),
            CapillaryLaw::Smooth { slope, amplitude, sharpness }
                if slope > 0.0 && amplitude >= 0.0 && sharpness >= 0.0 && (amplitude * sharpness).is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParams(format!("capillary law {self:?} is not strictly increasing"))),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            CapillaryLaw::Linear { slope } => slope * s,
            CapillaryLaw::Smooth { slope, amplitude, sharpness } => slope * s + amplitude * (sharpness * s).tanh(),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            CapillaryLaw::Linear { slope } => slope,
            CapillaryLaw::Smooth { slope, amplitude, sharpness } => {
                let t = (sharpness * s).tanh();
                slope + amplitude * sharpness * (1.0 - t * t)
            }
        }
    }

    /// Upper bound of the derivative over the real line.
    pub fn derivative_bound(&self) -> f64 {
        match *self {
            CapillaryLaw::Linear { slope } => slope,
            CapillaryLaw::Smooth { slope, amplitude, sharpness } => slope + amplitude * sharpness,
        }
    }

    pub fn inverse(&self, pc: f64) -> f64 {
        match *self {
            CapillaryLaw::Linear { slope } => pc / slope,
            CapillaryLaw::Smooth { slope, amplitude, .. } => {
                // |amplitude * tanh| <= amplitude brackets the root.
                let mut lo = (pc - amplitude) / slope;
                let mut hi = (pc + amplitude) / slope;
                let mut s = pc / self.derivative_bound();
                for _ in 0..200 {
                    let f = self.eval(s) - pc;
                    if f > 0.0 {
                        hi = s;
                    } else {
                        lo = s;
                    }
                    let mut next = s - f / self.derivative(s);
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - s).abs() <= 1e-16 * s.abs().max(1e-300) || hi - lo <= f64::EPSILON * s.abs() {
                        return next;
                    }
                    s = next;
                }
                s
            }
        }
    }
}

/// Relative-permeability-over-viscosity law before the `1/mu` factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MobilityLaw {
    /// `s^n` on `[0, 1]`, extended by `0` below and `1` above.
    Corey { exponent: f64 },
    /// Saturation independent; used for non-degenerate reference setups.
    Constant,
}

/// Raw parameters of the two-phase model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub capillary: CapillaryLaw,
    pub mu_g: f64,
    pub mu_w: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub rho_steepness_g: f64,
    pub rho_steepness_w: f64,
    pub mobility: MobilityLaw,
    pub quadrature_points: usize,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            capillary: CapillaryLaw::Linear { slope: 1.0 },
            mu_g: 0.5,
            mu_w: 1.0,
            rho0: 0.5,
            rho1: 1.5,
            rho_steepness_g: 0.5,
            rho_steepness_w: 0.05,
            mobility: MobilityLaw::Corey { exponent: 2.0 },
            quadrature_points: 32,
        }
    }
}

/// Validated two-phase constitutive model.
#[derive(Debug, Clone)]
pub struct FluidModel {
    params: FluidParams,
    gl: GaussLegendre,
    m0: f64,
}

/// Projection of a saturation onto `[0, 1]`, used in accumulation terms.
#[inline]
pub fn clamp_z(s: f64) -> f64 {
    if s < 0.0 {
        0.0
    } else if s > 1.0 {
        1.0
    } else {
        s
    }
}

const FLOOR_SAMPLES: usize = 2001;

impl FluidModel {
    pub fn new(params: FluidParams) -> Result<Self> {
        params.capillary.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(params.mu_g) || !positive(params.mu_w) {
            return Err(Error::InvalidParams("viscosities must be positive".into()));
        }
        if !positive(params.rho0) || !(params.rho1 >= params.rho0) || !params.rho1.is_finite() {
            return Err(Error::InvalidParams("densities must satisfy 0 < rho0 <= rho1".into()));
        }
        if !(params.rho_steepness_g >= 0.0) || !(params.rho_steepness_w >= 0.0) {
            return Err(Error::InvalidParams("density steepness must be non-negative".into()));
        }
        if let MobilityLaw::Corey { exponent } = params.mobility {
            if !positive(exponent) {
                return Err(Error::InvalidParams("Corey exponent must be positive".into()));
            }
        }
        if params.quadrature_points < 2 {
            return Err(Error::InvalidParams("quadrature_points must be at least 2".into()));
        }
        let mut model = Self { params, gl: GaussLegendre::new(params.quadrature_points), m0: 0.0 };
        model.m0 = model.compute_mobility_floor()?;
        Ok(model)
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn quadrature(&self) -> &GaussLegendre {
        &self.gl
    }

    pub fn capillary(&self) -> &CapillaryLaw {
        &self.params.capillary
    }

    pub fn capillary_pressure(&self, s_g: f64) -> f64 {
        self.params.capillary.eval(s_g)
    }

    /// Saturations `(s_g, s_w)` from the phase pressures.
    pub fn coupling(&self, p_g: f64, p_w: f64) -> (f64, f64) {
        let s_g = self.params.capillary.inverse(p_g - p_w);
        (s_g, 1.0 - s_g)
    }

    pub fn viscosity(&self, phase: PhaseId) -> f64 {
        match phase {
            PhaseId::Gas => self.params.mu_g,
            PhaseId::Wetting => self.params.mu_w,
        }
    }

    /// Unregularized mobility with constant extension outside `[0, 1]`.
    pub fn mobility(&self, phase: PhaseId, s: f64) -> f64 {
        let kr = match self.params.mobility {
            MobilityLaw::Constant => 1.0,
            MobilityLaw::Corey { exponent } => {
                let c = clamp_z(s);
                if exponent == 2.0 {
                    c * c
                } else {
                    c.powf(exponent)
                }
            }
        };
        kr / self.viscosity(phase)
    }

    /// `eps + M(s)`.
    #[inline]
    pub fn mobility_eps(&self, phase: PhaseId, s: f64, eps: f64) -> f64 {
        eps + self.mobility(phase, s)
    }

    /// `M(s_g) = M_w(1 - s_g) + M_g(s_g)`.
    pub fn total_mobility(&self, s_g: f64) -> f64 {
        self.mobility(PhaseId::Wetting, 1.0 - s_g) + self.mobility(PhaseId::Gas, s_g)
    }

    /// Minimum of the total mobility over `[0, 1]`.
    pub fn total_mobility_floor(&self) -> f64 {
        self.m0
    }

    fn compute_mobility_floor(&self) -> Result<f64> {
        let n = FLOOR_SAMPLES - 1;
        let (mut best_i, mut best) = (0, f64::INFINITY);
        for i in 0..=n {
            let v = self.total_mobility(i as f64 / n as f64);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        // golden-section refinement on the bracketing sample interval
        let mut a = best_i.saturating_sub(1) as f64 / n as f64;
        let mut b = (best_i + 1).min(n) as f64 / n as f64;
        let invphi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - invphi * (b - a);
        let mut d = a + invphi * (b - a);
        let (mut fc, mut fd) = (self.total_mobility(c), self.total_mobility(d));
        for _ in 0..100 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - invphi * (b - a);
                fc = self.total_mobility(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + invphi * (b - a);
                fd = self.total_mobility(d);
            }
            if b - a < 1e-14 {
                break;
            }
        }
        let m0 = best.min(fc).min(fd);
        if !(m0 > 0.0) {
            return Err(Error::DegenerateModel(format!("total mobility floor {m0} is not positive")));
        }
        Ok(m0)
    }

    fn steepness(&self, phase: PhaseId) -> f64 {
        match phase {
            PhaseId::Gas => self.params.rho_steepness_g,
            PhaseId::Wetting => self.params.rho_steepness_w,
        }
    }

    /// `rho(p) = rho0 + (rho1 - rho0) (1 + tanh(k p)) / 2`.
    pub fn density(&self, phase: PhaseId, p: f64) -> f64 {
        let FluidParams { rho0, rho1, .. } = self.params;
        rho0 + (rho1 - rho0) * 0.5 * (1.0 + (self.steepness(phase) * p).tanh())
    }

    pub fn density_derivative(&self, phase: PhaseId, p: f64) -> f64 {
        let k = self.steepness(phase);
        let t = (k * p).tanh();
        (self.params.rho1 - self.params.rho0) * 0.5 * k * (1.0 - t * t)
    }

    fn is_incompressible(&self) -> bool {
        self.params.rho0 == self.params.rho1
    }

    /// Interface density: harmonic mean of `rho` over `[p_a, p_b]`.
    pub fn interface_density(&self, phase: PhaseId, p_a: f64, p_b: f64) -> f64 {
        if self.is_incompressible() {
            return self.params.rho0;
        }
        let scale = 1f64.max(p_a.abs()).max(p_b.abs());
        if (p_b - p_a).abs() < 1e-12 * scale {
            return self.density(phase, p_a);
        }
        let (lo, hi) = if p_a <= p_b { (p_a, p_b) } else { (p_b, p_a) };
        let integral = self.gl.integrate(lo, hi, |z| 1.0 / self.density(phase, z));
        let rho = (hi - lo) / integral;
        rho.clamp(self.params.rho0, self.params.rho1)
    }

    /// `g(p) = ∫_0^p 1/rho`.
    pub fn g(&self, phase: PhaseId, p: f64) -> f64 {
        if self.is_incompressible() {
            return p / self.params.rho0;
        }
        self.gl.integrate(0.0, p, |z| 1.0 / self.density(phase, z))
    }

    /// `(g(p), H(p))` with `H(p) = rho(p) g(p) - p`.
    pub fn g_and_h(&self, phase: PhaseId, p: f64) -> (f64, f64) {
        let g = self.g(phase, p);
        let h = if self.is_incompressible() { 0.0 } else { self.density(phase, p) * g - p };
        (g, h)
    }

    pub fn h(&self, phase: PhaseId, p: f64) -> f64 {
        self.g_and_h(phase, p).1
    }

    /// Corrective pressures `(p̂_g, p̂_w)` of the global-pressure split.
    pub fn corrective_pressures(&self, s_g: f64) -> (f64, f64) {
        let cap = &self.params.capillary;
        let hat_g = self.gl.integrate_with_breaks(0.0, s_g, &[0.0, 1.0], |u| {
            self.mobility(PhaseId::Wetting, 1.0 - u) / self.total_mobility(u) * cap.derivative(u)
        });
        let hat_w = self.gl.integrate_with_breaks(0.0, s_g, &[0.0, 1.0], |u| {
            self.mobility(PhaseId::Gas, u) / self.total_mobility(u) * cap.derivative(u)
        });
        (hat_g, hat_w)
    }

    /// Global pressure `p = p_g - p̂_g(s_g)`.
    pub fn global_pressure(&self, p_g: f64, s_g: f64) -> f64 {
        p_g - self.corrective_pressures(s_g).0
    }

    /// Capillary energy function `ξ(s) = ∫_0^s sqrt(M_w M_g)/M p_c'`.
    pub fn xi(&self, s_g: f64) -> f64 {
        let cap = &self.params.capillary;
        self.gl.integrate_with_breaks(0.0, s_g, &[0.0, 1.0], |u| {
            (self.mobility(PhaseId::Wetting, 1.0 - u) * self.mobility(PhaseId::Gas, u)).sqrt() / self.total_mobility(u)
                * cap.derivative(u)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corey() -> FluidModel {
        FluidModel::new(FluidParams::default()).unwrap()
    }

    fn constant_mobility(slope: f64) -> FluidModel {
        FluidModel::new(FluidParams {
            capillary: CapillaryLaw::Linear { slope },
            mu_g: 1.0,
            mu_w: 1.0,
            mobility: MobilityLaw::Constant,
            ..FluidParams::default()
        })
        .unwrap()
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn coupling_examples() {
        let f = constant_mobility(1.0);
        assert_eq!(f.coupling(0.0, 0.0), (0.0, 1.0));
        let (sg, sw) = f.coupling(1.0, 0.75);
        assert!((sg - 0.25).abs() < 1e-15 && (sw - 0.75).abs() < 1e-15);

        let f2 = FluidModel::new(FluidParams {
            capillary: CapillaryLaw::Linear { slope: 2.0 },
            ..FluidParams::default()
        })
        .unwrap();
        let oracle = bisect(|s| 2.0 * s - 0.5, -10.0, 10.0);
        assert!((f2.coupling(0.5, 0.0).0 - oracle).abs() < 1e-14);
    }

    #[test]
    fn smooth_capillary_inverse_matches_bisection() {
        let law = CapillaryLaw::Smooth { slope: 1.0, amplitude: 0.5, sharpness: 3.0 };
        for &pc in &[-4.0, -0.3, 0.0, 1e-9, 0.7, 2.5, 10.0] {
            let oracle = bisect(|s| law.eval(s) - pc, -20.0, 20.0);
            assert!((law.inverse(pc) - oracle).abs() < 1e-13, "pc={pc}");
        }
    }

    #[test]
    fn mobility_extension_and_eps() {
        let f = corey();
        assert_eq!(f.mobility_eps(PhaseId::Gas, -0.3, 0.0), 0.0);
        assert_eq!(f.mobility_eps(PhaseId::Gas, 1.5, 0.0), 1.0 / 0.5);
        let expected = 0.01 + 0.25 / 1.0;
        assert!((f.mobility_eps(PhaseId::Wetting, 0.5, 0.01) - expected).abs() < 1e-15);
    }

    #[test]
    fn interface_density_cases() {
        let constant = FluidModel::new(FluidParams { rho0: 800.0, rho1: 800.0, ..FluidParams::default() }).unwrap();
        assert_eq!(constant.interface_density(PhaseId::Gas, -3.0, 7.0), 800.0);
        let f = corey();
        assert_eq!(f.interface_density(PhaseId::Gas, 3.0, 3.0), f.density(PhaseId::Gas, 3.0));
        let r = f.interface_density(PhaseId::Gas, 0.0, 2.0);
        assert_eq!(r, f.interface_density(PhaseId::Gas, 2.0, 0.0));
        assert!(r >= 0.5 && r <= 1.5);
    }

    #[test]
    fn g_and_h_simple_cases() {
        let f = FluidModel::new(FluidParams { rho0: 1000.0, rho1: 1000.0, ..FluidParams::default() }).unwrap();
        let (g, h) = f.g_and_h(PhaseId::Wetting, 5.0);
        assert!((g - 0.005).abs() < 1e-18);
        assert_eq!(h, 0.0);
        assert_eq!(corey().g_and_h(PhaseId::Gas, 0.0), (0.0, 0.0));
    }

    #[test]
    fn constant_mobility_split_is_half_capillary_pressure() {
        let f = constant_mobility(1.0);
        let (a, b) = f.corrective_pressures(0.5);
        assert!((a - 0.25).abs() < 1e-14 && (b - 0.25).abs() < 1e-14);
        assert!((f.xi(0.5) - 0.25).abs() < 1e-14);
        assert_eq!(f.corrective_pressures(0.0), (0.0, 0.0));
        assert_eq!(f.xi(0.0), 0.0);
    }

    #[test]
    fn extension_region_of_corrective_pressures() {
        let f = corey();
        let (hat_g, hat_w) = f.corrective_pressures(-0.2);
        assert_eq!(hat_w, 0.0);
        assert!((hat_g - f.capillary_pressure(-0.2)).abs() < 1e-14);
    }

    #[test]
    fn mobility_floor_closed_forms() {
        assert_eq!(constant_mobility(1.0).total_mobility_floor(), 2.0);
        let sym = FluidModel::new(FluidParams { mu_g: 1.0, mu_w: 1.0, ..FluidParams::default() }).unwrap();
        assert!((sym.total_mobility_floor() - 0.5).abs() < 1e-12);
        // (1-s)^2/2 + s^2 is minimal at s = 1/3 with value 1/3
        let asym = FluidModel::new(FluidParams { mu_g: 1.0, mu_w: 2.0, ..FluidParams::default() }).unwrap();
        assert!((asym.total_mobility_floor() - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(FluidModel::new(FluidParams { rho0: 0.0, ..FluidParams::default() }).is_err());
        assert!(FluidModel::new(FluidParams { rho0: 2.0, rho1: 1.0, ..FluidParams::default() }).is_err());
        assert!(FluidModel::new(FluidParams { capillary: CapillaryLaw::Linear { slope: 0.0 }, ..FluidParams::default() }).is_err());
        assert!(FluidModel::new(FluidParams { mu_g: -1.0, ..FluidParams::default() }).is_err());
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_z(-0.5), 0.0);
        assert_eq!(clamp_z(0.3), 0.3);
        assert_eq!(clamp_z(1.2), 1.0);
    }
}
