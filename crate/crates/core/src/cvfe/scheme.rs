//! Regularized positivity preserving CVFE residual.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cvfe::mesh::{CvfeMesh, PAIRS};
use crate::error::{Error, Result};
use crate::fluid::{clamp_z, FluidModel, PhaseId};
use crate::geometry::Point;
use crate::solver::backend::{Regularization, ResidualParts, SchemeBackend};
use crate::state::State;

/// Interface saturation of the pair `(K, L)` of a triangle.
///
/// Non-negative coefficients upwind on the sign of `δ_KL p`; negative ones
/// take the smallest saturation over the triangle.
pub fn upwind_saturation_cvfe(dp: f64, s_k: f64, s_l: f64, triangle: [f64; 3], coeff: f64) -> f64 {
    if coeff >= 0.0 {
        if dp >= 0.0 {
            s_l
        } else {
            s_k
        }
    } else {
        triangle[0].min(triangle[1]).min(triangle[2])
    }
}

/// Number of interface evaluations per residual assembly that take each
/// branch of [`upwind_saturation_cvfe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BranchCounts {
    pub nonnegative: usize,
    pub negative: usize,
}

#[derive(Debug, Clone)]
pub struct CvfeScheme {
    mesh: CvfeMesh,
    fluid: FluidModel,
    dt: f64,
}

struct VertexFields {
    p: [Vec<f64>; 2],
    s: [Vec<f64>; 2],
}

impl CvfeScheme {
    pub fn new(mesh: CvfeMesh, fluid: FluidModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParams(format!("time step {dt} must be positive")));
        }
        Ok(Self { mesh, fluid, dt })
    }

    pub fn mesh(&self) -> &CvfeMesh {
        &self.mesh
    }

    pub fn upwind_branch_counts(&self) -> BranchCounts {
        let mut c = BranchCounts::default();
        for t in self.mesh.triangles() {
            for &k in &t.coeffs {
                if k >= 0.0 {
                    c.nonnegative += 2;
                } else {
                    c.negative += 2;
                }
            }
        }
        c
    }

    fn fields(&self, state: &State) -> VertexFields {
        assert_eq!(state.len(), self.mesh.dof_count(), "state does not match the mesh");
        let p_g = self.mesh.expand(state.p_g());
        let p_w = self.mesh.expand(state.p_w());
        let s_g: Vec<f64> = p_g.iter().zip(&p_w).map(|(&g, &w)| self.fluid.coupling(g, w).0).collect();
        let s_w = s_g.iter().map(|s| 1.0 - s).collect();
        VertexFields { p: [p_g, p_w], s: [s_g, s_w] }
    }

    fn accumulation(&self, v: usize, phase: PhaseId, f: &VertexFields, prev: &VertexFields) -> f64 {
        let i = phase.parity() as usize;
        let (p, s, pn, sn) = (f.p[i][v], f.s[i][v], prev.p[i][v], prev.s[i][v]);
        self.mesh.measure(v)
            * self.mesh.porosity(v)
            * (self.fluid.density(phase, p) * clamp_z(s) - self.fluid.density(phase, pn) * sn)
    }

    /// Visits every oriented pair `(K, L)` of every triangle with its
    /// coefficient and the interface mobility `M^ε_α(s_KL)`.
    fn for_each_interface(&self, phase: PhaseId, f: &VertexFields, eps: f64, mut visit: impl FnMut(usize, usize, f64, f64)) {
        let i = phase.parity() as usize;
        let (p, s) = (&f.p[i], &f.s[i]);
        for t in self.mesh.triangles() {
            let sats = t.v.map(|v| s[v]);
            for (&(a, b), &c) in PAIRS.iter().zip(&t.coeffs) {
                let (k, l) = (t.v[a], t.v[b]);
                let s_kl = upwind_saturation_cvfe(p[l] - p[k], s[k], s[l], sats, c);
                visit(k, l, c, self.fluid.mobility_eps(phase, s_kl, eps));
            }
        }
    }
}

impl SchemeBackend for CvfeScheme {
    fn name(&self) -> &'static str {
        "cvfe"
    }

    fn fluid(&self) -> &FluidModel {
        &self.fluid
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn dof_count(&self) -> usize {
        self.mesh.dof_count()
    }

    fn dof_positions(&self) -> Vec<Point> {
        (0..self.mesh.dof_count()).map(|d| self.mesh.vertices()[self.mesh.vertex_of_dof(d)]).collect()
    }

    fn residual_parts(&self, state: &State, prev: &State, reg: Option<Regularization>) -> ResidualParts {
        let n = self.mesh.dof_count();
        let nv = self.mesh.vertices().len();
        let f = self.fields(state);
        let fp = self.fields(prev);
        let eps = reg.map_or(0.0, |r| r.eps);
        let pc: Vec<f64> = f.p[0].iter().zip(&f.p[1]).map(|(g, w)| g - w).collect();
        let mut parts = ResidualParts::zeros(2 * n);
        let mut conv = vec![0.0; nv];
        let mut cap = vec![0.0; nv];
        for (pi, phase) in PhaseId::ALL.into_iter().enumerate() {
            conv.iter_mut().for_each(|v| *v = 0.0);
            cap.iter_mut().for_each(|v| *v = 0.0);
            let p = &f.p[pi];
            self.for_each_interface(phase, &f, eps, |k, l, c, mob| {
                let rho = self.fluid.interface_density(phase, p[k], p[l]);
                let a = self.dt * rho * mob * c * (p[l] - p[k]);
                conv[k] -= a;
                conv[l] += a;
                if let Some(r) = reg {
                    if c >= 0.0 {
                        let b = self.dt * r.eta * phase.sign() * rho * c.abs() * (pc[l] - pc[k]);
                        cap[k] -= b;
                        cap[l] += b;
                    }
                }
            });
            for d in 0..n {
                let v = self.mesh.vertex_of_dof(d);
                let row = pi * n + d;
                parts.accumulation[row] = self.accumulation(v, phase, &f, &fp);
                parts.convection[row] = conv[v];
                parts.capillary[row] = cap[v];
            }
        }
        parts
    }

    fn row_scales(&self) -> Vec<f64> {
        (0..self.mesh.dof_count())
            .map(|d| {
                let v = self.mesh.vertex_of_dof(d);
                self.mesh.measure(v) * self.mesh.porosity(v)
            })
            .collect()
    }

    fn dof_neighbors(&self) -> Vec<Vec<usize>> {
        (0..self.mesh.dof_count())
            .map(|d| {
                let v = self.mesh.vertex_of_dof(d);
                let mut out: Vec<usize> = self
                    .mesh
                    .vertex_triangles(v)
                    .iter()
                    .flat_map(|&t| self.mesh.triangles()[t].v)
                    .filter_map(|w| self.mesh.dof_of_vertex(w))
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect()
    }

    fn grad_norm(&self, values: &[f64]) -> f64 {
        self.mesh.p1_norm(&self.mesh.expand(values))
    }

    fn grad_gram(&self) -> DMatrix<f64> {
        self.mesh.p1_gram()
    }

    fn l1_weights(&self) -> Vec<f64> {
        (0..self.mesh.dof_count()).map(|d| self.mesh.measure(self.mesh.vertex_of_dof(d))).collect()
    }

    fn gamma1_factor(&self) -> f64 {
        1.0
    }

    fn porosity_bounds(&self) -> (f64, f64) {
        (0..self.mesh.vertices().len())
            .map(|v| self.mesh.porosity(v))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)))
    }

    fn energy_gammas(&self, state: &State, prev: &State, reg: Option<Regularization>) -> [f64; 3] {
        let f = self.fields(state);
        let fp = self.fields(prev);
        let eps = reg.map_or(0.0, |r| r.eps);
        let pc: Vec<f64> = f.p[0].iter().zip(&f.p[1]).map(|(g, w)| g - w).collect();
        let (mut g1, mut g2, mut g3) = (0.0, 0.0, 0.0);
        for (pi, phase) in PhaseId::ALL.into_iter().enumerate() {
            let p = &f.p[pi];
            let g: Vec<f64> = p.iter().map(|&x| self.fluid.g(phase, x)).collect();
            for v in (0..self.mesh.vertices().len()).filter(|&v| !self.mesh.is_dirichlet(v)) {
                g1 += self.accumulation(v, phase, &f, &fp) * g[v];
            }
            self.for_each_interface(phase, &f, eps, |k, l, c, mob| {
                let rho = self.fluid.interface_density(phase, p[k], p[l]);
                let dg = g[l] - g[k];
                g2 += rho * mob * c * (p[l] - p[k]) * dg;
                if let Some(r) = reg {
                    if c >= 0.0 {
                        g3 += r.eta * phase.sign() * rho * c.abs() * (pc[l] - pc[k]) * dg;
                    }
                }
            });
        }
        [g1, self.dt * g2, self.dt * g3]
    }

    fn mobility_form(&self, state: &State, reg: Option<Regularization>) -> f64 {
        let f = self.fields(state);
        let eps = reg.map_or(0.0, |r| r.eps);
        let mut acc = 0.0;
        for (pi, phase) in PhaseId::ALL.into_iter().enumerate() {
            let p = &f.p[pi];
            self.for_each_interface(phase, &f, eps, |k, l, c, mob| acc += mob * c * (p[l] - p[k]).powi(2));
        }
        acc
    }

    fn capillary_form(&self, state: &State) -> f64 {
        let pc = self.mesh.expand(&state.capillary());
        self.mesh.edge_form(&pc, |c| if c >= 0.0 { c.abs() } else { 0.0 })
    }

    fn pressure_form(&self, values: &[f64]) -> f64 {
        self.mesh.edge_form(&self.mesh.expand(values), |c| c)
    }

    fn gamma2_identity_applies(&self) -> bool {
        self.mesh.triangles().iter().all(|t| t.coeffs.iter().all(|&c| c >= 0.0))
    }
}
