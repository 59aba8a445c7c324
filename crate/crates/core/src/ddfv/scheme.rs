//! Regularized PP-DDFV residual.

use nalgebra::DMatrix;

use crate::ddfv::mesh::{DdfvMesh, Diamond, NodeKind};
use crate::error::{Error, Result};
use crate::fluid::{clamp_z, FluidModel, PhaseId};
use crate::geometry::Point;
use crate::solver::backend::{Regularization, ResidualParts, SchemeBackend};
use crate::state::State;

/// `(M^up, M^min)` at an interface `A|B` with `δ_AB p = dp`.
pub fn upwind_mobility(fluid: &FluidModel, phase: PhaseId, dp: f64, s_a: f64, s_b: f64, eps: f64) -> (f64, f64) {
    let m_a = fluid.mobility_eps(phase, s_a, eps);
    let m_b = fluid.mobility_eps(phase, s_b, eps);
    (if dp >= 0.0 { m_b } else { m_a }, m_a.min(m_b))
}

/// Upwind and minimal mobilities of the primal and dual interfaces of a diamond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiamondMobilities {
    pub up: f64,
    pub min: f64,
    pub up_dual: f64,
    pub min_dual: f64,
}

/// `(V_KL, V_K*L*)` from the pressure jumps and interface mobilities.
pub fn flux_v(d: &Diamond, dp: f64, dp_dual: f64, m: &DiamondMobilities) -> (f64, f64) {
    let v = m.up * d.tau_kl * dp + m.min.sqrt() * m.up_dual.sqrt() * d.eta_d * dp_dual;
    let v_dual = m.up_dual * d.tau_ks_ls * dp_dual + m.min_dual.sqrt() * m.up.sqrt() * d.eta_d * dp;
    (v, v_dual)
}

/// `(p_c,KL, p_c,K*L*)` from node values of both phase pressures.
pub fn capillary_flux(d: &Diamond, p_g: &[f64], p_w: &[f64]) -> (f64, f64) {
    let dpc = d.delta_primal(p_g) - d.delta_primal(p_w);
    let dpc_dual = d.delta_dual(p_g) - d.delta_dual(p_w);
    (d.tau_kl * dpc, d.tau_ks_ls * dpc_dual)
}

/// Pressures and saturations of both phases on every mesh node.
struct NodeFields {
    p: [Vec<f64>; 2],
    s: [Vec<f64>; 2],
}

impl NodeFields {
    fn p(&self, phase: PhaseId) -> &[f64] {
        &self.p[phase.parity() as usize]
    }

    fn s(&self, phase: PhaseId) -> &[f64] {
        &self.s[phase.parity() as usize]
    }
}

#[derive(Debug, Clone)]
pub struct DdfvScheme {
    mesh: DdfvMesh,
    fluid: FluidModel,
    dt: f64,
}

impl DdfvScheme {
    pub fn new(mesh: DdfvMesh, fluid: FluidModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParams(format!("time step {dt} must be positive")));
        }
        Ok(Self { mesh, fluid, dt })
    }

    pub fn mesh(&self) -> &DdfvMesh {
        &self.mesh
    }

    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(self.mesh.clone(), self.fluid.clone(), dt)
    }

    fn node_fields(&self, state: &State) -> NodeFields {
        assert_eq!(state.len(), self.mesh.dof_count(), "state does not match the mesh");
        let p_g = self.mesh.expand(state.p_g());
        let p_w = self.mesh.expand(state.p_w());
        let s_g: Vec<f64> = p_g.iter().zip(&p_w).map(|(&g, &w)| self.fluid.coupling(g, w).0).collect();
        let s_w = s_g.iter().map(|s| 1.0 - s).collect();
        NodeFields { p: [p_g, p_w], s: [s_g, s_w] }
    }

    fn mobilities(&self, d: &Diamond, phase: PhaseId, p: &[f64], s: &[f64], eps: f64) -> DiamondMobilities {
        let (up, min) = upwind_mobility(&self.fluid, phase, d.delta_primal(p), s[d.k], s[d.l], eps);
        let (up_dual, min_dual) = upwind_mobility(&self.fluid, phase, d.delta_dual(p), s[d.ks], s[d.ls], eps);
        DiamondMobilities { up, min, up_dual, min_dual }
    }

    fn diamond_fluxes(&self, d: &Diamond, phase: PhaseId, p: &[f64], s: &[f64], eps: f64) -> (f64, f64) {
        let m = self.mobilities(d, phase, p, s, eps);
        flux_v(d, d.delta_primal(p), d.delta_dual(p), &m)
    }

    /// `(V_KL, V_K*L*)` of one diamond for a dof state.
    pub fn flux_at(&self, diamond: usize, state: &State, phase: PhaseId, eps: f64) -> (f64, f64) {
        let f = self.node_fields(state);
        self.diamond_fluxes(&self.mesh.diamonds()[diamond], phase, f.p(phase), f.s(phase), eps)
    }

    /// `(p_c,KL, p_c,K*L*)` of one diamond for a dof state.
    pub fn capillary_flux_at(&self, diamond: usize, state: &State) -> (f64, f64) {
        let f = self.node_fields(state);
        capillary_flux(&self.mesh.diamonds()[diamond], f.p(PhaseId::Gas), f.p(PhaseId::Wetting))
    }

    fn accumulation(&self, node: usize, phase: PhaseId, f: &NodeFields, prev: &NodeFields) -> f64 {
        let n = &self.mesh.nodes()[node];
        let (p, s) = (f.p(phase)[node], f.s(phase)[node]);
        let (pn, sn) = (prev.p(phase)[node], prev.s(phase)[node]);
        n.measure * n.porosity * (self.fluid.density(phase, p) * clamp_z(s) - self.fluid.density(phase, pn) * sn)
    }

    fn has_accumulation(&self, node: usize) -> bool {
        self.mesh.nodes()[node].kind != NodeKind::BoundaryEdge
    }
}

impl SchemeBackend for DdfvScheme {
    fn name(&self) -> &'static str {
        "ddfv"
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
        (0..self.mesh.dof_count()).map(|i| self.mesh.nodes()[self.mesh.node_of_dof(i)].center).collect()
    }

    fn residual_parts(&self, state: &State, prev: &State, reg: Option<Regularization>) -> ResidualParts {
        let n = self.mesh.dof_count();
        let f = self.node_fields(state);
        let fp = self.node_fields(prev);
        let eps = reg.map_or(0.0, |r| r.eps);
        let mut parts = ResidualParts::zeros(2 * n);
        let nn = self.mesh.node_count();
        let mut conv = vec![0.0; nn];
        let mut cap = vec![0.0; nn];
        for (pi, phase) in PhaseId::ALL.into_iter().enumerate() {
            let (p, s) = (f.p(phase), f.s(phase));
            conv.iter_mut().for_each(|v| *v = 0.0);
            cap.iter_mut().for_each(|v| *v = 0.0);
            for d in self.mesh.diamonds() {
                let (v, v_dual) = self.diamond_fluxes(d, phase, p, s, eps);
                let rho = self.fluid.interface_density(phase, p[d.k], p[d.l]);
                let rho_dual = self.fluid.interface_density(phase, p[d.ks], p[d.ls]);
                let (a, b) = (self.dt * rho * v, self.dt * rho_dual * v_dual);
                conv[d.k] -= a;
                conv[d.l] += a;
                conv[d.ks] -= b;
                conv[d.ls] += b;
                if let Some(r) = reg {
                    let (pc, pc_dual) = capillary_flux(d, f.p(PhaseId::Gas), f.p(PhaseId::Wetting));
                    let c = self.dt * r.eta * phase.sign();
                    let (a, b) = (c * rho * pc, c * rho_dual * pc_dual);
                    cap[d.k] -= a;
                    cap[d.l] += a;
                    cap[d.ks] -= b;
                    cap[d.ls] += b;
                }
            }
            for i in 0..n {
                let node = self.mesh.node_of_dof(i);
                let row = pi * n + i;
                if self.has_accumulation(node) {
                    parts.accumulation[row] = self.accumulation(node, phase, &f, &fp);
                }
                parts.convection[row] = conv[node];
                parts.capillary[row] = cap[node];
            }
        }
        parts
    }

    fn row_scales(&self) -> Vec<f64> {
        self.mesh.row_scales()
    }

    fn dof_neighbors(&self) -> Vec<Vec<usize>> {
        (0..self.mesh.dof_count())
            .map(|i| {
                let node = self.mesh.node_of_dof(i);
                let mut out: Vec<usize> = self
                    .mesh
                    .node_diamonds(node)
                    .iter()
                    .flat_map(|&di| {
                        let d = &self.mesh.diamonds()[di];
                        [d.k, d.l, d.ks, d.ls]
                    })
                    .chain([node])
                    .filter_map(|m| self.mesh.dof_of_node(m))
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect()
    }

    fn grad_norm(&self, values: &[f64]) -> f64 {
        self.mesh.tau_norm(&self.mesh.expand(values))
    }

    fn grad_gram(&self) -> DMatrix<f64> {
        self.mesh.tau_gram()
    }

    fn l1_weights(&self) -> Vec<f64> {
        self.mesh.l1_weights().iter().copied().collect()
    }

    fn gamma1_factor(&self) -> f64 {
        2.0
    }

    fn porosity_bounds(&self) -> (f64, f64) {
        self.mesh
            .nodes()
            .iter()
            .filter(|n| n.kind != NodeKind::BoundaryEdge)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), n| (lo.min(n.porosity), hi.max(n.porosity)))
    }

    fn energy_gammas(&self, state: &State, prev: &State, reg: Option<Regularization>) -> [f64; 3] {
        let f = self.node_fields(state);
        let fp = self.node_fields(prev);
        let eps = reg.map_or(0.0, |r| r.eps);
        let (mut g1, mut g2, mut g3) = (0.0, 0.0, 0.0);
        for phase in PhaseId::ALL {
            let p = f.p(phase);
            let g: Vec<f64> = p.iter().map(|&x| self.fluid.g(phase, x)).collect();
            for node in 0..self.mesh.node_count() {
                if self.mesh.dof_of_node(node).is_some() && self.has_accumulation(node) {
                    g1 += self.accumulation(node, phase, &f, &fp) * g[node];
                }
            }
            for d in self.mesh.diamonds() {
                let (v, v_dual) = self.diamond_fluxes(d, phase, p, f.s(phase), eps);
                let rho = self.fluid.interface_density(phase, p[d.k], p[d.l]);
                let rho_dual = self.fluid.interface_density(phase, p[d.ks], p[d.ls]);
                let (dg, dg_dual) = (d.delta_primal(&g), d.delta_dual(&g));
                g2 += rho * v * dg + rho_dual * v_dual * dg_dual;
                if let Some(r) = reg {
                    let (pc, pc_dual) = capillary_flux(d, f.p(PhaseId::Gas), f.p(PhaseId::Wetting));
                    g3 += r.eta * phase.sign() * (rho * pc * dg + rho_dual * pc_dual * dg_dual);
                }
            }
        }
        [g1, self.dt * g2, self.dt * g3]
    }

    fn mobility_form(&self, state: &State, reg: Option<Regularization>) -> f64 {
        let f = self.node_fields(state);
        let eps = reg.map_or(0.0, |r| r.eps);
        let mut acc = 0.0;
        for phase in PhaseId::ALL {
            let p = f.p(phase);
            for d in self.mesh.diamonds() {
                let m = self.mobilities(d, phase, p, f.s(phase), eps);
                acc += m.up * d.tau_kl * d.delta_primal(p).powi(2) + m.up_dual * d.tau_ks_ls * d.delta_dual(p).powi(2);
            }
        }
        acc
    }

    fn capillary_form(&self, state: &State) -> f64 {
        self.norm_of_difference(state).powi(2)
    }

    fn pressure_form(&self, values: &[f64]) -> f64 {
        self.grad_norm(values).powi(2)
    }

    fn gamma2_identity_applies(&self) -> bool {
        self.mesh.diamonds().iter().all(|d| d.eta_d == 0.0)
    }
}
