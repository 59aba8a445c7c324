//! Slow, independent re-implementations used as test oracles.
//!
//! Nothing here calls into the assembly code under test: geometry, fluid
//! functions and fluxes are recomputed from the raw mesh and raw parameters.

#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twophase::fluid::{CapillaryLaw, FluidParams, MobilityLaw};
use twophase::meshio::{BoundaryKind, PolygonSoup};
use twophase::{FluidModel, PhaseId, SchemeBackend, State};

pub type P = Vector2<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn corey() -> FluidModel {
    FluidModel::new(FluidParams::default()).unwrap()
}

/// Constant density and mobility: the residual is linear in the pressures.
pub fn linear_fluid() -> FluidModel {
    FluidModel::new(FluidParams { rho0: 1.0, rho1: 1.0, mobility: MobilityLaw::Constant, mu_g: 1.0, mu_w: 1.0, ..FluidParams::default() })
        .unwrap()
}

/// Composite Simpson rule with `n` (even) subintervals.
pub fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

// ---------------------------------------------------------------- fluid

pub struct RawFluid {
    pub slope: f64,
    pub mu: [f64; 2],
    pub rho0: f64,
    pub rho1: f64,
    pub k: [f64; 2],
    /// `None` for constant mobilities.
    pub exponent: Option<f64>,
}

impl RawFluid {
    pub fn from(params: &FluidParams) -> Self {
        let slope = match params.capillary {
            CapillaryLaw::Linear { slope } => slope,
            CapillaryLaw::Smooth { .. } => panic!("oracle supports the linear capillary law only"),
        };
        let exponent = match params.mobility {
            MobilityLaw::Corey { exponent } => Some(exponent),
            MobilityLaw::Constant => None,
        };
        Self {
            slope,
            mu: [params.mu_g, params.mu_w],
            rho0: params.rho0,
            rho1: params.rho1,
            k: [params.rho_steepness_g, params.rho_steepness_w],
            exponent,
        }
    }

    fn idx(phase: PhaseId) -> usize {
        match phase {
            PhaseId::Gas => 0,
            PhaseId::Wetting => 1,
        }
    }

    pub fn rho(&self, phase: PhaseId, p: f64) -> f64 {
        let k = self.k[Self::idx(phase)];
        self.rho0 + (self.rho1 - self.rho0) / (1.0 + (-2.0 * k * p).exp())
    }

    /// Antiderivative of `1/rho` in closed form.
    fn big_g(&self, phase: PhaseId, p: f64) -> f64 {
        let k = self.k[Self::idx(phase)];
        let (r0, r1) = (self.rho0, self.rho1);
        if k == 0.0 || r0 == r1 {
            return 2.0 * p / (r0 + r1);
        }
        // ln(r1 + r0 e^x), x = -2kp, evaluated without overflow
        let x = -2.0 * k * p;
        let log = if x > 0.0 { x + (r0 + r1 * (-x).exp()).ln() } else { (r1 + r0 * x.exp()).ln() };
        p / r1 - (r1 - r0) / (2.0 * k * r0 * r1) * log
    }

    pub fn g(&self, phase: PhaseId, p: f64) -> f64 {
        self.big_g(phase, p) - self.big_g(phase, 0.0)
    }

    pub fn rho_interface(&self, phase: PhaseId, a: f64, b: f64) -> f64 {
        if a == b {
            return self.rho(phase, a);
        }
        let k = self.k[Self::idx(phase)];
        let (r0, r1) = (self.rho0, self.rho1);
        if k == 0.0 || r0 == r1 {
            return 0.5 * (r0 + r1);
        }
        // G(b) - G(a) without cancellation: the log difference is
        // ln(1 + r0 e^{xa} expm1(xb - xa) / (r1 + r0 e^{xa}))
        let (xa, xb) = (-2.0 * k * a, -2.0 * k * b);
        let ea = xa.exp();
        let log_diff = (r0 * ea * (xb - xa).exp_m1() / (r1 + r0 * ea)).ln_1p();
        let diff = (b - a) / r1 - (r1 - r0) / (2.0 * k * r0 * r1) * log_diff;
        (b - a) / diff
    }

    pub fn sat(&self, p_g: f64, p_w: f64) -> f64 {
        (p_g - p_w) / self.slope
    }

    pub fn mobility(&self, phase: PhaseId, s: f64, eps: f64) -> f64 {
        let c = s.clamp(0.0, 1.0);
        let kr = self.exponent.map_or(1.0, |n| c.powf(n));
        eps + kr / self.mu[Self::idx(phase)]
    }

    pub fn phase_sat(&self, phase: PhaseId, p_g: f64, p_w: f64) -> f64 {
        match phase {
            PhaseId::Gas => self.sat(p_g, p_w),
            PhaseId::Wetting => 1.0 - self.sat(p_g, p_w),
        }
    }
}

// ---------------------------------------------------------------- states

fn key(p: &P) -> (i64, i64) {
    ((p.x * 1e9).round() as i64, (p.y * 1e9).round() as i64)
}

/// Pressures keyed by node position; Dirichlet nodes are absent (zero).
#[derive(Clone, Default)]
pub struct PositionalState {
    values: HashMap<(i64, i64), (f64, f64)>,
}

impl PositionalState {
    pub fn from_state(backend: &dyn SchemeBackend, state: &State) -> Self {
        let mut values = HashMap::new();
        for (i, x) in backend.dof_positions().iter().enumerate() {
            assert!(values.insert(key(x), (state.p_g()[i], state.p_w()[i])).is_none(), "duplicate dof position");
        }
        Self { values }
    }

    pub fn get(&self, x: &P) -> (f64, f64) {
        self.values.get(&key(x)).copied().unwrap_or((0.0, 0.0))
    }
}

/// Random state with pressures in `[-1, 1.5]`.
pub fn random_state(fluid: &FluidModel, n: usize, rng: &mut impl Rng) -> State {
    let p_g = (0..n).map(|_| rng.gen_range(-1.0..1.5)).collect();
    let p_w = (0..n).map(|_| rng.gen_range(-1.0..1.5)).collect();
    State::new(fluid, p_g, p_w)
}

/// Random state whose saturations lie in `[0, 1]`.
pub fn random_physical_state(fluid: &FluidModel, n: usize, rng: &mut impl Rng) -> State {
    let p_w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p_g = p_w.iter().map(|w| w + fluid.capillary_pressure(rng.gen_range(0.0..=1.0))).collect();
    State::new(fluid, p_g, p_w)
}

/// Oracle residual rows with the sum of absolute contributions, for a
/// relative comparison.
pub struct OracleRow {
    pub position: P,
    pub value: [f64; 2],
    pub magnitude: [f64; 2],
}

pub struct Reg {
    pub eps: f64,
    pub eta: f64,
}

fn cross(a: &P, b: &P) -> f64 {
    a.x * b.y - a.y * b.x
}

fn shoelace(poly: &[P]) -> f64 {
    0.5 * (0..poly.len()).map(|i| cross(&poly[i], &poly[(i + 1) % poly.len()])).sum::<f64>()
}

fn polygon_centroid(poly: &[P]) -> P {
    let a = shoelace(poly);
    let mut c = P::zeros();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        c += (p + q) * cross(&p, &q);
    }
    c / (6.0 * a)
}

fn unit_normal_towards(segment: P, towards: P) -> P {
    let n = P::new(segment.y, -segment.x).normalize();
    if n.dot(&towards) >= 0.0 {
        n
    } else {
        -n
    }
}

// ---------------------------------------------------------------- DDFV

#[derive(Clone, Copy, PartialEq)]
enum DKind {
    Cell,
    Edge,
    Vertex,
}

struct DNode {
    kind: DKind,
    x: P,
    measure: f64,
    dirichlet: bool,
}

struct DDiamond {
    k: usize,
    l: usize,
    ks: usize,
    ls: usize,
    tau: f64,
    tau_s: f64,
    eta: f64,
}

/// Naive DDFV residual on a polygonal mesh with homogeneous rock.
pub fn ddfv_oracle(
    soup: &PolygonSoup,
    phi: f64,
    lambda: Matrix2<f64>,
    fluid: &RawFluid,
    dt: f64,
    reg: Option<&Reg>,
    state: &PositionalState,
    prev: &PositionalState,
) -> Vec<OracleRow> {
    let verts = &soup.vertices;
    let mut nodes = Vec::new();
    for cell in &soup.cells {
        let poly: Vec<P> = cell.iter().map(|&v| verts[v]).collect();
        nodes.push(DNode { kind: DKind::Cell, x: polygon_centroid(&poly), measure: shoelace(&poly).abs(), dirichlet: false });
    }
    let mut owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (c, cell) in soup.cells.iter().enumerate() {
        for i in 0..cell.len() {
            let (a, b) = (cell[i], cell[(i + 1) % cell.len()]);
            owners.entry((a.min(b), a.max(b))).or_default().push(c);
        }
    }
    let mut edges: Vec<_> = owners.into_iter().collect();
    edges.sort();
    let vertex_base = nodes.len() + edges.iter().filter(|(_, o)| o.len() == 1).count();
    let mut vertex_dirichlet = vec![false; verts.len()];
    let mut pairs = Vec::new();
    for ((a, b), cells) in &edges {
        let other = if cells.len() == 2 {
            cells[1]
        } else {
            let dirichlet = soup.boundary_kind(*a, *b) == Some(BoundaryKind::Dirichlet);
            if dirichlet {
                vertex_dirichlet[*a] = true;
                vertex_dirichlet[*b] = true;
            }
            nodes.push(DNode { kind: DKind::Edge, x: 0.5 * (verts[*a] + verts[*b]), measure: 0.0, dirichlet });
            nodes.len() - 1
        };
        pairs.push((cells[0], other, *a, *b));
    }
    assert_eq!(nodes.len(), vertex_base);
    for (v, x) in verts.iter().enumerate() {
        nodes.push(DNode { kind: DKind::Vertex, x: *x, measure: 0.0, dirichlet: vertex_dirichlet[v] });
    }
    let mut diamonds = Vec::new();
    for (k, l, a, b) in pairs {
        let (ks, ls) = (vertex_base + a, vertex_base + b);
        let (xk, xl, xks, xls) = (nodes[k].x, nodes[l].x, nodes[ks].x, nodes[ls].x);
        nodes[ks].measure += shoelace(&[xk, xl, xks]).abs();
        nodes[ls].measure += shoelace(&[xk, xl, xls]).abs();
        let (t, ts) = (xl - xk, xls - xks);
        let (m_sigma, m_sigma_star) = (ts.norm(), t.norm());
        let sin = cross(&t, &ts).abs() / (m_sigma * m_sigma_star);
        let n = unit_normal_towards(ts, t);
        let ns = unit_normal_towards(t, ts);
        diamonds.push(DDiamond {
            k,
            l,
            ks,
            ls,
            tau: m_sigma / m_sigma_star * (lambda * n).dot(&n) / sin,
            tau_s: m_sigma_star / m_sigma * (lambda * ns).dot(&ns) / sin,
            eta: (lambda * n).dot(&ns) / sin,
        });
    }
    let pressures = |s: &PositionalState, i: usize| if nodes[i].dirichlet { (0.0, 0.0) } else { s.get(&nodes[i].x) };

    let mut rows = Vec::new();
    for a in 0..nodes.len() {
        if nodes[a].dirichlet {
            continue;
        }
        let mut value = [0.0; 2];
        let mut magnitude = [0.0; 2];
        for (pi, phase) in PhaseId::ALL.into_iter().enumerate() {
            let pick = |(g, w): (f64, f64)| if pi == 0 { g } else { w };
            let mut add = |v: f64| {
                value[pi] += v;
                magnitude[pi] += v.abs();
            };
            if nodes[a].kind != DKind::Edge {
                let (g, w) = pressures(state, a);
                let (gn, wn) = pressures(prev, a);
                let s = fluid.phase_sat(phase, g, w).clamp(0.0, 1.0);
                let sn = fluid.phase_sat(phase, gn, wn);
                add(nodes[a].measure * phi * fluid.rho(phase, pick((g, w))) * s);
                add(-nodes[a].measure * phi * fluid.rho(phase, pick((gn, wn))) * sn);
            }
            for d in &diamonds {
                let p = |i: usize| pick(pressures(state, i));
                let s = |i: usize| {
                    let (g, w) = pressures(state, i);
                    fluid.phase_sat(phase, g, w)
                };
                let pc = |i: usize| {
                    let (g, w) = pressures(state, i);
                    g - w
                };
                let eps = reg.map_or(0.0, |r| r.eps);
                let up = |from: usize, to: usize| {
                    let m_from = fluid.mobility(phase, s(from), eps);
                    let m_to = fluid.mobility(phase, s(to), eps);
                    (if p(to) - p(from) >= 0.0 { m_to } else { m_from }, m_from.min(m_to))
                };
                let (m_up, m_min) = up(d.k, d.l);
                let (m_up_s, m_min_s) = up(d.ks, d.ls);
                let (dp, dps) = (p(d.l) - p(d.k), p(d.ls) - p(d.ks));
                let v = m_up * d.tau * dp + (m_min * m_up_s).sqrt() * d.eta * dps;
                let vs = m_up_s * d.tau_s * dps + (m_min_s * m_up).sqrt() * d.eta * dp;
                let rho = fluid.rho_interface(phase, p(d.k), p(d.l));
                let rho_s = fluid.rho_interface(phase, p(d.ks), p(d.ls));
                let sign = if pi == 0 { 1.0 } else { -1.0 };
                let eta_reg = reg.map_or(0.0, |r| r.eta);
                let cap = eta_reg * sign * rho * d.tau * (pc(d.l) - pc(d.k));
                let cap_s = eta_reg * sign * rho_s * d.tau_s * (pc(d.ls) - pc(d.ks));
                if a == d.k {
                    add(-dt * rho * v);
                    add(-dt * cap);
                }
                if a == d.l {
                    add(dt * rho * v);
                    add(dt * cap);
                }
                if a == d.ks {
                    add(-dt * rho_s * vs);
                    add(-dt * cap_s);
                }
                if a == d.ls {
                    add(dt * rho_s * vs);
                    add(dt * cap_s);
                }
            }
        }
        rows.push(OracleRow { position: nodes[a].x, value, magnitude });
    }
    rows
}

// ---------------------------------------------------------------- CVFE

/// `-|T| Λ ∇φ_i · ∇φ_j` for all ordered pairs, gradients from the inverse
/// of the affine map of the reference triangle.
pub fn p1_stiffness(x: [P; 3], lambda: Matrix2<f64>) -> [[f64; 3]; 3] {
    let jac = Matrix2::new(x[1].x - x[0].x, x[2].x - x[0].x, x[1].y - x[0].y, x[2].y - x[0].y);
    let area = 0.5 * jac.determinant().abs();
    let inv_t = jac.try_inverse().unwrap().transpose();
    let g1 = inv_t * P::new(1.0, 0.0);
    let g2 = inv_t * P::new(0.0, 1.0);
    let grads = [-g1 - g2, g1, g2];
    let mut c = [[0.0; 3]; 3];
    let mut scale = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = -area * (lambda * grads[i]).dot(&grads[j]);
            scale = scale.max(c[i][j].abs());
        }
    }
    // coefficients of right angles are zero up to roundoff
    for row in &mut c {
        for v in row.iter_mut() {
            if v.abs() <= 1e-12 * scale {
                *v = 0.0;
            }
        }
    }
    c
}

/// Naive CVFE residual on a triangulation with homogeneous rock.
pub fn cvfe_oracle(
    soup: &PolygonSoup,
    phi: f64,
    lambda: Matrix2<f64>,
    fluid: &RawFluid,
    dt: f64,
    reg: Option<&Reg>,
    state: &PositionalState,
    prev: &PositionalState,
) -> Vec<OracleRow> {
    let verts = &soup.vertices;
    let mut dirichlet = vec![false; verts.len()];
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &soup.cells {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    for (&(a, b), &c) in &count {
        if c == 1 && soup.boundary_kind(a, b) == Some(BoundaryKind::Dirichlet) {
            dirichlet[a] = true;
            dirichlet[b] = true;
        }
    }
    let pressures = |s: &PositionalState, v: usize| if dirichlet[v] { (0.0, 0.0) } else { s.get(&verts[v]) };

    let mut rows = Vec::new();
    for k in 0..verts.len() {
        if dirichlet[k] {
            continue;
        }
        let mut value = [0.0; 2];
        let mut magnitude = [0.0; 2];
        for (pi, phase) in PhaseId::ALL.into_iter().enumerate() {
            let pick = |(g, w): (f64, f64)| if pi == 0 { g } else { w };
            let p = |v: usize| pick(pressures(state, v));
            let s = |v: usize| {
                let (g, w) = pressures(state, v);
                fluid.phase_sat(phase, g, w)
            };
            let pc = |v: usize| {
                let (g, w) = pressures(state, v);
                g - w
            };
            let mut add = |v: f64| {
                value[pi] += v;
                magnitude[pi] += v.abs();
            };
            let mut measure = 0.0;
            for t in soup.cells.iter().filter(|t| t.contains(&k)) {
                let x = [verts[t[0]], verts[t[1]], verts[t[2]]];
                // the median dual splits a triangle into three equal parts
                measure += shoelace(&x).abs() / 3.0;
                let c = p1_stiffness(x, lambda);
                let i = t.iter().position(|&v| v == k).unwrap();
                for j in (0..3).filter(|&j| j != i) {
                    let l = t[j];
                    let coeff = c[i][j];
                    let s_kl = if coeff >= 0.0 {
                        if p(l) - p(k) >= 0.0 {
                            s(l)
                        } else {
                            s(k)
                        }
                    } else {
                        s(t[0]).min(s(t[1])).min(s(t[2]))
                    };
                    let eps = reg.map_or(0.0, |r| r.eps);
                    let rho = fluid.rho_interface(phase, p(k), p(l));
                    add(-dt * rho * fluid.mobility(phase, s_kl, eps) * coeff * (p(l) - p(k)));
                    if let Some(r) = reg {
                        if coeff >= 0.0 {
                            let sign = if pi == 0 { 1.0 } else { -1.0 };
                            add(-dt * r.eta * sign * rho * coeff.abs() * (pc(l) - pc(k)));
                        }
                    }
                }
            }
            let (g, w) = pressures(state, k);
            let (gn, wn) = pressures(prev, k);
            let sat = fluid.phase_sat(phase, g, w).clamp(0.0, 1.0);
            let sat_n = fluid.phase_sat(phase, gn, wn);
            add(measure * phi * fluid.rho(phase, pick((g, w))) * sat);
            add(-measure * phi * fluid.rho(phase, pick((gn, wn))) * sat_n);
        }
        rows.push(OracleRow { position: verts[k], value, magnitude });
    }
    rows
}

/// Largest `|F - F_oracle| / magnitude` over all rows and phases.
pub fn compare(backend: &dyn SchemeBackend, residual: &[f64], rows: &[OracleRow]) -> f64 {
    let n = backend.dof_count();
    assert_eq!(rows.len(), n, "oracle and backend disagree on the unknown set");
    let index: HashMap<(i64, i64), usize> = backend.dof_positions().iter().enumerate().map(|(i, x)| (key(x), i)).collect();
    let mut worst = 0.0f64;
    for r in rows {
        let i = index[&key(&r.position)];
        for pi in 0..2 {
            let diff = (residual[pi * n + i] - r.value[pi]).abs();
            worst = worst.max(diff / r.magnitude[pi].max(1e-300));
        }
    }
    worst
}

// ---------------------------------------------------------------- drivers

use twophase::cvfe::mesh::structured_triangles;
use twophase::cvfe::{CvfeMesh, CvfeScheme, TriangleSplit};
use twophase::ddfv::mesh::structured_quads;
use twophase::ddfv::{DdfvMesh, DdfvScheme};
use twophase::medium::{Medium, Rock};
use twophase::meshio::DirichletSides;
use twophase::Regularization;

pub const ORACLE_PHI: f64 = 0.25;
pub const ORACLE_DT: f64 = 0.05;

fn sides() -> DirichletSides {
    DirichletSides { left: true, bottom: true, ..DirichletSides::default() }
}

fn medium(lambda: Matrix2<f64>) -> Medium {
    Medium::homogeneous(Rock { porosity: ORACLE_PHI, permeability: lambda }).unwrap()
}

fn random_reg(rng: &mut ChaCha8Rng, i: usize) -> Option<Regularization> {
    match i % 3 {
        0 => None,
        1 => Some(Regularization::new(0.0, 0.0)),
        _ => Some(Regularization::new(rng.gen_range(0.0..0.2), rng.gen_range(0.0..0.2))),
    }
}

/// Worst relative deviation between the assembled residual and the oracle
/// over `samples` random states.
fn check_backend(
    backend: &dyn SchemeBackend,
    oracle: impl Fn(Option<&Reg>, &PositionalState, &PositionalState) -> Vec<OracleRow>,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = rng(seed);
    let fluid = backend.fluid();
    let mut worst = 0.0f64;
    for i in 0..samples {
        let state = random_state(fluid, backend.dof_count(), &mut rng);
        let prev = random_physical_state(fluid, backend.dof_count(), &mut rng);
        let reg = random_reg(&mut rng, i);
        let residual = backend.residual(&state, &prev, reg);
        let r = reg.map(|r| Reg { eps: r.eps, eta: r.eta });
        let rows = oracle(r.as_ref(), &PositionalState::from_state(backend, &state), &PositionalState::from_state(backend, &prev));
        worst = worst.max(compare(backend, &residual, &rows));
    }
    worst
}

pub fn ddfv_oracle_check(distortion: f64, lambda: Matrix2<f64>, samples: usize, seed: u64) -> f64 {
    let soup = structured_quads(2, 2, distortion).unwrap().with_sides(&sides());
    let fluid = corey();
    let raw = RawFluid::from(fluid.params());
    let mesh = DdfvMesh::from_soup(&soup, &medium(lambda)).unwrap();
    let scheme = DdfvScheme::new(mesh, fluid, ORACLE_DT).unwrap();
    check_backend(
        &scheme,
        |reg, s, p| ddfv_oracle(&soup, ORACLE_PHI, lambda, &raw, ORACLE_DT, reg, s, p),
        samples,
        seed,
    )
}

pub fn cvfe_oracle_check(split: TriangleSplit, lambda: Matrix2<f64>, samples: usize, seed: u64) -> f64 {
    let mut soup = structured_triangles(2, 2, split).unwrap();
    soup.mark_sides(&sides());
    let fluid = corey();
    let raw = RawFluid::from(fluid.params());
    let mesh = CvfeMesh::from_soup(&soup, &medium(lambda)).unwrap();
    let scheme = CvfeScheme::new(mesh, fluid, ORACLE_DT).unwrap();
    check_backend(
        &scheme,
        |reg, s, p| cvfe_oracle(&soup, ORACLE_PHI, lambda, &raw, ORACLE_DT, reg, s, p),
        samples,
        seed,
    )
}

pub fn anisotropic() -> Matrix2<f64> {
    Matrix2::new(1.0, -0.5, -0.5, 1.0)
}

// ---------------------------------------------------------------- fluid oracles

/// Quadrature resolution of the fluid oracles.
pub const ORACLE_POINTS: usize = 10_000;

/// Simpson rule split at the kinks `0` and `1` of the extended integrands.
pub fn simpson_with_kinks(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts = vec![lo];
    cuts.extend([0.0, 1.0].into_iter().filter(|&c| c > lo && c < hi));
    cuts.push(hi);
    sign * cuts.windows(2).map(|w| simpson(w[0], w[1], ORACLE_POINTS, &f)).sum::<f64>()
}

/// Largest deviations of the fluid transforms from quadrature oracles.
#[derive(Debug, Default)]
pub struct FluidOracleReport {
    pub rho_interface: f64,
    pub g: f64,
    pub h: f64,
    pub p_hat: f64,
    pub xi: f64,
    /// `max |H|` for a constant density law.
    pub h_constant_density: f64,
    /// `max |p̂_α - p_c/2|, |ξ - p_c/2|` for constant mobilities.
    pub constant_mobility_split: f64,
}

impl FluidOracleReport {
    pub fn worst_oracle(&self) -> f64 {
        self.rho_interface.max(self.g).max(self.h).max(self.p_hat).max(self.xi)
    }
}

fn err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn fluid_oracle_report(samples: usize, seed: u64) -> FluidOracleReport {
    let mut rng = rng(seed);
    let fluid = corey();
    let raw = RawFluid::from(fluid.params());
    let mut out = FluidOracleReport::default();
    let slope = raw.slope;
    let total = |s: f64| raw.mobility(PhaseId::Wetting, 1.0 - s, 0.0) + raw.mobility(PhaseId::Gas, s, 0.0);
    for _ in 0..samples {
        for phase in PhaseId::ALL {
            let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let inv = |z: f64| 1.0 / raw.rho(phase, z);
            let rho_ab = (b - a) / simpson(a, b, ORACLE_POINTS, inv);
            out.rho_interface = out.rho_interface.max(err(fluid.interface_density(phase, a, b), rho_ab));
            let g = simpson(0.0, a, ORACLE_POINTS, inv);
            let (g_impl, h_impl) = fluid.g_and_h(phase, a);
            out.g = out.g.max(err(g_impl, g));
            out.h = out.h.max(err(h_impl, raw.rho(phase, a) * g - a));
        }
        let s = rng.gen_range(-0.5..1.5);
        let hat_g = simpson_with_kinks(0.0, s, |u| raw.mobility(PhaseId::Wetting, 1.0 - u, 0.0) / total(u) * slope);
        let hat_w = simpson_with_kinks(0.0, s, |u| raw.mobility(PhaseId::Gas, u, 0.0) / total(u) * slope);
        let xi = simpson_with_kinks(0.0, s, |u| {
            (raw.mobility(PhaseId::Wetting, 1.0 - u, 0.0) * raw.mobility(PhaseId::Gas, u, 0.0)).sqrt() / total(u) * slope
        });
        let (ig, iw) = fluid.corrective_pressures(s);
        out.p_hat = out.p_hat.max(err(ig, hat_g)).max(err(iw, hat_w));
        out.xi = out.xi.max(err(fluid.xi(s), xi));
    }

    let constant_rho = FluidModel::new(FluidParams { rho0: 0.8, rho1: 0.8, ..FluidParams::default() }).unwrap();
    let constant_mob = FluidModel::new(FluidParams {
        mobility: MobilityLaw::Constant,
        mu_g: 1.0,
        mu_w: 1.0,
        capillary: CapillaryLaw::Linear { slope: 1.7 },
        ..FluidParams::default()
    })
    .unwrap();
    for _ in 0..samples {
        let p = rng.gen_range(-10.0..10.0);
        for phase in PhaseId::ALL {
            out.h_constant_density = out.h_constant_density.max(constant_rho.h(phase, p).abs());
        }
        let s = rng.gen_range(-0.5..1.5);
        let half = 0.5 * constant_mob.capillary_pressure(s);
        let (a, b) = constant_mob.corrective_pressures(s);
        let d = (a - half).abs().max((b - half).abs()).max((constant_mob.xi(s) - half).abs());
        out.constant_mobility_split = out.constant_mobility_split.max(d);
    }
    out
}

/// Largest deviation of the DDFV gradient of `u = c + a x + b y` from `(a, b)`.
pub fn ddfv_affine_gradient_error(nx: usize, ny: usize, distortion: f64, a: f64, b: f64, c: f64) -> f64 {
    let mesh = DdfvMesh::build_structured(nx, ny, distortion, &sides(), &medium(anisotropic())).unwrap();
    let u = mesh.field_from_fn(|x| c + a * x.x + b * x.y);
    mesh.discrete_gradient(&u).iter().map(|g| (g - P::new(a, b)).norm()).fold(0.0, f64::max)
}

/// `min_s M_w(1 - s) + M_g(s)` by ternary search on the convex total mobility.
pub fn oracle_m0(raw: &RawFluid) -> f64 {
    let total = |s: f64| raw.mobility(PhaseId::Wetting, 1.0 - s, 0.0) + raw.mobility(PhaseId::Gas, s, 0.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let (a, b) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if total(a) <= total(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    total(0.5 * (lo + hi))
}

/// Violations and worst `lhs / rhs` of the mobility inequality over random
/// pressure pairs in `[-range, range]⁴`, with an independently computed `m0`.
pub fn lem1_oracle_check(fluid: &FluidModel, samples: usize, range: f64, seed: u64) -> (usize, f64) {
    let m0 = oracle_m0(&RawFluid::from(fluid.params()));
    let mut rng = rng(seed);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..samples {
        let mut draw = || rng.gen_range(-range..=range);
        let (a, b) = ((draw(), draw()), (draw(), draw()));
        let (lhs, rhs) = twophase::verify::lem1_sides(fluid, m0, a, b);
        if lhs > rhs * (1.0 + 1e-12) + 1e-14 {
            violations += 1;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    (violations, worst)
}

/// Largest `|lhs - rhs| / rhs` of the mobility inequality for unit constant
/// mobilities, where it holds with equality.
pub fn lem1_constant_mobility_gap(samples: usize, seed: u64) -> f64 {
    let fluid = FluidModel::new(FluidParams { mobility: MobilityLaw::Constant, mu_g: 1.0, mu_w: 1.0, ..FluidParams::default() }).unwrap();
    let m0 = oracle_m0(&RawFluid::from(fluid.params()));
    let mut rng = rng(seed);
    let mut gap = 0.0f64;
    for _ in 0..samples {
        let mut draw = || rng.gen_range(-2.0..=2.0);
        let (a, b) = ((draw(), draw()), (draw(), draw()));
        let (lhs, rhs) = twophase::verify::lem1_sides(&fluid, m0, a, b);
        gap = gap.max((lhs - rhs).abs() / rhs.max(1e-300));
    }
    gap
}
