//! Primal, dual and diamond meshes of the DDFV discretization.
//!
//! Every geometric entity that can carry an unknown is a *node*. Nodes are
//! numbered primal cells first, then boundary edges (the degenerate primal
//! cells of the boundary), then dual cells (one per mesh vertex). Nodes on
//! the Dirichlet boundary are kept in the node numbering with value zero but
//! are not degrees of freedom.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{centroid, cross, oriented_normal, signed_area, Point, Tensor};
use crate::medium::Medium;
use crate::meshio::{BoundaryKind, DirichletSides, PolygonSoup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    Primal,
    BoundaryEdge,
    Dual,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub center: Point,
    /// Zero for boundary edges.
    pub measure: f64,
    /// Mean porosity over the control volume (that of the adjacent cell for
    /// boundary edges).
    pub porosity: f64,
    pub dirichlet: bool,
}

/// One diamond per primal edge, spanned by `x_K, x_K*, x_L, x_L*`.
///
/// `n_kl` is the unit normal to the primal edge pointing from `K` to `L`;
/// `n_ks_ls` is the unit normal to the segment `[x_K, x_L]` pointing from
/// `K*` to `L*`.
#[derive(Debug, Clone)]
pub struct Diamond {
    pub k: usize,
    pub l: usize,
    pub ks: usize,
    pub ls: usize,
    /// Length of the primal edge `[x_K*, x_L*]`.
    pub m_sigma: f64,
    /// Length of the dual edge `[x_K, x_L]`.
    pub m_sigma_star: f64,
    pub sin_alpha: f64,
    pub m_d: f64,
    pub n_kl: Point,
    pub n_ks_ls: Point,
    pub lambda: Tensor,
    pub tau_kl: f64,
    pub tau_ks_ls: f64,
    pub eta_d: f64,
    pub boundary: bool,
}

impl Diamond {
    pub fn delta_primal(&self, u: &[f64]) -> f64 {
        u[self.l] - u[self.k]
    }

    pub fn delta_dual(&self, u: &[f64]) -> f64 {
        u[self.ls] - u[self.ks]
    }
}

/// `(τ_KL, τ_K*L*, η_D)` of a diamond.
pub fn transmissibilities(
    m_sigma: f64,
    m_sigma_star: f64,
    sin_alpha: f64,
    n_kl: &Point,
    n_ks_ls: &Point,
    lambda: &Tensor,
) -> Result<(f64, f64, f64)> {
    if !(sin_alpha > 1e-10) {
        return Err(Error::InvalidMesh(format!("degenerate diamond angle (sin = {sin_alpha:e})")));
    }
    let tau = m_sigma / m_sigma_star * (lambda * n_kl).dot(n_kl) / sin_alpha;
    let tau_star = m_sigma_star / m_sigma * (lambda * n_ks_ls).dot(n_ks_ls) / sin_alpha;
    let eta = (lambda * n_kl).dot(n_ks_ls) / sin_alpha;
    Ok((tau, tau_star, eta))
}

/// Node values of a discrete function; Dirichlet nodes hold zero unless the
/// field was sampled from an explicit function.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshStats {
    pub primal_cells: usize,
    pub boundary_edges: usize,
    pub dual_cells: usize,
    pub diamonds: usize,
    pub dofs: usize,
    pub dirichlet_nodes: usize,
    pub mixed_corner_vertices: usize,
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    pub min_tau: f64,
    pub max_tau: f64,
    pub max_abs_eta: f64,
    pub total_primal_measure: f64,
    pub total_dual_measure: f64,
}

#[derive(Debug, Clone)]
pub struct DdfvMesh {
    nodes: Vec<Node>,
    diamonds: Vec<Diamond>,
    n_primal: usize,
    n_boundary: usize,
    dof_of_node: Vec<Option<usize>>,
    node_of_dof: Vec<usize>,
    /// Diamonds incident to each node.
    node_diamonds: Vec<Vec<usize>>,
    mixed_corners: usize,
    area: f64,
}

struct EdgeInfo {
    cells: Vec<usize>,
    /// Endpoints in the counterclockwise order of the first cell.
    a: usize,
    b: usize,
}

impl DdfvMesh {
    /// Quadrilateral mesh of the unit square; interior vertices are moved by
    /// up to `distortion * h` in a fixed pseudo-random pattern.
    pub fn build_structured(nx: usize, ny: usize, distortion: f64, sides: &DirichletSides, medium: &Medium) -> Result<Self> {
        Self::from_soup(&structured_quads(nx, ny, distortion)?.with_sides(sides), medium)
    }

    pub fn from_soup(soup: &PolygonSoup, medium: &Medium) -> Result<Self> {
        let nv = soup.vertices.len();
        let mut cells: Vec<Vec<usize>> = Vec::with_capacity(soup.cells.len());
        for (i, c) in soup.cells.iter().enumerate() {
            let poly: Vec<Point> = c.iter().map(|&v| soup.vertices[v]).collect();
            let a = signed_area(&poly);
            if a.abs() < 1e-300 {
                return Err(Error::InvalidMesh(format!("cell {i} has zero area")));
            }
            let mut c = c.clone();
            if a < 0.0 {
                c.reverse();
            }
            cells.push(c);
        }
        let n_primal = cells.len();
        let polys: Vec<Vec<Point>> = cells.iter().map(|c| c.iter().map(|&v| soup.vertices[v]).collect()).collect();
        let centers: Vec<Point> = polys.iter().map(|p| centroid(p)).collect();
        let areas: Vec<f64> = polys.iter().map(|p| signed_area(p)).collect();

        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<EdgeInfo> = Vec::new();
        for (ci, c) in cells.iter().enumerate() {
            for i in 0..c.len() {
                let (a, b) = (c[i], c[(i + 1) % c.len()]);
                let key = if a < b { (a, b) } else { (b, a) };
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push(EdgeInfo { cells: vec![], a, b });
                    edges.len() - 1
                });
                edges[id].cells.push(ci);
            }
        }
        if let Some(e) = edges.iter().find(|e| e.cells.len() > 2) {
            return Err(Error::InvalidMesh(format!("edge ({}, {}) shared by more than two cells", e.a, e.b)));
        }

        // boundary edge nodes
        let boundary_edges: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].cells.len() == 1).collect();
        let n_boundary = boundary_edges.len();
        let mut nodes: Vec<Node> = (0..n_primal)
            .map(|i| Node {
                kind: NodeKind::Primal,
                center: centers[i],
                measure: areas[i],
                porosity: medium.rock_at(&centers[i]).porosity,
                dirichlet: false,
            })
            .collect();
        let mut vertex_dirichlet = vec![false; nv];
        let mut vertex_neumann = vec![false; nv];
        let mut boundary_node_of_edge: HashMap<usize, usize> = HashMap::new();
        for &e in &boundary_edges {
            let EdgeInfo { a, b, ref cells } = edges[e];
            let kind = soup
                .boundary_kind(a, b)
                .ok_or_else(|| Error::InvalidMesh(format!("boundary edge ({a}, {b}) has no marker")))?;
            let dirichlet = kind == BoundaryKind::Dirichlet;
            if dirichlet {
                vertex_dirichlet[a] = true;
                vertex_dirichlet[b] = true;
            } else {
                vertex_neumann[a] = true;
                vertex_neumann[b] = true;
            }
            boundary_node_of_edge.insert(e, nodes.len());
            nodes.push(Node {
                kind: NodeKind::BoundaryEdge,
                center: 0.5 * (soup.vertices[a] + soup.vertices[b]),
                measure: 0.0,
                porosity: nodes[cells[0]].porosity,
                dirichlet,
            });
        }
        let dual_base = nodes.len();
        let mixed_corners = (0..nv).filter(|&v| vertex_dirichlet[v] && vertex_neumann[v]).count();
        for v in 0..nv {
            nodes.push(Node {
                kind: NodeKind::Dual,
                center: soup.vertices[v],
                measure: 0.0,
                porosity: 0.0,
                dirichlet: vertex_dirichlet[v],
            });
        }

        let mut diamonds = Vec::with_capacity(edges.len());
        let mut dual_phi_acc = vec![0.0; nv];
        let mut primal_piece_acc = vec![0.0; n_primal];
        for (e, info) in edges.iter().enumerate() {
            let k = info.cells[0];
            let (l, boundary) = match info.cells.get(1) {
                Some(&l) => (l, false),
                None => (boundary_node_of_edge[&e], true),
            };
            // (a, b) is counterclockwise for K, so a -> b leaves K on the left.
            let (ks, ls) = (dual_base + info.a, dual_base + info.b);
            let xk = nodes[k].center;
            let xl = nodes[l].center;
            let xks = nodes[ks].center;
            let xls = nodes[ls].center;
            let t = xl - xk;
            let ts = xls - xks;
            let c = cross(&t, &ts);
            let m_sigma = ts.norm();
            let m_sigma_star = t.norm();
            let sin_alpha = c.abs() / (m_sigma * m_sigma_star);
            if !(sin_alpha > 1e-10) {
                return Err(Error::InvalidMesh(format!("diamond of edge ({}, {}) is degenerate", info.a, info.b)));
            }
            let sgn = c.signum();
            let m_d = 0.5 * c.abs();
            // pieces on each side of the two diagonals
            let a_k = 0.5 * sgn * cross(&ts, &(xk - xks));
            let a_l = -0.5 * sgn * cross(&ts, &(xl - xks));
            let a_ks = -0.5 * sgn * cross(&t, &(xks - xk));
            let a_ls = 0.5 * sgn * cross(&t, &(xls - xk));
            let tol = -1e-12 * m_d;
            if a_k < tol || a_l < tol || a_ks < tol || a_ls < tol {
                return Err(Error::InvalidMesh(format!(
                    "diamond of edge ({}, {}) is not star-shaped around its centers",
                    info.a, info.b
                )));
            }
            primal_piece_acc[k] += a_k;
            if !boundary {
                primal_piece_acc[l] += a_l;
            }
            let rock_k = medium.rock_at(&xk);
            let rock_l = if boundary { rock_k } else { medium.rock_at(&xl) };
            let lambda = (rock_k.permeability * a_k + rock_l.permeability * a_l) / m_d;
            // split point of [x_K, x_L] by the primal edge line
            let lambda_split = if boundary { 1.0 } else { (cross(&ts, &(xks - xk)) / cross(&ts, &t)).clamp(0.0, 1.0) };
            let phi_mix = |a: f64| a * (lambda_split * rock_k.porosity + (1.0 - lambda_split) * rock_l.porosity);
            dual_phi_acc[info.a] += phi_mix(a_ks);
            dual_phi_acc[info.b] += phi_mix(a_ls);
            nodes[ks].measure += a_ks;
            nodes[ls].measure += a_ls;

            let n_kl = oriented_normal(&ts, &t);
            let n_ks_ls = oriented_normal(&t, &ts);
            let (tau_kl, tau_ks_ls, eta_d) = transmissibilities(m_sigma, m_sigma_star, sin_alpha, &n_kl, &n_ks_ls, &lambda)?;
            diamonds.push(Diamond {
                k,
                l,
                ks,
                ls,
                m_sigma,
                m_sigma_star,
                sin_alpha,
                m_d,
                n_kl,
                n_ks_ls,
                lambda,
                tau_kl,
                tau_ks_ls,
                eta_d,
                boundary,
            });
        }
        for (i, acc) in primal_piece_acc.iter().enumerate() {
            if (acc - areas[i]).abs() > 1e-10 * areas[i].abs().max(1e-300) {
                return Err(Error::InvalidMesh(format!("cell {i} is not star-shaped with respect to its barycenter")));
            }
        }
        for v in 0..nv {
            let node = &mut nodes[dual_base + v];
            if node.measure <= 0.0 {
                return Err(Error::InvalidMesh(format!("vertex {v} has an empty dual cell")));
            }
            node.porosity = dual_phi_acc[v] / node.measure;
        }

        let mut dof_of_node = vec![None; nodes.len()];
        let mut node_of_dof = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            if !n.dirichlet {
                dof_of_node[i] = Some(node_of_dof.len());
                node_of_dof.push(i);
            }
        }
        let mut node_diamonds = vec![Vec::new(); nodes.len()];
        for (d, dia) in diamonds.iter().enumerate() {
            for n in [dia.k, dia.l, dia.ks, dia.ls] {
                node_diamonds[n].push(d);
            }
        }
        let area = areas.iter().sum();
        Ok(Self { nodes, diamonds, n_primal, n_boundary, dof_of_node, node_of_dof, node_diamonds, mixed_corners, area })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn diamonds(&self) -> &[Diamond] {
        &self.diamonds
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn primal_count(&self) -> usize {
        self.n_primal
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.n_boundary
    }

    pub fn dual_count(&self) -> usize {
        self.nodes.len() - self.n_primal - self.n_boundary
    }

    pub fn dof_count(&self) -> usize {
        self.node_of_dof.len()
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    pub fn node_of_dof(&self, dof: usize) -> usize {
        self.node_of_dof[dof]
    }

    pub fn node_diamonds(&self, node: usize) -> &[usize] {
        &self.node_diamonds[node]
    }

    pub fn domain_area(&self) -> f64 {
        self.area
    }

    /// Node vector from dof values, zero on Dirichlet nodes.
    pub fn expand(&self, dofs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        for (d, &n) in self.node_of_dof.iter().enumerate() {
            out[n] = dofs[d];
        }
        out
    }

    pub fn restrict(&self, nodes: &[f64]) -> Vec<f64> {
        self.node_of_dof.iter().map(|&n| nodes[n]).collect()
    }

    pub fn field_from_dofs(&self, dofs: &[f64]) -> DiscreteField {
        DiscreteField { values: self.expand(dofs) }
    }

    /// Samples a function at every node center, Dirichlet nodes included.
    pub fn field_from_fn(&self, f: impl Fn(&Point) -> f64) -> DiscreteField {
        DiscreteField { values: self.nodes.iter().map(|n| f(&n.center)).collect() }
    }

    /// Diamond-wise constant gradient.
    pub fn discrete_gradient(&self, u: &DiscreteField) -> Vec<Point> {
        self.diamonds.iter().map(|d| diamond_gradient(d, d.delta_primal(&u.values), d.delta_dual(&u.values))).collect()
    }

    /// `(|u|_{1,T}, ‖u‖_{T,τ}, ‖u‖_{T,𝔇})`.
    pub fn norms(&self, u: &DiscreteField) -> (f64, f64, f64) {
        let l1 = self.l1_norm(&u.values);
        let tau = self.tau_norm(&u.values);
        let grad = self
            .diamonds
            .iter()
            .map(|d| d.m_d * diamond_gradient(d, d.delta_primal(&u.values), d.delta_dual(&u.values)).norm_squared())
            .sum::<f64>()
            .sqrt();
        (l1, tau, grad)
    }

    pub fn l1_norm(&self, u: &[f64]) -> f64 {
        0.5 * self
            .nodes
            .iter()
            .zip(u)
            .filter(|(n, _)| n.kind != NodeKind::BoundaryEdge)
            .map(|(n, v)| n.measure * v.abs())
            .sum::<f64>()
    }

    pub fn tau_norm(&self, u: &[f64]) -> f64 {
        self.diamonds
            .iter()
            .map(|d| d.tau_kl * d.delta_primal(u).powi(2) + d.tau_ks_ls * d.delta_dual(u).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Gram matrix of `‖·‖²_{T,τ}` on the degrees of freedom.
    pub fn tau_gram(&self) -> DMatrix<f64> {
        let n = self.dof_count();
        let mut a = DMatrix::zeros(n, n);
        let mut add_pair = |p: usize, q: usize, w: f64| {
            let (dp, dq) = (self.dof_of_node[p], self.dof_of_node[q]);
            if let Some(i) = dp {
                a[(i, i)] += w;
            }
            if let Some(j) = dq {
                a[(j, j)] += w;
            }
            if let (Some(i), Some(j)) = (dp, dq) {
                a[(i, j)] -= w;
                a[(j, i)] -= w;
            }
        };
        for d in &self.diamonds {
            add_pair(d.k, d.l, d.tau_kl);
            add_pair(d.ks, d.ls, d.tau_ks_ls);
        }
        a
    }

    /// Weights `w` with `|u|_{1,T} = Σ w_i |u_i|` over the degrees of freedom.
    pub fn l1_weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dof_count(),
            self.node_of_dof.iter().map(|&n| {
                let node = &self.nodes[n];
                if node.kind == NodeKind::BoundaryEdge {
                    0.0
                } else {
                    0.5 * node.measure
                }
            }),
        )
    }

    /// Residual row scaling `m_A φ_A`; boundary edges borrow the value of
    /// their interior neighbour.
    pub fn row_scales(&self) -> Vec<f64> {
        let mut scale: Vec<f64> = self.nodes.iter().map(|n| n.measure * n.porosity).collect();
        for d in self.diamonds.iter().filter(|d| d.boundary) {
            scale[d.l] = scale[d.k];
        }
        self.restrict(&scale)
    }

    pub fn stats(&self) -> MeshStats {
        let angles = self.diamonds.iter().map(|d| d.sin_alpha.clamp(-1.0, 1.0).asin().to_degrees());
        let (min_angle, max_angle) = angles.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let taus = self.diamonds.iter().flat_map(|d| [d.tau_kl, d.tau_ks_ls]);
        let (min_tau, max_tau) = taus.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let sum_kind = |kind: NodeKind| self.nodes.iter().filter(|n| n.kind == kind).map(|n| n.measure).sum();
        MeshStats {
            primal_cells: self.n_primal,
            boundary_edges: self.n_boundary,
            dual_cells: self.dual_count(),
            diamonds: self.diamonds.len(),
            dofs: self.dof_count(),
            dirichlet_nodes: self.nodes.iter().filter(|n| n.dirichlet).count(),
            mixed_corner_vertices: self.mixed_corners,
            min_angle_deg: min_angle,
            max_angle_deg: max_angle,
            min_tau,
            max_tau,
            max_abs_eta: self.diamonds.iter().map(|d| d.eta_d.abs()).fold(0.0, f64::max),
            total_primal_measure: sum_kind(NodeKind::Primal),
            total_dual_measure: sum_kind(NodeKind::Dual),
        }
    }
}

/// `∇^D u = (δ_KL u / m_σ* n_KL + δ_K*L* u / m_σ n_K*L*) / sin α_D`.
pub fn diamond_gradient(d: &Diamond, delta_primal: f64, delta_dual: f64) -> Point {
    (d.n_kl * (delta_primal / d.m_sigma_star) + d.n_ks_ls * (delta_dual / d.m_sigma)) / d.sin_alpha
}

impl PolygonSoup {
    pub fn with_sides(mut self, sides: &DirichletSides) -> Self {
        self.mark_sides(sides);
        self
    }
}

/// Default seed of the vertex perturbation pattern.
pub const DISTORTION_SEED: u64 = 0x0dd7_f00d;

/// Quadrilateral grid of the unit square with boundary edges unmarked.
pub fn structured_quads(nx: usize, ny: usize, distortion: f64) -> Result<PolygonSoup> {
    if nx < 1 || ny < 1 {
        return Err(Error::InvalidMesh("grid needs at least one cell per direction".into()));
    }
    if !(0.0..0.5).contains(&distortion) {
        return Err(Error::InvalidMesh(format!("distortion {distortion} outside [0, 0.5)")));
    }
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(DISTORTION_SEED);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let mut p = Point::new(i as f64 * hx, j as f64 * hy);
            let (dx, dy): (f64, f64) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            if distortion > 0.0 && i > 0 && i < nx && j > 0 && j < ny {
                p += Point::new(dx * distortion * hx, dy * distortion * hy);
            }
            vertices.push(p);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Ok(PolygonSoup { vertices, cells, boundary: HashMap::new() })
}
