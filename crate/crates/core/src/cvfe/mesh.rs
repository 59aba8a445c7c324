//! Conforming triangulations with P1 control volumes.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{centroid, signed_area, Point, Tensor};
use crate::medium::Medium;
use crate::meshio::{BoundaryKind, DirichletSides, PolygonSoup};

/// Local vertex pairs of a triangle, in the order of [`Triangle::coeffs`].
pub const PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// How each square of a structured grid is cut into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TriangleSplit {
    /// Two right triangles per square along the `(i, j) - (i+1, j+1)` diagonal.
    Diagonal,
    /// Four triangles around an added centre vertex. On square cells they are
    /// right isosceles and all stiffness coefficients are non-negative for
    /// isotropic permeability; elongated cells make the centre angle obtuse.
    Acute,
}

impl TriangleSplit {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "diagonal" => Some(Self::Diagonal),
            "acute" => Some(Self::Acute),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Diagonal => "diagonal",
            Self::Acute => "acute",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Triangle {
    /// Counterclockwise vertex indices.
    pub v: [usize; 3],
    pub area: f64,
    pub barycenter: Point,
    /// Gradients of the three P1 shape functions.
    pub grads: [Point; 3],
    pub lambda: Tensor,
    pub porosity: f64,
    /// Stiffness coefficients `Λ^T_KL` for the pairs in [`PAIRS`].
    pub coeffs: [f64; 3],
}

/// Constant gradients of the P1 shape functions of a triangle.
pub fn p1_gradients(a: &Point, b: &Point, c: &Point) -> [Point; 3] {
    let two_a = (b - a).perp(&(c - a));
    let g = |p: &Point, q: &Point| Point::new(p.y - q.y, q.x - p.x) / two_a;
    [g(b, c), g(c, a), g(a, b)]
}

/// `Λ^T_KL = -|T| Λ ∇φ_K · ∇φ_L` for the pairs in [`PAIRS`].
pub fn stiffness_coeffs(a: &Point, b: &Point, c: &Point, lambda: &Tensor) -> Result<[f64; 3]> {
    let area = 0.5 * (b - a).perp(&(c - a)).abs();
    if !(area > 1e-300) {
        return Err(Error::InvalidMesh("degenerate triangle".into()));
    }
    let g = p1_gradients(a, b, c);
    let k = PAIRS.map(|(i, j)| -area * (lambda * g[i]).dot(&g[j]));
    // right angles produce roundoff-sized values of either sign
    let scale = k.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(k.map(|x| if x.abs() <= 64.0 * f64::EPSILON * scale { 0.0 } else { x }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CvfeStats {
    pub vertices: usize,
    pub triangles: usize,
    pub dofs: usize,
    pub dirichlet_vertices: usize,
    pub negative_coefficients: usize,
    pub min_coefficient: f64,
    pub max_coefficient: f64,
    pub total_dual_measure: f64,
}

#[derive(Debug, Clone)]
pub struct CvfeMesh {
    vertices: Vec<Point>,
    dirichlet: Vec<bool>,
    triangles: Vec<Triangle>,
    measure: Vec<f64>,
    porosity: Vec<f64>,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
    vertex_triangles: Vec<Vec<usize>>,
    area: f64,
}

impl CvfeMesh {
    pub fn build_triangulation(nx: usize, ny: usize, split: TriangleSplit, sides: &DirichletSides, medium: &Medium) -> Result<Self> {
        let mut soup = structured_triangles(nx, ny, split)?;
        soup.mark_sides(sides);
        Self::from_soup(&soup, medium)
    }

    pub fn from_soup(soup: &PolygonSoup, medium: &Medium) -> Result<Self> {
        let nv = soup.vertices.len();
        let mut triangles = Vec::with_capacity(soup.cells.len());
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for (ti, c) in soup.cells.iter().enumerate() {
            if c.len() != 3 {
                return Err(Error::InvalidMesh(format!("cell {ti} is not a triangle")));
            }
            let mut v = [c[0], c[1], c[2]];
            let pts = v.map(|i| soup.vertices[i]);
            let sa = signed_area(&pts);
            if sa.abs() <= 1e-14 * (pts[1] - pts[0]).norm_squared().max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidMesh(format!("triangle {ti} is degenerate")));
            }
            if sa < 0.0 {
                v.swap(1, 2);
            }
            for (i, j) in PAIRS {
                let key = (v[i].min(v[j]), v[i].max(v[j]));
                *edge_count.entry(key).or_default() += 1;
            }
            let [a, b, cc] = v.map(|i| soup.vertices[i]);
            let barycenter = (a + b + cc) / 3.0;
            let rock = medium.rock_at(&barycenter);
            triangles.push(Triangle {
                v,
                area: sa.abs(),
                barycenter,
                grads: p1_gradients(&a, &b, &cc),
                lambda: rock.permeability,
                porosity: rock.porosity,
                coeffs: stiffness_coeffs(&a, &b, &cc, &rock.permeability)?,
            });
        }
        if let Some((e, _)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!("edge {e:?} shared by more than two triangles")));
        }
        let mut dirichlet = vec![false; nv];
        for (&(a, b), &count) in &edge_count {
            if count == 1 {
                match soup.boundary_kind(a, b) {
                    Some(BoundaryKind::Dirichlet) => {
                        dirichlet[a] = true;
                        dirichlet[b] = true;
                    }
                    Some(BoundaryKind::Neumann) => {}
                    None => return Err(Error::InvalidMesh(format!("boundary edge ({a}, {b}) has no marker"))),
                }
            }
        }

        let mut measure = vec![0.0; nv];
        let mut phi_acc = vec![0.0; nv];
        let mut vertex_triangles = vec![Vec::new(); nv];
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (l, m) = ((k + 1) % 3, (k + 2) % 3);
                let xk = soup.vertices[t.v[k]];
                let piece = [
                    xk,
                    0.5 * (xk + soup.vertices[t.v[l]]),
                    t.barycenter,
                    0.5 * (xk + soup.vertices[t.v[m]]),
                ];
                let a = signed_area(&piece);
                measure[t.v[k]] += a;
                phi_acc[t.v[k]] += a * t.porosity;
                vertex_triangles[t.v[k]].push(ti);
            }
        }
        if let Some(v) = (0..nv).find(|&v| vertex_triangles[v].is_empty()) {
            return Err(Error::InvalidMesh(format!("vertex {v} belongs to no triangle")));
        }
        let porosity = phi_acc.iter().zip(&measure).map(|(p, m)| p / m).collect();
        let mut dof_of_vertex = vec![None; nv];
        let mut vertex_of_dof = Vec::new();
        for v in 0..nv {
            if !dirichlet[v] {
                dof_of_vertex[v] = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        let area = triangles.iter().map(|t| t.area).sum();
        Ok(Self {
            vertices: soup.vertices.clone(),
            dirichlet,
            triangles,
            measure,
            porosity,
            dof_of_vertex,
            vertex_of_dof,
            vertex_triangles,
            area,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn is_dirichlet(&self, v: usize) -> bool {
        self.dirichlet[v]
    }

    /// Dual volume `m_{A_K}`.
    pub fn measure(&self, v: usize) -> f64 {
        self.measure[v]
    }

    pub fn porosity(&self, v: usize) -> f64 {
        self.porosity[v]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    pub fn dof_count(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn vertex_of_dof(&self, d: usize) -> usize {
        self.vertex_of_dof[d]
    }

    pub fn domain_area(&self) -> f64 {
        self.area
    }

    pub fn expand(&self, dofs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices.len()];
        for (d, &v) in self.vertex_of_dof.iter().enumerate() {
            out[v] = dofs[d];
        }
        out
    }

    /// `‖f‖_{V_T}` for vertex values.
    pub fn p1_norm(&self, f: &[f64]) -> f64 {
        self.triangles
            .iter()
            .map(|t| t.area * (0..3).map(|k| t.grads[k] * f[t.v[k]]).sum::<Point>().norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ_T Σ_σ c(Λ^T_KL) (δ_KL f)²` for vertex values.
    pub fn edge_form(&self, f: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| PAIRS.iter().zip(&t.coeffs).map(move |(&(i, j), &c)| (t.v[i], t.v[j], c)))
            .map(|(k, l, c)| weight(c) * (f[l] - f[k]).powi(2))
            .sum()
    }

    /// Gram matrix of `‖·‖²_{V_T}` on the dofs.
    pub fn p1_gram(&self) -> DMatrix<f64> {
        let n = self.dof_count();
        let mut a = DMatrix::zeros(n, n);
        for t in &self.triangles {
            for i in 0..3 {
                for j in 0..3 {
                    if let (Some(di), Some(dj)) = (self.dof_of_vertex[t.v[i]], self.dof_of_vertex[t.v[j]]) {
                        a[(di, dj)] += t.area * t.grads[i].dot(&t.grads[j]);
                    }
                }
            }
        }
        a
    }

    pub fn stats(&self) -> CvfeStats {
        let coeffs = self.triangles.iter().flat_map(|t| t.coeffs);
        let (lo, hi) = coeffs.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c), b.max(c)));
        CvfeStats {
            vertices: self.vertices.len(),
            triangles: self.triangles.len(),
            dofs: self.dof_count(),
            dirichlet_vertices: self.dirichlet.iter().filter(|&&d| d).count(),
            negative_coefficients: coeffs.filter(|&c| c < 0.0).count(),
            min_coefficient: lo,
            max_coefficient: hi,
            total_dual_measure: self.measure.iter().sum(),
        }
    }
}

/// Structured triangulation of the unit square with boundary edges unmarked.
pub fn structured_triangles(nx: usize, ny: usize, split: TriangleSplit) -> Result<PolygonSoup> {
    if nx < 1 || ny < 1 {
        return Err(Error::InvalidMesh("grid needs at least one cell per direction".into()));
    }
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut vertices: Vec<Point> = (0..=ny)
        .flat_map(|j| (0..=nx).map(move |i| Point::new(i as f64 * hx, j as f64 * hy)))
        .collect();
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            match split {
                TriangleSplit::Diagonal => {
                    cells.push(vec![a, b, c]);
                    cells.push(vec![a, c, d]);
                }
                TriangleSplit::Acute => {
                    let e = vertices.len();
                    vertices.push(centroid(&[vertices[a], vertices[b], vertices[c], vertices[d]]));
                    cells.extend([vec![a, b, e], vec![b, c, e], vec![c, d, e], vec![d, a, e]]);
                }
            }
        }
    }
    Ok(PolygonSoup { vertices, cells, boundary: HashMap::new() })
}
