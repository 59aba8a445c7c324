//! Polygon-soup meshes and their plain-text file format.
//!
//! ```text
//! # comments start with '#'
//! vertices 4
//! 0 0
//! 1 0
//! 1 1
//! 0 1
//! cells 1
//! 4 0 1 2 3
//! boundary 4
//! 0 1 D
//! 1 2 N
//! 2 3 N
//! 3 0 N
//! ```
//!
//! Cells list their vertex indices (any orientation). Every boundary edge
//! carries a marker, `D` (Dirichlet) or `N` (Neumann). Triangle meshes for
//! the CVFE backend use the same format with three vertices per cell.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Selects which sides of the unit square carry homogeneous Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DirichletSides {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl DirichletSides {
    pub fn all() -> Self {
        Self { left: true, right: true, bottom: true, top: true }
    }

    pub fn left_only() -> Self {
        Self { left: true, ..Self::default() }
    }

    pub fn any(&self) -> bool {
        self.left || self.right || self.bottom || self.top
    }

    /// Parses a comma separated list such as `left,bottom` (or `all`).
    pub fn parse(text: &str) -> Option<Self> {
        let mut sides = Self::default();
        for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "left" => sides.left = true,
                "right" => sides.right = true,
                "bottom" => sides.bottom = true,
                "top" => sides.top = true,
                "all" => sides = Self::all(),
                "none" => {}
                _ => return None,
            }
        }
        Some(sides)
    }

    /// Classifies an edge of the unit square boundary.
    pub fn classify(&self, a: &Point, b: &Point) -> BoundaryKind {
        const TOL: f64 = 1e-12;
        let on = |f: fn(&Point) -> f64, v: f64| (f(a) - v).abs() < TOL && (f(b) - v).abs() < TOL;
        let dirichlet = (self.left && on(|p| p.x, 0.0))
            || (self.right && on(|p| p.x, 1.0))
            || (self.bottom && on(|p| p.y, 0.0))
            || (self.top && on(|p| p.y, 1.0));
        if dirichlet {
            BoundaryKind::Dirichlet
        } else {
            BoundaryKind::Neumann
        }
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Vertices, polygonal cells and boundary-edge markers.
#[derive(Debug, Clone, Default)]
pub struct PolygonSoup {
    pub vertices: Vec<Point>,
    pub cells: Vec<Vec<usize>>,
    pub boundary: HashMap<(usize, usize), BoundaryKind>,
}

impl PolygonSoup {
    pub fn boundary_kind(&self, a: usize, b: usize) -> Option<BoundaryKind> {
        self.boundary.get(&edge_key(a, b)).copied()
    }

    pub fn mark(&mut self, a: usize, b: usize, kind: BoundaryKind) {
        self.boundary.insert(edge_key(a, b), kind);
    }

    /// Edges that belong to exactly one cell.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for cell in &self.cells {
            for i in 0..cell.len() {
                *count.entry(edge_key(cell[i], cell[(i + 1) % cell.len()])).or_default() += 1;
            }
        }
        let mut edges: Vec<_> = count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        edges.sort_unstable();
        edges
    }

    /// Marks every boundary edge of a unit-square mesh from the side flags.
    pub fn mark_sides(&mut self, sides: &DirichletSides) {
        for (a, b) in self.boundary_edges() {
            let kind = sides.classify(&self.vertices[a], &self.vertices[b]);
            self.mark(a, b, kind);
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# twophase polygon mesh\n");
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:.17e} {:.17e}", v.x, v.y);
        }
        let _ = writeln!(out, "cells {}", self.cells.len());
        for c in &self.cells {
            let _ = write!(out, "{}", c.len());
            for v in c {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        let mut edges: Vec<_> = self.boundary.iter().collect();
        edges.sort_by_key(|(k, _)| **k);
        let _ = writeln!(out, "boundary {}", edges.len());
        for ((a, b), kind) in edges {
            let tag = match kind {
                BoundaryKind::Dirichlet => 'D',
                BoundaryKind::Neumann => 'N',
            };
            let _ = writeln!(out, "{a} {b} {tag}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let body: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let err = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let mut pos = 0;
        let mut last = 0;
        let mut next = |what: &str| -> Result<(usize, &str)> {
            let item = body.get(pos).copied().ok_or_else(|| err(last, &format!("unexpected end of file in {what}")))?;
            pos += 1;
            last = item.0;
            Ok(item)
        };
        let count_of = |(ln, l): (usize, &str), name: &str| -> Result<usize> {
            let mut it = l.split_whitespace();
            if it.next() != Some(name) {
                return Err(err(ln, &format!("expected `{name} <count>`")));
            }
            it.next().and_then(|t| t.parse().ok()).ok_or_else(|| err(ln, "bad count"))
        };

        let mut soup = PolygonSoup::default();
        let nv = count_of(next("vertices header")?, "vertices")?;
        for _ in 0..nv {
            let (ln, l) = next("vertices")?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(ln, "bad vertex coordinates"))?;
            if xs.len() != 2 {
                return Err(err(ln, "vertex needs two coordinates"));
            }
            soup.vertices.push(Point::new(xs[0], xs[1]));
        }
        let nc = count_of(next("cells header")?, "cells")?;
        for _ in 0..nc {
            let (ln, l) = next("cells")?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(ln, "bad cell entry"))?;
            if ids.is_empty() || ids[0] < 3 || ids.len() != ids[0] + 1 {
                return Err(err(ln, "cell must be `<k> v1 .. vk` with k >= 3"));
            }
            if ids[1..].iter().any(|&v| v >= nv) {
                return Err(err(ln, "cell references unknown vertex"));
            }
            soup.cells.push(ids[1..].to_vec());
        }
        let (header_line, header) = next("boundary header")?;
        let nb = count_of((header_line, header), "boundary")?;
        let mut end_line = header_line;
        for _ in 0..nb {
            let (ln, l) = next("boundary")?;
            end_line = ln;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(err(ln, "boundary edge must be `a b D|N`"));
            }
            let a: usize = toks[0].parse().map_err(|_| err(ln, "bad vertex index"))?;
            let b: usize = toks[1].parse().map_err(|_| err(ln, "bad vertex index"))?;
            let kind = match toks[2] {
                "D" => BoundaryKind::Dirichlet,
                "N" => BoundaryKind::Neumann,
                _ => return Err(err(ln, "marker must be D or N")),
            };
            if a >= nv || b >= nv {
                return Err(err(ln, "boundary edge references unknown vertex"));
            }
            soup.mark(a, b, kind);
        }
        if let Ok((ln, _)) = next("trailer") {
            return Err(err(ln, "trailing content after boundary section"));
        }
        for (a, b) in soup.boundary_edges() {
            if soup.boundary_kind(a, b).is_none() {
                return Err(err(end_line, &format!("boundary edge ({a}, {b}) has no marker")));
            }
        }
        Ok(soup)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
