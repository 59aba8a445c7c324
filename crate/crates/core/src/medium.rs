//! Piecewise-constant rock properties (porosity and permeability tensor).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{is_spd, Point, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rock {
    pub porosity: f64,
    pub permeability: Tensor,
}

impl Rock {
    pub fn isotropic(porosity: f64, k: f64) -> Self {
        Self { porosity, permeability: Tensor::identity() * k }
    }
}

/// Axis-aligned rectangle assigning a rock type to everything whose
/// reference point lies inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub rock: usize,
}

impl Region {
    fn contains(&self, p: &Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

/// Background rock plus optional rectangular inclusions; later regions win.
#[derive(Debug, Clone)]
pub struct Medium {
    rocks: Vec<Rock>,
    regions: Vec<Region>,
}

impl Medium {
    pub fn homogeneous(rock: Rock) -> Result<Self> {
        Self::new(vec![rock], vec![])
    }

    pub fn new(rocks: Vec<Rock>, regions: Vec<Region>) -> Result<Self> {
        if rocks.is_empty() {
            return Err(Error::InvalidParams("medium needs at least one rock type".into()));
        }
        for (i, r) in rocks.iter().enumerate() {
            if !(r.porosity > 0.0 && r.porosity <= 1.0) {
                return Err(Error::InvalidParams(format!("rock {i}: porosity {} outside (0, 1]", r.porosity)));
            }
            if !is_spd(&r.permeability) {
                return Err(Error::InvalidParams(format!("rock {i}: permeability tensor is not SPD")));
            }
        }
        if let Some(bad) = regions.iter().find(|g| g.rock >= rocks.len()) {
            return Err(Error::InvalidParams(format!("region references unknown rock {}", bad.rock)));
        }
        Ok(Self { rocks, regions })
    }

    pub fn rock_index_at(&self, p: &Point) -> usize {
        self.regions.iter().rev().find(|g| g.contains(p)).map_or(0, |g| g.rock)
    }

    pub fn rock_at(&self, p: &Point) -> &Rock {
        &self.rocks[self.rock_index_at(p)]
    }

    pub fn rocks(&self) -> &[Rock] {
        &self.rocks
    }

    /// `(phi0, phi1)` over all rock types.
    pub fn porosity_bounds(&self) -> (f64, f64) {
        self.rocks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.porosity), hi.max(r.porosity))
        })
    }

    /// Ellipticity bounds `(Λ_lower, Λ_upper)` over all rock types.
    pub fn permeability_bounds(&self) -> (f64, f64) {
        self.rocks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            let ev = r.permeability.symmetric_eigenvalues();
            (lo.min(ev.min()), hi.max(ev.max()))
        })
    }
}
