//! Case configuration files.
//!
//! Cases are TOML documents with the sections below; keys marked required
//! have no default.
//!
//! ```toml
//! [mesh]
//! backend = "ddfv"        # required: ddfv | cvfe
//! nx = 8                  # required
//! ny = 8                  # required
//! distortion = 0.0        # ddfv: interior vertex jitter, fraction of h
//! split = "diagonal"      # cvfe: diagonal | acute
//! dirichlet = "left"      # comma separated sides, `all` or `none`
//! # file = "mesh.txt"     # polygon soup instead of the structured grid
//!
//! [fluid]                 # all optional
//! capillary = "linear"    # linear | smooth
//! pc_slope = 1.0
//! pc_amplitude = 0.0      # smooth law only
//! pc_sharpness = 0.0
//! mu_g = 0.5
//! mu_w = 1.0
//! rho0 = 0.5
//! rho1 = 1.5
//! rho_steepness_g = 0.5
//! rho_steepness_w = 0.05
//! mobility = "corey"      # corey | constant
//! mobility_exponent = 2.0
//! quadrature_points = 32
//!
//! [[rock]]                # required, first entry is the background
//! porosity = 0.2
//! permeability = [1.0, 0.0, 1.0]   # kxx, kxy, kyy
//!
//! [[region]]              # optional rectangular inclusions
//! x0 = 0.5
//! x1 = 1.0
//! y0 = 0.0
//! y1 = 0.5
//! rock = 1
//!
//! [time]
//! dt = 0.01               # required
//! t_final = 0.1           # required
//!
//! [solver]
//! tol = 1e-9
//! max_iter = 40
//! max_halvings = 20
//! polish = 0             # extra Newton steps past tol while converging
//! eps = [0.1, 0.01, 0.0]  # explicit ladders, default geometric
//! eta = [0.01, 0.0]
//! max_refinements = 5
//!
//! [initial]
//! profile = "drainage"    # zero | uniform | drainage
//! p_g = 0.8
//! p_w = 0.0
//! front = 0.5             # drainage: pressures applied where x >= front
//!
//! [verify]
//! seed = 7
//! samples = 10000
//! consistency_samples = 100
//! norm_samples = 200
//! pressure_range = 3.0
//!
//! [output]
//! dir = "out"
//! fields = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cvfe::mesh::structured_triangles;
use crate::cvfe::{CvfeMesh, CvfeScheme, TriangleSplit};
use crate::ddfv::mesh::structured_quads;
use crate::ddfv::{DdfvMesh, DdfvScheme};
use crate::error::{Error, Result};
use crate::fluid::{CapillaryLaw, FluidModel, FluidParams, MobilityLaw};
use crate::geometry::Tensor;
use crate::medium::{Medium, Region, Rock};
use crate::meshio::{DirichletSides, PolygonSoup};
use crate::solver::backend::SchemeBackend;
use crate::solver::continuation::Ladder;
use crate::solver::newton::NewtonOptions;
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Ddfv,
    Cvfe,
}

impl BackendKind {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "ddfv" => Some(Self::Ddfv),
            "cvfe" => Some(Self::Cvfe),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ddfv => "ddfv",
            Self::Cvfe => "cvfe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialProfile {
    Zero,
    Uniform,
    Drainage,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    backend: Option<BackendKind>,
    nx: Option<usize>,
    ny: Option<usize>,
    #[serde(default)]
    distortion: f64,
    split: Option<String>,
    dirichlet: Option<String>,
    file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFluid {
    capillary: Option<String>,
    pc_slope: Option<f64>,
    pc_amplitude: Option<f64>,
    pc_sharpness: Option<f64>,
    mu_g: Option<f64>,
    mu_w: Option<f64>,
    rho0: Option<f64>,
    rho1: Option<f64>,
    rho_steepness_g: Option<f64>,
    rho_steepness_w: Option<f64>,
    mobility: Option<String>,
    mobility_exponent: Option<f64>,
    quadrature_points: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRock {
    porosity: Option<f64>,
    permeability: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: Option<f64>,
    t_final: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: Option<f64>,
    max_iter: Option<usize>,
    max_halvings: Option<usize>,
    polish: Option<usize>,
    eps: Option<Vec<f64>>,
    eta: Option<Vec<f64>>,
    max_refinements: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    profile: Option<InitialProfile>,
    p_g: Option<f64>,
    p_w: Option<f64>,
    front: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    seed: Option<u64>,
    samples: Option<usize>,
    consistency_samples: Option<usize>,
    norm_samples: Option<usize>,
    pressure_range: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    fields: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    mesh: Option<RawMesh>,
    #[serde(default)]
    fluid: RawFluid,
    #[serde(default)]
    rock: Vec<RawRock>,
    #[serde(default)]
    region: Vec<Region>,
    time: Option<RawTime>,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    verify: RawVerify,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshConfig {
    pub backend: BackendKind,
    pub nx: usize,
    pub ny: usize,
    pub distortion: f64,
    pub split: TriangleSplit,
    #[serde(skip)]
    pub dirichlet: DirichletSides,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialConfig {
    pub profile: InitialProfile,
    pub p_g: f64,
    pub p_w: f64,
    pub front: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub samples: usize,
    pub consistency_samples: usize,
    pub norm_samples: usize,
    pub pressure_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub fields: bool,
}

/// Validated case description.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub mesh: MeshConfig,
    pub fluid: FluidParams,
    pub rocks: Vec<Rock>,
    pub regions: Vec<Region>,
    pub dt: f64,
    pub t_final: f64,
    pub newton: NewtonOptions,
    pub ladder: Ladder,
    pub initial: InitialConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

fn required<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| Error::MissingKey(key.to_string()))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, for anchoring validation errors.
fn key_line(text: &str, section: &str, key: &str) -> usize {
    key_line_nth(text, section, 0, key)
}

/// As [`key_line`] for the `nth` table of an array of tables.
fn key_line_nth(text: &str, section: &str, nth: usize, key: &str) -> usize {
    let mut in_section = false;
    let mut seen = 0;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            in_section = t.trim_matches(|c| c == '[' || c == ']').trim() == section;
            if in_section {
                seen += 1;
                in_section = seen == nth + 1;
            }
        } else if in_section && t.split('=').next().map(str::trim) == Some(key) {
            return i + 1;
        }
    }
    0
}

impl CaseConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawCase = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            msg: e.message().to_string(),
        })?;
        let invalid = |section: &str, key: &str, msg: String| Error::Parse { line: key_line(text, section, key), msg };

        let m = required(raw.mesh, "mesh")?;
        let split = match m.split.as_deref() {
            None => TriangleSplit::Diagonal,
            Some(s) => TriangleSplit::parse(s).ok_or_else(|| invalid("mesh", "split", format!("unknown split `{s}`")))?,
        };
        let dirichlet = match m.dirichlet.as_deref() {
            None => DirichletSides::left_only(),
            Some(s) => DirichletSides::parse(s).ok_or_else(|| invalid("mesh", "dirichlet", format!("unknown side list `{s}`")))?,
        };
        let mesh = MeshConfig {
            backend: required(m.backend, "mesh.backend")?,
            nx: required(m.nx, "mesh.nx")?,
            ny: required(m.ny, "mesh.ny")?,
            distortion: m.distortion,
            split,
            dirichlet,
            file: m.file,
        };
        if !(0.0..0.5).contains(&mesh.distortion) {
            return Err(invalid("mesh", "distortion", "distortion must lie in [0, 0.5)".into()));
        }

        let fluid = fluid_params(&raw.fluid).map_err(|(key, msg)| invalid("fluid", key, msg))?;
        FluidModel::new(fluid).map_err(|e| invalid("fluid", "", e.to_string()))?;

        if raw.rock.is_empty() {
            return Err(Error::MissingKey("rock".into()));
        }
        let mut rocks = Vec::with_capacity(raw.rock.len());
        for (i, r) in raw.rock.iter().enumerate() {
            let porosity = required(r.porosity, &format!("rock[{i}].porosity"))?;
            let [kxx, kxy, kyy] = required(r.permeability, &format!("rock[{i}].permeability"))?;
            let rock = Rock { porosity, permeability: Tensor::new(kxx, kxy, kxy, kyy) };
            if let Err(e) = Medium::homogeneous(rock) {
                let key = if porosity > 0.0 && porosity <= 1.0 { "permeability" } else { "porosity" };
                return Err(Error::Parse { line: key_line_nth(text, "rock", i, key), msg: format!("rock {i}: {e}") });
            }
            rocks.push(rock);
        }
        Medium::new(rocks.clone(), raw.region.clone()).map_err(|e| invalid("region", "rock", e.to_string()))?;

        let t = required(raw.time, "time")?;
        let dt = required(t.dt, "time.dt")?;
        let t_final = required(t.t_final, "time.t_final")?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("time", "dt", format!("dt = {dt} must be positive")));
        }
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(invalid("time", "t_final", format!("t_final = {t_final} must be non-negative")));
        }

        let s = raw.solver;
        let defaults = NewtonOptions::default();
        let newton = NewtonOptions {
            tol: s.tol.unwrap_or(defaults.tol),
            max_iter: s.max_iter.unwrap_or(defaults.max_iter),
            max_halvings: s.max_halvings.unwrap_or(defaults.max_halvings),
            polish: s.polish.unwrap_or(defaults.polish),
        };
        if !(newton.tol > 0.0) {
            return Err(invalid("solver", "tol", "tol must be positive".into()));
        }
        let base = Ladder::default();
        let ladder = Ladder {
            eps: s.eps.unwrap_or(base.eps),
            eta: s.eta.unwrap_or(base.eta),
            max_refinements: s.max_refinements.unwrap_or(base.max_refinements),
        };
        ladder.validate().map_err(|e| invalid("solver", "eps", e.to_string()))?;

        let i = raw.initial;
        let initial = InitialConfig {
            profile: i.profile.unwrap_or(InitialProfile::Zero),
            p_g: i.p_g.unwrap_or(0.0),
            p_w: i.p_w.unwrap_or(0.0),
            front: i.front.unwrap_or(0.5),
        };
        let v = raw.verify;
        let verify = VerifyConfig {
            seed: v.seed.unwrap_or(7),
            samples: v.samples.unwrap_or(10_000),
            consistency_samples: v.consistency_samples.unwrap_or(100),
            norm_samples: v.norm_samples.unwrap_or(200),
            pressure_range: v.pressure_range.unwrap_or(3.0),
        };
        if !(verify.pressure_range > 0.0) {
            return Err(invalid("verify", "pressure_range", "pressure_range must be positive".into()));
        }
        let output = OutputConfig {
            dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
            fields: raw.output.fields.unwrap_or(true),
        };
        Ok(Self { mesh, fluid, rocks, regions: raw.region, dt, t_final, newton, ladder, initial, verify, output })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        // mesh files are relative to the configuration
        if let (Some(f), Some(dir)) = (&cfg.mesh.file, path.parent()) {
            if f.is_relative() {
                cfg.mesh.file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn medium(&self) -> Result<Medium> {
        Medium::new(self.rocks.clone(), self.regions.clone())
    }

    pub fn fluid_model(&self) -> Result<FluidModel> {
        FluidModel::new(self.fluid)
    }

    /// The configured mesh file, or the structured grid with boundary markers.
    pub fn mesh_soup(&self) -> Result<PolygonSoup> {
        if let Some(f) = &self.mesh.file {
            return PolygonSoup::read(f);
        }
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let mut soup = match self.mesh.backend {
            BackendKind::Ddfv => structured_quads(nx, ny, self.mesh.distortion)?,
            BackendKind::Cvfe => structured_triangles(nx, ny, self.mesh.split)?,
        };
        soup.mark_sides(&self.mesh.dirichlet);
        Ok(soup)
    }

    pub fn build(&self) -> Result<Discretization> {
        let medium = self.medium()?;
        let fluid = self.fluid_model()?;
        let soup = self.mesh_soup()?;
        Ok(match self.mesh.backend {
            BackendKind::Ddfv => Discretization::Ddfv(DdfvScheme::new(DdfvMesh::from_soup(&soup, &medium)?, fluid, self.dt)?),
            BackendKind::Cvfe => Discretization::Cvfe(CvfeScheme::new(CvfeMesh::from_soup(&soup, &medium)?, fluid, self.dt)?),
        })
    }

    pub fn initial_state(&self, backend: &dyn SchemeBackend) -> State {
        initial_state(&self.initial, backend)
    }
}

fn fluid_params(r: &RawFluid) -> std::result::Result<FluidParams, (&'static str, String)> {
    let d = FluidParams::default();
    let slope = r.pc_slope.unwrap_or(1.0);
    let capillary = match r.capillary.as_deref().unwrap_or("linear") {
        "linear" => CapillaryLaw::Linear { slope },
        "smooth" => CapillaryLaw::Smooth {
            slope,
            amplitude: r.pc_amplitude.unwrap_or(0.0),
            sharpness: r.pc_sharpness.unwrap_or(0.0),
        },
        other => return Err(("capillary", format!("unknown capillary law `{other}`"))),
    };
    let mobility = match r.mobility.as_deref().unwrap_or("corey") {
        "corey" => MobilityLaw::Corey { exponent: r.mobility_exponent.unwrap_or(2.0) },
        "constant" => MobilityLaw::Constant,
        other => return Err(("mobility", format!("unknown mobility law `{other}`"))),
    };
    Ok(FluidParams {
        capillary,
        mu_g: r.mu_g.unwrap_or(d.mu_g),
        mu_w: r.mu_w.unwrap_or(d.mu_w),
        rho0: r.rho0.unwrap_or(d.rho0),
        rho1: r.rho1.unwrap_or(d.rho1),
        rho_steepness_g: r.rho_steepness_g.unwrap_or(d.rho_steepness_g),
        rho_steepness_w: r.rho_steepness_w.unwrap_or(d.rho_steepness_w),
        mobility,
        quadrature_points: r.quadrature_points.unwrap_or(d.quadrature_points),
    })
}

/// Pressures at every dof for an initial profile.
pub fn initial_state(cfg: &InitialConfig, backend: &dyn SchemeBackend) -> State {
    let pos = backend.dof_positions();
    let pick = |on: bool, v: f64| if on { v } else { 0.0 };
    let (p_g, p_w): (Vec<f64>, Vec<f64>) = pos
        .iter()
        .map(|x| {
            let on = match cfg.profile {
                InitialProfile::Zero => false,
                InitialProfile::Uniform => true,
                InitialProfile::Drainage => x.x >= cfg.front,
            };
            (pick(on, cfg.p_g), pick(on, cfg.p_w))
        })
        .unzip();
    State::new(backend.fluid(), p_g, p_w)
}

/// A space discretization selected by the configuration.
#[derive(Debug, Clone)]
pub enum Discretization {
    Ddfv(DdfvScheme),
    Cvfe(CvfeScheme),
}

impl Discretization {
    pub fn backend(&self) -> &dyn SchemeBackend {
        match self {
            Self::Ddfv(s) => s,
            Self::Cvfe(s) => s,
        }
    }

    /// Mesh statistics as JSON.
    pub fn stats(&self) -> serde_json::Value {
        let v = match self {
            Self::Ddfv(s) => serde_json::to_value(s.mesh().stats()),
            Self::Cvfe(s) => serde_json::to_value(s.mesh().stats()),
        };
        v.unwrap_or(serde_json::Value::Null)
    }
}

/// The two-rock drainage case on an `n × n` grid used as the reference setup.
pub fn reference_case(backend: BackendKind, n: usize) -> String {
    format!(
        r#"[mesh]
backend = "{}"
nx = {n}
ny = {n}
distortion = 0.0
split = "acute"
dirichlet = "left"

[[rock]]
porosity = 0.2
permeability = [1.0, 0.0, 1.0]

[[rock]]
porosity = 0.3
permeability = [0.1, 0.0, 0.1]

[[region]]
x0 = 0.0
x1 = 0.5
y0 = 0.0
y1 = 0.5
rock = 1

[time]
dt = 0.01
t_final = 0.1

[initial]
profile = "drainage"
p_g = 0.8
p_w = 0.0
front = 0.5
"#,
        backend.name()
    )
}
