use nalgebra::DMatrix;

use crate::fluid::FluidModel;
use crate::geometry::Point;
use crate::state::State;

/// Regularization parameters `(ε, η)`. `None` in the assembly routines means
/// the unregularized scheme.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct Regularization {
    pub eps: f64,
    pub eta: f64,
}

impl Regularization {
    pub fn new(eps: f64, eta: f64) -> Self {
        Self { eps, eta }
    }
}

/// Residual split into accumulation, convection and capillary-regularization
/// contributions; rows are `[gas dofs..., wetting dofs...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualParts {
    pub accumulation: Vec<f64>,
    pub convection: Vec<f64>,
    pub capillary: Vec<f64>,
}

impl ResidualParts {
    pub fn zeros(rows: usize) -> Self {
        Self { accumulation: vec![0.0; rows], convection: vec![0.0; rows], capillary: vec![0.0; rows] }
    }

    pub fn total(&self) -> Vec<f64> {
        self.accumulation
            .iter()
            .zip(&self.convection)
            .zip(&self.capillary)
            .map(|((a, c), p)| a + c + p)
            .collect()
    }
}

/// Interface between a space discretization and the nonlinear solver and
/// verification harness. Unknowns are ordered `[p_g dofs..., p_w dofs...]`.
pub trait SchemeBackend {
    fn name(&self) -> &'static str;

    fn fluid(&self) -> &FluidModel;

    fn dt(&self) -> f64;

    fn dof_count(&self) -> usize;

    /// Location of every degree of freedom.
    fn dof_positions(&self) -> Vec<Point>;

    fn residual_parts(&self, state: &State, prev: &State, reg: Option<Regularization>) -> ResidualParts;

    fn residual(&self, state: &State, prev: &State, reg: Option<Regularization>) -> Vec<f64> {
        self.residual_parts(state, prev, reg).total()
    }

    /// Row scaling `m_A φ_A` per dof (shared by both phases).
    fn row_scales(&self) -> Vec<f64>;

    /// For every dof, the dofs whose residual rows it can influence
    /// (itself included).
    fn dof_neighbors(&self) -> Vec<Vec<usize>>;

    /// The discrete gradient norm of the backend (`‖·‖_{T,τ}` or `‖·‖_{V_T}`)
    /// applied to dof values with zero Dirichlet data.
    fn grad_norm(&self, values: &[f64]) -> f64;

    /// Gram matrix of `grad_norm²` on the dofs.
    fn grad_gram(&self) -> DMatrix<f64>;

    /// Weights of the discrete `L¹` norm used in the energy estimate.
    fn l1_weights(&self) -> Vec<f64>;

    fn l1_norm(&self, values: &[f64]) -> f64 {
        self.l1_weights().iter().zip(values).map(|(w, v)| w * v.abs()).sum()
    }

    /// Factor in front of `φ1` in the accumulation lower bound.
    fn gamma1_factor(&self) -> f64;

    /// `(φ0, φ1)` over the control volumes.
    fn porosity_bounds(&self) -> (f64, f64);

    /// `(γ1, γ2, γ3)` evaluated directly from their defining sums.
    fn energy_gammas(&self, state: &State, prev: &State, reg: Option<Regularization>) -> [f64; 3];

    /// Mobility weighted quadratic form `Σ_α Σ M^ε_α c (δ p_α)²` over all
    /// flux interfaces (equals `γ2 / δt` when no cross terms are present).
    fn mobility_form(&self, state: &State, reg: Option<Regularization>) -> f64;

    /// Quadratic form of the capillary regularization (`γ3 / (η δt)`).
    fn capillary_form(&self, state: &State) -> f64;

    /// Pressure quadratic form bounding `γ2 / (δt ε)` from below when
    /// [`SchemeBackend::gamma2_identity_applies`] holds.
    fn pressure_form(&self, values: &[f64]) -> f64;

    /// Whether `γ2 = δt · mobility_form` with non-negative weights, so that
    /// `γ2 ≥ δt ε Σ_α pressure_form(p_α)`.
    fn gamma2_identity_applies(&self) -> bool;

    /// `(‖p‖, ‖ξ‖)` for the global pressure and capillary energy function.
    fn zeta_norms(&self, state: &State) -> (f64, f64) {
        let fluid = self.fluid();
        let (mut p, mut xi) = (Vec::with_capacity(state.len()), Vec::with_capacity(state.len()));
        for (&pg, &s) in state.p_g().iter().zip(state.s_g()) {
            p.push(fluid.global_pressure(pg, s));
            xi.push(fluid.xi(s));
        }
        (self.grad_norm(&p), self.grad_norm(&xi))
    }

    /// `(‖p_g‖, ‖p_w‖)`.
    fn pressure_norms(&self, state: &State) -> (f64, f64) {
        (self.grad_norm(state.p_g()), self.grad_norm(state.p_w()))
    }

    /// `‖p_g - p_w‖`.
    fn norm_of_difference(&self, state: &State) -> f64 {
        self.grad_norm(&state.capillary())
    }
}
