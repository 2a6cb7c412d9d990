//! Finite-difference discretization and solvers for the pulled-back NPBE
//! `-div(A(r;y) grad u) + kappa2* sinh(u) det J = f* det J`.

mod assemble;
mod grid;
mod norms;
mod solve;

pub use assemble::{
    assemble_pulled_back_operator, assemble_rhs, assemble_with_eps, gaussian, geometric_tensor,
    interface_source, AssembledOperator, STENCIL,
};
pub use grid::{qoi_integral, Grid, GridField};
pub use norms::{algebra_constant_estimate, discrete_h_norm, HNorm};
pub use solve::{
    inverse_operator_norm, newton_solve, newton_solve_npbe, operator_residual, pcg, solve_linear_interface,
    CgReport, CgSettings, Discretization, LinearSolution, NewtonSettings, NewtonSolution,
};

use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Charge {
    pub position: Vec3,
    pub charge: f64,
}

/// Piecewise-constant coefficients per subdomain `(U1, U2, U3)` and forcing data.
#[derive(Clone, Debug, PartialEq)]
pub struct PbeCoefficients {
    pub eps: [f64; 3],
    pub kappa2: [f64; 3],
    pub charges: Vec<Charge>,
    /// Gaussian width `s` in Å; `None` means `max(2h, 1)`.
    pub charge_width: Option<f64>,
    /// Dirichlet value on the box boundary.
    pub boundary_value: f64,
    /// Co-normal jumps `[eps d_n u]` on `I1` and `I2`.
    pub interface_jump: [f64; 2],
}

impl PbeCoefficients {
    pub fn uniform(eps: f64) -> Self {
        Self {
            eps: [eps; 3],
            kappa2: [0.0; 3],
            charges: Vec::new(),
            charge_width: None,
            boundary_value: 0.0,
            interface_jump: [0.0; 2],
        }
    }

    pub fn effective_width(&self, h: f64) -> f64 {
        self.charge_width.unwrap_or((2.0 * h).max(1.0))
    }
}
