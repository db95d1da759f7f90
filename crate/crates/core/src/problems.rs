//! Manufactured Stokes solutions on the unit square.
//!
//! Both problems derive the velocity from a stream function
//! `phi(x1, x2) = g(x1) H(x2)` with `g(t) = t^2 (t - 1)^2`, so `u = rot phi`
//! is divergence free and vanishes on the boundary. For the boundary-layer
//! problem `H(t) = g(t) exp(-t / delta)`; every `H` derivative is written as
//! a polynomial factor times that single exponential.

use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// `p = x1^2 - x2^2`.
    Polynomial,
    /// `p = exp(-x2 / delta) - delta + delta exp(-1 / delta)`.
    BoundaryLayer { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub kind: ProblemKind,
    pub nu: f64,
}

pub fn polynomial_problem() -> Problem {
    Problem {
        kind: ProblemKind::Polynomial,
        nu: 1.0,
    }
}

pub fn boundary_layer_problem(delta: f64) -> Result<Problem> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidProblem(format!(
            "delta must be positive, got {delta}"
        )));
    }
    Ok(Problem {
        kind: ProblemKind::BoundaryLayer { delta },
        nu: 1.0,
    })
}

/// `g` and its first four derivatives.
fn g_derivs(t: f64) -> [f64; 5] {
    let t2 = t * t;
    [
        t2 * (t - 1.0) * (t - 1.0),
        2.0 * t * (t - 1.0) * (2.0 * t - 1.0),
        12.0 * t2 - 12.0 * t + 2.0,
        24.0 * t - 12.0,
        24.0,
    ]
}

impl Problem {
    pub fn label(&self) -> String {
        match self.kind {
            ProblemKind::Polynomial => "poly".to_string(),
            ProblemKind::BoundaryLayer { delta } => format!("layer(delta={delta})"),
        }
    }

    /// Width of a boundary layer at `x2 = 0`, if any.
    pub fn layer_width(&self) -> Option<f64> {
        match self.kind {
            ProblemKind::Polynomial => None,
            ProblemKind::BoundaryLayer { delta } => Some(delta),
        }
    }

    /// `H` and its first three derivatives in the `x2` direction.
    fn h_derivs(&self, y: f64) -> [f64; 4] {
        let [g0, g1, g2, g3, _] = g_derivs(y);
        match self.kind {
            ProblemKind::Polynomial => [g0, g1, g2, g3],
            ProblemKind::BoundaryLayer { delta } => {
                let k = 1.0 / delta;
                let e = (-y * k).exp();
                [
                    g0 * e,
                    (g1 - k * g0) * e,
                    (g2 - 2.0 * k * g1 + k * k * g0) * e,
                    (g3 - 3.0 * k * g2 + 3.0 * k * k * g1 - k * k * k * g0) * e,
                ]
            }
        }
    }

    pub fn velocity(&self, x: Point) -> Point {
        let gx = g_derivs(x[0]);
        let hy = self.h_derivs(x[1]);
        [gx[0] * hy[1], -gx[1] * hy[0]]
    }

    /// `grad[i][j] = d u_i / d x_j`.
    pub fn velocity_gradient(&self, x: Point) -> [[f64; 2]; 2] {
        let gx = g_derivs(x[0]);
        let hy = self.h_derivs(x[1]);
        [
            [gx[1] * hy[1], gx[0] * hy[2]],
            [-gx[2] * hy[0], -gx[1] * hy[1]],
        ]
    }

    pub fn pressure(&self, x: Point) -> f64 {
        match self.kind {
            ProblemKind::Polynomial => x[0] * x[0] - x[1] * x[1],
            ProblemKind::BoundaryLayer { delta } => {
                (-x[1] / delta).exp() - delta + delta * (-1.0 / delta).exp()
            }
        }
    }

    pub fn pressure_gradient(&self, x: Point) -> Point {
        match self.kind {
            ProblemKind::Polynomial => [2.0 * x[0], -2.0 * x[1]],
            ProblemKind::BoundaryLayer { delta } => [0.0, -(-x[1] / delta).exp() / delta],
        }
    }

    /// `f = -nu Laplace(u) + grad p`.
    pub fn forcing(&self, x: Point) -> Point {
        let gx = g_derivs(x[0]);
        let hy = self.h_derivs(x[1]);
        let lap_u1 = gx[2] * hy[1] + gx[0] * hy[3];
        let lap_u2 = -gx[3] * hy[0] - gx[1] * hy[2];
        let gp = self.pressure_gradient(x);
        [-self.nu * lap_u1 + gp[0], -self.nu * lap_u2 + gp[1]]
    }
}
