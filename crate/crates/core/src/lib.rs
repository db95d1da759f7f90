//! Weakly over-penalised symmetric interior penalty (WOPSIP) and well-balanced
//! Crouzeix–Raviart (WBCR) finite element schemes for the Stokes equations on
//! structured anisotropic triangulations of the unit square.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: tensor-grid triangulations (uniform, Shishkin, cosine and
//!   quadratic grading), face connectivity and the geometric quantities used
//!   by the penalty terms.
//! - [`quadrature`]: symmetric triangle rules and the 3-point Gauss edge rule.
//! - [`fem`]: Crouzeix–Raviart and lowest-order Raviart–Thomas local bases,
//!   interpolation operators and the two global DOF layouts.
//! - [`assembly`]: penalty weights and the sparse saddle-point systems.
//! - [`linsolve`]: MINRES and a dense direct oracle for the augmented system.
//! - [`problems`]: manufactured solutions.
//! - [`analysis`]: error norms, convergence rates and penalty diagnostics.
//! - [`experiment`]: convergence studies and their CSV output.

pub mod analysis;
pub mod assembly;
mod error;
pub mod experiment;
pub mod fem;
pub mod linsolve;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod sparse;

pub use analysis::{
    convergence_rate, dof_count, error_report, inf_sup_probe, penalty_diagnostics, ErrorReport,
    PenaltyDiagnostics,
};
pub use assembly::{
    assemble, assemble_wbcr, assemble_wopsip, face_penalty_weight, penalty_kappa,
    pressure_mean_vector, AssembledSystem, PenaltyMode, Scheme, INTERIOR_PENALTY_FACTOR,
};
pub use error::{Error, Result};
pub use experiment::{emit_csv, run_experiment, ConvergenceReport, ExperimentConfig};
pub use fem::{DofLayout, DofMap};
pub use linsolve::{direct_oracle, solve_saddle, Method, Preconditioner, Solution, SolveOptions};
pub use mesh::{generate_mesh, mesh_quality, Mesh, MeshFamily, MeshQuality};
pub use problems::{boundary_layer_problem, polynomial_problem, Problem};

/// A point or vector in the plane.
pub type Point = [f64; 2];
