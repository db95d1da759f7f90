//! Penalty weights and assembly of the discrete Stokes saddle-point systems.
//!
//! Both schemes produce the block system
//!
//! ```text
//! [ nu A   B^T  0 ] [u]   [f]
//! [ B      0    m ] [p] = [0]
//! [ 0      m^T  0 ] [mu]  [0]
//! ```
//!
//! where `m` holds the triangle areas, so the last row enforces a zero-mean
//! pressure and `mu` is the corresponding Lagrange multiplier.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::fem::{CrLocalBasis, DofLayout, DofMap, RtLocalBasis};
use crate::mesh::{Adjacency, Face, Mesh};
use crate::problems::Problem;
use crate::quadrature::triangle_rule;
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// `h^-2 (sqrt(l1) + sqrt(l2))^-2` on interior faces, `h^-2 / l` on the boundary.
    Kappa,
    /// The same weights without the `h^-2` factor.
    KappaStar,
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyMode::Kappa => "kappa",
            PenaltyMode::KappaStar => "kappa-star",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Discontinuous CR velocities with the over-penalised face-mean jumps.
    Wopsip,
    /// Classical CR velocities with the load tested against the RT lift.
    Wbcr,
}

impl Scheme {
    pub fn layout(&self) -> DofLayout {
        match self {
            Scheme::Wopsip => DofLayout::WopsipCell,
            Scheme::Wbcr => DofLayout::WbcrEdge,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Wopsip => "wopsip",
            Scheme::Wbcr => "wbcr",
        })
    }
}

/// Penalty weight of a face for a mesh of size `h`.
pub fn penalty_kappa(face: &Face, h: f64, mode: PenaltyMode) -> f64 {
    let ell = face.ell();
    let base = match face.adjacency {
        Adjacency::Interior { .. } => {
            let s = ell[0].sqrt() + ell[1].sqrt();
            1.0 / (s * s)
        }
        Adjacency::Boundary { .. } => 1.0 / ell[0],
    };
    match mode {
        PenaltyMode::Kappa => base / (h * h),
        PenaltyMode::KappaStar => base,
    }
}

/// Interior faces carry the factor two of the symmetric two-sided penalty;
/// the reference tables are reproduced only with it.
pub const INTERIOR_PENALTY_FACTOR: f64 = 2.0;

/// Coefficient of `[[u]](x_F) [[v]](x_F)` in the penalty form:
/// `kappa_F |F|`, doubled on interior faces.
pub fn face_penalty_weight(face: &Face, h: f64, mode: PenaltyMode) -> f64 {
    let factor = if face.is_interior() {
        INTERIOR_PENALTY_FACTOR
    } else {
        1.0
    };
    factor * penalty_kappa(face, h, mode) * face.length
}

/// Triangle areas; `m^T p = 0` is the zero-mean pressure constraint.
pub fn pressure_mean_vector(mesh: &Mesh) -> Vec<f64> {
    mesh.triangles.iter().map(|t| t.area).collect()
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub scheme: Scheme,
    pub penalty: Option<PenaltyMode>,
    pub nu: f64,
    /// Velocity operator, block diagonal over the two components.
    pub a: CsrMatrix,
    /// Discrete divergence: `B[t, k] = -integral over t of div(phi_k)`.
    pub b: CsrMatrix,
    pub rhs: Vec<f64>,
    pub mean: Vec<f64>,
    pub dofs: DofMap,
}

impl AssembledSystem {
    pub fn num_velocity(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_pressure(&self) -> usize {
        self.b.nrows()
    }

    /// Size of the augmented system including the mean multiplier.
    pub fn augmented_len(&self) -> usize {
        self.num_velocity() + self.num_pressure() + 1
    }

    /// `y = K x` for the augmented operator.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nv, np) = (self.num_velocity(), self.num_pressure());
        let (u, rest) = x.split_at(nv);
        let (p, mu) = rest.split_at(np);
        let (yu, rest) = y.split_at_mut(nv);
        let (yp, ymu) = rest.split_at_mut(np);
        yu.fill(0.0);
        self.a.mul_add(self.nu, u, yu);
        self.b.mul_transpose_add(1.0, p, yu);
        for (i, v) in yp.iter_mut().enumerate() {
            *v = self.mean[i] * mu[0];
        }
        self.b.mul_add(1.0, u, yp);
        ymu[0] = self.mean.iter().zip(p).map(|(m, q)| m * q).sum();
    }

    pub fn augmented_rhs(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.augmented_len()];
        r[..self.num_velocity()].copy_from_slice(&self.rhs);
        r
    }

    pub fn to_dense_augmented(&self) -> nalgebra::DMatrix<f64> {
        let (nv, np) = (self.num_velocity(), self.num_pressure());
        let mut k = nalgebra::DMatrix::zeros(nv + np + 1, nv + np + 1);
        for (r, c, v) in self.a.triplets() {
            k[(r, c)] += self.nu * v;
        }
        for (r, c, v) in self.b.triplets() {
            k[(nv + r, c)] += v;
            k[(c, nv + r)] += v;
        }
        for (t, &m) in self.mean.iter().enumerate() {
            k[(nv + t, nv + np)] = m;
            k[(nv + np, nv + t)] = m;
        }
        k
    }

    /// Writes `A` and `B` in MatrixMarket format.
    pub fn write_matrix_market<W: Write>(&self, a_out: W, b_out: W) -> Result<()> {
        self.a.write_matrix_market(a_out)?;
        self.b.write_matrix_market(b_out)
    }
}

fn check_inputs(mesh: &Mesh, problem: &Problem) -> Result<()> {
    if mesh.num_triangles() == 0 {
        return Err(Error::InvalidMesh("mesh has no triangles".into()));
    }
    if !(problem.nu > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "viscosity must be positive, got {}",
            problem.nu
        )));
    }
    Ok(())
}

/// Per-triangle stiffness and divergence contributions.
struct CellContribution {
    stiffness: [[f64; 3]; 3],
    /// `-|T| d theta_i / d x_comp`, indexed `[comp][i]`.
    divergence: [[f64; 3]; 2],
}

fn cell_contribution(mesh: &Mesh, t: usize) -> CellContribution {
    let area = mesh.triangles[t].area;
    let g = CrLocalBasis::new(mesh, t).gradients;
    let stiffness = std::array::from_fn(|i| {
        std::array::from_fn(|j| area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]))
    });
    let divergence = std::array::from_fn(|comp| std::array::from_fn(|i| -area * g[i][comp]));
    CellContribution {
        stiffness,
        divergence,
    }
}

/// Load on triangle `t` against the velocity basis, indexed `[comp][local face]`.
fn cell_load(
    mesh: &Mesh,
    t: usize,
    scheme: Scheme,
    f: &(impl Fn(Point) -> Point + Sync),
) -> [[f64; 3]; 2] {
    let tri = &mesh.triangles[t];
    let rule = triangle_rule(5).expect("degree 5 is supported");
    let p = mesh.triangle_points(t);
    let mut load = [[0.0; 3]; 2];
    match scheme {
        Scheme::Wopsip => {
            let cr = CrLocalBasis::new(mesh, t);
            for (x, w) in rule.mapped(&p, tri.area) {
                let fx = f(x);
                let th = cr.eval(x);
                for i in 0..3 {
                    load[0][i] += w * fx[0] * th[i];
                    load[1][i] += w * fx[1] * th[i];
                }
            }
        }
        Scheme::Wbcr => {
            // The RT lift of phi_F e_k restricted to t is |F| (n_F)_k theta^RT_F.
            let rt = RtLocalBasis::new(mesh, t);
            let mut moments = [0.0; 3];
            for (x, w) in rule.mapped(&p, tri.area) {
                let fx = f(x);
                for (i, m) in moments.iter_mut().enumerate() {
                    let th = rt.eval(i, x);
                    *m += w * (fx[0] * th[0] + fx[1] * th[1]);
                }
            }
            for i in 0..3 {
                let face = &mesh.faces[tri.faces[i]];
                for comp in 0..2 {
                    load[comp][i] = face.length * face.normal[comp] * moments[i];
                }
            }
        }
    }
    load
}

/// Load vector of `f`: tested against the CR basis for WOPSIP and against
/// the RT lift of the CR basis for WBCR.
pub fn load_vector(
    mesh: &Mesh,
    dofs: &DofMap,
    scheme: Scheme,
    f: impl Fn(Point) -> Point + Sync,
) -> Vec<f64> {
    let loads: Vec<[[f64; 3]; 2]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| cell_load(mesh, t, scheme, &f))
        .collect();
    let mut rhs = vec![0.0; dofs.velocity_unknowns()];
    for (t, load) in loads.iter().enumerate() {
        for comp in 0..2 {
            for i in 0..3 {
                if let Some(k) = dofs.velocity_index(mesh, t, i, comp) {
                    rhs[k] += load[comp][i];
                }
            }
        }
    }
    rhs
}

/// Assembles either scheme; `mode` only affects WOPSIP.
pub fn assemble(
    mesh: &Mesh,
    problem: &Problem,
    scheme: Scheme,
    mode: PenaltyMode,
) -> Result<AssembledSystem> {
    match scheme {
        Scheme::Wopsip => assemble_wopsip(mesh, problem, mode),
        Scheme::Wbcr => assemble_wbcr(mesh, problem),
    }
}

fn assemble_cells(mesh: &Mesh, dofs: &DofMap) -> (TripletBuilder, CsrMatrix) {
    let n = dofs.per_component();
    let contributions: Vec<CellContribution> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| cell_contribution(mesh, t))
        .collect();

    let mut a = TripletBuilder::with_capacity(2 * n, 2 * n, 18 * mesh.num_triangles());
    let mut b =
        TripletBuilder::with_capacity(mesh.num_triangles(), 2 * n, 6 * mesh.num_triangles());
    for (t, c) in contributions.iter().enumerate() {
        for comp in 0..2 {
            let idx: [Option<usize>; 3] =
                std::array::from_fn(|i| dofs.velocity_index(mesh, t, i, comp));
            for i in 0..3 {
                let Some(gi) = idx[i] else { continue };
                // upper triangle mirrored, so A is symmetric to the bit
                for j in i..3 {
                    let Some(gj) = idx[j] else { continue };
                    a.push_sym(gi, gj, c.stiffness[i][j]);
                }
                b.push(t, gi, c.divergence[comp][i]);
            }
        }
    }
    (a, b.build())
}

/// The WOPSIP system on the discontinuous CR space.
pub fn assemble_wopsip(
    mesh: &Mesh,
    problem: &Problem,
    mode: PenaltyMode,
) -> Result<AssembledSystem> {
    check_inputs(mesh, problem)?;
    let dofs = DofMap::new(mesh, DofLayout::WopsipCell);
    let (mut a, b) = assemble_cells(mesh, &dofs);
    let rhs = load_vector(mesh, &dofs, Scheme::Wopsip, |x| problem.forcing(x));

    // CR traces are affine, so the face mean of a jump is its midpoint value,
    // and at x_F only the shape function attached to F is nonzero.
    for (f, face) in mesh.faces.iter().enumerate() {
        let weight = face_penalty_weight(face, mesh.h, mode);
        for comp in 0..2 {
            match face.adjacency {
                Adjacency::Interior { t1, t2 } => {
                    let l1 = mesh.local_face_index(t1, f).expect("face belongs to t1");
                    let l2 = mesh.local_face_index(t2, f).expect("face belongs to t2");
                    let i = dofs
                        .velocity_index(mesh, t1, l1, comp)
                        .expect("cell layout");
                    let j = dofs
                        .velocity_index(mesh, t2, l2, comp)
                        .expect("cell layout");
                    a.push(i, i, weight);
                    a.push(j, j, weight);
                    a.push_sym(i, j, -weight);
                }
                Adjacency::Boundary { t } => {
                    let l = mesh.local_face_index(t, f).expect("face belongs to t");
                    let i = dofs.velocity_index(mesh, t, l, comp).expect("cell layout");
                    a.push(i, i, weight);
                }
            }
        }
    }

    Ok(AssembledSystem {
        scheme: Scheme::Wopsip,
        penalty: Some(mode),
        nu: problem.nu,
        a: a.build(),
        b,
        rhs,
        mean: pressure_mean_vector(mesh),
        dofs,
    })
}

/// The well-balanced CR system; boundary face values are eliminated.
pub fn assemble_wbcr(mesh: &Mesh, problem: &Problem) -> Result<AssembledSystem> {
    check_inputs(mesh, problem)?;
    let dofs = DofMap::new(mesh, DofLayout::WbcrEdge);
    let (a, b) = assemble_cells(mesh, &dofs);
    let rhs = load_vector(mesh, &dofs, Scheme::Wbcr, |x| problem.forcing(x));
    Ok(AssembledSystem {
        scheme: Scheme::Wbcr,
        penalty: None,
        nu: problem.nu,
        a: a.build(),
        b,
        rhs,
        mean: pressure_mean_vector(mesh),
        dofs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{global_interpolate_cr, rt_interpolate_local};
    use crate::mesh::{generate_mesh, MeshFamily};
    use crate::problems::{boundary_layer_problem, polynomial_problem};
    use crate::Point;

    fn leg_face(mesh: &Mesh) -> usize {
        mesh.interior_faces
            .iter()
            .copied()
            .find(|&f| {
                let [a, b] = mesh.face_points(f);
                a[0] == 0.5 && b[0] == 0.5
            })
            .unwrap()
    }

    #[test]
    fn kappa_values_uniform_two() {
        let mesh = generate_mesh(MeshFamily::Uniform, 2).unwrap();
        let f = &mesh.faces[leg_face(&mesh)];
        assert!((penalty_kappa(f, mesh.h, PenaltyMode::Kappa) - 1.0).abs() < 1e-14);
        assert!((penalty_kappa(f, mesh.h, PenaltyMode::KappaStar) - 0.5).abs() < 1e-14);
        let bf = mesh
            .boundary_faces
            .iter()
            .map(|&f| &mesh.faces[f])
            .find(|f| (f.ell()[0] - 0.5).abs() < 1e-15)
            .unwrap();
        assert!((penalty_kappa(bf, mesh.h, PenaltyMode::Kappa) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn face_weights_double_only_interior_faces() {
        let mesh = generate_mesh(MeshFamily::Uniform, 2).unwrap();
        let f = &mesh.faces[leg_face(&mesh)];
        assert!((face_penalty_weight(f, mesh.h, PenaltyMode::Kappa) - 1.0).abs() < 1e-14);
        for face in &mesh.faces {
            let w = face_penalty_weight(face, mesh.h, PenaltyMode::KappaStar);
            let factor = if face.is_interior() { 2.0 } else { 1.0 };
            assert!(
                (w - factor * penalty_kappa(face, mesh.h, PenaltyMode::KappaStar) * face.length)
                    .abs()
                    < 1e-14
            );
        }
    }

    #[test]
    fn velocity_operator_has_trivial_kernel() {
        for n in [2, 4] {
            for family in [
                MeshFamily::Uniform,
                MeshFamily::Shishkin { delta: 1.0 / 128.0 },
            ] {
                let mesh = generate_mesh(family, n).unwrap();
                for mode in [PenaltyMode::Kappa, PenaltyMode::KappaStar] {
                    let sys = assemble_wopsip(&mesh, &polynomial_problem(), mode).unwrap();
                    let eig = sys.a.to_dense().symmetric_eigenvalues();
                    assert!(
                        eig.min() > 1e-8 * eig.max(),
                        "N={n} {family:?} {mode}: {}",
                        eig.min()
                    );
                }
                let sys = assemble_wbcr(&mesh, &polynomial_problem()).unwrap();
                assert!(sys.a.to_dense().symmetric_eigenvalues().min() > 0.0);
            }
        }
    }

    #[test]
    fn kappa_star_never_exceeds_kappa_for_h_below_one() {
        let mesh = generate_mesh(MeshFamily::Shishkin { delta: 1.0 / 128.0 }, 8).unwrap();
        assert!(mesh.h <= 1.0);
        for f in &mesh.faces {
            assert!(
                penalty_kappa(f, mesh.h, PenaltyMode::KappaStar)
                    <= penalty_kappa(f, mesh.h, PenaltyMode::Kappa)
            );
        }
    }

    #[test]
    fn mean_vector() {
        let mesh = generate_mesh(MeshFamily::Uniform, 2).unwrap();
        let m = pressure_mean_vector(&mesh);
        assert!(m.iter().all(|&v| v == 0.125));
        let mesh = generate_mesh(
            MeshFamily::Shishkin {
                delta: 1.0 / 1024.0,
            },
            32,
        )
        .unwrap();
        assert!((pressure_mean_vector(&mesh).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_operator_is_symmetric_and_divergence_kills_constants() {
        let mesh = generate_mesh(MeshFamily::CosineGraded, 6).unwrap();
        let sys = assemble_wopsip(&mesh, &polynomial_problem(), PenaltyMode::Kappa).unwrap();
        assert!(sys.a.is_symmetric());
        let dofs = &sys.dofs;
        let u = global_interpolate_cr(&mesh, |_| [1.3, -0.4], dofs);
        assert!(sys.b.mul(&u).iter().all(|v| v.abs() < 1e-14));
        let wbcr = assemble_wbcr(&mesh, &polynomial_problem()).unwrap();
        assert!(wbcr.a.is_symmetric());
    }

    #[test]
    fn penalty_vanishes_on_classical_cr_fields() {
        // The two operators differ only in the penalty scale, so their quadratic
        // forms agree on fields continuous at midpoints and zero at boundary ones.
        let mesh = generate_mesh(MeshFamily::Uniform, 4).unwrap();
        let sys = assemble_wopsip(&mesh, &polynomial_problem(), PenaltyMode::Kappa).unwrap();
        let star = assemble_wopsip(&mesh, &polynomial_problem(), PenaltyMode::KappaStar).unwrap();
        let u = global_interpolate_cr(
            &mesh,
            |x: Point| [x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]), 0.0],
            &sys.dofs,
        );
        let mut u = u;
        for &f in &mesh.boundary_faces {
            let t = mesh.faces[f].triangles().next().unwrap();
            let l = mesh.local_face_index(t, f).unwrap();
            for comp in 0..2 {
                u[sys.dofs.velocity_index(&mesh, t, l, comp).unwrap()] = 0.0;
            }
        }
        let diff = sys.a.quadratic_form(&u) - star.a.quadratic_form(&u);
        assert!(diff.abs() < 1e-12 * sys.a.quadratic_form(&u));
    }

    #[test]
    fn dof_counts_match_tables() {
        let mesh = generate_mesh(MeshFamily::Uniform, 16).unwrap();
        let w = assemble_wopsip(&mesh, &polynomial_problem(), PenaltyMode::Kappa).unwrap();
        assert_eq!(w.num_velocity(), 6 * 512);
        assert_eq!(w.num_pressure(), 512);
        assert_eq!(w.dofs.nodal_points(), 3584);
        let c = assemble_wbcr(&mesh, &polynomial_problem()).unwrap();
        assert_eq!(c.dofs.nodal_points(), 2112);
    }

    #[test]
    fn wbcr_load_balances_gradient_forcing() {
        // For f = grad(c . x) the lifted load is -int (c . x) div_h v, i.e.
        // B^T q with q_T = c . centroid(T): gradients are balanced exactly by
        // the discrete pressure.
        let mesh = generate_mesh(MeshFamily::Shishkin { delta: 1.0 / 128.0 }, 6).unwrap();
        let c = [0.8, -1.7];
        let dofs = DofMap::new(&mesh, DofLayout::WbcrEdge);
        let lifted = load_vector(&mesh, &dofs, Scheme::Wbcr, |_| c);
        let sys = assemble_wbcr(&mesh, &polynomial_problem()).unwrap();
        let q: Vec<f64> = (0..mesh.num_triangles())
            .map(|t| {
                let p = mesh.triangle_points(t);
                c[0] * (p[0][0] + p[1][0] + p[2][0]) / 3.0
                    + c[1] * (p[0][1] + p[1][1] + p[2][1]) / 3.0
            })
            .collect();
        let mut btq = vec![0.0; sys.num_velocity()];
        sys.b.mul_transpose_add(1.0, &q, &mut btq);
        let scale = btq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in lifted.iter().zip(&btq) {
            assert!((a - b).abs() < 1e-13 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn wopsip_load_of_constant_forcing() {
        // int_T theta_i = |T| / 3 for every CR shape function
        let mesh = generate_mesh(MeshFamily::QuadraticGraded, 4).unwrap();
        let dofs = DofMap::new(&mesh, DofLayout::WopsipCell);
        let load = load_vector(&mesh, &dofs, Scheme::Wopsip, |_| [2.0, -1.0]);
        for t in 0..mesh.num_triangles() {
            for i in 0..3 {
                let third = mesh.triangles[t].area / 3.0;
                assert!(
                    (load[dofs.velocity_index(&mesh, t, i, 0).unwrap()] - 2.0 * third).abs()
                        < 1e-15
                );
                assert!((load[dofs.velocity_index(&mesh, t, i, 1).unwrap()] + third).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lift_matches_local_rt_interpolation() {
        let mesh = generate_mesh(MeshFamily::QuadraticGraded, 4).unwrap();
        for t in [0, 9, 30] {
            let cr = CrLocalBasis::new(&mesh, t);
            let tri = &mesh.triangles[t];
            for i in 0..3 {
                for comp in 0..2 {
                    let field = |x: Point| {
                        let mut v = [0.0, 0.0];
                        v[comp] = cr.eval(x)[i];
                        v
                    };
                    let dofs = rt_interpolate_local(&mesh, t, field);
                    let face = &mesh.faces[tri.faces[i]];
                    for j in 0..3 {
                        let want = if i == j {
                            face.length * face.normal[comp]
                        } else {
                            0.0
                        };
                        assert!((dofs[j] - want).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_viscosity() {
        let mesh = generate_mesh(MeshFamily::Uniform, 2).unwrap();
        let mut p = boundary_layer_problem(0.5).unwrap();
        p.nu = 0.0;
        assert!(assemble_wopsip(&mesh, &p, PenaltyMode::Kappa).is_err());
        assert!(assemble_wbcr(&mesh, &p).is_err());
    }
}
