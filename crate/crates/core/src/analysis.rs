//! Error norms, convergence rates and penalty diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{face_penalty_weight, AssembledSystem, PenaltyMode, Scheme};
use crate::fem::{check_sizes, CrLocalBasis, DofMap};
use crate::linsolve::DIRECT_ORACLE_LIMIT;
use crate::mesh::{Adjacency, Mesh};
use crate::problems::Problem;
use crate::quadrature::{barycentric_to_point, edge_average, triangle_rule, QuadRule};
use crate::{Error, Point, Result};

/// Absolute errors of a discrete solution together with the norms of the
/// exact solution used to make them relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Broken `H^1` seminorm of `u - u_h`.
    pub err_h1: f64,
    /// Penalty-weighted jump seminorm of `u - u_h` (zero for WBCR).
    pub jump_semi: f64,
    /// `sqrt(err_h1^2 + jump_semi^2)`.
    pub err_energy: f64,
    pub err_l2u: f64,
    pub err_l2p: f64,
    pub norm_h1u: f64,
    pub norm_l2u: f64,
    pub norm_l2p: f64,
}

impl ErrorReport {
    pub fn rel_h1(&self) -> f64 {
        self.err_h1 / self.norm_h1u
    }

    pub fn rel_energy(&self) -> f64 {
        self.err_energy / self.norm_h1u
    }

    pub fn rel_l2u(&self) -> f64 {
        self.err_l2u / self.norm_l2u
    }

    pub fn rel_l2p(&self) -> f64 {
        self.err_l2p / self.norm_l2p
    }

    /// `(energy error + pressure error) / (|u|_1 + ||p||)`.
    pub fn combined(&self) -> f64 {
        (self.err_energy + self.err_l2p) / (self.norm_h1u + self.norm_l2p)
    }
}

/// Sub-triangles used for error integration on triangle `t`. Triangles close
/// to a boundary layer of width `delta` at `x2 = 0` are split uniformly so the
/// pieces resolve the exponential.
fn integration_cells(mesh: &Mesh, t: usize, layer: Option<f64>) -> Vec<([Point; 3], f64)> {
    let p = mesh.triangle_points(t);
    let area = mesh.triangles[t].area;
    let Some(delta) = layer else {
        return vec![(p, area)];
    };
    let lo = p.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
    let hi = p.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
    if lo > 40.0 * delta {
        return vec![(p, area)];
    }
    let m = ((hi - lo) / (2.0 * delta)).ceil().clamp(1.0, 64.0) as usize;
    if m == 1 {
        return vec![(p, area)];
    }
    let node = |i: usize, j: usize| -> Point {
        let (a, b) = (i as f64 / m as f64, j as f64 / m as f64);
        barycentric_to_point(&p, [1.0 - a - b, a, b])
    };
    let sub_area = area / (m * m) as f64;
    let mut cells = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m - j {
            cells.push(([node(i, j), node(i + 1, j), node(i, j + 1)], sub_area));
            if i + j + 1 < m {
                cells.push((
                    [node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)],
                    sub_area,
                ));
            }
        }
    }
    cells
}

/// Squared cell contributions `[h1 err, l2u err, l2p err, h1 norm, l2u norm, l2p norm]`.
fn cell_errors(
    mesh: &Mesh,
    problem: &Problem,
    dofs: &DofMap,
    u: &[f64],
    p: &[f64],
    t: usize,
    rule: &QuadRule,
) -> [f64; 6] {
    let cells = integration_cells(mesh, t, problem.layer_width());
    let cr = CrLocalBasis::new(mesh, t);
    let c = dofs.local_coefficients(mesh, u, t);
    let grad_h = [cr.gradient_of(&c[0]), cr.gradient_of(&c[1])];
    let ph = p[t];
    let mut out = [0.0; 6];
    for (q, area) in &cells {
        for (x, w) in rule.mapped(q, *area) {
            let g = problem.velocity_gradient(x);
            let v = problem.velocity(x);
            let pe = problem.pressure(x);
            let th = cr.eval(x);
            let vh = [0, 1].map(|k| c[k][0] * th[0] + c[k][1] * th[1] + c[k][2] * th[2]);
            let mut dg = 0.0;
            let mut gg = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    dg += (g[i][j] - grad_h[i][j]).powi(2);
                    gg += g[i][j] * g[i][j];
                }
            }
            out[0] += w * dg;
            out[1] += w * ((v[0] - vh[0]).powi(2) + (v[1] - vh[1]).powi(2));
            out[2] += w * (pe - ph).powi(2);
            out[3] += w * gg;
            out[4] += w * (v[0] * v[0] + v[1] * v[1]);
            out[5] += w * pe * pe;
        }
    }
    out
}

/// Value at the midpoint of face `f` of the discrete field on triangle `t`.
fn trace_at_midpoint(mesh: &Mesh, dofs: &DofMap, u: &[f64], t: usize, f: usize) -> [f64; 2] {
    let l = mesh
        .local_face_index(t, f)
        .expect("face belongs to triangle");
    let c = dofs.local_coefficients(mesh, u, t);
    [c[0][l], c[1][l]]
}

/// `sum_F w_F |Pi_F[[v]] - [[u_h]](x_F)|^2` with the scheme's face weights `w_F`;
/// `v` is continuous.
fn jump_seminorm_sq(
    mesh: &Mesh,
    dofs: &DofMap,
    u: &[f64],
    mode: PenaltyMode,
    v: impl Fn(Point) -> Point + Sync,
) -> f64 {
    let terms: Vec<f64> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let face = &mesh.faces[f];
            let [a, b] = mesh.face_points(f);
            let w = face_penalty_weight(face, mesh.h, mode);
            let (exact, discrete) = match face.adjacency {
                Adjacency::Interior { t1, t2 } => {
                    // a continuous field has no jump
                    let u1 = trace_at_midpoint(mesh, dofs, u, t1, f);
                    let u2 = trace_at_midpoint(mesh, dofs, u, t2, f);
                    ([0.0, 0.0], [u1[0] - u2[0], u1[1] - u2[1]])
                }
                Adjacency::Boundary { t } => {
                    let mean = [0, 1].map(|k| edge_average(|x| v(x)[k], a, b));
                    (mean, trace_at_midpoint(mesh, dofs, u, t, f))
                }
            };
            w * ((exact[0] - discrete[0]).powi(2) + (exact[1] - discrete[1]).powi(2))
        })
        .collect();
    terms.iter().sum()
}

/// Errors of `(u, p)` against the exact solution of `problem`.
///
/// Cell integrals use the degree-10 rule; `mode` selects the penalty weights of
/// the jump seminorm (ignored for WBCR, whose fields have no jumps).
pub fn error_report(
    mesh: &Mesh,
    problem: &Problem,
    u: &[f64],
    p: &[f64],
    scheme: Scheme,
    mode: PenaltyMode,
) -> Result<ErrorReport> {
    let dofs = DofMap::new(mesh, scheme.layout());
    check_sizes(&dofs, u, p)?;
    let rule = triangle_rule(10)?;
    let cells: Vec<[f64; 6]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| cell_errors(mesh, problem, &dofs, u, p, t, rule))
        .collect();
    let mut s = [0.0; 6];
    for c in &cells {
        for k in 0..6 {
            s[k] += c[k];
        }
    }
    let jump_sq = match scheme {
        Scheme::Wopsip => jump_seminorm_sq(mesh, &dofs, u, mode, |x| problem.velocity(x)),
        Scheme::Wbcr => 0.0,
    };
    Ok(ErrorReport {
        err_h1: s[0].sqrt(),
        jump_semi: jump_sq.sqrt(),
        err_energy: (s[0] + jump_sq).sqrt(),
        err_l2u: s[1].sqrt(),
        err_l2p: s[2].sqrt(),
        norm_h1u: s[3].sqrt(),
        norm_l2u: s[4].sqrt(),
        norm_l2p: s[5].sqrt(),
    })
}

/// Discrete energy norm `(|v|_{1,h}^2 + |v|_J^2)^{1/2}` of a WOPSIP field,
/// evaluated element by element and face by face.
pub fn discrete_energy_norm(mesh: &Mesh, u: &[f64], mode: PenaltyMode) -> Result<f64> {
    let dofs = DofMap::new(mesh, Scheme::Wopsip.layout());
    if u.len() != dofs.velocity_unknowns() {
        return Err(Error::DimensionMismatch {
            expected: dofs.velocity_unknowns(),
            actual: u.len(),
        });
    }
    let mut h1 = 0.0;
    for t in 0..mesh.num_triangles() {
        let cr = CrLocalBasis::new(mesh, t);
        let c = dofs.local_coefficients(mesh, u, t);
        for comp in c {
            let g = cr.gradient_of(&comp);
            h1 += mesh.triangles[t].area * (g[0] * g[0] + g[1] * g[1]);
        }
    }
    Ok((h1 + jump_seminorm_sq(mesh, &dofs, u, mode, |_| [0.0, 0.0])).sqrt())
}

/// `log2(err_coarse / err_fine)`.
pub fn convergence_rate(err_coarse: f64, err_fine: f64) -> Result<f64> {
    if !(err_coarse > 0.0 && err_fine > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "convergence rate needs positive errors, got {err_coarse} and {err_fine}"
        )));
    }
    Ok((err_coarse / err_fine).log2())
}

/// Maxima over interior faces of the penalty indicators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyDiagnostics {
    /// `max 1 / h_F`.
    pub tau_f: f64,
    /// `max (1/l1 + 1/l2) / 4`.
    pub tau_ave: f64,
    /// `max 2 / (sqrt(l1) + sqrt(l2))^2`.
    pub tau_dg: f64,
    /// `max 2 / (h^2 (sqrt(l1) + sqrt(l2))^2)`.
    pub tau_wop: f64,
}

pub fn penalty_diagnostics(mesh: &Mesh) -> PenaltyDiagnostics {
    let mut d = PenaltyDiagnostics {
        tau_f: 0.0,
        tau_ave: 0.0,
        tau_dg: 0.0,
        tau_wop: 0.0,
    };
    for &f in &mesh.interior_faces {
        let face = &mesh.faces[f];
        let ell = face.ell();
        let s = ell[0].sqrt() + ell[1].sqrt();
        d.tau_f = d.tau_f.max(1.0 / face.length);
        d.tau_ave = d.tau_ave.max(0.25 * (1.0 / ell[0] + 1.0 / ell[1]));
        d.tau_dg = d.tau_dg.max(2.0 / (s * s));
    }
    d.tau_wop = d.tau_dg / (mesh.h * mesh.h);
    d
}

/// Discrete inf-sup constant
/// `min_{q, m^T q = 0} sup_v (B v . q) / (|v|_A |q|_M)` with `A` the velocity
/// operator and `M` the pressure mass, from the dense Schur complement
/// `B A^{-1} B^T`. Meant for small meshes only.
pub fn inf_sup_probe(sys: &AssembledSystem) -> Result<f64> {
    let nv = sys.num_velocity();
    if nv > DIRECT_ORACLE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "inf-sup probe is limited to {DIRECT_ORACLE_LIMIT} velocity unknowns"
        )));
    }
    let a = sys.a.to_dense();
    let chol = a.cholesky().ok_or_else(|| {
        Error::SingularSystem("velocity operator is not positive definite".into())
    })?;
    let bt = sys.b.transpose().to_dense();
    let schur = bt.transpose() * chol.solve(&bt);
    // M^{-1/2} S M^{-1/2}, with the constant pressure direction pushed to the
    // top of the spectrum
    let s_m: Vec<f64> = sys.mean.iter().map(|m| 1.0 / m.sqrt()).collect();
    let np = sys.num_pressure();
    let mut k = DMatrix::from_fn(np, np, |i, j| s_m[i] * schur[(i, j)] * s_m[j]);
    let e = DVector::from_iterator(np, sys.mean.iter().map(|m| m.sqrt())).normalize();
    let proj = DMatrix::identity(np, np) - &e * e.transpose();
    k = &proj * k * &proj;
    let shift = 1.0 + k.amax();
    k += shift * &e * e.transpose();
    let lambda = k.symmetric_eigenvalues().min();
    if !(lambda > 0.0) {
        return Err(Error::SingularSystem(format!(
            "Schur complement has eigenvalue {lambda:.3e} on zero-mean pressures"
        )));
    }
    Ok(lambda.sqrt())
}

/// Number of nodal points of the velocity-pressure pair.
pub fn dof_count(mesh: &Mesh, scheme: Scheme) -> usize {
    DofMap::new(mesh, scheme.layout()).nodal_points()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_wopsip, PenaltyMode};
    use crate::fem::{global_interpolate_cr, l2_project_cell};
    use crate::mesh::{generate_mesh, MeshFamily};
    use crate::problems::polynomial_problem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wopsip_inf_sup_is_bounded_by_the_conforming_one() {
        // Classical CR fields carry no penalty and form a subspace of the
        // WOPSIP velocities, so the WOPSIP constant dominates the CR/P0 one.
        let mut previous = f64::INFINITY;
        for n in [4, 8, 16] {
            let mesh = generate_mesh(MeshFamily::Uniform, n).unwrap();
            let p = polynomial_problem();
            let wop = inf_sup_probe(
                &crate::assembly::assemble(&mesh, &p, Scheme::Wopsip, PenaltyMode::Kappa).unwrap(),
            )
            .unwrap();
            let cr = inf_sup_probe(
                &crate::assembly::assemble(&mesh, &p, Scheme::Wbcr, PenaltyMode::Kappa).unwrap(),
            )
            .unwrap();
            assert!(wop >= cr * (1.0 - 1e-10), "N={n}: {wop} < {cr}");
            assert!(
                cr > 0.4 && cr <= previous && (previous.is_infinite() || previous / cr < 1.2),
                "N={n}: {cr} after {previous}"
            );
            previous = cr;
        }
    }

    #[test]
    fn inf_sup_probe_is_the_minimal_rayleigh_quotient() {
        // every zero-mean q gives an upper bound q^T B A^{-1} B^T q / q^T M q
        // on beta^2, and random sampling should land close to it
        let mesh = generate_mesh(MeshFamily::Uniform, 2).unwrap();
        let sys = assemble_wopsip(&mesh, &polynomial_problem(), PenaltyMode::Kappa).unwrap();
        let beta = inf_sup_probe(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = sys.a.to_dense();
        let ainv = a.clone().try_inverse().unwrap();
        let bm = sys.b.to_dense();
        let m: f64 = sys.mean.iter().sum();
        let mut best = f64::INFINITY;
        for _ in 0..200 {
            let mut q = DVector::from_fn(sys.num_pressure(), |_, _| rng.random_range(-1.0..1.0));
            let mean = q.iter().zip(&sys.mean).map(|(a, b)| a * b).sum::<f64>() / m;
            q.add_scalar_mut(-mean);
            let bq = bm.transpose() * &q;
            let num = (bq.transpose() * &ainv * &bq)[(0, 0)];
            let den: f64 = q.iter().zip(&sys.mean).map(|(v, w)| v * v * w).sum();
            best = best.min(num / den);
        }
        assert!(beta * beta <= best * (1.0 + 1e-10));
        assert!(beta * beta >= 0.5 * best, "{} {}", beta * beta, best);
    }

    fn interpolant(mesh: &Mesh, problem: &Problem, scheme: Scheme) -> (Vec<f64>, Vec<f64>) {
        let dofs = DofMap::new(mesh, scheme.layout());
        let u = global_interpolate_cr(mesh, |x| problem.velocity(x), &dofs);
        let p = (0..mesh.num_triangles())
            .map(|t| l2_project_cell(mesh, t, |x| problem.pressure(x)))
            .collect();
        (u, p)
    }

    #[test]
    fn interpolant_has_no_jump_error() {
        let mesh = generate_mesh(MeshFamily::Uniform, 8).unwrap();
        let problem = polynomial_problem();
        let (u, p) = interpolant(&mesh, &problem, Scheme::Wopsip);
        let r = error_report(&mesh, &problem, &u, &p, Scheme::Wopsip, PenaltyMode::Kappa).unwrap();
        assert!(r.jump_semi <= 1e-10, "{}", r.jump_semi);
        assert!(r.err_h1 > 0.0);
        let lhs = r.err_energy * r.err_energy;
        assert!((lhs - r.err_h1.powi(2) - r.jump_semi.powi(2)).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn interpolant_error_converges_at_first_order() {
        let problem = polynomial_problem();
        let errs: Vec<f64> = [8, 16]
            .iter()
            .map(|&n| {
                let mesh = generate_mesh(MeshFamily::Uniform, n).unwrap();
                let (u, p) = interpolant(&mesh, &problem, Scheme::Wbcr);
                error_report(&mesh, &problem, &u, &p, Scheme::Wbcr, PenaltyMode::Kappa)
                    .unwrap()
                    .rel_h1()
            })
            .collect();
        let r = convergence_rate(errs[0], errs[1]).unwrap();
        assert!((r - 1.0).abs() < 0.1, "{r}");
    }

    #[test]
    fn exact_norms_of_polynomial_problem() {
        // ||p||^2 = int (x^2 - y^2)^2 = 2/5 - 2/9
        // the H^1 integrand has degree 12, so the rule is exact only up to O(h^12)
        let mesh = generate_mesh(MeshFamily::CosineGraded, 12).unwrap();
        let problem = polynomial_problem();
        let (u, p) = interpolant(&mesh, &problem, Scheme::Wopsip);
        let r = error_report(&mesh, &problem, &u, &p, Scheme::Wopsip, PenaltyMode::Kappa).unwrap();
        let p2: f64 = 2.0 / 5.0 - 2.0 / 9.0;
        assert!((r.norm_l2p - p2.sqrt()).abs() < 1e-13);
        // |u|_1^2 = int |grad curl phi|^2 = int (Delta phi)^2 for phi vanishing
        // with its normal derivative; separable terms of g = t^2 (t-1)^2
        let (g0, g1, g2) = (1.0 / 630.0, 2.0 / 105.0, 4.0 / 5.0);
        let h1: f64 = 2.0 * g2 * g0 + 2.0 * g1 * g1;
        assert!(
            (r.norm_h1u - h1.sqrt()).abs() < 1e-13,
            "{} vs {}",
            r.norm_h1u,
            h1.sqrt()
        );
    }

    #[test]
    fn affine_field_is_reproduced() {
        // the CR interpolant of an affine field equals it pointwise
        let mesh = generate_mesh(MeshFamily::Uniform, 4).unwrap();
        let dofs = DofMap::new(&mesh, Scheme::Wopsip.layout());
        let affine = |x: Point| [0.3 + x[0] - 2.0 * x[1], -1.0 + 0.5 * x[0]];
        let u = global_interpolate_cr(&mesh, affine, &dofs);
        let rule = triangle_rule(10).unwrap();
        for t in 0..mesh.num_triangles() {
            let cr = CrLocalBasis::new(&mesh, t);
            let c = dofs.local_coefficients(&mesh, &u, t);
            let p = mesh.triangle_points(t);
            for (x, _) in rule.mapped(&p, mesh.triangles[t].area) {
                let e = affine(x);
                for k in 0..2 {
                    assert!((cr.eval_combination(&c[k], x) - e[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn quadratic_form_matches_discrete_norm() {
        let mesh = generate_mesh(MeshFamily::Uniform, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for mode in [PenaltyMode::Kappa, PenaltyMode::KappaStar] {
            let sys = assemble_wopsip(&mesh, &polynomial_problem(), mode).unwrap();
            for _ in 0..20 {
                let v: Vec<f64> = (0..sys.num_velocity())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                let q = sys.a.quadratic_form(&v);
                let n = discrete_energy_norm(&mesh, &v, mode).unwrap();
                assert!((q - n * n).abs() <= 1e-12 * q);
            }
        }
    }

    #[test]
    fn rates() {
        assert_eq!(convergence_rate(0.8, 0.4).unwrap(), 1.0);
        assert!((convergence_rate(8.10569e-01, 4.08981e-01).unwrap() - 0.99).abs() < 0.005);
        assert!((convergence_rate(2.12630e-01, 5.42357e-02).unwrap() - 1.97).abs() < 0.005);
        assert!(convergence_rate(0.0, 1.0).is_err());
        assert!(convergence_rate(1.0, -1.0).is_err());
    }

    #[test]
    fn diagnostics_uniform_two_by_face_sweep() {
        let mesh = generate_mesh(MeshFamily::Uniform, 2).unwrap();
        let d = penalty_diagnostics(&mesh);
        let brute = mesh
            .faces
            .iter()
            .filter(|f| f.is_interior())
            .map(|f| {
                let [a, b] = f.vertices.map(|v| mesh.vertices[v]);
                1.0 / ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        assert_eq!(mesh.interior_faces.len(), 8);
        assert!((d.tau_f - brute).abs() < 1e-14);
        assert!((d.tau_f - 2.0).abs() < 1e-14);
    }

    #[test]
    fn diagnostics_scaling_and_identities() {
        let ds: Vec<(f64, PenaltyDiagnostics)> = [4usize, 8, 16]
            .iter()
            .map(|&n| {
                let mesh = generate_mesh(MeshFamily::Uniform, n).unwrap();
                let d = penalty_diagnostics(&mesh);
                assert!((d.tau_wop * mesh.h * mesh.h - d.tau_dg).abs() <= 1e-12 * d.tau_dg);
                assert!(d.tau_dg <= 2.0 * d.tau_ave);
                (n as f64, d)
            })
            .collect();
        let fit = |f: fn(&PenaltyDiagnostics) -> f64| {
            (f(&ds[2].1) / f(&ds[0].1)).ln() / (ds[2].0 / ds[0].0).ln()
        };
        assert!((fit(|d| d.tau_f) - 1.0).abs() < 0.02);
        assert!((fit(|d| d.tau_ave) - 1.0).abs() < 0.02);
        assert!((fit(|d| d.tau_wop) - 3.0).abs() < 0.02);
    }

    #[test]
    fn shishkin_diagnostics_row() {
        let mesh = generate_mesh(
            MeshFamily::Shishkin {
                delta: 1.0 / 1024.0,
            },
            16,
        )
        .unwrap();
        let d = penalty_diagnostics(&mesh);
        let close = |a: f64, b: f64| ((a - b) / b).abs() < 1e-3;
        assert!(close(d.tau_f, 7.3866e2) && close(d.tau_ave, 3.6942e2));
        assert!(close(d.tau_dg, 3.6942e2) && close(d.tau_wop, 1.9246e4));
    }

    #[test]
    fn dof_counts() {
        let mesh = generate_mesh(MeshFamily::Uniform, 2).unwrap();
        assert_eq!(dof_count(&mesh, Scheme::Wopsip), 56);
        let mesh = generate_mesh(MeshFamily::Uniform, 16).unwrap();
        assert_eq!(dof_count(&mesh, Scheme::Wopsip), 3584);
        assert_eq!(dof_count(&mesh, Scheme::Wbcr), 2112);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let mesh = generate_mesh(MeshFamily::Uniform, 2).unwrap();
        let r = error_report(
            &mesh,
            &polynomial_problem(),
            &[0.0; 3],
            &[0.0; 8],
            Scheme::Wopsip,
            PenaltyMode::Kappa,
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
