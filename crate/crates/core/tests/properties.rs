//! Randomised invariants of meshes, assembled operators and rates.

use proptest::prelude::*;
use wopsip_core::analysis::convergence_rate;
use wopsip_core::fem::global_interpolate_cr;
use wopsip_core::mesh::Adjacency;
use wopsip_core::{
    assemble_wopsip, face_penalty_weight, generate_mesh, mesh_quality, polynomial_problem, Mesh,
    MeshFamily, PenaltyMode,
};

fn family() -> impl Strategy<Value = MeshFamily> {
    prop_oneof![
        Just(MeshFamily::Uniform),
        (1e-4f64..0.02).prop_map(|delta| MeshFamily::Shishkin { delta }),
        Just(MeshFamily::CosineGraded),
        Just(MeshFamily::QuadraticGraded),
    ]
}

fn centroid(mesh: &Mesh, t: usize) -> [f64; 2] {
    let p = mesh.triangle_points(t);
    [
        (p[0][0] + p[1][0] + p[2][0]) / 3.0,
        (p[0][1] + p[1][1] + p[2][1]) / 3.0,
    ]
}

proptest! {
    // Shishkin grids need an even number of divisions, so n = 2k throughout
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mesh_counts_and_areas(family in family(), k in 1usize..12) {
        let n = 2 * k;
        let mesh = generate_mesh(family, n).unwrap();
        prop_assert_eq!(mesh.num_triangles(), 2 * n * n);
        prop_assert_eq!(mesh.num_faces(), 3 * n * n + 2 * n);
        prop_assert_eq!(mesh.boundary_faces.len(), 4 * n);
        prop_assert_eq!(mesh.interior_faces.len() + mesh.boundary_faces.len(), mesh.num_faces());
        let area: f64 = mesh.triangles.iter().map(|t| t.area).sum();
        prop_assert!((area - 1.0).abs() < 1e-12);
        prop_assert!(mesh.triangles.iter().all(|t| t.area > 0.0));
    }

    #[test]
    fn faces_are_consistent(family in family(), k in 1usize..8) {
        let n = 2 * k;
        let mesh = generate_mesh(family, n).unwrap();
        for (f, face) in mesh.faces.iter().enumerate() {
            prop_assert!((face.normal[0].hypot(face.normal[1]) - 1.0).abs() < 1e-13);
            for (side, t) in face.triangles().enumerate() {
                prop_assert!(mesh.local_face_index(t, f).is_some());
                // ell is the height of t over the face
                let ell = 2.0 * mesh.triangles[t].area / face.length;
                prop_assert!((face.ell()[side] - ell).abs() <= 1e-12 * ell);
            }
            if let Adjacency::Interior { t1, t2 } = face.adjacency {
                let (c1, c2) = (centroid(&mesh, t1), centroid(&mesh, t2));
                prop_assert!((c2[0] - c1[0]) * face.normal[0] + (c2[1] - c1[1]) * face.normal[1] > 0.0);
            }
        }
    }

    #[test]
    fn right_triangles_have_unit_max_angle_metric(family in family(), k in 1usize..16) {
        // every cell is a right triangle, so |L1| |L2| = 2 |T|
        let q = mesh_quality(&generate_mesh(family, 2 * k).unwrap());
        prop_assert!((q.max_angle_metric - 2.0).abs() < 1e-9);
        prop_assert!(q.min_angle_metric >= 4.0 - 1e-9);
    }

    #[test]
    fn constant_field_only_sees_boundary_penalty(family in family(), k in 1usize..5, c0 in -2.0f64..2.0, c1 in -2.0f64..2.0) {
        let n = 2 * k;
        let mesh = generate_mesh(family, n).unwrap();
        let sys = assemble_wopsip(&mesh, &polynomial_problem(), PenaltyMode::Kappa).unwrap();
        let u = global_interpolate_cr(&mesh, |_| [c0, c1], &sys.dofs);
        let expected: f64 = mesh
            .boundary_faces
            .iter()
            .map(|&f| face_penalty_weight(&mesh.faces[f], mesh.h, PenaltyMode::Kappa))
            .sum::<f64>()
            * (c0 * c0 + c1 * c1);
        let got = sys.a.quadratic_form(&u);
        prop_assert!((got - expected).abs() <= 1e-10 * expected.max(1e-300));
    }

    #[test]
    fn rates_are_antisymmetric_and_halving_is_one(a in 1e-8f64..1e3, b in 1e-8f64..1e3) {
        let r = convergence_rate(a, b).unwrap();
        prop_assert!((r + convergence_rate(b, a).unwrap()).abs() < 1e-12);
        prop_assert!((convergence_rate(a, a / 2.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
