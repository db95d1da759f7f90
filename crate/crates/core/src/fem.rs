//! Crouzeix–Raviart and lowest-order Raviart–Thomas elements.
//!
//! Local face `i` of a triangle is the face opposite its vertex `i`. The CR
//! basis `theta_i = 1 - 2 lambda_i` is dual to face means, and the RT basis
//! `theta_i = iota_i (x - P_i) / (2 |T|)` is dual to fluxes through the faces
//! measured against the mesh's stored face normals.

use crate::mesh::Mesh;
use crate::quadrature::{edge_average, integrate_on_triangle, triangle_rule};
use crate::{Error, Point, Result};

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Gradients of the barycentric coordinates of a counterclockwise triangle.
pub fn barycentric_gradients(p: &[Point; 3], area: f64) -> [Point; 3] {
    let s = 0.5 / area;
    std::array::from_fn(|i| {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        [(a[1] - b[1]) * s, (b[0] - a[0]) * s]
    })
}

fn centroid(p: &[Point; 3]) -> Point {
    [
        (p[0][0] + p[1][0] + p[2][0]) / 3.0,
        (p[0][1] + p[1][1] + p[2][1]) / 3.0,
    ]
}

#[derive(Debug, Clone)]
pub struct CrLocalBasis {
    pub triangle: usize,
    /// Constant gradients of the three shape functions.
    pub gradients: [Point; 3],
    centroid: Point,
}

impl CrLocalBasis {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        let p = mesh.triangle_points(t);
        let gl = barycentric_gradients(&p, mesh.triangles[t].area);
        CrLocalBasis {
            triangle: t,
            gradients: gl.map(|g| [-2.0 * g[0], -2.0 * g[1]]),
            centroid: centroid(&p),
        }
    }

    /// Values of the three shape functions at `x`.
    pub fn eval(&self, x: Point) -> [f64; 3] {
        let d = [x[0] - self.centroid[0], x[1] - self.centroid[1]];
        // theta_i(centroid) = 1/3 and theta_i is affine
        self.gradients.map(|g| 1.0 / 3.0 + dot(g, d))
    }

    /// Value of the combination `sum c_i theta_i` at `x`.
    pub fn eval_combination(&self, c: &[f64; 3], x: Point) -> f64 {
        let th = self.eval(x);
        c[0] * th[0] + c[1] * th[1] + c[2] * th[2]
    }

    pub fn gradient_of(&self, c: &[f64; 3]) -> Point {
        let g = &self.gradients;
        [
            c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0],
            c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1],
        ]
    }
}

#[derive(Debug, Clone)]
pub struct RtLocalBasis {
    pub triangle: usize,
    /// `+1` where the stored face normal is outward for this triangle.
    pub signs: [f64; 3],
    vertices: [Point; 3],
    area: f64,
}

impl RtLocalBasis {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        let tri = &mesh.triangles[t];
        RtLocalBasis {
            triangle: t,
            signs: tri.faces.map(|f| mesh.normal_sign(t, f)),
            vertices: mesh.triangle_points(t),
            area: tri.area,
        }
    }

    pub fn eval(&self, i: usize, x: Point) -> Point {
        let s = self.signs[i] / (2.0 * self.area);
        let p = self.vertices[i];
        [s * (x[0] - p[0]), s * (x[1] - p[1])]
    }

    pub fn divergence(&self, i: usize) -> f64 {
        self.signs[i] / self.area
    }

    pub fn eval_combination(&self, c: &[f64; 3], x: Point) -> Point {
        (0..3).fold([0.0, 0.0], |acc, i| {
            let v = self.eval(i, x);
            [acc[0] + c[i] * v[0], acc[1] + c[i] * v[1]]
        })
    }

    pub fn divergence_of(&self, c: &[f64; 3]) -> f64 {
        (0..3).map(|i| c[i] * self.divergence(i)).sum()
    }
}

/// CR degrees of freedom of `v` on triangle `t`: its means over the three faces.
pub fn cr_interpolate_local(mesh: &Mesh, t: usize, v: impl Fn(Point) -> f64) -> [f64; 3] {
    mesh.triangles[t].faces.map(|f| {
        let [a, b] = mesh.face_points(f);
        edge_average(&v, a, b)
    })
}

/// RT degrees of freedom of `v` on triangle `t`: fluxes through the faces
/// along the stored face normals.
pub fn rt_interpolate_local(mesh: &Mesh, t: usize, v: impl Fn(Point) -> Point) -> [f64; 3] {
    mesh.triangles[t].faces.map(|f| {
        let face = &mesh.faces[f];
        let [a, b] = mesh.face_points(f);
        face.length * edge_average(|x| dot(v(x), face.normal), a, b)
    })
}

/// Cell mean of `f` (degree-5 quadrature).
pub fn l2_project_cell(mesh: &Mesh, t: usize, f: impl Fn(Point) -> f64) -> f64 {
    let tri = &mesh.triangles[t];
    let rule = triangle_rule(5).expect("degree 5 is supported");
    integrate_on_triangle(f, &mesh.triangle_points(t), tri.area, rule) / tri.area
}

/// Face mean of `g` (3-point Gauss).
pub fn l2_project_face(mesh: &Mesh, f: usize, g: impl Fn(Point) -> f64) -> f64 {
    let [a, b] = mesh.face_points(f);
    edge_average(g, a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofLayout {
    /// Discontinuous CR: three unknowns per triangle and component.
    WopsipCell,
    /// Classical CR: one unknown per interior face and component; boundary
    /// face values are fixed to zero.
    WbcrEdge,
}

/// Global numbering of velocity and pressure unknowns.
///
/// Velocity unknowns are stored component-major: all `x1` unknowns first,
/// then all `x2` unknowns. Pressures are one per triangle, in triangle order.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub layout: DofLayout,
    num_triangles: usize,
    num_faces: usize,
    per_component: usize,
    face_unknown: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, layout: DofLayout) -> Self {
        let ne = mesh.num_triangles();
        match layout {
            DofLayout::WopsipCell => DofMap {
                layout,
                num_triangles: ne,
                num_faces: mesh.num_faces(),
                per_component: 3 * ne,
                face_unknown: Vec::new(),
            },
            DofLayout::WbcrEdge => {
                let mut face_unknown = vec![None; mesh.num_faces()];
                for (k, &f) in mesh.interior_faces.iter().enumerate() {
                    face_unknown[f] = Some(k);
                }
                DofMap {
                    layout,
                    num_triangles: ne,
                    num_faces: mesh.num_faces(),
                    per_component: mesh.interior_faces.len(),
                    face_unknown,
                }
            }
        }
    }

    /// Velocity unknowns of one component.
    pub fn per_component(&self) -> usize {
        self.per_component
    }

    pub fn velocity_unknowns(&self) -> usize {
        2 * self.per_component
    }

    pub fn pressure_unknowns(&self) -> usize {
        self.num_triangles
    }

    /// Nodal points of the velocity-pressure pair, boundary included.
    pub fn nodal_points(&self) -> usize {
        match self.layout {
            DofLayout::WopsipCell => 7 * self.num_triangles,
            DofLayout::WbcrEdge => 2 * self.num_faces + self.num_triangles,
        }
    }

    /// Global index of the velocity unknown for component `comp` attached to
    /// local face `local` of triangle `t`; `None` for eliminated boundary values.
    pub fn velocity_index(
        &self,
        mesh: &Mesh,
        t: usize,
        local: usize,
        comp: usize,
    ) -> Option<usize> {
        let base = comp * self.per_component;
        match self.layout {
            DofLayout::WopsipCell => Some(base + 3 * t + local),
            DofLayout::WbcrEdge => {
                self.face_unknown[mesh.triangles[t].faces[local]].map(|k| base + k)
            }
        }
    }

    /// Unknown index of face `f` within one component (WBCR only).
    pub fn face_unknown(&self, f: usize) -> Option<usize> {
        self.face_unknown.get(f).copied().flatten()
    }

    /// Local CR coefficients `[component][local face]` of `u` on triangle `t`.
    pub fn local_coefficients(&self, mesh: &Mesh, u: &[f64], t: usize) -> [[f64; 3]; 2] {
        std::array::from_fn(|comp| {
            std::array::from_fn(|local| {
                self.velocity_index(mesh, t, local, comp)
                    .map_or(0.0, |k| u[k])
            })
        })
    }
}

/// Global CR interpolant of a continuous vector field.
pub fn global_interpolate_cr(mesh: &Mesh, v: impl Fn(Point) -> Point, dofs: &DofMap) -> Vec<f64> {
    let mut out = vec![0.0; dofs.velocity_unknowns()];
    match dofs.layout {
        DofLayout::WopsipCell => {
            for t in 0..mesh.num_triangles() {
                for comp in 0..2 {
                    let c = cr_interpolate_local(mesh, t, |x| v(x)[comp]);
                    for (local, value) in c.into_iter().enumerate() {
                        let k = dofs
                            .velocity_index(mesh, t, local, comp)
                            .expect("cell layout has every index");
                        out[k] = value;
                    }
                }
            }
        }
        DofLayout::WbcrEdge => {
            let n = dofs.per_component();
            for &f in &mesh.interior_faces {
                let k = dofs.face_unknown(f).expect("interior face has an unknown");
                for comp in 0..2 {
                    out[comp * n + k] = l2_project_face(mesh, f, |x| v(x)[comp]);
                }
            }
        }
    }
    out
}

/// Validates that `u` and `p` have the sizes `dofs` expects.
pub fn check_sizes(dofs: &DofMap, u: &[f64], p: &[f64]) -> Result<()> {
    if u.len() != dofs.velocity_unknowns() {
        return Err(Error::DimensionMismatch {
            expected: dofs.velocity_unknowns(),
            actual: u.len(),
        });
    }
    if p.len() != dofs.pressure_unknowns() {
        return Err(Error::DimensionMismatch {
            expected: dofs.pressure_unknowns(),
            actual: p.len(),
        });
    }
    Ok(())
}
