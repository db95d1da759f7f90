//! Structured triangulations of the unit square.
//!
//! Every mesh is a tensor grid with uniform `x1` lines and family-dependent
//! `x2` lines. Each grid cell is cut by the diagonal running from its
//! lower-left to its upper-right corner, so every triangle is right-angled.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use crate::{Error, Point, Result};

/// The four grid families used for convergence studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshFamily {
    /// Mesh I: uniform in both directions.
    Uniform,
    /// Mesh II: piecewise uniform in `x2` with the transition point
    /// `tau = 4 delta ln N`, half of the rows below it.
    Shishkin { delta: f64 },
    /// Mesh III: `x2_i = (1 - cos(i pi / N)) / 2`.
    CosineGraded,
    /// Mesh IV: `x2_i = (i / N)^2`.
    QuadraticGraded,
}

impl MeshFamily {
    /// Shishkin transition point for `n` divisions.
    pub fn shishkin_tau(delta: f64, n: usize) -> f64 {
        4.0 * delta * (n as f64).ln().abs()
    }

    /// Checks that a mesh with `n` divisions can be generated.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::InvalidMesh(format!("need n >= 2, got {n}")));
        }
        if let MeshFamily::Shishkin { delta } = *self {
            if !(delta > 0.0 && delta < 0.25) {
                return Err(Error::InvalidMesh(format!(
                    "Shishkin delta must lie in (0, 1/4), got {delta}"
                )));
            }
            if n % 2 != 0 {
                return Err(Error::InvalidMesh(format!(
                    "Shishkin mesh needs an even n, got {n}"
                )));
            }
            let tau = Self::shishkin_tau(delta, n);
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidMesh(format!(
                    "Shishkin transition tau = {tau} must lie in (0, 1) (delta = {delta}, n = {n})"
                )));
            }
        }
        Ok(())
    }

    /// Grid lines in the `x2` direction, `n + 1` increasing values from 0 to 1.
    fn x2_lines(&self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        match *self {
            MeshFamily::Uniform => (0..=n).map(|i| i as f64 / nf).collect(),
            MeshFamily::Shishkin { delta } => {
                let tau = Self::shishkin_tau(delta, n);
                let half = n / 2;
                (0..=n)
                    .map(|i| {
                        if i <= half {
                            tau * (2.0 / nf) * i as f64
                        } else {
                            // measured from the top so the last line is exactly 1
                            1.0 - (1.0 - tau) * (2.0 / nf) * (n - i) as f64
                        }
                    })
                    .collect()
            }
            MeshFamily::CosineGraded => (0..=n)
                .map(|i| 0.5 * (1.0 - (i as f64 * std::f64::consts::PI / nf).cos()))
                .collect(),
            MeshFamily::QuadraticGraded => (0..=n)
                .map(|i| {
                    let t = i as f64 / nf;
                    t * t
                })
                .collect(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MeshFamily::Uniform => "uniform",
            MeshFamily::Shishkin { .. } => "shishkin",
            MeshFamily::CosineGraded => "cosine",
            MeshFamily::QuadraticGraded => "quadratic",
        }
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshFamily::Shishkin { delta } => write!(f, "shishkin(delta={delta})"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Triangle {
    /// Counterclockwise vertex ids.
    pub vertices: [usize; 3],
    pub area: f64,
    /// Longest edge length.
    pub diameter: f64,
    /// `faces[i]` is the face opposite `vertices[i]`.
    pub faces: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjacency {
    /// `t1 < t2`; the face normal points from `t1` into `t2`.
    Interior {
        t1: usize,
        t2: usize,
    },
    Boundary {
        t: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: [usize; 2],
    pub length: f64,
    pub midpoint: Point,
    pub normal: Point,
    pub adjacency: Adjacency,
    /// Distance from the opposite vertex of each adjacent triangle to the
    /// face, in adjacency order. Only the first entry is used on boundary
    /// faces.
    ell: [f64; 2],
}

impl Face {
    pub fn is_interior(&self) -> bool {
        matches!(self.adjacency, Adjacency::Interior { .. })
    }

    /// One value per adjacent triangle.
    pub fn ell(&self) -> &[f64] {
        match self.adjacency {
            Adjacency::Interior { .. } => &self.ell,
            Adjacency::Boundary { .. } => &self.ell[..1],
        }
    }

    /// Adjacent triangles in adjacency order.
    pub fn triangles(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match self.adjacency {
            Adjacency::Interior { t1, t2 } => (t1, Some(t2)),
            Adjacency::Boundary { t } => (t, None),
        };
        std::iter::once(a).chain(b)
    }
}

/// Geometry of a single face as consumed by the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGeometry<'a> {
    pub length: f64,
    pub normal: Point,
    pub midpoint: Point,
    pub ell: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub family: MeshFamily,
    pub n: usize,
    pub vertices: Vec<Point>,
    pub triangles: Vec<Triangle>,
    pub faces: Vec<Face>,
    pub interior_faces: Vec<usize>,
    pub boundary_faces: Vec<usize>,
    /// Largest triangle diameter.
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    /// `max_T |L3|^2 / |T|` with `L3` the longest edge.
    pub min_angle_metric: f64,
    /// `max_T |L1| |L2| / |T|` with `L1`, `L2` the two shorter edges.
    pub max_angle_metric: f64,
    pub h: f64,
    /// `max_T H_T / h_T` where `H_T = h1 h2 h_T / |T|`.
    pub semi_regularity: f64,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Builds the tensor-grid triangulation of `(0,1)^2` with `n` divisions per side.
pub fn generate_mesh(family: MeshFamily, n: usize) -> Result<Mesh> {
    family.validate(n)?;
    let x2 = family.x2_lines(n);
    let nf = n as f64;
    let row = n + 1;

    let mut vertices = Vec::with_capacity(row * row);
    for &y in &x2 {
        for i in 0..=n {
            vertices.push([i as f64 / nf, y]);
        }
    }

    let mut tri_vertices = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * row + i;
            let v10 = v00 + 1;
            let v01 = v00 + row;
            let v11 = v01 + 1;
            tri_vertices.push([v00, v10, v11]);
            tri_vertices.push([v00, v11, v01]);
        }
    }

    let mut triangles = Vec::with_capacity(tri_vertices.len());
    let mut faces: Vec<Face> = Vec::with_capacity(3 * n * n + 2 * n);
    let mut edge_lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * n * n + 2 * n);

    for (t, &tv) in tri_vertices.iter().enumerate() {
        let p = tv.map(|v| vertices[v]);
        let signed = 0.5 * cross(sub(p[1], p[0]), sub(p[2], p[0]));
        if signed <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "triangle {t} has non-positive signed area {signed}"
            )));
        }
        let area = signed;
        let edges = [
            norm(sub(p[2], p[1])),
            norm(sub(p[0], p[2])),
            norm(sub(p[1], p[0])),
        ];
        let diameter = edges.iter().copied().fold(0.0, f64::max);

        let mut face_ids = [0usize; 3];
        for local in 0..3 {
            let a = tv[(local + 1) % 3];
            let b = tv[(local + 2) % 3];
            let key = (a.min(b), a.max(b));
            let ell = 2.0 * area / edges[local];
            let id = match edge_lookup.get(&key) {
                Some(&id) => {
                    let face = &mut faces[id];
                    let Adjacency::Boundary { t: t1 } = face.adjacency else {
                        return Err(Error::InvalidMesh(format!(
                            "edge {key:?} shared by more than two triangles"
                        )));
                    };
                    face.adjacency = Adjacency::Interior { t1, t2: t };
                    face.ell[1] = ell;
                    id
                }
                None => {
                    let (pa, pb) = (vertices[a], vertices[b]);
                    let d = sub(pb, pa);
                    let length = norm(d);
                    // Counterclockwise traversal: the outward normal is the
                    // edge direction rotated clockwise.
                    let normal = [d[1] / length, -d[0] / length];
                    let id = faces.len();
                    faces.push(Face {
                        vertices: [a, b],
                        length,
                        midpoint: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                        normal,
                        adjacency: Adjacency::Boundary { t },
                        ell: [ell, f64::NAN],
                    });
                    edge_lookup.insert(key, id);
                    id
                }
            };
            face_ids[local] = id;
        }
        triangles.push(Triangle {
            vertices: tv,
            area,
            diameter,
            faces: face_ids,
        });
    }

    let mut interior_faces = Vec::new();
    let mut boundary_faces = Vec::new();
    for (id, face) in faces.iter().enumerate() {
        match face.adjacency {
            Adjacency::Interior { .. } => interior_faces.push(id),
            Adjacency::Boundary { .. } => {
                let [a, b] = face.vertices.map(|v| vertices[v]);
                let on_boundary =
                    (0..2).any(|k| (a[k] == 0.0 && b[k] == 0.0) || (a[k] == 1.0 && b[k] == 1.0));
                if !on_boundary {
                    return Err(Error::InvalidMesh(format!(
                        "face {id} has one neighbour but is not on the boundary"
                    )));
                }
                boundary_faces.push(id);
            }
        }
    }

    let h = triangles.iter().map(|t| t.diameter).fold(0.0, f64::max);
    Ok(Mesh {
        family,
        n,
        vertices,
        triangles,
        faces,
        interior_faces,
        boundary_faces,
        h,
    })
}

impl Mesh {
    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].vertices.map(|v| self.vertices[v])
    }

    pub fn face_points(&self, f: usize) -> [Point; 2] {
        self.faces[f].vertices.map(|v| self.vertices[v])
    }

    /// Local index of face `f` within triangle `t`.
    pub fn local_face_index(&self, t: usize, f: usize) -> Option<usize> {
        self.triangles[t].faces.iter().position(|&g| g == f)
    }

    /// `+1` when the stored normal of `f` is the outward normal of `t`.
    pub fn normal_sign(&self, t: usize, f: usize) -> f64 {
        match self.faces[f].adjacency {
            Adjacency::Interior { t2, .. } if t2 == t => -1.0,
            _ => 1.0,
        }
    }

    pub fn face_geometry(&self, face: usize) -> Result<FaceGeometry<'_>> {
        let f = self.faces.get(face).ok_or(Error::OutOfRange {
            index: face,
            len: self.faces.len(),
        })?;
        Ok(FaceGeometry {
            length: f.length,
            normal: f.normal,
            midpoint: f.midpoint,
            ell: f.ell(),
        })
    }

    /// Writes the mesh as `v <count>` / `x y` lines followed by `t <count>` /
    /// `i j k` lines (0-based, counterclockwise).
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "v {}", self.vertices.len())?;
        for [x, y] in &self.vertices {
            writeln!(out, "{x:e} {y:e}")?;
        }
        writeln!(out, "t {}", self.triangles.len())?;
        for t in &self.triangles {
            let [i, j, k] = t.vertices;
            writeln!(out, "{i} {j} {k}")?;
        }
        Ok(())
    }
}

/// Sorted edge lengths `L1 <= L2 <= L3` of a triangle.
fn sorted_edges(p: [Point; 3]) -> [f64; 3] {
    let mut e = [
        norm(sub(p[2], p[1])),
        norm(sub(p[0], p[2])),
        norm(sub(p[1], p[0])),
    ];
    e.sort_by(f64::total_cmp);
    e
}

pub fn mesh_quality(mesh: &Mesh) -> MeshQuality {
    let mut q = MeshQuality {
        min_angle_metric: 0.0,
        max_angle_metric: 0.0,
        h: mesh.h,
        semi_regularity: 0.0,
    };
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [l1, l2, l3] = sorted_edges(mesh.triangle_points(t));
        q.min_angle_metric = q.min_angle_metric.max(l3 * l3 / tri.area);
        q.max_angle_metric = q.max_angle_metric.max(l1 * l2 / tri.area);
        // H_T / h_T with h1 the middle and h2 the shortest edge.
        q.semi_regularity = q.semi_regularity.max(l2 * l1 / tri.area);
    }
    q
}
