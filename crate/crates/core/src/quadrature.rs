//! Symmetric quadrature on triangles and Gauss rules on edges.
//!
//! Triangle rules are stored in barycentric form with weights normalised to
//! sum to one; applying a rule multiplies by the triangle area.

use std::sync::OnceLock;

use crate::{Error, Point, Result};

#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical quadrature points of the triangle `p` paired with their
    /// area-scaled weights.
    pub fn mapped<'a>(
        &'a self,
        p: &'a [Point; 3],
        area: f64,
    ) -> impl Iterator<Item = (Point, f64)> + 'a {
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(b, &w)| (barycentric_to_point(p, *b), w * area))
    }

    /// Expands every point into its full orbit under permutations of the
    /// barycentric coordinates, splitting the weight evenly.
    fn symmetrised(self) -> QuadRule {
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut points = Vec::with_capacity(6 * self.points.len());
        let mut weights = Vec::with_capacity(6 * self.points.len());
        for (b, &w) in self.points.iter().zip(&self.weights) {
            for perm in PERMS {
                points.push(perm.map(|k| b[k]));
                weights.push(w / 6.0);
            }
        }
        QuadRule {
            points,
            weights,
            exact_degree: self.exact_degree,
        }
    }
}

pub fn barycentric_to_point(p: &[Point; 3], b: [f64; 3]) -> Point {
    [
        b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
        b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
    ]
}

fn degree2() -> QuadRule {
    let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
    QuadRule {
        points: vec![[a, b, b], [b, a, b], [b, b, a]],
        weights: vec![1.0 / 3.0; 3],
        exact_degree: 2,
    }
}

/// Seven-point Radon rule.
fn degree5() -> QuadRule {
    let s15 = 15f64.sqrt();
    let b1 = (6.0 + s15) / 21.0;
    let a1 = (9.0 - 2.0 * s15) / 21.0;
    let w1 = (155.0 + s15) / 1200.0;
    let b2 = (6.0 - s15) / 21.0;
    let a2 = (9.0 + 2.0 * s15) / 21.0;
    let w2 = (155.0 - s15) / 1200.0;
    let third = 1.0 / 3.0;
    QuadRule {
        points: vec![
            [third, third, third],
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ],
        weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
        exact_degree: 5,
    }
}

/// Collapsed-square Gauss product rule made symmetric by averaging over the
/// six vertex permutations.
fn degree10() -> QuadRule {
    let (nodes, gw) = gauss_legendre_unit(6);
    let mut points = Vec::with_capacity(36);
    let mut weights = Vec::with_capacity(36);
    for (&u, &wu) in nodes.iter().zip(&gw) {
        for (&v, &wv) in nodes.iter().zip(&gw) {
            let x = u;
            let y = v * (1.0 - u);
            points.push([1.0 - x - y, x, y]);
            // reference area 1/2 normalised to total weight 1
            weights.push(2.0 * wu * wv * (1.0 - u));
        }
    }
    QuadRule {
        points,
        weights,
        exact_degree: 10,
    }
    .symmetrised()
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
    }
    (nodes, weights)
}

/// A symmetric positive-weight rule exact at least to `degree`.
pub fn triangle_rule(degree: usize) -> Result<&'static QuadRule> {
    static D2: OnceLock<QuadRule> = OnceLock::new();
    static D5: OnceLock<QuadRule> = OnceLock::new();
    static D10: OnceLock<QuadRule> = OnceLock::new();
    match degree {
        2 => Ok(D2.get_or_init(degree2)),
        5 => Ok(D5.get_or_init(degree5)),
        10 => Ok(D10.get_or_init(degree10)),
        other => Err(Error::UnsupportedDegree(other)),
    }
}

pub fn integrate_on_triangle(
    f: impl Fn(Point) -> f64,
    p: &[Point; 3],
    area: f64,
    rule: &QuadRule,
) -> f64 {
    rule.mapped(p, area).map(|(x, w)| w * f(x)).sum()
}

/// Three-point Gauss rule on `[0, 1]`, exact to degree 5.
pub const EDGE_GAUSS3: ([f64; 3], [f64; 3]) = {
    // sqrt(3/5) / 2
    let d = 0.387_298_334_620_741_7;
    (
        [0.5 - d, 0.5, 0.5 + d],
        [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
    )
};

/// Points of the 3-point Gauss rule on the segment `a b`, with weights
/// normalised to sum to one.
pub fn edge_gauss_points(a: Point, b: Point) -> impl Iterator<Item = (Point, f64)> {
    let (s, w) = EDGE_GAUSS3;
    (0..3).map(move |q| {
        (
            [a[0] + s[q] * (b[0] - a[0]), a[1] + s[q] * (b[1] - a[1])],
            w[q],
        )
    })
}

/// Mean value of `g` over the segment `a b` by 3-point Gauss.
pub fn edge_average(g: impl Fn(Point) -> f64, a: Point, b: Point) -> f64 {
    edge_gauss_points(a, b).map(|(x, w)| w * g(x)).sum()
}

/// Vector-valued [`edge_average`].
pub fn edge_average_vec(g: impl Fn(Point) -> Point, a: Point, b: Point) -> Point {
    edge_gauss_points(a, b).fold([0.0, 0.0], |acc, (x, w)| {
        let v = g(x);
        [acc[0] + w * v[0], acc[1] + w * v[1]]
    })
}

/// Value of `g` at the midpoint of `a b`; the face mean of any affine trace.
pub fn edge_midpoint_value<T>(g: impl Fn(Point) -> T, a: Point, b: Point) -> T {
    g([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])])
}
