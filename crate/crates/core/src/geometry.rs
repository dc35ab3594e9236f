//! Planar geometry shared by the simulator, the planners and the controllers.
//!
//! Everything lives in the world frame, in meters. Polygons are simple
//! (non self-intersecting) and stored counter-clockwise.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

const EPS: f64 = 1e-12;

pub fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

/// Unit heading vector for angle `psi`.
pub fn heading(psi: f64) -> Vec2 {
    Vec2::new(psi.cos(), psi.sin())
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Closest point to `p` on the segment `a`–`b`.
pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < EPS {
        return a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    (p - closest_point_on_segment(p, a, b)).norm()
}

/// Parameter `t` along `a + t (b - a)` where the segment crosses `c`–`d`, if
/// the two segments intersect.
fn segment_crossing(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> Option<f64> {
    let r = b - a;
    let s = d - c;
    let denom = cross(r, s);
    if denom.abs() < EPS {
        return None;
    }
    let t = cross(c - a, s) / denom;
    let u = cross(c - a, r) / denom;
    if (-EPS..=1.0 + EPS).contains(&t) && (-EPS..=1.0 + EPS).contains(&u) {
        Some(t.clamp(0.0, 1.0))
    } else {
        None
    }
}

pub fn segment_segment_distance(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segment_crossing(a, b, c, d).is_some() {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl Polygon {
    /// Builds a polygon, reorienting it counter-clockwise. Returns `None` for
    /// fewer than three vertices or zero area.
    pub fn new(mut vertices: Vec<Vec2>) -> Option<Self> {
        if vertices.len() < 3 {
            return None;
        }
        let area = signed_area(&vertices);
        if area.abs() < EPS {
            return None;
        }
        if area < 0.0 {
            vertices.reverse();
        }
        Some(Self { vertices })
    }

    pub fn from_points(points: &[[f64; 2]]) -> Option<Self> {
        Self::new(points.iter().map(|p| vec2(p[0], p[1])).collect())
    }

    pub fn rectangle(min: Vec2, max: Vec2) -> Self {
        Self::new(vec![min, vec2(max.x, min.y), max, vec2(min.x, max.y)]).expect("degenerate rectangle")
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2 {
        let mut c = Vec2::zeros();
        let mut a = 0.0;
        for (p, q) in self.edges() {
            let w = cross(p, q);
            a += w;
            c += (p + q) * w;
        }
        c / (3.0 * a)
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Point-in-polygon by crossing number; boundary points count as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        if self.boundary_distance(p) < 1e-12 {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        self.edges().map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }

    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for (a, b) in self.edges() {
            let c = closest_point_on_segment(p, a, b);
            let d = (c - p).norm();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            cross(b - a, c - b) >= -EPS
        })
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>() * 0.5
}

/// An obstacle footprint: a disk or a simple polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk { center: Vec2, radius: f64 },
    Polygon(Polygon),
}

impl Shape {
    pub fn disk(center: Vec2, radius: f64) -> Self {
        Shape::Disk { center, radius }
    }

    /// Distance from `p` to the shape; zero inside.
    pub fn distance(&self, p: Vec2) -> f64 {
        match self {
            Shape::Disk { center, radius } => ((p - center).norm() - radius).max(0.0),
            Shape::Polygon(poly) => {
                if poly.contains(p) {
                    0.0
                } else {
                    poly.boundary_distance(p)
                }
            }
        }
    }

    /// Distance from `p` to the boundary, positive inside and outside alike.
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        match self {
            Shape::Disk { center, radius } => ((p - center).norm() - radius).abs(),
            Shape::Polygon(poly) => poly.boundary_distance(p),
        }
    }

    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        match self {
            Shape::Disk { center, radius } => {
                let d = p - center;
                let n = d.norm();
                if n < EPS {
                    center + vec2(*radius, 0.0)
                } else {
                    center + d * (*radius / n)
                }
            }
            Shape::Polygon(poly) => poly.closest_boundary_point(p),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Shape::Disk { center, radius } => (p - center).norm() <= *radius,
            Shape::Polygon(poly) => poly.contains(p),
        }
    }

    /// Minimum distance between the segment `a`–`b` and the shape.
    pub fn segment_distance(&self, a: Vec2, b: Vec2) -> f64 {
        match self {
            Shape::Disk { center, radius } => (point_segment_distance(*center, a, b) - radius).max(0.0),
            Shape::Polygon(poly) => {
                if poly.contains(a) || poly.contains(b) {
                    return 0.0;
                }
                poly.edges().map(|(c, d)| segment_segment_distance(a, b, c, d)).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// True iff the open segment passes through the interior of the shape.
    /// Grazing contact with the boundary does not count.
    pub fn segment_hits_interior(&self, a: Vec2, b: Vec2) -> bool {
        match self {
            Shape::Disk { center, radius } => point_segment_distance(*center, a, b) < radius - 1e-12,
            Shape::Polygon(poly) => {
                let mut ts = vec![0.0, 1.0];
                ts.extend(poly.edges().filter_map(|(c, d)| segment_crossing(a, b, c, d)));
                ts.sort_by(f64::total_cmp);
                ts.windows(2).any(|w| {
                    if w[1] - w[0] < 1e-9 {
                        return false;
                    }
                    let mid = a + (b - a) * (0.5 * (w[0] + w[1]));
                    poly.contains(mid) && poly.boundary_distance(mid) > 1e-12
                })
            }
        }
    }

    /// Boundary points spaced at most `spacing` apart.
    pub fn boundary_samples(&self, spacing: f64) -> Vec<Vec2> {
        match self {
            Shape::Disk { center, radius } => {
                let n = ((std::f64::consts::TAU * radius / spacing).ceil() as usize).max(8);
                (0..n).map(|k| center + heading(std::f64::consts::TAU * k as f64 / n as f64) * *radius).collect()
            }
            Shape::Polygon(poly) => {
                let mut out = Vec::new();
                for (a, b) in poly.edges() {
                    let n = (((b - a).norm() / spacing).ceil() as usize).max(1);
                    for k in 0..n {
                        out.push(a + (b - a) * (k as f64 / n as f64));
                    }
                }
                out
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match self {
            Shape::Disk { center, radius } => (center - vec2(*radius, *radius), center + vec2(*radius, *radius)),
            Shape::Polygon(poly) => poly.bounding_box(),
        }
    }
}

/// Convex polygon clipped by half-planes; used for the local free cell.
#[derive(Debug, Clone)]
pub struct ConvexCell {
    pub vertices: Vec<Vec2>,
}

impl ConvexCell {
    /// Regular `n`-gon inscribed in the circle of radius `radius` about `center`.
    pub fn regular(center: Vec2, radius: f64, n: usize) -> Self {
        let vertices = (0..n).map(|k| center + heading(std::f64::consts::TAU * k as f64 / n as f64) * radius).collect();
        Self { vertices }
    }

    /// Keeps the part satisfying `normal · (q - point) >= offset`.
    pub fn clip(&mut self, normal: Vec2, point: Vec2, offset: f64) {
        let f = |q: &Vec2| normal.dot(&(q - point)) - offset;
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let (fp, fq) = (f(&p), f(&q));
            if fp >= 0.0 {
                out.push(p);
            }
            if (fp >= 0.0) != (fq >= 0.0) {
                let t = fp / (fp - fq);
                out.push(p + (q - p) * t);
            }
        }
        self.vertices = out;
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        n >= 3
            && (0..n).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                cross(b - a, p - a) >= -1e-12
            })
    }

    /// Nearest point of the cell to `p`.
    pub fn project(&self, p: Vec2) -> Vec2 {
        if self.contains(p) {
            return p;
        }
        let n = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            let c = closest_point_on_segment(p, self.vertices[i], self.vertices[(i + 1) % n]);
            let d = (c - p).norm();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    /// Largest `s >= 0` with `origin + s * dir` inside the cell (`dir` unit).
    pub fn ray_extent(&self, origin: Vec2, dir: Vec2) -> f64 {
        let n = self.vertices.len();
        let mut s_max = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let edge = b - a;
            // inward normal of a CCW polygon
            let normal = vec2(-edge.y, edge.x);
            let denom = normal.dot(&dir);
            let slack = normal.dot(&(origin - a));
            if denom < -EPS {
                s_max = s_max.min((slack / -denom).max(0.0));
            }
        }
        s_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon {
        Polygon::rectangle(vec2(0.0, 0.0), vec2(1.0, 1.0))
    }

    #[test]
    fn polygon_orientation_and_centroid() {
        let p = Polygon::from_points(&[[0.0, 0.0], [0.0, 2.0], [2.0, 2.0], [2.0, 0.0]]).unwrap();
        assert!(p.area() > 0.0);
        assert!((p.centroid() - vec2(1.0, 1.0)).norm() < 1e-12);
        assert!(p.is_convex());
    }

    #[test]
    fn containment_and_distance() {
        let s = Shape::Polygon(square());
        assert!(s.contains(vec2(0.5, 0.5)));
        assert!(s.contains(vec2(1.0, 0.5)));
        assert!(!s.contains(vec2(1.5, 0.5)));
        assert!((s.distance(vec2(1.5, 0.5)) - 0.5).abs() < 1e-12);
        assert_eq!(s.distance(vec2(0.2, 0.2)), 0.0);
    }

    #[test]
    fn segment_interior_hits() {
        let s = Shape::Polygon(square());
        assert!(s.segment_hits_interior(vec2(-1.0, 0.5), vec2(2.0, 0.5)));
        // grazing along an edge
        assert!(!s.segment_hits_interior(vec2(-1.0, 0.0), vec2(2.0, 0.0)));
        assert!(!s.segment_hits_interior(vec2(-1.0, 1.5), vec2(2.0, 1.5)));
        let d = Shape::disk(vec2(0.0, 0.0), 0.5);
        assert!(d.segment_hits_interior(vec2(-1.0, 0.0), vec2(1.0, 0.0)));
        assert!(!d.segment_hits_interior(vec2(-1.0, 0.5), vec2(1.0, 0.5)));
    }

    #[test]
    fn nonconvex_segment_check() {
        // U shape opening upward
        let u = Polygon::from_points(&[
            [0.0, 0.0],
            [3.0, 0.0],
            [3.0, 3.0],
            [2.0, 3.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 3.0],
            [0.0, 3.0],
        ])
        .unwrap();
        let s = Shape::Polygon(u);
        assert!(!s.segment_hits_interior(vec2(1.5, 2.9), vec2(1.5, 1.1)));
        assert!(s.segment_hits_interior(vec2(0.5, 2.0), vec2(2.5, 2.0)));
    }

    #[test]
    fn segment_distance_matches_endpoints() {
        let s = Shape::Polygon(square());
        let d = s.segment_distance(vec2(2.0, -1.0), vec2(2.0, 2.0));
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convex_cell_clip_and_project() {
        let mut c = ConvexCell::regular(vec2(0.0, 0.0), 1.0, 16);
        c.clip(vec2(-1.0, 0.0), vec2(0.5, 0.0), 0.0);
        assert!(c.contains(vec2(0.4, 0.0)));
        assert!(!c.contains(vec2(0.6, 0.0)));
        let p = c.project(vec2(2.0, 0.0));
        assert!((p.x - 0.5).abs() < 1e-9);
        let s = c.ray_extent(vec2(0.0, 0.0), vec2(1.0, 0.0));
        assert!((s - 0.5).abs() < 1e-9);
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-12);
    }
}
