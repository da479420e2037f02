//! Convex polygons in heat-map plane coordinates.

use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }
}

/// z-component of (a - o) x (b - o); positive for a left turn.
#[inline]
pub fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex polygon with counter-clockwise vertex order and no collinear
/// vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Validates a vertex list: at least three vertices, strictly convex,
    /// simple and counter-clockwise.
    pub fn from_vertices(vertices: Vec<Point2>) -> Result<Self, String> {
        if vertices.len() < 3 {
            return Err(format!("polygon needs 3 vertices, got {}", vertices.len()));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err("polygon vertex is not finite".into());
        }
        let n = vertices.len();
        let mut winding = 0.0;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross(a, b, c) <= 0.0 {
                return Err(format!("polygon is not strictly convex CCW at vertex {}", (i + 1) % n));
            }
            let t1 = (b.y - a.y).atan2(b.x - a.x);
            let t2 = (c.y - b.y).atan2(c.x - b.x);
            let mut turn = t2 - t1;
            while turn <= 0.0 {
                turn += TAU;
            }
            winding += turn;
        }
        // all-left-turn polygons that wind more than once are self-intersecting
        if (winding - TAU).abs() > 1e-6 {
            return Err("polygon is self-intersecting".into());
        }
        Ok(ConvexPolygon { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    /// Boundary-inclusive containment test.
    #[inline]
    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        let mut prev = self.vertices[n - 1];
        for &v in &self.vertices {
            if cross(prev, v, p) < 0.0 {
                return false;
            }
            prev = v;
        }
        true
    }
}

/// Andrew's monotone chain. Returns the CCW hull without collinear points,
/// or `None` when the points span less than a triangle.
pub fn convex_hull(points: &[Point2]) -> Option<ConvexPolygon> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return None;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return None;
    }
    ConvexPolygon::from_vertices(hull).ok()
}
