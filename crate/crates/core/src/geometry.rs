//! Planar geometry helpers: points, polylines and convex polygons.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, o: &Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn sub(&self, o: &Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(&self, o: &Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(&self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }

    pub fn dot(&self, o: &Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(&self, o: &Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn lerp(&self, o: &Point2, t: f64) -> Point2 {
        Point2::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % std::f64::consts::TAU;
    if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    } else if r <= -std::f64::consts::PI {
        r += std::f64::consts::TAU;
    }
    r
}

pub fn polyline_length(pts: &[Point2]) -> f64 {
    pts.windows(2).map(|w| w[0].dist(&w[1])).sum()
}

/// Point at arc length `s` along a polyline (clamped to its ends).
pub fn polyline_point_at(pts: &[Point2], s: f64) -> Point2 {
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let l = w[0].dist(&w[1]);
        if acc + l >= s && l > 0.0 {
            return w[0].lerp(&w[1], ((s - acc) / l).clamp(0.0, 1.0));
        }
        acc += l;
    }
    *pts.last().expect("non-empty polyline")
}

/// Closest point on a polyline: (distance, arc length of the foot point).
pub fn polyline_project(pts: &[Point2], p: &Point2) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let seg = w[1].sub(&w[0]);
        let l2 = seg.dot(&seg);
        let t = if l2 > 0.0 {
            (p.sub(&w[0]).dot(&seg) / l2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = w[0].lerp(&w[1], t);
        let d = q.dist(p);
        if d < best.0 {
            best = (d, acc + t * l2.sqrt());
        }
        acc += l2.sqrt();
    }
    best
}

/// Convex hull (counter-clockwise, no repeated closing vertex).
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.dist(b) < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point2, a: &Point2, b: &Point2| a.sub(o).cross(&b.sub(o));
    let mut lower: Vec<Point2> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn is_convex_ccw(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        b.sub(&a).cross(&c.sub(&b)) >= -1e-12
    })
}

/// Places a body-frame polygon at pose `(x, y, heading)`.
pub fn transform_polygon(body: &[Point2], x: f64, y: f64, heading: f64) -> Vec<Point2> {
    let (s, c) = heading.sin_cos();
    body.iter()
        .map(|p| Point2::new(x + c * p.x - s * p.y, y + s * p.x + c * p.y))
        .collect()
}

/// Axis-aligned rectangle centered on the origin.
pub fn rectangle(length: f64, width: f64) -> Vec<Point2> {
    let (l, w) = (length / 2.0, width / 2.0);
    vec![
        Point2::new(-l, -w),
        Point2::new(l, -w),
        Point2::new(l, w),
        Point2::new(-l, w),
    ]
}

/// Euclidean distance from a point to a convex CCW polygon, zero inside.
pub fn point_polygon_distance<S: Scalar>(px: S, py: S, poly: &[Point2]) -> S {
    let n = poly.len();
    let mut inside = true;
    let mut best: Option<S> = None;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let (rx, ry) = (px - a.x, py - a.y);
        if (ry * ex - rx * ey).re() < 0.0 {
            inside = false;
        }
        let l2 = ex * ex + ey * ey;
        let t = (rx * ex + ry * ey) / l2;
        let d2 = if t.re() <= 0.0 {
            rx * rx + ry * ry
        } else if t.re() >= 1.0 {
            (px - b.x).sq() + (py - b.y).sq()
        } else {
            // perpendicular distance squared
            let c = ry * ex - rx * ey;
            c * c / l2
        };
        best = Some(match best {
            Some(m) if m.re() <= d2.re() => m,
            _ => d2,
        });
    }
    if inside {
        return S::zero();
    }
    best.map(|d2| d2.sqrt()).unwrap_or_else(S::zero)
}

/// Separating-axis test for two convex polygons.
pub fn polygons_intersect(a: &[Point2], b: &[Point2]) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            let axis = Point2::new(-(q.y - p.y), q.x - p.x);
            let (amin, amax) = project_range(a, &axis);
            let (bmin, bmax) = project_range(b, &axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
    }
    true
}

fn project_range(poly: &[Point2], axis: &Point2) -> (f64, f64) {
    poly.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let v = p.dot(axis);
            (lo.min(v), hi.max(v))
        })
}

/// Intersection of the ray `origin + t * dir` (t >= 0) with a polyline;
/// returns the smallest `t`.
pub fn ray_polyline_hit(origin: &Point2, dir: &Point2, pts: &[Point2]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for w in pts.windows(2) {
        let e = w[1].sub(&w[0]);
        let den = dir.cross(&e);
        if den.abs() < 1e-12 {
            continue;
        }
        let r = w[0].sub(origin);
        let t = r.cross(&e) / den;
        let u = r.cross(dir) / den;
        if t >= 0.0 && (-1e-9..=1.0 + 1e-9).contains(&u) && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.5, 0.5),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.2, 0.7),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(is_convex_ccw(&h));
    }

    #[test]
    fn point_polygon_distance_cases() {
        let sq = rectangle(2.0, 2.0);
        assert_eq!(point_polygon_distance(0.2, 0.1, &sq), 0.0);
        assert!((point_polygon_distance(3.0, 0.0, &sq) - 2.0).abs() < 1e-12);
        assert!((point_polygon_distance(4.0, 5.0, &sq) - (9.0f64 + 16.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sat_overlap() {
        let a = rectangle(2.0, 2.0);
        let b = transform_polygon(&rectangle(2.0, 2.0), 1.5, 0.0, 0.3);
        let c = transform_polygon(&rectangle(2.0, 2.0), 5.0, 0.0, 0.0);
        assert!(polygons_intersect(&a, &b));
        assert!(!polygons_intersect(&a, &c));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ray_hits_parallel_line() {
        let line = vec![Point2::new(-10.0, 2.0), Point2::new(10.0, 2.0)];
        let t = ray_polyline_hit(&Point2::new(0.0, 0.0), &Point2::new(0.0, 1.0), &line).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(ray_polyline_hit(&Point2::new(0.0, 0.0), &Point2::new(0.0, -1.0), &line).is_none());
    }
}
