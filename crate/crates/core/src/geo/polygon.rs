use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Planar polygon in world meters with optional holes and string attributes.
///
/// Rings are stored closed (first vertex repeated at the end).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
    pub attributes: BTreeMap<String, String>,
}

impl Polygon {
    /// Builds a polygon, closing every ring. Fails on rings with fewer than
    /// three distinct vertices or non-finite coordinates.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let p = Self {
            exterior: close_ring(exterior),
            holes: holes.into_iter().map(close_ring).collect(),
            attributes: BTreeMap::new(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Axis-aligned rectangle spanning `[min_x, max_x] x [min_y, max_y]`.
    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Self::new(
            vec![
                Point::new(min_x, min_y),
                Point::new(max_x, min_y),
                Point::new(max_x, max_y),
                Point::new(min_x, max_y),
            ],
            Vec::new(),
        )
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        for ring in self.rings() {
            if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(Error::InvalidPolygon("non-finite vertex".into()));
            }
            let mut distinct: Vec<Point> = Vec::new();
            for p in ring {
                if !distinct.contains(p) {
                    distinct.push(*p);
                }
            }
            if distinct.len() < 3 {
                return Err(Error::InvalidPolygon(format!(
                    "ring has {} distinct vertices, need at least 3",
                    distinct.len()
                )));
            }
        }
        Ok(())
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Point>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Unsigned area: exterior minus holes.
    pub fn area(&self) -> f64 {
        let outer = signed_area(&self.exterior).abs();
        let holes: f64 = self.holes.iter().map(|h| signed_area(h).abs()).sum();
        (outer - holes).max(0.0)
    }

    /// `(min_x, min_y, max_x, max_y)` over all rings, holes included.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.rings().flatten() {
            b.0 = b.0.min(p.x);
            b.1 = b.1.min(p.y);
            b.2 = b.2.max(p.x);
            b.3 = b.3.max(p.y);
        }
        b
    }

    /// Even-odd membership over all rings.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        point_in_rings(self.rings().map(Vec::as_slice), x, y)
    }

    pub fn is_convex(&self) -> bool {
        if !self.holes.is_empty() {
            return false;
        }
        let pts = open_ring(&self.exterior);
        let n = pts.len();
        let mut sign = 0.0f64;
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            let c = pts[(i + 2) % n];
            let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
            if cross != 0.0 {
                if sign != 0.0 && cross.signum() != sign {
                    return false;
                }
                sign = cross.signum();
            }
        }
        true
    }

    /// Area of `self ∩ other`.
    ///
    /// Exact when either polygon is convex and hole-free (Sutherland-Hodgman
    /// clipping); otherwise counted on a point lattice of spacing
    /// `fallback_step` meters over the shared bounding box.
    pub fn intersection_area(&self, other: &Polygon, fallback_step: f64) -> f64 {
        let a = self.bbox();
        let b = other.bbox();
        let (x0, y0, x1, y1) = (a.0.max(b.0), a.1.max(b.1), a.2.min(b.2), a.3.min(b.3));
        if x0 >= x1 || y0 >= y1 {
            return 0.0;
        }
        if other.is_convex() && self.holes.is_empty() {
            return signed_area(&clip_convex(&self.exterior, &other.exterior)).abs();
        }
        if self.is_convex() && other.holes.is_empty() {
            return signed_area(&clip_convex(&other.exterior, &self.exterior)).abs();
        }
        let step = fallback_step;
        let nx = ((x1 - x0) / step).ceil() as usize;
        let ny = ((y1 - y0) / step).ceil() as usize;
        let mut hits = 0usize;
        for j in 0..ny {
            let y = y0 + (j as f64 + 0.5) * step;
            for i in 0..nx {
                let x = x0 + (i as f64 + 0.5) * step;
                if self.contains(x, y) && other.contains(x, y) {
                    hits += 1;
                }
            }
        }
        hits as f64 * step * step
    }
}

/// X coordinate where edge `a -> b` crosses the horizontal line `y`, using the
/// half-open rule: an edge spans `[min_y, max_y)`. Horizontal edges never cross.
#[inline]
pub(crate) fn edge_crossing(a: Point, b: Point, y: f64) -> Option<f64> {
    if (a.y > y) != (b.y > y) {
        Some(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
    } else {
        None
    }
}

/// Even-odd point-in-polygon over a set of closed rings. A point on a left
/// or bottom edge counts as inside.
pub fn point_in_rings<'a>(rings: impl Iterator<Item = &'a [Point]>, x: f64, y: f64) -> bool {
    let mut inside = false;
    for ring in rings {
        for w in ring.windows(2) {
            if let Some(xc) = edge_crossing(w[0], w[1], y) {
                if x < xc {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn close_ring(mut ring: Vec<Point>) -> Vec<Point> {
    if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
        if first != last {
            ring.push(first);
        }
    }
    ring
}

fn open_ring(ring: &[Point]) -> &[Point] {
    match (ring.first(), ring.last()) {
        (Some(f), Some(l)) if ring.len() > 1 && f == l => &ring[..ring.len() - 1],
        _ => ring,
    }
}

fn signed_area(ring: &[Point]) -> f64 {
    let pts = open_ring(ring);
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    s / 2.0
}

/// Sutherland-Hodgman: clips `subject` against the convex ring `clip`.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut clip_pts: Vec<Point> = open_ring(clip).to_vec();
    if signed_area(&clip_pts) < 0.0 {
        clip_pts.reverse();
    }
    let mut output: Vec<Point> = open_ring(subject).to_vec();
    let n = clip_pts.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let c0 = clip_pts[i];
        let c1 = clip_pts[(i + 1) % n];
        let side = |p: Point| (c1.x - c0.x) * (p.y - c0.y) - (c1.y - c0.y) * (p.x - c0.x);
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    output
}

fn intersect(p: Point, q: Point, sp: f64, sq: f64) -> Point {
    let t = sp / (sp - sq);
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rings_are_closed_and_validated() {
        let p = Polygon::new(
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            vec![],
        )
        .unwrap();
        assert_eq!(p.exterior.len(), 4);
        assert_eq!(p.exterior[0], p.exterior[3]);
        assert!(Polygon::new(
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 0.0)],
            vec![]
        )
        .is_err());
    }

    #[test]
    fn area_subtracts_holes() {
        let mut p = Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap();
        p.holes.push(Polygon::rect(2.0, 2.0, 4.0, 4.0).unwrap().exterior);
        assert_eq!(p.area(), 96.0);
        assert!(!p.contains(3.0, 3.0));
        assert!(p.contains(5.0, 5.0));
    }

    #[test]
    fn convex_clip_of_rectangles() {
        let a = Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = Polygon::rect(5.0, -5.0, 20.0, 8.0).unwrap();
        assert!((a.intersection_area(&b, 0.25) - 40.0).abs() < 1e-9);
        let c = Polygon::rect(11.0, 0.0, 12.0, 1.0).unwrap();
        assert_eq!(a.intersection_area(&c, 0.25), 0.0);
    }

    #[test]
    fn lattice_fallback_for_concave_pairs() {
        // L-shapes on both sides force the sampled path.
        let l = |ox: f64| {
            Polygon::new(
                vec![
                    Point::new(ox, 0.0),
                    Point::new(ox + 4.0, 0.0),
                    Point::new(ox + 4.0, 2.0),
                    Point::new(ox + 2.0, 2.0),
                    Point::new(ox + 2.0, 4.0),
                    Point::new(ox, 4.0),
                ],
                vec![],
            )
            .unwrap()
        };
        let a = l(0.0);
        let b = l(1.0);
        assert!(!a.is_convex() && !b.is_convex());
        // overlap: x in [1,4]x[0,2] (6) plus x in [1,2]x[2,4] (2)
        assert!((a.intersection_area(&b, 0.25) - 8.0).abs() < 1e-9);
    }
}
