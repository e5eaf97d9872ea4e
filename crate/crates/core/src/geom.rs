//! Normalized image-plane geometry: rectangles, IoU and closed-set
//! rectangle/polygon intersection.
//!
//! All coordinates live in `[0,1]²` with the origin at the top-left corner.
//! Predicates are exact in the sense that they use orientation tests and
//! containment checks, never rasterization.

use std::cmp::Ordering;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("rectangle is empty or inverted: ({x_min}, {y_min}, {x_max}, {y_max})")]
    Degenerate {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("coordinate {0} outside [0,1]")]
    OutOfRange(f64),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is self-intersecting (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("polygon has zero area")]
    ZeroArea,
}

/// Axis-aligned rectangle in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Rect<T> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Scalar> Rect<T> {
    /// Builds a rectangle, checking ordering and the unit-square range.
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self, GeomError> {
        let r = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        for c in [self.x_min, self.y_min, self.x_max, self.y_max] {
            if !c.in_unit_interval() {
                return Err(GeomError::OutOfRange(c.to_f64_lossy()));
            }
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(GeomError::Degenerate {
                x_min: self.x_min.to_f64_lossy(),
                y_min: self.y_min.to_f64_lossy(),
                x_max: self.x_max.to_f64_lossy(),
                y_max: self.y_max.to_f64_lossy(),
            });
        }
        Ok(())
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        self.width().max(T::zero()) * self.height().max(T::zero())
    }

    pub fn center(&self) -> Point<T> {
        let two = T::lit(2.0);
        Point::new(
            (self.x_min + self.x_max) / two,
            (self.y_min + self.y_max) / two,
        )
    }

    pub fn corners(&self) -> [Point<T>; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }

    /// Closed containment: points on the border are inside.
    pub fn contains(&self, p: Point<T>) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= T::zero() || h <= T::zero() {
            T::zero()
        } else {
            w * h
        }
    }

    /// Intersection over union; 0 when the union is empty.
    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            (inter / union).min(T::one())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T> Point<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

impl<T> From<[T; 2]> for Point<T> {
    fn from([x, y]: [T; 2]) -> Self {
        Self { x, y }
    }
}

impl<T> From<Point<T>> for [T; 2] {
    fn from(p: Point<T>) -> Self {
        [p.x, p.y]
    }
}

/// Sign of the cross product `(b - a) × (c - a)`.
fn orientation<T: Scalar>(a: Point<T>, b: Point<T>, c: Point<T>) -> Ordering {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    cross.partial_cmp(&T::zero()).unwrap_or(Ordering::Equal)
}

/// `p` lies within the bounding box of segment `a`-`b` (used after a
/// collinearity test).
fn within_span<T: Scalar>(a: Point<T>, b: Point<T>, p: Point<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

pub fn point_on_segment<T: Scalar>(a: Point<T>, b: Point<T>, p: Point<T>) -> bool {
    orientation(a, b, p) == Ordering::Equal && within_span(a, b, p)
}

/// Closed segment intersection (shared endpoints and collinear overlap count).
pub fn segments_intersect<T: Scalar>(
    p1: Point<T>,
    q1: Point<T>,
    p2: Point<T>,
    q2: Point<T>,
) -> bool {
    let o1 = orientation(p1, q1, p2);
    let o2 = orientation(p1, q1, q2);
    let o3 = orientation(p2, q2, p1);
    let o4 = orientation(p2, q2, q1);

    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == Ordering::Equal && within_span(p1, q1, p2))
        || (o2 == Ordering::Equal && within_span(p1, q1, q2))
        || (o3 == Ordering::Equal && within_span(p2, q2, p1))
        || (o4 == Ordering::Equal && within_span(p2, q2, q1))
}

/// Simple closed polygon in normalized coordinates.
///
/// The closing edge from the last vertex back to the first is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, JsonSchema)]
#[serde(transparent)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Polygon<T> {
    vertices: Vec<Point<T>>,
}

impl<T: Scalar> Polygon<T> {
    pub fn new(vertices: Vec<Point<T>>) -> Result<Self, GeomError> {
        if vertices.len() < 3 {
            return Err(GeomError::TooFewVertices(vertices.len()));
        }
        for v in &vertices {
            for c in [v.x, v.y] {
                if !c.in_unit_interval() {
                    return Err(GeomError::OutOfRange(c.to_f64_lossy()));
                }
            }
        }
        let poly = Self { vertices };
        poly.check_simple()?;
        Ok(poly)
    }

    /// The unit square.
    pub fn full_frame() -> Self {
        let (z, o) = (T::zero(), T::one());
        Self {
            vertices: vec![
                Point::new(z, z),
                Point::new(o, z),
                Point::new(o, o),
                Point::new(z, o),
            ],
        }
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    fn edge(&self, i: usize) -> (Point<T>, Point<T>) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point<T>, Point<T>)> + '_ {
        (0..self.vertices.len()).map(move |i| self.edge(i))
    }

    /// Twice the signed area (shoelace).
    fn doubled_area(&self) -> T {
        self.edges()
            .fold(T::zero(), |acc, (a, b)| acc + (a.x * b.y - b.x * a.y))
    }

    fn check_simple(&self) -> Result<(), GeomError> {
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = self.edge(i);
            if a == b {
                return Err(GeomError::SelfIntersecting(i, i));
            }
        }
        for i in 0..n {
            let (a, b) = self.edge(i);
            for j in (i + 1)..n {
                let (c, d) = self.edge(j);
                let adjacent_next = j == i + 1;
                let adjacent_wrap = i == 0 && j == n - 1;
                if adjacent_next || adjacent_wrap {
                    // Adjacent edges share exactly one vertex; they must not
                    // fold back over each other.
                    let (shared, far_a, far_b) = if adjacent_next { (b, a, d) } else { (a, b, c) };
                    if orientation(far_a, shared, far_b) == Ordering::Equal {
                        let dot = (far_a.x - shared.x) * (far_b.x - shared.x)
                            + (far_a.y - shared.y) * (far_b.y - shared.y);
                        if dot > T::zero() {
                            return Err(GeomError::SelfIntersecting(i, j));
                        }
                    }
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return Err(GeomError::SelfIntersecting(i, j));
                }
            }
        }
        if self.doubled_area() == T::zero() {
            return Err(GeomError::ZeroArea);
        }
        Ok(())
    }

    /// Closed point-in-polygon: boundary points are inside.
    pub fn contains(&self, p: Point<T>) -> bool {
        if self.edges().any(|(a, b)| point_on_segment(a, b, p)) {
            return true;
        }
        // even-odd crossing test on a horizontal ray to +x
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True iff the closed rectangle and the closed polygon share a point.
    pub fn intersects_rect(&self, rect: &Rect<T>) -> bool {
        if self.vertices.iter().any(|v| rect.contains(*v)) {
            return true;
        }
        let corners = rect.corners();
        if corners.iter().any(|c| self.contains(*c)) {
            return true;
        }
        for i in 0..4 {
            let (c, d) = (corners[i], corners[(i + 1) % 4]);
            if self.edges().any(|(a, b)| segments_intersect(a, b, c, d)) {
                return true;
            }
        }
        false
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Polygon<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let vertices = Vec::<Point<T>>::deserialize(de)?;
        Polygon::new(vertices).map_err(serde::de::Error::custom)
    }
}
