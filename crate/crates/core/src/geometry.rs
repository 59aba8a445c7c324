//! Small planar geometry helpers shared by both mesh families.

use nalgebra::{Matrix2, Vector2};

pub type Point = Vector2<f64>;
pub type Tensor = Matrix2<f64>;

#[inline]
pub fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed area of a polygon (positive when counterclockwise).
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = &poly[i];
        let b = &poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

pub fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * cross(&(b - a), &(c - a))
}

/// Area centroid of a simple polygon.
pub fn centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let area = signed_area(poly);
    if area.abs() < f64::MIN_POSITIVE {
        return poly.iter().sum::<Point>() / n as f64;
    }
    let mut c = Point::zeros();
    for i in 0..n {
        let a = &poly[i];
        let b = &poly[(i + 1) % n];
        let w = a.x * b.y - b.x * a.y;
        c += (a + b) * w;
    }
    c / (6.0 * area)
}

/// Unit vector orthogonal to `dir`, oriented so that its dot product with
/// `toward` is positive.
pub fn oriented_normal(dir: &Point, toward: &Point) -> Point {
    let n = Point::new(dir.y, -dir.x).normalize();
    if n.dot(toward) >= 0.0 {
        n
    } else {
        -n
    }
}

/// Checks symmetry and positive definiteness of a 2×2 tensor.
pub fn is_spd(t: &Tensor) -> bool {
    (t[(0, 1)] - t[(1, 0)]).abs() <= 1e-14 * t.norm().max(1.0)
        && t[(0, 0)] > 0.0
        && t.determinant() > 0.0
}
