use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Direct solve by LU with partial pivoting and one step of iterative
/// refinement. Fails when a pivot falls below `1e-14 ‖A‖` or when the
/// normwise backward error `‖Ax - b‖ / (‖A‖ ‖x‖ + ‖b‖)` exceeds `1e-12`.
pub fn linear_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::SingularLinearization(format!("shape mismatch {}x{} vs {}", n, a.ncols(), b.len())));
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let norm_a = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if !norm_a.is_finite() || !b.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularLinearization("non-finite entries".into()));
    }
    if norm_a == 0.0 {
        return Err(Error::SingularLinearization("zero matrix".into()));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-14 * norm_a {
        return Err(Error::SingularLinearization(format!("pivot {min_pivot:e} below threshold (|A| = {norm_a:e})")));
    }
    let mut x = lu.solve(b).ok_or_else(|| Error::SingularLinearization("LU solve failed".into()))?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let res = (b - a * &x).amax();
    let scale = norm_a * x.amax() + b.amax();
    if scale > 0.0 && res > 1e-12 * scale {
        return Err(Error::SingularLinearization(format!("backward error {:e} too large", res / scale)));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_systems() {
        let x = linear_solve(&DMatrix::identity(3, 3), &DVector::from_vec(vec![1.0, -2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, -2.0, 3.0]);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = linear_solve(&a, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(linear_solve(&singular, &DVector::from_vec(vec![1.0, 1.0])), Err(Error::SingularLinearization(_))));
    }
}
