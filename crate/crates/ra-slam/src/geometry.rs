//! Small rotation helpers shared by the simulator, projection and refiner.

use nalgebra::{DMatrix, DVector};

/// 2D rotation matrix for `angle` radians.
pub fn rot2(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Rodrigues formula: rotation about `axis` (unit length) by `angle`.
pub fn rot3_axis_angle(axis: &[f64; 3], angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    let (x, y, z) = (axis[0], axis[1], axis[2]);
    let k = DMatrix::from_row_slice(3, 3, &[0.0, -z, y, z, 0.0, -x, -y, x, 0.0]);
    DMatrix::identity(3, 3) + &k * s + &k * &k * (1.0 - c)
}

/// Exponential map from tangent coordinates: one angle in 2D, an axis-angle
/// vector in 3D.
pub fn exp_so(dim: usize, w: &[f64]) -> DMatrix<f64> {
    match dim {
        2 => rot2(w[0]),
        3 => {
            let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            if theta < 1e-12 {
                // first-order term is enough below the noise floor
                let k = DMatrix::from_row_slice(
                    3,
                    3,
                    &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0],
                );
                DMatrix::identity(3, 3) + k
            } else {
                rot3_axis_angle(&[w[0] / theta, w[1] / theta, w[2] / theta], theta)
            }
        }
        other => panic!("unsupported dimension {other}"),
    }
}

/// Generators of the rotation tangent space (derivative of `exp` at zero).
pub fn so_generators(dim: usize) -> Vec<DMatrix<f64>> {
    match dim {
        2 => vec![DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])],
        3 => vec![
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0]),
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ],
        other => panic!("unsupported dimension {other}"),
    }
}

/// Tangent dimension of SO(d): 1 in 2D, 3 in 3D.
pub fn so_dof(dim: usize) -> usize {
    match dim {
        2 => 1,
        3 => 3,
        other => panic!("unsupported dimension {other}"),
    }
}

/// Distance of `m` from the rotation group: `max(||R^T R - I||, |det - 1|)`.
pub fn rotation_defect(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    let gram = m.transpose() * m;
    let ortho = (&gram - DMatrix::identity(d, d)).norm();
    let det = m.determinant();
    ortho.max((det - 1.0).abs())
}

pub fn is_rotation(m: &DMatrix<f64>, tol: f64) -> bool {
    m.nrows() == m.ncols() && rotation_defect(m) <= tol
}

/// Frobenius inner-product distance `||a - b||_F`.
pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

pub fn dvec(data: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(data)
}
