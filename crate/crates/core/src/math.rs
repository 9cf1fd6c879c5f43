//! Parameter activations, quaternion rotations and Gaussian covariance.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};

/// Degree-0 spherical harmonic basis constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// RGB from a degree-0 SH coefficient, before clamping.
pub fn dc_to_rgb(dc: f64) -> f64 {
    0.5 + SH_C0 * dc
}

pub fn rgb_to_dc(rgb: f64) -> f64 {
    (rgb - 0.5) / SH_C0
}

/// Normalizes a (w, x, y, z) quaternion. A zero quaternion maps to identity.
pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n == 0.0 || !n.is_finite() {
        return [1.0, 0.0, 0.0, 0.0];
    }
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Rotation matrix of a unit (w, x, y, z) quaternion.
pub fn quat_to_rotation(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Gradient of `<g, R(q)>` with respect to the unit quaternion `q`.
pub fn quat_to_rotation_vjp(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = q;
    let gw = 2.0
        * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)]
            + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)]
            - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)]
            - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    [gw, gx, gy, gz]
}

/// Gradient through `q / |q|`: maps a gradient on the normalized quaternion
/// back onto the raw one.
pub fn normalize_quat_vjp(raw: [f64; 4], g_unit: [f64; 4]) -> [f64; 4] {
    let n = (raw.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if n == 0.0 {
        return [0.0; 4];
    }
    let u = [raw[0] / n, raw[1] / n, raw[2] / n, raw[3] / n];
    let dot: f64 = u.iter().zip(g_unit.iter()).map(|(a, b)| a * b).sum();
    [
        (g_unit[0] - u[0] * dot) / n,
        (g_unit[1] - u[1] * dot) / n,
        (g_unit[2] - u[2] * dot) / n,
        (g_unit[3] - u[3] * dot) / n,
    ]
}

/// Builds `R S Sᵀ Rᵀ` from activated scales and a rotation quaternion.
///
/// The quaternion is normalized internally, so `q` and `-q` give the same
/// matrix.
pub fn covariance_from_scale_rotation(scale: [f64; 3], rotation: [f64; 4]) -> Result<Matrix3<f64>> {
    if scale.iter().chain(rotation.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite scale or rotation"));
    }
    if scale.iter().any(|s| *s <= 0.0) {
        return Err(Error::invalid(format!("scales must be positive, got {scale:?}")));
    }
    if rotation.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("zero quaternion"));
    }
    Ok(covariance_unchecked(scale, normalize_quat(rotation)))
}

pub(crate) fn covariance_unchecked(scale: [f64; 3], unit_rotation: [f64; 4]) -> Matrix3<f64> {
    let r = quat_to_rotation(unit_rotation);
    let m = r * Matrix3::from_diagonal(&Vector3::from(scale));
    m * m.transpose()
}

/// Unnormalized Gaussian `exp(-½ xᵀ Σ⁻¹ x)`.
///
/// A covariance that fails Cholesky factorization is regularized by adding
/// `regularization · I` before evaluation.
pub fn gaussian_weight<const D: usize>(
    offset: &SVector<f64, D>,
    cov: &SMatrix<f64, D, D>,
    regularization: f64,
) -> f64 {
    let chol = cov.cholesky().or_else(|| {
        (cov + SMatrix::<f64, D, D>::identity() * regularization).cholesky()
    });
    match chol {
        Some(chol) => {
            let y = chol.l().solve_lower_triangular(offset).unwrap_or_else(SVector::zeros);
            (-0.5 * y.norm_squared()).exp()
        }
        None => 0.0,
    }
}
