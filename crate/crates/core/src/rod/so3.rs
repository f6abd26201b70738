//! Rotation helpers on SO(3): exponential/logarithm maps and the inverse
//! Jacobians of the logarithm used to turn bending moments into body torques.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const SMALL_ANGLE: f64 = 1e-6;

#[inline]
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues formula for `exp([w]x)`.
pub fn exp(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let (a, b) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + (k * k) * b
}

/// Axis-angle vector of a rotation matrix, angle in `[0, pi]`.
pub fn log(r: &Mat3) -> Vec3 {
    let skew = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin_norm = 0.5 * skew.norm();
    let theta = sin_norm.atan2(cos);
    if theta < SMALL_ANGLE {
        // sin(theta)/theta -> 1
        return skew * (0.5 + theta * theta / 12.0);
    }
    if std::f64::consts::PI - theta < 1e-4 {
        // Near pi the skew part vanishes; recover the axis from the symmetric part.
        let b = (r + r.transpose()) * 0.5 - Mat3::identity() * cos;
        let diag = Vec3::new(b[(0, 0)], b[(1, 1)], b[(2, 2)]);
        let i = diag.imax();
        let mut axis = b.column(i).into_owned();
        axis /= axis.norm();
        if axis.dot(&skew) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    skew * (theta / (2.0 * theta.sin()))
}

fn inv_jacobian_coeff(theta2: f64) -> f64 {
    if theta2 < 1e-8 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    }
}

/// Inverse left Jacobian of the logarithm: `d log(exp(d) R) = J_l^{-1} d`.
pub fn left_jacobian_inv(phi: &Vec3) -> Mat3 {
    let k = hat(phi);
    Mat3::identity() - k * 0.5 + (k * k) * inv_jacobian_coeff(phi.norm_squared())
}

/// Inverse right Jacobian of the logarithm: `d log(R exp(d)) = J_r^{-1} d`.
pub fn right_jacobian_inv(phi: &Vec3) -> Mat3 {
    let k = hat(phi);
    Mat3::identity() + k * 0.5 + (k * k) * inv_jacobian_coeff(phi.norm_squared())
}

/// Projects a nearly orthonormal matrix back onto SO(3) with two
/// Newton–Schulz polar iterations.
pub fn reorthonormalize(r: &mut Mat3) {
    for _ in 0..2 {
        let rtr = r.transpose() * *r;
        *r = *r * (Mat3::identity() * 1.5 - rtr * 0.5);
    }
}

pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).amax()
}

/// Rotation whose third column is `d3`, first column as close to `normal` as
/// possible.
pub fn frame_from_tangent(d3: &Vec3, normal: &Vec3) -> Option<Mat3> {
    let d3 = d3.try_normalize(1e-12)?;
    let d1 = (normal - d3 * normal.dot(&d3)).try_normalize(1e-12)?;
    let d2 = d3.cross(&d1);
    Some(Mat3::from_columns(&[d1, d2, d3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn log_inverts_exp(w in vec3()) {
            let r = exp(&w);
            prop_assert!(orthonormality_error(&r) < 1e-14);
            let back = log(&r);
            prop_assert!((back - w).norm() < 1e-12);
        }

        #[test]
        fn jacobians_match_finite_differences(phi in vec3(), d in vec3()) {
            let h = 1e-6;
            let base = exp(&phi);
            let d = d * 1e-0;
            let right = (log(&(base * exp(&(d * h)))) - log(&(base * exp(&(-d * h))))) / (2.0 * h);
            let left = (log(&(exp(&(d * h)) * base)) - log(&(exp(&(-d * h)) * base))) / (2.0 * h);
            prop_assert!((right - right_jacobian_inv(&phi) * d).norm() < 1e-6 * (1.0 + d.norm()));
            prop_assert!((left - left_jacobian_inv(&phi) * d).norm() < 1e-6 * (1.0 + d.norm()));
        }
    }

    #[test]
    fn small_angles() {
        let w = Vec3::new(1e-9, -2e-9, 3e-9);
        assert!((log(&exp(&w)) - w).norm() < 1e-20);
        assert_eq!(log(&Mat3::identity()), Vec3::zeros());
    }

    #[test]
    fn near_pi() {
        let w = Vec3::new(0.0, 0.0, std::f64::consts::PI - 1e-7);
        assert!((log(&exp(&w)) - w).norm() < 1e-6);
    }

    #[test]
    fn frame_is_rotation() {
        let f = frame_from_tangent(&Vec3::new(-1.0, 0.0, 0.0), &Vec3::z()).unwrap();
        assert!(orthonormality_error(&f) < 1e-15);
        assert!((f.determinant() - 1.0).abs() < 1e-15);
        assert!(frame_from_tangent(&Vec3::z(), &Vec3::z()).is_none());
    }
}
