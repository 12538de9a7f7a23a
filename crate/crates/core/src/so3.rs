//! Rotation algebra on SO(3).
//!
//! Rotations are stored as 3×3 matrices. Rotation vectors (axis times angle)
//! only appear at the boundary with the optimizer state, which lives in the
//! rotation-vector chart.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Tolerance used when checking `mᵀm = I` and `det(m) = 1`.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Below this angle the Rodrigues coefficients are replaced by their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Angles closer than this to π take the axis-extraction branch of the log map.
pub const NEAR_PI: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("rotation vector has non-finite component: {0:?}")]
    NonFinite([f64; 3]),
    #[error("matrix is not a rotation (orthonormality residual {residual:e}, det {det})")]
    NotOrthonormal { residual: f64, det: f64 },
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

/// Rotation vector `u = θ·û`; the angle is `‖u‖` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationVector(pub Vector3<f64>);

impl RotationVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Maps the vector onto the equivalent one with `‖u‖ ≤ π`.
    pub fn canonical(self) -> Self {
        let theta = self.0.norm();
        if theta <= PI || !theta.is_finite() {
            return self;
        }
        let axis = self.0 / theta;
        let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
        Self(axis * wrapped)
    }
}

impl From<Vector3<f64>> for RotationVector {
    fn from(v: Vector3<f64>) -> Self {
        Self(v)
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `m` against the orthonormality and determinant tolerances.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, So3Error> {
        let residual = orthonormality_residual(&m);
        let det = m.determinant();
        if !residual.is_finite()
            || residual > ORTHONORMAL_TOL
            || (det - 1.0).abs() > ORTHONORMAL_TOL
        {
            return Err(So3Error::NotOrthonormal { residual, det });
        }
        Ok(Self(m))
    }

    /// Projects an arbitrary 3×3 matrix onto the nearest rotation in the
    /// Frobenius sense (polar factor with determinant correction).
    pub fn project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Self(u * d * v_t)
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        exp_unchecked(&(axis * (angle / n)))
    }

    pub fn from_quaternion_wxyz(q: [f64; 4]) -> Self {
        let [w, x, y, z] = q;
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Self(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Unit quaternion `[w, x, y, z]` with `w ≥ 0`.
    pub fn to_quaternion_wxyz(&self) -> [f64; 4] {
        let m = &self.0;
        let tr = m.trace();
        // Shepperd's method: pick the largest of the four squared components.
        let q = if tr > m[(0, 0)] && tr > m[(1, 1)] && tr > m[(2, 2)] {
            let s = (1.0 + tr).sqrt() * 2.0;
            [
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            ]
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            [
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            ]
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            [
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            ]
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            [
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            ]
        };
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
        q.map(|c| sign * c / n)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// `self · other`.
    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    /// `self · otherᵀ`, the relative rotation `R_j R_kᵀ` for `self = R_j`.
    pub fn between(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0.transpose())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn is_valid(&self) -> bool {
        orthonormality_residual(&self.0) <= ORTHONORMAL_TOL
            && (self.0.determinant() - 1.0).abs() <= ORTHONORMAL_TOL
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

fn orthonormality_residual(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// `v^∧`, the skew-symmetric matrix with `v^∧ w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `(·)^∨` applied to `m − mᵀ`-style matrices; reads the skew part only.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues exponential map.
pub fn exp_map(u: &RotationVector) -> Result<Rotation, So3Error> {
    let v = u.0;
    if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
        return Err(So3Error::NonFinite([v.x, v.y, v.z]));
    }
    Ok(exp_unchecked(&v))
}

pub(crate) fn exp_unchecked(u: &Vector3<f64>) -> Rotation {
    let theta2 = u.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(u);
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Logarithm map; the result satisfies `‖u‖ ≤ π`.
pub fn log_map(r: &Rotation) -> Result<RotationVector, So3Error> {
    if !r.is_valid() {
        return Err(So3Error::NotOrthonormal {
            residual: orthonormality_residual(&r.0),
            det: r.0.determinant(),
        });
    }
    Ok(log_unchecked(r))
}

pub(crate) fn log_unchecked(r: &Rotation) -> RotationVector {
    let m = &r.0;
    let cos_theta = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = vee(&(m - m.transpose()));
    // Same angle as arccos(cosθ), without its loss of precision near 0 and π.
    let theta = (skew.norm() / 2.0).atan2(cos_theta);
    if theta < SMALL_ANGLE {
        return RotationVector(skew / 2.0);
    }
    if PI - theta < NEAR_PI {
        // (R + Rᵀ)/2 = cosθ·I + (1 − cosθ)·ââᵀ; read â from its dominant diagonal.
        let sym = (m + m.transpose()) / 2.0;
        let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
        let i = (0..3)
            .max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)]))
            .unwrap_or(0);
        let mut axis: Vector3<f64> = outer.column(i).into_owned() / outer[(i, i)].max(0.0).sqrt();
        axis.normalize_mut();
        // Sign follows the skew part (2 sinθ â); at θ = π exactly, first nonzero component positive.
        let along = axis.dot(&skew);
        if along < 0.0 || (along == 0.0 && first_nonzero_negative(&axis)) {
            axis = -axis;
        }
        return RotationVector(axis * theta);
    }
    RotationVector(skew * (theta / (2.0 * theta.sin())))
}

fn first_nonzero_negative(v: &Vector3<f64>) -> bool {
    v.iter().find(|c| c.abs() > 1e-12).is_some_and(|c| *c < 0.0)
}

/// Geodesic (angular) distance in radians, in `[0, π]`.
///
/// Evaluated as `atan2(‖(R₁R₂ᵀ − R₂R₁ᵀ)^∨‖/2, (tr(R₁R₂ᵀ) − 1)/2)`, which equals
/// the clamped `arccos((tr(R₁R₂ᵀ) − 1)/2)` but keeps full precision near 0 and π.
pub fn geodesic_distance(a: &Rotation, b: &Rotation) -> f64 {
    let rel = a.0 * b.0.transpose();
    let cos_theta = (rel.trace() - 1.0) / 2.0;
    let sin_theta = vee(&(rel - rel.transpose())).norm() / 2.0;
    sin_theta.atan2(cos_theta)
}

pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

pub fn rad_to_deg(rad: f64) -> f64 {
    rad.to_degrees()
}
