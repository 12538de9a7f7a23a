//! Per-edge epipolar machinery.
//!
//! For two cameras `j`, `k` with matched unit bearings `(f_j, f_k)` and a
//! candidate relative rotation `R_jk`, the normalized epipolar errors
//! `t̂·(f_j × R_jk f_k)` sum in squares to `t̂ᵀ M t̂`. Minimizing over the unit
//! translation leaves the smallest eigenvalue of `M`, which is the edge cost
//! (optionally square-rooted).
//!
//! `M` is rebuilt for every candidate rotation from six moment matrices that
//! depend only on the observations, so the per-evaluation cost does not grow
//! with the number of matched points.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::so3::Rotation;

/// Minimum number of correspondences for a relative rotation.
pub const MIN_OBSERVATIONS: usize = 5;

/// Unit-norm tolerance for bearing vectors.
pub const UNIT_TOL: f64 = 1e-9;

/// Two smallest eigenvalues closer than this make the translation direction ambiguous.
pub const MULTIPLICITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpipolarError {
    #[error("need at least {MIN_OBSERVATIONS} correspondences, got {0}")]
    InsufficientObservations(usize),
    #[error("bearing lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("bearing {index} in camera {side} is not unit norm (norm {norm})")]
    NotUnit { side: char, index: usize, norm: f64 },
    #[error("smallest eigenvalue is repeated (gap {gap:e}); translation direction is ambiguous")]
    AmbiguousDirection { gap: f64 },
}

/// Matched unit bearings of one camera pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeObservations {
    f_j: Vec<Vector3<f64>>,
    f_k: Vec<Vector3<f64>>,
}

impl EdgeObservations {
    pub fn new(f_j: Vec<Vector3<f64>>, f_k: Vec<Vector3<f64>>) -> Result<Self, EpipolarError> {
        if f_j.len() != f_k.len() {
            return Err(EpipolarError::LengthMismatch(f_j.len(), f_k.len()));
        }
        if f_j.len() < MIN_OBSERVATIONS {
            return Err(EpipolarError::InsufficientObservations(f_j.len()));
        }
        for (side, list) in [('j', &f_j), ('k', &f_k)] {
            if let Some((index, v)) = list.iter().enumerate().find(|(_, v)| {
                let err = (v.norm() - 1.0).abs();
                err.is_nan() || err > UNIT_TOL
            }) {
                return Err(EpipolarError::NotUnit {
                    side,
                    index,
                    norm: v.norm(),
                });
            }
        }
        Ok(Self { f_j, f_k })
    }

    pub fn len(&self) -> usize {
        self.f_j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_j.is_empty()
    }

    pub fn bearings_j(&self) -> &[Vector3<f64>] {
        &self.f_j
    }

    pub fn bearings_k(&self) -> &[Vector3<f64>] {
        &self.f_k
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Vector3<f64>, &Vector3<f64>)> {
        self.f_j.iter().zip(&self.f_k)
    }
}

/// Moment matrices `F_ab = Σᵢ (f_a)_j (f_b)_j · f_k f_kᵀ`, fixed per edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMoments {
    pub xx: Matrix3<f64>,
    pub xy: Matrix3<f64>,
    pub xz: Matrix3<f64>,
    pub yy: Matrix3<f64>,
    pub yz: Matrix3<f64>,
    pub zz: Matrix3<f64>,
}

pub fn precompute_moments(obs: &EdgeObservations) -> EdgeMoments {
    let mut m = EdgeMoments {
        xx: Matrix3::zeros(),
        xy: Matrix3::zeros(),
        xz: Matrix3::zeros(),
        yy: Matrix3::zeros(),
        yz: Matrix3::zeros(),
        zz: Matrix3::zeros(),
    };
    for (fj, fk) in obs.pairs() {
        let outer = fk * fk.transpose();
        m.xx += outer * (fj.x * fj.x);
        m.xy += outer * (fj.x * fj.y);
        m.xz += outer * (fj.x * fj.z);
        m.yy += outer * (fj.y * fj.y);
        m.yz += outer * (fj.y * fj.z);
        m.zz += outer * (fj.z * fj.z);
    }
    m
}

/// Symmetric positive semidefinite 3×3 matrix `M_jk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MMatrix(pub Matrix3<f64>);

#[inline]
fn quad(a: &Vector3<f64>, f: &Matrix3<f64>, b: &Vector3<f64>) -> f64 {
    a.dot(&(f * b))
}

/// Assembles `M_jk` for the relative rotation `R_jk` from the moments.
pub fn assemble_m(r_jk: &Rotation, f: &EdgeMoments) -> MMatrix {
    let r = r_jk.matrix();
    let r1: Vector3<f64> = r.row(0).transpose();
    let r2: Vector3<f64> = r.row(1).transpose();
    let r3: Vector3<f64> = r.row(2).transpose();

    let m11 = quad(&r3, &f.yy, &r3) - 2.0 * quad(&r3, &f.yz, &r2) + quad(&r2, &f.zz, &r2);
    let m22 = quad(&r1, &f.zz, &r1) - 2.0 * quad(&r1, &f.xz, &r3) + quad(&r3, &f.xx, &r3);
    let m33 = quad(&r2, &f.xx, &r2) - 2.0 * quad(&r1, &f.xy, &r2) + quad(&r1, &f.yy, &r1);
    let m12 = quad(&r1, &f.yz, &r3) - quad(&r1, &f.zz, &r2) - quad(&r3, &f.xy, &r3)
        + quad(&r3, &f.xz, &r2);
    let m13 = quad(&r2, &f.xy, &r3) - quad(&r2, &f.xz, &r2) - quad(&r1, &f.yy, &r3)
        + quad(&r1, &f.yz, &r2);
    let m23 = quad(&r1, &f.xz, &r2) - quad(&r1, &f.yz, &r1) - quad(&r3, &f.xx, &r2)
        + quad(&r3, &f.xy, &r1);

    MMatrix(Matrix3::new(m11, m12, m13, m12, m22, m23, m13, m23, m33))
}

/// Coefficients of `det(λI − M) = λ³ + b1 λ² + b2 λ + b3`.
pub fn characteristic_coefficients(m: &MMatrix) -> (f64, f64, f64) {
    let m = &m.0;
    let (m11, m22, m33) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
    let (m12, m13, m23) = (m[(0, 1)], m[(0, 2)], m[(1, 2)]);
    let b1 = -m11 - m22 - m33;
    let b2 = -m13 * m13 - m23 * m23 - m12 * m12 + m11 * m22 + m11 * m33 + m22 * m33;
    let b3 = m22 * m13 * m13 + m11 * m23 * m23 + m33 * m12 * m12
        - m11 * m22 * m33
        - 2.0 * m12 * m23 * m13;
    (b1, b2, b3)
}

/// All three eigenvalues from the trigonometric solution of the
/// characteristic cubic, in ascending order.
///
/// `b1² − 3b2` and `2b1³ − 9b1b2 + 27b3` are evaluated in their shifted forms
/// (sum of squares of the deviatoric part, and `−27·det(M + b1/3·I)`), which
/// are algebraically identical and avoid cancellation.
pub fn closed_form_eigenvalues(m: &MMatrix) -> [f64; 3] {
    let a = &m.0;
    let (m12, m13, m23) = (a[(0, 1)], a[(0, 2)], a[(1, 2)]);
    let b1 = -(a[(0, 0)] + a[(1, 1)] + a[(2, 2)]);
    let q = -b1 / 3.0;
    let (d1, d2, d3) = (a[(0, 0)] - q, a[(1, 1)] - q, a[(2, 2)] - q);

    // b1² − 3b2
    let disc =
        0.5 * (sq(d1 - d2) + sq(d1 - d3) + sq(d2 - d3)) + 3.0 * (sq(m12) + sq(m13) + sq(m23));
    // s = 2b1³ − 9b1b2 + 27b3 = −27·det(M − qI)
    let det_shifted =
        d1 * (d2 * d3 - m23 * m23) - m12 * (m12 * d3 - m23 * m13) + m13 * (m12 * m23 - d2 * m13);
    let s = -27.0 * det_shifted;
    let t = 4.0 * disc * disc * disc;

    let scale = a.amax().max(f64::MIN_POSITIVE);
    if disc <= sq(f64::EPSILON * scale) || t <= 0.0 {
        return [q, q, q];
    }
    let sqrt_t = t.sqrt();
    let phi = (s / sqrt_t).clamp(-1.0, 1.0).acos() / 3.0;
    let radius = (sqrt_t / 2.0).cbrt();
    use std::f64::consts::PI;
    let mut roots = [
        (-b1 - 2.0 * radius * phi.cos()) / 3.0,
        (-b1 - 2.0 * radius * (phi + 2.0 * PI / 3.0).cos()) / 3.0,
        (-b1 - 2.0 * radius * (phi + 4.0 * PI / 3.0).cos()) / 3.0,
    ];
    roots.sort_by(f64::total_cmp);
    roots
}

/// Rounding noise below zero is clamped away; `M` is PSD by construction.
pub const NEGATIVE_CLAMP: f64 = 1e-10;

/// Smallest eigenvalue of a symmetric 3×3 matrix.
pub fn smallest_eigenvalue(m: &MMatrix) -> f64 {
    let roots = closed_form_eigenvalues(m);
    let lambda = refine_double_minimum(m, roots);
    if (-NEGATIVE_CLAMP..0.0).contains(&lambda) {
        0.0
    } else {
        lambda
    }
}

/// When the two smallest roots nearly coincide, the cubic's roots lose half
/// their digits; the largest eigenpair is still well conditioned, so the
/// lower pair is recomputed from the 2×2 restriction of `M` to the
/// complement of that eigenvector.
fn refine_double_minimum(m: &MMatrix, roots: [f64; 3]) -> f64 {
    let [lo, mid, hi] = roots;
    let spread = hi - lo;
    if spread.is_nan() || spread <= 0.0 || mid - lo > 1e-3 * spread {
        return lo;
    }
    let Some(e_hi) = null_vector(&(m.0 - Matrix3::identity() * hi)) else {
        return lo;
    };
    let (u, v) = orthonormal_complement(&e_hi);
    let a = quad(&u, &m.0, &u);
    let b = quad(&u, &m.0, &v);
    let c = quad(&v, &m.0, &v);
    (a + c) / 2.0 - (sq((a - c) / 2.0) + b * b).sqrt()
}

/// Unit vector spanning the (assumed one-dimensional) null space of `a`,
/// from the largest cross product of its rows.
fn null_vector(a: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let r0: Vector3<f64> = a.row(0).transpose();
    let r1: Vector3<f64> = a.row(1).transpose();
    let r2: Vector3<f64> = a.row(2).transpose();
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .into_iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))?;
    let n = best.norm();
    (n > 0.0 && n.is_finite()).then(|| best / n)
}

fn orthonormal_complement(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let pick = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u = n.cross(&pick).normalize();
    let v = n.cross(&u);
    (u, v)
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

/// Unit eigenvector of the smallest eigenvalue of `M`, i.e. the optimal
/// translation direction `t̂_jk` for the rotation `M` was assembled at.
/// Sign convention: first nonzero component positive.
pub fn recover_translation_direction(m: &MMatrix) -> Result<Vector3<f64>, EpipolarError> {
    let roots = closed_form_eigenvalues(m);
    let lo = refine_double_minimum(m, roots);
    let gap = roots[1] - lo;
    if gap <= MULTIPLICITY_TOL * m.0.amax().max(1.0) {
        return Err(EpipolarError::AmbiguousDirection { gap });
    }
    let mut dir = null_vector(&(m.0 - Matrix3::identity() * lo))
        .ok_or(EpipolarError::AmbiguousDirection { gap })?;
    // One inverse-iteration style polish: project onto the dominant direction of (M − lo I)⁻¹.
    let shifted = m.0 - Matrix3::identity() * (lo - 1e-3 * gap);
    if let Some(inv) = shifted.try_inverse() {
        let polished = inv * dir;
        if polished.norm() > 0.0 {
            dir = polished.normalize();
        }
    }
    if let Some(c) = dir.iter().find(|c| c.abs() > 1e-12) {
        if *c < 0.0 {
            dir = -dir;
        }
    }
    Ok(dir)
}

/// Output of [`edge_cost`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCostResult {
    pub cost: f64,
    pub lambda_min: f64,
    pub t_dir: Option<Vector3<f64>>,
}

/// Edge cost `c_jk`: `sqrt(λ_min(M))` when `use_sqrt`, otherwise `λ_min(M)`.
#[inline]
pub fn edge_cost(r_jk: &Rotation, moments: &EdgeMoments, use_sqrt: bool) -> EdgeCostResult {
    let m = assemble_m(r_jk, moments);
    let lambda_min = smallest_eigenvalue(&m);
    let cost = if use_sqrt {
        lambda_min.max(0.0).sqrt()
    } else {
        lambda_min
    };
    EdgeCostResult {
        cost,
        lambda_min,
        t_dir: None,
    }
}

/// [`edge_cost`] plus the translation direction, when it is well defined.
pub fn edge_cost_with_direction(
    r_jk: &Rotation,
    moments: &EdgeMoments,
    use_sqrt: bool,
) -> EdgeCostResult {
    let m = assemble_m(r_jk, moments);
    let mut out = edge_cost(r_jk, moments, use_sqrt);
    out.t_dir = recover_translation_direction(&m).ok();
    out
}

/// Cost scalar only; the hot path of the optimizer.
#[inline]
pub(crate) fn edge_cost_value(r_jk: &Rotation, moments: &EdgeMoments, use_sqrt: bool) -> f64 {
    edge_cost(r_jk, moments, use_sqrt).cost
}
