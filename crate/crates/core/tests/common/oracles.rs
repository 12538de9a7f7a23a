//! Independent reference implementations used by tests. Depends only on
//! nalgebra and rand so it can be shared by unit and integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

/// Cyclic Jacobi eigenvalue iteration for symmetric 3×3 matrices; ascending.
pub fn jacobi_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let mut a = *m;
    for _sweep in 0..100 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut j = Matrix3::identity();
            j[(p, p)] = c;
            j[(q, q)] = c;
            j[(p, q)] = s;
            j[(q, p)] = -s;
            a = j.transpose() * a * j;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
        }
    }
    let mut e = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
    e.sort_by(f64::total_cmp);
    e
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Rotation matrix through a unit quaternion, independent of the Rodrigues path.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ));
    *q.to_rotation_matrix().matrix()
}

pub fn axis_angle_matrix(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let ax = nalgebra::Unit::new_normalize(*axis);
    *nalgebra::Rotation3::from_axis_angle(&ax, angle).matrix()
}

/// Random symmetric PSD matrix `Q diag(λ) Qᵀ` with condition number up to
/// `max_cond` and largest eigenvalue in `[0.1, 10]`.
pub fn random_psd<R: Rng>(rng: &mut R, max_cond: f64) -> Matrix3<f64> {
    let top = 10f64.powf(rng.random_range(-1.0..1.0));
    let cond = 10f64.powf(rng.random_range(0.0..max_cond.log10()));
    let low = top / cond;
    let mid = low + (top - low) * rng.random_range(0.0..1.0);
    psd_with_eigenvalues(rng, [low, mid, top])
}

pub fn psd_with_eigenvalues<R: Rng>(rng: &mut R, eig: [f64; 3]) -> Matrix3<f64> {
    let q = random_rotation(rng);
    let m = q * Matrix3::from_diagonal(&Vector3::from(eig)) * q.transpose();
    (m + m.transpose()) / 2.0
}

/// Noiseless two-view scene: camera j at the origin with identity rotation,
/// camera k related by `x_j = R_jk x_k + t_jk`.
pub struct TwoView {
    pub r_jk: Matrix3<f64>,
    pub t_jk: Vector3<f64>,
    pub f_j: Vec<Vector3<f64>>,
    pub f_k: Vec<Vector3<f64>>,
}

pub fn two_view<R: Rng>(rng: &mut R, points: usize, translate: bool) -> TwoView {
    let r_jk = axis_angle_matrix(&random_unit(rng), rng.random_range(0.05..0.6));
    let t_jk = if translate {
        random_unit(rng) * rng.random_range(0.5..1.5)
    } else {
        Vector3::zeros()
    };
    let mut f_j = Vec::with_capacity(points);
    let mut f_k = Vec::with_capacity(points);
    for _ in 0..points {
        let x_j = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(3.0..8.0),
        );
        let x_k = r_jk.transpose() * (x_j - t_jk);
        f_j.push(x_j.normalize());
        f_k.push(x_k.normalize());
    }
    TwoView {
        r_jk,
        t_jk,
        f_j,
        f_k,
    }
}

/// Brute-force L1 rotation median: a cubic grid of rotation vectors with 2°
/// spacing inside a ball of `radius` around `center`, then two finer grids
/// around the best candidate. Returns the best matrix and its cost.
pub fn grid_search_l1(
    qs: &[Matrix3<f64>],
    center: &Matrix3<f64>,
    radius: f64,
) -> (Matrix3<f64>, f64) {
    let cost = |m: &Matrix3<f64>| -> f64 {
        qs.iter()
            .map(|q| {
                let c = ((m.transpose() * q).trace() - 1.0) / 2.0;
                c.clamp(-1.0, 1.0).acos()
            })
            .sum()
    };
    let around = |base: &Matrix3<f64>, radius: f64, step: f64| -> (Matrix3<f64>, f64) {
        let steps = (radius / step).ceil() as i64;
        let mut best = (*base, cost(base));
        for a in -steps..=steps {
            for b in -steps..=steps {
                for c in -steps..=steps {
                    let v = Vector3::new(a as f64, b as f64, c as f64) * step;
                    if v.norm() > radius {
                        continue;
                    }
                    let m = base * *nalgebra::Rotation3::from_scaled_axis(v).matrix();
                    let k = cost(&m);
                    if k < best.1 {
                        best = (m, k);
                    }
                }
            }
        }
        best
    };
    let deg = std::f64::consts::PI / 180.0;
    let (coarse, _) = around(center, radius, 2.0 * deg);
    let (mid, _) = around(&coarse, 2.0 * deg, 0.2 * deg);
    around(&mid, 0.2 * deg, 0.02 * deg)
}

/// `Σ (f_j × R f_k)(f_j × R f_k)ᵀ`, summed pair by pair.
pub fn direct_m(r: &Matrix3<f64>, f_j: &[Vector3<f64>], f_k: &[Vector3<f64>]) -> Matrix3<f64> {
    f_j.iter().zip(f_k).fold(Matrix3::zeros(), |acc, (a, b)| {
        let c = a.cross(&(r * b));
        acc + c * c.transpose()
    })
}

/// Scalar Adam written out term by term; returns the parameter after each step.
pub fn scalar_adam(
    x0: f64,
    grads: &[f64],
    alpha: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Vec<f64> {
    let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
    let mut out = Vec::with_capacity(grads.len());
    for (i, g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        let m_hat = m / (1.0 - beta1.powi(t));
        let v_hat = v / (1.0 - beta2.powi(t));
        x -= alpha * m_hat / (v_hat.sqrt() + eps);
        out.push(x);
    }
    out
}
