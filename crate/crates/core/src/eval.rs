//! Accuracy against ground truth.
//!
//! Estimated rotations are only defined up to a global rotation, so before
//! measuring errors each estimate `R_j` is aligned by right multiplication
//! with a single rotation `R`. The L1 alignment minimizes `Σ d(R_j R, R_j^gt)`
//! (geodesic Weiszfeld iteration); the L2 alignment minimizes the sum of
//! squared distances (Karcher mean). Both reduce to averaging the residuals
//! `Q_j = R_jᵀ R_j^gt`, since `d(R_j R, R_j^gt) = d(R, Q_j)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::so3::{exp_unchecked, geodesic_distance, log_unchecked, rad_to_deg, Rotation};
use crate::stats::{mean, median};

/// Smallest distance used as a Weiszfeld weight denominator, in radians.
pub const WEISZFELD_FLOOR: f64 = 1e-9;

/// Iterations stop once the update is shorter than this, in radians.
pub const STEP_TOL: f64 = 1e-10;

pub const MAX_ITERATIONS: usize = 100;

/// Halvings tried when a Weiszfeld step would raise the L1 cost.
const MAX_HALVINGS: usize = 30;

fn residuals(estimates: &[Rotation], gt: &[Rotation]) -> Vec<Rotation> {
    assert_eq!(
        estimates.len(),
        gt.len(),
        "one ground-truth rotation per estimate"
    );
    assert!(!estimates.is_empty(), "at least one rotation is required");
    estimates
        .iter()
        .zip(gt)
        .map(|(r, g)| r.transpose().compose(g))
        .collect()
}

/// Projection of the arithmetic mean of the rotation matrices onto SO(3).
pub fn chordal_mean(rs: &[Rotation]) -> Rotation {
    let sum: Matrix3<f64> = rs.iter().map(|r| *r.matrix()).sum();
    Rotation::project(&(sum / rs.len() as f64))
}

/// Tangent vectors `Log(Sᵀ Q_j)`.
fn tangents(s: &Rotation, qs: &[Rotation]) -> Vec<Vector3<f64>> {
    qs.iter()
        .map(|q| log_unchecked(&s.transpose().compose(q)).0)
        .collect()
}

fn l1_cost(s: &Rotation, qs: &[Rotation]) -> f64 {
    qs.iter().map(|q| geodesic_distance(s, q)).sum()
}

fn all_identical(qs: &[Rotation]) -> bool {
    qs.iter().all(|q| q == &qs[0])
}

/// Geodesic L1 median of `qs`.
///
/// Starts from the chordal mean and applies weighted tangent-space averages
/// with weights `1 / max(d_j, 1e-9)`. A step that would raise the cost is
/// halved until it does not, so the cost never increases.
pub fn l1_median(qs: &[Rotation]) -> Rotation {
    assert!(!qs.is_empty());
    if all_identical(qs) {
        return qs[0];
    }
    let mut s = chordal_mean(qs);
    let mut cost = l1_cost(&s, qs);
    for _ in 0..MAX_ITERATIONS {
        let vs = tangents(&s, qs);
        let (mut num, mut den) = (Vector3::zeros(), 0.0);
        for v in &vs {
            let w = 1.0 / v.norm().max(WEISZFELD_FLOOR);
            num += v * w;
            den += w;
        }
        let mut step = num / den;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            if step.norm() < STEP_TOL {
                break;
            }
            let candidate = s.compose(&exp_unchecked(&step));
            let c = l1_cost(&candidate, qs);
            if c <= cost {
                accepted = Some((candidate, c, step.norm()));
                break;
            }
            step /= 2.0;
        }
        let Some((next, c, len)) = accepted else {
            break;
        };
        s = next;
        cost = c;
        if len < STEP_TOL {
            break;
        }
    }
    s
}

/// Geodesic L2 (Karcher) mean of `qs`.
pub fn karcher_mean(qs: &[Rotation]) -> Rotation {
    assert!(!qs.is_empty());
    if all_identical(qs) {
        return qs[0];
    }
    let mut s = chordal_mean(qs);
    for _ in 0..MAX_ITERATIONS {
        let step = tangents(&s, qs).iter().sum::<Vector3<f64>>() / qs.len() as f64;
        s = s.compose(&exp_unchecked(&step));
        if step.norm() < STEP_TOL {
            break;
        }
    }
    s
}

/// Rotation `R` minimizing `Σ d(R_j R, R_j^gt)`.
pub fn align_l1(estimates: &[Rotation], gt: &[Rotation]) -> Rotation {
    l1_median(&residuals(estimates, gt))
}

/// Rotation `R` minimizing `Σ d(R_j R, R_j^gt)²`.
pub fn align_l2(estimates: &[Rotation], gt: &[Rotation]) -> Rotation {
    karcher_mean(&residuals(estimates, gt))
}

/// Angular errors in degrees of the aligned estimates `R_j R`.
pub fn aligned_errors(estimates: &[Rotation], gt: &[Rotation], align: &Rotation) -> Vec<f64> {
    estimates
        .iter()
        .zip(gt)
        .map(|(r, g)| rad_to_deg(geodesic_distance(&r.compose(align), g)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Mean error after L1 alignment, in degrees.
    pub mn1: f64,
    pub md1: f64,
    /// Mean error after L2 alignment, in degrees.
    pub mn2: f64,
    pub md2: f64,
    /// Per-camera errors after L1 alignment, in degrees.
    pub errors_l1: Vec<f64>,
    pub errors_l2: Vec<f64>,
}

pub const REPORT_CSV_HEADER: &str = "mn1,md1,mn2,md2";

impl ErrorReport {
    pub fn to_csv(&self) -> String {
        format!(
            "{REPORT_CSV_HEADER}\n{},{},{},{}\n",
            self.mn1, self.md1, self.mn2, self.md2
        )
    }
}

pub fn error_report(estimates: &[Rotation], gt: &[Rotation]) -> ErrorReport {
    let errors_l1 = aligned_errors(estimates, gt, &align_l1(estimates, gt));
    let errors_l2 = aligned_errors(estimates, gt, &align_l2(estimates, gt));
    let stat = |f: fn(&[f64]) -> Option<f64>, xs: &[f64]| f(xs).expect("non-empty");
    ErrorReport {
        mn1: stat(mean, &errors_l1),
        md1: stat(median, &errors_l1),
        mn2: stat(mean, &errors_l2),
        md2: stat(median, &errors_l2),
        errors_l1,
        errors_l2,
    }
}

/// Mean L1-aligned error in degrees.
pub fn mean_l1_error(estimates: &[Rotation], gt: &[Rotation]) -> f64 {
    let e = aligned_errors(estimates, gt, &align_l1(estimates, gt));
    mean(&e).expect("non-empty")
}
