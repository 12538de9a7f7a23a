//! Synthetic Monte Carlo scenes.
//!
//! Cameras sit on a circle in the xy-plane with neighbours one unit apart
//! (or all at the origin, or in co-located groups), look roughly along +z,
//! and observe random points at heights `d ~ U(d_min, d_max)` above the
//! plane. Edges are built by scoring sampled relative poses around the
//! ground truth and keeping the inliers of the best one.
//!
//! Camera `i` maps world points into its frame as `x_i = R_i (X - c_i)`, so the
//! relative rotation of a pair is `R_jk = R_j R_kᵀ`. All randomness comes from
//! `ChaCha8Rng` seeded with [`SimSettings::seed`]; scene generation, edge
//! sampling and initial-rotation perturbation use separate streams.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epipolar::EdgeObservations;
use crate::graph::{Edge, GraphError, ViewGraph, DEFAULT_MIN_COVISIBLE};
use crate::so3::{deg_to_rad, Rotation};

const SCENE_STREAM: u64 = 0;
const EDGE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

/// Point-sampling attempts allowed per required covisible point.
const OVERSAMPLING: usize = 100;

/// Redraws of pixel noise before an observation is discarded.
const NOISE_REDRAWS: usize = 100;

/// Camera centres closer than this (plus one unit) count as neighbours.
const NEIGHBOUR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Circle,
    /// Every camera at the origin.
    PureRotation,
    /// `groups` locations on the circle with `group_size` cameras each.
    Mixed {
        groups: usize,
        group_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub n: usize,
    /// Common points guaranteed for every neighbouring pair.
    pub n_cov: usize,
    /// Pixel noise standard deviation.
    pub sigma: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub layout: Layout,
    /// Maximum camera-attitude scatter about +z, in degrees.
    pub rot_perturb_max: f64,
    pub image_w: f64,
    pub image_h: f64,
    pub focal: f64,
    pub seed: u64,
    /// Inlier threshold on the angular reprojection error, in radians.
    pub inlier_threshold: f64,
    pub n_candidates: usize,
    /// Upper bound of the rotation and translation-direction perturbations
    /// applied to each candidate relative pose, in degrees.
    pub candidate_max_deg: f64,
    pub min_inliers: usize,
    /// Scatter of the initial rotations around ground truth, in degrees.
    pub init_perturb_max: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            n: 100,
            n_cov: 50,
            sigma: 1.0,
            d_min: 2.0,
            d_max: 5.0,
            layout: Layout::Circle,
            rot_perturb_max: 20.0,
            image_w: 640.0,
            image_h: 480.0,
            focal: 525.0,
            seed: 0,
            inlier_threshold: 1e-2,
            n_candidates: 100,
            candidate_max_deg: 20.0,
            min_inliers: 10,
            init_perturb_max: 5.0,
        }
    }
}

/// Named variations of the baseline setting.
pub const PRESETS: [&str; 12] = [
    "baseline",
    "more_points",
    "fewer_views",
    "more_views",
    "closer_points",
    "farther_points",
    "less_noise",
    "more_noise",
    "planar",
    "pure_rotation",
    "pure_planar",
    "mixed",
];

impl SimSettings {
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self::default();
        let s = match name {
            "baseline" => base,
            "more_points" => Self { n_cov: 100, ..base },
            "fewer_views" => Self { n: 30, ..base },
            "more_views" => Self { n: 300, ..base },
            "closer_points" => Self { d_max: 3.0, ..base },
            "farther_points" => Self {
                d_max: 10.0,
                ..base
            },
            "less_noise" => Self { sigma: 0.5, ..base },
            "more_noise" => Self { sigma: 2.0, ..base },
            "planar" => Self {
                d_min: 5.0,
                d_max: 5.0,
                ..base
            },
            "pure_rotation" => Self {
                layout: Layout::PureRotation,
                ..base
            },
            "pure_planar" => Self {
                layout: Layout::PureRotation,
                d_min: 5.0,
                d_max: 5.0,
                ..base
            },
            "mixed" => Self {
                layout: Layout::Mixed {
                    groups: 20,
                    group_size: 5,
                },
                ..base
            },
            _ => return None,
        };
        Some(s)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Invalid(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.d_min > 0.0 && self.d_min <= self.d_max && self.d_max.is_finite()) {
            return bad(format!(
                "need 0 < d_min <= d_max, got [{}, {}]",
                self.d_min, self.d_max
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            ));
        }
        if !(self.image_w > 0.0 && self.image_h > 0.0 && self.focal > 0.0) {
            return bad("image size and focal length must be positive".into());
        }
        let degs = [
            ("rot_perturb_max", self.rot_perturb_max),
            ("candidate_max_deg", self.candidate_max_deg),
            ("init_perturb_max", self.init_perturb_max),
        ];
        for (name, d) in degs {
            if !(0.0..=180.0).contains(&d) {
                return bad(format!("{name} must lie in [0, 180], got {d}"));
            }
        }
        if self.inlier_threshold.is_nan() || self.inlier_threshold <= 0.0 {
            return bad("inlier_threshold must be positive".into());
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1".into());
        }
        if self.min_inliers < DEFAULT_MIN_COVISIBLE {
            return bad(format!(
                "min_inliers must be at least {DEFAULT_MIN_COVISIBLE}"
            ));
        }
        if self.n_cov == 0 {
            return bad("n_cov must be at least 1".into());
        }
        if let Layout::Mixed { groups, group_size } = self.layout {
            if groups < 2 || group_size == 0 || groups * group_size != self.n {
                return bad(format!(
                    "mixed layout needs groups >= 2 and groups * group_size = n ({})",
                    self.n
                ));
            }
        }
        Ok(())
    }

    fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(self.image_w / 2.0, self.image_h / 2.0)
    }

    fn in_image(&self, p: &Vector2<f64>) -> bool {
        (0.0..=self.image_w).contains(&p.x) && (0.0..=self.image_h).contains(&p.y)
    }

    /// Pixel of a camera-frame point, or `None` behind the camera.
    pub fn project(&self, x: &Vector3<f64>) -> Option<Vector2<f64>> {
        (x.z > 0.0)
            .then(|| Vector2::new(x.x / x.z, x.y / x.z) * self.focal + self.principal_point())
    }

    /// Unit bearing through a pixel.
    pub fn bearing(&self, p: &Vector2<f64>) -> Vector3<f64> {
        let c = (p - self.principal_point()) / self.focal;
        Vector3::new(c.x, c.y, 1.0).normalize()
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid settings: {0}")]
    Invalid(String),
    #[error("cameras {j} and {k} share only {found} of {needed} required points after bounded resampling")]
    Infeasible {
        j: usize,
        k: usize,
        found: usize,
        needed: usize,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point: usize,
    pub pixel: Vector2<f64>,
    pub bearing: Vector3<f64>,
}

/// Ground-truth cameras, points and (possibly noisy) observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub rotations: Vec<Rotation>,
    pub centers: Vec<Vector3<f64>>,
    pub points: Vec<Vector3<f64>>,
    /// Per camera, sorted by point index.
    pub observations: Vec<Vec<Observation>>,
}

impl Scene {
    /// `t_i = -R_i c_i`, so that `x_i = R_i X + t_i`.
    pub fn translations(&self) -> Vec<Vector3<f64>> {
        self.rotations
            .iter()
            .zip(&self.centers)
            .map(|(r, c)| -r.rotate(c))
            .collect()
    }

    /// Bearings of the points seen by both cameras, in point order.
    pub fn common_bearings(&self, j: usize, k: usize) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        let (a, b) = (&self.observations[j], &self.observations[k]);
        let (mut fj, mut fk) = (Vec::new(), Vec::new());
        let (mut x, mut y) = (0, 0);
        while x < a.len() && y < b.len() {
            match a[x].point.cmp(&b[y].point) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    fj.push(a[x].bearing);
                    fk.push(b[y].bearing);
                    x += 1;
                    y += 1;
                }
            }
        }
        (fj, fk)
    }

    /// Ground-truth relative pose `(R_jk, t_jk)` with `x_j = R_jk x_k + t_jk`.
    pub fn relative_pose(&self, j: usize, k: usize) -> (Rotation, Vector3<f64>) {
        let r_jk = self.rotations[j].between(&self.rotations[k]);
        let t_jk = self.rotations[j].rotate(&(self.centers[k] - self.centers[j]));
        (r_jk, t_jk)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub scene: Scene,
    /// Ground and initial rotations filled in.
    pub graph: ViewGraph,
    pub gt_translations: Vec<Vector3<f64>>,
    /// Inliers kept for each edge, in edge order.
    pub inlier_counts: Vec<usize>,
}

fn random_axis(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from(UnitSphere.sample(rng))
}

/// Rotation by `U(0, max_deg)` about a uniformly random axis.
fn random_small_rotation(rng: &mut ChaCha8Rng, max_deg: f64) -> Rotation {
    let axis = random_axis(rng);
    let angle = deg_to_rad(rng.random_range(0.0..=max_deg));
    Rotation::from_axis_angle(&axis, angle)
}

fn circle_position(slot: usize, slots: usize) -> Vector3<f64> {
    let radius = 0.5 / (std::f64::consts::PI / slots as f64).sin();
    let phi = 2.0 * std::f64::consts::PI * slot as f64 / slots as f64;
    Vector3::new(radius * phi.cos(), radius * phi.sin(), 0.0)
}

/// Camera centres for a layout.
pub fn camera_centers(n: usize, layout: Layout) -> Vec<Vector3<f64>> {
    match layout {
        Layout::Circle => (0..n).map(|i| circle_position(i, n)).collect(),
        Layout::PureRotation => vec![Vector3::zeros(); n],
        Layout::Mixed { groups, group_size } => (0..n)
            .map(|i| circle_position(i / group_size, groups))
            .collect(),
    }
}

/// Pairs of cameras whose centres are at most one unit apart.
pub fn neighbour_pairs(centers: &[Vector3<f64>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..centers.len() {
        for k in j + 1..centers.len() {
            if (centers[j] - centers[k]).norm() <= 1.0 + NEIGHBOUR_SLACK {
                out.push((j, k));
            }
        }
    }
    out
}

fn sample_height(rng: &mut ChaCha8Rng, cfg: &SimSettings) -> f64 {
    if cfg.d_min == cfg.d_max {
        cfg.d_min
    } else {
        rng.random_range(cfg.d_min..cfg.d_max)
    }
}

/// Cameras, points and observations, before any edge is built.
pub fn generate_cameras_and_points(cfg: &SimSettings) -> Result<Scene, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SCENE_STREAM);
    let noise = Normal::new(0.0, cfg.sigma).expect("sigma validated");

    let centers = camera_centers(cfg.n, cfg.layout);
    let rotations: Vec<Rotation> = (0..cfg.n)
        .map(|_| random_small_rotation(&mut rng, cfg.rot_perturb_max))
        .collect();
    let mut scene = Scene {
        rotations,
        centers,
        points: Vec::new(),
        observations: vec![Vec::new(); cfg.n],
    };
    let mut covis = vec![vec![0usize; cfg.n]; cfg.n];

    for (j, k) in neighbour_pairs(&scene.centers) {
        let mut attempts = 0;
        while covis[j][k] < cfg.n_cov {
            if attempts >= OVERSAMPLING * cfg.n_cov {
                return Err(SynthError::Infeasible {
                    j,
                    k,
                    found: covis[j][k],
                    needed: cfg.n_cov,
                });
            }
            attempts += 1;

            let pixel = Vector2::new(
                rng.random_range(0.0..cfg.image_w),
                rng.random_range(0.0..cfg.image_h),
            );
            let ray = scene.rotations[j].transpose().rotate(&cfg.bearing(&pixel));
            if ray.z <= 0.0 {
                continue;
            }
            let d = sample_height(&mut rng, cfg);
            let c = scene.centers[j];
            let point = c + ray * ((d - c.z) / ray.z);
            let in_k = cfg
                .project(&scene.rotations[k].rotate(&(point - scene.centers[k])))
                .is_some_and(|p| cfg.in_image(&p));
            if !in_k {
                continue;
            }
            add_point(&mut scene, &mut covis, point, cfg, &noise, &mut rng);
        }
    }
    Ok(scene)
}

/// Adds a point and its (noisy) observation in every camera that sees it.
fn add_point(
    scene: &mut Scene,
    covis: &mut [Vec<usize>],
    point: Vector3<f64>,
    cfg: &SimSettings,
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) {
    let id = scene.points.len();
    scene.points.push(point);
    let mut seen = Vec::new();
    for i in 0..scene.rotations.len() {
        let x = scene.rotations[i].rotate(&(point - scene.centers[i]));
        let Some(clean) = cfg.project(&x).filter(|p| cfg.in_image(p)) else {
            continue;
        };
        let pixel = if cfg.sigma == 0.0 {
            Some(clean)
        } else {
            (0..NOISE_REDRAWS)
                .map(|_| clean + Vector2::new(noise.sample(rng), noise.sample(rng)))
                .find(|p| cfg.in_image(p))
        };
        let Some(pixel) = pixel else {
            continue;
        };
        let bearing = if cfg.sigma == 0.0 {
            x.normalize()
        } else {
            cfg.bearing(&pixel)
        };
        scene.observations[i].push(Observation {
            point: id,
            pixel,
            bearing,
        });
        seen.push(i);
    }
    for (a, &i) in seen.iter().enumerate() {
        for &k in &seen[a + 1..] {
            covis[i][k] += 1;
            covis[k][i] += 1;
        }
    }
}

/// Angular reprojection error minimizing the sum of the two ray corrections:
/// the smaller of the angles between each bearing and the epipolar plane
/// spanned by the baseline and the other bearing. Cheirality is ignored.
pub fn angular_error_l1(
    f_j: &Vector3<f64>,
    f_k: &Vector3<f64>,
    r_jk: &Rotation,
    t_dir: &Vector3<f64>,
) -> f64 {
    let rf_k = r_jk.rotate(f_k);
    let e = f_j.dot(&t_dir.cross(&rf_k)).abs();
    let angle = |den: f64| {
        if den > 0.0 {
            (e / den).min(1.0).asin()
        } else {
            0.0
        }
    };
    angle(t_dir.cross(&rf_k).norm()).min(angle(f_j.cross(t_dir).norm()))
}

/// Indices of pairs whose angular error is within `threshold`.
pub fn inlier_indices(
    f_j: &[Vector3<f64>],
    f_k: &[Vector3<f64>],
    r_jk: &Rotation,
    t_dir: &Vector3<f64>,
    threshold: f64,
) -> Vec<usize> {
    (0..f_j.len())
        .filter(|&i| angular_error_l1(&f_j[i], &f_k[i], r_jk, t_dir) <= threshold)
        .collect()
}

/// Rotates `v` by `angle` about a random axis perpendicular to it.
fn tilt(rng: &mut ChaCha8Rng, v: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    loop {
        let axis = random_axis(rng).cross(v);
        if axis.norm() > 1e-6 {
            return Rotation::from_axis_angle(&axis, angle).rotate(v);
        }
    }
}

/// A scored camera pair: the best candidate's inliers and rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub edge: Edge,
    pub inliers: usize,
}

/// Scores sampled relative poses for every pair with at least `n_cov` common
/// points and keeps pairs whose best pose has at least `min_inliers` inliers.
pub fn score_pairs(scene: &Scene, cfg: &SimSettings) -> Result<Vec<ScoredPair>, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(EDGE_STREAM);
    let max_angle = deg_to_rad(cfg.candidate_max_deg);
    let n = scene.rotations.len();

    let mut out = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            let (fj, fk) = scene.common_bearings(j, k);
            if fj.len() < cfg.n_cov {
                continue;
            }
            let (r_true, t_true) = scene.relative_pose(j, k);
            let t_true = t_true.try_normalize(0.0);
            let mut best: Option<(Vec<usize>, Rotation)> = None;
            for _ in 0..cfg.n_candidates {
                let r = r_true.compose(&random_small_rotation(&mut rng, cfg.candidate_max_deg));
                let t = match t_true {
                    Some(t) => {
                        let angle = rng.random_range(0.0..=max_angle);
                        tilt(&mut rng, &t, angle)
                    }
                    None => random_axis(&mut rng),
                };
                let inliers = inlier_indices(&fj, &fk, &r, &t, cfg.inlier_threshold);
                if best.as_ref().is_none_or(|b| inliers.len() > b.0.len()) {
                    best = Some((inliers, r));
                }
            }
            let (inliers, r) = best.expect("at least one candidate");
            if inliers.len() < cfg.min_inliers {
                continue;
            }
            let obs = EdgeObservations::new(
                inliers.iter().map(|&i| fj[i]).collect(),
                inliers.iter().map(|&i| fk[i]).collect(),
            )
            .expect("synthetic bearings are unit and paired");
            out.push(ScoredPair {
                edge: Edge::new(j, k, obs, Some(r)),
                inliers: inliers.len(),
            });
        }
    }
    Ok(out)
}

/// [`score_pairs`] assembled into a validated graph whose initial rotations
/// are the ground truth.
pub fn build_edges(
    scene: &Scene,
    cfg: &SimSettings,
) -> Result<(ViewGraph, Vec<usize>), SynthError> {
    let scored = score_pairs(scene, cfg)?;
    let counts = scored.iter().map(|p| p.inliers).collect();
    let edges = scored.into_iter().map(|p| p.edge).collect();
    let gt = scene.rotations.clone();
    let g = ViewGraph::new(gt.len(), edges, gt.clone(), Some(gt), cfg.min_inliers)?;
    Ok((g, counts))
}

/// Each rotation right-multiplied by a rotation of angle `U(0, max_deg)`
/// about a uniformly random axis.
pub fn perturb_rotations(gt: &[Rotation], max_deg: f64, seed: u64) -> Vec<Rotation> {
    if max_deg == 0.0 {
        return gt.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    gt.iter()
        .map(|r| r.compose(&random_small_rotation(&mut rng, max_deg)))
        .collect()
}

/// Full pipeline: scene, edges, and initial rotations perturbed by
/// `init_perturb_max`.
pub fn generate_scene(cfg: &SimSettings) -> Result<SyntheticDataset, SynthError> {
    let scene = generate_cameras_and_points(cfg)?;
    let (mut graph, inlier_counts) = build_edges(&scene, cfg)?;
    graph.initial_rotations = perturb_rotations(&scene.rotations, cfg.init_perturb_max, cfg.seed);
    let gt_translations = scene.translations();
    Ok(SyntheticDataset {
        scene,
        graph,
        gt_translations,
        inlier_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{graph_stats, graph_to_json};
    use crate::optimizer::total_cost;
    use crate::so3::geodesic_distance;

    fn small(layout: Layout, sigma: f64, seed: u64) -> SimSettings {
        SimSettings {
            n: 8,
            n_cov: 30,
            sigma,
            layout,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn chord_geometry() {
        let c = camera_centers(4, Layout::Circle);
        assert!((c[0].norm() - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-15);
        for i in 0..4 {
            assert!(((c[i] - c[(i + 1) % 4]).norm() - 1.0).abs() < 1e-12);
            assert_eq!(c[i].z, 0.0);
        }
        let c = camera_centers(100, Layout::Circle);
        assert!(((c[17] - c[18]).norm() - 1.0).abs() < 1e-12);
        assert_eq!(neighbour_pairs(&c).len(), 100);
        let m = camera_centers(
            10,
            Layout::Mixed {
                groups: 5,
                group_size: 2,
            },
        );
        assert_eq!(m[2], m[3]);
        assert!(((m[1] - m[2]).norm() - 1.0).abs() < 1e-12);
        assert_eq!(
            neighbour_pairs(&camera_centers(6, Layout::PureRotation)).len(),
            15
        );
    }

    #[test]
    fn settings_validation() {
        assert!(SimSettings::default().validate().is_ok());
        for name in PRESETS {
            SimSettings::preset(name).unwrap().validate().unwrap();
        }
        assert!(SimSettings::preset("nope").is_none());
        let bad = SimSettings {
            d_min: 5.0,
            d_max: 2.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(SynthError::Invalid(_))));
        let bad = SimSettings {
            n: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimSettings {
            sigma: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimSettings {
            layout: Layout::Mixed {
                groups: 3,
                group_size: 5,
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn settings_json_round_trip() {
        let s = SimSettings::preset("mixed").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"mixed\""));
        assert_eq!(serde_json::from_str::<SimSettings>(&text).unwrap(), s);
        let partial: SimSettings =
            serde_json::from_str(r#"{"n": 12, "layout": {"kind": "pure_rotation"}}"#).unwrap();
        assert_eq!(
            (partial.n, partial.layout, partial.n_cov),
            (12, Layout::PureRotation, 50)
        );
    }

    #[test]
    fn noiseless_bearings_back_project() {
        for layout in [Layout::Circle, Layout::PureRotation] {
            let cfg = small(layout, 0.0, 3);
            let scene = generate_cameras_and_points(&cfg).unwrap();
            for (i, obs) in scene.observations.iter().enumerate() {
                for o in obs {
                    let x = scene.rotations[i].rotate(&(scene.points[o.point] - scene.centers[i]));
                    assert!((o.bearing.norm() - 1.0).abs() < 1e-15);
                    assert!(o.bearing.cross(&x.normalize()).norm() < 1e-12);
                    assert!(cfg.in_image(&o.pixel));
                    let reproj = cfg.project(&x).unwrap();
                    assert!((reproj - o.pixel).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn noisy_pixels_stay_in_image_and_quotas_hold() {
        let cfg = small(Layout::Circle, 2.0, 4);
        let scene = generate_cameras_and_points(&cfg).unwrap();
        for obs in &scene.observations {
            assert!(obs.windows(2).all(|w| w[0].point < w[1].point));
            for o in obs {
                assert!(cfg.in_image(&o.pixel));
                assert!((o.bearing.norm() - 1.0).abs() < 1e-12);
                assert!((o.bearing - cfg.bearing(&o.pixel)).norm() == 0.0);
            }
        }
        for (j, k) in neighbour_pairs(&scene.centers) {
            assert!(scene.common_bearings(j, k).0.len() >= cfg.n_cov);
        }
    }

    #[test]
    fn points_lie_between_height_bounds() {
        let cfg = SimSettings {
            d_min: 5.0,
            d_max: 5.0,
            ..small(Layout::Circle, 0.0, 5)
        };
        let scene = generate_cameras_and_points(&cfg).unwrap();
        assert!(scene.points.iter().all(|p| p.z == 5.0));
        let cfg = small(Layout::Circle, 0.0, 5);
        let scene = generate_cameras_and_points(&cfg).unwrap();
        assert!(scene.points.iter().all(|p| (2.0..5.0).contains(&p.z)));
    }

    #[test]
    fn camera_attitudes_within_scatter() {
        let cfg = small(Layout::Circle, 0.0, 6);
        let scene = generate_cameras_and_points(&cfg).unwrap();
        for r in &scene.rotations {
            assert!(geodesic_distance(r, &Rotation::identity()) <= deg_to_rad(20.0) + 1e-12);
        }
    }

    #[test]
    fn error_is_zero_at_truth_and_grows_off_it() {
        let cfg = small(Layout::Circle, 0.0, 7);
        let scene = generate_cameras_and_points(&cfg).unwrap();
        let (fj, fk) = scene.common_bearings(0, 1);
        let (r, t) = scene.relative_pose(0, 1);
        let t = t.normalize();
        for (a, b) in fj.iter().zip(&fk) {
            assert!(angular_error_l1(a, b, &r, &t) < 1e-12);
        }
        let off = r.compose(&Rotation::from_axis_angle(&Vector3::z(), deg_to_rad(2.0)));
        let total: f64 = fj
            .iter()
            .zip(&fk)
            .map(|(a, b)| angular_error_l1(a, b, &off, &t))
            .sum();
        assert!(total > 1e-3);
    }

    #[test]
    fn stricter_threshold_never_adds_inliers() {
        let cfg = small(Layout::Circle, 1.0, 8);
        let scene = generate_cameras_and_points(&cfg).unwrap();
        let (fj, fk) = scene.common_bearings(2, 3);
        let (r, t) = scene.relative_pose(2, 3);
        let r = r.compose(&Rotation::from_axis_angle(
            &Vector3::new(1.0, 2.0, 0.5),
            0.01,
        ));
        let mut prev = usize::MAX;
        for th in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4] {
            let count = inlier_indices(&fj, &fk, &r, &t.normalize(), th).len();
            assert!(count <= prev);
            prev = count;
        }
    }

    #[test]
    fn unperturbed_candidates_keep_every_point() {
        let cfg = SimSettings {
            candidate_max_deg: 0.0,
            ..small(Layout::Circle, 0.0, 9)
        };
        let scene = generate_cameras_and_points(&cfg).unwrap();
        let (g, counts) = build_edges(&scene, &cfg).unwrap();
        for (e, c) in g.edges.iter().zip(&counts) {
            assert_eq!(*c, scene.common_bearings(e.j, e.k).0.len());
            assert_eq!(e.obs.len(), *c);
        }
    }

    #[test]
    fn every_edge_has_enough_inliers_and_a_relative_rotation() {
        let cfg = small(Layout::Circle, 1.0, 10);
        let ds = generate_scene(&cfg).unwrap();
        assert_eq!(ds.inlier_counts.len(), ds.graph.n_edges());
        for (e, c) in ds.graph.edges.iter().zip(&ds.inlier_counts) {
            assert!(*c >= 10 && e.obs.len() == *c);
            assert!(e.rel_rotation.is_some());
        }
        assert_eq!(
            ds.graph.gt_rotations.as_deref(),
            Some(&ds.scene.rotations[..])
        );
    }

    #[test]
    fn noiseless_graphs_cost_nothing_at_truth() {
        for layout in [
            Layout::Circle,
            Layout::PureRotation,
            Layout::Mixed {
                groups: 4,
                group_size: 2,
            },
        ] {
            let ds = generate_scene(&small(layout, 0.0, 11)).unwrap();
            let gt = ds.graph.gt_rotations.as_ref().unwrap();
            let n_e = ds.graph.n_edges() as f64;
            let squared = total_cost(gt, &ds.graph, false);
            assert!(squared <= 1e-10 * n_e, "{layout:?}: {squared}");
            let rooted = total_cost(gt, &ds.graph, true);
            assert!(rooted <= 1e-6 * n_e, "{layout:?}: {rooted}");
        }
    }

    #[test]
    fn pure_rotation_graph_is_complete() {
        let ds = generate_scene(&small(Layout::PureRotation, 0.5, 12)).unwrap();
        assert_eq!(graph_stats(&ds.graph).edge_density, 1.0);
        assert!(ds.gt_translations.iter().all(|t| t.norm() == 0.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SimSettings {
            init_perturb_max: 5.0,
            ..small(Layout::Circle, 1.0, 13)
        };
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(
            graph_to_json(&a.graph, 10).unwrap(),
            graph_to_json(&b.graph, 10).unwrap()
        );
        let other = generate_scene(&SimSettings { seed: 14, ..cfg }).unwrap();
        assert_ne!(a.scene.points, other.scene.points);
    }

    #[test]
    fn perturbation_bounds_and_determinism() {
        let gt: Vec<_> = (0..50)
            .map(|i| Rotation::from_axis_angle(&Vector3::new(1.0, i as f64, 2.0), 0.05 * i as f64))
            .collect();
        assert_eq!(perturb_rotations(&gt, 0.0, 3), gt);
        let p = perturb_rotations(&gt, 10.0, 3);
        assert_eq!(p, perturb_rotations(&gt, 10.0, 3));
        assert_ne!(p, perturb_rotations(&gt, 10.0, 4));
        for (a, b) in gt.iter().zip(&p) {
            assert!(geodesic_distance(a, b) <= deg_to_rad(10.0) + 1e-12);
        }
    }

    #[test]
    fn relative_rotation_errors_are_a_few_degrees() {
        let cfg = SimSettings {
            n: 20,
            seed: 15,
            ..Default::default()
        };
        let ds = generate_scene(&cfg).unwrap();
        let mean = graph_stats(&ds.graph).mean_rel_rot_error.unwrap();
        assert!(
            (0.1..10.0).contains(&mean),
            "mean relative-rotation error {mean}°"
        );
    }
}
