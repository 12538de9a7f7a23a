//! View graph: cameras, covisibility edges with their bearings, and the JSON
//! interchange format.
//!
//! ```json
//! {
//!   "version": 1,
//!   "n": 3,
//!   "initial_rotations": [[w, x, y, z], ...],
//!   "gt_rotations": [[w, x, y, z], ...],          // optional
//!   "edges": [
//!     { "j": 0, "k": 1,
//!       "bearings_j": [x0, y0, z0, x1, ...],      // 3m numbers
//!       "bearings_k": [x0, y0, z0, x1, ...],
//!       "rel_rotation": [w, x, y, z] }            // optional
//!   ]
//! }
//! ```
//!
//! Rotations are unit quaternions with `w ≥ 0`. Numbers are written with
//! shortest round-trip formatting, so bearings survive a save/load cycle
//! bit for bit.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epipolar::{precompute_moments, EdgeMoments, EdgeObservations, EpipolarError};
use crate::so3::{geodesic_distance, Rotation};
use crate::stats;

pub const FORMAT_VERSION: u32 = 1;

/// Default minimum number of matched bearings per edge.
pub const DEFAULT_MIN_COVISIBLE: usize = 10;

/// Bearings further than this from unit norm are rejected at load.
pub const LOAD_UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed graph json")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("graph has no edges")]
    NoEdges,
    #[error("{field} lists {got} rotations, expected {expected}")]
    RotationCount {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{field}[{index}] is not a valid quaternion")]
    BadQuaternion { field: &'static str, index: usize },
    #[error("edge {edge} ({j},{k}): camera indices must satisfy j < k < n = {n}")]
    BadIndices {
        edge: usize,
        j: usize,
        k: usize,
        n: usize,
    },
    #[error("edge {edge} ({j},{k}) duplicates an earlier edge")]
    DuplicateEdge { edge: usize, j: usize, k: usize },
    #[error("edge {edge} ({j},{k}) has {count} observations, fewer than the required {min}")]
    InsufficientCovisibility {
        edge: usize,
        j: usize,
        k: usize,
        count: usize,
        min: usize,
    },
    #[error(
        "edge {edge} ({j},{k}): bearing arrays must hold 3m numbers each, got {len_j} and {len_k}"
    )]
    BearingLayout {
        edge: usize,
        j: usize,
        k: usize,
        len_j: usize,
        len_k: usize,
    },
    #[error("edge {edge} ({j},{k}): bearing {index} in camera {side} has norm {norm}")]
    BearingNorm {
        edge: usize,
        j: usize,
        k: usize,
        side: char,
        index: usize,
        norm: f64,
    },
    #[error("edge {edge} ({j},{k})")]
    Edge {
        edge: usize,
        j: usize,
        k: usize,
        #[source]
        source: EpipolarError,
    },
    #[error(
        "view graph is disconnected: {components} components; cameras outside the first: {stray:?}"
    )]
    Disconnected {
        components: usize,
        stray: Vec<usize>,
    },
}

/// One covisibility edge `(j, k)` with `j < k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub j: usize,
    pub k: usize,
    pub obs: EdgeObservations,
    pub moments: EdgeMoments,
    /// Externally estimated relative rotation `R_jk`, used only for statistics.
    pub rel_rotation: Option<Rotation>,
}

impl Edge {
    pub fn new(j: usize, k: usize, obs: EdgeObservations, rel_rotation: Option<Rotation>) -> Self {
        let moments = precompute_moments(&obs);
        Self {
            j,
            k,
            obs,
            moments,
            rel_rotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    pub n: usize,
    pub edges: Vec<Edge>,
    pub initial_rotations: Vec<Rotation>,
    pub gt_rotations: Option<Vec<Rotation>>,
}

impl ViewGraph {
    /// Builds and validates a graph.
    pub fn new(
        n: usize,
        edges: Vec<Edge>,
        initial_rotations: Vec<Rotation>,
        gt_rotations: Option<Vec<Rotation>>,
        min_covisible: usize,
    ) -> Result<Self, GraphError> {
        let g = Self {
            n,
            edges,
            initial_rotations,
            gt_rotations,
        };
        g.validate(min_covisible)?;
        Ok(g)
    }

    /// Checks index ordering, uniqueness, covisibility, rotation counts and connectivity.
    pub fn validate(&self, min_covisible: usize) -> Result<(), GraphError> {
        if self.edges.is_empty() {
            return Err(GraphError::NoEdges);
        }
        check_count("initial_rotations", self.n, self.initial_rotations.len())?;
        if let Some(gt) = &self.gt_rotations {
            check_count("gt_rotations", self.n, gt.len())?;
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let (j, k) = (e.j, e.k);
            if !(j < k && k < self.n) {
                return Err(GraphError::BadIndices {
                    edge: i,
                    j,
                    k,
                    n: self.n,
                });
            }
            if !seen.insert((j, k)) {
                return Err(GraphError::DuplicateEdge { edge: i, j, k });
            }
            if e.obs.len() < min_covisible {
                return Err(GraphError::InsufficientCovisibility {
                    edge: i,
                    j,
                    k,
                    count: e.obs.len(),
                    min: min_covisible,
                });
            }
        }
        let components = connected_components(self.n, self.edges.iter().map(|e| (e.j, e.k)));
        let count = components.iter().collect::<HashSet<_>>().len();
        if count > 1 {
            let root = components[0];
            let stray = (0..self.n).filter(|&c| components[c] != root).collect();
            return Err(GraphError::Disconnected {
                components: count,
                stray,
            });
        }
        Ok(())
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

fn check_count(field: &'static str, expected: usize, got: usize) -> Result<(), GraphError> {
    if expected != got {
        return Err(GraphError::RotationCount {
            field,
            expected,
            got,
        });
    }
    Ok(())
}

/// Component label per camera (union-find root).
fn connected_components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    version: u32,
    n: usize,
    initial_rotations: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_rotations: Option<Vec<[f64; 4]>>,
    edges: Vec<EdgeFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeFile {
    j: usize,
    k: usize,
    bearings_j: Vec<f64>,
    bearings_k: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel_rotation: Option<[f64; 4]>,
}

/// Serializes a list of rotations with the graph format's quaternion encoding.
pub fn encode_rotations(rs: &[Rotation]) -> Vec<[f64; 4]> {
    rs.iter().map(Rotation::to_quaternion_wxyz).collect()
}

pub fn decode_rotations(field: &'static str, qs: &[[f64; 4]]) -> Result<Vec<Rotation>, GraphError> {
    qs.iter()
        .enumerate()
        .map(|(index, q)| decode_quaternion(field, index, q))
        .collect()
}

fn decode_quaternion(
    field: &'static str,
    index: usize,
    q: &[f64; 4],
) -> Result<Rotation, GraphError> {
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < 1e-6 {
        return Err(GraphError::BadQuaternion { field, index });
    }
    Ok(Rotation::from_quaternion_wxyz(*q))
}

fn decode_bearings(
    flat: &[f64],
    edge: usize,
    j: usize,
    k: usize,
    side: char,
) -> Result<Vec<Vector3<f64>>, GraphError> {
    flat.chunks_exact(3)
        .enumerate()
        .map(|(index, c)| {
            let v = Vector3::new(c[0], c[1], c[2]);
            let norm = v.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > LOAD_UNIT_TOL {
                return Err(GraphError::BearingNorm {
                    edge,
                    j,
                    k,
                    side,
                    index,
                    norm,
                });
            }
            // Leave already-unit vectors untouched so save/load is bit exact.
            Ok(if (norm - 1.0).abs() > 1e-15 {
                v / norm
            } else {
                v
            })
        })
        .collect()
}

fn flatten(vs: &[Vector3<f64>]) -> Vec<f64> {
    vs.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

/// Parses and validates a graph document.
pub fn graph_from_json(text: &str, min_covisible: usize) -> Result<ViewGraph, GraphError> {
    let file: GraphFile = serde_json::from_str(text)?;
    if file.version != FORMAT_VERSION {
        return Err(GraphError::Version(file.version));
    }
    let initial_rotations = decode_rotations("initial_rotations", &file.initial_rotations)?;
    let gt_rotations = file
        .gt_rotations
        .as_deref()
        .map(|g| decode_rotations("gt_rotations", g))
        .transpose()?;
    let mut edges = Vec::with_capacity(file.edges.len());
    for (i, e) in file.edges.into_iter().enumerate() {
        let (j, k) = (e.j, e.k);
        if e.bearings_j.len() % 3 != 0 || e.bearings_j.len() != e.bearings_k.len() {
            return Err(GraphError::BearingLayout {
                edge: i,
                j,
                k,
                len_j: e.bearings_j.len(),
                len_k: e.bearings_k.len(),
            });
        }
        let m = e.bearings_j.len() / 3;
        if m < min_covisible {
            return Err(GraphError::InsufficientCovisibility {
                edge: i,
                j,
                k,
                count: m,
                min: min_covisible,
            });
        }
        let fj = decode_bearings(&e.bearings_j, i, j, k, 'j')?;
        let fk = decode_bearings(&e.bearings_k, i, j, k, 'k')?;
        let obs = EdgeObservations::new(fj, fk).map_err(|source| GraphError::Edge {
            edge: i,
            j,
            k,
            source,
        })?;
        let rel = e
            .rel_rotation
            .map(|q| decode_quaternion("rel_rotation", i, &q))
            .transpose()?;
        edges.push(Edge::new(j, k, obs, rel));
    }
    ViewGraph::new(
        file.n,
        edges,
        initial_rotations,
        gt_rotations,
        min_covisible,
    )
}

/// Canonical JSON document for `g`; identical graphs give identical bytes.
pub fn graph_to_json(g: &ViewGraph, min_covisible: usize) -> Result<String, GraphError> {
    g.validate(min_covisible)?;
    let file = GraphFile {
        version: FORMAT_VERSION,
        n: g.n,
        initial_rotations: encode_rotations(&g.initial_rotations),
        gt_rotations: g.gt_rotations.as_deref().map(encode_rotations),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeFile {
                j: e.j,
                k: e.k,
                bearings_j: flatten(e.obs.bearings_j()),
                bearings_k: flatten(e.obs.bearings_k()),
                rel_rotation: e.rel_rotation.as_ref().map(Rotation::to_quaternion_wxyz),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn load_graph(path: &Path) -> Result<ViewGraph, GraphError> {
    load_graph_with(path, DEFAULT_MIN_COVISIBLE)
}

pub fn load_graph_with(path: &Path, min_covisible: usize) -> Result<ViewGraph, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    graph_from_json(&text, min_covisible)
}

pub fn save_graph(g: &ViewGraph, path: &Path) -> Result<(), GraphError> {
    save_graph_with(g, path, DEFAULT_MIN_COVISIBLE)
}

pub fn save_graph_with(g: &ViewGraph, path: &Path, min_covisible: usize) -> Result<(), GraphError> {
    let text = graph_to_json(g, min_covisible)?;
    crate::io::write_atomic(path, text.as_bytes()).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub n_edges: usize,
    /// `n_edges / C(n, 2)`.
    pub edge_density: f64,
    /// Degrees; present when ground truth and per-edge relative rotations exist.
    pub mean_rel_rot_error: Option<f64>,
    pub median_rel_rot_error: Option<f64>,
}

pub fn graph_stats(g: &ViewGraph) -> GraphStats {
    let pairs = g.n * g.n.saturating_sub(1) / 2;
    let edge_density = if pairs == 0 {
        0.0
    } else {
        g.edges.len() as f64 / pairs as f64
    };
    let errors: Vec<f64> = match &g.gt_rotations {
        Some(gt) => g
            .edges
            .iter()
            .filter_map(|e| {
                let est = e.rel_rotation.as_ref()?;
                let truth = gt[e.j].between(&gt[e.k]);
                Some(geodesic_distance(&truth, est).to_degrees())
            })
            .collect(),
        None => Vec::new(),
    };
    GraphStats {
        n_edges: g.edges.len(),
        edge_density,
        mean_rel_rot_error: stats::mean(&errors),
        median_rel_rot_error: stats::median(&errors),
    }
}
