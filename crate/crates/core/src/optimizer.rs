//! Multiview rotation optimization.
//!
//! The total cost is the sum of edge costs over the view graph. Its gradient
//! with respect to the stacked rotation vectors is taken by forward
//! differences; by default only camera `j` of each edge is perturbed and the
//! change is mirrored with opposite sign onto camera `k` (4 edge-cost
//! evaluations per edge instead of 7). The state is advanced with Adam, and
//! the step size drops permanently once the cost has risen on several
//! consecutive iterations.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epipolar::edge_cost_value;
use crate::graph::{Edge, ViewGraph};
use crate::so3::{exp_unchecked, log_unchecked, Rotation};

/// Edges below this count are evaluated on the calling thread.
const PARALLEL_MIN_EDGES: usize = 256;

/// Consecutive small relative changes required by the optional early stop.
const CONVERGED_STREAK: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be positive and finite")]
    NotPositive(&'static str),
    #[error("{0} must lie in [0, 1)")]
    BadDecay(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub alpha_initial: f64,
    pub alpha_reduced: f64,
    pub epsilon: f64,
    pub n_iterations: usize,
    /// Forward-difference step in the rotation-vector chart (radians).
    pub delta: f64,
    pub use_sqrt: bool,
    pub approximate_gradient: bool,
    /// Enables the permanent drop to `alpha_reduced`.
    pub step_switching: bool,
    pub switch_on_increases: usize,
    /// Stop once `|ΔC|/C` stays below this for several iterations.
    pub convergence_tol: Option<f64>,
    /// Evaluate edges on the rayon pool; results are identical either way.
    pub parallel: bool,
    /// Keep a copy of all rotations every this many iterations.
    pub snapshot_every: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            alpha_initial: 0.01,
            alpha_reduced: 0.001,
            epsilon: 1e-8,
            n_iterations: 100,
            delta: 1e-4,
            use_sqrt: true,
            approximate_gradient: true,
            step_switching: true,
            switch_on_increases: 5,
            convergence_tol: None,
            parallel: true,
            snapshot_every: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("alpha_initial", self.alpha_initial),
            ("alpha_reduced", self.alpha_reduced),
            ("epsilon", self.epsilon),
            ("delta", self.delta),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if let Some(tol) = self.convergence_tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(ConfigError::NotPositive("convergence_tol"));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(ConfigError::BadDecay(name));
            }
        }
        Ok(())
    }

    /// Edge-cost evaluations per edge per gradient.
    pub fn evaluations_per_edge(&self) -> u64 {
        if self.approximate_gradient {
            4
        } else {
            7
        }
    }
}

/// Sum of edge costs, accumulated in edge order.
pub fn total_cost(rotations: &[Rotation], g: &ViewGraph, use_sqrt: bool) -> f64 {
    assert_eq!(rotations.len(), g.n, "one rotation per camera");
    g.edges
        .iter()
        .map(|e| {
            edge_cost_value(
                &rotations[e.j].between(&rotations[e.k]),
                &e.moments,
                use_sqrt,
            )
        })
        .fold(0.0, |acc, c| acc + c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostGradient {
    pub cost: f64,
    /// `3n` entries; camera `i` owns `[3i, 3i + 3)`.
    pub gradient: Vec<f64>,
    pub edge_evaluations: u64,
}

struct EdgeContribution {
    cost: f64,
    d_j: [f64; 3],
    d_k: [f64; 3],
    evaluations: u64,
}

/// `Exp(Log(R) + δ·e_axis)` for each axis.
fn perturbed(r: &Rotation, delta: f64) -> [Rotation; 3] {
    let u = log_unchecked(r).0;
    [Vector3::x(), Vector3::y(), Vector3::z()].map(|e| exp_unchecked(&(u + e * delta)))
}

fn edge_contribution(
    e: &Edge,
    rotations: &[Rotation],
    nudged: &[[Rotation; 3]],
    cfg: &OptimizerConfig,
) -> EdgeContribution {
    let (rj, rk) = (&rotations[e.j], &rotations[e.k]);
    let cost = |r: Rotation| edge_cost_value(&r, &e.moments, cfg.use_sqrt);
    let c0 = cost(rj.between(rk));
    let d_j = [0, 1, 2].map(|a| cost(nudged[e.j][a].between(rk)) - c0);
    if cfg.approximate_gradient {
        return EdgeContribution {
            cost: c0,
            d_j,
            d_k: d_j.map(|d| -d),
            evaluations: 4,
        };
    }
    let d_k = [0, 1, 2].map(|a| cost(rj.between(&nudged[e.k][a])) - c0);
    EdgeContribution {
        cost: c0,
        d_j,
        d_k,
        evaluations: 7,
    }
}

/// Total cost and its forward-difference gradient over the stacked rotation vectors.
pub fn cost_and_gradient(
    rotations: &[Rotation],
    g: &ViewGraph,
    cfg: &OptimizerConfig,
) -> CostGradient {
    assert_eq!(rotations.len(), g.n, "one rotation per camera");
    let nudged: Vec<[Rotation; 3]> = rotations.iter().map(|r| perturbed(r, cfg.delta)).collect();
    let work = |e: &Edge| edge_contribution(e, rotations, &nudged, cfg);
    let parts: Vec<EdgeContribution> = if cfg.parallel && g.edges.len() >= PARALLEL_MIN_EDGES {
        g.edges.par_iter().map(work).collect()
    } else {
        g.edges.iter().map(work).collect()
    };

    // Index-ordered reduction keeps results bit-identical across thread counts.
    let mut gradient = vec![0.0; 3 * g.n];
    let mut cost = 0.0;
    let mut edge_evaluations = 0;
    for (e, p) in g.edges.iter().zip(&parts) {
        for a in 0..3 {
            gradient[3 * e.j + a] += p.d_j[a];
            gradient[3 * e.k + a] += p.d_k[a];
        }
        cost += p.cost;
        edge_evaluations += p.evaluations;
    }
    for x in &mut gradient {
        *x /= cfg.delta;
    }
    CostGradient {
        cost,
        gradient,
        edge_evaluations,
    }
}

/// Adam state over the stacked rotation vectors plus the step-size schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub s: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub alpha: f64,
    pub increase_streak: usize,
    pub switched: bool,
    last_cost: Option<f64>,
}

impl OptimizerState {
    /// Stacks the canonical rotation vectors (`‖u‖ ≤ π`) of `rotations`.
    pub fn new(rotations: &[Rotation], cfg: &OptimizerConfig) -> Self {
        let s: Vec<f64> = rotations
            .iter()
            .flat_map(|r| {
                let u = log_unchecked(r).canonical().0;
                [u.x, u.y, u.z]
            })
            .collect();
        let len = s.len();
        Self {
            s,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            alpha: cfg.alpha_initial,
            increase_streak: 0,
            switched: false,
            last_cost: None,
        }
    }

    pub fn rotations(&self) -> Vec<Rotation> {
        self.s
            .chunks_exact(3)
            .map(|c| exp_unchecked(&Vector3::new(c[0], c[1], c[2])))
            .collect()
    }

    /// One Adam update at the current `t` (the caller increments `t` first).
    pub fn adam_step(&mut self, gradient: &[f64], cfg: &OptimizerConfig) {
        assert_eq!(gradient.len(), self.s.len());
        assert!(self.t >= 1, "increment t before stepping");
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (((s, m), v), &g) in self
            .s
            .iter_mut()
            .zip(&mut self.m)
            .zip(&mut self.v)
            .zip(gradient)
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * (g * g);
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *s -= self.alpha * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }

    /// Feeds the cost of the current iteration to the step-size schedule.
    /// Returns `true` when this call switched to the reduced step size.
    pub fn record_cost(&mut self, cost: f64, cfg: &OptimizerConfig) -> bool {
        match self.last_cost {
            Some(prev) if cost > prev => self.increase_streak += 1,
            _ => self.increase_streak = 0,
        }
        self.last_cost = Some(cost);
        if cfg.step_switching && !self.switched && self.increase_streak >= cfg.switch_on_increases {
            self.alpha = cfg.alpha_reduced;
            self.switched = true;
            return true;
        }
        false
    }
}

/// Functional form of [`OptimizerState::adam_step`].
pub fn adam_step(
    state: &OptimizerState,
    gradient: &[f64],
    cfg: &OptimizerConfig,
) -> OptimizerState {
    let mut next = state.clone();
    next.adam_step(gradient, cfg);
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: u64,
    /// Cost at the start of the iteration (where the gradient was taken).
    pub cost: f64,
    /// Step size used by this iteration's update.
    pub alpha: f64,
    pub grad_norm: f64,
    pub edge_evaluations: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// `(iter, rotations after that iteration)`; iteration 0 is the input.
    pub snapshots: Vec<(u64, Vec<Rotation>)>,
}

impl IterationTrace {
    pub fn total_edge_evaluations(&self) -> u64 {
        self.records.iter().map(|r| r.edge_evaluations).sum()
    }

    /// CSV with header `iter,cost,alpha,grad_norm`, plus `mn1` when one
    /// value per record is supplied.
    pub fn to_csv(&self, mn1: Option<&[f64]>) -> String {
        let mut out = String::from("iter,cost,alpha,grad_norm");
        if mn1.is_some() {
            out.push_str(",mn1");
        }
        out.push('\n');
        for (i, r) in self.records.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}",
                r.iter, r.cost, r.alpha, r.grad_norm
            ));
            if let Some(errs) = mn1 {
                out.push_str(&format!(",{}", errs.get(i).copied().unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub rotations: Vec<Rotation>,
    pub trace: IterationTrace,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub switched_at: Option<u64>,
}

/// Runs the optimizer from the graph's initial rotations.
pub fn optimize(g: &ViewGraph, cfg: &OptimizerConfig) -> OptimizeOutcome {
    optimize_from(g, &g.initial_rotations, cfg)
}

pub fn optimize_from(
    g: &ViewGraph,
    initial: &[Rotation],
    cfg: &OptimizerConfig,
) -> OptimizeOutcome {
    let mut state = OptimizerState::new(initial, cfg);
    let mut rotations = initial.to_vec();
    let initial_cost = total_cost(&rotations, g, cfg.use_sqrt);
    state.last_cost = Some(initial_cost);

    let mut trace = IterationTrace::default();
    if cfg.snapshot_every.is_some() {
        trace.snapshots.push((0, rotations.clone()));
    }
    let mut switched_at = None;
    let mut calm = 0;
    let mut prev_cost = initial_cost;

    while (state.t as usize) < cfg.n_iterations {
        state.t += 1;
        let cg = cost_and_gradient(&rotations, g, cfg);
        let alpha = state.alpha;
        state.adam_step(&cg.gradient, cfg);
        rotations = state.rotations();
        if state.record_cost(cg.cost, cfg) {
            switched_at = Some(state.t);
        }
        trace.records.push(IterationRecord {
            iter: state.t,
            cost: cg.cost,
            alpha,
            grad_norm: cg.gradient.iter().map(|x| x * x).sum::<f64>().sqrt(),
            edge_evaluations: cg.edge_evaluations,
        });
        if let Some(every) = cfg.snapshot_every {
            if every > 0 && state.t.is_multiple_of(every as u64) {
                trace.snapshots.push((state.t, rotations.clone()));
            }
        }
        if let Some(tol) = cfg.convergence_tol {
            let rel = if cg.cost > 0.0 {
                (cg.cost - prev_cost).abs() / cg.cost
            } else {
                0.0
            };
            calm = if rel < tol { calm + 1 } else { 0 };
            if calm >= CONVERGED_STREAK {
                break;
            }
        }
        prev_cost = cg.cost;
    }

    let final_cost = total_cost(&rotations, g, cfg.use_sqrt);
    OptimizeOutcome {
        rotations,
        trace,
        initial_cost,
        final_cost,
        switched_at,
    }
}
