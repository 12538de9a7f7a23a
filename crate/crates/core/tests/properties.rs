//! Randomized invariants across the epipolar, graph, optimizer, evaluation
//! and synthesis modules.

mod common;

use common::oracles::{jacobi_eigenvalues, random_psd, random_rotation, random_unit};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotonly_core::epipolar::{
    edge_cost, precompute_moments, smallest_eigenvalue, EdgeObservations, MMatrix,
};
use rotonly_core::eval::{align_l1, error_report};
use rotonly_core::graph::{graph_from_json, graph_to_json, Edge, ViewGraph};
use rotonly_core::optimizer::{
    adam_step, cost_and_gradient, total_cost, OptimizerConfig, OptimizerState,
};
use rotonly_core::so3::{deg_to_rad, Rotation};
use rotonly_core::synth::{generate_scene, Layout, SimSettings};

fn rot(rng: &mut ChaCha8Rng) -> Rotation {
    Rotation::project(&random_rotation(rng))
}

fn observations(rng: &mut ChaCha8Rng, m: usize) -> EdgeObservations {
    let fj = (0..m).map(|_| random_unit(rng)).collect();
    let fk = (0..m).map(|_| random_unit(rng)).collect();
    EdgeObservations::new(fj, fk).unwrap()
}

/// A ring of `n` cameras plus chords, with random bearings on every edge.
fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> ViewGraph {
    let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    if n > 2 {
        pairs.push((0, n - 1));
    }
    if n > 3 {
        pairs.push((0, n / 2));
    }
    let edges = pairs
        .into_iter()
        .map(|(j, k)| Edge::new(j, k, observations(rng, 12), None))
        .collect();
    let init = (0..n).map(|_| rot(rng)).collect();
    let gt = (0..n).map(|_| rot(rng)).collect();
    ViewGraph::new(n, edges, init, Some(gt), 10).unwrap()
}

fn relative_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn eigenvalue_bounded_by_oracle_spectrum(seed in any::<u64>(), log_cond in 0.0f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_psd(&mut rng, 10f64.powf(log_cond));
        let ours = smallest_eigenvalue(&MMatrix(m));
        let oracle = jacobi_eigenvalues(&m);
        for l in oracle {
            prop_assert!(ours <= l + 1e-9);
        }
        prop_assert!((ours - oracle[0]).abs() <= 1e-9);
    }

    #[test]
    fn edge_cost_is_nonnegative_and_gauge_free(seed in any::<u64>(), m in 10usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let moments = precompute_moments(&observations(&mut rng, m));
        let (rj, rk, q) = (rot(&mut rng), rot(&mut rng), rot(&mut rng));
        for use_sqrt in [false, true] {
            let plain = edge_cost(&rj.between(&rk), &moments, use_sqrt).cost;
            let moved = edge_cost(&rj.compose(&q).between(&rk.compose(&q)), &moments, use_sqrt).cost;
            prop_assert!(plain >= 0.0);
            prop_assert!(relative_diff(plain, moved) <= 1e-12);
        }
    }

    #[test]
    fn graph_json_round_trip(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let built = random_graph(&mut rng, n);
        let g = graph_from_json(&graph_to_json(&built, 10).unwrap(), 10).unwrap();
        let back = graph_from_json(&graph_to_json(&g, 10).unwrap(), 10).unwrap();
        prop_assert_eq!(&back.edges, &g.edges);
        let pairs = built.initial_rotations.iter().zip(&back.initial_rotations);
        let gt_pairs = built.gt_rotations.as_ref().unwrap().iter().zip(back.gt_rotations.as_ref().unwrap());
        for (a, b) in pairs.chain(gt_pairs) {
            prop_assert!((a.matrix() - b.matrix()).amax() <= 1e-14);
        }
        for e in &back.edges {
            prop_assert_eq!(e.moments, precompute_moments(&e.obs));
        }
    }

    #[test]
    fn total_cost_is_gauge_free(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        let q = rot(&mut rng);
        let moved: Vec<Rotation> = g.initial_rotations.iter().map(|r| r.compose(&q)).collect();
        prop_assert!(relative_diff(total_cost(&g.initial_rotations, &g, true), total_cost(&moved, &g, true)) <= 1e-12);
    }

    #[test]
    fn approximate_gradient_of_one_edge_sums_to_zero(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 2);
        let grad = cost_and_gradient(&g.initial_rotations, &g, &OptimizerConfig::default()).gradient;
        for a in 0..3 {
            prop_assert_eq!(grad[a] + grad[3 + a], 0.0);
        }
    }

    #[test]
    fn zero_decay_adam_is_normalized_descent(seed in any::<u64>(), g in prop::collection::vec(-10.0f64..10.0, 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = OptimizerConfig { beta1: 0.0, beta2: 0.0, ..Default::default() };
        let mut state = OptimizerState::new(&[rot(&mut rng), rot(&mut rng)], &cfg);
        state.t = 1;
        let next = adam_step(&state, &g, &cfg);
        for ((s0, s1), gi) in state.s.iter().zip(&next.s).zip(&g) {
            let expected = s0 - cfg.alpha_initial * gi / (gi.abs() + cfg.epsilon);
            prop_assert!((s1 - expected).abs() <= 1e-15);
        }
    }

    #[test]
    fn error_report_is_gauge_free_and_alignment_keeps_relatives(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt: Vec<Rotation> = (0..n).map(|_| rot(&mut rng)).collect();
        let offset = rot(&mut rng);
        let est: Vec<Rotation> = gt
            .iter()
            .map(|g| g.compose(&Rotation::from_axis_angle(&random_unit(&mut rng), deg_to_rad(rng.random_range(0.0..30.0)))).compose(&offset))
            .collect();
        let q = rot(&mut rng);
        let moved: Vec<Rotation> = est.iter().map(|r| r.compose(&q)).collect();
        let (a, b) = (error_report(&est, &gt), error_report(&moved, &gt));
        prop_assert!((a.mn1 - b.mn1).abs() <= 1e-6);
        prop_assert!((a.md1 - b.md1).abs() <= 1e-6);
        prop_assert!((a.mn2 - b.mn2).abs() <= 1e-6);
        prop_assert!((a.md2 - b.md2).abs() <= 1e-6);

        let l = align_l1(&est, &gt);
        let aligned: Vec<Matrix3<f64>> = est.iter().map(|r| r.matrix() * l.matrix()).collect();
        for j in 0..n {
            for k in j + 1..n {
                let before = est[j].matrix() * est[k].matrix().transpose();
                let after = aligned[j] * aligned[k].transpose();
                prop_assert!((before - after).amax() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_scenes_are_well_formed(seed in any::<u64>(), pure in any::<bool>(), sigma in 0.0f64..2.0) {
        let layout = if pure { Layout::PureRotation } else { Layout::Circle };
        let cfg = SimSettings { n: 8, sigma, layout, seed, ..Default::default() };
        let ds = generate_scene(&cfg).unwrap();
        for obs in ds.scene.observations.iter().flatten() {
            prop_assert!((obs.bearing.norm() - 1.0).abs() <= 1e-12);
            prop_assert!(obs.pixel.x >= 0.0 && obs.pixel.x <= cfg.image_w);
            prop_assert!(obs.pixel.y >= 0.0 && obs.pixel.y <= cfg.image_h);
        }
        for e in &ds.graph.edges {
            prop_assert!(e.obs.len() >= cfg.min_inliers);
            prop_assert!(e.obs.bearings_j().iter().chain(e.obs.bearings_k()).all(|f: &Vector3<f64>| (f.norm() - 1.0).abs() <= 1e-12));
        }
        let again = generate_scene(&cfg).unwrap();
        prop_assert_eq!(graph_to_json(&ds.graph, 10).unwrap(), graph_to_json(&again.graph, 10).unwrap());
    }
}
