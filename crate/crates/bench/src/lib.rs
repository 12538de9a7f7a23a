//! Shared fixtures for the benchmarks.

use rotonly_core::synth::{generate_scene, SimSettings};
use rotonly_core::ViewGraph;

/// A noisy circle scene with `n` cameras and the default covisibility.
pub fn circle_graph(n: usize) -> ViewGraph {
    let cfg = SimSettings {
        n,
        sigma: 1.0,
        seed: 1,
        ..Default::default()
    };
    generate_scene(&cfg).expect("benchmark scene").graph
}
