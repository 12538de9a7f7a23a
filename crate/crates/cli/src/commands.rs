use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use rayon::prelude::*;
use rotonly_core::eval::{error_report, mean_l1_error};
use rotonly_core::graph::{
    decode_rotations, encode_rotations, graph_to_json, load_graph_with, FORMAT_VERSION,
};
use rotonly_core::io::write_atomic;
use rotonly_core::optimizer::optimize;
use rotonly_core::stats::median;
use rotonly_core::synth::{generate_scene, SimSettings};
use rotonly_core::{OptimizerConfig, Rotation, ViewGraph};
use serde::{Deserialize, Serialize};

use crate::args::{EvaluateArgs, MonteCarloArgs, OptimizeArgs, SynthArgs};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Failure};

pub const SUMMARY_CSV_HEADER: &str = "trial,init_mn1,final_mn1,improved";

#[derive(Debug, Serialize, Deserialize)]
struct RotationsFile {
    version: u32,
    rotations: Vec<[f64; 4]>,
}

#[derive(Debug, Serialize)]
struct OptimizeSummary<'a> {
    graph: String,
    n: usize,
    n_edges: usize,
    iterations: usize,
    initial_cost: f64,
    final_cost: f64,
    edge_evaluations_per_iteration: u64,
    edge_evaluations_total: u64,
    switched_at: Option<u64>,
    config: &'a OptimizerConfig,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    write_atomic(path, contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(anyhow::Error::from)
        .runtime()?;
    s.push('\n');
    Ok(s)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .runtime()
}

/// File name with a known suffix removed: `trial_1.graph.json` gives `trial_1`.
fn stem(path: &Path, suffixes: &[&str]) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    suffixes
        .iter()
        .find_map(|s| name.strip_suffix(s))
        .map(str::to_owned)
        .unwrap_or(name)
}

fn load(path: &Path, min_covisible: usize) -> Result<ViewGraph, CliError> {
    load_graph_with(path, min_covisible)
        .with_context(|| format!("loading {}", path.display()))
        .usage()
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_file_or_default(a.config.as_deref()).usage()?;
    cfg.apply_scene(&a.scene).usage()?;
    cfg.apply_common(a.seed, a.trials, a.min_covisible);
    cfg.sim.min_inliers = cfg.min_covisible;
    cfg.validate().usage()?;
    prepare_out(&a.out)?;

    let mut failures = 0;
    for k in 1..=cfg.trials {
        let sim = trial_settings(&cfg.sim, k);
        let result = generate_scene(&sim)
            .map_err(anyhow::Error::from)
            .and_then(|ds| Ok(graph_to_json(&ds.graph, cfg.min_covisible)?));
        match result {
            Ok(text) => {
                write(&a.out.join(format!("trial_{k}.graph.json")), &text)?;
                write(
                    &a.out.join(format!("trial_{k}.settings.json")),
                    &to_json(&sim)?,
                )?;
                info!("trial {k}: wrote trial_{k}.graph.json");
            }
            Err(e) => {
                warn!("trial {k} failed: {e:#}");
                failures += 1;
            }
        }
    }
    if failures > 0 {
        return Err(anyhow!("{failures} of {} trials failed", cfg.trials)).runtime();
    }
    println!("wrote {} dataset(s) to {}", cfg.trials, a.out.display());
    Ok(())
}

fn trial_settings(base: &SimSettings, k: usize) -> SimSettings {
    SimSettings {
        seed: base.seed.wrapping_add(k as u64 - 1),
        ..base.clone()
    }
}

pub fn optimize_cmd(a: &OptimizeArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_file_or_default(a.config.as_deref()).usage()?;
    cfg.apply_optimizer(&a.optimizer);
    cfg.apply_common(None, None, a.min_covisible);
    cfg.validate().usage()?;
    let g = load(&a.graph, cfg.min_covisible)?;
    let gt = match (a.track_error, &g.gt_rotations) {
        (true, None) => {
            return Err(anyhow!(
                "--track-error needs ground truth in {}",
                a.graph.display()
            ))
            .usage()
        }
        (true, Some(gt)) => Some(gt.clone()),
        (false, _) => None,
    };
    prepare_out(&a.out)?;

    let mut oc = cfg.optimizer.clone();
    if gt.is_some() {
        oc.snapshot_every = Some(1);
    }
    let out = optimize(&g, &oc);
    let mn1: Option<Vec<f64>> = gt.as_ref().map(|gt| {
        out.trace.snapshots[..out.trace.records.len()]
            .par_iter()
            .map(|(_, rs)| mean_l1_error(rs, gt))
            .collect()
    });

    let base = stem(&a.graph, &[".graph.json", ".json"]);
    let rotations = RotationsFile {
        version: FORMAT_VERSION,
        rotations: encode_rotations(&out.rotations),
    };
    write(
        &a.out.join(format!("{base}.rotations.json")),
        &to_json(&rotations)?,
    )?;
    write(
        &a.out.join(format!("{base}.trace.csv")),
        &out.trace.to_csv(mn1.as_deref()),
    )?;
    let summary = OptimizeSummary {
        graph: a.graph.display().to_string(),
        n: g.n,
        n_edges: g.n_edges(),
        iterations: out.trace.records.len(),
        initial_cost: out.initial_cost,
        final_cost: out.final_cost,
        edge_evaluations_per_iteration: out.trace.records.first().map_or(0, |r| r.edge_evaluations),
        edge_evaluations_total: out.trace.total_edge_evaluations(),
        switched_at: out.switched_at,
        config: &oc,
    };
    write(
        &a.out.join(format!("{base}.summary.json")),
        &to_json(&summary)?,
    )?;
    println!(
        "cost {:.6e} -> {:.6e} after {} iterations ({} edge-cost evaluations per iteration)",
        summary.initial_cost,
        summary.final_cost,
        summary.iterations,
        summary.edge_evaluations_per_iteration
    );
    Ok(())
}

fn load_rotations(path: &Path) -> anyhow::Result<Vec<Rotation>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: RotationsFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if file.version != FORMAT_VERSION {
        return Err(anyhow!(
            "unsupported rotations format version {}",
            file.version
        ));
    }
    Ok(decode_rotations("rotations", &file.rotations)?)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let min_covisible = a
        .min_covisible
        .unwrap_or(ExperimentConfig::default().min_covisible);
    let g = load(&a.graph, min_covisible)?;
    let gt = g
        .gt_rotations
        .as_ref()
        .ok_or_else(|| anyhow!("{} has no ground-truth rotations", a.graph.display()))
        .usage()?;
    let est = load_rotations(&a.rotations).usage()?;
    if est.len() != gt.len() {
        return Err(anyhow!(
            "{} rotations for a graph of {} cameras",
            est.len(),
            gt.len()
        ))
        .usage();
    }
    prepare_out(&a.out)?;
    let report = error_report(&est, gt);
    let base = stem(&a.rotations, &[".rotations.json", ".json"]);
    write(
        &a.out.join(format!("{base}.report.json")),
        &to_json(&report)?,
    )?;
    write(&a.out.join(format!("{base}.report.csv")), &report.to_csv())?;
    println!(
        "mn1 {:.6} md1 {:.6} mn2 {:.6} md2 {:.6} (degrees)",
        report.mn1, report.md1, report.mn2, report.md2
    );
    Ok(())
}

struct TrialOutcome {
    init_mn1: f64,
    final_mn1: f64,
}

fn run_trial(sim: &SimSettings, cfg: &ExperimentConfig) -> anyhow::Result<TrialOutcome> {
    let ds = generate_scene(sim)?;
    let gt = ds
        .graph
        .gt_rotations
        .as_ref()
        .expect("synthetic graphs carry ground truth");
    let out = optimize(&ds.graph, &cfg.optimizer);
    Ok(TrialOutcome {
        init_mn1: mean_l1_error(&ds.graph.initial_rotations, gt),
        final_mn1: mean_l1_error(&out.rotations, gt),
    })
}

/// Summary CSV: one row per trial and a final `median` row whose last column
/// is the percentage of trials that improved.
fn summary_csv(results: &[anyhow::Result<TrialOutcome>]) -> String {
    let mut out = format!("{SUMMARY_CSV_HEADER}\n");
    let (mut inits, mut finals, mut improved) = (Vec::new(), Vec::new(), 0);
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(t) => {
                let better = t.final_mn1 < t.init_mn1;
                improved += usize::from(better);
                inits.push(t.init_mn1);
                finals.push(t.final_mn1);
                let _ = writeln!(out, "{},{},{},{}", i + 1, t.init_mn1, t.final_mn1, better);
            }
            Err(_) => {
                let _ = writeln!(out, "{},,,failed", i + 1);
            }
        }
    }
    let med = |xs: &[f64]| median(xs).map_or(String::new(), |m| m.to_string());
    let pct = 100.0 * improved as f64 / results.len() as f64;
    let _ = writeln!(out, "median,{},{},{}", med(&inits), med(&finals), pct);
    out
}

pub fn montecarlo(a: &MonteCarloArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_file_or_default(a.config.as_deref()).usage()?;
    cfg.apply_scene(&a.scene).usage()?;
    cfg.apply_optimizer(&a.optimizer);
    cfg.apply_common(a.seed, a.trials, a.min_covisible);
    cfg.sim.min_inliers = cfg.min_covisible;
    cfg.validate().usage()?;
    prepare_out(&a.out)?;

    let results: Vec<anyhow::Result<TrialOutcome>> = (1..=cfg.trials)
        .into_par_iter()
        .map(|k| run_trial(&trial_settings(&cfg.sim, k), &cfg))
        .collect();
    for (i, r) in results.iter().enumerate() {
        if let Err(e) = r {
            warn!("trial {} failed: {e:#}", i + 1);
        }
    }
    let csv = summary_csv(&results);
    let summary_path: PathBuf = a.out.join("summary.csv");
    write(&summary_path, &csv)?;
    write(&a.out.join("experiment.json"), &to_json(&cfg)?)?;
    if results.iter().all(|r| r.is_err()) {
        return Err(anyhow!("all {} trials failed", cfg.trials)).runtime();
    }
    print!(
        "{}",
        csv.lines()
            .last()
            .map(|l| format!("{l}\n"))
            .unwrap_or_default()
    );
    Ok(())
}
