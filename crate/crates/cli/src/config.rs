//! Experiment configuration: defaults, an optional JSON/TOML file, then flags.

use std::path::Path;

use anyhow::{bail, Context};
use rotonly_core::graph::DEFAULT_MIN_COVISIBLE;
use rotonly_core::synth::{Layout, SimSettings};
use rotonly_core::OptimizerConfig;
use serde::{Deserialize, Serialize};

use crate::args::{LayoutArg, OptimizerArgs, SceneArgs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub sim: SimSettings,
    pub optimizer: OptimizerConfig,
    pub trials: usize,
    pub min_covisible: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimSettings::default(),
            optimizer: OptimizerConfig::default(),
            trials: 1,
            min_covisible: DEFAULT_MIN_COVISIBLE,
        }
    }
}

impl ExperimentConfig {
    /// Reads a `.toml` file as TOML and anything else as JSON.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_toml = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg = if is_toml {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }

    pub fn from_file_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn apply_scene(&mut self, a: &SceneArgs) -> anyhow::Result<()> {
        if let Some(name) = &a.preset {
            match SimSettings::preset(name) {
                Some(p) => {
                    self.sim = SimSettings {
                        seed: self.sim.seed,
                        ..p
                    }
                }
                None => bail!("unknown preset {name:?}"),
            }
        }
        let s = &mut self.sim;
        set(&mut s.n, a.n);
        set(&mut s.n_cov, a.n_cov);
        set(&mut s.sigma, a.sigma);
        set(&mut s.d_min, a.d_min);
        set(&mut s.d_max, a.d_max);
        set(&mut s.inlier_threshold, a.inlier_threshold);
        set(&mut s.init_perturb_max, a.init_perturb);
        let (groups, group_size) = match s.layout {
            Layout::Mixed { groups, group_size } => (groups, group_size),
            _ => (20, 5),
        };
        let (groups, group_size) = (
            a.groups.unwrap_or(groups),
            a.group_size.unwrap_or(group_size),
        );
        match a.layout {
            Some(LayoutArg::Circle) => s.layout = Layout::Circle,
            Some(LayoutArg::PureRotation) => s.layout = Layout::PureRotation,
            Some(LayoutArg::Mixed) => s.layout = Layout::Mixed { groups, group_size },
            None => {
                if let Layout::Mixed { .. } = s.layout {
                    s.layout = Layout::Mixed { groups, group_size };
                } else if a.groups.is_some() || a.group_size.is_some() {
                    bail!("--groups and --group-size need the mixed layout");
                }
            }
        }
        Ok(())
    }

    pub fn apply_optimizer(&mut self, a: &OptimizerArgs) {
        let o = &mut self.optimizer;
        set(&mut o.n_iterations, a.iters);
        set(&mut o.alpha_initial, a.alpha);
        if a.no_sqrt {
            o.use_sqrt = false;
        }
        if a.no_switch {
            o.step_switching = false;
        }
        if a.exact_gradient {
            o.approximate_gradient = false;
        }
        if a.convergence_tol.is_some() {
            o.convergence_tol = a.convergence_tol;
        }
    }

    pub fn apply_common(
        &mut self,
        seed: Option<u64>,
        trials: Option<usize>,
        min_covisible: Option<usize>,
    ) {
        set(&mut self.sim.seed, seed);
        set(&mut self.trials, trials);
        set(&mut self.min_covisible, min_covisible);
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.min_covisible < DEFAULT_MIN_COVISIBLE {
            bail!("min_covisible must be at least {DEFAULT_MIN_COVISIBLE}");
        }
        self.sim.validate()?;
        self.optimizer.validate()?;
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
