//! Experiment documents: one JSON file, merged over per-environment
//! defaults, unknown keys rejected.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::distill::{DistillSweep, MeshAxis, SamplingStrategy};
use crate::dyna::DynaConfig;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::library::{LibrarySpec, PolySpec};
use crate::sweep::SweepGrid;
use crate::uq::{LandscapeSpec, SliceAxis};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub strategy: SamplingStrategy,
    pub sweep: DistillSweep,
    pub library: LibrarySpec,
    /// Matched-seed episodes for the teacher/student comparison.
    pub compare_episodes: usize,
}

/// Which learned model a landscape is drawn for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UqTarget {
    Dynamics,
    Reward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqConfig {
    pub target: UqTarget,
    pub landscape: LandscapeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_batch: Vec<usize>,
    pub n_collect: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Return that counts as solved; required to run a sweep.
    pub target_return: Option<f64>,
}

impl SweepConfig {
    pub fn grid(&self) -> SweepGrid {
        SweepGrid { n_batch: self.n_batch.clone(), n_collect: self.n_collect.clone(), seeds: self.seeds.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub seed: u64,
    /// Threads for sweeps; 1 keeps everything sequential.
    pub workers: usize,
    pub output_dir: Option<PathBuf>,
    pub dyna: DynaConfig,
    pub distill: DistillConfig,
    pub uq: UqConfig,
    pub sweep: SweepConfig,
    pub eval_episodes: usize,
}

impl ExperimentConfig {
    pub fn defaults_for(env: EnvSpec) -> Self {
        let (distill, uq, sweep) = match &env {
            EnvSpec::Swingup { .. } => (
                DistillConfig {
                    strategy: SamplingStrategy::swingup_trajectories(0.1),
                    sweep: DistillSweep::default(),
                    library: LibrarySpec::Polynomial { n_inputs: 5, poly: PolySpec::new(3, true) },
                    compare_episodes: 15,
                },
                UqConfig { target: UqTarget::Dynamics, landscape: LandscapeSpec::swingup(101) },
                SweepConfig {
                    n_batch: vec![20, 40, 80],
                    n_collect: vec![500, 1000, 2000],
                    seeds: vec![0, 1, 2],
                    target_return: Some(570.0),
                },
            ),
            EnvSpec::Wake { .. } => (
                DistillConfig {
                    strategy: SamplingStrategy::Replay { n_samples: 5000, noise: 0.1, noise_copies: 2 },
                    sweep: DistillSweep::default(),
                    library: LibrarySpec::Polynomial { n_inputs: 2, poly: PolySpec::new(3, true) },
                    compare_episodes: 15,
                },
                UqConfig {
                    target: UqTarget::Reward,
                    landscape: LandscapeSpec {
                        mesh: [
                            SliceAxis { axis: 0, name: Some("lift".into()), mesh: MeshAxis { lo: -1.0, hi: 1.0, points: 101 } },
                            SliceAxis { axis: 1, name: Some("lift_rate".into()), mesh: MeshAxis { lo: -1.0, hi: 1.0, points: 101 } },
                        ],
                        fixed: [(2, 0.0)].into_iter().collect(),
                        angle: None,
                    },
                },
                SweepConfig { n_batch: vec![5, 10], n_collect: vec![500, 1000], seeds: vec![0, 1, 2], target_return: None },
            ),
        };
        ExperimentConfig {
            dyna: DynaConfig::defaults_for(&env),
            env,
            seed: 0,
            workers: 1,
            output_dir: None,
            distill,
            uq,
            sweep,
            eval_episodes: 5,
        }
    }

    /// Parse a document, fill every omitted field from the environment's
    /// defaults and validate. Errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::Config { path: ".".into(), message: e.to_string() })?;
        if !user.is_object() {
            return Err(Error::Config { path: ".".into(), message: "expected a JSON object".into() });
        }
        let env_value = user.get("env").cloned().ok_or_else(|| Error::Config { path: "env".into(), message: "missing field".into() })?;
        let env: EnvSpec = typed(env_value, "env")?;
        let mut merged = serde_json::to_value(Self::defaults_for(env))?;
        merge(&mut merged, user);
        let cfg: ExperimentConfig = typed(merged, "")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |path: &str| {
            let path = path.to_string();
            move |e: Error| Error::Config { path: path.clone(), message: e.to_string() }
        };
        self.env.build().map_err(wrap("env"))?;
        self.dyna.validate(&self.env).map_err(wrap("dyna"))?;
        if self.workers == 0 {
            return Err(Error::Config { path: "workers".into(), message: "must be >= 1".into() });
        }
        if self.eval_episodes == 0 || self.distill.compare_episodes == 0 {
            return Err(Error::Config { path: "eval_episodes".into(), message: "must be >= 1".into() });
        }
        if self.distill.sweep.thresholds.is_empty() || self.distill.sweep.alphas.is_empty() {
            return Err(Error::Config { path: "distill.sweep".into(), message: "empty sweep grid".into() });
        }
        crate::library::FeatureLibrary::new(self.distill.library.clone()).map_err(wrap("distill.library"))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn typed<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix, inner.as_str()) {
            ("", p) => p.to_string(),
            (p, ".") => p.to_string(),
            (p, i) => format!("{p}.{i}"),
        };
        Error::Config { path, message: e.into_inner().to_string() }
    })
}

/// Recursive object merge. A user object whose enum tag (`kind`/`name`)
/// differs from the default replaces it wholesale.
fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && same_tag(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn same_tag(a: &Value, b: &Value) -> bool {
    ["kind", "name"].iter().all(|t| match b.get(*t) {
        None => true,
        Some(tag) => a.get(*t) == Some(tag),
    })
}
