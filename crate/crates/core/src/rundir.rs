//! On-disk layout of a training run.
//!
//! ```text
//! run/
//!   config.json          resolved experiment config
//!   metrics.csv          "# dictrl-metrics/1" then one row per refit
//!   models/dynamics_007.json, models/reward_007.json
//!   best_policy.json
//!   state.json           everything needed to resume
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::dyna::{Dyna, DynaState, IterationMetrics, METRICS_HEADER_COMMENT};
use crate::error::{Error, Result};

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Create a fresh run directory. An existing non-empty directory is
    /// refused so runs never overwrite each other.
    pub fn create(root: &Path, config: &ExperimentConfig) -> Result<Self> {
        if root.exists() && std::fs::read_dir(root)?.next().is_some() {
            return Err(Error::Config {
                path: "output_dir".into(),
                message: format!("{} already exists and is not empty", root.display()),
            });
        }
        std::fs::create_dir_all(root.join("models"))?;
        std::fs::write(root.join("config.json"), config.to_json()?)?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn open(root: &Path) -> Result<Self> {
        if !root.join("config.json").is_file() {
            return Err(Error::invalid(format!("{} is not a run directory", root.display())));
        }
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(&std::fs::read_to_string(self.root.join("config.json"))?)
    }

    pub fn load_state(&self) -> Result<DynaState> {
        Ok(serde_json::from_str(&std::fs::read_to_string(self.root.join("state.json"))?)?)
    }

    pub fn dynamics_path(&self, refit: usize) -> PathBuf {
        self.root.join("models").join(format!("dynamics_{refit:03}.json"))
    }

    pub fn reward_path(&self, refit: usize) -> PathBuf {
        self.root.join("models").join(format!("reward_{refit:03}.json"))
    }

    pub fn best_policy_path(&self) -> PathBuf {
        self.root.join("best_policy.json")
    }

    /// Persist models, metrics, best policy and resume state.
    pub fn record(&self, dyna: &Dyna) -> Result<()> {
        let k = dyna.state().refits_done;
        dyna.dynamics().save_json(&self.dynamics_path(k))?;
        if let Some(r) = dyna.reward_model() {
            r.save_json(&self.reward_path(k))?;
        }
        write_metrics(&self.root.join("metrics.csv"), &dyna.state().metrics)?;
        dyna.state().best_policy.save_json(&self.best_policy_path())?;
        // write-then-rename so an interrupt never leaves a torn state file
        let tmp = self.root.join("state.json.tmp");
        std::fs::write(&tmp, serde_json::to_string(dyna.state())?)?;
        std::fs::rename(tmp, self.root.join("state.json"))?;
        if !dyna.events.is_empty() {
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(self.root.join("events.log"))?;
            for e in &dyna.events {
                writeln!(f, "{e}")?;
            }
        }
        Ok(())
    }
}

pub fn write_metrics(path: &Path, metrics: &[IterationMetrics]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{METRICS_HEADER_COMMENT}")?;
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(file);
    if metrics.is_empty() {
        // header only
        w.write_record(METRICS_COLUMNS)?;
    }
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

pub const METRICS_COLUMNS: [&str; 17] = [
    "refit",
    "interactions",
    "eval_steps",
    "surrogate_steps",
    "ppo_updates",
    "eval_mean",
    "eval_min",
    "eval_max",
    "best_return",
    "surrogate_return",
    "policy_loss",
    "value_loss",
    "approx_kl",
    "clip_frac",
    "lr",
    "dynamics_nnz",
    "refit_failed",
];

/// Parse a metrics file written by [`write_metrics`].
pub fn read_metrics(path: &Path) -> Result<Vec<IterationMetrics>> {
    let text = std::fs::read_to_string(path)?;
    let body = text
        .strip_prefix(METRICS_HEADER_COMMENT)
        .ok_or_else(|| Error::invalid("metrics file lacks its version line"))?;
    let mut r = csv::Reader::from_reader(body.trim_start().as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults_for(EnvSpec::Swingup { params: Default::default() });
        cfg.dyna.n_off = 500;
        cfg.dyna.n_collect = 100;
        cfg.dyna.n_batch = 1;
        cfg.dyna.refits = 2;
        cfg.dyna.ppo.batch_size = 200;
        cfg.dyna.ppo.hidden = vec![8];
        cfg.dyna.eval_episodes = 1;
        cfg.dyna.dynamics.ensemble.n_members = 3;
        cfg
    }

    #[test]
    fn layout_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("run");
        let cfg = tiny();
        let run = RunDir::create(&root, &cfg).unwrap();
        assert_eq!(run.config().unwrap(), cfg);
        let mut dyna = Dyna::new(cfg.env.clone(), cfg.dyna.clone(), 0).unwrap();
        dyna.run(|d, _| run.record(d)).unwrap();
        assert!(run.dynamics_path(2).is_file());
        assert!(run.best_policy_path().is_file());
        let text = std::fs::read_to_string(root.join("metrics.csv")).unwrap();
        assert!(text.starts_with("# dictrl-metrics/1\nrefit,interactions,"));
        let header = text.lines().nth(1).unwrap();
        assert_eq!(header, METRICS_COLUMNS.join(","));
        let rows = read_metrics(&root.join("metrics.csv")).unwrap();
        assert_eq!(rows, dyna.state().metrics);
        assert_eq!(&run.load_state().unwrap(), dyna.state());
        // collision
        assert!(matches!(RunDir::create(&root, &cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn empty_metrics_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&p, &[]).unwrap();
        assert!(read_metrics(&p).unwrap().is_empty());
    }
}
