//! Ground-truth environments and the stepping interface shared with the
//! learned surrogates.

mod swingup;
mod tolerance;
mod wake;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use swingup::{swingup_reward, CartPoleParams, SwingUp};
pub use tolerance::{tolerance, Sigmoid};
pub use wake::{WakeOscillator, WakeParams};

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Full internal state after the step. Not part of the observation;
    /// only for diagnostics and test oracles.
    pub hidden_state: Vec<f64>,
}

/// Episodic environment with box-bounded continuous actions.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Per-component `(low, high)` action bounds; actions are clipped to them.
    fn action_bounds(&self) -> Vec<(f64, f64)>;
    fn horizon(&self) -> usize;
    /// Start a new episode; deterministic in `seed`.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn act_dim(&self) -> usize {
        (**self).act_dim()
    }
    fn action_bounds(&self) -> Vec<(f64, f64)> {
        (**self).action_bounds()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        (**self).step(action)
    }
}

/// Which ground-truth environment a run uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Swingup {
        #[serde(default)]
        params: CartPoleParams,
    },
    Wake {
        #[serde(default)]
        params: WakeParams,
    },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Environment + Send>> {
        Ok(match self {
            EnvSpec::Swingup { params } => Box::new(SwingUp::new(params.clone())?),
            EnvSpec::Wake { params } => Box::new(WakeOscillator::new(params.clone())?),
        })
    }

    pub fn observation_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            EnvSpec::Swingup { .. } => &["x", "cos_theta", "sin_theta", "x_dot", "theta_dot"],
            EnvSpec::Wake { .. } => &["c_l", "c_l_dot"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

/// CSV trajectory dump with columns
/// `episode, step, <state...>, <action...>, reward, done`.
pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W, state_names: &[String], action_dim: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        let mut header = vec!["episode".to_string(), "step".to_string()];
        header.extend(state_names.iter().cloned());
        header.extend((0..action_dim).map(|j| format!("u{j}")));
        header.push("reward".into());
        header.push("done".into());
        inner.write_record(&header)?;
        Ok(TrajectoryWriter { inner })
    }

    pub fn write(
        &mut self,
        episode: usize,
        step: usize,
        state: &[f64],
        action: &[f64],
        reward: f64,
        done: bool,
    ) -> Result<()> {
        let mut rec = vec![episode.to_string(), step.to_string()];
        rec.extend(state.iter().map(|v| v.to_string()));
        rec.extend(action.iter().map(|v| v.to_string()));
        rec.push(reward.to_string());
        rec.push((done as u8).to_string());
        self.inner.write_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_csv_layout() {
        let mut buf = Vec::new();
        {
            let mut w = TrajectoryWriter::new(&mut buf, &["a".into(), "b".into()], 1).unwrap();
            w.write(0, 0, &[1.0, 2.0], &[0.5], -0.1, false).unwrap();
            w.write(0, 1, &[1.5, 2.5], &[0.0], 0.25, true).unwrap();
            w.finish().unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "episode,step,a,b,u0,reward,done");
        assert_eq!(lines[1], "0,0,1,2,0.5,-0.1,0");
        assert_eq!(lines[2], "0,1,1.5,2.5,0,0.25,1");
    }

    #[test]
    fn env_spec_json() {
        let spec: EnvSpec = serde_json::from_str(r#"{"name": "swingup"}"#).unwrap();
        assert_eq!(spec, EnvSpec::Swingup { params: CartPoleParams::default() });
        let env = spec.build().unwrap();
        assert_eq!(env.obs_dim(), 5);
        assert!(serde_json::from_str::<EnvSpec>(r#"{"name": "swingup", "bogus": 1}"#).is_err());
    }
}
