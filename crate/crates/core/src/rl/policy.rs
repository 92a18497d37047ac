use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Anything that maps an observation to an action for execution.
pub trait Controller {
    fn act_dim(&self) -> usize;
    fn act(&self, obs: &[f64], out: &mut [f64]);
}

/// Diagonal Gaussian policy with a state-independent learned log-std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
    /// Execution-time clipping range per action.
    pub action_bounds: Vec<(f64, f64)>,
}

pub const POLICY_FORMAT: &str = "dictrl-policy/1";

#[derive(Serialize, Deserialize)]
struct PolicyDoc {
    format: String,
    #[serde(flatten)]
    policy: GaussianPolicy,
}

impl GaussianPolicy {
    /// `hidden` sizes between the observation and action layers. The output
    /// layer starts near zero (gain 0.01) and log-std at 0.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_bounds: Vec<(f64, f64)>,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let act_dim = action_bounds.len();
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Ok(GaussianPolicy { mean: Mlp::new(&sizes, 0.01, rng)?, log_std: vec![0.0; act_dim], action_bounds })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    /// Deterministic mean action, before clipping.
    pub fn mean_action(&self, obs: &[f64], out: &mut [f64]) {
        self.mean.forward(obs, out);
    }

    /// Draw an (unclipped) action and return its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, out: &mut [f64]) -> f64 {
        self.mean.forward(obs, out);
        let mut logp = 0.0;
        for (a, ls) in out.iter_mut().zip(&self.log_std) {
            let eps: f64 = rng.sample(StandardNormal);
            *a += ls.exp() * eps;
            logp += -0.5 * eps * eps - ls - 0.5 * LN_2PI;
        }
        logp
    }

    /// `log N(action; mean, diag(exp(log_std))²)`.
    pub fn log_prob(log_std: &[f64], mean: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(action)
            .zip(log_std)
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * LN_2PI
            })
            .sum()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let doc = PolicyDoc { format: POLICY_FORMAT.into(), policy: self.clone() };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let doc: PolicyDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.format != POLICY_FORMAT {
            return Err(Error::invalid(format!("unknown policy format {}", doc.format)));
        }
        let p = doc.policy;
        if p.log_std.len() != p.mean.output_dim() || p.action_bounds.len() != p.mean.output_dim() {
            return Err(Error::invalid("policy action dimension mismatch"));
        }
        Ok(p)
    }
}

impl Controller for GaussianPolicy {
    fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    fn act(&self, obs: &[f64], out: &mut [f64]) {
        self.mean.forward(obs, out);
        for (a, (lo, hi)) in out.iter_mut().zip(&self.action_bounds) {
            *a = a.clamp(*lo, *hi);
        }
    }
}

/// Uniformly random actions inside the bounds.
pub struct RandomController<R> {
    pub bounds: Vec<(f64, f64)>,
    pub rng: std::cell::RefCell<R>,
}

impl<R: Rng> Controller for RandomController<R> {
    fn act_dim(&self) -> usize {
        self.bounds.len()
    }

    fn act(&self, _obs: &[f64], out: &mut [f64]) {
        let mut rng = self.rng.borrow_mut();
        for (a, (lo, hi)) in out.iter_mut().zip(&self.bounds) {
            *a = rng.random_range(*lo..=*hi);
        }
    }
}
