//! On-policy RL: Gaussian MLP policies trained with PPO and GAE.

mod mlp;
mod policy;
mod ppo;
mod rollout;

pub use mlp::{Mlp, MlpCache};
pub use policy::{Controller, GaussianPolicy, RandomController, POLICY_FORMAT};
pub use ppo::{Adam, LossInfo, PpoAgent, PpoConfig, UpdateStats};
pub use rollout::{evaluate, gae, normalize, RolloutBatch, Runner};
