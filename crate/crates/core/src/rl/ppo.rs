use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::policy::{Controller, GaussianPolicy};
use super::rollout::{normalize, RolloutBatch};
use crate::error::{Error, Result};
use crate::seeding::sub_seed;

const ENTROPY_CONST: f64 = 1.418_938_533_204_672_7; // ½(1 + ln 2π)

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    /// Per-sample bound on how far the value prediction may move from the
    /// rollout-time value before its loss gradient is cut. `None` disables.
    pub value_clip: Option<f64>,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Environment steps per policy update.
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub adam_eps: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            value_clip: Some(0.2),
            vf_coef: 0.5,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
            lr_start: 3e-4,
            lr_end: 3e-9,
            batch_size: 4000,
            minibatch_size: 128,
            epochs: 4,
            hidden: vec![64, 64],
            adam_eps: 1e-8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda must lie in [0, 1]"));
        }
        if !(self.clip > 0.0) || self.value_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::invalid("clip ranges must be positive"));
        }
        if self.batch_size == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch_size, minibatch_size and epochs must be >= 1"));
        }
        if !(self.lr_start > 0.0 && self.lr_end >= 0.0 && self.max_grad_norm > 0.0) {
            return Err(Error::invalid("learning rates and max_grad_norm must be positive"));
        }
        Ok(())
    }

    /// Learning rate after `done` of `total` updates, linear between the
    /// endpoints.
    pub fn learning_rate(&self, done: u64, total: u64) -> f64 {
        let frac = if total == 0 { 1.0 } else { (done as f64 / total as f64).min(1.0) };
        self.lr_start + (self.lr_end - self.lr_start) * frac
    }
}

/// Adam over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, eps: f64) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one step to the concatenation of `segments`.
    pub fn step(&mut self, segments: &mut [&mut [f64]], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for seg in segments.iter_mut() {
            for p in seg.iter_mut() {
                let g = grad[k];
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[k] / bc1;
                let v_hat = self.v[k] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
        debug_assert_eq!(k, grad.len());
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossInfo {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: LossInfo,
    pub grad_norm: f64,
    pub lr: f64,
    pub skipped_minibatches: usize,
}

/// Policy, value network and optimizer state trained together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoAgent {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub adam: Adam,
    pub config: PpoConfig,
    pub updates_done: u64,
    /// Horizon of the learning-rate schedule.
    pub total_updates: u64,
    pub seed: u64,
}

impl PpoAgent {
    pub fn new(obs_dim: usize, action_bounds: Vec<(f64, f64)>, config: PpoConfig, total_updates: u64, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "ppo-init", 0));
        let policy = GaussianPolicy::new(obs_dim, action_bounds, &config.hidden, &mut rng)?;
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let value = Mlp::new(&sizes, 1.0, &mut rng)?;
        let n = policy.mean.n_params() + policy.log_std.len() + value.n_params();
        let adam = Adam::new(n, config.adam_eps);
        Ok(PpoAgent { policy, value, adam, config, updates_done: 0, total_updates, seed })
    }

    pub fn n_params(&self) -> usize {
        self.policy.mean.n_params() + self.policy.log_std.len() + self.value.n_params()
    }

    /// Flat copy in optimizer order: policy mean, log-std, value.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.policy.mean.params().to_vec();
        p.extend_from_slice(&self.policy.log_std);
        p.extend_from_slice(self.value.params());
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let a = self.policy.mean.n_params();
        let b = a + self.policy.log_std.len();
        self.policy.mean.params_mut().copy_from_slice(&p[..a]);
        self.policy.log_std.copy_from_slice(&p[a..b]);
        self.value.params_mut().copy_from_slice(&p[b..]);
    }

    pub fn reset_optimizer(&mut self) {
        self.adam = Adam::new(self.n_params(), self.config.adam_eps);
    }

    /// Loss on the minibatch `idx` of `batch` (using `adv` as the advantage
    /// column) and its gradient in optimizer order.
    pub fn loss_and_grad(&self, batch: &RolloutBatch, idx: &[usize], adv: &[f64]) -> (LossInfo, Vec<f64>) {
        let cfg = &self.config;
        let (od, ad) = (batch.obs_dim, batch.act_dim);
        let b = idx.len();
        let bf = b as f64;
        let x = Array2::from_shape_fn((b, od), |(r, c)| batch.obs[idx[r] * od + c]);
        let pcache = self.policy.mean.forward_batch(x.view());
        let vcache = self.value.forward_batch(x.view());
        let mu = pcache.output();
        let vpred = vcache.output();
        let log_std = &self.policy.log_std;
        let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();

        let mut info = LossInfo::default();
        let mut d_mu = Array2::<f64>::zeros((b, ad));
        let mut d_ls = vec![0.0; ad];
        let mut d_v = Array2::<f64>::zeros((b, 1));
        for (r, &t) in idx.iter().enumerate() {
            let a = batch.action_row(t);
            let mut new_lp = 0.0;
            for j in 0..ad {
                let z2 = (a[j] - mu[(r, j)]).powi(2) * inv_var[j];
                new_lp += -0.5 * z2 - log_std[j] - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            let log_ratio = new_lp - batch.log_probs[t];
            let ratio = log_ratio.exp();
            let l1 = -adv[r] * ratio;
            let l2 = -adv[r] * ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
            info.policy_loss += l1.max(l2) / bf;
            info.approx_kl += ((ratio - 1.0) - log_ratio) / bf;
            if (ratio - 1.0).abs() > cfg.clip {
                info.clip_frac += 1.0 / bf;
            }
            // ∂loss/∂new_lp
            let g = if l1 >= l2 { -adv[r] * ratio / bf } else { 0.0 };
            if g != 0.0 {
                for j in 0..ad {
                    let diff = a[j] - mu[(r, j)];
                    d_mu[(r, j)] = g * diff * inv_var[j];
                    d_ls[j] += g * (diff * diff * inv_var[j] - 1.0);
                }
            }

            let v = vpred[(r, 0)];
            let ret = batch.returns[t];
            let unclipped = (v - ret).powi(2);
            let dv = match cfg.value_clip {
                Some(c) => {
                    let old = batch.values[t];
                    let vc = old + (v - old).clamp(-c, c);
                    let clipped = (vc - ret).powi(2);
                    info.value_loss += 0.5 * unclipped.max(clipped) / bf;
                    if unclipped >= clipped {
                        v - ret
                    } else if (v - old).abs() < c {
                        vc - ret
                    } else {
                        0.0
                    }
                }
                None => {
                    info.value_loss += 0.5 * unclipped / bf;
                    v - ret
                }
            };
            d_v[(r, 0)] = cfg.vf_coef * dv / bf;
        }
        info.entropy = log_std.iter().map(|ls| ls + ENTROPY_CONST).sum();
        for g in d_ls.iter_mut() {
            *g -= cfg.ent_coef;
        }
        info.total = info.policy_loss + cfg.vf_coef * info.value_loss - cfg.ent_coef * info.entropy;

        let np = self.policy.mean.n_params();
        let mut grad = vec![0.0; self.n_params()];
        self.policy.mean.backward(&pcache, d_mu.view(), &mut grad[..np]);
        grad[np..np + ad].copy_from_slice(&d_ls);
        self.value.backward(&vcache, d_v.view(), &mut grad[np + ad..]);
        (info, grad)
    }

    /// One PPO update (several epochs of minibatch steps) on `batch`, whose
    /// advantages and returns must already be filled in.
    pub fn update(&mut self, batch: &RolloutBatch) -> Result<UpdateStats> {
        if batch.advantages.len() != batch.len() || batch.is_empty() {
            return Err(Error::invalid("batch has no advantages"));
        }
        let cfg = self.config.clone();
        let lr = cfg.learning_rate(self.updates_done, self.total_updates);
        let mut adv_all = batch.advantages.clone();
        normalize(&mut adv_all);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, "ppo-minibatch", self.updates_done));
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut stats = UpdateStats { lr, ..Default::default() };
        let mut n_steps = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for idx in order.chunks(cfg.minibatch_size) {
                let adv: Vec<f64> = idx.iter().map(|&t| adv_all[t]).collect();
                let (info, mut grad) = self.loss_and_grad(batch, idx, &adv);
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if !info.total.is_finite() || !norm.is_finite() {
                    stats.skipped_minibatches += 1;
                    continue;
                }
                if norm > cfg.max_grad_norm {
                    let s = cfg.max_grad_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
                let mut segments: [&mut [f64]; 3] = [
                    self.policy.mean.params_mut(),
                    &mut self.policy.log_std,
                    self.value.params_mut(),
                ];
                self.adam.step(&mut segments, &grad, lr);
                n_steps += 1;
                stats.loss.policy_loss += info.policy_loss;
                stats.loss.value_loss += info.value_loss;
                stats.loss.entropy += info.entropy;
                stats.loss.approx_kl += info.approx_kl;
                stats.loss.clip_frac += info.clip_frac;
                stats.loss.total += info.total;
                stats.grad_norm += norm;
            }
        }
        if n_steps > 0 {
            let k = n_steps as f64;
            let l = &mut stats.loss;
            for v in [&mut l.policy_loss, &mut l.value_loss, &mut l.entropy, &mut l.approx_kl, &mut l.clip_frac, &mut l.total] {
                *v /= k;
            }
            stats.grad_norm /= k;
        }
        self.updates_done += 1;
        Ok(stats)
    }
}

impl Controller for PpoAgent {
    fn act_dim(&self) -> usize {
        self.policy.act_dim()
    }

    fn act(&self, obs: &[f64], out: &mut [f64]) {
        self.policy.act(obs, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::rollout::Runner;
    use crate::envs::{Environment, StepResult};
    use rand::Rng;

    fn tiny_agent(seed: u64) -> PpoAgent {
        let cfg = PpoConfig { hidden: vec![4], ..Default::default() };
        let mut agent = PpoAgent::new(1, vec![(-1.0, 1.0)], cfg, 10, seed).unwrap();
        // move away from the near-zero output init so every parameter matters
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = agent.flat_params().iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        agent.set_flat_params(&p);
        agent
    }

    fn synthetic_batch(agent: &PpoAgent, n: usize, seed: u64) -> RolloutBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = RolloutBatch { obs_dim: 1, act_dim: 1, ..Default::default() };
        let mut mu = [0.0];
        let mut v = [0.0];
        for _ in 0..n {
            let x: f64 = rng.random_range(-2.0..2.0);
            agent.policy.mean_action(&[x], &mut mu);
            agent.value.forward(&[x], &mut v);
            let a = mu[0] + rng.random_range(-0.5..0.5);
            // old log-prob slightly off so ratios differ from 1 but stay unclipped
            let lp = GaussianPolicy::log_prob(&agent.policy.log_std, &mu, &[a]) + rng.random_range(-0.05..0.05);
            b.obs.push(x);
            b.next_obs.push(x);
            b.actions.push(a);
            b.log_probs.push(lp);
            b.rewards.push(0.0);
            // old value within the value-clip range of the prediction
            b.values.push(v[0] + rng.random_range(-0.1..0.1));
            b.dones.push(false);
            b.advantages.push(rng.random_range(-1.0..1.0));
            b.returns.push(v[0] + rng.random_range(-1.0..1.0));
        }
        b
    }

    fn max_rel_error(agent: &PpoAgent, batch: &RolloutBatch) -> f64 {
        let idx: Vec<usize> = (0..batch.len()).collect();
        let (_, grad) = agent.loss_and_grad(batch, &idx, &batch.advantages);
        let p0 = agent.flat_params();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..p0.len() {
            let mut a = agent.clone();
            let mut p = p0.clone();
            p[k] += h;
            a.set_flat_params(&p);
            let up = a.loss_and_grad(batch, &idx, &batch.advantages).0.total;
            p[k] -= 2.0 * h;
            a.set_flat_params(&p);
            let down = a.loss_and_grad(batch, &idx, &batch.advantages).0.total;
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[k].abs());
            if scale > 1e-8 {
                worst = worst.max((fd - grad[k]).abs() / scale);
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let agent = tiny_agent(seed);
            let batch = synthetic_batch(&agent, 16, seed + 100);
            let err = max_rel_error(&agent, &batch);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_advantage_zero_policy_loss() {
        let agent = tiny_agent(1);
        let mut batch = synthetic_batch(&agent, 8, 2);
        batch.advantages = vec![0.0; 8];
        let idx: Vec<usize> = (0..8).collect();
        let (info, _) = agent.loss_and_grad(&batch, &idx, &batch.advantages);
        assert_eq!(info.policy_loss, 0.0);
    }

    #[test]
    fn unit_ratio_surrogate_is_mean_advantage() {
        let agent = tiny_agent(2);
        let mut batch = synthetic_batch(&agent, 8, 3);
        let mut mu = [0.0];
        for t in 0..8 {
            agent.policy.mean_action(&[batch.obs[t]], &mut mu);
            batch.log_probs[t] = GaussianPolicy::log_prob(&agent.policy.log_std, &mu, &[batch.actions[t]]);
        }
        let idx: Vec<usize> = (0..8).collect();
        let (info, _) = agent.loss_and_grad(&batch, &idx, &batch.advantages);
        let mean_adv = batch.advantages.iter().sum::<f64>() / 8.0;
        assert!((info.policy_loss + mean_adv).abs() < 1e-12);
        assert!(info.approx_kl.abs() < 1e-15);
    }

    #[test]
    fn learning_rate_is_linear() {
        let cfg = PpoConfig::default();
        assert_eq!(cfg.learning_rate(0, 100), 3e-4);
        assert!((cfg.learning_rate(100, 100) - 3e-9).abs() < 1e-20);
        let mid = cfg.learning_rate(50, 100);
        assert!((mid - 0.5 * (3e-4 + 3e-9)).abs() < 1e-18);
        assert_eq!(cfg.learning_rate(500, 100), cfg.learning_rate(100, 100));
    }

    #[test]
    fn config_validation() {
        let mut c = PpoConfig::default();
        c.gamma = 0.0;
        assert!(c.validate().is_err());
        let mut c = PpoConfig::default();
        c.lambda = 1.5;
        assert!(c.validate().is_err());
        assert!(PpoConfig::default().validate().is_ok());
    }

    /// One-step bandit: reward = -(u - 0.5)².
    struct Bandit;
    impl Environment for Bandit {
        fn obs_dim(&self) -> usize {
            1
        }
        fn act_dim(&self) -> usize {
            1
        }
        fn action_bounds(&self) -> Vec<(f64, f64)> {
            vec![(-1.0, 1.0)]
        }
        fn horizon(&self) -> usize {
            1
        }
        fn reset(&mut self, _: u64) -> Result<Vec<f64>> {
            Ok(vec![1.0])
        }
        fn step(&mut self, a: &[f64]) -> Result<StepResult> {
            let u = a[0].clamp(-1.0, 1.0);
            Ok(StepResult { observation: vec![1.0], reward: -(u - 0.5).powi(2), done: true, hidden_state: vec![] })
        }
    }

    #[test]
    fn learns_a_bandit_and_is_deterministic() {
        let train = || {
            let cfg = PpoConfig { batch_size: 256, minibatch_size: 64, hidden: vec![16], lr_start: 3e-3, ..Default::default() };
            let mut agent = PpoAgent::new(1, vec![(-1.0, 1.0)], cfg, 60, 5).unwrap();
            let mut runner = Runner::new(Bandit, 5);
            for _ in 0..60 {
                let mut b = runner.collect(&agent.policy, Some(&agent.value), 256).unwrap();
                b.compute_gae(0.99, 0.95);
                agent.update(&b).unwrap();
            }
            agent
        };
        let a = train();
        let mut u = [0.0];
        a.policy.mean_action(&[1.0], &mut u);
        assert!((u[0] - 0.5).abs() < 0.1, "{}", u[0]);
        assert_eq!(a, train());
        assert_eq!(a.updates_done, 60);
    }
}
