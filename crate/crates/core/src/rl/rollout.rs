use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::Mlp;
use super::policy::{Controller, GaussianPolicy};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::seeding::sub_seed;

/// Flat on-policy experience; row `t` of each per-step array belongs to the
/// same transition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    /// `len × obs_dim`
    pub obs: Vec<f64>,
    /// Observation after the step (pre-reset), `len × obs_dim`.
    pub next_obs: Vec<f64>,
    /// Sampled, unclipped actions, `len × act_dim`.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// `V` of the observation following the final step (0 if it ended an
    /// episode).
    pub last_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Undiscounted returns of episodes that finished inside this batch.
    pub episode_returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs_row(&self, t: usize) -> &[f64] {
        &self.obs[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn action_row(&self, t: usize) -> &[f64] {
        &self.actions[t * self.act_dim..(t + 1) * self.act_dim]
    }

    /// Fill `advantages` and `returns` by GAE.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) {
        self.advantages = gae(&self.rewards, &self.values, &self.dones, self.last_value, gamma, lambda);
        self.returns = self.advantages.iter().zip(&self.values).map(|(a, v)| a + v).collect();
    }
}

/// `Â_t = Σ_k (γλ)^k δ_{t+k}` with `δ_t = r_t + γ V_{t+1} (1 − done_t) − V_t`;
/// the sum is cut at episode ends.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 == n { last_value } else { values[t + 1] };
        let delta = rewards[t] + gamma * next_v * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    adv
}

/// Shift and scale to zero mean, unit (population) standard deviation.
pub fn normalize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// Steps one environment with auto-reset; episodes continue across calls.
pub struct Runner<E> {
    env: E,
    seed: u64,
    rng: ChaCha8Rng,
    obs: Option<Vec<f64>>,
    episode: u64,
    episode_return: f64,
    steps: u64,
}

impl<E: Environment> Runner<E> {
    pub fn new(env: E, seed: u64) -> Self {
        Runner {
            env,
            seed,
            rng: ChaCha8Rng::seed_from_u64(sub_seed(seed, "runner-actions", 0)),
            obs: None,
            episode: 0,
            episode_return: 0.0,
            steps: 0,
        }
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn into_env(self) -> E {
        self.env
    }

    /// Environment steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn current_obs(&mut self) -> Result<Vec<f64>> {
        if self.obs.is_none() {
            let s = sub_seed(self.seed, "runner-episode", self.episode);
            self.obs = Some(self.env.reset(s)?);
            self.episode_return = 0.0;
        }
        Ok(self.obs.clone().unwrap())
    }

    /// Exactly `n_steps` transitions from the stochastic policy. Values are
    /// filled from `value` (pass `None` to leave them at zero).
    pub fn collect(&mut self, policy: &GaussianPolicy, value: Option<&Mlp>, n_steps: usize) -> Result<RolloutBatch> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be >= 1"));
        }
        let (od, ad) = (self.env.obs_dim(), self.env.act_dim());
        if policy.obs_dim() != od || policy.act_dim() != ad {
            return Err(Error::shape(format!("policy for {od} obs / {ad} actions"), format!("{} / {}", policy.obs_dim(), policy.act_dim())));
        }
        let mut b = RolloutBatch { obs_dim: od, act_dim: ad, ..Default::default() };
        for v in [&mut b.obs, &mut b.next_obs] {
            v.reserve(n_steps * od);
        }
        let mut action = vec![0.0; ad];
        let mut v_out = [0.0];
        for _ in 0..n_steps {
            let obs = self.current_obs()?;
            let logp = policy.sample(&obs, &mut self.rng, &mut action);
            let v = match value {
                Some(net) => {
                    net.forward(&obs, &mut v_out);
                    v_out[0]
                }
                None => 0.0,
            };
            let step = self.env.step(&action)?;
            self.steps += 1;
            self.episode_return += step.reward;
            b.obs.extend_from_slice(&obs);
            b.next_obs.extend_from_slice(&step.observation);
            b.actions.extend_from_slice(&action);
            b.log_probs.push(logp);
            b.rewards.push(step.reward);
            b.values.push(v);
            b.dones.push(step.done);
            if step.done {
                b.episode_returns.push(self.episode_return);
                self.episode += 1;
                self.obs = None;
            } else {
                self.obs = Some(step.observation);
            }
        }
        b.last_value = match (&self.obs, value) {
            (Some(obs), Some(net)) => {
                net.forward(obs, &mut v_out);
                v_out[0]
            }
            _ => 0.0,
        };
        Ok(b)
    }
}

/// Deterministic returns of `n_episodes` episodes run to completion.
/// Episode `i` is reset with `sub_seed(seed, "eval-episode", i)`.
pub fn evaluate<E: Environment + ?Sized, C: Controller + ?Sized>(
    env: &mut E,
    controller: &C,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut action = vec![0.0; controller.act_dim()];
    let mut returns = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let mut obs = env.reset(sub_seed(seed, "eval-episode", i as u64))?;
        let mut total = 0.0;
        loop {
            controller.act(&obs, &mut action);
            let step = env.step(&action)?;
            total += step.reward;
            if step.done {
                break;
            }
            obs = step.observation;
        }
        returns.push(total);
    }
    Ok(returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::StepResult;
    use proptest::prelude::*;

    /// Constant reward, fixed horizon, observation = step counter.
    struct Constant {
        reward: f64,
        horizon: usize,
        t: usize,
    }

    impl Environment for Constant {
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
            self.horizon
        }
        fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
            self.t = 0;
            Ok(vec![0.0])
        }
        fn step(&mut self, _a: &[f64]) -> Result<StepResult> {
            self.t += 1;
            Ok(StepResult {
                observation: vec![self.t as f64],
                reward: self.reward,
                done: self.t >= self.horizon,
                hidden_state: vec![],
            })
        }
    }

    fn policy() -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        GaussianPolicy::new(1, vec![(-1.0, 1.0)], &[4], &mut rng).unwrap()
    }

    #[test]
    fn reward_to_go_when_undiscounted() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let adv = gae(&r, &[0.0; 4], &[false, false, true, false], 0.0, 1.0, 1.0);
        assert_eq!(adv, vec![6.0, 5.0, 3.0, 4.0]);
        assert_eq!(gae(&[0.0; 3], &[0.0; 3], &[false; 3], 0.0, 0.99, 0.95), vec![0.0; 3]);
    }

    fn brute_force(r: &[f64], v: &[f64], done: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let next_v = |t: usize| if t + 1 == n { last } else { v[t + 1] };
        let delta: Vec<f64> = (0..n)
            .map(|t| r[t] + g * next_v(t) * if done[t] { 0.0 } else { 1.0 } - v[t])
            .collect();
        (0..n)
            .map(|t| {
                let mut total = 0.0;
                for k in t..n {
                    total += (g * l).powi((k - t) as i32) * delta[k];
                    if done[k] {
                        break;
                    }
                }
                total
            })
            .collect()
    }

    #[test]
    fn three_step_episode() {
        let (r, v) = ([0.5, -1.0, 2.0], [0.3, 0.1, -0.7]);
        let done = [false, false, true];
        let adv = gae(&r, &v, &done, 9.0, 0.9, 0.8);
        let d2 = 2.0 - (-0.7);
        let d1 = -1.0 + 0.9 * -0.7 - 0.1;
        let d0 = 0.5 + 0.9 * 0.1 - 0.3;
        let expected = [d0 + 0.72 * d1 + 0.72 * 0.72 * d2, d1 + 0.72 * d2, d2];
        for i in 0..3 {
            assert!((adv[i] - expected[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn gae_matches_double_sum(
            r in prop::collection::vec(-5.0..5.0f64, 10),
            v in prop::collection::vec(-5.0..5.0f64, 10),
            done in prop::collection::vec(prop::bool::weighted(0.2), 10),
            last in -5.0..5.0f64,
            g in 0.5..1.0f64,
            l in 0.0..1.0f64,
        ) {
            let a = gae(&r, &v, &done, last, g, l);
            let b = brute_force(&r, &v, &done, last, g, l);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn normalization(xs in prop::collection::vec(-100.0..100.0f64, 2..200)) {
            let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread > 1e-3);
            let mut ys = xs.clone();
            normalize(&mut ys);
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-8);
            prop_assert!((std - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn collect_exact_steps_across_resets() {
        let env = Constant { reward: 1.0, horizon: 3, t: 0 };
        let mut runner = Runner::new(env, 0);
        let pi = policy();
        let b = runner.collect(&pi, None, 1).unwrap();
        assert_eq!(b.len(), 1);
        let b = runner.collect(&pi, None, 7).unwrap();
        assert_eq!(b.len(), 7);
        // first call took one step, so episodes end at global steps 3, 6
        assert_eq!(b.dones, vec![false, true, false, false, true, false, false]);
        assert_eq!(b.episode_returns, vec![3.0, 3.0]);
        assert_eq!(runner.steps(), 8);
    }

    #[test]
    fn stored_log_probs_recompute() {
        let env = Constant { reward: 0.0, horizon: 5, t: 0 };
        let mut pi = policy();
        pi.log_std = vec![-0.7];
        let b = Runner::new(env, 3).collect(&pi, None, 20).unwrap();
        let mut m = [0.0];
        for t in 0..b.len() {
            pi.mean_action(b.obs_row(t), &mut m);
            let lp = GaussianPolicy::log_prob(&pi.log_std, &m, b.action_row(t));
            assert!((lp - b.log_probs[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn seeded_collection_reproduces() {
        let pi = policy();
        let a = Runner::new(Constant { reward: 0.5, horizon: 4, t: 0 }, 9).collect(&pi, None, 10).unwrap();
        let b = Runner::new(Constant { reward: 0.5, horizon: 4, t: 0 }, 9).collect(&pi, None, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluation_sums_rewards() {
        let pi = policy();
        let mut env = Constant { reward: 1.0, horizon: 1000, t: 0 };
        assert_eq!(evaluate(&mut env, &pi, 3, 0).unwrap(), vec![1000.0; 3]);
        let mut env = Constant { reward: 0.0, horizon: 10, t: 0 };
        assert_eq!(evaluate(&mut env, &pi, 2, 0).unwrap(), vec![0.0; 2]);
    }
}
