//! The model-based training loop: fit sparse dynamics on real data, train
//! PPO entirely inside the learned surrogate, collect a little more real
//! data with the improved policy, refit, repeat.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{ensemble_fit, Dataset, EnsembleConfig, EnsembleModel, ModelCheckpoint};
use crate::envs::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::library::{FeatureLibrary, LibrarySpec, PolySpec};
use crate::rl::{evaluate, GaussianPolicy, PpoAgent, PpoConfig, Runner};
use crate::seeding::sub_seed;
use crate::surrogate::{InitSampler, SurrogateEnv, SurrogateReward};

/// One real-environment step; `action` is the clipped action applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub reward: f64,
}

/// Offline data plus a bounded FIFO of on-policy transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataStore {
    offline: Vec<Transition>,
    on_policy: VecDeque<Transition>,
    capacity: usize,
}

impl DataStore {
    pub fn new(offline: Vec<Transition>, capacity: usize) -> Self {
        DataStore { offline, on_policy: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.on_policy.len() == self.capacity {
            self.on_policy.pop_front();
        }
        self.on_policy.push_back(t);
    }

    pub fn offline(&self) -> &[Transition] {
        &self.offline
    }

    pub fn on_policy(&self) -> &VecDeque<Transition> {
        &self.on_policy
    }

    pub fn len(&self) -> usize {
        self.offline.len() + self.on_policy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.offline.iter().chain(self.on_policy.iter())
    }

    /// `(x_k, u_k) → x_{k+1}`.
    pub fn dynamics_dataset(&self) -> Result<Dataset> {
        self.dataset(|t| (t.obs.iter().chain(&t.action).copied().collect(), t.next_obs.clone()))
    }

    /// `(x_{k+1}, u_k) → r_k`.
    pub fn reward_dataset(&self) -> Result<Dataset> {
        self.dataset(|t| (t.next_obs.iter().chain(&t.action).copied().collect(), vec![t.reward]))
    }

    fn dataset(&self, f: impl Fn(&Transition) -> (Vec<f64>, Vec<f64>)) -> Result<Dataset> {
        let rows: Vec<_> = self.iter().map(f).collect();
        let Some((x0, y0)) = rows.first() else {
            return Err(Error::invalid("data store is empty"));
        };
        let (m, n) = (x0.len(), y0.len());
        let x = DMatrix::from_row_iterator(rows.len(), m, rows.iter().flat_map(|r| r.0.iter().copied()));
        let y = DMatrix::from_row_iterator(rows.len(), n, rows.iter().flat_map(|r| r.1.iter().copied()));
        Dataset::new(x, y)
    }
}

/// Write transitions as CSV: `obs..., u..., next_obs..., reward`, with the
/// observation columns named after `obs_names` (next-state columns get a
/// `next_` prefix).
pub fn write_transitions_csv(path: &std::path::Path, obs_names: &[String], data: &[Transition]) -> Result<()> {
    let act_dim = data.first().map_or(0, |t| t.action.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = obs_names.to_vec();
    header.extend((0..act_dim).map(|j| format!("u{j}")));
    header.extend(obs_names.iter().map(|n| format!("next_{n}")));
    header.push("reward".into());
    w.write_record(&header)?;
    for t in data {
        if t.obs.len() != obs_names.len() || t.action.len() != act_dim {
            return Err(Error::shape(format!("{} observations", obs_names.len()), t.obs.len()));
        }
        let rec: Vec<String> = t.obs.iter().chain(&t.action).chain(&t.next_obs).chain([&t.reward]).map(|v| v.to_string()).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_transitions_csv`].
pub fn read_transitions_csv(path: &std::path::Path, obs_dim: usize, act_dim: usize) -> Result<Vec<Transition>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = 2 * obs_dim + act_dim + 1;
    if r.headers()?.len() != width {
        return Err(Error::shape(format!("{width} columns"), r.headers()?.len()));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != width {
            return Err(Error::shape(format!("{width} columns"), v.len()));
        }
        out.push(Transition {
            obs: v[..obs_dim].to_vec(),
            action: v[obs_dim..obs_dim + act_dim].to_vec(),
            next_obs: v[obs_dim + act_dim..width - 1].to_vec(),
            reward: v[width - 1],
        });
    }
    Ok(out)
}

/// Behaviour policy used for the offline data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OfflinePolicy {
    /// Independent uniform draws inside the action bounds.
    Uniform,
    /// `u = A sin(2πt/P + φ)` with `A` the bound magnitude; period `P` (in
    /// steps) and phase drawn once per episode.
    Sinusoid { min_period: f64, max_period: f64 },
}

/// Exactly `n` transitions from `policy`, auto-resetting at episode ends.
pub fn collect_offline<E: Environment + ?Sized>(
    env: &mut E,
    policy: &OfflinePolicy,
    n: usize,
    seed: u64,
) -> Result<Vec<Transition>> {
    if n == 0 {
        return Err(Error::invalid("offline sample count must be >= 1"));
    }
    if let OfflinePolicy::Sinusoid { min_period, max_period } = policy {
        if !(*min_period > 0.0 && min_period <= max_period) {
            return Err(Error::invalid("sinusoid periods must satisfy 0 < min <= max"));
        }
    }
    let bounds = env.action_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "offline-actions", 0));
    let mut out = Vec::with_capacity(n);
    let mut episode = 0u64;
    let mut obs = env.reset(sub_seed(seed, "offline-episode", episode))?;
    let mut t = 0usize;
    let draw_wave = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        match policy {
            OfflinePolicy::Sinusoid { min_period, max_period } => (
                if min_period == max_period { *min_period } else { rng.random_range(*min_period..*max_period) },
                rng.random_range(0.0..std::f64::consts::TAU),
            ),
            OfflinePolicy::Uniform => (1.0, 0.0),
        }
    };
    let (mut period, mut phase) = draw_wave(&mut rng);
    while out.len() < n {
        let action: Vec<f64> = match policy {
            OfflinePolicy::Uniform => bounds.iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect(),
            OfflinePolicy::Sinusoid { .. } => {
                let s = (std::f64::consts::TAU * t as f64 / period + phase).sin();
                bounds.iter().map(|(lo, hi)| 0.5 * (hi + lo) + 0.5 * (hi - lo) * s).collect()
            }
        };
        let step = env.step(&action)?;
        t += 1;
        out.push(Transition { obs, action, next_obs: step.observation.clone(), reward: step.reward });
        if step.done {
            episode += 1;
            t = 0;
            (period, phase) = draw_wave(&mut rng);
            obs = env.reset(sub_seed(seed, "offline-episode", episode))?;
        } else {
            obs = step.observation;
        }
    }
    Ok(out)
}

/// Library plus ensemble hyperparameters for one learned model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub library: LibrarySpec,
    pub ensemble: EnsembleConfig,
}

/// Where surrogate episodes start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    /// The ground-truth environment's own reset distribution.
    Env,
    /// Uniformly chosen observations from the data store.
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynaConfig {
    pub n_off: usize,
    pub n_collect: usize,
    /// PPO updates on the surrogate between refits.
    pub n_batch: usize,
    /// Number of model refits (loop iterations).
    pub refits: usize,
    pub queue_capacity: usize,
    pub offline_policy: OfflinePolicy,
    pub dynamics: ModelSpec,
    /// Learned reward; `None` uses the environment's analytic reward.
    pub reward: Option<ModelSpec>,
    /// Surrogate bounding box, one `[lo, hi]` per observation component.
    pub bounds: Vec<[f64; 2]>,
    pub init: InitSpec,
    /// Indices of an embedded `[cos, sin]` pair kept on the unit circle.
    pub renormalize: Option<[usize; 2]>,
    pub surrogate_horizon: usize,
    pub eval_episodes: usize,
    /// Stop as soon as the best evaluation return reaches this value.
    pub target_return: Option<f64>,
    /// Fresh optimizer moments after every refit (default: carried over).
    pub reset_optimizer: bool,
    pub ppo: PpoConfig,
}

impl DynaConfig {
    /// Defaults for an environment.
    pub fn defaults_for(env: &EnvSpec) -> Self {
        match env {
            EnvSpec::Swingup { .. } => DynaConfig {
                n_off: 8000,
                n_collect: 1000,
                n_batch: 40,
                refits: 40,
                queue_capacity: 8000,
                offline_policy: OfflinePolicy::Uniform,
                dynamics: ModelSpec {
                    library: LibrarySpec::ControlAffine {
                        state_dim: 5,
                        control_dim: 1,
                        f: PolySpec::new(2, false),
                        g: PolySpec::new(2, true),
                    },
                    ensemble: EnsembleConfig::new(7e-3, 5e-5),
                },
                reward: None,
                bounds: vec![[-5.0, 5.0], [-1.1, 1.1], [-1.1, 1.1], [-10.0, 10.0], [-10.0, 10.0]],
                init: InitSpec::Env,
                renormalize: Some([1, 2]),
                surrogate_horizon: 1000,
                eval_episodes: 5,
                target_return: None,
                reset_optimizer: false,
                ppo: PpoConfig::default(),
            },
            EnvSpec::Wake { .. } => DynaConfig {
                n_off: 3000,
                n_collect: 1000,
                n_batch: 10,
                refits: 10,
                queue_capacity: 4000,
                offline_policy: OfflinePolicy::Uniform,
                dynamics: ModelSpec {
                    library: LibrarySpec::ControlAffine {
                        state_dim: 2,
                        control_dim: 1,
                        f: PolySpec::new(3, true),
                        g: PolySpec::new(1, true),
                    },
                    ensemble: EnsembleConfig::new(1e-4, 1e-6),
                },
                reward: Some(ModelSpec {
                    library: LibrarySpec::Polynomial { n_inputs: 3, poly: PolySpec::new(2, true) },
                    ensemble: EnsembleConfig::new(1e-5, 1e-8),
                }),
                bounds: vec![[-3.0, 3.0], [-10.0, 10.0]],
                init: InitSpec::Replay,
                renormalize: None,
                surrogate_horizon: 1000,
                eval_episodes: 5,
                target_return: None,
                reset_optimizer: false,
                ppo: PpoConfig::default(),
            },
        }
    }

    pub fn validate(&self, env: &EnvSpec) -> Result<()> {
        let counts = [
            ("n_off", self.n_off),
            ("n_collect", self.n_collect),
            ("n_batch", self.n_batch),
            ("refits", self.refits),
            ("surrogate_horizon", self.surrogate_horizon),
            ("eval_episodes", self.eval_episodes),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        self.ppo.validate()?;
        self.dynamics.ensemble.validate()?;
        let real = env.build()?;
        let (n, m) = (real.obs_dim(), real.act_dim());
        let lib = FeatureLibrary::new(self.dynamics.library.clone())?;
        if lib.input_dim() != n + m {
            return Err(Error::shape(format!("dynamics library over {} inputs", n + m), lib.input_dim()));
        }
        if let Some(r) = &self.reward {
            r.ensemble.validate()?;
            let lib = FeatureLibrary::new(r.library.clone())?;
            if lib.input_dim() != n + m {
                return Err(Error::shape(format!("reward library over {} inputs", n + m), lib.input_dim()));
            }
        } else if !matches!(env, EnvSpec::Swingup { .. }) {
            return Err(Error::invalid("this environment has no analytic reward; configure a reward model"));
        }
        if self.bounds.len() != n || self.bounds.iter().any(|[lo, hi]| !(lo <= hi)) {
            return Err(Error::invalid(format!("bounds need {n} intervals with lo <= hi")));
        }
        if let Some([c, s]) = self.renormalize {
            if c >= n || s >= n || c == s {
                return Err(Error::invalid("renormalize indices out of range"));
            }
        }
        Ok(())
    }

    /// PPO updates over the whole run; the learning-rate schedule horizon.
    pub fn total_updates(&self) -> u64 {
        (self.n_batch * self.refits) as u64
    }
}

/// Fit the dynamics (and, if configured, reward) ensembles on the store.
pub fn refit_models(
    store: &DataStore,
    dynamics: &ModelSpec,
    reward: Option<&ModelSpec>,
    seed: u64,
) -> Result<(EnsembleModel, Option<EnsembleModel>)> {
    let lib = FeatureLibrary::new(dynamics.library.clone())?;
    let dyn_model = ensemble_fit(&lib, &store.dynamics_dataset()?, &dynamics.ensemble, sub_seed(seed, "dynamics-fit", 0))?.model;
    let rew_model = match reward {
        Some(spec) => {
            let lib = FeatureLibrary::new(spec.library.clone())?;
            Some(ensemble_fit(&lib, &store.reward_dataset()?, &spec.ensemble, sub_seed(seed, "reward-fit", 0))?.model)
        }
        None => None,
    };
    Ok((dyn_model, rew_model))
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub refit: usize,
    /// Ground-truth training interactions so far: `n_off + refit·n_collect`.
    pub interactions: u64,
    /// Ground-truth steps spent on evaluation (not part of the budget).
    pub eval_steps: u64,
    pub surrogate_steps: u64,
    pub ppo_updates: u64,
    pub eval_mean: f64,
    pub eval_min: f64,
    pub eval_max: f64,
    pub best_return: f64,
    /// Mean return of surrogate episodes that finished during the updates.
    pub surrogate_return: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub lr: f64,
    pub dynamics_nnz: usize,
    pub refit_failed: bool,
}

pub const METRICS_HEADER_COMMENT: &str = "# dictrl-metrics/1";

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynaState {
    pub seed: u64,
    pub refits_done: usize,
    pub interactions: u64,
    pub eval_steps: u64,
    pub surrogate_steps: u64,
    pub store: DataStore,
    pub agent: PpoAgent,
    pub dynamics: ModelCheckpoint,
    pub reward: Option<ModelCheckpoint>,
    pub best_return: f64,
    pub best_policy: GaussianPolicy,
    pub best_refit: Option<usize>,
    /// Interactions at which `target_return` was first reached.
    pub interactions_to_target: Option<u64>,
    pub metrics: Vec<IterationMetrics>,
}

/// Driver for one seed of the loop.
pub struct Dyna {
    env: EnvSpec,
    config: DynaConfig,
    state: DynaState,
    dynamics: Arc<EnsembleModel>,
    reward: Option<Arc<EnsembleModel>>,
    /// Refit failures are recorded here as human-readable events.
    pub events: Vec<String>,
}

impl Dyna {
    /// Collect the offline data and fit the initial models.
    pub fn new(env: EnvSpec, config: DynaConfig, seed: u64) -> Result<Self> {
        config.validate(&env)?;
        let mut real = env.build()?;
        let offline = collect_offline(&mut real, &config.offline_policy, config.n_off, seed)?;
        let store = DataStore::new(offline, config.queue_capacity);
        let (dynamics, reward) = refit_models(&store, &config.dynamics, config.reward.as_ref(), sub_seed(seed, "refit", 0))?;
        let bounds = real.action_bounds();
        let agent = PpoAgent::new(real.obs_dim(), bounds, config.ppo.clone(), config.total_updates(), sub_seed(seed, "agent", 0))?;
        let state = DynaState {
            seed,
            refits_done: 0,
            interactions: config.n_off as u64,
            eval_steps: 0,
            surrogate_steps: 0,
            store,
            best_policy: agent.policy.clone(),
            agent,
            dynamics: dynamics.to_checkpoint(),
            reward: reward.as_ref().map(|r| r.to_checkpoint()),
            best_return: f64::NEG_INFINITY,
            best_refit: None,
            interactions_to_target: None,
            metrics: Vec::new(),
        };
        Ok(Dyna { env, config, state, dynamics: Arc::new(dynamics), reward: reward.map(Arc::new), events: Vec::new() })
    }

    pub fn from_state(env: EnvSpec, config: DynaConfig, state: DynaState) -> Result<Self> {
        config.validate(&env)?;
        let dynamics = Arc::new(EnsembleModel::from_checkpoint(state.dynamics.clone())?);
        let reward = match &state.reward {
            Some(c) => Some(Arc::new(EnsembleModel::from_checkpoint(c.clone())?)),
            None => None,
        };
        Ok(Dyna { env, config, state, dynamics, reward, events: Vec::new() })
    }

    pub fn state(&self) -> &DynaState {
        &self.state
    }

    pub fn config(&self) -> &DynaConfig {
        &self.config
    }

    pub fn dynamics(&self) -> &EnsembleModel {
        &self.dynamics
    }

    pub fn reward_model(&self) -> Option<&EnsembleModel> {
        self.reward.as_deref()
    }

    pub fn finished(&self) -> bool {
        self.state.refits_done >= self.config.refits
            || (self.config.target_return.is_some() && self.state.interactions_to_target.is_some())
    }

    /// Surrogate built from the current models.
    pub fn surrogate(&self) -> Result<SurrogateEnv> {
        let cfg = &self.config;
        let real = self.env.build()?;
        let reward = match &self.reward {
            Some(m) => SurrogateReward::Model(m.clone()),
            None => SurrogateReward::swingup(),
        };
        let init = match cfg.init {
            InitSpec::Env => InitSampler::Env(self.env.clone()),
            InitSpec::Replay => InitSampler::Replay(Arc::new(self.state.store.iter().map(|t| t.obs.clone()).collect())),
        };
        let bounds = cfg.bounds.iter().map(|[lo, hi]| (*lo, *hi)).collect();
        let env = SurrogateEnv::new(self.dynamics.clone(), reward, bounds, real.action_bounds(), init, cfg.surrogate_horizon)?;
        match cfg.renormalize {
            Some([c, s]) => env.with_renormalization(c, s),
            None => Ok(env),
        }
    }

    /// One loop iteration: PPO on the surrogate, real collection, refit,
    /// evaluation.
    pub fn iterate(&mut self) -> Result<IterationMetrics> {
        if self.finished() {
            return Err(Error::invalid("run already finished"));
        }
        let k = self.state.refits_done + 1;
        let seed = self.state.seed;
        let cfg = self.config.clone();

        // policy optimization purely on the surrogate
        if cfg.reset_optimizer {
            self.state.agent.reset_optimizer();
        }
        let mut runner = Runner::new(self.surrogate()?, sub_seed(seed, "surrogate-rollouts", k as u64));
        let mut last = Default::default();
        let mut sur_returns = Vec::new();
        for _ in 0..cfg.n_batch {
            let agent = &mut self.state.agent;
            let mut batch = runner.collect(&agent.policy, Some(&agent.value), cfg.ppo.batch_size)?;
            batch.compute_gae(cfg.ppo.gamma, cfg.ppo.lambda);
            sur_returns.extend_from_slice(&batch.episode_returns);
            last = agent.update(&batch)?;
        }
        self.state.surrogate_steps += runner.steps();

        // deploy on the real system
        let mut collector = Runner::new(self.env.build()?, sub_seed(seed, "collect", k as u64));
        let batch = collector.collect(&self.state.agent.policy, None, cfg.n_collect)?;
        let bounds = collector.env().action_bounds();
        for t in 0..batch.len() {
            let action = batch.action_row(t).iter().zip(&bounds).map(|(a, (lo, hi))| a.clamp(*lo, *hi)).collect();
            self.state.store.push(Transition {
                obs: batch.obs_row(t).to_vec(),
                action,
                next_obs: batch.next_obs[t * batch.obs_dim..(t + 1) * batch.obs_dim].to_vec(),
                reward: batch.rewards[t],
            });
        }
        self.state.interactions += cfg.n_collect as u64;

        // refit, keeping the old models if the fit fails
        let mut refit_failed = false;
        match refit_models(&self.state.store, &cfg.dynamics, cfg.reward.as_ref(), sub_seed(seed, "refit", k as u64)) {
            Ok((d, r)) => {
                self.state.dynamics = d.to_checkpoint();
                self.dynamics = Arc::new(d);
                if let Some(r) = r {
                    self.state.reward = Some(r.to_checkpoint());
                    self.reward = Some(Arc::new(r));
                }
            }
            Err(e) => {
                refit_failed = true;
                self.events.push(format!("refit {k} failed, keeping previous models: {e}"));
            }
        }
        self.state.refits_done = k;

        // evaluation on the real system (deterministic mean actions)
        let mut real = self.env.build()?;
        let returns = evaluate(&mut real, &self.state.agent.policy, cfg.eval_episodes, sub_seed(seed, "evaluation", k as u64))?;
        self.state.eval_steps += (cfg.eval_episodes * real.horizon()) as u64;
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        if mean > self.state.best_return {
            self.state.best_return = mean;
            self.state.best_policy = self.state.agent.policy.clone();
            self.state.best_refit = Some(k);
        }
        if let Some(target) = cfg.target_return {
            if self.state.interactions_to_target.is_none() && self.state.best_return >= target {
                self.state.interactions_to_target = Some(self.state.interactions);
            }
        }
        let m = IterationMetrics {
            refit: k,
            interactions: self.state.interactions,
            eval_steps: self.state.eval_steps,
            surrogate_steps: self.state.surrogate_steps,
            ppo_updates: self.state.agent.updates_done,
            eval_mean: mean,
            eval_min: returns.iter().copied().fold(f64::INFINITY, f64::min),
            eval_max: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            best_return: self.state.best_return,
            surrogate_return: (!sur_returns.is_empty()).then(|| sur_returns.iter().sum::<f64>() / sur_returns.len() as f64),
            policy_loss: last.loss.policy_loss,
            value_loss: last.loss.value_loss,
            approx_kl: last.loss.approx_kl,
            clip_frac: last.loss.clip_frac,
            lr: last.lr,
            dynamics_nnz: self.dynamics.coefficients().nnz(),
            refit_failed,
        };
        self.state.metrics.push(m.clone());
        Ok(m)
    }

    /// Iterate until finished, calling `on_iteration` after every step.
    pub fn run(&mut self, mut on_iteration: impl FnMut(&Dyna, &IterationMetrics) -> Result<()>) -> Result<()> {
        while !self.finished() {
            let m = self.iterate()?;
            on_iteration(self, &m)?;
        }
        Ok(())
    }
}
