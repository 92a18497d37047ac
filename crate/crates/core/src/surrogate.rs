//! Learned models wrapped as an [`Environment`].

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ensemble::{ensemble_fit, Dataset, EnsembleConfig, EnsembleModel};
use crate::envs::{swingup_reward, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::library::FeatureLibrary;

pub type RewardFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Reward `r_k` as a function of `(x_{k+1}, u_k)`.
#[derive(Clone)]
pub enum SurrogateReward {
    Analytic(RewardFn),
    Model(Arc<EnsembleModel>),
}

impl SurrogateReward {
    pub fn swingup() -> Self {
        SurrogateReward::Analytic(Arc::new(|x, u| swingup_reward(x, u[0])))
    }
}

impl fmt::Debug for SurrogateReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurrogateReward::Analytic(_) => f.write_str("Analytic"),
            SurrogateReward::Model(m) => f.debug_tuple("Model").field(m).finish(),
        }
    }
}

/// How surrogate episodes are initialized.
#[derive(Clone, Debug)]
pub enum InitSampler {
    /// Reset a ground-truth environment and take its first observation
    /// (no physics is stepped).
    Env(EnvSpec),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    /// Uniformly pick one of the stored states.
    Replay(Arc<Vec<Vec<f64>>>),
}

impl InitSampler {
    fn sample(&self, seed: u64, dim: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = match self {
            InitSampler::Env(spec) => spec.build()?.reset(seed)?,
            InitSampler::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| {
                    Normal::new(*m, *s)
                        .map(|d| d.sample(&mut rng))
                        .map_err(|e| Error::invalid(format!("init sampler: {e}")))
                })
                .collect::<Result<Vec<_>>>()?,
            InitSampler::Replay(states) => {
                if states.is_empty() {
                    return Err(Error::invalid("replay init sampler has no states"));
                }
                states[rng.random_range(0..states.len())].clone()
            }
        };
        if x.len() != dim {
            return Err(Error::shape(format!("{dim}-dim initial state"), x.len()));
        }
        Ok(x)
    }
}

/// A steppable environment whose transition is `x' = Θ(x, u)·Ξ*`.
#[derive(Clone, Debug)]
pub struct SurrogateEnv {
    dynamics: Arc<EnsembleModel>,
    reward: SurrogateReward,
    bounds: Vec<(f64, f64)>,
    action_bounds: Vec<(f64, f64)>,
    init: InitSampler,
    horizon: usize,
    /// Indices of an embedded `(cos, sin)` pair to project back onto the circle.
    renormalize: Option<(usize, usize)>,
    state: Vec<f64>,
    input: Vec<f64>,
    features: Vec<f64>,
    t: usize,
}

impl SurrogateEnv {
    pub fn new(
        dynamics: Arc<EnsembleModel>,
        reward: SurrogateReward,
        bounds: Vec<(f64, f64)>,
        action_bounds: Vec<(f64, f64)>,
        init: InitSampler,
        horizon: usize,
    ) -> Result<Self> {
        let n = bounds.len();
        let m = action_bounds.len();
        if dynamics.n_outputs() != n {
            return Err(Error::shape(format!("{n} dynamics outputs"), dynamics.n_outputs()));
        }
        if dynamics.input_dim() != n + m {
            return Err(Error::shape(format!("{} dynamics inputs", n + m), dynamics.input_dim()));
        }
        if let SurrogateReward::Model(r) = &reward {
            if r.n_outputs() != 1 || r.input_dim() != n + m {
                return Err(Error::invalid("reward model must map (state, action) to a scalar"));
            }
        }
        if bounds.iter().chain(&action_bounds).any(|(lo, hi)| !(lo <= hi && lo.is_finite() && hi.is_finite())) {
            return Err(Error::invalid("bounds must be finite intervals"));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        let d = dynamics.library().len();
        Ok(SurrogateEnv {
            dynamics,
            reward,
            bounds,
            action_bounds,
            init,
            horizon,
            renormalize: None,
            state: vec![0.0; n],
            input: vec![0.0; n + m],
            features: vec![0.0; d],
            t: 0,
        })
    }

    pub fn with_renormalization(mut self, cos: usize, sin: usize) -> Result<Self> {
        if cos >= self.bounds.len() || sin >= self.bounds.len() || cos == sin {
            return Err(Error::invalid("renormalization indices out of range"));
        }
        self.renormalize = Some((cos, sin));
        Ok(self)
    }

    pub fn dynamics(&self) -> &EnsembleModel {
        &self.dynamics
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.state.len() {
            return Err(Error::shape(self.state.len(), state.len()));
        }
        self.state.copy_from_slice(state);
        self.t = 0;
        Ok(())
    }

    pub fn in_bounds(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.bounds).all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    fn reward_at(&mut self, next: &[f64], u: &[f64]) -> f64 {
        match &self.reward {
            SurrogateReward::Analytic(f) => f(next, u),
            SurrogateReward::Model(model) => {
                let n = next.len();
                self.input[..n].copy_from_slice(next);
                self.input[n..].copy_from_slice(u);
                let mut feats = vec![0.0; model.library().len()];
                let mut out = [0.0];
                model.predict_into(&self.input, &mut feats, &mut out);
                out[0]
            }
        }
    }
}

impl Environment for SurrogateEnv {
    fn obs_dim(&self) -> usize {
        self.bounds.len()
    }

    fn act_dim(&self) -> usize {
        self.action_bounds.len()
    }

    fn action_bounds(&self) -> Vec<(f64, f64)> {
        self.action_bounds.clone()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let x = self.init.sample(seed, self.state.len())?;
        self.state = x;
        self.t = 0;
        Ok(self.state.clone())
    }

    /// Never fails on divergence: a step that leaves the box (or produces
    /// non-finite values) ends the episode. Non-finite predictions are not
    /// emitted; the last finite state is repeated instead.
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let n = self.state.len();
        if action.len() != self.action_bounds.len() {
            return Err(Error::shape(self.action_bounds.len(), action.len()));
        }
        let u: Vec<f64> = action
            .iter()
            .zip(&self.action_bounds)
            .map(|(a, (lo, hi))| if a.is_finite() { a.clamp(*lo, *hi) } else { 0.0 })
            .collect();
        self.input[..n].copy_from_slice(&self.state);
        self.input[n..].copy_from_slice(&u);
        let mut next = vec![0.0; n];
        self.dynamics.predict_into(&self.input, &mut self.features, &mut next);
        let finite = next.iter().all(|v| v.is_finite());
        if !finite {
            next.copy_from_slice(&self.state);
        } else if let Some((c, s)) = self.renormalize {
            let r = next[c].hypot(next[s]);
            if r > 0.0 {
                next[c] /= r;
                next[s] /= r;
            }
        }
        self.t += 1;
        let out_of_bounds = !finite || !self.in_bounds(&next);
        let mut reward = self.reward_at(&next, &u);
        if !reward.is_finite() {
            reward = 0.0;
        }
        self.state.copy_from_slice(&next);
        Ok(StepResult {
            observation: next.clone(),
            reward,
            done: out_of_bounds || self.t >= self.horizon,
            hidden_state: next,
        })
    }
}

/// Fit `r_k ≈ R(x_{k+1}, u_k)`; `data.x` rows are `(x_{k+1}, u_k)` and
/// `data.y` is the single reward column.
pub fn fit_reward_model(
    data: &Dataset,
    library: &FeatureLibrary,
    config: &EnsembleConfig,
    seed: u64,
) -> Result<EnsembleModel> {
    if data.y().ncols() != 1 {
        return Err(Error::shape("1 reward column", data.y().ncols()));
    }
    if library.input_dim() != data.x().ncols() {
        return Err(Error::shape(library.input_dim(), data.x().ncols()));
    }
    Ok(ensemble_fit(library, data, config, seed)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stlridge::CoefficientMatrix;
    use nalgebra::DMatrix;

    fn linear_model(a: &DMatrix<f64>, b: &DMatrix<f64>) -> EnsembleModel {
        // library [x0.., u0..] without bias; Ξ = [Aᵀ; Bᵀ]
        let (n, m) = (a.nrows(), b.ncols());
        let lib = FeatureLibrary::polynomial(n + m, 1, false).unwrap();
        let mut xi = DMatrix::zeros(n + m, n);
        xi.rows_mut(0, n).copy_from(&a.transpose());
        xi.rows_mut(n, m).copy_from(&b.transpose());
        EnsembleModel::single(lib, CoefficientMatrix::dense(xi).unwrap()).unwrap()
    }

    fn box_env(model: EnsembleModel, bound: f64) -> SurrogateEnv {
        let n = model.n_outputs();
        SurrogateEnv::new(
            Arc::new(model),
            SurrogateReward::Analytic(Arc::new(|x, _| x[0])),
            vec![(-bound, bound); n],
            vec![(-1.0, 1.0)],
            InitSampler::Gaussian { mean: vec![0.0; n], std: vec![0.1; n] },
            50,
        )
        .unwrap()
    }

    #[test]
    fn identity_dynamics() {
        let model = linear_model(&DMatrix::identity(3, 3), &DMatrix::zeros(3, 1));
        let mut env = box_env(model, 5.0);
        env.set_state(&[0.1, -0.2, 0.3]).unwrap();
        let r = env.step(&[0.7]).unwrap();
        assert_eq!(r.observation, vec![0.1, -0.2, 0.3]);
        assert!(!r.done);
        assert_eq!(r.reward, 0.1);
    }

    #[test]
    fn leaving_the_box_terminates() {
        // x' = x + 1 on the first coordinate
        let lib = FeatureLibrary::polynomial(2, 1, true).unwrap();
        let xi = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
        let model = EnsembleModel::single(lib, CoefficientMatrix::dense(xi).unwrap()).unwrap();
        let mut env = box_env(model, 5.0);
        env.set_state(&[5.0]).unwrap();
        let r = env.step(&[0.0]).unwrap();
        assert_eq!(r.observation, vec![6.0]);
        assert!(r.done);
        // reward evaluated at the out-of-bounds state
        assert_eq!(r.reward, 6.0);
    }

    #[test]
    fn linear_system_matches_matrix_product() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.95]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.5]);
        let mut env = box_env(linear_model(&a, &b), 100.0);
        let mut x = nalgebra::DVector::from_vec(vec![1.0, -1.0]);
        env.set_state(x.as_slice()).unwrap();
        for k in 0..30 {
            let u = (k as f64 * 0.3).sin();
            let r = env.step(&[u]).unwrap();
            x = &a * &x + &b * u;
            for i in 0..2 {
                assert!((r.observation[i] - x[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn renormalizes_onto_circle() {
        let lib = FeatureLibrary::polynomial(3, 1, false).unwrap();
        let xi = DMatrix::from_row_slice(3, 2, &[1.1, 0.05, -0.03, 0.9, 0.0, 0.2]);
        let model = EnsembleModel::single(lib, CoefficientMatrix::dense(xi).unwrap()).unwrap();
        let mut env = box_env(model, 1.1).with_renormalization(0, 1).unwrap();
        env.set_state(&[1.0, 0.0]).unwrap();
        for _ in 0..40 {
            let r = env.step(&[0.3]).unwrap();
            let o = &r.observation;
            assert!((o[0] * o[0] + o[1] * o[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_contained() {
        let lib = FeatureLibrary::polynomial(2, 2, false).unwrap();
        // x' = x²·1e300 overflows
        let xi = DMatrix::from_row_slice(5, 1, &[0.0, 0.0, 1e300, 0.0, 0.0]);
        let model = EnsembleModel::single(lib, CoefficientMatrix::dense(xi).unwrap()).unwrap();
        let mut env = box_env(model, 5.0);
        env.set_state(&[1e10]).unwrap();
        let r = env.step(&[0.0]).unwrap();
        assert!(r.done);
        assert!(r.observation.iter().all(|v| v.is_finite()));
        assert!(r.reward.is_finite());
    }

    #[test]
    fn samplers() {
        let model = linear_model(&DMatrix::identity(2, 2), &DMatrix::zeros(2, 1));
        let mut env = box_env(model.clone(), 5.0);
        let a = env.reset(3).unwrap();
        assert_eq!(a, env.reset(3).unwrap());

        let states = Arc::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut env = SurrogateEnv::new(
            Arc::new(model),
            SurrogateReward::Analytic(Arc::new(|_, _| 0.0)),
            vec![(-5.0, 5.0); 2],
            vec![(-1.0, 1.0)],
            InitSampler::Replay(states.clone()),
            10,
        )
        .unwrap();
        for s in 0..20 {
            let x = env.reset(s).unwrap();
            assert!(states.contains(&x));
        }
    }

    #[test]
    fn swingup_env_sampler_matches_truth() {
        let spec = EnvSpec::Swingup { params: Default::default() };
        let lib = FeatureLibrary::polynomial(6, 1, false).unwrap();
        let model = EnsembleModel::single(lib, CoefficientMatrix::zeros(6, 5)).unwrap();
        let mut env = SurrogateEnv::new(
            Arc::new(model),
            SurrogateReward::swingup(),
            vec![(-5.0, 5.0); 5],
            vec![(-1.0, 1.0)],
            InitSampler::Env(spec.clone()),
            1000,
        )
        .unwrap();
        assert_eq!(env.reset(9).unwrap(), spec.build().unwrap().reset(9).unwrap());
    }

    #[test]
    fn reward_model_recovers_quadratic() {
        // r = 0.5 − x0² + 0.25 x1 u
        let lib = FeatureLibrary::polynomial(3, 2, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.5 - x[0] * x[0] + 0.25 * x[1] * x[2]]).collect();
        let data = Dataset::from_rows(&xs, &ys).unwrap();
        let cfg = EnsembleConfig::new(1e-3, 0.0).members(5);
        let model = fit_reward_model(&data, &lib, &cfg, 1).unwrap();
        let names = lib.term_names(&lib.input_names());
        let c = model.coefficients().values();
        for (i, name) in names.iter().enumerate() {
            let expected = match name.as_str() {
                "1" => 0.5,
                "x0^2" => -1.0,
                "x1 x2" => 0.25,
                _ => 0.0,
            };
            assert!((c[(i, 0)] - expected).abs() < 1e-6, "{name}: {}", c[(i, 0)]);
        }
    }

    #[test]
    fn constant_reward_is_bias_only() {
        let lib = FeatureLibrary::polynomial(2, 2, true).unwrap();
        let xs: Vec<Vec<f64>> = (0..50).map(|k| vec![(k as f64).sin(), (k as f64 * 0.7).cos()]).collect();
        let ys = vec![vec![-0.15]; 50];
        let data = Dataset::from_rows(&xs, &ys).unwrap();
        let model = fit_reward_model(&data, &lib, &EnsembleConfig::new(1e-3, 0.0).members(3), 0).unwrap();
        let c = model.coefficients();
        assert_eq!(c.nnz(), 1);
        assert!((c.values()[(0, 0)] + 0.15).abs() < 1e-12);
    }
}
