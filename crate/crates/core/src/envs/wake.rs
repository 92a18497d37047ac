use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, StepResult};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WakeParams {
    /// Linear growth rate of the unstable mode.
    pub sigma: f64,
    pub omega: f64,
    /// Relaxation rate of the mean-flow amplitude.
    pub lambda: f64,
    /// Time constant of the lift low-pass filter.
    pub tau: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Agent step.
    pub dt: f64,
    pub substeps: usize,
    pub max_action: f64,
    pub horizon: usize,
    /// Uncontrolled agent steps run after placing the state on the limit
    /// cycle, so the filter and the difference estimate start settled.
    pub warmup_steps: usize,
}

impl Default for WakeParams {
    fn default() -> Self {
        WakeParams {
            sigma: 0.1,
            omega: 1.0,
            lambda: 1.0,
            tau: 0.556,
            c0: 1.5,
            c1: 1.0,
            c2: 0.1,
            dt: 0.1,
            substeps: 10,
            max_action: std::f64::consts::FRAC_PI_2,
            horizon: 1000,
            warmup_steps: 20,
        }
    }
}

impl WakeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dt", self.dt), ("tau", self.tau), ("max_action", self.max_action)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.substeps == 0 || self.horizon == 0 {
            return Err(Error::invalid("substeps and horizon must be >= 1"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        Ok(())
    }

    /// `(ȧ, ḃ, ż)` of the mean-field oscillator.
    pub fn derivative(&self, s: &[f64; 3], u: f64) -> [f64; 3] {
        let [a, b, z] = *s;
        let growth = self.sigma - z;
        [
            growth * a - self.omega * b + u,
            self.omega * a + growth * b,
            -self.lambda * (z - a * a - b * b),
        ]
    }

    pub fn rk4(&self, s: &[f64; 3], u: f64, h: f64) -> [f64; 3] {
        let add = |a: &[f64; 3], k: &[f64; 3], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2]];
        let k1 = self.derivative(s, u);
        let k2 = self.derivative(&add(s, &k1, h / 2.0), u);
        let k3 = self.derivative(&add(s, &k2, h / 2.0), u);
        let k4 = self.derivative(&add(s, &k3, h), u);
        let mut out = *s;
        for i in 0..3 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Hidden drag coefficient.
    pub fn drag(&self, z: f64, u: f64) -> f64 {
        self.c0 + self.c1 * z + self.c2 * u * u
    }
}

/// Partially observed wake model: the agent sees a filtered lift signal
/// and its rate, while the reward depends on the unobserved amplitude `z`.
#[derive(Clone, Debug)]
pub struct WakeOscillator {
    params: WakeParams,
    /// `(a, b, z)`
    state: [f64; 3],
    lift: f64,
    lift_rate: f64,
    t: usize,
}

impl WakeOscillator {
    pub fn new(params: WakeParams) -> Result<Self> {
        params.validate()?;
        Ok(WakeOscillator { params, state: [0.0; 3], lift: 0.0, lift_rate: 0.0, t: 0 })
    }

    pub fn params(&self) -> &WakeParams {
        &self.params
    }

    /// `(a, b, z, C_L)`
    pub fn hidden_state(&self) -> [f64; 4] {
        [self.state[0], self.state[1], self.state[2], self.lift]
    }

    /// Place the oscillator at `(a, b, z)` with the filter equal to `a` and
    /// a zero rate estimate.
    pub fn set_state(&mut self, state: [f64; 3]) {
        self.state = state;
        self.lift = state[0];
        self.lift_rate = 0.0;
        self.t = 0;
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.lift, self.lift_rate]
    }

    fn advance(&mut self, u: f64) -> Result<()> {
        let p = &self.params;
        let h = p.dt / p.substeps as f64;
        let prev = self.lift;
        for _ in 0..p.substeps {
            let a = self.state[0];
            self.state = p.rk4(&self.state, u, h);
            self.lift += h / p.tau * (a - self.lift);
        }
        self.lift_rate = (self.lift - prev) / p.dt;
        if self.state.iter().chain([&self.lift, &self.lift_rate]).any(|v| !v.is_finite()) {
            return Err(Error::EnvAbort(format!(
                "wake oscillator became non-finite at step {}: {:?}",
                self.t, self.state
            )));
        }
        Ok(())
    }
}

impl Environment for WakeOscillator {
    fn obs_dim(&self) -> usize {
        2
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-self.params.max_action, self.params.max_action)]
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let r = self.params.sigma.sqrt();
        let (s, c) = phase.sin_cos();
        self.set_state([r * c, r * s, self.params.sigma]);
        for _ in 0..self.params.warmup_steps {
            self.advance(0.0)?;
        }
        self.t = 0;
        Ok(self.observation())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != 1 {
            return Err(Error::shape("1 action", action.len()));
        }
        if !action[0].is_finite() {
            return Err(Error::EnvAbort(format!("non-finite action at step {}", self.t)));
        }
        let u = action[0].clamp(-self.params.max_action, self.params.max_action);
        self.advance(u)?;
        self.t += 1;
        let reward = -self.params.dt * self.params.drag(self.state[2], u);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.t >= self.params.horizon,
            hidden_state: self.hidden_state().to_vec(),
        })
    }
}
