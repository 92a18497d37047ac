use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tolerance::{tolerance_unchecked, Sigmoid};
use super::{Environment, StepResult};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub gravity: f64,
    /// Newtons per unit action.
    pub force_gain: f64,
    pub dt: f64,
    pub horizon: usize,
    /// Std-dev of the reset perturbation around the hanging rest state.
    pub reset_noise: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.81,
            force_gain: 10.0,
            dt: 0.01,
            horizon: 1000,
            reset_noise: 0.01,
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("half_length", self.half_length),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        if !(self.reset_noise >= 0.0) {
            return Err(Error::invalid("reset_noise must be non-negative"));
        }
        Ok(())
    }

    /// Time derivative of `(x, θ, ẋ, θ̇)` under horizontal force `force`.
    /// θ = 0 is upright.
    pub fn derivative(&self, s: &[f64; 4], force: f64) -> [f64; 4] {
        let (m_c, m_p, l, g) = (self.cart_mass, self.pole_mass, self.half_length, self.gravity);
        let total = m_c + m_p;
        let (sin, cos) = s[1].sin_cos();
        let temp = (force + m_p * l * s[3] * s[3] * sin) / total;
        let theta_acc = (g * sin - cos * temp) / (l * (4.0 / 3.0 - m_p * cos * cos / total));
        let x_acc = temp - m_p * l * theta_acc * cos / total;
        [s[2], s[3], x_acc, theta_acc]
    }

    /// One classical RK4 step of size `h`.
    pub fn rk4(&self, s: &[f64; 4], force: f64, h: f64) -> [f64; 4] {
        let add = |a: &[f64; 4], k: &[f64; 4], c: f64| -> [f64; 4] {
            [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2], a[3] + c * k[3]]
        };
        let k1 = self.derivative(s, force);
        let k2 = self.derivative(&add(s, &k1, h / 2.0), force);
        let k3 = self.derivative(&add(s, &k2, h / 2.0), force);
        let k4 = self.derivative(&add(s, &k3, h), force);
        let mut out = *s;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Total mechanical energy (cart + rigid pole), zero potential at the pivot height.
    pub fn energy(&self, s: &[f64; 4]) -> f64 {
        let (m_c, m_p, l, g) = (self.cart_mass, self.pole_mass, self.half_length, self.gravity);
        let (x_dot, th_dot) = (s[2], s[3]);
        0.5 * (m_c + m_p) * x_dot * x_dot
            + m_p * l * x_dot * th_dot * s[1].cos()
            + 0.5 * m_p * l * l * (4.0 / 3.0) * th_dot * th_dot
            + m_p * g * l * s[1].cos()
    }
}

/// Product-of-factors swing-up reward on the embedded observation
/// `(x, cosθ, sinθ, ẋ, θ̇)` and the unscaled action. Lies in `[0, 1]`.
pub fn swingup_reward(obs: &[f64], u: f64) -> f64 {
    let upright = (1.0 + obs[1]) / 2.0;
    let centered = (1.0 + tolerance_unchecked(obs[0], (0.0, 0.0), 2.0, 0.1, Sigmoid::Gaussian)) / 2.0;
    let small_control = (4.0 + tolerance_unchecked(u, (0.0, 0.0), 1.0, 0.0, Sigmoid::Quadratic)) / 5.0;
    let small_velocity =
        (1.0 + tolerance_unchecked(obs[4], (0.0, 0.0), 5.0, 0.1, Sigmoid::Gaussian)) / 2.0;
    upright.clamp(0.0, 1.0) * centered * small_control * small_velocity
}

/// Frictionless cart-pole that starts hanging down and must be swung up.
#[derive(Clone, Debug)]
pub struct SwingUp {
    params: CartPoleParams,
    state: [f64; 4],
    t: usize,
}

impl SwingUp {
    pub fn new(params: CartPoleParams) -> Result<Self> {
        params.validate()?;
        Ok(SwingUp { params, state: [0.0, std::f64::consts::PI, 0.0, 0.0], t: 0 })
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    /// Raw state `(x, θ, ẋ, θ̇)`.
    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Overwrite the raw state and restart the step counter.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.t = 0;
    }

    pub fn observe(state: &[f64; 4]) -> Vec<f64> {
        let (sin, cos) = state[1].sin_cos();
        vec![state[0], cos, sin, state[2], state[3]]
    }
}

impl Environment for SwingUp {
    fn obs_dim(&self) -> usize {
        5
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0)]
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.params.reset_noise)
            .map_err(|e| Error::invalid(format!("reset noise: {e}")))?;
        let mut draw = || noise.sample(&mut rng);
        let x = draw();
        let theta = std::f64::consts::PI + draw();
        let x_dot = draw();
        let theta_dot = draw();
        self.set_state([x, theta, x_dot, theta_dot]);
        Ok(Self::observe(&self.state))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != 1 {
            return Err(Error::shape("1 action", action.len()));
        }
        if !action[0].is_finite() {
            return Err(Error::EnvAbort(format!("non-finite action {:?} at step {}", action, self.t)));
        }
        let u = action[0].clamp(-1.0, 1.0);
        let next = self.params.rk4(&self.state, u * self.params.force_gain, self.params.dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::EnvAbort(format!(
                "swing-up state became non-finite at step {}: {:?} -> {:?}",
                self.t, self.state, next
            )));
        }
        self.state = next;
        self.t += 1;
        let observation = Self::observe(&self.state);
        let reward = swingup_reward(&observation, u);
        Ok(StepResult {
            observation,
            reward,
            done: self.t >= self.params.horizon,
            hidden_state: self.state.to_vec(),
        })
    }
}
