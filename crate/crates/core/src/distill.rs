//! Distilling a neural policy's mean action into a sparse polynomial.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{ensemble_fit, Aggregation, Dataset, EnsembleConfig, EnsembleModel};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::library::FeatureLibrary;
use crate::rl::{evaluate, Controller};
use crate::seeding::sub_seed;
use crate::surrogate::SurrogateEnv;
pub use crate::uq::MeshAxis;
use crate::uq::embed;

/// Teacher labels are clipped to `±LABEL_CLIP`.
pub const LABEL_CLIP: f64 = 5.0;

/// Gaussian over raw coordinates. If `angle` is set, that component is an
/// angle and is replaced in place by its `(cos, sin)` embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianInit {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    #[serde(default)]
    pub angle: Option<usize>,
}

impl GaussianInit {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        if self.mean.len() != self.std.len() || self.angle.is_some_and(|a| a >= self.mean.len()) {
            return Err(Error::invalid("inconsistent initial-condition spec"));
        }
        let raw = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| {
                Normal::new(*m, *s)
                    .map(|d| d.sample(rng))
                    .map_err(|e| Error::invalid(format!("initial-condition std: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(embed(&raw, self.angle))
    }
}

/// How the distillation states are gathered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingStrategy {
    /// Tensor grid directly in observation space.
    AmbientMesh { axes: Vec<MeshAxis> },
    /// Tensor grid in raw coordinates, with the `angle` axis embedded onto
    /// the circle.
    ProjectedMesh { axes: Vec<MeshAxis>, angle: usize },
    /// Surrogate rollouts under the teacher's mean action.
    SurrogateTrajectories {
        n_samples: usize,
        trajectory_length: usize,
        init: GaussianInit,
        #[serde(default)]
        noise: f64,
        #[serde(default = "two")]
        noise_copies: usize,
    },
    /// Observations from recorded real transitions.
    Replay {
        n_samples: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default = "two")]
        noise_copies: usize,
    },
}

fn two() -> usize {
    2
}

impl SamplingStrategy {
    /// Defaults for the swing-up task: 5000 states from 500-step surrogate
    /// rollouts started near the hanging position, with two noisy copies per
    /// state. Rollouts from upright never visit the swing-up phase.
    pub fn swingup_trajectories(noise: f64) -> Self {
        SamplingStrategy::SurrogateTrajectories {
            n_samples: 5000,
            trajectory_length: 500,
            init: GaussianInit {
                mean: vec![0.0, std::f64::consts::PI, 0.0, 0.0],
                std: vec![0.25, 0.1, 0.25, 0.25],
                angle: Some(1),
            },
            noise,
            noise_copies: 2,
        }
    }
}

fn add_noise(states: Vec<Vec<f64>>, noise: f64, copies: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::invalid("noise scale must be non-negative"));
    }
    if noise == 0.0 || copies == 0 {
        return Ok(states);
    }
    let d = Normal::new(0.0, noise).unwrap();
    let mut out = Vec::with_capacity(states.len() * (1 + copies));
    for s in &states {
        for _ in 0..copies {
            out.push(s.iter().map(|v| v + d.sample(rng)).collect());
        }
    }
    let mut all = states;
    all.extend(out);
    Ok(all)
}

fn tensor_grid(axes: &[MeshAxis]) -> Vec<Vec<f64>> {
    let values: Vec<Vec<f64>> = axes.iter().map(MeshAxis::values).collect();
    let mut grid = vec![Vec::new()];
    for vals in &values {
        grid = grid
            .into_iter()
            .flat_map(|p| vals.iter().map(move |v| {
                let mut q = p.clone();
                q.push(*v);
                q
            }))
            .collect();
    }
    grid
}

/// Draw the distillation state set.
///
/// Trajectory strategies need `surrogate`; replay needs `replay`. Noisy
/// variants return the clean states followed by `noise_copies` perturbed
/// copies of each.
pub fn sample_states(
    strategy: &SamplingStrategy,
    surrogate: Option<&mut SurrogateEnv>,
    teacher_mean: &dyn Fn(&[f64]) -> Vec<f64>,
    replay: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "distill-states", 0));
    match strategy {
        SamplingStrategy::AmbientMesh { axes } => {
            if axes.is_empty() || axes.iter().any(|a| a.points == 0) {
                return Err(Error::invalid("mesh needs non-empty axes"));
            }
            Ok(tensor_grid(axes))
        }
        SamplingStrategy::ProjectedMesh { axes, angle } => {
            if *angle >= axes.len() || axes.iter().any(|a| a.points == 0) {
                return Err(Error::invalid("projected mesh angle axis out of range"));
            }
            Ok(tensor_grid(axes).iter().map(|p| embed(p, Some(*angle))).collect())
        }
        SamplingStrategy::SurrogateTrajectories { n_samples, trajectory_length, init, noise, noise_copies } => {
            let env = surrogate.ok_or_else(|| Error::invalid("trajectory sampling needs a surrogate"))?;
            if *n_samples == 0 || *trajectory_length == 0 {
                return Err(Error::invalid("n_samples and trajectory_length must be >= 1"));
            }
            let mut states = Vec::with_capacity(*n_samples);
            let mut attempts = 0usize;
            while states.len() < *n_samples {
                attempts += 1;
                if attempts > 100 * n_samples {
                    return Err(Error::invalid("surrogate trajectories keep diverging"));
                }
                let x0 = init.sample(&mut rng)?;
                if !env.in_bounds(&x0) {
                    continue;
                }
                env.set_state(&x0)?;
                let mut x = x0;
                for _ in 0..*trajectory_length {
                    if states.len() == *n_samples {
                        break;
                    }
                    states.push(x.clone());
                    let u = teacher_mean(&x);
                    let step = env.step(&u)?;
                    // leaving the box truncates the trajectory
                    if !env.in_bounds(&step.observation) {
                        break;
                    }
                    x = step.observation;
                }
            }
            add_noise(states, *noise, *noise_copies, &mut rng)
        }
        SamplingStrategy::Replay { n_samples, noise, noise_copies } => {
            let pool = replay.ok_or_else(|| Error::invalid("replay sampling needs stored states"))?;
            if pool.is_empty() || *n_samples == 0 {
                return Err(Error::invalid("replay pool and n_samples must be non-empty"));
            }
            let states = (0..*n_samples).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect();
            add_noise(states, *noise, *noise_copies, &mut rng)
        }
    }
}

/// Threshold × ridge grid and shared ensemble settings for distillation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSweep {
    pub thresholds: Vec<f64>,
    pub alphas: Vec<f64>,
    pub n_members: usize,
    pub row_bag_frac: f64,
    pub lib_bag_frac: f64,
    /// Fraction of states used for fitting; the rest validate.
    pub train_frac: f64,
}

impl Default for DistillSweep {
    fn default() -> Self {
        DistillSweep {
            thresholds: vec![1e-3, 1e-2, 5e-2, 1e-1],
            alphas: vec![1e-6, 1e-4, 1e-2],
            n_members: 20,
            row_bag_frac: 1.0,
            lib_bag_frac: 0.9,
            train_frac: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub threshold: f64,
    pub alpha: f64,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub nnz: usize,
}

/// Sparse polynomial policy, clipped to the action bounds at execution.
#[derive(Clone, Debug)]
pub struct DictionaryPolicy {
    pub model: EnsembleModel,
    pub action_bounds: Vec<(f64, f64)>,
}

impl DictionaryPolicy {
    /// Number of nonzero aggregated coefficients.
    pub fn n_coefficients(&self) -> usize {
        self.model.coefficients().nnz()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        self.model.save_json(path)
    }
}

impl Controller for DictionaryPolicy {
    fn act_dim(&self) -> usize {
        self.action_bounds.len()
    }

    fn act(&self, obs: &[f64], out: &mut [f64]) {
        let mut feats = vec![0.0; self.model.library().len()];
        let mut input = obs.to_vec();
        input.truncate(self.model.input_dim());
        self.model.predict_into(&input, &mut feats, out);
        for (a, (lo, hi)) in out.iter_mut().zip(&self.action_bounds) {
            *a = if a.is_finite() { a.clamp(*lo, *hi) } else { 0.0 };
        }
    }
}

pub struct Distilled {
    pub policy: DictionaryPolicy,
    pub cells: Vec<SweepCell>,
    pub selected: usize,
}

fn mse(model: &EnsembleModel, data: &Dataset) -> Result<f64> {
    let theta = model.library().evaluate(data.x())?;
    let pred = &theta * model.coefficients().values();
    Ok((pred - data.y()).iter().map(|e| e * e).sum::<f64>() / data.y().len() as f64)
}

/// Fit every sweep cell on 80% of `states` (labelled by the clipped
/// teacher mean), keep the one with the lowest validation MSE.
pub fn distill_policy(
    teacher_mean: &dyn Fn(&[f64]) -> Vec<f64>,
    states: &[Vec<f64>],
    library: &FeatureLibrary,
    sweep: &DistillSweep,
    action_bounds: Vec<(f64, f64)>,
    seed: u64,
) -> Result<Distilled> {
    if sweep.thresholds.is_empty() || sweep.alphas.is_empty() {
        return Err(Error::invalid("distillation sweep grid is empty"));
    }
    if !(sweep.train_frac > 0.0 && sweep.train_frac < 1.0) {
        return Err(Error::invalid("train_frac must lie in (0, 1)"));
    }
    if states.len() < 2 {
        return Err(Error::invalid("need at least two states to distill"));
    }
    let labels: Vec<Vec<f64>> = states
        .iter()
        .map(|s| teacher_mean(s).into_iter().map(|u| u.clamp(-LABEL_CLIP, LABEL_CLIP)).collect())
        .collect();
    let mut idx: Vec<usize> = (0..states.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(seed, "distill-split", 0)));
    let n_train = ((sweep.train_frac * states.len() as f64).round() as usize).clamp(1, states.len() - 1);
    let pick = |ids: &[usize]| -> Result<Dataset> {
        let (m, n) = (library.input_dim(), labels[0].len());
        let x = DMatrix::from_row_iterator(ids.len(), m, ids.iter().flat_map(|&i| states[i][..m].iter().copied()));
        let y = DMatrix::from_row_iterator(ids.len(), n, ids.iter().flat_map(|&i| labels[i].iter().copied()));
        Dataset::new(x, y)
    };
    if states.iter().any(|s| s.len() < library.input_dim()) {
        return Err(Error::shape(format!("states with {} entries", library.input_dim()), "fewer"));
    }
    let train = pick(&idx[..n_train])?;
    let valid = pick(&idx[n_train..])?;

    let mut cells = Vec::new();
    let mut best: Option<(usize, EnsembleModel)> = None;
    for (ti, &threshold) in sweep.thresholds.iter().enumerate() {
        for (ai, &alpha) in sweep.alphas.iter().enumerate() {
            let cfg = EnsembleConfig {
                n_members: sweep.n_members,
                row_bag_frac: sweep.row_bag_frac,
                lib_bag_frac: sweep.lib_bag_frac,
                threshold,
                alpha,
                max_iter: 20,
                aggregation: Aggregation::Mean,
            };
            let cell_seed = sub_seed(seed, "distill-cell", (ti * sweep.alphas.len() + ai) as u64);
            let model = ensemble_fit(library, &train, &cfg, cell_seed)?.model;
            let cell = SweepCell {
                threshold,
                alpha,
                train_mse: mse(&model, &train)?,
                validation_mse: mse(&model, &valid)?,
                nnz: model.coefficients().nnz(),
            };
            let better = match &best {
                None => true,
                Some((b, _)) => cell.validation_mse < cells.get(*b).map(|c: &SweepCell| c.validation_mse).unwrap_or(f64::INFINITY),
            };
            cells.push(cell);
            if better {
                best = Some((cells.len() - 1, model));
            }
        }
    }
    let (selected, model) = best.expect("grid is non-empty");
    Ok(Distilled { policy: DictionaryPolicy { model, action_bounds }, cells, selected })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub episode: usize,
    pub teacher_return: f64,
    pub student_return: f64,
}

/// Run both controllers on the same `n_episodes` initial conditions.
pub fn compare_policies<E: Environment + ?Sized>(
    env: &mut E,
    teacher: &dyn Controller,
    student: &dyn Controller,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<ComparisonRow>> {
    let t = evaluate(env, teacher, n_episodes, seed)?;
    let s = evaluate(env, student, n_episodes, seed)?;
    Ok(t.into_iter()
        .zip(s)
        .enumerate()
        .map(|(episode, (teacher_return, student_return))| ComparisonRow { episode, teacher_return, student_return })
        .collect())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn write_comparison_csv(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
