//! Bootstrap ensembles of sparse dictionary models.
//!
//! Every member is fit with [`StlRidge`] on a row bootstrap (sampling with
//! replacement) and, optionally, a random subset of library terms. The
//! ensemble predicts with the entrywise median or mean of the member
//! coefficients; members whose term was dropped contribute an exact zero to
//! that entry. The spread of the members gives a closed-form pointwise
//! variance `Σ_i Θ(x)·Cov(ξ_i)·Θ(x)ᵀ`, with the sample covariance normalized
//! by `N_e − 1`.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{FeatureLibrary, LibrarySpec};
use crate::seeding::sub_seed;
use crate::stlridge::{CoefficientMatrix, FitDiagnostics, StlRidge};

/// Paired inputs and labels, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::shape(format!("{} label rows", x.nrows()), y.nrows()));
        }
        if x.nrows() == 0 {
            return Err(Error::invalid("dataset is empty"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Dataset { x, y })
    }

    /// Build from row slices.
    pub fn from_rows(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Self> {
        let (Some(x0), Some(y0)) = (x.first(), y.first()) else {
            return Err(Error::invalid("dataset is empty"));
        };
        let (m, n) = (x0.len(), y0.len());
        if x.iter().any(|r| r.len() != m) || y.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged dataset rows"));
        }
        let xm = DMatrix::from_row_iterator(x.len(), m, x.iter().flatten().copied());
        let ym = DMatrix::from_row_iterator(y.len(), n, y.iter().flatten().copied());
        Self::new(xm, ym)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// Rows `idx` as a new dataset.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        let x = DMatrix::from_fn(idx.len(), self.x.ncols(), |r, c| self.x[(idx[r], c)]);
        let y = DMatrix::from_fn(idx.len(), self.y.ncols(), |r, c| self.y[(idx[r], c)]);
        Dataset::new(x, y)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

/// Hyperparameters of an ensemble fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_members")]
    pub n_members: usize,
    /// Bootstrap size as a fraction of the data, in `(0, 1]`.
    #[serde(default = "one")]
    pub row_bag_frac: f64,
    /// Fraction of library terms kept per member, in `(0, 1]`.
    #[serde(default = "one")]
    pub lib_bag_frac: f64,
    pub threshold: f64,
    pub alpha: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn default_members() -> usize {
    20
}
fn one() -> f64 {
    1.0
}
fn default_max_iter() -> usize {
    20
}

impl EnsembleConfig {
    pub fn new(threshold: f64, alpha: f64) -> Self {
        EnsembleConfig {
            n_members: default_members(),
            row_bag_frac: 1.0,
            lib_bag_frac: 1.0,
            threshold,
            alpha,
            max_iter: default_max_iter(),
            aggregation: Aggregation::Median,
        }
    }

    pub fn members(mut self, n: usize) -> Self {
        self.n_members = n;
        self
    }

    pub fn aggregation(mut self, agg: Aggregation) -> Self {
        self.aggregation = agg;
        self
    }

    pub fn bagging(mut self, row_frac: f64, lib_frac: f64) -> Self {
        self.row_bag_frac = row_frac;
        self.lib_bag_frac = lib_frac;
        self
    }

    pub fn optimizer(&self) -> StlRidge {
        StlRidge {
            threshold: self.threshold,
            alpha: self.alpha,
            max_iter: self.max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_members == 0 {
            return Err(Error::invalid("ensemble needs at least one member"));
        }
        for (name, f) in [("row_bag_frac", self.row_bag_frac), ("lib_bag_frac", self.lib_bag_frac)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1]")));
            }
        }
        self.optimizer().validate()
    }
}

/// Metadata recorded alongside a fitted ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMeta {
    pub threshold: f64,
    pub alpha: f64,
    pub row_bag_frac: f64,
    pub lib_bag_frac: f64,
    pub seed: u64,
    #[serde(default)]
    pub rank_deficient_members: usize,
}

/// Metadata of a hand-built model: no thresholding, no bagging.
impl Default for FitMeta {
    fn default() -> Self {
        FitMeta { threshold: 0.0, alpha: 0.0, row_bag_frac: 1.0, lib_bag_frac: 1.0, seed: 0, rank_deficient_members: 0 }
    }
}

pub struct EnsembleModel {
    library: FeatureLibrary,
    members: Vec<CoefficientMatrix>,
    aggregation: Aggregation,
    meta: FitMeta,
    aggregated: CoefficientMatrix,
    /// Per output: member coefficients minus their mean, `d × N_e`.
    centered: OnceLock<Vec<DMatrix<f64>>>,
}

impl Clone for EnsembleModel {
    fn clone(&self) -> Self {
        EnsembleModel {
            library: self.library.clone(),
            members: self.members.clone(),
            aggregation: self.aggregation,
            meta: self.meta.clone(),
            aggregated: self.aggregated.clone(),
            centered: OnceLock::new(),
        }
    }
}

impl std::fmt::Debug for EnsembleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnsembleModel")
            .field("library", &self.library.to_string())
            .field("members", &self.members.len())
            .field("aggregation", &self.aggregation)
            .finish()
    }
}

impl EnsembleModel {
    pub fn from_members(
        library: FeatureLibrary,
        members: Vec<CoefficientMatrix>,
        aggregation: Aggregation,
        meta: FitMeta,
    ) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid("ensemble needs at least one member"))?;
        let n_out = first.n_outputs();
        for m in &members {
            if m.n_terms() != library.len() || m.n_outputs() != n_out {
                return Err(Error::shape(
                    format!("{}x{}", library.len(), n_out),
                    format!("{}x{}", m.n_terms(), m.n_outputs()),
                ));
            }
        }
        let aggregated = aggregate_members(&members, aggregation);
        Ok(EnsembleModel {
            library,
            members,
            aggregation,
            meta,
            aggregated,
            centered: OnceLock::new(),
        })
    }

    /// Single-matrix "ensemble", e.g. a hand-built model.
    pub fn single(library: FeatureLibrary, coefficients: CoefficientMatrix) -> Result<Self> {
        Self::from_members(library, vec![coefficients], Aggregation::Median, FitMeta::default())
    }

    pub fn library(&self) -> &FeatureLibrary {
        &self.library
    }

    pub fn members(&self) -> &[CoefficientMatrix] {
        &self.members
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn n_outputs(&self) -> usize {
        self.aggregated.n_outputs()
    }

    pub fn input_dim(&self) -> usize {
        self.library.input_dim()
    }

    /// Aggregated coefficients `Ξ*`.
    pub fn coefficients(&self) -> &CoefficientMatrix {
        &self.aggregated
    }

    /// Same members, different aggregation rule.
    pub fn with_aggregation(&self, aggregation: Aggregation) -> EnsembleModel {
        EnsembleModel {
            aggregated: aggregate_members(&self.members, aggregation),
            aggregation,
            ..self.clone()
        }
    }

    /// `Θ(x)·Ξ*`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.aggregated.predict(&self.library, x)
    }

    /// Prediction without shape checks, reusing a feature buffer of
    /// `library().len()` entries.
    #[inline]
    pub fn predict_into(&self, x: &[f64], features: &mut [f64], out: &mut [f64]) {
        self.library.evaluate_into(x, features);
        let xi = self.aggregated.values();
        for (j, o) in out.iter_mut().enumerate() {
            let col = xi.column(j);
            *o = features.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
        }
    }

    /// Sample covariance (`N_e − 1` normalization) of the member coefficient
    /// vectors of output `i`.
    pub fn coefficient_covariance(&self, output: usize) -> Result<DMatrix<f64>> {
        if output >= self.n_outputs() {
            return Err(Error::invalid(format!("output {output} out of range")));
        }
        let z = &self.centered()?[output];
        Ok((z * z.transpose()) / (self.members.len() as f64 - 1.0))
    }

    fn centered(&self) -> Result<&Vec<DMatrix<f64>>> {
        let ne = self.members.len();
        if ne < 2 {
            return Err(Error::invalid("variance needs at least two ensemble members"));
        }
        Ok(self.centered.get_or_init(|| {
            let d = self.library.len();
            (0..self.n_outputs())
                .map(|i| {
                    let mut mean = vec![0.0; d];
                    for m in &self.members {
                        for (r, v) in mean.iter_mut().enumerate() {
                            *v += m.values()[(r, i)];
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= ne as f64);
                    DMatrix::from_fn(d, ne, |r, k| self.members[k].values()[(r, i)] - mean[r])
                })
                .collect()
        }))
    }

    /// Total predictive variance `Σ_i Θ(x)·Cov(ξ_i)·Θ(x)ᵀ`.
    ///
    /// Evaluated as `Σ_i ‖Zᵢᵀ Θ(x)ᵀ‖² / (N_e − 1)` with `Zᵢ` the centered
    /// members, which equals the quadratic form (`Cov = Z Zᵀ / (N_e − 1)`)
    /// without its cancellation error.
    pub fn pointwise_variance(&self, x: &[f64]) -> Result<f64> {
        let zs = self.centered()?;
        let theta = self.library.evaluate_point(x)?;
        let mut total = 0.0;
        for z in zs {
            for k in 0..z.ncols() {
                let dev: f64 = z.column(k).iter().zip(&theta).map(|(a, b)| a * b).sum();
                total += dev * dev;
            }
        }
        Ok(total / (self.members.len() as f64 - 1.0))
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            library: self.library.spec().clone(),
            aggregation: self.aggregation,
            fit_meta: self.meta.clone(),
            members: self.members.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: ModelCheckpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("unknown model format `{}`", ckpt.format)));
        }
        let library = FeatureLibrary::new(ckpt.library)?;
        Self::from_members(library, ckpt.members, ckpt.aggregation, ckpt.fit_meta)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "dictrl-ensemble/1";

/// Serialized form of an [`EnsembleModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub format: String,
    pub library: LibrarySpec,
    pub aggregation: Aggregation,
    pub fit_meta: FitMeta,
    pub members: Vec<CoefficientMatrix>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Entrywise median or mean over all members.
pub fn aggregate_members(members: &[CoefficientMatrix], aggregation: Aggregation) -> CoefficientMatrix {
    let (d, n) = (members[0].n_terms(), members[0].n_outputs());
    if members.len() == 1 {
        return CoefficientMatrix::dense(members[0].values().clone()).expect("finite member");
    }
    let mut buf = vec![0.0; members.len()];
    let values = DMatrix::from_fn(d, n, |r, c| {
        for (b, m) in buf.iter_mut().zip(members) {
            *b = m.values()[(r, c)];
        }
        match aggregation {
            Aggregation::Median => median(&mut buf),
            Aggregation::Mean => buf.iter().sum::<f64>() / buf.len() as f64,
        }
    });
    CoefficientMatrix::dense(values).expect("finite members")
}

/// Result of [`ensemble_fit`] with per-member diagnostics.
pub struct EnsembleFit {
    pub model: EnsembleModel,
    pub diagnostics: Vec<FitDiagnostics>,
}

/// Fit an ensemble of sparse models on bootstrap resamples of `data`.
pub fn ensemble_fit(
    library: &FeatureLibrary,
    data: &Dataset,
    config: &EnsembleConfig,
    seed: u64,
) -> Result<EnsembleFit> {
    config.validate()?;
    let theta = library.evaluate(data.x())?;
    let n = data.len();
    let d = library.len();
    let n_rows = (config.row_bag_frac * n as f64).ceil() as usize;
    let n_terms = (config.lib_bag_frac * d as f64).ceil() as usize;
    if n_terms == 0 {
        return Err(Error::invalid("library bagging keeps no terms"));
    }
    let opt = config.optimizer();
    let mut members = Vec::with_capacity(config.n_members);
    let mut diagnostics = Vec::with_capacity(config.n_members);
    let mut counts = vec![0.0f64; n];
    for k in 0..config.n_members {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "ensemble-member", k as u64));
        counts.iter_mut().for_each(|c| *c = 0.0);
        for _ in 0..n_rows {
            counts[rng.random_range(0..n)] += 1.0;
        }
        let mask = if n_terms == d {
            vec![true; d]
        } else {
            let mut m = vec![false; d];
            for i in index::sample(&mut rng, d, n_terms) {
                m[i] = true;
            }
            m
        };
        // weighted normal equations: Θᵀ diag(c) Θ and Θᵀ diag(c) Y
        let mut wtheta = theta.clone();
        let mut wy = data.y().clone();
        for (r, c) in counts.iter().enumerate() {
            let s = c.sqrt();
            wtheta.row_mut(r).scale_mut(s);
            wy.row_mut(r).scale_mut(s);
        }
        let gram = wtheta.tr_mul(&wtheta);
        let rhs = wtheta.tr_mul(&wy);
        let fit = opt.fit_normal(&gram, &rhs, &mask)?;
        members.push(fit.coefficients);
        diagnostics.push(fit.diagnostics);
    }
    let meta = FitMeta {
        threshold: config.threshold,
        alpha: config.alpha,
        row_bag_frac: config.row_bag_frac,
        lib_bag_frac: config.lib_bag_frac,
        seed,
        rank_deficient_members: diagnostics.iter().filter(|d| d.rank_deficient).count(),
    };
    let model = EnsembleModel::from_members(library.clone(), members, config.aggregation, meta)?;
    Ok(EnsembleFit { model, diagnostics })
}

/// Per-output coefficient of determination of `model` on `data`.
pub fn r_squared(model: &EnsembleModel, data: &Dataset) -> Result<Vec<f64>> {
    let theta = model.library().evaluate(data.x())?;
    let pred = &theta * model.coefficients().values();
    Ok((0..data.y().ncols())
        .map(|j| {
            let y = data.y().column(j);
            let mean = y.mean();
            let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
            let ss_res: f64 = y
                .iter()
                .zip(pred.column(j).iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            if ss_tot == 0.0 {
                if ss_res == 0.0 { 1.0 } else { 0.0 }
            } else {
                1.0 - ss_res / ss_tot
            }
        })
        .collect())
}
