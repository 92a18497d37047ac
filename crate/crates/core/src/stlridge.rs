//! Sequentially thresholded ridge regression.
//!
//! Each output column is fit independently: a ridge solve over the active
//! terms, followed by deactivation of every active coefficient whose
//! magnitude is below the threshold, repeated until the active set stops
//! changing. Solves go through the normal equations, so a fit only touches
//! the data once to form `ΘᵀΘ` and `ΘᵀY`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::library::FeatureLibrary;

/// Coefficients `Ξ` (terms × outputs) plus the mask of terms that were
/// available to the fit. Masked-out rows are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrix {
    values: DMatrix<f64>,
    mask: Vec<bool>,
}

impl CoefficientMatrix {
    pub fn new(values: DMatrix<f64>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != values.nrows() {
            return Err(Error::shape(values.nrows(), mask.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        for (r, &keep) in mask.iter().enumerate() {
            if !keep && values.row(r).iter().any(|&v| v != 0.0) {
                return Err(Error::invalid(format!("masked row {r} is not zero")));
            }
        }
        Ok(CoefficientMatrix { values, mask })
    }

    /// Unmasked matrix.
    pub fn dense(values: DMatrix<f64>) -> Result<Self> {
        let mask = vec![true; values.nrows()];
        Self::new(values, mask)
    }

    pub fn zeros(n_terms: usize, n_outputs: usize) -> Self {
        CoefficientMatrix {
            values: DMatrix::zeros(n_terms, n_outputs),
            mask: vec![true; n_terms],
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_terms(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.values.ncols()
    }

    /// Number of nonzero coefficients.
    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    /// `Θ(x)·Ξ` at one point.
    pub fn predict(&self, library: &FeatureLibrary, x: &[f64]) -> Result<Vec<f64>> {
        if library.len() != self.n_terms() {
            return Err(Error::shape(
                format!("{} library terms", self.n_terms()),
                library.len(),
            ));
        }
        let theta = library.evaluate_point(x)?;
        Ok((0..self.n_outputs())
            .map(|j| {
                theta
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t * self.values[(i, j)])
                    .sum()
            })
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientRepr {
    rows: usize,
    cols: usize,
    /// Row-major.
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl Serialize for CoefficientMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (rows, cols) = self.values.shape();
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            values.extend(self.values.row(r).iter());
        }
        CoefficientRepr {
            rows,
            cols,
            values,
            mask: self.mask.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefficientMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CoefficientRepr::deserialize(d)?;
        if repr.values.len() != repr.rows * repr.cols {
            return Err(serde::de::Error::custom("coefficient array length mismatch"));
        }
        let values = DMatrix::from_row_slice(repr.rows, repr.cols, &repr.values);
        CoefficientMatrix::new(values, repr.mask).map_err(serde::de::Error::custom)
    }
}

/// Per-fit bookkeeping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitDiagnostics {
    /// Ridge solves performed for the slowest output column.
    pub iterations: usize,
    /// Some active block was singular and solved by pseudo-inverse.
    pub rank_deficient: bool,
    /// Every column reached a fixed active set before `max_iter`.
    pub converged: bool,
    /// Active-set size after each thresholding pass, per output column.
    pub active_counts: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct SparseFit {
    pub coefficients: CoefficientMatrix,
    pub diagnostics: FitDiagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StlRidge {
    pub threshold: f64,
    pub alpha: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_max_iter() -> usize {
    20
}

impl StlRidge {
    pub fn new(threshold: f64, alpha: f64) -> Self {
        StlRidge {
            threshold,
            alpha,
            max_iter: default_max_iter(),
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::invalid("threshold must be finite and nonnegative"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be finite and nonnegative"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }

    /// Fit `Y ≈ Θ·Ξ` over the full library.
    pub fn fit(&self, features: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<SparseFit> {
        let mask = vec![true; features.ncols()];
        self.fit_masked(features, targets, &mask)
    }

    /// Fit using only the terms where `mask` is true.
    pub fn fit_masked(
        &self,
        features: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        mask: &[bool],
    ) -> Result<SparseFit> {
        if features.nrows() == 0 {
            return Err(Error::invalid("no data rows"));
        }
        if features.nrows() != targets.nrows() {
            return Err(Error::shape(
                format!("{} target rows", features.nrows()),
                targets.nrows(),
            ));
        }
        if mask.len() != features.ncols() {
            return Err(Error::shape(features.ncols(), mask.len()));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression data"));
        }
        let gram = features.tr_mul(features);
        let rhs = features.tr_mul(targets);
        self.fit_normal(&gram, &rhs, mask)
    }

    /// Fit from precomputed normal equations `ΘᵀΘ` and `ΘᵀY`.
    pub fn fit_normal(
        &self,
        gram: &DMatrix<f64>,
        rhs: &DMatrix<f64>,
        mask: &[bool],
    ) -> Result<SparseFit> {
        self.validate()?;
        let d = gram.nrows();
        if gram.ncols() != d || rhs.nrows() != d || mask.len() != d {
            return Err(Error::shape(format!("{d}x{d} gram"), format!("{:?}", gram.shape())));
        }
        let n_out = rhs.ncols();
        let mut values = DMatrix::zeros(d, n_out);
        let mut diag = FitDiagnostics {
            converged: true,
            ..Default::default()
        };
        for j in 0..n_out {
            let b = rhs.column(j).into_owned();
            let mut active: Vec<bool> = mask.to_vec();
            let mut coef = vec![0.0; d];
            let mut counts = Vec::new();
            let mut converged = false;
            let mut solves = 0;
            for _ in 0..self.max_iter {
                if !active.iter().any(|&a| a) {
                    coef.iter_mut().for_each(|c| *c = 0.0);
                    converged = true;
                    break;
                }
                coef = self.ridge_solve(gram, &b, &active, &mut diag.rank_deficient);
                solves += 1;
                let next: Vec<bool> = active
                    .iter()
                    .zip(&coef)
                    .map(|(&a, c)| a && c.abs() >= self.threshold)
                    .collect();
                counts.push(next.iter().filter(|&&a| a).count());
                if next == active {
                    converged = true;
                    break;
                }
                active = next;
            }
            if !converged && active.iter().any(|&a| a) {
                // out of iterations: report the solve on the final support
                coef = self.ridge_solve(gram, &b, &active, &mut diag.rank_deficient);
                solves += 1;
            }
            for (i, c) in coef.iter().enumerate() {
                values[(i, j)] = if active[i] { *c } else { 0.0 };
            }
            diag.iterations = diag.iterations.max(solves);
            diag.converged &= converged;
            diag.active_counts.push(counts);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fitted coefficients"));
        }
        Ok(SparseFit {
            coefficients: CoefficientMatrix {
                values,
                mask: mask.to_vec(),
            },
            diagnostics: diag,
        })
    }

    /// Ridge solution restricted to the active terms; zeros elsewhere.
    fn ridge_solve(
        &self,
        gram: &DMatrix<f64>,
        b: &DVector<f64>,
        active: &[bool],
        rank_deficient: &mut bool,
    ) -> Vec<f64> {
        let idx: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
        let k = idx.len();
        let mut g = DMatrix::from_fn(k, k, |r, c| gram[(idx[r], idx[c])]);
        let bb = DVector::from_fn(k, |r, _| b[idx[r]]);
        for i in 0..k {
            g[(i, i)] += self.alpha;
        }
        let sol = if self.alpha > 0.0 {
            match g.clone().cholesky() {
                Some(ch) => ch.solve(&bb),
                None => pinv_solve(g, &bb, rank_deficient),
            }
        } else {
            pinv_solve(g, &bb, rank_deficient)
        };
        let mut out = vec![0.0; active.len()];
        for (r, &i) in idx.iter().enumerate() {
            out[i] = sol[r];
        }
        out
    }
}

/// Minimum-norm solution of a symmetric PSD system.
fn pinv_solve(g: DMatrix<f64>, b: &DVector<f64>, rank_deficient: &mut bool) -> DVector<f64> {
    let k = g.nrows();
    let svd = g.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (k as f64) * f64::EPSILON * 4.0;
    if svd.singular_values.iter().any(|&s| s <= tol) {
        *rank_deficient = true;
    }
    if smax == 0.0 {
        return DVector::zeros(k);
    }
    svd.solve(b, tol).unwrap_or_else(|_| DVector::zeros(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::FeatureLibrary;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn column(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn recovers_linear_slope_after_threshold() {
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let lib = FeatureLibrary::polynomial(1, 2, true).unwrap();
        let theta = lib.evaluate(&column(&xs)).unwrap();
        let y = column(&xs.map(|x| 2.0 * x));
        let fit = StlRidge::new(0.5, 0.0).fit(&theta, &y).unwrap();
        let c = fit.coefficients.values();
        assert_eq!(c[(0, 0)], 0.0);
        assert_abs_diff_eq!(c[(1, 0)], 2.0, epsilon = 1e-12);
        assert_eq!(c[(2, 0)], 0.0);
        assert!(!fit.diagnostics.rank_deficient);
        // predict at 3
        let p = fit.coefficients.predict(&lib, &[3.0]).unwrap();
        assert_abs_diff_eq!(p[0], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_targets_give_zero() {
        let lib = FeatureLibrary::polynomial(2, 2, true).unwrap();
        let x = DMatrix::from_fn(10, 2, |r, c| (r * 3 + c) as f64 * 0.1);
        let theta = lib.evaluate(&x).unwrap();
        let fit = StlRidge::new(0.1, 0.0).fit(&theta, &DMatrix::zeros(10, 2)).unwrap();
        assert!(fit.coefficients.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cubic_support_recovery() {
        let xs: Vec<f64> = (0..50).map(|i| -2.0 + 4.0 * i as f64 / 49.0).collect();
        let lib = FeatureLibrary::polynomial(1, 3, true).unwrap();
        let theta = lib.evaluate(&column(&xs)).unwrap();
        let y = column(&xs.iter().map(|x| x - 0.1 * x * x * x).collect::<Vec<_>>());
        let fit = StlRidge::new(0.05, 1e-8).fit(&theta, &y).unwrap();
        let c = fit.coefficients.values();
        assert_eq!(c[(0, 0)], 0.0);
        assert_eq!(c[(2, 0)], 0.0);
        assert_abs_diff_eq!(c[(1, 0)], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(c[(3, 0)], -0.1, epsilon = 1e-6);
    }

    #[test]
    fn rank_deficient_is_flagged_not_fatal() {
        // duplicated column
        let theta = DMatrix::from_fn(8, 2, |r, _| r as f64 + 1.0);
        let y = DMatrix::from_fn(8, 1, |r, _| 2.0 * (r as f64 + 1.0));
        let fit = StlRidge::new(0.0, 0.0).fit(&theta, &y).unwrap();
        assert!(fit.diagnostics.rank_deficient);
        let c = fit.coefficients.values();
        // minimum-norm split of the slope
        assert_abs_diff_eq!(c[(0, 0)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c[(1, 0)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn masked_terms_stay_zero() {
        let lib = FeatureLibrary::polynomial(1, 2, true).unwrap();
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let theta = lib.evaluate(&column(&xs)).unwrap();
        let y = column(&xs.iter().map(|x| 1.0 + x * x).collect::<Vec<_>>());
        let fit = StlRidge::new(0.0, 0.0)
            .fit_masked(&theta, &y, &[true, false, true])
            .unwrap();
        assert_eq!(fit.coefficients.values()[(1, 0)], 0.0);
        assert_eq!(fit.coefficients.mask(), &[true, false, true]);
    }

    #[test]
    fn rejects_bad_input() {
        let theta = DMatrix::from_element(3, 2, 1.0);
        assert!(StlRidge::new(-1.0, 0.0).fit(&theta, &DMatrix::zeros(3, 1)).is_err());
        assert!(StlRidge::new(0.1, 0.0).fit(&theta, &DMatrix::zeros(2, 1)).is_err());
        let mut bad = theta.clone();
        bad[(0, 0)] = f64::INFINITY;
        assert!(StlRidge::new(0.1, 0.0).fit(&bad, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn serde_is_row_major() {
        let m = CoefficientMatrix::dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 0.1]))
            .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"values\":[1.0,2.0,3.0,0.1]"), "{s}");
        let back: CoefficientMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    fn random_problem(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let theta = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        (theta, y)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn active_set_shrinks_and_settles(seed in 0u64..1000, thr in 0.01f64..0.6, d in 2usize..10) {
            let (theta, y) = random_problem(seed, 40, d);
            let fit = StlRidge::new(thr, 1e-6).with_max_iter(50).fit(&theta, &y).unwrap();
            prop_assert!(fit.diagnostics.converged);
            prop_assert!(fit.diagnostics.iterations <= d);
            for counts in &fit.diagnostics.active_counts {
                prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]));
            }
            // surviving coefficients respect the threshold
            for v in fit.coefficients.values().iter() {
                prop_assert!(*v == 0.0 || v.abs() >= thr);
            }
        }

        #[test]
        fn zero_threshold_is_least_squares(seed in 0u64..1000, d in 1usize..8) {
            let (theta, y) = random_problem(seed, 30, d);
            let fit = StlRidge::new(0.0, 0.0).fit(&theta, &y).unwrap();
            // independent route: QR least squares
            let qr = theta.clone().qr();
            let rhs = qr.q().transpose() * &y;
            let ols = qr.r().solve_upper_triangular(&rhs).unwrap();
            let r_fit = (&y - &theta * fit.coefficients.values()).norm();
            let r_ols = (&y - &theta * &ols).norm();
            prop_assert!((r_fit - r_ols).abs() <= 1e-10 * (1.0 + r_ols));
        }
    }
}
