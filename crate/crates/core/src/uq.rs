//! Variance landscapes: pointwise ensemble variance over a 2-D slice.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};

pub const LANDSCAPE_FORMAT: &str = "dictrl-landscape/1";

/// Evenly spaced points on `[lo, hi]`; a single point sits at the midpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshAxis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl MeshAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![0.5 * (self.lo + self.hi)];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }
}

/// Replace raw component `angle` by `(cos, sin)` in place.
pub(crate) fn embed(raw: &[f64], angle: Option<usize>) -> Vec<f64> {
    match angle {
        None => raw.to_vec(),
        Some(i) => {
            let mut out = raw[..i].to_vec();
            out.push(raw[i].cos());
            out.push(raw[i].sin());
            out.extend_from_slice(&raw[i + 1..]);
            out
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceAxis {
    /// Raw coordinate index.
    pub axis: usize,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub mesh: MeshAxis,
}

/// Two meshed raw coordinates, every other raw coordinate fixed.
///
/// Raw coordinates are the model inputs, except that when `angle` is set
/// that raw coordinate is fed to the model as `(cos, sin)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub mesh: [SliceAxis; 2],
    pub fixed: BTreeMap<usize, f64>,
    #[serde(default)]
    pub angle: Option<usize>,
}

impl LandscapeSpec {
    /// Swing-up convention: raw `(x, θ, ẋ, θ̇, u)`, mesh `(θ, θ̇)` and fix
    /// `x = ẋ = u = 0`.
    pub fn swingup(points: usize) -> Self {
        LandscapeSpec {
            mesh: [
                SliceAxis {
                    axis: 1,
                    name: Some("theta".into()),
                    mesh: MeshAxis { lo: -std::f64::consts::PI, hi: std::f64::consts::PI, points },
                },
                SliceAxis { axis: 3, name: Some("theta_dot".into()), mesh: MeshAxis { lo: -10.0, hi: 10.0, points } },
            ],
            fixed: [(0, 0.0), (2, 0.0), (4, 0.0)].into_iter().collect(),
            angle: Some(1),
        }
    }

    fn raw_dim(&self, model: &EnsembleModel) -> Result<usize> {
        let extra = usize::from(self.angle.is_some());
        model
            .input_dim()
            .checked_sub(extra)
            .ok_or_else(|| Error::invalid("model has too few inputs for the angle embedding"))
    }

    fn validate(&self, model: &EnsembleModel) -> Result<usize> {
        let n = self.raw_dim(model)?;
        let [a, b] = &self.mesh;
        if a.axis == b.axis {
            return Err(Error::invalid("the two meshed axes must differ"));
        }
        for s in &self.mesh {
            if s.mesh.points == 0 || !(s.mesh.lo <= s.mesh.hi) {
                return Err(Error::invalid(format!("mesh axis {} needs points >= 1 and lo <= hi", s.axis)));
            }
        }
        if self.angle.is_some_and(|i| i >= n) {
            return Err(Error::invalid("angle axis out of range"));
        }
        for axis in 0..n {
            let meshed = self.mesh.iter().any(|s| s.axis == axis);
            match (meshed, self.fixed.contains_key(&axis)) {
                (false, false) => return Err(Error::invalid(format!("axis {axis} is neither meshed nor fixed"))),
                (true, true) => return Err(Error::invalid(format!("axis {axis} is both meshed and fixed"))),
                _ => {}
            }
        }
        if let Some(k) = self.fixed.keys().chain(self.mesh.iter().map(|s| &s.axis)).find(|&&k| k >= n) {
            return Err(Error::invalid(format!("axis {k} exceeds the {n} model coordinates")));
        }
        Ok(n)
    }

    /// Model input at mesh node `(v0, v1)`.
    pub fn assemble(&self, n_raw: usize, v0: f64, v1: f64) -> Vec<f64> {
        let mut raw = vec![0.0; n_raw];
        for (k, v) in &self.fixed {
            raw[*k] = *v;
        }
        raw[self.mesh[0].axis] = v0;
        raw[self.mesh[1].axis] = v1;
        embed(&raw, self.angle)
    }
}

/// Grid of variances. `values[i * n1 + j]` belongs to the i-th value of the
/// first axis and the j-th of the second (row-major, second axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    pub spec: LandscapeSpec,
    pub axis0: Vec<f64>,
    pub axis1: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn variance_landscape(model: &EnsembleModel, spec: &LandscapeSpec) -> Result<Landscape> {
    let n = spec.validate(model)?;
    let axis0 = spec.mesh[0].mesh.values();
    let axis1 = spec.mesh[1].mesh.values();
    let mut values = Vec::with_capacity(axis0.len() * axis1.len());
    for &a in &axis0 {
        for &b in &axis1 {
            values.push(model.pointwise_variance(&spec.assemble(n, a, b))?);
        }
    }
    Ok(Landscape { spec: spec.clone(), axis0, axis1, values })
}

#[derive(Serialize)]
struct Header<'a> {
    format: &'static str,
    order: &'static str,
    shape: [usize; 2],
    min: f64,
    max: f64,
    spec: &'a LandscapeSpec,
}

impl Landscape {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis1.len() + j]
    }

    fn axis_name(&self, k: usize) -> String {
        let s = &self.spec.mesh[k];
        s.name.clone().unwrap_or_else(|| format!("x{}", s.axis))
    }

    /// `(axis0, axis1, variance)` rows in row-major order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([self.axis_name(0), self.axis_name(1), "variance".into()])?;
        for (i, a) in self.axis0.iter().enumerate() {
            for (j, b) in self.axis1.iter().enumerate() {
                w.write_record([a.to_string(), b.to_string(), self.get(i, j).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Mesh and slice metadata for the CSV.
    pub fn write_header(&self, path: &Path) -> Result<()> {
        let header = Header {
            format: LANDSCAPE_FORMAT,
            order: "row-major, second axis fastest",
            shape: [self.axis0.len(), self.axis1.len()],
            min: self.values.iter().copied().fold(f64::INFINITY, f64::min),
            max: self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            spec: &self.spec,
        };
        std::fs::write(path, serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::FeatureLibrary;
    use crate::stlridge::CoefficientMatrix;
    use crate::ensemble::Aggregation;
    use nalgebra::DMatrix;

    fn two_member(lib: FeatureLibrary, a: DMatrix<f64>, b: DMatrix<f64>) -> EnsembleModel {
        let members = vec![CoefficientMatrix::dense(a).unwrap(), CoefficientMatrix::dense(b).unwrap()];
        EnsembleModel::from_members(lib, members, Aggregation::Median, Default::default()).unwrap()
    }

    fn plane_spec(points: usize) -> LandscapeSpec {
        LandscapeSpec {
            mesh: [
                SliceAxis { axis: 0, name: None, mesh: MeshAxis { lo: -1.0, hi: 1.0, points } },
                SliceAxis { axis: 1, name: None, mesh: MeshAxis { lo: -2.0, hi: 2.0, points } },
            ],
            fixed: [(2, 0.5)].into_iter().collect(),
            angle: None,
        }
    }

    #[test]
    fn identical_members_give_zero() {
        let lib = FeatureLibrary::polynomial(3, 2, true).unwrap();
        let xi = DMatrix::from_fn(lib.len(), 1, |r, _| r as f64);
        let m = two_member(lib, xi.clone(), xi);
        let l = variance_landscape(&m, &plane_spec(10)).unwrap();
        assert_eq!(l.values.len(), 100);
        assert!(l.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nodes_match_direct_calls() {
        let lib = FeatureLibrary::polynomial(3, 2, true).unwrap();
        let a = DMatrix::from_fn(lib.len(), 2, |r, c| (r + c) as f64 * 0.1);
        let b = DMatrix::from_fn(lib.len(), 2, |r, c| ((r * 7 + c) % 5) as f64 - 2.0);
        let m = two_member(lib, a, b);
        let spec = plane_spec(7);
        let l = variance_landscape(&m, &spec).unwrap();
        assert!(l.values.iter().all(|v| *v >= 0.0));
        for (i, j) in [(0, 0), (3, 5), (6, 6), (2, 1)] {
            let x = [l.axis0[i], l.axis1[j], 0.5];
            assert_eq!(l.get(i, j), m.pointwise_variance(&x).unwrap());
        }
    }

    #[test]
    fn unfixed_axis_rejected() {
        let lib = FeatureLibrary::polynomial(3, 1, true).unwrap();
        let xi = DMatrix::zeros(lib.len(), 1);
        let m = two_member(lib, xi.clone(), xi);
        let mut spec = plane_spec(3);
        spec.fixed.clear();
        assert!(variance_landscape(&m, &spec).is_err());
        let mut spec = plane_spec(3);
        spec.fixed.insert(0, 1.0);
        assert!(variance_landscape(&m, &spec).is_err());
    }

    #[test]
    fn swingup_slice_embeds_angle() {
        let lib = FeatureLibrary::polynomial(6, 1, false).unwrap();
        let a = DMatrix::zeros(6, 1);
        let mut b = DMatrix::zeros(6, 1);
        b[(1, 0)] = 1.0; // cos θ
        let m = two_member(lib, a, b);
        let l = variance_landscape(&m, &LandscapeSpec::swingup(5)).unwrap();
        // variance = cos²θ / 2 regardless of θ̇
        for (i, th) in l.axis0.iter().enumerate() {
            for j in 0..5 {
                assert!((l.get(i, j) - 0.5 * th.cos().powi(2)).abs() < 1e-12);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        l.write_csv(&dir.path().join("v.csv")).unwrap();
        l.write_header(&dir.path().join("v.json")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("v.csv")).unwrap();
        assert!(text.starts_with("theta,theta_dot,variance\n"));
        assert_eq!(text.lines().count(), 26);
    }
}
