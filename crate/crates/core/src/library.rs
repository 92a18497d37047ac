//! Candidate function dictionaries.
//!
//! A [`FeatureLibrary`] is an ordered list of [`Term`]s generated from a
//! serializable [`LibrarySpec`]. Term order is part of the contract since
//! coefficient rows are matched to terms by position:
//!
//! * polynomial blocks are graded: the constant (when enabled) comes first,
//!   then all degree-1 terms, then degree-2, and so on; within a degree the
//!   monomials are in lexicographic order of their input indices
//!   (`x0², x0·x1, x1²`);
//! * trigonometric terms follow the polynomial ones as `sin(x_i), cos(x_i)`
//!   pairs in the order listed in the spec;
//! * a control-affine library is the `f` block over the state followed by,
//!   for each control component `u_j` in turn, the `g` block over the state
//!   multiplied by `u_j`.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial block with optional trigonometric terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolySpec {
    pub degree: u32,
    #[serde(default)]
    pub bias: bool,
    /// Include mixed monomials such as `x0·x1`.
    #[serde(default = "default_true")]
    pub cross: bool,
    /// Input indices that receive a `sin`/`cos` pair.
    #[serde(default)]
    pub trig: Vec<usize>,
}

fn default_true() -> bool {
    true
}

impl PolySpec {
    pub fn new(degree: u32, bias: bool) -> Self {
        PolySpec {
            degree,
            bias,
            cross: true,
            trig: Vec::new(),
        }
    }

    pub fn without_cross(mut self) -> Self {
        self.cross = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LibrarySpec {
    /// Polynomial features over all `n_inputs` inputs.
    Polynomial { n_inputs: usize, poly: PolySpec },
    /// `f(x) + Σ_j g(x)·u_j` over inputs laid out as `(x, u)`.
    ControlAffine {
        state_dim: usize,
        control_dim: usize,
        f: PolySpec,
        g: PolySpec,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trig {
    Sin(usize),
    Cos(usize),
}

/// A product of integer powers of inputs, optionally times one trig factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub trig: Option<Trig>,
}

impl Term {
    fn constant(n: usize) -> Self {
        Term {
            exponents: vec![0; n],
            trig: None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.trig.is_none() && self.exponents.iter().all(|&e| e == 0)
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for (xi, &e) in x.iter().zip(&self.exponents) {
            match e {
                0 => {}
                1 => v *= xi,
                2 => v *= xi * xi,
                _ => v *= xi.powi(e as i32),
            }
        }
        match self.trig {
            Some(Trig::Sin(i)) => v * x[i].sin(),
            Some(Trig::Cos(i)) => v * x[i].cos(),
            None => v,
        }
    }

    /// Human-readable form, e.g. `x0^2 u0`.
    pub fn display(&self, names: &[String]) -> String {
        let mut parts = Vec::new();
        if let Some(t) = self.trig {
            parts.push(match t {
                Trig::Sin(i) => format!("sin({})", names[i]),
                Trig::Cos(i) => format!("cos({})", names[i]),
            });
        }
        for (i, &e) in self.exponents.iter().enumerate() {
            match e {
                0 => {}
                1 => parts.push(names[i].clone()),
                _ => parts.push(format!("{}^{}", names[i], e)),
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join(" ")
        }
    }
}

/// Monomial exponent vectors over `n` inputs, graded then lexicographic.
fn poly_terms(spec: &PolySpec, n: usize, width: usize) -> Vec<Term> {
    let mut terms = Vec::new();
    if spec.bias {
        terms.push(Term::constant(width));
    }
    for deg in 1..=spec.degree {
        if spec.cross {
            // combinations with replacement of input indices, lexicographic
            let mut idx = vec![0usize; deg as usize];
            loop {
                let mut exps = vec![0u32; width];
                for &i in &idx {
                    exps[i] += 1;
                }
                terms.push(Term {
                    exponents: exps,
                    trig: None,
                });
                // advance
                let mut k = idx.len();
                while k > 0 && idx[k - 1] == n - 1 {
                    k -= 1;
                }
                if k == 0 {
                    break;
                }
                idx[k - 1] += 1;
                let v = idx[k - 1];
                for slot in idx.iter_mut().skip(k) {
                    *slot = v;
                }
            }
        } else {
            for i in 0..n {
                let mut exps = vec![0u32; width];
                exps[i] = deg;
                terms.push(Term {
                    exponents: exps,
                    trig: None,
                });
            }
        }
    }
    for &i in &spec.trig {
        for trig in [Trig::Sin(i), Trig::Cos(i)] {
            terms.push(Term {
                exponents: vec![0; width],
                trig: Some(trig),
            });
        }
    }
    terms
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLibrary {
    spec: LibrarySpec,
    terms: Vec<Term>,
    input_dim: usize,
}

impl FeatureLibrary {
    pub fn new(spec: LibrarySpec) -> Result<Self> {
        let (terms, input_dim) = match &spec {
            LibrarySpec::Polynomial { n_inputs, poly } => {
                if *n_inputs == 0 {
                    return Err(Error::invalid("polynomial library needs at least one input"));
                }
                check_trig(&poly.trig, *n_inputs)?;
                (poly_terms(poly, *n_inputs, *n_inputs), *n_inputs)
            }
            LibrarySpec::ControlAffine {
                state_dim,
                control_dim,
                f,
                g,
            } => {
                let (m, l) = (*state_dim, *control_dim);
                if m == 0 || l == 0 {
                    return Err(Error::invalid(
                        "control-affine library needs state and control inputs",
                    ));
                }
                check_trig(&f.trig, m)?;
                check_trig(&g.trig, m)?;
                let width = m + l;
                let mut terms = poly_terms(f, m, width);
                let g_terms = poly_terms(g, m, width);
                for j in 0..l {
                    for t in &g_terms {
                        let mut t = t.clone();
                        t.exponents[m + j] = 1;
                        terms.push(t);
                    }
                }
                (terms, width)
            }
        };
        if terms.is_empty() {
            return Err(Error::invalid("library has no terms"));
        }
        let mut seen = HashSet::new();
        for t in &terms {
            if !seen.insert(t.clone()) {
                return Err(Error::invalid("library contains duplicate terms"));
            }
        }
        Ok(FeatureLibrary {
            spec,
            terms,
            input_dim,
        })
    }

    /// Polynomial library over `n_inputs` with every cross term.
    pub fn polynomial(n_inputs: usize, degree: u32, bias: bool) -> Result<Self> {
        Self::new(LibrarySpec::Polynomial {
            n_inputs,
            poly: PolySpec::new(degree, bias),
        })
    }

    pub fn control_affine(
        state_dim: usize,
        control_dim: usize,
        f: PolySpec,
        g: PolySpec,
    ) -> Result<Self> {
        Self::new(LibrarySpec::ControlAffine {
            state_dim,
            control_dim,
            f,
            g,
        })
    }

    pub fn spec(&self) -> &LibrarySpec {
        &self.spec
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Default input names: `x0..` for plain libraries, `x0.., u0..` for
    /// control-affine ones.
    pub fn input_names(&self) -> Vec<String> {
        match &self.spec {
            LibrarySpec::Polynomial { n_inputs, .. } => {
                (0..*n_inputs).map(|i| format!("x{i}")).collect()
            }
            LibrarySpec::ControlAffine {
                state_dim,
                control_dim,
                ..
            } => (0..*state_dim)
                .map(|i| format!("x{i}"))
                .chain((0..*control_dim).map(|j| format!("u{j}")))
                .collect(),
        }
    }

    pub fn term_names(&self, names: &[String]) -> Vec<String> {
        self.terms.iter().map(|t| t.display(names)).collect()
    }

    /// Evaluate every term at one point, writing into `out`.
    #[inline]
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_dim);
        debug_assert_eq!(out.len(), self.terms.len());
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(x);
        }
    }

    pub fn evaluate_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::shape(self.input_dim, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("library input"));
        }
        let mut out = vec![0.0; self.terms.len()];
        self.evaluate_into(x, &mut out);
        Ok(out)
    }

    /// Feature matrix `Θ(X)` with one row per data point.
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::shape(
                format!("{} columns", self.input_dim),
                format!("{} columns", x.ncols()),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("library input"));
        }
        let d = self.terms.len();
        let mut theta = DMatrix::zeros(x.nrows(), d);
        let mut row = vec![0.0; self.input_dim];
        let mut buf = vec![0.0; d];
        for r in 0..x.nrows() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = x[(r, c)];
            }
            self.evaluate_into(&row, &mut buf);
            for (c, v) in buf.iter().enumerate() {
                theta[(r, c)] = *v;
            }
        }
        Ok(theta)
    }
}

fn check_trig(trig: &[usize], n: usize) -> Result<()> {
    match trig.iter().find(|&&i| i >= n) {
        Some(i) => Err(Error::invalid(format!("trig index {i} out of range for {n} inputs"))),
        None => Ok(()),
    }
}

impl fmt::Display for FeatureLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.input_names();
        write!(f, "[{}]", self.term_names(&names).join(", "))
    }
}
