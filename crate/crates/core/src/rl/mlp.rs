use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network: tanh hidden layers, linear output.
///
/// All weights live in one flat vector so optimizers and gradient clipping
/// can treat the network as a plain parameter slice. Layer `l` stores its
/// `out × in` weight matrix row-major, followed by its `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations kept from a batched forward pass for backprop.
pub struct MlpCache {
    /// `acts[0]` is the input; `acts[l]` the post-tanh output of layer `l`;
    /// the last entry is the linear output.
    acts: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.acts.last().expect("non-empty cache").view()
    }
}

fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> DMatrix<f64> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::from_fn(big, small, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    q * gain
}

impl Mlp {
    /// Orthogonal init with gain √2 on hidden layers and `output_gain` on
    /// the last layer; zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let n_layers = sizes.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == n_layers { output_gain } else { 2f64.sqrt() };
            let w = orthogonal(fan_out, fan_in, gain, rng);
            let off = net.offsets[l];
            for r in 0..fan_out {
                for c in 0..fan_in {
                    net.params[off + r * fan_in + c] = w[(r, c)];
                }
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("network needs >= 2 non-empty layers"));
        }
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut total = 0;
        for w in sizes.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        Ok(Mlp { sizes: sizes.to_vec(), params: vec![0.0; total], offsets })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        ArrayView2::from_shape((o, i), &self.params[off..off + o * i]).unwrap()
    }

    fn bias(&self, l: usize) -> &[f64] {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l] + o * i;
        &self.params[off..off + o]
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        let mut cur: Vec<f64> = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.n_layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let w = &self.params[off..off + o * i];
            let b = &self.params[off + o * i..off + o * i + o];
            next.clear();
            for r in 0..o {
                let row = &w[r * i..(r + 1) * i];
                let z = b[r] + row.iter().zip(&cur).map(|(a, c)| a * c).sum::<f64>();
                next.push(z);
            }
            if l + 1 < self.n_layers() {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut cur, &mut next);
        }
        out.copy_from_slice(&cur);
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> MlpCache {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_owned());
        for l in 0..self.n_layers() {
            let prev = acts.last().unwrap();
            let mut z = Array2::from_shape_fn((prev.nrows(), self.sizes[l + 1]), |(_, c)| self.bias(l)[c]);
            general_mat_mul(1.0, prev, &self.weight(l).t(), 1.0, &mut z);
            if l + 1 < self.n_layers() {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        MlpCache { acts }
    }

    /// Accumulate `∂L/∂params` into `grad` given `∂L/∂output` for the batch
    /// stored in `cache`.
    pub fn backward(&self, cache: &MlpCache, d_out: ArrayView2<'_, f64>, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let mut dz = d_out.to_owned();
        for l in (0..self.n_layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let input = &cache.acts[l];
            {
                let mut gw = ArrayViewMut2::from_shape((o, i), &mut grad[off..off + o * i]).unwrap();
                general_mat_mul(1.0, &dz.t(), input, 1.0, &mut gw);
            }
            for (g, s) in grad[off + o * i..off + o * i + o].iter_mut().zip(dz.sum_axis(Axis(0))) {
                *g += s;
            }
            if l > 0 {
                let mut da = Array2::zeros((dz.nrows(), i));
                general_mat_mul(1.0, &dz, &self.weight(l), 0.0, &mut da);
                da.zip_mut_with(input, |d, a| *d *= 1.0 - a * a);
                dz = da;
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    /// Row-major `rows × cols`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpDoc {
    activation: String,
    layers: Vec<LayerDoc>,
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let layers = (0..self.n_layers())
            .map(|l| LayerDoc {
                rows: self.sizes[l + 1],
                cols: self.sizes[l],
                weights: self.weight(l).iter().copied().collect(),
                bias: self.bias(l).to_vec(),
            })
            .collect();
        MlpDoc { activation: "tanh".into(), layers }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = MlpDoc::deserialize(d)?;
        if doc.activation != "tanh" {
            return Err(D::Error::custom(format!("unsupported activation {}", doc.activation)));
        }
        let Some(first) = doc.layers.first() else {
            return Err(D::Error::custom("network has no layers"));
        };
        let mut sizes = vec![first.cols];
        for (k, layer) in doc.layers.iter().enumerate() {
            if layer.cols != *sizes.last().unwrap()
                || layer.weights.len() != layer.rows * layer.cols
                || layer.bias.len() != layer.rows
            {
                return Err(D::Error::custom(format!("layer {k} has inconsistent shape")));
            }
            sizes.push(layer.rows);
        }
        let mut net = Mlp::zeros(&sizes).map_err(D::Error::custom)?;
        let params = doc.layers.into_iter().flat_map(|l| l.weights.into_iter().chain(l.bias)).collect::<Vec<_>>();
        if params.iter().any(|v| !v.is_finite()) {
            return Err(D::Error::custom("non-finite network weight"));
        }
        net.params = params;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_forward() {
        // 1-2-1: h = tanh(w x + b), y = v·h + c
        let mut net = Mlp::zeros(&[1, 2, 1]).unwrap();
        net.params_mut().copy_from_slice(&[0.5, -1.0, 0.1, 0.2, 2.0, 3.0, -0.4]);
        let x = 0.7;
        let h = [(0.5 * x + 0.1f64).tanh(), (-1.0 * x + 0.2f64).tanh()];
        let y = 2.0 * h[0] + 3.0 * h[1] - 0.4;
        let mut out = [0.0];
        net.forward(&[x], &mut out);
        assert!((out[0] - y).abs() < 1e-15);
        let cache = net.forward_batch(Array2::from_elem((1, 1), x).view());
        assert!((cache.output()[(0, 0)] - y).abs() < 1e-15);
    }

    #[test]
    fn zero_output_layer_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 8, 8, 2], 0.0, &mut rng).unwrap();
        let mut out = [1.0; 2];
        net.forward(&[0.3, -2.0, 5.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn orthogonal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[5, 64, 1], 1.0, &mut rng).unwrap();
        let w = net.weight(0);
        // 64×5 with orthonormal columns scaled by √2
        let gram = w.t().dot(&w);
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { 2.0 } else { 0.0 };
                assert!((gram[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[4, 16, 16, 3], 0.5, &mut rng).unwrap();
        let x = Array2::from_shape_fn((7, 4), |(r, c)| ((r * 4 + c) as f64 * 0.37).sin());
        let cache = net.forward_batch(x.view());
        for r in 0..7 {
            let mut out = [0.0; 3];
            net.forward(x.row(r).as_slice().unwrap(), &mut out);
            for c in 0..3 {
                assert!((out[c] - cache.output()[(r, c)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[2, 5, 4, 2], 1.0, &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 2), |(r, c)| (r as f64 - c as f64) * 0.4 + 0.1);
        let wts = Array2::from_shape_fn((3, 2), |(r, c)| 1.0 + r as f64 - 0.5 * c as f64);
        // L = Σ wts ⊙ y
        let loss = |n: &Mlp| (&n.forward_batch(x.view()).output() * &wts).sum();
        let mut grad = vec![0.0; net.n_params()];
        net.backward(&net.forward_batch(x.view()), wts.view(), &mut grad);
        let h = 1e-6;
        for k in 0..net.n_params() {
            let mut p = net.clone();
            p.params[k] += h;
            let up = loss(&p);
            p.params[k] -= 2.0 * h;
            let fd = (up - loss(&p)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 4, 1], 0.01, &mut rng).unwrap();
        let s = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&s).unwrap();
        assert_eq!(net, back);
        let bad = s.replace("\"rows\":4", "\"rows\":5");
        assert!(serde_json::from_str::<Mlp>(&bad).is_err());
    }
}
