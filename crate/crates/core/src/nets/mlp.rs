//! Fully connected tanh networks over row-major batches, with reverse-mode
//! gradients and forward-mode tangents.

use crate::error::{invalid_arg, Result};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Parameters are stored flat, layer by layer, each layer as an `in x out`
/// row-major weight block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub tanh_output: bool,
    pub params: Vec<f64>,
}

/// Post-activation outputs of every layer; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub rows: usize,
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds the input at least")
    }
}

/// `c[m x n] = beta * c + a[m x k] * b[k x n]`, all row-major unless strides
/// say otherwise.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_strides: (isize, isize), b: &[f64], b_strides: (isize, isize), beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover every index addressed through the given
    // shapes and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(dims: &[usize], tanh_output: bool) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(invalid_arg(format!("bad layer dims {dims:?}")));
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            tanh_output,
            params: vec![0.0; Self::param_count(dims)],
        })
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(dims: &[usize], tanh_output: bool, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(dims, tanh_output)?;
        let mut off = 0;
        for w in dims.windows(2) {
            let s = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1] + w[1]] {
                *p = rng.random_range(-s..=s);
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("validated dims")
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_layers());
        let mut off = 0;
        for w in self.dims.windows(2) {
            out.push(off);
            off += w[0] * w[1] + w[1];
        }
        out
    }

    fn is_tanh(&self, layer: usize) -> bool {
        layer + 1 < self.n_layers() || self.tanh_output
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Result<MlpCache> {
        if x.len() != rows * self.input_dim() {
            return Err(invalid_arg(format!(
                "input has {} values, expected {} x {}",
                x.len(),
                rows,
                self.input_dim()
            )));
        }
        let offs = self.offsets();
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(x.to_vec());
        for (l, &off) in offs.iter().enumerate() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + i * o];
            let b = &self.params[off + i * o..off + i * o + o];
            let mut z = Vec::with_capacity(rows * o);
            for _ in 0..rows {
                z.extend_from_slice(b);
            }
            gemm(rows, i, o, &acts[l], (i as isize, 1), w, (o as isize, 1), 1.0, &mut z);
            if self.is_tanh(l) {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(MlpCache { rows, acts })
    }

    /// Accumulates `d(out . d_out)/d(params)` into `grad` and optionally
    /// returns the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64], want_input: bool) -> Option<Vec<f64>> {
        let rows = cache.rows;
        let offs = self.offsets();
        let mut d = d_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            if self.is_tanh(l) {
                for (dv, a) in d.iter_mut().zip(&cache.acts[l + 1]) {
                    *dv *= 1.0 - a * a;
                }
            }
            let off = offs[l];
            let x = &cache.acts[l];
            gemm(i, rows, o, x, (1, i as isize), &d, (o as isize, 1), 1.0, &mut grad[off..off + i * o]);
            let gb = &mut grad[off + i * o..off + i * o + o];
            for r in 0..rows {
                for (g, dv) in gb.iter_mut().zip(&d[r * o..(r + 1) * o]) {
                    *g += dv;
                }
            }
            if l > 0 || want_input {
                let w = &self.params[off..off + i * o];
                let mut dx = vec![0.0; rows * i];
                gemm(rows, o, i, &d, (o as isize, 1), w, (1, o as isize), 0.0, &mut dx);
                d = dx;
            }
        }
        want_input.then_some(d)
    }

    /// Output tangent for a parameter tangent `dp` and optional input tangent.
    pub fn jvp(&self, cache: &MlpCache, dp: &[f64], dx: Option<&[f64]>) -> Vec<f64> {
        let rows = cache.rows;
        let offs = self.offsets();
        let mut t = match dx {
            Some(v) => v.to_vec(),
            None => vec![0.0; rows * self.input_dim()],
        };
        for (l, &off) in offs.iter().enumerate() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + i * o];
            let dw = &dp[off..off + i * o];
            let db = &dp[off + i * o..off + i * o + o];
            let mut dz = Vec::with_capacity(rows * o);
            for _ in 0..rows {
                dz.extend_from_slice(db);
            }
            gemm(rows, i, o, &t, (i as isize, 1), w, (o as isize, 1), 1.0, &mut dz);
            gemm(rows, i, o, &cache.acts[l], (i as isize, 1), dw, (o as isize, 1), 1.0, &mut dz);
            if self.is_tanh(l) {
                for (v, a) in dz.iter_mut().zip(&cache.acts[l + 1]) {
                    *v *= 1.0 - a * a;
                }
            }
            t = dz;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Naive per-row evaluation used as an independent forward oracle.
    fn naive(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..net.n_layers() {
            let (i, o) = (net.dims[l], net.dims[l + 1]);
            let mut z = vec![0.0; o];
            for j in 0..o {
                let mut s = net.params[off + i * o + j];
                for k in 0..i {
                    s += a[k] * net.params[off + k * o + j];
                }
                z[j] = if l + 1 < net.n_layers() || net.tanh_output { s.tanh() } else { s };
            }
            off += i * o + o;
            a = z;
        }
        a
    }

    #[test]
    fn batched_forward_matches_naive() {
        let mut rng = Rng::seed_from_u64(0);
        let net = Mlp::new(&[5, 8, 3], false, &mut rng).unwrap();
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let c = net.forward(&x, 4).unwrap();
        for r in 0..4 {
            let want = naive(&net, &x[r * 5..(r + 1) * 5]);
            for j in 0..3 {
                assert!((c.output()[r * 3 + j] - want[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let net = Mlp::zeros(&[4, 6, 2], false).unwrap();
        let c = net.forward(&[1.0, -2.0, 3.0, 0.5], 1).unwrap();
        assert_eq!(c.output(), &[0.0, 0.0]);
    }

    #[test]
    fn jvp_matches_directional_difference() {
        let mut rng = Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 7, 7, 2], true, &mut rng).unwrap();
        let x = [0.3, -0.8, 0.1, 0.9, 0.2, -0.4];
        let dp: Vec<f64> = (0..net.params.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let c = net.forward(&x, 2).unwrap();
        let t = net.jvp(&c, &dp, None);
        let eps = 1e-6;
        let shifted = |s: f64| {
            let mut n = net.clone();
            n.params.iter_mut().zip(&dp).for_each(|(p, d)| *p += s * d);
            n.forward(&x, 2).unwrap().output().to_vec()
        };
        let (hi, lo) = (shifted(eps), shifted(-eps));
        for k in 0..t.len() {
            assert!((t[k] - (hi[k] - lo[k]) / (2.0 * eps)).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_wrong_input_width() {
        let net = Mlp::zeros(&[4, 2], false).unwrap();
        assert!(net.forward(&[1.0; 5], 1).is_err());
        assert!(Mlp::zeros(&[4], false).is_err());
    }
}
