//! Fully-connected network with residual skip blocks over a flat parameter
//! vector, with hand-written reverse-mode gradients.
//!
//! ```text
//! h0      = relu(W_in x + b_in)
//! g_{k+1} = h_k + W2_k relu(W1_k h_k + b1_k) + b2_k
//! h_k     = dropout(g_k)             (k >= 1, train mode only)
//! out     = W_out g_K + b_out
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub width: usize,
    pub blocks: usize,
    pub output: usize,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

impl Dense {
    fn end(&self) -> usize {
        self.b + self.n_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl MlpShape {
    fn layers(&self) -> (Dense, Vec<(Dense, Dense)>, Dense) {
        let mut at = 0;
        let mut dense = |n_in: usize, n_out: usize| {
            let d = Dense {
                w: at,
                b: at + n_in * n_out,
                n_in,
                n_out,
            };
            at = d.end();
            d
        };
        let input = dense(self.input, self.width);
        let blocks = (0..self.blocks)
            .map(|_| (dense(self.width, self.width), dense(self.width, self.width)))
            .collect();
        let head = dense(self.width, self.output);
        (input, blocks, head)
    }

    pub fn param_count(&self) -> usize {
        self.layers().2.end()
    }

    /// He-uniform weights for ReLU layers, zero biases. The residual branch
    /// output layers start scaled down so each block begins near identity.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count()];
        let (input, blocks, head) = self.layers();
        let mut fill = |d: Dense, gain: f64, rng: &mut R| {
            let bound = gain * (6.0 / d.n_in as f64).sqrt();
            for w in &mut p[d.w..d.b] {
                *w = rng.random_range(-bound..bound);
            }
        };
        fill(input, 1.0, rng);
        for (w1, w2) in blocks {
            fill(w1, 1.0, rng);
            fill(w2, 0.1, rng);
        }
        fill(head, 0.1, rng);
        p
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub batch: usize,
    x: Vec<f64>,
    pre_input: Vec<f64>,
    /// Inputs to each block, after dropout; `h[blocks]` feeds the head.
    h: Vec<Vec<f64>>,
    /// Branch pre-activations per block.
    a: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers applied to `g_k`, for k = 1..blocks.
    masks: Vec<Option<Vec<f64>>>,
    pub out: Vec<f64>,
}

fn dense_forward(p: &[f64], d: Dense, x: &[f64], batch: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(batch * d.n_out, 0.0);
    let w = &p[d.w..d.b];
    let b = &p[d.b..d.end()];
    for r in 0..batch {
        let xr = &x[r * d.n_in..(r + 1) * d.n_in];
        let or = &mut out[r * d.n_out..(r + 1) * d.n_out];
        for o in 0..d.n_out {
            let wr = &w[o * d.n_in..(o + 1) * d.n_in];
            let mut acc = b[o];
            for i in 0..d.n_in {
                acc += wr[i] * xr[i];
            }
            or[o] = acc;
        }
    }
}

/// Accumulates weight/bias gradients and, if requested, the input gradient.
fn dense_backward(
    p: &[f64],
    d: Dense,
    x: &[f64],
    dout: &[f64],
    batch: usize,
    grad: &mut [f64],
    dx: Option<&mut Vec<f64>>,
) {
    let w = &p[d.w..d.b];
    {
        let (gw, gb) = grad[d.w..d.end()].split_at_mut(d.n_in * d.n_out);
        for r in 0..batch {
            let xr = &x[r * d.n_in..(r + 1) * d.n_in];
            let dr = &dout[r * d.n_out..(r + 1) * d.n_out];
            for o in 0..d.n_out {
                let g = dr[o];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let gwr = &mut gw[o * d.n_in..(o + 1) * d.n_in];
                for i in 0..d.n_in {
                    gwr[i] += g * xr[i];
                }
            }
        }
    }
    if let Some(dx) = dx {
        dx.clear();
        dx.resize(batch * d.n_in, 0.0);
        for r in 0..batch {
            let dr = &dout[r * d.n_out..(r + 1) * d.n_out];
            let dxr = &mut dx[r * d.n_in..(r + 1) * d.n_in];
            for o in 0..d.n_out {
                let g = dr[o];
                if g == 0.0 {
                    continue;
                }
                let wr = &w[o * d.n_in..(o + 1) * d.n_in];
                for i in 0..d.n_in {
                    dxr[i] += g * wr[i];
                }
            }
        }
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Runs the network on a row-major `batch x input` matrix.
///
/// The random source is consulted only in train mode with positive dropout.
pub fn forward<R: Rng + ?Sized>(
    shape: &MlpShape,
    params: &[f64],
    x: &[f64],
    dropout: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardCache> {
    if params.len() != shape.param_count() {
        return Err(Error::DimensionMismatch {
            expected: shape.param_count(),
            actual: params.len(),
        });
    }
    if shape.input == 0 || x.len() % shape.input != 0 {
        return Err(Error::DimensionMismatch {
            expected: shape.input,
            actual: x.len(),
        });
    }
    let batch = x.len() / shape.input;
    let (input, blocks, head) = shape.layers();
    let mut cache = ForwardCache {
        batch,
        x: x.to_vec(),
        ..Default::default()
    };

    dense_forward(params, input, x, batch, &mut cache.pre_input);
    let mut g = cache.pre_input.clone();
    relu_in_place(&mut g);

    let drop = mode == Mode::Train && dropout > 0.0;
    let keep = 1.0 - dropout;
    let mut branch = Vec::new();
    for (k, (w1, w2)) in blocks.iter().enumerate() {
        if k > 0 && drop {
            let mask: Vec<f64> = (0..g.len())
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            for (v, m) in g.iter_mut().zip(&mask) {
                *v *= m;
            }
            cache.masks.push(Some(mask));
        } else {
            cache.masks.push(None);
        }
        let mut a = Vec::new();
        dense_forward(params, *w1, &g, batch, &mut a);
        let mut r = a.clone();
        relu_in_place(&mut r);
        dense_forward(params, *w2, &r, batch, &mut branch);
        let next: Vec<f64> = g.iter().zip(&branch).map(|(h, b)| h + b).collect();
        cache.h.push(std::mem::replace(&mut g, next));
        cache.a.push(a);
    }
    cache.h.push(g);
    let last = cache.h.last().expect("at least the head input");
    let mut out = Vec::new();
    dense_forward(params, head, last, batch, &mut out);
    cache.out = out;
    Ok(cache)
}

/// Gradient of a scalar loss with respect to every parameter, given the
/// loss gradient `dout` with respect to the network outputs.
pub fn backward(shape: &MlpShape, params: &[f64], cache: &ForwardCache, dout: &[f64]) -> Vec<f64> {
    let (input, blocks, head) = shape.layers();
    let batch = cache.batch;
    let mut grad = vec![0.0; params.len()];

    let mut dg = Vec::new();
    dense_backward(params, head, &cache.h[shape.blocks], dout, batch, &mut grad, Some(&mut dg));

    let mut dr = Vec::new();
    let mut dh_branch = Vec::new();
    for k in (0..shape.blocks).rev() {
        let (w1, w2) = blocks[k];
        let a = &cache.a[k];
        let r: Vec<f64> = a.iter().map(|v| v.max(0.0)).collect();
        dense_backward(params, w2, &r, &dg, batch, &mut grad, Some(&mut dr));
        for (d, av) in dr.iter_mut().zip(a) {
            if *av <= 0.0 {
                *d = 0.0;
            }
        }
        dense_backward(params, w1, &cache.h[k], &dr, batch, &mut grad, Some(&mut dh_branch));
        for (d, b) in dg.iter_mut().zip(&dh_branch) {
            *d += b;
        }
        if let Some(mask) = &cache.masks[k] {
            for (d, m) in dg.iter_mut().zip(mask) {
                *d *= m;
            }
        }
    }
    for (d, pre) in dg.iter_mut().zip(&cache.pre_input) {
        if *pre <= 0.0 {
            *d = 0.0;
        }
    }
    dense_backward(params, input, &cache.x, &dg, batch, &mut grad, None);
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_output() {
        let shape = MlpShape {
            input: 3,
            width: 4,
            blocks: 2,
            output: 5,
        };
        let p = vec![0.0; shape.param_count()];
        let c = forward(&shape, &p, &[1.0, -2.0, 0.5], 0.3, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(c.out, vec![0.0; 5]);
    }

    #[test]
    fn one_block_by_hand() {
        // input 1 -> width 1 -> one block -> output 1
        let shape = MlpShape {
            input: 1,
            width: 1,
            blocks: 1,
            output: 1,
        };
        // [w_in, b_in, w1, b1, w2, b2, w_out, b_out]
        let p = vec![2.0, 0.5, 3.0, -1.0, 0.25, 0.1, 1.5, -0.2];
        let x = 1.5;
        let h0 = (2.0f64 * x + 0.5).max(0.0);
        let branch = 0.25 * (3.0 * h0 - 1.0).max(0.0) + 0.1;
        let expected = 1.5 * (h0 + branch) - 0.2;
        let c = forward(&shape, &p, &[x], 0.0, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((c.out[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let shape = MlpShape {
            input: 3,
            width: 4,
            blocks: 1,
            output: 2,
        };
        let p = vec![0.0; shape.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(forward(&shape, &p, &[1.0, 2.0], 0.0, Mode::Eval, &mut rng).is_err());
        assert!(forward(&shape, &p[1..], &[1.0, 2.0, 3.0], 0.0, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn linear_probe_gradient_matches_finite_differences() {
        let shape = MlpShape {
            input: 3,
            width: 5,
            blocks: 2,
            output: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = shape.init(&mut rng);
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe = [0.7, -1.3];
        let loss = |p: &[f64]| {
            let c = forward(&shape, p, &x, 0.4, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            c.out.chunks(2).map(|o| o[0] * probe[0] + o[1] * probe[1]).sum::<f64>()
        };
        let c = forward(&shape, &p, &x, 0.4, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let dout: Vec<f64> = (0..c.batch).flat_map(|_| probe).collect();
        let g = backward(&shape, &p, &c, &dout);
        let h = 1e-5;
        for i in 0..p.len() {
            let mut hi = p.clone();
            hi[i] += h;
            let mut lo = p.clone();
            lo[i] -= h;
            let fd = (loss(&hi) - loss(&lo)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }
}
