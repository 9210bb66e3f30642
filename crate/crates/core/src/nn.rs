//! Small dense layers shared by the window and encoder modules.

use crate::error::{shape_err, Result};
use crate::rng::{trunc_normal_fill, SplitMix64};
use crate::tensor::{lit, matmul, Scalar, Tensor};

/// `y = x·W + b` with `W` stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (_, out) = weight.dims2()?;
        if bias.shape() != [out] {
            return shape_err(format!("bias shape {:?} for {out} outputs", bias.shape()));
        }
        Ok(Self { weight, bias })
    }

    /// Truncated-normal weights (std 0.02), zero bias.
    pub fn init(inp: usize, out: usize, rng: &mut SplitMix64) -> Result<Self> {
        Self::new(
            trunc_normal_fill(&[inp, out], rng, 0.02)?,
            Tensor::zeros(&[out])?,
        )
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = matmul(x, &self.weight)?;
        let b = self.bias.data();
        for row in y.data_mut().chunks_exact_mut(b.len()) {
            for (v, &bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub const NORM_EPS: f64 = 1e-6;

impl<T: Scalar> LayerNorm<T> {
    pub fn init(dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::full(&[dim], T::one())?,
            beta: Tensor::zeros(&[dim])?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c) = x.dims2()?;
        if self.gamma.len() != c {
            return shape_err(format!("layer norm over {} channels, input has {c}", self.gamma.len()));
        }
        let n = lit::<T>(c as f64);
        let eps = lit::<T>(NORM_EPS);
        let mut y = x.clone();
        for row in y.data_mut().chunks_exact_mut(c) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            for ((v, &g), &b) in row.iter_mut().zip(self.gamma.data()).zip(self.beta.data()) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        Ok(y)
    }
}

/// GELU, tanh approximation.
pub fn gelu<T: Scalar>(x: T) -> T {
    let k = lit::<T>((2.0 / std::f64::consts::PI).sqrt());
    let half = lit::<T>(0.5);
    half * x * (T::one() + (k * (x + lit::<T>(0.044715) * x * x * x)).tanh())
}

/// 3×3 convolution with zero padding over an `[h, w, c_in]` grid.
/// Weight layout `[9, c_in, c_out]`, taps in row-major `(dy, dx)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv3x3<T> {
    pub fn init(c_in: usize, c_out: usize, rng: &mut SplitMix64) -> Result<Self> {
        Ok(Self {
            weight: trunc_normal_fill(&[9, c_in, c_out], rng, 0.02)?,
            bias: Tensor::zeros(&[c_out])?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let &[h, w, c_in] = x.shape() else {
            return shape_err(format!("conv input must be [h, w, c], got {:?}", x.shape()));
        };
        let &[9, wc_in, c_out] = self.weight.shape() else {
            return shape_err(format!("conv weight shape {:?}", self.weight.shape()));
        };
        if wc_in != c_in {
            return shape_err(format!("conv expects {wc_in} input channels, got {c_in}"));
        }
        let wd = self.weight.data();
        let xd = x.data();
        let mut out = Vec::with_capacity(h * w * c_out);
        for y in 0..h {
            for xx in 0..w {
                let mut acc = self.bias.data().to_vec();
                for tap in 0..9 {
                    let (sy, sx) = (y + tap / 3, xx + tap % 3);
                    if sy < 1 || sx < 1 || sy > h || sx > w {
                        continue;
                    }
                    let src = &xd[((sy - 1) * w + (sx - 1)) * c_in..][..c_in];
                    for (ci, &a) in src.iter().enumerate() {
                        let wrow = &wd[(tap * c_in + ci) * c_out..][..c_out];
                        for (o, &ww) in acc.iter_mut().zip(wrow) {
                            *o += a * ww;
                        }
                    }
                }
                out.extend_from_slice(&acc);
            }
        }
        Tensor::new(&[h, w, c_out], out)
    }
}

/// Bilinear resize of an `[h, w, c]` grid (half-pixel centers, edge clamp,
/// no antialiasing).
pub fn resize_bilinear<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let &[h, w, c] = x.shape() else {
        return shape_err(format!("resize input must be [h, w, c], got {:?}", x.shape()));
    };
    if out_h == h && out_w == w {
        return Ok(x.clone());
    }
    let coords = |out: usize, inp: usize| -> Vec<(usize, usize, T)> {
        let ratio = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(inp - 1);
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, T::from_f64(src - i0 as f64))
            })
            .collect()
    };
    let ys = coords(out_h, h);
    let xs = coords(out_w, w);
    let d = x.data();
    let px = |yy: usize, xx: usize| &d[(yy * w + xx) * c..][..c];
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let (a, b, cc, dd) = (px(y0, x0), px(y0, x1), px(y1, x0), px(y1, x1));
            for ch in 0..c {
                let top = a[ch] + (b[ch] - a[ch]) * fx;
                let bot = cc[ch] + (dd[ch] - cc[ch]) * fx;
                out.push(top + (bot - top) * fy);
            }
        }
    }
    Tensor::new(&[out_h, out_w, c], out)
}
