//! Slow reference implementations.
//!
//! Each function here recomputes a production path the obvious way:
//! materialized maps, explicit padding, explicit sequence copies and
//! brute-force searches. They share no kernel code with the paths they
//! check beyond the basic tensor and layer types.

use crate::attention::{naive_attention, rope_apply, AttnConfig, BlockSpec};
use crate::error::{contract_err, Result};
use crate::evalproto::{BinaryMask, Click, Polarity};
use crate::ssm::{SsmDiscrete, SsmParams};
use crate::tensor::{Scalar, Tensor};
use crate::window::{AttentionWeights, GridTokens, PadToken};

/// Per-block loop: naive attention on each block's slice on its own.
pub fn per_block_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    spec: &BlockSpec,
    cfg: &AttnConfig,
) -> Result<Tensor<T>> {
    let slice = |t: &Tensor<T>, r: std::ops::Range<usize>| {
        let c = t.shape()[1];
        Tensor::new(&[r.len(), c], t.data()[r.start * c..r.end * c].to_vec())
    };
    let d_v = v.shape()[1];
    let mut out = Vec::with_capacity(q.shape()[0] * d_v);
    for r in spec.ranges() {
        let o = naive_attention(&slice(q, r.clone())?, &slice(k, r.clone())?, &slice(v, r)?, cfg, None)?;
        out.extend_from_slice(o.data());
    }
    Tensor::new(&[q.shape()[0], d_v], out)
}

/// Windowed attention with the padding built explicitly.
///
/// The grid is embedded in a padded grid filled with copies of the pad
/// token (`S − Sx` columns left, `S − Sy` rows top, right/bottom up to a
/// multiple of `S`). Every padded row goes through the QKV projection,
/// each `S × S` window is attended on its own with the naive kernel, the
/// result is cropped and projected. `shift = None` means plain windows.
pub fn materialized_window_attention<T: Scalar>(
    grid: &GridTokens<T>,
    win: usize,
    shift: Option<(usize, usize)>,
    weights: &AttentionWeights<T>,
    pad: Option<&PadToken<T>>,
    cfg: &AttnConfig,
) -> Result<GridTokens<T>> {
    let (h, w, c) = (grid.h(), grid.w(), grid.channels());
    if win == 0 || h % win != 0 || w % win != 0 {
        return contract_err(format!("window {win} does not divide {h}x{w}"));
    }
    let (left, top) = match shift {
        Some((sx, sy)) => (win - sx, win - sy),
        None => (0, 0),
    };
    let ph = (h + top).div_ceil(win) * win;
    let pw = (w + left).div_ceil(win) * win;
    let fill = match pad {
        Some(p) => p.p.data().to_vec(),
        None if ph == h && pw == w => vec![T::zero(); c],
        None => return contract_err("padded windows need a pad token"),
    };
    let mut padded = Vec::with_capacity(ph * pw * c);
    for y in 0..ph {
        for x in 0..pw {
            if y >= top && y < top + h && x >= left && x < left + w {
                padded.extend_from_slice(grid.token(y - top, x - left));
            } else {
                padded.extend_from_slice(&fill);
            }
        }
    }
    let qkv = weights.qkv.forward(&Tensor::new(&[ph * pw, c], padded)?)?;
    let dh = c / weights.heads;
    let head_cfg = weights.head_config(cfg);
    let mut attn = vec![T::zero(); ph * pw * c];
    for wy in 0..ph / win {
        for wx in 0..pw / win {
            let cells: Vec<(usize, usize)> = (0..win * win)
                .map(|i| (wy * win + i / win, wx * win + i % win))
                .collect();
            let positions: Vec<(i64, i64)> = cells.iter().map(|&(y, x)| (x as i64, y as i64)).collect();
            for head in 0..weights.heads {
                let take = |off: usize| {
                    let mut t = Vec::with_capacity(cells.len() * dh);
                    for &(y, x) in &cells {
                        let row = &qkv.data()[(y * pw + x) * 3 * c..][..3 * c];
                        t.extend_from_slice(&row[off + head * dh..][..dh]);
                    }
                    Tensor::new(&[cells.len(), dh], t)
                };
                let (mut q, mut k, v) = (take(0)?, take(c)?, take(2 * c)?);
                if weights.rope {
                    q = rope_apply(&q, &positions)?;
                    k = rope_apply(&k, &positions)?;
                }
                let o = naive_attention(&q, &k, &v, &head_cfg, None)?;
                for (i, &(y, x)) in cells.iter().enumerate() {
                    attn[(y * pw + x) * c + head * dh..][..dh].copy_from_slice(o.row(i));
                }
            }
        }
    }
    let mut cropped = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            cropped.extend_from_slice(&attn[((y + top) * pw + x + left) * c..][..c]);
        }
    }
    let out = weights.proj.forward(&Tensor::new(&[h * w, c], cropped)?)?;
    GridTokens::from_rows(h, w, out)
}

/// [`materialized_window_attention`] run on each scale separately.
pub fn per_scale_window_attention<T: Scalar>(
    grids: &[GridTokens<T>],
    win: usize,
    shift: Option<(usize, usize)>,
    weights: &AttentionWeights<T>,
    pad: Option<&PadToken<T>>,
    cfg: &AttnConfig,
) -> Result<Vec<GridTokens<T>>> {
    grids
        .iter()
        .map(|g| materialized_window_attention(g, win, shift, weights, pad, cfg))
        .collect()
}

/// Continuous → discrete by zero-order hold, computed with plain `exp`.
pub fn discretize<T: Scalar>(p: &SsmParams<T>) -> SsmDiscrete<T> {
    let (ch, n) = (p.channels(), p.state_dim());
    let mut a_bar = Vec::with_capacity(ch * n);
    let mut b_bar = Vec::with_capacity(ch * n);
    for i in 0..ch * n {
        let a = p.a.data()[i].as_f64();
        let dt = p.delta.data()[i / n].as_f64();
        a_bar.push(T::from_f64((dt * a).exp()));
        b_bar.push(T::from_f64(((dt * a).exp() - 1.0) / a * p.b.data()[i].as_f64()));
    }
    SsmDiscrete {
        a_bar: Tensor::new(&[ch, n], a_bar).expect("shape"),
        b_bar: Tensor::new(&[ch, n], b_bar).expect("shape"),
        c_bar: p.c.clone(),
    }
}

/// Direct recurrence over an `[L, C]` sequence.
pub fn recurrence<T: Scalar>(d: &SsmDiscrete<T>, x: &Tensor<T>) -> Tensor<T> {
    let (l, ch) = (x.shape()[0], x.shape()[1]);
    let n = d.a_bar.shape()[1];
    let mut y = vec![T::zero(); l * ch];
    for c in 0..ch {
        let mut h = vec![T::zero(); n];
        for t in 0..l {
            let xt = x.data()[t * ch + c];
            let mut acc = T::zero();
            for j in 0..n {
                let i = c * n + j;
                h[j] = d.a_bar.data()[i] * h[j] + d.b_bar.data()[i] * xt;
                acc += d.c_bar.data()[i] * h[j];
            }
            y[t * ch + c] = acc;
        }
    }
    Tensor::new(&[l, ch], y).expect("shape")
}

/// Builds `[T; T; T]`, scans it, and sums the three output segments.
pub fn explicit_cycle_scan<T: Scalar>(tokens: &Tensor<T>, d: &SsmDiscrete<T>) -> Tensor<T> {
    let (l, ch) = (tokens.shape()[0], tokens.shape()[1]);
    let tripled: Vec<T> = tokens.data().iter().chain(tokens.data()).chain(tokens.data()).copied().collect();
    let y = recurrence(d, &Tensor::new(&[3 * l, ch], tripled).expect("shape"));
    let seg = l * ch;
    Tensor::from_fn(&[l, ch], |i| y.data()[i] + y.data()[seg + i] + y.data()[2 * seg + i]).expect("shape")
}

/// Concatenates the scales, runs [`explicit_cycle_scan`], splits back.
pub fn explicit_multi_cycle_scan<T: Scalar>(scales: &[Tensor<T>], d: &SsmDiscrete<T>) -> Vec<Tensor<T>> {
    let ch = scales[0].shape()[1];
    let all: Vec<T> = scales.iter().flat_map(|s| s.data().iter().copied()).collect();
    let total = all.len() / ch;
    let y = explicit_cycle_scan(&Tensor::new(&[total, ch], all).expect("shape"), d);
    let mut off = 0;
    scales
        .iter()
        .map(|s| {
            let n = s.len();
            let t = Tensor::new(s.shape(), y.data()[off..off + n].to_vec()).expect("shape");
            off += n;
            t
        })
        .collect()
}

/// Next click by exhaustive search: each error pixel's squared distance to
/// every pixel outside its region (the ring around the image included).
pub fn brute_force_click(pred: &BinaryMask, gt: &BinaryMask) -> Option<Click> {
    let (h, w) = (gt.h() as i64, gt.w() as i64);
    let region = |want_gt: bool, y: i64, x: i64| {
        y >= 0
            && y < h
            && x >= 0
            && x < w
            && gt.get(y as usize, x as usize) == want_gt
            && pred.get(y as usize, x as usize) != want_gt
    };
    let best = |want_gt: bool| {
        let mut best: Option<(i64, i64, i64)> = None;
        for y in 0..h {
            for x in 0..w {
                if !region(want_gt, y, x) {
                    continue;
                }
                let mut d = i64::MAX;
                for by in -1..=h {
                    for bx in -1..=w {
                        if !region(want_gt, by, bx) {
                            d = d.min((by - y).pow(2) + (bx - x).pow(2));
                        }
                    }
                }
                if best.is_none_or(|(bd, _, _)| d > bd) {
                    best = Some((d, y, x));
                }
            }
        }
        best
    };
    let click = |(_, y, x): (i64, i64, i64), polarity| Click {
        x: x as usize,
        y: y as usize,
        polarity,
    };
    match (best(true), best(false)) {
        (None, None) => None,
        (Some(f), None) => Some(click(f, Polarity::Positive)),
        (None, Some(p)) => Some(click(p, Polarity::Negative)),
        (Some(f), Some(p)) if f.0 >= p.0 => Some(click(f, Polarity::Positive)),
        (_, Some(p)) => Some(click(p, Polarity::Negative)),
    }
}
