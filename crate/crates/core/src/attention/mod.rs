//! Attention kernels.
//!
//! [`naive_attention`] materializes the full `L × L` logit map and is the
//! reference every other path is checked against. [`flash_attention`]
//! streams keys in tiles of `b` rows per query row, carrying a running
//! max, normalizer and normalized output ([`RowState`]), so its scratch is
//! `O(b + d)` regardless of `L`. [`block_diagonal_attention`] runs the same
//! row kernel restricted to each query's own block and never touches
//! cross-block keys.

mod rope;
mod softmax;

use std::ops::Range;

pub use rope::{rope_apply, rope_apply_with_base, ROPE_BASE};
pub use softmax::{online_softmax, stable_softmax, OnlineMode};

pub use crate::scratch::{scratch_report, ScratchReport};

use crate::error::{contract_err, shape_err, Result};
use crate::scratch::{measured, CallScope, External, ScratchBuf};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttnConfig {
    /// Query/key width of one head.
    pub d_head: usize,
    /// Key/value rows per tile in the streaming kernels.
    pub tile: usize,
    /// Logit scale applied to `q·k` before the softmax.
    pub scale: f64,
    /// Worker threads across query rows. Row results do not depend on it.
    pub threads: usize,
}

impl AttnConfig {
    pub fn new(d_head: usize) -> Self {
        Self {
            d_head,
            tile: 64,
            scale: 1.0 / (d_head.max(1) as f64).sqrt(),
            threads: 1,
        }
    }

    pub fn with_tile(mut self, tile: usize) -> Self {
        self.tile = tile;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_head == 0 {
            return contract_err("d_head must be positive");
        }
        if self.tile == 0 {
            return contract_err("tile size must be at least 1");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return contract_err(format!("scale must be positive, got {}", self.scale));
        }
        if self.threads == 0 {
            return contract_err("threads must be at least 1");
        }
        Ok(())
    }
}

/// Ordered block lengths of a packed sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    lens: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockSpec {
    pub fn new(lens: Vec<usize>) -> Result<Self> {
        if lens.is_empty() {
            return contract_err("block spec needs at least one block");
        }
        if lens.contains(&0) {
            return contract_err("block lengths must be positive");
        }
        let mut offsets = Vec::with_capacity(lens.len() + 1);
        offsets.push(0);
        for &l in &lens {
            offsets.push(offsets.last().unwrap() + l);
        }
        Ok(Self { lens, offsets })
    }

    /// `count` blocks of `len` rows each.
    pub fn uniform(len: usize, count: usize) -> Result<Self> {
        Self::new(vec![len; count])
    }

    pub fn lens(&self) -> &[usize] {
        &self.lens
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn num_blocks(&self) -> usize {
        self.lens.len()
    }

    /// Row range of block `i`.
    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }

    /// Range of the block that contains `row`.
    pub fn block_of(&self, row: usize) -> Range<usize> {
        let i = self.offsets.partition_point(|&o| o <= row) - 1;
        self.range(i)
    }

    /// Concatenation of two specs.
    pub fn concat(&self, other: &BlockSpec) -> BlockSpec {
        let mut lens = self.lens.clone();
        lens.extend_from_slice(&other.lens);
        BlockSpec::new(lens).expect("both parts valid")
    }
}

/// Running state of one query row in the streaming kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct RowState<T> {
    /// Max of all logits seen so far.
    pub m: T,
    /// Normalizer `Σ exp(x_j − m)` over the logits seen so far.
    pub d: T,
    /// Output normalized by `d`, i.e. the exact attention output over the
    /// keys seen so far.
    pub o: Vec<T>,
}

impl<T: Scalar> RowState<T> {
    pub fn new(d_v: usize) -> Self {
        Self {
            m: T::neg_infinity(),
            d: T::zero(),
            o: vec![T::zero(); d_v],
        }
    }

    /// Folds one tile of logits and their value rows into the state.
    pub fn update(&mut self, logits: &[T], values: &[&[T]]) {
        let mut w = logits.to_vec();
        fold_tile(&mut self.m, &mut self.d, &mut self.o, &mut w, |j| values[j]);
    }
}

/// The tiled one-pass update.
///
/// ```text
/// m_new = max(m, max_j x_j)
/// d_new = d · exp(m − m_new) + Σ_j exp(x_j − m_new)
/// o_new = o · (d / d_new) · exp(m − m_new) + Σ_j exp(x_j − m_new) / d_new · v_j
/// ```
///
/// `logits` is overwritten with `exp(x_j − m_new)`.
#[inline]
fn fold_tile<'v, T: Scalar>(
    m: &mut T,
    d: &mut T,
    o: &mut [T],
    logits: &mut [T],
    value: impl Fn(usize) -> &'v [T],
) {
    let m_local = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let m_new = m.max(m_local);
    let alpha = (*m - m_new).exp();
    let mut tile_sum = T::zero();
    for x in logits.iter_mut() {
        *x = (*x - m_new).exp();
        tile_sum += *x;
    }
    let d_new = *d * alpha + tile_sum;
    let rescale = *d / d_new * alpha;
    for oc in o.iter_mut() {
        *oc *= rescale;
    }
    for (j, &e) in logits.iter().enumerate() {
        let w = e / d_new;
        for (oc, &vc) in o.iter_mut().zip(value(j)) {
            *oc += w * vc;
        }
    }
    *m = m_new;
    *d = d_new;
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Validates `Q, K, V` and returns `(L, d_v)`.
fn check_qkv<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    cfg: &AttnConfig,
) -> Result<(usize, usize)> {
    cfg.validate()?;
    let (lq, dq) = q.dims2()?;
    let (lk, dk) = k.dims2()?;
    let (lv, dv) = v.dims2()?;
    if lq != lk || lk != lv {
        return shape_err(format!("sequence lengths differ: Q {lq}, K {lk}, V {lv}"));
    }
    if dq != dk {
        return shape_err(format!("Q width {dq} != K width {dk}"));
    }
    if dq != cfg.d_head {
        return shape_err(format!("Q width {dq} != configured d_head {}", cfg.d_head));
    }
    Ok((lq, dv))
}

/// Splits query rows across `threads` scoped workers, each writing its own
/// output chunk. Worker scratch peaks are summed into the caller's meter.
fn for_row_chunks<T: Scalar>(
    rows: usize,
    width: usize,
    threads: usize,
    out: &mut [T],
    work: impl Fn(Range<usize>, &mut [T]) + Sync,
) {
    if threads <= 1 || rows < 2 {
        work(0..rows, out);
        return;
    }
    let per = rows.div_ceil(threads.min(rows));
    let work = &work;
    let total: usize = std::thread::scope(|s| {
        let handles: Vec<_> = out
            .chunks_mut(per * width)
            .enumerate()
            .map(|(ci, chunk)| {
                let start = ci * per;
                let end = (start + per).min(rows);
                s.spawn(move || measured(|| work(start..end, chunk)).1)
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).sum()
    });
    let _held = External::charge(total);
}

/// Streams each query row over its key range in tiles of `cfg.tile`.
fn stream_rows<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    cfg: &AttnConfig,
    d_v: usize,
    keys_of: impl Fn(usize) -> Range<usize> + Sync,
) -> Result<Tensor<T>> {
    let (len, _) = q.dims2()?;
    let scale = T::from_f64(cfg.scale);
    let mut out = vec![T::zero(); len * d_v];
    for_row_chunks(len, d_v, cfg.threads, &mut out, |rows, chunk| {
        let mut logits = ScratchBuf::new(cfg.tile, T::zero());
        let mut o = ScratchBuf::new(d_v, T::zero());
        for (r, out_row) in rows.zip(chunk.chunks_exact_mut(d_v)) {
            let qr = q.row(r);
            let keys = keys_of(r);
            let (mut m, mut d) = (T::neg_infinity(), T::zero());
            o.fill(T::zero());
            let mut start = keys.start;
            while start < keys.end {
                let width = cfg.tile.min(keys.end - start);
                let tile = &mut logits[..width];
                for (j, x) in tile.iter_mut().enumerate() {
                    *x = dot(qr, k.row(start + j)) * scale;
                }
                fold_tile(&mut m, &mut d, &mut o, tile, |j| v.row(start + j));
                start += width;
            }
            out_row.copy_from_slice(&o);
        }
    });
    Tensor::new(&[len, d_v], out)
}

/// One-pass tiled attention, `softmax(scale · Q Kᵀ) V` without the map.
pub fn flash_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    cfg: &AttnConfig,
) -> Result<Tensor<T>> {
    let _scope = CallScope::enter();
    let (len, d_v) = check_qkv(q, k, v, cfg)?;
    stream_rows(q, k, v, cfg, d_v, |_| 0..len)
}

/// Attention restricted to the diagonal blocks of `spec`.
///
/// Each query row streams only the keys of its own block; cross-block
/// logits are never computed.
pub fn block_diagonal_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    spec: &BlockSpec,
    cfg: &AttnConfig,
) -> Result<Tensor<T>> {
    let _scope = CallScope::enter();
    let (len, d_v) = check_qkv(q, k, v, cfg)?;
    if spec.total() != len {
        return contract_err(format!(
            "block spec covers {} rows, sequence has {len}",
            spec.total()
        ));
    }
    stream_rows(q, k, v, cfg, d_v, |r| spec.block_of(r))
}

/// Reference attention that materializes the `L × L` logit map.
///
/// With a mask, logits outside the diagonal blocks are set to `-∞` before
/// the softmax.
pub fn naive_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    cfg: &AttnConfig,
    mask: Option<&BlockSpec>,
) -> Result<Tensor<T>> {
    naive_attention_with_bias(q, k, v, cfg, mask, None)
}

/// [`naive_attention`] with an additive `L × L` logit bias.
///
/// Only the reference path accepts a bias; the streaming kernels do not.
pub fn naive_attention_with_bias<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    cfg: &AttnConfig,
    mask: Option<&BlockSpec>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let _scope = CallScope::enter();
    let (len, d_v) = check_qkv(q, k, v, cfg)?;
    if let Some(spec) = mask {
        if spec.total() != len {
            return contract_err(format!(
                "mask covers {} rows, sequence has {len}",
                spec.total()
            ));
        }
    }
    if let Some(b) = bias {
        if b.shape() != [len, len] {
            return shape_err(format!("bias shape {:?}, expected [{len}, {len}]", b.shape()));
        }
    }
    let scale = T::from_f64(cfg.scale);
    let mut map = ScratchBuf::new(len * len, T::zero());
    for (i, row) in map.chunks_exact_mut(len).enumerate() {
        let allowed = mask.map(|s| s.block_of(i)).unwrap_or(0..len);
        for (j, x) in row.iter_mut().enumerate() {
            *x = dot(q.row(i), k.row(j)) * scale;
            if let Some(b) = bias {
                *x += b.data()[i * len + j];
            }
            if !allowed.contains(&j) {
                *x = T::neg_infinity();
            }
        }
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for x in row.iter_mut() {
            *x = (*x - m).exp();
            z += *x;
        }
        for x in row.iter_mut() {
            *x = *x / z;
        }
    }
    let mut out = vec![T::zero(); len * d_v];
    for (row, out_row) in map.chunks_exact(len).zip(out.chunks_exact_mut(d_v)) {
        for (j, &p) in row.iter().enumerate() {
            for (oc, &vc) in out_row.iter_mut().zip(v.row(j)) {
                *oc += p * vc;
            }
        }
    }
    Tensor::new(&[len, d_v], out)
}
