//! Window layouts and windowed attention over token grids.
//!
//! A [`WindowLayout`] is an index map that lays every window's tokens out
//! contiguously, plus a [`BlockSpec`] with one `S²` block per window. With
//! it, all windows are handled by a single block-diagonal attention call.
//!
//! The padding-shifted layout pads `S − Sx` columns on the left and
//! `S − Sy` rows on the top, then pads the right/bottom up to a multiple of
//! `S`. Padding slots reference one shared learnable token; its Q/K/V are
//! projected once and replicated by the gather.

use crate::attention::{block_diagonal_attention, rope_apply, AttnConfig, BlockSpec};
use crate::error::{contract_err, shape_err, Result};
use crate::nn::Linear;
use crate::rng::{trunc_normal_fill, SplitMix64};
use crate::tensor::{gather, scatter_back, IndexMap, Scalar, Tensor, PAD};

/// An `h × w` grid of `c`-channel tokens, flattened row-major (y, then x).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTokens<T> {
    data: Tensor<T>,
}

impl<T: Scalar> GridTokens<T> {
    /// Wraps an `[h, w, c]` tensor.
    pub fn new(data: Tensor<T>) -> Result<Self> {
        if data.rank() != 3 {
            return shape_err(format!("grid tensor must be [h, w, c], got {:?}", data.shape()));
        }
        Ok(Self { data })
    }

    pub fn from_rows(h: usize, w: usize, rows: Tensor<T>) -> Result<Self> {
        let (l, c) = rows.dims2()?;
        if l != h * w {
            return shape_err(format!("{l} rows cannot form a {h}x{w} grid"));
        }
        Self::new(rows.reshape(&[h, w, c])?)
    }

    pub fn h(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn w(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn len(&self) -> usize {
        self.h() * self.w()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.data
    }

    /// The tokens as an `[h·w, c]` sequence.
    pub fn rows(&self) -> Tensor<T> {
        self.data
            .clone()
            .reshape(&[self.len(), self.channels()])
            .expect("same element count")
    }

    pub fn token(&self, y: usize, x: usize) -> &[T] {
        let c = self.channels();
        &self.data.data()[(y * self.w() + x) * c..][..c]
    }
}

/// Cyclic roll: the token at `(y, x)` moves to `((y + sy) mod h, (x + sx) mod w)`.
pub fn vanilla_shift<T: Scalar>(grid: &GridTokens<T>, sx: usize, sy: usize) -> Result<GridTokens<T>> {
    let (h, w, c) = (grid.h(), grid.w(), grid.channels());
    if sx > w || sy > h {
        return contract_err(format!("shift ({sx}, {sy}) exceeds the {h}x{w} grid"));
    }
    let mut out = vec![T::zero(); h * w * c];
    for y in 0..h {
        for x in 0..w {
            let dst = ((y + sy) % h * w + (x + sx) % w) * c;
            out[dst..dst + c].copy_from_slice(grid.token(y, x));
        }
    }
    GridTokens::new(Tensor::new(&[h, w, c], out)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

/// Work done by a layout, in rows and logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutCost {
    pub grid_tokens: usize,
    pub slots: usize,
    pub pad_slots: usize,
    /// Rows pushed through the QKV projection: the grid plus one pad row.
    pub projected_rows: usize,
    /// Rows a naive padded implementation would project.
    pub materialized_rows: usize,
    /// `Σ block²` over windows.
    pub logits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowLayout {
    pub h: usize,
    pub w: usize,
    pub win: usize,
    pub shift: (usize, usize),
    pub padding: Padding,
    pub map: IndexMap,
    pub blocks: BlockSpec,
    /// `(x, y)` of every slot in the padded grid, for RoPE.
    pub positions: Vec<(i64, i64)>,
}

impl WindowLayout {
    pub fn padded_h(&self) -> usize {
        self.h + self.padding.top + self.padding.bottom
    }

    pub fn padded_w(&self) -> usize {
        self.w + self.padding.left + self.padding.right
    }

    pub fn num_windows(&self) -> usize {
        self.blocks.num_blocks()
    }

    pub fn cost(&self) -> LayoutCost {
        let pad_slots = self.map.pad_count();
        LayoutCost {
            grid_tokens: self.h * self.w,
            slots: self.map.dest_len(),
            pad_slots,
            projected_rows: self.h * self.w + usize::from(pad_slots > 0),
            materialized_rows: self.map.dest_len(),
            logits: self.blocks.lens().iter().map(|l| l * l).sum(),
        }
    }
}

fn build_layout(h: usize, w: usize, win: usize, shift: (usize, usize), padding: Padding) -> Result<WindowLayout> {
    let ph = h + padding.top + padding.bottom;
    let pw = w + padding.left + padding.right;
    debug_assert!(ph % win == 0 && pw % win == 0);
    let mut sources = Vec::with_capacity(ph * pw);
    let mut positions = Vec::with_capacity(ph * pw);
    for wy in 0..ph / win {
        for wx in 0..pw / win {
            for iy in 0..win {
                for ix in 0..win {
                    let (py, px) = (wy * win + iy, wx * win + ix);
                    let inside = py >= padding.top
                        && py < padding.top + h
                        && px >= padding.left
                        && px < padding.left + w;
                    sources.push(if inside {
                        (py - padding.top) * w + (px - padding.left)
                    } else {
                        PAD
                    });
                    positions.push((px as i64, py as i64));
                }
            }
        }
    }
    let windows = (ph / win) * (pw / win);
    Ok(WindowLayout {
        h,
        w,
        win,
        shift,
        padding,
        map: IndexMap::new(sources, h * w)?,
        blocks: BlockSpec::uniform(win * win, windows)?,
        positions,
    })
}

fn check_divisible(h: usize, w: usize, win: usize) -> Result<()> {
    if win == 0 || h == 0 || w == 0 {
        return contract_err("grid extents and window size must be positive");
    }
    if h % win != 0 || w % win != 0 {
        return contract_err(format!("window size {win} does not divide the {h}x{w} grid"));
    }
    Ok(())
}

/// Non-overlapping `S × S` windows, windows row-major, tokens row-major
/// within each window.
pub fn plain_window_layout(h: usize, w: usize, win: usize) -> Result<WindowLayout> {
    check_divisible(h, w, win)?;
    build_layout(h, w, win, (0, 0), Padding::default())
}

/// Shifted windows realized with padding, so every window keeps `S²` slots.
pub fn padding_shifted_layout(h: usize, w: usize, win: usize, sx: usize, sy: usize) -> Result<WindowLayout> {
    check_divisible(h, w, win)?;
    if sx == 0 || sx >= win || sy == 0 || sy >= win {
        return contract_err(format!("shifts ({sx}, {sy}) must lie strictly inside (0, {win})"));
    }
    let left = win - sx;
    let top = win - sy;
    let padding = Padding {
        top,
        left,
        bottom: (h + top).div_ceil(win) * win - h - top,
        right: (w + left).div_ceil(win) * win - w - left,
    };
    build_layout(h, w, win, (sx, sy), padding)
}

/// QKV and output projections of one attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<T> {
    /// `C → 3C`, output laid out as `[Q | K | V]`.
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    pub heads: usize,
    /// Rotate Q and K by slot positions before attending.
    pub rope: bool,
}

impl<T: Scalar> AttentionWeights<T> {
    pub fn init(c: usize, heads: usize, rope: bool, rng: &mut SplitMix64) -> Result<Self> {
        Ok(Self {
            qkv: Linear::init(c, 3 * c, rng)?,
            proj: Linear::init(c, c, rng)?,
            heads,
            rope,
        })
    }

    pub fn channels(&self) -> usize {
        self.proj.out_dim()
    }

    pub fn head_dim(&self) -> usize {
        self.channels() / self.heads.max(1)
    }

    /// Per-head attention config derived from `base` (tile, threads).
    pub fn head_config(&self, base: &AttnConfig) -> AttnConfig {
        AttnConfig {
            d_head: self.head_dim(),
            scale: 1.0 / (self.head_dim() as f64).sqrt(),
            ..*base
        }
    }

    pub(crate) fn validate(&self, c: usize) -> Result<()> {
        if self.qkv.in_dim() != c || self.qkv.out_dim() != 3 * c || self.proj.in_dim() != c {
            return shape_err(format!("attention weights do not match {c} channels"));
        }
        if self.heads == 0 || c % self.heads != 0 {
            return shape_err(format!("{} heads do not divide {c} channels", self.heads));
        }
        Ok(())
    }
}

/// The learnable padding embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PadToken<T> {
    pub p: Tensor<T>,
}

impl<T: Scalar> PadToken<T> {
    pub fn init(c: usize, rng: &mut SplitMix64) -> Result<Self> {
        Ok(Self {
            p: trunc_normal_fill(&[c], rng, 0.02)?,
        })
    }
}

/// Columns `[start, start + width)` of a matrix.
pub(crate) fn columns<T: Scalar>(x: &Tensor<T>, start: usize, width: usize) -> Result<Tensor<T>> {
    let (rows, _) = x.dims2()?;
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        out.extend_from_slice(&x.row(r)[start..start + width]);
    }
    Tensor::new(&[rows, width], out)
}

/// Windowed attention over a token sequence given an explicit layout.
///
/// Rows are projected once, the pad row is projected once, the gather
/// replicates the pad's Q/K/V into every padding slot, and a single
/// block-diagonal call covers every window. Padding outputs are dropped by
/// the inverse gather.
pub(crate) fn attend_with_layout<T: Scalar>(
    rows: &Tensor<T>,
    map: &IndexMap,
    blocks: &BlockSpec,
    positions: &[(i64, i64)],
    weights: &AttentionWeights<T>,
    pad: Option<&PadToken<T>>,
    cfg: &AttnConfig,
) -> Result<Tensor<T>> {
    let (_, c) = rows.dims2()?;
    weights.validate(c)?;
    if map.has_pad() != pad.is_some() {
        return contract_err(if map.has_pad() {
            "layout has padding slots but no pad token was given"
        } else {
            "pad token given for a layout without padding"
        });
    }
    if cfg.d_head != weights.head_dim() {
        return shape_err(format!(
            "config d_head {} != head width {}",
            cfg.d_head,
            weights.head_dim()
        ));
    }
    let qkv = weights.qkv.forward(rows)?;
    let pad_qkv = match pad {
        Some(p) => {
            if p.p.len() != c {
                return shape_err(format!("pad token has {} channels, expected {c}", p.p.len()));
            }
            Some(weights.qkv.forward(&p.p.clone().reshape(&[1, c])?)?)
        }
        None => None,
    };
    let slots = gather(&qkv, map, pad_qkv.as_ref().map(|t| t.data()))?;
    let n_slots = map.dest_len();
    let dh = weights.head_dim();
    let mut attn = vec![T::zero(); n_slots * c];
    for head in 0..weights.heads {
        let mut q = columns(&slots, head * dh, dh)?;
        let mut k = columns(&slots, c + head * dh, dh)?;
        let v = columns(&slots, 2 * c + head * dh, dh)?;
        if weights.rope {
            q = rope_apply(&q, positions)?;
            k = rope_apply(&k, positions)?;
        }
        let o = block_diagonal_attention(&q, &k, &v, blocks, cfg)?;
        for (dst, src) in attn.chunks_exact_mut(c).zip(o.data().chunks_exact(dh)) {
            dst[head * dh..(head + 1) * dh].copy_from_slice(src);
        }
    }
    let attn = Tensor::new(&[n_slots, c], attn)?;
    let back = scatter_back(&attn, map)?;
    weights.proj.forward(&back)
}

/// Attention within the windows of `layout`; output has the input's shape.
pub fn window_attention<T: Scalar>(
    grid: &GridTokens<T>,
    layout: &WindowLayout,
    weights: &AttentionWeights<T>,
    pad: Option<&PadToken<T>>,
    cfg: &AttnConfig,
) -> Result<GridTokens<T>> {
    if (grid.h(), grid.w()) != (layout.h, layout.w) {
        return shape_err(format!(
            "layout built for {}x{}, grid is {}x{}",
            layout.h,
            layout.w,
            grid.h(),
            grid.w()
        ));
    }
    let out = attend_with_layout(
        &grid.rows(),
        &layout.map,
        &layout.blocks,
        &layout.positions,
        weights,
        pad,
        cfg,
    )?;
    GridTokens::from_rows(grid.h(), grid.w(), out)
}

/// Swin-style shifted windows: roll by `(−Sx, −Sy)`, plain windows, roll back.
pub fn vanilla_shifted_window_attention<T: Scalar>(
    grid: &GridTokens<T>,
    win: usize,
    sx: usize,
    sy: usize,
    weights: &AttentionWeights<T>,
    cfg: &AttnConfig,
) -> Result<GridTokens<T>> {
    let (h, w) = (grid.h(), grid.w());
    if sx >= w || sy >= h {
        return contract_err(format!("shift ({sx}, {sy}) exceeds the {h}x{w} grid"));
    }
    let layout = plain_window_layout(h, w, win)?;
    let rolled = vanilla_shift(grid, (w - sx) % w, (h - sy) % h)?;
    let out = window_attention(&rolled, &layout, weights, None, cfg)?;
    vanilla_shift(&out, sx, sy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::naive_attention;
    use crate::rng::rng_fill;

    fn grid(h: usize, w: usize, c: usize, seed: u64) -> GridTokens<f64> {
        GridTokens::new(rng_fill(&[h, w, c], seed, -1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn single_window_layout() {
        let l = plain_window_layout(4, 4, 4).unwrap();
        assert_eq!(l.blocks.lens(), &[16]);
        assert!(l.map.is_permutation());
        assert_eq!(l.map.sources(), (0..16).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn four_by_four_with_two_by_two_windows() {
        let l = plain_window_layout(4, 4, 2).unwrap();
        assert_eq!(l.num_windows(), 4);
        // Token (y=0, x=3) is flat index 3: window 1 (top-right), slot 1.
        let slot = l.map.sources().iter().position(|&s| s == 3).unwrap();
        assert_eq!((slot / 4, slot % 4), (1, 1));
        assert_eq!(
            l.map.sources(),
            &[0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15]
        );
    }

    #[test]
    fn plain_layout_round_trips() {
        let g = grid(8, 6, 3, 1);
        let l = plain_window_layout(8, 6, 2).unwrap();
        let there = gather(&g.rows(), &l.map, None).unwrap();
        assert!(scatter_back(&there, &l.map).unwrap().bit_eq(&g.rows()));
    }

    #[test]
    fn non_divisible_rejected() {
        assert!(matches!(plain_window_layout(5, 4, 2), Err(crate::Error::Contract(_))));
        assert!(matches!(padding_shifted_layout(4, 4, 2, 0, 1), Err(crate::Error::Contract(_))));
        assert!(matches!(padding_shifted_layout(4, 4, 2, 1, 2), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn vanilla_shift_cases() {
        let g = grid(3, 4, 2, 2);
        assert!(vanilla_shift(&g, 0, 0).unwrap().tensor().bit_eq(g.tensor()));
        let g2 = grid(2, 2, 1, 3);
        let s = vanilla_shift(&g2, 1, 0).unwrap();
        assert_eq!(s.token(0, 0), g2.token(0, 1));
        assert_eq!(s.token(0, 1), g2.token(0, 0));
        assert_eq!(s.token(1, 0), g2.token(1, 1));
        let there = vanilla_shift(&g, 3, 1).unwrap();
        let back = vanilla_shift(&there, 4 - 3, 3 - 1).unwrap();
        assert!(back.tensor().bit_eq(g.tensor()));
    }

    #[test]
    fn padding_layout_hand_enumeration() {
        let l = padding_shifted_layout(4, 4, 2, 1, 1).unwrap();
        assert_eq!(l.padding, Padding { top: 1, left: 1, bottom: 1, right: 1 });
        assert_eq!((l.padded_h(), l.padded_w()), (6, 6));
        assert_eq!(l.num_windows(), 9);
        assert!(l.blocks.lens().iter().all(|&b| b == 4));
        assert_eq!(l.map.pad_count(), 36 - 16);
        // First window covers padded (0..2, 0..2): only padded (1,1) = token 0 is real.
        assert_eq!(&l.map.sources()[..4], &[PAD, PAD, PAD, 0]);
        // Centre window covers padded (2..4, 2..4) = tokens (1..3, 1..3).
        assert_eq!(&l.map.sources()[16..20], &[5, 6, 9, 10]);
        let mut seen = [0; 16];
        for &s in l.map.sources() {
            if s != PAD {
                seen[s] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn pad_slots_only_at_geometric_padding() {
        let l = padding_shifted_layout(8, 12, 4, 2, 3).unwrap();
        for (&src, &(px, py)) in l.map.sources().iter().zip(&l.positions) {
            let (px, py) = (px as usize, py as usize);
            let inside = py >= l.padding.top
                && py < l.padding.top + 8
                && px >= l.padding.left
                && px < l.padding.left + 12;
            assert_eq!(src != PAD, inside);
        }
        assert!(l.padding.top < 4 && l.padding.bottom < 4 && l.padding.left < 4 && l.padding.right < 4);
    }

    #[test]
    fn single_window_matches_naive() {
        let mut rng = SplitMix64::new(5);
        let w = AttentionWeights::<f64>::init(8, 1, false, &mut rng).unwrap();
        let g = grid(4, 4, 8, 6);
        let l = plain_window_layout(4, 4, 4).unwrap();
        let cfg = w.head_config(&AttnConfig::new(8).with_tile(5));
        let out = window_attention(&g, &l, &w, None, &cfg).unwrap();

        let qkv = w.qkv.forward(&g.rows()).unwrap();
        let q = columns(&qkv, 0, 8).unwrap();
        let k = columns(&qkv, 8, 8).unwrap();
        let v = columns(&qkv, 16, 8).unwrap();
        let o = naive_attention(&q, &k, &v, &cfg, None).unwrap();
        let expect = w.proj.forward(&o).unwrap();
        assert!(out.rows().max_abs_diff(&expect).unwrap() <= 1e-12);
    }

    #[test]
    fn pad_contract() {
        let mut rng = SplitMix64::new(5);
        let w = AttentionWeights::<f64>::init(8, 2, true, &mut rng).unwrap();
        let pad = PadToken::init(8, &mut rng).unwrap();
        let g = grid(4, 4, 8, 6);
        let cfg = w.head_config(&AttnConfig::new(4));
        let shifted = padding_shifted_layout(4, 4, 2, 1, 1).unwrap();
        assert!(matches!(
            window_attention(&g, &shifted, &w, None, &cfg),
            Err(crate::Error::Contract(_))
        ));
        let plain = plain_window_layout(4, 4, 2).unwrap();
        assert!(window_attention(&g, &plain, &w, Some(&pad), &cfg).is_err());
    }

    #[test]
    fn pad_outputs_are_discarded() {
        let l = padding_shifted_layout(4, 4, 2, 1, 1).unwrap();
        let dest = rng_fill::<f64>(&[l.map.dest_len(), 3], 8, -1.0, 1.0).unwrap();
        let mut perturbed = dest.clone();
        for (slot, &src) in l.map.sources().iter().enumerate() {
            if src == PAD {
                perturbed.row_mut(slot).fill(1e9);
            }
        }
        let a = scatter_back(&dest, &l.map).unwrap();
        let b = scatter_back(&perturbed, &l.map).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn replicated_pad_projection_is_exact() {
        let mut rng = SplitMix64::new(9);
        let lin = Linear::<f64>::init(6, 18, &mut rng).unwrap();
        let pad = PadToken::<f64>::init(6, &mut rng).unwrap();
        let once = lin.forward(&pad.p.clone().reshape(&[1, 6]).unwrap()).unwrap();
        let copies = Tensor::from_fn(&[5, 6], |i| pad.p.data()[i % 6]).unwrap();
        let many = lin.forward(&copies).unwrap();
        for r in 0..5 {
            assert_eq!(many.row(r), once.row(0));
        }
    }

    #[test]
    fn vanilla_shifted_zero_shift_is_plain() {
        let mut rng = SplitMix64::new(2);
        let w = AttentionWeights::<f64>::init(8, 2, true, &mut rng).unwrap();
        let g = grid(4, 4, 8, 3);
        let cfg = w.head_config(&AttnConfig::new(4));
        let plain = window_attention(&g, &plain_window_layout(4, 4, 2).unwrap(), &w, None, &cfg).unwrap();
        let van = vanilla_shifted_window_attention(&g, 2, 0, 0, &w, &cfg).unwrap();
        assert!(plain.tensor().bit_eq(van.tensor()));
        let van = vanilla_shifted_window_attention(&g, 2, 1, 1, &w, &cfg).unwrap();
        assert_eq!(van.tensor().shape(), g.tensor().shape());
    }

    #[test]
    fn cost_counts_replication_savings() {
        let l = padding_shifted_layout(32, 32, 16, 8, 8).unwrap();
        let c = l.cost();
        assert_eq!(c.slots, 48 * 48);
        assert_eq!(c.pad_slots, 48 * 48 - 1024);
        assert_eq!(c.projected_rows, 1025);
        assert_eq!(c.logits, 9 * 256 * 256);
    }
}
