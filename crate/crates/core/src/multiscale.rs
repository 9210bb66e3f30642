//! Multi-resolution token packing.
//!
//! Grids of several scales are flattened and concatenated into one
//! sequence. A packed layout lays out every scale's windows back to back
//! (scale 0 first), so one block-diagonal attention call covers all windows
//! of all scales without any block crossing a scale boundary.

use std::ops::Range;

use crate::attention::{AttnConfig, BlockSpec};
use crate::error::{contract_err, shape_err, Result};
use crate::tensor::{IndexMap, Scalar, Tensor, PAD};
use crate::window::{
    attend_with_layout, padding_shifted_layout, plain_window_layout, AttentionWeights, GridTokens,
    PadToken, WindowLayout,
};

/// Concatenated token grids of one or more scales.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedSequence<T> {
    data: Tensor<T>,
    /// `[0, L_0, L_0 + L_1, …]`
    bounds: Vec<usize>,
    grids: Vec<(usize, usize)>,
}

impl<T: Scalar> PackedSequence<T> {
    /// Wraps an `[ΣL_i, C]` tensor whose segments are the given `(h, w)` grids.
    pub fn from_parts(data: Tensor<T>, grids: Vec<(usize, usize)>) -> Result<Self> {
        let (len, _) = data.dims2()?;
        if grids.is_empty() {
            return contract_err("packed sequence needs at least one scale");
        }
        let mut bounds = vec![0];
        for &(h, w) in &grids {
            bounds.push(bounds.last().unwrap() + h * w);
        }
        if *bounds.last().unwrap() != len {
            return shape_err(format!("{len} rows do not match grids {grids:?}"));
        }
        Ok(Self { data, bounds, grids })
    }

    pub fn data(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_data(self) -> Tensor<T> {
        self.data
    }

    pub fn scale_bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn grids(&self) -> &[(usize, usize)] {
        &self.grids
    }

    pub fn num_scales(&self) -> usize {
        self.grids.len()
    }

    pub fn len(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn segment(&self, i: usize) -> Range<usize> {
        self.bounds[i]..self.bounds[i + 1]
    }

    /// Rows of scale `i` as an `[L_i, C]` tensor.
    pub fn scale_rows(&self, i: usize) -> Tensor<T> {
        let c = self.channels();
        let r = self.segment(i);
        Tensor::new(&[r.len(), c], self.data.data()[r.start * c..r.end * c].to_vec())
            .expect("segment within data")
    }

    pub fn scale_grid(&self, i: usize) -> GridTokens<T> {
        let (h, w) = self.grids[i];
        GridTokens::from_rows(h, w, self.scale_rows(i)).expect("segment matches grid")
    }
}

/// Flattens each grid row-major and concatenates them in order.
pub fn pack<T: Scalar>(grids: &[GridTokens<T>]) -> Result<PackedSequence<T>> {
    let Some(first) = grids.first() else {
        return contract_err("pack needs at least one grid");
    };
    let c = first.channels();
    let mut data = Vec::with_capacity(grids.iter().map(|g| g.len()).sum::<usize>() * c);
    let mut dims = Vec::with_capacity(grids.len());
    for g in grids {
        if g.channels() != c {
            return contract_err(format!("grid has {} channels, expected {c}", g.channels()));
        }
        data.extend_from_slice(g.tensor().data());
        dims.push((g.h(), g.w()));
    }
    let len = data.len() / c;
    PackedSequence::from_parts(Tensor::new(&[len, c], data)?, dims)
}

pub fn unpack<T: Scalar>(seq: &PackedSequence<T>) -> Vec<GridTokens<T>> {
    (0..seq.num_scales()).map(|i| seq.scale_grid(i)).collect()
}

/// Window layout of a packed sequence: per-scale layouts concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedLayout {
    pub map: IndexMap,
    pub blocks: BlockSpec,
    pub positions: Vec<(i64, i64)>,
    pub per_scale: Vec<WindowLayout>,
}

/// Builds the packed index map and block spec.
///
/// Without a shift every scale uses plain windows; with `(Sx, Sy)` every
/// scale uses the padding-shifted layout and all padding slots reference
/// the one shared pad token.
pub fn multiscale_window_layout(
    grids: &[(usize, usize)],
    win: usize,
    shift: Option<(usize, usize)>,
) -> Result<PackedLayout> {
    if grids.is_empty() {
        return contract_err("layout needs at least one scale");
    }
    let total: usize = grids.iter().map(|&(h, w)| h * w).sum();
    let mut sources = Vec::new();
    let mut positions = Vec::new();
    let mut lens = Vec::new();
    let mut per_scale = Vec::with_capacity(grids.len());
    let mut offset = 0;
    for &(h, w) in grids {
        let layout = match shift {
            None => plain_window_layout(h, w, win)?,
            Some((sx, sy)) => padding_shifted_layout(h, w, win, sx, sy)?,
        };
        sources.extend(
            layout
                .map
                .sources()
                .iter()
                .map(|&s| if s == PAD { PAD } else { s + offset }),
        );
        positions.extend_from_slice(&layout.positions);
        lens.extend_from_slice(layout.blocks.lens());
        offset += h * w;
        per_scale.push(layout);
    }
    Ok(PackedLayout {
        map: IndexMap::new(sources, total)?,
        blocks: BlockSpec::new(lens)?,
        positions,
        per_scale,
    })
}

/// Index map and block spec for windowed attention over `seq`.
pub fn multiscale_window_map<T: Scalar>(
    seq: &PackedSequence<T>,
    win: usize,
    shift: Option<(usize, usize)>,
) -> Result<(IndexMap, BlockSpec)> {
    let l = multiscale_window_layout(seq.grids(), win, shift)?;
    Ok((l.map, l.blocks))
}

/// Windowed attention over every scale of `seq` in one block-diagonal call.
pub fn multiscale_attention<T: Scalar>(
    seq: &PackedSequence<T>,
    win: usize,
    shift: Option<(usize, usize)>,
    weights: &AttentionWeights<T>,
    pad: Option<&PadToken<T>>,
    cfg: &AttnConfig,
) -> Result<PackedSequence<T>> {
    let layout = multiscale_window_layout(seq.grids(), win, shift)?;
    multiscale_attention_with_layout(seq, &layout, weights, pad, cfg)
}

pub fn multiscale_attention_with_layout<T: Scalar>(
    seq: &PackedSequence<T>,
    layout: &PackedLayout,
    weights: &AttentionWeights<T>,
    pad: Option<&PadToken<T>>,
    cfg: &AttnConfig,
) -> Result<PackedSequence<T>> {
    if layout.map.source_len() != seq.len() {
        return shape_err(format!(
            "layout covers {} tokens, sequence has {}",
            layout.map.source_len(),
            seq.len()
        ));
    }
    let out = attend_with_layout(
        seq.data(),
        &layout.map,
        &layout.blocks,
        &layout.positions,
        weights,
        pad,
        cfg,
    )?;
    PackedSequence::from_parts(out, seq.grids().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_fill, SplitMix64};
    use crate::window::window_attention;
    use proptest::prelude::*;

    fn grid(h: usize, w: usize, c: usize, seed: u64) -> GridTokens<f64> {
        GridTokens::new(rng_fill(&[h, w, c], seed, -1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn pack_bounds_and_round_trip() {
        let gs = [grid(4, 4, 3, 1), grid(2, 2, 3, 2)];
        let seq = pack(&gs).unwrap();
        assert_eq!(seq.len(), 20);
        assert_eq!(seq.scale_bounds(), &[0, 16, 20]);
        let back = unpack(&seq);
        assert!(back[0].tensor().bit_eq(gs[0].tensor()));
        assert!(back[1].tensor().bit_eq(gs[1].tensor()));

        let one = pack(&gs[..1]).unwrap();
        assert_eq!(one.scale_bounds(), &[0, 16]);
        assert_eq!(one.data().data(), gs[0].tensor().data());
    }

    #[test]
    fn pack_rejects_channel_mismatch() {
        assert!(matches!(
            pack(&[grid(2, 2, 3, 1), grid(2, 2, 4, 2)]),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn single_scale_layout_matches_plain() {
        let l = multiscale_window_layout(&[(8, 8)], 4, None).unwrap();
        let p = plain_window_layout(8, 8, 4).unwrap();
        assert_eq!(l.map, p.map);
        assert_eq!(l.blocks, p.blocks);
    }

    #[test]
    fn two_scale_block_count() {
        let l = multiscale_window_layout(&[(4, 4), (2, 2)], 2, None).unwrap();
        assert_eq!(l.blocks.lens(), &[4; 5]);
        assert!(l.map.is_permutation());
        assert!(multiscale_window_layout(&[(4, 4), (3, 3)], 2, None).is_err());
    }

    fn blocks_stay_in_scale(grids: &[(usize, usize)], win: usize, shift: Option<(usize, usize)>) {
        let l = multiscale_window_layout(grids, win, shift).unwrap();
        let mut bounds = vec![0];
        for &(h, w) in grids {
            bounds.push(bounds.last().unwrap() + h * w);
        }
        for r in l.blocks.ranges() {
            let scales: Vec<usize> = l.map.sources()[r]
                .iter()
                .filter(|&&s| s != PAD)
                .map(|&s| bounds.partition_point(|&b| b <= s) - 1)
                .collect();
            assert!(scales.windows(2).all(|p| p[0] == p[1]));
        }
    }

    proptest! {
        #[test]
        fn no_block_crosses_a_scale(
            win in 1usize..5,
            dims in prop::collection::vec((1usize..4, 1usize..4), 1..4),
            shifted in any::<bool>(),
        ) {
            let grids: Vec<_> = dims.iter().map(|&(a, b)| (a * win, b * win)).collect();
            let shift = (shifted && win > 1).then_some((win / 2, win.div_ceil(2)));
            blocks_stay_in_scale(&grids, win, shift.filter(|s| s.0 > 0));
        }
    }

    fn weights(c: usize, heads: usize, rope: bool, seed: u64) -> (AttentionWeights<f64>, PadToken<f64>) {
        let mut rng = SplitMix64::new(seed);
        let w = AttentionWeights::init(c, heads, rope, &mut rng).unwrap();
        let p = PadToken::init(c, &mut rng).unwrap();
        (w, p)
    }

    fn check_per_scale(sizes: [usize; 2], win: usize, shift: Option<(usize, usize)>, tol: f64) {
        let (w, p) = weights(8, 2, true, 5);
        let cfg = AttnConfig::new(4).with_tile(3);
        let gs = [grid(sizes[0], sizes[0], 8, 6), grid(sizes[1], sizes[1], 8, 7)];
        let seq = pack(&gs).unwrap();
        let pad = shift.map(|_| &p);
        let out = multiscale_attention(&seq, win, shift, &w, pad, &cfg).unwrap();
        for (i, g) in gs.iter().enumerate() {
            let layout = match shift {
                None => plain_window_layout(g.h(), g.w(), win).unwrap(),
                Some((sx, sy)) => padding_shifted_layout(g.h(), g.w(), win, sx, sy).unwrap(),
            };
            let want = window_attention(g, &layout, &w, pad, &cfg).unwrap();
            let got = out.scale_grid(i);
            assert!(got.tensor().max_abs_diff(want.tensor()).unwrap() <= tol);
        }
    }

    #[test]
    fn packed_equals_per_scale_plain() {
        check_per_scale([4, 2], 2, None, 1e-12);
        check_per_scale([8, 4], 2, None, 1e-12);
        check_per_scale([16, 8], 4, None, 1e-12);
    }

    #[test]
    fn packed_equals_per_scale_shifted() {
        check_per_scale([8, 4], 2, Some((1, 1)), 1e-12);
        check_per_scale([16, 8], 4, Some((2, 2)), 1e-12);
        check_per_scale([16, 8], 4, Some((1, 3)), 1e-12);
    }

    #[test]
    fn single_scale_is_window_attention() {
        let (w, _) = weights(8, 2, true, 8);
        let cfg = AttnConfig::new(4);
        let g = grid(8, 8, 8, 9);
        let seq = pack(std::slice::from_ref(&g)).unwrap();
        let out = multiscale_attention(&seq, 4, None, &w, None, &cfg).unwrap();
        let want = window_attention(&g, &plain_window_layout(8, 8, 4).unwrap(), &w, None, &cfg).unwrap();
        assert!(out.scale_grid(0).tensor().bit_eq(want.tensor()));
    }
}
