//! Hierarchical windowed image encoder.
//!
//! Four stages of three blocks each. Within a stage the blocks alternate
//! plain and padding-shifted window attention, and a cycle-scan block runs
//! before the last block. The multi-scale variant also encodes a bilinearly
//! downsampled copy of the image; both token grids are packed into one
//! sequence, and each stage ends with a cross-scale cycle-scan.
//!
//! Every stage output is projected to `out_dim` channels (the auxiliary
//! scale is resized to the full grid and added), the stage outputs are
//! summed, and a 3×3 convolution produces the final embedding.

mod config;
mod weights;

use std::path::Path;

pub use config::{EncoderConfig, Variant};
pub use weights::{Block, EncoderWeights, ScanBlock, Stage, MANIFEST};

use crate::attention::AttnConfig;
use crate::error::{contract_err, shape_err, Error, Result};
use crate::io::read_any;
use crate::multiscale::{multiscale_attention_with_layout, multiscale_window_layout, PackedLayout, PackedSequence};
use crate::nn::{gelu, resize_bilinear};
use crate::oracle::per_scale_window_attention;
use crate::ssm::{multi_scale_cycle_scan, ScanMode};
use crate::tensor::{Scalar, Tensor};
use crate::window::GridTokens;

/// Which window attention implementation the forward pass uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttnPath {
    /// Index map + one block-diagonal streaming call per layer.
    #[default]
    Kernel,
    /// Materialized padding and per-window naive attention.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    pub attn: AttnPath,
    pub tile: usize,
    pub threads: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            attn: AttnPath::Kernel,
            tile: 64,
            threads: 1,
        }
    }
}

/// Shapes seen during a forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardTrace {
    pub grid: (usize, usize),
    pub aux_grid: Option<(usize, usize)>,
    /// Packed sequence length entering each stage.
    pub stage_tokens: Vec<usize>,
}

/// Splits `[H, W, 3]` into `p × p` patches and projects each to `C`.
///
/// A patch is flattened as `(py·p + px)·3 + channel`.
pub fn patchify<T: Scalar>(image: &Tensor<T>, weights: &EncoderWeights<T>, patch: usize) -> Result<GridTokens<T>> {
    let &[h, w, 3] = image.shape() else {
        return shape_err(format!("image must be [h, w, 3], got {:?}", image.shape()));
    };
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return contract_err(format!("image {h}x{w} is not divisible into {patch}-pixel patches"));
    }
    if weights.patch_embed.in_dim() != 3 * patch * patch {
        return shape_err(format!(
            "patch embedding expects {} inputs, patch size {patch} gives {}",
            weights.patch_embed.in_dim(),
            3 * patch * patch
        ));
    }
    let (gh, gw) = (h / patch, w / patch);
    let d = image.data();
    let mut rows = Vec::with_capacity(gh * gw * 3 * patch * patch);
    for gy in 0..gh {
        for gx in 0..gw {
            for py in 0..patch {
                let start = ((gy * patch + py) * w + gx * patch) * 3;
                rows.extend_from_slice(&d[start..start + 3 * patch]);
            }
        }
    }
    let rows = Tensor::new(&[gh * gw, 3 * patch * patch], rows)?;
    GridTokens::from_rows(gh, gw, weights.patch_embed.forward(&rows)?)
}

/// Reads an `[H, W, 3]` image: binary PGM/PPM scaled by 1/255 (gray is
/// replicated to three channels) or an HRT1 tensor of either dtype.
pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let head = std::fs::read(path)?;
    if head.starts_with(crate::io::MAGIC) {
        let any = read_any(path)?;
        let t: Tensor<T> = match any {
            crate::io::AnyTensor::F32(t) => t.cast(),
            crate::io::AnyTensor::F64(t) => t.cast(),
        };
        if t.rank() != 3 || t.shape()[2] != 3 {
            return shape_err(format!("image tensor must be [h, w, 3], got {:?}", t.shape()));
        }
        return Ok(t);
    }
    let img = image::load_from_memory_with_format(&head, image::ImageFormat::Pnm)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| T::from_f64(b as f64 / 255.0)).collect();
    Tensor::new(&[h, w, 3], data)
}

struct Layouts {
    plain: PackedLayout,
    shifted: PackedLayout,
}

struct Runner<'a, T> {
    cfg: &'a EncoderConfig,
    weights: &'a EncoderWeights<T>,
    attn_cfg: AttnConfig,
    layouts: Option<Layouts>,
}

impl<T: Scalar> Runner<'_, T> {
    fn attention(&self, x: &PackedSequence<T>, b: &Block<T>, shifted: bool) -> Result<Tensor<T>> {
        let normed = PackedSequence::from_parts(b.norm1.forward(x.data())?, x.grids().to_vec())?;
        let pad = shifted.then_some(&self.weights.pad);
        match &self.layouts {
            Some(l) => {
                let layout = if shifted { &l.shifted } else { &l.plain };
                Ok(multiscale_attention_with_layout(&normed, layout, &b.attn, pad, &self.attn_cfg)?.into_data())
            }
            None => {
                let grids: Vec<_> = (0..normed.num_scales()).map(|i| normed.scale_grid(i)).collect();
                let shift = shifted.then(|| self.cfg.shift());
                let outs = per_scale_window_attention(&grids, self.cfg.window, shift, &b.attn, pad, &self.attn_cfg)?;
                Ok(crate::multiscale::pack(&outs)?.into_data())
            }
        }
    }

    fn block(&self, x: &mut PackedSequence<T>, b: &Block<T>, shifted: bool) -> Result<()> {
        let a = self.attention(x, b, shifted)?;
        let mut data = x.data().add(&a)?;
        let hidden = b.fc1.forward(&b.norm2.forward(&data)?)?.map(gelu);
        data.add_assign(&b.fc2.forward(&hidden)?)?;
        *x = PackedSequence::from_parts(data, x.grids().to_vec())?;
        Ok(())
    }

    fn scan(&self, x: &mut PackedSequence<T>, s: &ScanBlock<T>, mode: ScanMode) -> Result<()> {
        let inner = PackedSequence::from_parts(s.w_in.forward(&s.norm.forward(x.data())?)?, x.grids().to_vec())?;
        let scales: Vec<_> = (0..inner.num_scales()).map(|i| inner.scale_rows(i)).collect();
        let scanned = multi_scale_cycle_scan(&scales, &s.ssm, mode)?;
        let c = self.cfg.dim;
        let mut cat = Vec::with_capacity(x.len() * c);
        for t in &scanned {
            cat.extend_from_slice(t.data());
        }
        let y = s.w_out.forward(&Tensor::new(&[x.len(), c], cat)?)?;
        let data = x.data().add(&y)?;
        *x = PackedSequence::from_parts(data, x.grids().to_vec())?;
        Ok(())
    }

    /// Projects each scale to `out_dim`, resizes to the full grid, sums.
    fn stage_output(&self, x: &PackedSequence<T>, stage: &Stage<T>) -> Result<Tensor<T>> {
        let (gh, gw) = x.grids()[0];
        let mut acc: Option<Tensor<T>> = None;
        for i in 0..x.num_scales() {
            let (h, w) = x.grids()[i];
            let y = stage.out_proj.forward(&x.scale_rows(i))?.reshape(&[h, w, self.cfg.out_dim])?;
            let y = resize_bilinear(&y, gh, gw)?;
            match &mut acc {
                None => acc = Some(y),
                Some(a) => a.add_assign(&y)?,
            }
        }
        Ok(acc.expect("at least one scale"))
    }
}

pub fn encoder_forward<T: Scalar>(
    image: &Tensor<T>,
    cfg: &EncoderConfig,
    weights: &EncoderWeights<T>,
    opts: &ForwardOptions,
) -> Result<Tensor<T>> {
    encoder_forward_traced(image, cfg, weights, opts).map(|(out, _)| out)
}

/// Runs the encoder on an `[H, W, 3]` image; returns `[H/p, W/p, out_dim]`.
pub fn encoder_forward_traced<T: Scalar>(
    image: &Tensor<T>,
    cfg: &EncoderConfig,
    weights: &EncoderWeights<T>,
    opts: &ForwardOptions,
) -> Result<(Tensor<T>, ForwardTrace)> {
    cfg.validate()?;
    let &[h, w, 3] = image.shape() else {
        return shape_err(format!("image must be [h, w, 3], got {:?}", image.shape()));
    };
    cfg.check_image(h, w)?;
    check_structure(cfg, weights)?;

    let mut grids = vec![patchify(image, weights, cfg.patch)?];
    if cfg.uses_aux_scale() {
        let aux = resize_bilinear(image, cfg.aux_size, cfg.aux_size)?;
        grids.push(patchify(&aux, weights, cfg.patch)?);
    }
    let mut x = crate::multiscale::pack(&grids)?;
    drop(grids);
    let trace_grids = x.grids().to_vec();

    let attn_cfg = AttnConfig::new(cfg.head_dim()).with_tile(opts.tile).with_threads(opts.threads);
    attn_cfg.validate()?;
    let layouts = match opts.attn {
        AttnPath::Kernel => Some(Layouts {
            plain: multiscale_window_layout(x.grids(), cfg.window, None)?,
            shifted: multiscale_window_layout(x.grids(), cfg.window, Some(cfg.shift()))?,
        }),
        AttnPath::Oracle => None,
    };
    let run = Runner {
        cfg,
        weights,
        attn_cfg,
        layouts,
    };

    let mut stage_tokens = Vec::with_capacity(cfg.stages);
    let mut fused: Option<Tensor<T>> = None;
    for stage in &weights.stages {
        stage_tokens.push(x.len());
        for (bi, b) in stage.blocks.iter().enumerate() {
            if bi + 1 == stage.blocks.len() {
                run.scan(&mut x, &stage.scan, ScanMode::Single)?;
            }
            run.block(&mut x, b, bi % 2 == 1)?;
        }
        if cfg.uses_aux_scale() {
            let ms = stage.ms_scan.as_ref().expect("checked by check_structure");
            run.scan(&mut x, ms, ScanMode::Multi)?;
        }
        let y = run.stage_output(&x, stage)?;
        match &mut fused {
            None => fused = Some(y),
            Some(f) => f.add_assign(&y)?,
        }
    }
    let out = weights.fuse.forward(&fused.expect("at least one stage"))?;
    Ok((
        out,
        ForwardTrace {
            grid: trace_grids[0],
            aux_grid: trace_grids.get(1).copied(),
            stage_tokens,
        },
    ))
}

fn check_structure<T: Scalar>(cfg: &EncoderConfig, weights: &EncoderWeights<T>) -> Result<()> {
    if weights.stages.len() != cfg.stages {
        return shape_err(format!("weights have {} stages, config {}", weights.stages.len(), cfg.stages));
    }
    for (i, s) in weights.stages.iter().enumerate() {
        if s.blocks.len() != cfg.depth {
            return shape_err(format!("stage {i} has {} blocks, config {}", s.blocks.len(), cfg.depth));
        }
        if cfg.uses_aux_scale() && s.ms_scan.is_none() {
            return shape_err(format!("stage {i} lacks cross-scale scan weights"));
        }
        for b in &s.blocks {
            if b.attn.heads != cfg.heads || b.attn.channels() != cfg.dim {
                return shape_err(format!("stage {i} attention does not match the config"));
            }
        }
    }
    if weights.fuse.bias.len() != cfg.out_dim {
        return shape_err(format!("fusion conv has {} outputs, config {}", weights.fuse.bias.len(), cfg.out_dim));
    }
    Ok(())
}
