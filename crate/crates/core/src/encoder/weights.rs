use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::EncoderConfig;
use crate::error::{shape_err, Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::nn::{Conv3x3, LayerNorm, Linear};
use crate::rng::SplitMix64;
use crate::ssm::SsmParams;
use crate::tensor::{Scalar, Tensor};
use crate::window::{AttentionWeights, PadToken};

/// Name of the parameter index inside a weights directory.
pub const MANIFEST: &str = "manifest.txt";

/// Seed offset of the stream that draws the cross-scale scan weights, so
/// the remaining weights do not depend on the variant.
const MULTISCALE_STREAM: u64 = 0x6d73_5f73_6361_6e00;

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub norm1: LayerNorm<T>,
    pub attn: AttentionWeights<T>,
    pub norm2: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

/// `x + W_out · cycle_scan(W_in · LN(x))`
#[derive(Debug, Clone, PartialEq)]
pub struct ScanBlock<T> {
    pub norm: LayerNorm<T>,
    pub w_in: Linear<T>,
    pub ssm: SsmParams<T>,
    pub w_out: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub blocks: Vec<Block<T>>,
    pub scan: ScanBlock<T>,
    pub ms_scan: Option<ScanBlock<T>>,
    pub out_proj: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    pub patch_embed: Linear<T>,
    pub pad: PadToken<T>,
    pub stages: Vec<Stage<T>>,
    pub fuse: Conv3x3<T>,
}

impl<T: Scalar> ScanBlock<T> {
    fn init(c: usize, n: usize, rng: &mut SplitMix64) -> Result<Self> {
        Ok(Self {
            norm: LayerNorm::init(c)?,
            w_in: Linear::init(c, c, rng)?,
            ssm: SsmParams::init(c, n, rng)?,
            w_out: Linear::init(c, c, rng)?,
        })
    }
}

macro_rules! named {
    ($w:expr, $($m:ident)?) => {{
        let w = $w;
        let mut out = Vec::new();
        macro_rules! linear {
            ($p:expr, $l:expr) => {
                out.push((format!("{}.weight", $p), & $($m)? $l.weight));
                out.push((format!("{}.bias", $p), & $($m)? $l.bias));
            };
        }
        macro_rules! norm {
            ($p:expr, $l:expr) => {
                out.push((format!("{}.gamma", $p), & $($m)? $l.gamma));
                out.push((format!("{}.beta", $p), & $($m)? $l.beta));
            };
        }
        macro_rules! scan {
            ($p:expr, $s:expr) => {
                let s = $s;
                norm!(format!("{}.norm", $p), s.norm);
                linear!(format!("{}.in", $p), s.w_in);
                out.push((format!("{}.ssm.a", $p), & $($m)? s.ssm.a));
                out.push((format!("{}.ssm.b", $p), & $($m)? s.ssm.b));
                out.push((format!("{}.ssm.c", $p), & $($m)? s.ssm.c));
                out.push((format!("{}.ssm.delta", $p), & $($m)? s.ssm.delta));
                linear!(format!("{}.out", $p), s.w_out);
            };
        }
        linear!("patch_embed", w.patch_embed);
        out.push(("pad_token".to_string(), & $($m)? w.pad.p));
        for (si, stage) in (& $($m)? w.stages).into_iter().enumerate() {
            for (bi, b) in (& $($m)? stage.blocks).into_iter().enumerate() {
                let p = format!("stages.{si}.blocks.{bi}");
                norm!(format!("{p}.norm1"), b.norm1);
                linear!(format!("{p}.attn.qkv"), b.attn.qkv);
                linear!(format!("{p}.attn.proj"), b.attn.proj);
                norm!(format!("{p}.norm2"), b.norm2);
                linear!(format!("{p}.ffn.fc1"), b.fc1);
                linear!(format!("{p}.ffn.fc2"), b.fc2);
            }
            scan!(format!("stages.{si}.scan"), & $($m)? stage.scan);
            if let Some(ms) = & $($m)? stage.ms_scan {
                scan!(format!("stages.{si}.ms_scan"), ms);
            }
            linear!(format!("stages.{si}.out_proj"), stage.out_proj);
        }
        out.push(("fuse.weight".to_string(), & $($m)? w.fuse.weight));
        out.push(("fuse.bias".to_string(), & $($m)? w.fuse.bias));
        out
    }};
}

impl<T: Scalar> EncoderWeights<T> {
    /// Deterministic initialization from `seed`.
    ///
    /// Linear and convolution weights are truncated normal (std 0.02) with
    /// zero bias, norms start at identity. Cross-scale scan weights come
    /// from a separate stream, so both variants share every other weight.
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.dim;
        let mut rng = SplitMix64::new(seed);
        let patch_embed = Linear::init(3 * cfg.patch * cfg.patch, c, &mut rng)?;
        let pad = PadToken::init(c, &mut rng)?;
        let mut stages = Vec::with_capacity(cfg.stages);
        for _ in 0..cfg.stages {
            let mut blocks = Vec::with_capacity(cfg.depth);
            for _ in 0..cfg.depth {
                blocks.push(Block {
                    norm1: LayerNorm::init(c)?,
                    attn: AttentionWeights::init(c, cfg.heads, cfg.rope, &mut rng)?,
                    norm2: LayerNorm::init(c)?,
                    fc1: Linear::init(c, c * cfg.ffn_mult, &mut rng)?,
                    fc2: Linear::init(c * cfg.ffn_mult, c, &mut rng)?,
                });
            }
            stages.push(Stage {
                blocks,
                scan: ScanBlock::init(c, cfg.ssm_state, &mut rng)?,
                ms_scan: None,
                out_proj: Linear::init(c, cfg.out_dim, &mut rng)?,
            });
        }
        let fuse = Conv3x3::init(cfg.out_dim, cfg.out_dim, &mut rng)?;
        if cfg.variant == super::Variant::HrsamPlusPlus {
            let mut ms_rng = SplitMix64::new(seed ^ MULTISCALE_STREAM);
            for s in &mut stages {
                s.ms_scan = Some(ScanBlock::init(c, cfg.ssm_state, &mut ms_rng)?);
            }
        }
        Ok(Self {
            patch_embed,
            pad,
            stages,
            fuse,
        })
    }

    /// Every parameter with its dotted name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        named!(self,)
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        named!(self, mut)
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks every shape against `cfg`.
    pub fn check(&self, cfg: &EncoderConfig) -> Result<()> {
        let reference = Self::skeleton(cfg)?;
        let want = reference.named();
        let have = self.named();
        if want.len() != have.len() {
            return shape_err(format!(
                "weights hold {} tensors, config needs {}",
                have.len(),
                want.len()
            ));
        }
        for ((name, a), (_, b)) in want.iter().zip(&have) {
            if a.shape() != b.shape() {
                return shape_err(format!("{name}: shape {:?}, config needs {:?}", b.shape(), a.shape()));
            }
        }
        for s in &self.stages {
            s.scan.ssm.validate()?;
            if let Some(ms) = &s.ms_scan {
                ms.ssm.validate()?;
            }
        }
        Ok(())
    }

    /// Correctly shaped all-zero weights.
    fn skeleton(cfg: &EncoderConfig) -> Result<Self> {
        let mut w = Self::init(cfg, 0)?;
        for (_, t) in w.named_mut() {
            t.data_mut().fill(T::zero());
        }
        Ok(w)
    }

    /// One HRT1 file per parameter plus a `name=filename` manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        for (name, t) in self.named() {
            let file = format!("{name}.hrt");
            write_tensor(dir.join(&file), t)?;
            manifest.push_str(&format!("{name}={file}\n"));
        }
        fs::write(dir.join(MANIFEST), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path, cfg: &EncoderConfig) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| Error::Format(format!("{}: {e}", dir.join(MANIFEST).display())))?;
        let mut files = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, file) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line {} has no '='", i + 1)))?;
            files.insert(name.trim().to_string(), file.trim().to_string());
        }
        let mut w = Self::skeleton(cfg)?;
        let mut used = 0;
        for (name, slot) in w.named_mut() {
            let file = files
                .get(&name)
                .ok_or_else(|| Error::Format(format!("manifest has no entry for {name}")))?;
            let t = read_tensor::<T>(dir.join(file))?;
            if t.shape() != slot.shape() {
                return shape_err(format!("{name}: file shape {:?}, expected {:?}", t.shape(), slot.shape()));
            }
            *slot = t;
            used += 1;
        }
        if used != files.len() {
            return Err(Error::Format(format!(
                "manifest lists {} tensors, config uses {used}",
                files.len()
            )));
        }
        w.check(cfg)?;
        Ok(w)
    }
}
