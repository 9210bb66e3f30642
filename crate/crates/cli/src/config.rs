//! Run configuration: a JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use hrsam_core::encoder::{EncoderConfig, Variant};
use hrsam_core::DType;
use serde::Deserialize;

use crate::CliError;

/// Options shared by every command. Any of them may also come from the
/// `--config` JSON file; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Verification suite: softmax, flash, blockdiag, window, ssm,
    /// multiscale, encoder, eval or all.
    #[arg(long, global = true)]
    pub suite: Option<String>,
    /// Comma-separated sizes (tokens for attention benchmarks, image sides
    /// in pixels for encoder benchmarks).
    #[arg(long, global = true, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Key/value rows per tile in the streaming kernels.
    #[arg(long, global = true)]
    pub tile: Option<usize>,
    /// Window side in tokens.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Encoder variant: hrsam or hrsampp.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Element type: f32 or f64.
    #[arg(long, global = true)]
    pub dtype: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for attention kernels.
    #[arg(long, global = true, env = "HRSAM_THREADS")]
    pub threads: Option<usize>,
    /// Output path (CSV, HRT1 file or weights directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Encoder preset: toy, tiny or base.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Disable the auxiliary scale of the multi-scale variant.
    #[arg(long, global = true)]
    #[serde(default)]
    pub single_scale: bool,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub heads: Option<usize>,
    #[arg(long, global = true)]
    pub aux_size: Option<usize>,
    #[arg(long, global = true)]
    pub out_dim: Option<usize>,

    /// Benchmark kind: attn_scaling, mem_scaling or encoder.
    #[arg(long, global = true)]
    pub kind: Option<String>,
    /// Comma-separated benchmark implementations (naive, flash, windowed).
    #[arg(long, global = true, value_delimiter = ',')]
    pub impls: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    /// Head width used by attention benchmarks.
    #[arg(long, global = true)]
    pub head_dim: Option<usize>,

    #[arg(long, global = true)]
    pub image: Option<PathBuf>,
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    #[arg(long, global = true)]
    pub gt_dir: Option<PathBuf>,
    /// Click predictor: `oracle` or `scripted:<dir>`.
    #[arg(long, global = true)]
    pub predictor: Option<String>,
}

macro_rules! overlay {
    ($base:ident, $top:ident: $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_json(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// `self` with every flag set in `flags` replacing the file value.
    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        overlay!(self, flags: suite, sizes, tile, window, variant, dtype, seed, threads, out,
            preset, dim, heads, aux_size, out_dim, kind, impls, repeats, head_dim, image,
            weights, gt_dir, predictor);
        self.single_scale |= flags.single_scale;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn threads(&self) -> Result<usize, CliError> {
        match self.threads {
            Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(1),
        }
    }

    pub fn tile(&self) -> Result<usize, CliError> {
        match self.tile {
            Some(0) => Err(CliError::Usage("--tile must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(64),
        }
    }

    pub fn dtype(&self) -> Result<DType, CliError> {
        match self.dtype.as_deref() {
            None | Some("f64") => Ok(DType::F64),
            Some("f32") => Ok(DType::F32),
            Some(other) => Err(CliError::Usage(format!("unknown dtype '{other}' (f32 or f64)"))),
        }
    }

    pub fn require_out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig, CliError> {
        let mut cfg = match self.preset.as_deref() {
            None | Some("toy") => EncoderConfig::toy(),
            Some("tiny") => EncoderConfig::tiny(),
            Some("base") => EncoderConfig::default(),
            Some(other) => {
                return Err(CliError::Usage(format!("unknown preset '{other}' (toy, tiny or base)")))
            }
        };
        if let Some(v) = &self.variant {
            cfg.variant = Variant::parse(v)
                .ok_or_else(|| CliError::Usage(format!("unknown variant '{v}' (hrsam or hrsampp)")))?;
        }
        cfg.window = self.window.unwrap_or(cfg.window);
        cfg.dim = self.dim.unwrap_or(cfg.dim);
        cfg.heads = self.heads.unwrap_or(cfg.heads);
        cfg.aux_size = self.aux_size.unwrap_or(cfg.aux_size);
        cfg.out_dim = self.out_dim.unwrap_or(cfg.out_dim);
        cfg.multiscale = !self.single_scale;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: RunConfig = serde_json::from_str(r#"{"seed": 3, "tile": 7, "sizes": [1, 2]}"#).unwrap();
        let flags = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overlay(&flags);
        assert_eq!(merged.seed(), 9);
        assert_eq!(merged.tile().unwrap(), 7);
        assert_eq!(merged.sizes, Some(vec![1, 2]));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 3}"#).is_err());
    }

    #[test]
    fn encoder_overrides() {
        let c = RunConfig {
            variant: Some("hrsampp".into()),
            window: Some(4),
            ..Default::default()
        };
        let e = c.encoder_config().unwrap();
        assert_eq!(e.variant, Variant::HrsamPlusPlus);
        assert_eq!(e.window, 4);
        assert!(RunConfig { variant: Some("x".into()), ..Default::default() }.encoder_config().is_err());
    }
}
