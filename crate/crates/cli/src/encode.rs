//! `encode` and `init-weights`.

use std::io::Write;
use std::time::Instant;

use hrsam_core::encoder::{encoder_forward, load_image, EncoderWeights, ForwardOptions, Variant, MANIFEST};
use hrsam_core::io::write_tensor;
use hrsam_core::{DType, Scalar};

use crate::{CliError, RunConfig};

pub fn cmd_init_weights(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = cfg.require_out()?;
    let ecfg = cfg.encoder_config()?;
    let count = match cfg.dtype()? {
        DType::F32 => save::<f32>(&ecfg, cfg.seed(), dir)?,
        DType::F64 => save::<f64>(&ecfg, cfg.seed(), dir)?,
    };
    writeln!(out, "wrote {count} parameters to {}", dir.display())?;
    Ok(())
}

fn save<T: Scalar>(
    ecfg: &hrsam_core::encoder::EncoderConfig,
    seed: u64,
    dir: &std::path::Path,
) -> Result<usize, CliError> {
    let w = EncoderWeights::<T>::init(ecfg, seed)?;
    w.save(dir)?;
    Ok(w.num_params())
}

pub fn cmd_encode(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let image = cfg
        .image
        .as_deref()
        .ok_or_else(|| CliError::Usage("--image is required".into()))?;
    let weights = cfg
        .weights
        .as_deref()
        .ok_or_else(|| CliError::Usage("--weights is required".into()))?;
    let dest = cfg.require_out()?;
    let mut ecfg = cfg.encoder_config()?;
    if cfg.variant.is_none() {
        ecfg.variant = saved_variant(weights);
    }
    let opts = ForwardOptions {
        threads: cfg.threads()?,
        tile: cfg.tile()?,
        ..Default::default()
    };
    let (shape, micros) = match cfg.dtype()? {
        DType::F32 => encode::<f32>(image, weights, dest, &ecfg, &opts)?,
        DType::F64 => encode::<f64>(image, weights, dest, &ecfg, &opts)?,
    };
    writeln!(out, "shape={shape:?} elapsed_ms={:.1}", micros as f64 / 1000.0)?;
    Ok(())
}

/// Variant implied by a weights directory; multi-scale weights carry `ms_scan` entries.
fn saved_variant(dir: &std::path::Path) -> Variant {
    let manifest = std::fs::read_to_string(dir.join(MANIFEST)).unwrap_or_default();
    if manifest.lines().any(|l| l.contains(".ms_scan.")) {
        Variant::HrsamPlusPlus
    } else {
        Variant::Hrsam
    }
}

fn encode<T: Scalar>(
    image: &std::path::Path,
    weights: &std::path::Path,
    dest: &std::path::Path,
    ecfg: &hrsam_core::encoder::EncoderConfig,
    opts: &ForwardOptions,
) -> Result<(Vec<usize>, u128), CliError> {
    if !weights.is_dir() {
        return Err(CliError::Failure(format!("weights directory {} not found", weights.display())));
    }
    let w = EncoderWeights::<T>::load(weights, ecfg)?;
    let img = load_image::<T>(image)?;
    let t = Instant::now();
    let y = encoder_forward(&img, ecfg, &w, opts)?;
    let micros = t.elapsed().as_micros();
    write_tensor(dest, &y)?;
    Ok((y.shape().to_vec(), micros))
}
