//! Scaling benchmarks with CSV output.
//!
//! Columns: `kind,impl,tokens,dtype,repeat,micros,peak_scratch_elems,median_micros`.
//! `micros` is wall-clock around the kernel call only; `median_micros` is
//! the median over the repeats of the same `(kind, impl, tokens)` group.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use hrsam_core::attention::{
    block_diagonal_attention, flash_attention, naive_attention, scratch_report, AttnConfig, BlockSpec,
};
use hrsam_core::encoder::{encoder_forward, EncoderWeights, ForwardOptions};
use hrsam_core::rng::rng_fill;
use hrsam_core::tensor::gather;
use hrsam_core::window::plain_window_layout;
use hrsam_core::{DType, Scalar, Tensor};

use crate::{CliError, RunConfig};

pub const HEADER: &str = "kind,impl,tokens,dtype,repeat,micros,peak_scratch_elems,median_micros";
pub const KINDS: [&str; 3] = ["attn_scaling", "mem_scaling", "encoder"];
pub const IMPLS: [&str; 3] = ["naive", "flash", "windowed"];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub kind: String,
    pub imp: String,
    pub tokens: usize,
    pub dtype: DType,
    pub repeat: usize,
    pub micros: u128,
    pub peak_scratch_elems: usize,
    pub median_micros: u128,
}

impl Row {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.kind,
            self.imp,
            self.tokens,
            self.dtype.name(),
            self.repeat,
            self.micros,
            self.peak_scratch_elems,
            self.median_micros
        )
    }
}

fn median(mut v: Vec<u128>) -> u128 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

pub fn cmd_bench(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let kind = cfg
        .kind
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("--kind is required ({})", KINDS.join(", "))))?;
    if !KINDS.contains(&kind) {
        return Err(CliError::Usage(format!("unknown kind '{kind}'; expected {}", KINDS.join(", "))));
    }
    let path = cfg.require_out()?.to_path_buf();
    let rows = match cfg.dtype()? {
        DType::F32 => run_bench::<f32>(kind, cfg)?,
        DType::F64 => run_bench::<f64>(kind, cfg)?,
    };
    write_csv(&path, &rows)?;
    writeln!(out, "wrote {} rows to {}", rows.len(), path.display())?;
    Ok(())
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let mut text = String::from(HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

pub fn run_bench<T: Scalar>(kind: &str, cfg: &RunConfig) -> Result<Vec<Row>, CliError> {
    let repeats = cfg.repeats.unwrap_or(3);
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let mut groups = Vec::new();
    if kind == "encoder" {
        let sizes = cfg.sizes.clone().unwrap_or_else(|| vec![256, 512]);
        let ecfg = cfg.encoder_config()?;
        for &side in &sizes {
            ecfg.check_image(side, side).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        let weights = EncoderWeights::<T>::init(&ecfg, cfg.seed())?;
        let opts = ForwardOptions {
            threads: cfg.threads()?,
            tile: cfg.tile()?,
            ..Default::default()
        };
        for side in sizes {
            let img = rng_fill::<T>(&[side, side, 3], cfg.seed(), 0.0, 1.0)?;
            let mut runs = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let t = Instant::now();
                let y = encoder_forward(&img, &ecfg, &weights, &opts)?;
                runs.push((t.elapsed().as_micros(), 0));
                drop(y);
            }
            let tokens = (side / ecfg.patch) * (side / ecfg.patch);
            groups.push((ecfg.variant.name().to_string(), tokens, runs));
        }
    } else {
        let impls = cfg
            .impls
            .clone()
            .unwrap_or_else(|| IMPLS.iter().map(|s| s.to_string()).collect());
        if let Some(bad) = impls.iter().find(|i| !IMPLS.contains(&i.as_str())) {
            return Err(CliError::Usage(format!("unknown impl '{bad}'; expected {}", IMPLS.join(", "))));
        }
        let sizes = cfg.sizes.clone().unwrap_or_else(|| vec![1024, 4096]);
        let d = cfg.head_dim.unwrap_or(64);
        let win = cfg.window.unwrap_or(16);
        if d == 0 || win == 0 {
            return Err(CliError::Usage("--head-dim and --window must be positive".into()));
        }
        let acfg = AttnConfig::new(d).with_tile(cfg.tile()?).with_threads(cfg.threads()?);
        for &l in &sizes {
            if l == 0 {
                return Err(CliError::Usage("sizes must be positive".into()));
            }
            if impls.iter().any(|i| i == "windowed") {
                let side = (l as f64).sqrt().round() as usize;
                if side * side != l || side % win != 0 {
                    return Err(CliError::Usage(format!(
                        "windowed needs a square token count whose side is a multiple of {win}; got {l}"
                    )));
                }
            }
        }
        for l in sizes {
            let s = cfg.seed().wrapping_add(l as u64);
            let q = rng_fill::<T>(&[l, d], s, -1.0, 1.0)?;
            let k = rng_fill::<T>(&[l, d], s.wrapping_add(1), -1.0, 1.0)?;
            let v = rng_fill::<T>(&[l, d], s.wrapping_add(2), -1.0, 1.0)?;
            for imp in &impls {
                let mut runs = Vec::with_capacity(repeats);
                for _ in 0..repeats {
                    runs.push(time_attention(imp, &q, &k, &v, &acfg, win)?);
                }
                groups.push((imp.clone(), l, runs));
            }
        }
    }
    let dtype = T::DTYPE;
    let mut rows = Vec::new();
    for (imp, tokens, runs) in groups {
        let med = median(runs.iter().map(|r| r.0).collect());
        for (i, (micros, peak)) in runs.into_iter().enumerate() {
            rows.push(Row {
                kind: kind.to_string(),
                imp: imp.clone(),
                tokens,
                dtype,
                repeat: i,
                micros,
                peak_scratch_elems: peak,
                median_micros: med,
            });
        }
    }
    Ok(rows)
}

/// One timed call; returns `(micros, peak scratch elements)`.
fn time_attention<T: Scalar>(
    imp: &str,
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    cfg: &AttnConfig,
    win: usize,
) -> Result<(u128, usize), CliError> {
    let l = q.shape()[0];
    let micros = match imp {
        "naive" => {
            let t = Instant::now();
            let y = naive_attention(q, k, v, cfg, None)?;
            let m = t.elapsed().as_micros();
            drop(y);
            m
        }
        "flash" => {
            let t = Instant::now();
            let y = flash_attention(q, k, v, cfg)?;
            let m = t.elapsed().as_micros();
            drop(y);
            m
        }
        "windowed" => {
            let side = (l as f64).sqrt().round() as usize;
            let layout = plain_window_layout(side, side, win)?;
            let (q, k, v) = (gather(q, &layout.map, None)?, gather(k, &layout.map, None)?, gather(v, &layout.map, None)?);
            let blocks = BlockSpec::uniform(win * win, layout.num_windows())?;
            let t = Instant::now();
            let y = block_diagonal_attention(&q, &k, &v, &blocks, cfg)?;
            let m = t.elapsed().as_micros();
            drop(y);
            m
        }
        other => unreachable!("impl {other} validated by caller"),
    };
    Ok((micros, scratch_report().peak_scratch_elems))
}
