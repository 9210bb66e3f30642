//! `eval`: click sessions over a directory of ground-truth masks.
//!
//! Ground truth: `*.pgm` (pixel ≥ 128 is set) and `*.hrt` / `*.hrt1`
//! rank-2 tensors (value ≥ 0.5 is set), taken in file-name order.
//!
//! `scripted:<dir>` replays `<dir>/<sample>/*.pgm` in file-name order, one
//! mask per click, repeating the last one.
//!
//! CSV columns: `sample,clicks,noc90,noc95,miou5`, one row per sample and a
//! final `mean` row.

use std::io::Write;
use std::path::{Path, PathBuf};

use hrsam_core::evalproto::{
    five_miou, noc, run_session, BinaryMask, OraclePredictor, ScriptedPredictor, SessionResult, DEFAULT_TARGETS,
    MAX_CLICKS,
};
use hrsam_core::io::{read_any, AnyTensor};

use crate::{CliError, RunConfig};

pub const HEADER: &str = "sample,clicks,noc90,noc95,miou5";

fn sorted_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e?.path();
        let ext = p.extension().and_then(|x| x.to_str()).unwrap_or("").to_ascii_lowercase();
        if p.is_file() && exts.contains(&ext.as_str()) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask, CliError> {
    let ext = path.extension().and_then(|x| x.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("pgm") {
        return Ok(BinaryMask::read_pgm(path)?);
    }
    Ok(match read_any(path)? {
        AnyTensor::F32(t) => BinaryMask::from_tensor(&t)?,
        AnyTensor::F64(t) => BinaryMask::from_tensor(&t)?,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("?").to_string()
}

pub fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let gt_dir = cfg
        .gt_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("--gt-dir is required".into()))?;
    let dest = cfg.require_out()?;
    let files = sorted_files(gt_dir, &["pgm", "hrt", "hrt1"])?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no ground-truth masks in {}", gt_dir.display())));
    }
    let predictor = cfg.predictor.as_deref().unwrap_or("oracle");
    let script_dir = match predictor {
        "oracle" => None,
        p => match p.strip_prefix("scripted:") {
            Some(d) => Some(PathBuf::from(d)),
            None => {
                return Err(CliError::Usage(format!(
                    "unknown predictor '{p}' (oracle or scripted:<dir>)"
                )))
            }
        },
    };

    let mut csv = format!("{HEADER}\n");
    let mut sessions = Vec::with_capacity(files.len());
    for path in &files {
        let gt = read_mask(path)?;
        let name = stem(path);
        let result = match &script_dir {
            None => run_session(&mut OraclePredictor { gt: gt.clone() }, &gt, MAX_CLICKS, &DEFAULT_TARGETS)?,
            Some(dir) => {
                let masks = sorted_files(&dir.join(&name), &["pgm"])?
                    .iter()
                    .map(|p| read_mask(p))
                    .collect::<Result<Vec<_>, _>>()?;
                if masks.is_empty() {
                    return Err(CliError::Failure(format!("no scripted masks for sample {name}")));
                }
                run_session(&mut ScriptedPredictor { masks }, &gt, MAX_CLICKS, &DEFAULT_TARGETS)?
            }
        };
        csv.push_str(&row(&name, &result));
        sessions.push(result);
    }
    let clicks = sessions.iter().map(|s| s.clicks.len()).sum::<usize>() as f64 / sessions.len() as f64;
    csv.push_str(&format!(
        "mean,{clicks:.4},{:.4},{:.4},{:.6}\n",
        noc(&sessions, 0.90)?,
        noc(&sessions, 0.95)?,
        five_miou(&sessions)?
    ));
    std::fs::write(dest, csv).map_err(|e| CliError::Failure(format!("{}: {e}", dest.display())))?;
    writeln!(
        out,
        "{} samples: NoC90={:.4} NoC95={:.4} 5-mIoU={:.6}",
        sessions.len(),
        noc(&sessions, 0.90)?,
        noc(&sessions, 0.95)?,
        five_miou(&sessions)?
    )?;
    Ok(())
}

fn row(name: &str, r: &SessionResult) -> String {
    format!(
        "{name},{},{:.4},{:.4},{:.6}\n",
        r.clicks.len(),
        r.noc(0.90),
        r.noc(0.95),
        r.iou_at(5)
    )
}
