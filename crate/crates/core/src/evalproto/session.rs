use super::click::{next_click, Click};
use super::mask::{iou, BinaryMask};
use crate::error::{contract_err, shape_err, Result};

/// Clicks per session and the NoC value of a session that never reaches τ.
pub const MAX_CLICKS: usize = 20;

/// IoU targets at which a session may stop early.
pub const DEFAULT_TARGETS: [f64; 2] = [0.90, 0.95];

/// Produces a mask from the clicks placed so far.
pub trait Predictor {
    fn predict(&mut self, clicks: &[Click]) -> Result<BinaryMask>;
}

impl<F: FnMut(&[Click]) -> Result<BinaryMask>> Predictor for F {
    fn predict(&mut self, clicks: &[Click]) -> Result<BinaryMask> {
        self(clicks)
    }
}

/// Returns the ground truth on every click.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub gt: BinaryMask,
}

impl Predictor for OraclePredictor {
    fn predict(&mut self, _clicks: &[Click]) -> Result<BinaryMask> {
        Ok(self.gt.clone())
    }
}

/// Replays fixed masks, one per click; the last one repeats.
#[derive(Debug, Clone)]
pub struct ScriptedPredictor {
    pub masks: Vec<BinaryMask>,
}

impl Predictor for ScriptedPredictor {
    fn predict(&mut self, clicks: &[Click]) -> Result<BinaryMask> {
        let Some(last) = self.masks.len().checked_sub(1) else {
            return contract_err("scripted predictor has no masks");
        };
        Ok(self.masks[clicks.len().saturating_sub(1).min(last)].clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    /// IoU after each click.
    pub ious: Vec<f64>,
    pub clicks: Vec<Click>,
}

impl SessionResult {
    /// First 1-based click count with IoU ≥ τ, [`MAX_CLICKS`] if none.
    pub fn noc(&self, tau: f64) -> f64 {
        self.ious
            .iter()
            .position(|&v| v >= tau)
            .map_or(MAX_CLICKS, |k| k + 1) as f64
    }

    /// IoU after click `k` (1-based); a session that stopped earlier
    /// carries its final IoU forward.
    pub fn iou_at(&self, k: usize) -> f64 {
        self.ious[(k - 1).min(self.ious.len() - 1)]
    }
}

/// Simulated interactive session starting from an empty prediction.
///
/// Stops after `max_clicks` or once every target IoU has been reached.
pub fn run_session<P: Predictor + ?Sized>(
    predictor: &mut P,
    gt: &BinaryMask,
    max_clicks: usize,
    targets: &[f64],
) -> Result<SessionResult> {
    if max_clicks == 0 {
        return contract_err("max_clicks must be at least 1");
    }
    if gt.is_empty() {
        return contract_err("ground-truth mask is empty");
    }
    if let Some(t) = targets.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        return contract_err(format!("IoU target {t} outside (0, 1]"));
    }
    let mut pred = BinaryMask::empty(gt.h(), gt.w())?;
    let mut result = SessionResult {
        ious: Vec::with_capacity(max_clicks),
        clicks: Vec::with_capacity(max_clicks),
    };
    for _ in 0..max_clicks {
        result.clicks.push(next_click(&pred, gt)?);
        pred = predictor.predict(&result.clicks)?;
        if (pred.h(), pred.w()) != (gt.h(), gt.w()) {
            return shape_err(format!(
                "predictor returned {}x{}, ground truth is {}x{}",
                pred.h(),
                pred.w(),
                gt.h(),
                gt.w()
            ));
        }
        let v = iou(&pred, gt)?;
        result.ious.push(v);
        if targets.iter().all(|&t| result.ious.iter().any(|&i| i >= t)) || v == 1.0 {
            break;
        }
    }
    Ok(result)
}

fn check_nonempty(results: &[SessionResult]) -> Result<()> {
    if results.is_empty() {
        return contract_err("no sessions to aggregate");
    }
    Ok(())
}

/// Mean number of clicks to reach IoU τ, capped at [`MAX_CLICKS`].
pub fn noc(results: &[SessionResult], tau: f64) -> Result<f64> {
    check_nonempty(results)?;
    Ok(results.iter().map(|r| r.noc(tau)).sum::<f64>() / results.len() as f64)
}

/// Mean IoU after the fifth click.
pub fn five_miou(results: &[SessionResult]) -> Result<f64> {
    check_nonempty(results)?;
    Ok(results.iter().map(|r| r.iou_at(5)).sum::<f64>() / results.len() as f64)
}
