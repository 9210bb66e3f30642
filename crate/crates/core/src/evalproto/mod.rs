//! Click-simulation evaluation: IoU, next-click placement, sessions and
//! the NoC / 5-mIoU aggregates.

mod click;
mod edt;
mod mask;
mod session;

pub use click::{next_click, Click, Polarity};
pub use edt::squared_edt;
pub use mask::{iou, BinaryMask};
pub use session::{
    five_miou, noc, run_session, OraclePredictor, Predictor, ScriptedPredictor, SessionResult,
    DEFAULT_TARGETS, MAX_CLICKS,
};
