//! Evaluation of oriented ground-plane detections: rotated IoU, greedy
//! matching, all-point average precision and altitude accuracy.

pub mod ap;
pub mod iou;
pub mod matching;
pub mod report;

pub use ap::{average_precision, pr_curve, PrPoint};
pub use iou::{polygon_area, rotated_iou};
pub use matching::{match_greedy, MatchLabel};
pub use report::{cell_altitude_accuracy, evaluate, EvalError, EvalReport, ThresholdResult, ALTITUDE_IOU, IOU_THRESHOLDS, METRIC_NOTE};
