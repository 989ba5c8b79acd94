//! Loss components, training-log ingestion and plateau detection.
//!
//! The losses are simple reference formulas for inspecting model outputs;
//! they do not reproduce a detector's internal training objective.

mod log;
mod losses;
mod plateau;

pub use log::{
    has_map50, has_map50_95, parse_training_log, read_training_log, training_log_to_csv, EpochLog, EPOCH_LOG_HEADER,
};
pub use losses::{
    bbox_regression_loss, classification_loss, objectness_loss, total_loss, ClassDistribution, DISTRIBUTION_TOLERANCE,
    PROBABILITY_FLOOR,
};
pub use plateau::{detect_plateau, relative_changes, CHANGE_FLOOR, DEFAULT_EPSILON, DEFAULT_WINDOW};
