use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 9;
pub const DEFAULT_EPSILON: f64 = 0.01;
/// Absolute floor on the denominator of the relative change.
pub const CHANGE_FLOOR: f64 = 1e-12;

/// `|v[t] - v[t-1]| / max(|v[t-1]|, 1e-12)` for `t >= 1`; index 0 is unused.
pub fn relative_changes(series: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; series.len()];
    for t in 1..series.len() {
        out[t] = (series[t] - series[t - 1]).abs() / series[t - 1].abs().max(CHANGE_FLOOR);
    }
    out
}

/// Smallest epoch `e` that starts a flat stretch of `window` epochs.
///
/// The stretch is epochs `e ..= e + window - 1`; every step inside it,
/// `t` in `e + 1 ..= e + window - 1`, must have a relative change below
/// `epsilon`. The stretch must fit in the series. With 60 epochs and
/// window 9, epoch 51 is the latest epoch that can be reported.
pub fn detect_plateau(series: &[f64], window: usize, epsilon: f64) -> Result<Option<usize>> {
    if window == 0 {
        return Err(Error::invalid("plateau window must be at least 1"));
    }
    if series.len() < window + 1 {
        return Err(Error::invalid(format!(
            "series of {} epochs is too short for window {window}",
            series.len()
        )));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} must be positive")));
    }
    if let Some(v) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("series value {v} is not finite")));
    }
    if window == 1 {
        return Ok(Some(0));
    }
    let changes = relative_changes(series);
    // Length of the run of small changes ending at each epoch.
    let mut run = 0usize;
    for (t, &change) in changes.iter().enumerate().skip(1) {
        run = if change < epsilon { run + 1 } else { 0 };
        if run + 1 >= window {
            return Ok(Some(t + 1 - window));
        }
    }
    Ok(None)
}
