//! Error rates at a decision threshold.
//!
//! A comparison is accepted when its score is `>= t`, so FNMR counts mated
//! scores strictly below `t` and FMR counts non-mated scores at or above it.

use crate::error::{Error, Result};

pub(crate) fn check_scores(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid(format!("{what} score list is empty")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("{what} scores must be finite")));
    }
    Ok(())
}

pub fn fnmr_at(mated: &[f64], t: f64) -> Result<f64> {
    check_scores(mated, "mated")?;
    let below = mated.iter().filter(|&&s| s < t).count();
    Ok(below as f64 / mated.len() as f64)
}

pub fn fmr_at(nonmated: &[f64], t: f64) -> Result<f64> {
    check_scores(nonmated, "non-mated")?;
    let above = nonmated.iter().filter(|&&s| s >= t).count();
    Ok(above as f64 / nonmated.len() as f64)
}

/// Smallest score `t` with `fmr_at(nonmated, t) <= target`.
///
/// When even the largest score is too frequent (ties), the value just
/// above it is returned, which accepts nothing.
pub fn threshold_at_fmr(nonmated: &[f64], target: f64) -> Result<f64> {
    check_scores(nonmated, "non-mated")?;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("target FMR must lie in (0, 1), got {target}")));
    }
    let mut sorted = nonmated.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        let at_or_above = n - i;
        if at_or_above as f64 / n as f64 <= target {
            return Ok(sorted[i]);
        }
        let v = sorted[i];
        while i < n && sorted[i] == v {
            i += 1;
        }
    }
    Ok(sorted[n - 1].next_up())
}
