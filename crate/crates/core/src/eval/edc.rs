//! Error-versus-discard characteristic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::rates::fnmr_at;

/// Quality of a comparison: the lower of its two sample qualities.
pub fn paired_quality(q1: f64, q2: f64) -> Result<f64> {
    for q in [q1, q2] {
        if !(0.0..=100.0).contains(&q) {
            return Err(Error::invalid(format!("quality score {q} outside [0, 100]")));
        }
    }
    Ok(q1.min(q2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdcCurve {
    pub discard_fractions: Vec<f64>,
    pub fnmr: Vec<f64>,
    pub threshold_used: f64,
    /// Pairs left at each fraction.
    pub retained: Vec<usize>,
}

/// Index order in which pairs are discarded: ascending paired quality,
/// ties in input order.
pub fn discard_order(pairs: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    order
}

/// Number of pairs discarded at fraction `d` of `n`.
pub fn discard_count(d: f64, n: usize) -> usize {
    (d * n as f64).floor() as usize
}

/// FNMR at `t` while discarding the lowest-quality share of `pairs`, each
/// given as `(paired quality, mated score)`.
pub fn edc_curve(pairs: &[(f64, f64)], t: f64, fractions: &[f64]) -> Result<EdcCurve> {
    if pairs.is_empty() {
        return Err(Error::invalid("EDC needs at least one pair"));
    }
    if pairs.iter().any(|(q, s)| !q.is_finite() || !s.is_finite()) {
        return Err(Error::invalid("EDC pairs must be finite"));
    }
    if fractions.is_empty() {
        return Err(Error::invalid("EDC needs at least one discard fraction"));
    }
    for (i, &d) in fractions.iter().enumerate() {
        if !(0.0..1.0).contains(&d) {
            return Err(Error::invalid(format!("discard fraction {d} outside [0, 1)")));
        }
        if i > 0 && d <= fractions[i - 1] {
            return Err(Error::invalid("discard fractions must be strictly increasing"));
        }
    }
    let order = discard_order(pairs);
    let n = pairs.len();
    let mut fnmr = Vec::with_capacity(fractions.len());
    let mut retained = Vec::with_capacity(fractions.len());
    for &d in fractions {
        let k = discard_count(d, n);
        if k >= n {
            return Err(Error::EmptyRetention(d));
        }
        let kept: Vec<f64> = order[k..].iter().map(|&i| pairs[i].1).collect();
        fnmr.push(fnmr_at(&kept, t)?);
        retained.push(kept.len());
    }
    Ok(EdcCurve {
        discard_fractions: fractions.to_vec(),
        fnmr,
        threshold_used: t,
        retained,
    })
}

/// `steps` evenly spaced fractions `0, 1/steps, ..` up to and excluding `max_fraction`.
pub fn default_fractions(max_fraction: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| max_fraction * i as f64 / steps as f64)
        .collect()
}
