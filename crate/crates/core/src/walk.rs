//! Identity-constrained walks along principal components.
//!
//! A base latent is pushed along a signed principal direction in fixed
//! increments. Every step is rendered and embedded; a step is kept while its
//! embedding still verifies against the base at the configured threshold,
//! and the walk along that direction stops at the first step that does not.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::{check_threshold, similarity, SampleRef, Session};
use crate::error::{check_dim, Error, Result};
use crate::latent::LatentVector;
use crate::pca::PrincipalBasis;

const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// A principal component (1-based, as in "first component") and a sign.
///
/// Serialized as `[component, sign]` with `sign` either `1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "(usize, i32)", into = "(usize, i32)")]
pub struct Direction {
    pub component: usize,
    pub sign: Sign,
}

impl Direction {
    pub fn new(component: usize, sign: Sign) -> Result<Self> {
        if component == 0 {
            return Err(Error::invalid("component indices start at 1"));
        }
        Ok(Direction { component, sign })
    }

    pub fn plus(component: usize) -> Self {
        Direction::new(component, Sign::Plus).expect("component >= 1")
    }

    pub fn minus(component: usize) -> Self {
        Direction::new(component, Sign::Minus).expect("component >= 1")
    }
}

impl TryFrom<(usize, i32)> for Direction {
    type Error = Error;

    fn try_from((component, sign): (usize, i32)) -> Result<Self> {
        let sign = match sign {
            1 => Sign::Plus,
            -1 => Sign::Minus,
            other => return Err(Error::invalid(format!("direction sign must be 1 or -1, got {other}"))),
        };
        Direction::new(component, sign)
    }
}

impl From<Direction> for (usize, i32) {
    fn from(d: Direction) -> Self {
        (d.component, d.sign.factor() as i32)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.sign {
            Sign::Plus => 'p',
            Sign::Minus => 'm',
        };
        write!(f, "pc{}{}", self.component, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SavePolicy {
    /// Keep every recognised step.
    EveryStep,
    /// Keep only the last recognised step of each direction.
    #[default]
    Furthest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub step_size: f64,
    pub threshold: f64,
    pub max_steps: usize,
    pub directions: Vec<Direction>,
    pub save_policy: SavePolicy,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            step_size: 0.2,
            threshold: 0.8,
            max_steps: 200,
            directions: vec![Direction::plus(1), Direction::plus(2)],
            save_policy: SavePolicy::Furthest,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!("step_size must be positive, got {}", self.step_size)));
        }
        check_threshold(self.threshold)?;
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        Ok(())
    }
}

/// One saved mated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MatedRecord {
    pub base_id: String,
    pub direction: Direction,
    pub steps: usize,
    /// `steps * step_size`.
    pub distance: f64,
    pub latent: LatentVector,
    pub similarity_to_base: f64,
    pub sample: SampleRef,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WalkOutcome {
    pub records: Vec<MatedRecord>,
    /// Directions whose first step already failed verification.
    pub failed: Vec<Direction>,
    /// Directions that were still recognised when `max_steps` ran out.
    pub truncated: Vec<Direction>,
}

/// `w + distance * c` for a unit direction `c`.
pub fn shift_in_lspace(w: &LatentVector, c: &LatentVector, distance: f64) -> Result<LatentVector> {
    check_dim(w.dim(), c.dim())?;
    let norm = c.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("shift direction must be unit length, has norm {norm}")));
    }
    w.add_scaled(c, distance)
}

pub fn mated_id(base_id: &str, direction: Direction, steps: usize) -> String {
    format!("{base_id}-{direction}-s{steps:03}")
}

/// Walk `w` along every configured direction of `basis`.
///
/// The base is rendered under `base_id` and embedded once. Mated samples are
/// rendered under [`mated_id`].
pub fn guided_walk(
    session: &mut Session,
    base_id: &str,
    w: &LatentVector,
    basis: &PrincipalBasis,
    cfg: &WalkConfig,
) -> Result<WalkOutcome> {
    guided_walk_placed(session, base_id, w, basis, cfg, |v| Ok(v))
}

/// As [`guided_walk`], but every moved latent passes through `place` before
/// it is rendered; records carry the placed latent.
///
/// Used to walk on exactly the values a lossy store will hand back later.
pub fn guided_walk_placed(
    session: &mut Session,
    base_id: &str,
    w: &LatentVector,
    basis: &PrincipalBasis,
    cfg: &WalkConfig,
    place: impl Fn(LatentVector) -> Result<LatentVector>,
) -> Result<WalkOutcome> {
    cfg.validate()?;
    check_dim(session.dim(), w.dim())?;
    check_dim(basis.dim(), w.dim())?;
    for d in &cfg.directions {
        if basis.component(d.component - 1).is_none() {
            return Err(Error::invalid(format!(
                "direction {d} needs component {}, basis has {}",
                d.component,
                basis.len()
            )));
        }
    }

    let base_ref = session.generate(base_id, w)?;
    let base = session.embed(&base_ref)?;
    let mut outcome = WalkOutcome::default();

    for &direction in &cfg.directions {
        let c = basis.component(direction.component - 1).expect("checked above");
        let c = match direction.sign {
            Sign::Plus => c.clone(),
            Sign::Minus => c.negated(),
        };
        let mut kept: Vec<MatedRecord> = Vec::new();
        let mut scratch: Vec<String> = Vec::new();
        let mut still_recognised = false;
        for i in 1..=cfg.max_steps {
            let distance = i as f64 * cfg.step_size;
            let moved = place(shift_in_lspace(w, &c, distance)?)?;
            let id = mated_id(base_id, direction, i);
            let sample = session.generate(&id, &moved)?;
            let score = similarity(&base, &session.embed(&sample)?)?;
            still_recognised = score >= cfg.threshold;
            if !still_recognised {
                scratch.push(id);
                break;
            }
            let record = MatedRecord {
                base_id: base_id.to_string(),
                direction,
                steps: i,
                distance,
                latent: moved,
                similarity_to_base: score,
                sample,
            };
            match cfg.save_policy {
                SavePolicy::EveryStep => kept.push(record),
                SavePolicy::Furthest => {
                    if let Some(prev) = kept.pop() {
                        scratch.push(prev.sample.id);
                    }
                    kept.push(record);
                }
            }
        }
        session.release(scratch.iter().map(String::as_str));
        if kept.is_empty() {
            outcome.failed.push(direction);
        } else if still_recognised {
            outcome.truncated.push(direction);
        }
        outcome.records.extend(kept);
    }
    Ok(outcome)
}
