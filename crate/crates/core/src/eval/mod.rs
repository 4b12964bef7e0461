//! Verification statistics over comparison scores.

pub mod density;
pub mod edc;
pub mod rates;
pub mod report;
pub mod scores;

pub use density::{kde, kl_divergence, silverman_bandwidth, DensityCurve, DEFAULT_GRID_POINTS};
pub use edc::{edc_curve, paired_quality, EdcCurve};
pub use rates::{fmr_at, fnmr_at, threshold_at_fmr};
pub use report::{emit_report, KlMatrix, ReportBundle};
pub use scores::{collect_scores, MatedScore, NonMatedScore, ScoreSets};
