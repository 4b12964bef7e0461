//! Capture-quality gates and stage bookkeeping.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::SampleMetadata;
use crate::error::{Error, Result};
use crate::manifest::{ManifestRecord, RecordKind};

/// Inclusive bounds a sample's metadata must satisfy.
///
/// The defaults are conventions for adult, near-frontal, evenly lit
/// captures; no published numbers exist for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub min_ied_px: f64,
    pub max_abs_yaw_deg: f64,
    pub max_abs_pitch_deg: f64,
    pub illum_min: f64,
    pub illum_max: f64,
    pub age_min: f64,
    pub age_max: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            min_ied_px: 90.0,
            max_abs_yaw_deg: 15.0,
            max_abs_pitch_deg: 15.0,
            illum_min: 0.2,
            illum_max: 0.8,
            age_min: 18.0,
            age_max: 70.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.min_ied_px,
            self.max_abs_yaw_deg,
            self.max_abs_pitch_deg,
            self.illum_min,
            self.illum_max,
            self.age_min,
            self.age_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gate bounds must be finite"));
        }
        if self.min_ied_px < 0.0 || self.max_abs_yaw_deg < 0.0 || self.max_abs_pitch_deg < 0.0 {
            return Err(Error::invalid("ied and pose bounds must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.illum_min) || !(0.0..=1.0).contains(&self.illum_max) {
            return Err(Error::invalid("illumination bounds must lie in [0, 1]"));
        }
        if self.illum_min > self.illum_max {
            return Err(Error::invalid("illum_min exceeds illum_max"));
        }
        if self.age_min < 0.0 || self.age_min > self.age_max {
            return Err(Error::invalid("age bounds must satisfy 0 <= age_min <= age_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reason {
    Ied,
    Illumination,
    Yaw,
    Pitch,
    Age,
}

impl Reason {
    pub const ALL: [Reason; 5] = [Reason::Ied, Reason::Illumination, Reason::Yaw, Reason::Pitch, Reason::Age];

    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Ied => "ied",
            Reason::Illumination => "illumination",
            Reason::Yaw => "yaw",
            Reason::Pitch => "pitch",
            Reason::Age => "age",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub passed: bool,
    pub reasons: BTreeSet<Reason>,
    /// Rejected because the subject's base sample was rejected.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inherited: bool,
    /// Gates skipped because the backend supplied no value for them.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub unchecked: BTreeSet<Reason>,
}

impl GateVerdict {
    fn from_reasons(reasons: BTreeSet<Reason>, unchecked: BTreeSet<Reason>) -> Self {
        GateVerdict {
            passed: reasons.is_empty(),
            reasons,
            inherited: false,
            unchecked,
        }
    }
}

pub fn evaluate_gates(m: &SampleMetadata, g: &GateConfig) -> Result<GateVerdict> {
    m.validate()?;
    let mut reasons = BTreeSet::new();
    let mut unchecked = BTreeSet::new();
    let mut gate = |reason: Reason, value: Option<f64>, ok: &dyn Fn(f64) -> bool| match value {
        Some(v) if !ok(v) => {
            reasons.insert(reason);
        }
        Some(_) => {}
        None => {
            unchecked.insert(reason);
        }
    };
    gate(Reason::Ied, m.ied_px, &|v| v >= g.min_ied_px);
    gate(Reason::Illumination, m.illum, &|v| v >= g.illum_min && v <= g.illum_max);
    gate(Reason::Yaw, m.yaw_deg, &|v| v.abs() <= g.max_abs_yaw_deg);
    gate(Reason::Pitch, m.pitch_deg, &|v| v.abs() <= g.max_abs_pitch_deg);
    gate(Reason::Age, m.age_years, &|v| v >= g.age_min && v <= g.age_max);
    Ok(GateVerdict::from_reasons(reasons, unchecked))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
}

impl StageCounts {
    fn add(&mut self, passed: bool) {
        self.total += 1;
        if passed {
            self.accepted += 1;
        } else {
            self.rejected += 1;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total_in: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub tallies: BTreeMap<Reason, usize>,
    /// Mated records rejected through their base.
    pub inherited: usize,
    /// Records with at least one gate skipped for missing metadata.
    pub unchecked: usize,
    pub by_kind: BTreeMap<RecordKind, StageCounts>,
}

impl FilterReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>9} {:>9} {:>9}", "kind", "total", "accepted", "rejected");
        for (kind, c) in &self.by_kind {
            let name = match kind {
                RecordKind::Base => "base",
                RecordKind::Mated => "mated",
            };
            let _ = writeln!(out, "{name:<14} {:>9} {:>9} {:>9}", c.total, c.accepted, c.rejected);
        }
        let _ = writeln!(out, "{:<14} {:>9} {:>9} {:>9}", "all", self.total_in, self.accepted, self.rejected);
        for r in Reason::ALL {
            let _ = writeln!(out, "  rejected for {:<13} {:>6}", r.as_str(), self.tallies.get(&r).copied().unwrap_or(0));
        }
        let _ = writeln!(out, "  inherited from base        {:>6}", self.inherited);
        out
    }
}

/// Annotate every record with a verdict.
///
/// Each record is judged on its own metadata; a mated record whose base is
/// present and rejected is rejected too, carrying the base's reasons and the
/// `inherited` flag. Output order matches input order.
pub fn filter_dataset(
    records: impl IntoIterator<Item = ManifestRecord>,
    g: &GateConfig,
) -> Result<(Vec<ManifestRecord>, FilterReport)> {
    g.validate()?;
    let mut records: Vec<ManifestRecord> = records.into_iter().collect();
    let mut seen = HashSet::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
        r.validate()?;
    }

    for r in records.iter_mut() {
        r.verdict = Some(evaluate_gates(&r.metadata, g)?);
    }
    let base_verdicts: HashMap<String, GateVerdict> = records
        .iter()
        .filter(|r| r.kind == RecordKind::Base)
        .map(|r| (r.subject_id.clone(), r.verdict.clone().expect("just set")))
        .collect();

    let mut report = FilterReport {
        total_in: records.len(),
        ..FilterReport::default()
    };
    for r in records.iter_mut() {
        let verdict = r.verdict.as_mut().expect("just set");
        if r.kind == RecordKind::Mated {
            if let Some(base) = base_verdicts.get(&r.subject_id).filter(|b| !b.passed) {
                verdict.reasons.extend(base.reasons.iter().copied());
                verdict.inherited = true;
                verdict.passed = false;
            }
        }
        if verdict.passed {
            report.accepted += 1;
        } else {
            report.rejected += 1;
        }
        if verdict.inherited {
            report.inherited += 1;
        }
        if !verdict.unchecked.is_empty() {
            report.unchecked += 1;
        }
        for reason in &verdict.reasons {
            *report.tallies.entry(*reason).or_default() += 1;
        }
        report.by_kind.entry(r.kind).or_default().add(verdict.passed);
    }
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::Direction;
    use proptest::prelude::*;

    fn ok_meta() -> SampleMetadata {
        SampleMetadata {
            ied_px: Some(120.0),
            yaw_deg: Some(3.0),
            pitch_deg: Some(-4.0),
            age_years: Some(40.0),
            illum: Some(0.5),
        }
    }

    fn mated(base: &str, id: &str, m: SampleMetadata) -> ManifestRecord {
        let mut r = ManifestRecord::base(id, m);
        r.subject_id = base.to_string();
        r.kind = RecordKind::Mated;
        r.direction = Some(Direction::plus(1));
        r.distance = Some(0.2);
        r.similarity_to_base = Some(0.9);
        r
    }

    #[test]
    fn gate_examples() {
        let g = GateConfig::default();
        let v = evaluate_gates(&ok_meta(), &g).unwrap();
        assert!(v.passed && v.reasons.is_empty());

        let m = SampleMetadata { yaw_deg: Some(40.0), ..ok_meta() };
        let v = evaluate_gates(&m, &g).unwrap();
        assert!(!v.passed);
        assert_eq!(v.reasons, BTreeSet::from([Reason::Yaw]));

        let m = SampleMetadata { yaw_deg: Some(-40.0), age_years: Some(12.0), ..ok_meta() };
        let v = evaluate_gates(&m, &g).unwrap();
        assert_eq!(v.reasons, BTreeSet::from([Reason::Yaw, Reason::Age]));
    }

    #[test]
    fn bounds_are_inclusive() {
        let g = GateConfig::default();
        let m = SampleMetadata {
            ied_px: Some(90.0),
            yaw_deg: Some(-15.0),
            pitch_deg: Some(15.0),
            age_years: Some(70.0),
            illum: Some(0.2),
        };
        assert!(evaluate_gates(&m, &g).unwrap().passed);
        let m = SampleMetadata { ied_px: Some(89.999), ..m };
        assert_eq!(evaluate_gates(&m, &g).unwrap().reasons, BTreeSet::from([Reason::Ied]));
    }

    #[test]
    fn missing_metadata_passes_with_a_flag() {
        let m = SampleMetadata { age_years: None, illum: None, ..ok_meta() };
        let v = evaluate_gates(&m, &GateConfig::default()).unwrap();
        assert!(v.passed);
        assert_eq!(v.unchecked, BTreeSet::from([Reason::Illumination, Reason::Age]));
    }

    #[test]
    fn non_finite_metadata_is_invalid() {
        let m = SampleMetadata { yaw_deg: Some(f64::NAN), ..ok_meta() };
        assert!(matches!(evaluate_gates(&m, &GateConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn counts_and_tallies() {
        let records: Vec<ManifestRecord> = (0..10)
            .map(|i| {
                let yaw = if i % 4 == 1 { 30.0 } else { 0.0 };
                ManifestRecord::base(format!("b{i}"), SampleMetadata { yaw_deg: Some(yaw), ..ok_meta() })
            })
            .collect();
        let (out, report) = filter_dataset(records, &GateConfig::default()).unwrap();
        assert_eq!(report.total_in, 10);
        assert_eq!(report.accepted, 7);
        assert_eq!(report.tallies[&Reason::Yaw], 3);
        assert_eq!(out.iter().filter(|r| r.is_accepted()).count(), 7);
    }

    #[test]
    fn empty_input() {
        let (out, report) = filter_dataset(Vec::new(), &GateConfig::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(report, FilterReport::default());
    }

    #[test]
    fn duplicate_ids_are_named() {
        let r = ManifestRecord::base("b0", ok_meta());
        let err = filter_dataset(vec![r.clone(), r], &GateConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "b0"));
    }

    #[test]
    fn mated_samples_inherit_base_rejection() {
        let bad_base = ManifestRecord::base("b0", SampleMetadata { pitch_deg: Some(50.0), ..ok_meta() });
        let good_base = ManifestRecord::base("b1", ok_meta());
        let records = vec![
            mated("b0", "b0-m", ok_meta()),
            bad_base,
            good_base,
            mated("b1", "b1-m", SampleMetadata { illum: Some(0.95), ..ok_meta() }),
        ];
        let (out, report) = filter_dataset(records, &GateConfig::default()).unwrap();
        let v = out[0].verdict.as_ref().unwrap();
        assert!(!v.passed && v.inherited);
        assert_eq!(v.reasons, BTreeSet::from([Reason::Pitch]));
        let v = out[3].verdict.as_ref().unwrap();
        assert!(!v.passed && !v.inherited);
        assert_eq!(report.inherited, 1);
        assert_eq!(report.tallies[&Reason::Pitch], 2);
        assert_eq!(report.by_kind[&RecordKind::Mated], StageCounts { total: 2, accepted: 0, rejected: 2 });
        assert_eq!(report.accepted + report.rejected, report.total_in);
    }

    #[test]
    fn gate_config_validation() {
        let g = GateConfig { illum_min: 0.9, illum_max: 0.1, ..GateConfig::default() };
        assert!(g.validate().is_err());
        let g = GateConfig { age_min: 80.0, ..GateConfig::default() };
        assert!(g.validate().is_err());
    }

    fn arb_meta() -> impl Strategy<Value = SampleMetadata> {
        (60.0..140.0f64, -30.0..30.0f64, -30.0..30.0f64, 5.0..90.0f64, 0.0..1.0f64).prop_map(
            |(ied, yaw, pitch, age, illum)| SampleMetadata {
                ied_px: Some(ied),
                yaw_deg: Some(yaw),
                pitch_deg: Some(pitch),
                age_years: Some(age),
                illum: Some(illum),
            },
        )
    }

    fn arb_records() -> impl Strategy<Value = Vec<ManifestRecord>> {
        prop::collection::vec((arb_meta(), prop::collection::vec(arb_meta(), 0..3)), 1..12).prop_map(|subjects| {
            let mut out = Vec::new();
            for (i, (base, mates)) in subjects.into_iter().enumerate() {
                let id = format!("b{i}");
                for (j, m) in mates.into_iter().enumerate() {
                    out.push(mated(&id, &format!("{id}-m{j}"), m));
                }
                out.push(ManifestRecord::base(id, base));
            }
            out
        })
    }

    fn arb_gates() -> impl Strategy<Value = GateConfig> {
        (70.0..110.0f64, 5.0..25.0f64, 5.0..25.0f64, 0.0..0.4f64, 0.6..1.0f64, 10.0..30.0f64, 50.0..80.0f64).prop_map(
            |(min_ied_px, max_abs_yaw_deg, max_abs_pitch_deg, illum_min, illum_max, age_min, age_max)| GateConfig {
                min_ied_px,
                max_abs_yaw_deg,
                max_abs_pitch_deg,
                illum_min,
                illum_max,
                age_min,
                age_max,
            },
        )
    }

    fn accepted_ids(records: &[ManifestRecord]) -> BTreeSet<String> {
        records.iter().filter(|r| r.is_accepted()).map(|r| r.id.clone()).collect()
    }

    proptest! {
        #[test]
        fn refiltering_accepted_rejects_nothing(records in arb_records(), g in arb_gates()) {
            let (out, _) = filter_dataset(records, &g).unwrap();
            let kept: Vec<_> = out.into_iter().filter(|r| r.is_accepted()).collect();
            let n = kept.len();
            let (again, report) = filter_dataset(kept, &g).unwrap();
            prop_assert_eq!(report.accepted, n);
            prop_assert_eq!(report.rejected, 0);
            prop_assert!(again.iter().all(|r| r.is_accepted()));
        }

        #[test]
        fn permutation_permutes_output(records in arb_records(), g in arb_gates(), seed in any::<u64>()) {
            let mut perm: Vec<usize> = (0..records.len()).collect();
            let mut rng = crate::rng::DetRng::seed_from_u64(seed);
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.below(i as u64 + 1) as usize);
            }
            let shuffled: Vec<_> = perm.iter().map(|&i| records[i].clone()).collect();
            let (a, ra) = filter_dataset(records, &g).unwrap();
            let (b, rb) = filter_dataset(shuffled, &g).unwrap();
            prop_assert_eq!(ra, rb);
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(&b[k], &a[i]);
            }
        }

        #[test]
        fn tightening_a_bound_shrinks_acceptance(
            records in arb_records(),
            g in arb_gates(),
            which in 0usize..7,
            amount in 0.0..10.0f64,
        ) {
            let mut tight = g.clone();
            match which {
                0 => tight.min_ied_px += amount,
                1 => tight.max_abs_yaw_deg = (tight.max_abs_yaw_deg - amount).max(0.0),
                2 => tight.max_abs_pitch_deg = (tight.max_abs_pitch_deg - amount).max(0.0),
                3 => tight.illum_min = (tight.illum_min + amount / 50.0).min(tight.illum_max),
                4 => tight.illum_max = (tight.illum_max - amount / 50.0).max(tight.illum_min),
                5 => tight.age_min = (tight.age_min + amount).min(tight.age_max),
                _ => tight.age_max = (tight.age_max - amount).max(tight.age_min),
            }
            let (loose, _) = filter_dataset(records.clone(), &g).unwrap();
            let (strict, _) = filter_dataset(records, &tight).unwrap();
            prop_assert!(accepted_ids(&strict).is_subset(&accepted_ids(&loose)));
        }

        #[test]
        fn report_invariants(records in arb_records(), g in arb_gates()) {
            let (out, report) = filter_dataset(records, &g).unwrap();
            prop_assert_eq!(report.accepted + report.rejected, report.total_in);
            for r in Reason::ALL {
                let count = out.iter().filter(|x| x.verdict.as_ref().unwrap().reasons.contains(&r)).count();
                prop_assert_eq!(report.tallies.get(&r).copied().unwrap_or(0), count);
            }
            for x in &out {
                let v = x.verdict.as_ref().unwrap();
                prop_assert_eq!(v.passed, v.reasons.is_empty());
            }
        }
    }
}
