//! Mated and non-mated comparison scores from an annotated manifest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{similarity, Embedding, Session};
use crate::error::{check_dim, Error, Result};
use crate::eval::edc::paired_quality;
use crate::latent::LatentVector;
use crate::manifest::{ManifestRecord, RecordKind};
use crate::rng::DetRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatedScore {
    pub subject_id: String,
    pub sample_id: String,
    pub score: f64,
    /// Paired quality per method both samples were scored with.
    pub quality: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMatedScore {
    pub a: String,
    pub b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSets {
    pub mated: Vec<MatedScore>,
    pub nonmated: Vec<NonMatedScore>,
    pub pairing_seed: u64,
    /// Subjects dropped because their base sample was not accepted.
    pub skipped_subjects: usize,
    /// Subjects that got fewer non-mated pairs than requested.
    pub short_subjects: usize,
}

impl ScoreSets {
    pub fn mated_scores(&self) -> Vec<f64> {
        self.mated.iter().map(|m| m.score).collect()
    }

    pub fn nonmated_scores(&self) -> Vec<f64> {
        self.nonmated.iter().map(|m| m.score).collect()
    }

    /// Quality method names present on every mated pair.
    pub fn quality_methods(&self) -> Vec<String> {
        let Some(first) = self.mated.first() else {
            return Vec::new();
        };
        first
            .quality
            .keys()
            .filter(|k| self.mated.iter().all(|m| m.quality.contains_key(*k)))
            .cloned()
            .collect()
    }

    /// `(paired quality, score)` for `method`, in mated order.
    pub fn quality_pairs(&self, method: &str) -> Option<Vec<(f64, f64)>> {
        self.mated
            .iter()
            .map(|m| m.quality.get(method).map(|&q| (q, m.score)))
            .collect()
    }
}

struct Subject<'a> {
    id: &'a str,
    base: usize,
    mated: Vec<usize>,
}

fn pair_quality(a: &ManifestRecord, b: &ManifestRecord) -> Result<BTreeMap<String, f64>> {
    let (Some(qa), Some(qb)) = (&a.quality, &b.quality) else {
        return Ok(BTreeMap::new());
    };
    qa.iter()
        .filter_map(|(k, &x)| qb.get(k).map(|&y| (k, x, y)))
        .map(|(k, x, y)| Ok((k.clone(), paired_quality(x, y)?)))
        .collect()
}

/// Scores every accepted mated sample against its base, plus
/// `nonmated_per_subject` cross-subject comparisons per subject.
///
/// `latents[i]` is the latent of `records[i]`. Subjects are visited in
/// id order. Each subject's base is compared with samples drawn without
/// replacement from the accepted records of all other subjects.
pub fn collect_scores(
    records: &[ManifestRecord],
    latents: &[LatentVector],
    session: &mut Session,
    nonmated_per_subject: usize,
    pairing_seed: u64,
) -> Result<ScoreSets> {
    check_dim(records.len(), latents.len())?;
    if nonmated_per_subject == 0 {
        return Err(Error::invalid("nonmated_per_subject must be positive"));
    }
    let mut bases: BTreeMap<&str, usize> = BTreeMap::new();
    let mut mates: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut all_subjects: BTreeMap<&str, ()> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        all_subjects.insert(&r.subject_id, ());
        if !r.is_accepted() {
            continue;
        }
        match r.kind {
            RecordKind::Base => {
                if bases.insert(&r.subject_id, i).is_some() {
                    return Err(Error::InvalidInput(format!("subject {:?} has two base records", r.subject_id)));
                }
            }
            RecordKind::Mated => mates.entry(&r.subject_id).or_default().push(i),
        }
    }
    let subjects: Vec<Subject> = bases
        .iter()
        .map(|(&id, &base)| Subject {
            id,
            base,
            mated: mates.remove(id).unwrap_or_default(),
        })
        .collect();
    let skipped_subjects = all_subjects.len() - subjects.len();

    let mut embeddings: Vec<Option<Embedding>> = vec![None; records.len()];
    for s in &subjects {
        for &i in std::iter::once(&s.base).chain(&s.mated) {
            let r = &records[i];
            let sample = session.generate(&r.id, &latents[i])?;
            embeddings[i] = Some(session.embed(&sample)?);
            session.release([r.id.as_str()]);
        }
    }
    let emb = |i: usize| embeddings[i].as_ref().expect("embedded above");

    let mut mated = Vec::new();
    for s in &subjects {
        for &i in &s.mated {
            mated.push(MatedScore {
                subject_id: s.id.to_string(),
                sample_id: records[i].id.clone(),
                score: similarity(emb(s.base), emb(i))?,
                quality: pair_quality(&records[s.base], &records[i])?,
            });
        }
    }

    // members[k] lists record indices of subject k; the pool for subject k
    // is every other subject's members, in subject order.
    let members: Vec<Vec<usize>> = subjects
        .iter()
        .map(|s| std::iter::once(s.base).chain(s.mated.iter().copied()).collect())
        .collect();
    let total: usize = members.iter().map(Vec::len).sum();
    let mut rng = DetRng::seed_from_u64(pairing_seed);
    let mut nonmated = Vec::new();
    let mut short_subjects = 0;
    for (k, s) in subjects.iter().enumerate() {
        let pool: Vec<usize> = members
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .flat_map(|(_, m)| m.iter().copied())
            .collect();
        debug_assert_eq!(pool.len(), total - members[k].len());
        if pool.len() < nonmated_per_subject {
            short_subjects += 1;
        }
        for pick in rng.choose_distinct(pool.len(), nonmated_per_subject) {
            let other = pool[pick];
            nonmated.push(NonMatedScore {
                a: records[s.base].id.clone(),
                b: records[other].id.clone(),
                score: similarity(emb(s.base), emb(other))?,
            });
        }
    }

    Ok(ScoreSets {
        mated,
        nonmated,
        pairing_seed,
        skipped_subjects,
        short_subjects,
    })
}
