//! Pipeline stages over a run directory.
//!
//! ```text
//! manifest.jsonl        header + one record per sample
//! latents.lvec          truncated base latents, row i = record latent_row i
//! pca.components.lvec   principal basis (+ pca.mean.lvec, pca.json)
//! mated.lvec            latents of the mated samples
//! filter_report.json    report of the latest filter pass
//! eval/scores.json      comparison scores and quality values
//! report/               CSV curves, summary.json, stages.csv
//! ```
//!
//! Stages run in the order generate, pca, filter, walk, filter, eval,
//! report. Each one checks its inputs through digests recorded in the
//! manifest header and refuses stale or missing prerequisites.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use log::{info, warn};
use pcawalk_core::backend::{open_session, BackendConfig, SampleRef, Session};
use pcawalk_core::digest::{digest64, hex64};
use pcawalk_core::eval::{
    collect_scores, edc_curve, emit_report, fmr_at, fnmr_at, kde, kl_divergence, threshold_at_fmr, DensityCurve,
    KlMatrix, ReportBundle, ScoreSets,
};
use pcawalk_core::filter::filter_dataset;
use pcawalk_core::latent::{mean_latent, sample_latents, truncate_set, LatentSet, LatentVector, TruncationParams};
use pcawalk_core::manifest::{Manifest, ManifestHeader, ManifestRecord, RecordKind};
use pcawalk_core::pca::{compute_pca, load_basis, save_basis, BasisPaths};
use pcawalk_core::store::{decode_latents, encode_latents, quantize_vector};
use pcawalk_core::walk::guided_walk_placed;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.jsonl";
pub const LATENTS: &str = "latents.lvec";
pub const MATED: &str = "mated.lvec";
pub const PCA_STEM: &str = "pca";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const SCORES: &str = "eval/scores.json";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Pca,
    Filter,
    Walk,
    Eval,
    Report,
}

impl Stage {
    /// Full pipeline order; filtering runs before and after the walk.
    pub const ALL: [Stage; 7] = [
        Stage::Generate,
        Stage::Pca,
        Stage::Filter,
        Stage::Walk,
        Stage::Filter,
        Stage::Eval,
        Stage::Report,
    ];
}

pub fn run_stage(stage: Stage, cfg: &RunConfig, run_dir: &Path) -> CliResult<()> {
    info!("stage {stage:?} in {}", run_dir.display());
    match stage {
        Stage::Generate => cmd_generate(cfg, run_dir),
        Stage::Pca => cmd_pca(cfg, run_dir),
        Stage::Filter => cmd_filter(cfg, run_dir),
        Stage::Walk => cmd_walk(cfg, run_dir),
        Stage::Eval => cmd_eval(cfg, run_dir),
        Stage::Report => cmd_report(cfg, run_dir).map(|_| ()),
    }
}

pub fn run_all(cfg: &RunConfig, run_dir: &Path) -> CliResult<()> {
    for stage in Stage::ALL {
        run_stage(stage, cfg, run_dir)?;
    }
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(pcawalk_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn require(path: &Path, hint: &str) -> CliResult<()> {
    if !path.exists() {
        return Err(CliError::dependency(format!("{} not found; {hint}", path.display())));
    }
    Ok(())
}

/// Manifest plus the digest of its bytes on disk.
fn read_manifest(cfg: &RunConfig, run_dir: &Path) -> CliResult<(Manifest, String)> {
    let path = run_dir.join(MANIFEST);
    require(&path, "run generate first")?;
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let manifest = Manifest::from_reader(bytes.as_slice())?;
    if manifest.header.dim != cfg.dim {
        return Err(CliError::config(format!(
            "manifest dim {} differs from configured dim {}",
            manifest.header.dim, cfg.dim
        )));
    }
    if manifest.header.extra.get("partial") == Some(&Value::Bool(true)) {
        return Err(CliError::dependency("manifest is partial after a failed generate; rerun generate"));
    }
    Ok((manifest, hex64(digest64(&bytes))))
}

fn header_section<'a>(m: &'a Manifest, key: &str, hint: &str) -> CliResult<&'a Value> {
    m.header
        .extra
        .get(key)
        .ok_or_else(|| CliError::dependency(format!("manifest has no {key} section; {hint}")))
}

fn latents_hash(m: &Manifest) -> CliResult<String> {
    header_section(m, "generate", "run generate first")?["latents_hash"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| CliError::dependency("manifest header lacks latents_hash; rerun generate"))
}

fn read_lvec(path: &Path, expected_hash: &str, hint: &str) -> CliResult<LatentSet> {
    require(path, hint)?;
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let found = hex64(digest64(&bytes));
    if found != expected_hash {
        return Err(CliError::dependency(format!(
            "{} does not match the manifest (digest {found}, expected {expected_hash}); {hint}",
            path.display()
        )));
    }
    Ok(decode_latents(&bytes).map_err(pcawalk_core::Error::from)?)
}

/// Apply `f` to every item with `workers` threads, each owning one session.
/// Items are split into contiguous chunks so output order does not depend
/// on the worker count. Stops at the first failure and returns the
/// successful prefix alongside it.
fn parallel<T, R, F>(
    backend: &BackendConfig,
    workers: usize,
    items: &[T],
    f: F,
) -> (Vec<R>, Option<pcawalk_core::Error>)
where
    T: Sync,
    R: Send,
    F: Fn(&mut Session, usize, &T) -> pcawalk_core::Result<R> + Sync,
{
    if items.is_empty() {
        return (Vec::new(), None);
    }
    let chunk = items.len().div_ceil(workers.max(1));
    let results: Vec<(Vec<R>, Option<pcawalk_core::Error>)> = thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(k, part)| {
                let f = &f;
                scope.spawn(move || {
                    let mut session = match open_session(backend) {
                        Ok(s) => s,
                        Err(e) => return (Vec::new(), Some(e)),
                    };
                    let mut out = Vec::with_capacity(part.len());
                    for (j, item) in part.iter().enumerate() {
                        match f(&mut session, k * chunk + j, item) {
                            Ok(r) => out.push(r),
                            Err(e) => return (out, Some(e)),
                        }
                    }
                    let closed = session.shutdown().err();
                    (out, closed)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut all = Vec::with_capacity(items.len());
    for (part, err) in results {
        all.extend(part);
        if err.is_some() {
            return (all, err);
        }
    }
    (all, None)
}

fn sample_record(sample: SampleRef, row: usize) -> ManifestRecord {
    let mut r = ManifestRecord::base(sample.id, sample.metadata);
    if !sample.quality.is_empty() {
        r.quality = Some(sample.quality);
    }
    if let Some(uri) = sample.image_uri {
        r.extra.insert("image_uri".into(), Value::String(uri));
    }
    r.latent_row = Some(row);
    r
}

pub fn base_id(i: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len();
    format!("b{i:0width$}")
}

pub fn cmd_generate(cfg: &RunConfig, run_dir: &Path) -> CliResult<()> {
    fs::create_dir_all(run_dir).map_err(|e| io_err(run_dir, e))?;
    let backend = cfg.backend_config()?;
    let raw = sample_latents(cfg.count, cfg.dim, cfg.seed)?;
    let mut session = open_session(&backend)?;
    let (center, source) = match session.center()? {
        Some(c) => (c, "backend"),
        None => (mean_latent(&raw)?, "mean"),
    };
    session.shutdown()?;
    let truncated = truncate_set(&raw, &TruncationParams::new(cfg.psi, center)?)?;
    let bytes = encode_latents(&truncated)?;
    let latents = decode_latents(&bytes).map_err(pcawalk_core::Error::from)?;
    write_atomic(&run_dir.join(LATENTS), &bytes)?;

    let count = cfg.count;
    let (records, failure) = parallel(&backend, cfg.workers, latents.rows(), |s, i, w| {
        let id = base_id(i, count);
        let sample = s.generate(&id, w)?;
        s.release([id.as_str()]);
        Ok(sample_record(sample, i))
    });

    let mut header = ManifestHeader::new(cfg.dim, &cfg.run_id);
    header.extra.insert(
        "generate".into(),
        json!({
            "count": cfg.count,
            "seed": cfg.seed,
            "psi": cfg.psi,
            "center": source,
            "latents_hash": hex64(digest64(&bytes)),
        }),
    );
    if failure.is_some() {
        header.extra.insert("partial".into(), Value::Bool(true));
    }
    let manifest = Manifest { header, records };
    write_atomic(&run_dir.join(MANIFEST), &manifest.to_bytes()?)?;
    if let Some(e) = failure {
        warn!("generate stopped after {} of {} samples", manifest.records.len(), cfg.count);
        return Err(e.into());
    }
    info!("generated {} base samples", manifest.records.len());
    Ok(())
}

pub fn cmd_pca(cfg: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let (m, _) = read_manifest(cfg, run_dir)?;
    let hash = latents_hash(&m)?;
    let latents = read_lvec(&run_dir.join(LATENTS), &hash, "rerun generate")?;
    let basis = compute_pca(&latents, cfg.pca.components)?;
    save_basis(&basis, &BasisPaths::new(run_dir, PCA_STEM), &hash)?;
    let total: f64 = basis.variances().iter().sum();
    let shown: Vec<String> = basis.variances().iter().take(3).map(|v| format!("{v:.4}")).collect();
    info!("kept {} components, leading variances [{}] of {total:.4}", basis.len(), shown.join(", "));
    Ok(())
}

pub fn cmd_filter(cfg: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let (mut m, _) = read_manifest(cfg, run_dir)?;
    let records = std::mem::take(&mut m.records);
    let (records, report) = filter_dataset(records, &cfg.gates)?;
    m.records = records;
    let has_mated = m.records.iter().any(|r| r.kind == RecordKind::Mated);
    let key = if has_mated { "filter_full" } else { "filter_base" };
    m.header.extra.insert(key.into(), serde_json::to_value(&report).map_err(pcawalk_core::Error::from)?);
    write_atomic(&run_dir.join(MANIFEST), &m.to_bytes()?)?;
    write_atomic(&run_dir.join(FILTER_REPORT), report.to_json()?.as_bytes())?;
    eprint!("{}", report.render_table());
    Ok(())
}

pub fn cmd_walk(cfg: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let (mut m, _) = read_manifest(cfg, run_dir)?;
    if m.records.iter().any(|r| r.kind == RecordKind::Base && r.verdict.is_none()) {
        return Err(CliError::dependency("base records have no verdicts; run filter before walk"));
    }
    let hash = latents_hash(&m)?;
    let latents = read_lvec(&run_dir.join(LATENTS), &hash, "rerun generate")?;
    let paths = BasisPaths::new(run_dir, PCA_STEM);
    require(&paths.sidecar, "run pca first")?;
    let (basis, sidecar) = load_basis(&paths)?;
    if sidecar.source_hash != hash {
        return Err(CliError::dependency("pca basis was computed from other latents; rerun pca"));
    }

    m.records.retain(|r| r.kind == RecordKind::Base);
    let bases: Vec<(String, usize)> = m
        .records
        .iter()
        .filter(|r| r.is_accepted())
        .map(|r| {
            r.latent_row
                .map(|row| (r.id.clone(), row))
                .ok_or_else(|| pcawalk_core::Error::InvalidInput(format!("base {:?} has no latent_row", r.id)))
        })
        .collect::<pcawalk_core::Result<_>>()?;
    if let Some((id, row)) = bases.iter().find(|(_, row)| *row >= latents.len()) {
        return Err(pcawalk_core::Error::InvalidInput(format!("base {id:?} latent_row {row} out of range")).into());
    }

    let walk_cfg = &cfg.walk;
    let (outcomes, failure) = parallel(&cfg.backend_config()?, cfg.workers, &bases, |s, _, (id, row)| {
        guided_walk_placed(s, id, &latents.rows()[*row], &basis, walk_cfg, quantize_vector)
    });
    if let Some(e) = failure {
        return Err(e.into());
    }

    let mut by_base: BTreeMap<String, Vec<ManifestRecord>> = BTreeMap::new();
    let mut mated_rows: Vec<LatentVector> = Vec::new();
    let (mut failed, mut truncated) = (0usize, 0usize);
    for ((base, _), outcome) in bases.iter().zip(outcomes) {
        failed += outcome.failed.len();
        truncated += outcome.truncated.len();
        for rec in outcome.records {
            let mut r = sample_record(rec.sample, mated_rows.len());
            r.subject_id = rec.base_id;
            r.kind = RecordKind::Mated;
            r.direction = Some(rec.direction);
            r.distance = Some(rec.distance);
            r.similarity_to_base = Some(rec.similarity_to_base);
            mated_rows.push(rec.latent);
            by_base.entry(base.clone()).or_default().push(r);
        }
    }
    let mated_count = mated_rows.len();
    let mated_path = run_dir.join(MATED);
    let mated_hash = if mated_rows.is_empty() {
        if mated_path.exists() {
            fs::remove_file(&mated_path).map_err(|e| io_err(&mated_path, e))?;
        }
        Value::Null
    } else {
        let bytes = encode_latents(&LatentSet::new(mated_rows, 0)?)?;
        write_atomic(&mated_path, &bytes)?;
        Value::String(hex64(digest64(&bytes)))
    };

    let bases_in = std::mem::take(&mut m.records);
    for b in bases_in {
        let mates = by_base.remove(&b.id).unwrap_or_default();
        m.records.push(b);
        m.records.extend(mates);
    }
    m.header.extra.remove("filter_full");
    m.header.extra.insert(
        "walk".into(),
        json!({
            "bases": bases.len(),
            "mated": mated_count,
            "failed": failed,
            "truncated": truncated,
            "threshold": cfg.walk.threshold,
            "step_size": cfg.walk.step_size,
            "mated_hash": mated_hash,
        }),
    );
    write_atomic(&run_dir.join(MANIFEST), &m.to_bytes()?)?;
    if truncated > 0 {
        warn!("{truncated} walks reached max_steps while still recognised");
    }
    info!("walked {} bases: {mated_count} mated samples, {failed} directions failed at step 1", bases.len());
    Ok(())
}

/// Everything `eval` hands to `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub run_id: String,
    /// Digest of the manifest the scores were computed from.
    pub manifest_hash: String,
    pub scores: ScoreSets,
    /// Per quality method, the scores of every accepted sample.
    pub qualities: BTreeMap<String, Vec<f64>>,
}

impl EvalScores {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Ok(serde_json::from_str(&text).map_err(pcawalk_core::Error::from)?)
    }
}

pub fn cmd_eval(cfg: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let (m, manifest_hash) = read_manifest(cfg, run_dir)?;
    let walk = header_section(&m, "walk", "run walk first")?;
    if !m.header.extra.contains_key("filter_full") || m.records.iter().any(|r| r.verdict.is_none()) {
        return Err(CliError::dependency("mated samples are unfiltered; run filter after walk"));
    }
    let latents = read_lvec(&run_dir.join(LATENTS), &latents_hash(&m)?, "rerun generate")?;
    let mated = match walk["mated_hash"].as_str() {
        Some(h) => Some(read_lvec(&run_dir.join(MATED), h, "rerun walk")?),
        None => None,
    };
    let lats: Vec<LatentVector> = m
        .records
        .iter()
        .map(|r| {
            let set = match r.kind {
                RecordKind::Base => Some(&latents),
                RecordKind::Mated => mated.as_ref(),
            };
            r.latent_row
                .and_then(|row| set.and_then(|s| s.rows().get(row)))
                .cloned()
                .ok_or_else(|| pcawalk_core::Error::InvalidInput(format!("record {:?} has no stored latent", r.id)))
        })
        .collect::<pcawalk_core::Result<_>>()?;
    let mut session = open_session(&cfg.backend_config()?)?;
    let scores = collect_scores(
        &m.records,
        &lats,
        &mut session,
        cfg.eval.nonmated_per_subject,
        cfg.eval.pairing_seed,
    )?;
    session.shutdown()?;
    if scores.skipped_subjects > 0 {
        warn!("{} subjects skipped: base not accepted", scores.skipped_subjects);
    }
    if scores.short_subjects > 0 {
        warn!("{} subjects got fewer non-mated pairs than requested", scores.short_subjects);
    }
    let mut qualities: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in m.records.iter().filter(|r| r.is_accepted()) {
        for (k, v) in r.quality.iter().flatten() {
            qualities.entry(k.clone()).or_default().push(*v);
        }
    }
    info!("{} mated and {} non-mated scores", scores.mated.len(), scores.nonmated.len());
    let out = EvalScores {
        run_id: m.header.run_id.clone(),
        manifest_hash,
        scores,
        qualities,
    };
    let dir = run_dir.join("eval");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut text = serde_json::to_string_pretty(&out).map_err(pcawalk_core::Error::from)?;
    text.push('\n');
    write_atomic(&run_dir.join(SCORES), text.as_bytes())
}

/// Table 1 style dataset sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageTable {
    pub base: usize,
    pub filtered_base: usize,
    pub with_mated: usize,
    pub filtered: usize,
    pub walk_failures: usize,
}

impl StageTable {
    pub fn from_manifest(m: &Manifest) -> Self {
        let bases = m.records.iter().filter(|r| r.kind == RecordKind::Base);
        let mated = m.records.iter().filter(|r| r.kind == RecordKind::Mated).count();
        let filtered_base = bases.clone().filter(|r| r.is_accepted()).count();
        StageTable {
            base: bases.count(),
            filtered_base,
            with_mated: filtered_base + mated,
            filtered: m.records.iter().filter(|r| r.is_accepted()).count(),
            walk_failures: m.header.extra.get("walk").and_then(|w| w["failed"].as_u64()).unwrap_or(0) as usize,
        }
    }

    pub fn rows(&self) -> [(&'static str, usize); 4] {
        [
            ("base", self.base),
            ("filtered", self.filtered_base),
            ("+mated", self.with_mated),
            ("filtered", self.filtered),
        ]
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>9}", "stage", "images");
        for (name, n) in self.rows() {
            let _ = writeln!(out, "{name:<10} {n:>9}");
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = String::from("stage,images\n");
        for (name, n) in self.rows() {
            let _ = writeln!(out, "{name},{n}");
        }
        out
    }
}

fn density(samples: &[f64], points: usize) -> CliResult<Option<DensityCurve>> {
    if samples.len() < 2 || samples.iter().all(|&s| s == samples[0]) {
        return Ok(None);
    }
    Ok(Some(kde(samples, points)?))
}

fn kl_matrix(curves: &[(String, Option<DensityCurve>)]) -> CliResult<KlMatrix> {
    let labels: Vec<String> = curves.iter().map(|(n, _)| n.clone()).collect();
    let mut values = Vec::with_capacity(curves.len());
    for (_, p) in curves {
        let mut row = Vec::with_capacity(curves.len());
        for (_, q) in curves {
            let cell = match (p, q) {
                (Some(p), Some(q)) => match kl_divergence(p, q) {
                    Ok(v) => Some(v),
                    Err(pcawalk_core::Error::DisjointSupport) => None,
                    Err(e) => return Err(e.into()),
                },
                _ => None,
            };
            row.push(cell);
        }
        values.push(row);
    }
    Ok(KlMatrix {
        rows: labels.clone(),
        cols: labels,
        values,
    })
}

/// Nearest-rank percentile.
pub fn percentile(scores: &[f64], p: f64) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * s.len() as f64).ceil().max(1.0) as usize;
    Some(s[rank.min(s.len()) - 1])
}

pub fn build_bundle(cfg: &RunConfig, run: &EvalScores, refs: &[EvalScores]) -> CliResult<ReportBundle> {
    let mut b = ReportBundle::default();
    let mated = run.scores.mated_scores();
    let nonmated = run.scores.nonmated_scores();
    let points = cfg.eval.kde_points;

    let mut thresholds = vec![("walk", cfg.walk.threshold)];
    if !nonmated.is_empty() {
        thresholds.push(("target_fmr", threshold_at_fmr(&nonmated, cfg.eval.target_fmr)?));
    }
    for (name, t) in &thresholds {
        b.thresholds.insert((*name).into(), *t);
        if !mated.is_empty() {
            b.fnmr.insert((*name).into(), fnmr_at(&mated, *t)?);
        }
        if !nonmated.is_empty() {
            b.fmr.insert((*name).into(), fmr_at(&nonmated, *t)?);
        }
    }
    if let Some(v) = mated.iter().copied().reduce(f64::min) {
        b.statistics.insert("mated_min".into(), v);
    }
    if let Some(v) = percentile(&nonmated, 99.0) {
        b.statistics.insert("nonmated_p99".into(), v);
    }
    if let Some(v) = nonmated.iter().copied().reduce(f64::max) {
        b.statistics.insert("nonmated_max".into(), v);
    }

    if let Some(c) = density(&mated, points)? {
        b.densities.insert("mated".into(), c);
    }
    if let Some(c) = density(&nonmated, points)? {
        b.densities.insert("nonmated".into(), c);
    }
    for (method, values) in &run.qualities {
        if let Some(c) = density(values, points)? {
            b.densities.insert(format!("quality_{method}"), c);
        }
    }

    if let Some(&t) = b.thresholds.get("target_fmr") {
        for method in run.scores.quality_methods() {
            let pairs = run.scores.quality_pairs(&method).expect("method present on every pair");
            b.edc.insert(method, edc_curve(&pairs, t, &cfg.eval.edc_fractions)?);
        }
    }

    let datasets: Vec<(&str, &EvalScores)> = std::iter::once((cfg.run_id.as_str(), run))
        .chain(cfg.eval.references.iter().map(|r| r.name.as_str()).zip(refs))
        .collect();
    let curves = datasets
        .iter()
        .map(|(name, ev)| Ok((name.to_string(), density(&ev.scores.mated_scores(), points)?)))
        .collect::<CliResult<Vec<_>>>()?;
    b.kl = Some(kl_matrix(&curves)?);
    for method in &run.qualities.keys().cloned().collect::<Vec<_>>() {
        let curves = datasets
            .iter()
            .filter_map(|(name, ev)| ev.qualities.get(method).map(|v| (name, v)))
            .map(|(name, v)| Ok((name.to_string(), density(v, points)?)))
            .collect::<CliResult<Vec<_>>>()?;
        b.kl_quality.insert(method.clone(), kl_matrix(&curves)?);
    }

    let s = &run.scores;
    b.counts.insert("mated_pairs".into(), s.mated.len() as u64);
    b.counts.insert("nonmated_pairs".into(), s.nonmated.len() as u64);
    b.counts.insert("skipped_subjects".into(), s.skipped_subjects as u64);
    b.counts.insert("short_subjects".into(), s.short_subjects as u64);
    Ok(b)
}

pub fn cmd_report(cfg: &RunConfig, run_dir: &Path) -> CliResult<StageTable> {
    let (m, manifest_hash) = read_manifest(cfg, run_dir)?;
    let scores_path = run_dir.join(SCORES);
    require(&scores_path, "run eval first")?;
    let run = EvalScores::read(&scores_path)?;
    if run.manifest_hash != manifest_hash {
        return Err(CliError::dependency("eval scores predate the current manifest; rerun eval"));
    }
    let mut refs = Vec::with_capacity(cfg.eval.references.len());
    for r in &cfg.eval.references {
        let path = cfg.resolve(run_dir, &r.scores)?;
        require(&path, &format!("reference {:?} needs an evaluated run", r.name))?;
        refs.push(EvalScores::read(&path)?);
    }
    let mut bundle = build_bundle(cfg, &run, &refs)?;
    let table = StageTable::from_manifest(&m);
    for (key, v) in [
        ("stage_base", table.base),
        ("stage_filtered_base", table.filtered_base),
        ("stage_with_mated", table.with_mated),
        ("stage_filtered", table.filtered),
        ("walk_failures", table.walk_failures),
    ] {
        bundle.counts.insert(key.into(), v as u64);
    }
    let out = run_dir.join(REPORT_DIR);
    let files = emit_report(&bundle, &out)?;
    write_atomic(&out.join("stages.csv"), table.csv().as_bytes())?;
    info!("wrote {} report files to {}", files.len() + 1, out.display());
    eprint!("{}", table.render());
    Ok(table)
}
