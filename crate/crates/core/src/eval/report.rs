//! Report bundle: one CSV per curve plus a JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::density::DensityCurve;
use crate::eval::edc::EdcCurve;

/// Square or rectangular table of divergences; `None` where undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl KlMatrix {
    fn validate(&self) -> Result<()> {
        if self.values.len() != self.rows.len() || self.values.iter().any(|r| r.len() != self.cols.len()) {
            return Err(Error::invalid("KL matrix shape does not match its labels"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub thresholds: BTreeMap<String, f64>,
    pub fnmr: BTreeMap<String, f64>,
    pub fmr: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl: Option<KlMatrix>,
    /// Divergences between quality-score distributions, per method.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub kl_quality: BTreeMap<String, KlMatrix>,
    #[serde(skip)]
    pub densities: BTreeMap<String, DensityCurve>,
    #[serde(skip)]
    pub edc: BTreeMap<String, EdcCurve>,
    /// Free-form scalar counts carried into the summary.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, u64>,
    /// Free-form summary statistics carried into the summary.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub statistics: BTreeMap<String, f64>,
}

impl ReportBundle {
    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
            && self.fnmr.is_empty()
            && self.fmr.is_empty()
            && self.kl.is_none()
            && self.kl_quality.is_empty()
            && self.densities.is_empty()
            && self.edc.is_empty()
    }
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.');
    if !ok {
        return Err(Error::invalid(format!("artifact name {name:?} is not a plain file stem")));
    }
    Ok(())
}

fn csv_writer() -> csv::WriterBuilder {
    let mut b = csv::WriterBuilder::new();
    b.terminator(csv::Terminator::Any(b'\n'));
    b
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_columns(path: &Path, header: [&str; 2], x: &[f64], y: &[f64]) -> Result<()> {
    let mut w = csv_writer().from_writer(Vec::new());
    w.write_record(header)?;
    for (a, b) in x.iter().zip(y) {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_file(path, &bytes)
}

fn write_matrix(path: &Path, m: &KlMatrix) -> Result<()> {
    m.validate()?;
    let mut w = csv_writer().from_writer(Vec::new());
    w.write_record(std::iter::once("dataset").chain(m.cols.iter().map(String::as_str)))?;
    for (label, row) in m.rows.iter().zip(&m.values) {
        let cells = row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default());
        w.write_record(std::iter::once(label.clone()).chain(cells))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_file(path, &bytes)
}

/// Write the bundle under `out_dir`, returning the file names written in order.
///
/// Files: `density_<name>.csv` (grid,density), `edc_<name>.csv`
/// (fraction,fnmr), `kl.csv`, `kl_quality_<method>.csv` and `summary.json`.
pub fn emit_report(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<String>> {
    if bundle.is_empty() {
        return Err(Error::invalid("nothing to report"));
    }
    for name in bundle.densities.keys().chain(bundle.edc.keys()).chain(bundle.kl_quality.keys()) {
        check_name(name)?;
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (name, c) in &bundle.densities {
        let file = format!("density_{name}.csv");
        write_columns(&out_dir.join(&file), ["grid", "density"], c.grid(), c.density())?;
        written.push(file);
    }
    for (name, c) in &bundle.edc {
        let file = format!("edc_{name}.csv");
        write_columns(&out_dir.join(&file), ["fraction", "fnmr"], &c.discard_fractions, &c.fnmr)?;
        written.push(file);
    }
    if let Some(m) = &bundle.kl {
        write_matrix(&out_dir.join("kl.csv"), m)?;
        written.push("kl.csv".into());
    }
    for (method, m) in &bundle.kl_quality {
        let file = format!("kl_quality_{method}.csv");
        write_matrix(&out_dir.join(&file), m)?;
        written.push(file);
    }
    let mut summary = serde_json::to_vec_pretty(bundle)?;
    summary.push(b'\n');
    write_file(&out_dir.join("summary.json"), &summary)?;
    written.push("summary.json".into());
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::density::kde;

    fn bundle() -> ReportBundle {
        let mut b = ReportBundle::default();
        b.thresholds.insert("fmr_0.001".into(), 0.41);
        b.fnmr.insert("fmr_0.001".into(), 0.0);
        b.fmr.insert("fmr_0.001".into(), 0.0009);
        b.densities.insert("mated".into(), kde(&[0.8, 0.85, 0.9, 0.95], 16).unwrap());
        b.kl = Some(KlMatrix {
            rows: vec!["run".into(), "other".into()],
            cols: vec!["run".into(), "other".into()],
            values: vec![vec![Some(0.0), Some(0.25)], vec![None, Some(0.0)]],
        });
        b
    }

    #[test]
    fn bundle_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let files = emit_report(&bundle(), a.path()).unwrap();
        assert_eq!(files, emit_report(&bundle(), b.path()).unwrap());
        for f in &files {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn kl_csv_is_labelled() {
        let d = tempfile::tempdir().unwrap();
        emit_report(&bundle(), d.path()).unwrap();
        let text = fs::read_to_string(d.path().join("kl.csv")).unwrap();
        assert_eq!(text, "dataset,run,other\nrun,0,0.25\nother,,0\n");
        let summary: serde_json::Value =
            serde_json::from_slice(&fs::read(d.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["kl"]["rows"][1], "other");
        assert!(summary["kl"]["values"][1][0].is_null());
        let density = fs::read_to_string(d.path().join("density_mated.csv")).unwrap();
        assert!(density.starts_with("grid,density\n"));
        assert!(!density.contains('\r'));
    }

    #[test]
    fn empty_bundle_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        assert!(emit_report(&ReportBundle::default(), d.path()).is_err());
    }

    #[test]
    fn names_must_be_plain() {
        let mut b = bundle();
        b.densities.insert("../x".into(), kde(&[0.1, 0.2], 8).unwrap());
        let d = tempfile::tempdir().unwrap();
        assert!(emit_report(&b, d.path()).is_err());
    }
}
