//! Line-delimited JSON run manifest.
//!
//! The first line is a header `{"manifest_version":1,"dim":..,"run_id":..}`;
//! every following line is one [`ManifestRecord`]. Keys this crate does not
//! know are kept and written back unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backend::SampleMetadata;
use crate::error::{Error, Result};
use crate::filter::GateVerdict;
use crate::walk::Direction;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub manifest_version: u32,
    pub dim: usize,
    pub run_id: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ManifestHeader {
    pub fn new(dim: usize, run_id: impl Into<String>) -> Self {
        ManifestHeader {
            manifest_version: MANIFEST_VERSION,
            dim,
            run_id: run_id.into(),
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Base,
    Mated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub subject_id: String,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_to_base: Option<f64>,
    pub metadata: SampleMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<GateVerdict>,
    /// Row of this sample's latent in the run's latent file for its kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_row: Option<usize>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ManifestRecord {
    pub fn base(id: impl Into<String>, metadata: SampleMetadata) -> Self {
        let id = id.into();
        ManifestRecord {
            subject_id: id.clone(),
            id,
            kind: RecordKind::Base,
            direction: None,
            distance: None,
            similarity_to_base: None,
            metadata,
            quality: None,
            verdict: None,
            latent_row: None,
            extra: Map::new(),
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.passed)
    }

    pub fn validate(&self) -> Result<()> {
        let lineage = [
            self.direction.is_some(),
            self.distance.is_some(),
            self.similarity_to_base.is_some(),
        ];
        match self.kind {
            RecordKind::Base if lineage.iter().any(|&p| p) => {
                return Err(Error::InvalidInput(format!(
                    "base record {:?} carries walk lineage",
                    self.id
                )))
            }
            RecordKind::Mated if !lineage.iter().all(|&p| p) => {
                return Err(Error::InvalidInput(format!(
                    "mated record {:?} lacks direction, distance or similarity",
                    self.id
                )))
            }
            _ => {}
        }
        if let Some(s) = self.similarity_to_base {
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::InvalidInput(format!(
                    "record {:?} similarity {s} outside [-1, 1]",
                    self.id
                )));
            }
        }
        if let Some(q) = &self.quality {
            if let Some((m, v)) = q.iter().find(|(_, v)| !(0.0..=100.0).contains(*v)) {
                return Err(Error::InvalidInput(format!(
                    "record {:?} quality {m}={v} outside [0, 100]",
                    self.id
                )));
            }
        }
        self.metadata
            .validate()
            .map_err(|e| Error::InvalidInput(format!("record {:?}: {e}", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(header: ManifestHeader) -> Self {
        Manifest {
            header,
            records: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true)
        });
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("manifest is empty".into()))?;
        let first = first.map_err(|e| Error::io("<manifest>", e))?;
        let header: ManifestHeader = serde_json::from_str(&first)
            .map_err(|e| Error::InvalidInput(format!("manifest header: {e}")))?;
        if header.manifest_version != MANIFEST_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported manifest version {}",
                header.manifest_version
            )));
        }
        let mut records = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| Error::io("<manifest>", e))?;
            let record: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| Error::InvalidInput(format!("manifest line {}: {e}", n + 1)))?;
            record.validate()?;
            records.push(record);
        }
        Ok(Manifest { header, records })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        serde_json::to_writer(&mut out, &self.header)?;
        out.push(b'\n');
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    /// Write via a temporary sibling and rename.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("jsonl.tmp");
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}
