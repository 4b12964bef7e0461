//! The run configuration file.
//!
//! A single TOML document (or JSON, when the file name ends in `.json`).
//! Every key is optional; see `RunConfig::default` and the README for the
//! full grammar. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use pcawalk_core::backend::{BackendConfig, BackendKind, ExternalConfig, ToyConfig};
use pcawalk_core::eval::DEFAULT_GRID_POINTS;
use pcawalk_core::filter::GateConfig;
use pcawalk_core::walk::WalkConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub dim: usize,
    pub count: usize,
    pub seed: u64,
    pub psi: f64,
    /// Worker threads for generate and walk; each owns a backend session.
    pub workers: usize,
    pub pca: PcaSection,
    pub backend: BackendSection,
    pub walk: WalkConfig,
    pub gates: GateConfig,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: "run".into(),
            dim: 32,
            count: 2000,
            seed: 1,
            psi: 0.75,
            workers: 1,
            pca: PcaSection::default(),
            backend: BackendSection::default(),
            walk: WalkConfig::default(),
            gates: GateConfig::default(),
            eval: EvalSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    /// Components to keep; all available when absent.
    pub components: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub toy: ToySection,
    pub external: Option<ExternalSection>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Toy,
            toy: ToySection::default(),
            external: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySection {
    pub seed: u64,
    pub embed_dim: usize,
}

impl Default for ToySection {
    fn default() -> Self {
        ToySection { seed: 7, embed_dim: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSection {
    pub command: Vec<String>,
    pub embed_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub target_fmr: f64,
    pub nonmated_per_subject: usize,
    pub pairing_seed: u64,
    pub kde_points: usize,
    pub edc_fractions: Vec<f64>,
    /// Score files of other runs to compare against.
    pub references: Vec<Reference>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            target_fmr: 0.001,
            nonmated_per_subject: 10,
            pairing_seed: 1,
            kde_points: DEFAULT_GRID_POINTS,
            edc_fractions: (0..10).map(|i| i as f64 * 0.05).collect(),
            references: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub name: String,
    /// An `eval/scores.json` written by another run.
    pub scores: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Directories outside the run directory that may be referenced.
    pub allowed: Vec<PathBuf>,
}

fn plain_name(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable config: {e}>"))
    }

    pub fn validate(&self) -> CliResult<()> {
        if !plain_name(&self.run_id) {
            return Err(CliError::config(format!("run_id {:?} must be a plain name", self.run_id)));
        }
        if self.dim == 0 {
            return Err(CliError::config("dim must be at least 1"));
        }
        if self.count < 2 {
            return Err(CliError::config("count must be at least 2"));
        }
        if u32::try_from(self.count).is_err() || u32::try_from(self.dim).is_err() {
            return Err(CliError::config("count and dim must fit in 32 bits"));
        }
        if !(0.0..=1.0).contains(&self.psi) {
            return Err(CliError::config(format!("psi must lie in [0, 1], got {}", self.psi)));
        }
        if self.workers == 0 {
            return Err(CliError::config("workers must be at least 1"));
        }
        if let Some(k) = self.pca.components {
            if k == 0 || k > self.dim {
                return Err(CliError::config(format!("pca.components must lie in 1..={}", self.dim)));
            }
        }
        if let Some(k) = self.walk.directions.iter().map(|d| d.component).max() {
            let available = self.pca.components.unwrap_or(self.dim).min(self.count - 1);
            if k > available {
                return Err(CliError::config(format!("walk direction uses component {k}, at most {available} exist")));
            }
        }
        self.walk.validate().map_err(CliError::config)?;
        self.gates.validate().map_err(CliError::config)?;
        if self.backend.toy.embed_dim == 0 {
            return Err(CliError::config("backend.toy.embed_dim must be at least 1"));
        }
        if let Some(ext) = &self.backend.external {
            if ext.command.is_empty() || ext.embed_dim == 0 {
                return Err(CliError::config("backend.external needs a command and embed_dim >= 1"));
            }
        }
        if self.backend.kind == BackendKind::External && self.backend.external.is_none() {
            return Err(CliError::config("backend.kind = \"external\" needs a [backend.external] section"));
        }
        let e = &self.eval;
        if !(e.target_fmr > 0.0 && e.target_fmr < 1.0) {
            return Err(CliError::config("eval.target_fmr must lie in (0, 1)"));
        }
        if e.nonmated_per_subject == 0 || e.kde_points < 2 {
            return Err(CliError::config("eval.nonmated_per_subject >= 1 and eval.kde_points >= 2 required"));
        }
        if e.edc_fractions.is_empty()
            || e.edc_fractions.iter().any(|d| !(0.0..1.0).contains(d))
            || e.edc_fractions.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(CliError::config("eval.edc_fractions must be strictly increasing values in [0, 1)"));
        }
        let mut names = BTreeSet::from([self.run_id.as_str()]);
        for r in &e.references {
            if !plain_name(&r.name) || !names.insert(&r.name) {
                return Err(CliError::config(format!("reference name {:?} is not a unique plain name", r.name)));
            }
        }
        for p in &self.paths.allowed {
            if !p.is_absolute() {
                return Err(CliError::config(format!("allowed path {} must be absolute", p.display())));
            }
        }
        Ok(())
    }

    pub fn backend_config(&self) -> CliResult<BackendConfig> {
        Ok(match self.backend.kind {
            BackendKind::Toy => BackendConfig::Toy(ToyConfig {
                seed: self.backend.toy.seed,
                dim: self.dim,
                embed_dim: self.backend.toy.embed_dim,
            }),
            BackendKind::External => {
                let ext = self
                    .backend
                    .external
                    .as_ref()
                    .ok_or_else(|| CliError::config("no [backend.external] section"))?;
                BackendConfig::External(ExternalConfig {
                    command: ext.command.clone(),
                    dim: self.dim,
                    embed_dim: ext.embed_dim,
                })
            }
        })
    }

    pub fn embed_dim(&self) -> usize {
        match (&self.backend.kind, &self.backend.external) {
            (BackendKind::External, Some(ext)) => ext.embed_dim,
            _ => self.backend.toy.embed_dim,
        }
    }

    /// Resolve a configured path against `run_dir`, refusing anything that
    /// is neither inside it nor under an allowed directory.
    pub fn resolve(&self, run_dir: &Path, p: &Path) -> CliResult<PathBuf> {
        if p.components().any(|c| matches!(c, Component::ParentDir)) {
            return Err(CliError::config(format!("path {} may not contain '..'", p.display())));
        }
        if p.is_relative() {
            return Ok(run_dir.join(p));
        }
        let inside = p.starts_with(run_dir) || self.paths.allowed.iter().any(|a| p.starts_with(a));
        if !inside {
            return Err(CliError::config(format!(
                "path {} is outside the run directory and not in paths.allowed",
                p.display()
            )));
        }
        Ok(p.to_path_buf())
    }
}
