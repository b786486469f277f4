//! On-disk dataset container.
//!
//! A container is a directory with `manifest.json` and one raw data file per
//! domain. Raw files hold little-endian `f32` values, trial-major, then
//! channel, then sample: element `(n, i, j)` lives at `((n * c) + i) * t + j`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_domain, ClassId, DomainSet, Trial};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub domains: Vec<DomainEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub domain_id: String,
    pub channels: usize,
    pub samples: usize,
    pub sampling_rate_hz: f64,
    pub n_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<ClassId>>,
    pub data_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_names: Option<Vec<String>>,
    /// Cue onsets into a continuous recording (a domain stored as one long
    /// trial). Used by epoching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<Event>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub onset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ClassId>,
}

/// A domain plus the optional container-level extras.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub domain: DomainSet,
    pub events: Option<Vec<Event>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn from_domains(domains: Vec<DomainSet>) -> Self {
        Dataset {
            entries: domains
                .into_iter()
                .map(|domain| DatasetEntry {
                    domain,
                    events: None,
                })
                .collect(),
        }
    }

    pub fn domains(&self) -> impl Iterator<Item = &DomainSet> {
        self.entries.iter().map(|e| &e.domain)
    }

    pub fn into_domains(self) -> Vec<DomainSet> {
        self.entries.into_iter().map(|e| e.domain).collect()
    }
}

fn data_file_name(index: usize, domain_id: &str) -> String {
    let safe: String = domain_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:03}_{safe}.f32")
}

/// Writes `dataset` into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        domains: Vec::with_capacity(dataset.entries.len()),
    };
    for (index, entry) in dataset.entries.iter().enumerate() {
        let d = &entry.domain;
        let violations = validate_domain(d);
        if !violations.is_empty() {
            return Err(Error::InvalidDomain {
                domain_id: d.domain_id().to_owned(),
                violations,
            });
        }
        let (c, t) = (d.channels(), d.samples());
        let mut bytes = Vec::with_capacity(d.len() * c * t * 4);
        for trial in d.trials() {
            let x = trial.data();
            for i in 0..c {
                for j in 0..t {
                    bytes.extend_from_slice(&(x[(i, j)] as f32).to_le_bytes());
                }
            }
        }
        let data_file = data_file_name(index, d.domain_id());
        let path = dir.join(&data_file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        manifest.domains.push(DomainEntry {
            domain_id: d.domain_id().to_owned(),
            channels: c,
            samples: t,
            sampling_rate_hz: d.sampling_rate(),
            n_trials: d.len(),
            labels: d.labels().map(<[ClassId]>::to_vec),
            data_file,
            channel_names: d.trials()[0].channel_names().map(<[String]>::to_vec),
            events: entry.events.clone(),
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "{}: unsupported format_version {}",
            path.display(),
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Loads every domain of the container in `dir` and validates it.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut entries = Vec::with_capacity(manifest.domains.len());
    for entry in manifest.domains {
        let path: PathBuf = dir.join(&entry.data_file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (n, c, t) = (entry.n_trials, entry.channels, entry.samples);
        let expected = n * c * t * 4;
        if bytes.len() != expected {
            return Err(Error::shape(
                format!("{expected} bytes for {n}x{c}x{t} f32 values"),
                format!("{} bytes in {}", bytes.len(), path.display()),
            ));
        }
        let mut values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
        let mut trials = Vec::with_capacity(n);
        for _ in 0..n {
            // row-major on disk, nalgebra is column-major
            let data = DMatrix::from_row_iterator(c, t, values.by_ref().take(c * t));
            let mut trial = Trial::new(data, entry.sampling_rate_hz)?;
            if let Some(names) = &entry.channel_names {
                trial = trial.with_channel_names(names.clone())?;
            }
            trials.push(trial);
        }
        let domain = DomainSet::new(entry.domain_id, trials, entry.labels)?;
        entries.push(DatasetEntry {
            domain,
            events: entry.events,
        });
    }
    Ok(Dataset { entries })
}
