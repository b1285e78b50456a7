//! Tab-separated dataset manifests.
//!
//! One record per line: `path<TAB>label<TAB>modality[<TAB>client]`. Blank
//! lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::image::{normalize_all, resize_bilinear, Normalization};
use super::pgm::{load_pgm, GrayImage};
use crate::episodes::{Example, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    pub modality: String,
    pub client: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

/// Tag carrying a manifest client assignment.
pub fn client_tag(client: usize) -> String {
    format!("client={client}")
}

impl DatasetManifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let base = origin.parent().unwrap_or(Path::new(""));
        let err = |line: usize, msg: String| Error::Manifest {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(err(line, format!("expected 3 or 4 tab-separated fields, found {}", fields.len())));
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(err(line, "path and label must be non-empty".into()));
            }
            let client = match fields.get(3) {
                Some(c) if !c.is_empty() => Some(
                    c.parse::<usize>()
                        .map_err(|_| err(line, format!("client id '{c}' is not a non-negative integer")))?,
                ),
                _ => None,
            };
            let path = base.join(fields[0]);
            if !seen.insert(path.clone()) {
                return Err(err(line, format!("duplicate path {}", fields[0])));
            }
            entries.push(ManifestEntry {
                path,
                label: fields[1].to_string(),
                modality: fields[2].to_string(),
                client,
            });
        }
        Ok(DatasetManifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DatasetManifest::parse(&text, path)
    }

    /// Serializes with paths relative to `dir` where possible.
    pub fn render(&self, dir: &Path) -> String {
        let mut out = String::from("# path\tlabel\tmodality\tclient\n");
        for e in &self.entries {
            let p = e.path.strip_prefix(dir).unwrap_or(&e.path);
            out.push_str(&format!("{}\t{}\t{}", p.display(), e.label, e.modality));
            if let Some(c) = e.client {
                out.push_str(&format!("\t{c}"));
            }
            out.push('\n');
        }
        out
    }

    /// Loads, resizes to `side x side` and normalizes every image. Class
    /// indices follow the sorted label names; examples are tagged with their
    /// modality and, if present, their client assignment.
    pub fn to_dataset(&self, side: usize) -> Result<LabeledDataset> {
        self.to_dataset_with(side, Normalization::PerImage)
    }

    pub fn to_dataset_with(&self, side: usize, mode: Normalization) -> Result<LabeledDataset> {
        let names: Vec<String> = self
            .entries
            .iter()
            .map(|e| e.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let images = self
            .entries
            .par_iter()
            .map(|e| resize_bilinear(&load_pgm(&e.path)?, side))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&GrayImage> = images.iter().collect();
        let examples = normalize_all(&refs, mode)
            .into_iter()
            .zip(&self.entries)
            .enumerate()
            .map(|(i, (input, e))| {
                let label = names.binary_search(&e.label).expect("label collected above");
                let mut tags = vec![e.modality.clone()];
                if let Some(c) = e.client {
                    tags.push(client_tag(c));
                }
                Example::new(i as u64, input, label).with_tags(tags)
            })
            .collect();
        LabeledDataset::new(examples, names)
    }
}
