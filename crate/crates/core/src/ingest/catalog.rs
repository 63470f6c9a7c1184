use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::makkonen::Site;
use crate::timebase::HourStamp;

pub const HASH_ALGORITHM: &str = "sha256";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Observations,
    Forecasts,
    Profiles,
    Labels,
    Sygivre,
    Production,
    PowerCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub kind: FileKind,
    /// Relative to the catalog's directory.
    pub path: String,
    pub hash: String,
    /// Farm a power curve belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub farm_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitesEntry {
    pub path: String,
    pub hash: String,
}

/// `catalog.json`: the sites file plus every data file, each with a content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub hash_algorithm: String,
    #[serde(default = "default_cadence")]
    pub cadence_hours: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_end_utc: Option<String>,
    /// Free-form provenance of generated data (generator, RNG, seed).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub generator: BTreeMap<String, String>,
    pub sites: SitesEntry,
    pub files: Vec<FileEntry>,
    #[serde(skip)]
    root: PathBuf,
}

fn default_cadence() -> u32 {
    6
}

fn rel(root: &Path, p: &Path) -> Result<String> {
    let r = p.strip_prefix(root).map_err(|_| {
        Error::Schema(format!(
            "{} is not under the catalog directory {}",
            p.display(),
            root.display()
        ))
    })?;
    Ok(r.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/"))
}

impl Catalog {
    /// Hash `sites` and every `(kind, path, farm_id)` under `root`.
    pub fn build(
        root: &Path,
        sites: &Path,
        files: &[(FileKind, PathBuf, Option<String>)],
        cadence_hours: u32,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(files.len());
        for (kind, p, farm) in files {
            entries.push(FileEntry {
                kind: *kind,
                path: rel(root, p)?,
                hash: sha256_file(p)?,
                farm_id: farm.clone(),
            });
        }
        Ok(Catalog {
            hash_algorithm: HASH_ALGORITHM.into(),
            cadence_hours,
            train_end_utc: None,
            generator: BTreeMap::new(),
            sites: SitesEntry {
                path: rel(root, sites)?,
                hash: sha256_file(sites)?,
            },
            files: entries,
            root: root.to_path_buf(),
        })
    }

    /// Read and verify every hash.
    pub fn load(path: &Path) -> Result<Self> {
        let c = Self::load_unverified(path)?;
        c.verify()?;
        Ok(c)
    }

    /// Read without touching the listed files; pair with [`Catalog::verify_file`].
    pub fn load_unverified(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut c: Catalog = serde_json::from_str(&text)?;
        if c.hash_algorithm != HASH_ALGORITHM {
            return Err(Error::Schema(format!(
                "unsupported hash algorithm `{}` (expected {HASH_ALGORITHM})",
                c.hash_algorithm
            )));
        }
        c.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn verify(&self) -> Result<()> {
        self.verify_file(&self.sites.path, &self.sites.hash)?;
        for f in &self.files {
            self.verify_file(&f.path, &f.hash)?;
        }
        Ok(())
    }

    /// Check one catalog-relative path against its recorded hash.
    pub fn verify_file(&self, rel: &str, expected: &str) -> Result<()> {
        let full = self.root.join(rel);
        let actual = sha256_file(&full)?;
        if actual != expected {
            return Err(Error::HashMismatch {
                path: full,
                expected: expected.into(),
                actual,
            });
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, entry: &FileEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn sites_path(&self) -> PathBuf {
        self.root.join(&self.sites.path)
    }

    pub fn files_of(&self, kind: FileKind) -> impl Iterator<Item = &FileEntry> {
        self.files.iter().filter(move |f| f.kind == kind)
    }

    pub fn train_end(&self) -> Result<Option<HourStamp>> {
        self.train_end_utc
            .as_deref()
            .map(|s| s.parse().map_err(Error::Schema))
            .transpose()
    }

    /// Every `(path, hash)` the catalog references, sites first.
    pub fn hashes(&self) -> Vec<(String, String)> {
        std::iter::once((self.sites.path.clone(), self.sites.hash.clone()))
            .chain(self.files.iter().map(|f| (f.path.clone(), f.hash.clone())))
            .collect()
    }

    /// Load the sites file and check that `referenced` ids all exist.
    pub fn check_sites<'a>(sites: &[Site], referenced: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let known: BTreeSet<&str> = sites.iter().map(|s| s.site_id.as_str()).collect();
        let missing: BTreeSet<&str> = referenced.into_iter().filter(|id| !known.contains(id)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "data references unknown sites: {}",
                missing.into_iter().collect::<Vec<_>>().join(", ")
            )))
        }
    }
}
