//! Offline registry: a directory of archives plus `index.json`.
//!
//! ```json
//! [
//!   {"registry": "crates-io", "package": "tokio", "version": "1.8.4", "file": "tokio-1.8.4.crate"},
//!   {"registry": "pypi", "package": "x", "version": "1.0", "file": "x-1.0-py3-none-any.whl", "kind": "wheel"}
//! ]
//! ```
//!
//! `kind` is optional; when absent it is inferred from the file extension and
//! then from the registry.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ArchiveSource, DistKind, DistributionRef, Registry, RegistryError, VersionCoordinates};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub registry: Registry,
    pub package: String,
    pub version: String,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<DistKind>,
}

impl IndexEntry {
    fn resolved_kind(&self) -> DistKind {
        if let Some(kind) = self.kind {
            return kind;
        }
        let f = self.file.to_ascii_lowercase();
        if f.ends_with(".whl") {
            DistKind::Wheel
        } else if f.ends_with(".gem") {
            DistKind::Gem
        } else if f.ends_with(".crate") {
            DistKind::Crate
        } else {
            DistKind::default_for(self.registry)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    root: PathBuf,
    entries: Vec<IndexEntry>,
}

impl FixtureStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let root = root.as_ref().to_path_buf();
        let index = root.join(INDEX_FILE);
        let text = fs::read_to_string(&index)
            .map_err(|e| RegistryError::Fixture(format!("{}: {e}", index.display())))?;
        let entries = serde_json::from_str(&text)
            .map_err(|e| RegistryError::Fixture(format!("{}: {e}", index.display())))?;
        Ok(FixtureStore { root, entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }
}

impl ArchiveSource for FixtureStore {
    fn distributions(&self, coords: &VersionCoordinates) -> Result<Vec<DistributionRef>, RegistryError> {
        let found: Vec<DistributionRef> = self
            .entries
            .iter()
            .filter(|e| e.registry == coords.registry && e.package == coords.package && e.version == coords.version)
            .map(|e| DistributionRef {
                kind: e.resolved_kind(),
                filename: e.file.clone(),
                location: self.root.join(&e.file).to_string_lossy().into_owned(),
            })
            .collect();
        if found.is_empty() {
            return Err(RegistryError::VersionNotInRegistry(coords.clone()));
        }
        Ok(found)
    }

    fn download(&self, _coords: &VersionCoordinates, dist: &DistributionRef) -> Result<Vec<u8>, RegistryError> {
        fs::read(&dist.location).map_err(|e| RegistryError::Fixture(format!("{}: {e}", dist.location)))
    }
}
