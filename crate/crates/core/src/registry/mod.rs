//! Registry client: fetch and unpack package artifacts, diff two versions.

pub mod archive;
pub mod diff;
pub mod fixture;
pub mod live;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{diff_versions, line_diff, multiset_difference, LineDiff};
pub use fixture::FixtureStore;
pub use live::LiveRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Registry {
    #[serde(rename = "crates-io")]
    CratesIo,
    #[serde(rename = "npm")]
    Npm,
    #[serde(rename = "pypi")]
    Pypi,
    #[serde(rename = "rubygems")]
    Rubygems,
}

impl Registry {
    pub const ALL: [Registry; 4] = [Registry::CratesIo, Registry::Npm, Registry::Pypi, Registry::Rubygems];

    pub fn as_str(self) -> &'static str {
        match self {
            Registry::CratesIo => "crates-io",
            Registry::Npm => "npm",
            Registry::Pypi => "pypi",
            Registry::Rubygems => "rubygems",
        }
    }
}

impl fmt::Display for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Registry {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crates-io" | "crates.io" | "crates" | "cargo" => Ok(Registry::CratesIo),
            "npm" => Ok(Registry::Npm),
            "pypi" => Ok(Registry::Pypi),
            "rubygems" | "gem" | "gems" => Ok(Registry::Rubygems),
            other => Err(RegistryError::UnknownRegistry(other.to_string())),
        }
    }
}

/// The audit input: one package update on one registry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UpdateCoordinates {
    pub registry: Registry,
    pub package: String,
    pub current_version: String,
    pub update_version: String,
}

impl UpdateCoordinates {
    pub fn new(
        registry: Registry,
        package: impl Into<String>,
        current_version: impl Into<String>,
        update_version: impl Into<String>,
    ) -> Result<Self, RegistryError> {
        let coords = UpdateCoordinates {
            registry,
            package: package.into().trim().to_string(),
            current_version: current_version.into().trim().to_string(),
            update_version: update_version.into().trim().to_string(),
        };
        if coords.package.is_empty() {
            return Err(RegistryError::InvalidCoordinates("empty package name".into()));
        }
        if coords.current_version.is_empty() || coords.update_version.is_empty() {
            return Err(RegistryError::InvalidCoordinates("empty version".into()));
        }
        if coords.current_version == coords.update_version {
            return Err(RegistryError::InvalidCoordinates(format!(
                "current and update version are both {}",
                coords.current_version
            )));
        }
        Ok(coords)
    }

    pub fn current(&self) -> VersionCoordinates {
        VersionCoordinates {
            registry: self.registry,
            package: self.package.clone(),
            version: self.current_version.clone(),
        }
    }

    pub fn update(&self) -> VersionCoordinates {
        VersionCoordinates {
            registry: self.registry,
            package: self.package.clone(),
            version: self.update_version.clone(),
        }
    }
}

impl fmt::Display for UpdateCoordinates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} {} -> {}",
            self.registry, self.package, self.current_version, self.update_version
        )
    }
}

/// A single published version.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VersionCoordinates {
    pub registry: Registry,
    pub package: String,
    pub version: String,
}

impl fmt::Display for VersionCoordinates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}@{}", self.registry, self.package, self.version)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    /// `.crate`, a gzip tar with a `name-version/` prefix.
    Crate,
    /// npm `.tgz`, a gzip tar with a `package/` prefix.
    NpmTarball,
    /// `.gem`, a plain tar holding `data.tar.gz` plus metadata members.
    Gem,
    /// PyPI binary distribution (zip).
    Wheel,
    /// PyPI source distribution (gzip tar or zip).
    Sdist,
}

impl DistKind {
    pub fn default_for(registry: Registry) -> DistKind {
        match registry {
            Registry::CratesIo => DistKind::Crate,
            Registry::Npm => DistKind::NpmTarball,
            Registry::Pypi => DistKind::Sdist,
            Registry::Rubygems => DistKind::Gem,
        }
    }
}

/// A downloadable distribution advertised for one version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributionRef {
    pub kind: DistKind,
    pub filename: String,
    /// Provider-specific locator (URL or fixture path).
    pub location: String,
}

/// Something that can list and download the distributions of a version.
///
/// Live registries and the offline fixture store both implement this; unpacking
/// and distribution selection are shared by [`fetch_artifact`].
pub trait ArchiveSource: Send + Sync {
    fn distributions(&self, coords: &VersionCoordinates) -> Result<Vec<DistributionRef>, RegistryError>;
    fn download(&self, coords: &VersionCoordinates, dist: &DistributionRef) -> Result<Vec<u8>, RegistryError>;
}

/// An unpacked package version: relative path -> content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryArtifact {
    pub coordinates: VersionCoordinates,
    pub distribution: String,
    files: BTreeMap<String, Vec<u8>>,
}

impl RegistryArtifact {
    pub fn new(coordinates: VersionCoordinates, distribution: impl Into<String>, files: BTreeMap<String, Vec<u8>>) -> Self {
        RegistryArtifact { coordinates, distribution: distribution.into(), files }
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn contains(&self, path: &str) -> bool {
        self.files.contains_key(path)
    }

    pub fn content(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(Vec::as_slice)
    }

    /// A file is text when its full content decodes as UTF-8.
    pub fn is_text(&self, path: &str) -> bool {
        self.content(path).is_some_and(|c| std::str::from_utf8(c).is_ok())
    }

    pub fn files(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.files
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{0} is not available on the registry")]
    VersionNotInRegistry(VersionCoordinates),
    #[error("corrupt archive: {0}")]
    ArchiveCorrupt(String),
    #[error("archive entry path is not valid unicode: {0}")]
    NonUnicodePathEntry(String),
    #[error("{0} is binary; compare it by content hash")]
    BinaryFile(String),
    #[error("no universal wheel among {0} wheels")]
    NoUniversalWheel(usize),
    #[error("unknown registry `{0}`")]
    UnknownRegistry(String),
    #[error("invalid coordinates: {0}")]
    InvalidCoordinates(String),
    #[error("fixture store: {0}")]
    Fixture(String),
    #[error("registry request failed: {0}")]
    Fetch(String),
}

/// Pick the distribution to audit. PyPI prefers the wheel; with several
/// wheels the first pure (`none-any`) one is used.
pub fn select_distribution(
    coords: &VersionCoordinates,
    mut dists: Vec<DistributionRef>,
) -> Result<DistributionRef, RegistryError> {
    if dists.is_empty() {
        return Err(RegistryError::VersionNotInRegistry(coords.clone()));
    }
    if coords.registry != Registry::Pypi {
        return Ok(dists.swap_remove(0));
    }
    let wheels: Vec<&DistributionRef> = dists.iter().filter(|d| d.kind == DistKind::Wheel).collect();
    match wheels.len() {
        0 => Ok(dists.swap_remove(0)),
        1 => Ok(wheels[0].clone()),
        n => wheels
            .iter()
            .find(|d| d.filename.ends_with("-none-any.whl"))
            .map(|d| (*d).clone())
            .ok_or(RegistryError::NoUniversalWheel(n)),
    }
}

pub fn fetch_artifact(coords: &VersionCoordinates, source: &dyn ArchiveSource) -> Result<RegistryArtifact, RegistryError> {
    let dists = source.distributions(coords)?;
    let dist = select_distribution(coords, dists)?;
    let bytes = source.download(coords, &dist)?;
    let files = archive::unpack(dist.kind, &bytes)?;
    log::debug!("{coords}: {} files from {}", files.len(), dist.filename);
    Ok(RegistryArtifact::new(coords.clone(), dist.filename, files))
}
