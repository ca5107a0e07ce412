//! Repository location: registry metadata -> GitHub URL -> package directory,
//! and registry path -> repository path mapping.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::git::{CommitId, GitError, GitRepo, Tree};
use crate::registry::{LiveRegistry, Registry, RegistryArtifact, RegistryError, VersionCoordinates};

/// Fraction of registry paths that must exist in the repository for a PyPI
/// package directory to be accepted.
pub const DEFAULT_PYPI_MATCH_THRESHOLD: f64 = 0.5;

const MAX_SYMLINK_DEPTH: usize = 8;

#[derive(Debug, Error)]
pub enum LocateError {
    #[error("{0} lists no source repository")]
    NoRepositoryListed(String),
    #[error("repository {0} is not hosted on GitHub")]
    NotGitHubHosted(String),
    #[error("cannot parse repository url `{0}`")]
    InvalidRepositoryUrl(String),
    #[error("no directory in the repository matches the package ({0})")]
    DirectoryNotFound(String),
    #[error("package directory is ambiguous: {0:?}")]
    AmbiguousDirectory(Vec<String>),
    #[error("symbolic link at {0} escapes the repository")]
    SymlinkEscapesRepository(String),
    #[error("metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Git(#[from] GitError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Source of the repository field a registry lists for a package.
pub trait MetadataSource: Send + Sync {
    fn repository_field(&self, coords: &VersionCoordinates) -> Result<Option<String>, LocateError>;
}

impl MetadataSource for LiveRegistry {
    fn repository_field(&self, coords: &VersionCoordinates) -> Result<Option<String>, LocateError> {
        Ok(LiveRegistry::repository_field(self, coords)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataEntry {
    pub registry: Registry,
    pub package: String,
    pub repository: Option<String>,
}

/// Offline metadata: a JSON array of [`MetadataEntry`].
#[derive(Debug, Clone, Default)]
pub struct MetadataFixture {
    entries: HashMap<(Registry, String), Option<String>>,
}

impl MetadataFixture {
    pub fn from_entries(entries: impl IntoIterator<Item = MetadataEntry>) -> Self {
        MetadataFixture {
            entries: entries.into_iter().map(|e| ((e.registry, e.package), e.repository)).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LocateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LocateError::Metadata(format!("{}: {e}", path.display())))?;
        let entries: Vec<MetadataEntry> =
            serde_json::from_str(&text).map_err(|e| LocateError::Metadata(format!("{}: {e}", path.display())))?;
        Ok(Self::from_entries(entries))
    }
}

impl MetadataSource for MetadataFixture {
    fn repository_field(&self, coords: &VersionCoordinates) -> Result<Option<String>, LocateError> {
        Ok(self.entries.get(&(coords.registry, coords.package.clone())).cloned().flatten())
    }
}

/// Normalize the many shapes of a GitHub repository reference to
/// `https://github.com/<owner>/<repo>`.
pub fn normalize_github_url(raw: &str) -> Result<String, LocateError> {
    let invalid = || LocateError::InvalidRepositoryUrl(raw.to_string());
    let mut s = raw.trim().to_string();
    if s.is_empty() {
        return Err(invalid());
    }
    if let Some(rest) = s.strip_prefix("github:") {
        s = format!("https://github.com/{rest}");
    } else if let Some(rest) = s.strip_prefix("git@") {
        // scp-like: git@host:owner/repo.git
        let (host, path) = rest.split_once(':').ok_or_else(invalid)?;
        s = format!("ssh://git@{host}/{path}");
    } else if !s.contains("://") {
        let first = s.split('/').next().unwrap_or_default();
        if first.contains('.') {
            s = format!("https://{s}");
        } else if s.split('/').filter(|p| !p.is_empty()).count() == 2 {
            // npm shorthand `owner/repo`
            s = format!("https://github.com/{s}");
        } else {
            return Err(invalid());
        }
    }
    if let Some(rest) = s.strip_prefix("git+") {
        s = rest.to_string();
    }
    let url = url::Url::parse(&s).map_err(|_| invalid())?;
    let host = url.host_str().ok_or_else(invalid)?.to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    if host != "github.com" {
        return Err(LocateError::NotGitHubHosted(raw.trim().to_string()));
    }
    let mut segs = url.path_segments().ok_or_else(invalid)?.filter(|p| !p.is_empty());
    let owner = segs.next().ok_or_else(invalid)?;
    let repo = segs.next().ok_or_else(invalid)?;
    let repo = repo.strip_suffix(".git").unwrap_or(repo);
    if owner.is_empty() || repo.is_empty() {
        return Err(invalid());
    }
    Ok(format!("https://github.com/{owner}/{repo}"))
}

pub fn locate_repository(coords: &VersionCoordinates, metadata: &dyn MetadataSource) -> Result<String, LocateError> {
    match metadata.repository_field(coords)? {
        Some(raw) if !raw.trim().is_empty() => normalize_github_url(&raw),
        _ => Err(LocateError::NoRepositoryListed(format!("{}:{}", coords.registry, coords.package))),
    }
}

/// Where a normalized GitHub URL is cloned inside the cache directory:
/// `<cache>/github.com/<owner>/<repo>`.
pub fn cache_path(cache_dir: &Path, github_url: &str) -> PathBuf {
    let tail = github_url.trim_start_matches("https://");
    tail.split('/').fold(cache_dir.to_path_buf(), |p, seg| p.join(seg))
}

#[derive(Debug, Clone)]
pub struct RepoContext {
    pub repo_url: String,
    pub repo: Arc<GitRepo>,
    /// Repository-relative, `""` for the root.
    pub package_directory: String,
    /// Share of registry paths found under the package directory.
    pub match_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectoryMatch {
    pub directory: String,
    pub match_fraction: f64,
}

fn join(dir: &str, path: &str) -> String {
    if dir.is_empty() {
        path.to_string()
    } else if path.is_empty() {
        dir.to_string()
    } else {
        format!("{dir}/{path}")
    }
}

fn depth(dir: &str) -> usize {
    if dir.is_empty() { 0 } else { dir.split('/').count() }
}

fn canonical_name(registry: Registry, name: &str) -> String {
    match registry {
        Registry::Pypi | Registry::Rubygems => name.to_ascii_lowercase().replace(['-', '.'], "_"),
        Registry::CratesIo | Registry::Npm => name.to_string(),
    }
}

/// Package name declared by a manifest, if the file is a manifest at all.
fn manifest_name(registry: Registry, file_name: &str, content: &[u8]) -> Option<String> {
    let text = std::str::from_utf8(content).ok()?;
    match registry {
        Registry::CratesIo if file_name == "Cargo.toml" => {
            let doc: toml::Value = toml::from_str(text).ok()?;
            doc.get("package")?.get("name")?.as_str().map(str::to_string)
        }
        Registry::Npm if file_name == "package.json" => {
            let doc: serde_json::Value = serde_json::from_str(text).ok()?;
            doc.get("name")?.as_str().map(str::to_string)
        }
        Registry::Rubygems if file_name.ends_with(".gemspec") => {
            let re = regex::Regex::new(r#"\.name\s*=\s*["']([^"']+)["']"#).expect("static regex");
            re.captures(text)
                .map(|c| c[1].to_string())
                .or_else(|| Some(file_name.trim_end_matches(".gemspec").to_string()))
        }
        _ => None,
    }
}

/// Fraction of artifact paths that exist in the tree under `dir`.
pub fn match_fraction(tree: &Tree, dir: &str, artifact: &RegistryArtifact) -> f64 {
    if artifact.is_empty() {
        return 0.0;
    }
    let hits = artifact.paths().filter(|p| tree.get(&join(dir, p)).is_some()).count();
    hits as f64 / artifact.len() as f64
}

fn pick_best(mut scored: Vec<(String, f64)>) -> Result<DirectoryMatch, LocateError> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(depth(&a.0).cmp(&depth(&b.0))).then(a.0.cmp(&b.0)));
    let (best, fraction) = scored.first().cloned().ok_or_else(|| LocateError::DirectoryNotFound("no candidates".into()))?;
    let tied: Vec<String> = scored
        .iter()
        .filter(|(d, f)| *f == fraction && depth(d) == depth(&best))
        .map(|(d, _)| d.clone())
        .collect();
    if tied.len() > 1 {
        return Err(LocateError::AmbiguousDirectory(tied));
    }
    Ok(DirectoryMatch { directory: best, match_fraction: fraction })
}

/// Find the package's directory in the repository tree at `at`.
///
/// Manifest registries look for a manifest declaring the package name. PyPI
/// picks the directory under which most registry paths exist, requiring at
/// least `pypi_threshold` of them.
pub fn locate_package_directory(
    repo: &GitRepo,
    package: &str,
    artifact: &RegistryArtifact,
    at: &CommitId,
    pypi_threshold: f64,
) -> Result<DirectoryMatch, LocateError> {
    let registry = artifact.coordinates.registry;
    let tree = repo.tree(at)?;
    let wanted = canonical_name(registry, package);

    if registry == Registry::Pypi {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for repo_path in tree.paths() {
            for reg_path in artifact.paths() {
                if repo_path == reg_path {
                    *counts.entry(String::new()).or_default() += 1;
                } else if let Some(dir) = repo_path.strip_suffix(reg_path).and_then(|d| d.strip_suffix('/')) {
                    *counts.entry(dir.to_string()).or_default() += 1;
                }
            }
        }
        let total = artifact.len().max(1) as f64;
        let scored: Vec<(String, f64)> = counts.into_iter().map(|(d, n)| (d, n as f64 / total)).collect();
        let best = pick_best(scored).map_err(|_| LocateError::DirectoryNotFound("no registry path exists in the repository".into()))?;
        if best.match_fraction < pypi_threshold {
            return Err(LocateError::DirectoryNotFound(format!(
                "best directory `{}` matches only {:.0}% of registry paths",
                best.directory,
                best.match_fraction * 100.0
            )));
        }
        return Ok(best);
    }

    let mut scored = Vec::new();
    for (path, entry) in tree.entries() {
        if entry.is_gitlink() || entry.is_symlink() {
            continue;
        }
        let (dir, file_name) = path.rsplit_once('/').unwrap_or(("", path));
        let looks_like_manifest = match registry {
            Registry::CratesIo => file_name == "Cargo.toml",
            Registry::Npm => file_name == "package.json",
            Registry::Rubygems => file_name.ends_with(".gemspec"),
            Registry::Pypi => false,
        };
        if !looks_like_manifest {
            continue;
        }
        let content = repo.read_blob(&entry.oid)?;
        match manifest_name(registry, file_name, &content) {
            Some(name) if canonical_name(registry, &name) == wanted => {
                scored.push((dir.to_string(), match_fraction(&tree, dir, artifact)));
            }
            _ => {}
        }
    }
    if scored.is_empty() {
        return Err(LocateError::DirectoryNotFound(format!("no manifest declares `{package}`")));
    }
    pick_best(scored)
}

/// Normalize a `/`-separated path, resolving `.` and `..`. `None` if it
/// climbs above the root.
fn normalize(path: &str) -> Option<String> {
    let mut parts: Vec<&str> = Vec::new();
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            s => parts.push(s),
        }
    }
    Some(parts.join("/"))
}

/// Resolve symbolic links along `path` in the tree at `at`. Paths entering a
/// submodule mount are returned as-is from the mount on.
pub fn resolve_symlinks(repo: &GitRepo, path: &str, at: &CommitId) -> Result<String, LocateError> {
    let tree = repo.tree(at)?;
    let mut current = path.to_string();
    for _ in 0..=MAX_SYMLINK_DEPTH {
        let comps: Vec<&str> = current.split('/').collect();
        let mut rewritten = None;
        for i in 0..comps.len() {
            let prefix = comps[..=i].join("/");
            let Some(entry) = tree.get(&prefix) else { continue };
            if entry.is_gitlink() {
                break;
            }
            if entry.is_symlink() {
                let target = String::from_utf8_lossy(&repo.read_blob(&entry.oid)?).into_owned();
                if target.starts_with('/') {
                    return Err(LocateError::SymlinkEscapesRepository(prefix));
                }
                let parent = prefix.rsplit_once('/').map(|(p, _)| p).unwrap_or("");
                let rest = comps[i + 1..].join("/");
                let joined = join(&join(parent, &target), &rest);
                rewritten = Some(normalize(&joined).ok_or_else(|| LocateError::SymlinkEscapesRepository(prefix.clone()))?);
                break;
            }
        }
        match rewritten {
            Some(next) => current = next,
            None => return Ok(current),
        }
    }
    Err(LocateError::SymlinkEscapesRepository(path.to_string()))
}

/// `package_directory/registry_path` with symbolic links resolved at `at`.
pub fn map_registry_path(ctx: &RepoContext, registry_path: &str, at: &CommitId) -> Result<String, LocateError> {
    resolve_symlinks(&ctx.repo, &join(&ctx.package_directory, registry_path), at)
}

/// The plain join, without symlink resolution.
pub fn join_package_path(package_directory: &str, registry_path: &str) -> String {
    join(package_directory, registry_path)
}

/// Version declared by the package manifest under `dir` at `at`, when the
/// ecosystem's manifest carries one in a parseable form.
pub fn manifest_version(repo: &GitRepo, registry: Registry, dir: &str, at: &CommitId) -> Result<Option<String>, GitError> {
    let read = |name: &str| repo.file_at(at, &join(dir, name));
    Ok(match registry {
        Registry::CratesIo => read("Cargo.toml")?
            .and_then(|c| toml::from_str::<toml::Value>(&String::from_utf8_lossy(&c)).ok())
            .and_then(|d| d.get("package")?.get("version")?.as_str().map(str::to_string)),
        Registry::Npm => read("package.json")?
            .and_then(|c| serde_json::from_slice::<serde_json::Value>(&c).ok())
            .and_then(|d| d.get("version")?.as_str().map(str::to_string)),
        Registry::Pypi | Registry::Rubygems => None,
    })
}
