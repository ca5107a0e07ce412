//! Phantom artifact detection.
//!
//! A phantom file is a registry file of the update version with no counterpart
//! at its mapped repository path at the update's release commit. Phantom lines
//! are line changes present in the registry's `X -> Y` diff of a file but not
//! in the repository's diff of the mapped path between the two release commits.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::git::{CommitId, GitError};
use crate::locate::{map_registry_path, LocateError, RepoContext};
use crate::registry::{line_diff, multiset_difference, RegistryArtifact};
use crate::release::ReleaseContext;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Git(#[from] GitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomReason {
    MissingAtReleaseCommit,
    BinaryContentMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomFileEntry {
    pub registry_path: String,
    pub mapped_repo_path: String,
    pub reason: PhantomReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomLines {
    pub added: Vec<String>,
    pub removed: Vec<String>,
}

impl PhantomLines {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

/// Registry path -> phantom lines, for non-phantom files of the update only.
pub type PhantomLineMap = BTreeMap<String, PhantomLines>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomCounts {
    pub phantom_files: usize,
    pub files_with_phantom_lines: usize,
    pub added_phantom_lines: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomReport {
    pub phantom_files: Vec<PhantomFileEntry>,
    pub phantom_lines: PhantomLineMap,
    /// Registry paths shipped in the current version but not in the update.
    pub removed_files: Vec<String>,
    pub counts: PhantomCounts,
}

impl PhantomReport {
    pub fn new(phantom_files: Vec<PhantomFileEntry>, phantom_lines: PhantomLineMap, removed_files: Vec<String>) -> Self {
        let counts = PhantomCounts {
            phantom_files: phantom_files.len(),
            files_with_phantom_lines: phantom_lines.len(),
            added_phantom_lines: phantom_lines.values().map(|l| l.added.len()).sum(),
        };
        PhantomReport { phantom_files, phantom_lines, removed_files, counts }
    }

    pub fn is_phantom(&self, registry_path: &str) -> bool {
        self.phantom_files.iter().any(|e| e.registry_path == registry_path)
    }
}

/// Read a repository file at `at`, following submodule mounts.
pub(crate) fn read_repo_file(ctx: &RepoContext, path: &str, at: &CommitId) -> Result<Option<Vec<u8>>, GitError> {
    match ctx.repo.locate(path, at)? {
        Some(found) => Ok(Some(found.repo.read_blob(&found.entry.oid)?)),
        None => Ok(None),
    }
}

pub fn detect_phantom_files(artifact_y: &RegistryArtifact, ctx: &ReleaseContext) -> Result<Vec<PhantomFileEntry>, PhantomError> {
    let paths: Vec<&str> = artifact_y.paths().collect();
    let entries: Vec<Option<PhantomFileEntry>> = paths
        .par_iter()
        .map(|path| -> Result<Option<PhantomFileEntry>, PhantomError> {
            let mapped = map_registry_path(&ctx.repo, path, &ctx.c_y)?;
            let reason = match read_repo_file(&ctx.repo, &mapped, &ctx.c_y)? {
                None => Some(PhantomReason::MissingAtReleaseCommit),
                Some(repo_bytes) if !artifact_y.is_text(path) => {
                    (artifact_y.content(path) != Some(repo_bytes.as_slice())).then_some(PhantomReason::BinaryContentMismatch)
                }
                Some(_) => None,
            };
            Ok(reason.map(|reason| PhantomFileEntry {
                registry_path: path.to_string(),
                mapped_repo_path: mapped,
                reason,
            }))
        })
        .collect::<Result<_, _>>()?;
    Ok(entries.into_iter().flatten().collect())
}

fn inside(dir: &str, path: &str) -> bool {
    dir.is_empty() || path.strip_prefix(dir).is_some_and(|rest| rest.starts_with('/'))
}

fn strip_dir<'a>(dir: &str, path: &'a str) -> &'a str {
    if dir.is_empty() { path } else { &path[dir.len() + 1..] }
}

/// Renames `old -> new` between two commits that stay inside the package
/// directory; renames crossing its boundary count as add + delete.
pub(crate) fn package_renames(ctx: &RepoContext, from: &CommitId, to: &CommitId) -> Result<BTreeMap<String, String>, GitError> {
    let dir = &ctx.package_directory;
    Ok(ctx
        .repo
        .renames(from, to)?
        .into_iter()
        .filter(|(old, new)| inside(dir, old) && inside(dir, new))
        .map(|(old, new)| (new, old))
        .collect())
}

pub fn detect_phantom_lines(
    artifact_x: &RegistryArtifact,
    artifact_y: &RegistryArtifact,
    ctx: &ReleaseContext,
    phantom_files: &[PhantomFileEntry],
) -> Result<PhantomLineMap, PhantomError> {
    let repo = &ctx.repo;
    let renamed_from = package_renames(repo, &ctx.c_x, &ctx.c_y)?;
    let candidates: Vec<&str> = artifact_y
        .paths()
        .filter(|p| artifact_y.is_text(p) && !phantom_files.iter().any(|e| e.registry_path == *p))
        .collect();

    let per_file: Vec<Option<(String, PhantomLines)>> = candidates
        .par_iter()
        .map(|path| -> Result<Option<(String, PhantomLines)>, PhantomError> {
            let mapped_y = map_registry_path(repo, path, &ctx.c_y)?;
            let repo_y = read_repo_file(repo, &mapped_y, &ctx.c_y)?.unwrap_or_default();

            // the repository baseline only counts when the registry shipped the file at X
            let x_source = if artifact_x.contains(path) {
                Some((path.to_string(), map_registry_path(repo, path, &ctx.c_x)?))
            } else {
                renamed_from
                    .get(&mapped_y)
                    .map(|old| (strip_dir(&repo.package_directory, old).to_string(), old.clone()))
                    .filter(|(reg_old, _)| artifact_x.contains(reg_old))
            };
            let (registry_x, repo_x) = match &x_source {
                Some((reg_path, repo_path)) => {
                    if !artifact_x.is_text(reg_path) {
                        return Ok(None);
                    }
                    let repo_x = read_repo_file(repo, repo_path, &ctx.c_x)?.unwrap_or_default();
                    (artifact_x.content(reg_path).unwrap_or_default(), repo_x)
                }
                None => (&[][..], Vec::new()),
            };

            let registry_diff = line_diff(registry_x, artifact_y.content(path).unwrap_or_default());
            let repo_diff = line_diff(&repo_x, &repo_y);
            let lines = PhantomLines {
                added: multiset_difference(&registry_diff.added, &repo_diff.added),
                removed: multiset_difference(&registry_diff.removed, &repo_diff.removed),
            };
            Ok((!lines.is_empty()).then(|| (path.to_string(), lines)))
        })
        .collect::<Result<_, _>>()?;
    Ok(per_file.into_iter().flatten().collect())
}

pub fn detect_phantoms(
    artifact_x: &RegistryArtifact,
    artifact_y: &RegistryArtifact,
    ctx: &ReleaseContext,
) -> Result<PhantomReport, PhantomError> {
    let files = detect_phantom_files(artifact_y, ctx)?;
    let lines = detect_phantom_lines(artifact_x, artifact_y, ctx, &files)?;
    let removed = artifact_x.paths().filter(|p| !artifact_y.contains(p)).map(str::to_string).collect();
    Ok(PhantomReport::new(files, lines, removed))
}
