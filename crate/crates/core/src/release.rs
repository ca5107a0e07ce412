//! Version -> release commit resolution through repository tags, and the
//! commit range of an update.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use regex::Regex;
use thiserror::Error;

use crate::git::{CommitId, GitError, Tag};
use crate::locate::RepoContext;

#[derive(Debug, Error)]
pub enum ReleaseError {
    #[error("no tag matches version {0}")]
    NoReleaseTag(String),
    #[error("tags for version {version} point at different commits: {tags:?}")]
    AmbiguousReleaseTag { version: String, tags: Vec<String> },
    #[error(transparent)]
    Git(#[from] GitError),
}

/// Tag shapes for `version` (v) and `package` (n):
/// `v`, `vV`, `release-v`, `releases/v` (plain) and `n-v`, `n/v`, `n@v` with an
/// optional `v` prefix on the version (name-qualified). Matching is anchored on
/// both ends, so `1.8.4` never matches `11.8.4` or `1.8.40`.
struct TagPatterns {
    plain: Regex,
    qualified: Regex,
}

impl TagPatterns {
    fn new(package: &str, version: &str) -> Self {
        let v = regex::escape(version);
        let mut names = vec![regex::escape(package)];
        // scoped npm packages are often tagged with the bare name
        if let Some((_, bare)) = package.strip_prefix('@').and_then(|p| p.split_once('/')) {
            names.push(regex::escape(bare));
        }
        let names = names.join("|");
        TagPatterns {
            plain: Regex::new(&format!(r"^(?:[vV]|release-|releases/)?{v}$")).expect("escaped pattern"),
            qualified: Regex::new(&format!(r"^(?i:{names})(?:-|/|@)[vV]?{v}$")).expect("escaped pattern"),
        }
    }
}

/// Resolve `version` to the commit its release tag points at.
///
/// Several matching tags on one commit are fine. When name-qualified tags
/// match, plain tags are ignored.
pub fn resolve_release_commit(tags: &[Tag], package: &str, version: &str) -> Result<CommitId, ReleaseError> {
    let patterns = TagPatterns::new(package, version);
    let mut qualified: BTreeMap<CommitId, BTreeSet<&str>> = BTreeMap::new();
    let mut plain: BTreeMap<CommitId, BTreeSet<&str>> = BTreeMap::new();
    for tag in tags {
        if patterns.qualified.is_match(&tag.name) {
            qualified.entry(tag.commit.clone()).or_default().insert(&tag.name);
        } else if patterns.plain.is_match(&tag.name) {
            plain.entry(tag.commit.clone()).or_default().insert(&tag.name);
        }
    }
    let chosen = if qualified.is_empty() { plain } else { qualified };
    match chosen.len() {
        0 => Err(ReleaseError::NoReleaseTag(version.to_string())),
        1 => Ok(chosen.into_keys().next().expect("one entry")),
        _ => Err(ReleaseError::AmbiguousReleaseTag {
            version: version.to_string(),
            tags: chosen.values().flatten().map(|s| s.to_string()).collect(),
        }),
    }
}

#[derive(Debug, Clone)]
pub struct ReleaseContext {
    pub repo: RepoContext,
    /// Release commit of the current version.
    pub c_x: CommitId,
    /// Release commit of the update version.
    pub c_y: CommitId,
    /// Common ancestor of `c_x` and `c_y`.
    pub c_a: CommitId,
    /// `c_x..c_y`, oldest first.
    pub range: Vec<CommitId>,
    range_set: HashSet<CommitId>,
    pub warnings: Vec<String>,
}

impl ReleaseContext {
    pub fn in_range(&self, commit: &CommitId) -> bool {
        self.range_set.contains(commit)
    }
}

/// Release commits are resolved by the caller (tags first, then the package
/// directory is located at `c_y`); this fills in the ancestor and range.
pub fn build_release_context(repo: RepoContext, c_x: CommitId, c_y: CommitId) -> Result<ReleaseContext, ReleaseError> {
    let git = repo.repo.clone();
    let base = git.merge_base(&c_x, &c_y)?;
    let mut warnings = Vec::new();
    if !base.alternatives.is_empty() {
        warnings.push(format!(
            "criss-cross history: {} merge bases; using {} (smallest range to the update release)",
            base.alternatives.len() + 1,
            base.commit.short()
        ));
    }
    let range = git.commit_range(&c_x, &c_y)?;
    let range_set = range.iter().cloned().collect();
    Ok(ReleaseContext { repo, c_x, c_y, c_a: base.commit, range, range_set, warnings })
}
