//! Code delta of an update, every line bound to the commit responsible for it.
//!
//! Added lines come from blaming each changed file at `c_y` with `c_x` as the
//! boundary. Removed lines come from a reverse blame over `c_a..c_y`: the
//! commit after the last one still holding a line is the one that removed it.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::git::{CommitId, GitError, GitRepo, LocatedFile};
use crate::locate::{map_registry_path, LocateError};
use crate::phantom::{package_renames, PhantomReport};
use crate::registry::RegistryArtifact;
use crate::release::ReleaseContext;

#[derive(Debug, Error)]
pub enum DeltaError {
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Git(#[from] GitError),
}

/// One file eligible for delta analysis. `base_path` is the repository path
/// at `c_a`, `update_path` the one at `c_y`; a side is `None` when the file
/// does not exist there.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChangedFile {
    pub base_path: Option<String>,
    pub update_path: Option<String>,
}

impl ChangedFile {
    pub fn display_path(&self) -> &str {
        self.update_path.as_deref().or(self.base_path.as_deref()).unwrap_or_default()
    }
}

pub type ChangedFileSet = Vec<ChangedFile>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeltaLine {
    /// Repository path, including any submodule mount.
    pub path: String,
    /// 1-based, at `c_y` for added lines and at `c_a` for removed ones.
    pub line_number: usize,
    pub line_content: String,
    pub commit: CommitId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submodule: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDelta {
    pub files: ChangedFileSet,
    pub added: Vec<DeltaLine>,
    pub removed: Vec<DeltaLine>,
    pub warnings: Vec<String>,
}

impl CodeDelta {
    pub fn total_lines(&self) -> usize {
        self.added.len() + self.removed.len()
    }

    pub fn lines(&self) -> impl Iterator<Item = &DeltaLine> {
        self.added.iter().chain(&self.removed)
    }

    pub fn commits(&self) -> BTreeSet<CommitId> {
        self.lines().map(|l| l.commit.clone()).collect()
    }
}

/// Commit range of one repository in the update: the top-level repository or
/// a submodule between the pointers recorded at the release commits.
struct Scope {
    repo: Arc<GitRepo>,
    /// Top-level path of the submodule mount, `None` for the top level.
    mount: Option<String>,
    x: Option<CommitId>,
    a: Option<CommitId>,
    y: CommitId,
    range: HashSet<CommitId>,
    /// first parent -> child along the first-parent chain from `a` to `y`
    child_of: HashMap<CommitId, CommitId>,
    /// first-parent chain from `a` to `y`, oldest first
    chain: Vec<CommitId>,
    landing: Mutex<HashMap<CommitId, Option<CommitId>>>,
}

impl Scope {
    fn new(repo: Arc<GitRepo>, mount: Option<String>, x: Option<CommitId>, a: Option<CommitId>, y: CommitId, range: HashSet<CommitId>) -> Result<Self, GitError> {
        let pairs = match &a {
            Some(a) => repo.first_parent_chain(a, &y)?,
            None => Vec::new(),
        };
        let child_of = pairs.iter().filter_map(|(c, p)| Some((p.clone()?, c.clone()))).collect();
        let chain = pairs.into_iter().rev().map(|(c, _)| c).collect();
        Ok(Scope { repo, mount, x, a, y, range, child_of, chain, landing: Mutex::default() })
    }

    /// The commit that removed a line whose last holder was `last`: its child
    /// on the first-parent chain, else the oldest chain commit that merged it.
    fn removal_commit(&self, last: &CommitId) -> Result<Option<CommitId>, GitError> {
        if let Some(child) = self.child_of.get(last) {
            return Ok(Some(child.clone()));
        }
        if let Some(found) = self.landing.lock().expect("landing cache poisoned").get(last) {
            return Ok(found.clone());
        }
        let mut found = None;
        for c in &self.chain {
            if self.repo.is_ancestor(last, c)? {
                found = Some(c.clone());
                break;
            }
        }
        self.landing.lock().expect("landing cache poisoned").insert(last.clone(), found.clone());
        Ok(found)
    }

    fn full_path(&self, inner: &str) -> String {
        match &self.mount {
            Some(m) => format!("{m}/{inner}"),
            None => inner.to_string(),
        }
    }

    fn line(&self, inner: &str, line_number: usize, line_content: String, commit: CommitId) -> DeltaLine {
        DeltaLine { path: self.full_path(inner), line_number, line_content, commit, submodule: self.mount.clone() }
    }
}

fn gitlink_at(repo: &GitRepo, mount: &str, at: &CommitId) -> Result<Option<CommitId>, GitError> {
    match repo.tree(at)?.get(mount) {
        Some(e) if e.is_gitlink() => Ok(Some(CommitId::new(&e.oid)?)),
        _ => Ok(None),
    }
}

struct Scopes<'a> {
    ctx: &'a ReleaseContext,
    top: Arc<Scope>,
    subs: Mutex<HashMap<Vec<String>, Option<Arc<Scope>>>>,
}

impl<'a> Scopes<'a> {
    fn new(ctx: &'a ReleaseContext) -> Result<Self, GitError> {
        let top = Scope::new(
            ctx.repo.repo.clone(),
            None,
            Some(ctx.c_x.clone()),
            Some(ctx.c_a.clone()),
            ctx.c_y.clone(),
            ctx.range.iter().cloned().collect(),
        )?;
        Ok(Scopes { ctx, top: Arc::new(top), subs: Mutex::default() })
    }

    /// Scope for a chain of nested mounts; `None` when the submodule is gone
    /// at `c_y`.
    fn get(&self, mounts: &[String]) -> Result<Option<Arc<Scope>>, GitError> {
        if mounts.is_empty() {
            return Ok(Some(self.top.clone()));
        }
        if let Some(s) = self.subs.lock().expect("scope cache poisoned").get(mounts) {
            return Ok(s.clone());
        }
        let mut repo = self.ctx.repo.repo.clone();
        let (mut x, mut a, mut y) = (Some(self.ctx.c_x.clone()), Some(self.ctx.c_a.clone()), Some(self.ctx.c_y.clone()));
        let mut prefix = String::new();
        for m in mounts {
            let pointer = |c: &Option<CommitId>| c.as_ref().map(|c| gitlink_at(&repo, m, c)).transpose().map(Option::flatten);
            let (px, pa, py) = (pointer(&x)?, pointer(&a)?, pointer(&y)?);
            repo = repo.submodule(m)?;
            // pointers the clone cannot resolve count as absent
            let known = |c: Option<CommitId>| c.filter(|c| repo.rev_parse(c.as_str()).is_ok());
            x = known(px);
            a = known(pa);
            y = match py {
                Some(c) if repo.rev_parse(c.as_str()).is_ok() => Some(c),
                Some(_) => return Err(GitError::PrivateSubmodule { path: m.clone() }),
                None => None,
            };
            prefix = if prefix.is_empty() { m.clone() } else { format!("{prefix}/{m}") };
        }
        let scope = match y {
            Some(y) => {
                let range = match &x {
                    Some(x) => repo.commit_range(x, &y)?,
                    None => repo.ancestry(&y)?,
                };
                Some(Arc::new(Scope::new(repo, Some(prefix), x, a, y, range.into_iter().collect())?))
            }
            None => None,
        };
        self.subs.lock().expect("scope cache poisoned").insert(mounts.to_vec(), scope.clone());
        Ok(scope)
    }
}

/// Mapped repository paths of non-phantom files shipped in either version
/// whose content differs between `c_a` and `c_y`. Renames inside the package
/// directory collapse to one entry.
pub fn changed_files(
    artifact_x: &RegistryArtifact,
    artifact_y: &RegistryArtifact,
    phantom: &PhantomReport,
    ctx: &ReleaseContext,
) -> Result<ChangedFileSet, DeltaError> {
    let repo = &ctx.repo;
    let renamed_from = package_renames(repo, &ctx.c_a, &ctx.c_y)?;
    let rename_sources: HashSet<&String> = renamed_from.values().collect();

    let mut pairs: BTreeSet<(String, Option<String>)> = BTreeSet::new();
    for path in artifact_y.paths().filter(|p| !phantom.is_phantom(p)) {
        let update = map_registry_path(repo, path, &ctx.c_y)?;
        let base = match renamed_from.get(&update) {
            Some(old) => old.clone(),
            None => map_registry_path(repo, path, &ctx.c_a)?,
        };
        pairs.insert((base, Some(update)));
    }
    for path in artifact_x.paths().filter(|p| !artifact_y.contains(p)) {
        let base = map_registry_path(repo, path, &ctx.c_a)?;
        if !rename_sources.contains(&base) {
            pairs.insert((base, None));
        }
    }

    let git = &repo.repo;
    let located: Vec<Option<ChangedFile>> = pairs
        .par_iter()
        .map(|(base, update)| -> Result<Option<ChangedFile>, DeltaError> {
            let at_a = git.locate(base, &ctx.c_a)?;
            let at_y = match update {
                Some(u) => git.locate(u, &ctx.c_y)?,
                // dropped from the package but kept in the repository: not a deletion
                None if git.locate(base, &ctx.c_y)?.is_some() => return Ok(None),
                None => None,
            };
            let oid = |f: &Option<LocatedFile>| f.as_ref().map(|f| f.entry.oid.clone());
            if oid(&at_a) == oid(&at_y) {
                return Ok(None);
            }
            Ok(Some(ChangedFile {
                base_path: at_a.is_some().then(|| base.clone()),
                update_path: at_y.is_some().then(|| update.clone()).flatten(),
            }))
        })
        .collect::<Result<_, _>>()?;
    let mut files: ChangedFileSet = located.into_iter().flatten().collect();
    files.sort();
    files.dedup();
    Ok(files)
}

fn attribute_added(scopes: &Scopes, path: &str) -> Result<Vec<DeltaLine>, GitError> {
    let Some(found) = scopes.ctx.repo.repo.locate(path, &scopes.ctx.c_y)? else { return Ok(Vec::new()) };
    let Some(scope) = scopes.get(&found.mounts)? else { return Ok(Vec::new()) };
    let blame = scope.repo.blame(&found.path, &scope.y, scope.x.as_ref())?;
    Ok(blame
        .into_iter()
        .filter(|l| scope.range.contains(&l.commit))
        .map(|l| scope.line(&found.path, l.line_number, l.line_content, l.commit))
        .collect())
}

fn attribute_removed(scopes: &Scopes, path: &str) -> Result<Vec<DeltaLine>, GitError> {
    let Some(found) = scopes.ctx.repo.repo.locate(path, &scopes.ctx.c_a)? else { return Ok(Vec::new()) };
    let Some(scope) = scopes.get(&found.mounts)? else { return Ok(Vec::new()) };
    let Some(a) = &scope.a else { return Ok(Vec::new()) };
    let reverse = scope.repo.reverse_blame(&found.path, a, &scope.y)?;
    let mut out = Vec::new();
    for l in reverse {
        if l.commit == scope.y {
            continue;
        }
        if let Some(removal) = scope.removal_commit(&l.commit)? {
            if scope.range.contains(&removal) {
                out.push(scope.line(&found.path, l.line_number, l.line_content, removal));
            }
        }
    }
    Ok(out)
}

/// Lines of `path` at `c_y` introduced by a commit in `c_x..c_y`.
pub fn attribute_added_lines(path: &str, ctx: &ReleaseContext) -> Result<Vec<DeltaLine>, DeltaError> {
    Ok(attribute_added(&Scopes::new(ctx)?, path)?)
}

/// Lines of `path` at `c_a` removed by a commit in `c_x..c_y`.
pub fn attribute_removed_lines(path: &str, ctx: &ReleaseContext) -> Result<Vec<DeltaLine>, DeltaError> {
    Ok(attribute_removed(&Scopes::new(ctx)?, path)?)
}

/// Added and removed lines of one file.
type FileLines = (Vec<DeltaLine>, Vec<DeltaLine>);

pub fn compute_code_delta(
    artifact_x: &RegistryArtifact,
    artifact_y: &RegistryArtifact,
    phantom: &PhantomReport,
    ctx: &ReleaseContext,
) -> Result<CodeDelta, DeltaError> {
    let files = changed_files(artifact_x, artifact_y, phantom, ctx)?;
    let scopes = Scopes::new(ctx)?;
    let per_file: Vec<Result<FileLines, GitError>> = files
        .par_iter()
        .map(|f| {
            let added = match &f.update_path {
                Some(p) => attribute_added(&scopes, p)?,
                None => Vec::new(),
            };
            let removed = match &f.base_path {
                Some(p) => attribute_removed(&scopes, p)?,
                None => Vec::new(),
            };
            Ok((added, removed))
        })
        .collect();

    let mut delta = CodeDelta::default();
    for (file, result) in files.iter().zip(per_file) {
        match result {
            Ok((added, removed)) => {
                delta.added.extend(added);
                delta.removed.extend(removed);
            }
            Err(e @ GitError::PrivateSubmodule { .. }) => return Err(e.into()),
            Err(e) => delta.warnings.push(format!("{}: {e}", file.display_path())),
        }
    }
    let mut gone: Vec<String> = scopes
        .subs
        .lock()
        .expect("scope cache poisoned")
        .iter()
        .filter(|(_, s)| s.is_none())
        .map(|(m, _)| m.join("/"))
        .collect();
    gone.sort();
    for mount in gone {
        delta.warnings.push(format!("submodule {mount} is gone at the update release; its removed lines are not attributed"));
    }
    delta.added.sort();
    delta.removed.sort();
    delta.files = files;
    Ok(delta)
}
