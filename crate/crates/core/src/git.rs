//! Read-only query layer over a local git clone.
//!
//! Everything goes through the `git` executable, so the observable behavior of
//! tags, log, blame and diff is exactly the CLI's. Tree listings are cached per
//! commit; all other queries are cheap enough to run on demand.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, LazyLock, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GitError {
    #[error("cannot clone {url}: {reason}")]
    CloneFailed { url: String, reason: String },
    #[error("submodule {path} is not accessible")]
    PrivateSubmodule { path: String },
    #[error("{a} and {b} share no history")]
    NoCommonAncestor { a: CommitId, b: CommitId },
    #[error("{path} does not exist at {commit}")]
    PathAbsentAtCommit { path: String, commit: CommitId },
    #[error("not a commit: {0}")]
    UnknownRevision(String),
    #[error("not a git repository: {0}")]
    NotARepository(String),
    #[error("git {args} failed: {stderr}")]
    Command { args: String, stderr: String },
    #[error("cannot run git: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected git output: {0}")]
    Parse(String),
}

/// A full 40-hex commit hash.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CommitId(String);

impl CommitId {
    pub fn new(hash: &str) -> Result<Self, GitError> {
        let hash = hash.trim();
        if hash.len() == 40 && hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            Ok(CommitId(hash.to_ascii_lowercase()))
        } else {
            Err(GitError::Parse(format!("invalid commit hash `{hash}`")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[..10]
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for CommitId {
    type Error = GitError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        CommitId::new(&value)
    }
}

impl From<CommitId> for String {
    fn from(value: CommitId) -> Self {
        value.0
    }
}

/// One line of a blame result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineAttribution {
    pub path: String,
    pub line_content: String,
    /// 1-based line number in the blamed revision.
    pub line_number: usize,
    pub commit: CommitId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tag {
    pub name: String,
    pub commit: CommitId,
}

pub const MODE_SYMLINK: u32 = 0o120000;
pub const MODE_GITLINK: u32 = 0o160000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEntry {
    pub mode: u32,
    /// Blob id, or the pinned commit for a gitlink.
    pub oid: String,
}

impl TreeEntry {
    pub fn is_symlink(&self) -> bool {
        self.mode == MODE_SYMLINK
    }

    pub fn is_gitlink(&self) -> bool {
        self.mode == MODE_GITLINK
    }
}

/// Recursive listing of a commit's tree (blobs, symlinks and gitlinks).
#[derive(Debug, Default)]
pub struct Tree {
    entries: BTreeMap<String, TreeEntry>,
}

impl Tree {
    pub fn get(&self, path: &str) -> Option<&TreeEntry> {
        self.entries.get(path)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &TreeEntry)> {
        self.entries.iter().map(|(p, e)| (p.as_str(), e))
    }

    /// Every directory that holds at least one entry, including the root `""`.
    pub fn directories(&self) -> BTreeSet<String> {
        let mut dirs = BTreeSet::new();
        dirs.insert(String::new());
        for path in self.entries.keys() {
            let mut cur = path.as_str();
            while let Some((parent, _)) = cur.rsplit_once('/') {
                if !dirs.insert(parent.to_string()) {
                    break;
                }
                cur = parent;
            }
        }
        dirs
    }

    /// The gitlink (submodule mount) that contains `path`, if any.
    pub fn enclosing_gitlink<'a>(&self, path: &'a str) -> Option<(&'a str, &TreeEntry)> {
        let mut cur = path;
        while let Some((parent, _)) = cur.rsplit_once('/') {
            if let Some(e) = self.entries.get(parent).filter(|e| e.is_gitlink()) {
                return Some((parent, e));
            }
            cur = parent;
        }
        None
    }
}

/// A file located through any number of submodule mounts.
#[derive(Debug, Clone)]
pub struct LocatedFile {
    pub repo: Arc<GitRepo>,
    pub commit: CommitId,
    /// Path inside `repo`.
    pub path: String,
    pub entry: TreeEntry,
    /// Submodule mount chain from the top-level repository, empty at top level.
    pub mounts: Vec<String>,
}

static CLONE_LOCKS: LazyLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = LazyLock::new(Default::default);

#[derive(Debug)]
pub struct GitRepo {
    root: PathBuf,
    trees: Mutex<HashMap<CommitId, Arc<Tree>>>,
    submodules: Mutex<HashMap<String, Arc<GitRepo>>>,
}

impl GitRepo {
    pub fn open(root: impl AsRef<Path>) -> Result<Arc<Self>, GitError> {
        let root = root.as_ref().to_path_buf();
        let repo = GitRepo { root: root.clone(), trees: Mutex::default(), submodules: Mutex::default() };
        match repo.git(&["rev-parse", "--git-dir"]) {
            Ok(_) => Ok(Arc::new(repo)),
            Err(_) => Err(GitError::NotARepository(root.display().to_string())),
        }
    }

    /// Open `dest` if it already holds a clone, otherwise clone `url` into it
    /// (full history, tags, submodules initialized recursively).
    pub fn acquire(url: &str, dest: &Path, allow_network: bool) -> Result<Arc<Self>, GitError> {
        let lock = {
            let mut locks = CLONE_LOCKS.lock().expect("clone lock map poisoned");
            locks.entry(dest.to_path_buf()).or_default().clone()
        };
        let _guard = lock.lock().expect("clone lock poisoned");

        if dest.join(".git").exists() {
            return GitRepo::open(dest);
        }
        if !allow_network {
            return Err(GitError::CloneFailed { url: url.to_string(), reason: "not in the repository cache".into() });
        }
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let out = Command::new("git")
            .args(["clone", "--quiet", "--no-single-branch", url])
            .arg(dest)
            .env("GIT_TERMINAL_PROMPT", "0")
            .stdin(Stdio::null())
            .output()?;
        if !out.status.success() {
            let _ = std::fs::remove_dir_all(dest);
            return Err(GitError::CloneFailed {
                url: url.to_string(),
                reason: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        let repo = GitRepo::open(dest)?;
        if dest.join(".gitmodules").exists() {
            repo.git(&["submodule", "update", "--init", "--recursive", "--quiet"])
                .map_err(|_| GitError::PrivateSubmodule { path: ".gitmodules".into() })?;
        }
        Ok(repo)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn run(&self, args: &[&str], stdin: Option<&[u8]>) -> Result<Vec<u8>, GitError> {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.root)
            .args(["-c", "core.quotePath=false"])
            .args(args)
            .env("GIT_TERMINAL_PROMPT", "0")
            .env("LC_ALL", "C")
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        cmd.stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() });
        let mut child = cmd.spawn()?;
        if let Some(input) = stdin {
            let mut pipe = child.stdin.take().expect("stdin piped");
            let input = input.to_vec();
            // feed on a thread so a large stdout cannot deadlock us
            let writer = std::thread::spawn(move || pipe.write_all(&input));
            let out = child.wait_with_output()?;
            writer.join().expect("stdin writer panicked")?;
            return finish(args, out);
        }
        finish(args, child.wait_with_output()?)
    }

    fn git(&self, args: &[&str]) -> Result<Vec<u8>, GitError> {
        self.run(args, None)
    }

    fn git_text(&self, args: &[&str]) -> Result<String, GitError> {
        String::from_utf8(self.git(args)?).map_err(|e| GitError::Parse(e.to_string()))
    }

    /// The `origin` remote url, if configured.
    pub fn remote_url(&self) -> Result<Option<String>, GitError> {
        let out = self.run_allow_status(&["config", "--get", "remote.origin.url"], &[1])?;
        Ok(Some(out.trim().to_string()).filter(|s| !s.is_empty()))
    }

    pub fn rev_parse(&self, rev: &str) -> Result<CommitId, GitError> {
        let spec = format!("{rev}^{{commit}}");
        match self.git_text(&["rev-parse", "--verify", "--quiet", &spec]) {
            Ok(out) => CommitId::new(&out),
            Err(_) => Err(GitError::UnknownRevision(rev.to_string())),
        }
    }

    pub fn head(&self) -> Result<CommitId, GitError> {
        self.rev_parse("HEAD")
    }

    /// Tags with annotated tags peeled to the commit they ultimately name.
    /// Tags on non-commit objects are skipped.
    pub fn list_tags(&self) -> Result<Vec<Tag>, GitError> {
        let out = self.git_text(&[
            "for-each-ref",
            "--format=%(refname:strip=2)%00%(objecttype)%00%(objectname)%00%(*objecttype)%00%(*objectname)",
            "refs/tags",
        ])?;
        let mut tags = Vec::new();
        for line in out.lines().filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\0').collect();
            if f.len() != 5 {
                return Err(GitError::Parse(line.to_string()));
            }
            let commit = match (f[1], f[3]) {
                ("commit", _) => CommitId::new(f[2])?,
                ("tag", "commit") => CommitId::new(f[4])?,
                ("tag", "tag") => match self.rev_parse(&format!("refs/tags/{}", f[0])) {
                    Ok(c) => c,
                    Err(_) => continue,
                },
                _ => continue,
            };
            tags.push(Tag { name: f[0].to_string(), commit });
        }
        tags.sort();
        Ok(tags)
    }

    /// `git log from..to`: reachable from `to` but not `from`, oldest first.
    pub fn commit_range(&self, from: &CommitId, to: &CommitId) -> Result<Vec<CommitId>, GitError> {
        let range = format!("{from}..{to}");
        self.rev_list(&["--topo-order", "--reverse", &range])
    }

    /// Every commit reachable from `to`, oldest first.
    pub fn ancestry(&self, to: &CommitId) -> Result<Vec<CommitId>, GitError> {
        self.rev_list(&["--topo-order", "--reverse", to.as_str()])
    }

    fn rev_list(&self, args: &[&str]) -> Result<Vec<CommitId>, GitError> {
        let mut full = vec!["rev-list"];
        full.extend_from_slice(args);
        self.git_text(&full)?.lines().map(CommitId::new).collect()
    }

    pub fn merge_bases(&self, a: &CommitId, b: &CommitId) -> Result<Vec<CommitId>, GitError> {
        let out = self.run_allow_status(&["merge-base", "--all", a.as_str(), b.as_str()], &[1])?;
        let mut bases: Vec<CommitId> = out.lines().map(CommitId::new).collect::<Result<_, _>>()?;
        bases.sort();
        Ok(bases)
    }

    /// Best common ancestor of `a` and `b`. With several merge bases the one
    /// giving the smallest `base..b` range wins; the others are returned too.
    pub fn merge_base(&self, a: &CommitId, b: &CommitId) -> Result<MergeBase, GitError> {
        let bases = self.merge_bases(a, b)?;
        match bases.len() {
            0 => Err(GitError::NoCommonAncestor { a: a.clone(), b: b.clone() }),
            1 => Ok(MergeBase { commit: bases[0].clone(), alternatives: vec![] }),
            _ => {
                let mut best: Option<(usize, CommitId)> = None;
                for base in &bases {
                    let n = self.commit_range(base, b)?.len();
                    if best.as_ref().is_none_or(|(m, _)| n < *m) {
                        best = Some((n, base.clone()));
                    }
                }
                let (_, commit) = best.expect("non-empty");
                let alternatives = bases.into_iter().filter(|c| *c != commit).collect();
                Ok(MergeBase { commit, alternatives })
            }
        }
    }

    pub fn is_ancestor(&self, ancestor: &CommitId, descendant: &CommitId) -> Result<bool, GitError> {
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.root)
            .args(["merge-base", "--is-ancestor", ancestor.as_str(), descendant.as_str()])
            .stdin(Stdio::null())
            .output()?;
        match out.status.code() {
            Some(0) => Ok(true),
            Some(1) => Ok(false),
            _ => Err(GitError::Command {
                args: "merge-base --is-ancestor".into(),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            }),
        }
    }

    /// `(commit, first parent)` pairs along the first-parent chain from `to`,
    /// newest first, stopping at commits reachable from `from`.
    pub fn first_parent_chain(&self, from: &CommitId, to: &CommitId) -> Result<Vec<(CommitId, Option<CommitId>)>, GitError> {
        let range = format!("{from}..{to}");
        let out = self.git_text(&["log", "--first-parent", "--format=%H %P", &range])?;
        out.lines()
            .map(|line| {
                let mut parts = line.split_whitespace();
                let c = CommitId::new(parts.next().unwrap_or_default())?;
                let p = parts.next().map(CommitId::new).transpose()?;
                Ok((c, p))
            })
            .collect()
    }

    pub fn parents(&self, commit: &CommitId) -> Result<Vec<CommitId>, GitError> {
        let out = self.git_text(&["log", "-1", "--format=%P", commit.as_str()])?;
        out.split_whitespace().map(CommitId::new).collect()
    }

    pub fn tree(&self, commit: &CommitId) -> Result<Arc<Tree>, GitError> {
        if let Some(t) = self.trees.lock().expect("tree cache poisoned").get(commit) {
            return Ok(t.clone());
        }
        let out = self.git(&["ls-tree", "-r", "-z", "--full-tree", commit.as_str()])?;
        let mut entries = BTreeMap::new();
        for rec in out.split(|b| *b == 0).filter(|r| !r.is_empty()) {
            let tab = rec.iter().position(|b| *b == b'\t').ok_or_else(|| GitError::Parse("ls-tree record".into()))?;
            let meta = std::str::from_utf8(&rec[..tab]).map_err(|e| GitError::Parse(e.to_string()))?;
            let path = String::from_utf8_lossy(&rec[tab + 1..]).into_owned();
            let mut f = meta.split(' ');
            let mode = u32::from_str_radix(f.next().unwrap_or_default(), 8).map_err(|e| GitError::Parse(e.to_string()))?;
            let _kind = f.next();
            let oid = f.next().ok_or_else(|| GitError::Parse("ls-tree oid".into()))?.to_string();
            entries.insert(path, TreeEntry { mode, oid });
        }
        let tree = Arc::new(Tree { entries });
        self.trees.lock().expect("tree cache poisoned").insert(commit.clone(), tree.clone());
        Ok(tree)
    }

    pub fn read_blob(&self, oid: &str) -> Result<Vec<u8>, GitError> {
        self.git(&["cat-file", "blob", oid])
    }

    /// Content of a regular file at `commit`, `None` when absent.
    pub fn file_at(&self, commit: &CommitId, path: &str) -> Result<Option<Vec<u8>>, GitError> {
        let tree = self.tree(commit)?;
        match tree.get(path) {
            Some(e) if !e.is_gitlink() => Ok(Some(self.read_blob(&e.oid)?)),
            _ => Ok(None),
        }
    }

    /// Open the initialized submodule mounted at `mount`.
    pub fn submodule(&self, mount: &str) -> Result<Arc<GitRepo>, GitError> {
        if let Some(s) = self.submodules.lock().expect("submodule cache poisoned").get(mount) {
            return Ok(s.clone());
        }
        let dir = self.root.join(mount);
        if !dir.join(".git").exists() {
            return Err(GitError::PrivateSubmodule { path: mount.to_string() });
        }
        let sub = GitRepo::open(&dir).map_err(|_| GitError::PrivateSubmodule { path: mount.to_string() })?;
        self.submodules.lock().expect("submodule cache poisoned").insert(mount.to_string(), sub.clone());
        Ok(sub)
    }

    /// Map a path under a submodule mount at `at` to the submodule's own
    /// history: `(submodule, path inside it, pinned commit)`.
    pub fn resolve_submodule(&self, path: &str, at: &CommitId) -> Result<Option<(Arc<GitRepo>, String, CommitId)>, GitError> {
        let tree = self.tree(at)?;
        let Some((mount, entry)) = tree.enclosing_gitlink(path) else { return Ok(None) };
        let sub = self.submodule(mount)?;
        let pinned = CommitId::new(&entry.oid)?;
        // an initialized clone that lacks the pinned commit is as unusable as a missing one
        sub.rev_parse(pinned.as_str())
            .map_err(|_| GitError::PrivateSubmodule { path: mount.to_string() })?;
        Ok(Some((sub, path[mount.len() + 1..].to_string(), pinned)))
    }

    /// Find `path` at `at`, descending through submodule mounts.
    pub fn locate(self: &Arc<Self>, path: &str, at: &CommitId) -> Result<Option<LocatedFile>, GitError> {
        let mut repo = self.clone();
        let mut commit = at.clone();
        let mut path = path.to_string();
        let mut mounts = Vec::new();
        loop {
            let tree = repo.tree(&commit)?;
            if let Some(entry) = tree.get(&path).filter(|e| !e.is_gitlink()) {
                return Ok(Some(LocatedFile { repo, commit, path, entry: entry.clone(), mounts }));
            }
            let Some((mount, _)) = tree.enclosing_gitlink(&path) else { return Ok(None) };
            let mount = mount.to_string();
            let (sub, inner, pinned) = repo.resolve_submodule(&path, &commit)?.expect("gitlink present");
            mounts.push(mount);
            repo = sub;
            commit = pinned;
            path = inner;
        }
    }

    /// Forward blame of `path` at `at`. With `since`, history walking stops at
    /// commits reachable from it and those lines report a boundary commit.
    pub fn blame(&self, path: &str, at: &CommitId, since: Option<&CommitId>) -> Result<Vec<LineAttribution>, GitError> {
        self.require_path(path, at)?;
        let mut args = vec!["blame", "--porcelain", at.as_str()];
        let excl;
        if let Some(s) = since {
            excl = format!("^{s}");
            args.push(&excl);
        }
        args.extend(["--", path]);
        parse_porcelain(path, &self.git(&args)?)
    }

    /// Reverse blame of the file as of `from`: each line maps to the last
    /// commit in `from..to` that still contains it; survivors map to `to`.
    pub fn reverse_blame(&self, path: &str, from: &CommitId, to: &CommitId) -> Result<Vec<LineAttribution>, GitError> {
        self.require_path(path, from)?;
        if from == to {
            let content = self.file_at(from, path)?.unwrap_or_default();
            return Ok(content
                .split_inclusive(|b| *b == b'\n')
                .enumerate()
                .map(|(i, l)| LineAttribution {
                    path: path.to_string(),
                    line_content: display_line(l),
                    line_number: i + 1,
                    commit: to.clone(),
                })
                .collect());
        }
        let range = format!("{from}..{to}");
        parse_porcelain(path, &self.git(&["blame", "--porcelain", "--reverse", &range, "--", path])?)
    }

    fn require_path(&self, path: &str, at: &CommitId) -> Result<(), GitError> {
        match self.tree(at)?.get(path) {
            Some(e) if !e.is_gitlink() => Ok(()),
            _ => Err(GitError::PathAbsentAtCommit { path: path.to_string(), commit: at.clone() }),
        }
    }

    /// Renames between two commits (`old`, `new`), default similarity threshold.
    pub fn renames(&self, from: &CommitId, to: &CommitId) -> Result<Vec<(String, String)>, GitError> {
        let out = self.git(&["diff", "--name-status", "-z", "-M", "--no-ext-diff", from.as_str(), to.as_str()])?;
        let fields: Vec<String> = out
            .split(|b| *b == 0)
            .filter(|f| !f.is_empty())
            .map(|f| String::from_utf8_lossy(f).into_owned())
            .collect();
        let mut renames = Vec::new();
        let mut i = 0;
        while i < fields.len() {
            let status = &fields[i];
            if status.starts_with('R') || status.starts_with('C') {
                if i + 2 >= fields.len() {
                    return Err(GitError::Parse("truncated rename record".into()));
                }
                if status.starts_with('R') {
                    renames.push((fields[i + 1].clone(), fields[i + 2].clone()));
                }
                i += 3;
            } else {
                i += 2;
            }
        }
        Ok(renames)
    }

    fn run_allow_status(&self, args: &[&str], ok_codes: &[i32]) -> Result<String, GitError> {
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.root)
            .args(args)
            .stdin(Stdio::null())
            .output()?;
        if out.status.success() || out.status.code().is_some_and(|c| ok_codes.contains(&c)) {
            return String::from_utf8(out.stdout).map_err(|e| GitError::Parse(e.to_string()));
        }
        Err(GitError::Command {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeBase {
    pub commit: CommitId,
    /// Other merge bases when the history is criss-crossed.
    pub alternatives: Vec<CommitId>,
}

fn finish(args: &[&str], out: std::process::Output) -> Result<Vec<u8>, GitError> {
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(GitError::Command {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        })
    }
}

fn display_line(line: &[u8]) -> String {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    String::from_utf8_lossy(line).into_owned()
}

/// Parse `git blame --porcelain` output.
fn parse_porcelain(path: &str, out: &[u8]) -> Result<Vec<LineAttribution>, GitError> {
    let mut result = Vec::new();
    let mut current: Option<(CommitId, usize)> = None;
    for raw in out.split(|b| *b == b'\n') {
        if let Some(content) = raw.strip_prefix(b"\t") {
            let (commit, line_number) = current
                .take()
                .ok_or_else(|| GitError::Parse("blame content without header".into()))?;
            result.push(LineAttribution {
                path: path.to_string(),
                line_content: String::from_utf8_lossy(content).into_owned(),
                line_number,
                commit,
            });
            continue;
        }
        let Ok(text) = std::str::from_utf8(raw) else { continue };
        let mut fields = text.split(' ');
        let Some(first) = fields.next() else { continue };
        if first.len() != 40 || !first.bytes().all(|b| b.is_ascii_hexdigit()) {
            continue;
        }
        let nums: Vec<usize> = fields.filter_map(|f| f.parse().ok()).collect();
        if nums.len() < 2 {
            continue;
        }
        current = Some((CommitId::new(first)?, nums[1]));
    }
    result.sort_by_key(|a| a.line_number);
    Ok(result)
}
