//! Scripted git repositories with deterministic commit dates.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

const EPOCH: i64 = 1_577_836_800;

pub struct FixtureRepo {
    root: PathBuf,
    tick: i64,
}

fn git_command(dir: &Path, date: Option<i64>) -> Command {
    let mut cmd = Command::new("git");
    cmd.arg("-C")
        .arg(dir)
        .args(["-c", "init.defaultBranch=main", "-c", "commit.gpgsign=false", "-c", "tag.gpgsign=false"])
        .args(["-c", "protocol.file.allow=always", "-c", "core.quotePath=false"])
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_AUTHOR_NAME", "fixture")
        .env("GIT_AUTHOR_EMAIL", "fixture@example.com")
        .env("GIT_COMMITTER_NAME", "fixture")
        .env("GIT_COMMITTER_EMAIL", "fixture@example.com")
        .env("LC_ALL", "C")
        .stdin(Stdio::null());
    if let Some(t) = date {
        let stamp = format!("@{t} +0000");
        cmd.env("GIT_AUTHOR_DATE", &stamp).env("GIT_COMMITTER_DATE", &stamp);
    }
    cmd
}

fn run(mut cmd: Command, what: &str) -> Vec<u8> {
    let out = cmd.output().unwrap_or_else(|e| panic!("git {what}: {e}"));
    assert!(out.status.success(), "git {what} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

impl FixtureRepo {
    pub fn init(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        fs::create_dir_all(&root).expect("create repo dir");
        let mut cmd = git_command(&root, None);
        cmd.args(["init", "--quiet"]);
        run(cmd, "init");
        FixtureRepo { root, tick: 0 }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Run git in the work tree and return stdout as text.
    pub fn git(&self, args: &[&str]) -> String {
        let mut cmd = git_command(&self.root, Some(EPOCH + self.tick * 60));
        cmd.args(args);
        String::from_utf8(run(cmd, &args.join(" "))).expect("utf-8 git output")
    }

    pub fn write(&self, path: &str, content: impl AsRef<[u8]>) {
        let full = self.root.join(path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).expect("create parent dir");
        }
        let _ = fs::remove_file(&full);
        fs::write(full, content).expect("write file");
    }

    pub fn read(&self, path: &str) -> Option<Vec<u8>> {
        fs::read(self.root.join(path)).ok()
    }

    pub fn append(&self, path: &str, content: impl AsRef<[u8]>) {
        let mut bytes = self.read(path).unwrap_or_default();
        bytes.extend_from_slice(content.as_ref());
        self.write(path, bytes);
    }

    pub fn remove(&self, path: &str) {
        self.git(&["rm", "-r", "--quiet", "--", path]);
    }

    pub fn rename(&self, from: &str, to: &str) {
        if let Some(parent) = self.root.join(to).parent() {
            fs::create_dir_all(parent).expect("create parent dir");
        }
        self.git(&["mv", from, to]);
    }

    #[cfg(unix)]
    pub fn symlink(&self, path: &str, target: &str) {
        let full = self.root.join(path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).expect("create parent dir");
        }
        let _ = fs::remove_file(&full);
        std::os::unix::fs::symlink(target, full).expect("create symlink");
    }

    pub fn commit(&mut self, message: &str) -> String {
        self.commit_as(message, "fixture")
    }

    /// Stage everything and commit with `author` as author and committer.
    pub fn commit_as(&mut self, message: &str, author: &str) -> String {
        self.tick += 1;
        self.git(&["add", "-A"]);
        let mut cmd = git_command(&self.root, Some(EPOCH + self.tick * 60));
        cmd.env("GIT_AUTHOR_NAME", author)
            .env("GIT_COMMITTER_NAME", author)
            .args(["commit", "--quiet", "--allow-empty", "--no-verify", "-m", message]);
        run(cmd, "commit");
        self.head()
    }

    pub fn head(&self) -> String {
        self.git(&["rev-parse", "HEAD"]).trim().to_string()
    }

    pub fn rev_parse(&self, rev: &str) -> String {
        self.git(&["rev-parse", &format!("{rev}^{{commit}}")]).trim().to_string()
    }

    pub fn tag(&self, name: &str) {
        self.git(&["tag", name]);
    }

    pub fn tag_at(&self, name: &str, rev: &str) {
        self.git(&["tag", name, rev]);
    }

    pub fn tag_annotated(&self, name: &str, message: &str) {
        self.git(&["tag", "-a", name, "-m", message]);
    }

    pub fn branch(&self, name: &str) {
        self.git(&["checkout", "--quiet", "-b", name]);
    }

    pub fn checkout(&self, rev: &str) {
        self.git(&["checkout", "--quiet", rev]);
    }

    /// Merge `branch` into the current branch with a merge commit.
    pub fn merge(&mut self, branch: &str, message: &str) -> String {
        self.tick += 1;
        self.git(&["merge", "--quiet", "--no-ff", "-m", message, branch]);
        self.head()
    }

    /// Mount `sub` at `mount`, pinned at the submodule's current HEAD.
    pub fn add_submodule(&self, sub: &FixtureRepo, mount: &str) {
        let url = sub.root.to_str().expect("utf-8 path");
        self.git(&["submodule", "--quiet", "add", url, mount]);
    }

    /// Move the pointer at `mount` to `commit` of the submodule's origin.
    pub fn pin_submodule(&self, mount: &str, commit: &str) {
        let dir = self.root.join(mount);
        let mut fetch = git_command(&dir, None);
        fetch.args(["fetch", "--quiet", "origin"]);
        run(fetch, "fetch");
        let mut checkout = git_command(&dir, None);
        checkout.args(["checkout", "--quiet", commit]);
        run(checkout, "checkout");
        self.git(&["add", mount]);
    }

    /// Text of every blob under `dir` at `rev`, keyed by path relative to `dir`.
    pub fn files_at(&self, rev: &str, dir: &str) -> BTreeMap<String, Vec<u8>> {
        let mut args = vec!["ls-tree", "-r", "-z", rev];
        if !dir.is_empty() {
            args.extend(["--", dir]);
        }
        let listing = self.git(&args);
        let prefix = if dir.is_empty() { String::new() } else { format!("{}/", dir.trim_end_matches('/')) };
        let mut files = BTreeMap::new();
        for record in listing.split('\0').filter(|r| !r.is_empty()) {
            let (meta, path) = record.split_once('\t').expect("ls-tree record");
            let mut fields = meta.split(' ');
            let mode = fields.next().unwrap_or_default();
            if mode == "160000" {
                continue;
            }
            let oid = fields.nth(1).expect("ls-tree oid");
            let mut cmd = git_command(&self.root, None);
            cmd.args(["cat-file", "blob", oid]);
            let rel = path.strip_prefix(&prefix).unwrap_or(path).to_string();
            files.insert(rel, run(cmd, "cat-file"));
        }
        files
    }

    pub fn file_at(&self, rev: &str, path: &str) -> Option<Vec<u8>> {
        let mut cmd = git_command(&self.root, None);
        cmd.args(["cat-file", "blob", &format!("{rev}:{path}")]);
        let out = cmd.output().ok()?;
        out.status.success().then_some(out.stdout)
    }

    /// `git rev-list` output, oldest first.
    pub fn rev_list(&self, args: &[&str]) -> Vec<String> {
        let mut all = vec!["rev-list", "--reverse"];
        all.extend_from_slice(args);
        self.git(&all).lines().map(str::to_string).collect()
    }
}
