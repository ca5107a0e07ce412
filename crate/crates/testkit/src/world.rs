//! A complete offline fixture set: repository cache, registry store, package
//! metadata and review records, all under one temporary directory.

use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};
use tempfile::TempDir;

use crate::archive::{pack, Format};
use crate::repo::FixtureRepo;
use crate::Files;

pub struct World {
    _tmp: TempDir,
    pub cache: PathBuf,
    pub store: PathBuf,
    pub metadata_path: PathBuf,
    pub reviews_path: PathBuf,
    index: Vec<Value>,
    metadata: Vec<Value>,
    reviews: Vec<Value>,
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

impl World {
    pub fn new() -> Self {
        let tmp = tempfile::tempdir().expect("temp dir");
        let root = tmp.path().to_path_buf();
        let world = World {
            cache: root.join("cache"),
            store: root.join("registry"),
            metadata_path: root.join("metadata.json"),
            reviews_path: root.join("reviews.json"),
            _tmp: tmp,
            index: Vec::new(),
            metadata: Vec::new(),
            reviews: Vec::new(),
        };
        fs::create_dir_all(&world.cache).expect("cache dir");
        fs::create_dir_all(&world.store).expect("store dir");
        world.flush();
        world
    }

    /// A repository in the clone cache for `https://github.com/<owner>/<name>`.
    pub fn repo(&self, owner: &str, name: &str) -> FixtureRepo {
        FixtureRepo::init(self.cache.join("github.com").join(owner).join(name))
    }

    pub fn repo_url(owner: &str, name: &str) -> String {
        format!("https://github.com/{owner}/{name}")
    }

    /// Pack and publish one version.
    pub fn publish(&mut self, format: Format, package: &str, version: &str, files: &Files) {
        let (file, bytes) = pack(format, package, version, files);
        fs::write(self.store.join(&file), bytes).expect("write archive");
        let kind = match format {
            Format::Crate => "crate",
            Format::Npm => "npm-tarball",
            Format::Gem => "gem",
            Format::Wheel => "wheel",
            Format::Sdist => "sdist",
        };
        self.index.push(json!({
            "registry": format.registry(), "package": package, "version": version, "file": file, "kind": kind,
        }));
        self.flush();
    }

    /// Set the repository field listed for a package.
    pub fn list_repository(&mut self, registry: &str, package: &str, repository: Option<&str>) {
        self.metadata.push(json!({"registry": registry, "package": package, "repository": repository}));
        self.flush();
    }

    pub fn add_review(&mut self, record: Value) {
        self.reviews.push(record);
        self.flush();
    }

    /// A commit with no pull request, authored and committed by `author`.
    pub fn unreviewed(&mut self, commit: &str, author: &str) {
        self.add_review(review_record(commit, author, author, "change", vec![]));
    }

    /// A commit whose pull request got an approving review from `reviewer`.
    pub fn reviewed(&mut self, commit: &str, author: &str, reviewer: &str) {
        let pr = pull_request(1, author, Some(author), &[commit], &[(reviewer, "APPROVED")], &[]);
        self.add_review(review_record(commit, author, author, "change", vec![pr]));
    }

    fn flush(&self) {
        let write = |path: PathBuf, v: &Vec<Value>| {
            fs::write(path, serde_json::to_vec_pretty(v).expect("json")).expect("write fixture");
        };
        write(self.store.join("index.json"), &self.index);
        write(self.metadata_path.clone(), &self.metadata);
        write(self.reviews_path.clone(), &self.reviews);
    }
}

pub fn review_record(commit: &str, author: &str, committer: &str, message: &str, prs: Vec<Value>) -> Value {
    json!({
        "commit": commit,
        "author_login": author,
        "committer_login": committer,
        "commit_message": message,
        "associated_pull_requests": prs,
    })
}

pub fn pull_request(
    number: u64,
    opener: &str,
    merger: Option<&str>,
    commits: &[&str],
    reviews: &[(&str, &str)],
    labels: &[&str],
) -> Value {
    json!({
        "number": number,
        "opener_login": opener,
        "merger_login": merger,
        "merged": merger.is_some(),
        "labels": labels,
        "reviews": reviews.iter().map(|(r, s)| json!({"reviewer_login": r, "state": s})).collect::<Vec<_>>(),
        "commits_in_pr": commits,
    })
}
