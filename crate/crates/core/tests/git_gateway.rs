use std::collections::BTreeSet;

use proptest::prelude::*;
use update_audit::git::{GitError, Tag};
use update_audit::{CommitId, GitRepo};
use update_audit_testkit::FixtureRepo;

fn cid(s: &str) -> CommitId {
    CommitId::new(s.trim()).unwrap()
}

fn linear(dir: &std::path::Path, n: usize) -> (FixtureRepo, Vec<String>) {
    let mut repo = FixtureRepo::init(dir);
    let commits = (0..n)
        .map(|i| {
            repo.append("log.txt", format!("entry {i}\n"));
            repo.commit(&format!("c{i}"))
        })
        .collect();
    (repo, commits)
}

/// `(blamed commit, line content)` per line from the CLI's porcelain output.
fn cli_blame(repo: &FixtureRepo, args: &[&str]) -> Vec<(String, String)> {
    let mut all = vec!["blame", "--line-porcelain"];
    all.extend_from_slice(args);
    let out = repo.git(&all);
    let mut rows = Vec::new();
    let mut commit = String::new();
    for line in out.lines() {
        if let Some(content) = line.strip_prefix('\t') {
            rows.push((commit.clone(), content.to_string()));
        } else if line.len() > 41 && line.as_bytes()[40] == b' ' && line[..40].bytes().all(|b| b.is_ascii_hexdigit()) {
            commit = line[..40].to_string();
        }
    }
    rows
}

#[test]
fn tags_match_the_dereferenced_cli_listing() {
    let dir = tempfile::tempdir().unwrap();
    let (repo, commits) = linear(dir.path(), 3);
    repo.tag_at("v1.0.0", &commits[0]);
    repo.checkout(&commits[1]);
    repo.tag_annotated("pkg-1.1.0", "release");
    repo.checkout("main");

    let git = GitRepo::open(dir.path()).unwrap();
    let mut tags = git.list_tags().unwrap();
    tags.sort();
    let oracle: BTreeSet<(String, String)> = repo
        .git(&["tag", "--format=%(refname:strip=2) %(*objectname)%(objectname)"])
        .lines()
        .map(|l| {
            let (name, ids) = l.split_once(' ').unwrap();
            // annotated tags print the peeled commit first
            (name.to_string(), ids[..40].to_string())
        })
        .collect();
    let got: BTreeSet<(String, String)> = tags.iter().map(|t| (t.name.clone(), t.commit.to_string())).collect();
    assert_eq!(got, oracle);
    assert!(tags.contains(&Tag { name: "pkg-1.1.0".into(), commit: cid(&commits[1]) }));
    let tag_object = repo.git(&["rev-parse", "pkg-1.1.0"]);
    assert_ne!(tag_object.trim(), commits[1]);
}

#[test]
fn tagless_repository_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    linear(dir.path(), 1);
    assert!(GitRepo::open(dir.path()).unwrap().list_tags().unwrap().is_empty());
}

#[test]
fn ranges_and_merge_bases() {
    let dir = tempfile::tempdir().unwrap();
    let (_, c) = linear(dir.path(), 3);
    let git = GitRepo::open(dir.path()).unwrap();
    assert_eq!(git.commit_range(&cid(&c[0]), &cid(&c[2])).unwrap(), vec![cid(&c[1]), cid(&c[2])]);
    assert!(git.commit_range(&cid(&c[2]), &cid(&c[2])).unwrap().is_empty());
    assert_eq!(git.merge_base(&cid(&c[0]), &cid(&c[2])).unwrap().commit, cid(&c[0]));
}

#[test]
fn branched_range_follows_the_double_dot_log() {
    let dir = tempfile::tempdir().unwrap();
    let mut repo = FixtureRepo::init(dir.path());
    repo.write("a.txt", "a\n");
    let m = repo.commit("M");
    repo.branch("side");
    repo.append("a.txt", "side\n");
    let x = repo.commit("X");
    repo.checkout("main");
    repo.write("b.txt", "b\n");
    repo.commit("B");
    repo.append("b.txt", "c\n");
    let y = repo.commit("Y");

    let git = GitRepo::open(dir.path()).unwrap();
    let range: Vec<String> = git.commit_range(&cid(&x), &cid(&y)).unwrap().iter().map(|c| c.to_string()).collect();
    let oracle = repo.rev_list(&[&format!("{x}..{y}")]);
    assert_eq!(range, oracle);
    assert!(!range.contains(&x));
    assert_eq!(git.merge_base(&cid(&x), &cid(&y)).unwrap().commit, cid(&m));
}

#[test]
fn disjoint_roots_have_no_common_ancestor() {
    let dir = tempfile::tempdir().unwrap();
    let mut repo = FixtureRepo::init(dir.path());
    repo.write("a.txt", "a\n");
    let a = repo.commit("a");
    repo.git(&["checkout", "--quiet", "--orphan", "other"]);
    repo.write("b.txt", "b\n");
    let b = repo.commit("b");
    let git = GitRepo::open(dir.path()).unwrap();
    assert!(matches!(git.merge_base(&cid(&a), &cid(&b)), Err(GitError::NoCommonAncestor { .. })));
}

#[test]
fn blame_matches_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let mut repo = FixtureRepo::init(dir.path());
    repo.write("src/a.rs", "one\ntwo\nthree\n");
    let b = repo.commit("B");
    repo.write("src/a.rs", "one\nTWO\nthree\n");
    let c = repo.commit("C");

    let git = GitRepo::open(dir.path()).unwrap();
    let blamed = git.blame("src/a.rs", &cid(&c), None).unwrap();
    let got: Vec<(String, String)> = blamed.iter().map(|l| (l.commit.to_string(), l.line_content.clone())).collect();
    assert_eq!(got, cli_blame(&repo, &[&c, "--", "src/a.rs"]));
    assert_eq!(got.iter().map(|(c, _)| c.as_str()).collect::<Vec<_>>(), vec![b.as_str(), c.as_str(), b.as_str()]);
    assert_eq!(blamed.iter().map(|l| l.line_number).collect::<Vec<_>>(), vec![1, 2, 3]);
}

#[test]
fn blame_follows_a_rename() {
    let dir = tempfile::tempdir().unwrap();
    let mut repo = FixtureRepo::init(dir.path());
    repo.write("old.rs", "fn keep() {}\nfn also() {}\nfn more() {}\n");
    let b = repo.commit("B");
    repo.rename("old.rs", "new.rs");
    let c = repo.commit("C");

    let git = GitRepo::open(dir.path()).unwrap();
    let blamed = git.blame("new.rs", &cid(&c), None).unwrap();
    assert!(blamed.iter().all(|l| l.commit == cid(&b)));
    let got: Vec<(String, String)> = blamed.iter().map(|l| (l.commit.to_string(), l.line_content.clone())).collect();
    assert_eq!(got, cli_blame(&repo, &[&c, "--", "new.rs"]));
    assert_eq!(git.renames(&cid(&b), &cid(&c)).unwrap(), vec![("old.rs".to_string(), "new.rs".to_string())]);
}

#[test]
fn reverse_blame_points_at_the_last_commit_holding_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut repo = FixtureRepo::init(dir.path());
    repo.write("a.txt", "keep\ndrop\n");
    repo.write("gone.txt", "x\ny\n");
    let a = repo.commit("A");
    repo.write("other.txt", "noise\n");
    let p = repo.commit("P");
    repo.write("a.txt", "keep\n");
    repo.remove("gone.txt");
    repo.commit("D");
    repo.write("other.txt", "more noise\n");
    let to = repo.commit("E");

    let git = GitRepo::open(dir.path()).unwrap();
    let lines = git.reverse_blame("a.txt", &cid(&a), &cid(&to)).unwrap();
    assert_eq!(lines[0].commit, cid(&to));
    assert_eq!(lines[1].commit, cid(&p));
    let oracle = cli_blame(&repo, &["--reverse", &format!("{a}..{to}"), "--", "a.txt"]);
    assert_eq!(lines.iter().map(|l| (l.commit.to_string(), l.line_content.clone())).collect::<Vec<_>>(), oracle);

    let gone = git.reverse_blame("gone.txt", &cid(&a), &cid(&to)).unwrap();
    assert_eq!(gone.len(), 2);
    assert!(gone.iter().all(|l| l.commit == cid(&p)));
}

#[test]
fn submodule_paths_resolve_into_the_submodule() {
    let dir = tempfile::tempdir().unwrap();
    let mut sub = FixtureRepo::init(dir.path().join("lib"));
    sub.write("a.c", "int a;\n");
    let pinned = sub.commit("lib");
    let mut top = FixtureRepo::init(dir.path().join("top"));
    top.write("main.c", "int main;\n");
    top.add_submodule(&sub, "vendor/lib");
    let at = top.commit("with submodule");

    let git = GitRepo::open(top.root()).unwrap();
    let (handle, inner, commit) = git.resolve_submodule("vendor/lib/a.c", &cid(&at)).unwrap().unwrap();
    assert_eq!(inner, "a.c");
    assert_eq!(commit, cid(&pinned));
    assert_eq!(handle.file_at(&commit, "a.c").unwrap().unwrap(), b"int a;\n");
    assert!(git.resolve_submodule("main.c", &cid(&at)).unwrap().is_none());
    assert_eq!(git.tree(&cid(&at)).unwrap().get("vendor/lib").map(|e| e.is_gitlink()), Some(true));
}

#[test]
fn uninitialized_submodule_is_private() {
    let dir = tempfile::tempdir().unwrap();
    let mut sub = FixtureRepo::init(dir.path().join("lib"));
    sub.write("a.c", "int a;\n");
    sub.commit("lib");
    let mut top = FixtureRepo::init(dir.path().join("top"));
    top.add_submodule(&sub, "vendor/lib");
    let at = top.commit("with submodule");
    top.git(&["submodule", "deinit", "--quiet", "--force", "vendor/lib"]);

    let git = GitRepo::open(top.root()).unwrap();
    assert!(matches!(git.resolve_submodule("vendor/lib/a.c", &cid(&at)), Err(GitError::PrivateSubmodule { .. })));
}

#[test]
fn acquire_uses_the_cache_and_reports_clone_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cached = dir.path().join("cache/github.com/o/r");
    linear(&cached, 1);
    let git = GitRepo::acquire("https://github.com/o/r", &cached, false).unwrap();
    assert_eq!(git.list_tags().unwrap(), vec![]);

    let missing = dir.path().join("cache/github.com/o/missing");
    assert!(matches!(
        GitRepo::acquire("https://github.com/o/missing", &missing, false),
        Err(GitError::CloneFailed { .. })
    ));
    let unreachable = format!("file://{}", dir.path().join("nowhere").display());
    assert!(matches!(GitRepo::acquire(&unreachable, &missing, true), Err(GitError::CloneFailed { .. })));
    assert!(!missing.exists());
}

#[test]
fn repeated_queries_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (_, c) = linear(dir.path(), 4);
    let git = GitRepo::open(dir.path()).unwrap();
    let head = cid(&c[3]);
    assert_eq!(git.blame("log.txt", &head, None).unwrap(), git.blame("log.txt", &head, None).unwrap());
    assert_eq!(git.commit_range(&cid(&c[0]), &head).unwrap(), git.commit_range(&cid(&c[0]), &head).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn linear_range_length_and_base(n in 2usize..8, from in 0usize..8) {
        let from = from % (n - 1);
        let dir = tempfile::tempdir().unwrap();
        let (_, c) = linear(dir.path(), n);
        let git = GitRepo::open(dir.path()).unwrap();
        let (a, z) = (cid(&c[from]), cid(&c[n - 1]));
        prop_assert_eq!(git.commit_range(&a, &z).unwrap().len(), n - 1 - from);
        prop_assert_eq!(git.merge_base(&a, &z).unwrap().commit, a);
    }

    #[test]
    fn blame_partitions_the_file(edits in proptest::collection::vec((0usize..6, any::<bool>()), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let mut repo = FixtureRepo::init(dir.path());
        let mut lines: Vec<String> = (0..4).map(|i| format!("line {i}")).collect();
        repo.write("f.txt", lines.iter().map(|l| format!("{l}\n")).collect::<String>());
        repo.commit("base");
        for (k, (at, insert)) in edits.iter().enumerate() {
            let at = at % (lines.len() + 1);
            if *insert || lines.len() < 2 {
                lines.insert(at, format!("edit {k}"));
            } else {
                lines.remove(at.min(lines.len() - 1));
            }
            repo.write("f.txt", lines.iter().map(|l| format!("{l}\n")).collect::<String>());
            repo.commit(&format!("edit {k}"));
        }
        let git = GitRepo::open(dir.path()).unwrap();
        let head = git.head().unwrap();
        let blamed = git.blame("f.txt", &head, None).unwrap();
        prop_assert_eq!(blamed.iter().map(|l| l.line_number).collect::<Vec<_>>(), (1..=lines.len()).collect::<Vec<_>>());
        prop_assert_eq!(blamed.iter().map(|l| l.line_content.clone()).collect::<Vec<_>>(), lines);
        let same = git.reverse_blame("f.txt", &head, &head).unwrap();
        prop_assert!(same.iter().all(|l| l.commit == head));
    }
}
