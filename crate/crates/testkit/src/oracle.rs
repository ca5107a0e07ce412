//! Reference implementations used to check the production code.

use std::collections::HashMap;

use crate::repo::FixtureRepo;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Keep(usize, usize),
    Delete(usize),
    Insert(usize),
}

/// Textbook dynamic-programming LCS alignment.
pub fn lcs_diff<T: PartialEq>(old: &[T], new: &[T]) -> Vec<Op> {
    let (n, m) = (old.len(), new.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if old[i] == new[j] { table[i + 1][j + 1] + 1 } else { table[i + 1][j].max(table[i][j + 1]) };
        }
    }
    let (mut i, mut j, mut ops) = (0, 0, Vec::with_capacity(n + m));
    while i < n || j < m {
        if i < n && j < m && old[i] == new[j] {
            ops.push(Op::Keep(i, j));
            i += 1;
            j += 1;
        } else if j < m && (i == n || table[i][j + 1] >= table[i + 1][j]) {
            ops.push(Op::Insert(j));
            j += 1;
        } else {
            ops.push(Op::Delete(i));
            i += 1;
        }
    }
    ops
}

fn split(content: &[u8]) -> Vec<&[u8]> {
    content.split_inclusive(|b| *b == b'\n').collect()
}

fn show(line: &[u8]) -> String {
    String::from_utf8_lossy(line.strip_suffix(b"\n").unwrap_or(line)).into_owned()
}

/// `(added, removed)` line contents of an LCS diff, sorted.
pub fn multiset_diff(old: &[u8], new: &[u8]) -> (Vec<String>, Vec<String>) {
    let (a, b) = (split(old), split(new));
    let (mut added, mut removed) = (Vec::new(), Vec::new());
    for op in lcs_diff(&a, &b) {
        match op {
            Op::Keep(..) => {}
            Op::Delete(i) => removed.push(show(a[i])),
            Op::Insert(j) => added.push(show(b[j])),
        }
    }
    added.sort();
    removed.sort();
    (added, removed)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReplayLine {
    pub path: String,
    pub line_number: usize,
    pub content: String,
    pub commit: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayDelta {
    pub added: Vec<ReplayLine>,
    pub removed: Vec<ReplayLine>,
}

#[derive(Clone)]
enum Origin {
    Base(usize),
    Range(String),
}

/// Replay the first-parent commits of `base..tip` one diff at a time,
/// following where every line came from. Lines alive at `tip` that were
/// introduced in the range are added; lines of `base` that disappeared are
/// removed by the commit that dropped them. Paths must not be renamed.
pub fn replay_delta(repo: &FixtureRepo, base: &str, tip: &str, paths: &[String]) -> ReplayDelta {
    let commits = repo.rev_list(&["--first-parent", &format!("{base}..{tip}")]);
    let mut out = ReplayDelta::default();
    for path in paths {
        let start = repo.file_at(base, path).unwrap_or_default();
        let mut lines: Vec<(String, Origin)> =
            split(&start).iter().enumerate().map(|(i, l)| (show(l), Origin::Base(i + 1))).collect();
        let mut raw: Vec<Vec<u8>> = split(&start).iter().map(|l| l.to_vec()).collect();
        let mut cache: HashMap<&str, Vec<u8>> = HashMap::new();
        for commit in &commits {
            let content = cache.entry(commit).or_insert_with(|| repo.file_at(commit, path).unwrap_or_default());
            let next_raw: Vec<Vec<u8>> = split(content).iter().map(|l| l.to_vec()).collect();
            let mut next = Vec::with_capacity(next_raw.len());
            for op in lcs_diff(&raw, &next_raw) {
                match op {
                    Op::Keep(i, _) => next.push(lines[i].clone()),
                    Op::Insert(j) => next.push((show(&next_raw[j]), Origin::Range(commit.clone()))),
                    Op::Delete(i) => {
                        if let Origin::Base(n) = lines[i].1 {
                            out.removed.push(ReplayLine {
                                path: path.clone(),
                                line_number: n,
                                content: lines[i].0.clone(),
                                commit: commit.clone(),
                            });
                        }
                    }
                }
            }
            lines = next;
            raw = next_raw;
        }
        for (i, (content, origin)) in lines.into_iter().enumerate() {
            if let Origin::Range(commit) = origin {
                out.added.push(ReplayLine { path: path.clone(), line_number: i + 1, content, commit });
            }
        }
    }
    out.added.sort();
    out.removed.sort();
    out
}
