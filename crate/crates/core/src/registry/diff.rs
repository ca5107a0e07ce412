//! Line diffs reported as multisets of line contents.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffOp};

use super::{RegistryArtifact, RegistryError};

/// Added and removed lines of a diff, in order of appearance. Only the
/// multiset of contents is meaningful; positions are not retained.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiff {
    pub added: Vec<String>,
    pub removed: Vec<String>,
}

impl LineDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }

    pub fn len(&self) -> usize {
        self.added.len() + self.removed.len()
    }
}

/// Split into lines, each keeping its `\n` terminator so that a missing final
/// newline is a visible change.
fn split_lines(content: &[u8]) -> Vec<&[u8]> {
    content.split_inclusive(|b| *b == b'\n').collect()
}

fn display_line(line: &[u8]) -> String {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    String::from_utf8_lossy(line).into_owned()
}

/// Longest-common-subsequence line diff, bytes compared exactly.
///
/// When several common subsequences are longest, the one chosen depends only
/// on the unordered pair of inputs, so swapping them swaps added and removed.
pub fn line_diff(old: &[u8], new: &[u8]) -> LineDiff {
    if old > new {
        let swapped = ordered_line_diff(new, old);
        return LineDiff { added: swapped.removed, removed: swapped.added };
    }
    ordered_line_diff(old, new)
}

fn ordered_line_diff(old: &[u8], new: &[u8]) -> LineDiff {
    let old_lines = split_lines(old);
    let new_lines = split_lines(new);
    let mut out = LineDiff::default();
    for op in capture_diff_slices(Algorithm::Myers, &old_lines, &new_lines) {
        match op {
            DiffOp::Equal { .. } => {}
            DiffOp::Delete { old_index, old_len, .. } => {
                out.removed.extend(old_lines[old_index..old_index + old_len].iter().map(|l| display_line(l)));
            }
            DiffOp::Insert { new_index, new_len, .. } => {
                out.added.extend(new_lines[new_index..new_index + new_len].iter().map(|l| display_line(l)));
            }
            DiffOp::Replace { old_index, old_len, new_index, new_len } => {
                out.removed.extend(old_lines[old_index..old_index + old_len].iter().map(|l| display_line(l)));
                out.added.extend(new_lines[new_index..new_index + new_len].iter().map(|l| display_line(l)));
            }
        }
    }
    out
}

/// Diff one path between two artifact versions. A path missing from one side
/// is an empty file there.
pub fn diff_versions(a: &RegistryArtifact, b: &RegistryArtifact, path: &str) -> Result<LineDiff, RegistryError> {
    for side in [a, b] {
        if side.contains(path) && !side.is_text(path) {
            return Err(RegistryError::BinaryFile(path.to_string()));
        }
    }
    Ok(line_diff(a.content(path).unwrap_or_default(), b.content(path).unwrap_or_default()))
}

/// `minuend - subtrahend` as multisets, keeping the minuend's order.
pub fn multiset_difference(minuend: &[String], subtrahend: &[String]) -> Vec<String> {
    let mut budget: HashMap<&str, usize> = HashMap::new();
    for line in subtrahend {
        *budget.entry(line.as_str()).or_default() += 1;
    }
    minuend
        .iter()
        .filter(|line| match budget.get_mut(line.as_str()) {
            Some(n) if *n > 0 => {
                *n -= 1;
                false
            }
            _ => true,
        })
        .cloned()
        .collect()
}
