//! Code review coverage of an update and batch statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delta::CodeDelta;
use crate::git::CommitId;
use crate::phantom::PhantomCounts;
use crate::review::{CommitReviewVerdict, ReviewCheck};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CrcError {
    #[error("no review verdict for commit {0}")]
    MissingVerdict(CommitId),
    #[error("no update with a non-empty code delta to aggregate")]
    EmptyBatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitCoverage {
    pub commit: CommitId,
    pub reviewed: bool,
    pub satisfied_check: Option<ReviewCheck>,
    pub lines_attributed: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCoverage {
    pub total: usize,
    pub reviewed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrcReport {
    pub total_delta_lines: usize,
    pub reviewed_delta_lines: usize,
    /// `reviewed / total`, `None` for a zero-delta update.
    pub coverage: Option<f64>,
    pub zero_delta: bool,
    pub per_commit: Vec<CommitCoverage>,
    pub per_file: BTreeMap<String, FileCoverage>,
}

/// Added and removed lines count once each; a line is reviewed when its
/// commit's verdict is.
pub fn compute_crc(delta: &CodeDelta, verdicts: &BTreeMap<CommitId, CommitReviewVerdict>) -> Result<CrcReport, CrcError> {
    let mut per_commit: BTreeMap<&CommitId, (usize, &CommitReviewVerdict)> = BTreeMap::new();
    let mut per_file: BTreeMap<String, FileCoverage> = BTreeMap::new();
    let mut reviewed_lines = 0;
    for line in delta.lines() {
        let verdict = verdicts.get(&line.commit).ok_or_else(|| CrcError::MissingVerdict(line.commit.clone()))?;
        per_commit.entry(&line.commit).or_insert((0, verdict)).0 += 1;
        let file = per_file.entry(line.path.clone()).or_default();
        file.total += 1;
        if verdict.reviewed {
            file.reviewed += 1;
            reviewed_lines += 1;
        }
    }
    let total = delta.total_lines();
    Ok(CrcReport {
        total_delta_lines: total,
        reviewed_delta_lines: reviewed_lines,
        coverage: (total > 0).then(|| reviewed_lines as f64 / total as f64),
        zero_delta: total == 0,
        per_commit: per_commit
            .into_iter()
            .map(|(commit, (n, v))| CommitCoverage {
                commit: commit.clone(),
                reviewed: v.reviewed,
                satisfied_check: v.satisfied_check,
                lines_attributed: n,
            })
            .collect(),
        per_file,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub n_phantom_files: usize,
    pub n_files_with_phantom_lines: usize,
    pub n_added_phantom_lines: usize,
    pub crc: CrcReport,
}

impl UpdateMetrics {
    pub fn new(counts: PhantomCounts, crc: CrcReport) -> Self {
        UpdateMetrics {
            n_phantom_files: counts.phantom_files,
            n_files_with_phantom_lines: counts.files_with_phantom_lines,
            n_added_phantom_lines: counts.added_phantom_lines,
            crc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSummary {
    pub updates: usize,
    pub pct_with_phantom_files: f64,
    /// Over updates with at least one phantom file.
    pub median_phantom_files: Option<f64>,
    pub pct_with_phantom_lines: f64,
    /// Over updates with phantom lines.
    pub median_files_with_phantom_lines: Option<f64>,
    pub median_added_phantom_lines: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrcSummary {
    /// Updates with a non-empty code delta.
    pub updates: usize,
    pub zero_delta_excluded: usize,
    pub median_coverage: f64,
    pub median_delta_lines: f64,
    pub pct_fully_reviewed: f64,
    pub pct_not_reviewed: f64,
    pub pct_partially_reviewed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub phantom: PhantomSummary,
    /// `None` when every update had a zero delta.
    pub crc: Option<CrcSummary>,
}

impl BatchSummary {
    pub fn crc_summary(&self) -> Result<&CrcSummary, CrcError> {
        self.crc.as_ref().ok_or(CrcError::EmptyBatch)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 { 0.0 } else { part as f64 * 100.0 / whole as f64 }
}

/// Zero-delta updates count toward phantom statistics only.
pub fn aggregate_batch(metrics: &[UpdateMetrics]) -> Result<BatchSummary, CrcError> {
    if metrics.is_empty() {
        return Err(CrcError::EmptyBatch);
    }
    let n = metrics.len();
    let with_files: Vec<&UpdateMetrics> = metrics.iter().filter(|m| m.n_phantom_files > 0).collect();
    let with_lines: Vec<&UpdateMetrics> = metrics.iter().filter(|m| m.n_files_with_phantom_lines > 0).collect();
    let phantom = PhantomSummary {
        updates: n,
        pct_with_phantom_files: pct(with_files.len(), n),
        median_phantom_files: median(&with_files.iter().map(|m| m.n_phantom_files as f64).collect::<Vec<_>>()),
        pct_with_phantom_lines: pct(with_lines.len(), n),
        median_files_with_phantom_lines: median(
            &with_lines.iter().map(|m| m.n_files_with_phantom_lines as f64).collect::<Vec<_>>(),
        ),
        median_added_phantom_lines: median(&with_lines.iter().map(|m| m.n_added_phantom_lines as f64).collect::<Vec<_>>()),
    };

    let coverages: Vec<(f64, usize)> = metrics
        .iter()
        .filter_map(|m| m.crc.coverage.map(|c| (c, m.crc.total_delta_lines)))
        .collect();
    let crc = (!coverages.is_empty()).then(|| {
        let measured = coverages.len();
        let full = coverages.iter().filter(|(c, _)| *c == 1.0).count();
        let none = coverages.iter().filter(|(c, _)| *c == 0.0).count();
        CrcSummary {
            updates: measured,
            zero_delta_excluded: n - measured,
            median_coverage: median(&coverages.iter().map(|(c, _)| *c).collect::<Vec<_>>()).expect("non-empty"),
            median_delta_lines: median(&coverages.iter().map(|(_, l)| *l as f64).collect::<Vec<_>>()).expect("non-empty"),
            pct_fully_reviewed: pct(full, measured),
            pct_not_reviewed: pct(none, measured),
            pct_partially_reviewed: pct(measured - full - none, measured),
        }
    });
    Ok(BatchSummary { phantom, crc })
}
