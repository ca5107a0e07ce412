//! Per-commit code review classification.
//!
//! A commit counts as reviewed when any of four checks holds, evaluated in
//! this order:
//!
//! 1. `github-review`: a merged pull request containing the commit has an
//!    approving review from someone other than its opener;
//! 2. `different-merger`: such a pull request was opened and merged by two
//!    different accounts, not both bots;
//! 3. `different-committer`: the commit was authored and committed by two
//!    different accounts, neither pair both bots nor the committer a platform
//!    identity;
//! 4. `third-party-tool`: the message carries Gerrit `Reviewed-on:` and
//!    `Reviewed-by:` trailers, or a pull request carries a Prow approval label.

pub mod cache;
pub mod fixture;
pub mod github;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::git::CommitId;

pub use cache::CachedProvider;
pub use fixture::ReviewFixture;
pub use github::GitHubProvider;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("review metadata unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("rate limited until {reset_epoch} (unix time)")]
    RateLimited { reset_epoch: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountKind {
    Human,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub reviewer_login: String,
    /// Platform review state, e.g. `APPROVED`, `COMMENTED`, `CHANGES_REQUESTED`.
    pub state: String,
}

impl Review {
    pub fn is_approval(&self) -> bool {
        self.state.eq_ignore_ascii_case("approved")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequestRecord {
    pub number: u64,
    pub opener_login: String,
    #[serde(default)]
    pub merger_login: Option<String>,
    pub merged: bool,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub reviews: Vec<Review>,
    #[serde(default)]
    pub commits_in_pr: Vec<CommitId>,
    /// The commit that landed the pull request, when it was merged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_commit: Option<CommitId>,
}

impl PullRequestRecord {
    /// An empty commit list means the platform associated the pull request
    /// with the commit without listing its commits.
    pub fn contains(&self, commit: &CommitId) -> bool {
        self.commits_in_pr.is_empty() || self.commits_in_pr.contains(commit) || self.merge_commit.as_ref() == Some(commit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewProviderRecord {
    pub commit: CommitId,
    #[serde(default)]
    pub author_login: Option<String>,
    #[serde(default)]
    pub committer_login: Option<String>,
    #[serde(default)]
    pub commit_message: String,
    #[serde(default)]
    pub associated_pull_requests: Vec<PullRequestRecord>,
    #[serde(default)]
    pub account_kinds: BTreeMap<String, AccountKind>,
}

impl ReviewProviderRecord {
    pub fn is_bot(&self, login: &str) -> bool {
        match self.account_kinds.get(login) {
            Some(kind) => *kind == AccountKind::Bot,
            None => login.ends_with("[bot]"),
        }
    }

    fn pull_requests(&self) -> impl Iterator<Item = &PullRequestRecord> {
        self.associated_pull_requests.iter().filter(|pr| pr.contains(&self.commit))
    }

    fn merged_pull_requests(&self) -> impl Iterator<Item = &PullRequestRecord> {
        self.pull_requests().filter(|pr| pr.merged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReviewCheck {
    GithubReview,
    DifferentMerger,
    DifferentCommitter,
    ThirdPartyTool,
}

impl ReviewCheck {
    pub const ORDER: [ReviewCheck; 4] = [
        ReviewCheck::GithubReview,
        ReviewCheck::DifferentMerger,
        ReviewCheck::DifferentCommitter,
        ReviewCheck::ThirdPartyTool,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewCheck::GithubReview => "github-review",
            ReviewCheck::DifferentMerger => "different-merger",
            ReviewCheck::DifferentCommitter => "different-committer",
            ReviewCheck::ThirdPartyTool => "third-party-tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitReviewVerdict {
    pub commit: CommitId,
    pub reviewed: bool,
    pub satisfied_check: Option<ReviewCheck>,
    pub evidence: Option<String>,
}

/// Tunables of the checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPolicy {
    /// Any of these labels on a pull request is Prow approval evidence.
    pub prow_labels: Vec<String>,
    /// Logins of the platform itself and its automation.
    pub platform_identities: Vec<String>,
}

impl Default for ReviewPolicy {
    fn default() -> Self {
        ReviewPolicy {
            prow_labels: vec!["lgtm".into(), "approved".into()],
            platform_identities: vec![
                "web-flow".into(),
                "github".into(),
                "github-actions[bot]".into(),
                "actions-user".into(),
            ],
        }
    }
}

impl ReviewPolicy {
    fn is_platform(&self, login: &str) -> bool {
        self.platform_identities.iter().any(|p| p.eq_ignore_ascii_case(login))
    }
}

fn github_review_evidence(record: &ReviewProviderRecord) -> Option<String> {
    record.merged_pull_requests().find_map(|pr| {
        pr.reviews
            .iter()
            .find(|r| r.is_approval() && r.reviewer_login != pr.opener_login)
            .map(|r| format!("PR #{} approved by {}", pr.number, r.reviewer_login))
    })
}

fn different_merger_evidence(record: &ReviewProviderRecord, policy: &ReviewPolicy) -> Option<String> {
    record.merged_pull_requests().find_map(|pr| {
        let merger = pr.merger_login.as_deref()?;
        let distinct = merger != pr.opener_login
            && !(record.is_bot(&pr.opener_login) && record.is_bot(merger))
            && !policy.is_platform(merger)
            && !policy.is_platform(&pr.opener_login);
        distinct.then(|| format!("PR #{} opened by {} and merged by {merger}", pr.number, pr.opener_login))
    })
}

fn different_committer_evidence(record: &ReviewProviderRecord, policy: &ReviewPolicy) -> Option<String> {
    let author = record.author_login.as_deref()?;
    let committer = record.committer_login.as_deref()?;
    let distinct = author != committer
        && !policy.is_platform(committer)
        && !policy.is_platform(author)
        && !(record.is_bot(author) && record.is_bot(committer));
    distinct.then(|| format!("authored by {author}, committed by {committer}"))
}

fn has_trailer(message: &str, trailer: &str) -> bool {
    message.lines().any(|l| l.trim_start().starts_with(trailer))
}

fn third_party_evidence(record: &ReviewProviderRecord, policy: &ReviewPolicy) -> Option<String> {
    if has_trailer(&record.commit_message, "Reviewed-on:") && has_trailer(&record.commit_message, "Reviewed-by:") {
        let reviewer = record
            .commit_message
            .lines()
            .find_map(|l| l.trim_start().strip_prefix("Reviewed-by:"))
            .unwrap_or_default()
            .trim();
        return Some(format!("Gerrit trailers, Reviewed-by: {reviewer}"));
    }
    record.pull_requests().find_map(|pr| {
        pr.labels
            .iter()
            .find(|l| policy.prow_labels.iter().any(|p| p.eq_ignore_ascii_case(l)))
            .map(|l| format!("PR #{} labeled {l}", pr.number))
    })
}

pub fn check_github_review(record: &ReviewProviderRecord) -> bool {
    github_review_evidence(record).is_some()
}

pub fn check_different_merger(record: &ReviewProviderRecord, policy: &ReviewPolicy) -> bool {
    different_merger_evidence(record, policy).is_some()
}

pub fn check_different_committer(record: &ReviewProviderRecord, policy: &ReviewPolicy) -> bool {
    different_committer_evidence(record, policy).is_some()
}

pub fn check_third_party_tools(record: &ReviewProviderRecord, policy: &ReviewPolicy) -> bool {
    third_party_evidence(record, policy).is_some()
}

/// Evaluate the checks in order and record the first one that holds.
pub fn classify_record(record: &ReviewProviderRecord, policy: &ReviewPolicy) -> CommitReviewVerdict {
    let found = ReviewCheck::ORDER.iter().find_map(|check| {
        let evidence = match check {
            ReviewCheck::GithubReview => github_review_evidence(record),
            ReviewCheck::DifferentMerger => different_merger_evidence(record, policy),
            ReviewCheck::DifferentCommitter => different_committer_evidence(record, policy),
            ReviewCheck::ThirdPartyTool => third_party_evidence(record, policy),
        };
        evidence.map(|e| (*check, e))
    });
    CommitReviewVerdict {
        commit: record.commit.clone(),
        reviewed: found.is_some(),
        satisfied_check: found.as_ref().map(|(c, _)| *c),
        evidence: found.map(|(_, e)| e),
    }
}

/// Source of review metadata for commits of a GitHub repository.
pub trait ReviewProvider: Send + Sync {
    /// `repo_url` is the normalized `https://github.com/<owner>/<repo>`.
    fn record(&self, repo_url: &str, commit: &CommitId) -> Result<ReviewProviderRecord, ReviewError>;
}

pub fn classify_commit(
    repo_url: &str,
    commit: &CommitId,
    provider: &dyn ReviewProvider,
    policy: &ReviewPolicy,
) -> Result<CommitReviewVerdict, ReviewError> {
    Ok(classify_record(&provider.record(repo_url, commit)?, policy))
}
