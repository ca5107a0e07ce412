//! Live review metadata from the GitHub REST API.
//!
//! Authentication comes from the `GITHUB_TOKEN` environment variable. All
//! clients in the process share one rate budget: when it is exhausted, calls
//! wait for the reset (up to `max_wait`) instead of burning requests.

use std::collections::BTreeMap;
use std::sync::{LazyLock, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use reqwest::blocking::{Client, Response};
use reqwest::header::{HeaderMap, ACCEPT, AUTHORIZATION, RETRY_AFTER};
use reqwest::StatusCode;
use serde_json::Value;

use super::{AccountKind, PullRequestRecord, Review, ReviewError, ReviewProvider, ReviewProviderRecord};
use crate::git::CommitId;

pub const TOKEN_ENV: &str = "GITHUB_TOKEN";
const API: &str = "https://api.github.com";
const MAX_ATTEMPTS: usize = 4;

#[derive(Debug, Default)]
struct Budget {
    remaining: Option<u64>,
    reset_epoch: u64,
}

static BUDGET: LazyLock<Mutex<Budget>> = LazyLock::new(Mutex::default);

fn now_epoch() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or_default()
}

fn header_u64(headers: &HeaderMap, name: &str) -> Option<u64> {
    headers.get(name)?.to_str().ok()?.trim().parse().ok()
}

pub struct GitHubProvider {
    client: Client,
    token: Option<String>,
    max_wait: Duration,
}

impl GitHubProvider {
    pub fn from_env() -> Result<Self, ReviewError> {
        Self::new(std::env::var(TOKEN_ENV).ok().filter(|t| !t.trim().is_empty()))
    }

    pub fn new(token: Option<String>) -> Result<Self, ReviewError> {
        let client = Client::builder()
            .user_agent(concat!("update-audit/", env!("CARGO_PKG_VERSION")))
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ReviewError::ProviderUnavailable(e.to_string()))?;
        Ok(GitHubProvider { client, token, max_wait: Duration::from_secs(3600) })
    }

    pub fn with_max_wait(mut self, max_wait: Duration) -> Self {
        self.max_wait = max_wait;
        self
    }

    /// Block until the shared budget allows one more call.
    fn take_budget(&self) -> Result<(), ReviewError> {
        let mut budget = BUDGET.lock().expect("rate budget poisoned");
        if budget.remaining == Some(0) {
            let now = now_epoch();
            if budget.reset_epoch > now {
                let wait = Duration::from_secs(budget.reset_epoch - now + 1);
                if wait > self.max_wait {
                    return Err(ReviewError::RateLimited { reset_epoch: budget.reset_epoch });
                }
                log::info!("rate budget exhausted, waiting {}s", wait.as_secs());
                std::thread::sleep(wait);
            }
            budget.remaining = None;
        }
        if let Some(n) = budget.remaining.as_mut() {
            *n -= 1;
        }
        Ok(())
    }

    fn note_budget(headers: &HeaderMap) {
        let mut budget = BUDGET.lock().expect("rate budget poisoned");
        if let Some(remaining) = header_u64(headers, "x-ratelimit-remaining") {
            budget.remaining = Some(remaining);
        }
        if let Some(reset) = header_u64(headers, "x-ratelimit-reset") {
            budget.reset_epoch = reset;
        }
    }

    fn send(&self, url: &str) -> Result<Response, ReviewError> {
        for _ in 0..MAX_ATTEMPTS {
            self.take_budget()?;
            let mut req = self
                .client
                .get(url)
                .header(ACCEPT, "application/vnd.github+json")
                .header("X-GitHub-Api-Version", "2022-11-28");
            if let Some(token) = &self.token {
                req = req.header(AUTHORIZATION, format!("Bearer {token}"));
            }
            let resp = req.send().map_err(|e| ReviewError::ProviderUnavailable(e.to_string()))?;
            Self::note_budget(resp.headers());
            let status = resp.status();
            if status == StatusCode::FORBIDDEN || status == StatusCode::TOO_MANY_REQUESTS {
                let headers = resp.headers();
                let wait = match header_u64(headers, RETRY_AFTER.as_str()) {
                    Some(secs) => Duration::from_secs(secs),
                    None if header_u64(headers, "x-ratelimit-remaining") == Some(0) => {
                        let reset = header_u64(headers, "x-ratelimit-reset").unwrap_or_default();
                        Duration::from_secs(reset.saturating_sub(now_epoch()) + 1)
                    }
                    None => return Err(ReviewError::ProviderUnavailable(format!("{url}: HTTP {status}"))),
                };
                if wait > self.max_wait {
                    return Err(ReviewError::RateLimited { reset_epoch: now_epoch() + wait.as_secs() });
                }
                std::thread::sleep(wait);
                continue;
            }
            if !status.is_success() {
                return Err(ReviewError::ProviderUnavailable(format!("{url}: HTTP {status}")));
            }
            return Ok(resp);
        }
        Err(ReviewError::ProviderUnavailable(format!("{url}: retries exhausted")))
    }

    fn get(&self, url: &str) -> Result<Value, ReviewError> {
        self.send(url)?.json().map_err(|e| ReviewError::ProviderUnavailable(format!("{url}: {e}")))
    }

    /// All pages of a list endpoint.
    fn get_list(&self, url: &str, max_pages: usize) -> Result<Vec<Value>, ReviewError> {
        let mut items = Vec::new();
        for page in 1..=max_pages {
            let sep = if url.contains('?') { '&' } else { '?' };
            let v = self.get(&format!("{url}{sep}per_page=100&page={page}"))?;
            let batch = v.as_array().cloned().unwrap_or_default();
            let done = batch.len() < 100;
            items.extend(batch);
            if done {
                break;
            }
        }
        Ok(items)
    }
}

fn slug(repo_url: &str) -> Result<&str, ReviewError> {
    repo_url
        .strip_prefix("https://github.com/")
        .filter(|s| s.split('/').count() == 2)
        .ok_or_else(|| ReviewError::ProviderUnavailable(format!("not a GitHub repository url: {repo_url}")))
}

fn login(user: &Value, kinds: &mut BTreeMap<String, AccountKind>) -> Option<String> {
    let name = user["login"].as_str()?.to_string();
    let kind = if user["type"].as_str() == Some("Bot") { AccountKind::Bot } else { AccountKind::Human };
    kinds.insert(name.clone(), kind);
    Some(name)
}

impl ReviewProvider for GitHubProvider {
    fn record(&self, repo_url: &str, commit: &CommitId) -> Result<ReviewProviderRecord, ReviewError> {
        let base = format!("{API}/repos/{}", slug(repo_url)?);
        let mut kinds = BTreeMap::new();

        let c = self.get(&format!("{base}/commits/{commit}"))?;
        let author_login = login(&c["author"], &mut kinds);
        let committer_login = login(&c["committer"], &mut kinds);
        let commit_message = c["commit"]["message"].as_str().unwrap_or_default().to_string();

        let mut prs = Vec::new();
        for pr in self.get_list(&format!("{base}/commits/{commit}/pulls"), 3)? {
            let Some(number) = pr["number"].as_u64() else { continue };
            let detail = self.get(&format!("{base}/pulls/{number}"))?;
            let opener_login = login(&detail["user"], &mut kinds).unwrap_or_default();
            let merger_login = login(&detail["merged_by"], &mut kinds);
            let reviews = self
                .get_list(&format!("{base}/pulls/{number}/reviews"), 10)?
                .iter()
                .filter_map(|r| {
                    Some(Review {
                        reviewer_login: login(&r["user"], &mut kinds)?,
                        state: r["state"].as_str()?.to_string(),
                    })
                })
                .collect();
            // the endpoint stops at 250 commits
            let commits_in_pr = self
                .get_list(&format!("{base}/pulls/{number}/commits"), 3)?
                .iter()
                .filter_map(|c| CommitId::new(c["sha"].as_str()?).ok())
                .collect();
            prs.push(PullRequestRecord {
                number,
                opener_login,
                merger_login,
                merged: detail["merged"].as_bool().unwrap_or(false),
                labels: detail["labels"]
                    .as_array()
                    .map(|ls| ls.iter().filter_map(|l| l["name"].as_str().map(str::to_string)).collect())
                    .unwrap_or_default(),
                reviews,
                commits_in_pr,
                merge_commit: detail["merge_commit_sha"].as_str().and_then(|s| CommitId::new(s).ok()),
            });
        }

        Ok(ReviewProviderRecord {
            commit: commit.clone(),
            author_login,
            committer_login,
            commit_message,
            associated_pull_requests: prs,
            account_kinds: kinds,
        })
    }
}
