//! Offline review metadata: a JSON array of [`ReviewProviderRecord`].

use std::collections::HashMap;
use std::path::Path;

use super::{ReviewError, ReviewProvider, ReviewProviderRecord};
use crate::git::CommitId;

#[derive(Debug, Clone, Default)]
pub struct ReviewFixture {
    records: HashMap<CommitId, ReviewProviderRecord>,
}

impl ReviewFixture {
    pub fn from_records(records: impl IntoIterator<Item = ReviewProviderRecord>) -> Self {
        ReviewFixture { records: records.into_iter().map(|r| (r.commit.clone(), r)).collect() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReviewError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReviewError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
        let records: Vec<ReviewProviderRecord> = serde_json::from_str(&text)
            .map_err(|e| ReviewError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl ReviewProvider for ReviewFixture {
    fn record(&self, _repo_url: &str, commit: &CommitId) -> Result<ReviewProviderRecord, ReviewError> {
        self.records
            .get(commit)
            .cloned()
            .ok_or_else(|| ReviewError::ProviderUnavailable(format!("no review record for commit {commit}")))
    }
}
