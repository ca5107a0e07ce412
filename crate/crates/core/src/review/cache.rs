//! On-disk cache of review records, one JSON file per commit under
//! `<cache>/reviews/`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{ReviewError, ReviewProvider, ReviewProviderRecord};
use crate::git::CommitId;

pub struct CachedProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: ReviewProvider> CachedProvider<P> {
    pub fn new(inner: P, cache_dir: &Path) -> Self {
        CachedProvider { inner, dir: cache_dir.join("reviews") }
    }

    fn entry(&self, commit: &CommitId) -> PathBuf {
        self.dir.join(format!("{commit}.json"))
    }
}

impl<P: ReviewProvider> ReviewProvider for CachedProvider<P> {
    fn record(&self, repo_url: &str, commit: &CommitId) -> Result<ReviewProviderRecord, ReviewError> {
        let path = self.entry(commit);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(record) = serde_json::from_str::<ReviewProviderRecord>(&text) {
                return Ok(record);
            }
            log::warn!("ignoring unreadable cache entry {}", path.display());
        }
        let record = self.inner.record(repo_url, commit)?;
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(&self.dir)?;
            let tmp = path.with_extension(format!("json.{}.tmp", std::process::id()));
            fs::write(&tmp, serde_json::to_vec_pretty(&record)?)?;
            fs::rename(&tmp, &path)
        };
        if let Err(e) = write() {
            log::warn!("cannot cache review record for {commit}: {e}");
        }
        Ok(record)
    }
}
