//! Test fixtures and independent oracles: scripted git repositories,
//! registry archive packers, offline fixture stores, a textbook LCS diff and a
//! commit-by-commit replay of line origins.

pub mod archive;
pub mod oracle;
pub mod random;
pub mod repo;
pub mod world;

pub use archive::{pack, Format};
pub use oracle::{lcs_diff, multiset_diff, replay_delta, Op, ReplayDelta, ReplayLine};
pub use random::{random_history, RandomHistory};
pub use repo::FixtureRepo;
pub use world::{pull_request, review_record, World};

use std::collections::BTreeMap;

pub type Files = BTreeMap<String, Vec<u8>>;

/// Build a file map from `(path, text)` pairs.
pub fn files<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Files {
    pairs.into_iter().map(|(p, c)| (p.to_string(), c.as_bytes().to_vec())).collect()
}
