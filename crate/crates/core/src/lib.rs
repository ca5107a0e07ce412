//! Dependency update auditing.
//!
//! Given a package update `X -> Y` on one of the supported registries, this
//! crate compares the published artifacts against the package's GitHub
//! repository and reports:
//!
//! * phantom artifacts: files and line changes shipped in the registry
//!   artifact that cannot be traced to the repository at the release commits;
//! * code review coverage: the share of the update's repository-attributable
//!   line changes whose commits passed a code review check.
//!
//! The pipeline is `fetch -> locate -> resolve -> phantom -> delta -> classify
//! -> crc`, orchestrated by [`report::audit`].

pub mod crc;
pub mod delta;
pub mod git;
pub mod locate;
pub mod phantom;
pub mod registry;
pub mod release;
pub mod report;
pub mod review;

pub use crc::{aggregate_batch, compute_crc, BatchSummary, CrcReport, UpdateMetrics};
pub use delta::{compute_code_delta, CodeDelta};
pub use git::{CommitId, GitRepo};
pub use phantom::{PhantomReport, PhantomReason};
pub use registry::{Registry, RegistryArtifact, UpdateCoordinates};
pub use report::{audit, AuditReport, Providers, ReasonCode};
pub use review::{classify_commit, CommitReviewVerdict, ReviewProviderRecord};
