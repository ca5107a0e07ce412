//! Audit orchestration, batch runs and report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crc::{aggregate_batch, compute_crc, BatchSummary, CrcReport, UpdateMetrics};
use crate::delta::{compute_code_delta, ChangedFile, CodeDelta, DeltaError};
use crate::git::{CommitId, GitError, GitRepo};
use crate::locate::{
    cache_path, locate_package_directory, locate_repository, manifest_version, normalize_github_url, LocateError,
    MetadataSource, RepoContext, DEFAULT_PYPI_MATCH_THRESHOLD,
};
use crate::phantom::{detect_phantoms, PhantomError, PhantomReport};
use crate::registry::{fetch_artifact, ArchiveSource, Registry, RegistryError, UpdateCoordinates};
use crate::release::{build_release_context, resolve_release_commit, ReleaseError};
use crate::review::{classify_commit, CommitReviewVerdict, ReviewError, ReviewPolicy, ReviewProvider};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasonCode {
    NoReleaseTag,
    RepositoryNotFoundOrInvalid,
    NotGithubHosted,
    NonUnicodeFile,
    PrivateSubmodule,
    VersionNotInRegistry,
    Other,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::NoReleaseTag => "no-release-tag",
            ReasonCode::RepositoryNotFoundOrInvalid => "repository-not-found-or-invalid",
            ReasonCode::NotGithubHosted => "not-github-hosted",
            ReasonCode::NonUnicodeFile => "non-unicode-file",
            ReasonCode::PrivateSubmodule => "private-submodule",
            ReasonCode::VersionNotInRegistry => "version-not-in-registry",
            ReasonCode::Other => "other",
        }
    }
}

/// Any failure of the pipeline, classified into a [`ReasonCode`].
#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Git(#[from] GitError),
    #[error(transparent)]
    Release(#[from] ReleaseError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error("{0}")]
    Internal(String),
}

impl From<PhantomError> for AuditError {
    fn from(e: PhantomError) -> Self {
        match e {
            PhantomError::Locate(e) => e.into(),
            PhantomError::Git(e) => e.into(),
        }
    }
}

impl From<DeltaError> for AuditError {
    fn from(e: DeltaError) -> Self {
        match e {
            DeltaError::Locate(e) => e.into(),
            DeltaError::Git(e) => e.into(),
        }
    }
}

fn git_reason(e: &GitError) -> ReasonCode {
    match e {
        GitError::CloneFailed { .. } | GitError::NoCommonAncestor { .. } | GitError::NotARepository(_) => {
            ReasonCode::RepositoryNotFoundOrInvalid
        }
        GitError::PrivateSubmodule { .. } => ReasonCode::PrivateSubmodule,
        _ => ReasonCode::Other,
    }
}

impl AuditError {
    pub fn reason(&self) -> ReasonCode {
        match self {
            AuditError::Registry(RegistryError::VersionNotInRegistry(_)) => ReasonCode::VersionNotInRegistry,
            AuditError::Registry(RegistryError::NonUnicodePathEntry(_)) => ReasonCode::NonUnicodeFile,
            AuditError::Registry(_) => ReasonCode::Other,
            AuditError::Locate(e) => match e {
                LocateError::NotGitHubHosted(_) => ReasonCode::NotGithubHosted,
                LocateError::NoRepositoryListed(_)
                | LocateError::InvalidRepositoryUrl(_)
                | LocateError::DirectoryNotFound(_)
                | LocateError::AmbiguousDirectory(_)
                | LocateError::Metadata(_) => ReasonCode::RepositoryNotFoundOrInvalid,
                LocateError::Git(g) => git_reason(g),
                LocateError::Registry(RegistryError::VersionNotInRegistry(_)) => ReasonCode::VersionNotInRegistry,
                LocateError::SymlinkEscapesRepository(_) | LocateError::Registry(_) => ReasonCode::Other,
            },
            AuditError::Git(g) => git_reason(g),
            AuditError::Release(ReleaseError::NoReleaseTag(_)) => ReasonCode::NoReleaseTag,
            AuditError::Release(ReleaseError::Git(g)) => git_reason(g),
            AuditError::Release(ReleaseError::AmbiguousReleaseTag { .. }) => ReasonCode::Other,
            AuditError::Review(_) | AuditError::Internal(_) => ReasonCode::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: Status,
    pub reason: Option<ReasonCode>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositoryInfo {
    pub url: String,
    pub package_directory: Option<String>,
    pub match_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseInfo {
    pub c_x: CommitId,
    pub c_y: CommitId,
    pub c_a: Option<CommitId>,
    pub range_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub changed_files: Vec<ChangedFile>,
    pub added_lines: usize,
    pub removed_lines: usize,
    pub total_lines: usize,
    pub commits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub generated_at: Option<String>,
    pub coordinates: UpdateCoordinates,
    pub outcome: Outcome,
    pub repository: Option<RepositoryInfo>,
    pub release: Option<ReleaseInfo>,
    pub phantom: Option<PhantomReport>,
    pub delta: Option<DeltaSummary>,
    pub verdicts: Vec<CommitReviewVerdict>,
    pub crc: Option<CrcReport>,
    pub warnings: Vec<String>,
}

impl AuditReport {
    fn new(coordinates: UpdateCoordinates, timestamp: bool) -> Self {
        AuditReport {
            schema_version: SCHEMA_VERSION,
            generated_at: timestamp.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            coordinates,
            outcome: Outcome { status: Status::Ok, reason: None, message: None },
            repository: None,
            release: None,
            phantom: None,
            delta: None,
            verdicts: Vec::new(),
            crc: None,
            warnings: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.outcome.status == Status::Ok
    }

    pub fn reason(&self) -> Option<ReasonCode> {
        self.outcome.reason
    }

    /// The per-update metrics of a successful audit.
    pub fn metrics(&self) -> Option<UpdateMetrics> {
        let (phantom, crc) = (self.phantom.as_ref()?, self.crc.as_ref()?);
        self.is_ok().then(|| UpdateMetrics::new(phantom.counts, crc.clone()))
    }
}

/// Where the pipeline gets its inputs from.
#[derive(Clone)]
pub struct Providers {
    pub archives: Arc<dyn ArchiveSource>,
    pub metadata: Arc<dyn MetadataSource>,
    pub reviews: Arc<dyn ReviewProvider>,
    /// Clones live under `<cache_dir>/github.com/<owner>/<repo>`.
    pub cache_dir: PathBuf,
    /// When false, repositories must already be in the cache.
    pub allow_network: bool,
}

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub pypi_match_threshold: f64,
    pub review_policy: ReviewPolicy,
    /// Fill `generated_at`; off for byte-reproducible output.
    pub timestamp: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { pypi_match_threshold: DEFAULT_PYPI_MATCH_THRESHOLD, review_policy: ReviewPolicy::default(), timestamp: true }
    }
}

/// Run the whole pipeline for one update. Failures are reported in the
/// outcome, with whatever was computed before them kept.
pub fn audit(coords: &UpdateCoordinates, providers: &Providers, options: &AuditOptions) -> AuditReport {
    audit_with_delta(coords, providers, options).0
}

/// [`audit`], also returning the line-level code delta when it was reached.
pub fn audit_with_delta(
    coords: &UpdateCoordinates,
    providers: &Providers,
    options: &AuditOptions,
) -> (AuditReport, Option<CodeDelta>) {
    let mut report = AuditReport::new(coords.clone(), options.timestamp);
    let mut delta = None;
    if let Err(e) = run(coords, providers, options, &mut report, &mut delta) {
        report.outcome = Outcome { status: Status::Failed, reason: Some(e.reason()), message: Some(e.to_string()) };
    }
    (report, delta)
}

fn repo_url_for(ctx: &RepoContext, mount: Option<&str>, warnings: &mut BTreeSet<String>) -> String {
    let Some(mount) = mount else { return ctx.repo_url.clone() };
    let url = ctx
        .repo
        .submodule(mount)
        .ok()
        .and_then(|s| s.remote_url().ok().flatten())
        .and_then(|u| normalize_github_url(&u).ok());
    url.unwrap_or_else(|| {
        warnings.insert(format!("submodule {mount} has no GitHub remote; its commits are looked up in {}", ctx.repo_url));
        ctx.repo_url.clone()
    })
}

fn run(
    coords: &UpdateCoordinates,
    providers: &Providers,
    options: &AuditOptions,
    report: &mut AuditReport,
    delta_out: &mut Option<CodeDelta>,
) -> Result<(), AuditError> {
    let (vx, vy) = (coords.current(), coords.update());
    let (artifact_x, artifact_y) = rayon::join(
        || fetch_artifact(&vx, providers.archives.as_ref()),
        || fetch_artifact(&vy, providers.archives.as_ref()),
    );
    let (artifact_x, artifact_y) = (artifact_x?, artifact_y?);

    let url = locate_repository(&vy, providers.metadata.as_ref())?;
    report.repository = Some(RepositoryInfo { url: url.clone(), package_directory: None, match_fraction: None });
    let repo = GitRepo::acquire(&url, &cache_path(&providers.cache_dir, &url), providers.allow_network)?;

    let tags = repo.list_tags()?;
    let c_x = resolve_release_commit(&tags, &coords.package, &coords.current_version)?;
    let c_y = resolve_release_commit(&tags, &coords.package, &coords.update_version)?;
    report.release = Some(ReleaseInfo { c_x: c_x.clone(), c_y: c_y.clone(), c_a: None, range_length: None });

    let dir = locate_package_directory(&repo, &coords.package, &artifact_y, &c_y, options.pypi_match_threshold)?;
    report.repository = Some(RepositoryInfo {
        url: url.clone(),
        package_directory: Some(dir.directory.clone()),
        match_fraction: Some(dir.match_fraction),
    });
    for (version, commit) in [(&coords.current_version, &c_x), (&coords.update_version, &c_y)] {
        if let Some(declared) = manifest_version(&repo, coords.registry, &dir.directory, commit)? {
            if &declared != version {
                report
                    .warnings
                    .push(format!("manifest at {} declares version {declared}, audited version is {version}", commit.short()));
            }
        }
    }
    if coords.registry == Registry::Pypi {
        report.warnings.push(format!(
            "package directory accepted with {:.1}% of registry paths present (threshold {:.1}%)",
            dir.match_fraction * 100.0,
            options.pypi_match_threshold * 100.0
        ));
    }

    let repo_ctx = RepoContext { repo_url: url, repo, package_directory: dir.directory, match_fraction: dir.match_fraction };
    let ctx = build_release_context(repo_ctx, c_x, c_y)?;
    report.release = Some(ReleaseInfo {
        c_x: ctx.c_x.clone(),
        c_y: ctx.c_y.clone(),
        c_a: Some(ctx.c_a.clone()),
        range_length: Some(ctx.range.len()),
    });
    report.warnings.extend(ctx.warnings.iter().cloned());

    let phantom = detect_phantoms(&artifact_x, &artifact_y, &ctx)?;
    if !phantom.phantom_lines.is_empty() {
        report
            .warnings
            .push("phantom lines found; the release tags may not point at the commits the artifacts were built from".into());
    }
    report.phantom = Some(phantom.clone());

    let delta = compute_code_delta(&artifact_x, &artifact_y, &phantom, &ctx)?;
    report.warnings.extend(delta.warnings.iter().cloned());
    report.delta = Some(DeltaSummary {
        changed_files: delta.files.clone(),
        added_lines: delta.added.len(),
        removed_lines: delta.removed.len(),
        total_lines: delta.total_lines(),
        commits: delta.commits().len(),
    });
    let delta = delta_out.insert(delta);

    let mut url_warnings = BTreeSet::new();
    let mut targets: BTreeMap<CommitId, String> = BTreeMap::new();
    for line in delta.lines() {
        if !targets.contains_key(&line.commit) {
            let url = repo_url_for(&ctx.repo, line.submodule.as_deref(), &mut url_warnings);
            targets.insert(line.commit.clone(), url);
        }
    }
    report.warnings.extend(url_warnings);
    let results: Vec<Result<CommitReviewVerdict, ReviewError>> = targets
        .par_iter()
        .map(|(commit, url)| classify_commit(url, commit, providers.reviews.as_ref(), &options.review_policy))
        .collect();
    let mut verdicts = BTreeMap::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(v) => {
                verdicts.insert(v.commit.clone(), v);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    report.verdicts = verdicts.values().cloned().collect();
    if let Some(e) = first_error {
        return Err(e.into());
    }

    let crc = compute_crc(delta, &verdicts).map_err(|e| AuditError::Internal(e.to_string()))?;
    report.crc = Some(crc);
    Ok(())
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("input row {row}: {message}")]
pub struct InputParseError {
    /// 1-based line number, 0 for whole-input problems.
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Deserialize)]
struct JsonRow {
    registry: String,
    package: String,
    #[serde(alias = "current_version")]
    from: String,
    #[serde(alias = "update_version")]
    to: String,
}

/// Parse batch input. Each non-blank line not starting with `#` is either a
/// JSON object `{"registry", "package", "from", "to"}` or four fields
/// separated by tabs, commas or whitespace. A leading `registry,...` header
/// row is skipped.
pub fn parse_batch_input(text: &str) -> Result<Vec<UpdateCoordinates>, InputParseError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let row = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| InputParseError { row, message };
        let (registry, package, from, to) = if line.starts_with('{') {
            let r: JsonRow = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            (r.registry, r.package, r.from, r.to)
        } else {
            let fields: Vec<&str> = if line.contains('\t') {
                line.split('\t').map(str::trim).collect()
            } else if line.contains(',') {
                line.split(',').map(str::trim).collect()
            } else {
                line.split_whitespace().collect()
            };
            if rows.is_empty() && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("registry")) {
                continue;
            }
            let [r, p, f, t] = fields[..] else {
                return Err(err(format!("expected 4 fields (registry, package, from, to), found {}", fields.len())));
            };
            (r.to_string(), p.to_string(), f.to_string(), t.to_string())
        };
        let registry: Registry = registry.parse().map_err(|e: RegistryError| err(e.to_string()))?;
        rows.push(UpdateCoordinates::new(registry, package, from, to).map_err(|e| err(e.to_string()))?);
    }
    if rows.is_empty() {
        return Err(InputParseError { row: 0, message: "no update rows".into() });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema_version: u32,
    pub reports: Vec<AuditReport>,
    /// Over the successful audits; `None` when none succeeded.
    pub summary: Option<BatchSummary>,
}

impl BatchReport {
    pub fn failed(&self) -> usize {
        self.reports.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Size the global pool used for per-file work.
pub fn configure_threads(workers: usize) -> Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build_global()
}

/// Audit every row independently on a pool of `workers` threads.
pub fn batch(rows: &[UpdateCoordinates], providers: &Providers, options: &AuditOptions, workers: usize) -> BatchReport {
    let run_all = || rows.par_iter().map(|c| audit(c, providers, options)).collect::<Vec<_>>();
    let reports = match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(run_all),
        Err(_) => run_all(),
    };
    let metrics: Vec<UpdateMetrics> = reports.iter().filter_map(AuditReport::metrics).collect();
    BatchReport { schema_version: SCHEMA_VERSION, summary: aggregate_batch(&metrics).ok(), reports }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            other => Err(format!("unknown output format `{other}`")),
        }
    }
}

pub fn render(report: &AuditReport, format: Format) -> String {
    match format {
        Format::Json => json(report),
        Format::Text => text(report),
    }
}

pub fn render_batch(batch: &BatchReport, format: Format) -> String {
    match format {
        Format::Json => json(batch),
        Format::Text => {
            let mut out = String::new();
            for r in &batch.reports {
                out.push_str(&text(r));
                out.push('\n');
            }
            out.push_str(&summary_text(batch));
            out
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

fn text(r: &AuditReport) -> String {
    let mut out = String::new();
    let c = &r.coordinates;
    let _ = writeln!(out, "{} {} {} -> {}", c.registry, c.package, c.current_version, c.update_version);
    match (&r.outcome.status, r.outcome.reason) {
        (Status::Ok, _) => out.push_str("  outcome: ok\n"),
        (Status::Failed, reason) => {
            let _ = writeln!(
                out,
                "  outcome: failed ({})\n  error: {}",
                reason.unwrap_or(ReasonCode::Other).as_str(),
                r.outcome.message.as_deref().unwrap_or_default()
            );
        }
    }
    if let Some(repo) = &r.repository {
        let _ = write!(out, "  repository: {}", repo.url);
        if let Some(d) = &repo.package_directory {
            let _ = write!(out, " (directory `{}`)", d);
        }
        out.push('\n');
    }
    if let Some(rel) = &r.release {
        let _ = write!(out, "  release commits: {} -> {}", rel.c_x.short(), rel.c_y.short());
        if let (Some(a), Some(n)) = (&rel.c_a, rel.range_length) {
            let _ = write!(out, ", common ancestor {}, {n} commits in range", a.short());
        }
        out.push('\n');
    }
    if let Some(p) = &r.phantom {
        let _ = writeln!(
            out,
            "  phantom files: {}, files with phantom lines: {}, added phantom lines: {}",
            p.counts.phantom_files, p.counts.files_with_phantom_lines, p.counts.added_phantom_lines
        );
        for f in &p.phantom_files {
            let reason = serde_json::to_value(f.reason).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            let _ = writeln!(out, "    {} [{reason}]", f.registry_path);
        }
        for (path, lines) in &p.phantom_lines {
            let _ = writeln!(out, "    {path}: +{} -{} phantom lines", lines.added.len(), lines.removed.len());
        }
    }
    if let Some(d) = &r.delta {
        let _ = writeln!(
            out,
            "  code delta: {} lines (+{} -{}) in {} files from {} commits",
            d.total_lines,
            d.added_lines,
            d.removed_lines,
            d.changed_files.len(),
            d.commits
        );
    }
    let lines: BTreeMap<&CommitId, usize> = r
        .crc
        .iter()
        .flat_map(|c| c.per_commit.iter().map(|p| (&p.commit, p.lines_attributed)))
        .collect();
    for v in &r.verdicts {
        let status = match v.satisfied_check {
            Some(check) => format!("reviewed ({})", check.as_str()),
            None => "not reviewed".to_string(),
        };
        let _ = write!(out, "    {} {status}", v.commit.short());
        if let Some(n) = lines.get(&v.commit) {
            let _ = write!(out, ", {n} lines");
        }
        if let Some(e) = &v.evidence {
            let _ = write!(out, ": {e}");
        }
        out.push('\n');
    }
    if let Some(crc) = &r.crc {
        match crc.coverage {
            Some(cov) => {
                let _ = writeln!(out, "  CRC: {} ({} of {} lines reviewed)", pct(cov), crc.reviewed_delta_lines, crc.total_delta_lines);
            }
            None => out.push_str("  CRC: undefined (zero code delta)\n"),
        }
    }
    for w in &r.warnings {
        let _ = writeln!(out, "  warning: {w}");
    }
    out
}

fn summary_text(batch: &BatchReport) -> String {
    let mut out = String::new();
    let n = batch.reports.len();
    let _ = writeln!(out, "batch: {n} updates, {} ok, {} failed", n - batch.failed(), batch.failed());
    match &batch.summary {
        None => out.push_str("  no successful audit to summarize\n"),
        Some(s) => {
            let _ = writeln!(
                out,
                "  updates with phantom files: {:.1}%, with phantom lines: {:.1}%",
                s.phantom.pct_with_phantom_files, s.phantom.pct_with_phantom_lines
            );
            match &s.crc {
                Some(c) => {
                    let _ = writeln!(
                        out,
                        "  median CRC: {} over {} updates ({} zero-delta excluded); fully reviewed {:.1}%, not reviewed {:.1}%, partially {:.1}%",
                        pct(c.median_coverage),
                        c.updates,
                        c.zero_delta_excluded,
                        c.pct_fully_reviewed,
                        c.pct_not_reviewed,
                        c.pct_partially_reviewed
                    );
                }
                None => out.push_str("  CRC: every update had a zero code delta\n"),
            }
        }
    }
    out
}
