use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use update_audit::locate::MetadataFixture;
use update_audit::registry::{FixtureStore, LiveRegistry};
use update_audit::report::{self, AuditOptions, Format, Providers};
use update_audit::review::{CachedProvider, GitHubProvider, ReviewFixture};
use update_audit::{Registry, UpdateCoordinates};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "update-audit", version, about = "Audit a dependency update for phantom artifacts and code review coverage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit one update.
    Audit {
        #[arg(long)]
        registry: Registry,
        #[arg(long)]
        package: String,
        /// Current version.
        #[arg(long)]
        from: String,
        /// Update version.
        #[arg(long)]
        to: String,
        #[command(flatten)]
        common: Common,
    },
    /// Audit every update listed in a file.
    Batch {
        /// One `registry package from to` row per line, or JSON lines.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "json")]
    output: Format,
    /// Use fixtures instead of registries and GitHub; repositories must be in the cache.
    #[arg(long, requires_all = ["registry_fixtures", "metadata_fixture", "review_fixture"])]
    offline: bool,
    #[arg(long)]
    registry_fixtures: Option<PathBuf>,
    #[arg(long)]
    metadata_fixture: Option<PathBuf>,
    #[arg(long)]
    review_fixture: Option<PathBuf>,
    /// Repository clones and review metadata are kept here.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Leave `generated_at` empty so reports are byte-reproducible.
    #[arg(long)]
    no_timestamp: bool,
    /// Minimum share of registry paths a PyPI package directory must match.
    #[arg(long, default_value_t = update_audit::locate::DEFAULT_PYPI_MATCH_THRESHOLD)]
    pypi_threshold: f64,
    /// Pull request labels accepted as Prow approval (repeatable).
    #[arg(long = "prow-label")]
    prow_labels: Vec<String>,
}

fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os("XDG_CACHE_HOME").filter(|d| !d.is_empty()) {
        return PathBuf::from(dir).join("update-audit");
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".cache").join("update-audit"),
        None => PathBuf::from(".update-audit-cache"),
    }
}

fn usage(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_USAGE)
}

impl Common {
    fn providers(&self) -> Result<Providers, String> {
        let cache_dir = self.cache_dir.clone().unwrap_or_else(default_cache_dir);
        if self.offline {
            let (Some(reg), Some(meta), Some(rev)) = (&self.registry_fixtures, &self.metadata_fixture, &self.review_fixture) else {
                return Err("--offline needs --registry-fixtures, --metadata-fixture and --review-fixture".into());
            };
            return Ok(Providers {
                archives: Arc::new(FixtureStore::open(reg).map_err(|e| e.to_string())?),
                metadata: Arc::new(MetadataFixture::load(meta).map_err(|e| e.to_string())?),
                reviews: Arc::new(ReviewFixture::load(rev).map_err(|e| e.to_string())?),
                cache_dir,
                allow_network: false,
            });
        }
        let live = Arc::new(LiveRegistry::new().map_err(|e| e.to_string())?);
        let github = GitHubProvider::from_env().map_err(|e| e.to_string())?;
        Ok(Providers {
            archives: live.clone(),
            metadata: live,
            reviews: Arc::new(CachedProvider::new(github, &cache_dir)),
            cache_dir,
            allow_network: true,
        })
    }

    fn options(&self) -> Result<AuditOptions, String> {
        if !(0.0..=1.0).contains(&self.pypi_threshold) {
            return Err(format!("--pypi-threshold must be within [0, 1], got {}", self.pypi_threshold));
        }
        let mut options = AuditOptions { pypi_match_threshold: self.pypi_threshold, timestamp: !self.no_timestamp, ..AuditOptions::default() };
        if !self.prow_labels.is_empty() {
            options.review_policy.prow_labels = self.prow_labels.clone();
        }
        Ok(options)
    }

    fn setup(&self) -> Result<(Providers, AuditOptions), String> {
        if self.workers == 0 {
            return Err("--workers must be at least 1".into());
        }
        Ok((self.providers()?, self.options()?))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Audit { registry, package, from, to, common } => {
            let coords = match UpdateCoordinates::new(registry, package, from, to) {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            let (providers, options) = match common.setup() {
                Ok(p) => p,
                Err(e) => return usage(e),
            };
            let _ = report::configure_threads(common.workers);
            let r = report::audit(&coords, &providers, &options);
            print!("{}", report::render(&r, common.output));
            if r.is_ok() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILED) }
        }
        Command::Batch { input, common } => {
            let text = match std::fs::read_to_string(&input) {
                Ok(t) => t,
                Err(e) => return usage(format!("{}: {e}", input.display())),
            };
            let rows = match report::parse_batch_input(&text) {
                Ok(r) => r,
                Err(e) => return usage(e),
            };
            let (providers, options) = match common.setup() {
                Ok(p) => p,
                Err(e) => return usage(e),
            };
            let b = report::batch(&rows, &providers, &options, common.workers);
            print!("{}", report::render_batch(&b, common.output));
            if b.failed() == 0 { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILED) }
        }
    }
}
