#![allow(dead_code)]

use std::sync::Arc;

use update_audit::locate::MetadataFixture;
use update_audit::registry::FixtureStore;
use update_audit::report::{audit_with_delta, AuditOptions, Providers};
use update_audit::review::ReviewFixture;
use update_audit::{audit, AuditReport, CodeDelta, Registry, UpdateCoordinates};
use update_audit_testkit::{Format, RandomHistory, World};

pub fn providers(world: &World) -> Providers {
    Providers {
        archives: Arc::new(FixtureStore::open(&world.store).unwrap()),
        metadata: Arc::new(MetadataFixture::load(&world.metadata_path).unwrap()),
        reviews: Arc::new(ReviewFixture::load(&world.reviews_path).unwrap()),
        cache_dir: world.cache.clone(),
        allow_network: false,
    }
}

pub fn options() -> AuditOptions {
    AuditOptions { timestamp: false, ..AuditOptions::default() }
}

pub fn run(world: &World, registry: Registry, package: &str, from: &str, to: &str) -> AuditReport {
    let coords = UpdateCoordinates::new(registry, package, from, to).unwrap();
    audit(&coords, &providers(world), &options())
}

/// An audit that must succeed, with its line-level delta.
pub fn run_ok(world: &World, registry: Registry, package: &str, from: &str, to: &str) -> (AuditReport, CodeDelta) {
    let coords = UpdateCoordinates::new(registry, package, from, to).unwrap();
    let (report, delta) = audit_with_delta(&coords, &providers(world), &options());
    assert!(report.is_ok(), "{:?}", report.outcome);
    (report, delta.unwrap())
}

/// Publish both releases of a random history as crates, taken verbatim from
/// the tagged trees, and record every commit as unreviewed.
pub fn publish_history(world: &mut World, owner: &str, name: &str, h: &RandomHistory) {
    let repo = update_audit_testkit::FixtureRepo::init(world.cache.join("github.com").join(owner).join(name));
    for (version, commit) in [(&h.version_x, &h.c_x), (&h.version_y, &h.c_y)] {
        world.publish(Format::Crate, &h.package, version, &repo.files_at(commit, &h.directory));
    }
    world.list_repository("crates-io", &h.package, Some(&World::repo_url(owner, name)));
    for c in &h.commits {
        world.unreviewed(c, "dev");
    }
}
