//! Acceptance suite: one pass/fail line per criterion, exact tolerances.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use update_audit::locate::{locate_package_directory, map_registry_path, MetadataFixture, RepoContext};
use update_audit::registry::{fetch_artifact, line_diff, FixtureStore};
use update_audit::release::resolve_release_commit;
use update_audit::report::{audit_with_delta, batch, AuditOptions, Providers};
use update_audit::review::{classify_commit, ReviewCheck, ReviewFixture, ReviewPolicy};
use update_audit::{AuditReport, CodeDelta, GitRepo, Registry, UpdateCoordinates};
use update_audit_testkit::{
    files, multiset_diff, pull_request, random_history, replay_delta, review_record, Files, FixtureRepo, Format, RandomHistory,
    ReplayLine, World,
};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn providers(world: &World) -> Providers {
    Providers {
        archives: Arc::new(FixtureStore::open(&world.store).expect("store")),
        metadata: Arc::new(MetadataFixture::load(&world.metadata_path).expect("metadata")),
        reviews: Arc::new(ReviewFixture::load(&world.reviews_path).expect("reviews")),
        cache_dir: world.cache.clone(),
        allow_network: false,
    }
}

fn options() -> AuditOptions {
    AuditOptions { timestamp: false, ..AuditOptions::default() }
}

fn coords(package: &str, from: &str, to: &str) -> UpdateCoordinates {
    UpdateCoordinates::new(Registry::CratesIo, package, from, to).expect("coordinates")
}

fn run_audit(world: &World, package: &str, from: &str, to: &str) -> Result<(AuditReport, CodeDelta), String> {
    let (report, delta) = audit_with_delta(&coords(package, from, to), &providers(world), &options());
    if !report.is_ok() {
        return Err(format!("{package} {from}->{to} failed: {:?}", report.outcome));
    }
    Ok((report, delta.expect("delta of an ok audit")))
}

/// Sum of added and removed lines over the shipped files of both versions.
fn registry_diff(x: &Files, y: &Files) -> (Vec<String>, Vec<String>) {
    let paths: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
    let (mut added, mut removed) = (Vec::new(), Vec::new());
    for p in paths {
        let (a, r) = multiset_diff(x.get(p).map_or(&[][..], |v| v), y.get(p).map_or(&[][..], |v| v));
        added.extend(a);
        removed.extend(r);
    }
    added.sort();
    removed.sort();
    (added, removed)
}

fn sorted_contents<'a>(lines: impl Iterator<Item = &'a update_audit::delta::DeltaLine>) -> Vec<String> {
    let mut v: Vec<String> = lines.map(|l| l.line_content.clone()).collect();
    v.sort();
    v
}

struct Fixture<'a> {
    name: &'static str,
    repo: &'a FixtureRepo,
    directory: String,
    c_a: String,
    c_y: String,
    delta: CodeDelta,
}

/// Criterion 1 corpus, reused by criterion 5.
struct Corpus {
    _world: World,
    histories: Vec<(RandomHistory, FixtureRepo, CodeDelta)>,
}

fn history_shape(seed: u64) -> (String, String, usize) {
    let name = format!("pkg{seed}");
    let dir = match seed % 3 {
        0 => String::new(),
        1 => name.clone(),
        _ => format!("crates/{name}"),
    };
    (name, dir, 5 + (seed as usize * 37) % 46)
}

fn build_corpus() -> Result<(Corpus, Duration, String), String> {
    let start = Instant::now();
    let mut world = World::new();
    let mut built = Vec::new();
    for seed in 0..20u64 {
        let (name, dir, n) = history_shape(seed);
        let mut repo = world.repo("acme", &name);
        let h = random_history(seed, &mut repo, &dir, &name, n);
        let fx = repo.files_at(&h.c_x, &dir);
        let fy = repo.files_at(&h.c_y, &dir);
        world.publish(Format::Crate, &name, &h.version_x, &fx);
        world.publish(Format::Crate, &name, &h.version_y, &fy);
        world.list_repository("crates-io", &name, Some(&World::repo_url("acme", &name)));
        for c in &h.commits {
            world.unreviewed(c, "dev");
        }
        built.push((h, repo, fx, fy));
    }
    let mut histories = Vec::new();
    let mut commit_counts = Vec::new();
    for (h, repo, fx, fy) in built {
        let (report, delta) = run_audit(&world, &h.package, &h.version_x, &h.version_y)?;
        let phantom = report.phantom.as_ref().expect("phantom report");
        ensure(phantom.phantom_files.is_empty(), || format!("{}: phantom files {:?}", h.package, phantom.phantom_files))?;
        ensure(phantom.phantom_lines.is_empty(), || format!("{}: phantom lines {:?}", h.package, phantom.phantom_lines))?;
        let (added, removed) = registry_diff(&fx, &fy);
        let crc_total = report.crc.as_ref().expect("crc").total_delta_lines;
        ensure(crc_total == added.len() + removed.len(), || {
            format!("{}: CRC total {crc_total} vs registry diff {}", h.package, added.len() + removed.len())
        })?;
        ensure(sorted_contents(delta.added.iter()) == added && sorted_contents(delta.removed.iter()) == removed, || {
            format!("{}: delta contents differ from the registry diff", h.package)
        })?;
        commit_counts.push(h.commits.len());
        histories.push((h, repo, delta));
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "20 repos, {}-{} commits, {:.1}s",
        commit_counts.iter().min().unwrap_or(&0),
        commit_counts.iter().max().unwrap_or(&0),
        elapsed.as_secs_f64()
    );
    Ok((Corpus { _world: world, histories }, elapsed, detail))
}

fn criterion_1(corpus: &Result<(Corpus, Duration, String), String>) -> Verdict {
    let (_, elapsed, detail) = corpus.as_ref().map_err(Clone::clone)?;
    ensure(*elapsed <= Duration::from_secs(60), || format!("runtime {:.1}s exceeds 60s", elapsed.as_secs_f64()))?;
    Ok(detail.clone())
}

fn criterion_2() -> Verdict {
    let world = RefCell::new(World::new());
    let mut repo = world.borrow().repo("acme", "inject");
    let h = random_history(4242, &mut repo, "inject", "inject", 10);
    let fx = repo.files_at(&h.c_x, "inject");
    let fy = repo.files_at(&h.c_y, "inject");
    {
        let mut w = world.borrow_mut();
        w.publish(Format::Crate, "inject", "1.0.0", &fx);
        w.list_repository("crates-io", "inject", Some(&World::repo_url("acme", "inject")));
        for c in &h.commits {
            w.unreviewed(c, "dev");
        }
    }
    let text_files: Vec<String> = fy.keys().filter(|p| p.as_str() != "Cargo.toml").cloned().collect();
    let case = RefCell::new(0usize);
    let mut runner = TestRunner::new(Config { cases: 24, failure_persistence: None, ..Config::default() });
    let strategy = (0usize..4, 0usize..6, proptest::collection::vec(any::<prop::sample::Index>(), 6));
    let result = runner.run(&strategy, |(f, k, targets)| {
        let n = {
            let mut c = case.borrow_mut();
            *c += 1;
            *c
        };
        let version = format!("2.0.{n}");
        repo.tag_at(&format!("v{version}"), &h.c_y);
        let mut shipped = fy.clone();
        let injected_files: BTreeSet<String> = (0..f).map(|i| format!("extra/payload_{n}_{i}.rs")).collect();
        for p in &injected_files {
            shipped.insert(p.clone(), format!("fn payload_{n}() {{}}\n").into_bytes());
        }
        let mut injected_lines = Vec::new();
        let mut touched = BTreeSet::new();
        for (j, idx) in targets.iter().take(k).enumerate() {
            let path = idx.get(&text_files).clone();
            let line = format!("injected_{n}_{j}();");
            shipped.get_mut(&path).expect("shipped file").extend_from_slice(format!("{line}\n").as_bytes());
            injected_lines.push(line);
            touched.insert(path);
        }
        world.borrow_mut().publish(Format::Crate, "inject", &version, &shipped);
        let (report, _) = run_audit(&world.borrow(), "inject", "1.0.0", &version).map_err(TestCaseError::fail)?;
        let phantom = report.phantom.expect("phantom report");
        let found: BTreeSet<String> = phantom.phantom_files.iter().map(|e| e.registry_path.clone()).collect();
        prop_assert_eq!(&found, &injected_files);
        prop_assert_eq!(phantom.counts.phantom_files, f);
        prop_assert_eq!(phantom.counts.added_phantom_lines, k);
        let mut found_lines: Vec<String> = phantom.phantom_lines.values().flat_map(|l| l.added.clone()).collect();
        found_lines.sort();
        injected_lines.sort();
        prop_assert_eq!(found_lines, injected_lines);
        prop_assert!(phantom.phantom_lines.values().all(|l| l.removed.is_empty()));
        let line_files: BTreeSet<String> = phantom.phantom_lines.keys().cloned().collect();
        prop_assert_eq!(line_files, touched);
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok(format!("{} randomized injections", case.borrow()))
}

fn fig2b_fixture(world: &mut World) -> (FixtureRepo, BTreeMap<&'static str, String>) {
    let mut repo = world.repo("acme", "branchy");
    let mut c = BTreeMap::new();
    repo.write("Cargo.toml", "[package]\nname = \"branchy\"\n");
    repo.write("src/lib.rs", "alpha();\nbeta();\ngamma();\n");
    c.insert("M", repo.commit("base"));
    repo.branch("release-1.x");
    repo.append("src/lib.rs", "hotfix_on_branch_only();\n");
    c.insert("H", repo.commit("hotfix on the release branch"));
    repo.tag("v1.0.0");
    repo.checkout("main");
    repo.write("src/lib.rs", "alpha();\nbeta_two();\ngamma();\n");
    c.insert("B", repo.commit("rework beta"));
    repo.append("src/lib.rs", "delta();\n");
    c.insert("C", repo.commit("add delta"));
    repo.tag("v2.0.0");
    for v in ["1.0.0", "2.0.0"] {
        world.publish(Format::Crate, "branchy", v, &repo.files_at(&format!("v{v}"), ""));
    }
    world.list_repository("crates-io", "branchy", Some(&World::repo_url("acme", "branchy")));
    for commit in c.values() {
        world.unreviewed(commit, "dev");
    }
    (repo, c)
}

fn criterion_3(world: &World, repo: &FixtureRepo, commits: &BTreeMap<&str, String>) -> Result<(String, CodeDelta), String> {
    let store = FixtureStore::open(&world.store).map_err(|e| e.to_string())?;
    let x = fetch_artifact(&coords("branchy", "1.0.0", "2.0.0").current(), &store).map_err(|e| e.to_string())?;
    let y = fetch_artifact(&coords("branchy", "1.0.0", "2.0.0").update(), &store).map_err(|e| e.to_string())?;
    let diff = line_diff(x.content("src/lib.rs").unwrap_or_default(), y.content("src/lib.rs").unwrap_or_default());
    let branch_line = "hotfix_on_branch_only();".to_string();
    ensure(diff.removed.contains(&branch_line), || format!("registry diff lacks the branch line: {diff:?}"))?;
    let (report, delta) = run_audit(world, "branchy", "1.0.0", "2.0.0")?;
    let release = report.release.expect("release info");
    ensure(release.c_a.as_ref().map(|c| c.as_str()) == Some(commits["M"].as_str()), || "c_a is not the fork point".into())?;
    ensure(delta.lines().all(|l| l.line_content != branch_line), || "branch-only line leaked into the code delta".into())?;
    let range: BTreeSet<String> = repo.rev_list(&["v1.0.0..v2.0.0"]).into_iter().collect();
    let bound: BTreeSet<String> = delta.commits().iter().map(|c| c.to_string()).collect();
    ensure(!bound.is_empty() && bound.is_subset(&range), || format!("bound commits {bound:?} outside {range:?}"))?;
    Ok((format!("{} delta lines bound to {} range commits", delta.total_lines(), bound.len()), delta))
}

fn revert_fixture(world: &mut World) -> (FixtureRepo, BTreeMap<&'static str, String>) {
    let mut repo = world.repo("acme", "revert");
    let mut c = BTreeMap::new();
    repo.write("Cargo.toml", "[package]\nname = \"revert\"\n");
    repo.write("src/lib.rs", "a();\nb();\nc();\n");
    c.insert("X", repo.commit("release"));
    repo.tag("v1.0.0");
    repo.write("src/lib.rs", "a();\nb_modified();\nc();\n");
    c.insert("M1", repo.commit("modify b"));
    repo.write("src/lib.rs", "a();\nb();\nc();\n");
    c.insert("M2", repo.commit("revert modify b"));
    repo.append("src/lib.rs", "d();\n");
    c.insert("M3", repo.commit("add d"));
    repo.tag("v2.0.0");
    for v in ["1.0.0", "2.0.0"] {
        world.publish(Format::Crate, "revert", v, &repo.files_at(&format!("v{v}"), ""));
    }
    world.list_repository("crates-io", "revert", Some(&World::repo_url("acme", "revert")));
    for commit in c.values() {
        world.unreviewed(commit, "dev");
    }
    (repo, c)
}

fn criterion_4(world: &World, repo: &FixtureRepo, commits: &BTreeMap<&str, String>) -> Result<(String, CodeDelta), String> {
    let (added, removed) = registry_diff(&repo.files_at("v1.0.0", ""), &repo.files_at("v2.0.0", ""));
    let diff_len = added.len() + removed.len();
    let (_, delta) = run_audit(world, "revert", "1.0.0", "2.0.0")?;
    ensure(delta.total_lines() > diff_len, || format!("|delta| {} is not above |diff| {diff_len}", delta.total_lines()))?;
    let bound: BTreeSet<String> = delta.commits().iter().map(|c| c.to_string()).collect();
    ensure(bound.contains(&commits["M1"]) && bound.contains(&commits["M2"]), || {
        format!("modification and reversion not both bound: {bound:?}")
    })?;
    Ok((format!("|delta| = {} > |registry diff| = {diff_len}", delta.total_lines()), delta))
}

fn as_replay(lines: &[update_audit::delta::DeltaLine]) -> Vec<ReplayLine> {
    let mut v: Vec<ReplayLine> = lines
        .iter()
        .map(|l| ReplayLine {
            path: l.path.clone(),
            line_number: l.line_number,
            content: l.line_content.clone(),
            commit: l.commit.to_string(),
        })
        .collect();
    v.sort();
    v
}

fn criterion_5(fixtures: &[Fixture<'_>]) -> Verdict {
    let mut lines = 0;
    for fx in fixtures {
        let mut paths: BTreeSet<String> = BTreeSet::new();
        for rev in [&fx.c_a, &fx.c_y] {
            for p in fx.repo.files_at(rev, &fx.directory).into_keys() {
                paths.insert(if fx.directory.is_empty() { p } else { format!("{}/{p}", fx.directory) });
            }
        }
        let oracle = replay_delta(fx.repo, &fx.c_a, &fx.c_y, &paths.into_iter().collect::<Vec<_>>());
        let (added, removed) = (as_replay(&fx.delta.added), as_replay(&fx.delta.removed));
        ensure(added == oracle.added, || format!("{}: added lines differ from the replay oracle", fx.name))?;
        ensure(removed == oracle.removed, || format!("{}: removed lines differ from the replay oracle", fx.name))?;
        lines += added.len() + removed.len();
    }
    Ok(format!("{} fixtures, {lines} lines identical", fixtures.len()))
}

fn criterion_6() -> Verdict {
    let mut world = World::new();
    let sha = |n: u32| format!("{n:040x}");
    let cases: Vec<(&str, serde_json::Value, Option<ReviewCheck>)> = vec![
        (
            "approved pull request",
            review_record(&sha(1), "alice", "alice", "feature", vec![pull_request(1, "alice", Some("alice"), &[&sha(1)], &[("bob", "APPROVED")], &[])]),
            Some(ReviewCheck::GithubReview),
        ),
        ("unreviewed direct push", review_record(&sha(2), "alice", "alice", "push", vec![]), None),
        (
            "opener differs from merger",
            review_record(&sha(3), "alice", "alice", "feature", vec![pull_request(3, "alice", Some("bob"), &[&sha(3)], &[], &[])]),
            Some(ReviewCheck::DifferentMerger),
        ),
        (
            "bot opened, human merged",
            review_record(
                &sha(4),
                "dependabot[bot]",
                "web-flow",
                "Bump serde",
                vec![pull_request(4, "dependabot[bot]", Some("carol"), &[&sha(4)], &[], &[])],
            ),
            Some(ReviewCheck::DifferentMerger),
        ),
        (
            "bot opened, bot merged",
            review_record(
                &sha(5),
                "dependabot[bot]",
                "dependabot[bot]",
                "Bump serde",
                vec![pull_request(5, "dependabot[bot]", Some("mergify[bot]"), &[&sha(5)], &[], &[])],
            ),
            None,
        ),
        ("author differs from committer", review_record(&sha(6), "alice", "bob", "fix", vec![]), Some(ReviewCheck::DifferentCommitter)),
        (
            "web merge committer",
            review_record(&sha(7), "alice", "web-flow", "fix", vec![pull_request(7, "alice", Some("alice"), &[&sha(7)], &[], &[])]),
            None,
        ),
        (
            "gerrit trailers",
            review_record(
                &sha(8),
                "alice",
                "alice",
                "Fix parser\n\nReviewed-on: https://review.example.org/c/1234\nReviewed-by: Dana <dana@example.org>\n",
                vec![],
            ),
            Some(ReviewCheck::ThirdPartyTool),
        ),
        (
            "prow labels",
            review_record(
                &sha(9),
                "alice",
                "alice",
                "fix",
                vec![pull_request(9, "alice", Some("alice"), &[&sha(9)], &[], &["lgtm", "approved"])],
            ),
            Some(ReviewCheck::ThirdPartyTool),
        ),
    ];
    for (_, record, _) in &cases {
        world.add_review(record.clone());
    }
    let provider = ReviewFixture::load(&world.reviews_path).map_err(|e| e.to_string())?;
    let policy = ReviewPolicy::default();
    let mut correct = 0;
    let mut wrong = Vec::new();
    for (i, (name, _, expected)) in cases.iter().enumerate() {
        let commit = update_audit::CommitId::new(&sha(i as u32 + 1)).expect("sha");
        let v = classify_commit("https://github.com/acme/review", &commit, &provider, &policy).map_err(|e| e.to_string())?;
        if v.reviewed == expected.is_some() && v.satisfied_check == *expected {
            correct += 1;
        } else {
            wrong.push(format!("{name}: got {:?}", v.satisfied_check));
        }
    }
    ensure(wrong.is_empty(), || format!("{correct}/9 correct; {}", wrong.join("; ")))?;
    Ok(format!("{correct}/9 cases"))
}

fn criterion_7() -> Verdict {
    let mut world = World::new();
    let mut repo = world.repo("acme", "coverage");
    repo.write("coverage/Cargo.toml", "[package]\nname = \"coverage\"\n");
    let base: String = (1..=5).map(|i| format!("base_{i}();\n")).collect();
    repo.write("coverage/src/lib.rs", &base);
    let x = repo.commit("release 1.0.0");
    repo.tag("v1.0.0");
    repo.append("coverage/src/lib.rs", (1..=10).map(|i| format!("reviewed_{i}();\n")).collect::<String>());
    let r = repo.commit("reviewed change");
    repo.append("coverage/src/lib.rs", (1..=30).map(|i| format!("unreviewed_{i}();\n")).collect::<String>());
    let u = repo.commit("unreviewed change");
    repo.tag("v2.0.0");
    repo.write(".github/ci.yml", "jobs: {}\n");
    let z = repo.commit("ci only");
    repo.tag("v2.1.0");
    for v in ["1.0.0", "2.0.0", "2.1.0"] {
        world.publish(Format::Crate, "coverage", v, &repo.files_at(&format!("v{v}"), "coverage"));
    }
    world.list_repository("crates-io", "coverage", Some(&World::repo_url("acme", "coverage")));
    world.unreviewed(&x, "dev");
    world.reviewed(&r, "dev", "reviewer");
    world.unreviewed(&u, "dev");
    world.unreviewed(&z, "dev");

    let (report, _) = run_audit(&world, "coverage", "1.0.0", "2.0.0")?;
    let crc = report.crc.expect("crc");
    ensure(crc.coverage == Some(0.25), || format!("coverage {:?}, expected 0.25", crc.coverage))?;
    ensure((crc.reviewed_delta_lines, crc.total_delta_lines) == (10, 40), || {
        format!("{}/{} lines", crc.reviewed_delta_lines, crc.total_delta_lines)
    })?;
    let (zero, _) = run_audit(&world, "coverage", "2.0.0", "2.1.0")?;
    let zero_crc = zero.crc.expect("crc");
    ensure(zero_crc.coverage.is_none() && zero_crc.zero_delta, || format!("zero-delta update gave {:?}", zero_crc.coverage))?;
    let rows = [coords("coverage", "1.0.0", "2.0.0"), coords("coverage", "2.0.0", "2.1.0")];
    let b = batch(&rows, &providers(&world), &options(), 2);
    let summary = b.summary.ok_or("no batch summary")?;
    let s = summary.crc_summary().map_err(|e| e.to_string())?;
    ensure(s.updates == 1 && s.zero_delta_excluded == 1 && s.median_coverage == 0.25, || {
        format!("batch medians include the zero-delta update: {s:?}")
    })?;
    Ok("coverage 0.25 exactly; zero-delta undefined and excluded".into())
}

fn criterion_8() -> Verdict {
    let mut world = World::new();
    let mut repo = world.repo("tokio-rs", "tokio");
    for member in ["tokio", "tokio-macros", "tokio-util", "tokio-stream"] {
        repo.write(&format!("{member}/Cargo.toml"), format!("[package]\nname = \"{member}\"\n"));
        repo.write(&format!("{member}/CHANGELOG.md"), format!("# {member}\n"));
        repo.write(&format!("{member}/src/lib.rs"), format!("//! {member}\n"));
    }
    repo.write("Cargo.toml", "[workspace]\nmembers = [\"tokio\", \"tokio-macros\", \"tokio-util\", \"tokio-stream\"]\n");
    repo.commit("workspace");
    repo.tag("tokio-1.8.4");
    world.publish(Format::Crate, "tokio", "1.8.4", &repo.files_at("tokio-1.8.4", "tokio"));
    let store = FixtureStore::open(&world.store).map_err(|e| e.to_string())?;
    let c = coords("tokio", "1.8.3", "1.8.4");
    let artifact = fetch_artifact(&c.update(), &store).map_err(|e| e.to_string())?;
    let git = GitRepo::open(repo.root()).map_err(|e| e.to_string())?;
    let c_y = resolve_release_commit(&git.list_tags().map_err(|e| e.to_string())?, "tokio", "1.8.4").map_err(|e| e.to_string())?;
    let dir = locate_package_directory(&git, "tokio", &artifact, &c_y, 0.5).map_err(|e| e.to_string())?;
    ensure(dir.directory == "tokio", || format!("package directory {:?}", dir.directory))?;
    let ctx = RepoContext {
        repo_url: World::repo_url("tokio-rs", "tokio"),
        repo: git,
        package_directory: dir.directory,
        match_fraction: dir.match_fraction,
    };
    let mapped = map_registry_path(&ctx, "CHANGELOG.md", &c_y).map_err(|e| e.to_string())?;
    ensure(mapped == "tokio/CHANGELOG.md", || format!("mapped to {mapped:?}"))?;
    Ok("\"tokio\" + \"CHANGELOG.md\" -> \"tokio/CHANGELOG.md\"".into())
}

/// Fixture set for the CLI criteria: one clean update and three failures.
fn cli_world() -> World {
    let mut world = World::new();
    let mut good = world.repo("acme", "good");
    let h = random_history(99, &mut good, "", "good", 8);
    for (v, c) in [(&h.version_x, &h.c_x), (&h.version_y, &h.c_y)] {
        world.publish(Format::Crate, "good", v, &good.files_at(c, ""));
    }
    world.list_repository("crates-io", "good", Some(&World::repo_url("acme", "good")));
    for c in &h.commits {
        world.reviewed(c, "dev", "reviewer");
    }

    let mut tagless = world.repo("acme", "tagless");
    let shipped = files([("Cargo.toml", "[package]\nname = \"tagless\"\n"), ("src/lib.rs", "fn f() {}\n")]);
    for (p, c) in &shipped {
        tagless.write(p, c);
    }
    tagless.commit("untagged");
    for (package, repository) in [
        ("tagless", Some(World::repo_url("acme", "tagless"))),
        ("badmeta", Some("not a repository url".to_string())),
        ("gitlabbed", Some("https://gitlab.com/acme/gitlabbed".to_string())),
    ] {
        for v in ["1.0.0", "2.0.0"] {
            world.publish(Format::Crate, package, v, &shipped);
        }
        world.list_repository("crates-io", package, repository.as_deref());
    }
    world
}

fn cli(world: &World, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_update-audit"));
    cmd.args(args)
        .args(["--offline", "--no-timestamp", "--output", "json"])
        .arg("--registry-fixtures")
        .arg(&world.store)
        .arg("--metadata-fixture")
        .arg(&world.metadata_path)
        .arg("--review-fixture")
        .arg(&world.reviews_path)
        .arg("--cache-dir")
        .arg(&world.cache)
        .env_remove("GITHUB_TOKEN");
    cmd.output().expect("run cli")
}

fn cli_audit(world: &World, package: &str) -> Output {
    cli(world, &["audit", "--registry", "crates-io", "--package", package, "--from", "1.0.0", "--to", "2.0.0"])
}

fn json(out: &Output) -> Result<serde_json::Value, String> {
    serde_json::from_slice(&out.stdout).map_err(|e| format!("unparsable output ({e}): {}", String::from_utf8_lossy(&out.stderr)))
}

fn write_batch(dir: &Path, packages: &[&str]) -> String {
    let path = dir.join(format!("batch-{}.tsv", packages.join("-")));
    let rows: String = packages.iter().map(|p| format!("crates-io\t{p}\t1.0.0\t2.0.0\n")).collect();
    std::fs::write(&path, rows).expect("write batch input");
    path.to_string_lossy().into_owned()
}

fn criterion_9(world: &World, scratch: &Path) -> Verdict {
    for (package, reason) in [
        ("tagless", "no-release-tag"),
        ("badmeta", "repository-not-found-or-invalid"),
        ("gitlabbed", "not-github-hosted"),
    ] {
        let out = cli_audit(world, package);
        ensure(out.status.code() == Some(1), || format!("{package}: exit code {:?}", out.status.code()))?;
        let v = json(&out)?;
        ensure(v["outcome"]["reason"] == reason, || format!("{package}: reason {}", v["outcome"]["reason"]))?;
    }
    let solo = cli_audit(world, "good");
    ensure(solo.status.code() == Some(0), || format!("clean update exit code {:?}", solo.status.code()))?;
    let solo = json(&solo)?;

    let input = write_batch(scratch, &["tagless", "good", "badmeta", "gitlabbed"]);
    let out = cli(world, &["batch", "--input", &input]);
    ensure(out.status.code() == Some(1), || format!("batch exit code {:?}", out.status.code()))?;
    let v = json(&out)?;
    let reports = v["reports"].as_array().ok_or("batch output has no reports")?;
    let reasons: Vec<&serde_json::Value> = reports.iter().map(|r| &r["outcome"]["reason"]).collect();
    let expected = ["no-release-tag", "", "repository-not-found-or-invalid", "not-github-hosted"];
    for (got, want) in reasons.iter().zip(expected) {
        ensure(if want.is_empty() { got.is_null() } else { **got == want }, || format!("batch reasons {reasons:?}"))?;
    }
    ensure(reports[1] == solo, || "the clean row's report changed inside a failing batch".into())?;
    ensure(v["summary"]["crc"]["updates"] == 1, || format!("summary not over the clean row: {}", v["summary"]))?;
    Ok("3 reason codes, exit 1, clean row unaffected in batch".into())
}

fn criterion_10(world: &World, scratch: &Path) -> Verdict {
    let input = write_batch(scratch, &["good", "tagless", "gitlabbed"]);
    let runs: Vec<Vec<u8>> = [["--workers", "1"], ["--workers", "4"]]
        .iter()
        .map(|w| {
            let mut args = vec!["batch", "--input", input.as_str()];
            args.extend_from_slice(w);
            cli(world, &args).stdout
        })
        .collect();
    ensure(!runs[0].is_empty() && runs[0] == runs[1], || "batch reports differ between runs".into())?;
    let (a, b) = (cli_audit(world, "good").stdout, cli_audit(world, "good").stdout);
    ensure(!a.is_empty() && a == b, || "audit reports differ between runs".into())?;
    Ok(format!("batch {} bytes and audit {} bytes identical", runs[0].len(), a.len()))
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();

    let corpus = build_corpus();
    results.push((1, "clean-release soundness", criterion_1(&corpus)));
    results.push((2, "phantom injection locality", criterion_2()));

    let mut world = World::new();
    let (fig_repo, fig_commits) = fig2b_fixture(&mut world);
    let (revert_repo, revert_commits) = revert_fixture(&mut world);
    let fig = criterion_3(&world, &fig_repo, &fig_commits);
    results.push((3, "branch semantics", fig.as_ref().map(|r| r.0.clone()).map_err(Clone::clone)));
    let revert = criterion_4(&world, &revert_repo, &revert_commits);
    results.push((4, "revert superset", revert.as_ref().map(|r| r.0.clone()).map_err(Clone::clone)));

    let mut fixtures = Vec::new();
    if let (Ok((_, fig_delta)), Ok((_, revert_delta))) = (fig, revert) {
        fixtures.push(Fixture {
            name: "branchy",
            c_a: fig_commits["M"].clone(),
            c_y: fig_repo.rev_parse("v2.0.0"),
            repo: &fig_repo,
            directory: String::new(),
            delta: fig_delta,
        });
        fixtures.push(Fixture {
            name: "revert",
            c_a: revert_commits["X"].clone(),
            c_y: revert_repo.rev_parse("v2.0.0"),
            repo: &revert_repo,
            directory: String::new(),
            delta: revert_delta,
        });
    }
    let c5 = match &corpus {
        Ok((corpus, _, _)) if fixtures.len() == 2 => {
            let mut all: Vec<Fixture> = corpus
                .histories
                .iter()
                .map(|(h, repo, delta)| Fixture {
                    name: "random",
                    repo,
                    directory: h.directory.clone(),
                    c_a: h.c_x.clone(),
                    c_y: h.c_y.clone(),
                    delta: delta.clone(),
                })
                .collect();
            all.append(&mut fixtures);
            criterion_5(&all)
        }
        _ => Err("prerequisite fixtures failed".into()),
    };
    results.push((5, "delta oracle equivalence", c5));
    results.push((6, "review-check matrix", criterion_6()));
    results.push((7, "CRC arithmetic", criterion_7()));
    results.push((8, "path mapping", criterion_8()));

    let cli_fixtures = cli_world();
    let scratch = tempfile::tempdir().expect("scratch dir");
    results.push((9, "failure taxonomy", criterion_9(&cli_fixtures, scratch.path())));
    results.push((10, "determinism", criterion_10(&cli_fixtures, scratch.path())));

    let mut failed = 0;
    for (n, name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
