//! Seeded random linear histories.
//!
//! Every line ever written carries a unique counter, so a line's content
//! identifies the commit that introduced it and LCS alignments are unique.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::repo::FixtureRepo;

const WORDS: [&str; 8] = ["let", "fn", "match", "return", "struct", "impl", "use", "const"];

#[derive(Debug, Clone)]
pub struct RandomHistory {
    pub package: String,
    pub directory: String,
    pub version_x: String,
    pub version_y: String,
    pub c_x: String,
    pub c_y: String,
    /// All commits, oldest first.
    pub commits: Vec<String>,
}

struct Generator {
    rng: ChaCha8Rng,
    counter: usize,
    files: BTreeMap<String, Vec<String>>,
}

impl Generator {
    fn line(&mut self) -> String {
        self.counter += 1;
        let word = WORDS.choose(&mut self.rng).expect("non-empty");
        format!("{word} item_{} = {};", self.counter, self.rng.gen_range(0..1000))
    }

    fn lines(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.line()).collect()
    }

    fn pick(&mut self) -> String {
        let keys: Vec<&String> = self.files.keys().collect();
        keys.choose(&mut self.rng).expect("at least one file").to_string()
    }

    fn new_file(&mut self) {
        self.counter += 1;
        let name = format!("src/mod_{}.rs", self.counter);
        let n = self.rng.gen_range(2..=6);
        let body = self.lines(n);
        self.files.insert(name, body);
    }

    fn mutate(&mut self, repo_only: bool) -> bool {
        match self.rng.gen_range(0..6) {
            0 => {
                let f = self.pick();
                let n = self.rng.gen_range(1..=4);
                let new = self.lines(n);
                let body = self.files.get_mut(&f).expect("picked");
                let at = self.rng.gen_range(0..=body.len());
                body.splice(at..at, new);
            }
            1 | 2 => {
                let f = self.pick();
                let replace = self.rng.gen_bool(0.5);
                let fresh = self.line();
                let body = self.files.get_mut(&f).expect("picked");
                if body.len() > 1 {
                    let at = self.rng.gen_range(0..body.len());
                    if replace {
                        body[at] = fresh;
                    } else {
                        body.remove(at);
                    }
                }
            }
            3 => self.new_file(),
            4 if self.files.len() > 1 => {
                let f = self.pick();
                self.files.remove(&f);
            }
            5 if repo_only => return true,
            _ => {
                let f = self.pick();
                let fresh = self.line();
                self.files.get_mut(&f).expect("picked").push(fresh);
            }
        }
        false
    }
}

fn join(dir: &str, path: &str) -> String {
    if dir.is_empty() { path.to_string() } else { format!("{dir}/{path}") }
}

/// Write `n_commits` (at least 2) commits of package `package` under `dir`
/// and tag `v1.0.0` and `v2.0.0` on two of them, the second on the last.
pub fn random_history(seed: u64, repo: &mut FixtureRepo, dir: &str, package: &str, n_commits: usize) -> RandomHistory {
    assert!(n_commits >= 2, "need two release commits");
    let mut g = Generator { rng: ChaCha8Rng::seed_from_u64(seed), counter: 0, files: BTreeMap::new() };
    let initial = g.rng.gen_range(1..=3);
    for _ in 0..initial {
        g.new_file();
    }
    repo.write(&join(dir, "Cargo.toml"), format!("[package]\nname = \"{package}\"\n"));
    let x_index = g.rng.gen_range(0..n_commits - 1);
    let mut written: Vec<String> = Vec::new();
    let mut commits = Vec::new();
    let mut ci_runs = 0;
    for i in 0..n_commits {
        if i > 0 {
            for _ in 0..g.rng.gen_range(1..=3) {
                if g.mutate(!dir.is_empty()) {
                    ci_runs += 1;
                    repo.write(".github/ci.yml", format!("runs: {ci_runs}\n"));
                }
            }
        }
        for stale in written.iter().filter(|p| !g.files.contains_key(*p)) {
            repo.remove(&join(dir, stale));
        }
        for (path, body) in &g.files {
            let text: String = body.iter().map(|l| format!("{l}\n")).collect();
            repo.write(&join(dir, path), text);
        }
        written = g.files.keys().cloned().collect();
        commits.push(repo.commit(&format!("change {i}")));
        if i == x_index {
            repo.tag("v1.0.0");
        }
    }
    repo.tag("v2.0.0");
    RandomHistory {
        package: package.to_string(),
        directory: dir.to_string(),
        version_x: "1.0.0".into(),
        version_y: "2.0.0".into(),
        c_x: commits[x_index].clone(),
        c_y: commits[n_commits - 1].clone(),
        commits,
    }
}
