//! Builds small, fully deterministic git repositories for tests.
//!
//! Histories are described in memory and materialised with a single
//! `git fast-import` run, so a repository with hundreds of commits costs one
//! process spawn. Author and committer dates are derived from the commit's
//! position in the builder, which keeps object ids stable across runs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use tempfile::TempDir;

const BASE_TIME: i64 = 1_500_000_000;

/// Handle to a commit declared on a [`RepoBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mark(u32);

#[derive(Debug, Clone)]
pub enum Change {
    Write(String, String),
    Delete(String),
    Rename(String, String),
}

pub fn write(path: &str, content: &str) -> Change {
    Change::Write(path.to_string(), content.to_string())
}

pub fn delete(path: &str) -> Change {
    Change::Delete(path.to_string())
}

pub fn rename(from: &str, to: &str) -> Change {
    Change::Rename(from.to_string(), to.to_string())
}

#[derive(Debug)]
struct PendingCommit {
    mark: Mark,
    branch: String,
    message: String,
    parents: Vec<Mark>,
    changes: Vec<Change>,
}

#[derive(Debug)]
struct PendingTag {
    name: String,
    target: Mark,
    annotated: bool,
}

#[derive(Debug, Default)]
pub struct RepoBuilder {
    commits: Vec<PendingCommit>,
    tips: BTreeMap<String, Mark>,
    tags: Vec<PendingTag>,
}

impl RepoBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Commits `changes` on top of `branch`'s current tip (or as a root
    /// commit when the branch does not exist yet).
    pub fn commit(&mut self, branch: &str, message: &str, changes: Vec<Change>) -> Mark {
        let parents = self.tips.get(branch).copied().into_iter().collect();
        self.push(branch, message, parents, changes)
    }

    /// Creates a merge commit on `branch` whose second parent is `other`.
    pub fn merge(&mut self, branch: &str, other: Mark, message: &str, changes: Vec<Change>) -> Mark {
        let first = *self
            .tips
            .get(branch)
            .unwrap_or_else(|| panic!("merge into unknown branch {branch}"));
        self.push(branch, message, vec![first, other], changes)
    }

    /// Points `branch` at `from`; the next commit on it forks there.
    pub fn branch(&mut self, branch: &str, from: Mark) {
        self.tips.insert(branch.to_string(), from);
    }

    pub fn tag(&mut self, name: &str, target: Mark) {
        self.tags.push(PendingTag { name: name.to_string(), target, annotated: false });
    }

    pub fn annotated_tag(&mut self, name: &str, target: Mark) {
        self.tags.push(PendingTag { name: name.to_string(), target, annotated: true });
    }

    fn push(&mut self, branch: &str, message: &str, parents: Vec<Mark>, changes: Vec<Change>) -> Mark {
        let mark = Mark(self.commits.len() as u32 + 1);
        self.commits.push(PendingCommit {
            mark,
            branch: branch.to_string(),
            message: message.to_string(),
            parents,
            changes,
        });
        self.tips.insert(branch.to_string(), mark);
        mark
    }

    fn stream(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for c in &self.commits {
            let when = BASE_TIME + 3600 * i64::from(c.mark.0);
            writeln!(out, "commit refs/heads/{}", c.branch).unwrap();
            writeln!(out, "mark :{}", c.mark.0).unwrap();
            writeln!(out, "author Fixture Author <author@example.com> {when} +0000").unwrap();
            writeln!(out, "committer Fixture Author <author@example.com> {when} +0000").unwrap();
            data(&mut out, c.message.as_bytes());
            match c.parents.as_slice() {
                [] => {
                    // fast-import would otherwise continue from the branch's
                    // previous tip if the ref was used before
                    writeln!(out, "deleteall").unwrap();
                }
                [first, rest @ ..] => {
                    writeln!(out, "from :{}", first.0).unwrap();
                    for m in rest {
                        writeln!(out, "merge :{}", m.0).unwrap();
                    }
                }
            }
            for change in &c.changes {
                match change {
                    Change::Write(path, content) => {
                        writeln!(out, "M 100644 inline {path}").unwrap();
                        data(&mut out, content.as_bytes());
                    }
                    Change::Delete(path) => writeln!(out, "D {path}").unwrap(),
                    Change::Rename(from, to) => writeln!(out, "R {from} {to}").unwrap(),
                }
            }
            writeln!(out).unwrap();
        }
        for (i, t) in self.tags.iter().enumerate() {
            if t.annotated {
                let when = BASE_TIME + 3600 * (self.commits.len() as i64 + 1 + i as i64);
                writeln!(out, "tag {}", t.name).unwrap();
                writeln!(out, "from :{}", t.target.0).unwrap();
                writeln!(out, "tagger Fixture Author <author@example.com> {when} +0000").unwrap();
                data(&mut out, format!("release {}", t.name).as_bytes());
            } else {
                writeln!(out, "reset refs/tags/{}", t.name).unwrap();
                writeln!(out, "from :{}", t.target.0).unwrap();
                writeln!(out).unwrap();
            }
        }
        out
    }

    /// Writes the repository into a fresh temporary directory.
    pub fn build(&self) -> Fixture {
        let dir = tempfile::tempdir().expect("create fixture dir");
        let path = dir.path().to_path_buf();
        run_git(&path, &["init", "-q", "-b", "main"], None);
        let marks_file = path.join(".git").join("fixture-marks");
        let export = format!("--export-marks={}", marks_file.display());
        run_git(&path, &["fast-import", "--quiet", &export], Some(&self.stream()));
        let marks = std::fs::read_to_string(&marks_file).expect("read marks");
        let mut ids = BTreeMap::new();
        for line in marks.lines() {
            let (m, sha) = line.split_once(' ').expect("mark line");
            let n: u32 = m.trim_start_matches(':').parse().expect("mark number");
            ids.insert(Mark(n), sha.to_string());
        }
        if self.tips.contains_key("main") {
            run_git(&path, &["symbolic-ref", "HEAD", "refs/heads/main"], None);
        } else if let Some(first) = self.commits.first() {
            let head = format!("refs/heads/{}", first.branch);
            run_git(&path, &["symbolic-ref", "HEAD", &head], None);
        }
        Fixture { _dir: dir, path, ids }
    }
}

fn data(out: &mut Vec<u8>, bytes: &[u8]) {
    writeln!(out, "data {}", bytes.len()).unwrap();
    out.extend_from_slice(bytes);
    writeln!(out).unwrap();
}

fn run_git(dir: &Path, args: &[&str], stdin: Option<&[u8]>) -> String {
    let mut cmd = Command::new("git");
    cmd.current_dir(dir)
        .args(args)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if stdin.is_some() {
        cmd.stdin(Stdio::piped());
    }
    let mut child = cmd.spawn().expect("spawn git");
    if let Some(bytes) = stdin {
        child.stdin.take().unwrap().write_all(bytes).expect("feed git");
    }
    let out = child.wait_with_output().expect("wait for git");
    assert!(
        out.status.success(),
        "git {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A materialised fixture repository. The directory is removed on drop.
pub struct Fixture {
    _dir: TempDir,
    path: PathBuf,
    ids: BTreeMap<Mark, String>,
}

impl Fixture {
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Full 40-hex object id of a declared commit.
    pub fn id(&self, mark: Mark) -> &str {
        &self.ids[&mark]
    }

    /// Runs the git command line in the fixture and returns stdout.
    /// Used as an independent oracle in tests.
    pub fn git(&self, args: &[&str]) -> String {
        run_git(&self.path, args, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_linear_history_with_tags() {
        let mut b = RepoBuilder::new();
        let a = b.commit("main", "first", vec![write("a.c", "int a;\n")]);
        let c = b.commit("main", "second", vec![write("a.c", "int a;\nint b;\n")]);
        b.tag("v1", a);
        b.annotated_tag("v2", c);
        let fx = b.build();
        assert_eq!(fx.git(&["rev-parse", "HEAD"]).trim(), fx.id(c));
        assert_eq!(fx.git(&["tag"]).lines().count(), 2);
        assert_eq!(fx.git(&["show", &format!("{}:a.c", fx.id(c))]), "int a;\nint b;\n");
    }

    #[test]
    fn ids_are_deterministic() {
        let mk = || {
            let mut b = RepoBuilder::new();
            let m = b.commit("main", "only", vec![write("x", "1\n")]);
            let fx = b.build();
            fx.id(m).to_string()
        };
        assert_eq!(mk(), mk());
    }
}
