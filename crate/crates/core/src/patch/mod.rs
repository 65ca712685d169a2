//! Patch commits: unified diff hunks attributed to the functions they touch.

mod diff;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cfront::{find_functions, identifiers, FunctionLocation};
use crate::repo::{CommitId, FunctionSnapshot, RepoError, RepoHandle, SnapshotRole};

pub use diff::{apply_hunks, parse_unified_diff, render_hunks, ChangeKind, Hunk, LineChange};

#[derive(Debug, thiserror::Error)]
pub enum PatchError {
    #[error("malformed diff at byte {offset}: {reason}")]
    MalformedDiff { offset: usize, reason: String },
    #[error("patch does not apply: {0}")]
    ApplyFailed(String),
    #[error("patch has no added or deleted lines")]
    EmptyPatch,
    #[error("diff does not name the commit it came from")]
    MissingCommit,
    #[error(transparent)]
    Repo(#[from] RepoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchShape {
    InsertionOnly,
    DeletionOnly,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchCommit {
    pub commit: CommitId,
    pub hunks: Vec<Hunk>,
    pub shape: PatchShape,
}

impl PatchCommit {
    pub fn new(commit: CommitId, hunks: Vec<Hunk>) -> Result<Self, PatchError> {
        let shape = shape_of(&hunks)?;
        Ok(Self { commit, hunks, shape })
    }

    /// The diff of `commit` against its first parent.
    pub fn from_repo(repo: &RepoHandle, commit: &str) -> Result<Self, PatchError> {
        let c = repo.resolve(commit)?;
        let text = repo.diff_against_parent(&c.id)?;
        Self::new(c, parse_unified_diff(&text)?)
    }

    /// Diff text as printed by `git show` or `git format-patch`; the commit
    /// is taken from its `commit <id>` or `From <id>` header line.
    pub fn from_diff_text(repo: &RepoHandle, text: &str) -> Result<Self, PatchError> {
        let id = commit_from_header(text).ok_or(PatchError::MissingCommit)?;
        let c = repo.resolve(&id)?;
        Self::new(c, parse_unified_diff(text)?)
    }
}

fn commit_from_header(text: &str) -> Option<String> {
    for line in text.lines() {
        if line.starts_with("diff ") || line.starts_with("--- ") {
            break;
        }
        let rest = line.strip_prefix("commit ").or_else(|| line.strip_prefix("From "));
        if let Some(id) = rest.and_then(|r| r.split_whitespace().next()) {
            if id.len() >= 7 && id.chars().all(|c| c.is_ascii_hexdigit()) {
                return Some(id.to_string());
            }
        }
    }
    None
}

fn shape_of(hunks: &[Hunk]) -> Result<PatchShape, PatchError> {
    let added = hunks.iter().any(|h| h.added().next().is_some());
    let deleted = hunks.iter().any(|h| h.deleted().next().is_some());
    match (added, deleted) {
        (true, true) => Ok(PatchShape::Mixed),
        (true, false) => Ok(PatchShape::InsertionOnly),
        (false, true) => Ok(PatchShape::DeletionOnly),
        (false, false) => Err(PatchError::EmptyPatch),
    }
}

/// Shape of a patch from its line kinds.
pub fn classify_patch(patch: &PatchCommit) -> Result<PatchShape, PatchError> {
    shape_of(&patch.hunks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Not a C or C++ source file.
    NotSource,
    /// The line lies outside every function definition.
    OutsideFunction,
    /// The enclosing function does not exist on the other side of the patch.
    FunctionAddedOrRemoved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub file_path: String,
    pub change: LineChange,
    pub reason: SkipReason,
}

/// One function touched by a patch, with both images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchedFunction {
    pub function_name: String,
    pub file_path: String,
    pub pre_body: FunctionSnapshot,
    pub post_body: FunctionSnapshot,
    /// Post-image line numbers.
    pub added: BTreeSet<u32>,
    /// Pre-image line numbers.
    pub deleted: BTreeSet<u32>,
    pub patch_variables: BTreeSet<String>,
}

impl PatchedFunction {
    pub fn view(&self) -> FunctionView {
        FunctionView::merge(&self.pre_body, &self.post_body, &self.deleted, &self.added)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewLine {
    pub number: u32,
    pub kind: ChangeKind,
    pub old_number: Option<u32>,
    pub new_number: Option<u32>,
    pub text: String,
}

/// The function as a diff reader sees it: deleted lines followed by their
/// replacements, numbered consecutively from the function's first line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionView {
    pub lines: Vec<ViewLine>,
}

impl FunctionView {
    pub fn merge(pre: &FunctionSnapshot, post: &FunctionSnapshot, deleted: &BTreeSet<u32>, added: &BTreeSet<u32>) -> Self {
        let base = pre.first_line().or(post.first_line()).unwrap_or(1);
        let (a, b) = (&pre.source_lines, &post.source_lines);
        let (mut i, mut j) = (0, 0);
        let mut lines = Vec::with_capacity(a.len() + added.len());
        while i < a.len() || j < b.len() {
            let number = base + lines.len() as u32;
            let line = if i < a.len() && deleted.contains(&a[i].number) {
                i += 1;
                ViewLine { number, kind: ChangeKind::Deleted, old_number: Some(a[i - 1].number), new_number: None, text: a[i - 1].text.clone() }
            } else if j < b.len() && added.contains(&b[j].number) {
                j += 1;
                ViewLine { number, kind: ChangeKind::Added, old_number: None, new_number: Some(b[j - 1].number), text: b[j - 1].text.clone() }
            } else {
                let old = a.get(i).map(|l| l.number);
                let new = b.get(j).map(|l| l.number);
                let text = a.get(i).or(b.get(j)).map(|l| l.text.clone()).unwrap_or_default();
                i += 1;
                j += 1;
                ViewLine { number, kind: ChangeKind::Context, old_number: old, new_number: new, text }
            };
            lines.push(line);
        }
        Self { lines }
    }

    pub fn get(&self, number: u32) -> Option<&ViewLine> {
        let first = self.lines.first()?.number;
        self.lines.get(number.checked_sub(first)? as usize)
    }

    pub fn from_old(&self, old: u32) -> Option<u32> {
        self.lines.iter().find(|l| l.old_number == Some(old)).map(|l| l.number)
    }

    pub fn from_new(&self, new: u32) -> Option<u32> {
        self.lines.iter().find(|l| l.new_number == Some(new)).map(|l| l.number)
    }
}

/// Patched functions plus the changed lines that could not be attributed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchExtraction {
    pub functions: Vec<PatchedFunction>,
    pub skipped: Vec<SkippedLine>,
}

/// Pre- and post-image text of one file; `None` where the file is absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileImages {
    pub pre_path: Option<String>,
    pub pre: Option<String>,
    pub post: Option<String>,
}

const SOURCE_EXTENSIONS: &[&str] = &["c", "h", "cc", "cpp", "cxx", "c++", "hh", "hpp", "hxx", "inc"];

pub fn is_source_path(path: &str) -> bool {
    path.rsplit_once('.').is_some_and(|(_, ext)| SOURCE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()))
}

/// Attributes every changed line of `patch` to the function enclosing it,
/// reading both images from the repository.
pub fn extract_patched_functions(repo: &RepoHandle, patch: &PatchCommit) -> Result<PatchExtraction, PatchError> {
    let parent = patch.commit.parents.first().cloned();
    let mut images = BTreeMap::new();
    for h in &patch.hunks {
        if images.contains_key(&h.file_path) {
            continue;
        }
        let pre = match (&parent, &h.old_path) {
            (Some(p), Some(old)) => repo.file_at(p, old)?.map(|t| t.to_string()),
            _ => None,
        };
        let post = repo.file_at(&patch.commit.id, &h.file_path)?.map(|t| t.to_string());
        images.insert(h.file_path.clone(), FileImages { pre_path: h.old_path.clone(), pre, post });
    }
    let pre_commit = parent.unwrap_or_default();
    Ok(extract_from_images(patch, &pre_commit, &images))
}

fn enclosing(fns: &[FunctionLocation], line: u32) -> Option<&FunctionLocation> {
    fns.iter().find(|f| (f.start_line..=f.end_line).contains(&line))
}

/// Attribution over caller-supplied file images, keyed by post-image path.
pub fn extract_from_images(
    patch: &PatchCommit,
    pre_commit: &str,
    images: &BTreeMap<String, FileImages>,
) -> PatchExtraction {
    struct Acc {
        file: String,
        name: String,
        pre: (u32, u32),
        post: (u32, u32),
        added: BTreeSet<u32>,
        deleted: BTreeSet<u32>,
        texts: Vec<String>,
    }
    let mut out = PatchExtraction::default();
    let mut accs: Vec<Acc> = Vec::new();
    let mut parsed: BTreeMap<&str, (Vec<FunctionLocation>, Vec<FunctionLocation>)> = BTreeMap::new();
    let empty = FileImages::default();

    for h in &patch.hunks {
        let img = images.get(&h.file_path).unwrap_or(&empty);
        let source = is_source_path(&h.file_path);
        let (pre_fns, post_fns) = parsed.entry(h.file_path.as_str()).or_insert_with(|| {
            if source {
                (
                    img.pre.as_deref().map(find_functions).unwrap_or_default(),
                    img.post.as_deref().map(find_functions).unwrap_or_default(),
                )
            } else {
                Default::default()
            }
        });
        for c in h.changes.iter().filter(|c| c.kind != ChangeKind::Context) {
            let skip = |reason| SkippedLine { file_path: h.file_path.clone(), change: c.clone(), reason };
            if !source {
                out.skipped.push(skip(SkipReason::NotSource));
                continue;
            }
            let (own, other, n) = match c.kind {
                ChangeKind::Deleted => (&*pre_fns, &*post_fns, c.old_number.unwrap_or(0)),
                _ => (&*post_fns, &*pre_fns, c.new_number.unwrap_or(0)),
            };
            let Some(f) = enclosing(own, n) else {
                out.skipped.push(skip(SkipReason::OutsideFunction));
                continue;
            };
            let Some(g) = other.iter().find(|g| g.name == f.name) else {
                out.skipped.push(skip(SkipReason::FunctionAddedOrRemoved));
                continue;
            };
            let (pre_f, post_f) = if c.kind == ChangeKind::Deleted { (f, g) } else { (g, f) };
            let idx = match accs.iter().position(|a| a.file == h.file_path && a.name == f.name) {
                Some(i) => i,
                None => {
                    accs.push(Acc {
                        file: h.file_path.clone(),
                        name: f.name.clone(),
                        pre: (pre_f.start_line, pre_f.end_line),
                        post: (post_f.start_line, post_f.end_line),
                        added: BTreeSet::new(),
                        deleted: BTreeSet::new(),
                        texts: Vec::new(),
                    });
                    accs.len() - 1
                }
            };
            let acc = &mut accs[idx];
            if c.kind == ChangeKind::Deleted {
                acc.deleted.insert(n);
            } else {
                acc.added.insert(n);
            }
            acc.texts.push(c.text.clone());
        }
    }

    for a in accs {
        let img = images.get(&a.file).unwrap_or(&empty);
        let pre_path = img.pre_path.clone().unwrap_or_else(|| a.file.clone());
        let pre_body = FunctionSnapshot::from_file(pre_commit, &pre_path, &a.name, img.pre.as_deref().unwrap_or(""), a.pre.0, a.pre.1)
            .with_role(SnapshotRole::Vulnerable);
        let post_body =
            FunctionSnapshot::from_file(&patch.commit.id, &a.file, &a.name, img.post.as_deref().unwrap_or(""), a.post.0, a.post.1)
                .with_role(SnapshotRole::Patched);
        let patch_variables = a.texts.iter().flat_map(|t| identifiers(t)).collect();
        out.functions.push(PatchedFunction {
            function_name: a.name,
            file_path: a.file,
            pre_body,
            post_body,
            added: a.added,
            deleted: a.deleted,
            patch_variables,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commit() -> CommitId {
        CommitId { id: "b".repeat(40), timestamp: 0, parents: vec!["a".repeat(40)] }
    }

    #[test]
    fn shapes() {
        let h = |text: &str| parse_unified_diff(text).unwrap();
        let mixed = h("--- a/f.c\n+++ b/f.c\n@@ -1 +1 @@\n-a\n+b\n");
        let ins = h("--- a/f.c\n+++ b/f.c\n@@ -1,0 +2 @@\n+b\n");
        let del = h("--- a/f.c\n+++ b/f.c\n@@ -1 +0,0 @@\n-a\n");
        assert_eq!(PatchCommit::new(commit(), mixed).unwrap().shape, PatchShape::Mixed);
        assert_eq!(PatchCommit::new(commit(), ins).unwrap().shape, PatchShape::InsertionOnly);
        assert_eq!(PatchCommit::new(commit(), del).unwrap().shape, PatchShape::DeletionOnly);
        assert!(matches!(PatchCommit::new(commit(), Vec::new()), Err(PatchError::EmptyPatch)));
    }

    #[test]
    fn hunk_across_two_functions_splits() {
        let pre = "int f(int a)\n{\n    return a;\n}\nint g(int b)\n{\n    return b;\n}\n";
        let post = "int f(int a)\n{\n    return a + 1;\n}\nint g(int b)\n{\n    return b + 1;\n}\n";
        let diff = "--- a/m.c\n+++ b/m.c\n@@ -3,5 +3,5 @@\n-    return a;\n+    return a + 1;\n }\n int g(int b)\n {\n-    return b;\n+    return b + 1;\n";
        let patch = PatchCommit::new(commit(), parse_unified_diff(diff).unwrap()).unwrap();
        let mut images = BTreeMap::new();
        images.insert("m.c".into(), FileImages { pre_path: Some("m.c".into()), pre: Some(pre.into()), post: Some(post.into()) });
        let ex = extract_from_images(&patch, &"a".repeat(40), &images);
        let names: Vec<_> = ex.functions.iter().map(|f| f.function_name.as_str()).collect();
        assert_eq!(names, ["f", "g"]);
        assert_eq!(ex.functions[0].deleted, BTreeSet::from([3]));
        assert_eq!(ex.functions[1].added, BTreeSet::from([7]));
        assert!(ex.skipped.is_empty());
    }

    #[test]
    fn changelog_lines_are_skipped() {
        let diff = "--- a/ChangeLog\n+++ b/ChangeLog\n@@ -1 +1,2 @@\n+fix overflow\n entry\n";
        let patch = PatchCommit::new(commit(), parse_unified_diff(diff).unwrap()).unwrap();
        let ex = extract_from_images(&patch, "p", &BTreeMap::new());
        assert!(ex.functions.is_empty());
        assert_eq!(ex.skipped.len(), 1);
        assert_eq!(ex.skipped[0].reason, SkipReason::NotSource);
    }

    #[test]
    fn header_commit() {
        assert_eq!(commit_from_header("From 0123456789abcdef Mon Sep 17 00:00:00 2001\n").as_deref(), Some("0123456789abcdef"));
        assert_eq!(commit_from_header("commit abcdef1\nAuthor: x\n").as_deref(), Some("abcdef1"));
        assert_eq!(commit_from_header("--- a/x\n"), None);
    }
}
