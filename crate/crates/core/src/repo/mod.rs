//! Read-only access to a git repository: commits, files, tags and blame.

mod blame;
mod history;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use git2::{Oid, Repository};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cfront::{find_functions, FunctionLocation};

pub use blame::{BlameEntry, LineTrack};
pub use history::PreviousModification;

#[derive(Debug, thiserror::Error)]
pub enum RepoError {
    #[error("{0} is not a git repository")]
    NotARepository(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} does not exist at {commit}")]
    FileAbsent { commit: String, path: String },
    #[error("line {line} is outside {path} ({len} lines)")]
    LineOutOfRange { path: String, line: u32, len: usize },
    #[error("function {name} not found in {path} at {commit}")]
    FunctionAbsent { commit: String, path: String, name: String },
    #[error("unknown commit {0}")]
    UnknownCommit(String),
    #[error(transparent)]
    Git(#[from] git2::Error),
}

pub type Result<T> = std::result::Result<T, RepoError>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommitId {
    pub id: String,
    pub timestamp: i64,
    pub parents: Vec<String>,
}

impl CommitId {
    pub fn short(&self) -> &str {
        &self.id[..self.id.len().min(12)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TagRef {
    pub name: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotRole {
    Vulnerable,
    Refactored,
    Patched,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLine {
    pub number: u32,
    pub text: String,
}

/// A function's source at one commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSnapshot {
    pub commit: String,
    pub file_path: String,
    pub function_name: String,
    pub source_lines: Vec<SourceLine>,
    pub role: SnapshotRole,
}

impl FunctionSnapshot {
    /// Builds a snapshot of lines `start..=end` (1-based) of `file_text`.
    pub fn from_file(commit: &str, path: &str, name: &str, file_text: &str, start: u32, end: u32) -> Self {
        let source_lines = file_text
            .lines()
            .enumerate()
            .map(|(i, t)| (i as u32 + 1, t))
            .filter(|(n, _)| (start..=end).contains(n))
            .map(|(number, text)| SourceLine { number, text: text.to_string() })
            .collect();
        Self {
            commit: commit.to_string(),
            file_path: path.to_string(),
            function_name: name.to_string(),
            source_lines,
            role: SnapshotRole::Unknown,
        }
    }

    pub fn with_role(mut self, role: SnapshotRole) -> Self {
        self.role = role;
        self
    }

    pub fn first_line(&self) -> Option<u32> {
        self.source_lines.first().map(|l| l.number)
    }

    pub fn last_line(&self) -> Option<u32> {
        self.source_lines.last().map(|l| l.number)
    }

    pub fn contains_line(&self, n: u32) -> bool {
        matches!((self.first_line(), self.last_line()), (Some(a), Some(b)) if (a..=b).contains(&n))
    }

    pub fn line(&self, n: u32) -> Option<&str> {
        let first = self.first_line()?;
        self.source_lines.get(n.checked_sub(first)? as usize).map(|l| l.text.as_str())
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for l in &self.source_lines {
            s.push_str(&l.text);
            s.push('\n');
        }
        s
    }

    /// Body text without line numbers, for change detection.
    pub fn same_body(&self, other: &FunctionSnapshot) -> bool {
        self.source_lines.len() == other.source_lines.len()
            && self.source_lines.iter().zip(&other.source_lines).all(|(a, b)| a.text == b.text)
    }
}

/// How merge commits are traversed when searching function history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentPolicy {
    #[default]
    FirstParent,
    AllParents,
}

#[derive(Debug, Clone)]
pub struct RepoOptions {
    pub parent_policy: ParentPolicy,
    /// Tags whose names match count as versions; `None` accepts all.
    pub tag_pattern: Option<Regex>,
    /// Minimum content similarity (percent) for rename detection.
    pub rename_threshold: u16,
}

impl Default for RepoOptions {
    fn default() -> Self {
        Self { parent_policy: ParentPolicy::FirstParent, tag_pattern: None, rename_threshold: 60 }
    }
}

/// Shared, read-only view of a repository. All methods take `&self` and may
/// be called from several threads.
pub struct RepoHandle {
    root_path: PathBuf,
    head: CommitId,
    repo: Mutex<Repository>,
    opts: RepoOptions,
    blobs: Mutex<HashMap<Oid, Arc<str>>>,
    functions: Mutex<HashMap<Oid, Arc<Vec<FunctionLocation>>>>,
    tags: OnceLock<Vec<TagRef>>,
}

impl std::fmt::Debug for RepoHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RepoHandle").field("root_path", &self.root_path).field("head", &self.head.id).finish()
    }
}

pub fn open_repo(path: &Path) -> Result<RepoHandle> {
    open_repo_with(path, RepoOptions::default())
}

pub fn open_repo_with(path: &Path, opts: RepoOptions) -> Result<RepoHandle> {
    let meta = std::fs::metadata(path).map_err(|source| RepoError::Io { path: path.to_path_buf(), source })?;
    if !meta.is_dir() {
        return Err(RepoError::NotARepository(path.to_path_buf()));
    }
    std::fs::read_dir(path).map_err(|source| RepoError::Io { path: path.to_path_buf(), source })?;
    let repo = Repository::open(path).map_err(|_| RepoError::NotARepository(path.to_path_buf()))?;
    let head = {
        let commit = repo
            .head()
            .and_then(|h| h.peel_to_commit())
            .map_err(|_| RepoError::UnknownCommit("HEAD".into()))?;
        commit_id(&commit)
    };
    Ok(RepoHandle {
        root_path: path.to_path_buf(),
        head,
        repo: Mutex::new(repo),
        opts,
        blobs: Mutex::new(HashMap::new()),
        functions: Mutex::new(HashMap::new()),
        tags: OnceLock::new(),
    })
}

fn commit_id(c: &git2::Commit) -> CommitId {
    CommitId {
        id: c.id().to_string(),
        timestamp: c.time().seconds(),
        parents: c.parent_ids().map(|p| p.to_string()).collect(),
    }
}

impl RepoHandle {
    pub fn root_path(&self) -> &Path {
        &self.root_path
    }

    pub fn head(&self) -> &CommitId {
        &self.head
    }

    pub fn options(&self) -> &RepoOptions {
        &self.opts
    }

    fn with_repo<T>(&self, f: impl FnOnce(&Repository) -> T) -> T {
        let guard = self.repo.lock().unwrap_or_else(|e| e.into_inner());
        f(&guard)
    }

    /// Resolves any revision expression (`HEAD~2`, a tag, an abbreviated id).
    pub fn resolve(&self, rev: &str) -> Result<CommitId> {
        self.with_repo(|r| {
            let obj = r.revparse_single(rev).map_err(|_| RepoError::UnknownCommit(rev.to_string()))?;
            let c = obj.peel_to_commit().map_err(|_| RepoError::UnknownCommit(rev.to_string()))?;
            Ok(commit_id(&c))
        })
    }

    fn oid(&self, id: &str) -> Result<Oid> {
        Oid::from_str(id).map_err(|_| RepoError::UnknownCommit(id.to_string())).and_then(|o| {
            self.with_repo(|r| r.find_commit(o).map(|_| o).map_err(|_| RepoError::UnknownCommit(id.to_string())))
        })
    }

    pub fn commit(&self, id: &str) -> Result<CommitId> {
        let oid = self.oid(id)?;
        self.with_repo(|r| Ok(commit_id(&r.find_commit(oid)?)))
    }

    pub fn commit_count(&self) -> Result<usize> {
        self.with_repo(|r| {
            let mut walk = r.revwalk()?;
            walk.push_head()?;
            Ok(walk.count())
        })
    }

    /// Blob id of `path` at `commit`, if the file exists there.
    pub(crate) fn blob_id(&self, commit: &str, path: &str) -> Result<Option<Oid>> {
        let oid = self.oid(commit)?;
        self.with_repo(|r| {
            let tree = r.find_commit(oid)?.tree()?;
            let found = match tree.get_path(Path::new(path)) {
                Ok(e) if e.kind() == Some(git2::ObjectType::Blob) => Some(e.id()),
                _ => None,
            };
            Ok(found)
        })
    }

    pub(crate) fn blob_text(&self, blob: Oid) -> Result<Arc<str>> {
        if let Some(t) = self.blobs.lock().unwrap_or_else(|e| e.into_inner()).get(&blob) {
            return Ok(t.clone());
        }
        let text: Arc<str> = self.with_repo(|r| -> Result<Arc<str>> {
            let b = r.find_blob(blob)?;
            Ok(String::from_utf8_lossy(b.content()).into())
        })?;
        self.blobs.lock().unwrap_or_else(|e| e.into_inner()).insert(blob, text.clone());
        Ok(text)
    }

    /// File contents at a commit; `None` when the path is absent.
    pub fn file_at(&self, commit: &str, path: &str) -> Result<Option<Arc<str>>> {
        match self.blob_id(commit, path)? {
            Some(b) => self.blob_text(b).map(Some),
            None => Ok(None),
        }
    }

    /// Paths of all files at a commit.
    pub fn list_files(&self, commit: &str) -> Result<Vec<String>> {
        let oid = self.oid(commit)?;
        self.with_repo(|r| {
            let tree = r.find_commit(oid)?.tree()?;
            let mut out = Vec::new();
            tree.walk(git2::TreeWalkMode::PreOrder, |dir, entry| {
                if entry.kind() == Some(git2::ObjectType::Blob) {
                    out.push(format!("{dir}{}", entry.name().unwrap_or("")));
                }
                git2::TreeWalkResult::Ok
            })?;
            Ok(out)
        })
    }

    pub(crate) fn functions_in_blob(&self, blob: Oid) -> Result<Arc<Vec<FunctionLocation>>> {
        if let Some(f) = self.functions.lock().unwrap_or_else(|e| e.into_inner()).get(&blob) {
            return Ok(f.clone());
        }
        let text = self.blob_text(blob)?;
        let found = Arc::new(find_functions(&text));
        self.functions.lock().unwrap_or_else(|e| e.into_inner()).insert(blob, found.clone());
        Ok(found)
    }

    /// Function definitions in a file at a commit.
    pub fn functions_at(&self, commit: &str, path: &str) -> Result<Arc<Vec<FunctionLocation>>> {
        let blob = self
            .blob_id(commit, path)?
            .ok_or_else(|| RepoError::FileAbsent { commit: commit.to_string(), path: path.to_string() })?;
        self.functions_in_blob(blob)
    }

    /// Snapshot of a named function; `None` when the file or the function is
    /// absent at that commit.
    pub fn function_snapshot(&self, commit: &str, path: &str, name: &str) -> Result<Option<FunctionSnapshot>> {
        let Some(blob) = self.blob_id(commit, path)? else { return Ok(None) };
        let funcs = self.functions_in_blob(blob)?;
        let Some(loc) = funcs.iter().find(|f| f.name == name) else { return Ok(None) };
        let text = self.blob_text(blob)?;
        Ok(Some(FunctionSnapshot::from_file(commit, path, name, &text, loc.start_line, loc.end_line)))
    }

    /// The function enclosing `line`, if any.
    pub fn enclosing_function(&self, commit: &str, path: &str, line: u32) -> Result<Option<FunctionLocation>> {
        let Some(blob) = self.blob_id(commit, path)? else { return Ok(None) };
        let funcs = self.functions_in_blob(blob)?;
        Ok(funcs.iter().find(|f| (f.start_line..=f.end_line).contains(&line)).cloned())
    }

    /// All version tags, peeled to commits, filtered by the tag pattern and
    /// sorted by name.
    pub fn tags(&self) -> Result<&[TagRef]> {
        if let Some(t) = self.tags.get() {
            return Ok(t);
        }
        let list = self.with_repo(|r| -> Result<Vec<TagRef>> {
            let mut out = Vec::new();
            for name in r.tag_names(None)?.iter().flatten() {
                if let Some(p) = &self.opts.tag_pattern {
                    if !p.is_match(name) {
                        continue;
                    }
                }
                let Ok(obj) = r.revparse_single(&format!("refs/tags/{name}")) else { continue };
                let Ok(c) = obj.peel_to_commit() else { continue };
                out.push(TagRef { name: name.to_string(), target: c.id().to_string() });
            }
            out.sort();
            Ok(out)
        })?;
        Ok(self.tags.get_or_init(|| list))
    }

    /// True when `ancestor` is reachable from `descendant` (or equal).
    pub fn is_ancestor(&self, ancestor: &str, descendant: &str) -> Result<bool> {
        let a = self.oid(ancestor)?;
        let d = self.oid(descendant)?;
        if a == d {
            return Ok(true);
        }
        self.with_repo(|r| Ok(r.graph_descendant_of(d, a)?))
    }

    /// Unified diff of a commit against its first parent (or the empty tree).
    pub fn diff_against_parent(&self, commit: &str) -> Result<String> {
        let oid = self.oid(commit)?;
        self.with_repo(|r| {
            let c = r.find_commit(oid)?;
            let new_tree = c.tree()?;
            let old_tree = match c.parents().next() {
                Some(p) => Some(p.tree()?),
                None => None,
            };
            let mut opts = git2::DiffOptions::new();
            opts.context_lines(3);
            let mut diff = r.diff_tree_to_tree(old_tree.as_ref(), Some(&new_tree), Some(&mut opts))?;
            let mut find = git2::DiffFindOptions::new();
            find.renames(true).rename_threshold(self.opts.rename_threshold);
            diff.find_similar(Some(&mut find))?;
            let mut out = String::new();
            diff.print(git2::DiffFormat::Patch, |_, _, line| {
                let text = String::from_utf8_lossy(line.content());
                match line.origin() {
                    c @ ('+' | '-' | ' ') => {
                        out.push(c);
                        out.push_str(&text);
                    }
                    '=' | '>' | '<' => out.push_str(&text),
                    _ => out.push_str(&text),
                }
                true
            })?;
            Ok(out)
        })
    }

    /// Path that `path` at `child` had in `parent`, following renames.
    pub(crate) fn path_in_parent(&self, parent: &str, child: &str, path: &str) -> Result<Option<String>> {
        if self.blob_id(parent, path)?.is_some() {
            return Ok(Some(path.to_string()));
        }
        let (p, c) = (self.oid(parent)?, self.oid(child)?);
        self.with_repo(|r| {
            let old = r.find_commit(p)?.tree()?;
            let new = r.find_commit(c)?.tree()?;
            let mut diff = r.diff_tree_to_tree(Some(&old), Some(&new), None)?;
            let mut find = git2::DiffFindOptions::new();
            find.renames(true).rename_threshold(self.opts.rename_threshold);
            diff.find_similar(Some(&mut find))?;
            for delta in diff.deltas() {
                if delta.status() == git2::Delta::Renamed && delta.new_file().path() == Some(Path::new(path)) {
                    return Ok(delta.old_file().path().map(|p| p.to_string_lossy().replace('\\', "/")));
                }
            }
            Ok(None)
        })
    }
}
