//! Line-origin tracking over the commit graph.
//!
//! Lines are passed from a commit to the parents in which they appear
//! unchanged, using a Myers line diff per file revision; a line that no
//! parent accounts for was written by the commit itself.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffOp};

use super::{CommitId, RepoError, RepoHandle, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlameEntry {
    pub line_number: u32,
    pub origin_commit: CommitId,
    pub origin_line: u32,
    /// File path at the origin commit.
    pub origin_path: String,
}

/// Result of walking tracked lines back to the first commit that rewrote
/// any of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineTrack {
    /// The commit that modified at least one tracked line.
    pub commit: CommitId,
    pub path: String,
    /// Positions of the tracked lines at `commit`, in input order.
    pub positions: Vec<u32>,
    /// Per tracked line: written by `commit` (not inherited from `parent`).
    pub changed: Vec<bool>,
    /// Parent used for the comparison and the file's path there; `None` for
    /// the root commit or when the file did not exist in any parent.
    pub parent: Option<(CommitId, String)>,
    /// Positions at `parent` of lines that were not changed.
    pub parent_positions: Vec<Option<u32>>,
    /// Commits walked through before reaching `commit`.
    pub skipped: usize,
}

fn lines_of(text: &str) -> Vec<&str> {
    text.lines().collect()
}

/// Maps each line index of `new` to its index in `old` when unchanged.
fn line_mapping(old: &str, new: &str) -> Vec<Option<u32>> {
    let old_lines = lines_of(old);
    let new_lines = lines_of(new);
    let mut map = vec![None; new_lines.len()];
    for op in capture_diff_slices(Algorithm::Myers, &old_lines, &new_lines) {
        if let DiffOp::Equal { old_index, new_index, len } = op {
            for k in 0..len {
                map[new_index + k] = Some((old_index + k) as u32 + 1);
            }
        }
    }
    map
}

struct ParentView {
    commit: CommitId,
    path: String,
    /// `None` when blobs are identical (identity mapping).
    mapping: Option<Vec<Option<u32>>>,
}

impl RepoHandle {
    fn parent_views(&self, commit: &CommitId, path: &str, first_only: bool) -> Result<Vec<Option<ParentView>>> {
        let blob = self
            .blob_id(&commit.id, path)?
            .ok_or_else(|| RepoError::FileAbsent { commit: commit.id.clone(), path: path.to_string() })?;
        let mut out = Vec::new();
        for (i, pid) in commit.parents.iter().enumerate() {
            if first_only && i > 0 {
                break;
            }
            let parent = self.commit(pid)?;
            let Some(ppath) = self.path_in_parent(pid, &commit.id, path)? else {
                out.push(None);
                continue;
            };
            let pblob = self.blob_id(pid, &ppath)?.expect("path_in_parent returns existing paths");
            let mapping = if pblob == blob {
                None
            } else {
                let old = self.blob_text(pblob)?;
                let new = self.blob_text(blob)?;
                Some(line_mapping(&old, &new))
            };
            out.push(Some(ParentView { commit: parent, path: ppath, mapping }));
        }
        Ok(out)
    }

    fn line_count(&self, commit: &str, path: &str) -> Result<usize> {
        let text = self
            .file_at(commit, path)?
            .ok_or_else(|| RepoError::FileAbsent { commit: commit.to_string(), path: path.to_string() })?;
        Ok(text.lines().count())
    }

    fn check_lines(&self, commit: &str, path: &str, lines: impl IntoIterator<Item = u32>) -> Result<()> {
        let len = self.line_count(commit, path)?;
        for l in lines {
            if l == 0 || l as usize > len {
                return Err(RepoError::LineOutOfRange { path: path.to_string(), line: l, len });
            }
        }
        Ok(())
    }

    /// Origin of each requested line as of `commit`, following all parents
    /// of merges and file renames.
    pub fn blame_lines(&self, commit: &str, file: &str, lines: &BTreeSet<u32>) -> Result<Vec<BlameEntry>> {
        let start = self.commit(commit)?;
        self.check_lines(&start.id, file, lines.iter().copied())?;

        // (time, id) → path → [(line at this commit, requested line)]
        type Pending = BTreeMap<(i64, String), BTreeMap<String, Vec<(u32, u32)>>>;
        let mut queue: Pending = BTreeMap::new();
        let mut commits: HashMap<String, CommitId> = HashMap::new();
        queue
            .entry((start.timestamp, start.id.clone()))
            .or_default()
            .insert(file.to_string(), lines.iter().map(|&l| (l, l)).collect());
        commits.insert(start.id.clone(), start);
        let mut result: BTreeMap<u32, BlameEntry> = BTreeMap::new();

        while let Some(((_, id), by_path)) = queue.pop_last() {
            let current = commits[&id].clone();
            for (path, pending) in by_path {
                let views = self.parent_views(&current, &path, false)?;
                let mut remaining = pending;
                // A parent holding the identical blob takes every line.
                if let Some(v) = views.iter().flatten().find(|v| v.mapping.is_none()) {
                    commits.entry(v.commit.id.clone()).or_insert_with(|| v.commit.clone());
                    queue
                        .entry((v.commit.timestamp, v.commit.id.clone()))
                        .or_default()
                        .entry(v.path.clone())
                        .or_default().append(&mut remaining);
                }
                for v in views.iter().flatten() {
                    if remaining.is_empty() {
                        break;
                    }
                    let map = v.mapping.as_ref().expect("identical blobs handled above");
                    let (passed, kept): (Vec<_>, Vec<_>) =
                        remaining.into_iter().partition(|(l, _)| map.get(*l as usize - 1).copied().flatten().is_some());
                    remaining = kept;
                    if passed.is_empty() {
                        continue;
                    }
                    commits.entry(v.commit.id.clone()).or_insert_with(|| v.commit.clone());
                    let slot = queue
                        .entry((v.commit.timestamp, v.commit.id.clone()))
                        .or_default()
                        .entry(v.path.clone())
                        .or_default();
                    for (l, req) in passed {
                        slot.push((map[l as usize - 1].unwrap(), req));
                    }
                }
                for (l, req) in remaining {
                    result.insert(
                        req,
                        BlameEntry { line_number: req, origin_commit: current.clone(), origin_line: l, origin_path: path.clone() },
                    );
                }
            }
        }
        Ok(result.into_values().collect())
    }

    /// Walks back from `commit` until a commit rewrites at least one of the
    /// tracked `lines` of `path`. At merges the parent preserving the most
    /// tracked lines is followed.
    pub fn track_lines(&self, commit: &str, path: &str, lines: &[u32]) -> Result<LineTrack> {
        let mut current = self.commit(commit)?;
        self.check_lines(&current.id, path, lines.iter().copied())?;
        let mut path = path.to_string();
        let mut positions: Vec<u32> = lines.to_vec();
        let mut skipped = 0usize;
        loop {
            let views = self.parent_views(&current, &path, false)?;
            let mut best: Option<(usize, &ParentView, Vec<Option<u32>>)> = None;
            for v in views.iter().flatten() {
                let mapped: Vec<Option<u32>> = match &v.mapping {
                    None => positions.iter().map(|&p| Some(p)).collect(),
                    Some(m) => positions.iter().map(|&p| m.get(p as usize - 1).copied().flatten()).collect(),
                };
                let kept = mapped.iter().filter(|m| m.is_some()).count();
                if best.as_ref().is_none_or(|(k, _, _)| kept > *k) {
                    best = Some((kept, v, mapped));
                }
            }
            match best {
                Some((kept, v, mapped)) if kept == positions.len() => {
                    positions = mapped.into_iter().map(|m| m.unwrap()).collect();
                    path = v.path.clone();
                    current = v.commit.clone();
                    skipped += 1;
                }
                Some((_, v, mapped)) => {
                    return Ok(LineTrack {
                        changed: mapped.iter().map(Option::is_none).collect(),
                        parent: Some((v.commit.clone(), v.path.clone())),
                        parent_positions: mapped,
                        commit: current,
                        path,
                        positions,
                        skipped,
                    });
                }
                None => {
                    // Root commit, or the file was added here. Prefer the
                    // first parent for the comparison when one exists.
                    let parent = match current.parents.first() {
                        Some(p) => Some((self.commit(p)?, path.clone())),
                        None => None,
                    };
                    return Ok(LineTrack {
                        changed: vec![true; positions.len()],
                        parent_positions: vec![None; positions.len()],
                        parent,
                        commit: current,
                        path,
                        positions,
                        skipped,
                    });
                }
            }
        }
    }
}
