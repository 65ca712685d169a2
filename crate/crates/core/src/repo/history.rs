use std::collections::BTreeSet;

use super::{CommitId, FunctionSnapshot, ParentPolicy, RepoError, RepoHandle, Result, TagRef};

/// The nearest earlier commit that edited a function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreviousModification {
    pub commit: CommitId,
    pub pre: FunctionSnapshot,
    pub post: FunctionSnapshot,
}

impl RepoHandle {
    /// Finds the nearest strict ancestor of `commit` whose change touched the
    /// body of `function_name`. Returns `None` when the function's body goes
    /// back unchanged to the root commit or to the commit that created it.
    pub fn previous_modification(
        &self,
        commit: &str,
        file: &str,
        function_name: &str,
    ) -> Result<Option<PreviousModification>> {
        let start = self.commit(commit)?;
        if self.function_snapshot(&start.id, file, function_name)?.is_none() {
            return Err(RepoError::FunctionAbsent {
                commit: start.id.clone(),
                path: file.to_string(),
                name: function_name.to_string(),
            });
        }
        let Some(first) = start.parents.first() else { return Ok(None) };
        let Some(mut path) = self.path_in_parent(first, &start.id, file)? else { return Ok(None) };
        let mut current = self.commit(first)?;
        let mut body = match self.function_snapshot(&current.id, &path, function_name)? {
            Some(b) => b,
            None => return Ok(None),
        };
        loop {
            if current.parents.is_empty() {
                return Ok(None);
            }
            let candidates: Vec<&String> = match self.opts.parent_policy {
                ParentPolicy::FirstParent => current.parents.iter().take(1).collect(),
                ParentPolicy::AllParents => current.parents.iter().collect(),
            };
            let mut first_view: Option<(CommitId, String, Option<FunctionSnapshot>)> = None;
            let mut next: Option<(CommitId, String, FunctionSnapshot)> = None;
            for pid in candidates {
                let Some(ppath) = self.path_in_parent(pid, &current.id, &path)? else {
                    if first_view.is_none() {
                        first_view = Some((self.commit(pid)?, path.clone(), None));
                    }
                    continue;
                };
                let parent = self.commit(pid)?;
                let unchanged_blob = self.blob_id(pid, &ppath)? == self.blob_id(&current.id, &path)?;
                let snap = self.function_snapshot(pid, &ppath, function_name)?;
                if first_view.is_none() {
                    first_view = Some((parent.clone(), ppath.clone(), snap.clone()));
                }
                if let Some(s) = snap {
                    if unchanged_blob || s.same_body(&body) {
                        next = Some((parent, ppath, s));
                        break;
                    }
                }
            }
            match next {
                Some((parent, ppath, snap)) => {
                    current = parent;
                    path = ppath;
                    body = snap;
                }
                None => {
                    let (_, _, pre) = first_view.expect("commit has at least one parent");
                    return Ok(pre.map(|pre| PreviousModification { commit: current.clone(), pre, post: body }));
                }
            }
        }
    }

    /// Version tags whose target is `commit` or one of its descendants.
    pub fn tags_containing(&self, commit: &str) -> Result<BTreeSet<TagRef>> {
        let c = self.commit(commit)?;
        let mut out = BTreeSet::new();
        for tag in self.tags()? {
            if self.is_ancestor(&c.id, &tag.target)? {
                out.insert(tag.clone());
            }
        }
        Ok(out)
    }
}
