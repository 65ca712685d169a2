//! Release tags affected by a vulnerability: those reachable from the
//! introducing commit but not from the fix.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::repo::{CommitId, RepoHandle, Result, TagRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionVerdict {
    pub cve_id: String,
    pub vic: CommitId,
    pub pc: CommitId,
    /// V_i, in version order.
    pub tags_from_vic: Vec<TagRef>,
    /// V_p, in version order.
    pub tags_from_pc: Vec<TagRef>,
    /// V_v = V_i − V_p, in version order.
    pub vulnerable: Vec<TagRef>,
    /// False for cross-branch fixes, where V_p need not be inside V_i.
    pub vic_is_ancestor: bool,
}

impl VersionVerdict {
    pub fn vulnerable_names(&self) -> Vec<&str> {
        self.vulnerable.iter().map(|t| t.name.as_str()).collect()
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Chunk<'a> {
    Num(u64, usize),
    Text(&'a str),
}

fn chunks(s: &str) -> Vec<Chunk<'_>> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(c) = rest.chars().next() {
        let digit = c.is_ascii_digit();
        let end = rest.find(|x: char| x.is_ascii_digit() != digit).unwrap_or(rest.len());
        let (head, tail) = rest.split_at(end);
        out.push(match head.parse::<u64>() {
            Ok(n) if digit => Chunk::Num(n, head.len()),
            _ => Chunk::Text(head),
        });
        rest = tail;
    }
    out
}

/// Compares names with digit runs taken as numbers, so `v2_9` < `v2_10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let o = match (x, y) {
            (Chunk::Num(p, lp), Chunk::Num(q, lq)) => p.cmp(q).then(lq.cmp(lp)),
            (Chunk::Text(p), Chunk::Text(q)) => p.cmp(q),
            (Chunk::Num(..), Chunk::Text(_)) => Ordering::Less,
            (Chunk::Text(_), Chunk::Num(..)) => Ordering::Greater,
        };
        if o != Ordering::Equal {
            return o;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

/// Natural name order; ties (only possible for names equal under it) fall
/// back to the target's commit date.
pub fn sort_tags(repo: &RepoHandle, tags: impl IntoIterator<Item = TagRef>) -> Result<Vec<TagRef>> {
    let mut keyed = Vec::new();
    for t in tags {
        let when = repo.commit(&t.target)?.timestamp;
        keyed.push((t, when));
    }
    keyed.sort_by(|(a, ta), (b, tb)| natural_cmp(&a.name, &b.name).then(ta.cmp(tb)));
    Ok(keyed.into_iter().map(|(t, _)| t).collect())
}

pub fn delineate(repo: &RepoHandle, cve_id: &str, vic: &str, pc: &str) -> Result<VersionVerdict> {
    let vic = repo.commit(vic)?;
    let pc = repo.commit(pc)?;
    let vic_is_ancestor = repo.is_ancestor(&vic.id, &pc.id)?;
    if !vic_is_ancestor {
        log::warn!("{} is not an ancestor of {}; fix may be on another branch", vic.short(), pc.short());
    }
    let v_i = repo.tags_containing(&vic.id)?;
    let v_p = repo.tags_containing(&pc.id)?;
    let v_v: BTreeSet<TagRef> = v_i.difference(&v_p).cloned().collect();
    Ok(VersionVerdict {
        cve_id: cve_id.to_string(),
        tags_from_vic: sort_tags(repo, v_i)?,
        tags_from_pc: sort_tags(repo, v_p)?,
        vulnerable: sort_tags(repo, v_v)?,
        vic,
        pc,
        vic_is_ancestor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_order() {
        let mut v = vec!["binutils-2_10", "binutils-2_9", "binutils-2_35", "binutils-2_4", "v1.0-rc1", "v1.0"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, ["binutils-2_4", "binutils-2_9", "binutils-2_10", "binutils-2_35", "v1.0", "v1.0-rc1"]);
    }

    #[test]
    fn leading_zeros_are_distinct() {
        assert_eq!(natural_cmp("v01", "v1"), Ordering::Less);
        assert_eq!(natural_cmp("v1", "v1"), Ordering::Equal);
    }
}
