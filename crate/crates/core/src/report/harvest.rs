//! Collects macro and static function definitions visible to a source file.

use std::collections::BTreeSet;

use regex::Regex;

use crate::cfront::Definitions;
use crate::repo::{RepoHandle, Result};

fn basename(p: &str) -> &str {
    p.rsplit('/').next().unwrap_or(p)
}

fn dirname(p: &str) -> &str {
    p.rsplit_once('/').map(|(d, _)| d).unwrap_or("")
}

fn is_c_like(p: &str) -> bool {
    [".c", ".h", ".cc", ".cpp", ".hh", ".hpp", ".cxx"].iter().any(|e| p.ends_with(e))
}

/// Definitions from `path` itself, then from headers it includes with
/// quotes (matched by file name anywhere in the tree, same directory
/// first), then from the other C files of its directory. Earlier sources
/// win on name clashes.
pub fn harvest_definitions(repo: &RepoHandle, commit: &str, path: &str) -> Result<Definitions> {
    let mut defs = Definitions::new();
    let Some(text) = repo.file_at(commit, path)? else { return Ok(defs) };
    defs.add_source(&text);

    let files = repo.list_files(commit)?;
    let dir = dirname(path);
    let include = Regex::new(r#"(?m)^\s*#\s*include\s*"([^"]+)""#).expect("static regex");
    let mut seen: BTreeSet<String> = BTreeSet::from([path.to_string()]);
    let mut queue: Vec<String> = include.captures_iter(&text).map(|c| c[1].to_string()).collect();
    // Headers pulled in by headers, one level deep.
    let mut depth = 0;
    while !queue.is_empty() && depth < 2 {
        let mut next = Vec::new();
        for inc in std::mem::take(&mut queue) {
            let name = basename(&inc);
            let mut cands: Vec<&String> = files.iter().filter(|f| basename(f) == name).collect();
            cands.sort_by_key(|f| (dirname(f) != dir, f.len()));
            let Some(hit) = cands.first() else { continue };
            if !seen.insert((*hit).clone()) {
                continue;
            }
            if let Some(h) = repo.file_at(commit, hit)? {
                defs.extend_missing(Definitions::from_source(&h));
                next.extend(include.captures_iter(&h).map(|c| c[1].to_string()));
            }
        }
        queue = next;
        depth += 1;
    }
    for f in files.iter().filter(|f| dirname(f) == dir && is_c_like(f) && !seen.contains(*f)) {
        if let Some(t) = repo.file_at(commit, f)? {
            defs.extend_missing(Definitions::from_source(&t));
        }
    }
    Ok(defs)
}
