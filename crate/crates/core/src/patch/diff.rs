//! Unified diff parsing, rendering and application.

use serde::{Deserialize, Serialize};

use super::PatchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Deleted,
    Context,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineChange {
    pub kind: ChangeKind,
    pub new_number: Option<u32>,
    pub old_number: Option<u32>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    /// Post-image path, or the pre-image path for deleted files.
    pub file_path: String,
    /// Pre-image path; `None` for added files.
    pub old_path: Option<String>,
    pub changes: Vec<LineChange>,
    pub header: String,
}

impl Hunk {
    pub fn added(&self) -> impl Iterator<Item = &LineChange> {
        self.changes.iter().filter(|c| c.kind == ChangeKind::Added)
    }

    pub fn deleted(&self) -> impl Iterator<Item = &LineChange> {
        self.changes.iter().filter(|c| c.kind == ChangeKind::Deleted)
    }
}

struct HunkHeader {
    old_start: u32,
    old_len: u32,
    new_start: u32,
    new_len: u32,
}

fn parse_range(s: &str) -> Option<(u32, u32)> {
    match s.split_once(',') {
        Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

fn parse_header(line: &str) -> Option<HunkHeader> {
    let rest = line.strip_prefix("@@ -")?;
    let (ranges, _) = rest.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    let (old_start, old_len) = parse_range(old)?;
    let (new_start, new_len) = parse_range(new)?;
    Some(HunkHeader { old_start, old_len, new_start, new_len })
}

fn strip_path(p: &str) -> Option<String> {
    let p = p.split('\t').next().unwrap_or(p).trim_end();
    if p == "/dev/null" {
        return None;
    }
    let p = p.strip_prefix("a/").or_else(|| p.strip_prefix("b/")).unwrap_or(p);
    Some(p.to_string())
}

struct Open {
    hunk: Hunk,
    old_next: u32,
    new_next: u32,
    old_left: u32,
    new_left: u32,
}

/// Parses git-style unified diff text. Header lines other than file names
/// and hunk ranges are ignored.
pub fn parse_unified_diff(diff_text: &str) -> Result<Vec<Hunk>, PatchError> {
    let mut hunks = Vec::new();
    let mut old_path: Option<String> = None;
    let mut new_path: Option<String> = None;
    let mut have_file = false;
    let mut open: Option<Open> = None;
    let mut offset = 0usize;

    for raw in diff_text.split_inclusive('\n') {
        let at = offset;
        offset += raw.len();
        let line = raw.strip_suffix('\n').unwrap_or(raw);
        let line = line.strip_suffix('\r').unwrap_or(line);

        if let Some(o) = open.as_mut() {
            if o.old_left > 0 || o.new_left > 0 {
                let (kind, text) = match line.as_bytes().first() {
                    Some(b' ') => (ChangeKind::Context, &line[1..]),
                    Some(b'+') => (ChangeKind::Added, &line[1..]),
                    Some(b'-') => (ChangeKind::Deleted, &line[1..]),
                    Some(b'\\') => continue,
                    None => (ChangeKind::Context, ""),
                    _ => return Err(PatchError::MalformedDiff { offset: at, reason: "hunk shorter than its header".into() }),
                };
                let change = match kind {
                    ChangeKind::Context if o.old_left > 0 && o.new_left > 0 => {
                        o.old_left -= 1;
                        o.new_left -= 1;
                        o.old_next += 1;
                        o.new_next += 1;
                        LineChange { kind, old_number: Some(o.old_next - 1), new_number: Some(o.new_next - 1), text: text.into() }
                    }
                    ChangeKind::Added if o.new_left > 0 => {
                        o.new_left -= 1;
                        o.new_next += 1;
                        LineChange { kind, old_number: None, new_number: Some(o.new_next - 1), text: text.into() }
                    }
                    ChangeKind::Deleted if o.old_left > 0 => {
                        o.old_left -= 1;
                        o.old_next += 1;
                        LineChange { kind, old_number: Some(o.old_next - 1), new_number: None, text: text.into() }
                    }
                    _ => {
                        return Err(PatchError::MalformedDiff { offset: at, reason: "hunk longer than its header".into() })
                    }
                };
                o.hunk.changes.push(change);
                continue;
            }
            if line.starts_with('\\') {
                continue;
            }
            hunks.push(open.take().unwrap().hunk);
        }

        if let Some(rest) = line.strip_prefix("diff --git ") {
            let (a, b) = rest.split_once(" b/").map(|(a, b)| (a.to_string(), format!("b/{b}"))).unwrap_or_default();
            old_path = strip_path(&a);
            new_path = strip_path(&b);
            have_file = true;
        } else if let Some(p) = line.strip_prefix("--- ") {
            old_path = strip_path(p);
            have_file = true;
        } else if let Some(p) = line.strip_prefix("+++ ") {
            new_path = strip_path(p);
            have_file = true;
        } else if let Some(p) = line.strip_prefix("rename from ") {
            old_path = Some(p.to_string());
        } else if let Some(p) = line.strip_prefix("rename to ") {
            new_path = Some(p.to_string());
        } else if line.starts_with("@@") {
            if !have_file {
                return Err(PatchError::MalformedDiff { offset: at, reason: "hunk before any file header".into() });
            }
            let h = parse_header(line)
                .ok_or_else(|| PatchError::MalformedDiff { offset: at, reason: "bad hunk header".into() })?;
            let file_path = new_path
                .clone()
                .or_else(|| old_path.clone())
                .ok_or_else(|| PatchError::MalformedDiff { offset: at, reason: "hunk without file path".into() })?;
            // A zero-length range names the line before the hunk.
            let old_first = if h.old_len == 0 { h.old_start + 1 } else { h.old_start };
            let new_first = if h.new_len == 0 { h.new_start + 1 } else { h.new_start };
            open = Some(Open {
                hunk: Hunk { file_path, old_path: old_path.clone(), changes: Vec::new(), header: line.to_string() },
                old_next: old_first,
                new_next: new_first,
                old_left: h.old_len,
                new_left: h.new_len,
            });
        } else if (line.starts_with('+') || line.starts_with('-')) && have_file && !hunks.is_empty() {
            return Err(PatchError::MalformedDiff { offset: at, reason: "change line outside a hunk".into() });
        }
    }
    if let Some(o) = open {
        if o.old_left > 0 || o.new_left > 0 {
            return Err(PatchError::MalformedDiff { offset: diff_text.len(), reason: "diff ends inside a hunk".into() });
        }
        hunks.push(o.hunk);
    }
    Ok(hunks)
}

/// Renders hunks back to unified diff text.
pub fn render_hunks(hunks: &[Hunk]) -> String {
    let mut out = String::new();
    let mut current: Option<(Option<&str>, &str)> = None;
    for h in hunks {
        let key = (h.old_path.as_deref(), h.file_path.as_str());
        if current != Some(key) {
            let old = h.old_path.as_deref().map(|p| format!("a/{p}")).unwrap_or_else(|| "/dev/null".into());
            out.push_str(&format!("--- {old}\n+++ b/{}\n", h.file_path));
            current = Some(key);
        }
        out.push_str(&h.header);
        out.push('\n');
        for c in &h.changes {
            out.push(match c.kind {
                ChangeKind::Added => '+',
                ChangeKind::Deleted => '-',
                ChangeKind::Context => ' ',
            });
            out.push_str(&c.text);
            out.push('\n');
        }
    }
    out
}

/// Applies the hunks of one file to its pre-image text.
pub fn apply_hunks(pre: &str, hunks: &[&Hunk]) -> Result<String, PatchError> {
    let old: Vec<&str> = pre.lines().collect();
    let mut out: Vec<String> = Vec::new();
    let mut next = 1u32;
    for h in hunks {
        let h_start = parse_header(&h.header)
            .map(|r| if r.old_len == 0 { r.old_start + 1 } else { r.old_start })
            .ok_or_else(|| PatchError::ApplyFailed(h.header.clone()))?;
        while next < h_start {
            let line = old.get(next as usize - 1).ok_or_else(|| PatchError::ApplyFailed(h.header.clone()))?;
            out.push(line.to_string());
            next += 1;
        }
        for c in &h.changes {
            if let Some(o) = c.old_number {
                while next < o {
                    let line = old.get(next as usize - 1).ok_or_else(|| PatchError::ApplyFailed(h.header.clone()))?;
                    out.push(line.to_string());
                    next += 1;
                }
                let actual = old.get(o as usize - 1).ok_or_else(|| PatchError::ApplyFailed(h.header.clone()))?;
                if *actual != c.text {
                    return Err(PatchError::ApplyFailed(format!("{}: line {o} differs", h.header)));
                }
                next = o + 1;
            }
            if c.kind != ChangeKind::Deleted {
                out.push(c.text.clone());
            }
        }
    }
    while (next as usize) <= old.len() {
        out.push(old[next as usize - 1].to_string());
        next += 1;
    }
    let mut text = out.join("\n");
    if !out.is_empty() {
        text.push('\n');
    }
    Ok(text)
}
