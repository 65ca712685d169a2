//! Dangerous-flow extraction: backward and forward slices of a patched
//! function seeded by its changed lines and the variables they mention.

mod pdg;

pub(crate) use pdg::header_end;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cfront::{parse_function, CFrontError};
use crate::patch::{ChangeKind, FunctionView, PatchedFunction};

pub use pdg::{build_pdg, DataEdge, DependenceGraph, Env, PdgNode, StatementKind, ENTRY};

#[derive(Debug, thiserror::Error)]
pub enum SliceError {
    #[error(transparent)]
    Parse(#[from] CFrontError),
    #[error("slicing {0} produced no pre-patch statements")]
    EmptyFlow(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceCriterion {
    pub seed_lines: BTreeSet<u32>,
    pub seed_variables: BTreeSet<String>,
}

/// Definitions of `var` on the path into any seed line, plus those made by
/// seed lines themselves.
fn seed_definitions(g: &DependenceGraph, c: &SliceCriterion) -> BTreeMap<String, BTreeSet<u32>> {
    let mut out: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for s in &c.seed_lines {
        if let Some(env) = g.reaching.get(s) {
            for v in &c.seed_variables {
                out.entry(v.clone()).or_default().extend(env.get(v).into_iter().flatten());
            }
        }
        if let Some(n) = g.nodes.get(s) {
            for v in n.defs.intersection(&c.seed_variables) {
                out.entry(v.clone()).or_default().insert(*s);
            }
        }
    }
    out
}

/// Lines the criterion depends on: definitions feeding the seeds, closed
/// transitively over data edges, plus the conditions governing the seeds.
pub fn backward_slice(g: &DependenceGraph, c: &SliceCriterion) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    let mut work: Vec<u32> = Vec::new();
    for defs in seed_definitions(g, c).values() {
        work.extend(defs);
    }
    for e in &g.data_edges {
        if c.seed_lines.contains(&e.to) {
            work.push(e.from);
        }
    }
    while let Some(l) = work.pop() {
        if l == ENTRY || c.seed_lines.contains(&l) || !out.insert(l) {
            continue;
        }
        for e in &g.data_edges {
            if e.to == l {
                work.push(e.from);
            }
        }
    }
    for s in &c.seed_lines {
        out.extend(g.governing(*s));
    }
    out.retain(|l| *l != ENTRY && !c.seed_lines.contains(l));
    out
}

/// Forward slice split by how each line was reached.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForwardSlice {
    pub data: BTreeSet<u32>,
    pub control: BTreeSet<u32>,
}

impl ForwardSlice {
    pub fn lines(&self) -> BTreeSet<u32> {
        self.data.union(&self.control).copied().collect()
    }
}

/// Statements affected by the criterion: readers of criterion variables
/// after the first seed (assigned variables joining the criterion), and
/// everything nested under an included condition.
pub fn forward_slice_detailed(g: &DependenceGraph, c: &SliceCriterion) -> ForwardSlice {
    let Some(&first) = c.seed_lines.iter().next() else { return ForwardSlice::default() };
    let seed_defs = seed_definitions(g, c);
    let mut included: BTreeSet<u32> = c.seed_lines.clone();
    let mut data = BTreeSet::new();
    let mut control = BTreeSet::new();
    let mut vars: BTreeSet<String> = c.seed_variables.clone();
    loop {
        let mut changed = false;
        for (&line, node) in &g.nodes {
            if included.contains(&line) {
                continue;
            }
            let reach = g.reaching.get(&line);
            let hit = line > first
                && node.uses.iter().any(|v| {
                    let defs = reach.and_then(|r| r.get(v));
                    let from_slice = defs.is_some_and(|d| d.iter().any(|x| included.contains(x)));
                    let from_seed = c.seed_variables.contains(v)
                        && match defs {
                            None => true,
                            Some(d) => d.iter().any(|x| seed_defs.get(v).is_some_and(|s| s.contains(x))),
                        };
                    vars.contains(v) && (from_slice || from_seed)
                });
            if hit {
                included.insert(line);
                data.insert(line);
                vars.extend(node.defs.iter().cloned());
                changed = true;
            }
        }
        let headers: Vec<u32> = included.iter().copied().filter(|l| g.is_header(*l)).collect();
        for h in headers {
            for s in g.nested(h) {
                if included.insert(s) {
                    control.insert(s);
                    if let Some(n) = g.nodes.get(&s) {
                        vars.extend(n.defs.iter().cloned());
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    ForwardSlice { data, control }
}

pub fn forward_slice(g: &DependenceGraph, c: &SliceCriterion) -> BTreeSet<u32> {
    forward_slice_detailed(g, c).lines()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowOrigin {
    Seed,
    Backward,
    ForwardData,
    ForwardControl,
}

/// One statement of the dangerous flow. Line numbers follow the function's
/// merged diff view; `pre_line` is the pre-patch line where one exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowStatement {
    pub line: u32,
    pub end_line: u32,
    pub pre_line: Option<u32>,
    pub kind: ChangeKind,
    pub text: String,
    pub origin: FlowOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DangerousFlow {
    pub function_name: String,
    pub file_path: String,
    pub commit: String,
    pub statements: Vec<FlowStatement>,
}

impl DangerousFlow {
    /// Statement covering view line `line`.
    pub fn statement_at(&self, line: u32) -> Option<&FlowStatement> {
        self.statements.iter().find(|s| (s.line..=s.end_line).contains(&line))
    }

    pub fn lines(&self) -> BTreeSet<u32> {
        self.statements.iter().map(|s| s.line).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Both,
    Backward,
    Forward,
}

/// Slices a patched function. Functions with deleted lines are sliced on
/// their pre-patch body; insertion-only functions on the post-patch body,
/// mapped back through the unchanged lines.
pub fn extract_dangerous_flow(f: &PatchedFunction, direction: Direction) -> Result<DangerousFlow, SliceError> {
    let view = f.view();
    let on_pre = !f.deleted.is_empty();
    let body = if on_pre { &f.pre_body } else { &f.post_body };
    let g = build_pdg(&parse_function(body)?);
    let seeds: BTreeSet<u32> = if on_pre { f.deleted.clone() } else { f.added.clone() };
    let criterion = SliceCriterion { seed_lines: seeds.clone(), seed_variables: f.patch_variables.clone() };

    let mut origin: BTreeMap<u32, FlowOrigin> = seeds.iter().map(|s| (*s, FlowOrigin::Seed)).collect();
    if direction != Direction::Forward {
        for l in backward_slice(&g, &criterion) {
            origin.entry(l).or_insert(FlowOrigin::Backward);
        }
    }
    if direction != Direction::Backward {
        let fw = forward_slice_detailed(&g, &criterion);
        for l in fw.data {
            origin.entry(l).or_insert(FlowOrigin::ForwardData);
        }
        for l in fw.control {
            origin.entry(l).or_insert(FlowOrigin::ForwardControl);
        }
    }

    let to_view = |l: u32| if on_pre { view.from_old(l) } else { view.from_new(l) };
    let mut statements = Vec::new();
    for (&l, &o) in &origin {
        let end = g.nodes.get(&l).map(|n| n.end_line).unwrap_or(l).max(l);
        if let Some(s) = view_statement(&view, (l..=end).filter_map(to_view), o) {
            statements.push(s);
        }
    }
    if on_pre {
        // Added lines of a mixed patch are shown alongside, never selected.
        for &a in &f.added {
            if let Some(s) = view_statement(&view, view.from_new(a), FlowOrigin::Seed) {
                statements.push(s);
            }
        }
    }
    statements.sort_by_key(|s| s.line);
    statements.dedup_by_key(|s| s.line);
    if statements.iter().all(|s| s.pre_line.is_none()) {
        return Err(SliceError::EmptyFlow(f.function_name.clone()));
    }
    Ok(DangerousFlow {
        function_name: f.function_name.clone(),
        file_path: f.file_path.clone(),
        commit: f.post_body.commit.clone(),
        statements,
    })
}

fn view_statement(view: &FunctionView, lines: impl IntoIterator<Item = u32>, origin: FlowOrigin) -> Option<FlowStatement> {
    let rows: Vec<_> = lines.into_iter().filter_map(|n| view.get(n)).collect();
    let first = rows.first()?;
    let last = rows.last()?;
    Some(FlowStatement {
        line: first.number,
        end_line: last.number,
        pre_line: first.old_number.filter(|_| first.kind != ChangeKind::Added),
        kind: first.kind,
        text: rows.iter().map(|r| r.text.as_str()).collect::<Vec<_>>().join("\n"),
        origin,
    })
}
