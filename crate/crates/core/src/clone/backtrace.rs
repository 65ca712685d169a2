//! Walks the history of the vulnerable statements back to the commit that
//! introduced them.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::score::{classify_match, compute_similarity_score, MatchChannel, StatementMatch, Thresholds};
use super::similarity::{line_similarity, AstComparer};
use super::CloneError;
use crate::cfront::{parse_function, NodeKind};
use crate::patch::PatchedFunction;
use crate::repo::{CommitId, FunctionSnapshot, RepoHandle};
use crate::slicer::header_end;
use crate::weighting::{WeightedStatement, Weights};

/// A candidate statement of the pre-image function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementUnit {
    pub start: u32,
    pub end: u32,
    pub text: String,
}

/// One S_v statement as followed through history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracedStatement {
    pub sv_line: u32,
    pub sensitive: bool,
    /// Current position and spelling; `None` once a commit introduced it.
    pub anchor: Option<StatementUnit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitComparison {
    pub commit: CommitId,
    pub parent: Option<String>,
    /// Statements of S_v as written by `commit`.
    pub post_statements: Vec<StatementUnit>,
    /// Pre-image statements matched to them.
    pub pre_statements: Vec<StatementUnit>,
    pub per_statement: Vec<StatementMatch>,
    pub similarity_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedReason {
    ScoreBelowTheta3,
    HistoryExhausted,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryTrace {
    pub function_name: String,
    pub file_path: String,
    /// Newest first.
    pub steps: Vec<CommitComparison>,
    pub vic: Option<CommitId>,
    pub terminated_reason: TerminatedReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktraceOptions {
    pub thresholds: Thresholds,
    pub weights: Weights,
    pub step_limit: usize,
    /// Appends one JSON line per comparison.
    pub trace_log: Option<PathBuf>,
}

impl Default for BacktraceOptions {
    fn default() -> Self {
        Self { thresholds: Thresholds::default(), weights: Weights::default(), step_limit: 200, trace_log: None }
    }
}

fn unit(snapshot: &FunctionSnapshot, start: u32, end: u32) -> Option<StatementUnit> {
    let lines: Vec<&str> = (start..=end).filter_map(|n| snapshot.line(n)).collect();
    (!lines.is_empty()).then(|| StatementUnit { start, end, text: lines.join("\n") })
}

fn is_brace_only(text: &str) -> bool {
    text.trim().chars().all(|c| matches!(c, '{' | '}' | ';'))
}

/// Candidate units of a function: each statement (compound statements both
/// as header and in full) and each non-trivial physical line.
pub fn statement_units(snapshot: &FunctionSnapshot) -> Vec<StatementUnit> {
    let mut spans: Vec<(u32, u32)> = Vec::new();
    if let Ok(tree) = parse_function(snapshot) {
        if let Some(root) = &tree.root {
            if let Some(body) = root.children.get(1) {
                body.walk(&mut |n| {
                    if !n.is_statement() || matches!(n.kind, NodeKind::Block | NodeKind::Empty) {
                        return;
                    }
                    let (s, e) = (n.span.start_line, n.span.end_line);
                    let compound = matches!(
                        n.kind,
                        NodeKind::If | NodeKind::While | NodeKind::For | NodeKind::DoWhile | NodeKind::Switch
                    );
                    if compound {
                        spans.push((s, header_end(n).min(e)));
                    }
                    spans.push((s, e));
                });
            }
        }
    }
    for l in &snapshot.source_lines {
        if !l.text.trim().is_empty() && !is_brace_only(&l.text) {
            spans.push((l.number, l.number));
        }
    }
    spans.sort_unstable();
    spans.dedup();
    spans.into_iter().filter_map(|(s, e)| unit(snapshot, s, e)).collect()
}

struct Best {
    matched: bool,
    channel: MatchChannel,
    score: f64,
    unit: Option<StatementUnit>,
}

fn best_match(text: &str, units: &[StatementUnit], cmp: &AstComparer, th: &Thresholds) -> Best {
    let mut line_best: Option<(f64, &StatementUnit)> = None;
    for u in units {
        let s = line_similarity(text, &u.text);
        if line_best.is_none_or(|(b, _)| s > b) {
            line_best = Some((s, u));
        }
    }
    let line_score = line_best.map(|(s, _)| s).unwrap_or(0.0);
    if line_score >= th.theta1 {
        return Best { matched: true, channel: MatchChannel::Line, score: line_score, unit: line_best.map(|(_, u)| u.clone()) };
    }
    let mut ast_best: Option<(f64, &StatementUnit)> = None;
    if cmp.sequence(text).is_ok() {
        for u in units {
            if let Ok(s) = cmp.ast_similarity(text, &u.text) {
                if ast_best.is_none_or(|(b, _)| s > b) {
                    ast_best = Some((s, u));
                }
            }
        }
    }
    let (matched, channel) = classify_match(line_score, ast_best.map(|(s, _)| s), th);
    match channel {
        MatchChannel::Ast => {
            let (s, u) = ast_best.expect("ast channel implies a score");
            Best { matched, channel, score: s, unit: Some(u.clone()) }
        }
        _ => Best { matched, channel, score: line_score, unit: None },
    }
}

fn log_step(path: &Option<PathBuf>, step: &CommitComparison) {
    let Some(path) = path else { return };
    let line = serde_json::to_string(step).expect("comparisons serialize");
    let res = std::fs::OpenOptions::new().create(true).append(true).open(path).and_then(|mut f| writeln!(f, "{line}"));
    if let Err(e) = res {
        log::warn!("cannot append to trace log {}: {e}", path.display());
    }
}

/// Follows the weighted S_v of `f` from the patch commit's parent through
/// each commit that rewrote any of its lines. A commit whose pre-image
/// matches less than `theta3` of the statements (by weight) introduced them.
pub fn backtrace_vic(
    repo: &RepoHandle,
    f: &PatchedFunction,
    sv: &[WeightedStatement],
    cmp: &AstComparer,
    opts: &BacktraceOptions,
) -> Result<HistoryTrace, CloneError> {
    if sv.is_empty() {
        return Err(CloneError::EmptySet);
    }
    let th = &opts.thresholds;
    let mut items: Vec<TracedStatement> = sv
        .iter()
        .map(|s| {
            let span = s.text.split('\n').count() as u32;
            TracedStatement {
                sv_line: s.line,
                sensitive: s.sensitive_callee.is_some(),
                anchor: Some(StatementUnit { start: s.pre_line, end: s.pre_line + span - 1, text: s.text.clone() }),
            }
        })
        .collect();
    let mut trace = HistoryTrace {
        function_name: f.function_name.clone(),
        file_path: f.file_path.clone(),
        steps: Vec::new(),
        vic: None,
        terminated_reason: TerminatedReason::HistoryExhausted,
    };
    let mut commit = f.pre_body.commit.clone();
    let mut path = f.pre_body.file_path.clone();

    loop {
        if trace.steps.len() >= opts.step_limit {
            trace.terminated_reason = TerminatedReason::StepLimit;
            return Err(CloneError::StepLimitExceeded { limit: opts.step_limit, trace: Box::new(trace) });
        }
        // Every line of every live statement, remembering its owner.
        let mut owners = Vec::new();
        let mut lines = Vec::new();
        for (i, it) in items.iter().enumerate() {
            if let Some(a) = &it.anchor {
                for l in a.start..=a.end {
                    owners.push(i);
                    lines.push(l);
                }
            }
        }
        if lines.is_empty() {
            // Only reachable with theta3 = 0: the last step lost everything.
            trace.vic = trace.steps.last().map(|s| s.commit.clone());
            trace.terminated_reason = TerminatedReason::HistoryExhausted;
            return Ok(trace);
        }
        let track = repo.track_lines(&commit, &path, &lines)?;
        let m = track.commit.clone();
        let Some((parent, ppath)) = track.parent.clone() else {
            trace.vic = Some(m);
            trace.terminated_reason = TerminatedReason::HistoryExhausted;
            return Ok(trace);
        };

        let mut changed = vec![false; items.len()];
        for (k, &i) in owners.iter().enumerate() {
            changed[i] |= track.changed[k];
        }
        let units = match repo.function_snapshot(&parent.id, &ppath, &f.function_name)? {
            Some(snap) => statement_units(&snap),
            None => Vec::new(),
        };

        let mut per_statement = Vec::new();
        let mut post_statements = Vec::new();
        let mut pre_statements = Vec::new();
        let mut next: Vec<Option<StatementUnit>> = Vec::new();
        for (i, it) in items.iter().enumerate() {
            let Some(a) = &it.anchor else {
                per_statement.push(StatementMatch { sv_line: it.sv_line, sensitive: it.sensitive, matched: false, channel: MatchChannel::None, score: 0.0 });
                next.push(None);
                continue;
            };
            let first = owners.iter().position(|&o| o == i).expect("live items own lines");
            let len = a.end - a.start;
            if !changed[i] {
                let start = track.parent_positions[first].expect("unchanged lines map to the parent");
                per_statement.push(StatementMatch { sv_line: it.sv_line, sensitive: it.sensitive, matched: true, channel: MatchChannel::Line, score: 1.0 });
                next.push(Some(StatementUnit { start, end: start + len, text: a.text.clone() }));
                continue;
            }
            let at_m = track.positions[first];
            post_statements.push(StatementUnit { start: at_m, end: at_m + len, text: a.text.clone() });
            let best = best_match(&a.text, &units, cmp, th);
            per_statement.push(StatementMatch {
                sv_line: it.sv_line,
                sensitive: it.sensitive,
                matched: best.matched,
                channel: best.channel,
                score: best.score,
            });
            match best.unit.filter(|_| best.matched) {
                Some(u) => {
                    pre_statements.push(u.clone());
                    next.push(Some(u));
                }
                None => next.push(None),
            }
        }
        let similarity_score = compute_similarity_score(&per_statement, &opts.weights)?;
        let step = CommitComparison {
            commit: m.clone(),
            parent: Some(parent.id.clone()),
            post_statements,
            pre_statements,
            per_statement,
            similarity_score,
        };
        log_step(&opts.trace_log, &step);
        trace.steps.push(step);
        if similarity_score < th.theta3 {
            trace.vic = Some(m);
            trace.terminated_reason = TerminatedReason::ScoreBelowTheta3;
            return Ok(trace);
        }
        for (it, n) in items.iter_mut().zip(next) {
            it.anchor = n;
        }
        commit = parent.id;
        path = ppath;
    }
}
