//! Per-statement weights: statements reaching a sensitive library function
//! count more towards the similarity score than plain ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cfront::{parse_snippet, Definitions, Node, NodeKind};
use crate::llm::VulnerableStatementSet;

const DEFAULT_TABLE: &str = include_str!("data/sensitive_functions.json");
const CWE_TYPES: &str = include_str!("data/cwe_types.json");

pub const INTEGER_OVERFLOW: &str = "integer_overflow";

/// Pseudo-names in the integer-overflow row that denote operators.
const OPERATOR_PATTERNS: &[(&str, &[&str])] =
    &[("add", &["+", "+="]), ("multiple", &["*", "*="]), ("bit-shifting", &["<<", "<<="])];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub weight_v: f64,
    pub weight_d: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { weight_v: 2.0, weight_d: 1.0 }
    }
}

impl Weights {
    pub fn invalid_fields(&self) -> Vec<&'static str> {
        let mut bad = Vec::new();
        if !(self.weight_v.is_finite() && self.weight_v > 0.0) {
            bad.push("weight_v");
        }
        if !(self.weight_d.is_finite() && self.weight_d > 0.0) {
            bad.push("weight_d");
        }
        bad
    }
}

/// Which table rows are consulted when a CWE hint is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// Only the hinted row.
    Gated,
    /// The hinted row; all rows when it marks nothing in the whole set.
    #[default]
    GatedWithFallback,
    /// Always every row.
    AllRows,
}

impl std::str::FromStr for GateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gated" => Ok(Self::Gated),
            "gated-with-fallback" => Ok(Self::GatedWithFallback),
            "all-rows" => Ok(Self::AllRows),
            other => Err(format!("unknown gate mode `{other}`")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WeightingError {
    #[error("sensitive function table: {0}")]
    Table(String),
}

/// Vulnerability type → sensitive function names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveFunctionTable {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl Default for SensitiveFunctionTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("bundled table is valid")
    }
}

impl SensitiveFunctionTable {
    pub fn from_json(text: &str) -> Result<Self, WeightingError> {
        let entries: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| WeightingError::Table(e.to_string()))?;
        let mut t = Self { entries: BTreeMap::new() };
        t.extend(entries);
        Ok(t)
    }

    /// Adds names to rows, creating rows as needed; duplicates are dropped.
    pub fn extend(&mut self, more: BTreeMap<String, Vec<String>>) {
        for (ty, names) in more {
            let row = self.entries.entry(ty).or_default();
            for n in names {
                if !row.contains(&n) {
                    row.push(n);
                }
            }
        }
    }

    fn rows(&self, only: Option<&str>) -> Vec<(&str, &[String])> {
        self.entries
            .iter()
            .filter(|(k, _)| only.is_none_or(|o| o == k.as_str()))
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect()
    }
}

/// Vulnerability type for a CWE identifier such as `CWE-787`.
pub fn cwe_to_type(cwe_id: &str) -> Option<String> {
    let map: BTreeMap<String, String> = serde_json::from_str(CWE_TYPES).expect("bundled CWE map is valid");
    let key = cwe_id.trim().to_ascii_uppercase();
    let key = if key.starts_with("CWE-") { key } else { format!("CWE-{key}") };
    map.get(&key).cloned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedStatement {
    pub line: u32,
    pub pre_line: u32,
    pub text: String,
    pub weight: f64,
    pub sensitive_callee: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightingConfig {
    pub gate: GateMode,
    /// Levels of repository definitions searched behind a call.
    pub wrapper_depth: u32,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        Self { gate: GateMode::GatedWithFallback, wrapper_depth: 1 }
    }
}

fn direct_callees(n: &Node) -> Vec<&str> {
    let mut out = Vec::new();
    n.walk(&mut |x| {
        if x.kind == NodeKind::Call {
            if let Some(c) = x.children.first().filter(|c| c.kind == NodeKind::Ident) {
                out.push(c.text());
            }
        }
    });
    out
}

fn uses_operator(n: &Node, ops: &[&str]) -> bool {
    n.any(&|x| matches!(x.kind, NodeKind::Binary | NodeKind::Assign) && ops.contains(&x.text()))
}

/// Sensitive name reached by a statement, directly or through repository
/// definitions up to `wrapper_depth` levels deep.
pub fn detect_sensitive_calls(
    stmt: &Node,
    table: &SensitiveFunctionTable,
    repo_defs: &Definitions,
    cwe_hint: Option<&str>,
    wrapper_depth: u32,
) -> Option<String> {
    let rows = table.rows(cwe_hint.filter(|h| table.entries.contains_key(*h)));
    let names: Vec<&str> = rows
        .iter()
        .flat_map(|(_, r)| r.iter().map(String::as_str))
        .filter(|n| !OPERATOR_PATTERNS.iter().any(|(p, _)| p == n))
        .collect();
    let callees = direct_callees(stmt);
    if let Some(hit) = callees.iter().find(|c| names.contains(c)) {
        return Some(hit.to_string());
    }
    if cwe_hint == Some(INTEGER_OVERFLOW) {
        let row = rows.iter().find(|(k, _)| *k == INTEGER_OVERFLOW).map(|(_, r)| *r).unwrap_or(&[]);
        for (pseudo, ops) in OPERATOR_PATTERNS {
            if row.iter().any(|n| n == pseudo) && uses_operator(stmt, ops) {
                return Some(pseudo.to_string());
            }
        }
    }
    let mut frontier: Vec<String> = callees.iter().map(|c| c.to_string()).collect();
    let mut seen: Vec<String> = frontier.clone();
    for _ in 0..wrapper_depth {
        let mut next = Vec::new();
        for name in &frontier {
            let Some(def) = repo_defs.get(name) else { continue };
            let inner = def.callees();
            if let Some(hit) = inner.iter().find(|c| names.contains(&c.as_str())) {
                return Some(hit.clone());
            }
            for c in inner {
                if !seen.contains(&c) {
                    seen.push(c.clone());
                    next.push(c);
                }
            }
        }
        frontier = next;
    }
    None
}

fn statement_tree(text: &str) -> Option<Node> {
    let stmts = parse_snippet(text).ok()?;
    let span = stmts.first()?.span;
    Some(Node::new(NodeKind::Block, span, stmts))
}

/// Weights every statement of `sv`.
pub fn assign_weights(
    sv: &VulnerableStatementSet,
    table: &SensitiveFunctionTable,
    repo_defs: &Definitions,
    cwe_hint: Option<&str>,
    weights: &Weights,
    cfg: &WeightingConfig,
) -> Vec<WeightedStatement> {
    let trees: Vec<Option<Node>> = sv.statements.iter().map(|s| statement_tree(&s.text)).collect();
    let detect = |hint: Option<&str>| -> Vec<Option<String>> {
        trees
            .iter()
            .map(|t| t.as_ref().and_then(|t| detect_sensitive_calls(t, table, repo_defs, hint, cfg.wrapper_depth)))
            .collect()
    };
    let hint = match cfg.gate {
        GateMode::AllRows => None,
        _ => cwe_hint,
    };
    let mut found = detect(hint);
    if cfg.gate == GateMode::GatedWithFallback && hint.is_some() && found.iter().all(Option::is_none) {
        found = detect(None);
    }
    sv.statements
        .iter()
        .zip(found)
        .map(|(s, callee)| WeightedStatement {
            line: s.line,
            pre_line: s.pre_line,
            text: s.text.clone(),
            weight: if callee.is_some() { weights.weight_v } else { weights.weight_d },
            sensitive_callee: callee,
        })
        .collect()
}
