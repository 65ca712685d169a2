use std::collections::HashMap;
use std::sync::Mutex;

use crate::cfront::{
    ast_to_sequence, inline_expand, normalize_ast, parse_snippet, CFrontError, Definitions, InlineConfig, Node, NodeKind,
    SyntaxTree,
};

/// Unit-cost edit distance between two sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`, with two empty inputs counting as identical.
pub fn normalized_similarity<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

pub(crate) fn squeeze_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Character-level similarity of two source lines after collapsing runs of
/// whitespace.
pub fn line_similarity(sv_text: &str, candidate: &str) -> f64 {
    let a: Vec<char> = squeeze_whitespace(sv_text).chars().collect();
    let b: Vec<char> = squeeze_whitespace(candidate).chars().collect();
    normalized_similarity(&a, &b)
}

/// Parses, expands, normalizes and sequences statement fragments, caching
/// the label sequence per fragment text.
pub struct AstComparer {
    defs: Definitions,
    inline: InlineConfig,
    cache: Mutex<HashMap<String, Result<Vec<String>, CFrontError>>>,
}

impl std::fmt::Debug for AstComparer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AstComparer").field("definitions", &self.defs.len()).field("inline", &self.inline).finish()
    }
}

impl AstComparer {
    pub fn new(defs: Definitions, inline: InlineConfig) -> Self {
        Self { defs, inline, cache: Mutex::new(HashMap::new()) }
    }

    pub fn definitions(&self) -> &Definitions {
        &self.defs
    }

    /// Normalized label sequence of a statement fragment.
    pub fn sequence(&self, text: &str) -> Result<Vec<String>, CFrontError> {
        let key = squeeze_whitespace(text);
        if let Some(hit) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return hit.clone();
        }
        let computed = self.compute(&key);
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, computed.clone());
        computed
    }

    fn compute(&self, text: &str) -> Result<Vec<String>, CFrontError> {
        let stmts = parse_snippet(text)?;
        let root = match stmts.len() {
            1 => stmts.into_iter().next().unwrap(),
            _ => {
                let span = stmts.first().map(|s| s.span).unwrap_or_default();
                Node::new(NodeKind::Block, span, stmts)
            }
        };
        let expanded = inline_expand(&SyntaxTree::new(root), &self.defs, &self.inline);
        let normalized = normalize_ast(&expanded);
        Ok(ast_to_sequence(&normalized).labels)
    }

    /// Similarity of the normalized label sequences of two statements.
    pub fn ast_similarity(&self, sv: &str, si: &str) -> Result<f64, CFrontError> {
        let a = self.sequence(sv)?;
        let b = self.sequence(si)?;
        Ok(normalized_similarity(&a, &b))
    }
}

/// One-shot convenience wrapper around [`AstComparer::ast_similarity`].
pub fn ast_similarity(sv: &str, si: &str, defs: &Definitions, inline: &InlineConfig) -> Result<f64, CFrontError> {
    AstComparer::new(defs.clone(), *inline).ast_similarity(sv, si)
}
