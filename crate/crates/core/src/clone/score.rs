use serde::{Deserialize, Serialize};

use super::CloneError;
use crate::weighting::Weights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Line-similarity pre-filter.
    pub theta1: f64,
    /// Normalized-AST similarity.
    pub theta2: f64,
    /// Weighted match ratio below which a commit introduced the statements.
    pub theta3: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { theta1: 0.9, theta2: 0.8, theta3: 0.7 }
    }
}

impl Thresholds {
    /// Names of fields outside `[0, 1]`.
    pub fn invalid_fields(&self) -> Vec<&'static str> {
        let mut bad = Vec::new();
        for (name, v) in [("theta1", self.theta1), ("theta2", self.theta2), ("theta3", self.theta3)] {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                bad.push(name);
            }
        }
        bad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchChannel {
    Line,
    Ast,
    None,
}

/// Decides whether a statement survived: the line channel is tried first,
/// the AST channel only when the line pre-filter fails.
pub fn classify_match(line_score: f64, ast_score: Option<f64>, th: &Thresholds) -> (bool, MatchChannel) {
    if line_score >= th.theta1 {
        (true, MatchChannel::Line)
    } else if ast_score.is_some_and(|a| a >= th.theta2) {
        (true, MatchChannel::Ast)
    } else {
        (false, MatchChannel::None)
    }
}

/// Per-statement outcome used by the weighted score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementMatch {
    pub sv_line: u32,
    pub sensitive: bool,
    pub matched: bool,
    pub channel: MatchChannel,
    /// Best score on the deciding channel (line score when unmatched).
    pub score: f64,
}

/// `(sim_a·w_v + sim_b·w_d) / (a·w_v + b·w_d)` where `a`/`b` count sensitive
/// and plain statements and `sim_a`/`sim_b` the matched ones among them.
pub fn score_from_counts(a: usize, b: usize, sim_a: usize, sim_b: usize, w: &Weights) -> Result<f64, CloneError> {
    if a + b == 0 {
        return Err(CloneError::EmptySet);
    }
    let num = sim_a as f64 * w.weight_v + sim_b as f64 * w.weight_d;
    let den = a as f64 * w.weight_v + b as f64 * w.weight_d;
    Ok(num / den)
}

pub fn compute_similarity_score(per_statement: &[StatementMatch], w: &Weights) -> Result<f64, CloneError> {
    let a = per_statement.iter().filter(|s| s.sensitive).count();
    let b = per_statement.len() - a;
    let sim_a = per_statement.iter().filter(|s| s.sensitive && s.matched).count();
    let sim_b = per_statement.iter().filter(|s| !s.sensitive && s.matched).count();
    score_from_counts(a, b, sim_a, sim_b, w)
}
