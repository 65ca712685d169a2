//! Clone detection across history: line and normalized-AST similarity,
//! the weighted score, and the commit backtrace built on them.

mod backtrace;
mod score;
mod similarity;

pub use backtrace::{backtrace_vic, statement_units, BacktraceOptions, CommitComparison, HistoryTrace, StatementUnit, TerminatedReason, TracedStatement};
pub use score::{classify_match, compute_similarity_score, score_from_counts, MatchChannel, StatementMatch, Thresholds};
pub use similarity::{ast_similarity, levenshtein, line_similarity, normalized_similarity, AstComparer};

#[derive(Debug, thiserror::Error)]
pub enum CloneError {
    #[error("statement set is empty")]
    EmptySet,
    #[error("backtrace exceeded {limit} steps")]
    StepLimitExceeded { limit: usize, trace: Box<HistoryTrace> },
    #[error(transparent)]
    Repo(#[from] crate::repo::RepoError),
}
