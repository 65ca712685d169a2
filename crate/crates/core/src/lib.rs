//! Vulnerable version range identification for C/C++ repositories.
//!
//! Given a patch commit, the pipeline slices the patched function for the
//! statements related to the change, asks a language model which of them
//! carry the vulnerability, walks history to the commit that introduced
//! those statements (tolerating refactorings through normalized-AST clone
//! detection), and reports the release tags between that commit and the fix.

pub mod cfront;
pub mod clone;
pub mod llm;
pub mod patch;
pub mod repo;
pub mod report;
pub mod slicer;
pub mod versions;
pub mod weighting;
