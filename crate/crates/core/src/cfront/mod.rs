//! C front-end: parsing, inline expansion, normalization and sequencing.

mod defs;
mod inline;
mod normalize;
mod parse;
mod sequence;
mod tree;

pub use defs::{Definition, Definitions};
pub use inline::{inline_expand, inline_expand_logged, InlineConfig, InlineWarning};
pub use normalize::{normalize_ast, NormalizedAst};
pub use parse::{find_functions, parse_expression, parse_function, parse_function_text, parse_snippet, FunctionLocation};
pub use sequence::{ast_to_sequence, AstSequence};
pub use tree::{Node, NodeKind, Span, SyntaxTree};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CFrontError {
    #[error("unparseable C source: {0}")]
    Unparseable(String),
}

/// C keywords, excluded from identifier harvesting.
pub const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
    "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "_Bool",
    "_Complex", "_Imaginary", "bool", "true", "false", "NULL",
];

/// Identifier tokens of a source fragment, keywords and literals removed,
/// in first-occurrence order.
pub fn identifiers(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'"' || c == b'\'' {
            // Skip string and character literals.
            let q = c;
            i += 1;
            while i < bytes.len() && bytes[i] != q {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            break;
        } else if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                i += 1;
            }
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            if !C_KEYWORDS.contains(&word) && !out.iter().any(|w| w == word) {
                out.push(word.to_string());
            }
        } else {
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers_skip_keywords_and_literals() {
        let ids = identifiers(r#"if (item_num > 65536 || item_num < 0) { av_log(x, "bad %d", 0x1f); }"#);
        assert_eq!(ids, ["item_num", "av_log", "x"]);
    }
}
