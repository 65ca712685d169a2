//! Owned syntax tree used by every analysis downstream of the parser.
//!
//! Parentheses and punctuation are dropped during lowering; operators become
//! the interior node itself, so `a + b` is a `+` node with two leaf children.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Line/column range, 1-based lines and 0-based columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> Self {
        Self { start_line, start_col, end_line, end_col }
    }

    pub fn contains(&self, other: &Span) -> bool {
        (self.start_line, self.start_col) <= (other.start_line, other.start_col)
            && (other.end_line, other.end_col) <= (self.end_line, self.end_col)
    }

    pub fn lines(&self) -> std::ops::RangeInclusive<u32> {
        self.start_line..=self.end_line
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    /// `text` holds the function name; children are `[Params, Block]`.
    FunctionDef,
    Params,
    Block,
    /// `[cond, then]` or `[cond, then, else]`.
    If,
    /// `[cond, body]`.
    While,
    /// `[body, cond]`.
    DoWhile,
    /// `[init, cond, update, body]`, absent parts are `Empty`.
    For,
    /// `[cond, body]`.
    Switch,
    /// `[value, stmts..]`.
    Case,
    /// `[stmts..]`.
    Default,
    Break,
    Continue,
    /// `[]` or `[expr]`.
    Return,
    /// `text` is the label.
    Goto,
    /// `text` is the label; `[stmt]`.
    Labeled,
    /// `[expr]`.
    ExprStmt,
    /// `[Type, declarators..]`.
    Decl,
    /// Initialized declarator, `[Ident, value]`.
    Init,
    Empty,
    Ident,
    Number,
    Str,
    Char,
    FieldName,
    Type,
    /// `text` is the operator.
    Binary,
    /// `text` is one of `-`, `+`, `!`, `~`, `*`, `&`.
    Unary,
    /// `text` is `++` or `--`; prefix forms use `pre++` / `pre--`.
    Update,
    /// `text` is `=` or a compound operator such as `+=`.
    Assign,
    /// `[callee, args..]`.
    Call,
    /// `text` is `->` or `.`; `[base, FieldName]`.
    Field,
    /// `[base, index]`.
    Index,
    /// `[cond, then, else]`.
    Cond,
    /// `[Type, expr]`.
    Cast,
    Sizeof,
    Comma,
    InitList,
    /// Anything the lowering does not model; `text` is the grammar kind.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub text: Option<String>,
    pub span: Span,
    pub children: Vec<Node>,
}

impl Node {
    pub fn new(kind: NodeKind, span: Span, children: Vec<Node>) -> Self {
        Self { kind, text: None, span, children }
    }

    pub fn with_text(kind: NodeKind, text: impl Into<String>, span: Span, children: Vec<Node>) -> Self {
        Self { kind, text: Some(text.into()), span, children }
    }

    pub fn leaf(kind: NodeKind, text: impl Into<String>, span: Span) -> Self {
        Self::with_text(kind, text, span, Vec::new())
    }

    pub fn empty(span: Span) -> Self {
        Self::new(NodeKind::Empty, span, Vec::new())
    }

    pub fn text(&self) -> &str {
        self.text.as_deref().unwrap_or("")
    }

    pub fn is(&self, kind: NodeKind) -> bool {
        self.kind == kind
    }

    pub fn is_op(&self, kind: NodeKind, op: &str) -> bool {
        self.kind == kind && self.text() == op
    }

    /// Sequence label. Leaves carry their token spelling, operator nodes
    /// their operator, other interior nodes their kind.
    pub fn label(&self) -> String {
        use NodeKind::*;
        match self.kind {
            Ident | Number | Str | Char | FieldName | Type => self.text().to_string(),
            Binary | Assign | Field => self.text().to_string(),
            Update => self.text().to_string(),
            Unary => match self.text() {
                "-" => "neg".into(),
                "+" => "pos".into(),
                "*" => "deref".into(),
                "&" => "addr".into(),
                op => op.to_string(),
            },
            FunctionDef => "function".into(),
            Params => "params".into(),
            Block => "block".into(),
            If => "if".into(),
            While => "while".into(),
            DoWhile => "do".into(),
            For => "for".into(),
            Switch => "switch".into(),
            Case => "case".into(),
            Default => "default".into(),
            Break => "break".into(),
            Continue => "continue".into(),
            Return => "return".into(),
            Goto => "goto".into(),
            Labeled => "label".into(),
            ExprStmt => "stmt".into(),
            Decl => "decl".into(),
            Init => "init".into(),
            Empty => "empty".into(),
            Call => "call".into(),
            Index => "[]".into(),
            Cond => "?:".into(),
            Cast => "cast".into(),
            Sizeof => "sizeof".into(),
            Comma => ",".into(),
            InitList => "{}".into(),
            Other => format!("<{}>", self.text()),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(Node::node_count).sum::<usize>()
    }

    /// Pre-order walk.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn any(&self, pred: &impl Fn(&Node) -> bool) -> bool {
        pred(self) || self.children.iter().any(|c| c.any(pred))
    }

    pub fn contains_call(&self) -> bool {
        self.any(&|n| n.kind == NodeKind::Call)
    }

    /// True when evaluating the subtree may write program state directly.
    pub fn has_side_effects(&self) -> bool {
        self.any(&|n| matches!(n.kind, NodeKind::Assign | NodeKind::Update))
    }

    /// Canonical s-expression; used as the ordering key for commutative
    /// operands and for structural comparison.
    pub fn key(&self) -> String {
        let mut s = String::new();
        self.write_key(&mut s);
        s
    }

    fn write_key(&self, out: &mut String) {
        out.push_str(&self.label());
        if !self.children.is_empty() {
            out.push('(');
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                c.write_key(out);
            }
            out.push(')');
        }
    }

    /// Structural equality ignoring spans.
    pub fn same_shape(&self, other: &Node) -> bool {
        self.kind == other.kind
            && self.text == other.text
            && self.children.len() == other.children.len()
            && self.children.iter().zip(&other.children).all(|(a, b)| a.same_shape(b))
    }

    pub(crate) fn set_span_recursive(&mut self, span: Span) {
        self.span = span;
        for c in &mut self.children {
            c.set_span_recursive(span);
        }
    }

    /// Name of the leftmost identifier reached through field, index,
    /// dereference and cast nodes, i.e. the variable a write lands in.
    pub fn base_identifier(&self) -> Option<&str> {
        match self.kind {
            NodeKind::Ident => Some(self.text()),
            NodeKind::Field | NodeKind::Index => self.children.first()?.base_identifier(),
            NodeKind::Unary if self.text() == "*" || self.text() == "&" => self.children.first()?.base_identifier(),
            NodeKind::Cast => self.children.get(1)?.base_identifier(),
            NodeKind::Update => self.children.first()?.base_identifier(),
            _ => None,
        }
    }

    pub fn is_statement(&self) -> bool {
        use NodeKind::*;
        matches!(
            self.kind,
            Block | If | While | DoWhile | For | Switch | Case | Default | Break | Continue | Return | Goto
                | Labeled | ExprStmt | Decl | Empty
        ) || (self.kind == Other && self.text() == "error_statement")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// A possibly empty rooted tree.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SyntaxTree {
    pub root: Option<Node>,
}

impl SyntaxTree {
    pub fn new(root: Node) -> Self {
        Self { root: Some(root) }
    }

    pub fn empty() -> Self {
        Self { root: None }
    }

    pub fn node_count(&self) -> usize {
        self.root.as_ref().map_or(0, Node::node_count)
    }

    /// Function name when the root is a function definition.
    pub fn function_name(&self) -> Option<&str> {
        self.root.as_ref().filter(|r| r.kind == NodeKind::FunctionDef).map(Node::text)
    }

    pub fn same_shape(&self, other: &SyntaxTree) -> bool {
        match (&self.root, &other.root) {
            (None, None) => true,
            (Some(a), Some(b)) => a.same_shape(b),
            _ => false,
        }
    }
}
