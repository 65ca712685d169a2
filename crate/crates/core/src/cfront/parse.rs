//! Lowering from the tree-sitter C grammar to the owned [`Node`] tree.

use std::cell::RefCell;

use tree_sitter::{Node as TsNode, Parser, Tree};

use super::tree::{Node, NodeKind, Span, SyntaxTree};
use super::CFrontError;
use crate::repo::FunctionSnapshot;

const SHELL_NAME: &str = "__vulnspan_shell";

thread_local! {
    static PARSER: RefCell<Parser> = RefCell::new({
        let mut p = Parser::new();
        p.set_language(&tree_sitter_c::LANGUAGE.into()).expect("tree-sitter-c grammar is ABI compatible");
        p
    });
}

pub(crate) fn ts_tree(text: &str) -> Tree {
    ts_parse(text)
}

fn ts_parse(text: &str) -> Tree {
    PARSER.with(|p| p.borrow_mut().parse(text, None)).expect("parser has a language and no timeout")
}

/// A function definition located in a source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionLocation {
    pub name: String,
    pub start_line: u32,
    pub end_line: u32,
    pub is_static: bool,
}

/// Lists every function definition in a translation unit, in source order.
pub fn find_functions(source: &str) -> Vec<FunctionLocation> {
    let tree = ts_parse(source);
    let mut out = Vec::new();
    collect_functions(tree.root_node(), source.as_bytes(), &mut out);
    out
}

fn collect_functions(node: TsNode, src: &[u8], out: &mut Vec<FunctionLocation>) {
    let mut cursor = node.walk();
    for child in node.named_children(&mut cursor) {
        match child.kind() {
            "function_definition" => {
                if let Some(name) = child.child_by_field_name("declarator").and_then(|d| declarator_name(d, src)) {
                    out.push(FunctionLocation {
                        name,
                        start_line: child.start_position().row as u32 + 1,
                        end_line: child.end_position().row as u32 + 1,
                        is_static: has_storage_class(child, src, "static"),
                    });
                }
            }
            // Definitions under `#ifdef`, `extern "C"` and recovered regions.
            "preproc_if" | "preproc_ifdef" | "preproc_else" | "preproc_elif" | "linkage_specification"
            | "declaration_list" | "ERROR" => collect_functions(child, src, out),
            _ => {}
        }
    }
}

pub(crate) fn has_storage_class(node: TsNode, src: &[u8], class: &str) -> bool {
    let mut cursor = node.walk();
    let found = node
        .named_children(&mut cursor)
        .any(|c| c.kind() == "storage_class_specifier" && text_of(c, src) == class);
    found
}

/// Parses the function held by a snapshot; spans refer to the snapshot's
/// own line numbers.
pub fn parse_function(snapshot: &FunctionSnapshot) -> Result<SyntaxTree, CFrontError> {
    let first = snapshot.first_line().unwrap_or(1);
    parse_function_text(&snapshot.text(), first)
}

/// Parses the first function definition in `text`, numbering lines from
/// `first_line`.
pub fn parse_function_text(text: &str, first_line: u32) -> Result<SyntaxTree, CFrontError> {
    let tree = ts_parse(text);
    let src = text.as_bytes();
    let def = first_function(tree.root_node()).ok_or_else(|| CFrontError::Unparseable("no function definition found".into()))?;
    let lowerer = Lowerer { src, line_offset: first_line as i64 - 1 };
    Ok(SyntaxTree::new(lowerer.function(def)))
}

fn first_function(node: TsNode) -> Option<TsNode> {
    let mut cursor = node.walk();
    let children: Vec<TsNode> = node.named_children(&mut cursor).collect();
    for child in children {
        match child.kind() {
            "function_definition" => return Some(child),
            "preproc_if" | "preproc_ifdef" | "linkage_specification" | "declaration_list" | "ERROR" => {
                if let Some(f) = first_function(child) {
                    return Some(f);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses a statement fragment such as a single diff line. Unclosed braces
/// and parentheses are completed, a leading `}` is dropped and a missing
/// terminating `;` appended. Lines are numbered from 1.
pub fn parse_snippet(text: &str) -> Result<Vec<Node>, CFrontError> {
    let body = complete_fragment(text);
    let shell = format!("void {SHELL_NAME}(void) {{\n{body}\n}}\n");
    let tree = ts_parse(&shell);
    if tree.root_node().has_error() {
        return Err(CFrontError::Unparseable(format!("statement fragment `{}`", text.trim())));
    }
    let def = first_function(tree.root_node()).ok_or_else(|| CFrontError::Unparseable(text.trim().to_string()))?;
    let lowerer = Lowerer { src: shell.as_bytes(), line_offset: -1 };
    let func = lowerer.function(def);
    let block = func.children.into_iter().nth(1).expect("lowered function has params and body");
    Ok(block.children)
}

fn complete_fragment(text: &str) -> String {
    let mut body = text.trim().to_string();
    while let Some(rest) = body.strip_prefix('}') {
        body = rest.trim_start().to_string();
    }
    let (mut braces, mut parens) = (0i32, 0i32);
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for ch in body.chars() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == q {
                quote = None;
            }
            continue;
        }
        match ch {
            '"' | '\'' => quote = Some(ch),
            '{' => braces += 1,
            '}' => braces -= 1,
            '(' => parens += 1,
            ')' => parens -= 1,
            _ => {}
        }
    }
    for _ in 0..parens.max(0) {
        body.push(')');
    }
    let terminated = body.is_empty() || body.ends_with(';') || body.ends_with('}') || body.ends_with('{') || body.ends_with(':');
    if !terminated && !body.starts_with('#') {
        body.push(';');
    }
    for _ in 0..braces.max(0) {
        body.push_str("\n}");
    }
    body
}

/// Parses an expression fragment, e.g. a macro replacement list.
pub fn parse_expression(text: &str) -> Result<Node, CFrontError> {
    let stmts = parse_snippet(&format!("({});", text.trim()))?;
    match stmts.into_iter().next() {
        Some(Node { kind: NodeKind::ExprStmt, mut children, .. }) if children.len() == 1 => Ok(children.remove(0)),
        _ => Err(CFrontError::Unparseable(format!("expression `{}`", text.trim()))),
    }
}

pub(crate) fn text_of<'a>(node: TsNode, src: &'a [u8]) -> &'a str {
    node.utf8_text(src).unwrap_or("")
}

pub(crate) fn declarator_name(node: TsNode, src: &[u8]) -> Option<String> {
    match node.kind() {
        "identifier" | "field_identifier" | "type_identifier" => Some(text_of(node, src).to_string()),
        "function_declarator" | "pointer_declarator" | "array_declarator" | "init_declarator" | "attributed_declarator" => {
            declarator_name(node.child_by_field_name("declarator")?, src)
        }
        "parenthesized_declarator" => {
            let mut cursor = node.walk();
            let inner = node.named_children(&mut cursor).next()?;
            declarator_name(inner, src)
        }
        _ => None,
    }
}

fn squeeze(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Lowerer<'a> {
    src: &'a [u8],
    line_offset: i64,
}

impl Lowerer<'_> {
    fn span(&self, n: TsNode) -> Span {
        let s = n.start_position();
        let e = n.end_position();
        let line = |row: usize| (row as i64 + 1 + self.line_offset).max(0) as u32;
        Span::new(line(s.row), s.column as u32, line(e.row), e.column as u32)
    }

    fn text(&self, n: TsNode) -> &str {
        text_of(n, self.src)
    }

    fn named<'t>(&self, n: TsNode<'t>) -> Vec<TsNode<'t>> {
        let mut cursor = n.walk();
        let v = n.named_children(&mut cursor).filter(|c| c.kind() != "comment").collect();
        v
    }

    fn function(&self, def: TsNode) -> Node {
        let span = self.span(def);
        let name = def
            .child_by_field_name("declarator")
            .and_then(|d| declarator_name(d, self.src))
            .unwrap_or_default();
        let params = def
            .child_by_field_name("declarator")
            .and_then(find_function_declarator)
            .and_then(|f| f.child_by_field_name("parameters"))
            .map(|p| self.params(p))
            .unwrap_or_else(|| Node::new(NodeKind::Params, span, Vec::new()));
        let body = def
            .child_by_field_name("body")
            .map(|b| self.stmt(b))
            .unwrap_or_else(|| Node::new(NodeKind::Block, span, Vec::new()));
        Node::with_text(NodeKind::FunctionDef, name, span, vec![params, body])
    }

    fn params(&self, list: TsNode) -> Node {
        let span = self.span(list);
        let mut out = Vec::new();
        for p in self.named(list) {
            if p.kind() != "parameter_declaration" {
                continue;
            }
            let ty = p.child_by_field_name("type").map(|t| squeeze(self.text(t))).unwrap_or_default();
            let Some(decl) = p.child_by_field_name("declarator") else {
                continue; // `void` or unnamed parameter
            };
            let Some(name) = declarator_name(decl, self.src) else { continue };
            let s = self.span(p);
            out.push(Node::new(
                NodeKind::Decl,
                s,
                vec![Node::leaf(NodeKind::Type, ty, s), Node::leaf(NodeKind::Ident, name, self.span(decl))],
            ));
        }
        Node::new(NodeKind::Params, span, out)
    }

    fn block_of(&self, n: TsNode) -> Vec<Node> {
        let mut out = Vec::new();
        for c in self.named(n) {
            self.push_stmt(c, &mut out);
        }
        out
    }

    fn push_stmt(&self, c: TsNode, out: &mut Vec<Node>) {
        match c.kind() {
            "preproc_if" | "preproc_ifdef" | "preproc_else" | "preproc_elif" | "preproc_elifdef" => {
                // Keep every conditional-compilation branch inline.
                for inner in self.named(c) {
                    if c.child_by_field_name("condition").map(|x| x.id()) == Some(inner.id())
                        || c.child_by_field_name("name").map(|x| x.id()) == Some(inner.id())
                    {
                        continue;
                    }
                    self.push_stmt(inner, out);
                }
            }
            k if k.starts_with("preproc_") => {}
            "identifier" | "number_literal" | "string_literal" => {}
            _ => out.push(self.stmt(c)),
        }
    }

    fn stmt(&self, n: TsNode) -> Node {
        let span = self.span(n);
        let field = |name: &str| n.child_by_field_name(name);
        match n.kind() {
            "compound_statement" => Node::new(NodeKind::Block, span, self.block_of(n)),
            "expression_statement" => match self.named(n).first() {
                Some(e) => Node::new(NodeKind::ExprStmt, span, vec![self.expr(*e)]),
                None => Node::empty(span),
            },
            "if_statement" => {
                let mut ch = vec![self.opt_expr(field("condition"), span), self.opt_stmt(field("consequence"), span)];
                if let Some(alt) = field("alternative") {
                    let inner = if alt.kind() == "else_clause" { self.named(alt).first().copied() } else { Some(alt) };
                    ch.push(self.opt_stmt(inner, span));
                }
                Node::new(NodeKind::If, span, ch)
            }
            "while_statement" => Node::new(
                NodeKind::While,
                span,
                vec![self.opt_expr(field("condition"), span), self.opt_stmt(field("body"), span)],
            ),
            "do_statement" => Node::new(
                NodeKind::DoWhile,
                span,
                vec![self.opt_stmt(field("body"), span), self.opt_expr(field("condition"), span)],
            ),
            "for_statement" => {
                let init = match field("initializer") {
                    Some(i) if i.kind() == "declaration" => self.stmt(i),
                    Some(i) => Node::new(NodeKind::ExprStmt, self.span(i), vec![self.expr(i)]),
                    None => Node::empty(span),
                };
                let mut cursor = n.walk();
                let updates: Vec<TsNode> = n.children_by_field_name("update", &mut cursor).collect();
                let update = match updates.len() {
                    0 => Node::empty(span),
                    1 => self.expr(updates[0]),
                    _ => {
                        let parts: Vec<Node> = updates.iter().map(|u| self.expr(*u)).collect();
                        Node::new(NodeKind::Comma, span, parts)
                    }
                };
                let cond = field("condition").map(|c| self.expr(c)).unwrap_or_else(|| Node::empty(span));
                Node::new(NodeKind::For, span, vec![init, cond, update, self.opt_stmt(field("body"), span)])
            }
            "switch_statement" => Node::new(
                NodeKind::Switch,
                span,
                vec![self.opt_expr(field("condition"), span), self.opt_stmt(field("body"), span)],
            ),
            "case_statement" => {
                let value = field("value");
                let mut stmts = Vec::new();
                for c in self.named(n) {
                    if Some(c.id()) == value.map(|v| v.id()) {
                        continue;
                    }
                    self.push_stmt(c, &mut stmts);
                }
                match value {
                    Some(v) => {
                        let mut ch = vec![self.expr(v)];
                        ch.extend(stmts);
                        Node::new(NodeKind::Case, span, ch)
                    }
                    None => Node::new(NodeKind::Default, span, stmts),
                }
            }
            "break_statement" => Node::new(NodeKind::Break, span, Vec::new()),
            "continue_statement" => Node::new(NodeKind::Continue, span, Vec::new()),
            "return_statement" => {
                let ch = self.named(n).first().map(|e| vec![self.expr(*e)]).unwrap_or_default();
                Node::new(NodeKind::Return, span, ch)
            }
            "goto_statement" => {
                let label = field("label").map(|l| self.text(l).to_string()).unwrap_or_default();
                Node::with_text(NodeKind::Goto, label, span, Vec::new())
            }
            "labeled_statement" => {
                let label = field("label").map(|l| self.text(l).to_string()).unwrap_or_default();
                let inner: Vec<Node> = self
                    .named(n)
                    .into_iter()
                    .filter(|c| Some(c.id()) != field("label").map(|l| l.id()))
                    .map(|c| self.stmt(c))
                    .collect();
                Node::with_text(NodeKind::Labeled, label, span, inner)
            }
            "declaration" => self.declaration(n),
            "ERROR" => {
                let mut ch = Vec::new();
                for c in self.named(n) {
                    ch.push(if is_statement_kind(c.kind()) { self.stmt(c) } else { self.expr(c) });
                }
                Node::with_text(NodeKind::Other, "error_statement", span, ch)
            }
            k if k.ends_with("_expression") || k == "identifier" => {
                Node::new(NodeKind::ExprStmt, span, vec![self.expr(n)])
            }
            k => Node::with_text(NodeKind::Other, k, span, Vec::new()),
        }
    }

    fn opt_stmt(&self, n: Option<TsNode>, span: Span) -> Node {
        n.map(|s| self.stmt(s)).unwrap_or_else(|| Node::empty(span))
    }

    fn opt_expr(&self, n: Option<TsNode>, span: Span) -> Node {
        n.map(|e| self.expr(e)).unwrap_or_else(|| Node::empty(span))
    }

    fn declaration(&self, n: TsNode) -> Node {
        let span = self.span(n);
        let ty = n.child_by_field_name("type").map(|t| squeeze(self.text(t))).unwrap_or_default();
        let mut ch = vec![Node::leaf(NodeKind::Type, ty, span)];
        let mut cursor = n.walk();
        let decls: Vec<TsNode> = n.children_by_field_name("declarator", &mut cursor).collect();
        for d in decls {
            ch.push(self.declarator(d));
        }
        Node::new(NodeKind::Decl, span, ch)
    }

    fn declarator(&self, d: TsNode) -> Node {
        let span = self.span(d);
        match d.kind() {
            "init_declarator" => {
                let target = d.child_by_field_name("declarator").map(|x| self.declarator(x));
                let value = d.child_by_field_name("value").map(|v| self.expr(v));
                let ch = target.into_iter().chain(value).collect();
                Node::new(NodeKind::Init, span, ch)
            }
            "array_declarator" => {
                let inner = d.child_by_field_name("declarator").map(|x| self.declarator(x));
                match (inner, d.child_by_field_name("size")) {
                    (Some(i), Some(size)) => Node::new(NodeKind::Index, span, vec![i, self.expr(size)]),
                    (Some(i), None) => i,
                    (None, _) => Node::leaf(NodeKind::Ident, self.text(d), span),
                }
            }
            "pointer_declarator" | "function_declarator" | "parenthesized_declarator" | "attributed_declarator" => {
                match declarator_name(d, self.src) {
                    Some(name) => Node::leaf(NodeKind::Ident, name, span),
                    None => Node::leaf(NodeKind::Ident, squeeze(self.text(d)), span),
                }
            }
            _ => Node::leaf(NodeKind::Ident, self.text(d), span),
        }
    }

    fn expr(&self, n: TsNode) -> Node {
        let span = self.span(n);
        let field = |name: &str| n.child_by_field_name(name);
        let op = || field("operator").map(|o| self.text(o).to_string()).unwrap_or_default();
        match n.kind() {
            "identifier" | "true" | "false" | "null" | "statement_identifier" => {
                Node::leaf(NodeKind::Ident, self.text(n), span)
            }
            "number_literal" => Node::leaf(NodeKind::Number, self.text(n), span),
            "string_literal" | "raw_string_literal" => Node::leaf(NodeKind::Str, self.text(n), span),
            "concatenated_string" => {
                let joined: Vec<String> = self.named(n).iter().map(|s| self.text(*s).to_string()).collect();
                Node::leaf(NodeKind::Str, joined.join(" "), span)
            }
            "char_literal" => Node::leaf(NodeKind::Char, self.text(n), span),
            "field_identifier" => Node::leaf(NodeKind::FieldName, self.text(n), span),
            "type_identifier" | "primitive_type" | "sized_type_specifier" | "type_descriptor" | "struct_specifier"
            | "union_specifier" | "enum_specifier" => Node::leaf(NodeKind::Type, squeeze(self.text(n)), span),
            "parenthesized_expression" => match self.named(n).first() {
                Some(inner) => self.expr(*inner),
                None => Node::empty(span),
            },
            "binary_expression" => Node::with_text(
                NodeKind::Binary,
                op(),
                span,
                vec![self.opt_expr(field("left"), span), self.opt_expr(field("right"), span)],
            ),
            "unary_expression" | "pointer_expression" => {
                Node::with_text(NodeKind::Unary, op(), span, vec![self.opt_expr(field("argument"), span)])
            }
            "update_expression" => {
                let arg = field("argument");
                let prefix = matches!((field("operator"), arg), (Some(o), Some(a)) if o.start_byte() < a.start_byte());
                let label = if prefix { format!("pre{}", op()) } else { op() };
                Node::with_text(NodeKind::Update, label, span, vec![self.opt_expr(arg, span)])
            }
            "assignment_expression" => Node::with_text(
                NodeKind::Assign,
                op(),
                span,
                vec![self.opt_expr(field("left"), span), self.opt_expr(field("right"), span)],
            ),
            "call_expression" => {
                let mut ch = vec![self.opt_expr(field("function"), span)];
                if let Some(args) = field("arguments") {
                    ch.extend(self.named(args).into_iter().map(|a| self.expr(a)));
                }
                Node::new(NodeKind::Call, span, ch)
            }
            "field_expression" => {
                let fname = field("field").map(|f| Node::leaf(NodeKind::FieldName, self.text(f), self.span(f)));
                let mut ch = vec![self.opt_expr(field("argument"), span)];
                ch.extend(fname);
                Node::with_text(NodeKind::Field, op(), span, ch)
            }
            "subscript_expression" => Node::new(
                NodeKind::Index,
                span,
                vec![self.opt_expr(field("argument"), span), self.opt_expr(field("index"), span)],
            ),
            "conditional_expression" => {
                let cond = self.opt_expr(field("condition"), span);
                // GNU `a ?: b` reuses the condition as the consequence.
                let then = field("consequence").map(|c| self.expr(c)).unwrap_or_else(|| cond.clone());
                Node::new(NodeKind::Cond, span, vec![cond, then, self.opt_expr(field("alternative"), span)])
            }
            "cast_expression" => {
                let ty = field("type").map(|t| squeeze(self.text(t))).unwrap_or_default();
                Node::new(
                    NodeKind::Cast,
                    span,
                    vec![Node::leaf(NodeKind::Type, ty, span), self.opt_expr(field("value"), span)],
                )
            }
            "compound_literal_expression" => {
                let ty = field("type").map(|t| squeeze(self.text(t))).unwrap_or_default();
                Node::new(
                    NodeKind::Cast,
                    span,
                    vec![Node::leaf(NodeKind::Type, ty, span), self.opt_expr(field("value"), span)],
                )
            }
            "sizeof_expression" => {
                let inner = match (field("value"), field("type")) {
                    (Some(v), _) => self.expr(v),
                    (None, Some(t)) => Node::leaf(NodeKind::Type, squeeze(self.text(t)), self.span(t)),
                    _ => Node::empty(span),
                };
                Node::new(NodeKind::Sizeof, span, vec![inner])
            }
            "comma_expression" => Node::new(
                NodeKind::Comma,
                span,
                vec![self.opt_expr(field("left"), span), self.opt_expr(field("right"), span)],
            ),
            "initializer_list" => Node::new(NodeKind::InitList, span, self.named(n).into_iter().map(|c| self.expr(c)).collect()),
            "initializer_pair" => {
                let ch = self.named(n).into_iter().map(|c| self.expr(c)).collect();
                Node::with_text(NodeKind::Other, "designated", span, ch)
            }
            "field_designator" => {
                let name = self.named(n).first().map(|f| self.text(*f).to_string()).unwrap_or_default();
                Node::leaf(NodeKind::FieldName, name, span)
            }
            k => {
                let kids = self.named(n);
                if kids.is_empty() {
                    Node::leaf(NodeKind::Ident, squeeze(self.text(n)), span)
                } else {
                    let ch = kids
                        .into_iter()
                        .map(|c| if is_statement_kind(c.kind()) { self.stmt(c) } else { self.expr(c) })
                        .collect();
                    Node::with_text(NodeKind::Other, if k == "ERROR" { "error" } else { k }, span, ch)
                }
            }
        }
    }
}

fn find_function_declarator(d: TsNode) -> Option<TsNode> {
    if d.kind() == "function_declarator" {
        return Some(d);
    }
    find_function_declarator(d.child_by_field_name("declarator")?)
}

fn is_statement_kind(kind: &str) -> bool {
    kind.ends_with("_statement") || kind == "declaration"
}
