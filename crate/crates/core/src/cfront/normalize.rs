//! Semantics-preserving canonicalization of statement and expression trees.
//!
//! Rules run bottom-up and are repeated until the tree stops changing, so
//! the result is a fixpoint of the whole rule set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tree::{Node, NodeKind, Span, SyntaxTree};

const MAX_ROUNDS: usize = 64;

pub(crate) const COMMUTATIVE: &[&str] = &["+", "*", "==", "!=", "&&", "||", "&", "|", "^"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedAst {
    pub tree: SyntaxTree,
    /// Pre-order node index → source span the node was derived from.
    pub provenance: BTreeMap<usize, Span>,
}

pub fn normalize_ast(tree: &SyntaxTree) -> NormalizedAst {
    let root = tree.root.as_ref().map(|r| {
        let mut cur = r.clone();
        for _ in 0..MAX_ROUNDS {
            let next = normalize_top(cur.clone());
            if next.same_shape(&cur) {
                cur = next;
                break;
            }
            cur = next;
        }
        cur
    });
    let mut provenance = BTreeMap::new();
    if let Some(r) = &root {
        let mut i = 0;
        r.walk(&mut |n| {
            provenance.insert(i, n.span);
            i += 1;
        });
    }
    NormalizedAst { tree: SyntaxTree { root }, provenance }
}

fn normalize_top(n: Node) -> Node {
    if n.is_statement() {
        let span = n.span;
        let mut stmts = stmt(n);
        if stmts.len() == 1 {
            stmts.pop().unwrap()
        } else {
            Node::new(NodeKind::Block, span, stmts)
        }
    } else {
        node(n)
    }
}

/// Dispatches on statements (which may expand into several) and expressions.
fn node(n: Node) -> Node {
    match n.kind {
        NodeKind::FunctionDef => {
            let mut n = n;
            n.children = n.children.into_iter().map(node).collect();
            n
        }
        NodeKind::Params => n,
        _ if n.is_statement() => block_of(n),
        _ => expr(n),
    }
}

fn block(span: Span, stmts: Vec<Node>) -> Node {
    Node::new(NodeKind::Block, span, stmts)
}

/// Normalizes a statement in branch position, always yielding a block.
fn block_of(n: Node) -> Node {
    let span = n.span;
    let stmts = stmt(n);
    match <[Node; 1]>::try_from(stmts) {
        Ok([only]) if only.kind == NodeKind::Block => only,
        Ok([only]) => block(span, vec![only]),
        Err(stmts) => block(span, stmts),
    }
}

fn one(n: Node) -> Vec<Node> {
    vec![n]
}

fn ends_control_transfer(stmts: &[Node]) -> bool {
    matches!(
        stmts.last().map(|s| &s.kind),
        Some(NodeKind::Break | NodeKind::Return | NodeKind::Goto | NodeKind::Continue)
    )
}

fn number(text: &str, span: Span) -> Node {
    Node::leaf(NodeKind::Number, text, span)
}

fn not(e: Node) -> Node {
    let span = e.span;
    Node::with_text(NodeKind::Unary, "!", span, vec![e])
}

/// Normalizes one statement into zero or more statements.
fn stmt(n: Node) -> Vec<Node> {
    let span = n.span;
    let mut ch = n.children.clone();
    match n.kind {
        NodeKind::Block => {
            let mut out = Vec::new();
            for c in ch {
                for s in stmt(c) {
                    if s.kind == NodeKind::Block {
                        out.extend(s.children);
                    } else {
                        out.push(s);
                    }
                }
            }
            one(block(span, out))
        }
        NodeKind::Empty => Vec::new(),
        NodeKind::ExprStmt => {
            let Some(e) = ch.pop() else { return Vec::new() };
            expr_stmt(expr(e), span)
        }
        NodeKind::If => {
            let cond = expr(ch.remove(0));
            let then = block_of(ch.remove(0));
            let els = ch.pop().map(block_of).filter(|b| !b.children.is_empty());
            match els {
                Some(e) if then.children.is_empty() => one(Node::new(NodeKind::If, span, vec![expr(not(cond)), e])),
                Some(e) => one(Node::new(NodeKind::If, span, vec![cond, then, e])),
                None => one(Node::new(NodeKind::If, span, vec![cond, then])),
            }
        }
        NodeKind::While => {
            let cond = expr(ch.remove(0));
            let body = block_of(ch.remove(0));
            one(Node::new(NodeKind::While, span, vec![cond, body]))
        }
        NodeKind::DoWhile => {
            // do { B } while (c)  →  while (1) { B; if (!c) break; }
            let body = ch.remove(0);
            let cond = ch.remove(0);
            let exit = Node::new(
                NodeKind::If,
                span,
                vec![not(cond), block(span, vec![Node::new(NodeKind::Break, span, Vec::new())])],
            );
            let mut inner = vec![body];
            inner.push(exit);
            let loop_ = Node::new(NodeKind::While, span, vec![number("1", span), block(span, inner)]);
            stmt(loop_)
        }
        NodeKind::For => {
            // for (i; c; u) B  →  i; while (c) { B; u; }
            let mut it = ch.into_iter();
            let init = it.next().unwrap_or_else(|| Node::empty(span));
            let cond = it.next().unwrap_or_else(|| Node::empty(span));
            let update = it.next().unwrap_or_else(|| Node::empty(span));
            let body = it.next().unwrap_or_else(|| Node::empty(span));
            let cond = if cond.kind == NodeKind::Empty { number("1", span) } else { cond };
            let mut inner = vec![body];
            if update.kind != NodeKind::Empty {
                let uspan = update.span;
                inner.push(Node::new(NodeKind::ExprStmt, uspan, vec![update]));
            }
            let mut out = if init.kind == NodeKind::Empty { Vec::new() } else { stmt(init) };
            out.extend(stmt(Node::new(NodeKind::While, span, vec![cond, block(span, inner)])));
            out
        }
        NodeKind::Switch => {
            let cond = ch.remove(0);
            let body = ch.remove(0);
            stmt(switch_to_if(cond, body, span))
        }
        NodeKind::Return => {
            let ch = ch.into_iter().map(expr).collect();
            one(Node::new(NodeKind::Return, span, ch))
        }
        NodeKind::Labeled => {
            let inner: Vec<Node> = ch.into_iter().flat_map(stmt).collect();
            let mut out = vec![Node::with_text(NodeKind::Labeled, n.text(), span, Vec::new())];
            out.extend(inner);
            out
        }
        NodeKind::Decl => {
            let ch = ch.into_iter().map(expr).collect();
            one(Node::new(NodeKind::Decl, span, ch))
        }
        NodeKind::Case | NodeKind::Default => {
            // Stray labels outside a switch body: keep their statements.
            let skip = usize::from(n.kind == NodeKind::Case);
            ch.into_iter().skip(skip).flat_map(stmt).collect()
        }
        _ => {
            let mut n = n;
            n.children = n.children.into_iter().map(node).collect();
            one(n)
        }
    }
}

fn expr_stmt(e: Node, span: Span) -> Vec<Node> {
    match e.kind {
        NodeKind::Comma => e.children.into_iter().flat_map(|c| expr_stmt(expr(c), span)).collect(),
        // x = c ? a : b  →  if (c) x = a; else x = b;
        NodeKind::Assign if e.text() == "=" && e.children[1].kind == NodeKind::Cond && !e.children[0].has_side_effects() => {
            let mut parts = e.children.into_iter();
            let target = parts.next().unwrap();
            let mut cond = parts.next().unwrap().children.into_iter();
            let (c, a, b) = (cond.next().unwrap(), cond.next().unwrap(), cond.next().unwrap());
            let assign = |v: Node| {
                let s = Node::with_text(NodeKind::Assign, "=", span, vec![target.clone(), v]);
                Node::new(NodeKind::ExprStmt, span, vec![s])
            };
            stmt(Node::new(NodeKind::If, span, vec![c, assign(a), assign(b)]))
        }
        // x = x;  →  nothing
        NodeKind::Assign
            if e.text() == "=" && e.children[0].same_shape(&e.children[1]) && !e.children[0].has_side_effects() =>
        {
            Vec::new()
        }
        // x++;  →  x = x + 1;
        NodeKind::Update if !e.children[0].has_side_effects() => {
            let target = e.children[0].clone();
            let op = if e.text().ends_with("++") { "+" } else { "-" };
            let sum = Node::with_text(NodeKind::Binary, op, e.span, vec![target.clone(), number("1", e.span)]);
            let assign = Node::with_text(NodeKind::Assign, "=", e.span, vec![target, sum]);
            vec![Node::new(NodeKind::ExprStmt, span, vec![expr(assign)])]
        }
        _ => vec![Node::new(NodeKind::ExprStmt, span, vec![e])],
    }
}

struct CaseGroup {
    values: Vec<Node>,
    is_default: bool,
    body: Vec<Node>,
}

/// Rewrites `switch (e) { case v: s; break; ... default: d; }` into
/// `if (e == v) { s } else if ... else { d }`. Fall-through bodies are
/// duplicated into the preceding group.
fn switch_to_if(cond: Node, body: Node, span: Span) -> Node {
    let items = if body.kind == NodeKind::Block { body.children } else { vec![body] };
    let mut groups: Vec<CaseGroup> = Vec::new();
    let mut open = false;
    for item in items {
        let (value, is_default, stmts) = match item.kind {
            NodeKind::Case => {
                let mut c = item.children.into_iter();
                (c.next(), false, c.collect::<Vec<_>>())
            }
            NodeKind::Default => (None, true, item.children),
            _ => {
                // Statement after a label but outside a case node.
                if let Some(g) = groups.last_mut() {
                    g.body.push(item);
                }
                continue;
            }
        };
        let merge = open && groups.last().is_some_and(|g| g.body.is_empty());
        if merge {
            let g = groups.last_mut().unwrap();
            g.values.extend(value);
            g.is_default |= is_default;
            g.body = stmts;
        } else {
            groups.push(CaseGroup { values: value.into_iter().collect(), is_default, body: stmts });
        }
        open = true;
    }
    // Resolve fall-through: a group not ending in a jump continues into the next.
    let n = groups.len();
    let mut bodies: Vec<Vec<Node>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut body = Vec::new();
        let mut j = i;
        loop {
            body.extend(groups[j].body.iter().cloned());
            if ends_control_transfer(&body) || j + 1 == n {
                break;
            }
            j += 1;
        }
        if matches!(body.last().map(|s| &s.kind), Some(NodeKind::Break)) {
            body.pop();
        }
        bodies.push(body);
    }
    let mut default_body: Option<Vec<Node>> = None;
    let mut arms: Vec<(Node, Vec<Node>)> = Vec::new();
    for (g, body) in groups.into_iter().zip(bodies) {
        if g.is_default {
            default_body = Some(body);
            continue;
        }
        let mut tests = g.values.into_iter().map(|v| Node::with_text(NodeKind::Binary, "==", span, vec![cond.clone(), v]));
        let Some(first) = tests.next() else { continue };
        let test = tests.fold(first, |acc, t| Node::with_text(NodeKind::Binary, "||", span, vec![acc, t]));
        arms.push((test, body));
    }
    let mut tail: Option<Node> = default_body.map(|b| block(span, b));
    for (test, body) in arms.into_iter().rev() {
        let mut ch = vec![test, block(span, body)];
        if let Some(t) = tail.take() {
            ch.push(t);
        }
        tail = Some(Node::new(NodeKind::If, span, ch));
    }
    tail.unwrap_or_else(|| Node::empty(span))
}

fn inverse_relation(op: &str) -> Option<&'static str> {
    Some(match op {
        ">" => "<=",
        ">=" => "<",
        "<" => ">=",
        "<=" => ">",
        "==" => "!=",
        "!=" => "==",
        _ => return None,
    })
}

/// Operand reordering is allowed unless it could change observable
/// evaluation order: both sides call functions, or either side writes.
fn reorder_allowed(a: &Node, b: &Node) -> bool {
    !(a.has_side_effects() || b.has_side_effects() || (a.contains_call() && b.contains_call()))
}

fn expr(n: Node) -> Node {
    let mut n = n;
    n.children = std::mem::take(&mut n.children).into_iter().map(node).collect();
    let span = n.span;
    match n.kind {
        NodeKind::Assign if n.text() != "=" && n.children.len() == 2 && !n.children[0].has_side_effects() => {
            // a op= b  →  a = a op b
            let op = n.text().trim_end_matches('=').to_string();
            let mut ch = n.children.into_iter();
            let (a, b) = (ch.next().unwrap(), ch.next().unwrap());
            let rhs = expr(Node::with_text(NodeKind::Binary, op, span, vec![a.clone(), b]));
            Node::with_text(NodeKind::Assign, "=", span, vec![a, rhs])
        }
        NodeKind::Unary if n.text() == "!" => {
            let inner = &n.children[0];
            match inverse_relation(inner.text()) {
                Some(inv) if inner.kind == NodeKind::Binary => {
                    let mut inner = n.children.into_iter().next().unwrap();
                    inner.text = Some(inv.to_string());
                    expr(inner)
                }
                _ => n,
            }
        }
        NodeKind::Binary => binary(n),
        _ => n,
    }
}

fn binary(mut n: Node) -> Node {
    let span = n.span;
    if n.children.len() != 2 {
        return n;
    }
    let op = n.text().to_string();
    match op.as_str() {
        "<" | "<=" => {
            n.children.swap(0, 1);
            n.text = Some(if op == "<" { ">" } else { ">=" }.to_string());
            binary(n)
        }
        "+" if (n.children[0].is_op(NodeKind::Unary, "-") || n.children[1].is_op(NodeKind::Unary, "-"))
            && reorder_allowed(&n.children[0], &n.children[1]) =>
        {
            // -b + a  →  a - b ;  -a + -b  →  -a - b with a ordered before b
            let mut ch = std::mem::take(&mut n.children).into_iter();
            let (a, b) = (ch.next().unwrap(), ch.next().unwrap());
            let (a_neg, b_neg) = (a.is_op(NodeKind::Unary, "-"), b.is_op(NodeKind::Unary, "-"));
            let (a, b) = match (a_neg, b_neg) {
                (true, false) => (b, a),
                (true, true) if a.children[0].key() > b.children[0].key() => (b, a),
                _ => (a, b),
            };
            let b = b.children.into_iter().next().unwrap();
            expr(Node::with_text(NodeKind::Binary, "-", span, vec![a, b]))
        }
        "+" | "-" if n.children[1].is_op(NodeKind::Unary, "-") => {
            // a + -b  →  a - b ;  a - -b  →  a + b
            let mut ch = std::mem::take(&mut n.children).into_iter();
            let a = ch.next().unwrap();
            let b = ch.next().unwrap().children.into_iter().next().unwrap();
            let flipped = if op == "+" { "-" } else { "+" };
            expr(Node::with_text(NodeKind::Binary, flipped, span, vec![a, b]))
        }
        ">" | ">=" if n.children[1].is_op(NodeKind::Binary, "-") && !n.has_side_effects() => {
            // a > c - b  →  a + b > c
            let mut ch = std::mem::take(&mut n.children).into_iter();
            let a = ch.next().unwrap();
            let mut sub = ch.next().unwrap().children.into_iter();
            let (c, b) = (sub.next().unwrap(), sub.next().unwrap());
            let lhs = expr(Node::with_text(NodeKind::Binary, "+", span, vec![a, b]));
            binary(Node::with_text(NodeKind::Binary, op, span, vec![lhs, c]))
        }
        ">" | ">=" if n.children[0].is_op(NodeKind::Binary, "-") && !n.has_side_effects() => {
            // c - b > a  →  c > a + b
            let mut ch = std::mem::take(&mut n.children).into_iter();
            let mut sub = ch.next().unwrap().children.into_iter();
            let (c, b) = (sub.next().unwrap(), sub.next().unwrap());
            let a = ch.next().unwrap();
            let rhs = expr(Node::with_text(NodeKind::Binary, "+", span, vec![a, b]));
            binary(Node::with_text(NodeKind::Binary, op, span, vec![c, rhs]))
        }
        _ if COMMUTATIVE.contains(&op.as_str()) => {
            if reorder_allowed(&n.children[0], &n.children[1]) && n.children[0].key() > n.children[1].key() {
                n.children.swap(0, 1);
            }
            n
        }
        _ => n,
    }
}
