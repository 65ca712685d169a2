//! Intra-procedural dependence graph: structural reaching definitions for
//! data edges and syntactic nesting for control edges.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cfront::{Node, NodeKind, SyntaxTree};

/// Line of the pseudo-statement defining the parameters.
pub const ENTRY: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    Assignment,
    Conditional,
    Call,
    Return,
    LoopHeader,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdgNode {
    pub line: u32,
    /// Last line of the statement, or of the header for compound statements.
    pub end_line: u32,
    pub kind: StatementKind,
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataEdge {
    pub from: u32,
    pub to: u32,
    pub var: String,
}

pub type Env = BTreeMap<String, BTreeSet<u32>>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependenceGraph {
    pub nodes: BTreeMap<u32, PdgNode>,
    pub data_edges: BTreeSet<DataEdge>,
    /// `(c, s)`: `s` sits directly inside the branch or loop headed at `c`.
    pub control_edges: BTreeSet<(u32, u32)>,
    /// `(g, s)`: `s` follows an early-exit `if` at `g` in the same block.
    pub guard_edges: BTreeSet<(u32, u32)>,
    /// Definitions reaching the start of each statement line.
    pub reaching: BTreeMap<u32, Env>,
}

impl DependenceGraph {
    /// Branch and loop headers governing `line`, innermost first, plus
    /// early-exit guards preceding it.
    pub fn governing(&self, line: u32) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![line];
        while let Some(l) = frontier.pop() {
            for &(c, s) in self.control_edges.iter().chain(&self.guard_edges) {
                if s == l && c != line && out.insert(c) {
                    frontier.push(c);
                }
            }
        }
        out
    }

    /// Statements nested (at any depth) under the header at `line`.
    pub fn nested(&self, line: u32) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![line];
        while let Some(l) = frontier.pop() {
            for &(c, s) in &self.control_edges {
                if c == l && s != line && out.insert(s) {
                    frontier.push(s);
                }
            }
        }
        out
    }

    pub fn is_header(&self, line: u32) -> bool {
        self.nodes.get(&line).is_some_and(|n| matches!(n.kind, StatementKind::Conditional | StatementKind::LoopHeader))
    }
}

fn join(a: &mut Env, b: &Env) {
    for (k, v) in b {
        a.entry(k.clone()).or_default().extend(v);
    }
}

fn joined(a: Option<Env>, b: Option<Env>) -> Option<Env> {
    match (a, b) {
        (Some(mut x), Some(y)) => {
            join(&mut x, &y);
            Some(x)
        }
        (x, None) => x,
        (None, y) => y,
    }
}

#[derive(Default)]
struct Access {
    uses: BTreeSet<String>,
    strong: BTreeSet<String>,
    weak: BTreeSet<String>,
}

impl Access {
    fn defs(&self) -> BTreeSet<String> {
        self.strong.union(&self.weak).cloned().collect()
    }
}

/// Reads and writes of an expression.
fn access(e: &Node, acc: &mut Access) {
    use NodeKind::*;
    match e.kind {
        Ident => {
            acc.uses.insert(e.text().to_string());
        }
        Assign => {
            let (lhs, rhs) = (&e.children[0], &e.children[1]);
            access(rhs, acc);
            write_target(lhs, e.text() != "=", acc);
        }
        Update => write_target(&e.children[0], true, acc),
        Call => {
            let mut args = e.children.iter();
            if let Some(f) = args.next() {
                if f.kind != Ident {
                    access(f, acc);
                }
            }
            for a in args {
                if a.kind == Unary && a.text() == "&" {
                    if let Some(b) = a.base_identifier() {
                        acc.weak.insert(b.to_string());
                    }
                }
                access(a, acc);
            }
        }
        Field => access(&e.children[0], acc),
        Type | FieldName | Number | Str | Char => {}
        Sizeof => {}
        Cast => {
            if let Some(v) = e.children.get(1) {
                access(v, acc);
            }
        }
        _ => {
            for c in &e.children {
                access(c, acc);
            }
        }
    }
}

fn write_target(lhs: &Node, reads_old: bool, acc: &mut Access) {
    if lhs.kind == NodeKind::Ident {
        acc.strong.insert(lhs.text().to_string());
        if reads_old {
            acc.uses.insert(lhs.text().to_string());
        }
        return;
    }
    // Writes through fields, indices and dereferences land in the base
    // variable's bucket without killing earlier definitions.
    if let Some(b) = lhs.base_identifier() {
        acc.weak.insert(b.to_string());
    }
    access(lhs, acc);
}

fn decl_access(d: &Node, acc: &mut Access) {
    for c in d.children.iter().skip(1) {
        match c.kind {
            NodeKind::Init => {
                if let Some(v) = c.children.get(1) {
                    access(v, acc);
                }
                if let Some(t) = c.children.first() {
                    declare(t, acc);
                }
            }
            _ => declare(c, acc),
        }
    }
}

fn declare(t: &Node, acc: &mut Access) {
    match t.kind {
        NodeKind::Ident => {
            acc.strong.insert(t.text().to_string());
        }
        NodeKind::Index => {
            if let Some(b) = t.children.first() {
                declare(b, acc);
            }
            for c in t.children.iter().skip(1) {
                access(c, acc);
            }
        }
        _ => {}
    }
}

struct LoopCtx {
    breaks: Option<Env>,
    continues: Option<Env>,
}

struct Builder {
    g: DependenceGraph,
    loops: Vec<LoopCtx>,
    gotos: BTreeMap<String, Env>,
}

fn is_jump(n: &Node) -> bool {
    match n.kind {
        NodeKind::Return | NodeKind::Goto | NodeKind::Break | NodeKind::Continue => true,
        NodeKind::Block => n.children.last().is_some_and(is_jump),
        _ => false,
    }
}

fn is_early_exit(n: &Node) -> bool {
    n.kind == NodeKind::If && n.children.iter().skip(1).any(is_jump)
}

pub(crate) fn header_end(n: &Node) -> u32 {
    let cond = match n.kind {
        NodeKind::If | NodeKind::While | NodeKind::Switch => n.children.first(),
        NodeKind::For => n.children.get(2).filter(|u| u.kind != NodeKind::Empty).or(n.children.get(1)),
        NodeKind::DoWhile => return n.span.start_line,
        _ => return n.span.end_line,
    };
    cond.map(|c| c.span.end_line.max(n.span.start_line)).unwrap_or(n.span.start_line)
}

impl Builder {
    fn node(&mut self, line: u32, end: u32, kind: StatementKind, acc: &Access, env: &Env) {
        let n = self.g.nodes.entry(line).or_insert_with(|| PdgNode {
            line,
            end_line: end,
            kind,
            defs: BTreeSet::new(),
            uses: BTreeSet::new(),
        });
        n.end_line = n.end_line.max(end);
        n.defs.extend(acc.defs());
        n.uses.extend(acc.uses.iter().cloned());
        join(self.g.reaching.entry(line).or_default(), env);
        for v in &acc.uses {
            for &d in env.get(v).into_iter().flatten() {
                if d != line {
                    self.g.data_edges.insert(DataEdge { from: d, to: line, var: v.clone() });
                }
            }
        }
    }

    fn apply(acc: &Access, line: u32, mut env: Env) -> Env {
        for v in &acc.strong {
            env.insert(v.clone(), BTreeSet::from([line]));
        }
        for v in &acc.weak {
            if !acc.strong.contains(v) {
                env.entry(v.clone()).or_default().insert(line);
            }
        }
        env
    }

    fn simple(&mut self, n: &Node, kind: StatementKind, acc: Access, env: Env) -> Env {
        let line = n.span.start_line;
        self.node(line, n.span.end_line, kind, &acc, &env);
        Self::apply(&acc, line, env)
    }

    fn nest(&mut self, header: u32, body: &Node) {
        if body.kind == NodeKind::Block {
            for c in &body.children {
                self.nest(header, c);
            }
        } else if body.is_statement() && body.kind != NodeKind::Empty && body.span.start_line != header {
            self.g.control_edges.insert((header, body.span.start_line));
        } else if body.span.start_line == header {
            // Same-line body such as `if (x) return;`: nest its children.
            if matches!(body.kind, NodeKind::Case | NodeKind::Default | NodeKind::Labeled) {
                for c in &body.children {
                    self.nest(header, c);
                }
            }
        }
    }

    fn guard_block(&mut self, stmts: &[Node]) {
        for (i, s) in stmts.iter().enumerate() {
            if !is_early_exit(s) {
                continue;
            }
            let g = s.span.start_line;
            for later in &stmts[i + 1..] {
                let mut lines = BTreeSet::new();
                later.walk(&mut |x: &Node| {
                    if x.is_statement() && x.kind != NodeKind::Block && x.kind != NodeKind::Empty {
                        lines.insert(x.span.start_line);
                    }
                });
                for l in lines {
                    if l != g {
                        self.g.guard_edges.insert((g, l));
                    }
                }
            }
        }
    }

    fn block(&mut self, stmts: &[Node], env: Env) -> Option<Env> {
        self.guard_block(stmts);
        let mut cur = Some(env);
        for s in stmts {
            let start = match (&cur, s.kind) {
                (_, NodeKind::Labeled) => cur.take().unwrap_or_default(),
                (Some(_), _) => cur.take().unwrap(),
                (None, _) => Env::new(),
            };
            cur = self.stmt(s, start);
        }
        cur
    }

    fn stmt(&mut self, n: &Node, env: Env) -> Option<Env> {
        use NodeKind::*;
        let line = n.span.start_line;
        match n.kind {
            Block => self.block(&n.children, env),
            Empty => Some(env),
            ExprStmt => {
                let mut acc = Access::default();
                for c in &n.children {
                    access(c, &mut acc);
                }
                let kind = match n.children.first().map(|c| c.kind) {
                    Some(Assign) | Some(Update) => StatementKind::Assignment,
                    Some(Call) => StatementKind::Call,
                    _ if !acc.defs().is_empty() => StatementKind::Assignment,
                    _ => StatementKind::Other,
                };
                Some(self.simple(n, kind, acc, env))
            }
            Decl => {
                let mut acc = Access::default();
                decl_access(n, &mut acc);
                Some(self.simple(n, StatementKind::Assignment, acc, env))
            }
            Return => {
                let mut acc = Access::default();
                for c in &n.children {
                    access(c, &mut acc);
                }
                self.simple(n, StatementKind::Return, acc, env);
                None
            }
            Break | Continue => {
                self.simple(n, StatementKind::Other, Access::default(), env.clone());
                if let Some(ctx) = self.loops.last_mut() {
                    let slot = if n.kind == Break { &mut ctx.breaks } else { &mut ctx.continues };
                    *slot = joined(slot.take(), Some(env));
                }
                None
            }
            Goto => {
                self.simple(n, StatementKind::Other, Access::default(), env.clone());
                join(self.gotos.entry(n.text().to_string()).or_default(), &env);
                None
            }
            Labeled => {
                let mut env = env;
                if let Some(pending) = self.gotos.remove(n.text()) {
                    join(&mut env, &pending);
                }
                self.block(&n.children, env)
            }
            If => {
                let mut acc = Access::default();
                access(&n.children[0], &mut acc);
                self.node(line, header_end(n), StatementKind::Conditional, &acc, &env);
                let after = Self::apply(&acc, line, env);
                for b in &n.children[1..] {
                    self.nest(line, b);
                }
                let then = self.stmt(&n.children[1], after.clone());
                let other = match n.children.get(2) {
                    Some(e) => self.stmt(e, after),
                    None => Some(after),
                };
                joined(then, other)
            }
            While => {
                self.nest(line, &n.children[1]);
                self.looped(n, line, env, |b, head| {
                    let mut acc = Access::default();
                    access(&n.children[0], &mut acc);
                    b.node(line, header_end(n), StatementKind::LoopHeader, &acc, &head);
                    let after = Self::apply(&acc, line, head);
                    (after.clone(), Some(after), &n.children[1])
                })
            }
            For => {
                let mut acc = Access::default();
                match n.children[0].kind {
                    Decl => decl_access(&n.children[0], &mut acc),
                    _ => access(&n.children[0], &mut acc),
                }
                self.node(line, header_end(n), StatementKind::LoopHeader, &acc, &env);
                let env = Self::apply(&acc, line, env);
                self.nest(line, &n.children[3]);
                self.looped(n, line, env, |b, head| {
                    let mut acc = Access::default();
                    access(&n.children[1], &mut acc);
                    b.node(line, header_end(n), StatementKind::LoopHeader, &acc, &head);
                    let after = Self::apply(&acc, line, head);
                    (after.clone(), Some(after), &n.children[3])
                })
            }
            DoWhile => {
                self.nest(line, &n.children[0]);
                self.node(line, line, StatementKind::LoopHeader, &Access::default(), &env);
                let cond = &n.children[1];
                let cond_line = cond.span.start_line;
                let mut head = env;
                loop {
                    self.loops.push(LoopCtx { breaks: None, continues: None });
                    let out = self.stmt(&n.children[0], head.clone());
                    let ctx = self.loops.pop().unwrap();
                    let reach = joined(out, ctx.continues).unwrap_or_default();
                    let mut acc = Access::default();
                    access(cond, &mut acc);
                    if cond_line != line {
                        self.g.control_edges.insert((line, cond_line));
                    }
                    self.node(cond_line, cond.span.end_line, StatementKind::Conditional, &acc, &reach);
                    let after = Self::apply(&acc, cond_line, reach);
                    let mut next = head.clone();
                    join(&mut next, &after);
                    if next == head {
                        return joined(Some(after), ctx.breaks);
                    }
                    head = next;
                }
            }
            Switch => {
                let mut acc = Access::default();
                access(&n.children[0], &mut acc);
                self.node(line, header_end(n), StatementKind::Conditional, &acc, &env);
                let after = Self::apply(&acc, line, env);
                self.nest(line, &n.children[1]);
                self.loops.push(LoopCtx { breaks: None, continues: None });
                let cases: Vec<&Node> = match n.children[1].kind {
                    Block => n.children[1].children.iter().collect(),
                    _ => vec![&n.children[1]],
                };
                let mut fall: Option<Env> = None;
                let mut has_default = false;
                for c in cases {
                    let entry = joined(Some(after.clone()), fall.take()).unwrap();
                    fall = match c.kind {
                        Case => {
                            for s in &c.children[1..] {
                                self.nest(line, s);
                            }
                            self.block(&c.children[1..], entry)
                        }
                        Default => {
                            has_default = true;
                            for s in &c.children {
                                self.nest(line, s);
                            }
                            self.block(&c.children, entry)
                        }
                        _ => self.stmt(c, entry),
                    };
                }
                let ctx = self.loops.pop().unwrap();
                let mut out = joined(fall, ctx.breaks);
                if !has_default {
                    out = joined(out, Some(after));
                }
                // A `continue` inside a switch belongs to the enclosing loop.
                if let (Some(cont), Some(outer)) = (ctx.continues, self.loops.last_mut()) {
                    outer.continues = joined(outer.continues.take(), Some(cont));
                }
                out
            }
            Case | Default => {
                let stmts = if n.kind == Case { &n.children[1..] } else { &n.children[..] };
                self.block(stmts, env)
            }
            _ => {
                let mut acc = Access::default();
                for c in &n.children {
                    access(c, &mut acc);
                }
                Some(self.simple(n, StatementKind::Other, acc, env))
            }
        }
    }

    /// Iterates a pre-tested loop to a fixpoint. `header` records the
    /// condition for a given head state and returns the state entering the
    /// body, the state on loop exit, and the body.
    fn looped<'n>(
        &mut self,
        n: &'n Node,
        line: u32,
        env: Env,
        header: impl Fn(&mut Self, Env) -> (Env, Option<Env>, &'n Node),
    ) -> Option<Env> {
        let mut head = env;
        loop {
            let (into_body, exit, body) = header(self, head.clone());
            self.loops.push(LoopCtx { breaks: None, continues: None });
            let out = self.stmt(body, into_body);
            let ctx = self.loops.pop().unwrap();
            let mut back = joined(out, ctx.continues).unwrap_or_default();
            if n.kind == NodeKind::For {
                let mut acc = Access::default();
                access(&n.children[2], &mut acc);
                self.node(line, header_end(n), StatementKind::LoopHeader, &acc, &back);
                back = Self::apply(&acc, line, back);
            }
            let mut next = head.clone();
            join(&mut next, &back);
            if next == head {
                return joined(exit, ctx.breaks);
            }
            head = next;
        }
    }
}

/// Builds the dependence graph of a function definition.
pub fn build_pdg(tree: &SyntaxTree) -> DependenceGraph {
    let mut b = Builder { g: DependenceGraph::default(), loops: Vec::new(), gotos: BTreeMap::new() };
    let Some(root) = &tree.root else { return b.g };
    let (params, body) = match root.kind {
        NodeKind::FunctionDef => (root.children.first(), root.children.get(1)),
        _ => (None, Some(root)),
    };
    let mut entry = Access::default();
    for p in params.map(|p| p.children.as_slice()).unwrap_or(&[]) {
        if let Some(name) = p.children.get(1) {
            entry.strong.insert(name.text().to_string());
        }
    }
    let env = Env::new();
    b.node(ENTRY, ENTRY, StatementKind::Other, &entry, &env);
    let env = Builder::apply(&entry, ENTRY, env);
    if let Some(body) = body {
        b.stmt(body, env);
    }
    b.g
}
