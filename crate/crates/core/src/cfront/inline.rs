//! Call-site expansion of macros and static helper functions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::defs::{Definition, Definitions};
use super::tree::{Node, NodeKind, Span, SyntaxTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InlineConfig {
    pub max_depth: u32,
    pub expand_macros: bool,
    pub expand_static_functions: bool,
}

impl Default for InlineConfig {
    fn default() -> Self {
        Self { max_depth: 1, expand_macros: true, expand_static_functions: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InlineWarning {
    /// A definition was reachable but the depth bound stopped expansion.
    RecursionBound { name: String, span: Span },
}

/// Expands known callees in place; unknown callees are left untouched.
pub fn inline_expand(tree: &SyntaxTree, defs: &Definitions, cfg: &InlineConfig) -> SyntaxTree {
    inline_expand_logged(tree, defs, cfg).0
}

pub fn inline_expand_logged(tree: &SyntaxTree, defs: &Definitions, cfg: &InlineConfig) -> (SyntaxTree, Vec<InlineWarning>) {
    let Some(root) = &tree.root else { return (SyntaxTree::empty(), Vec::new()) };
    if cfg.max_depth == 0 {
        return (tree.clone(), Vec::new());
    }
    let mut ex = Expander { defs, cfg, warnings: Vec::new() };
    let out = ex.node(root.clone(), 0);
    (SyntaxTree::new(out), ex.warnings)
}

struct Expander<'a> {
    defs: &'a Definitions,
    cfg: &'a InlineConfig,
    warnings: Vec<InlineWarning>,
}

enum Body<'d> {
    Expr(&'d Node),
    Stmt(&'d Node),
}

impl<'a> Expander<'a> {
    fn node(&mut self, mut n: Node, depth: u32) -> Node {
        n.children = std::mem::take(&mut n.children).into_iter().map(|c| self.node(c, depth)).collect();
        self.expand_here(n, depth)
    }

    fn lookup(&self, name: &str, args: usize, statement: bool) -> Option<(&'a [String], Body<'a>)> {
        match self.defs.get(name)? {
            Definition::Macro { params: Some(params), expr, stmt, .. } if self.cfg.expand_macros => {
                if params.len() != args {
                    return None;
                }
                match (expr, stmt) {
                    (Some(e), _) => Some((params.as_slice(), Body::Expr(e))),
                    (None, Some(s)) if statement => Some((params.as_slice(), Body::Stmt(s))),
                    _ => None,
                }
            }
            Definition::Function { params, is_static: true, body, .. } if self.cfg.expand_static_functions => {
                if params.len() != args {
                    return None;
                }
                match body.children.as_slice() {
                    [ret] if ret.kind == NodeKind::Return && ret.children.len() == 1 => {
                        Some((params.as_slice(), Body::Expr(&ret.children[0])))
                    }
                    stmts if statement && !stmts.iter().any(|s| s.any(&|x| x.kind == NodeKind::Return)) => {
                        Some((params.as_slice(), Body::Stmt(body)))
                    }
                    _ => None,
                }
            }
            _ => None,
        }
    }

    fn expand_call(&mut self, call: &Node, depth: u32, statement: bool) -> Option<Node> {
        let callee = call.children.first().filter(|c| c.kind == NodeKind::Ident)?;
        let args = &call.children[1..];
        let (params, body) = self.lookup(callee.text(), args.len(), statement)?;
        if depth >= self.cfg.max_depth {
            self.warnings.push(InlineWarning::RecursionBound { name: callee.text().to_string(), span: call.span });
            return None;
        }
        let bind: HashMap<&str, &Node> = params.iter().map(String::as_str).zip(args.iter()).collect();
        let template = match body {
            Body::Expr(e) | Body::Stmt(e) => e,
        };
        let mut out = substitute(template, &bind, call.span);
        // Only the substituted body is expanded further; arguments already were.
        out = self.node_skipping_args(out, depth + 1, &bind);
        Some(out)
    }

    fn expand_object(&mut self, ident: &Node, depth: u32) -> Option<Node> {
        if !self.cfg.expand_macros {
            return None;
        }
        let Definition::Macro { params: None, expr: Some(e), .. } = self.defs.get(ident.text())? else {
            return None;
        };
        if depth >= self.cfg.max_depth {
            self.warnings.push(InlineWarning::RecursionBound { name: ident.text().to_string(), span: ident.span });
            return None;
        }
        let mut out = e.clone();
        out.set_span_recursive(ident.span);
        Some(self.node(out, depth + 1))
    }

    fn node_skipping_args(&mut self, n: Node, depth: u32, bind: &HashMap<&str, &Node>) -> Node {
        // Argument subtrees were substituted by value and keep their own
        // spans; the template parts carry the call-site span.
        if bind.values().any(|a| a.span == n.span && a.same_shape(&n)) {
            return n;
        }
        let mut n = n;
        n.children = std::mem::take(&mut n.children)
            .into_iter()
            .map(|c| self.node_skipping_args(c, depth, bind))
            .collect();
        self.expand_here(n, depth)
    }

    fn expand_here(&mut self, n: Node, depth: u32) -> Node {
        match n.kind {
            NodeKind::ExprStmt => {
                if let Some(call) = n.children.first().filter(|c| c.kind == NodeKind::Call) {
                    if let Some(r) = self.expand_call(call, depth, true) {
                        return if r.is_statement() { r } else { Node::new(NodeKind::ExprStmt, n.span, vec![r]) };
                    }
                }
                n
            }
            NodeKind::Call => self.expand_call(&n, depth, false).unwrap_or(n),
            NodeKind::Ident => self.expand_object(&n, depth).unwrap_or(n),
            _ => n,
        }
    }
}

fn substitute(template: &Node, bind: &HashMap<&str, &Node>, site: Span) -> Node {
    if template.kind == NodeKind::Ident {
        if let Some(arg) = bind.get(template.text()) {
            return (*arg).clone();
        }
    }
    Node {
        kind: template.kind,
        text: template.text.clone(),
        span: site,
        children: template.children.iter().map(|c| substitute(c, bind, site)).collect(),
    }
}
