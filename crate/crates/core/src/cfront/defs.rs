//! Macro and function definitions harvested from source files.

use std::collections::BTreeMap;

use tree_sitter::Node as TsNode;

use super::parse::{declarator_name, has_storage_class, text_of};
use super::{parse_expression, parse_function_text, parse_snippet, Node, NodeKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Definition {
    /// `#define NAME body` or `#define NAME(params) body`.
    Macro {
        params: Option<Vec<String>>,
        body: String,
        expr: Option<Node>,
        stmt: Option<Node>,
    },
    Function {
        params: Vec<String>,
        is_static: bool,
        /// Lowered body block.
        body: Node,
        /// Names called directly from the body.
        callees: Vec<String>,
    },
}

impl Definition {
    pub fn function_macro(params: &[&str], body: &str) -> Self {
        Self::make_macro(Some(params.iter().map(|p| p.to_string()).collect()), body)
    }

    pub fn object_macro(body: &str) -> Self {
        Self::make_macro(None, body)
    }

    fn make_macro(params: Option<Vec<String>>, body: &str) -> Self {
        let body = body.trim().to_string();
        let expr = if body.is_empty() { None } else { parse_expression(&body).ok() };
        let stmt = if expr.is_none() && !body.is_empty() {
            parse_snippet(&body).ok().and_then(|mut s| if s.len() == 1 { s.pop() } else { None })
        } else {
            None
        };
        Definition::Macro { params, body, expr, stmt }
    }

    pub fn callees(&self) -> Vec<String> {
        match self {
            Definition::Function { callees, .. } => callees.clone(),
            Definition::Macro { expr, stmt, .. } => {
                let mut out = Vec::new();
                for n in expr.iter().chain(stmt.iter()) {
                    collect_callees(n, &mut out);
                }
                out
            }
        }
    }
}

/// Name → definition. Later insertions win, mirroring `#define` redefinition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Definitions {
    map: BTreeMap<String, Definition>,
}

impl Definitions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Harvests macros and function definitions from one translation unit.
    pub fn from_source(source: &str) -> Self {
        let mut defs = Definitions::new();
        defs.add_source(source);
        defs
    }

    pub fn add_source(&mut self, source: &str) {
        let tree = super::parse::ts_tree(source);
        self.walk(tree.root_node(), source);
    }

    fn walk(&mut self, node: TsNode, source: &str) {
        let src = source.as_bytes();
        let mut cursor = node.walk();
        let children: Vec<TsNode> = node.named_children(&mut cursor).collect();
        for child in children {
            match child.kind() {
                "preproc_def" => {
                    let Some(name) = child.child_by_field_name("name") else { continue };
                    let body = child.child_by_field_name("value").map(|v| text_of(v, src)).unwrap_or("");
                    self.insert(text_of(name, src), Definition::make_macro(None, &join_continuations(body)));
                }
                "preproc_function_def" => {
                    let Some(name) = child.child_by_field_name("name") else { continue };
                    let params = child
                        .child_by_field_name("parameters")
                        .map(|p| {
                            let mut c = p.walk();
                            let v: Vec<String> = p
                                .named_children(&mut c)
                                .map(|x| text_of(x, src).to_string())
                                .collect();
                            v
                        })
                        .unwrap_or_default();
                    let body = child.child_by_field_name("value").map(|v| text_of(v, src)).unwrap_or("");
                    self.insert(text_of(name, src), Definition::make_macro(Some(params), &join_continuations(body)));
                }
                "function_definition" => {
                    let Some(name) = child.child_by_field_name("declarator").and_then(|d| declarator_name(d, src)) else {
                        continue;
                    };
                    let text = text_of(child, src);
                    let Ok(tree) = parse_function_text(text, child.start_position().row as u32 + 1) else { continue };
                    let Some(root) = tree.root else { continue };
                    let params = root.children[0]
                        .children
                        .iter()
                        .filter_map(|d| d.children.get(1).map(|i| i.text().to_string()))
                        .collect();
                    let body = root.children[1].clone();
                    let mut callees = Vec::new();
                    collect_callees(&body, &mut callees);
                    self.insert(
                        &name,
                        Definition::Function { params, is_static: has_storage_class(child, src, "static"), body, callees },
                    );
                }
                "preproc_if" | "preproc_ifdef" | "preproc_else" | "preproc_elif" | "linkage_specification"
                | "declaration_list" => self.walk(child, source),
                _ => {}
            }
        }
    }

    pub fn insert(&mut self, name: &str, def: Definition) {
        self.map.insert(name.to_string(), def);
    }

    pub fn get(&self, name: &str) -> Option<&Definition> {
        self.map.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    /// Adds entries from `other` that are not already present.
    pub fn extend_missing(&mut self, other: Definitions) {
        for (k, v) in other.map {
            self.map.entry(k).or_insert(v);
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn join_continuations(body: &str) -> String {
    body.replace("\\\r\n", " ").replace("\\\n", " ")
}

pub(crate) fn collect_callees(node: &Node, out: &mut Vec<String>) {
    node.walk(&mut |n| {
        if n.kind == NodeKind::Call {
            if let Some(callee) = n.children.first().filter(|c| c.kind == NodeKind::Ident) {
                if !out.iter().any(|o| o == callee.text()) {
                    out.push(callee.text().to_string());
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harvests_macros_and_functions() {
        let src = "#define FFMIN(a,b) ((a) > (b) ? (b) : (a))\n#define LIMIT 65536\n\
                   #define RESET(x) do { (x) = 0; } while (0)\n\
                   static int twice(int v) { return v * 2; }\n\
                   void *av_calloc(size_t n, size_t s) { if (!n) return NULL; return calloc(n, s); }\n";
        let d = Definitions::from_source(src);
        match d.get("FFMIN").unwrap() {
            Definition::Macro { params, expr, .. } => {
                assert_eq!(params.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
                assert_eq!(expr.as_ref().unwrap().kind, NodeKind::Cond);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(d.get("LIMIT"), Some(Definition::Macro { params: None, expr: Some(_), .. })));
        assert!(matches!(d.get("RESET"), Some(Definition::Macro { stmt: Some(_), .. })));
        match d.get("twice").unwrap() {
            Definition::Function { params, is_static, .. } => {
                assert_eq!(params, &["v"]);
                assert!(*is_static);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(d.get("av_calloc").unwrap().callees(), ["calloc"]);
    }

    #[test]
    fn continuation_lines_are_joined() {
        let d = Definitions::from_source("#define ADD(r, l) \\\n    ((r)->length += (l))\n");
        assert!(matches!(d.get("ADD"), Some(Definition::Macro { expr: Some(_), .. })));
    }
}
