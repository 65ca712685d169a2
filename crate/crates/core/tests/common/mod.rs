#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use vulnspan::cfront::{normalize_ast, parse_snippet, CFrontError, Node, NodeKind, Span, SyntaxTree};
use vulnspan::report::{ConfigLayer, RunConfig};
use vulnspan_testkit::{rename, write, Fixture, Mark, RepoBuilder};

// ---------------------------------------------------------------------------
// Random C fragments

const VARS: &[&str] = &["a", "b", "c", "n", "len", "x", "y", "off"];
const FUNCS: &[&str] = &["f", "g", "read_u8", "check"];
const FIELDS: &[&str] = &["size", "count", "data"];
const BINOPS: &[&str] = &["+", "-", "*", "/", "%", "==", "!=", "<", "<=", ">", ">=", "&&", "||", "&", "|", "^", "<<", ">>"];
pub const COMMUTATIVE: &[&str] = &["+", "*", "==", "!=", "&&", "||", "&", "|", "^"];
const COMPOUND: &[&str] = &["+=", "-=", "*=", "|=", "&=", "^=", "<<="];

pub struct CGen {
    rng: StdRng,
}

impl CGen {
    pub fn new(seed: u64) -> Self {
        Self { rng: StdRng::seed_from_u64(seed) }
    }

    fn pick<'a>(&mut self, xs: &[&'a str]) -> &'a str {
        xs[self.rng.gen_range(0..xs.len())]
    }

    pub fn var(&mut self) -> String {
        self.pick(VARS).to_string()
    }

    fn leaf(&mut self) -> String {
        match self.rng.gen_range(0..10) {
            0..=4 => self.var(),
            5..=6 => self.rng.gen_range(0..300).to_string(),
            7..=8 => format!("p->{}", self.pick(FIELDS)),
            _ => format!("buf[{}]", self.var()),
        }
    }

    /// Side-effect-free expression without calls.
    pub fn pure(&mut self, depth: u32) -> String {
        if depth == 0 {
            return self.leaf();
        }
        match self.rng.gen_range(0..10) {
            0..=2 => self.leaf(),
            3..=7 => {
                let op = self.pick(BINOPS);
                format!("({} {op} {})", self.pure(depth - 1), self.pure(depth - 1))
            }
            _ => {
                let op = self.pick(&["-", "!", "~"]);
                format!("{op}({})", self.pure(depth - 1))
            }
        }
    }

    /// Expression that may contain calls.
    pub fn expr(&mut self, depth: u32) -> String {
        if depth == 0 {
            return self.leaf();
        }
        match self.rng.gen_range(0..10) {
            0..=1 => self.leaf(),
            2..=5 => {
                let op = self.pick(BINOPS);
                let l = self.expr(depth - 1);
                // Both operands of a commutative operator never carry calls,
                // so the right side stays pure.
                format!("({l} {op} {})", self.pure(depth - 1))
            }
            6..=7 => {
                let f = self.pick(FUNCS);
                format!("{f}({}, {})", self.pure(depth - 1), self.pure(depth - 1))
            }
            _ => format!("-({})", self.pure(depth - 1)),
        }
    }

    fn lvalue(&mut self) -> String {
        match self.rng.gen_range(0..6) {
            0..=3 => self.var(),
            4 => format!("p->{}", self.pick(FIELDS)),
            _ => format!("buf[{}]", self.pure(1)),
        }
    }

    fn simple_stmt(&mut self) -> String {
        match self.rng.gen_range(0..9) {
            0..=2 => format!("{} = {};", self.lvalue(), self.expr(2)),
            3 => {
                let op = self.pick(COMPOUND);
                format!("{} {op} {};", self.lvalue(), self.pure(2))
            }
            4 => format!("{}{};", self.var(), self.pick(&["++", "--"])),
            5 => format!("{}({}, {});", self.pick(FUNCS), self.pure(1), self.pure(1)),
            6 => format!("{} = {} ? {} : {};", self.var(), self.pure(1), self.expr(1), self.pure(1)),
            7 => format!("return {};", self.expr(1)),
            _ => format!("++{};", self.var()),
        }
    }

    pub fn stmts(&mut self, depth: u32, max: usize) -> String {
        let n = self.rng.gen_range(1..=max);
        (0..n).map(|_| self.stmt(depth)).collect::<Vec<_>>().join(" ")
    }

    /// Statement without `continue`, and without `break` outside a switch.
    pub fn stmt(&mut self, depth: u32) -> String {
        if depth == 0 {
            return self.simple_stmt();
        }
        let d = depth - 1;
        match self.rng.gen_range(0..12) {
            0..=3 => self.simple_stmt(),
            4 => format!("if ({}) {{ {} }}", self.expr(2), self.stmts(d, 2)),
            5 => format!("if ({}) {{ {} }} else {{ {} }}", self.expr(2), self.stmts(d, 2), self.stmts(d, 2)),
            6 => format!("while ({}) {{ {} }}", self.pure(2), self.stmts(d, 2)),
            7 => self.for_while_pair(d).0,
            8 => format!("do {{ {} }} while ({});", self.stmts(d, 2), self.pure(2)),
            9 => self.switch_if_pair(d).0,
            10 => format!("{{ {} }}", self.stmts(d, 3)),
            _ => format!("if ({}) {}", self.pure(1), self.simple_stmt()),
        }
    }

    /// A `for` loop and the `while` loop with the same meaning.
    pub fn for_while_pair(&mut self, depth: u32) -> (String, String) {
        let i = self.var();
        let init = format!("{i} = {}", self.pure(1));
        let cond = self.pure(2);
        let update = match self.rng.gen_range(0..3) {
            0 => format!("{i}++"),
            1 => format!("{i} += {}", self.pure(1)),
            _ => format!("{i} = {i} + 1"),
        };
        let body = self.stmts(depth, 2);
        (
            format!("for ({init}; {cond}; {update}) {{ {body} }}"),
            format!("{init}; while ({cond}) {{ {body} {update}; }}"),
        )
    }

    /// A `switch` with breaking cases and the equivalent if/else chain.
    pub fn switch_if_pair(&mut self, depth: u32) -> (String, String) {
        let sel = self.var();
        let mut values: Vec<u32> = (0..self.rng.gen_range(1..=3)).map(|_| self.rng.gen_range(0..16)).collect();
        values.sort();
        values.dedup();
        let bodies: Vec<String> = values.iter().map(|_| self.stmts(depth, 2)).collect();
        let default = self.rng.gen_bool(0.5).then(|| self.stmts(depth, 2));

        let mut sw = format!("switch ({sel}) {{");
        for (v, b) in values.iter().zip(&bodies) {
            sw.push_str(&format!(" case {v}: {b} break;"));
        }
        if let Some(d) = &default {
            sw.push_str(&format!(" default: {d}"));
        }
        sw.push_str(" }");

        let mut chain = String::new();
        for (k, (v, b)) in values.iter().zip(&bodies).enumerate() {
            if k > 0 {
                chain.push_str(" else ");
            }
            chain.push_str(&format!("if ({sel} == {v}) {{ {b} }}"));
        }
        if let Some(d) = &default {
            chain.push_str(&format!(" else {{ {d} }}"));
        }
        (sw, chain)
    }

    /// `r = x op y` and `r = y op x` for a commutative `op`, where `y` is pure.
    pub fn commutative_pair(&mut self) -> (String, String) {
        let op = self.pick(COMMUTATIVE);
        let r = self.var();
        let x = self.expr(2);
        let y = self.pure(2);
        (format!("{r} = ({x}) {op} ({y});"), format!("{r} = ({y}) {op} ({x});"))
    }
}

/// Statement list of `text` under a single block root.
pub fn block_tree(text: &str) -> Result<SyntaxTree, CFrontError> {
    let stmts = parse_snippet(text)?;
    Ok(SyntaxTree::new(Node::new(NodeKind::Block, Span::default(), stmts)))
}

/// Canonical key of the normalized form of `text`.
pub fn normal_key(text: &str) -> Result<String, CFrontError> {
    let n = normalize_ast(&block_tree(text)?);
    Ok(n.tree.root.map(|r| r.key()).unwrap_or_default())
}

// ---------------------------------------------------------------------------
// Edit-distance oracle

/// Levenshtein distance from its recursive definition, memoized top-down.
pub fn edit_distance_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut [Option<usize>], w: usize) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(v) = memo[i * w + j] {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo, w)
        } else {
            1 + go(a, b, i + 1, j, memo, w)
                .min(go(a, b, i, j + 1, memo, w))
                .min(go(a, b, i + 1, j + 1, memo, w))
        };
        memo[i * w + j] = Some(v);
        v
    }
    let w = b.len() + 1;
    let mut memo = vec![None; (a.len() + 1) * w];
    go(a, b, 0, 0, &mut memo, w)
}

pub fn similarity_oracle<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let m = a.len().max(b.len());
    if m == 0 {
        return 1.0;
    }
    1.0 - edit_distance_oracle(a, b) as f64 / m as f64
}

/// Every string over `alphabet` of length at most `max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in alphabet {
                let mut t = s.clone();
                t.push(*c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

// ---------------------------------------------------------------------------
// FFmpeg mxf primer pack fixture

pub const PRIMER_PREAMBLE: &str = "#include \"libavutil/avassert.h\"\n#include \"avformat.h\"\n#include \"mxf.h\"\n\n/* primer pack */\n";

pub fn primer_pack(fixed: bool) -> String {
    let check = if fixed { "    if (item_num > 65536 || item_num < 0) {" } else { "    if (item_num > 65536) {" };
    let body = [
        "static int mxf_read_primer_pack(void *arg, AVIOContext *pb, int tag, int size, UID uid, int64_t klv_offset)",
        "{",
        "    MXFContext *mxf = arg;",
        "    int item_num = avio_rb32(pb);",
        "    int item_len = avio_rb32(pb);",
        "    if (item_len != 18) {",
        "        avpriv_request_sample(pb, \"Primer pack item length %d\", item_len);",
        "        return AVERROR_PATCHWELCOME;",
        "    }",
        check,
        "        av_log(mxf->fc, AV_LOG_ERROR, \"item_num %d is too large\\n\", item_num);",
        "        return AVERROR_INVALIDDATA;",
        "    }",
        "    if (mxf->local_tags)",
        "        av_log(mxf->fc, AV_LOG_VERBOSE, \"Multiple primer packs\\n\");",
        "    av_free(mxf->local_tags);",
        "    mxf->local_tags_count = 0;",
        "    mxf->local_tags = av_calloc(item_num, item_len);",
        "    if (!mxf->local_tags)",
        "        return AVERROR(ENOMEM);",
        "    mxf->local_tags_count = item_num;",
        "    avio_read(pb, mxf->local_tags, item_num*item_len);",
        "    return 0;",
        "}",
    ];
    format!("{PRIMER_PREAMBLE}{}\n", body.join("\n"))
}

/// Repository whose last commit is the primer pack fix.
pub fn primer_pack_repo() -> (Fixture, Mark) {
    let mut b = RepoBuilder::new();
    b.commit("main", "mxfdec: primer pack", vec![write("libavformat/mxfdec.c", &primer_pack(false))]);
    let fix = b.commit("main", "mxfdec: reject negative item_num", vec![write("libavformat/mxfdec.c", &primer_pack(true))]);
    (b.build(), fix)
}

// ---------------------------------------------------------------------------
// Histories with a known introducing commit

pub struct Scenario {
    pub name: &'static str,
    pub fixture: Fixture,
    pub pc: String,
    pub vic: String,
    /// Substrings of the flow lines a model would select.
    pub needles: Vec<String>,
    pub expected_vv: Vec<String>,
}

impl Scenario {
    fn new(name: &'static str, b: RepoBuilder, pc: Mark, vic: Mark, needles: &[&str], vv: &[&str]) -> Self {
        let fixture = b.build();
        Self {
            name,
            pc: fixture.id(pc).to_string(),
            vic: fixture.id(vic).to_string(),
            fixture,
            needles: needles.iter().map(|s| s.to_string()).collect(),
            expected_vv: vv.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn config(&self) -> RunConfig {
        run_config(&self.fixture, &self.pc)
    }
}

pub fn run_config(fixture: &Fixture, pc: &str) -> RunConfig {
    let layer = ConfigLayer {
        repo: Some(fixture.path().to_path_buf()),
        commit: Some(pc.to_string()),
        cve: Some("CVE-2024-0001".into()),
        cwe: Some("CWE-787".into()),
        description: Some("Out-of-bounds write when copying a record".into()),
        backend: Some("stub".into()),
        ..ConfigLayer::default()
    };
    RunConfig::resolve([layer]).expect("valid fixture config")
}

/// A C file holding `parse_record` with `body` (already indented), after
/// `helpers` extra functions and an optional include.
pub fn record_file(include: bool, helpers: usize, body: &[&str]) -> String {
    let mut s = String::from("#include <string.h>\n");
    if include {
        s.push_str("#include \"rec.h\"\n");
    }
    s.push('\n');
    for k in 0..helpers {
        s.push_str(&format!("static int helper_{k}(int v)\n{{\n    return v + {k};\n}}\n\n"));
    }
    s.push_str("int parse_record(struct rec *r, const char *src, int len, int cap)\n{\n");
    for l in body {
        s.push_str(l);
        s.push('\n');
    }
    s.push_str("}\n");
    s
}

const HEAD: &[&str] = &["    char *dst = r->data;", "    int total = r->total;", "    if (src == NULL)", "        return -1;"];
const TAIL: &[&str] = &["    r->total = total;", "    return 0;"];
const VULN: &[&str] = &["    memcpy(dst, src, len);", "    total = total + len;"];
const GUARD: &[&str] = &["    if (len > cap)", "        return -2;"];

fn body(parts: &[&[&'static str]]) -> Vec<&'static str> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

const FILE: &str = "src/record.c";
const NEEDLES: &[&str] = &["memcpy(dst, src, len)", "total = total + len"];

fn linear() -> Scenario {
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, TAIL])))]);
    b.tag("v1.0", c0);
    let c1 = b.commit("main", "docs", vec![write("README", "record parser\n")]);
    b.tag("v1.1", c1);
    let vic = b.commit("main", "copy payload", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, VULN, TAIL])))]);
    b.tag("v1.2", vic);
    let c3 = b.commit("main", "build", vec![write("Makefile", "all:\n")]);
    b.tag("v1.3", c3);
    let pc = b.commit("main", "bound the copy", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, GUARD, VULN, TAIL])))]);
    b.tag("v1.4", pc);
    Scenario::new("linear", b, pc, vic, NEEDLES, &["v1.2", "v1.3"])
}

fn branchy() -> Scenario {
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, TAIL])))]);
    b.tag("v1.0", c0);
    b.branch("feature", c0);
    let vic = b.commit("feature", "copy payload", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, VULN, TAIL])))]);
    b.commit("feature", "feature notes", vec![write("NOTES", "payload copy\n")]);
    let c1 = b.commit("main", "docs", vec![write("README", "record parser\n")]);
    b.tag("v1.1", c1);
    let feature_tip = b.commit("feature", "more notes", vec![write("NOTES", "payload copy, v2\n")]);
    let m = b.merge("main", feature_tip, "merge feature", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, VULN, TAIL]))), write("NOTES", "payload copy, v2\n")]);
    b.tag("v2.0", m);
    let c2 = b.commit("main", "build", vec![write("Makefile", "all:\n")]);
    b.tag("v2.1", c2);
    let pc = b.commit("main", "bound the copy", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, GUARD, VULN, TAIL])))]);
    b.tag("v2.2", pc);
    Scenario::new("branchy", b, pc, vic, NEEDLES, &["v2.0", "v2.1"])
}

fn renamed() -> Scenario {
    let old = "src/buf.c";
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write(old, &record_file(false, 0, &body(&[HEAD, TAIL])))]);
    b.tag("v1.0", c0);
    let vic = b.commit("main", "copy payload", vec![write(old, &record_file(false, 0, &body(&[HEAD, VULN, TAIL])))]);
    b.tag("v1.1", vic);
    let c2 = b.commit("main", "move parser", vec![rename(old, FILE)]);
    b.tag("v1.2", c2);
    let pc = b.commit("main", "bound the copy", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, GUARD, VULN, TAIL])))]);
    b.tag("v1.3", pc);
    Scenario::new("rename", b, pc, vic, NEEDLES, &["v1.1", "v1.2"])
}

pub const REC_H: &str = "#define REC_ADD_LEN(r, n) ((r)->length += (n))\n#define REC_LEN(r) ((r)->length)\n";

fn macro_refactor() -> Scenario {
    let raw: &[&str] = &["    memcpy(dst, src, len);", "    r->length += len;", "    if (r->length == 0)", "        return 1;"];
    let wrapped: &[&str] = &["    memcpy(dst, src, len);", "    REC_ADD_LEN(r, len);", "    if (REC_LEN(r) == 0)", "        return 1;"];
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write("src/rec.h", REC_H), write(FILE, &record_file(true, 0, &body(&[HEAD, TAIL])))]);
    b.tag("v1.0", c0);
    let vic = b.commit("main", "track length", vec![write(FILE, &record_file(true, 0, &body(&[HEAD, raw, TAIL])))]);
    b.tag("v1.1", vic);
    let c2 = b.commit("main", "use record accessors", vec![write(FILE, &record_file(true, 0, &body(&[HEAD, wrapped, TAIL])))]);
    b.tag("v1.2", c2);
    let pc = b.commit("main", "bound the copy", vec![write(FILE, &record_file(true, 0, &body(&[HEAD, GUARD, wrapped, TAIL])))]);
    b.tag("v1.3", pc);
    Scenario::new("refactor_between", b, pc, vic, &["memcpy(dst, src, len)", "REC_ADD_LEN", "REC_LEN(r) == 0"], &["v1.1", "v1.2"])
}

fn initial_commit() -> Scenario {
    let mut b = RepoBuilder::new();
    let vic = b.commit("main", "record parser", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, VULN, TAIL])))]);
    b.tag("v1.0", vic);
    let c1 = b.commit("main", "helpers", vec![write(FILE, &record_file(false, 1, &body(&[HEAD, VULN, TAIL])))]);
    b.tag("v1.1", c1);
    let pc = b.commit("main", "bound the copy", vec![write(FILE, &record_file(false, 1, &body(&[HEAD, GUARD, VULN, TAIL])))]);
    b.tag("v1.2", pc);
    Scenario::new("initial_commit_origin", b, pc, vic, NEEDLES, &["v1.0", "v1.1"])
}

fn mixed_patch() -> Scenario {
    let pre: &[&str] = &[
        "    int n = read_count(src);",
        "    if (n > 65536)",
        "        return -1;",
        "    r->items = calloc(n, 16);",
        "    read_items(src, r->items, n);",
    ];
    let post: &[&str] = &[
        "    int n = read_count(src);",
        "    if (n > 65536 || n < 0)",
        "        return -1;",
        "    r->items = calloc(n, 16);",
        "    read_items(src, r->items, n);",
    ];
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, TAIL])))]);
    b.tag("v1.0", c0);
    let vic = b.commit("main", "read items", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, pre, TAIL])))]);
    b.tag("v1.1", vic);
    let c2 = b.commit("main", "helpers", vec![write(FILE, &record_file(false, 2, &body(&[HEAD, pre, TAIL])))]);
    b.tag("v1.2", c2);
    let pc = b.commit("main", "reject negative counts", vec![write(FILE, &record_file(false, 2, &body(&[HEAD, post, TAIL])))]);
    b.tag("v1.3", pc);
    Scenario::new("mixed_patch", b, pc, vic, &["if (n > 65536)", "calloc(n, 16)", "read_items"], &["v1.1", "v1.2"])
}

fn operand_refactor() -> Scenario {
    let orig: &[&str] = &["    total = total + len;", "    memcpy(dst + r->off, src, len);"];
    let swapped: &[&str] = &["    total += len;", "    memcpy(r->off + dst, src, len);"];
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, TAIL])))]);
    b.tag("v1.0", c0);
    let vic = b.commit("main", "append payload", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, orig, TAIL])))]);
    b.tag("v1.1", vic);
    let c2 = b.commit("main", "style", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, swapped, TAIL])))]);
    b.tag("v1.2", c2);
    let pc = b.commit("main", "bound the copy", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, GUARD, swapped, TAIL])))]);
    b.tag("v1.3", pc);
    Scenario::new("operand_refactor", b, pc, vic, &["total +=", "memcpy("], &["v1.1", "v1.2"])
}

fn deletion_with_line_shift() -> Scenario {
    let freed: &[&str] = &["    if (len == 0) {", "        free(r->data);", "        return -3;", "    }"];
    let kept: &[&str] = &["    if (len == 0) {", "        return -3;", "    }"];
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, kept, TAIL])))]);
    b.tag("v1.0", c0);
    let vic = b.commit("main", "release on empty", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, freed, TAIL])))]);
    b.tag("v1.1", vic);
    for k in 1..=4 {
        let c = b.commit("main", &format!("helper {k}"), vec![write(FILE, &record_file(false, k, &body(&[HEAD, freed, TAIL])))]);
        b.tag(&format!("v1.1.{k}"), c);
    }
    let pc = b.commit("main", "no double free", vec![write(FILE, &record_file(false, 4, &body(&[HEAD, kept, TAIL])))]);
    b.tag("v1.2", pc);
    Scenario::new("deletion_with_line_shift", b, pc, vic, &["free(r->data)"], &["v1.1", "v1.1.1", "v1.1.2", "v1.1.3", "v1.1.4"])
}

fn release_branch_fix() -> Scenario {
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, TAIL])))]);
    b.tag("v1.0", c0);
    let vic = b.commit("main", "copy payload", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, VULN, TAIL])))]);
    b.tag("v1.1", vic);
    let c2 = b.commit("main", "docs", vec![write("README", "record parser\n")]);
    b.tag("v1.2", c2);
    b.branch("release-1.2", c2);
    let pc = b.commit("release-1.2", "bound the copy", vec![write(FILE, &record_file(false, 0, &body(&[HEAD, GUARD, VULN, TAIL])))]);
    b.tag("v1.2.1", pc);
    let c3 = b.commit("main", "build", vec![write("Makefile", "all:\n")]);
    b.tag("v1.3", c3);
    Scenario::new("release_branch_fix", b, pc, vic, NEEDLES, &["v1.1", "v1.2", "v1.3"])
}

fn two_functions() -> Scenario {
    let second = |vuln: bool, guard: bool| {
        let mut s = String::from("\nint parse_trailer(struct rec *r, const char *src, int n)\n{\n");
        if guard {
            s.push_str("    if (n > 64)\n        return -1;\n");
        }
        if vuln {
            s.push_str("    memmove(r->trailer, src, n);\n");
        }
        s.push_str("    return n;\n}\n");
        s
    };
    let file = |vuln1: bool, vuln2: bool, fixed: bool| {
        let mut parts: Vec<&[&'static str]> = vec![HEAD];
        if fixed {
            parts.push(GUARD);
        }
        if vuln1 {
            parts.push(VULN);
        }
        parts.push(TAIL);
        record_file(false, 0, &body(&parts)) + &second(vuln2, fixed)
    };
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "record parser", vec![write(FILE, &file(false, false, false))]);
    b.tag("v1.0", c0);
    let vic = b.commit("main", "copy payload", vec![write(FILE, &file(true, false, false))]);
    b.tag("v1.1", vic);
    let c2 = b.commit("main", "copy trailer", vec![write(FILE, &file(true, true, false))]);
    b.tag("v1.2", c2);
    let pc = b.commit("main", "bound both copies", vec![write(FILE, &file(true, true, true))]);
    b.tag("v1.3", pc);
    Scenario::new("two_functions", b, pc, vic, &["memcpy(dst, src, len)", "total = total + len", "memmove"], &["v1.1", "v1.2"])
}

pub fn scenarios() -> Vec<Scenario> {
    vec![
        linear(),
        branchy(),
        renamed(),
        macro_refactor(),
        initial_commit(),
        mixed_patch(),
        operand_refactor(),
        deletion_with_line_shift(),
        release_branch_fix(),
        two_functions(),
    ]
}

/// Release branches forked from a main line, with the flaw introduced
/// before the 2.35 branch point and fixed on main before the 2.36 one.
pub fn binutils_like() -> Scenario {
    let path = "binutils/readelf.c";
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "initial import", vec![write(path, &record_file(false, 0, &body(&[HEAD, TAIL])))]);
    let (mut vic, mut pc) = (c0, c0);
    for minor in 30..=42 {
        if minor == 35 {
            vic = b.commit("main", "copy note payload", vec![write(path, &record_file(false, 0, &body(&[HEAD, VULN, TAIL])))]);
        }
        if minor == 36 {
            pc = b.commit("main", "bound note copy", vec![write(path, &record_file(false, 0, &body(&[HEAD, GUARD, VULN, TAIL])))]);
        }
        let point = b.commit("main", &format!("bump version to 2.{minor}.50"), vec![write("VERSION", &format!("2.{minor}.50\n"))]);
        let branch = format!("binutils-2_{minor}-branch");
        b.branch(&branch, point);
        let rel = b.commit(&branch, &format!("release 2.{minor}"), vec![write("VERSION", &format!("2.{minor}\n"))]);
        b.annotated_tag(&format!("binutils-2_{minor}"), rel);
    }
    Scenario::new("binutils", b, pc, vic, NEEDLES, &["binutils-2_35"])
}

/// `commits` commits on one line; the flaw appears at `vic_at` and the fix
/// is the last commit. Most commits edit a sibling function of the same
/// file, the rest touch other files.
pub fn long_history(commits: usize, vic_at: usize) -> Scenario {
    assert!(vic_at > 0 && vic_at + 1 < commits);
    let counter = |k: usize| format!("\nint counter(void)\n{{\n    return {k};\n}}\n");
    let file = |k: usize, vuln: bool, fixed: bool| {
        let mut parts: Vec<&[&'static str]> = vec![HEAD];
        if fixed {
            parts.push(GUARD);
        }
        if vuln {
            parts.push(VULN);
        }
        parts.push(TAIL);
        record_file(false, 0, &body(&parts)) + &counter(k)
    };
    let mut b = RepoBuilder::new();
    let mut vic = None;
    for k in 0..commits - 1 {
        let vuln = k >= vic_at;
        let change = if k % 3 == 2 && k != vic_at {
            write(&format!("doc/note{}.txt", k % 17), &format!("note {k}\n"))
        } else {
            write(FILE, &file(k, vuln, false))
        };
        let c = b.commit("main", &format!("change {k}"), vec![change]);
        if k == vic_at {
            vic = Some(c);
        }
        if k % 50 == 0 {
            b.tag(&format!("r{}", k / 50), c);
        }
    }
    let pc = b.commit("main", "bound the copy", vec![write(FILE, &file(commits, true, true))]);
    let vic = vic.expect("vic inside history");
    let expected: Vec<String> = (0..commits - 1).filter(|k| k % 50 == 0 && *k >= vic_at).map(|k| format!("r{}", k / 50)).collect();
    let mut s = Scenario::new("long_history", b, pc, vic, NEEDLES, &[]);
    s.expected_vv = expected;
    s
}
