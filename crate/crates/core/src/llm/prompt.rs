use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CveContext, LlmError, Strategy};
use crate::patch::ChangeKind;
use crate::slicer::DangerousFlow;

const DEFAULT_EXEMPLARS: &str = include_str!("data/exemplars/default.json");

pub const SYSTEM_PROMPT: &str = "You are a security researcher, expert in detecting security vulnerabilities.\n\
I will provide you with a CVE ID, CWE ID, CVE description, and dangerous code.\n\
Please extract the vulnerability logic from the code and indicate which statements are relevant to the vulnerability logic.\n\
Provide a response only in the following format: vulnerability logic: <text>\n\
vulnerable lines : [<Line number List>]\n\
Do not include the added line number (with +) and anything else in response.";

pub const COT_INSTRUCTION: &str = "Please reason the vulnerability logic from the provided code, then list the vulnerable lines.";

const UNKNOWN: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarLine {
    pub line: u32,
    pub kind: ChangeKind,
    pub text: String,
}

/// A worked example shown to the model before the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub family: String,
    pub cve_id: String,
    pub cwe_id: String,
    pub description: String,
    pub flow: Vec<ExemplarLine>,
    pub logic: String,
    pub lines: Vec<u32>,
}

/// The default exemplar pair plus optional per-CWE replacements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub default: Vec<Exemplar>,
    pub by_cwe: BTreeMap<String, Vec<Exemplar>>,
}

impl Default for ExemplarSet {
    fn default() -> Self {
        Self { default: serde_json::from_str(DEFAULT_EXEMPLARS).expect("bundled exemplars are valid"), by_cwe: BTreeMap::new() }
    }
}

impl ExemplarSet {
    /// Loads per-CWE overrides from a JSON object `{"CWE-416": [..], ..}`.
    pub fn with_overrides(mut self, path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let more: BTreeMap<String, Vec<Exemplar>> =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        self.by_cwe.extend(more);
        Ok(self)
    }

    pub fn for_cwe(&self, cwe: &str) -> &[Exemplar] {
        self.by_cwe.get(cwe.trim()).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub exemplars: Vec<Exemplar>,
    pub cot_instruction: Option<String>,
}

fn or_unknown(s: &str) -> &str {
    if s.trim().is_empty() {
        UNKNOWN
    } else {
        s.trim()
    }
}

fn prefix(kind: ChangeKind) -> &'static str {
    match kind {
        ChangeKind::Added => "+",
        ChangeKind::Deleted => "-",
        ChangeKind::Context => "",
    }
}

fn cve_block(out: &mut String, cve: &str, cwe: &str, description: &str) {
    out.push_str(&format!("CVE ID: {}\nCWE ID: {}\nCVE description: {}\n", or_unknown(cve), or_unknown(cwe), or_unknown(description)));
}

/// Renders flow lines as `<number>: <marker><text>`.
pub fn render_flow(flow: &DangerousFlow) -> String {
    let mut out = String::new();
    for s in &flow.statements {
        for (i, text) in s.text.split('\n').enumerate() {
            out.push_str(&format!("{}: {}{}\n", s.line + i as u32, prefix(s.kind), text));
        }
    }
    out
}

fn render_exemplar_flow(lines: &[ExemplarLine]) -> String {
    lines.iter().map(|l| format!("{}: {}{}\n", l.line, prefix(l.kind), l.text)).collect()
}

pub fn format_answer(logic: &str, lines: &[u32]) -> String {
    let list: Vec<String> = lines.iter().map(u32::to_string).collect();
    format!("vulnerability logic: {logic}\nvulnerable lines : [{}]", list.join(", "))
}

/// Assembles the system and user messages. Pure: equal inputs give
/// byte-identical bundles.
pub fn build_prompt(ctx: &CveContext, flow: &DangerousFlow, strategy: Strategy, exemplars: &ExemplarSet) -> Result<PromptBundle, LlmError> {
    if flow.is_empty() {
        return Err(LlmError::EmptyFlow);
    }
    let shots: Vec<Exemplar> = match strategy {
        Strategy::ZeroShot => Vec::new(),
        Strategy::FewShot | Strategy::FewShotCot => exemplars.for_cwe(&ctx.cwe_id).to_vec(),
    };
    let mut user = String::new();
    for (i, ex) in shots.iter().enumerate() {
        user.push_str(&format!("### Example {}\n", i + 1));
        cve_block(&mut user, &ex.cve_id, &ex.cwe_id, &ex.description);
        user.push_str("Dangerous flow:\n");
        user.push_str(&render_exemplar_flow(&ex.flow));
        user.push_str("Answer:\n");
        user.push_str(&format_answer(&ex.logic, &ex.lines));
        user.push_str("\n\n");
    }
    if !shots.is_empty() {
        user.push_str("### Target\n");
    }
    cve_block(&mut user, &ctx.cve_id, &ctx.cwe_id, &ctx.description);
    user.push_str(&format!("Function: {} ({})\n", flow.function_name, flow.file_path));
    user.push_str("Dangerous flow:\n");
    user.push_str(&render_flow(flow));
    let cot = (strategy == Strategy::FewShotCot).then(|| COT_INSTRUCTION.to_string());
    if let Some(c) = &cot {
        user.push('\n');
        user.push_str(c);
        user.push('\n');
    }
    Ok(PromptBundle { system_text: SYSTEM_PROMPT.to_string(), user_text: user, exemplars: shots, cot_instruction: cot })
}
