//! Model-assisted refinement of a dangerous flow into the vulnerable
//! statement set.

mod backend;
mod cache;
mod prompt;

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::slicer::DangerousFlow;

pub use backend::{
    target_flow_lines, ChatMessage, ChatRequest, HttpBackend, HttpSettings, ModelBackend, ReqwestTransport, StubBackend,
    Transport, TransportResponse,
};
pub use cache::{request_digest, CacheEntry, ResponseCache};
pub use prompt::{build_prompt, format_answer, render_flow, Exemplar, ExemplarLine, ExemplarSet, PromptBundle, COT_INSTRUCTION, SYSTEM_PROMPT};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("model backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("token limit exceeded: {0}")]
    TokenLimit(String),
    #[error("malformed backend reply: {0}")]
    BadReply(String),
    #[error("response has no `vulnerable lines : [...]` list")]
    UnparseableResponse,
    #[error("dangerous flow is empty")]
    EmptyFlow,
    #[error("response cache: {0}")]
    Cache(String),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CveContext {
    pub cve_id: String,
    pub cwe_id: String,
    pub description: String,
}

impl CveContext {
    /// True when `cve_id` is empty or shaped like `CVE-2017-14169`.
    pub fn has_valid_id(&self) -> bool {
        self.cve_id.is_empty() || Regex::new(r"^CVE-\d{4}-\d{4,}$").expect("static regex").is_match(&self.cve_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ZeroShot,
    FewShot,
    #[default]
    FewShotCot,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('_', "-").as_str() {
            "zero-shot" => Ok(Self::ZeroShot),
            "few-shot" => Ok(Self::FewShot),
            "few-shot-cot" => Ok(Self::FewShotCot),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for QuerySettings {
    fn default() -> Self {
        Self { model: "gpt-4".into(), temperature: 0.0, max_tokens: 1024 }
    }
}

pub fn chat_request(bundle: &PromptBundle, settings: &QuerySettings) -> ChatRequest {
    ChatRequest {
        model: settings.model.clone(),
        messages: vec![
            ChatMessage { role: "system".into(), content: bundle.system_text.clone() },
            ChatMessage { role: "user".into(), content: bundle.user_text.clone() },
        ],
        temperature: settings.temperature,
        max_tokens: settings.max_tokens,
    }
}

/// Sends the bundle, consulting and filling the cache when one is given.
pub fn query_model(
    bundle: &PromptBundle,
    backend: &dyn ModelBackend,
    settings: &QuerySettings,
    cache: Option<&ResponseCache>,
) -> Result<String, LlmError> {
    let req = chat_request(bundle, settings);
    let Some(cache) = cache else { return backend.complete(&req) };
    let digest = request_digest(&req);
    let lock = cache.key_lock(&digest);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(hit) = cache.get(&digest) {
        return Ok(hit.raw_response);
    }
    let raw = backend.complete(&req)?;
    cache.put(&digest, &raw)?;
    Ok(raw)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub raw: String,
    pub vulnerability_logic: String,
    pub vulnerable_lines: BTreeSet<u32>,
    /// Listed numbers that are added lines or outside the flow.
    pub dropped: BTreeSet<u32>,
}

/// Reads the logic text and the last bracketed line list of a reply.
/// Numbers inside a multi-line statement resolve to its first line.
pub fn parse_response(raw: &str, flow: &DangerousFlow) -> Result<LlmResponse, LlmError> {
    let list_re = Regex::new(r"(?i)vulnerable\s*lines?\s*:?\s*\[([^\]]*)\]").expect("static regex");
    let any_list = Regex::new(r"\[([\d\s,\-]*)\]").expect("static regex");
    let body = list_re
        .captures_iter(raw)
        .last()
        .or_else(|| any_list.captures_iter(raw).last())
        .ok_or(LlmError::UnparseableResponse)?[1]
        .to_string();
    let logic_re = Regex::new(r"(?is)vulnerability\s+logic\s*:\s*(.*?)\s*(?:vulnerable\s*lines?\s*:|\z)").expect("static regex");
    let vulnerability_logic = logic_re.captures(raw).map(|c| c[1].trim().to_string()).unwrap_or_default();

    let mut listed = Vec::new();
    for tok in body.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        match tok.split_once('-') {
            Some((a, b)) => {
                if let (Ok(a), Ok(b)) = (a.trim().parse::<u32>(), b.trim().parse::<u32>()) {
                    listed.extend(a..=b.min(a.saturating_add(500)));
                }
            }
            None => {
                if let Ok(n) = tok.trim_start_matches('+').parse::<u32>() {
                    listed.push(n);
                }
            }
        }
    }
    let mut vulnerable_lines = BTreeSet::new();
    let mut dropped = BTreeSet::new();
    for n in listed {
        match flow.statement_at(n) {
            Some(s) if s.pre_line.is_some() => {
                vulnerable_lines.insert(s.line);
            }
            _ => {
                log::warn!("dropping line {n} from the model's answer: not a selectable flow line");
                dropped.insert(n);
            }
        }
    }
    Ok(LlmResponse { raw: raw.to_string(), vulnerability_logic, vulnerable_lines, dropped })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerableStatement {
    /// Line in the merged diff view.
    pub line: u32,
    /// Line in the pre-patch file.
    pub pre_line: u32,
    pub text: String,
}

/// The refined statements the backtrace follows through history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerableStatementSet {
    pub function_name: String,
    pub file_path: String,
    pub commit: String,
    pub logic_summary: String,
    pub statements: Vec<VulnerableStatement>,
}

impl VulnerableStatementSet {
    /// Every selectable statement of the flow.
    pub fn whole_flow(flow: &DangerousFlow, summary: &str) -> Self {
        Self::from_lines(flow, &flow.lines(), summary)
    }

    pub fn from_lines(flow: &DangerousFlow, lines: &BTreeSet<u32>, summary: &str) -> Self {
        let statements = flow
            .statements
            .iter()
            .filter(|s| lines.contains(&s.line))
            .filter_map(|s| Some(VulnerableStatement { line: s.line, pre_line: s.pre_line?, text: s.text.clone() }))
            .collect();
        Self {
            function_name: flow.function_name.clone(),
            file_path: flow.file_path.clone(),
            commit: flow.commit.clone(),
            logic_summary: summary.to_string(),
            statements,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub set: VulnerableStatementSet,
    /// Set when the model's answers could not be used and the whole flow
    /// stands in.
    pub degraded: bool,
    pub attempts: u32,
    pub response: Option<LlmResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub strategy: Strategy,
    pub query: QuerySettings,
    pub reprompts: u32,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { strategy: Strategy::FewShotCot, query: QuerySettings::default(), reprompts: 2 }
    }
}

const REPROMPT: &str = "Your previous answer did not follow the required format. Answer again using exactly the two lines `vulnerability logic: <text>` and `vulnerable lines : [<Line number List>]`.";

/// Prompt, query, parse; after the configured reprompts fail, the whole
/// flow becomes the statement set and the result is marked degraded.
pub fn refine(
    ctx: &CveContext,
    flow: &DangerousFlow,
    backend: &dyn ModelBackend,
    exemplars: &ExemplarSet,
    cache: Option<&ResponseCache>,
    opts: &RefineOptions,
) -> Result<Refinement, LlmError> {
    let mut bundle = build_prompt(ctx, flow, opts.strategy, exemplars)?;
    let base_user = bundle.user_text.clone();
    for attempt in 0..=opts.reprompts {
        if attempt > 0 {
            bundle.user_text = format!("{base_user}\n{REPROMPT} (attempt {})\n", attempt + 1);
        }
        let raw = query_model(&bundle, backend, &opts.query, cache)?;
        match parse_response(&raw, flow) {
            Ok(resp) if !resp.vulnerable_lines.is_empty() => {
                let set = VulnerableStatementSet::from_lines(flow, &resp.vulnerable_lines, &resp.vulnerability_logic);
                return Ok(Refinement { set, degraded: false, attempts: attempt + 1, response: Some(resp) });
            }
            Ok(_) => log::warn!("model selected no usable line (attempt {})", attempt + 1),
            Err(e) => log::warn!("{e} (attempt {})", attempt + 1),
        }
    }
    Ok(Refinement {
        set: VulnerableStatementSet::whole_flow(flow, ""),
        degraded: true,
        attempts: opts.reprompts + 1,
        response: None,
    })
}
