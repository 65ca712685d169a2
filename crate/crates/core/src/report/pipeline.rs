use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::config::{BackendKind, PatchSource, RunConfig};
use super::harvest::harvest_definitions;
use crate::cfront::{Definitions, InlineConfig};
use crate::clone::{backtrace_vic, AstComparer, BacktraceOptions, CloneError, HistoryTrace};
use crate::llm::{
    refine, ExemplarSet, HttpBackend, HttpSettings, LlmError, ModelBackend, QuerySettings, RefineOptions,
    ReqwestTransport, ResponseCache, StubBackend, VulnerableStatementSet,
};
use crate::patch::{classify_patch, extract_patched_functions, PatchCommit, PatchError, PatchShape, SkippedLine};
use crate::repo::{open_repo_with, CommitId, RepoError, RepoHandle, RepoOptions};
use crate::slicer::{extract_dangerous_flow, Direction, FlowStatement};
use crate::versions::{delineate, VersionVerdict};
use crate::weighting::{assign_weights, cwe_to_type, SensitiveFunctionTable, WeightedStatement, WeightingConfig};

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{0}")]
    Input(String),
    #[error("patch changes no function body")]
    NoPatchedFunctions,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub extraction_ms: u64,
    pub backtrace_ms: u64,
    pub delineation_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionReport {
    pub function_name: String,
    pub file_path: String,
    pub dangerous_flow: Vec<FlowStatement>,
    pub vulnerable_statements: Vec<WeightedStatement>,
    pub logic_summary: String,
    pub llm_attempts: u32,
    /// The whole flow stands in for the model's selection.
    pub llm_fallback: bool,
    pub trace: Option<HistoryTrace>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub patch_commit: CommitId,
    pub patch_shape: PatchShape,
    pub functions: Vec<FunctionReport>,
    pub skipped_lines: Vec<SkippedLine>,
    pub vic: Option<CommitId>,
    pub verdict: Option<VersionVerdict>,
    /// One marker per degraded step, `kind:function` or `kind`.
    pub degraded: Vec<String>,
    pub timings: Timings,
}

impl AnalysisReport {
    /// 0 on full success, 2 when any step degraded.
    pub fn exit_code(&self) -> i32 {
        if self.degraded.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn mask_timings(&mut self) {
        self.timings = Timings::default();
    }
}

pub fn repo_options(cfg: &RunConfig) -> RepoOptions {
    RepoOptions {
        parent_policy: cfg.parent_policy,
        tag_pattern: cfg.tag_pattern.as_deref().map(|p| Regex::new(p).expect("validated pattern")),
        ..RepoOptions::default()
    }
}

/// The backend named by the configuration.
pub fn backend_for(cfg: &RunConfig) -> Result<Box<dyn ModelBackend>, PipelineError> {
    Ok(match cfg.backend {
        BackendKind::Stub => Box::new(StubBackend::select_all()),
        BackendKind::Http => {
            let settings = HttpSettings {
                base_url: cfg.backend_url.clone(),
                api_key: cfg.api_key.clone(),
                retries: cfg.retries,
                ..HttpSettings::default()
            };
            let transport = ReqwestTransport::new(Duration::from_secs(cfg.timeout_secs))?;
            Box::new(HttpBackend::new(settings, Arc::new(transport)))
        }
    })
}

fn load_patch(repo: &RepoHandle, cfg: &RunConfig) -> Result<PatchCommit, PipelineError> {
    Ok(match &cfg.patch {
        PatchSource::Commit(c) => PatchCommit::from_repo(repo, c)?,
        PatchSource::Diff(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Input(format!("{}: {e}", p.display())))?;
            PatchCommit::from_diff_text(repo, &text)?
        }
    })
}

fn ms(d: Duration) -> u64 {
    d.as_millis() as u64
}

/// Oldest of the per-function vics: an ancestor of the others when they
/// lie on one line of history, the earliest committed otherwise.
fn earliest_vic(repo: &RepoHandle, vics: &[CommitId]) -> Result<Option<CommitId>, RepoError> {
    let mut best: Option<&CommitId> = None;
    for v in vics {
        best = Some(match best {
            None => v,
            Some(b) if b.id == v.id => b,
            Some(b) if repo.is_ancestor(&v.id, &b.id)? => v,
            Some(b) if repo.is_ancestor(&b.id, &v.id)? => b,
            Some(b) if (v.timestamp, &v.id) < (b.timestamp, &b.id) => v,
            Some(b) => b,
        });
    }
    Ok(best.cloned())
}

struct Prepared {
    report: FunctionReport,
    weighted: Vec<WeightedStatement>,
    defs: Option<Arc<Definitions>>,
    index: usize,
}

/// Runs extraction, backtrace and delineation for one patch.
pub fn run_pipeline(cfg: &RunConfig, backend: &dyn ModelBackend) -> Result<AnalysisReport, PipelineError> {
    let start = Instant::now();
    let repo = open_repo_with(&cfg.repo, repo_options(cfg))?;
    let patch = load_patch(&repo, cfg)?;
    let shape = classify_patch(&patch)?;
    let extraction = extract_patched_functions(&repo, &patch)?;
    if extraction.functions.is_empty() {
        return Err(PipelineError::NoPatchedFunctions);
    }

    let mut exemplars = ExemplarSet::default();
    if let Some(p) = &cfg.exemplars {
        exemplars = exemplars.with_overrides(p)?;
    }
    let mut table = SensitiveFunctionTable::default();
    if let Some(p) = &cfg.sensitive_table {
        let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Input(format!("{}: {e}", p.display())))?;
        let extra = SensitiveFunctionTable::from_json(&text).map_err(|e| PipelineError::Input(e.to_string()))?;
        table.extend(extra.entries);
    }
    let cache = cfg.cache_dir.as_ref().map(ResponseCache::new);
    let cwe_hint = cwe_to_type(&cfg.cve.cwe_id).filter(|_| !cfg.cve.cwe_id.is_empty());
    let refine_opts = RefineOptions {
        strategy: cfg.strategy,
        query: QuerySettings { model: cfg.model.clone(), temperature: cfg.temperature, max_tokens: cfg.max_tokens },
        reprompts: cfg.reprompts,
    };
    let wcfg = WeightingConfig { gate: cfg.gate, wrapper_depth: cfg.wrapper_depth };

    let mut degraded = Vec::new();
    let mut defs_by_file: BTreeMap<(String, String), Arc<Definitions>> = BTreeMap::new();
    let mut prepared = Vec::new();
    for (index, f) in extraction.functions.iter().enumerate() {
        let mut report = FunctionReport {
            function_name: f.function_name.clone(),
            file_path: f.file_path.clone(),
            dangerous_flow: Vec::new(),
            vulnerable_statements: Vec::new(),
            logic_summary: String::new(),
            llm_attempts: 0,
            llm_fallback: false,
            trace: None,
            error: None,
        };
        let flow = match extract_dangerous_flow(f, Direction::Both) {
            Ok(flow) => flow,
            Err(e) => {
                report.error = Some(e.to_string());
                degraded.push(format!("slice_failed:{}", f.function_name));
                prepared.push(Prepared { report, weighted: Vec::new(), defs: None, index });
                continue;
            }
        };
        report.dangerous_flow = flow.statements.clone();
        let set = match refine(&cfg.cve, &flow, backend, &exemplars, cache.as_ref(), &refine_opts) {
            Ok(r) => {
                report.llm_attempts = r.attempts;
                if r.degraded {
                    report.llm_fallback = true;
                    degraded.push(format!("llm_fallback:{}", f.function_name));
                }
                r.set
            }
            Err(e) => {
                log::warn!("refinement of {} failed: {e}", f.function_name);
                report.llm_fallback = true;
                report.error = Some(e.to_string());
                degraded.push(format!("llm_unavailable:{}", f.function_name));
                VulnerableStatementSet::whole_flow(&flow, "")
            }
        };
        report.logic_summary = set.logic_summary.clone();
        let key = (f.pre_body.commit.clone(), f.pre_body.file_path.clone());
        let defs = match defs_by_file.get(&key) {
            Some(d) => d.clone(),
            None => {
                let d = Arc::new(harvest_definitions(&repo, &key.0, &key.1)?);
                defs_by_file.insert(key, d.clone());
                d
            }
        };
        let weighted = assign_weights(&set, &table, &defs, cwe_hint.as_deref(), &cfg.weights, &wcfg);
        report.vulnerable_statements = weighted.clone();
        prepared.push(Prepared { report, weighted, defs: Some(defs), index });
    }
    let extraction_done = start.elapsed();

    let opts = BacktraceOptions {
        thresholds: cfg.thresholds,
        weights: cfg.weights,
        step_limit: cfg.step_limit,
        trace_log: cfg.trace_log.clone(),
    };
    let inline = InlineConfig { max_depth: cfg.inline_depth, ..InlineConfig::default() };
    let mut vics = Vec::new();
    for p in &mut prepared {
        let Some(defs) = &p.defs else { continue };
        let f = &extraction.functions[p.index];
        if p.weighted.is_empty() {
            degraded.push(format!("empty_statement_set:{}", f.function_name));
            continue;
        }
        let comparer = AstComparer::new((**defs).clone(), inline);
        match backtrace_vic(&repo, f, &p.weighted, &comparer, &opts) {
            Ok(trace) => {
                if let Some(v) = &trace.vic {
                    vics.push(v.clone());
                }
                p.report.trace = Some(trace);
            }
            Err(CloneError::StepLimitExceeded { limit, trace }) => {
                degraded.push(format!("step_limit:{}", f.function_name));
                p.report.error = Some(format!("backtrace stopped after {limit} steps"));
                p.report.trace = Some(*trace);
            }
            Err(e) => {
                degraded.push(format!("backtrace_failed:{}", f.function_name));
                p.report.error = Some(e.to_string());
            }
        }
    }
    let backtrace_done = start.elapsed();

    let vic = earliest_vic(&repo, &vics)?;
    let verdict = match &vic {
        Some(v) => Some(delineate(&repo, &cfg.cve.cve_id, &v.id, &patch.commit.id)?),
        None => {
            degraded.push("no_vic".into());
            None
        }
    };
    let total = start.elapsed();

    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        patch_commit: patch.commit.clone(),
        patch_shape: shape,
        functions: prepared.into_iter().map(|p| p.report).collect(),
        skipped_lines: extraction.skipped,
        vic,
        verdict,
        degraded,
        timings: Timings {
            extraction_ms: ms(extraction_done),
            backtrace_ms: ms(backtrace_done - extraction_done),
            delineation_ms: ms(total - backtrace_done),
            total_ms: ms(total),
        },
    })
}

/// Runs independent analyses on at most `workers` threads; results keep
/// the order of `jobs`.
pub fn run_batch(
    jobs: &[RunConfig],
    workers: usize,
    backend: &dyn ModelBackend,
) -> Vec<Result<AnalysisReport, PipelineError>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<AnalysisReport, PipelineError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let r = run_pipeline(job, backend);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().map(|r| r.expect("every job ran")).collect()
}
