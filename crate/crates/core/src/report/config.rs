//! Run configuration, merged from command line, config file, environment
//! and defaults, in that order of precedence.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clone::Thresholds;
use crate::llm::{CveContext, Strategy};
use crate::repo::ParentPolicy;
use crate::weighting::{GateMode, Weights};

pub const ENV_API_KEY: &str = "VULNSPAN_API_KEY";
pub const ENV_API_BASE: &str = "VULNSPAN_API_BASE";
pub const ENV_MODEL: &str = "VULNSPAN_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

/// Which model backend answers refinement prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible chat completions over HTTP.
    #[default]
    Http,
    /// Offline: selects every statement of the flow.
    Stub,
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "http" => Ok(Self::Http),
            "stub" => Ok(Self::Stub),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchSource {
    Commit(String),
    Diff(PathBuf),
}

/// One configuration source. Every field is optional; [`RunConfig::resolve`]
/// takes the first set value in precedence order. This is also the format of
/// the TOML config file and of batch job entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub repo: Option<PathBuf>,
    pub commit: Option<String>,
    pub diff: Option<PathBuf>,
    pub cve: Option<String>,
    pub cwe: Option<String>,
    pub description: Option<String>,
    pub strategy: Option<String>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub theta3: Option<f64>,
    pub weight_v: Option<f64>,
    pub weight_d: Option<f64>,
    pub backend: Option<String>,
    pub backend_url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub reprompts: Option<u32>,
    pub retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub format: Option<String>,
    pub step_limit: Option<usize>,
    pub trace_log: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub sensitive_table: Option<PathBuf>,
    pub gate: Option<String>,
    pub wrapper_depth: Option<u32>,
    pub inline_depth: Option<u32>,
    pub parent_policy: Option<String>,
    pub tag_pattern: Option<String>,
    pub workers: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ConfigLayer {
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::File { path: path.to_path_buf(), reason: e.to_string() })?;
        toml::from_str(&text).map_err(|e| ConfigError::File { path: path.to_path_buf(), reason: e.to_string() })
    }

    /// Reads the documented environment variables through `get`.
    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Self {
        Self {
            api_key: get(ENV_API_KEY).filter(|v| !v.is_empty()),
            backend_url: get(ENV_API_BASE).filter(|v| !v.is_empty()),
            model: get(ENV_MODEL).filter(|v| !v.is_empty()),
            ..Self::default()
        }
    }

    /// Fields set here win over `lower`.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigLayer { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            repo, commit, diff, cve, cwe, description, strategy, theta1, theta2, theta3, weight_v, weight_d, backend,
            backend_url, model, api_key, temperature, max_tokens, reprompts, retries, timeout_secs, cache_dir, format,
            step_limit, trace_log, exemplars, sensitive_table, gate, wrapper_depth, inline_depth, parent_policy,
            tag_pattern, workers
        )
    }
}

/// A validated configuration. The API key is never serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub repo: PathBuf,
    pub patch: PatchSource,
    pub cve: CveContext,
    pub strategy: Strategy,
    pub thresholds: Thresholds,
    pub weights: Weights,
    pub backend: BackendKind,
    pub backend_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub reprompts: u32,
    pub retries: u32,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
    pub format: OutputFormat,
    pub step_limit: usize,
    pub trace_log: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub sensitive_table: Option<PathBuf>,
    pub gate: GateMode,
    pub wrapper_depth: u32,
    pub inline_depth: u32,
    pub parent_policy: ParentPolicy,
    pub tag_pattern: Option<String>,
    pub workers: usize,
}

fn parse_field<T: FromStr>(name: &str, v: Option<String>, default: T, errs: &mut Vec<String>) -> T
where
    T::Err: std::fmt::Display,
{
    match v.map(|s| s.parse::<T>()) {
        None => default,
        Some(Ok(x)) => x,
        Some(Err(e)) => {
            errs.push(format!("{name}: {e}"));
            default
        }
    }
}

impl RunConfig {
    /// Merges `layers` (highest precedence first) over the defaults and
    /// validates the result, reporting every invalid field at once.
    pub fn resolve(layers: impl IntoIterator<Item = ConfigLayer>) -> Result<Self, ConfigError> {
        let l = layers.into_iter().fold(None::<ConfigLayer>, |acc, next| match acc {
            None => Some(next),
            Some(hi) => Some(hi.over(next)),
        });
        let l = l.unwrap_or_default();
        let mut errs = Vec::new();

        let patch = match (l.commit, l.diff) {
            (Some(c), None) => Some(PatchSource::Commit(c)),
            (None, Some(d)) => Some(PatchSource::Diff(d)),
            (Some(_), Some(_)) => {
                errs.push("patch: give either commit or diff, not both".into());
                None
            }
            (None, None) => {
                errs.push("patch: one of commit or diff is required".into());
                None
            }
        };
        let repo = l.repo.unwrap_or_else(|| {
            errs.push("repo: required".into());
            PathBuf::new()
        });
        let d = Thresholds::default();
        let thresholds =
            Thresholds { theta1: l.theta1.unwrap_or(d.theta1), theta2: l.theta2.unwrap_or(d.theta2), theta3: l.theta3.unwrap_or(d.theta3) };
        for f in thresholds.invalid_fields() {
            errs.push(format!("{f}: must be within [0, 1]"));
        }
        let dw = Weights::default();
        let weights = Weights { weight_v: l.weight_v.unwrap_or(dw.weight_v), weight_d: l.weight_d.unwrap_or(dw.weight_d) };
        for f in weights.invalid_fields() {
            errs.push(format!("{f}: must be a positive number"));
        }
        let cve = CveContext {
            cve_id: l.cve.unwrap_or_default(),
            cwe_id: l.cwe.unwrap_or_default(),
            description: l.description.unwrap_or_default(),
        };
        if !cve.has_valid_id() {
            errs.push(format!("cve: `{}` is not of the form CVE-YYYY-NNNN", cve.cve_id));
        }
        let temperature = l.temperature.unwrap_or(0.0);
        if !(0.0..=2.0).contains(&temperature) {
            errs.push("temperature: must be within [0, 2]".into());
        }
        let max_tokens = l.max_tokens.unwrap_or(1024);
        if max_tokens == 0 {
            errs.push("max_tokens: must be positive".into());
        }
        let step_limit = l.step_limit.unwrap_or(200);
        if step_limit == 0 {
            errs.push("step_limit: must be positive".into());
        }
        let workers = l.workers.unwrap_or(4);
        if workers == 0 {
            errs.push("workers: must be positive".into());
        }
        if let Some(p) = &l.tag_pattern {
            if let Err(e) = regex::Regex::new(p) {
                errs.push(format!("tag_pattern: {e}"));
            }
        }
        let strategy = parse_field("strategy", l.strategy, Strategy::FewShotCot, &mut errs);
        let backend = parse_field("backend", l.backend, BackendKind::Http, &mut errs);
        let format = parse_field("format", l.format, OutputFormat::Json, &mut errs);
        let gate = parse_field("gate", l.gate, GateMode::GatedWithFallback, &mut errs);
        let parent_policy = match l.parent_policy.as_deref() {
            None | Some("first_parent") | Some("first-parent") => ParentPolicy::FirstParent,
            Some("all_parents") | Some("all-parents") => ParentPolicy::AllParents,
            Some(other) => {
                errs.push(format!("parent_policy: unknown policy `{other}`"));
                ParentPolicy::FirstParent
            }
        };

        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        Ok(Self {
            repo,
            patch: patch.expect("checked above"),
            cve,
            strategy,
            thresholds,
            weights,
            backend,
            backend_url: l.backend_url.unwrap_or_else(|| "https://api.openai.com/v1".into()),
            model: l.model.unwrap_or_else(|| "gpt-4".into()),
            api_key: l.api_key,
            temperature,
            max_tokens,
            reprompts: l.reprompts.unwrap_or(2),
            retries: l.retries.unwrap_or(3),
            timeout_secs: l.timeout_secs.unwrap_or(120),
            cache_dir: l.cache_dir,
            format,
            step_limit,
            trace_log: l.trace_log,
            exemplars: l.exemplars,
            sensitive_table: l.sensitive_table,
            gate,
            wrapper_depth: l.wrapper_depth.unwrap_or(1),
            inline_depth: l.inline_depth.unwrap_or(1),
            parent_policy,
            tag_pattern: l.tag_pattern,
            workers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ConfigLayer {
        ConfigLayer { repo: Some("r".into()), commit: Some("HEAD".into()), ..Default::default() }
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve([base()]).unwrap();
        assert_eq!(c.thresholds, Thresholds { theta1: 0.9, theta2: 0.8, theta3: 0.7 });
        assert_eq!(c.weights, Weights { weight_v: 2.0, weight_d: 1.0 });
        assert_eq!((c.temperature, c.max_tokens, c.step_limit), (0.0, 1024, 200));
        assert_eq!(c.strategy, Strategy::FewShotCot);
    }

    #[test]
    fn every_bad_field_is_listed() {
        let bad = ConfigLayer { theta1: Some(1.5), weight_d: Some(0.0), format: Some("xml".into()), ..base() };
        match RunConfig::resolve([bad]) {
            Err(ConfigError::Invalid(e)) => {
                assert_eq!(e.len(), 3, "{e:?}");
                assert!(e[0].starts_with("theta1"));
                assert!(e[1].starts_with("weight_d"));
                assert!(e[2].starts_with("format"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn precedence() {
        let cli = ConfigLayer { model: Some("cli".into()), ..base() };
        let file = ConfigLayer { model: Some("file".into()), theta3: Some(0.5), backend_url: Some("http://file".into()), ..Default::default() };
        let env = ConfigLayer::from_env(|k| match k {
            ENV_MODEL => Some("env".into()),
            ENV_API_BASE => Some("http://env".into()),
            ENV_API_KEY => Some("k".into()),
            _ => None,
        });
        let c = RunConfig::resolve([cli, file, env]).unwrap();
        assert_eq!(c.model, "cli");
        assert_eq!(c.backend_url, "http://file");
        assert_eq!(c.thresholds.theta3, 0.5);
        assert_eq!(c.api_key.as_deref(), Some("k"));
        assert!(!serde_json::to_string(&c).unwrap().contains("\"k\""));
    }

    #[test]
    fn exactly_one_patch_source() {
        let both = ConfigLayer { diff: Some("p.diff".into()), ..base() };
        assert!(matches!(RunConfig::resolve([both]), Err(ConfigError::Invalid(e)) if e[0].starts_with("patch")));
        let none = ConfigLayer { repo: Some("r".into()), ..Default::default() };
        assert!(matches!(RunConfig::resolve([none]), Err(ConfigError::Invalid(e)) if e[0].starts_with("patch")));
    }

    #[test]
    fn toml_layer() {
        let l: ConfigLayer = toml::from_str("repo = \"/src\"\ncommit = \"abc\"\ntheta2 = 0.75\nstrategy = \"zero-shot\"\n").unwrap();
        let c = RunConfig::resolve([l]).unwrap();
        assert_eq!(c.thresholds.theta2, 0.75);
        assert_eq!(c.strategy, Strategy::ZeroShot);
        assert!(toml::from_str::<ConfigLayer>("thet1 = 0.5").is_err());
    }
}
