use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vulnspan::cfront::{Definitions, InlineConfig};
use vulnspan::clone::{classify_match, line_similarity, AstComparer, Thresholds};
use vulnspan::patch::{extract_patched_functions, PatchCommit};
use vulnspan::repo::open_repo_with;
use vulnspan::report::{
    backend_for, render_json, render_report, repo_options, run_batch, run_pipeline, ConfigError, ConfigLayer,
    OutputFormat, PatchSource, RunConfig,
};
use vulnspan::slicer::{extract_dangerous_flow, Direction};
use vulnspan::versions::delineate;

#[derive(Parser)]
#[command(name = "vulnspan", version, about = "Find the commit that introduced a vulnerability and the releases it affects")]
struct Cli {
    /// TOML file with defaults for any run option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full pipeline: slice, refine, backtrace, delineate.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Dangerous flows of the patched functions.
    Slice {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "both", value_parser = ["both", "backward", "forward"])]
        direction: String,
    },
    /// Line and AST similarity of two statements.
    Compare {
        a: String,
        b: String,
        /// C sources or headers whose macros and static functions are inlined.
        #[arg(long = "defs")]
        defs: Vec<PathBuf>,
        #[arg(long)]
        theta1: Option<f64>,
        #[arg(long)]
        theta2: Option<f64>,
    },
    /// Tags containing the introducing commit but not the fix.
    Delineate {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        vic: String,
        #[arg(long)]
        pc: String,
        #[arg(long, default_value = "")]
        cve: String,
        #[arg(long)]
        tag_pattern: Option<String>,
    },
    /// Many analyses from a JSON array of job objects (same keys as the config file).
    Batch {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        jobs: PathBuf,
        /// One report per job is written here, named after the job's CVE or index.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args, Default)]
#[command(allow_negative_numbers = true)]
struct RunArgs {
    #[arg(long)]
    repo: Option<PathBuf>,
    #[arg(long)]
    commit: Option<String>,
    /// Unified diff file whose header names the patch commit.
    #[arg(long)]
    diff: Option<PathBuf>,
    #[arg(long)]
    cve: Option<String>,
    #[arg(long)]
    cwe: Option<String>,
    #[arg(long)]
    description: Option<String>,
    /// zero-shot, few-shot or few-shot-cot.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    theta1: Option<f64>,
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long)]
    theta3: Option<f64>,
    #[arg(long)]
    weight_v: Option<f64>,
    #[arg(long)]
    weight_d: Option<f64>,
    /// http or stub.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// json or markdown.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    step_limit: Option<usize>,
    #[arg(long)]
    trace_log: Option<PathBuf>,
    #[arg(long)]
    exemplars: Option<PathBuf>,
    #[arg(long)]
    sensitive_table: Option<PathBuf>,
    #[arg(long)]
    tag_pattern: Option<String>,
}

impl RunArgs {
    fn layer(self) -> ConfigLayer {
        ConfigLayer {
            repo: self.repo,
            commit: self.commit,
            diff: self.diff,
            cve: self.cve,
            cwe: self.cwe,
            description: self.description,
            strategy: self.strategy,
            theta1: self.theta1,
            theta2: self.theta2,
            theta3: self.theta3,
            weight_v: self.weight_v,
            weight_d: self.weight_d,
            backend: self.backend,
            backend_url: self.backend_url,
            model: self.model,
            cache_dir: self.cache_dir,
            format: self.format,
            step_limit: self.step_limit,
            trace_log: self.trace_log,
            exemplars: self.exemplars,
            sensitive_table: self.sensitive_table,
            tag_pattern: self.tag_pattern,
            ..ConfigLayer::default()
        }
    }
}

type Failure = Box<dyn std::error::Error>;

fn layers(cli_layer: ConfigLayer, config: &Option<PathBuf>) -> Result<Vec<ConfigLayer>, ConfigError> {
    let file = match config {
        Some(p) => ConfigLayer::from_toml_file(p)?,
        None => ConfigLayer::default(),
    };
    Ok(vec![cli_layer, file, ConfigLayer::from_env(|k| std::env::var(k).ok())])
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn analyze(run: RunArgs, output: Option<PathBuf>, config: &Option<PathBuf>) -> Result<u8, Failure> {
    let cfg = RunConfig::resolve(layers(run.layer(), config)?)?;
    let backend = backend_for(&cfg)?;
    let report = run_pipeline(&cfg, backend.as_ref())?;
    emit(&render_report(&report, cfg.format), output.as_ref())?;
    Ok(report.exit_code() as u8)
}

fn slice(run: RunArgs, direction: &str, config: &Option<PathBuf>) -> Result<u8, Failure> {
    let cfg = RunConfig::resolve(layers(run.layer(), config)?)?;
    let repo = open_repo_with(&cfg.repo, repo_options(&cfg))?;
    let patch = match &cfg.patch {
        PatchSource::Commit(c) => PatchCommit::from_repo(&repo, c)?,
        PatchSource::Diff(p) => PatchCommit::from_diff_text(&repo, &std::fs::read_to_string(p)?)?,
    };
    let direction = match direction {
        "backward" => Direction::Backward,
        "forward" => Direction::Forward,
        _ => Direction::Both,
    };
    let ex = extract_patched_functions(&repo, &patch)?;
    let mut flows = Vec::new();
    let mut code = 0;
    for f in &ex.functions {
        match extract_dangerous_flow(f, direction) {
            Ok(flow) => flows.push(json!(flow)),
            Err(e) => {
                code = 2;
                flows.push(json!({ "function_name": f.function_name, "file_path": f.file_path, "error": e.to_string() }));
            }
        }
    }
    let out = json!({ "patch_commit": patch.commit, "flows": flows, "skipped_lines": ex.skipped });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(code)
}

fn compare(a: &str, b: &str, defs: &[PathBuf], theta1: Option<f64>, theta2: Option<f64>) -> Result<u8, Failure> {
    let mut d = Definitions::new();
    for p in defs {
        d.extend_missing(Definitions::from_source(&std::fs::read_to_string(p)?));
    }
    let th = Thresholds { theta1: theta1.unwrap_or(0.9), theta2: theta2.unwrap_or(0.8), ..Thresholds::default() };
    let bad = th.invalid_fields();
    if !bad.is_empty() {
        return Err(ConfigError::Invalid(bad.iter().map(|f| format!("{f}: must be within [0, 1]")).collect()).into());
    }
    let line = line_similarity(a, b);
    let cmp = AstComparer::new(d, InlineConfig::default());
    let ast = cmp.ast_similarity(a, b);
    let (matched, channel) = classify_match(line, ast.as_ref().ok().copied(), &th);
    let out = json!({
        "line_similarity": line,
        "ast_similarity": ast.as_ref().ok(),
        "ast_error": ast.as_ref().err().map(|e| e.to_string()),
        "matched": matched,
        "channel": channel,
        "theta1": th.theta1,
        "theta2": th.theta2,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.cmd {
        Cmd::Analyze { run, output } => analyze(run, output, &cli.config),
        Cmd::Slice { run, direction } => slice(run, &direction, &cli.config),
        Cmd::Compare { a, b, defs, theta1, theta2 } => compare(&a, &b, &defs, theta1, theta2),
        Cmd::Delineate { repo, vic, pc, cve, tag_pattern } => {
            let layer = ConfigLayer { repo: Some(repo), commit: Some(pc.clone()), tag_pattern, ..ConfigLayer::default() };
            let cfg = RunConfig::resolve([layer])?;
            let repo = open_repo_with(&cfg.repo, repo_options(&cfg))?;
            let v = delineate(&repo, &cve, &vic, &pc)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(0)
        }
        Cmd::Batch { run, jobs, out_dir, workers } => {
            let base = layers(run.layer(), &cli.config)?;
            let entries: Vec<ConfigLayer> = serde_json::from_str(&std::fs::read_to_string(&jobs)?)?;
            let mut configs = Vec::new();
            let mut errors = Vec::new();
            for (i, e) in entries.into_iter().enumerate() {
                let mut ls = vec![e];
                ls.extend(base.iter().cloned());
                match RunConfig::resolve(ls) {
                    Ok(c) => configs.push(c),
                    Err(err) => errors.push(format!("job {i}: {err}")),
                }
            }
            if !errors.is_empty() {
                return Err(errors.join("\n").into());
            }
            let workers = workers.or(configs.first().map(|c| c.workers)).unwrap_or(4);
            let backend = match configs.first() {
                Some(c) => backend_for(c)?,
                None => return Ok(0),
            };
            std::fs::create_dir_all(&out_dir)?;
            let mut worst = 0u8;
            for (i, (cfg, r)) in configs.iter().zip(run_batch(&configs, workers, backend.as_ref())).enumerate() {
                let stem = if cfg.cve.cve_id.is_empty() { format!("job-{i}") } else { cfg.cve.cve_id.clone() };
                match r {
                    Ok(report) => {
                        let (ext, text) = match cfg.format {
                            OutputFormat::Json => ("json", render_json(&report)),
                            OutputFormat::Markdown => ("md", render_report(&report, cfg.format)),
                        };
                        std::fs::write(out_dir.join(format!("{stem}.{ext}")), text)?;
                        worst = worst.max(report.exit_code() as u8);
                    }
                    Err(e) => {
                        eprintln!("{stem}: {e}");
                        worst = 1;
                    }
                }
            }
            Ok(worst)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Exit code 2 is reserved for degraded analyses.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
