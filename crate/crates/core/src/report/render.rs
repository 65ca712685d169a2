use std::fmt::Write;

use super::config::OutputFormat;
use super::pipeline::AnalysisReport;

pub const REPORT_SCHEMA: &str = include_str!("schema/report.schema.json");

pub fn render_report(r: &AnalysisReport, fmt: OutputFormat) -> String {
    match fmt {
        OutputFormat::Json => render_json(r),
        OutputFormat::Markdown => render_markdown(r),
    }
}

pub fn render_json(r: &AnalysisReport) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("reports serialize");
    s.push('\n');
    s
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

pub fn render_markdown(r: &AnalysisReport) -> String {
    let mut out = String::new();
    let title = if r.config.cve.cve_id.is_empty() { "unnamed vulnerability" } else { &r.config.cve.cve_id };
    let _ = writeln!(out, "# Affected versions: {title}\n");
    let _ = writeln!(out, "| Field | Value |\n| --- | --- |");
    let _ = writeln!(out, "| Patch commit | `{}` |", r.patch_commit.id);
    let _ = writeln!(out, "| Introducing commit | {} |", r.vic.as_ref().map(|v| format!("`{}`", v.id)).unwrap_or_else(|| "not found".into()));
    let _ = writeln!(out, "| CWE | {} |", if r.config.cve.cwe_id.is_empty() { "unknown" } else { &r.config.cve.cwe_id });
    let _ = writeln!(
        out,
        "| Thresholds | {} / {} / {} |",
        r.config.thresholds.theta1, r.config.thresholds.theta2, r.config.thresholds.theta3
    );
    let _ = writeln!(out, "| Degraded | {} |", if r.degraded.is_empty() { "no".to_string() } else { cell(&r.degraded.join(", ")) });
    let _ = writeln!(out, "| Time | {} ms |\n", r.timings.total_ms);

    let _ = writeln!(out, "## Vulnerable versions (V_v)\n");
    match &r.verdict {
        Some(v) if !v.vulnerable.is_empty() => {
            let _ = writeln!(out, "| # | Tag | Commit |\n| --- | --- | --- |");
            for (i, t) in v.vulnerable.iter().enumerate() {
                let _ = writeln!(out, "| {} | {} | `{}` |", i + 1, cell(&t.name), &t.target[..t.target.len().min(12)]);
            }
            let _ = writeln!(
                out,
                "\n{} tags contain the introducing commit, {} contain the fix.\n",
                v.tags_from_vic.len(),
                v.tags_from_pc.len()
            );
        }
        Some(_) => out.push_str("No tagged release contains the vulnerability.\n\n"),
        None => out.push_str("No verdict: the introducing commit was not identified.\n\n"),
    }

    let _ = writeln!(out, "## Functions\n");
    for f in &r.functions {
        let _ = writeln!(out, "### `{}` ({})\n", f.function_name, f.file_path);
        if let Some(e) = &f.error {
            let _ = writeln!(out, "Error: {}\n", cell(e));
        }
        if !f.logic_summary.is_empty() {
            let _ = writeln!(out, "Logic: {}\n", cell(&f.logic_summary));
        }
        if !f.vulnerable_statements.is_empty() {
            let _ = writeln!(out, "| Line | Weight | Statement |\n| --- | --- | --- |");
            for s in &f.vulnerable_statements {
                let _ = writeln!(out, "| {} | {} | `{}` |", s.line, s.weight, cell(s.text.trim()));
            }
            out.push('\n');
        }
        if let Some(t) = &f.trace {
            let _ = writeln!(out, "| Commit | Score |\n| --- | --- |");
            for s in &t.steps {
                let _ = writeln!(out, "| `{}` | {:.3} |", s.commit.short(), s.similarity_score);
            }
            let _ = writeln!(out, "\nBacktrace ended: {:?}.\n", t.terminated_reason);
        }
    }
    out
}
