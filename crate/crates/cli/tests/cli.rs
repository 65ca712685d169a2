use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use vulnspan_testkit::{write, Fixture, Mark, RepoBuilder};

const BIN: &str = env!("CARGO_BIN_EXE_vulnspan");

fn source(guarded: bool, vulnerable: bool) -> String {
    let mut s = String::from("#include <string.h>\n\nint parse_record(struct rec *r, const char *src, int len, int cap)\n{\n    char *dst = r->data;\n    if (src == NULL)\n        return -1;\n");
    if guarded {
        s.push_str("    if (len > cap)\n        return -2;\n");
    }
    if vulnerable {
        s.push_str("    memcpy(dst, src, len);\n    r->total += len;\n");
    }
    s.push_str("    return 0;\n}\n");
    s
}

struct Repo {
    fx: Fixture,
    vic: Mark,
    pc: Mark,
}

fn repo() -> Repo {
    let mut b = RepoBuilder::new();
    let c0 = b.commit("main", "parser", vec![write("src/record.c", &source(false, false))]);
    b.tag("v1.0", c0);
    let vic = b.commit("main", "copy payload", vec![write("src/record.c", &source(false, true))]);
    b.tag("v1.1", vic);
    let c2 = b.commit("main", "docs", vec![write("README", "parser\n")]);
    b.tag("v1.2", c2);
    let pc = b.commit("main", "bound the copy", vec![write("src/record.c", &source(true, true))]);
    b.tag("v1.3", pc);
    Repo { fx: b.build(), vic, pc }
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("VULNSPAN_API_KEY")
        .env_remove("VULNSPAN_API_BASE")
        .env_remove("VULNSPAN_MODEL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn masked(text: &str) -> String {
    let mut v: Value = serde_json::from_str(text).unwrap();
    v["timings"] = Value::Null;
    serde_json::to_string_pretty(&v).unwrap()
}

fn analyze_args<'a>(r: &'a Repo, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec!["analyze", "--repo", r.fx.path().to_str().unwrap(), "--commit", r.fx.id(r.pc), "--backend", "stub", "--cve", "CVE-2024-0001"];
    a.extend_from_slice(extra);
    a
}

#[test]
fn analyze_is_deterministic_and_finds_the_introducing_commit() {
    let r = repo();
    let a = run(&analyze_args(&r, &[]));
    let b = run(&analyze_args(&r, &[]));
    assert!(a.status.code() == Some(0) || a.status.code() == Some(2), "{}", stderr(&a));
    assert_eq!(masked(&stdout(&a)), masked(&stdout(&b)));

    let v: Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["vic"]["id"], r.fx.id(r.vic));
    let tags: Vec<&str> = v["verdict"]["vulnerable"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(tags, ["v1.1", "v1.2"]);
    assert_eq!(v["config"]["backend"], "stub");
}

#[test]
fn analyze_accepts_a_diff_file_and_writes_markdown() {
    let r = repo();
    let dir = tempfile::tempdir().unwrap();
    let diff = dir.path().join("fix.patch");
    std::fs::write(&diff, r.fx.git(&["show", r.fx.id(r.pc)])).unwrap();
    let out = dir.path().join("report.md");
    let o = run(&[
        "analyze",
        "--repo",
        r.fx.path().to_str().unwrap(),
        "--diff",
        diff.to_str().unwrap(),
        "--backend",
        "stub",
        "--format",
        "markdown",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let md = std::fs::read_to_string(out).unwrap();
    assert!(md.contains("## Vulnerable versions (V_v)"));
    assert!(md.contains("v1.1") && md.contains("v1.2"));
}

#[test]
fn invalid_options_are_all_reported() {
    let r = repo();
    let o = run(&analyze_args(&r, &["--theta1", "1.5", "--strategy", "many-shot", "--weight-v", "-1"]));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for field in ["theta1", "strategy", "weight_v"] {
        assert!(err.contains(field), "{field} missing from: {err}");
    }
}

#[test]
fn precedence_is_flags_then_file_then_environment() {
    let r = repo();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("vulnspan.toml");
    std::fs::write(&cfg, "model = \"file-model\"\ntheta3 = 0.6\n").unwrap();
    let with_env = |args: &[&str]| {
        let o = Command::new(BIN).args(args).env("VULNSPAN_MODEL", "env-model").output().unwrap();
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap_or_else(|_| panic!("{}", stderr(&o)));
        v["config"].clone()
    };

    let mut args = analyze_args(&r, &[]);
    let c = with_env(&args);
    assert_eq!(c["model"], "env-model");

    args.extend_from_slice(&["--config", cfg.to_str().unwrap()]);
    let c = with_env(&args);
    assert_eq!(c["model"], "file-model");
    assert_eq!(c["thresholds"]["theta3"], 0.6);

    args.extend_from_slice(&["--model", "flag-model"]);
    let c = with_env(&args);
    assert_eq!(c["model"], "flag-model");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let r = repo();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "modle = \"typo\"\n").unwrap();
    let mut args = analyze_args(&r, &[]);
    args.extend_from_slice(&["--config", cfg.to_str().unwrap()]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("modle"), "{}", stderr(&o));
}

#[test]
fn compare_reports_both_channels() {
    let dir = tempfile::tempdir().unwrap();
    let defs = dir.path().join("common.h");
    std::fs::write(&defs, "#define FFMIN(a,b) ((a) > (b) ? (b) : (a))\n").unwrap();
    let o = run(&[
        "compare",
        "if (avio_tell(s->pb) + size > tag_end) size = tag_end - avio_tell(s->pb);",
        "size = FFMIN(size, tag_end - avio_tell(s->pb));",
        "--defs",
        defs.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["line_similarity"].as_f64().unwrap() < 0.9);
    assert!(v["ast_similarity"].as_f64().unwrap() >= 0.8);
    assert_eq!(v["matched"], true);
    assert_eq!(v["channel"], "ast");

    let o = run(&["compare", "a = 1;", "b = 2;", "--theta1", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn slice_and_delineate_subcommands() {
    let r = repo();
    let path = r.fx.path().to_str().unwrap();
    let o = run(&["slice", "--repo", path, "--commit", r.fx.id(r.pc), "--direction", "forward"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let texts: Vec<&str> = v["flows"][0]["statements"].as_array().unwrap().iter().map(|s| s["text"].as_str().unwrap().trim()).collect();
    assert!(texts.contains(&"memcpy(dst, src, len);"), "{texts:?}");

    let o = run(&["delineate", "--repo", path, "--vic", r.fx.id(r.vic), "--pc", r.fx.id(r.pc), "--cve", "CVE-2024-0001"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["vulnerable"].as_array().unwrap().len(), 2);
    assert_eq!(v["vic_is_ancestor"], true);
}

#[test]
fn batch_writes_one_report_per_job() {
    let r = repo();
    let dir = tempfile::tempdir().unwrap();
    let jobs = dir.path().join("jobs.json");
    let out = dir.path().join("out");
    let job = |cve: &str| serde_json::json!({ "repo": r.fx.path(), "commit": r.fx.id(r.pc), "cve": cve });
    std::fs::write(&jobs, serde_json::to_string(&vec![job("CVE-2024-0001"), job("CVE-2024-0002")]).unwrap()).unwrap();
    let o = run(&["batch", "--backend", "stub", "--jobs", jobs.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2), "{}", stderr(&o));
    for cve in ["CVE-2024-0001", "CVE-2024-0002"] {
        let text = std::fs::read_to_string(out.join(format!("{cve}.json"))).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config"]["cve"]["cve_id"], cve);
    }
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let missing = run(&["analyze", "--backend", "stub"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("repo"), "{}", stderr(&missing));
    let o = run(&["delineate", "--repo", Path::new("/nonexistent").to_str().unwrap(), "--vic", "a", "--pc", "b"]);
    assert_eq!(o.status.code(), Some(1));
}
