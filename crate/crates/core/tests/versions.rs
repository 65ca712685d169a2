use regex::Regex;

use vulnspan::repo::{open_repo, open_repo_with, RepoOptions};
use vulnspan::versions::delineate;
use vulnspan_testkit::{write, Fixture, Mark, RepoBuilder};

struct Topology {
    fx: Fixture,
    root: Mark,
    vic: Mark,
    pc: Mark,
    side: Mark,
}

/// main: root, vic, v1.9, v1.10, pc, v1.11; a side branch forked at root
/// carries its own tag; a nightly tag sits between vic and pc.
fn topology() -> Topology {
    let mut b = RepoBuilder::new();
    let root = b.commit("main", "root", vec![write("a.c", "int a;\n")]);
    b.tag("v1.0", root);
    b.branch("side", root);
    let side = b.commit("side", "side work", vec![write("b.c", "int b;\n")]);
    b.tag("v1.0-side", side);
    let vic = b.commit("main", "introduce", vec![write("a.c", "int a;\nint v;\n")]);
    let c = b.commit("main", "nine", vec![write("n.txt", "9\n")]);
    b.tag("v1.9", c);
    b.tag("nightly-20240101", c);
    let c = b.commit("main", "ten", vec![write("n.txt", "10\n")]);
    b.annotated_tag("v1.10", c);
    let pc = b.commit("main", "fix", vec![write("a.c", "int a;\nint v = 0;\n")]);
    let c = b.commit("main", "eleven", vec![write("n.txt", "11\n")]);
    b.tag("v1.11", c);
    Topology { fx: b.build(), root, vic, pc, side }
}

#[test]
fn vulnerable_tags_are_in_natural_order() {
    let t = topology();
    let repo = open_repo(t.fx.path()).unwrap();
    let v = delineate(&repo, "CVE-2024-0003", t.fx.id(t.vic), t.fx.id(t.pc)).unwrap();
    assert_eq!(v.vulnerable_names(), ["nightly-20240101", "v1.9", "v1.10"]);
    assert_eq!(v.tags_from_pc.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(), ["v1.11"]);
    assert!(v.vic_is_ancestor);
    assert_eq!(v.cve_id, "CVE-2024-0003");
}

#[test]
fn tag_pattern_filters_versions() {
    let t = topology();
    let opts = RepoOptions { tag_pattern: Some(Regex::new(r"^v\d+\.\d+$").unwrap()), ..RepoOptions::default() };
    let repo = open_repo_with(t.fx.path(), opts).unwrap();
    let v = delineate(&repo, "", t.fx.id(t.vic), t.fx.id(t.pc)).unwrap();
    assert_eq!(v.vulnerable_names(), ["v1.9", "v1.10"]);
}

#[test]
fn fix_in_the_introducing_commit_leaves_nothing() {
    let t = topology();
    let repo = open_repo(t.fx.path()).unwrap();
    let v = delineate(&repo, "", t.fx.id(t.pc), t.fx.id(t.pc)).unwrap();
    assert!(v.vulnerable.is_empty());
    assert_eq!(v.tags_from_vic, v.tags_from_pc);
}

#[test]
fn flaw_from_the_root_reaches_every_unfixed_release() {
    let t = topology();
    let repo = open_repo(t.fx.path()).unwrap();
    let v = delineate(&repo, "", t.fx.id(t.root), t.fx.id(t.pc)).unwrap();
    assert_eq!(v.vulnerable_names(), ["nightly-20240101", "v1.0", "v1.0-side", "v1.9", "v1.10"]);
}

#[test]
fn cross_branch_fix_is_flagged() {
    let t = topology();
    let repo = open_repo(t.fx.path()).unwrap();
    // The side branch never received the fix, and main's flaw never reached it.
    let v = delineate(&repo, "", t.fx.id(t.side), t.fx.id(t.pc)).unwrap();
    assert!(!v.vic_is_ancestor);
    assert_eq!(v.vulnerable_names(), ["v1.0-side"]);
}

#[test]
fn unknown_commits_are_errors() {
    let t = topology();
    let repo = open_repo(t.fx.path()).unwrap();
    assert!(delineate(&repo, "", &"f".repeat(40), t.fx.id(t.pc)).is_err());
}
