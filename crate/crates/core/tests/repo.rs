use std::collections::{BTreeMap, BTreeSet};

use vulnspan::repo::{open_repo, RepoError};
use vulnspan_testkit::{rename, write, Fixture, Mark, RepoBuilder};

fn lines(xs: &[&str]) -> String {
    xs.iter().map(|l| format!("{l}\n")).collect()
}

/// Edits on two branches, a merge, a rename and a later edit.
fn history() -> (Fixture, BTreeMap<&'static str, Mark>) {
    let mut b = RepoBuilder::new();
    let mut m = BTreeMap::new();
    m.insert("root", b.commit("main", "root", vec![write("src/a.c", &lines(&["int a(void)", "{", "    return 1;", "}"]))]));
    m.insert(
        "grow",
        b.commit(
            "main",
            "grow",
            vec![write("src/a.c", &lines(&["int a(void)", "{", "    int x = 2;", "    return x;", "}", "", "int b(void)", "{", "    return 3;", "}"]))],
        ),
    );
    b.branch("topic", m["grow"]);
    m.insert(
        "topic",
        b.commit(
            "topic",
            "topic",
            vec![write(
                "src/a.c",
                &lines(&["int a(void)", "{", "    int x = 2;", "    return x;", "}", "", "int b(void)", "{", "    log_b();", "    return 3;", "}"]),
            )],
        ),
    );
    m.insert(
        "main_edit",
        b.commit(
            "main",
            "main edit",
            vec![write("src/a.c", &lines(&["int a(void)", "{", "    int x = 4;", "    return x;", "}", "", "int b(void)", "{", "    return 3;", "}"]))],
        ),
    );
    m.insert(
        "merge",
        b.merge(
            "main",
            m["topic"],
            "merge topic",
            vec![write(
                "src/a.c",
                &lines(&["int a(void)", "{", "    int x = 4;", "    return x;", "}", "", "int b(void)", "{", "    log_b();", "    return 3;", "}"]),
            )],
        ),
    );
    m.insert("rename", b.commit("main", "move", vec![rename("src/a.c", "src/core.c")]));
    m.insert(
        "last",
        b.commit(
            "main",
            "last",
            vec![write(
                "src/core.c",
                &lines(&["int a(void)", "{", "    int x = 4;", "    return x + 1;", "}", "", "int b(void)", "{", "    log_b();", "    return 3;", "}"]),
            )],
        ),
    );
    b.tag("v1", m["grow"]);
    b.annotated_tag("v2", m["merge"]);
    b.tag("topic-snapshot", m["topic"]);
    (b.build(), m)
}

/// `(origin commit, origin line, origin path)` per final line from
/// `git blame --line-porcelain`.
fn git_blame(fx: &Fixture, rev: &str, path: &str) -> BTreeMap<u32, (String, u32, String)> {
    let out = fx.git(&["blame", "--line-porcelain", rev, "--", path]);
    let mut result = BTreeMap::new();
    let mut current: Option<(String, u32, u32)> = None;
    for l in out.lines() {
        let parts: Vec<&str> = l.split(' ').collect();
        if parts.len() >= 3 && parts[0].len() == 40 && parts[0].bytes().all(|c| c.is_ascii_hexdigit()) {
            current = Some((parts[0].to_string(), parts[1].parse().unwrap(), parts[2].parse().unwrap()));
        } else if let Some(name) = l.strip_prefix("filename ") {
            let (sha, orig, fin) = current.take().expect("header before filename");
            result.insert(fin, (sha, orig, name.to_string()));
        }
    }
    result
}

#[test]
fn blame_agrees_with_git() {
    let (fx, m) = history();
    let repo = open_repo(fx.path()).unwrap();
    let head = fx.id(m["last"]);
    let oracle = git_blame(&fx, head, "src/core.c");
    let all: BTreeSet<u32> = oracle.keys().copied().collect();
    let ours = repo.blame_lines(head, "src/core.c", &all).unwrap();
    assert_eq!(ours.len(), oracle.len());
    for e in ours {
        let (sha, orig, path) = &oracle[&e.line_number];
        assert_eq!(&e.origin_commit.id, sha, "line {}", e.line_number);
        assert_eq!(e.origin_line, *orig, "line {}", e.line_number);
        assert_eq!(&e.origin_path, path, "line {}", e.line_number);
    }
}

#[test]
fn merged_line_is_attributed_to_the_side_branch() {
    let (fx, m) = history();
    let repo = open_repo(fx.path()).unwrap();
    let e = repo.blame_lines(fx.id(m["last"]), "src/core.c", &BTreeSet::from([9])).unwrap();
    assert_eq!(e[0].origin_commit.id, fx.id(m["topic"]));
    assert_eq!(e[0].origin_path, "src/a.c");
}

#[test]
fn commit_count_and_tags_match_git() {
    let (fx, m) = history();
    let repo = open_repo(fx.path()).unwrap();
    let count: usize = fx.git(&["rev-list", "--count", "HEAD"]).trim().parse().unwrap();
    assert_eq!(repo.commit_count().unwrap(), count);

    let names: BTreeSet<String> = repo.tags().unwrap().iter().map(|t| t.name.clone()).collect();
    let git_names: BTreeSet<String> = fx.git(&["tag"]).lines().map(str::to_string).collect();
    assert_eq!(names, git_names);
    // Annotated tags are peeled to their commit.
    let v2 = repo.tags().unwrap().iter().find(|t| t.name == "v2").unwrap().clone();
    assert_eq!(v2.target, fx.id(m["merge"]));

    for c in ["root", "grow", "topic", "main_edit"] {
        let ours: BTreeSet<String> = repo.tags_containing(fx.id(m[c])).unwrap().into_iter().map(|t| t.name).collect();
        let theirs: BTreeSet<String> = fx.git(&["tag", "--contains", fx.id(m[c])]).lines().map(str::to_string).collect();
        assert_eq!(ours, theirs, "tags containing {c}");
    }
}

#[test]
fn ancestry_matches_merge_base() {
    let (fx, m) = history();
    let repo = open_repo(fx.path()).unwrap();
    for a in m.values() {
        for b in m.values() {
            let base = fx.git(&["merge-base", fx.id(*a), fx.id(*b)]);
            assert_eq!(repo.is_ancestor(fx.id(*a), fx.id(*b)).unwrap(), base.trim() == fx.id(*a));
        }
    }
}

#[test]
fn file_contents_and_listing_match_git() {
    let (fx, m) = history();
    let repo = open_repo(fx.path()).unwrap();
    for c in m.values() {
        let files: Vec<String> = fx.git(&["ls-tree", "-r", "--name-only", fx.id(*c)]).lines().map(str::to_string).collect();
        let mut ours = repo.list_files(fx.id(*c)).unwrap();
        ours.sort();
        assert_eq!(ours, files);
        for f in &files {
            let text = fx.git(&["show", &format!("{}:{f}", fx.id(*c))]);
            assert_eq!(repo.file_at(fx.id(*c), f).unwrap().as_deref(), Some(text.as_str()));
        }
    }
    assert_eq!(repo.file_at(fx.id(m["last"]), "src/a.c").unwrap(), None);
}

#[test]
fn function_snapshots_cover_the_definition() {
    let (fx, m) = history();
    let repo = open_repo(fx.path()).unwrap();
    let snap = repo.function_snapshot(fx.id(m["last"]), "src/core.c", "b").unwrap().unwrap();
    assert_eq!(snap.first_line(), Some(7));
    assert_eq!(snap.last_line(), Some(11));
    assert!(snap.text().contains("log_b();"));
    assert!(repo.function_snapshot(fx.id(m["root"]), "src/a.c", "b").unwrap().is_none());
    let enclosing = repo.enclosing_function(fx.id(m["last"]), "src/core.c", 9).unwrap().unwrap();
    assert_eq!(enclosing.name, "b");
}

#[test]
fn track_lines_stops_at_the_rewriting_commit() {
    let (fx, m) = history();
    let repo = open_repo(fx.path()).unwrap();
    // `return x + 1;` and `log_b();` at HEAD.
    let t = repo.track_lines(fx.id(m["last"]), "src/core.c", &[4, 9]).unwrap();
    assert_eq!(t.commit.id, fx.id(m["last"]));
    assert_eq!(t.changed, vec![true, false]);
    assert_eq!(t.parent_positions[1], Some(9));

    // Following only `log_b();` crosses the rename and the merge.
    let t = repo.track_lines(fx.id(m["last"]), "src/core.c", &[9]).unwrap();
    assert_eq!(t.commit.id, fx.id(m["topic"]));
    assert_eq!(t.path, "src/a.c");
    assert_eq!(t.changed, vec![true]);
}

#[test]
fn bad_inputs_are_reported() {
    let (fx, m) = history();
    let repo = open_repo(fx.path()).unwrap();
    assert!(matches!(repo.commit(&"0".repeat(40)), Err(RepoError::UnknownCommit(_))));
    assert!(matches!(repo.blame_lines(fx.id(m["last"]), "src/core.c", &BTreeSet::from([99])), Err(RepoError::LineOutOfRange { .. })));
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(open_repo(dir.path()), Err(RepoError::NotARepository(_))));
    assert!(open_repo(&dir.path().join("missing")).is_err());
}
