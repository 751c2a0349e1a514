mod common;

use std::path::PathBuf;
use std::process::{Command, Output};

use common::fixture_path;

fn tmkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmkit"))
        .args(args)
        .env("TM_COLOR", "0")
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    fixture_path(name).display().to_string()
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tmkit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn validate_fixtures() {
    for name in common::TM_FIXTURES {
        let o = tmkit(&["validate", &fixture(name)]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        assert!(stdout(&o).starts_with("ok: "));
    }
    let o = tmkit(&["validate", &fixture("carsale.tm")]);
    assert_eq!(
        stdout(&o),
        "ok: 26 thimacs, 70 stages, 73 arcs, 17 events\n"
    );
}

#[test]
fn validation_errors_exit_one() {
    let bad = scratch(
        "bad.tm",
        "thimac A { create @a; receive @b; }\nflow @a -> @b;\n",
    );
    let o = tmkit(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("error[E_ADJ]"), "{err}");
    assert!(!err.contains('\x1b'));

    let syntax = scratch("syntax.tm", "thimac A {\n  create @a\n}\n");
    let o = tmkit(&["parse", syntax.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains(":3:1: error[E_SYNTAX]"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn usage_and_io_errors() {
    assert_eq!(tmkit(&["frob"]).status.code(), Some(2));
    assert_eq!(
        tmkit(&["simulate", &fixture("carsale.tm")]).status.code(),
        Some(2)
    );
    assert_eq!(
        tmkit(&["render", "--view", "sideways", &fixture("carsale.tm")])
            .status
            .code(),
        Some(2)
    );
    let o = tmkit(&["render", "missing.tm"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing.tm"));
}

#[test]
fn simulate_prints_a_trace() {
    let o = tmkit(&[
        "simulate",
        &fixture("carsale.tm"),
        "--scenario",
        &fixture("scenarios/avail.json"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 11);
    assert!(out.lines().all(|l| l.contains("\"negative\":false")));
    let last: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(last["name"], "E16");

    let o = tmkit(&[
        "simulate",
        &fixture("carsale.tm"),
        "--scenario",
        &fixture("scenarios/rejected.json"),
        "--stats",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let stats: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(stats["E16"]["negatives"], 1);
    assert_eq!(stats["E16"]["activations"], 0);
    assert_eq!(stats["E17"]["activations"], 1);
    assert_eq!(stats["E1"]["active"], 0);
}

#[test]
fn unresolved_guard_exits_one() {
    let s = scratch("none.json", r#"{"arrivals":[0]}"#);
    let o = tmkit(&[
        "simulate",
        &fixture("carsale.tm"),
        "--scenario",
        s.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E_GUARD_UNRESOLVED"));
}

#[test]
fn until_cuts_the_trace() {
    let o = tmkit(&[
        "simulate",
        &fixture("carsale.tm"),
        "--scenario",
        &fixture("scenarios/avail.json"),
        "--until",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    for l in stdout(&o).lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["start"].as_u64().unwrap() <= 3);
    }
}

#[test]
fn output_flag() {
    let dash = tmkit(&["render", &fixture("watch.tm"), "-o", "-"]);
    let plain = tmkit(&["render", &fixture("watch.tm")]);
    assert_eq!(dash.stdout, plain.stdout);
    assert!(stdout(&dash).starts_with("digraph tm {"));

    let target = scratch("watch.dot", "");
    let o = tmkit(&[
        "render",
        &fixture("watch.tm"),
        "-o",
        target.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read(&target).unwrap(), plain.stdout);
}

#[test]
fn import_then_validate() {
    let out = scratch("fig13.tm", "");
    let o = tmkit(&[
        "import-bpmn",
        &fixture("fig13.bpmn"),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = tmkit(&["validate", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bad = scratch("bad.bpmn", "<definitions><process>");
    let o = tmkit(&["import-bpmn", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E_XML"));
}

#[test]
fn simplify_and_compile() {
    let o = tmkit(&["simplify", &fixture("hammer.tm")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("link @h.2 -> @h.8;"));
    let o = tmkit(&["compile", &fixture("watch.tm")]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("negative R5 of E5"));
    assert!(out.contains("chronology: 6 edges, 0 joins, starts E1"));
}

#[test]
fn views() {
    for view in ["static", "dynamic", "chronology"] {
        let o = tmkit(&["render", "--view", view, &fixture("carsale.tm")]);
        assert_eq!(o.status.code(), Some(0), "{view}");
        assert!(stdout(&o).starts_with("digraph tm {"));
    }
}
