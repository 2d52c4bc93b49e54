use std::path::Path;
use std::process::{Command, Output};

use onecommon::world::read_contexts;
use serde_json::Value;

fn agent() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_onecommon-agent"));
    c.env_remove("ONECOMMON_CHECKPOINT");
    c
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{cmd:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_contexts_writes_one_stratum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ctx.jsonl");
    let report = json(&run(agent().args(["gen-contexts", "--n", "100", "--shared", "4", "--seed", "7", "--out", p(&out)])));
    assert_eq!(report["contexts"], 100);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 100);
    assert!(read_contexts(&out).unwrap().iter().all(|c| c.shared_count() == 4));

    let again = dir.path().join("again.jsonl");
    run(agent().args(["gen-contexts", "--n", "100", "--shared", "4", "--seed", "7", "--out", p(&again)]));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn bad_invocations_fail_with_diagnostics() {
    let out = agent().args(["gen-contexts", "--n", "3", "--bogus"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));

    let out = agent().args(["eval-corpus", "--checkpoint", "/nonexistent/model.json", "--corpus", "/nonexistent/c.jsonl"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/model.json"));

    let out = agent().args(["selfplay"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ONECOMMON_CHECKPOINT"));

    let out = agent().args(["gen-contexts", "--n", "3", "--shared", "9", "--out", "/tmp/never.jsonl"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn smoke_pipeline_trains_evaluates_and_plays_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    run(agent().args(["gen-contexts", "--n", "36", "--seed", "3", "--out", p(&d("ctx.jsonl"))]));
    let synth = json(&run(agent().args(["synth-corpus", "--contexts", p(&d("ctx.jsonl")), "--seed", "1", "--out", p(&d("corpus.jsonl"))])));
    assert_eq!(synth["dialogues"], 36);

    let train = json(&run(agent().args([
        "train", "--corpus", p(&d("corpus.jsonl")), "--folds", "3", "--preset", "tiny", "--epochs", "1", "--out", p(&d("model.json")),
    ])));
    assert_eq!(train["report"]["epochs"].as_array().unwrap().len(), 1);

    let metrics = json(&run(agent().args(["eval-corpus", "--corpus", p(&d("corpus.jsonl")), "--fold", "0", "--folds", "3"]).env("ONECOMMON_CHECKPOINT", d("model.json"))));
    for key in ["choice_accuracy", "ref_resolution_dot_accuracy", "ref_resolution_exact_match", "partner_ref_accuracy", "partner_ref_exact", "next_mention_exact"] {
        let v = metrics[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }

    for (i, report) in ["a.json", "b.json"].into_iter().enumerate() {
        run(agent().args([
            "--report", p(&d(report)), "selfplay", "--checkpoint", p(&d("model.json")), "--per-stratum", "2", "--seed", "9", "--out", p(&d(&format!("games{i}.jsonl"))),
        ]));
    }
    assert_eq!(std::fs::read(d("a.json")).unwrap(), std::fs::read(d("b.json")).unwrap());
    assert_eq!(std::fs::read(d("games0.jsonl")).unwrap(), std::fs::read(d("games1.jsonl")).unwrap());
    let report: Value = serde_json::from_slice(&std::fs::read(d("a.json")).unwrap()).unwrap();
    assert_eq!(report["games"], 6);
    assert_eq!(report["strata"].as_object().unwrap().len(), 3);
    assert_eq!(onecommon::harness::read_transcripts(&d("games0.jsonl")).unwrap().len(), 6);

    let vocab = json(&run(agent().args(["vocab", "--corpus", p(&d("corpus.jsonl")), "--out", p(&d("vocab.txt"))])));
    assert!(vocab["tokens"].as_u64().unwrap() > 6);
}

#[test]
fn convert_reports_converted_and_skipped_dialogues() {
    let dir = tempfile::tempdir().unwrap();
    let dots = |ids: &[u32]| -> Vec<Value> {
        ids.iter()
            .enumerate()
            .map(|(i, &id)| {
                let angle = i as f64 * 0.9;
                serde_json::json!({"id": id.to_string(), "x": 215.0 + 120.0 * angle.cos(), "y": 215.0 + 120.0 * angle.sin(), "size": 9, "color": "rgb(150,150,150)"})
            })
            .collect()
    };
    let transcripts = serde_json::json!([
        {
            "uuid": "C_ok",
            "scenario": {"kbs": [dots(&[1, 2, 3, 4, 5, 6, 7]), dots(&[1, 2, 3, 4, 5, 8, 9])]},
            "events": [
                {"agent": 0, "action": "message", "data": "I see a grey dot."},
                {"agent": 1, "action": "select", "data": "1"},
                {"agent": 0, "action": "select", "data": "1"}
            ]
        },
        {"uuid": "C_bad", "events": []}
    ]);
    let input = dir.path().join("transcripts.json");
    std::fs::write(&input, transcripts.to_string()).unwrap();
    let out = dir.path().join("corpus.jsonl");
    let report = json(&run(agent().args(["convert", "--transcripts", p(&input), "--out", p(&out)])));
    assert_eq!(report["converted"], 1);
    assert_eq!(report["skipped"][0]["id"], "C_bad");
    assert_eq!(onecommon::corpus::read_records(&out).unwrap().len(), 1);
}
