use std::collections::BTreeSet;

use onecommon::corpus::grammar::{relation, Relation, SHADES, SIZES};
use onecommon::corpus::upstream::convert;
use onecommon::corpus::*;
use onecommon::world::{sample_context, Player};

fn records(n: usize) -> Vec<DialogueRecord> {
    synth_corpus(n, 3, &GrammarConfig::default()).unwrap()
}

#[test]
fn synthetic_dialogues_are_deterministic_and_valid() {
    let ctx = sample_context(11, 5).unwrap();
    let a = synth_dialogue(&ctx, 4, &GrammarConfig::default()).unwrap();
    let b = synth_dialogue(&ctx, 4, &GrammarConfig::default()).unwrap();
    assert_eq!(a, b);
    for r in records(300) {
        r.validate().unwrap();
    }
}

#[test]
fn oracle_success_rate_is_high() {
    let rs = records(500);
    let ok = rs.iter().filter(|r| r.success).count();
    assert!(ok as f64 / rs.len() as f64 >= 0.7, "{ok}/500");
}

#[test]
fn speaker_annotations_are_nonempty_in_own_view() {
    for r in records(200) {
        for e in &r.events {
            if let Action::Message { annotations: Some(anns), .. } = &e.action {
                let view = r.context.view(e.speaker);
                for m in masks_in(view, anns).masks() {
                    assert!(!m.is_empty());
                }
            }
        }
    }
}

/// Independent geometry check: recompute every relation phrase from coordinates.
#[test]
fn relation_phrases_agree_with_geometry() {
    let words = |r: Relation| r.words().join(" ");
    let mut checked = 0;
    for r in records(300) {
        for e in &r.events {
            let Action::Message { tokens, annotations: Some(anns) } = &e.action else { continue };
            if anns.len() != 2 {
                continue;
            }
            let view = r.context.view(e.speaker);
            let between = tokens[anns[0].end..anns[1].start].join(" ");
            let target = &view.dots[view.index_of(anns[0].dots[0]).unwrap()];
            let anchor: Vec<_> = anns[1].dots.iter().map(|&d| &view.dots[view.index_of(d).unwrap()]).collect();
            let cx = anchor.iter().map(|d| d.x).sum::<f64>() / anchor.len() as f64;
            let cy = anchor.iter().map(|d| d.y).sum::<f64>() / anchor.len() as f64;
            let (dx, dy) = (target.x - cx, target.y - cy);
            let expected = if dx.hypot(dy) < 0.25 {
                "next to"
            } else if dx.abs() >= dy.abs() {
                if dx < 0.0 { "left of" } else { "right of" }
            } else if dy < 0.0 {
                "below"
            } else {
                "above"
            };
            assert_eq!(between, expected);
            assert_eq!(words(relation(target, cx, cy)), expected);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn adjectives_match_attribute_bins() {
    for r in records(100) {
        for e in &r.events {
            let Action::Message { tokens, annotations: Some(anns) } = &e.action else { continue };
            let view = r.context.view(e.speaker);
            for a in anns.iter().filter(|a| a.dots.len() == 1) {
                let d = &view.dots[view.index_of(a.dots[0]).unwrap()];
                let size = tokens[a.start + 1].as_str();
                let shade = tokens[a.start + 2].as_str();
                let si = SIZES.iter().position(|s| *s == size).unwrap();
                let hi = SHADES.iter().position(|s| *s == shade).unwrap();
                assert!(d.size >= -1.0 + 0.5 * si as f64 - 1e-12 && d.size <= -1.0 + 0.5 * (si + 1) as f64 + 1e-12);
                assert!(d.shade >= -1.0 + 0.4 * hi as f64 - 1e-12 && d.shade <= -1.0 + 0.4 * (hi + 1) as f64 + 1e-12);
            }
        }
    }
}

#[test]
fn jsonl_round_trip_and_line_diagnostics() {
    let rs = records(20);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.jsonl");
    write_records(&p, &rs).unwrap();
    assert_eq!(read_records(&p).unwrap(), rs);
    assert_eq!(load_external(&[&p, &p]).unwrap().len(), 40);

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert!(read_records(&empty).unwrap().is_empty());

    let mut bad = rs[1].clone();
    for e in &mut bad.events {
        if let Action::Message { tokens, annotations: Some(anns) } = &mut e.action {
            if let Some(a) = anns.first_mut() {
                a.end = tokens.len() + 3;
                break;
            }
        }
    }
    let lines = [serde_json::to_string(&rs[0]).unwrap(), serde_json::to_string(&bad).unwrap()].join("\n");
    let badp = dir.path().join("bad.jsonl");
    std::fs::write(&badp, lines).unwrap();
    let err = read_records(&badp).unwrap_err().to_string();
    assert!(err.contains(":2:") && err.contains("out of bounds"), "{err}");
}

#[test]
fn gold_spans_pass_through_and_missing_annotation_errors() {
    let r = &records(1)[0];
    let (i, e) = r.messages().next().unwrap();
    let Action::Message { annotations: Some(anns), .. } = &e.action else { panic!() };
    let spans = gold_spans(r, i).unwrap();
    assert_eq!(spans, anns.iter().map(|a| a.span()).collect::<Vec<_>>());
    let json = serde_json::to_string(&spans).unwrap();
    assert_eq!(serde_json::from_str::<Vec<onecommon::spans::Span>>(&json).unwrap(), spans);

    let mut stripped = r.clone();
    if let Action::Message { annotations, .. } = &mut stripped.events[i].action {
        *annotations = None;
    }
    assert!(matches!(gold_spans(&stripped, i), Err(onecommon::Error::MissingAnnotation(_))));
}

#[test]
fn splits_are_disjoint_stratified_partitions() {
    let rs = records(100);
    let splits = make_splits(&rs, 10, 5).unwrap();
    let mut seen = BTreeSet::new();
    for s in &splits {
        assert_eq!(s.test.len(), 10);
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), 100);
        for r in &s.test {
            assert!(seen.insert(r.id.clone()));
        }
    }
    assert_eq!(seen.len(), 100);
    assert!(make_splits(&rs[..5], 10, 5).is_err());

    let big = records(600);
    let global: Vec<f64> = (4..=6).map(|k| big.iter().filter(|r| r.context.shared_count() == k).count() as f64 / 600.0).collect();
    for s in make_splits(&big, 10, 1).unwrap() {
        for (i, k) in (4..=6).enumerate() {
            let frac = s.test.iter().filter(|r| r.context.shared_count() == k).count() as f64 / s.test.len() as f64;
            assert!((frac - global[i]).abs() <= 0.1);
        }
    }
}

fn upstream_fixture() -> (serde_json::Value, serde_json::Value, serde_json::Value) {
    // Two 7-dot views in pixel coordinates sharing ids 1..=5.
    let view = |ids: &[u32], dx: f64| -> Vec<serde_json::Value> {
        ids.iter()
            .enumerate()
            .map(|(i, &id)| {
                let angle = i as f64 * 0.9;
                serde_json::json!({
                    "id": id.to_string(),
                    "x": 215.0 + 120.0 * angle.cos() + dx,
                    "y": 215.0 + 120.0 * angle.sin(),
                    "size": 7 + (id % 7),
                    "color": format!("rgb({0},{0},{0})", 105 + 15 * (id % 8)),
                })
            })
            .collect()
    };
    let a = view(&[1, 2, 3, 4, 5, 6, 7], 0.0);
    let mut b = a[..5].to_vec();
    b.push(serde_json::json!({"id": "8", "x": 300.0, "y": 100.0, "size": 9, "color": "rgb(150,150,150)"}));
    b.push(serde_json::json!({"id": "9", "x": 150.0, "y": 330.0, "size": 12, "color": "rgb(200,200,200)"}));
    let transcripts = serde_json::json!([{
        "uuid": "C_1",
        "scenario": {"kbs": [a, b]},
        "events": [
            {"agent": 0, "action": "message", "data": "I see a big dark dot."},
            {"agent": 1, "action": "message", "data": "Yes, I see it"},
            {"agent": 0, "action": "select", "data": "3"},
            {"agent": 1, "action": "select", "data": "3"}
        ]
    }]);
    let text = "A: I see a big dark dot.\nB: Yes, I see it\n";
    let markables = serde_json::json!({"C_1": {"text": text, "markables": [
        {"markable_id": "M1", "start": 9, "end": 23, "speaker": 0},
        {"markable_id": "M2", "start": 40, "end": 42, "speaker": 1}
    ]}});
    let referents = serde_json::json!({"C_1": {
        "M1": {"referents": ["agent_0_3"]},
        "M2": {"referents": ["agent_1_3"]}
    }});
    (transcripts, markables, referents)
}

#[test]
fn upstream_conversion_round_trips() {
    let (t, m, r) = upstream_fixture();
    let (recs, report) = convert(&t, Some(&m), Some(&r));
    assert_eq!(report.converted, 1, "{:?}", report.skipped);
    let rec = &recs[0];
    assert_eq!(rec.events.len(), 4);
    assert!(rec.success);
    let Action::Message { tokens, annotations: Some(anns) } = &rec.events[0].action else { panic!() };
    assert_eq!(tokens[anns[0].start..anns[0].end].join(" "), "a big dark dot");
    assert_eq!(anns[0].dots, vec![3]);
    let Action::Message { tokens, annotations: Some(anns) } = &rec.events[1].action else { panic!() };
    assert_eq!(tokens[anns[0].start..anns[0].end].join(" "), "it");

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("conv.jsonl");
    write_records(&p, &recs).unwrap();
    let back = read_records(&p).unwrap();
    let count = |rs: &[DialogueRecord]| -> (usize, usize) {
        let ev = rs.iter().map(|r| r.events.len()).sum();
        let an = rs
            .iter()
            .flat_map(|r| &r.events)
            .map(|e| match &e.action {
                Action::Message { annotations: Some(a), .. } => a.len(),
                _ => 0,
            })
            .sum();
        (ev, an)
    };
    assert_eq!(count(&back), count(&recs));
    assert_eq!(back[0].context.shared_count(), 5);
    assert_eq!(back[0].context.view(Player::B).dots.len(), 7);
}

#[test]
fn vocabulary_covers_corpus() {
    let rs = records(50);
    let v = build_vocab(&rs);
    for r in &rs {
        for e in &r.events {
            if let Action::Message { tokens, .. } = &e.action {
                assert!(v.encode(tokens).iter().all(|&i| i != onecommon::encoders::vocab::UNK));
            }
        }
    }
}
