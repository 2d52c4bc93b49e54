//! Converter from released OneCommon transcripts (plus optional markable and referent
//! annotations) to [`DialogueRecord`]s.
//!
//! Expected inputs (see `docs/corpus_format.md`):
//! - transcripts: JSON array of `{uuid, scenario: {kbs: [[dot; 7]; 2]}, events: [{agent,
//!   action: "message" | "select", data}]}` with dots `{id, x, y, size, color: "rgb(v,v,v)"}`
//!   in pixel coordinates;
//! - markables: `{chat_id: {text, markables: [{markable_id, start, end, speaker}]}}` where
//!   `text` is the dialogue as lines `"A: …"` / `"B: …"` and offsets are character offsets;
//! - referents: `{chat_id: {markable_id: {referents: ["agent_<k>_<dot id>", …]}}}`.

use std::collections::HashMap;

use serde_json::Value;

use super::record::{Annotation, DialogueRecord, Event};
use crate::error::{Error, Result};
use crate::world::{Dot, GameContext, Player};

pub const PIXEL_CENTER: f64 = 215.0;
pub const PIXEL_RADIUS: f64 = 200.0;
pub const SIZE_RANGE: (f64, f64) = (7.0, 13.0);
pub const COLOR_RANGE: (f64, f64) = (105.0, 225.0);

#[derive(Debug, Default)]
pub struct ConversionReport {
    pub converted: usize,
    /// `(chat id, reason)` for every skipped transcript.
    pub skipped: Vec<(String, String)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidRecord(msg.into())
}

fn num(v: &Value, key: &str) -> Result<f64> {
    match &v[key] {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad(format!("{key} is not a number"))),
        Value::String(s) => s.parse().map_err(|_| bad(format!("{key} is not numeric: {s}"))),
        _ => Err(bad(format!("missing numeric field {key}"))),
    }
}

fn dot_id(v: &Value) -> Result<u32> {
    num(v, "id").map(|x| x as u32)
}

fn grey_level(color: &str) -> Result<f64> {
    let inner = color.trim().strip_prefix("rgb(").and_then(|s| s.strip_suffix(')')).ok_or_else(|| bad(format!("unparsable color {color}")))?;
    let parts: Vec<f64> = inner.split(',').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad(format!("unparsable color {color}")))?;
    Ok(parts.iter().sum::<f64>() / parts.len().max(1) as f64)
}

fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
}

/// Normalised view-local dot (y up, unit radius).
fn local_dot(v: &Value) -> Result<Dot> {
    let color = v["color"].as_str().ok_or_else(|| bad("dot without color"))?;
    Ok(Dot {
        id: dot_id(v)?,
        x: (num(v, "x")? - PIXEL_CENTER) / PIXEL_RADIUS,
        y: (PIXEL_CENTER - num(v, "y")?) / PIXEL_RADIUS,
        size: scale(num(v, "size")?, SIZE_RANGE),
        // Darker pixels map to larger shade values.
        shade: -scale(grey_level(color)?, COLOR_RANGE),
    })
}

fn build_context(scenario: &Value) -> Result<GameContext> {
    let kbs = scenario["kbs"].as_array().filter(|k| k.len() == 2).ok_or_else(|| bad("scenario.kbs must hold two views"))?;
    let views: Vec<Vec<Dot>> = kbs
        .iter()
        .map(|kb| kb.as_array().ok_or_else(|| bad("kb is not an array"))?.iter().map(local_dot).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let shared: Vec<(&Dot, &Dot)> = views[1].iter().filter_map(|b| views[0].iter().find(|a| a.id == b.id).map(|a| (a, b))).collect();
    if shared.is_empty() {
        return Err(bad("views share no dots"));
    }
    let n = shared.len() as f64;
    let center_b = [shared.iter().map(|(a, b)| a.x - b.x).sum::<f64>() / n, shared.iter().map(|(a, b)| a.y - b.y).sum::<f64>() / n];
    let mut board: Vec<Dot> = views[0].clone();
    for d in &views[1] {
        if !board.iter().any(|b| b.id == d.id) {
            board.push(Dot { x: d.x + center_b[0], y: d.y + center_b[1], ..*d });
        }
    }
    let ids_a: Vec<u32> = views[0].iter().map(|d| d.id).collect();
    let ids_b: Vec<u32> = views[1].iter().map(|d| d.id).collect();
    GameContext::from_parts(board, &ids_a, &ids_b, [0.0, 0.0], center_b, 1.0)
}

/// Tokens of `text` with their character offsets `[start, end)`.
fn tokens_with_offsets(text: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() || matches!(ch, '.' | ',' | '?' | '!') {
            if !cur.is_empty() {
                out.push((std::mem::take(&mut cur), cur_start, i));
            }
            if !ch.is_whitespace() {
                out.push((ch.to_string(), i, i + ch.len_utf8()));
            }
        } else {
            if cur.is_empty() {
                cur_start = i;
            }
            cur.extend(ch.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push((cur, cur_start, text.len()));
    }
    out
}

struct Line {
    offset: usize,
    tokens: Vec<(String, usize, usize)>,
}

fn annotated_lines(text: &str) -> Vec<Line> {
    let mut lines = Vec::new();
    let mut pos = 0;
    for raw in text.split_inclusive('\n') {
        let body = raw.trim_end_matches('\n');
        let skip = body.find(": ").map_or(0, |i| i + 2);
        lines.push(Line { offset: pos + skip, tokens: tokens_with_offsets(&body[skip..]) });
        pos += raw.len();
    }
    lines
}

fn convert_one(chat: &Value, markables: Option<&Value>, referents: Option<&Value>) -> Result<DialogueRecord> {
    let id = chat["uuid"].as_str().unwrap_or("unknown").to_string();
    let context = build_context(&chat["scenario"])?;
    let events_json = chat["events"].as_array().ok_or_else(|| bad("missing events"))?;
    let mut events = Vec::new();
    let mut message_lines = Vec::new();
    for e in events_json {
        let agent = match e["agent"].as_u64() {
            Some(0) => Player::A,
            Some(1) => Player::B,
            _ => return Err(bad("event agent must be 0 or 1")),
        };
        match e["action"].as_str() {
            Some("message") => {
                let text = e["data"].as_str().ok_or_else(|| bad("message without text"))?;
                let tokens: Vec<String> = tokens_with_offsets(text).into_iter().map(|t| t.0).collect();
                if tokens.is_empty() {
                    continue;
                }
                message_lines.push(events.len());
                events.push(Event { speaker: agent, action: super::record::Action::Message { tokens, annotations: None } });
            }
            Some("select") => {
                let dot = match &e["data"] {
                    Value::String(s) => s.parse().map_err(|_| bad(format!("bad selection {s}")))?,
                    Value::Number(n) => n.as_u64().ok_or_else(|| bad("bad selection"))? as u32,
                    _ => return Err(bad("selection without dot id")),
                };
                events.push(Event::select(agent, dot));
            }
            _ => {}
        }
    }
    if let (Some(mk), Some(refs)) = (markables, referents) {
        let lines = annotated_lines(mk["text"].as_str().unwrap_or(""));
        if lines.len() == message_lines.len() {
            let mut per_line: HashMap<usize, Vec<Annotation>> = HashMap::new();
            for m in mk["markables"].as_array().into_iter().flatten() {
                let (Some(mid), Ok(start), Ok(end)) = (m["markable_id"].as_str(), num(m, "start"), num(m, "end")) else { continue };
                let (start, end) = (start as usize, end as usize);
                let Some(li) = lines.iter().rposition(|l| l.offset <= start) else { continue };
                let toks = &lines[li].tokens;
                let rel = (start - lines[li].offset, end.saturating_sub(lines[li].offset));
                let covered: Vec<usize> = (0..toks.len()).filter(|&t| toks[t].1 < rel.1 && toks[t].2 > rel.0).collect();
                let (Some(&a), Some(&b)) = (covered.first(), covered.last()) else { continue };
                let dots: Vec<u32> = refs[mid]["referents"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|r| r.as_str().and_then(|s| s.rsplit('_').next()).and_then(|s| s.parse().ok()))
                    .collect();
                per_line.entry(li).or_default().push(Annotation { start: a, end: b + 1, dots });
            }
            for (li, &ev) in message_lines.iter().enumerate() {
                let mut anns = per_line.remove(&li).unwrap_or_default();
                anns.sort_by_key(|a| (a.start, a.end));
                anns.dedup_by(|x, y| x.start < y.end);
                let speaker = events[ev].speaker;
                let view = context.view(speaker);
                for a in &mut anns {
                    a.dots.retain(|&d| view.index_of(d).is_some());
                }
                if let super::record::Action::Message { annotations, .. } = &mut events[ev].action {
                    *annotations = Some(anns);
                }
            }
        }
    }
    DialogueRecord::from_events(id, context, events)
}

/// Convert parsed transcript JSON. Transcripts that cannot be converted are skipped and
/// listed in the report.
pub fn convert(transcripts: &Value, markables: Option<&Value>, referents: Option<&Value>) -> (Vec<DialogueRecord>, ConversionReport) {
    let mut out = Vec::new();
    let mut report = ConversionReport::default();
    for chat in transcripts.as_array().into_iter().flatten() {
        let id = chat["uuid"].as_str().unwrap_or("unknown").to_string();
        let mk = markables.and_then(|m| m.get(&id));
        let rf = referents.and_then(|r| r.get(&id));
        match convert_one(chat, mk, rf) {
            Ok(r) => {
                out.push(r);
                report.converted += 1;
            }
            Err(e) => report.skipped.push((id, e.to_string())),
        }
    }
    (out, report)
}
