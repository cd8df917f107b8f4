//! Checks run by the fuzz targets. Each takes raw input, must never panic
//! on its own, and asserts round-trip properties on inputs that parse.

use layoutkit::agents::parse::{
    parse_answer_reply, parse_boolean_reply, parse_model_output, parse_placement_reply, parse_planner_reply,
    Expect,
};
use layoutkit::config::PipelineConfig;
use layoutkit::orchestrator::{replay, Trace};
use layoutkit::render::{decode_png, encode_png};
use layoutkit::scene::{parse_scene, Rotation};

pub const TARGETS: [&str; 9] = [
    "scene_json",
    "model_output",
    "planner_reply",
    "placement_reply",
    "answer_reply",
    "boolean_reply",
    "trace_ndjson",
    "config_json",
    "png_decode",
];

pub fn run(target: &str, data: &[u8]) {
    match target {
        "scene_json" => scene_json(data),
        "model_output" => model_output(data),
        "planner_reply" => planner_reply(data),
        "placement_reply" => placement_reply(data),
        "answer_reply" => answer_reply(data),
        "boolean_reply" => boolean_reply(data),
        "trace_ndjson" => trace_ndjson(data),
        "config_json" => config_json(data),
        "png_decode" => png_decode(data),
        other => panic!("unknown target {other}"),
    }
}

pub fn scene_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(scene) = parse_scene(text) else { return };
    let written = scene.to_json();
    let back = parse_scene(&written).expect("written scenes parse");
    assert_eq!(back, scene);
    assert_eq!(back.to_json(), written);
    let _ = scene.to_layout();
}

const EXPECTS: [Expect; 4] = [Expect::PlannerJson, Expect::PlacementJson, Expect::AnswerList, Expect::Boolean];

/// First byte picks the expected shape; the rest is the reply.
pub fn model_output(data: &[u8]) {
    let Some((&sel, rest)) = data.split_first() else { return };
    let text = String::from_utf8_lossy(rest);
    let expect = EXPECTS[sel as usize % EXPECTS.len()];
    if let Err(d) = parse_model_output(&text, expect) {
        assert_eq!(d.expect, expect);
        assert!(d.excerpt.chars().count() <= 200);
        assert!(!d.repair_prompt().is_empty());
    }
}

pub fn planner_reply(data: &[u8]) {
    let text = String::from_utf8_lossy(data);
    if let Ok(plan) = parse_planner_reply(&text) {
        for c in &plan.constraints {
            assert_eq!(c.subject.trim(), c.subject);
        }
    }
}

pub fn placement_reply(data: &[u8]) {
    let text = String::from_utf8_lossy(data);
    if let Ok(entries) = parse_placement_reply(&text) {
        for e in entries {
            let p = e.pose();
            assert!(p.x.is_finite() && p.y.is_finite() && p.x >= 0.0 && p.y >= 0.0);
            assert!(Rotation::ALL.contains(&p.theta));
        }
    }
}

pub fn answer_reply(data: &[u8]) {
    let text = String::from_utf8_lossy(data);
    let _ = parse_answer_reply(&text);
}

pub fn boolean_reply(data: &[u8]) {
    let text = String::from_utf8_lossy(data);
    if let Ok(b) = parse_boolean_reply(&text) {
        let lower = text.to_ascii_lowercase();
        let word = if b { ["true", "yes"] } else { ["false", "no"] };
        assert!(word.iter().any(|w| lower.contains(w)));
    }
}

pub fn trace_ndjson(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(trace) = Trace::parse_ndjson(text) else { return };
    let written = trace.to_ndjson();
    assert_eq!(Trace::parse_ndjson(&written).expect("written traces parse"), trace);
    let _ = replay(&trace);
}

pub fn config_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = PipelineConfig::from_json(text) else { return };
    let back = PipelineConfig::from_json(&config.to_json()).expect("written configs parse");
    assert_eq!(back, config);
}

pub fn png_decode(data: &[u8]) {
    let Ok(img) = decode_png(data) else { return };
    let bytes = encode_png(&img).expect("decoded images encode");
    assert_eq!(decode_png(&bytes).expect("encoded images decode"), img);
}
