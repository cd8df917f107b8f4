//! Prompt templates and the text blocks substituted into them.

use std::path::Path;

use serde_json::{json, Value};

use crate::relations::{ConstraintCheck, FailedConstraint};
use crate::scene::{AssetSpec, ConstraintSet, Layout, Room, SizeDoc};

/// The five agent prompt templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub planner: String,
    pub designer: String,
    pub evaluator_semantic: String,
    pub evaluator_physical: String,
    pub semantic_refine: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            planner: include_str!("../../prompts/planner.txt").to_string(),
            designer: include_str!("../../prompts/designer.txt").to_string(),
            evaluator_semantic: include_str!("../../prompts/evaluator_semantic.txt").to_string(),
            evaluator_physical: include_str!("../../prompts/evaluator_physical.txt").to_string(),
            semantic_refine: include_str!("../../prompts/semantic_refine.txt").to_string(),
        }
    }
}

impl Prompts {
    /// Loads templates from a directory holding the five `.txt` files.
    pub fn from_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| std::fs::read_to_string(dir.join(format!("{name}.txt")));
        Ok(Self {
            planner: read("planner")?,
            designer: read("designer")?,
            evaluator_semantic: read("evaluator_semantic")?,
            evaluator_physical: read("evaluator_physical")?,
            semantic_refine: read("semantic_refine")?,
        })
    }
}

pub const PLACEHOLDERS: [&str; 9] = [
    "room_type",
    "room_size",
    "object_names",
    "arranged_objects",
    "current_group",
    "constraint_strings",
    "objects_in_image",
    "questions",
    "result",
];

/// Substitutes `{name}` placeholders in one pass.
///
/// `{{` and `}}` become single braces; any other brace text is copied as is,
/// so literal JSON examples in a template survive. Substituted values are
/// never rescanned.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") {
            out.push('{');
            rest = &tail[2..];
            continue;
        }
        if tail.starts_with("}}") {
            out.push('}');
            rest = &tail[2..];
            continue;
        }
        if tail.starts_with('{') {
            if let Some(end) = tail.find('}') {
                let key = &tail[1..end];
                if let Some((_, v)) = values.iter().find(|(k, _)| *k == key) {
                    out.push_str(v);
                    rest = &tail[end + 1..];
                    continue;
                }
            }
        }
        out.push_str(&tail[..1]);
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

pub fn room_size(room: &Room) -> String {
    format!("{} cm (X) x {} cm (Y)", fmt_cm(room.width), fmt_cm(room.depth))
}

pub(crate) fn fmt_cm(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// "a cozy bedroom" style description used for {room_type}.
pub fn room_description(room_type: &str, prompt: &str) -> String {
    let prompt = prompt.trim();
    if !prompt.is_empty() {
        prompt.to_string()
    } else if room_type.trim().is_empty() {
        "a room".to_string()
    } else {
        format!("a {}", room_type.trim())
    }
}

pub fn object_names(assets: &[AssetSpec]) -> String {
    let names: Vec<&str> = assets.iter().map(|a| a.object_name.as_str()).collect();
    format!("[{}]", names.join(", "))
}

fn size_json(a: &AssetSpec) -> Value {
    serde_json::to_value(SizeDoc {
        x: a.footprint_w,
        y: a.footprint_d,
        z: a.height,
    })
    .expect("size serializes")
}

/// Placed objects as the JSON list the designer and evaluator see.
pub fn placed_objects_json(layout: &Layout) -> String {
    let items: Vec<Value> = layout
        .iter()
        .map(|(name, p)| {
            json!({
                "object_name": name,
                "size": size_json(&p.asset),
                "position": crate::scene::PositionDoc { x: p.pose.x, y: p.pose.y },
                "rotation": p.pose.theta,
            })
        })
        .collect();
    serde_json::to_string_pretty(&items).expect("layout serializes")
}

/// Group members with their sizes, in group order.
pub fn group_json(group: &[String], assets: &[AssetSpec]) -> String {
    let items: Vec<Value> = group
        .iter()
        .filter_map(|n| assets.iter().find(|a| &a.object_name == n))
        .map(|a| json!({"object_name": a.object_name, "size": size_json(a)}))
        .collect();
    serde_json::to_string_pretty(&items).expect("group serializes")
}

/// One line per group member describing its rules.
pub fn constraint_strings(group: &[String], constraints: &[ConstraintSet]) -> String {
    let mut lines = Vec::new();
    for name in group {
        let Some(c) = constraints.iter().find(|c| &c.subject == name) else {
            lines.push(format!("- {name}: no constraints"));
            continue;
        };
        let mut parts = Vec::new();
        if c.against_wall {
            parts.push("against the wall, facing the center of the room".to_string());
        }
        for r in &c.relations {
            parts.push(format!("{} {}", r.kind.phrase(), r.target));
        }
        if let Some(t) = &c.facing {
            parts.push(format!("facing {t}"));
        }
        if parts.is_empty() {
            parts.push("no constraints".to_string());
        }
        lines.push(format!("- {name}: {}", parts.join("; ")));
    }
    lines.join("\n")
}

pub fn numbered_questions(questions: &[(String, ConstraintCheck)]) -> String {
    questions
        .iter()
        .enumerate()
        .map(|(i, (s, c))| format!("{}. {}", i + 1, c.question(s)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn failure_summary(failed: &[FailedConstraint]) -> String {
    failed
        .iter()
        .map(|f| {
            if f.reason.is_empty() {
                format!("{}.", f.feedback)
            } else {
                format!("{} ({}).", f.feedback, f.reason)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Pose, Rotation};

    #[test]
    fn fill_replaces_known_names_only() {
        let t = "A {room_type} {{\"X\": 1}} {\"X\": 2} {unknown} {result}";
        let out = fill(t, &[("room_type", "bedroom"), ("result", "ok")]);
        assert_eq!(out, "A bedroom {\"X\": 1} {\"X\": 2} {unknown} ok");
    }

    #[test]
    fn substituted_text_is_not_rescanned() {
        let out = fill("{questions}", &[("questions", "{result}"), ("result", "x")]);
        assert_eq!(out, "{result}");
    }

    #[test]
    fn shipped_templates_use_known_placeholders() {
        let p = Prompts::default();
        for t in [&p.planner, &p.designer, &p.evaluator_semantic, &p.evaluator_physical, &p.semantic_refine] {
            let values: Vec<(&str, &str)> = PLACEHOLDERS.iter().map(|k| (*k, "<>")).collect();
            let filled = fill(t, &values);
            for k in PLACEHOLDERS {
                assert!(!filled.contains(&format!("{{{k}}}")), "{k}");
            }
        }
        assert!(fill(&p.designer, &[]).contains("{\"X\": 120, \"Y\": 200}"));
        assert!(p.planner.contains("{room_type}") && p.planner.contains("{object_names}"));
    }

    #[test]
    fn placed_objects_use_scene_schema() {
        let l = Layout::empty(Room::new(400.0, 300.0).unwrap())
            .with(AssetSpec::new("sofa-0", 200.0, 90.0, 80.0).unwrap(), Pose::new(200.0, 45.0, Rotation::Deg0))
            .unwrap();
        let v: Value = serde_json::from_str(&placed_objects_json(&l)).unwrap();
        assert_eq!(v[0]["position"]["X"], 200);
        assert_eq!(v[0]["size"]["y"], 90);
        assert_eq!(v[0]["rotation"], 0);
    }
}
