//! Turning free-form model replies into structured values.
//!
//! Replies are searched for JSON in this order: fenced code blocks, then the
//! whole text. Within each source every `{` or `[` is tried as the start of a
//! value; the first candidate that also decodes against the expected shape
//! wins. A candidate that is not strict JSON gets one more chance through a
//! lenient rewrite (single quotes, Python literals, trailing commas).

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::scene::{ConstraintSet, LayoutEntry, Pose, Relation, RelationKind, Rotation};

/// Maximum number of candidate start positions tried per source.
const MAX_CANDIDATES: usize = 64;
const EXCERPT_CHARS: usize = 200;

/// Shape a reply is expected to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    PlannerJson,
    PlacementJson,
    AnswerList,
    Boolean,
}

impl Expect {
    pub fn describe(self) -> &'static str {
        match self {
            Expect::PlannerJson => {
                "a JSON object with the keys \"constraints\" (one entry per object with against_wall, relative_position, relative_object and rotation) and \"groups\""
            }
            Expect::PlacementJson => {
                "a JSON list of objects, each with object_name, size, position {\"X\": ..., \"Y\": ...} and rotation (0, 90, 180 or 270)"
            }
            Expect::AnswerList => {
                "a JSON list with one {\"question\", \"objects\", \"reason\", \"answer\"} entry per question, in question order, where answer is yes or no"
            }
            Expect::Boolean => "only True or False",
        }
    }
}

/// What kind of rule a rejected reply broke.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisKind {
    /// Not the expected shape, or names and values out of range.
    #[default]
    Format,
    /// Planner groups or constraints do not cover the asset list exactly.
    Cover,
    /// Semantic refiner moved an object no failed constraint mentions.
    Scope,
}

/// Why a reply could not be used; fed back to the model for one repair attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub expect: Expect,
    #[serde(default)]
    pub kind: DiagnosisKind,
    pub problem: String,
    pub excerpt: String,
}

impl Diagnosis {
    pub fn new(expect: Expect, problem: impl Into<String>, reply: &str) -> Self {
        Self {
            expect,
            kind: DiagnosisKind::Format,
            problem: problem.into(),
            excerpt: reply.chars().take(EXCERPT_CHARS).collect(),
        }
    }

    pub fn with_kind(mut self, kind: DiagnosisKind) -> Self {
        self.kind = kind;
        self
    }

    /// Follow-up user message asking for a corrected reply.
    pub fn repair_prompt(&self) -> String {
        format!(
            "Your previous reply could not be used: {}. Reply again with {}. Do not add any other text.",
            self.problem,
            self.expect.describe()
        )
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expected {:?}: {}", self.expect, self.problem)
    }
}

impl std::error::Error for Diagnosis {}

/// Planner reply before it is checked against the asset list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerReply {
    pub constraints: Vec<ConstraintSet>,
    pub groups: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub question: Option<String>,
    pub yes: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelOutput {
    Plan(PlannerReply),
    Placements(Vec<LayoutEntry>),
    Answers(Vec<Answer>),
    Boolean(bool),
}

/// Parses a reply into the structure named by `expect`.
pub fn parse_model_output(text: &str, expect: Expect) -> Result<ModelOutput, Diagnosis> {
    match expect {
        Expect::PlannerJson => parse_planner_reply(text).map(ModelOutput::Plan),
        Expect::PlacementJson => parse_placement_reply(text).map(ModelOutput::Placements),
        Expect::AnswerList => parse_answer_reply(text).map(ModelOutput::Answers),
        Expect::Boolean => parse_boolean_reply(text).map(ModelOutput::Boolean),
    }
}

pub fn parse_planner_reply(text: &str) -> Result<PlannerReply, Diagnosis> {
    first_decodable(text, Expect::PlannerJson, decode_planner)
}

pub fn parse_placement_reply(text: &str) -> Result<Vec<LayoutEntry>, Diagnosis> {
    first_decodable(text, Expect::PlacementJson, decode_placements)
}

pub fn parse_answer_reply(text: &str) -> Result<Vec<Answer>, Diagnosis> {
    first_decodable(text, Expect::AnswerList, decode_answers)
}

/// Accepts True/False (or yes/no) as the first word, a JSON boolean, or a
/// reply that mentions exactly one of the two words.
pub fn parse_boolean_reply(text: &str) -> Result<bool, Diagnosis> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty() && !w.eq_ignore_ascii_case("json"))
        .map(|w| w.to_ascii_lowercase())
        .collect();
    let as_bool = |w: &str| match w {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    };
    if let Some(b) = words.first().and_then(|w| as_bool(w)) {
        return Ok(b);
    }
    let has_true = words.iter().any(|w| w == "true");
    let has_false = words.iter().any(|w| w == "false");
    match (has_true, has_false) {
        (true, false) => Ok(true),
        (false, true) => Ok(false),
        (true, true) => Err(Diagnosis::new(
            Expect::Boolean,
            "the reply mentions both True and False",
            text,
        )),
        (false, false) => Err(Diagnosis::new(
            Expect::Boolean,
            "the reply contains neither True nor False",
            text,
        )),
    }
}

/// Contents of every ``` fenced block, in order. An unterminated fence runs
/// to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // Skip the info string (e.g. "json") up to the end of the line.
        let body_start = match after.find('\n') {
            Some(nl) if after[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') => nl + 1,
            _ => 0,
        };
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                out.push(body);
                break;
            }
        }
    }
    out
}

/// JSON objects and arrays found in the reply, strict or lenient, in search
/// order. Evaluated lazily.
pub fn json_candidates(text: &str) -> impl Iterator<Item = Value> + '_ {
    let mut sources = fenced_blocks(text);
    sources.push(text);
    sources.into_iter().flat_map(|src| {
        src.char_indices()
            .filter(|(_, c)| *c == '{' || *c == '[')
            .take(MAX_CANDIDATES)
            .filter_map(move |(start, _)| value_at(&src[start..]))
    })
}

/// First JSON value (object or array) in the reply, ignoring what follows it.
pub fn extract_json(text: &str) -> Option<Value> {
    json_candidates(text).next()
}

fn value_at(s: &str) -> Option<Value> {
    let mut stream = serde_json::Deserializer::from_str(s).into_iter::<Value>();
    if let Some(Ok(v)) = stream.next() {
        return Some(v);
    }
    let span = balanced_span(s)?;
    serde_json::from_str(&normalize_lenient(span)).ok()
}

/// Prefix of `s` up to the bracket closing its first character, honoring
/// single- and double-quoted strings.
fn balanced_span(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(&s[..i + c.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Rewrites common near-JSON into JSON: single-quoted strings, Python
/// `True`/`False`/`None`, and trailing commas.
pub fn normalize_lenient(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut quote: Option<char> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if let Some(q) = quote {
            match c {
                '\\' if i + 1 < chars.len() => {
                    let next = chars[i + 1];
                    if next == '\'' {
                        out.push('\'');
                    } else {
                        out.push('\\');
                        out.push(next);
                    }
                    i += 2;
                    continue;
                }
                _ if c == q => {
                    out.push('"');
                    quote = None;
                }
                '"' => out.push_str("\\\""),
                '\n' => out.push_str("\\n"),
                _ => out.push(c),
            }
            i += 1;
            continue;
        }
        match c {
            '"' | '\'' => {
                quote = Some(c);
                out.push('"');
                i += 1;
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some('}') | Some(']')) {
                    out.push(',');
                }
                i += 1;
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push_str(match word.as_str() {
                    "True" => "true",
                    "False" => "false",
                    "None" => "null",
                    _ => &word,
                });
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

fn first_decodable<T>(
    text: &str,
    expect: Expect,
    decode: impl Fn(&Value) -> Result<T, String>,
) -> Result<T, Diagnosis> {
    let mut first_problem = None;
    for v in json_candidates(text) {
        match decode(&v) {
            Ok(t) => return Ok(t),
            Err(p) => {
                first_problem.get_or_insert(p);
            }
        }
    }
    let problem = first_problem.unwrap_or_else(|| "no JSON value was found in the reply".to_string());
    Err(Diagnosis::new(expect, problem, text))
}

fn is_blank(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => {
            let t = s.trim();
            t.is_empty() || t.eq_ignore_ascii_case("null") || t.eq_ignore_ascii_case("none")
        }
        Value::Array(a) => a.iter().all(is_blank),
        _ => false,
    }
}

fn boolish(v: &Value, what: &str) -> Result<bool, String> {
    match v {
        Value::Null => Ok(false),
        Value::Bool(b) => Ok(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => Ok(true),
            "false" | "no" | "" | "null" | "none" => Ok(false),
            other => Err(format!("{what} must be true or false, got \"{other}\"")),
        },
        other => Err(format!("{what} must be true or false, got {other}")),
    }
}

fn split_words(s: &str) -> Vec<String> {
    s.split([',', ';'])
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn string_list(v: &Value, what: &str) -> Result<Vec<String>, String> {
    match v {
        _ if is_blank(v) => Ok(Vec::new()),
        Value::String(s) => Ok(split_words(s)),
        Value::Array(items) => {
            let mut out = Vec::new();
            for it in items {
                match it {
                    Value::String(s) if !is_blank(it) => out.push(s.trim().to_string()),
                    _ if is_blank(it) => {}
                    other => return Err(format!("{what} must list names, found {other}")),
                }
            }
            Ok(out)
        }
        other => Err(format!("{what} must be a name or a list of names, got {other}")),
    }
}

fn relation_kind(word: &str, subject: &str) -> Result<RelationKind, String> {
    word.parse().map_err(|_| {
        format!(
            "relative_position of {subject} uses \"{word}\"; choose from near, side of, in front of, aligned with, opposite, around"
        )
    })
}

fn pair_field<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k))
}

fn decode_relations(entry: &Map<String, Value>, subject: &str) -> Result<Vec<Relation>, String> {
    let rp = entry.get("relative_position").unwrap_or(&Value::Null);
    let ro = entry.get("relative_object").unwrap_or(&Value::Null);
    if is_blank(rp) {
        return Ok(Vec::new());
    }
    let rel = |k: &str, t: &str| -> Result<Relation, String> {
        Ok(Relation {
            kind: relation_kind(k, subject)?,
            target: t.trim().to_string(),
        })
    };
    // Explicit pairs: [["near", "bed-0"], ...] or [{"relation": "near", "object": "bed-0"}, ...].
    if let Value::Array(items) = rp {
        if items.iter().any(|i| i.is_array() || i.is_object()) {
            let mut out = Vec::new();
            for it in items {
                match it {
                    Value::Array(pair) if pair.len() == 2 => match (&pair[0], &pair[1]) {
                        (Value::String(k), Value::String(t)) => out.push(rel(k, t)?),
                        _ => return Err(format!("relation pair for {subject} must hold two strings")),
                    },
                    Value::Object(o) => {
                        let k = pair_field(o, &["relation", "relative_position", "kind", "type", "position"]);
                        let t = pair_field(o, &["object", "relative_object", "target", "name"]);
                        match (k, t) {
                            (Some(Value::String(k)), Some(Value::String(t))) => out.push(rel(k, t)?),
                            _ => return Err(format!("relation entry for {subject} needs a relation and an object")),
                        }
                    }
                    _ if is_blank(it) => {}
                    other => return Err(format!("unreadable relation for {subject}: {other}")),
                }
            }
            return Ok(out);
        }
    }
    // Mapping form: {"near": "bed-0"} or {"near": ["a", "b"]}.
    if let Value::Object(o) = rp {
        let mut out = Vec::new();
        for (k, targets) in o {
            for t in string_list(targets, "relation target")? {
                out.push(rel(k, &t)?);
            }
        }
        return Ok(out);
    }
    let kinds = string_list(rp, "relative_position")?;
    let objects = string_list(ro, "relative_object")?;
    if objects.is_empty() {
        return Err(format!("relative_position of {subject} is set but relative_object is empty"));
    }
    let pairs: Vec<(String, String)> = if kinds.len() == objects.len() {
        kinds.into_iter().zip(objects).collect()
    } else if kinds.len() == 1 {
        objects.into_iter().map(|o| (kinds[0].clone(), o)).collect()
    } else if objects.len() == 1 {
        kinds.into_iter().map(|k| (k, objects[0].clone())).collect()
    } else {
        return Err(format!(
            "relative_position of {subject} lists {} relations but relative_object lists {} objects",
            kinds.len(),
            objects.len()
        ));
    };
    pairs.iter().map(|(k, t)| rel(k, t)).collect()
}

fn decode_constraint(subject: &str, v: &Value) -> Result<ConstraintSet, String> {
    let Value::Object(entry) = v else {
        return Err(format!("constraints for {subject} must be an object"));
    };
    let against_wall = boolish(entry.get("against_wall").unwrap_or(&Value::Null), "against_wall")?;
    let relations = decode_relations(entry, subject)?;
    let rotation = entry.get("rotation").unwrap_or(&Value::Null);
    let facing = match rotation {
        _ if is_blank(rotation) => None,
        Value::String(s) => Some(s.trim().to_string()),
        Value::Array(items) => match string_list(rotation, "rotation")?.into_iter().next() {
            Some(t) if items.len() == 1 => Some(t),
            _ => return Err(format!("rotation of {subject} must name a single object")),
        },
        other => return Err(format!("rotation of {subject} must be an object name or null, got {other}")),
    };
    Ok(ConstraintSet {
        subject: subject.trim().to_string(),
        against_wall,
        relations,
        facing,
    })
}

fn decode_planner(v: &Value) -> Result<PlannerReply, String> {
    let Value::Object(top) = v else {
        return Err("the planner reply must be a JSON object".into());
    };
    let constraints_v = top
        .get("constraints")
        .ok_or("the reply has no \"constraints\" key")?;
    let groups_v = top.get("groups").ok_or("the reply has no \"groups\" key")?;

    let mut constraints = Vec::new();
    match constraints_v {
        Value::Object(map) => {
            for (name, entry) in map {
                constraints.push(decode_constraint(name, entry)?);
            }
        }
        Value::Array(items) => {
            for entry in items {
                let name = entry
                    .as_object()
                    .and_then(|o| pair_field(o, &["object_name", "name", "object"]))
                    .and_then(Value::as_str)
                    .ok_or("each constraints entry in a list needs an object_name")?;
                constraints.push(decode_constraint(name, entry)?);
            }
        }
        _ => return Err("\"constraints\" must map object names to their constraints".into()),
    }

    let group_list = |g: &Value, label: &str| -> Result<Vec<String>, String> {
        match g {
            Value::Array(_) | Value::String(_) => string_list(g, label),
            Value::Object(o) => match pair_field(o, &["objects", "assets", "members"]) {
                Some(inner) => string_list(inner, label),
                None => Err(format!("{label} must be a list of object names")),
            },
            _ => Err(format!("{label} must be a list of object names")),
        }
    };
    let groups = match groups_v {
        Value::Object(map) => map
            .iter()
            .map(|(k, g)| group_list(g, &format!("group \"{k}\"")))
            .collect::<Result<Vec<_>, _>>()?,
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, g)| group_list(g, &format!("group {}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err("\"groups\" must be an object or a list of lists".into()),
    };
    Ok(PlannerReply { constraints, groups })
}

fn number(v: &Value, what: &str) -> Result<f64, String> {
    let n = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches("cm").trim().parse().ok(),
        _ => None,
    };
    match n {
        Some(n) if n.is_finite() => Ok(n),
        _ => Err(format!("{what} must be a number, got {v}")),
    }
}

fn decode_entry(name_hint: Option<&str>, v: &Value) -> Result<LayoutEntry, String> {
    let Value::Object(o) = v else {
        return Err(format!("placement entries must be objects, got {v}"));
    };
    let name = match (pair_field(o, &["object_name", "name"]), name_hint) {
        (Some(Value::String(s)), _) => s.trim().to_string(),
        (None, Some(h)) => h.to_string(),
        _ => return Err("a placement entry has no object_name".into()),
    };
    let pos = o
        .get("position")
        .ok_or_else(|| format!("{name} has no position"))?;
    let (x, y) = match pos {
        Value::Object(p) => {
            let x = pair_field(p, &["X", "x"]).ok_or_else(|| format!("position of {name} has no X"))?;
            let y = pair_field(p, &["Y", "y"]).ok_or_else(|| format!("position of {name} has no Y"))?;
            (number(x, "X")?, number(y, "Y")?)
        }
        Value::Array(xy) if xy.len() >= 2 => (number(&xy[0], "X")?, number(&xy[1], "Y")?),
        other => return Err(format!("position of {name} must be {{\"X\": .., \"Y\": ..}}, got {other}")),
    };
    if x < 0.0 || y < 0.0 {
        return Err(format!("position of {name} must be non-negative, got ({x}, {y})"));
    }
    let rot_v = o
        .get("rotation")
        .ok_or_else(|| format!("{name} has no rotation"))?;
    let deg = number(rot_v, "rotation")?;
    let rotation = Rotation::from_degrees(deg)
        .map_err(|_| format!("rotation of {name} must be 0, 90, 180 or 270, got {deg}"))?;
    let mut entry = LayoutEntry::new(name, Pose::new(x, y, rotation));
    if let Some(size) = o.get("size") {
        entry.extra.insert("size".into(), size.clone());
    }
    Ok(entry)
}

fn decode_placements(v: &Value) -> Result<Vec<LayoutEntry>, String> {
    match v {
        Value::Array(items) => items.iter().map(|i| decode_entry(None, i)).collect(),
        Value::Object(o) if o.contains_key("object_name") || o.contains_key("position") => {
            Ok(vec![decode_entry(None, v)?])
        }
        // A wrapper such as {"objects": [...]}.
        Value::Object(o) if o.len() == 1 && o.values().all(Value::is_array) => {
            decode_placements(o.values().next().expect("one value"))
        }
        // Keyed by name: {"sofa-0": {"position": .., "rotation": ..}}.
        Value::Object(o) if !o.is_empty() && o.values().all(|e| e.get("position").is_some()) => o
            .iter()
            .map(|(k, e)| decode_entry(Some(k), e))
            .collect(),
        _ => Err("expected a JSON list of placed objects".into()),
    }
}

fn decode_answer(i: usize, v: &Value) -> Result<Answer, String> {
    let Value::Object(o) = v else {
        return Err(format!("answer {} must be an object", i + 1));
    };
    let raw = o
        .get("answer")
        .ok_or_else(|| format!("answer {} has no \"answer\" field", i + 1))?;
    let yes = match raw {
        Value::Bool(b) => *b,
        Value::String(s) => {
            let w: String = s
                .trim()
                .chars()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect::<String>()
                .to_ascii_lowercase();
            match w.as_str() {
                "yes" | "true" => true,
                "no" | "false" => false,
                _ => return Err(format!("answer {} must be yes or no, got \"{}\"", i + 1, s.trim())),
            }
        }
        other => return Err(format!("answer {} must be yes or no, got {other}", i + 1)),
    };
    Ok(Answer {
        question: o.get("question").and_then(Value::as_str).map(str::to_string),
        yes,
        reason: o
            .get("reason")
            .map(|r| match r {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_default(),
    })
}

fn decode_answers(v: &Value) -> Result<Vec<Answer>, String> {
    match v {
        Value::Array(items) => items.iter().enumerate().map(|(i, a)| decode_answer(i, a)).collect(),
        Value::Object(o) if o.contains_key("answer") => Ok(vec![decode_answer(0, v)?]),
        Value::Object(o) => match pair_field(o, &["answers", "results"]) {
            Some(inner @ Value::Array(_)) => decode_answers(inner),
            _ => Err("expected a JSON list of answers".into()),
        },
        _ => Err("expected a JSON list of answers".into()),
    }
}
