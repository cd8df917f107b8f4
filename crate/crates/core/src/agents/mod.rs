//! Planner, designer, evaluator and semantic refiner on top of a pluggable
//! chat backend.
//!
//! Every call builds a prompt from the shipped templates, sends it to an
//! [`AgentBackend`], and decodes the reply. A reply that cannot be decoded
//! gets exactly one repair round (the diagnosis is sent back as a follow-up
//! message); a second failure is a hard error.

pub mod mock;
pub mod parse;
pub mod prompts;
pub mod remote;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relations::{ConstraintCheck, FailedConstraint};
use crate::render::{encode_base64, render_topdown, RenderOptions};
use crate::scene::{AssetSpec, ConstraintSet, GroupPlan, Layout, LayoutEntry, Pose};

pub use parse::{parse_model_output, Diagnosis, DiagnosisKind, Expect, ModelOutput};
pub use prompts::Prompts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub text: String,
    /// Base64-encoded PNG shown alongside the text.
    pub image_png_base64: Option<String>,
}

impl Message {
    pub fn user(text: impl Into<String>, image_png_base64: Option<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            image_png_base64,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
            image_png_base64: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Planner,
    Designer,
    SemanticEvaluator,
    PhysicalEvaluator,
    SemanticRefiner,
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentRole::Planner => "planner",
            AgentRole::Designer => "designer",
            AgentRole::SemanticEvaluator => "semantic evaluator",
            AgentRole::PhysicalEvaluator => "physical evaluator",
            AgentRole::SemanticRefiner => "semantic refiner",
        })
    }
}

/// Structured form of what a request asks for.
///
/// Remote backends ignore it and read the prompt text; the offline backend
/// answers from it directly.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Plan {
        room_type: String,
        assets: Vec<AssetSpec>,
    },
    Design {
        group: Vec<String>,
        assets: Vec<AssetSpec>,
        constraints: Vec<ConstraintSet>,
        layout: Layout,
    },
    EvaluateSemantic {
        layout: Layout,
        constraints: Vec<ConstraintSet>,
        questions: Vec<(String, ConstraintCheck)>,
    },
    EvaluatePhysical {
        layout: Layout,
        constraints: Vec<ConstraintSet>,
    },
    SemanticRefine {
        layout: Layout,
        constraints: Vec<ConstraintSet>,
        failed: Vec<FailedConstraint>,
    },
}

impl Task {
    pub fn role(&self) -> AgentRole {
        match self {
            Task::Plan { .. } => AgentRole::Planner,
            Task::Design { .. } => AgentRole::Designer,
            Task::EvaluateSemantic { .. } => AgentRole::SemanticEvaluator,
            Task::EvaluatePhysical { .. } => AgentRole::PhysicalEvaluator,
            Task::SemanticRefine { .. } => AgentRole::SemanticRefiner,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub messages: Vec<Message>,
    pub expect: Expect,
    pub task: Task,
    /// 0 for the first try, 1 for the repair round.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub kind: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// A chat model that turns a message list into reply text.
///
/// Implementations must be safe to call from several threads at once.
pub trait AgentBackend: Send + Sync {
    fn complete(&self, request: &Request) -> Result<String, BackendError>;

    fn identity(&self) -> BackendIdentity;

    /// Whether requests should carry a rendered image of the layout.
    fn wants_images(&self) -> bool {
        true
    }
}

/// Message as recorded in a trace; images are reduced to a flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub role: Role,
    pub text: String,
    #[serde(default)]
    pub has_image: bool,
}

/// One request/reply round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub agent: AgentRole,
    pub attempt: u32,
    pub request: Vec<LoggedMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<Diagnosis>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("{agent} call failed: {source}")]
    Backend {
        agent: AgentRole,
        #[source]
        source: BackendError,
    },
    #[error("{agent} reply unusable after repair: {diagnosis}")]
    Unparseable { agent: AgentRole, diagnosis: Diagnosis },
    #[error("planner groups do not cover the assets: {0}")]
    CoverViolation(String),
    #[error("semantic refiner modified objects outside the failed constraints: {0}")]
    OutOfScope(String),
    #[error("{0}")]
    Precondition(String),
    #[error("rendering failed: {0}")]
    Render(String),
}

/// Outcome of one evaluation pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalVerdict {
    pub s_sem: bool,
    pub s_phy: bool,
    pub failed_semantic: Vec<FailedConstraint>,
}

/// Agent calls for one scene, with the exchange log they produce.
pub struct Agents<'a> {
    backend: &'a dyn AgentBackend,
    prompts: &'a Prompts,
    render: RenderOptions,
    room_description: String,
    exchanges: Vec<Exchange>,
}

impl<'a> Agents<'a> {
    pub fn new(
        backend: &'a dyn AgentBackend,
        prompts: &'a Prompts,
        render: RenderOptions,
        room_type: &str,
        prompt: &str,
    ) -> Self {
        Self {
            backend,
            prompts,
            render,
            room_description: prompts::room_description(room_type, prompt),
            exchanges: Vec::new(),
        }
    }

    /// Exchanges recorded since the last call to this method.
    pub fn take_exchanges(&mut self) -> Vec<Exchange> {
        std::mem::take(&mut self.exchanges)
    }

    fn image(&self, layout: &Layout) -> Result<Option<String>, AgentError> {
        if !self.backend.wants_images() {
            return Ok(None);
        }
        encode_base64(&render_topdown(layout, &self.render))
            .map(Some)
            .map_err(|e| AgentError::Render(e.to_string()))
    }

    fn log(&mut self, req: &Request, reply: Option<&str>, error: Option<String>, diagnosis: Option<Diagnosis>) {
        self.exchanges.push(Exchange {
            agent: req.task.role(),
            attempt: req.attempt,
            request: req
                .messages
                .iter()
                .map(|m| LoggedMessage {
                    role: m.role,
                    text: m.text.clone(),
                    has_image: m.image_png_base64.is_some(),
                })
                .collect(),
            reply: reply.map(str::to_string),
            error,
            diagnosis,
        });
    }

    /// Sends a prompt and decodes the reply, with one repair round.
    fn call<T>(
        &mut self,
        task: Task,
        expect: Expect,
        text: String,
        image: Option<String>,
        decode: impl Fn(&str) -> Result<T, Diagnosis>,
    ) -> Result<T, AgentError> {
        let agent = task.role();
        let mut req = Request {
            messages: vec![Message::user(text, image)],
            expect,
            task,
            attempt: 0,
        };
        loop {
            let reply = match self.backend.complete(&req) {
                Ok(r) => r,
                Err(e) => {
                    self.log(&req, None, Some(e.to_string()), None);
                    return Err(AgentError::Backend { agent, source: e });
                }
            };
            match decode(&reply) {
                Ok(t) => {
                    self.log(&req, Some(&reply), None, None);
                    return Ok(t);
                }
                Err(d) => {
                    self.log(&req, Some(&reply), None, Some(d.clone()));
                    if req.attempt >= 1 {
                        return Err(match d.kind {
                            DiagnosisKind::Cover => AgentError::CoverViolation(d.problem),
                            DiagnosisKind::Scope => AgentError::OutOfScope(d.problem),
                            DiagnosisKind::Format => AgentError::Unparseable { agent, diagnosis: d },
                        });
                    }
                    req.messages.push(Message::assistant(reply));
                    req.messages.push(Message::user(d.repair_prompt(), None));
                    req.attempt += 1;
                }
            }
        }
    }

    /// Groups the assets and derives per-asset constraints.
    pub fn plan(
        &mut self,
        room_type: &str,
        assets: &[AssetSpec],
    ) -> Result<(GroupPlan, Vec<ConstraintSet>), AgentError> {
        if assets.is_empty() {
            return Err(AgentError::Precondition("plan needs at least one asset".into()));
        }
        let text = prompts::fill(
            &self.prompts.planner,
            &[
                ("room_type", &self.room_description),
                ("object_names", &prompts::object_names(assets)),
            ],
        );
        let task = Task::Plan {
            room_type: room_type.to_string(),
            assets: assets.to_vec(),
        };
        self.call(task, Expect::PlannerJson, text, None, |reply| {
            let raw = parse::parse_planner_reply(reply)?;
            finish_plan(raw, assets).map_err(|(kind, p)| Diagnosis::new(Expect::PlannerJson, p, reply).with_kind(kind))
        })
    }

    /// Proposes poses for one group given the committed layout.
    pub fn design(
        &mut self,
        group: &[String],
        assets: &[AssetSpec],
        constraints: &[ConstraintSet],
        layout: &Layout,
    ) -> Result<BTreeMap<String, Pose>, AgentError> {
        if group.is_empty() {
            return Err(AgentError::Precondition("design needs a nonempty group".into()));
        }
        let text = prompts::fill(
            &self.prompts.designer,
            &[
                ("room_type", &self.room_description),
                ("room_size", &prompts::room_size(layout.room())),
                ("arranged_objects", &prompts::placed_objects_json(layout)),
                ("current_group", &prompts::group_json(group, assets)),
                ("constraint_strings", &prompts::constraint_strings(group, constraints)),
            ],
        );
        let image = self.image(layout)?;
        let task = Task::Design {
            group: group.to_vec(),
            assets: assets.to_vec(),
            constraints: constraints.to_vec(),
            layout: layout.clone(),
        };
        self.call(task, Expect::PlacementJson, text, image, |reply| {
            let entries = parse::parse_placement_reply(reply)?;
            collect_group_poses(&entries, group, layout)
                .map_err(|p| Diagnosis::new(Expect::PlacementJson, p, reply))
        })
    }

    /// Asks the yes/no questions and the physical check for `layout`.
    pub fn evaluate(
        &mut self,
        layout: &Layout,
        constraints: &[ConstraintSet],
        questions: &[(String, ConstraintCheck)],
    ) -> Result<EvalVerdict, AgentError> {
        let image = self.image(layout)?;
        let mut failed = Vec::new();
        if !questions.is_empty() {
            let names: Vec<&str> = layout.names().collect();
            let text = prompts::fill(
                &self.prompts.evaluator_semantic,
                &[
                    ("room_type", &self.room_description),
                    ("room_size", &prompts::room_size(layout.room())),
                    ("objects_in_image", &format!("{}\n{}", names.join(", "), prompts::placed_objects_json(layout))),
                    ("questions", &prompts::numbered_questions(questions)),
                ],
            );
            let task = Task::EvaluateSemantic {
                layout: layout.clone(),
                constraints: constraints.to_vec(),
                questions: questions.to_vec(),
            };
            let n = questions.len();
            let answers = self.call(task, Expect::AnswerList, text, image.clone(), |reply| {
                let a = parse::parse_answer_reply(reply)?;
                if a.len() != n {
                    return Err(Diagnosis::new(
                        Expect::AnswerList,
                        format!("expected {n} answers, one per question, got {}", a.len()),
                        reply,
                    ));
                }
                Ok(a)
            })?;
            for ((subject, check), answer) in questions.iter().zip(answers) {
                if !answer.yes {
                    failed.push(FailedConstraint::new(subject.clone(), check.clone(), answer.reason));
                }
            }
        }
        let text = prompts::fill(
            &self.prompts.evaluator_physical,
            &[("room_type", &self.room_description)],
        );
        let task = Task::EvaluatePhysical {
            layout: layout.clone(),
            constraints: constraints.to_vec(),
        };
        let s_phy = self.call(task, Expect::Boolean, text, image, parse::parse_boolean_reply)?;
        Ok(EvalVerdict {
            s_sem: !failed.is_empty(),
            s_phy,
            failed_semantic: failed,
        })
    }

    /// Applies the refiner's minimal corrections for the failed constraints.
    pub fn semantic_refine(
        &mut self,
        layout: &Layout,
        constraints: &[ConstraintSet],
        failed: &[FailedConstraint],
    ) -> Result<Layout, AgentError> {
        if failed.is_empty() {
            return Err(AgentError::Precondition(
                "semantic refinement needs at least one failed constraint".into(),
            ));
        }
        let text = prompts::fill(
            &self.prompts.semantic_refine,
            &[
                ("room_type", &self.room_description),
                ("room_size", &prompts::room_size(layout.room())),
                ("objects_in_image", &prompts::placed_objects_json(layout)),
                ("result", &prompts::failure_summary(failed)),
            ],
        );
        let image = self.image(layout)?;
        let task = Task::SemanticRefine {
            layout: layout.clone(),
            constraints: constraints.to_vec(),
            failed: failed.to_vec(),
        };
        let implicated = implicated_objects(failed);
        self.call(task, Expect::PlacementJson, text, image, |reply| {
            let entries = parse::parse_placement_reply(reply)?;
            apply_corrections(layout, &entries, &implicated).map_err(|(kind, p)| {
                Diagnosis::new(Expect::PlacementJson, p, reply).with_kind(kind)
            })
        })
    }
}

/// Subjects and targets of the failed constraints.
pub fn implicated_objects(failed: &[FailedConstraint]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for f in failed {
        out.insert(f.subject.clone());
        for t in f.targets() {
            out.insert(t.to_string());
        }
    }
    out
}

/// Checks a planner reply against the asset list.
fn finish_plan(
    raw: parse::PlannerReply,
    assets: &[AssetSpec],
) -> Result<(GroupPlan, Vec<ConstraintSet>), (DiagnosisKind, String)> {
    let known = |n: &str| assets.iter().any(|a| a.object_name == n);
    let mut by_name: BTreeMap<String, ConstraintSet> = BTreeMap::new();
    for mut c in raw.constraints {
        if !known(&c.subject) {
            return Err((
                DiagnosisKind::Format,
                format!("constraints mention unknown object \"{}\"", c.subject),
            ));
        }
        for r in &c.relations {
            if !known(&r.target) || r.target == c.subject {
                return Err((
                    DiagnosisKind::Format,
                    format!("{} has a relation to \"{}\", which is not another listed object", c.subject, r.target),
                ));
            }
        }
        if let Some(t) = &c.facing {
            if !known(t) || *t == c.subject {
                return Err((
                    DiagnosisKind::Format,
                    format!("{} should face \"{t}\", which is not another listed object", c.subject),
                ));
            }
        }
        if c.against_wall {
            c.facing = None;
        }
        if by_name.insert(c.subject.clone(), c).is_some() {
            return Err((DiagnosisKind::Format, "an object has two constraint entries".into()));
        }
    }
    let mut constraints = Vec::with_capacity(assets.len());
    for a in assets {
        match by_name.remove(&a.object_name) {
            Some(c) => constraints.push(c),
            None => {
                return Err((
                    DiagnosisKind::Cover,
                    format!("no constraints were given for {}", a.object_name),
                ))
            }
        }
    }
    let plan = GroupPlan { groups: raw.groups };
    plan.validate(assets).map_err(|e| (DiagnosisKind::Cover, e))?;
    Ok((plan, constraints))
}

/// Poses for the group members, rounded to whole centimeters.
fn collect_group_poses(
    entries: &[LayoutEntry],
    group: &[String],
    layout: &Layout,
) -> Result<BTreeMap<String, Pose>, String> {
    let mut out = BTreeMap::new();
    for e in entries {
        if group.contains(&e.object_name) {
            out.entry(e.object_name.clone()).or_insert_with(|| {
                let p = e.pose();
                Pose::new(p.x.round(), p.y.round(), p.theta)
            });
        } else if !layout.contains(&e.object_name) {
            return Err(format!("\"{}\" is not one of the objects to place", e.object_name));
        }
    }
    if let Some(missing) = group.iter().find(|n| !out.contains_key(*n)) {
        return Err(format!("no placement was given for {missing}"));
    }
    Ok(out)
}

/// New layout with the reply's poses applied; untouched objects keep their
/// exact poses.
fn apply_corrections(
    layout: &Layout,
    entries: &[LayoutEntry],
    implicated: &BTreeSet<String>,
) -> Result<Layout, (DiagnosisKind, String)> {
    let mut out = layout.clone();
    for e in entries {
        let Some(current) = layout.pose(&e.object_name) else {
            return Err((
                DiagnosisKind::Format,
                format!("\"{}\" is not in the room", e.object_name),
            ));
        };
        let pose = e.pose();
        if pose == current {
            continue;
        }
        if !implicated.contains(&e.object_name) {
            return Err((
                DiagnosisKind::Scope,
                format!("{} is not part of any reported issue and must not be moved", e.object_name),
            ));
        }
        out.set_pose(&e.object_name, pose)
            .map_err(|err| (DiagnosisKind::Format, err.to_string()))?;
    }
    Ok(out)
}
