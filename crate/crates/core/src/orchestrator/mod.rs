//! The group-by-group synthesis pipeline.
//!
//! Plan once, then for each group: design, integrate, evaluate, run semantic
//! refinement while it keeps failing and rounds remain, run physical
//! refinement when flagged, and commit.

pub mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use thiserror::Error;

use crate::agents::{AgentBackend, AgentError, Agents, BackendError, Prompts};
use crate::config::{ConfigError, PipelineConfig};
use crate::grid_refine::{build_grid, invalid_objects, refine, GridError};
use crate::metrics::{score_scene, SceneScore};
use crate::relations::{constraint_checks, is_checkable, ConstraintCheck};
use crate::scene::{integrate_group, ConstraintSet, GroupPlan, Layout, LayoutEntry, Scene, SceneError};

pub use trace::{replay, Trace, TraceAsset, TraceError, TraceEvent};

#[derive(Debug, Error)]
pub enum PipelineErrorKind {
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A failed run, with the trace recorded up to the failure.
#[derive(Debug, Error)]
#[error("{kind}")]
pub struct PipelineError {
    pub kind: PipelineErrorKind,
    pub trace: Trace,
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub layout: Layout,
    pub trace: Trace,
    pub score: SceneScore,
    pub plan: GroupPlan,
    pub constraints: Vec<ConstraintSet>,
    /// Committed layout after each group, in plan order.
    pub group_layouts: Vec<Layout>,
    pub deleted: Vec<String>,
    /// Semantic checks asked of the evaluator, counted once per group.
    pub checked: usize,
    /// Checks still failing when a group was committed.
    pub flagged: usize,
}

/// Render file-name suffix for group `k` (1-based).
pub fn group_render_suffix(k: usize) -> String {
    format!("-group{k}.png")
}

pub const FINAL_RENDER_SUFFIX: &str = "-final.png";

/// Checks the evaluator is asked about for a group: those whose subject or
/// target belongs to it and that can be judged in `layout`.
pub fn group_questions(
    group: &[String],
    constraints: &[ConstraintSet],
    layout: &Layout,
) -> Vec<(String, ConstraintCheck)> {
    let members: BTreeSet<&str> = group.iter().map(String::as_str).collect();
    constraint_checks(constraints)
        .into_iter()
        .filter(|(subject, check)| members.contains(subject.as_str()) || members.contains(check.target()))
        .filter(|(subject, check)| is_checkable(layout, subject, check))
        .collect()
}

fn changed_entries(before: &Layout, after: &Layout) -> Vec<LayoutEntry> {
    after
        .iter()
        .filter(|(name, p)| before.pose(name) != Some(p.pose))
        .map(|(name, p)| LayoutEntry::new(name, p.pose))
        .collect()
}

fn elapsed(start: Option<Instant>) -> Option<u64> {
    start.map(|s| s.elapsed().as_millis() as u64)
}

pub struct Pipeline {
    config: PipelineConfig,
    backend: Box<dyn AgentBackend>,
    prompts: Prompts,
}

impl Pipeline {
    /// Builds the backend and prompts named by `config`.
    pub fn from_config(config: PipelineConfig) -> Result<Self, SetupError> {
        config.validate()?;
        let prompts = config.prompts()?;
        let backend = config.build_backend()?;
        Ok(Self {
            config,
            backend,
            prompts,
        })
    }

    pub fn with_backend(config: PipelineConfig, backend: Box<dyn AgentBackend>) -> Result<Self, SetupError> {
        config.validate()?;
        let prompts = config.prompts()?;
        Ok(Self {
            config,
            backend,
            prompts,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backend(&self) -> &dyn AgentBackend {
        self.backend.as_ref()
    }

    pub fn synthesize(&self, scene: &Scene) -> Result<Synthesis, PipelineError> {
        let mut run = Run {
            config: &self.config,
            agents: Agents::new(
                self.backend.as_ref(),
                &self.prompts,
                self.config.render.clone(),
                &scene.room_type,
                &scene.prompt,
            ),
            trace: Trace::default(),
            clock: self.config.record_timing.then(Instant::now),
        };
        match run.execute(scene, self.backend.as_ref()) {
            Ok(parts) => Ok(Synthesis { trace: run.trace, ..parts }),
            Err(kind) => {
                run.flush_exchanges(None);
                Err(PipelineError { kind, trace: run.trace })
            }
        }
    }

    /// Runs scenes on up to `jobs` threads; results keep the input order.
    pub fn synthesize_many(&self, scenes: &[Scene], jobs: usize) -> Vec<Result<Synthesis, PipelineError>> {
        let jobs = jobs.clamp(1, scenes.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Synthesis, PipelineError>>>> =
            Mutex::new((0..scenes.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= scenes.len() {
                        break;
                    }
                    let r = self.synthesize(&scenes[i]);
                    slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .into_iter()
            .map(|r| r.expect("every scene was run"))
            .collect()
    }
}

struct Run<'a> {
    config: &'a PipelineConfig,
    agents: Agents<'a>,
    trace: Trace,
    clock: Option<Instant>,
}

impl Run<'_> {
    fn flush_exchanges(&mut self, group: Option<usize>) {
        let exchanges = self.agents.take_exchanges();
        if self.config.log_exchanges {
            for exchange in exchanges {
                self.trace.push(TraceEvent::Exchange { group, exchange });
            }
        }
    }

    fn execute(&mut self, scene: &Scene, backend: &dyn AgentBackend) -> Result<Synthesis, PipelineErrorKind> {
        if scene.assets.is_empty() {
            return Err(PipelineErrorKind::Precondition("scene has no assets".into()));
        }
        let config = self.config;
        let grid = build_grid(&scene.room, config.grid_spacing)?;
        self.trace.push(TraceEvent::Start {
            room_type: scene.room_type.clone(),
            prompt: scene.prompt.clone(),
            room: scene.room,
            assets: scene.assets.iter().map(TraceAsset::from_spec).collect(),
            backend: backend.identity(),
            seed: config.seed,
            max_semantic_rounds: config.max_semantic_rounds,
            grid_spacing: config.grid_spacing,
        });

        let planned = self.agents.plan(&scene.room_type, &scene.assets);
        self.flush_exchanges(None);
        let (plan, constraints) = planned?;
        self.trace.push(TraceEvent::Plan {
            groups: plan.groups.clone(),
            constraints: constraints.clone(),
        });

        let mut committed = Layout::empty(scene.room);
        let mut group_layouts = Vec::with_capacity(plan.groups.len());
        let mut deleted: Vec<String> = Vec::new();
        let (mut checked, mut flagged) = (0usize, 0usize);

        for (i, group) in plan.groups.iter().enumerate() {
            let k = i + 1;
            let designed = self.agents.design(group, &scene.assets, &constraints, &committed);
            self.flush_exchanges(Some(k));
            let proposal: BTreeMap<_, _> = designed?;
            self.trace.push(TraceEvent::Design {
                group: k,
                members: group.clone(),
                proposal: proposal.iter().map(|(n, p)| LayoutEntry::new(n, *p)).collect(),
            });
            let mut layout = integrate_group(&committed, &proposal, &scene.assets)?;

            let questions = group_questions(group, &constraints, &layout);
            checked += questions.len();
            let mut verdict = self.evaluate(k, 0, &layout, &constraints, &questions)?;
            let mut round = 0;
            while verdict.s_sem && round < config.max_semantic_rounds {
                round += 1;
                let refined = self.agents.semantic_refine(&layout, &constraints, &verdict.failed_semantic);
                self.flush_exchanges(Some(k));
                let refined = refined?;
                self.trace.push(TraceEvent::SemanticRefine {
                    group: k,
                    round,
                    changes: changed_entries(&layout, &refined),
                });
                layout = refined;
                verdict = self.evaluate(k, round, &layout, &constraints, &questions)?;
            }
            let unresolved = if verdict.s_sem {
                verdict.failed_semantic.clone()
            } else {
                Vec::new()
            };
            flagged += unresolved.len();

            // The deterministic check backs up the evaluator's physical flag.
            if verdict.s_phy || !invalid_objects(&layout, &constraints).is_empty() {
                let (refined, report) = refine(&layout, &constraints, &grid);
                deleted.extend(report.deleted_names().into_iter().map(str::to_string));
                self.trace.push(TraceEvent::PhysicalRefine {
                    group: k,
                    flagged_by_evaluator: verdict.s_phy,
                    report,
                });
                layout = refined;
            }

            self.trace.push(TraceEvent::Commit {
                group: k,
                unresolved,
                layout: LayoutEntry::from_layout(&layout),
                render: group_render_suffix(k),
                elapsed_ms: elapsed(self.clock),
            });
            committed = layout;
            group_layouts.push(committed.clone());
        }

        let score = score_scene(&committed, &constraints, &config.relations, deleted.len());
        self.trace.push(TraceEvent::Finish {
            layout: LayoutEntry::from_layout(&committed),
            score: score.clone(),
            deleted: deleted.clone(),
            flagged,
            checked,
            elapsed_ms: elapsed(self.clock),
        });
        Ok(Synthesis {
            layout: committed,
            trace: Trace::default(),
            score,
            plan,
            constraints,
            group_layouts,
            deleted,
            checked,
            flagged,
        })
    }

    fn evaluate(
        &mut self,
        k: usize,
        round: u32,
        layout: &Layout,
        constraints: &[ConstraintSet],
        questions: &[(String, ConstraintCheck)],
    ) -> Result<crate::agents::EvalVerdict, PipelineErrorKind> {
        let verdict = self.agents.evaluate(layout, constraints, questions);
        self.flush_exchanges(Some(k));
        let verdict = verdict?;
        self.trace.push(TraceEvent::Evaluate {
            group: k,
            round,
            questions: questions.len(),
            verdict: verdict.clone(),
        });
        Ok(verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{footprint, iou, outside_area};
    use crate::scene::{AssetSpec, Room};

    fn bedroom() -> Scene {
        let assets = vec![
            AssetSpec::new("bed-0", 160.0, 200.0, 50.0).unwrap(),
            AssetSpec::new("nightstand-0", 50.0, 40.0, 55.0).unwrap(),
            AssetSpec::new("nightstand-1", 50.0, 40.0, 55.0).unwrap(),
            AssetSpec::new("wardrobe-0", 120.0, 60.0, 200.0).unwrap(),
        ];
        Scene::new("bedroom", "a cozy bedroom", Room::new(400.0, 350.0).unwrap(), assets).unwrap()
    }

    fn pipeline(seed: u64) -> Pipeline {
        Pipeline::from_config(PipelineConfig {
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn assert_physically_valid(layout: &Layout) {
        let items: Vec<_> = layout.iter().map(|(_, p)| footprint(&p.asset, p.pose)).collect();
        for (i, a) in items.iter().enumerate() {
            assert_eq!(outside_area(a, layout.room()), 0.0);
            for b in &items[i + 1..] {
                assert_eq!(iou(a, b), 0.0);
            }
        }
    }

    #[test]
    fn four_asset_bedroom_is_valid_and_has_one_commit_per_group() {
        let out = pipeline(7).synthesize(&bedroom()).unwrap();
        assert_eq!(out.score.collision_rate, 0.0);
        assert_eq!(out.score.oob_rate, 0.0);
        assert_physically_valid(&out.layout);
        let commits = out
            .trace
            .events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Commit { .. }))
            .count();
        assert_eq!(commits, out.plan.groups.len());
        assert_eq!(out.group_layouts.len(), out.plan.groups.len());
    }

    #[test]
    fn single_asset_runs_one_group() {
        let scene = Scene::new(
            "bedroom",
            "",
            Room::new(300.0, 300.0).unwrap(),
            vec![AssetSpec::new("bed-0", 160.0, 200.0, 50.0).unwrap()],
        )
        .unwrap();
        let out = pipeline(1).synthesize(&scene).unwrap();
        assert_eq!(out.plan.groups.len(), 1);
        assert_eq!(out.layout.len() + out.deleted.len(), 1);
    }

    #[test]
    fn replay_reproduces_the_final_layout() {
        let out = pipeline(3).synthesize(&bedroom()).unwrap();
        let text = out.trace.to_ndjson();
        let parsed = Trace::parse_ndjson(&text).unwrap();
        assert_eq!(parsed, out.trace);
        assert_eq!(replay(&parsed).unwrap(), out.layout);
    }

    #[test]
    fn truncated_trace_names_the_missing_event() {
        let out = pipeline(3).synthesize(&bedroom()).unwrap();
        let mut events = out.trace.events.clone();
        events.pop();
        let err = replay(&Trace { events }).unwrap_err();
        assert!(err.to_string().contains("finish event"), "{err}");

        let cut = out
            .trace
            .events
            .iter()
            .position(|e| matches!(e, TraceEvent::Commit { .. }))
            .unwrap();
        let err = replay(&Trace {
            events: out.trace.events[..cut].to_vec(),
        })
        .unwrap_err();
        assert!(err.to_string().contains("commit event for group 1"), "{err}");

        let err = replay(&Trace::default()).unwrap_err();
        assert!(err.to_string().contains("start event"), "{err}");
    }

    #[test]
    fn runs_are_deterministic_and_batch_order_is_stable() {
        let p = pipeline(11);
        let a = p.synthesize(&bedroom()).unwrap();
        let b = p.synthesize(&bedroom()).unwrap();
        assert_eq!(a.trace.to_ndjson(), b.trace.to_ndjson());
        let many = p.synthesize_many(&[bedroom(), bedroom(), bedroom()], 3);
        for r in many {
            assert_eq!(r.unwrap().trace.to_ndjson(), a.trace.to_ndjson());
        }
    }

    #[test]
    fn exhausted_rounds_are_flagged_and_physical_pass_still_runs() {
        // One round with a designer that always misses and a refiner that
        // cannot fix anything: the failing constraint must be flagged.
        let config = PipelineConfig {
            max_semantic_rounds: 1,
            ..Default::default()
        };
        let p = Pipeline::with_backend(config, Box::new(StubbornBackend)).unwrap();
        let scene = Scene::new(
            "living room",
            "",
            Room::new(500.0, 400.0).unwrap(),
            vec![
                AssetSpec::new("sofa-0", 200.0, 90.0, 80.0).unwrap(),
                AssetSpec::new("coffee table-0", 100.0, 60.0, 45.0).unwrap(),
            ],
        )
        .unwrap();
        let out = p.synthesize(&scene).unwrap();
        assert_eq!(out.flagged, 1);
        assert_eq!(out.trace.unresolved().len(), 1);
        assert!(out
            .trace
            .events
            .iter()
            .any(|e| matches!(e, TraceEvent::PhysicalRefine { .. })));
        assert_physically_valid(&out.layout);
        assert_eq!(replay(&out.trace).unwrap(), out.layout);
    }

    #[test]
    fn backend_failure_keeps_the_partial_trace() {
        let p = Pipeline::with_backend(PipelineConfig::default(), Box::new(FailingBackend)).unwrap();
        let err = p.synthesize(&bedroom()).unwrap_err();
        assert!(matches!(err.kind, PipelineErrorKind::Agent(AgentError::Backend { .. })));
        assert_eq!(err.trace.events[0].name(), "start");
        assert!(err.trace.events.iter().any(|e| e.name() == "exchange"));
    }

    struct FailingBackend;

    impl AgentBackend for FailingBackend {
        fn complete(&self, _: &crate::agents::Request) -> Result<String, BackendError> {
            Err(BackendError::Timeout)
        }
        fn identity(&self) -> crate::agents::BackendIdentity {
            crate::agents::BackendIdentity {
                kind: "failing".into(),
                model: "none".into(),
                endpoint: None,
            }
        }
    }

    /// Plans a coffee table in front of a sofa, stacks both on one spot, says
    /// the table is never in front, and "fixes" by changing nothing.
    struct StubbornBackend;

    impl AgentBackend for StubbornBackend {
        fn complete(&self, request: &crate::agents::Request) -> Result<String, BackendError> {
            use crate::agents::Task;
            Ok(match &request.task {
                Task::Plan { .. } => r#"{"constraints": [
                    {"object_name": "sofa-0", "against_wall": true},
                    {"object_name": "coffee table-0", "against_wall": false,
                     "relative_position": "in front of", "relative_object": "sofa-0"}],
                   "groups": {"g1": ["sofa-0", "coffee table-0"]}}"#
                    .to_string(),
                Task::Design { .. } => r#"[
                    {"object_name": "sofa-0", "position": {"X": 250, "Y": 200}, "rotation": 0},
                    {"object_name": "coffee table-0", "position": {"X": 250, "Y": 200}, "rotation": 0}]"#
                    .to_string(),
                Task::EvaluateSemantic { .. } => r#"[{"question": 1, "answer": "no", "reason": "behind"}]"#.to_string(),
                Task::EvaluatePhysical { .. } => "False".to_string(),
                Task::SemanticRefine { layout, .. } => {
                    let entries = LayoutEntry::from_layout(layout);
                    serde_json::to_string(&entries).unwrap()
                }
            })
        }
        fn identity(&self) -> crate::agents::BackendIdentity {
            crate::agents::BackendIdentity {
                kind: "stub".into(),
                model: "stubborn".into(),
                endpoint: None,
            }
        }
        fn wants_images(&self) -> bool {
            false
        }
    }
}
