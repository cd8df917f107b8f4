//! Newline-delimited JSON event log of one pipeline run, and its replay.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{BackendIdentity, EvalVerdict, Exchange};
use crate::grid_refine::RefineReport;
use crate::metrics::SceneScore;
use crate::relations::FailedConstraint;
use crate::scene::{AssetSpec, ConstraintSet, Layout, LayoutEntry, Room, SceneError, SizeDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAsset {
    pub object_name: String,
    pub size: SizeDoc,
}

impl TraceAsset {
    pub fn from_spec(a: &AssetSpec) -> Self {
        Self {
            object_name: a.object_name.clone(),
            size: SizeDoc {
                x: a.footprint_w,
                y: a.footprint_d,
                z: a.height,
            },
        }
    }

    pub fn to_spec(&self) -> Result<AssetSpec, SceneError> {
        AssetSpec::new(self.object_name.clone(), self.size.x, self.size.y, self.size.z)
    }
}

/// One line of a trace. Groups are numbered from 1 in plan order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Start {
        room_type: String,
        prompt: String,
        room: Room,
        assets: Vec<TraceAsset>,
        backend: BackendIdentity,
        seed: u64,
        max_semantic_rounds: u32,
        grid_spacing: f64,
    },
    Exchange {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group: Option<usize>,
        exchange: Exchange,
    },
    Plan {
        groups: Vec<Vec<String>>,
        constraints: Vec<ConstraintSet>,
    },
    Design {
        group: usize,
        members: Vec<String>,
        proposal: Vec<LayoutEntry>,
    },
    Evaluate {
        group: usize,
        round: u32,
        questions: usize,
        verdict: EvalVerdict,
    },
    SemanticRefine {
        group: usize,
        round: u32,
        /// Entries whose pose changed.
        changes: Vec<LayoutEntry>,
    },
    PhysicalRefine {
        group: usize,
        /// Whether the evaluator raised the physical flag (otherwise the
        /// deterministic validity check forced the pass).
        flagged_by_evaluator: bool,
        report: RefineReport,
    },
    Commit {
        group: usize,
        /// Constraints still failing after the semantic rounds ran out.
        unresolved: Vec<FailedConstraint>,
        layout: Vec<LayoutEntry>,
        /// File-name suffix of this group's render.
        render: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elapsed_ms: Option<u64>,
    },
    Finish {
        layout: Vec<LayoutEntry>,
        score: SceneScore,
        deleted: Vec<String>,
        flagged: usize,
        checked: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elapsed_ms: Option<u64>,
    },
}

impl TraceEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TraceEvent::Start { .. } => "start",
            TraceEvent::Exchange { .. } => "exchange",
            TraceEvent::Plan { .. } => "plan",
            TraceEvent::Design { .. } => "design",
            TraceEvent::Evaluate { .. } => "evaluate",
            TraceEvent::SemanticRefine { .. } => "semantic_refine",
            TraceEvent::PhysicalRefine { .. } => "physical_refine",
            TraceEvent::Commit { .. } => "commit",
            TraceEvent::Finish { .. } => "finish",
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace is missing the {0}")]
    Missing(String),
    #[error("unexpected {event} event: {message}")]
    Unexpected { event: &'static str, message: String },
    #[error("group {group}: replayed layout differs from the recorded snapshot")]
    Diverged { group: usize },
    #[error("replayed final layout differs from the recorded one")]
    FinalDiverged,
    #[error("scene error during replay: {0}")]
    Scene(#[from] SceneError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn parse_ndjson(text: &str) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(line).map_err(|e| TraceError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(e);
        }
        Ok(Self { events })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_ndjson().as_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::parse_ndjson(&std::fs::read_to_string(path)?)
    }

    /// Recorded final layout entries, if the run finished.
    pub fn final_entries(&self) -> Option<&[LayoutEntry]> {
        self.events.iter().rev().find_map(|e| match e {
            TraceEvent::Finish { layout, .. } => Some(layout.as_slice()),
            _ => None,
        })
    }

    /// Constraints flagged as unresolved, with their group.
    pub fn unresolved(&self) -> Vec<(usize, &FailedConstraint)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Commit { group, unresolved, .. } => Some(unresolved.iter().map(move |f| (*group, f))),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

fn unexpected(event: &TraceEvent, message: impl Into<String>) -> TraceError {
    TraceError::Unexpected {
        event: event.name(),
        message: message.into(),
    }
}

fn set_entries(layout: &mut Layout, entries: &[LayoutEntry]) -> Result<(), SceneError> {
    for e in entries {
        layout.set_pose(&e.object_name, e.pose())?;
    }
    Ok(())
}

/// Rebuilds the final layout from the recorded proposals and diffs.
///
/// Every commit snapshot and the final layout are compared exactly with the
/// replayed state.
pub fn replay(trace: &Trace) -> Result<Layout, TraceError> {
    let mut events = trace.events.iter().filter(|e| !matches!(e, TraceEvent::Exchange { .. }));
    let (room, assets) = match events.next() {
        Some(TraceEvent::Start { room, assets, .. }) => {
            let specs: Result<Vec<AssetSpec>, SceneError> = assets.iter().map(TraceAsset::to_spec).collect();
            (*room, specs?)
        }
        Some(other) => return Err(unexpected(other, "trace must open with a start event")),
        None => return Err(TraceError::Missing("start event".into())),
    };
    let groups = match events.next() {
        Some(TraceEvent::Plan { groups, .. }) => groups.clone(),
        Some(other) => return Err(unexpected(other, "expected the plan event after start")),
        None => return Err(TraceError::Missing("plan event".into())),
    };

    let mut committed = Layout::empty(room);
    let mut current: Option<(usize, Layout)> = None;
    let mut next_group = 1;
    for event in events {
        match event {
            TraceEvent::Design { group, proposal, .. } => {
                if current.is_some() || *group != next_group {
                    return Err(unexpected(event, format!("design for group {group} out of order")));
                }
                let poses: BTreeMap<String, _> = proposal.iter().map(|e| (e.object_name.clone(), e.pose())).collect();
                current = Some((*group, crate::scene::integrate_group(&committed, &poses, &assets)?));
            }
            TraceEvent::Evaluate { group, .. } => {
                check_open(&current, *group, event)?;
            }
            TraceEvent::SemanticRefine { group, changes, .. } => {
                let layout = open_layout(&mut current, *group, event)?;
                set_entries(layout, changes)?;
            }
            TraceEvent::PhysicalRefine { group, report, .. } => {
                let layout = open_layout(&mut current, *group, event)?;
                report.apply(layout)?;
            }
            TraceEvent::Commit { group, layout: snapshot, .. } => {
                check_open(&current, *group, event)?;
                let (_, layout) = current.take().expect("checked above");
                if LayoutEntry::from_layout(&layout) != *snapshot {
                    return Err(TraceError::Diverged { group: *group });
                }
                committed = layout;
                next_group += 1;
            }
            TraceEvent::Finish { layout, .. } => {
                if let Some((g, _)) = current {
                    return Err(TraceError::Missing(format!("commit event for group {g}")));
                }
                if next_group <= groups.len() {
                    return Err(TraceError::Missing(format!("design event for group {next_group}")));
                }
                if LayoutEntry::from_layout(&committed) != *layout {
                    return Err(TraceError::FinalDiverged);
                }
                return Ok(committed);
            }
            TraceEvent::Start { .. } | TraceEvent::Plan { .. } => {
                return Err(unexpected(event, "appears more than once"));
            }
            TraceEvent::Exchange { .. } => unreachable!("filtered"),
        }
    }
    Err(TraceError::Missing(match current {
        Some((g, _)) => format!("commit event for group {g}"),
        None if next_group <= groups.len() => format!("design event for group {next_group}"),
        None => "finish event".into(),
    }))
}

fn check_open(current: &Option<(usize, Layout)>, group: usize, event: &TraceEvent) -> Result<(), TraceError> {
    match current {
        Some((g, _)) if *g == group => Ok(()),
        _ => Err(unexpected(event, format!("group {group} has no open design"))),
    }
}

fn open_layout<'a>(
    current: &'a mut Option<(usize, Layout)>,
    group: usize,
    event: &TraceEvent,
) -> Result<&'a mut Layout, TraceError> {
    check_open(current, group, event)?;
    Ok(&mut current.as_mut().expect("checked above").1)
}
