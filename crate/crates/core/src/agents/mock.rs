//! Deterministic offline backend.
//!
//! Replies are computed from the structured [`Task`] and rendered as model
//! text (fenced JSON, "True"/"False"), so they travel through the same parser
//! as replies from a real model.
//!
//! Designer heuristic: against-wall objects go flush on the wall with the
//! longest free run, or next to their relation target; related objects take
//! the grid point nearest their target that satisfies the relation; the rest
//! spiral out from the room center. A seeded jitter then perturbs positions
//! and occasionally rotations, so the refinement tools have work to do.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{AgentBackend, BackendError, BackendIdentity, Request, Task};
use crate::catalog;
use crate::geometry::{pull_to_wall, wall2rotation, Point, WallId};
use crate::grid_refine::{build_grid, invalid_objects, is_valid_placement, GridSet};
use crate::relations::{
    eval_check, is_checkable, rotation_toward, ConstraintCheck, FailedConstraint, RelationParams,
};
use crate::scene::{
    category_of, AssetSpec, ConstraintSet, Layout, LayoutEntry, Pose, Relation, Rotation, SizeDoc,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockOptions {
    /// Probability that a designed object gets a position offset.
    pub jitter_rate: f64,
    /// Largest offset per axis, in whole cm.
    pub jitter_cm: u32,
    /// Probability that a designed object gets a wrong quarter turn.
    pub rotation_error_rate: f64,
    /// Grid spacing for the designer and refiner searches, in cm.
    pub search_spacing: f64,
    /// Wrap JSON replies in markdown fences like chat models tend to.
    pub fenced_replies: bool,
}

impl Default for MockOptions {
    fn default() -> Self {
        Self {
            jitter_rate: 0.5,
            jitter_cm: 20,
            rotation_error_rate: 0.1,
            search_spacing: 10.0,
            fenced_replies: true,
        }
    }
}

impl MockOptions {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("jitter_rate", self.jitter_rate), ("rotation_error_rate", self.rotation_error_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("mock {name} must be within [0, 1], got {p}"));
            }
        }
        if !(self.search_spacing.is_finite() && self.search_spacing > 0.0) {
            return Err("mock search_spacing must be positive".into());
        }
        Ok(())
    }
}

/// Offline backend. Identical inputs and seed give identical replies, even
/// across threads.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    options: MockOptions,
    params: RelationParams,
}

impl MockBackend {
    pub fn new(seed: u64, options: MockOptions, params: RelationParams) -> Self {
        Self { seed, options, params }
    }

    fn rng_for(&self, request: &Request) -> ChaCha8Rng {
        // FNV-1a over the prompt text keys the stream to the request content.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for m in &request.messages[..1] {
            for b in m.text.bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        ChaCha8Rng::seed_from_u64(self.seed ^ h)
    }

    fn wrap(&self, v: &Value) -> String {
        let body = serde_json::to_string_pretty(v).expect("reply serializes");
        if self.options.fenced_replies {
            format!("```json\n{body}\n```")
        } else {
            body
        }
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(0, MockOptions::default(), RelationParams::default())
    }
}

impl AgentBackend for MockBackend {
    fn complete(&self, request: &Request) -> Result<String, BackendError> {
        Ok(match &request.task {
            Task::Plan { assets, .. } => {
                let (constraints, groups) = mock_plan(assets);
                self.wrap(&planner_json(&constraints, &groups))
            }
            Task::Design {
                group,
                assets,
                constraints,
                layout,
            } => {
                let mut rng = self.rng_for(request);
                let placed = mock_design(group, assets, constraints, layout, &self.options, &self.params, &mut rng);
                self.wrap(&entries_json(&placed, assets))
            }
            Task::EvaluateSemantic {
                layout,
                constraints,
                questions,
            } => {
                let answers: Vec<Value> = questions
                    .iter()
                    .map(|(s, c)| {
                        let ok = eval_check(s, c, layout, constraints, &self.params).unwrap_or(false);
                        json!({
                            "question": c.question(s),
                            "objects": [s, c.target()],
                            "reason": if ok { "the geometric check passes".to_string() } else { c.feedback(s) },
                            "answer": if ok { "yes" } else { "no" },
                        })
                    })
                    .collect();
                self.wrap(&Value::Array(answers))
            }
            Task::EvaluatePhysical { layout, constraints } => {
                if invalid_objects(layout, constraints).is_empty() {
                    "False".to_string()
                } else {
                    "True".to_string()
                }
            }
            Task::SemanticRefine {
                layout,
                constraints,
                failed,
            } => {
                let changed = mock_semantic_refine(layout, constraints, failed, &self.options, &self.params);
                let assets: Vec<AssetSpec> = layout.iter().map(|(_, p)| p.asset.clone()).collect();
                self.wrap(&entries_json(&changed, &assets))
            }
        })
    }

    fn identity(&self) -> BackendIdentity {
        BackendIdentity {
            kind: "mock".into(),
            model: format!("mock-heuristic/seed-{}", self.seed),
            endpoint: None,
        }
    }

    fn wants_images(&self) -> bool {
        false
    }
}

fn entries_json(entries: &[(String, Pose)], assets: &[AssetSpec]) -> Value {
    Value::Array(
        entries
            .iter()
            .map(|(name, pose)| {
                let mut e = LayoutEntry::new(name, *pose);
                if let Some(a) = assets.iter().find(|a| &a.object_name == name) {
                    let size = SizeDoc {
                        x: a.footprint_w,
                        y: a.footprint_d,
                        z: a.height,
                    };
                    e.extra.insert("size".into(), serde_json::to_value(size).expect("size"));
                }
                // Key order as in the designer prompt: name, size, position, rotation.
                let v = serde_json::to_value(&e).expect("entry serializes");
                let mut ordered = Map::new();
                for k in ["object_name", "size", "position", "rotation"] {
                    if let Some(x) = v.get(k) {
                        ordered.insert(k.into(), x.clone());
                    }
                }
                Value::Object(ordered)
            })
            .collect(),
    )
}

fn planner_json(constraints: &[ConstraintSet], groups: &[Vec<String>]) -> Value {
    let mut cmap = Map::new();
    for c in constraints {
        let (rp, ro) = if c.relations.is_empty() {
            (Value::Null, Value::Null)
        } else {
            (
                c.relations.iter().map(|r| Value::from(r.kind.as_str().replace('_', " "))).collect(),
                c.relations.iter().map(|r| Value::from(r.target.clone())).collect(),
            )
        };
        cmap.insert(
            c.subject.clone(),
            json!({
                "against_wall": c.against_wall,
                "relative_position": rp,
                "relative_object": ro,
                "rotation": c.facing,
            }),
        );
    }
    let mut gmap = Map::new();
    for (i, g) in groups.iter().enumerate() {
        gmap.insert(format!("group{}", i + 1), json!(g));
    }
    json!({"constraints": cmap, "groups": gmap})
}

/// Numeric instance suffix, for ordering "chair-2" before "chair-10".
fn instance_index(name: &str) -> u64 {
    name.rsplit_once('-')
        .and_then(|(_, n)| n.parse().ok())
        .unwrap_or(0)
}

/// Catalog-driven constraints and groups.
pub fn mock_plan(assets: &[AssetSpec]) -> (Vec<ConstraintSet>, Vec<Vec<String>>) {
    let mut by_category: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in assets {
        by_category.entry(a.category()).or_default().push(&a.object_name);
    }
    for names in by_category.values_mut() {
        names.sort_by_key(|n| (instance_index(n), n.to_string()));
    }

    // Resolves an anchor category list to a concrete target for `name`.
    let resolve = |name: &str, anchors: &[&str]| -> Option<String> {
        let own = category_of(name);
        let own_rank = by_category[own].iter().position(|n| *n == name).unwrap_or(0);
        for anchor in anchors {
            let Some(instances) = by_category.get(anchor) else { continue };
            if *anchor == own {
                // Same-category anchors point at the first instance, which has none itself.
                if instances[0] != name {
                    return Some(instances[0].to_string());
                }
                continue;
            }
            return Some(instances[own_rank % instances.len()].to_string());
        }
        None
    };

    let mut constraints = Vec::with_capacity(assets.len());
    for a in assets {
        let name = a.object_name.as_str();
        let mut c = ConstraintSet::free(name);
        match catalog::lookup(a.category()) {
            Some(entry) => {
                c.against_wall = entry.against_wall;
                if let Some((kind, anchors)) = entry.relation {
                    if let Some(t) = resolve(name, anchors) {
                        c.relations.push(Relation { kind, target: t });
                    }
                }
                if let (false, Some(anchors)) = (entry.against_wall, entry.facing) {
                    c.facing = resolve(name, anchors);
                }
            }
            None => c.against_wall = a.footprint_area() >= 5000.0,
        }
        constraints.push(c);
    }

    // Group every object with the root of its relation chain.
    let parent = |n: &str| -> Option<&str> {
        constraints
            .iter()
            .find(|c| c.subject == n)
            .and_then(|c| c.relations.first())
            .map(|r| r.target.as_str())
    };
    let root_of = |n: &str| -> (String, usize) {
        let mut cur = n;
        let mut depth = 0;
        let mut seen = vec![n];
        while let Some(p) = parent(cur) {
            if seen.contains(&p) {
                break;
            }
            seen.push(p);
            cur = p;
            depth += 1;
        }
        (cur.to_string(), depth)
    };
    let mut groups: BTreeMap<String, Vec<(usize, usize, String)>> = BTreeMap::new();
    for (i, a) in assets.iter().enumerate() {
        let (root, depth) = root_of(&a.object_name);
        groups.entry(root).or_default().push((depth, i, a.object_name.clone()));
    }
    let area = |n: &str| assets.iter().find(|a| a.object_name == n).map(|a| a.footprint_area()).unwrap_or(0.0);
    let mut ordered: Vec<(String, Vec<(usize, usize, String)>)> = groups.into_iter().collect();
    ordered.sort_by(|a, b| area(&b.0).total_cmp(&area(&a.0)).then_with(|| a.0.cmp(&b.0)));
    let groups = ordered
        .into_iter()
        .map(|(_, mut members)| {
            members.sort();
            members.into_iter().map(|(_, _, n)| n).collect()
        })
        .collect();
    (constraints, groups)
}

/// Flush, inward-facing poses along every wall, in canonical wall order.
fn wall_poses(asset: &AssetSpec, grid: &GridSet) -> Vec<(WallId, Pose)> {
    let mut out = Vec::new();
    for wall in WallId::ALL {
        let theta = wall2rotation(wall);
        for g in &grid.per_wall[&wall] {
            out.push((wall, pull_to_wall(*g, asset, Pose::new(g.x, g.y, theta))));
        }
    }
    out
}

fn center_of(layout: &Layout, name: &str) -> Option<Point> {
    layout.pose(name).map(|p| Point::new(p.x, p.y))
}

fn by_distance(points: &mut [Pose], origin: Point) {
    points.sort_by(|a, b| {
        origin
            .distance_sq(Point::new(a.x, a.y))
            .total_cmp(&origin.distance_sq(Point::new(b.x, b.y)))
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
}

/// Scratch layout holding every placed object plus `asset` at a movable pose.
struct Probe {
    layout: Layout,
    name: String,
}

impl Probe {
    fn new(base: &Layout, asset: &AssetSpec) -> Self {
        let mut layout = base.clone();
        let pose = Pose::new(0.0, 0.0, Rotation::Deg0);
        if layout.contains(&asset.object_name) {
            layout.set_pose(&asset.object_name, pose).expect("placed");
        } else {
            layout.insert(asset.clone(), pose).expect("fresh name");
        }
        Self {
            layout,
            name: asset.object_name.clone(),
        }
    }

    fn satisfies(&mut self, pose: Pose, checks: &[ConstraintCheck], constraints: &[ConstraintSet], params: &RelationParams) -> bool {
        self.layout.set_pose(&self.name, pose).expect("probe is placed");
        checks.iter().all(|c| {
            is_checkable(&self.layout, &self.name, c)
                && eval_check(&self.name, c, &self.layout, constraints, params).unwrap_or(false)
        })
    }
}

fn relation_checks(c: &ConstraintSet, layout: &Layout) -> Vec<ConstraintCheck> {
    c.relations
        .iter()
        .filter(|r| layout.contains(&r.target))
        .map(|r| ConstraintCheck::Relation {
            kind: r.kind,
            target: r.target.clone(),
        })
        .collect()
}

/// Rotation for a free object standing at `at`.
fn free_rotation(at: Point, c: &ConstraintSet, layout: &Layout, fallback: Rotation) -> Rotation {
    if let Some(t) = c.facing.as_deref().and_then(|t| center_of(layout, t)) {
        if t != at {
            return rotation_toward(at, t);
        }
    }
    fallback
}

/// Middle pose of the longest run of consecutive valid wall poses.
fn longest_free_run(cands: &[(WallId, Pose)], valid: &[bool]) -> Option<Pose> {
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < cands.len() {
        if !valid[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < cands.len() && valid[i + 1] && cands[i + 1].0 == cands[start].0 {
            i += 1;
        }
        let len = i - start + 1;
        if best.is_none_or(|(_, l)| len > l) {
            best = Some((start, len));
        }
        i += 1;
    }
    best.map(|(s, len)| cands[s + (len - 1) / 2].1)
}

fn choose_pose(
    asset: &AssetSpec,
    c: &ConstraintSet,
    layout: &Layout,
    constraints: &[ConstraintSet],
    grid: &GridSet,
    params: &RelationParams,
) -> Pose {
    let room = layout.room();
    let checks = relation_checks(c, layout);
    let anchor = c.relations.iter().find_map(|r| center_of(layout, &r.target));
    let mut probe = Probe::new(layout, asset);

    if c.against_wall {
        let cands = wall_poses(asset, grid);
        let valid: Vec<bool> = cands
            .iter()
            .map(|(_, p)| is_valid_placement(asset, *p, layout, true))
            .collect();
        if let Some(anchor) = anchor {
            let mut ok: Vec<Pose> = cands.iter().zip(&valid).filter(|(_, v)| **v).map(|(c, _)| c.1).collect();
            by_distance(&mut ok, anchor);
            if let Some(p) = ok.iter().find(|p| probe.satisfies(**p, &checks, constraints, params)) {
                return *p;
            }
            if let Some(p) = ok.first() {
                return *p;
            }
        } else if let Some(p) = longest_free_run(&cands, &valid) {
            return p;
        }
    } else {
        let fallback = anchor
            .and_then(|_| c.relations.first())
            .and_then(|r| layout.pose(&r.target))
            .map(|p| p.theta)
            .unwrap_or(Rotation::Deg0);
        let poses: Vec<Pose> = grid
            .interior
            .iter()
            .map(|g| Pose::new(g.x, g.y, free_rotation(*g, c, layout, fallback)))
            .collect();
        let valid = |p: &Pose| is_valid_placement(asset, *p, layout, false);
        if let Some(anchor) = anchor {
            let mut sorted = poses.clone();
            by_distance(&mut sorted, anchor);
            if let Some(p) = sorted
                .iter()
                .find(|p| valid(p) && probe.satisfies(**p, &checks, constraints, params))
            {
                return *p;
            }
            if let Some(p) = sorted.iter().find(|p| valid(p)) {
                return *p;
            }
        }
        let (cx, cy) = room.center();
        let mut sorted = poses;
        by_distance(&mut sorted, Point::new(cx, cy));
        if let Some(p) = sorted.iter().find(|p| valid(p)) {
            return *p;
        }
    }
    let (cx, cy) = room.center();
    Pose::new(cx.round(), cy.round(), Rotation::Deg0)
}

fn jitter(pose: Pose, options: &MockOptions, rng: &mut ChaCha8Rng) -> Pose {
    let mut p = pose;
    if options.jitter_cm > 0 && rng.random_bool(options.jitter_rate) {
        let j = i64::from(options.jitter_cm);
        p.x += rng.random_range(-j..=j) as f64;
        p.y += rng.random_range(-j..=j) as f64;
    }
    if rng.random_bool(options.rotation_error_rate) {
        p.theta = p.theta.turned(rng.random_range(1..=3));
    }
    Pose::new(p.x.round().max(0.0), p.y.round().max(0.0), p.theta)
}

/// Poses for each group member, in group order.
pub fn mock_design(
    group: &[String],
    assets: &[AssetSpec],
    constraints: &[ConstraintSet],
    layout: &Layout,
    options: &MockOptions,
    params: &RelationParams,
    rng: &mut ChaCha8Rng,
) -> Vec<(String, Pose)> {
    let Ok(grid) = build_grid(layout.room(), options.search_spacing.min(layout.room().width.min(layout.room().depth))) else {
        return Vec::new();
    };
    let mut working = layout.clone();
    let mut out = Vec::with_capacity(group.len());
    for name in group {
        let Some(asset) = assets.iter().find(|a| &a.object_name == name) else { continue };
        let c = constraints
            .iter()
            .find(|c| &c.subject == name)
            .cloned()
            .unwrap_or_else(|| ConstraintSet::free(name.as_str()));
        let pose = jitter(choose_pose(asset, &c, &working, constraints, &grid, params), options, rng);
        if working.contains(name) {
            working.set_pose(name, pose).expect("placed");
        } else {
            working.insert(asset.clone(), pose).expect("fresh name");
        }
        out.push((name.clone(), pose));
    }
    out
}

/// Minimal corrections for the failed constraints: facing failures snap the
/// rotation toward the target, relation failures move the subject to the
/// nearest grid point satisfying the relation. Returns only changed objects.
pub fn mock_semantic_refine(
    layout: &Layout,
    constraints: &[ConstraintSet],
    failed: &[FailedConstraint],
    options: &MockOptions,
    params: &RelationParams,
) -> Vec<(String, Pose)> {
    let room = layout.room();
    let Ok(grid) = build_grid(room, options.search_spacing.min(room.width.min(room.depth))) else {
        return Vec::new();
    };
    let mut working = layout.clone();
    for f in failed {
        let Some(placement) = working.get(&f.subject).cloned() else { continue };
        let (asset, current) = (placement.asset, placement.pose);
        let c = constraints
            .iter()
            .find(|c| c.subject == f.subject)
            .cloned()
            .unwrap_or_else(|| ConstraintSet::free(f.subject.as_str()));
        let here = Point::new(current.x, current.y);
        let new_pose = match &f.check {
            ConstraintCheck::Facing { target } => match center_of(&working, target) {
                Some(t) if t != here => Some(Pose::new(current.x, current.y, rotation_toward(here, t))),
                _ => None,
            },
            ConstraintCheck::Relation { .. } => {
                relocate_for_relation(&asset, current, &c, &f.check, &working, constraints, &grid, params)
            }
        };
        if let Some(p) = new_pose {
            working.set_pose(&f.subject, p).expect("subject is placed");
        }
    }
    working
        .iter()
        .filter(|(n, p)| layout.pose(n) != Some(p.pose))
        .map(|(n, p)| (n.to_string(), p.pose))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn relocate_for_relation(
    asset: &AssetSpec,
    current: Pose,
    c: &ConstraintSet,
    failed: &ConstraintCheck,
    layout: &Layout,
    constraints: &[ConstraintSet],
    grid: &GridSet,
    params: &RelationParams,
) -> Option<Pose> {
    let mut cands: Vec<Pose> = if c.against_wall {
        wall_poses(asset, grid).into_iter().map(|(_, p)| p).collect()
    } else {
        grid.interior
            .iter()
            .map(|g| Pose::new(g.x, g.y, free_rotation(*g, c, layout, current.theta)))
            .collect()
    };
    by_distance(&mut cands, Point::new(current.x, current.y));
    let mut rest = layout.clone();
    rest.remove(&asset.object_name);
    let mut probe = Probe::new(layout, asset);
    let all = relation_checks(c, layout);
    let only = std::slice::from_ref(failed);
    let valid = |p: &Pose| is_valid_placement(asset, *p, &rest, c.against_wall);
    // Preference: valid and every relation holds, valid and the failed one
    // holds, then the failed one alone.
    cands
        .iter()
        .find(|p| valid(p) && probe.satisfies(**p, &all, constraints, params))
        .or_else(|| cands.iter().find(|p| valid(p) && probe.satisfies(**p, only, constraints, params)))
        .or_else(|| cands.iter().find(|p| probe.satisfies(**p, only, constraints, params)))
        .copied()
}
