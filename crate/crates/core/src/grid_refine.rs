//! Grid-matching physical repair.
//!
//! The floor is discretized into a uniform grid plus per-wall point rows.
//! Invalid objects are moved to the nearest grid point at which they are
//! collision free, inside the room and, for wall-bound objects, flush with a
//! wall. Three phases run in a fixed order: wall alignment, out-of-bounds
//! correction, collision resolution. An object with no valid grid point left
//! is removed and reported.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    back_center, back_gap, footprint, iou, nearest_wall, outside_area, pull_to_wall, wall2rotation,
    Point, Rect, WallId,
};
use crate::scene::{is_against_wall, AssetSpec, ConstraintSet, Layout, Pose};

/// Tolerance for the flush-with-wall test, in cm.
pub const WALL_FLUSH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid spacing must be positive and at most the room's shorter side ({max}), got {spacing}")]
    BadSpacing { spacing: f64, max: f64 },
}

/// Candidate positions for repair moves.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub spacing: f64,
    /// Points strictly inside the room at multiples of `spacing`.
    pub interior: Vec<Point>,
    /// Points on each wall segment at multiples of `spacing`, starting at the origin-side corner.
    pub per_wall: BTreeMap<WallId, Vec<Point>>,
}

pub fn build_grid(room: &crate::scene::Room, spacing: f64) -> Result<GridSet, GridError> {
    let max = room.width.min(room.depth);
    if !(spacing.is_finite() && spacing > 0.0 && spacing <= max) {
        return Err(GridError::BadSpacing { spacing, max });
    }
    let strictly_inside = |extent: f64| -> Vec<f64> {
        (1..)
            .map(|k| k as f64 * spacing)
            .take_while(|v| *v < extent)
            .collect()
    };
    let along = |extent: f64| -> Vec<f64> {
        (0..)
            .map(|k| k as f64 * spacing)
            .take_while(|v| *v <= extent)
            .collect()
    };
    let xs = strictly_inside(room.width);
    let ys = strictly_inside(room.depth);
    let mut interior = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            interior.push(Point::new(x, y));
        }
    }
    let mut per_wall = BTreeMap::new();
    per_wall.insert(
        WallId::Bottom,
        along(room.width).into_iter().map(|x| Point::new(x, 0.0)).collect(),
    );
    per_wall.insert(
        WallId::Top,
        along(room.width)
            .into_iter()
            .map(|x| Point::new(x, room.depth))
            .collect(),
    );
    per_wall.insert(
        WallId::Left,
        along(room.depth).into_iter().map(|y| Point::new(0.0, y)).collect(),
    );
    per_wall.insert(
        WallId::Right,
        along(room.depth)
            .into_iter()
            .map(|y| Point::new(room.width, y))
            .collect(),
    );
    Ok(GridSet {
        spacing,
        interior,
        per_wall,
    })
}

/// Per-criterion result of the physical validity test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    pub collision_free: bool,
    pub contained: bool,
    /// Always true for objects without the against-wall rule.
    pub wall_aligned: bool,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        self.collision_free && self.contained && self.wall_aligned
    }
}

/// Back face flush with the wall behind it, which means facing into the room.
pub fn is_wall_aligned(asset: &AssetSpec, pose: Pose, room: &crate::scene::Room) -> bool {
    back_gap(asset, pose, room).abs() <= WALL_FLUSH_TOL
}

/// Checks `asset` at `pose` against every other object in `layout`.
pub fn placement_validity(asset: &AssetSpec, pose: Pose, layout: &Layout, against_wall: bool) -> Validity {
    let room = layout.room();
    let rect = footprint(asset, pose);
    let collision_free = layout
        .iter()
        .filter(|(name, _)| *name != asset.object_name)
        .all(|(_, other)| iou(&rect, &footprint(&other.asset, other.pose)) == 0.0);
    Validity {
        collision_free,
        contained: Rect::room(room).contains_rect(&rect),
        wall_aligned: !against_wall || is_wall_aligned(asset, pose, room),
    }
}

pub fn is_valid_placement(asset: &AssetSpec, pose: Pose, layout: &Layout, against_wall: bool) -> bool {
    placement_validity(asset, pose, layout, against_wall).is_valid()
}

/// Names of objects that fail any physical criterion.
pub fn invalid_objects(layout: &Layout, constraints: &[ConstraintSet]) -> Vec<String> {
    layout
        .iter()
        .filter(|(name, p)| !is_valid_placement(&p.asset, p.pose, layout, is_against_wall(constraints, name)))
        .map(|(name, _)| name.to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveReason {
    Wall,
    Oob,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Move {
    /// Position of this event among all moves and deletions.
    pub seq: usize,
    pub object_name: String,
    pub from: Pose,
    pub to: Pose,
    pub reason: MoveReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deletion {
    pub seq: usize,
    pub object_name: String,
    pub reason: MoveReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub moved: Vec<Move>,
    pub deleted: Vec<Deletion>,
    pub grid_points_scanned: usize,
}

impl RefineReport {
    pub fn is_empty(&self) -> bool {
        self.moved.is_empty() && self.deleted.is_empty()
    }

    pub fn deleted_names(&self) -> Vec<&str> {
        self.deleted.iter().map(|d| d.object_name.as_str()).collect()
    }

    /// Moves and deletions in execution order.
    pub fn events(&self) -> Vec<RefineEvent<'_>> {
        let mut out: Vec<RefineEvent<'_>> = self
            .moved
            .iter()
            .map(RefineEvent::Move)
            .chain(self.deleted.iter().map(RefineEvent::Delete))
            .collect();
        out.sort_by_key(|e| e.seq());
        out
    }

    /// Re-applies the recorded events to `layout`.
    pub fn apply(&self, layout: &mut Layout) -> Result<(), crate::scene::SceneError> {
        for event in self.events() {
            match event {
                RefineEvent::Move(m) => layout.set_pose(&m.object_name, m.to)?,
                RefineEvent::Delete(d) => {
                    layout
                        .remove(&d.object_name)
                        .ok_or_else(|| crate::scene::SceneError::UnknownAsset(d.object_name.clone()))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefineEvent<'a> {
    Move(&'a Move),
    Delete(&'a Deletion),
}

impl RefineEvent<'_> {
    pub fn seq(&self) -> usize {
        match self {
            RefineEvent::Move(m) => m.seq,
            RefineEvent::Delete(d) => d.seq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    WallAlignment,
    OutOfBounds,
    Collision,
}

/// Orders candidates by squared distance, then grid y, then grid x.
fn candidate_order(origin: Point) -> impl Fn(&Point, &Point) -> Ordering {
    move |a, b| {
        origin
            .distance_sq(*a)
            .total_cmp(&origin.distance_sq(*b))
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    }
}

struct Refiner<'a> {
    layout: Layout,
    constraints: &'a [ConstraintSet],
    grid: &'a GridSet,
    report: RefineReport,
    seq: usize,
}

impl Refiner<'_> {
    fn against_wall(&self, name: &str) -> bool {
        is_against_wall(self.constraints, name)
    }

    /// Nearest valid pose on the grid for `name` at rotation `pose.theta`.
    ///
    /// Wall-bound objects search the points of the wall behind them and are
    /// pulled flush; others search the interior grid with their center.
    fn nearest_valid(&mut self, name: &str, pose: Pose) -> Option<Pose> {
        let asset = self.layout.get(name)?.asset.clone();
        let against_wall = self.against_wall(name);
        let (origin, points) = if against_wall {
            let wall = WallId::behind(pose.theta);
            (back_center(&asset, pose), &self.grid.per_wall[&wall])
        } else {
            (Point::new(pose.x, pose.y), &self.grid.interior)
        };
        let mut sorted: Vec<Point> = points.clone();
        sorted.sort_by(candidate_order(origin));
        for g in sorted {
            self.report.grid_points_scanned += 1;
            let candidate = if against_wall {
                pull_to_wall(g, &asset, pose)
            } else {
                Pose::new(g.x, g.y, pose.theta)
            };
            if is_valid_placement(&asset, candidate, &self.layout, against_wall) {
                return Some(candidate);
            }
        }
        None
    }

    fn relocate(&mut self, name: &str, seed_pose: Pose, reason: MoveReason) {
        let from = match self.layout.pose(name) {
            Some(p) => p,
            None => return,
        };
        match self.nearest_valid(name, seed_pose) {
            Some(to) => {
                self.layout.set_pose(name, to).expect("object is placed");
                self.report.moved.push(Move {
                    seq: self.seq,
                    object_name: name.to_string(),
                    from,
                    to,
                    reason,
                });
            }
            None => {
                self.layout.remove(name);
                self.report.deleted.push(Deletion {
                    seq: self.seq,
                    object_name: name.to_string(),
                    reason,
                });
            }
        }
        self.seq += 1;
    }

    fn align_walls(&mut self) {
        let names: Vec<String> = self.layout.names().map(str::to_string).collect();
        for name in names {
            if !self.against_wall(&name) {
                continue;
            }
            let Some(p) = self.layout.get(&name) else { continue };
            let room = *self.layout.room();
            if is_wall_aligned(&p.asset, p.pose, &room) {
                continue;
            }
            let (wall, _) = nearest_wall(Point::new(p.pose.x, p.pose.y), &room);
            let turned = Pose::new(p.pose.x, p.pose.y, wall2rotation(wall));
            self.relocate(&name, turned, MoveReason::Wall);
        }
    }

    fn correct_out_of_bounds(&mut self) {
        let room = *self.layout.room();
        let oob: Vec<String> = self
            .layout
            .iter()
            .filter(|(_, p)| outside_area(&footprint(&p.asset, p.pose), &room) > 0.0)
            .map(|(n, _)| n.to_string())
            .collect();
        for name in oob {
            if let Some(pose) = self.layout.pose(&name) {
                self.relocate(&name, pose, MoveReason::Oob);
            }
        }
    }

    fn collision_pairs(&self) -> Vec<(f64, String, String)> {
        let items: Vec<(&str, Rect)> = self
            .layout
            .iter()
            .map(|(n, p)| (n, footprint(&p.asset, p.pose)))
            .collect();
        let mut pairs = Vec::new();
        for (i, (na, ra)) in items.iter().enumerate() {
            for (nb, rb) in &items[i + 1..] {
                let v = iou(ra, rb);
                if v > 0.0 {
                    pairs.push((v, na.to_string(), nb.to_string()));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| (&a.1, &a.2).cmp(&(&b.1, &b.2))));
        pairs
    }

    fn resolve_collisions(&mut self) {
        // Each step moves one object to a collision-free spot or removes it,
        // so the number of colliding pairs strictly decreases.
        loop {
            let pairs = self.collision_pairs();
            let Some((_, a, b)) = pairs.into_iter().next() else { break };
            let area = |n: &str| self.layout.get(n).map(|p| p.asset.footprint_area()).unwrap_or(0.0);
            let smaller = match area(&a).total_cmp(&area(&b)) {
                Ordering::Less => a,
                Ordering::Greater => b,
                Ordering::Equal => a.max(b),
            };
            let pose = self.layout.pose(&smaller).expect("pair member is placed");
            self.relocate(&smaller, pose, MoveReason::Collision);
        }
    }
}

/// Repairs `layout`, returning the result and a record of every change.
pub fn refine(layout: &Layout, constraints: &[ConstraintSet], grid: &GridSet) -> (Layout, RefineReport) {
    refine_with_hook(layout, constraints, grid, |_, _| {})
}

/// [`refine`] with a callback invoked after each phase.
pub fn refine_with_hook(
    layout: &Layout,
    constraints: &[ConstraintSet],
    grid: &GridSet,
    mut hook: impl FnMut(Phase, &Layout),
) -> (Layout, RefineReport) {
    let mut r = Refiner {
        layout: layout.clone(),
        constraints,
        grid,
        report: RefineReport::default(),
        seq: 0,
    };
    r.align_walls();
    hook(Phase::WallAlignment, &r.layout);
    r.correct_out_of_bounds();
    hook(Phase::OutOfBounds, &r.layout);
    r.resolve_collisions();
    hook(Phase::Collision, &r.layout);
    (r.layout, r.report)
}
