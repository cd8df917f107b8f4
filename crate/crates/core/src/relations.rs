//! Geometric meaning of the six relation words and of "facing".
//!
//! These predicates back the offline evaluator and the semantic proxy scores.
//! Distances for `near` are edge-to-edge; every other test works on centers in
//! an object's local frame (forward = facing direction, right = forward turned
//! a quarter clockwise).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{footprint, Point};
use crate::scene::{ConstraintSet, Layout, Placement, RelationKind, Rotation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationParams {
    pub near_gap_max: f64,
    pub align_tol: f64,
    pub facing_cone_deg: f64,
    pub front_depth_max: f64,
}

impl Default for RelationParams {
    fn default() -> Self {
        Self {
            near_gap_max: 60.0,
            align_tol: 10.0,
            facing_cone_deg: 45.0,
            front_depth_max: 150.0,
        }
    }
}

impl RelationParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("near_gap_max", self.near_gap_max),
            ("align_tol", self.align_tol),
            ("facing_cone_deg", self.facing_cone_deg),
            ("front_depth_max", self.front_depth_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("relation parameter {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelationError {
    #[error("object `{0}` is not placed in the layout")]
    Unplaced(String),
}

/// A single checkable semantic constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintCheck {
    Relation { kind: RelationKind, target: String },
    Facing { target: String },
}

impl ConstraintCheck {
    pub fn target(&self) -> &str {
        match self {
            ConstraintCheck::Relation { target, .. } | ConstraintCheck::Facing { target } => target,
        }
    }

    /// Yes/no question posed to an evaluator.
    pub fn question(&self, subject: &str) -> String {
        match self {
            ConstraintCheck::Relation { kind, target } => {
                format!("Is the {subject} placed {} the {target}?", kind.phrase())
            }
            ConstraintCheck::Facing { target } => format!("Is the {subject} facing the {target}?"),
        }
    }

    /// Feedback sentence for a failed check.
    pub fn feedback(&self, subject: &str) -> String {
        match self {
            ConstraintCheck::Relation { kind, target } => {
                format!("The {subject} is not {} the {target}", kind.phrase())
            }
            ConstraintCheck::Facing { target } => format!("The {subject} is not facing the {target}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedConstraint {
    pub subject: String,
    pub check: ConstraintCheck,
    pub feedback: String,
    #[serde(default)]
    pub reason: String,
}

impl FailedConstraint {
    pub fn new(subject: impl Into<String>, check: ConstraintCheck, reason: impl Into<String>) -> Self {
        let subject = subject.into();
        Self {
            feedback: check.feedback(&subject),
            subject,
            check,
            reason: reason.into(),
        }
    }

    pub fn targets(&self) -> Vec<&str> {
        vec![self.check.target()]
    }
}

/// All semantic checks in declaration order: relations first, then facing.
pub fn constraint_checks(constraints: &[ConstraintSet]) -> Vec<(String, ConstraintCheck)> {
    let mut out = Vec::new();
    for c in constraints {
        for r in &c.relations {
            out.push((
                c.subject.clone(),
                ConstraintCheck::Relation {
                    kind: r.kind,
                    target: r.target.clone(),
                },
            ));
        }
        if let Some(t) = &c.facing {
            out.push((c.subject.clone(), ConstraintCheck::Facing { target: t.clone() }));
        }
    }
    out
}

/// True when both the subject and the target of a check are in the layout.
pub fn is_checkable(layout: &Layout, subject: &str, check: &ConstraintCheck) -> bool {
    layout.contains(subject) && layout.contains(check.target())
}

fn placed<'a>(layout: &'a Layout, name: &str) -> Result<&'a Placement, RelationError> {
    layout
        .get(name)
        .ok_or_else(|| RelationError::Unplaced(name.to_string()))
}

fn center(p: &Placement) -> Point {
    Point::new(p.pose.x, p.pose.y)
}

/// Offset of `point` from `from`'s center, as (forward, lateral) in `from`'s frame.
fn local_offset(from: &Placement, point: Point) -> (f64, f64) {
    let d = (point.x - from.pose.x, point.y - from.pose.y);
    let f = from.pose.theta.facing();
    let r = from.pose.theta.right();
    (d.0 * f.0 + d.1 * f.1, d.0 * r.0 + d.1 * r.1)
}

fn near(a: &Placement, b: &Placement, params: &RelationParams) -> bool {
    let ra = footprint(&a.asset, a.pose);
    let rb = footprint(&b.asset, b.pose);
    ra.edge_distance(&rb) <= params.near_gap_max
}

fn side_of(s: &Placement, t: &Placement, params: &RelationParams) -> bool {
    let (_, lateral) = local_offset(s, center(t));
    lateral.abs() > s.asset.footprint_w / 2.0 && near(s, t, params)
}

fn in_front_of(s: &Placement, t: &Placement, params: &RelationParams) -> bool {
    // Subject sits in the zone ahead of the target's front face.
    let (forward, lateral) = local_offset(t, center(s));
    let half_d = t.asset.footprint_d / 2.0;
    forward >= half_d
        && forward - half_d <= params.front_depth_max
        && lateral.abs() <= t.asset.footprint_w / 2.0 + params.align_tol
}

fn aligned_with(s: &Placement, t: &Placement, params: &RelationParams) -> bool {
    let parallel = s.pose.theta == t.pose.theta || s.pose.theta == t.pose.theta.turned(2);
    parallel
        && ((s.pose.x - t.pose.x).abs() <= params.align_tol
            || (s.pose.y - t.pose.y).abs() <= params.align_tol)
}

fn opposite(s: &Placement, t: &Placement) -> bool {
    s.pose.theta == t.pose.theta.turned(2)
        && local_offset(s, center(t)).0 > 0.0
        && local_offset(t, center(s)).0 > 0.0
}

fn quadrant(t: &Placement, member: &Placement) -> u8 {
    let (forward, lateral) = local_offset(t, center(member));
    u8::from(forward < 0.0) * 2 + u8::from(lateral < 0.0)
}

fn facing(s: &Placement, t: &Placement, params: &RelationParams) -> bool {
    let d = (t.pose.x - s.pose.x, t.pose.y - s.pose.y);
    let len = d.0.hypot(d.1);
    if len == 0.0 {
        return false;
    }
    let f = s.pose.theta.facing();
    let cos = ((d.0 * f.0 + d.1 * f.1) / len).clamp(-1.0, 1.0);
    cos.acos().to_degrees() <= params.facing_cone_deg + 1e-9
}

/// Evaluates a binary relation. `around` with a single subject is `near`.
pub fn eval_relation(
    kind: RelationKind,
    subject: &str,
    target: &str,
    layout: &Layout,
    params: &RelationParams,
) -> Result<bool, RelationError> {
    let s = placed(layout, subject)?;
    let t = placed(layout, target)?;
    Ok(match kind {
        RelationKind::Near | RelationKind::Around => near(s, t, params),
        RelationKind::SideOf => side_of(s, t, params),
        RelationKind::InFrontOf => in_front_of(s, t, params),
        RelationKind::AlignedWith => aligned_with(s, t, params),
        RelationKind::Opposite => opposite(s, t),
    })
}

/// Group form of `around`: all members near the target and spread over at
/// least two quadrants of the target's frame.
pub fn eval_around(
    members: &[&str],
    target: &str,
    layout: &Layout,
    params: &RelationParams,
) -> Result<bool, RelationError> {
    let t = placed(layout, target)?;
    let mut quadrants = [false; 4];
    for m in members {
        let p = placed(layout, m)?;
        if !near(p, t, params) {
            return Ok(false);
        }
        quadrants[quadrant(t, p) as usize] = true;
    }
    if members.len() <= 1 {
        return Ok(true);
    }
    Ok(quadrants.iter().filter(|q| **q).count() >= 2)
}

pub fn eval_facing(
    subject: &str,
    target: &str,
    layout: &Layout,
    params: &RelationParams,
) -> Result<bool, RelationError> {
    let s = placed(layout, subject)?;
    let t = placed(layout, target)?;
    Ok(facing(s, t, params))
}

/// Quarter turn whose facing direction is closest to the direction from
/// `from` to `to`. Ties go to the earlier rotation in 0, 90, 180, 270 order;
/// coincident points give 0.
pub fn rotation_toward(from: Point, to: Point) -> Rotation {
    let d = (to.x - from.x, to.y - from.y);
    let mut best = Rotation::Deg0;
    let mut best_dot = f64::NEG_INFINITY;
    for r in Rotation::ALL {
        let f = r.facing();
        let dot = f.0 * d.0 + f.1 * d.1;
        if dot > best_dot {
            best = r;
            best_dot = dot;
        }
    }
    best
}

/// Placed subjects that share an `around` relation to `target`, in name order.
pub fn around_cohort<'a>(constraints: &'a [ConstraintSet], target: &str, layout: &Layout) -> Vec<&'a str> {
    let mut members: Vec<&str> = constraints
        .iter()
        .filter(|c| {
            layout.contains(&c.subject)
                && c.relations
                    .iter()
                    .any(|r| r.kind == RelationKind::Around && r.target == target)
        })
        .map(|c| c.subject.as_str())
        .collect();
    members.sort_unstable();
    members.dedup();
    members
}

/// Evaluates one check; `constraints` supplies the cohort for `around`.
pub fn eval_check(
    subject: &str,
    check: &ConstraintCheck,
    layout: &Layout,
    constraints: &[ConstraintSet],
    params: &RelationParams,
) -> Result<bool, RelationError> {
    match check {
        ConstraintCheck::Facing { target } => eval_facing(subject, target, layout, params),
        ConstraintCheck::Relation {
            kind: RelationKind::Around,
            target,
        } => {
            let mut cohort = around_cohort(constraints, target, layout);
            if !cohort.contains(&subject) {
                cohort.push(subject);
            }
            eval_around(&cohort, target, layout, params)
        }
        ConstraintCheck::Relation { kind, target } => {
            eval_relation(*kind, subject, target, layout, params)
        }
    }
}

/// Failed checks among those whose subject and target are both placed.
pub fn unsatisfied_constraints(
    layout: &Layout,
    constraints: &[ConstraintSet],
    params: &RelationParams,
) -> Vec<FailedConstraint> {
    constraint_checks(constraints)
        .into_iter()
        .filter(|(s, c)| is_checkable(layout, s, c))
        .filter(|(s, c)| !eval_check(s, c, layout, constraints, params).unwrap_or(false))
        .map(|(s, c)| FailedConstraint::new(s, c, "geometric check failed"))
        .collect()
}
