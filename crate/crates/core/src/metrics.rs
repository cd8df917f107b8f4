//! Physical violation rates and deterministic semantic proxy scores.

use serde::{Deserialize, Serialize};

use crate::geometry::{footprint, iou, outside_area};
use crate::relations::{constraint_checks, eval_check, is_checkable, ConstraintCheck, RelationParams};
use crate::scene::{ConstraintSet, Layout};

/// Scores for one finished scene. Rates are percentages in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub collision_rate: f64,
    pub oob_rate: f64,
    /// Share of relation constraints satisfied.
    pub pos_proxy: f64,
    /// Share of facing constraints satisfied.
    pub rot_proxy: f64,
    pub deleted_count: usize,
    /// Set when there were no relation constraints to score.
    pub pos_vacuous: bool,
    /// Set when there were no facing constraints to score.
    pub rot_vacuous: bool,
}

impl SceneScore {
    pub fn physically_valid(&self) -> bool {
        self.collision_rate == 0.0 && self.oob_rate == 0.0
    }
}

/// Percentage of object pairs whose footprints overlap with positive area.
pub fn collision_rate(layout: &Layout) -> f64 {
    let rects: Vec<_> = layout.iter().map(|(_, p)| footprint(&p.asset, p.pose)).collect();
    let n = rects.len();
    if n < 2 {
        return 0.0;
    }
    let mut colliding = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if iou(&rects[i], &rects[j]) > 0.0 {
                colliding += 1;
            }
        }
    }
    100.0 * colliding as f64 / (n * (n - 1) / 2) as f64
}

/// Mean over objects of the share of footprint area outside the room, in percent.
pub fn oob_rate(layout: &Layout) -> f64 {
    if layout.is_empty() {
        return 0.0;
    }
    let room = layout.room();
    let total: f64 = layout
        .iter()
        .map(|(_, p)| {
            let r = footprint(&p.asset, p.pose);
            outside_area(&r, room) / r.area()
        })
        .sum();
    100.0 * total / layout.len() as f64
}

fn proxy(satisfied: usize, total: usize) -> (f64, bool) {
    if total == 0 {
        (100.0, true)
    } else {
        (100.0 * satisfied as f64 / total as f64, false)
    }
}

/// Scores a layout. Constraints that mention a removed object count as unmet.
pub fn score_scene(
    layout: &Layout,
    constraints: &[ConstraintSet],
    params: &RelationParams,
    deleted_count: usize,
) -> SceneScore {
    let (mut rel_ok, mut rel_total, mut rot_ok, mut rot_total) = (0, 0, 0, 0);
    for (subject, check) in constraint_checks(constraints) {
        let ok = is_checkable(layout, &subject, &check)
            && eval_check(&subject, &check, layout, constraints, params).unwrap_or(false);
        match check {
            ConstraintCheck::Relation { .. } => {
                rel_total += 1;
                rel_ok += usize::from(ok);
            }
            ConstraintCheck::Facing { .. } => {
                rot_total += 1;
                rot_ok += usize::from(ok);
            }
        }
    }
    let (pos_proxy, pos_vacuous) = proxy(rel_ok, rel_total);
    let (rot_proxy, rot_vacuous) = proxy(rot_ok, rot_total);
    SceneScore {
        collision_rate: collision_rate(layout),
        oob_rate: oob_rate(layout),
        pos_proxy,
        rot_proxy,
        deleted_count,
        pos_vacuous,
        rot_vacuous,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AssetSpec, Pose, RelationKind, Room, Rotation};

    fn layout(items: &[(&str, f64, f64)]) -> Layout {
        let mut l = Layout::empty(Room::new(400.0, 400.0).unwrap());
        for (n, x, y) in items {
            l.insert(AssetSpec::new(*n, 100.0, 100.0, 10.0).unwrap(), Pose::new(*x, *y, Rotation::Deg0))
                .unwrap();
        }
        l
    }

    #[test]
    fn collision_rate_counts_pairs() {
        assert_eq!(collision_rate(&layout(&[("a-0", 100.0, 100.0)])), 0.0);
        let l = layout(&[("a-0", 100.0, 100.0), ("b-0", 150.0, 100.0), ("c-0", 300.0, 300.0)]);
        assert!((collision_rate(&l) - 100.0 / 3.0).abs() < 1e-12);
        // Touching boxes do not collide.
        let l = layout(&[("a-0", 100.0, 100.0), ("b-0", 200.0, 100.0)]);
        assert_eq!(collision_rate(&l), 0.0);
    }

    #[test]
    fn oob_rate_averages_objects() {
        assert_eq!(oob_rate(&layout(&[("a-0", 100.0, 100.0)])), 0.0);
        let l = layout(&[("a-0", 100.0, 100.0), ("b-0", 400.0, 200.0)]);
        assert_eq!(oob_rate(&l), 25.0);
    }

    #[test]
    fn proxies() {
        let l = layout(&[("a-0", 100.0, 100.0), ("b-0", 250.0, 100.0), ("c-0", 350.0, 350.0)]);
        let p = RelationParams::default();
        let s = score_scene(&l, &[], &p, 0);
        assert_eq!((s.pos_proxy, s.rot_proxy), (100.0, 100.0));
        assert!(s.pos_vacuous && s.rot_vacuous);

        let cs = vec![
            ConstraintSet::free("a-0")
                .with_relation(RelationKind::Near, "b-0")
                .with_relation(RelationKind::AlignedWith, "b-0")
                .with_relation(RelationKind::Near, "c-0"),
            ConstraintSet::free("b-0").with_relation(RelationKind::Near, "a-0"),
        ];
        let s = score_scene(&l, &cs, &p, 0);
        assert_eq!(s.pos_proxy, 75.0);
        assert!(!s.pos_vacuous);
        assert!(s.rot_vacuous);
    }
}
