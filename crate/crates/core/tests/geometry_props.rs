mod common;

use common::*;
use layoutkit::geometry::{
    back_center, back_gap, footprint, iou, nearest_wall, outside_area, pull_to_wall, wall2rotation, Point, Rect,
    WallId,
};
use layoutkit::scene::{AssetSpec, Pose, Room, Rotation};
use proptest::prelude::*;

fn deg() -> impl Strategy<Value = u16> {
    prop_oneof![Just(0u16), Just(90), Just(180), Just(270)]
}

fn side() -> impl Strategy<Value = f64> {
    (1u32..=300).prop_map(|v| v as f64)
}

fn coord() -> impl Strategy<Value = f64> {
    (-200i32..=1200).prop_map(|v| v as f64 / 2.0)
}

fn asset(w: f64, d: f64) -> AssetSpec {
    AssetSpec::new("thing-0", w, d, 50.0).unwrap()
}

fn rect_of(b: &Aabb) -> Rect {
    Rect::new(b.x0, b.y0, b.x1, b.y1)
}

proptest! {
    #[test]
    fn footprint_matches_oracle(w in side(), d in side(), x in coord(), y in coord(), r in deg()) {
        let f = footprint(&asset(w, d), Pose::new(x, y, rotation(r)));
        let b = aabb(w, d, x, y, r);
        prop_assert_eq!(f, rect_of(&b));
    }

    #[test]
    fn iou_is_symmetric_bounded_and_zero_without_overlap(
        a in (side(), side(), coord(), coord()),
        b in (side(), side(), coord(), coord()),
    ) {
        let ra = Rect::centered(a.2, a.3, a.0, a.1);
        let rb = Rect::centered(b.2, b.3, b.0, b.1);
        let v = iou(&ra, &rb);
        prop_assert_eq!(v, iou(&rb, &ra));
        prop_assert!((0.0..=1.0).contains(&v));
        let oracle = overlap_area(
            &Aabb { x0: ra.min_x, y0: ra.min_y, x1: ra.max_x, y1: ra.max_y },
            &Aabb { x0: rb.min_x, y0: rb.min_y, x1: rb.max_x, y1: rb.max_y },
        );
        prop_assert_eq!(v == 0.0, oracle == 0.0);
    }

    #[test]
    fn touching_rectangles_do_not_collide(w in side(), d in side(), x in coord(), y in coord(), w2 in side(), d2 in side()) {
        let a = Rect::centered(x, y, w, d);
        // Shares the right edge of `a`.
        let b = Rect::new(a.max_x, a.min_y, a.max_x + w2, a.min_y + d2);
        prop_assert_eq!(iou(&a, &b), 0.0);
        let c = Rect::new(a.min_x, a.max_y, a.min_x + w2, a.max_y + d2);
        prop_assert_eq!(iou(&a, &c), 0.0);
    }

    #[test]
    fn outside_area_matches_oracle(w in side(), d in side(), x in coord(), y in coord(), r in deg(), rw in side(), rd in side()) {
        let room = Room::new(rw, rd).unwrap();
        let f = footprint(&asset(w, d), Pose::new(x, y, rotation(r)));
        let want = outside_of_room(&aabb(w, d, x, y, r), rw, rd);
        prop_assert!((outside_area(&f, &room) - want).abs() <= 1e-6 * (1.0 + want));
    }

    #[test]
    fn nearest_wall_rotation_matches_oracle(x in coord(), y in coord(), rw in side(), rd in side()) {
        let room = Room::new(rw, rd).unwrap();
        let (wall, _) = nearest_wall(Point::new(x, y), &room);
        prop_assert_eq!(wall2rotation(wall).degrees(), inward_rotation_of_nearest_wall(x, y, rw, rd));
    }

    #[test]
    fn pulled_objects_are_flush_with_the_wall_behind(w in side(), d in side(), r in deg(), along in 0u32..=100, rw in 100u32..=900, rd in 100u32..=900) {
        let (rw, rd) = (rw as f64, rd as f64);
        let room = Room::new(rw, rd).unwrap();
        let a = asset(w, d);
        let theta = rotation(r);
        let t = along as f64 / 100.0;
        let g = match WallId::behind(theta) {
            WallId::Bottom => Point::new(t * rw, 0.0),
            WallId::Top => Point::new(t * rw, rd),
            WallId::Left => Point::new(0.0, t * rd),
            WallId::Right => Point::new(rw, t * rd),
        };
        let pose = pull_to_wall(g, &a, Pose::new(-5.0, -5.0, theta));
        prop_assert_eq!(back_center(&a, pose), g);
        prop_assert_eq!(back_gap(&a, pose, &room), 0.0);
        let b = aabb(w, d, pose.x, pose.y, r);
        prop_assert!(flush(&b, r, rw, rd));
    }

    #[test]
    fn quarter_turns_compose(r in deg(), k in -8i32..8) {
        let theta = rotation(r);
        prop_assert_eq!(theta.turned(k).turned(-k), theta);
        prop_assert_eq!(theta.turned(4 * k), theta);
        let (fx, fy) = theta.facing();
        prop_assert_eq!(theta.right(), (fy, -fx));
        prop_assert_eq!(theta.facing(), facing_vec(r));
    }
}

#[test]
fn wall_and_rotation_maps_are_inverse() {
    for wall in WallId::ALL {
        assert_eq!(WallId::behind(wall2rotation(wall)), wall);
    }
    for r in Rotation::ALL {
        assert_eq!(wall2rotation(WallId::behind(r)), r);
    }
}
