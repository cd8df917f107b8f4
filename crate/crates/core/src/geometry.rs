//! Planar geometry under quarter-turn rotations.
//!
//! With rotations restricted to multiples of 90 degrees every footprint is an
//! axis-aligned rectangle, so overlap and containment are exact interval math.

use serde::{Deserialize, Serialize};

use crate::scene::{AssetSpec, Pose, Room, Rotation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned rectangle in room coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        debug_assert!(min_x <= max_x && min_y <= max_y);
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn room(room: &Room) -> Self {
        Self::new(0.0, 0.0, room.width, room.depth)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.min_x + self.max_x) / 2.0,
            (self.min_y + self.max_y) / 2.0,
        )
    }

    /// Area of the overlap; zero when the rects only touch.
    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.min_x >= self.min_x
            && other.min_y >= self.min_y
            && other.max_x <= self.max_x
            && other.max_y <= self.max_y
    }

    /// Euclidean gap between the closest edges; zero if they touch or overlap.
    pub fn edge_distance(&self, other: &Rect) -> f64 {
        let dx = (self.min_x - other.max_x).max(other.min_x - self.max_x).max(0.0);
        let dy = (self.min_y - other.max_y).max(other.min_y - self.max_y).max(0.0);
        dx.hypot(dy)
    }
}

/// Room boundary, in canonical order bottom < right < top < left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallId {
    Bottom,
    Right,
    Top,
    Left,
}

impl WallId {
    pub const ALL: [WallId; 4] = [WallId::Bottom, WallId::Right, WallId::Top, WallId::Left];

    /// Endpoints of the wall segment.
    pub fn segment(self, room: &Room) -> (Point, Point) {
        let (w, d) = (room.width, room.depth);
        match self {
            WallId::Bottom => (Point::new(0.0, 0.0), Point::new(w, 0.0)),
            WallId::Right => (Point::new(w, 0.0), Point::new(w, d)),
            WallId::Top => (Point::new(0.0, d), Point::new(w, d)),
            WallId::Left => (Point::new(0.0, 0.0), Point::new(0.0, d)),
        }
    }

    pub fn length(self, room: &Room) -> f64 {
        match self {
            WallId::Bottom | WallId::Top => room.width,
            WallId::Right | WallId::Left => room.depth,
        }
    }

    /// Perpendicular distance from `p` to this wall's line.
    pub fn distance(self, p: Point, room: &Room) -> f64 {
        match self {
            WallId::Bottom => p.y,
            WallId::Right => room.width - p.x,
            WallId::Top => room.depth - p.y,
            WallId::Left => p.x,
        }
    }

    /// The wall an object's back rests on when it has rotation `theta`.
    pub fn behind(theta: Rotation) -> WallId {
        match theta {
            Rotation::Deg0 => WallId::Bottom,
            Rotation::Deg90 => WallId::Left,
            Rotation::Deg180 => WallId::Top,
            Rotation::Deg270 => WallId::Right,
        }
    }
}

/// Footprint rectangle of `asset` placed at `pose`.
pub fn footprint(asset: &AssetSpec, pose: Pose) -> Rect {
    let (w, d) = oriented_extents(asset, pose.theta);
    Rect::centered(pose.x, pose.y, w, d)
}

/// Room-axis extents (x, y) of the asset at `theta`.
pub fn oriented_extents(asset: &AssetSpec, theta: Rotation) -> (f64, f64) {
    if theta.is_sideways() {
        (asset.footprint_d, asset.footprint_w)
    } else {
        (asset.footprint_w, asset.footprint_d)
    }
}

/// Intersection over union. Degenerate pairs and touching rects give 0.
pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Portion of `r` that lies outside the room, in cm².
pub fn outside_area(r: &Rect, room: &Room) -> f64 {
    (r.area() - r.intersection_area(&Rect::room(room))).max(0.0)
}

/// Closest wall by perpendicular distance; ties go to the earlier wall in canonical order.
pub fn nearest_wall(p: Point, room: &Room) -> (WallId, f64) {
    let p = Point::new(p.x.clamp(0.0, room.width), p.y.clamp(0.0, room.depth));
    let mut best = (WallId::Bottom, WallId::Bottom.distance(p, room));
    for wall in &WallId::ALL[1..] {
        let d = wall.distance(p, room);
        if d < best.1 {
            best = (*wall, d);
        }
    }
    best
}

/// Rotation that puts an object's back on `wall`, facing into the room.
pub fn wall2rotation(wall: WallId) -> Rotation {
    match wall {
        WallId::Bottom => Rotation::Deg0,
        WallId::Left => Rotation::Deg90,
        WallId::Top => Rotation::Deg180,
        WallId::Right => Rotation::Deg270,
    }
}

/// Midpoint of the footprint edge opposite the facing direction.
pub fn back_center(asset: &AssetSpec, pose: Pose) -> Point {
    let (fx, fy) = pose.theta.facing();
    let half = asset.footprint_d / 2.0;
    Point::new(pose.x - fx * half, pose.y - fy * half)
}

/// Front counterpart of [`back_center`].
pub fn front_center(asset: &AssetSpec, pose: Pose) -> Point {
    let (fx, fy) = pose.theta.facing();
    let half = asset.footprint_d / 2.0;
    Point::new(pose.x + fx * half, pose.y + fy * half)
}

/// Translate `pose` so its back-center lands on the wall point `g`.
pub fn pull_to_wall(g: Point, asset: &AssetSpec, pose: Pose) -> Pose {
    let (fx, fy) = pose.theta.facing();
    let half = asset.footprint_d / 2.0;
    Pose::new(g.x + fx * half, g.y + fy * half, pose.theta)
}

/// Signed gap between the object's back face and the wall it backs onto.
pub fn back_gap(asset: &AssetSpec, pose: Pose, room: &Room) -> f64 {
    let wall = WallId::behind(pose.theta);
    wall.distance(back_center(asset, pose), room)
}
