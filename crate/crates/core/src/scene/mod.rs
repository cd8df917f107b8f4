//! Scene data model: rooms, assets, poses, constraints and layouts.
//!
//! Every type here is an immutable value. A [`Layout`] is changed by building
//! a new one, which keeps earlier pipeline states intact for tracing.

mod io;

pub use io::{load_scene, parse_scene, save_scene, LayoutEntry, PositionDoc, Scene, SizeDoc};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("failed to read or write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene document: {0}")]
    Malformed(String),
    #[error("duplicate object_name `{0}`")]
    DuplicateName(String),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: String, value: f64 },
    #[error("rotation must be one of 0, 90, 180, 270; got {0}")]
    InvalidRotation(f64),
    #[error("layout references unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("object `{0}` is already placed")]
    NameCollision(String),
    #[error("position of `{name}` must be finite, got ({x}, {y})")]
    InvalidPosition { name: String, x: f64, y: f64 },
}

/// Axis-aligned rectangular room with its origin at the bottom-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
}

impl Room {
    pub fn new(width: f64, depth: f64) -> Result<Self, SceneError> {
        check_positive("room width", width)?;
        check_positive("room depth", depth)?;
        Ok(Self { width, depth })
    }

    pub fn area(&self) -> f64 {
        self.width * self.depth
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width / 2.0, self.depth / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub object_name: String,
    /// Extent along local X when the asset faces +Y.
    pub footprint_w: f64,
    /// Extent along local Y when the asset faces +Y.
    pub footprint_d: f64,
    /// Carried through I/O only; solving happens on the floor plane.
    pub height: f64,
}

impl AssetSpec {
    pub fn new(
        object_name: impl Into<String>,
        footprint_w: f64,
        footprint_d: f64,
        height: f64,
    ) -> Result<Self, SceneError> {
        let object_name = object_name.into();
        check_positive(&format!("width of `{object_name}`"), footprint_w)?;
        check_positive(&format!("depth of `{object_name}`"), footprint_d)?;
        if !(height.is_finite() && height >= 0.0) {
            return Err(SceneError::NonPositive {
                what: format!("height of `{object_name}`"),
                value: height,
            });
        }
        Ok(Self {
            object_name,
            footprint_w,
            footprint_d,
            height,
        })
    }

    pub fn footprint_area(&self) -> f64 {
        self.footprint_w * self.footprint_d
    }

    /// Category part of the name, e.g. `"dining chair"` for `"dining chair-3"`.
    pub fn category(&self) -> &str {
        category_of(&self.object_name)
    }
}

pub fn category_of(object_name: &str) -> &str {
    match object_name.rsplit_once('-') {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => object_name,
    }
}

fn check_positive(what: &str, value: f64) -> Result<(), SceneError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(SceneError::NonPositive {
            what: what.to_string(),
            value,
        })
    }
}

/// Quarter-turn rotation, clockwise from the +Y facing direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rotation {
    Deg0,
    Deg90,
    Deg180,
    Deg270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [
        Rotation::Deg0,
        Rotation::Deg90,
        Rotation::Deg180,
        Rotation::Deg270,
    ];

    pub fn degrees(self) -> u16 {
        match self {
            Rotation::Deg0 => 0,
            Rotation::Deg90 => 90,
            Rotation::Deg180 => 180,
            Rotation::Deg270 => 270,
        }
    }

    pub fn from_degrees(degrees: f64) -> Result<Self, SceneError> {
        match degrees {
            d if d == 0.0 => Ok(Rotation::Deg0),
            d if d == 90.0 => Ok(Rotation::Deg90),
            d if d == 180.0 => Ok(Rotation::Deg180),
            d if d == 270.0 => Ok(Rotation::Deg270),
            other => Err(SceneError::InvalidRotation(other)),
        }
    }

    /// Unit facing vector: 0 faces +Y, 90 faces +X, 180 faces -Y, 270 faces -X.
    pub fn facing(self) -> (f64, f64) {
        match self {
            Rotation::Deg0 => (0.0, 1.0),
            Rotation::Deg90 => (1.0, 0.0),
            Rotation::Deg180 => (0.0, -1.0),
            Rotation::Deg270 => (-1.0, 0.0),
        }
    }

    /// Unit vector pointing to the object's right-hand side.
    pub fn right(self) -> (f64, f64) {
        self.turned(1).facing()
    }

    /// Rotate by `quarter_turns` clockwise quarter turns.
    pub fn turned(self, quarter_turns: i32) -> Rotation {
        let idx = (self.degrees() / 90) as i32 + quarter_turns;
        Rotation::ALL[idx.rem_euclid(4) as usize]
    }

    /// True when the footprint extents are swapped relative to the asset's local frame.
    pub fn is_sideways(self) -> bool {
        matches!(self, Rotation::Deg90 | Rotation::Deg270)
    }
}

impl fmt::Display for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees())
    }
}

impl Serialize for Rotation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u16(self.degrees())
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let degrees = f64::deserialize(deserializer)?;
        Rotation::from_degrees(degrees).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: Rotation,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: Rotation) -> Self {
        Self { x, y, theta }
    }

    pub fn with_position(self, x: f64, y: f64) -> Self {
        Self { x, y, ..self }
    }
}

/// The six relation words a planner may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Near,
    SideOf,
    InFrontOf,
    AlignedWith,
    Opposite,
    Around,
}

impl RelationKind {
    pub const ALL: [RelationKind; 6] = [
        RelationKind::Near,
        RelationKind::SideOf,
        RelationKind::InFrontOf,
        RelationKind::AlignedWith,
        RelationKind::Opposite,
        RelationKind::Around,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Near => "near",
            RelationKind::SideOf => "side_of",
            RelationKind::InFrontOf => "in_front_of",
            RelationKind::AlignedWith => "aligned_with",
            RelationKind::Opposite => "opposite",
            RelationKind::Around => "around",
        }
    }

    /// Wording used in questions and feedback, e.g. "in front of".
    pub fn phrase(self) -> &'static str {
        match self {
            RelationKind::Near => "near",
            RelationKind::SideOf => "at the side of",
            RelationKind::InFrontOf => "in front of",
            RelationKind::AlignedWith => "aligned with",
            RelationKind::Opposite => "opposite",
            RelationKind::Around => "around",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown relation `{0}`")]
pub struct UnknownRelation(pub String);

impl FromStr for RelationKind {
    type Err = UnknownRelation;

    /// Accepts both the snake_case names and the spaced planner wording ("side of").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        match norm.as_str() {
            "near" => Ok(RelationKind::Near),
            "side_of" | "at_the_side_of" => Ok(RelationKind::SideOf),
            "in_front_of" => Ok(RelationKind::InFrontOf),
            "aligned_with" => Ok(RelationKind::AlignedWith),
            "opposite" => Ok(RelationKind::Opposite),
            "around" => Ok(RelationKind::Around),
            _ => Err(UnknownRelation(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub target: String,
}

/// Placement rules for one asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub subject: String,
    pub against_wall: bool,
    #[serde(default)]
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub facing: Option<String>,
}

impl ConstraintSet {
    pub fn free(subject: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            against_wall: false,
            relations: Vec::new(),
            facing: None,
        }
    }

    pub fn wall(subject: impl Into<String>) -> Self {
        Self {
            against_wall: true,
            ..Self::free(subject)
        }
    }

    pub fn with_relation(mut self, kind: RelationKind, target: impl Into<String>) -> Self {
        self.relations.push(Relation {
            kind,
            target: target.into(),
        });
        self
    }

    pub fn facing(mut self, target: impl Into<String>) -> Self {
        self.facing = Some(target.into());
        self
    }
}

/// Look up whether `name` must stand against a wall.
pub fn is_against_wall(constraints: &[ConstraintSet], name: &str) -> bool {
    constraints
        .iter()
        .any(|c| c.subject == name && c.against_wall)
}

/// Ordered, disjoint asset groups; earlier groups are placed first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub groups: Vec<Vec<String>>,
}

impl GroupPlan {
    /// Checks that the groups partition `assets` exactly.
    pub fn validate(&self, assets: &[AssetSpec]) -> Result<(), String> {
        let mut seen = BTreeMap::new();
        for (gi, group) in self.groups.iter().enumerate() {
            if group.is_empty() {
                return Err(format!("group {} is empty", gi + 1));
            }
            for name in group {
                if !assets.iter().any(|a| &a.object_name == name) {
                    return Err(format!("group {} lists unknown object `{name}`", gi + 1));
                }
                if let Some(prev) = seen.insert(name.as_str(), gi) {
                    return Err(format!(
                        "object `{name}` appears in groups {} and {}",
                        prev + 1,
                        gi + 1
                    ));
                }
            }
        }
        for asset in assets {
            if !seen.contains_key(asset.object_name.as_str()) {
                return Err(format!("object `{}` is not assigned to any group", asset.object_name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub asset: AssetSpec,
    pub pose: Pose,
}

/// Placed assets inside a room, keyed by object name.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    room: Room,
    placed: BTreeMap<String, Placement>,
}

impl Layout {
    pub fn empty(room: Room) -> Self {
        Self {
            room,
            placed: BTreeMap::new(),
        }
    }

    pub fn room(&self) -> &Room {
        &self.room
    }

    pub fn len(&self) -> usize {
        self.placed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placed.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Placement> {
        self.placed.get(name)
    }

    pub fn pose(&self, name: &str) -> Option<Pose> {
        self.placed.get(name).map(|p| p.pose)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.placed.contains_key(name)
    }

    /// Iterates in object-name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Placement)> {
        self.placed.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.placed.keys().map(String::as_str)
    }

    /// Adds a new object. Fails if the name is taken.
    pub fn insert(&mut self, asset: AssetSpec, pose: Pose) -> Result<(), SceneError> {
        if self.placed.contains_key(&asset.object_name) {
            return Err(SceneError::NameCollision(asset.object_name));
        }
        self.placed
            .insert(asset.object_name.clone(), Placement { asset, pose });
        Ok(())
    }

    pub fn with(mut self, asset: AssetSpec, pose: Pose) -> Result<Self, SceneError> {
        self.insert(asset, pose)?;
        Ok(self)
    }

    /// Replaces the pose of an existing object.
    pub fn set_pose(&mut self, name: &str, pose: Pose) -> Result<(), SceneError> {
        match self.placed.get_mut(name) {
            Some(p) => {
                p.pose = pose;
                Ok(())
            }
            None => Err(SceneError::UnknownAsset(name.to_string())),
        }
    }

    pub fn remove(&mut self, name: &str) -> Option<Placement> {
        self.placed.remove(name)
    }
}

/// Union of a committed layout with a group's proposed poses.
///
/// `assets` supplies the specs for proposal names; `base` is left untouched.
pub fn integrate_group(
    base: &Layout,
    proposal: &BTreeMap<String, Pose>,
    assets: &[AssetSpec],
) -> Result<Layout, SceneError> {
    let mut out = base.clone();
    for (name, pose) in proposal {
        if base.contains(name) {
            return Err(SceneError::NameCollision(name.clone()));
        }
        let spec = assets
            .iter()
            .find(|a| &a.object_name == name)
            .ok_or_else(|| SceneError::UnknownAsset(name.clone()))?;
        out.insert(spec.clone(), *pose)?;
    }
    Ok(out)
}
