use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::{Map, Value};

use super::{AssetSpec, ConstraintSet, Layout, Pose, Room, Rotation, SceneError};

/// Writes integral centimeter values as JSON integers and anything else as a float.
pub(crate) fn serialize_cm<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        s.serialize_i64(*v as i64)
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RoomDoc {
    #[serde(serialize_with = "serialize_cm")]
    width: f64,
    #[serde(serialize_with = "serialize_cm")]
    depth: f64,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDoc {
    #[serde(serialize_with = "serialize_cm")]
    pub x: f64,
    #[serde(serialize_with = "serialize_cm")]
    pub y: f64,
    #[serde(default, serialize_with = "serialize_cm")]
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AssetDoc {
    object_name: String,
    size: SizeDoc,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionDoc {
    #[serde(rename = "X", serialize_with = "serialize_cm")]
    pub x: f64,
    #[serde(rename = "Y", serialize_with = "serialize_cm")]
    pub y: f64,
}

/// One placed object in the scene schema; model replies use the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub object_name: String,
    pub position: PositionDoc,
    pub rotation: Rotation,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl LayoutEntry {
    pub fn new(object_name: impl Into<String>, pose: Pose) -> Self {
        Self {
            object_name: object_name.into(),
            position: PositionDoc {
                x: pose.x,
                y: pose.y,
            },
            rotation: pose.theta,
            extra: Map::new(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.position.x, self.position.y, self.rotation)
    }

    /// Snapshot of a layout in name order.
    pub fn from_layout(layout: &Layout) -> Vec<LayoutEntry> {
        layout
            .iter()
            .map(|(name, p)| LayoutEntry::new(name, p.pose))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SceneDoc {
    #[serde(default)]
    room_type: String,
    #[serde(default)]
    prompt: String,
    room: RoomDoc,
    #[serde(default)]
    assets: Vec<AssetDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<Vec<LayoutEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constraints: Option<Vec<ConstraintSet>>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

/// A validated scene document.
///
/// Fields the schema does not know about are kept and written back on save.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room_type: String,
    pub prompt: String,
    pub room: Room,
    pub assets: Vec<AssetSpec>,
    pub layout: Option<Vec<LayoutEntry>>,
    /// Optional per-asset rules, used by standalone refinement and scoring.
    pub constraints: Option<Vec<ConstraintSet>>,
    doc_extra: Map<String, Value>,
    room_extra: Map<String, Value>,
    asset_extra: BTreeMap<String, Map<String, Value>>,
}

impl Scene {
    pub fn new(
        room_type: impl Into<String>,
        prompt: impl Into<String>,
        room: Room,
        assets: Vec<AssetSpec>,
    ) -> Result<Self, SceneError> {
        let mut seen = BTreeSet::new();
        for a in &assets {
            if !seen.insert(a.object_name.as_str()) {
                return Err(SceneError::DuplicateName(a.object_name.clone()));
            }
        }
        Ok(Self {
            room_type: room_type.into(),
            prompt: prompt.into(),
            room,
            assets,
            layout: None,
            constraints: None,
            doc_extra: Map::new(),
            room_extra: Map::new(),
            asset_extra: BTreeMap::new(),
        })
    }

    pub fn asset(&self, name: &str) -> Option<&AssetSpec> {
        self.assets.iter().find(|a| a.object_name == name)
    }

    /// Builds the layout block, if the document has one.
    pub fn to_layout(&self) -> Result<Option<Layout>, SceneError> {
        let Some(entries) = &self.layout else {
            return Ok(None);
        };
        let mut layout = Layout::empty(self.room);
        for e in entries {
            let spec = self
                .asset(&e.object_name)
                .ok_or_else(|| SceneError::UnknownAsset(e.object_name.clone()))?;
            if !(e.position.x.is_finite() && e.position.y.is_finite()) {
                return Err(SceneError::InvalidPosition {
                    name: e.object_name.clone(),
                    x: e.position.x,
                    y: e.position.y,
                });
            }
            layout
                .insert(spec.clone(), e.pose())
                .map_err(|_| SceneError::DuplicateName(e.object_name.clone()))?;
        }
        Ok(Some(layout))
    }

    /// Returns a copy whose layout block mirrors `layout`.
    ///
    /// Per-entry unknown fields survive for objects that are still placed.
    pub fn with_layout(&self, layout: &Layout) -> Scene {
        let previous: BTreeMap<&str, &Map<String, Value>> = self
            .layout
            .iter()
            .flatten()
            .map(|e| (e.object_name.as_str(), &e.extra))
            .collect();
        let entries = layout
            .iter()
            .map(|(name, p)| {
                let mut e = LayoutEntry::new(name, p.pose);
                if let Some(extra) = previous.get(name) {
                    e.extra = (*extra).clone();
                }
                e
            })
            .collect();
        let mut out = self.clone();
        out.layout = Some(entries);
        out
    }

    pub fn to_json(&self) -> String {
        let doc = SceneDoc {
            room_type: self.room_type.clone(),
            prompt: self.prompt.clone(),
            room: RoomDoc {
                width: self.room.width,
                depth: self.room.depth,
                extra: self.room_extra.clone(),
            },
            assets: self
                .assets
                .iter()
                .map(|a| AssetDoc {
                    object_name: a.object_name.clone(),
                    size: SizeDoc {
                        x: a.footprint_w,
                        y: a.footprint_d,
                        z: a.height,
                    },
                    extra: self
                        .asset_extra
                        .get(&a.object_name)
                        .cloned()
                        .unwrap_or_default(),
                })
                .collect(),
            layout: self.layout.clone(),
            constraints: self.constraints.clone(),
            extra: self.doc_extra.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("scene serialization is infallible");
        s.push('\n');
        s
    }
}

/// Parses and validates a scene document.
pub fn parse_scene(text: &str) -> Result<Scene, SceneError> {
    let doc: SceneDoc =
        serde_json::from_str(text).map_err(|e| SceneError::Malformed(e.to_string()))?;
    let room = Room::new(doc.room.width, doc.room.depth)?;
    let mut assets = Vec::with_capacity(doc.assets.len());
    let mut asset_extra = BTreeMap::new();
    for a in doc.assets {
        let spec = AssetSpec::new(a.object_name.clone(), a.size.x, a.size.y, a.size.z)?;
        if !a.extra.is_empty() {
            asset_extra.insert(a.object_name, a.extra);
        }
        assets.push(spec);
    }
    let mut scene = Scene::new(doc.room_type, doc.prompt, room, assets)?;
    scene.doc_extra = doc.extra;
    scene.room_extra = doc.room.extra;
    scene.asset_extra = asset_extra;
    scene.layout = doc.layout;
    scene.constraints = doc.constraints;
    // Validate references eagerly so a bad file fails at load time.
    scene.to_layout()?;
    if let Some(cs) = &scene.constraints {
        for c in cs {
            let refs = std::iter::once(&c.subject)
                .chain(c.relations.iter().map(|r| &r.target))
                .chain(c.facing.iter());
            for name in refs {
                if scene.asset(name).is_none() {
                    return Err(SceneError::UnknownAsset(name.clone()));
                }
            }
        }
    }
    Ok(scene)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scene(&text)
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    std::fs::write(path, scene.to_json()).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })
}
