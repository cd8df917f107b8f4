mod common;

use common::rotation;
use layoutkit::gen::{generate_scene, GenOptions};
use layoutkit::scene::{load_scene, parse_scene, save_scene, Layout, LayoutEntry, Pose, SceneError};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scenes_round_trip(seed in any::<u64>(), index in 0usize..50, poses in prop::collection::vec((0u32..2000, 0u32..2000, 0usize..4), 0..20)) {
        let scene = generate_scene(&GenOptions { seed, ..Default::default() }, index);
        let mut layout = Layout::empty(scene.room);
        for (asset, (x, y, r)) in scene.assets.iter().zip(&poses) {
            layout
                .insert(asset.clone(), Pose::new(*x as f64 / 2.0, *y as f64 / 2.0, rotation([0, 90, 180, 270][*r])))
                .unwrap();
        }
        let with_layout = scene.with_layout(&layout);
        for s in [&scene, &with_layout] {
            let text = s.to_json();
            let back = parse_scene(&text).unwrap();
            prop_assert_eq!(&back, s);
            prop_assert_eq!(back.to_json(), text);
        }
        let back = parse_scene(&with_layout.to_json()).unwrap().to_layout().unwrap().unwrap();
        prop_assert_eq!(LayoutEntry::from_layout(&back), LayoutEntry::from_layout(&layout));
    }
}

const DOC: &str = r#"{
  "room_type": "office",
  "prompt": "a small study",
  "designer": "kept",
  "room": {"width": 400, "depth": 300.5, "floor": "oak"},
  "assets": [
    {"object_name": "desk-0", "size": {"x": 120, "y": 60, "z": 75}, "color": "white"},
    {"object_name": "office chair-0", "size": {"x": 50, "y": 50}}
  ],
  "layout": [
    {"object_name": "desk-0", "position": {"X": 200, "Y": 30}, "rotation": 0},
    {"object_name": "office chair-0", "position": {"X": 200.5, "Y": 90}, "rotation": 180}
  ]
}"#;

#[test]
fn unknown_fields_survive_a_round_trip() {
    let scene = parse_scene(DOC).unwrap();
    let text = scene.to_json();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["designer"], "kept");
    assert_eq!(v["room"]["floor"], "oak");
    assert_eq!(v["room"]["depth"], 300.5);
    assert_eq!(v["assets"][0]["color"], "white");
    assert_eq!(v["layout"][1]["position"]["X"], 200.5);
    assert_eq!(v["layout"][1]["rotation"], 180);
    assert_eq!(parse_scene(&text).unwrap(), scene);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    let scene = parse_scene(DOC).unwrap();
    save_scene(&scene, &path).unwrap();
    assert_eq!(load_scene(&path).unwrap(), scene);
    assert!(matches!(load_scene(dir.path().join("missing.json")), Err(SceneError::Io { .. })));
}

fn edited(from: &str, to: &str) -> Result<Option<Layout>, SceneError> {
    assert!(DOC.contains(from), "{from}");
    parse_scene(&DOC.replace(from, to))?.to_layout()
}

#[test]
fn invalid_documents_are_rejected() {
    assert!(matches!(parse_scene("{"), Err(SceneError::Malformed(_))));
    assert!(matches!(parse_scene("{\"assets\": []}"), Err(SceneError::Malformed(_))));
    assert!(matches!(
        edited("\"office chair-0\", \"size\"", "\"desk-0\", \"size\""),
        Err(SceneError::DuplicateName(_))
    ));
    assert!(matches!(edited("\"rotation\": 180", "\"rotation\": 45"), Err(_)));
    assert!(matches!(edited("\"width\": 400", "\"width\": -4"), Err(SceneError::NonPositive { .. })));
    assert!(matches!(edited("\"x\": 50", "\"x\": 0"), Err(SceneError::NonPositive { .. })));
    assert!(matches!(
        edited("{\"object_name\": \"desk-0\", \"position\"", "{\"object_name\": \"lamp-0\", \"position\""),
        Err(SceneError::UnknownAsset(_))
    ));
}

#[test]
fn out_of_room_positions_load_so_they_can_be_repaired() {
    let layout = edited("\"X\": 200, \"Y\": 30", "\"X\": -10, \"Y\": 30").unwrap().unwrap();
    assert_eq!(layout.pose("desk-0").unwrap().x, -10.0);
}

