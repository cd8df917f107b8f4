//! Built-in furniture catalog and room templates.
//!
//! Footprints are in cm as (width along the object's local X, depth along its
//! facing axis, height). All values are even so wall-flush centers stay on
//! whole centimeters.

use crate::scene::RelationKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogEntry {
    pub category: &'static str,
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub against_wall: bool,
    /// Relation to the first present category in the anchor list.
    pub relation: Option<(RelationKind, &'static [&'static str])>,
    /// Categories this object should face, first present wins.
    pub facing: Option<&'static [&'static str]>,
}

const fn wall(category: &'static str, width: f64, depth: f64, height: f64) -> CatalogEntry {
    CatalogEntry {
        category,
        width,
        depth,
        height,
        against_wall: true,
        relation: None,
        facing: None,
    }
}

const fn free(category: &'static str, width: f64, depth: f64, height: f64) -> CatalogEntry {
    CatalogEntry {
        against_wall: false,
        ..wall(category, width, depth, height)
    }
}

const fn rel(mut e: CatalogEntry, kind: RelationKind, anchors: &'static [&'static str]) -> CatalogEntry {
    e.relation = Some((kind, anchors));
    e
}

const fn faces(mut e: CatalogEntry, anchors: &'static [&'static str]) -> CatalogEntry {
    e.facing = Some(anchors);
    e
}

use RelationKind::*;

pub const CATALOG: &[CatalogEntry] = &[
    // bedroom
    wall("bed", 160.0, 200.0, 50.0),
    rel(wall("nightstand", 50.0, 40.0, 56.0), SideOf, &["bed", "kids bed"]),
    wall("wardrobe", 120.0, 60.0, 200.0),
    rel(wall("dresser", 100.0, 50.0, 80.0), Near, &["wardrobe"]),
    wall("desk", 120.0, 60.0, 76.0),
    faces(rel(free("desk chair", 50.0, 50.0, 90.0), InFrontOf, &["desk"]), &["desk"]),
    wall("floor lamp", 40.0, 40.0, 160.0),
    wall("plant", 40.0, 40.0, 100.0),
    wall("bookshelf", 80.0, 30.0, 180.0),
    // living room
    wall("sofa", 200.0, 90.0, 80.0),
    rel(free("coffee table", 110.0, 60.0, 46.0), InFrontOf, &["sofa"]),
    faces(rel(free("armchair", 80.0, 80.0, 90.0), Near, &["coffee table", "sofa"]), &["coffee table", "sofa"]),
    rel(wall("tv stand", 160.0, 40.0, 50.0), Opposite, &["sofa"]),
    rel(wall("side table", 50.0, 50.0, 56.0), SideOf, &["sofa", "armchair"]),
    // dining room
    free("dining table", 180.0, 90.0, 76.0),
    faces(rel(free("dining chair", 50.0, 50.0, 90.0), Around, &["dining table"]), &["dining table"]),
    wall("sideboard", 160.0, 46.0, 86.0),
    rel(wall("display cabinet", 100.0, 40.0, 180.0), Near, &["sideboard"]),
    // kitchen
    wall("kitchen cabinet", 120.0, 60.0, 90.0),
    rel(wall("stove", 60.0, 60.0, 90.0), AlignedWith, &["kitchen cabinet"]),
    rel(wall("sink cabinet", 100.0, 60.0, 90.0), AlignedWith, &["kitchen cabinet"]),
    rel(wall("refrigerator", 80.0, 70.0, 180.0), Near, &["kitchen cabinet"]),
    rel(free("kitchen island", 160.0, 90.0, 90.0), InFrontOf, &["kitchen cabinet"]),
    faces(rel(free("bar stool", 40.0, 40.0, 76.0), Near, &["kitchen island"]), &["kitchen island"]),
    // bathroom
    wall("bathtub", 170.0, 80.0, 60.0),
    wall("toilet", 40.0, 70.0, 80.0),
    rel(wall("washbasin", 80.0, 50.0, 86.0), Near, &["toilet"]),
    wall("shower", 90.0, 90.0, 200.0),
    rel(wall("towel rack", 60.0, 30.0, 100.0), Near, &["bathtub", "shower"]),
    rel(wall("laundry basket", 40.0, 40.0, 60.0), Near, &["washbasin"]),
    // classroom
    wall("teacher desk", 140.0, 70.0, 76.0),
    faces(rel(free("student desk", 120.0, 60.0, 76.0), AlignedWith, &["student desk"]), &["teacher desk"]),
    faces(rel(free("student chair", 46.0, 46.0, 80.0), InFrontOf, &["student desk"]), &["student desk"]),
    wall("locker", 90.0, 50.0, 180.0),
    // children's room
    wall("kids bed", 100.0, 190.0, 46.0),
    rel(wall("toy chest", 80.0, 46.0, 50.0), Near, &["kids bed"]),
    wall("kids desk", 100.0, 56.0, 60.0),
    faces(rel(free("kids chair", 40.0, 40.0, 60.0), InFrontOf, &["kids desk"]), &["kids desk"]),
    free("play mat", 150.0, 150.0, 2.0),
    rel(free("beanbag", 70.0, 70.0, 60.0), Near, &["play mat"]),
    // home gym
    wall("treadmill", 90.0, 190.0, 140.0),
    rel(wall("exercise bike", 60.0, 120.0, 110.0), AlignedWith, &["treadmill"]),
    free("weight bench", 60.0, 130.0, 46.0),
    wall("dumbbell rack", 100.0, 50.0, 80.0),
    rel(free("yoga mat", 70.0, 180.0, 2.0), Near, &["weight bench"]),
    // buffet restaurant
    wall("buffet counter", 240.0, 80.0, 90.0),
    rel(wall("drink station", 120.0, 60.0, 100.0), Near, &["buffet counter"]),
    wall("cashier counter", 150.0, 60.0, 100.0),
    free("restaurant table", 120.0, 80.0, 76.0),
    faces(rel(free("restaurant chair", 46.0, 46.0, 86.0), Around, &["restaurant table"]), &["restaurant table"]),
];

pub fn lookup(category: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.category == category)
}

/// Item in a room template: category and inclusive count range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateItem {
    pub category: &'static str,
    pub min: u32,
    pub max: u32,
}

const fn item(category: &'static str, min: u32, max: u32) -> TemplateItem {
    TemplateItem { category, min, max }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomTemplate {
    pub room_type: &'static str,
    pub prompts: &'static [&'static str],
    /// Core items first; the generator fills in order until its budget runs out.
    pub items: &'static [TemplateItem],
}

pub const ROOM_TEMPLATES: &[RoomTemplate] = &[
    RoomTemplate {
        room_type: "bathroom",
        prompts: &["a bright bathroom", "a compact family bathroom", "a spa-like bathroom"],
        items: &[
            item("bathtub", 1, 1),
            item("toilet", 1, 1),
            item("washbasin", 1, 2),
            item("towel rack", 1, 2),
            item("laundry basket", 1, 1),
            item("shower", 0, 1),
            item("plant", 0, 2),
        ],
    },
    RoomTemplate {
        room_type: "bedroom",
        prompts: &["a cozy bedroom", "a minimalist master bedroom", "a guest bedroom with a work corner"],
        items: &[
            item("bed", 1, 1),
            item("nightstand", 1, 2),
            item("wardrobe", 1, 1),
            item("dresser", 0, 1),
            item("desk", 0, 1),
            item("desk chair", 0, 1),
            item("floor lamp", 1, 2),
            item("plant", 0, 2),
            item("bookshelf", 0, 2),
        ],
    },
    RoomTemplate {
        room_type: "dining room",
        prompts: &["a dining room for family dinners", "an elegant dining room", "a casual dining room"],
        items: &[
            item("dining table", 1, 1),
            item("dining chair", 2, 6),
            item("sideboard", 1, 1),
            item("display cabinet", 0, 1),
            item("plant", 0, 3),
            item("floor lamp", 0, 2),
        ],
    },
    RoomTemplate {
        room_type: "kitchen",
        prompts: &["a modern kitchen", "a kitchen with an island", "a small apartment kitchen"],
        items: &[
            item("kitchen cabinet", 1, 2),
            item("stove", 1, 1),
            item("sink cabinet", 1, 1),
            item("refrigerator", 1, 1),
            item("kitchen island", 0, 1),
            item("bar stool", 0, 3),
            item("plant", 0, 2),
        ],
    },
    RoomTemplate {
        room_type: "living room",
        prompts: &["a living room for watching movies", "a bright living room", "a living room for hosting guests"],
        items: &[
            item("sofa", 1, 1),
            item("coffee table", 1, 1),
            item("tv stand", 1, 1),
            item("armchair", 1, 2),
            item("side table", 0, 2),
            item("floor lamp", 0, 2),
            item("bookshelf", 0, 2),
            item("plant", 0, 3),
        ],
    },
    RoomTemplate {
        room_type: "buffet restaurant",
        prompts: &["a buffet restaurant", "a small buffet restaurant with a drinks corner"],
        items: &[
            item("buffet counter", 1, 1),
            item("restaurant table", 1, 3),
            item("restaurant chair", 2, 8),
            item("drink station", 1, 1),
            item("cashier counter", 0, 1),
            item("plant", 0, 4),
        ],
    },
    RoomTemplate {
        room_type: "classroom",
        prompts: &["a small classroom", "a tutoring classroom", "a seminar room"],
        items: &[
            item("teacher desk", 1, 1),
            item("student desk", 2, 6),
            item("student chair", 2, 6),
            item("bookshelf", 0, 2),
            item("locker", 0, 2),
            item("plant", 0, 2),
        ],
    },
    RoomTemplate {
        room_type: "children's room",
        prompts: &["a playful children's room", "a children's room with a study corner"],
        items: &[
            item("kids bed", 1, 1),
            item("toy chest", 1, 1),
            item("kids desk", 1, 1),
            item("kids chair", 1, 1),
            item("play mat", 0, 1),
            item("beanbag", 0, 2),
            item("bookshelf", 0, 2),
            item("nightstand", 0, 1),
        ],
    },
    RoomTemplate {
        room_type: "home gym",
        prompts: &["a home gym", "a home gym for cardio and strength training"],
        items: &[
            item("treadmill", 1, 1),
            item("weight bench", 1, 1),
            item("dumbbell rack", 1, 1),
            item("exercise bike", 1, 1),
            item("yoga mat", 1, 2),
            item("plant", 0, 2),
            item("floor lamp", 0, 1),
        ],
    },
];

pub fn template(room_type: &str) -> Option<&'static RoomTemplate> {
    ROOM_TEMPLATES.iter().find(|t| t.room_type == room_type)
}
