//! Procedural scene generator over the built-in catalog.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, RoomTemplate, ROOM_TEMPLATES};
use crate::scene::{AssetSpec, Room, Scene};

/// Small items used to pad a scene up to its drawn asset count.
const FILLERS: [&str; 2] = ["plant", "floor lamp"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid generator options: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenOptions {
    pub count: usize,
    pub seed: u64,
    /// Room side bounds in cm, inclusive.
    pub min_side: f64,
    pub max_side: f64,
    pub min_assets: usize,
    pub max_assets: usize,
    /// Largest share of the floor the assets' footprints may cover.
    pub area_budget: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            count: 1,
            seed: 0,
            min_side: 300.0,
            max_side: 800.0,
            min_assets: 5,
            max_assets: 20,
            area_budget: 0.4,
        }
    }
}

impl GenOptions {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Invalid(m.into()));
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if !(self.min_side >= 100.0 && self.min_side <= self.max_side && self.max_side.is_finite()) {
            return bad("room sides need 100 <= min_side <= max_side");
        }
        if self.min_assets == 0 || self.min_assets > self.max_assets {
            return bad("asset counts need 1 <= min_assets <= max_assets");
        }
        if !(self.area_budget > 0.0 && self.area_budget <= 1.0) {
            return bad("area_budget must be within (0, 1]");
        }
        Ok(())
    }
}

/// Side length in whole multiples of 10 cm within the bounds.
fn side(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let lo = (lo / 10.0).ceil() as i64;
    let hi = (hi / 10.0).floor() as i64;
    (rng.random_range(lo..=hi.max(lo)) * 10) as f64
}

fn push_asset(assets: &mut Vec<AssetSpec>, category: &str) {
    let entry = catalog::lookup(category).expect("category is in the catalog");
    let k = assets.iter().filter(|a| a.category() == category).count();
    let spec = AssetSpec::new(format!("{category}-{k}"), entry.width, entry.depth, entry.height)
        .expect("catalog sizes are positive");
    assets.push(spec);
}

fn fits(entry_area: f64, used: f64, budget: f64) -> bool {
    used + entry_area <= budget
}

/// Scene number `index` of the stream selected by `options.seed`.
pub fn generate_scene(options: &GenOptions, index: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(index as u64);
    let template: &RoomTemplate = &ROOM_TEMPLATES[index % ROOM_TEMPLATES.len()];
    let width = side(&mut rng, options.min_side, options.max_side);
    let depth = side(&mut rng, options.min_side, options.max_side);
    let room = Room::new(width, depth).expect("positive sides");
    let target = rng.random_range(options.min_assets..=options.max_assets);
    let budget = options.area_budget * room.area();

    let mut assets: Vec<AssetSpec> = Vec::new();
    let mut used = 0.0;
    for item in template.items {
        let n = rng.random_range(item.min..=item.max);
        let entry = catalog::lookup(item.category).expect("template category");
        let area = entry.width * entry.depth;
        for _ in 0..n {
            if assets.len() >= target || !fits(area, used, budget) {
                break;
            }
            push_asset(&mut assets, item.category);
            used += area;
        }
    }
    // Pad with small items: up to the drawn count while the budget allows,
    // and always up to the minimum count.
    let mut f = 0;
    while assets.len() < target {
        let category = FILLERS[f % FILLERS.len()];
        let entry = catalog::lookup(category).expect("filler category");
        let area = entry.width * entry.depth;
        if assets.len() >= options.min_assets && !fits(area, used, budget) {
            break;
        }
        push_asset(&mut assets, category);
        used += area;
        f += 1;
    }
    let prompt = template.prompts[rng.random_range(0..template.prompts.len())];
    Scene::new(template.room_type, prompt, room, assets).expect("generated names are unique")
}

pub fn generate(options: &GenOptions) -> Result<Vec<Scene>, GenError> {
    options.validate()?;
    Ok((0..options.count).map(|i| generate_scene(options, i)).collect())
}
