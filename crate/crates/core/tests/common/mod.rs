//! Independent oracles and fixtures shared by the integration tests.
//!
//! The oracles never call the library's geometry, validity or search code;
//! they recompute everything from raw sizes and poses.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use layoutkit::scene::{AssetSpec, ConstraintSet, Layout, Pose, Room, Rotation};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The core crate's directory; also valid when this module is compiled into
/// a sibling crate's tests.
pub fn core_dir() -> PathBuf {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    manifest.parent().expect("crates directory").join("core")
}

pub fn fixtures_dir() -> PathBuf {
    core_dir().join("tests").join("fixtures")
}

// ---------------------------------------------------------------------------
// Geometry oracle

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Aabb {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

pub fn degrees(r: Rotation) -> u16 {
    r.degrees()
}

/// Footprint from raw numbers: sideways rotations swap width and depth.
pub fn aabb(w: f64, d: f64, x: f64, y: f64, deg: u16) -> Aabb {
    let (ex, ey) = if deg == 90 || deg == 270 { (d, w) } else { (w, d) };
    Aabb {
        x0: x - ex / 2.0,
        y0: y - ey / 2.0,
        x1: x + ex / 2.0,
        y1: y + ey / 2.0,
    }
}

pub fn aabb_of(asset: &AssetSpec, pose: Pose) -> Aabb {
    aabb(asset.footprint_w, asset.footprint_d, pose.x, pose.y, degrees(pose.theta))
}

pub fn overlap_area(a: &Aabb, b: &Aabb) -> f64 {
    let w = a.x1.min(b.x1) - a.x0.max(b.x0);
    let h = a.y1.min(b.y1) - a.y0.max(b.y0);
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}

pub fn outside_of_room(r: &Aabb, width: f64, depth: f64) -> f64 {
    let room = Aabb {
        x0: 0.0,
        y0: 0.0,
        x1: width,
        y1: depth,
    };
    r.area() - overlap_area(r, &room)
}

/// Unit facing vector for a clockwise-from-+Y rotation.
pub fn facing_vec(deg: u16) -> (f64, f64) {
    match deg {
        0 => (0.0, 1.0),
        90 => (1.0, 0.0),
        180 => (0.0, -1.0),
        270 => (-1.0, 0.0),
        _ => unreachable!(),
    }
}

/// Coordinate of the footprint's back face and of the wall it should touch.
pub fn back_face_and_wall(b: &Aabb, deg: u16, width: f64, depth: f64) -> (f64, f64) {
    match deg {
        0 => (b.y0, 0.0),
        90 => (b.x0, 0.0),
        180 => (b.y1, depth),
        270 => (b.x1, width),
        _ => unreachable!(),
    }
}

pub fn flush(b: &Aabb, deg: u16, width: f64, depth: f64) -> bool {
    let (face, wall) = back_face_and_wall(b, deg, width, depth);
    (face - wall).abs() <= 1e-9
}

pub struct Item {
    pub name: String,
    pub w: f64,
    pub d: f64,
    pub x: f64,
    pub y: f64,
    pub deg: u16,
    pub against_wall: bool,
}

impl Item {
    pub fn aabb(&self) -> Aabb {
        aabb(self.w, self.d, self.x, self.y, self.deg)
    }
}

pub fn items(layout: &Layout, constraints: &[ConstraintSet]) -> Vec<Item> {
    layout
        .iter()
        .map(|(name, p)| Item {
            name: name.to_string(),
            w: p.asset.footprint_w,
            d: p.asset.footprint_d,
            x: p.pose.x,
            y: p.pose.y,
            deg: degrees(p.pose.theta),
            against_wall: constraints.iter().any(|c| c.subject == name && c.against_wall),
        })
        .collect()
}

pub fn item_valid(item: &Item, b: &Aabb, others: &[Item], width: f64, depth: f64) -> bool {
    let inside = b.x0 >= 0.0 && b.y0 >= 0.0 && b.x1 <= width && b.y1 <= depth;
    let free = others
        .iter()
        .filter(|o| o.name != item.name)
        .all(|o| overlap_area(b, &o.aabb()) == 0.0);
    let wall_ok = !item.against_wall || flush(b, item.deg, width, depth);
    inside && free && wall_ok
}

/// Rotation facing away from the closest wall (perpendicular distance from
/// the clamped center; ties go bottom, right, top, left).
pub fn inward_rotation_of_nearest_wall(x: f64, y: f64, width: f64, depth: f64) -> u16 {
    let (x, y) = (x.clamp(0.0, width), y.clamp(0.0, depth));
    let dists = [(y, 0u16), (width - x, 270), (depth - y, 180), (x, 90)];
    let mut best = dists[0];
    for d in &dists[1..] {
        if d.0 < best.0 {
            best = *d;
        }
    }
    best.1
}

/// Exhaustive nearest valid grid position for `name`, seeded at (x, y, deg).
///
/// Wall-bound objects range over the points of the wall behind `deg` and are
/// measured from their back-face midpoint; others range over the strictly
/// interior lattice and are measured from their center. Ties break on the
/// grid point's y, then x. Returns the chosen center and distance squared.
pub fn brute_force_nearest(
    all: &[Item],
    name: &str,
    seed: (f64, f64, u16),
    width: f64,
    depth: f64,
    spacing: f64,
) -> Option<((f64, f64), f64)> {
    let me = all.iter().find(|i| i.name == name).expect("object present");
    let (sx, sy, deg) = seed;
    let (fx, fy) = facing_vec(deg);
    let half = me.d / 2.0;
    let lattice = |extent: f64, inclusive: bool| -> Vec<f64> {
        let mut v = Vec::new();
        let mut k = if inclusive { 0u64 } else { 1 };
        loop {
            let c = k as f64 * spacing;
            if (inclusive && c > extent) || (!inclusive && c >= extent) {
                break;
            }
            v.push(c);
            k += 1;
        }
        v
    };
    let (origin, points): ((f64, f64), Vec<(f64, f64)>) = if me.against_wall {
        let origin = (sx - fx * half, sy - fy * half);
        let pts = match deg {
            0 => lattice(width, true).into_iter().map(|x| (x, 0.0)).collect(),
            180 => lattice(width, true).into_iter().map(|x| (x, depth)).collect(),
            90 => lattice(depth, true).into_iter().map(|y| (0.0, y)).collect(),
            270 => lattice(depth, true).into_iter().map(|y| (width, y)).collect(),
            _ => unreachable!(),
        };
        (origin, pts)
    } else {
        let xs = lattice(width, false);
        let ys = lattice(depth, false);
        let pts = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        ((sx, sy), pts)
    };
    let mut best: Option<((f64, f64), (f64, f64, f64))> = None;
    for g in points {
        let center = if me.against_wall {
            (g.0 + fx * half, g.1 + fy * half)
        } else {
            g
        };
        let probe = Item {
            name: me.name.clone(),
            w: me.w,
            d: me.d,
            x: center.0,
            y: center.1,
            deg,
            against_wall: me.against_wall,
        };
        if !item_valid(&probe, &probe.aabb(), all, width, depth) {
            continue;
        }
        let dx = origin.0 - g.0;
        let dy = origin.1 - g.1;
        let key = (dx * dx + dy * dy, g.1, g.0);
        let better = match &best {
            None => true,
            Some((_, k)) => key.0 < k.0 || (key.0 == k.0 && (key.1 < k.1 || (key.1 == k.1 && key.2 < k.2))),
        };
        if better {
            best = Some((center, key));
        }
    }
    best.map(|(c, k)| (c, k.0))
}

// ---------------------------------------------------------------------------
// Metrics oracle

/// Percentage of pairs with positive overlap, by direct pair counting.
pub fn pair_collision_rate(layout: &Layout) -> f64 {
    let boxes: Vec<Aabb> = layout.iter().map(|(_, p)| aabb_of(&p.asset, p.pose)).collect();
    let n = boxes.len();
    if n < 2 {
        return 0.0;
    }
    let mut hits = 0;
    for i in 0..n {
        for j in i + 1..n {
            if overlap_area(&boxes[i], &boxes[j]) > 0.0 {
                hits += 1;
            }
        }
    }
    100.0 * hits as f64 / (n * (n - 1) / 2) as f64
}

/// Mean outside-the-room area share, estimated with one random sample per
/// cell of a `strata` x `strata` partition of each footprint.
pub fn monte_carlo_oob_rate(layout: &Layout, strata: usize, rng: &mut ChaCha8Rng) -> f64 {
    if layout.is_empty() {
        return 0.0;
    }
    let room = layout.room();
    let mut total = 0.0;
    for (_, p) in layout.iter() {
        let b = aabb_of(&p.asset, p.pose);
        let (cw, ch) = ((b.x1 - b.x0) / strata as f64, (b.y1 - b.y0) / strata as f64);
        let mut outside = 0usize;
        for i in 0..strata {
            for j in 0..strata {
                let x = b.x0 + (i as f64 + rng.random::<f64>()) * cw;
                let y = b.y0 + (j as f64 + rng.random::<f64>()) * ch;
                if !(0.0..=room.width).contains(&x) || !(0.0..=room.depth).contains(&y) {
                    outside += 1;
                }
            }
        }
        total += outside as f64 / (strata * strata) as f64;
    }
    100.0 * total / layout.len() as f64
}

// ---------------------------------------------------------------------------
// Random layouts

pub fn rotation(deg: u16) -> Rotation {
    Rotation::from_degrees(deg as f64).unwrap()
}

/// A layout with a mix of valid, colliding, out-of-bounds and off-wall objects.
pub fn random_broken_layout(
    rng: &mut ChaCha8Rng,
    max_objects: usize,
    max_room: u32,
) -> (Layout, Vec<ConstraintSet>) {
    let width = 10.0 * rng.random_range(15..=max_room / 10) as f64;
    let depth = 10.0 * rng.random_range(15..=max_room / 10) as f64;
    let room = Room::new(width, depth).unwrap();
    let n = rng.random_range(1..=max_objects);
    let mut layout = Layout::empty(room);
    let mut constraints = Vec::new();
    let max_size = (width.min(depth) / 2.0).min(120.0) as u32 / 10;
    for i in 0..n {
        let name = format!("item-{i}");
        let w = 10.0 * rng.random_range(2..=max_size.max(2)) as f64;
        let d = 10.0 * rng.random_range(2..=max_size.max(2)) as f64;
        let deg = [0u16, 90, 180, 270][rng.random_range(0..4)];
        let against_wall = rng.random_bool(0.35);
        let (x, y) = if against_wall && rng.random_bool(0.5) {
            // Flush on the wall behind, somewhere along it.
            let (fx, fy) = facing_vec(deg);
            let along_x = rng.random_range(0.0..width).round();
            let along_y = rng.random_range(0.0..depth).round();
            match deg {
                0 => (along_x, d / 2.0 * fy),
                180 => (along_x, depth + d / 2.0 * fy),
                90 => (d / 2.0 * fx, along_y),
                _ => (width + d / 2.0 * fx, along_y),
            }
        } else {
            (
                rng.random_range(-30.0..width + 30.0).round(),
                rng.random_range(-30.0..depth + 30.0).round(),
            )
        };
        let asset = AssetSpec::new(name.clone(), w, d, 50.0).unwrap();
        layout.insert(asset, Pose::new(x, y, rotation(deg))).unwrap();
        constraints.push(if against_wall {
            ConstraintSet::wall(name)
        } else {
            ConstraintSet::free(name)
        });
    }
    (layout, constraints)
}

// ---------------------------------------------------------------------------
// Stub HTTP server

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub request_line: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl RecordedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves canned `(status, body)` responses in order, one per connection.
pub struct StubServer {
    pub url: String,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
    handle: Option<JoinHandle<()>>,
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn read_request(stream: &mut TcpStream) -> std::io::Result<RecordedRequest> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut headers = Vec::new();
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.eq_ignore_ascii_case("content-length") {
                length = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    Ok(RecordedRequest {
        request_line: request_line.trim_end().to_string(),
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

impl StubServer {
    pub fn start(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let (req2, stop2) = (requests.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            let mut queue = responses.into_iter();
            for stream in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(mut stream) = stream else { continue };
                let Ok(req) = read_request(&mut stream) else { continue };
                req2.lock().unwrap().push(req);
                let (status, body) = queue
                    .next()
                    .unwrap_or((500, "{\"error\": \"no more canned responses\"}".into()));
                let head = format!(
                    "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reason(status),
                    body.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(body.as_bytes());
                let _ = stream.flush();
            }
        });
        Self {
            url: format!("http://{addr}/v1/chat/completions"),
            requests,
            stop,
            addr,
            handle: Some(handle),
        }
    }

    /// Stops the server and returns every request it saw.
    pub fn finish(mut self) -> Vec<RecordedRequest> {
        self.shutdown();
        self.requests.lock().unwrap().clone()
    }

    fn shutdown(&mut self) {
        if let Some(h) = self.handle.take() {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            let _ = h.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// A chat-completions response body carrying `content`.
pub fn completion_body(content: &str) -> String {
    serde_json::json!({
        "id": "chatcmpl-stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

// ---------------------------------------------------------------------------
// Criterion checks shared by the acceptance harness and focused tests

use layoutkit::grid_refine::{build_grid, refine, refine_with_hook, MoveReason, RefineEvent};

/// Replays a refinement report event by event and compares every move and
/// deletion with [`brute_force_nearest`]. Returns the number of events checked.
pub fn check_prt_against_oracle(
    layout: &Layout,
    constraints: &[ConstraintSet],
    spacing: f64,
) -> Result<usize, String> {
    let room = *layout.room();
    let grid = build_grid(&room, spacing).map_err(|e| e.to_string())?;
    let (refined, report) = refine(layout, constraints, &grid);
    let mut state = items(layout, constraints);
    let events = report.events();
    for ev in &events {
        let (name, reason) = match ev {
            RefineEvent::Move(m) => (m.object_name.as_str(), m.reason),
            RefineEvent::Delete(d) => (d.object_name.as_str(), d.reason),
        };
        let idx = state
            .iter()
            .position(|i| i.name == name)
            .ok_or_else(|| format!("event for unplaced `{name}`"))?;
        let cur = &state[idx];
        let seed = match reason {
            MoveReason::Wall => (cur.x, cur.y, inward_rotation_of_nearest_wall(cur.x, cur.y, room.width, room.depth)),
            _ => (cur.x, cur.y, cur.deg),
        };
        let expected = brute_force_nearest(&state, name, seed, room.width, room.depth, spacing);
        match (ev, expected) {
            (RefineEvent::Move(m), Some(((x, y), _))) => {
                if m.to.x != x || m.to.y != y || degrees(m.to.theta) != seed.2 {
                    return Err(format!(
                        "`{name}` ({reason:?}) moved to ({}, {}, {}) but the nearest valid grid pose is ({x}, {y}, {})",
                        m.to.x,
                        m.to.y,
                        degrees(m.to.theta),
                        seed.2
                    ));
                }
                let it = &mut state[idx];
                it.x = x;
                it.y = y;
                it.deg = seed.2;
            }
            (RefineEvent::Delete(_), None) => {
                state.remove(idx);
            }
            (RefineEvent::Move(m), None) => {
                return Err(format!("`{name}` moved to {:?} but no valid grid pose exists", m.to));
            }
            (RefineEvent::Delete(_), Some((c, _))) => {
                return Err(format!("`{name}` deleted although {c:?} is valid"));
            }
        }
    }
    let after = items(&refined, constraints);
    for it in &after {
        if !item_valid(it, &it.aabb(), &after, room.width, room.depth) {
            return Err(format!("`{}` is still invalid after refinement", it.name));
        }
    }
    Ok(events.len())
}

/// refine(refine(x)) == refine(x), and no phase invalidates an object that
/// was valid before it.
pub fn check_prt_idempotent_and_monotone(
    layout: &Layout,
    constraints: &[ConstraintSet],
    spacing: f64,
) -> Result<(), String> {
    let room = *layout.room();
    let grid = build_grid(&room, spacing).map_err(|e| e.to_string())?;
    let valid_names = |l: &Layout| -> Vec<String> {
        let its = items(l, constraints);
        its.iter()
            .filter(|i| item_valid(i, &i.aabb(), &its, room.width, room.depth))
            .map(|i| i.name.clone())
            .collect()
    };
    let mut previously_valid = valid_names(layout);
    let mut problems = Vec::new();
    let (once, _) = refine_with_hook(layout, constraints, &grid, |phase, l| {
        let now = valid_names(l);
        for n in &previously_valid {
            if !now.contains(n) {
                problems.push(format!("{phase:?} invalidated or removed `{n}`"));
            }
        }
        previously_valid = now;
    });
    if let Some(p) = problems.into_iter().next() {
        return Err(p);
    }
    let (twice, report) = refine(&once, constraints, &grid);
    if twice != once || !report.is_empty() {
        return Err(format!("second refinement changed the layout: {report:?}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Recorded transcripts for the remote backend

use layoutkit::agents::mock::{MockBackend, MockOptions};
use layoutkit::agents::{AgentBackend, BackendError, BackendIdentity, Expect, Request};
use layoutkit::scene::LayoutEntry;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedReply {
    pub status: u16,
    /// Reply text for 200 responses; raw error body otherwise.
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
    #[serde(default)]
    pub malformed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub name: String,
    pub seed: u64,
    pub scene: serde_json::Value,
    pub responses: Vec<CannedReply>,
    pub final_layout: Vec<LayoutEntry>,
}

impl Transcript {
    pub fn http_responses(&self) -> Vec<(u16, String)> {
        self.responses
            .iter()
            .map(|r| {
                if r.status == 200 {
                    (200, completion_body(&r.content))
                } else {
                    (r.status, r.content.clone())
                }
            })
            .collect()
    }

    pub fn malformed_count(&self) -> usize {
        self.responses.iter().filter(|r| r.malformed).count()
    }
}

pub fn transcripts_dir() -> PathBuf {
    fixtures_dir().join("transcripts")
}

pub fn load_transcripts() -> Vec<Transcript> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(transcripts_dir())
        .expect("transcript fixtures exist")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap())
        .collect()
}

/// Wraps the mock and keeps every reply with the shape it was asked for.
pub struct RecordingBackend {
    pub inner: MockBackend,
    pub log: Arc<Mutex<Vec<(Expect, String)>>>,
}

impl AgentBackend for RecordingBackend {
    fn complete(&self, request: &Request) -> Result<String, BackendError> {
        let reply = self.inner.complete(request)?;
        self.log.lock().unwrap().push((request.expect, reply.clone()));
        Ok(reply)
    }

    fn identity(&self) -> BackendIdentity {
        self.inner.identity()
    }

    fn wants_images(&self) -> bool {
        false
    }
}

pub fn unfence(text: &str) -> &str {
    let t = text.trim();
    let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
    t.strip_suffix("```").unwrap_or(t).trim()
}

/// Rewrites a clean reply the way chat models tend to decorate output.
pub fn decorate(text: &str, expect: Expect, style: usize) -> String {
    if expect == Expect::Boolean {
        let v = text.trim();
        return match style % 5 {
            0 => v.to_string(),
            1 => format!("{v}."),
            2 => format!("Answer: {v}"),
            3 => v.to_lowercase(),
            _ => format!("**{v}**"),
        };
    }
    let inner = unfence(text);
    match style % 5 {
        0 => format!("```json\n{inner}\n```"),
        1 => format!(
            "Sure! Here is the result in the requested format:\n\n```json\n{inner}\n```\n\nEvery object keeps to the listed constraints."
        ),
        2 => format!("{inner}\n\nLet me know if you would like any adjustments."),
        3 => {
            // Trailing comma inside the outermost container.
            let cut = inner.rfind([']', '}']).unwrap();
            format!("```JSON\n{},\n{}\n```", inner[..cut].trim_end(), &inner[cut..])
        }
        _ => format!("Output:\n```\n{inner}\n```"),
    }
}

/// A reply that must be rejected with a diagnosis.
pub fn malformed_for(clean: &str, expect: Expect) -> String {
    match expect {
        Expect::PlacementJson => {
            let v: serde_json::Value = serde_json::from_str(unfence(clean)).unwrap();
            let name = v[0]["object_name"].as_str().unwrap_or("object-0").to_string();
            format!(
                "```json\n[{{\"object_name\": \"{name}\", \"position\": {{\"X\": 100, \"Y\": 100}}, \"rotation\": 45}}]\n```"
            )
        }
        Expect::AnswerList => "I think the layout looks good overall, nothing to flag.".to_string(),
        Expect::Boolean => "Maybe. It is hard to tell from the image.".to_string(),
        Expect::PlannerJson => "{\"groups\": {}}".to_string(),
    }
}

use layoutkit::config::PipelineConfig;
use layoutkit::gen::{generate_scene, GenOptions};
use layoutkit::orchestrator::Pipeline;
use layoutkit::relations::RelationParams;

/// Runs the mock pipeline on a small generated scene and turns its replies
/// into a decorated transcript, with malformed replies and transient HTTP
/// errors injected by index.
pub fn record_transcript(i: usize) -> Transcript {
    let options = GenOptions {
        seed: 8,
        max_side: 600.0,
        min_assets: 4,
        max_assets: 8,
        ..Default::default()
    };
    let scene = generate_scene(&options, i);
    let seed = 100 + i as u64;
    let log = Arc::new(Mutex::new(Vec::new()));
    let backend = RecordingBackend {
        inner: MockBackend::new(seed, MockOptions::default(), RelationParams::default()),
        log: log.clone(),
    };
    let config = PipelineConfig {
        seed,
        ..Default::default()
    };
    let out = Pipeline::with_backend(config, Box::new(backend))
        .unwrap()
        .synthesize(&scene)
        .unwrap();
    let replies = log.lock().unwrap().clone();

    let mut responses = Vec::new();
    let mut injected_design = false;
    let mut injected_answers = false;
    let mut injected_boolean = false;
    for (k, (expect, text)) in replies.iter().enumerate() {
        if i % 5 == 2 && k == 0 {
            responses.push(CannedReply {
                status: 503,
                content: "{\"error\": {\"message\": \"upstream overloaded\"}}".into(),
                expect: None,
                malformed: false,
            });
        }
        if i % 5 == 4 && k == 2 {
            responses.push(CannedReply {
                status: 429,
                content: "{\"error\": {\"message\": \"rate limit reached\"}}".into(),
                expect: None,
                malformed: false,
            });
        }
        let inject = match expect {
            Expect::PlacementJson if i % 4 == 1 && !injected_design => {
                injected_design = true;
                true
            }
            Expect::AnswerList if i % 4 == 3 && !injected_answers => {
                injected_answers = true;
                true
            }
            Expect::Boolean if i % 6 == 5 && !injected_boolean => {
                injected_boolean = true;
                true
            }
            _ => false,
        };
        if inject {
            responses.push(CannedReply {
                status: 200,
                content: malformed_for(text, *expect),
                expect: Some(*expect),
                malformed: true,
            });
        }
        responses.push(CannedReply {
            status: 200,
            content: decorate(text, *expect, i + k),
            expect: Some(*expect),
            malformed: false,
        });
    }
    Transcript {
        name: format!("transcript-{i:02}"),
        seed,
        scene: serde_json::from_str(&scene.to_json()).unwrap(),
        responses,
        final_layout: LayoutEntry::from_layout(&out.layout),
    }
}

use layoutkit::agents::parse_model_output;
use layoutkit::agents::remote::{RemoteBackend, RemoteConfig};
use layoutkit::orchestrator::TraceEvent;
use layoutkit::render::RenderOptions;
use layoutkit::scene::parse_scene;

pub const STUB_KEY: &str = "sk-stub-0123456789";

#[derive(Debug, Default)]
pub struct TranscriptRun {
    pub requests: usize,
    pub with_image: usize,
    pub diagnoses: usize,
    pub replies_parsed: usize,
    pub replies_diagnosed: usize,
}

/// Replays a transcript through the HTTP backend against a stub server and
/// checks the outcome and the wire format.
pub fn run_transcript(t: &Transcript) -> Result<TranscriptRun, String> {
    let mut run = TranscriptRun::default();
    for r in t.responses.iter().filter(|r| r.status == 200) {
        let expect = r.expect.ok_or("200 reply without an expected shape")?;
        match (parse_model_output(&r.content, expect), r.malformed) {
            (Ok(_), false) => run.replies_parsed += 1,
            (Err(_), true) => run.replies_diagnosed += 1,
            (Ok(_), true) => return Err(format!("{}: malformed reply was accepted: {}", t.name, r.content)),
            (Err(d), false) => return Err(format!("{}: reply rejected: {d}\n{}", t.name, r.content)),
        }
    }

    let server = StubServer::start(t.http_responses());
    let remote = RemoteConfig {
        endpoint: server.url.clone(),
        model: "stub-model".into(),
        max_retries: 2,
        backoff_initial_ms: 1,
        backoff_max_ms: 4,
        timeout_secs: 30.0,
        ..Default::default()
    };
    let backend = RemoteBackend::with_api_key(remote, STUB_KEY).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        seed: t.seed,
        render: RenderOptions {
            long_side: 512,
            ..Default::default()
        },
        ..Default::default()
    };
    let scene = parse_scene(&t.scene.to_string()).map_err(|e| e.to_string())?;
    let result = Pipeline::with_backend(config, Box::new(backend))
        .map_err(|e| e.to_string())?
        .synthesize(&scene);
    let requests = server.finish();
    let out = result.map_err(|e| format!("{}: pipeline failed: {e}", t.name))?;

    run.requests = requests.len();
    if requests.len() != t.responses.len() {
        return Err(format!(
            "{}: {} requests for {} canned responses",
            t.name,
            requests.len(),
            t.responses.len()
        ));
    }
    for req in &requests {
        if !req.request_line.starts_with("POST /v1/chat/completions") {
            return Err(format!("unexpected request line {}", req.request_line));
        }
        if req.header("authorization") != Some(&format!("Bearer {STUB_KEY}")) {
            return Err("missing bearer token".into());
        }
        let body: serde_json::Value = serde_json::from_str(&req.body).map_err(|e| e.to_string())?;
        if body["model"] != "stub-model" || body["temperature"] != 0.0 || !body["messages"].is_array() {
            return Err(format!("bad request body: {}", &req.body[..req.body.len().min(200)]));
        }
        if req.body.contains("data:image/png;base64,") {
            run.with_image += 1;
        }
    }
    let got = LayoutEntry::from_layout(&out.layout);
    if got != t.final_layout {
        return Err(format!("{}: final layout differs from the recording", t.name));
    }
    let text = out.trace.to_ndjson();
    if text.contains(STUB_KEY) {
        return Err("API key leaked into the trace".into());
    }
    run.diagnoses = out
        .trace
        .events
        .iter()
        .filter(|e| matches!(e, TraceEvent::Exchange { exchange, .. } if exchange.diagnosis.is_some()))
        .count();
    if run.diagnoses != t.malformed_count() {
        return Err(format!(
            "{}: {} diagnoses in the trace for {} malformed replies",
            t.name,
            run.diagnoses,
            t.malformed_count()
        ));
    }
    Ok(run)
}

// ---------------------------------------------------------------------------
// Render goldens

use layoutkit::render::{encode_png, render_topdown};

pub fn golden_dir() -> PathBuf {
    core_dir().join("tests").join("golden")
}

/// Fixture scene name and the options it is rendered with.
pub fn render_cases() -> Vec<(&'static str, RenderOptions)> {
    let d = RenderOptions::default();
    vec![
        ("bedroom", d.clone()),
        (
            "living_room",
            RenderOptions {
                show_grid: true,
                ..d.clone()
            },
        ),
        (
            "narrow_hall",
            RenderOptions {
                long_side: 512,
                ..d.clone()
            },
        ),
        (
            "empty",
            RenderOptions {
                long_side: 256,
                show_grid: true,
                grid_spacing: 100.0,
                ..d.clone()
            },
        ),
        (
            "overflow",
            RenderOptions {
                show_labels: false,
                ..d
            },
        ),
    ]
}

pub fn render_case(name: &str, options: &RenderOptions) -> Vec<u8> {
    let path = fixtures_dir().join("render").join(format!("{name}.json"));
    let scene = parse_scene(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let layout = scene.to_layout().unwrap().unwrap_or_else(|| Layout::empty(scene.room));
    encode_png(&render_topdown(&layout, options)).unwrap()
}

/// Compares every case with its committed PNG; `UPDATE_GOLDENS` rewrites them.
pub fn check_render_goldens() -> Result<usize, String> {
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    let mut matched = 0;
    for (name, options) in render_cases() {
        let bytes = render_case(name, &options);
        let path = golden_dir().join(format!("{name}.png"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &bytes).unwrap();
        }
        let golden = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if golden != bytes {
            return Err(format!("{name}: rendered PNG differs from {}", path.display()));
        }
        matched += 1;
    }
    Ok(matched)
}
