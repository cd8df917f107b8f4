//! Top-down raster view of a layout.
//!
//! Output is pixel-deterministic: integer box fills, no antialiasing, and an
//! embedded bitmap font. Room +Y points up in the image.

mod font;

use std::io::Cursor;
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{footprint, front_center, Rect};
use crate::scene::Layout;

pub const MIN_LONG_SIDE: u32 = 256;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("png encoding failed: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decoding failed: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported png layout: {0}")]
    Unsupported(String),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Palette {
    pub floor: [u8; 3],
    pub wall: [u8; 3],
    pub grid: [u8; 3],
    pub outline: [u8; 3],
    pub tick: [u8; 3],
    pub label: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            floor: [139, 94, 60],
            wall: [255, 255, 255],
            grid: [120, 80, 50],
            outline: [30, 30, 30],
            tick: [200, 20, 20],
            label: [0, 0, 0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    /// Pixels along the image's longer side.
    pub long_side: u32,
    pub show_labels: bool,
    pub show_grid: bool,
    /// Grid line spacing in cm when `show_grid` is set.
    pub grid_spacing: f64,
    pub palette: Palette,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            long_side: 1024,
            show_labels: true,
            show_grid: false,
            grid_spacing: 50.0,
            palette: Palette::default(),
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.long_side < MIN_LONG_SIDE {
            return Err(format!(
                "render long side must be at least {MIN_LONG_SIDE}px, got {}",
                self.long_side
            ));
        }
        if self.show_grid && !(self.grid_spacing.is_finite() && self.grid_spacing > 0.0) {
            return Err("render grid spacing must be positive".into());
        }
        Ok(())
    }
}

/// Packed 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = ((y as u32 * self.width + x as u32) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    /// Fills the half-open pixel box [x0, x1) x [y0, y1), clipped to the image.
    fn fill_box(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
        let x0 = x0.max(0);
        let y0 = y0.max(0);
        let x1 = x1.min(self.width as i64);
        let y1 = y1.min(self.height as i64);
        for y in y0..y1 {
            for x in x0..x1 {
                self.put(x, y, color);
            }
        }
    }
}

/// Maps room centimeters to pixel coordinates.
struct Frame {
    margin: f64,
    scale: f64,
    height: u32,
}

impl Frame {
    fn px_x(&self, x: f64) -> i64 {
        (self.margin + x * self.scale).round() as i64
    }

    fn px_y(&self, y: f64) -> i64 {
        (self.height as f64 - self.margin - y * self.scale).round() as i64
    }

    /// Pixel box of a room-space rect: (left, top, right, bottom), half-open.
    fn rect(&self, r: &Rect) -> (i64, i64, i64, i64) {
        (self.px_x(r.min_x), self.px_y(r.max_y), self.px_x(r.max_x), self.px_y(r.min_y))
    }
}

/// Stable fill color derived from the object name (FNV-1a).
pub fn object_color(name: &str) -> [u8; 3] {
    let mut h: u32 = 0x811c_9dc5;
    for b in name.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    [
        110 + (h & 0x7f) as u8,
        110 + ((h >> 8) & 0x7f) as u8,
        110 + ((h >> 16) & 0x7f) as u8,
    ]
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), thickness: i64, color: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let lo = -(thickness / 2);
    let hi = lo + thickness;
    loop {
        img.fill_box(x + lo, y + lo, x + hi, y + hi, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_text(img: &mut RgbImage, text: &str, cx: i64, cy: i64, scale: i64, color: [u8; 3]) {
    let n = text.chars().count() as i64;
    if n == 0 {
        return;
    }
    let advance = (font::GLYPH_W as i64 + 1) * scale;
    let total_w = n * advance - scale;
    // Kept inside the image when the label is wider than the space left.
    let left = (cx - total_w / 2).min(img.width as i64 - total_w).max(0);
    let top = cy - (font::GLYPH_H as i64 * scale) / 2;
    for (i, c) in text.chars().enumerate() {
        let gx = left + i as i64 * advance;
        for (row, bits) in font::glyph(c).iter().enumerate() {
            for col in 0..font::GLYPH_W as i64 {
                if bits & (1 << (font::GLYPH_W as i64 - 1 - col)) != 0 {
                    let x = gx + col * scale;
                    let y = top + row as i64 * scale;
                    img.fill_box(x, y, x + scale, y + scale, color);
                }
            }
        }
    }
}

/// Draws the floor, walls, and every footprint with its facing tick.
pub fn render_topdown(layout: &Layout, options: &RenderOptions) -> RgbImage {
    let room = layout.room();
    let long_side = options.long_side.max(MIN_LONG_SIDE);
    let margin = (long_side / 64) as f64;
    let scale = (long_side as f64 - 2.0 * margin) / room.width.max(room.depth);
    let width = (2.0 * margin + room.width * scale).round() as u32;
    let height = (2.0 * margin + room.depth * scale).round() as u32;
    let frame = Frame {
        margin,
        scale,
        height,
    };
    let pal = &options.palette;
    let mut img = RgbImage::filled(width, height, pal.wall);

    let (l, t, r, b) = frame.rect(&Rect::room(room));
    img.fill_box(l, t, r, b, pal.floor);

    if options.show_grid && options.grid_spacing > 0.0 {
        let mut x = options.grid_spacing;
        while x < room.width {
            img.fill_box(frame.px_x(x), t, frame.px_x(x) + 1, b, pal.grid);
            x += options.grid_spacing;
        }
        let mut y = options.grid_spacing;
        while y < room.depth {
            img.fill_box(l, frame.px_y(y), r, frame.px_y(y) + 1, pal.grid);
            y += options.grid_spacing;
        }
    }

    let stroke = (long_side / 512).max(1) as i64;
    for (name, p) in layout.iter() {
        let (l, t, r, b) = frame.rect(&footprint(&p.asset, p.pose));
        img.fill_box(l, t, r, b, pal.outline);
        img.fill_box(l + stroke, t + stroke, r - stroke, b - stroke, object_color(name));
        let front = front_center(&p.asset, p.pose);
        draw_line(
            &mut img,
            (frame.px_x(p.pose.x), frame.px_y(p.pose.y)),
            (frame.px_x(front.x), frame.px_y(front.y)),
            stroke + 1,
            pal.tick,
        );
    }
    if options.show_labels {
        for (name, p) in layout.iter() {
            draw_text(
                &mut img,
                name,
                frame.px_x(p.pose.x),
                frame.px_y(p.pose.y),
                stroke,
                pal.label,
            );
        }
    }
    img
}

/// Lossless PNG bytes with fixed encoder settings.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width, img.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::Sub);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&img.pixels)?;
        writer.finish()?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, RenderError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RenderError::Unsupported("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(RenderError::Unsupported(format!(
            "{:?}/{:?}",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(RgbImage {
        width: info.width,
        height: info.height,
        pixels: buf,
    })
}

pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<(), RenderError> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|source| RenderError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Base64 of the PNG encoding, as attached to model requests.
pub fn encode_base64(img: &RgbImage) -> Result<String, RenderError> {
    Ok(base64::engine::general_purpose::STANDARD.encode(encode_png(img)?))
}
