//! Plan overlays: each waypoint's gripper outline drawn onto the
//! observation in its own color, plus the single-line text encoding of a
//! plan in pixel space.
//!
//! Everything after projection is integer arithmetic, so renders are
//! bit-identical across runs.

use crate::extraction::{AffordancePlan, WaypointKind};
use crate::geometry::{project_outline, CameraModel, GripperGeometry, Pixel};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("image is {image_w}x{image_h} but camera expects {cam_w}x{cam_h}")]
    DimensionMismatch {
        image_w: u32,
        image_h: u32,
        cam_w: u32,
        cam_h: u32,
    },
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BadBuffer { got: usize, expected: usize },
    #[error("png: {0}")]
    Png(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Rgb = [u8; 3];

/// Row-major RGB8 image.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Image { width, height, pixels }
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RenderError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(RenderError::BadBuffer {
                got: pixels.len(),
                expected,
            });
        }
        Ok(Image { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, c: Rgb) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&c);
    }

    /// Write only when `(x, y)` is inside the image.
    pub fn put_clipped(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
            self.put(x as u32, y as u32, c);
        }
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<(), RenderError> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| RenderError::Png(e.to_string()))?;
        writer
            .write_image_data(&self.pixels)
            .map_err(|e| RenderError::Png(e.to_string()))?;
        writer.finish().map_err(|e| RenderError::Png(e.to_string()))
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, RenderError> {
        let mut out = Vec::new();
        self.write_png(&mut out)?;
        Ok(out)
    }

    pub fn read_png<R: Read + std::io::BufRead + std::io::Seek>(r: R) -> Result<Self, RenderError> {
        let dec = png::Decoder::new(r);
        let mut reader = dec.read_info().map_err(|e| RenderError::Png(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| RenderError::Png("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| RenderError::Png(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(RenderError::Png(format!("unsupported bit depth {:?}", info.bit_depth)));
        }
        buf.truncate(info.buffer_size());
        let pixels = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            other => return Err(RenderError::Png(format!("unsupported color type {other:?}"))),
        };
        Image::from_raw(info.width, info.height, pixels)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, RenderError> {
        Image::read_png(std::io::Cursor::new(bytes))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RenderError> {
        let f = std::fs::File::create(path)?;
        self.write_png(std::io::BufWriter::new(f))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, RenderError> {
        let f = std::fs::File::open(path)?;
        Image::read_png(std::io::BufReader::new(f))
    }

    /// Nearest-neighbour downscale by an integer factor.
    pub fn downscale(&self, factor: u32) -> Image {
        let factor = factor.max(1);
        let w = (self.width / factor).max(1);
        let h = (self.height / factor).max(1);
        let mut out = Image::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                out.put(x, y, self.get((x * factor).min(self.width - 1), (y * factor).min(self.height - 1)));
            }
        }
        out
    }
}

/// Golden-angle hue step between consecutive waypoints (degrees).
pub const GOLDEN_ANGLE_DEG: f64 = 137.508;

/// Full-saturation, full-value color for waypoint `index`.
pub fn palette_color(index: usize) -> Rgb {
    let hue = (index as f64 * GOLDEN_ANGLE_DEG).rem_euclid(360.0);
    hsv_to_rgb(hue, 1.0, 1.0)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Coordinates beyond this many pixels outside the image are clipped in
/// real space before rasterizing, so a near-degenerate projection cannot
/// produce a line millions of pixels long.
const RASTER_GUARD: f64 = 4096.0;

pub fn round_px(x: f64) -> i64 {
    x.round().clamp(-1.0e12, 1.0e12) as i64
}

/// 1px Bresenham line between integer endpoints, both inclusive.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
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
    out
}

/// Liang-Barsky clip of a real segment to `[lo, hi]` on both axes.
fn clip_segment(a: Pixel, b: Pixel, lo: (f64, f64), hi: (f64, f64)) -> Option<(Pixel, Pixel)> {
    let (dx, dy) = (b.u - a.u, b.v - a.v);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [
        (-dx, a.u - lo.0),
        (dx, hi.0 - a.u),
        (-dy, a.v - lo.1),
        (dy, hi.1 - a.v),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then(|| {
        (
            Pixel::new(a.u + t0 * dx, a.v + t0 * dy),
            Pixel::new(a.u + t1 * dx, a.v + t1 * dy),
        )
    })
}

/// Integer pixels of the segment `a`-`b` that fall inside a `width` x
/// `height` image.
pub fn rasterize_segment(a: Pixel, b: Pixel, width: u32, height: u32) -> Vec<(u32, u32)> {
    let (w, h) = (width as f64, height as f64);
    let far = |p: Pixel| p.u < -RASTER_GUARD || p.v < -RASTER_GUARD || p.u > w + RASTER_GUARD || p.v > h + RASTER_GUARD;
    let (a, b) = if far(a) || far(b) {
        match clip_segment(a, b, (-1.0, -1.0), (w, h)) {
            Some(s) => s,
            None => return Vec::new(),
        }
    } else {
        (a, b)
    };
    bresenham(round_px(a.u), round_px(a.v), round_px(b.u), round_px(b.v))
        .into_iter()
        .filter(|&(x, y)| x >= 0 && y >= 0 && x < width as i64 && y < height as i64)
        .map(|(x, y)| (x as u32, y as u32))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Overlay {
    pub image: Image,
    /// Indices of waypoints that could not be projected (behind the camera).
    pub skipped: Vec<usize>,
}

/// Draw every waypoint's outline in palette order onto a copy of `img`.
/// Later waypoints are drawn over earlier ones.
pub fn overlay(
    img: &Image,
    cam: &CameraModel,
    plan: &AffordancePlan,
    geom: &GripperGeometry,
) -> Result<Overlay, RenderError> {
    if img.width != cam.width || img.height != cam.height {
        return Err(RenderError::DimensionMismatch {
            image_w: img.width,
            image_h: img.height,
            cam_w: cam.width,
            cam_h: cam.height,
        });
    }
    let mut out = img.clone();
    let mut skipped = Vec::new();
    for (i, wp) in plan.waypoints().iter().enumerate() {
        let outline = match project_outline(cam, &wp.pose, geom) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("waypoint {i} not drawn: {e}");
                skipped.push(i);
                continue;
            }
        };
        let color = palette_color(i);
        for (a, b) in outline.segments() {
            for (x, y) in rasterize_segment(a, b, img.width, img.height) {
                out.put(x, y, color);
            }
        }
    }
    Ok(Overlay { image: out, skipped })
}

/// Waypoint in integer pixel space. `None` marks a waypoint that could not
/// be projected; it serializes as `(-1,-1)` for all four points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelWaypoint {
    pub kind: WaypointKind,
    pub points: Option<[(i32, i32); 4]>,
}

pub type PixelPlan = Vec<PixelWaypoint>;

/// Project, round to nearest, then clamp into the image.
pub fn pixel_plan(plan: &AffordancePlan, cam: &CameraModel, geom: &GripperGeometry) -> PixelPlan {
    let max_u = cam.width.saturating_sub(1) as i64;
    let max_v = cam.height.saturating_sub(1) as i64;
    plan.waypoints()
        .iter()
        .map(|wp| PixelWaypoint {
            kind: wp.kind,
            points: project_outline(cam, &wp.pose, geom).ok().map(|o| {
                o.points
                    .map(|p| (round_px(p.u).clamp(0, max_u) as i32, round_px(p.v).clamp(0, max_v) as i32))
            }),
        })
        .collect()
}

/// Single-line plan text, e.g. `W0:close;L=(60,54);R=(68,54);T=(64,62);A=(64,72)|W1:final;...`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffordanceText(pub String);

impl fmt::Display for AffordanceText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AffordanceText {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

const POINT_TAGS: [char; 4] = ['L', 'R', 'T', 'A'];

pub fn format_pixel_plan(plan: &[PixelWaypoint]) -> AffordanceText {
    let parts: Vec<String> = plan
        .iter()
        .enumerate()
        .map(|(i, wp)| {
            let pts = wp.points.unwrap_or([(-1, -1); 4]);
            let mut s = format!("W{i}:{}", wp.kind);
            for (tag, (u, v)) in POINT_TAGS.iter().zip(pts) {
                s.push_str(&format!(";{tag}=({u},{v})"));
            }
            s
        })
        .collect();
    AffordanceText(parts.join("|"))
}

pub fn tokenize_plan(plan: &AffordancePlan, cam: &CameraModel, geom: &GripperGeometry) -> AffordanceText {
    format_pixel_plan(&pixel_plan(plan, cam, geom))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        match self.src.get(self.pos) {
            Some(&b) if b == c => {
                self.pos += 1;
                Ok(())
            }
            Some(&b) => self.err(format!("expected {:?}, found {:?}", c as char, b as char)),
            None => self.err(format!("expected {:?}, found end of input", c as char)),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == digits {
            self.pos = start;
            return self.err("expected integer");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse().or_else(|_| {
            self.pos = start;
            self.err("integer out of range")
        })
    }

    fn word(&mut self) -> &'a str {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_alphabetic) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).expect("ascii")
    }
}

/// Inverse of [`format_pixel_plan`].
pub fn parse_plan_text(text: &str) -> Result<PixelPlan, ParseError> {
    let mut c = Cursor {
        src: text.as_bytes(),
        pos: 0,
    };
    let mut plan = Vec::new();
    if text.is_empty() {
        return Ok(plan);
    }
    loop {
        let index = plan.len() as i64;
        c.expect(b'W')?;
        let at = c.pos;
        let got = c.int()?;
        if got != index {
            c.pos = at;
            return c.err(format!("expected waypoint index {index}, found {got}"));
        }
        c.expect(b':')?;
        let at = c.pos;
        let kind: WaypointKind = match c.word().parse() {
            Ok(k) => k,
            Err(msg) => {
                c.pos = at;
                return c.err(msg);
            }
        };
        let mut pts = [(0i32, 0i32); 4];
        for (slot, tag) in pts.iter_mut().zip(POINT_TAGS) {
            c.expect(b';')?;
            c.expect(tag as u8)?;
            c.expect(b'=')?;
            c.expect(b'(')?;
            let at = c.pos;
            let u = c.int()?;
            c.expect(b',')?;
            let v = c.int()?;
            c.expect(b')')?;
            let (Ok(u), Ok(v)) = (i32::try_from(u), i32::try_from(v)) else {
                c.pos = at;
                return c.err("coordinate out of range");
            };
            *slot = (u, v);
        }
        let points = if pts == [(-1, -1); 4] { None } else { Some(pts) };
        plan.push(PixelWaypoint { kind, points });
        match c.src.get(c.pos) {
            None => break,
            Some(b'|') => c.pos += 1,
            Some(&b) => return c.err(format!("expected '|' or end of input, found {:?}", b as char)),
        }
    }
    Ok(plan)
}
