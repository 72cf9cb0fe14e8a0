//! Label-bearing synthetic corpus. Each class is true by construction:
//!
//! * `I<aT`: busy coloured scene, one generic line of text.
//! * `I>aT`: sparse monochrome outline schematic, several sentences naming
//!   attributes that are not drawn.
//! * `I=aT`: a few coloured shapes, one sentence per drawn shape naming
//!   exactly its colour and kind.

use ::image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::PreprocessedImage;
use super::text::{clean_text_with, TextCaps};
use super::{AbsLabel, ImageTextPair, Split};
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const GENERATOR_VERSION: &str = "synth-1";

pub const COLORS: &[(&str, [u8; 3])] = &[
    ("red", [220, 40, 40]),
    ("green", [40, 170, 60]),
    ("blue", [40, 80, 220]),
    ("yellow", [235, 200, 30]),
    ("orange", [240, 130, 20]),
    ("purple", [140, 60, 180]),
];

const INK: [u8; 3] = [20, 20, 20];
const BACKGROUND: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle,
    Circle,
    Line,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Rectangle, ShapeKind::Circle, ShapeKind::Line];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Circle => "circle",
            ShapeKind::Line => "line",
        }
    }
}

/// Construction log entry for one rendered shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawnShape {
    pub kind: ShapeKind,
    /// Colour name, or `None` for monochrome ink.
    pub color: Option<String>,
    pub filled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOptions {
    pub image_size: usize,
    pub caps: TextCaps,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            image_size: 60,
            caps: TextCaps::default(),
        }
    }
}

/// Generates `n_per_class` pairs per label (interleaved by label) together
/// with the per-pair construction log.
pub fn generate_synthetic_corpus(
    n_per_class: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<(Vec<ImageTextPair>, Vec<Vec<DrawnShape>>)> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "n_per_class must be at least 1".into(),
        ));
    }
    if opts.image_size < 8 {
        return Err(Error::InvalidArgument(
            "synthetic images need size >= 8".into(),
        ));
    }
    let mut rng = rng_for(seed, "synth");
    let mut pairs = Vec::with_capacity(3 * n_per_class);
    let mut log = Vec::with_capacity(3 * n_per_class);
    for i in 0..n_per_class {
        for label in AbsLabel::ALL {
            let mut canvas = Canvas::new(opts.image_size);
            let (raw_text, drawn) = match label {
                AbsLabel::ImageLessAbstract => detailed_scene(&mut canvas, &mut rng),
                AbsLabel::ImageMoreAbstract => sparse_schematic(&mut canvas, &mut rng),
                AbsLabel::EqualAbstractness => enumerated_scene(&mut canvas, &mut rng),
            };
            let tag = match label {
                AbsLabel::ImageLessAbstract => "lt",
                AbsLabel::ImageMoreAbstract => "gt",
                AbsLabel::EqualAbstractness => "eq",
            };
            pairs.push(ImageTextPair {
                pair_id: format!("synth-{tag}-{i:05}"),
                image: PreprocessedImage::from_rgb(&canvas.img),
                text: clean_text_with(&raw_text, opts.caps),
                label: Some(label),
                source: "synthetic".into(),
                split: Split::Unsplit,
            });
            log.push(drawn);
        }
    }
    Ok((pairs, log))
}

const GENERIC_LINES: &[&str] = &[
    "An illustration of geometric objects.",
    "A picture with some shapes.",
    "The figure shows a scene.",
    "A diagram of several items.",
    "Some objects in an image.",
];

fn detailed_scene(canvas: &mut Canvas, rng: &mut ChaCha8Rng) -> (String, Vec<DrawnShape>) {
    let s = canvas.size as i64;
    canvas.fill_rect(0, 0, s, s, [236, 236, 228]);
    let ground = s * 3 / 4;
    canvas.fill_rect(0, ground, s, s, [170, 200, 150]);
    let n = rng.random_range(6..=10);
    let mut drawn = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = *ShapeKind::ALL.choose(rng).unwrap();
        let (name, color) = *COLORS.choose(rng).unwrap();
        canvas.draw_random(kind, color, true, rng);
        drawn.push(DrawnShape {
            kind,
            color: Some(name.into()),
            filled: kind != ShapeKind::Line,
        });
    }
    let line = GENERIC_LINES.choose(rng).unwrap();
    (line.to_string(), drawn)
}

const SIZES: &[&str] = &["small", "large", "tiny", "huge", "medium"];
const PLACES: &[&str] = &["left", "right", "top", "bottom", "center"];
const TEXTURES: &[&str] = &[
    "striped", "dotted", "glossy", "wooden", "metallic", "shaded",
];

fn sparse_schematic(canvas: &mut Canvas, rng: &mut ChaCha8Rng) -> (String, Vec<DrawnShape>) {
    let s = canvas.size as i64;
    canvas.fill_rect(0, 0, s, s, BACKGROUND);
    let n = rng.random_range(1..=3);
    let mut drawn = Vec::with_capacity(n);
    let mut sentences = Vec::new();
    for _ in 0..n {
        let kind = *ShapeKind::ALL.choose(rng).unwrap();
        canvas.draw_random(kind, INK, false, rng);
        drawn.push(DrawnShape {
            kind,
            color: None,
            filled: false,
        });
        let (color, _) = *COLORS.choose(rng).unwrap();
        sentences.push(format!(
            "The {} {} {} is placed near the {} and has a {} surface.",
            SIZES.choose(rng).unwrap(),
            color,
            kind.name(),
            PLACES.choose(rng).unwrap(),
            TEXTURES.choose(rng).unwrap()
        ));
    }
    for _ in 0..rng.random_range(2..=3) {
        let (c1, _) = *COLORS.choose(rng).unwrap();
        let (c2, _) = *COLORS.choose(rng).unwrap();
        sentences.push(format!(
            "Its border is {} while a {} {} shadow falls to the {}.",
            c1,
            TEXTURES.choose(rng).unwrap(),
            c2,
            PLACES.choose(rng).unwrap()
        ));
    }
    (sentences.join(" "), drawn)
}

fn enumerated_scene(canvas: &mut Canvas, rng: &mut ChaCha8Rng) -> (String, Vec<DrawnShape>) {
    let s = canvas.size as i64;
    canvas.fill_rect(0, 0, s, s, BACKGROUND);
    let n = rng.random_range(2..=4);
    let mut drawn = Vec::with_capacity(n);
    let mut sentences = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = *ShapeKind::ALL.choose(rng).unwrap();
        let (name, color) = *COLORS.choose(rng).unwrap();
        canvas.draw_random(kind, color, true, rng);
        drawn.push(DrawnShape {
            kind,
            color: Some(name.into()),
            filled: kind != ShapeKind::Line,
        });
        sentences.push(format!("There is a {} {}.", name, kind.name()));
    }
    (sentences.join(" "), drawn)
}

struct Canvas {
    size: usize,
    img: RgbImage,
}

impl Canvas {
    fn new(size: usize) -> Self {
        Self {
            size,
            img: RgbImage::from_pixel(size as u32, size as u32, Rgb(BACKGROUND)),
        }
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.size && (y as usize) < self.size {
            self.img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }

    fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
        for y in y0..y1 {
            for x in x0..x1 {
                self.put(x, y, color);
            }
        }
    }

    fn outline_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, t: i64, color: [u8; 3]) {
        self.fill_rect(x0, y0, x1, y0 + t, color);
        self.fill_rect(x0, y1 - t, x1, y1, color);
        self.fill_rect(x0, y0, x0 + t, y1, color);
        self.fill_rect(x1 - t, y0, x1, y1, color);
    }

    fn circle(&mut self, cx: i64, cy: i64, r: i64, filled: bool, t: i64, color: [u8; 3]) {
        let inner = if filled { -1 } else { (r - t) * (r - t) };
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                let d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                if d <= r * r && d > inner {
                    self.put(x, y, color);
                }
            }
        }
    }

    fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, t: i64, color: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.fill_rect(x, y, x + t, y + t, color);
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

    fn draw_random(&mut self, kind: ShapeKind, color: [u8; 3], filled: bool, rng: &mut ChaCha8Rng) {
        let s = self.size as i64;
        let t = (s / 40).max(1);
        match kind {
            ShapeKind::Rectangle => {
                let w = rng.random_range(s / 8..=s / 3);
                let h = rng.random_range(s / 8..=s / 3);
                let x0 = rng.random_range(0..s - w);
                let y0 = rng.random_range(0..s - h);
                if filled {
                    self.fill_rect(x0, y0, x0 + w, y0 + h, color);
                } else {
                    self.outline_rect(x0, y0, x0 + w, y0 + h, t, color);
                }
            }
            ShapeKind::Circle => {
                let r = rng.random_range(s / 12..=s / 5);
                let cx = rng.random_range(r..s - r);
                let cy = rng.random_range(r..s - r);
                self.circle(cx, cy, r, filled, t, color);
            }
            ShapeKind::Line => {
                let x0 = rng.random_range(0..s);
                let y0 = rng.random_range(0..s);
                let x1 = rng.random_range(0..s);
                let y1 = rng.random_range(0..s);
                self.line(x0, y0, x1, y1, t + i64::from(filled), color);
            }
        }
    }
}
