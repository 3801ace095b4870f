//! Rasterizer for artificial captions.
//!
//! Every subject object is drawn large, its attractor objects sit in a row
//! along its top edge, and the verb glyph is stamped at its centre in gray.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::glyphs::glyph_bit_scaled;
use super::spec::{CaptionSpec, Shape};
use crate::error::{Error, Result};
use crate::grammar::VerbPhrase;
use crate::image::ImageBuffer;

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const GLYPH_COLOR: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub canvas_size: usize,
    pub margin_fraction: f64,
    pub small_object_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_seed: Option<u64>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            canvas_size: 64,
            margin_fraction: 0.1,
            small_object_fraction: 0.25,
            jitter_seed: None,
        }
    }
}

/// Derived pixel geometry shared by every spec under one config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub canvas: usize,
    pub margin: usize,
    pub large: usize,
    pub small: usize,
    pub glyph: usize,
}

impl RenderConfig {
    pub fn geometry(&self) -> Result<Geometry> {
        let canvas = self.canvas_size;
        if canvas < 32 {
            return Err(Error::RenderConfig(format!(
                "canvas {canvas} is below the 32 pixel minimum"
            )));
        }
        if !(0.0..0.5).contains(&self.margin_fraction)
            || !(0.0..=1.0).contains(&self.small_object_fraction)
        {
            return Err(Error::RenderConfig("fractions out of range".into()));
        }
        let margin = (self.margin_fraction * canvas as f64).round() as usize;
        let usable = canvas - 2 * margin;
        let large = usable / 3;
        let small = (self.small_object_fraction * large as f64).round() as usize;
        let glyph = large / 2;
        if large < 8 || small < 2 || 3 * small > large || small + large > usable {
            return Err(Error::RenderConfig(format!(
                "canvas {canvas} cannot fit 3 objects of {large}px with 3 attractors of {small}px"
            )));
        }
        Ok(Geometry {
            canvas,
            margin,
            large,
            small,
            glyph,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Subject,
    Attractor,
    Glyph,
}

/// One drawn object: top-left corner and side length of its bounding square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placed {
    pub role: Role,
    pub shape: Option<Shape>,
    pub vp: Option<VerbPhrase>,
    pub color: [u8; 3],
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: ImageBuffer,
    pub objects: Vec<Placed>,
}

/// Whether the pixel with local coordinates `(px, py)` inside a `size`-wide
/// bounding square belongs to `shape`. Sampled at pixel centres.
pub fn shape_contains(shape: Shape, size: usize, px: usize, py: usize) -> bool {
    let u = (px as f64 + 0.5) / size as f64 - 0.5;
    let v = (py as f64 + 0.5) / size as f64 - 0.5;
    match shape {
        Shape::Circle => u * u + v * v <= 0.25,
        Shape::Rectangle => v.abs() <= 0.3,
        Shape::Triangle => {
            // apex at top centre, base along the bottom edge
            let depth = v + 0.5;
            u.abs() <= 0.5 * depth
        }
        Shape::Hexagon => {
            let h = 0.5 * 3f64.sqrt() / 2.0;
            v.abs() <= h && u.abs() <= 0.5 - v.abs() / 3f64.sqrt()
        }
    }
}

pub fn layout(spec: &CaptionSpec, cfg: &RenderConfig) -> Result<Vec<Placed>> {
    let g = cfg.geometry()?;
    let k1 = spec.num1.count();
    let k2 = spec.num2.count();
    let usable = g.canvas - 2 * g.margin;
    let cell = usable as f64 / k1 as f64;
    let block = g.small + g.large;
    let top = g.margin + (usable - block) / 2;
    let slack_x = ((cell - g.large as f64) / 2.0).floor() as i64;
    let slack_y = ((usable - block) / 2) as i64;
    let mut rng = cfg
        .jitter_seed
        .map(|s| ChaCha8Rng::seed_from_u64(s ^ (spec.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));

    let mut objects = Vec::with_capacity(k1 * (k2 + 2));
    for i in 0..k1 {
        let cx = g.margin as f64 + cell * (i as f64 + 0.5);
        let mut x0 = (cx - g.large as f64 / 2.0).round() as i64;
        let mut y0 = (top + g.small) as i64;
        if let Some(rng) = rng.as_mut() {
            if slack_x > 0 {
                x0 += rng.gen_range(-slack_x..=slack_x);
            }
            if slack_y > 0 {
                y0 += rng.gen_range(-slack_y..=slack_y);
            }
        }
        let (x0, y0) = (x0 as usize, y0 as usize);
        objects.push(Placed {
            role: Role::Subject,
            shape: Some(spec.shape1),
            vp: None,
            color: spec.color1.rgb(),
            x: x0,
            y: y0,
            size: g.large,
        });
        for j in 0..k2 {
            let sc = x0 as f64 + g.large as f64 * (j as f64 + 0.5) / k2 as f64;
            objects.push(Placed {
                role: Role::Attractor,
                shape: Some(spec.shape2),
                vp: None,
                color: spec.color2.rgb(),
                x: (sc - g.small as f64 / 2.0).round() as usize,
                y: y0 - g.small,
                size: g.small,
            });
        }
        let off = (g.large - g.glyph) / 2;
        objects.push(Placed {
            role: Role::Glyph,
            shape: None,
            vp: Some(spec.vp),
            color: GLYPH_COLOR,
            x: x0 + off,
            y: y0 + off,
            size: g.glyph,
        });
    }
    Ok(objects)
}

fn draw(image: &mut ImageBuffer, obj: &Placed) {
    for py in 0..obj.size {
        for px in 0..obj.size {
            let hit = match (obj.shape, obj.vp) {
                (Some(shape), _) => shape_contains(shape, obj.size, px, py),
                (None, Some(vp)) => glyph_bit_scaled(vp, obj.size, px, py),
                (None, None) => false,
            };
            if hit {
                image.set(obj.x + px, obj.y + py, obj.color);
            }
        }
    }
}

pub fn render_with_geometry(spec: &CaptionSpec, cfg: &RenderConfig) -> Result<Rendered> {
    let objects = layout(spec, cfg)?;
    let mut image = ImageBuffer::filled(cfg.canvas_size, cfg.canvas_size, BACKGROUND);
    // subjects first, then attractors, glyphs last so they sit on top
    for role in [Role::Subject, Role::Attractor, Role::Glyph] {
        for obj in objects.iter().filter(|o| o.role == role) {
            draw(&mut image, obj);
        }
    }
    Ok(Rendered { image, objects })
}

pub fn render_image(spec: &CaptionSpec, cfg: &RenderConfig) -> Result<ImageBuffer> {
    render_with_geometry(spec, cfg).map(|r| r.image)
}
