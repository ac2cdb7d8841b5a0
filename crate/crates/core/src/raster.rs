//! Rasterization of instances and tours into network inputs and labels,
//! and conversion of network probabilities back into class images.

use std::collections::HashSet;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::sample_pixels;
use crate::instance::{normalize, validate_tour, PixelCoords, Tour, TspInstance};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const RED: Rgb = Rgb([255, 0, 0]);
    pub const BLUE: Rgb = Rgb([0, 0, 255]);
    pub const WHITE: Rgb = Rgb([255, 255, 255]);
    pub const BLACK: Rgb = Rgb([0, 0, 0]);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderMode {
    #[default]
    FullGraph,
    Scatter,
    TourLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Cities are drawn as `(2 * halfwidth + 1)^2` squares.
    pub city_halfwidth: usize,
    /// Label edges are widened by a square brush of this halfwidth.
    pub label_line_halfwidth: usize,
    pub city_color: Rgb,
    pub path_color: Rgb,
    pub background_color: Rgb,
    pub mode: RenderMode,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig::full()
    }
}

impl RenderConfig {
    /// 224x224 with 6-pixel city halfwidth.
    pub fn full() -> Self {
        RenderConfig {
            width: 224,
            height: 224,
            city_halfwidth: 6,
            label_line_halfwidth: 0,
            city_color: Rgb::RED,
            path_color: Rgb::BLUE,
            background_color: Rgb::WHITE,
            mode: RenderMode::FullGraph,
        }
    }

    /// 64x64 for single-core training runs.
    pub fn desk() -> Self {
        RenderConfig {
            width: 64,
            height: 64,
            city_halfwidth: 1,
            label_line_halfwidth: 0,
            ..RenderConfig::full()
        }
    }

    pub fn with_mode(mut self, mode: RenderMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let colors = [self.city_color, self.path_color, self.background_color];
        if colors[0] == colors[1] || colors[1] == colors[2] || colors[0] == colors[2] {
            return Err(Error::Config("city, path and background colors must differ".into()));
        }
        if 2 * self.city_halfwidth + 1 >= self.width.min(self.height) {
            return Err(Error::Config(format!(
                "city halfwidth {} too large for {}x{}",
                self.city_halfwidth, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// 8-bit RGB image, row-major from the top-left corner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let pixels = color.0.iter().copied().cycle().take(width * height * 3).collect();
        RasterImage {
            width,
            height,
            pixels,
        }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{} bytes for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(RasterImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let k = 3 * (y * self.width + x);
        Rgb([self.pixels[k], self.pixels[k + 1], self.pixels[k + 2]])
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let k = 3 * (y * self.width + x);
        self.pixels[k..k + 3].copy_from_slice(&c.0);
    }

    pub fn count(&self, c: Rgb) -> usize {
        self.pixels.chunks_exact(3).filter(|p| *p == c.0).count()
    }
}

/// Per-pixel two-class label: background or path-or-city.
///
/// Stored as one flag per pixel so the one-hot invariant holds by
/// construction; [`LabelMask::one_hot`] expands it to `2 x h x w`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    path: Vec<bool>,
}

impl LabelMask {
    pub fn empty(width: usize, height: usize) -> Self {
        LabelMask {
            width,
            height,
            path: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        LabelMask {
            width,
            height,
            path: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_path(&self, x: usize, y: usize) -> bool {
        self.path[y * self.width + x]
    }

    pub fn set_path(&mut self, x: usize, y: usize, value: bool) {
        self.path[y * self.width + x] = value;
    }

    pub fn path_flags(&self) -> &[bool] {
        &self.path
    }

    pub fn path_count(&self) -> usize {
        self.path.iter().filter(|&&p| p).count()
    }

    /// Channel-major one-hot encoding: channel 0 background, channel 1 path.
    pub fn one_hot(&self) -> Vec<f32> {
        let bg = self.path.iter().map(|&p| if p { 0.0 } else { 1.0 });
        let fg = self.path.iter().map(|&p| if p { 1.0 } else { 0.0 });
        bg.chain(fg).collect()
    }

    /// Black pixels are path class; anything else is background.
    pub fn from_class_image(image: &RasterImage) -> Self {
        LabelMask {
            width: image.width,
            height: image.height,
            path: image.pixels.chunks_exact(3).map(|p| p == Rgb::BLACK.0).collect(),
        }
    }

    /// Path black, background white.
    pub fn to_class_image(&self) -> RasterImage {
        let mut img = RasterImage::filled(self.width, self.height, Rgb::WHITE);
        for (k, &p) in self.path.iter().enumerate() {
            if p {
                img.pixels[3 * k..3 * k + 3].copy_from_slice(&Rgb::BLACK.0);
            }
        }
        img
    }

    /// Flips a seeded random `fraction` of path pixels to background.
    pub fn flip_path_pixels(&self, fraction: f64, seed: u64) -> LabelMask {
        let mut idx: Vec<usize> = (0..self.path.len()).filter(|&k| self.path[k]).collect();
        let flips = (fraction * idx.len() as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let mut out = self.clone();
        for &k in &idx[..flips.min(idx.len())] {
            out.path[k] = false;
        }
        out
    }
}

/// Two-channel per-pixel probabilities (background, path).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    pub width: usize,
    pub height: usize,
    pub background: Vec<f32>,
    pub path: Vec<f32>,
}

impl ProbMap {
    pub fn new(width: usize, height: usize, background: Vec<f32>, path: Vec<f32>) -> Result<Self> {
        if background.len() != width * height || path.len() != width * height {
            return Err(Error::Shape(format!("probability planes do not match {width}x{height}")));
        }
        Ok(ProbMap {
            width,
            height,
            background,
            path,
        })
    }

    /// Certain probabilities taken straight from a label.
    pub fn from_label(mask: &LabelMask) -> Self {
        let path: Vec<f32> = mask.path.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
        ProbMap {
            width: mask.width,
            height: mask.height,
            background: path.iter().map(|p| 1.0 - p).collect(),
            path,
        }
    }
}

/// Argmax classification; ties go to the path class.
pub fn probs_to_mask(probs: &ProbMap) -> Result<LabelMask> {
    let mut path = Vec::with_capacity(probs.path.len());
    for (&bg, &fg) in probs.background.iter().zip(&probs.path) {
        if bg.is_nan() || fg.is_nan() {
            return Err(Error::Numeric("NaN in probability map".into()));
        }
        path.push(fg >= bg);
    }
    Ok(LabelMask {
        width: probs.width,
        height: probs.height,
        path,
    })
}

/// Path class black, background white.
pub fn probs_to_image(probs: &ProbMap) -> Result<RasterImage> {
    Ok(probs_to_mask(probs)?.to_class_image())
}

/// Bresenham segment from `a` to `b`, inclusive of both endpoints.
///
/// The traversal always runs from the lexicographically smaller endpoint,
/// so swapping the endpoints yields the same pixel set (in reverse order).
pub fn line_pixels(
    a: (usize, usize),
    b: (usize, usize),
    w: usize,
    h: usize,
) -> Result<Vec<(usize, usize)>> {
    for p in [a, b] {
        if p.0 >= w || p.1 >= h {
            return Err(Error::Raster(format!("endpoint {p:?} outside {w}x{h}")));
        }
    }
    let swapped = b < a;
    let (s, e) = if swapped { (b, a) } else { (a, b) };
    let (x0, y0, x1, y1) = (s.0 as i64, s.1 as i64, e.0 as i64, e.1 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x as usize, y as usize));
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
    if swapped {
        out.reverse();
    }
    Ok(out)
}

/// Pixels of the city square around `center`, clipped to the image.
pub fn city_square(center: (usize, usize), halfwidth: usize, w: usize, h: usize) -> Vec<(usize, usize)> {
    let x0 = center.0.saturating_sub(halfwidth);
    let y0 = center.1.saturating_sub(halfwidth);
    let x1 = (center.0 + halfwidth).min(w - 1);
    let y1 = (center.1 + halfwidth).min(h - 1);
    (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| (x, y))).collect()
}

fn check_dims(coords: &PixelCoords, cfg: &RenderConfig) -> Result<()> {
    cfg.validate()?;
    if coords.w != cfg.width || coords.h != cfg.height {
        return Err(Error::Shape(format!(
            "coords normalized to {}x{}, config is {}x{}",
            coords.w, coords.h, cfg.width, cfg.height
        )));
    }
    Ok(())
}

fn paint_cities(img: &mut RasterImage, coords: &PixelCoords, cfg: &RenderConfig) {
    for i in 0..coords.n() {
        for (x, y) in city_square(coords.pixel(i), cfg.city_halfwidth, cfg.width, cfg.height) {
            img.set(x, y, cfg.city_color);
        }
    }
}

/// Full-graph input from already normalized coordinates.
pub fn render_input_at(coords: &PixelCoords, cfg: &RenderConfig) -> Result<RasterImage> {
    check_dims(coords, cfg)?;
    let mut img = RasterImage::filled(cfg.width, cfg.height, cfg.background_color);
    let n = coords.n();
    for i in 0..n {
        for j in (i + 1)..n {
            for (x, y) in line_pixels(coords.pixel(i), coords.pixel(j), cfg.width, cfg.height)? {
                img.set(x, y, cfg.path_color);
            }
        }
    }
    paint_cities(&mut img, coords, cfg);
    Ok(img)
}

/// Cities only, no edges.
pub fn render_scatter_at(coords: &PixelCoords, cfg: &RenderConfig) -> Result<RasterImage> {
    check_dims(coords, cfg)?;
    let mut img = RasterImage::filled(cfg.width, cfg.height, cfg.background_color);
    paint_cities(&mut img, coords, cfg);
    Ok(img)
}

/// Every city pair joined by a segment, city squares painted on top.
pub fn render_input(instance: &TspInstance, cfg: &RenderConfig) -> Result<RasterImage> {
    render_input_at(&normalize(instance, cfg.width, cfg.height)?, cfg)
}

pub fn render_scatter(instance: &TspInstance, cfg: &RenderConfig) -> Result<RasterImage> {
    render_scatter_at(&normalize(instance, cfg.width, cfg.height)?, cfg)
}

/// Network input for `cfg.mode` (scatter or full graph).
pub fn render_image(instance: &TspInstance, cfg: &RenderConfig) -> Result<RasterImage> {
    match cfg.mode {
        RenderMode::Scatter => render_scatter(instance, cfg),
        RenderMode::FullGraph | RenderMode::TourLabel => render_input(instance, cfg),
    }
}

/// Pixels marked as path class for one tour edge: the Bresenham segment,
/// widened by the label brush, plus the decoder's density sample trace.
pub fn label_edge_pixels(
    coords: &PixelCoords,
    i: usize,
    j: usize,
    cfg: &RenderConfig,
) -> Result<HashSet<(usize, usize)>> {
    let mut out = HashSet::new();
    for p in line_pixels(coords.pixel(i), coords.pixel(j), cfg.width, cfg.height)? {
        out.extend(city_square(p, cfg.label_line_halfwidth, cfg.width, cfg.height));
    }
    if let Ok(samples) = sample_pixels(coords, i, j) {
        out.extend(samples);
    }
    Ok(out)
}

pub fn render_label_at(coords: &PixelCoords, tour: &Tour, cfg: &RenderConfig) -> Result<LabelMask> {
    check_dims(coords, cfg)?;
    if tour.order.len() != coords.n() {
        return Err(Error::InvalidTour(format!(
            "tour has {} cities, instance has {}",
            tour.order.len(),
            coords.n()
        )));
    }
    let mut mask = LabelMask::empty(cfg.width, cfg.height);
    let n = tour.order.len();
    for k in 0..n {
        let (a, b) = (tour.order[k], tour.order[(k + 1) % n]);
        for (x, y) in label_edge_pixels(coords, a, b, cfg)? {
            mask.set_path(x, y, true);
        }
    }
    for i in 0..n {
        for (x, y) in city_square(coords.pixel(i), cfg.city_halfwidth, cfg.width, cfg.height) {
            mask.set_path(x, y, true);
        }
    }
    Ok(mask)
}

/// Binarized optimal-tour image: tour edges and city squares are path class.
pub fn render_label(instance: &TspInstance, tour: &Tour, cfg: &RenderConfig) -> Result<LabelMask> {
    validate_tour(instance, &tour.order).into_result()?;
    render_label_at(&normalize(instance, cfg.width, cfg.height)?, tour, cfg)
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) if io.kind() != std::io::ErrorKind::UnexpectedEof => {
            Error::io(path, io)
        }
        other => Error::malformed(path, other),
    }
}

pub fn save_png(image: &RasterImage, path: &Path) -> Result<()> {
    let buf = RgbImage::from_raw(image.width as u32, image.height as u32, image.pixels.clone())
        .ok_or_else(|| Error::Shape("pixel buffer does not match dimensions".into()))?;
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn load_png(path: &Path) -> Result<RasterImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let rgb = match img {
        image::DynamicImage::ImageRgb8(rgb) => rgb,
        other => other.to_rgb8(),
    };
    let (w, h) = rgb.dimensions();
    RasterImage::from_raw(w as usize, h as usize, rgb.into_raw())
}

/// Loads an image and checks its dimensions.
pub fn load_png_sized(path: &Path, width: usize, height: usize) -> Result<RasterImage> {
    let img = load_png(path)?;
    if img.width != width || img.height != height {
        return Err(Error::Shape(format!(
            "{} is {}x{}, expected {width}x{height}",
            path.display(),
            img.width,
            img.height
        )));
    }
    Ok(img)
}

/// Label channel 1 as 8-bit grayscale, 255 = path.
pub fn save_mask_png(mask: &LabelMask, path: &Path) -> Result<()> {
    let raw = mask.path.iter().map(|&p| if p { 255 } else { 0 }).collect();
    let buf = GrayImage::from_raw(mask.width as u32, mask.height as u32, raw)
        .ok_or_else(|| Error::Shape("mask buffer does not match dimensions".into()))?;
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn load_mask_png(path: &Path) -> Result<LabelMask> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        _ => return Err(Error::malformed(path, "label mask must be 8-bit grayscale")),
    };
    let (w, h) = gray.dimensions();
    let mut path_flags = Vec::with_capacity((w * h) as usize);
    for &v in gray.as_raw() {
        match v {
            0 => path_flags.push(false),
            255 => path_flags.push(true),
            other => {
                return Err(Error::malformed(path, format!("label value {other} is not 0 or 255")))
            }
        }
    }
    Ok(LabelMask {
        width: w as usize,
        height: h as usize,
        path: path_flags,
    })
}
