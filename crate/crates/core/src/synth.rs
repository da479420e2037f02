//! Synthetic labeled scenes: skin-tone ellipses over a mosaic background
//! with non-skin distractor shapes, a global illumination ramp and noise.
//!
//! Skin colors come from a built-in palette, or when a model is supplied,
//! are drawn inside all of its inner polygons while distractors are drawn
//! outside all of its outer polygons.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{GroundTruth, GtLabel, GT_SUFFIX};
use crate::error::{Error, Result};
use crate::imgio::{rgb_to_ycbcr, save_pnm, ColorSpace, ColorTriple, Raster};
use crate::model::{Plane, SkinColorModel};
use crate::polygon::Point2;

const SKIN_BASES: [[u8; 3]; 8] = [
    [232, 190, 160],
    [224, 172, 140],
    [210, 160, 125],
    [198, 134, 100],
    [181, 120, 90],
    [160, 105, 75],
    [141, 85, 54],
    [240, 200, 175],
];

#[derive(Clone, Copy)]
pub enum Palette<'a> {
    Builtin,
    Model(&'a SkinColorModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Skin ellipses per scene, inclusive range.
    pub skin_shapes: (usize, usize),
    pub distractors: (usize, usize),
    /// Background mosaic cells, inclusive range.
    pub clutter: (usize, usize),
    /// Ellipse semi-axis range in pixels.
    pub radius: (f64, f64),
    /// Peak illumination deviation from unit gain.
    pub ramp: f64,
    /// Uniform per-channel noise amplitude.
    pub noise: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 320,
            height: 240,
            skin_shapes: (1, 3),
            distractors: (2, 5),
            clutter: (20, 60),
            radius: (18.0, 48.0),
            ramp: 0.08,
            noise: 4,
        }
    }
}

/// Rough skin test used to keep built-in distractors away from skin tones.
fn skin_like(c: [u8; 3]) -> bool {
    let [r, g, b] = c.map(i32::from);
    let mx = r.max(g).max(b);
    let mn = r.min(g).min(b);
    r > 80 && g > 30 && b > 15 && mx - mn > 10 && (r - g).abs() > 10 && r > g && r > b
}

fn inside_all(model: &SkinColorModel, c: [u8; 3], inner: bool) -> bool {
    let ycc = rgb_to_ycbcr(ColorTriple(c));
    Plane::ALL.iter().all(|&p| {
        let (a, b) = p.project(ycc);
        let pair = model.pair(p);
        let poly = if inner { &pair.inner } else { &pair.outer };
        poly.contains(Point2::new(f64::from(a), f64::from(b)))
    })
}

fn outside_all(model: &SkinColorModel, c: [u8; 3]) -> bool {
    let ycc = rgb_to_ycbcr(ColorTriple(c));
    Plane::ALL.iter().all(|&p| {
        let (a, b) = p.project(ycc);
        !model.pair(p).outer.contains(Point2::new(f64::from(a), f64::from(b)))
    })
}

fn scaled(c: [u8; 3], g: f64) -> [u8; 3] {
    c.map(|v| (f64::from(v) * g).round().clamp(0.0, 255.0) as u8)
}

impl Palette<'_> {
    /// A skin color; model-drawn colors stay inside the inner polygons
    /// under gains `1 +- ramp`.
    fn skin(&self, rng: &mut ChaCha8Rng, ramp: f64) -> [u8; 3] {
        match self {
            Palette::Builtin => {
                let base = SKIN_BASES[rng.gen_range(0..SKIN_BASES.len())];
                let k: f64 = rng.gen_range(0.92..1.06);
                base.map(|v| (f64::from(v) * k + rng.gen_range(-6.0..6.0)).round().clamp(0.0, 255.0) as u8)
            }
            Palette::Model(m) => {
                for _ in 0..50_000 {
                    let c: [u8; 3] = rng.gen();
                    if [1.0 - ramp, 1.0, 1.0 + ramp].iter().all(|&g| inside_all(m, scaled(c, g), true)) {
                        return c;
                    }
                }
                Palette::Builtin.skin(rng, ramp)
            }
        }
    }

    /// A non-skin color that stays non-skin under gains `1 +- ramp`.
    fn nonskin(&self, rng: &mut ChaCha8Rng, ramp: f64) -> [u8; 3] {
        for _ in 0..20_000 {
            let c: [u8; 3] = rng.gen();
            let ok = [1.0 - ramp, 1.0, 1.0 + ramp].iter().all(|&g| {
                let c = scaled(c, g);
                match self {
                    Palette::Builtin => !skin_like(c),
                    Palette::Model(m) => outside_all(m, c),
                }
            });
            if ok {
                return c;
            }
        }
        [30, 60, 200]
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn random(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Self {
        let rx = rng.gen_range(cfg.radius.0..=cfg.radius.1);
        let ry = rng.gen_range(cfg.radius.0..=cfg.radius.1);
        let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        Ellipse {
            cx: rng.gen_range(0.0..cfg.width as f64),
            cy: rng.gen_range(0.0..cfg.height as f64),
            rx,
            ry,
            cos: th.cos(),
            sin: th.sin(),
        }
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * self.cos + dy * self.sin) / self.rx;
        let v = (-dx * self.sin + dy * self.cos) / self.ry;
        u * u + v * v <= 1.0
    }

    /// Fraction of a pixel covered, from a 4x4 subsample grid.
    fn coverage(&self, px: usize, py: usize) -> f64 {
        let mut n = 0;
        for sy in 0..4 {
            for sx in 0..4 {
                let x = px as f64 + (sx as f64 + 0.5) / 4.0;
                let y = py as f64 + (sy as f64 + 0.5) / 4.0;
                n += u32::from(self.inside(x, y));
            }
        }
        f64::from(n) / 16.0
    }

    fn shifted(&self, dx: f64, dy: f64) -> Self {
        Ellipse {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    fn bbox(&self, w: usize, h: usize) -> (usize, usize, usize, usize) {
        let r = self.rx.max(self.ry) + 1.0;
        let clampi = |v: f64, hi: usize| v.floor().clamp(0.0, hi as f64) as usize;
        (
            clampi(self.cx - r, w),
            clampi(self.cy - r, h),
            clampi(self.cx + r + 1.0, w),
            clampi(self.cy + r + 1.0, h),
        )
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Oval(Ellipse),
}

impl Shape {
    fn inside(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Rect { x0, y0, x1, y1 } => x >= *x0 && x < *x1 && y >= *y0 && y < *y1,
            Shape::Oval(e) => e.inside(x, y),
        }
    }
}

/// A scene description; frames render it at any translation.
#[derive(Debug, Clone)]
pub struct Scene {
    width: usize,
    height: usize,
    /// Background mosaic: nearest site wins.
    bg: Vec<((f64, f64), [f64; 3])>,
    distractors: Vec<(Shape, [f64; 3])>,
    skin: Vec<(Ellipse, [f64; 3])>,
    ramp_dir: (f64, f64),
    ramp: f64,
    noise: i32,
    noise_seed: u64,
}

impl Scene {
    pub fn random(cfg: &SynthConfig, palette: Palette<'_>, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.width == 0 || cfg.height == 0 {
            return Err(Error::Param("scene size must be positive".into()));
        }
        let bad = |r: (usize, usize)| r.0 > r.1;
        if cfg.radius.0 <= 0.0 || cfg.radius.0 > cfg.radius.1 || bad(cfg.skin_shapes) || bad(cfg.distractors) || bad(cfg.clutter) || cfg.clutter.1 == 0 {
            return Err(Error::Param("bad synthetic scene ranges".into()));
        }
        let f = |c: [u8; 3]| c.map(f64::from);
        let unit = |rng: &mut ChaCha8Rng| {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (a.cos(), a.sin())
        };
        let nb = rng.gen_range(cfg.clutter.0.max(1)..=cfg.clutter.1);
        let bg = (0..nb)
            .map(|_| {
                let site = (rng.gen_range(0.0..cfg.width as f64), rng.gen_range(0.0..cfg.height as f64));
                (site, f(palette.nonskin(rng, cfg.ramp)))
            })
            .collect();
        let nd = rng.gen_range(cfg.distractors.0..=cfg.distractors.1);
        let mut distractors = Vec::with_capacity(nd);
        for _ in 0..nd {
            let shape = if rng.gen_bool(0.5) {
                let (w, h) = (cfg.width as f64, cfg.height as f64);
                let x0 = rng.gen_range(0.0..w);
                let y0 = rng.gen_range(0.0..h);
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.gen_range(8.0..w / 2.0 + 9.0),
                    y1: y0 + rng.gen_range(8.0..h / 2.0 + 9.0),
                }
            } else {
                Shape::Oval(Ellipse::random(rng, cfg))
            };
            distractors.push((shape, f(palette.nonskin(rng, cfg.ramp))));
        }
        let ns = rng.gen_range(cfg.skin_shapes.0..=cfg.skin_shapes.1);
        let skin = (0..ns)
            .map(|_| (Ellipse::random(rng, cfg), f(palette.skin(rng, cfg.ramp))))
            .collect();
        Ok(Scene {
            width: cfg.width,
            height: cfg.height,
            bg,
            distractors,
            skin,
            ramp_dir: unit(rng),
            ramp: cfg.ramp,
            noise: cfg.noise,
            noise_seed: rng.gen(),
        })
    }

    /// Renders the scene with skin shapes moved by `(dx, dy)` pixels.
    pub fn render(&self, dx: f64, dy: f64, frame: u64) -> (Raster, GroundTruth) {
        let (w, h) = (self.width, self.height);
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let diag = ((w * w + h * h) as f64).sqrt().max(1.0);
        let proj = |d: (f64, f64), x: f64, y: f64| ((x - w as f64 / 2.0) * d.0 + (y - h as f64 / 2.0) * d.1) / diag;

        let mut color = vec![[0f64; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                let d2 = |(sx, sy): (f64, f64)| (sx - fx) * (sx - fx) + (sy - fy) * (sy - fy);
                let mut c = self.bg[0].1;
                let mut best = f64::INFINITY;
                for (site, sc) in &self.bg {
                    let d = d2(*site);
                    if d < best {
                        best = d;
                        c = *sc;
                    }
                }
                for (s, sc) in &self.distractors {
                    if s.inside(fx, fy) {
                        c = *sc;
                    }
                }
                color[y * w + x] = c;
            }
        }
        let mut cover = vec![0f64; w * h];
        for (e, sc) in &self.skin {
            let e = e.shifted(dx, dy);
            let (x0, y0, x1, y1) = e.bbox(w, h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let a = e.coverage(x, y);
                    if a == 0.0 {
                        continue;
                    }
                    let i = y * w + x;
                    for (k, ck) in color[i].iter_mut().enumerate() {
                        *ck = *ck * (1.0 - a) + sc[k] * a;
                    }
                    cover[i] = cover[i].max(a);
                }
            }
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let gain = 1.0 + 2.0 * self.ramp * proj(self.ramp_dir, x as f64 + 0.5, y as f64 + 0.5);
                for &c in &color[y * w + x] {
                    let n = if self.noise > 0 { rng.gen_range(-self.noise..=self.noise) } else { 0 };
                    data.push((c * gain + f64::from(n)).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        let labels = cover
            .iter()
            .map(|&a| match a {
                a if a >= 1.0 => GtLabel::Skin,
                a if a <= 0.0 => GtLabel::NonSkin,
                _ => GtLabel::Undecided,
            })
            .collect();
        (
            Raster::new(w, h, ColorSpace::Rgb8, data).expect("sized buffer"),
            GroundTruth::new(w, h, labels).expect("sized labels"),
        )
    }
}

/// One random still scene.
pub fn synth_image(cfg: &SynthConfig, palette: Palette<'_>, seed: u64) -> Result<(Raster, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Scene::random(cfg, palette, &mut rng)?.render(0.0, 0.0, 0))
}

/// `count` scenes from one seed; scene `i` depends only on `(seed, i)`.
pub fn synth_corpus(cfg: &SynthConfig, palette: Palette<'_>, count: usize, seed: u64) -> Result<Vec<(Raster, GroundTruth)>> {
    (0..count)
        .map(|i| synth_image(cfg, palette, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
        .collect()
}

/// Frames of one scene whose skin shapes drift by `step` pixels per frame.
pub fn synth_sequence(
    cfg: &SynthConfig,
    palette: Palette<'_>,
    frames: usize,
    step: (f64, f64),
    seed: u64,
) -> Result<Vec<(Raster, GroundTruth)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::random(cfg, palette, &mut rng)?;
    Ok((0..frames)
        .map(|i| scene.render(step.0 * i as f64, step.1 * i as f64, i as u64))
        .collect())
}

fn write_pairs(dir: &Path, prefix: &str, items: &[(Raster, GroundTruth)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, (img, gt)) in items.iter().enumerate() {
        save_pnm(img, dir.join(format!("{prefix}{i:04}.ppm")))?;
        save_pnm(&gt.to_raster(), dir.join(format!("{prefix}{i:04}{GT_SUFFIX}")))?;
    }
    Ok(())
}

/// Writes `synth_NNNN.ppm` with matching ground truth into `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, cfg: &SynthConfig, palette: Palette<'_>, count: usize, seed: u64) -> Result<()> {
    write_pairs(dir.as_ref(), "synth_", &synth_corpus(cfg, palette, count, seed)?)
}

/// Writes `frame_NNNN.ppm` with matching ground truth into `dir`.
pub fn write_sequence(
    dir: impl AsRef<Path>,
    cfg: &SynthConfig,
    palette: Palette<'_>,
    frames: usize,
    step: (f64, f64),
    seed: u64,
) -> Result<()> {
    write_pairs(dir.as_ref(), "frame_", &synth_sequence(cfg, palette, frames, step, seed)?)
}
