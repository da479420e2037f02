//! Pre-filter: ternary pixel classification, neighbor-based refinement and
//! window candidacy.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgio::{ColorSpace, Mask, Raster};
use crate::model::{Plane, SkinColorModel};
use crate::polygon::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TernaryClass {
    /// T3: confidently not skin colored.
    Black,
    /// T2: undecided.
    Gray,
    /// T1: confidently skin colored.
    White,
}

impl TernaryClass {
    /// Neighborhood score contribution.
    #[inline]
    pub fn weight(self) -> u32 {
        match self {
            TernaryClass::Black => 0,
            TernaryClass::Gray => 1,
            TernaryClass::White => 2,
        }
    }

    pub fn sample(self) -> u8 {
        match self {
            TernaryClass::Black => 0,
            TernaryClass::Gray => 128,
            TernaryClass::White => 255,
        }
    }

    pub fn from_sample(v: u8) -> Option<Self> {
        match v {
            0 => Some(TernaryClass::Black),
            128 => Some(TernaryClass::Gray),
            255 => Some(TernaryClass::White),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryImage {
    width: usize,
    height: usize,
    labels: Vec<TernaryClass>,
}

impl TernaryImage {
    pub fn new(width: usize, height: usize, labels: Vec<TernaryClass>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "ternary image {width}x{height} with {} labels",
                labels.len()
            )));
        }
        Ok(TernaryImage {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, c: TernaryClass) -> Self {
        TernaryImage {
            width,
            height,
            labels: vec![c; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[TernaryClass] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> TernaryClass {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: TernaryClass) {
        self.labels[y * self.width + x] = c;
    }

    pub fn count(&self, c: TernaryClass) -> usize {
        self.labels.iter().filter(|&&l| l == c).count()
    }

    /// PGM with 0 = Black, 128 = Gray, 255 = White.
    pub fn to_raster(&self) -> Raster {
        Raster::new(
            self.width,
            self.height,
            ColorSpace::Gray8,
            self.labels.iter().map(|l| l.sample()).collect(),
        )
        .expect("valid dimensions")
    }

    pub fn from_raster(r: &Raster) -> Result<Self> {
        if r.space() != ColorSpace::Gray8 {
            return Err(Error::Format("ternary image must be a PGM".into()));
        }
        let labels = r
            .data()
            .iter()
            .map(|&v| {
                TernaryClass::from_sample(v)
                    .ok_or_else(|| Error::Format(format!("ternary sample {v} is not 0/128/255")))
            })
            .collect::<Result<Vec<_>>>()?;
        TernaryImage::new(r.width(), r.height(), labels)
    }
}

#[inline]
fn classify_with(inside_inner: [bool; 3], inside_outer: [bool; 3]) -> TernaryClass {
    if inside_inner.iter().all(|&b| b) {
        TernaryClass::White
    } else if inside_outer.iter().all(|&b| b) {
        TernaryClass::Gray
    } else {
        TernaryClass::Black
    }
}

/// Classifies one YCbCr triple by direct polygon tests.
pub fn classify_pixel(ycc: crate::imgio::ColorTriple, m: &SkinColorModel) -> TernaryClass {
    let mut inner = [false; 3];
    let mut outer = [false; 3];
    for (i, plane) in Plane::ALL.iter().enumerate() {
        let (a, b) = plane.project(ycc);
        let p = Point2::new(f64::from(a), f64::from(b));
        let pair = m.pair(*plane);
        inner[i] = pair.inner.contains(p);
        outer[i] = pair.outer.contains(p);
    }
    classify_with(inner, outer)
}

/// Ternary classification by direct polygon tests on every pixel.
pub fn classify_ternary(img: &Raster, m: &SkinColorModel) -> Result<TernaryImage> {
    expect_ycbcr(img)?;
    let labels = (0..img.pixel_count())
        .into_par_iter()
        .map(|i| classify_pixel(img.triple_at(i), m))
        .collect();
    TernaryImage::new(img.width(), img.height(), labels)
}

fn expect_ycbcr(img: &Raster) -> Result<()> {
    if img.space() != ColorSpace::YCbCr8 {
        return Err(Error::Format(format!(
            "ternary classification needs a YCbCr raster, got {:?}",
            img.space()
        )));
    }
    Ok(())
}

/// Per-plane membership tables precomputed from a model's polygons.
/// Entry bit 0 = inside outer, bit 1 = inside inner.
#[derive(Debug, Clone)]
pub struct TernaryLut {
    planes: [Vec<u8>; 3],
}

impl TernaryLut {
    pub fn from_model(m: &SkinColorModel) -> Self {
        let planes = Plane::ALL.map(|plane| {
            let pair = m.pair(plane);
            (0..65536usize)
                .into_par_iter()
                .map(|i| {
                    let p = Point2::new((i >> 8) as f64, (i & 255) as f64);
                    u8::from(pair.outer.contains(p)) | (u8::from(pair.inner.contains(p)) << 1)
                })
                .collect()
        });
        TernaryLut { planes }
    }

    #[inline]
    pub fn classify(&self, ycc: crate::imgio::ColorTriple) -> TernaryClass {
        let [y, cb, cr] = ycc.0;
        let idx = |a: u8, b: u8| (usize::from(a) << 8) | usize::from(b);
        let m = self.planes[0][idx(y, cb)] & self.planes[1][idx(y, cr)] & self.planes[2][idx(cb, cr)];
        match m {
            3 => TernaryClass::White,
            1 => TernaryClass::Gray,
            // inner implies outer, so 2 cannot occur
            _ => TernaryClass::Black,
        }
    }

    pub fn classify_image(&self, img: &Raster) -> Result<TernaryImage> {
        expect_ycbcr(img)?;
        let labels = img
            .data()
            .par_chunks(3)
            .map(|c| self.classify(crate::imgio::ColorTriple([c[0], c[1], c[2]])))
            .collect();
        TernaryImage::new(img.width(), img.height(), labels)
    }
}

/// Summed-area table with a zero guard row and column.
struct Integral {
    stride: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(width: usize, height: usize, value: impl Fn(usize) -> u32) -> Self {
        let stride = width + 1;
        let mut sums = vec![0u32; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0u32;
            for x in 0..width {
                row += value(y * width + x);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Integral { stride, sums }
    }

    /// Sum over `[x0, x1) x [y0, y1)`.
    #[inline]
    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u32 {
        let s = self.stride;
        self.sums[y1 * s + x1] + self.sums[y0 * s + x0] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]
    }
}

/// Neighbor score `K*T + Phi` of the pixel at `(x, y)`, where T sums label
/// weights over the 8-cell 3x3 ring and Phi over the 16-cell 5x5 outer ring.
/// The pixel must be at least two pixels away from every border.
pub fn neighbor_score(t: &TernaryImage, x: usize, y: usize, k: f64) -> f64 {
    let mut ring3 = 0u32;
    let mut ring5 = 0u32;
    for dy in -2i64..=2 {
        for dx in -2i64..=2 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let w = t
                .get((x as i64 + dx) as usize, (y as i64 + dy) as usize)
                .weight();
            if dx.abs() <= 1 && dy.abs() <= 1 {
                ring3 += w;
            } else {
                ring5 += w;
            }
        }
    }
    k * f64::from(ring3) + f64::from(ring5)
}

/// Relabels non-White interior pixels from their neighborhood score: Black
/// below `th1`, White above `th2`, Gray otherwise. White pixels and the
/// two-pixel frame keep their input label.
pub fn neighbor_refine(t: &TernaryImage, k: f64, th1: f64, th2: f64) -> Result<TernaryImage> {
    if th1 >= th2 {
        return Err(Error::Param(format!("th1 ({th1}) must be below th2 ({th2})")));
    }
    let (w, h) = (t.width, t.height);
    let integral = Integral::new(w, h, |i| t.labels[i].weight());
    let mut out = t.labels.clone();
    if w < 5 || h < 5 {
        return TernaryImage::new(w, h, out);
    }
    out.par_chunks_mut(w)
        .enumerate()
        .skip(2)
        .take(h - 4)
        .for_each(|(y, row)| {
            for x in 2..w - 2 {
                if row[x] == TernaryClass::White {
                    continue;
                }
                let centre = t.labels[y * w + x].weight();
                let box3 = integral.rect(x - 1, y - 1, x + 2, y + 2);
                let box5 = integral.rect(x - 2, y - 2, x + 3, y + 3);
                let ring3 = box3 - centre;
                let ring5 = box5 - box3;
                let xi = k * f64::from(ring3) + f64::from(ring5);
                row[x] = if xi < th1 {
                    TernaryClass::Black
                } else if xi > th2 {
                    TernaryClass::White
                } else {
                    TernaryClass::Gray
                };
            }
        });
    TernaryImage::new(w, h, out)
}

/// Window size and placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowLayout {
    pub tile_w: usize,
    pub tile_h: usize,
    pub stride: usize,
}

impl Default for WindowLayout {
    fn default() -> Self {
        WindowLayout {
            tile_w: 16,
            tile_h: 16,
            stride: 16,
        }
    }
}

fn window_count(extent: usize, tile: usize, stride: usize) -> usize {
    if extent <= tile {
        1
    } else {
        (extent - tile).div_ceil(stride) + 1
    }
}

/// Pixel rectangle `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Grows the rectangle by `margin` on every side, clipped to the frame.
    pub fn expand(&self, margin: usize, width: usize, height: usize) -> Rect {
        let x0 = self.x0.saturating_sub(margin);
        let y0 = self.y0.saturating_sub(margin);
        let x1 = (self.x0 + self.w + margin).min(width);
        let y1 = (self.y0 + self.h + margin).min(height);
        Rect {
            x0,
            y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WindowCell {
    pub candidate: bool,
    pub white_count: u32,
    pub gray_count: u32,
    pub annexed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowGrid {
    pub layout: WindowLayout,
    pub width: usize,
    pub height: usize,
    pub cols: usize,
    pub rows: usize,
    pub cells: Vec<WindowCell>,
}

impl WindowGrid {
    pub fn empty(width: usize, height: usize, layout: WindowLayout) -> Self {
        let cols = window_count(width, layout.tile_w, layout.stride);
        let rows = window_count(height, layout.tile_h, layout.stride);
        WindowGrid {
            layout,
            width,
            height,
            cols,
            rows,
            cells: vec![WindowCell::default(); cols * rows],
        }
    }

    #[inline]
    pub fn cell(&self, col: usize, row: usize) -> &WindowCell {
        &self.cells[row * self.cols + col]
    }

    pub fn rect(&self, col: usize, row: usize) -> Rect {
        let x0 = col * self.layout.stride;
        let y0 = row * self.layout.stride;
        Rect {
            x0,
            y0,
            w: self.layout.tile_w.min(self.width - x0),
            h: self.layout.tile_h.min(self.height - y0),
        }
    }

    pub fn candidate_count(&self) -> usize {
        self.cells.iter().filter(|c| c.candidate).count()
    }

    /// `(col, row)` of every candidate in row-major order.
    pub fn candidates(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (c, r)))
            .filter(|&(c, r)| self.cell(c, r).candidate)
            .collect()
    }

    /// Pixels covered by at least one candidate window.
    pub fn candidate_cover(&self) -> Mask {
        let mut m = Mask::new(self.width, self.height);
        for (c, r) in self.candidates() {
            let rect = self.rect(c, r);
            for y in rect.y0..rect.y0 + rect.h {
                m.bits_mut()[y * self.width + rect.x0..y * self.width + rect.x0 + rect.w].fill(true);
            }
        }
        m
    }

    /// Debug table: a `#` header line, then `col row candidate white gray annexed`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let l = self.layout;
        let _ = writeln!(
            out,
            "# width={} height={} tile_w={} tile_h={} stride={} cols={} rows={}",
            self.width, self.height, l.tile_w, l.tile_h, l.stride, self.cols, self.rows
        );
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = self.cell(c, r);
                let _ = writeln!(
                    out,
                    "{c} {r} {} {} {} {}",
                    u8::from(cell.candidate),
                    cell.white_count,
                    cell.gray_count,
                    u8::from(cell.annexed)
                );
            }
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("window table: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let get = |key: &str| -> Result<usize> {
            header
                .split_whitespace()
                .find_map(|t| t.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(&format!("header lacks {key}")))
        };
        let layout = WindowLayout {
            tile_w: get("tile_w")?,
            tile_h: get("tile_h")?,
            stride: get("stride")?,
        };
        if layout.tile_w == 0 || layout.tile_h == 0 || layout.stride == 0 {
            return Err(bad("zero window size"));
        }
        let mut g = WindowGrid::empty(get("width")?, get("height")?, layout);
        if g.cols != get("cols")? || g.rows != get("rows")? {
            return Err(bad("grid size disagrees with layout"));
        }
        let mut seen = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let v: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(&format!("bad field '{t}'"))))
                .collect::<Result<_>>()?;
            if v.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let (c, r) = (v[0] as usize, v[1] as usize);
            if c >= g.cols || r >= g.rows {
                return Err(bad("cell out of range"));
            }
            let cols = g.cols;
            g.cells[r * cols + c] = WindowCell {
                candidate: v[2] != 0,
                white_count: v[3],
                gray_count: v[4],
                annexed: v[5] != 0,
            };
            seen += 1;
        }
        if seen != g.cells.len() {
            return Err(bad("missing cells"));
        }
        Ok(g)
    }
}

/// Counts White and Gray pixels per window and applies the candidacy rule:
/// at least `w_min` White pixels, or at least one White and `g_min` Gray.
/// Windows without any White pixel are never candidates.
pub fn window_scan(t: &TernaryImage, layout: WindowLayout, w_min: u32, g_min: u32) -> Result<WindowGrid> {
    if layout.tile_w == 0 || layout.tile_h == 0 || layout.stride == 0 {
        return Err(Error::Param("window size and stride must be positive".into()));
    }
    let mut g = WindowGrid::empty(t.width, t.height, layout);
    let white = Integral::new(t.width, t.height, |i| u32::from(t.labels[i] == TernaryClass::White));
    let gray = Integral::new(t.width, t.height, |i| u32::from(t.labels[i] == TernaryClass::Gray));
    for r in 0..g.rows {
        for c in 0..g.cols {
            let rect = g.rect(c, r);
            let (x1, y1) = (rect.x0 + rect.w, rect.y0 + rect.h);
            let wc = white.rect(rect.x0, rect.y0, x1, y1);
            let gc = gray.rect(rect.x0, rect.y0, x1, y1);
            let candidate = wc >= 1 && (wc >= w_min || gc >= g_min);
            let cols = g.cols;
            g.cells[r * cols + c] = WindowCell {
                candidate,
                white_count: wc,
                gray_count: gc,
                annexed: false,
            };
        }
    }
    Ok(g)
}

/// One annexation pass: a non-candidate window with at least `min_neighbors`
/// candidate windows among its 8 neighbors becomes a candidate. Decisions
/// read the pre-pass grid only.
pub fn annex_surrounded(g: &WindowGrid, min_neighbors: u32) -> WindowGrid {
    let mut out = g.clone();
    for r in 0..g.rows {
        for c in 0..g.cols {
            if g.cell(c, r).candidate {
                continue;
            }
            let mut n = 0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (cc, rr) = (c as i64 + dc, r as i64 + dr);
                    if cc >= 0
                        && rr >= 0
                        && (cc as usize) < g.cols
                        && (rr as usize) < g.rows
                        && g.cell(cc as usize, rr as usize).candidate
                    {
                        n += 1;
                    }
                }
            }
            if n >= min_neighbors {
                let cell = &mut out.cells[r * g.cols + c];
                cell.candidate = true;
                cell.annexed = true;
            }
        }
    }
    out
}
