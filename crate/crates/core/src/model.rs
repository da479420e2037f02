//! Offline training and persistence of the skin color model.
//!
//! A model holds one inner/outer convex polygon pair per YCbCr heat-map
//! plane, coarse skin/non-skin RGB histograms for the Bayesian scores, and
//! every tunable threshold used by detection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{list_corpus, GroundTruth, GtLabel};
use crate::error::{Error, ModelError, Result};
use crate::imgio::{rgb_to_ycbcr, ColorSpace, ColorTriple, Raster};
use crate::params::Params;
use crate::polygon::{convex_hull, ConvexPolygon, Point2};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    YCb,
    YCr,
    CbCr,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::YCb, Plane::YCr, Plane::CbCr];

    /// Projects a YCbCr triple onto this plane's `(x, y)` coordinates.
    #[inline]
    pub fn project(self, ycc: ColorTriple) -> (u8, u8) {
        let [y, cb, cr] = ycc.0;
        match self {
            Plane::YCb => (y, cb),
            Plane::YCr => (y, cr),
            Plane::CbCr => (cb, cr),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Plane::YCb => "YCb",
            Plane::YCr => "YCr",
            Plane::CbCr => "CbCr",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Plane::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// 256x256 occurrence counts of skin pixels projected onto one plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatMap {
    pub plane: Plane,
    counts: Vec<u64>,
}

impl HeatMap {
    pub fn new(plane: Plane) -> Self {
        HeatMap {
            plane,
            counts: vec![0; 256 * 256],
        }
    }

    #[inline]
    pub fn get(&self, a: u8, b: u8) -> u64 {
        self.counts[usize::from(a) * 256 + usize::from(b)]
    }

    #[inline]
    pub fn add(&mut self, a: u8, b: u8, n: u64) {
        self.counts[usize::from(a) * 256 + usize::from(b)] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Accumulates the three plane heat maps from YCbCr skin samples.
pub fn build_heatmaps<I>(skin_pixels: I) -> Result<[HeatMap; 3]>
where
    I: IntoIterator<Item = ColorTriple>,
{
    let mut maps = Plane::ALL.map(HeatMap::new);
    let mut n = 0u64;
    for p in skin_pixels {
        for m in maps.iter_mut() {
            let (a, b) = m.plane.project(p);
            m.add(a, b, 1);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Training("no skin pixels to build heat maps".into()));
    }
    Ok(maps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonPair {
    pub inner: ConvexPolygon,
    pub outer: ConvexPolygon,
}

impl PolygonPair {
    pub fn new(inner: ConvexPolygon, outer: ConvexPolygon) -> std::result::Result<Self, String> {
        if let Some(v) = inner.vertices().iter().find(|&&v| !outer.contains(v)) {
            return Err(format!(
                "inner vertex ({}, {}) lies outside the outer polygon",
                v.x, v.y
            ));
        }
        Ok(PolygonPair { inner, outer })
    }
}

/// Hull of the unit squares of every cell whose count reaches `q` of the
/// peak. Cells are squares centred on integer coordinates, so a single
/// cell yields the unit square around it.
fn frequency_hull(map: &HeatMap, q: f64) -> Option<ConvexPolygon> {
    let peak = map.max_count() as f64;
    let mut corners = Vec::new();
    for a in 0..=255u8 {
        let mut lo = None;
        let mut hi = None;
        for b in 0..=255u8 {
            let c = map.get(a, b);
            if c > 0 && c as f64 >= q * peak {
                lo.get_or_insert(b);
                hi = Some(b);
            }
        }
        if let (Some(lo), Some(hi)) = (lo, hi) {
            // only the extreme cells of a row can contribute hull vertices
            let x = f64::from(a);
            let (yl, yh) = (f64::from(lo) - 0.5, f64::from(hi) + 0.5);
            corners.extend([
                Point2::new(x - 0.5, yl),
                Point2::new(x + 0.5, yl),
                Point2::new(x - 0.5, yh),
                Point2::new(x + 0.5, yh),
            ]);
        }
    }
    convex_hull(&corners)
}

/// Fits the inner (high frequency) and outer (low frequency) polygons of one
/// heat map.
pub fn fit_polygon_pair(map: &HeatMap, q_inner: f64, q_outer: f64) -> Result<PolygonPair> {
    if !(0.0 < q_outer && q_outer < q_inner && q_inner <= 1.0) {
        return Err(Error::Training(format!(
            "need 0 < q_outer < q_inner <= 1, got q_outer={q_outer} q_inner={q_inner}"
        )));
    }
    if map.max_count() == 0 {
        return Err(Error::Training(format!("{} heat map is empty", map.plane.name())));
    }
    let outer = frequency_hull(map, q_outer).ok_or_else(|| {
        Error::Training(format!("no {} cell reaches q_outer", map.plane.name()))
    })?;
    // the peak cell always qualifies, so the inner hull exists once the map is non-empty
    let inner = frequency_hull(map, q_inner).ok_or_else(|| {
        Error::Training(format!("no {} cell reaches q_inner", map.plane.name()))
    })?;
    PolygonPair::new(inner, outer).map_err(Error::Training)
}

/// Skin and non-skin RGB histograms with `bins` cells per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayesHistograms {
    bins: usize,
    skin: Vec<u64>,
    nonskin: Vec<u64>,
    total_skin: u64,
    total_nonskin: u64,
}

pub const ALLOWED_BINS: [usize; 3] = [16, 32, 64];

impl BayesHistograms {
    pub fn empty(bins: usize) -> Result<Self> {
        if !ALLOWED_BINS.contains(&bins) {
            return Err(Error::Param(format!("bins must be 16, 32 or 64, got {bins}")));
        }
        let n = bins * bins * bins;
        Ok(BayesHistograms {
            bins,
            skin: vec![0; n],
            nonskin: vec![0; n],
            total_skin: 0,
            total_nonskin: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn total_skin(&self) -> u64 {
        self.total_skin
    }

    pub fn total_nonskin(&self) -> u64 {
        self.total_nonskin
    }

    pub fn skin_counts(&self) -> &[u64] {
        &self.skin
    }

    pub fn nonskin_counts(&self) -> &[u64] {
        &self.nonskin
    }

    #[inline]
    pub fn quantize(&self, v: u8) -> usize {
        usize::from(v) * self.bins / 256
    }

    /// Flat cell index of an RGB triple.
    #[inline]
    pub fn cell_of(&self, c: ColorTriple) -> usize {
        let [r, g, b] = c.0;
        self.cell_index(self.quantize(r), self.quantize(g), self.quantize(b))
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.bins + j) * self.bins + k
    }

    /// Raw `(skin, nonskin)` counts of a cell.
    #[inline]
    pub fn cell_counts(&self, idx: usize) -> (u64, u64) {
        (self.skin[idx], self.nonskin[idx])
    }

    pub fn add_skin(&mut self, c: ColorTriple) {
        let i = self.cell_of(c);
        self.skin[i] += 1;
        self.total_skin += 1;
    }

    pub fn add_nonskin(&mut self, c: ColorTriple) {
        let i = self.cell_of(c);
        self.nonskin[i] += 1;
        self.total_nonskin += 1;
    }

    fn set_cell(&mut self, skin: bool, idx: usize, count: u64) {
        if skin {
            self.total_skin += count - self.skin[idx];
            self.skin[idx] = count;
        } else {
            self.total_nonskin += count - self.nonskin[idx];
            self.nonskin[idx] = count;
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.skin.iter().sum::<u64>() != self.total_skin
            || self.nonskin.iter().sum::<u64>() != self.total_nonskin
        {
            return Err("histogram totals disagree with cell sums".into());
        }
        if self.total_skin == 0 || self.total_nonskin == 0 {
            return Err("both histograms must be non-empty".into());
        }
        Ok(())
    }
}

/// Populates the skin and non-skin histograms from RGB samples.
pub fn build_bayes_histograms<S, N>(skin: S, nonskin: N, bins: usize) -> Result<BayesHistograms>
where
    S: IntoIterator<Item = ColorTriple>,
    N: IntoIterator<Item = ColorTriple>,
{
    let mut h = BayesHistograms::empty(bins)?;
    for c in skin {
        h.add_skin(c);
    }
    for c in nonskin {
        h.add_nonskin(c);
    }
    if h.total_skin == 0 || h.total_nonskin == 0 {
        return Err(Error::Training(
            "skin and non-skin samples must both be non-empty".into(),
        ));
    }
    Ok(h)
}

/// The trained artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinColorModel {
    pub version: u32,
    /// Indexed by plane in `Plane::ALL` order.
    pub pairs: [PolygonPair; 3],
    pub bayes: BayesHistograms,
    pub params: Params,
}

impl SkinColorModel {
    pub fn pair(&self, plane: Plane) -> &PolygonPair {
        &self.pairs[plane as usize]
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (plane, pair) in Plane::ALL.iter().zip(&self.pairs) {
            PolygonPair::new(pair.inner.clone(), pair.outer.clone())
                .map_err(|e| format!("{}: {e}", plane.name()))?;
        }
        self.bayes.check()?;
        self.params.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub bins: usize,
    pub q_inner: f64,
    pub q_outer: f64,
    pub params: Params,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            bins: 32,
            q_inner: 0.10,
            q_outer: 0.001,
            params: Params::default(),
        }
    }
}

/// Trains from in-memory RGB samples.
pub fn train_from_samples(
    skin: &[ColorTriple],
    nonskin: &[ColorTriple],
    opts: &TrainOptions,
) -> Result<SkinColorModel> {
    opts.params.validate().map_err(Error::Param)?;
    let maps = build_heatmaps(skin.iter().map(|&c| rgb_to_ycbcr(c)))?;
    let fit = |m: &HeatMap| fit_polygon_pair(m, opts.q_inner, opts.q_outer);
    let pairs = [fit(&maps[0])?, fit(&maps[1])?, fit(&maps[2])?];
    let bayes = build_bayes_histograms(skin.iter().copied(), nonskin.iter().copied(), opts.bins)?;
    Ok(SkinColorModel {
        version: MODEL_VERSION,
        pairs,
        bayes,
        params: opts.params.clone(),
    })
}

/// Trains from a corpus directory. Undecided ground-truth pixels are skipped.
pub fn train_corpus(dir: impl AsRef<Path>, opts: &TrainOptions) -> Result<SkinColorModel> {
    let entries = list_corpus(dir.as_ref())?;
    if entries.is_empty() {
        return Err(Error::Training(format!(
            "no image/ground-truth pairs in {}",
            dir.as_ref().display()
        )));
    }
    let pairs = entries.iter().map(|e| e.load()).collect::<Result<Vec<_>>>()?;
    train_labeled(&pairs, opts)
}

/// Trains from in-memory RGB images with ground truth.
pub fn train_labeled(pairs: &[(Raster, GroundTruth)], opts: &TrainOptions) -> Result<SkinColorModel> {
    let mut skin = Vec::new();
    let mut nonskin = Vec::new();
    for (img, gt) in pairs {
        if img.space() != ColorSpace::Rgb8 || img.width() != gt.width() || img.height() != gt.height() {
            return Err(Error::Dimension("training image and ground truth disagree".into()));
        }
        for (i, label) in gt.labels().iter().enumerate() {
            match label {
                GtLabel::Skin => skin.push(img.triple_at(i)),
                GtLabel::NonSkin => nonskin.push(img.triple_at(i)),
                GtLabel::Undecided => {}
            }
        }
    }
    train_from_samples(&skin, &nonskin, opts)
}

// ---------------------------------------------------------------------------
// model file

fn write_poly(out: &mut String, plane: Plane, which: &str, poly: &ConvexPolygon) {
    let _ = writeln!(out, "POLY {} {which} {}", plane.name(), poly.vertices().len());
    for v in poly.vertices() {
        let _ = writeln!(out, "{} {}", v.x, v.y);
    }
}

fn write_hist(out: &mut String, which: &str, bins: usize, counts: &[u64]) {
    let _ = writeln!(out, "HIST {which} {bins}");
    for (idx, &c) in counts.iter().enumerate() {
        if c > 0 {
            let (i, j, k) = (idx / (bins * bins), (idx / bins) % bins, idx % bins);
            let _ = writeln!(out, "{i} {j} {k} {c}");
        }
    }
}

/// Serializes a model to the line-oriented text format.
pub fn encode_model(m: &SkinColorModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "TSKIN v{}", m.version);
    for (plane, pair) in Plane::ALL.iter().zip(&m.pairs) {
        write_poly(&mut out, *plane, "INNER", &pair.inner);
        write_poly(&mut out, *plane, "OUTER", &pair.outer);
    }
    write_hist(&mut out, "SKIN", m.bayes.bins, &m.bayes.skin);
    write_hist(&mut out, "NONSKIN", m.bayes.bins, &m.bayes.nonskin);
    for (name, value) in m.params.entries() {
        let _ = writeln!(out, "PARAM {name} {value}");
    }
    out.push_str("END\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> std::result::Result<(usize, &'a str), ModelError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| ModelError::Truncated(format!("end of file while reading {what}")))
    }
}

fn perr(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> std::result::Result<T, ModelError> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| perr(line, format!("bad {what} '{tok}'")))
}

/// Parses the text format, reporting version, truncation, syntax and
/// invariant failures as distinct errors.
pub fn decode_model(text: &str) -> std::result::Result<SkinColorModel, ModelError> {
    // a final line without its newline was cut mid-write
    if !text.is_empty() && !text.ends_with('\n') && text.lines().last().map(str::trim) != Some("END") {
        return Err(ModelError::Truncated("file ends mid-line".into()));
    }
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let (ln, header) = lines.next("header")?;
    let version = header
        .strip_prefix("TSKIN v")
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| perr(ln, "missing 'TSKIN v<N>' header"))?;
    if version != MODEL_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: MODEL_VERSION,
        });
    }

    let mut inner: [Option<ConvexPolygon>; 3] = [None, None, None];
    let mut outer: [Option<ConvexPolygon>; 3] = [None, None, None];
    let mut bayes: Option<BayesHistograms> = None;
    let mut hist_seen = [false, false];
    let mut params = Params::default();
    let mut ended = false;
    // 0 = skin, 1 = nonskin
    let mut current_hist: Option<bool> = None;

    while let Some((i, line)) = lines.inner.next() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let head = toks.next().unwrap_or_default();
        match head {
            "END" => {
                ended = true;
                break;
            }
            "POLY" => {
                current_hist = None;
                let plane = toks
                    .next()
                    .and_then(Plane::from_name)
                    .ok_or_else(|| perr(ln, "unknown plane"))?;
                let which = toks.next().unwrap_or_default();
                let n: usize = num(ln, toks.next(), "vertex count")?;
                let mut verts = Vec::with_capacity(n);
                for _ in 0..n {
                    let (vl, v) = lines.next("polygon vertices")?;
                    let mut t = v.split_whitespace();
                    let x: f64 = num(vl, t.next(), "vertex x")?;
                    let y: f64 = num(vl, t.next(), "vertex y")?;
                    verts.push(Point2::new(x, y));
                }
                let poly = ConvexPolygon::from_vertices(verts)
                    .map_err(|e| ModelError::Invariant(format!("{} {which}: {e}", plane.name())))?;
                let slot = match which {
                    "INNER" => &mut inner[plane as usize],
                    "OUTER" => &mut outer[plane as usize],
                    _ => return Err(perr(ln, format!("unknown polygon kind '{which}'"))),
                };
                *slot = Some(poly);
            }
            "HIST" => {
                let skin = match toks.next() {
                    Some("SKIN") => true,
                    Some("NONSKIN") => false,
                    _ => return Err(perr(ln, "expected HIST SKIN or HIST NONSKIN")),
                };
                let bins: usize = num(ln, toks.next(), "bin count")?;
                let h = match bayes.take() {
                    Some(h) if h.bins == bins => h,
                    Some(h) => {
                        return Err(ModelError::Invariant(format!(
                            "histogram bin counts differ ({} vs {bins})",
                            h.bins
                        )))
                    }
                    None => BayesHistograms::empty(bins)
                        .map_err(|e| ModelError::Invariant(e.to_string()))?,
                };
                bayes = Some(h);
                hist_seen[usize::from(!skin)] = true;
                current_hist = Some(skin);
            }
            "PARAM" => {
                current_hist = None;
                let name = toks.next().ok_or_else(|| perr(ln, "missing parameter name"))?;
                let value = toks.collect::<Vec<_>>().join(" ");
                params
                    .set(name, &value)
                    .map_err(|e| perr(ln, e.to_string()))?;
            }
            _ => {
                let (Some(skin), Some(h)) = (current_hist, bayes.as_mut()) else {
                    return Err(perr(ln, format!("unexpected line '{line}'")));
                };
                let i: usize = num(ln, Some(head), "bin index")?;
                let j: usize = num(ln, toks.next(), "bin index")?;
                let k: usize = num(ln, toks.next(), "bin index")?;
                let c: u64 = num(ln, toks.next(), "count")?;
                if i >= h.bins || j >= h.bins || k >= h.bins {
                    return Err(perr(ln, "bin index out of range"));
                }
                let idx = h.cell_index(i, j, k);
                h.set_cell(skin, idx, c);
            }
        }
    }
    if !ended {
        return Err(ModelError::Truncated("missing END marker".into()));
    }
    let take = |slot: &mut [Option<ConvexPolygon>; 3], p: Plane, kind: &str| {
        slot[p as usize]
            .take()
            .ok_or_else(|| ModelError::Invariant(format!("missing {} {kind} polygon", p.name())))
    };
    let mut pairs = Vec::with_capacity(3);
    for p in Plane::ALL {
        let i = take(&mut inner, p, "INNER")?;
        let o = take(&mut outer, p, "OUTER")?;
        pairs.push(
            PolygonPair::new(i, o).map_err(|e| ModelError::Invariant(format!("{}: {e}", p.name())))?,
        );
    }
    if !(hist_seen[0] && hist_seen[1]) {
        return Err(ModelError::Invariant("both SKIN and NONSKIN histograms are required".into()));
    }
    let bayes = bayes.expect("histograms seen");
    let pairs: [PolygonPair; 3] = pairs.try_into().expect("three planes");
    let model = SkinColorModel {
        version,
        pairs,
        bayes,
        params,
    };
    model.validate().map_err(ModelError::Invariant)?;
    Ok(model)
}

pub fn save_model(m: &SkinColorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    m.validate().map_err(ModelError::Invariant)?;
    fs::write(path, encode_model(m)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SkinColorModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_model(&text)?)
}
