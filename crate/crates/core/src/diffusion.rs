//! Per-window segmentation: Bayesian seeds, homogeneity-driven first
//! diffusion, feature-weighted second diffusion and the final Bayesian
//! filter.
//!
//! Every acceptance predicate reads only frame layers that are frozen
//! before any window runs, so results do not depend on iteration order or
//! on which worker handles a window.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::homogeneity::{agreement, class_distance, EdgeMaps, HomogeneityLabels};
use crate::imgio::{ColorTriple, Mask, Raster};
use crate::model::BayesHistograms;
use crate::params::{DiffusionParams, FeedbackSource, SeedParams};
use crate::prefilter::{Rect, TernaryClass, TernaryImage};

/// Likelihood ratio and posterior of one color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesScore {
    pub ratio: f64,
    pub p_skin: f64,
}

/// Scores from Laplace-smoothed histogram counts: each queried count and
/// each total is incremented by one before forming likelihoods, so no
/// denominator is ever zero. Priors use the raw totals.
pub fn bayes_scores(c: ColorTriple, h: &BayesHistograms) -> BayesScore {
    let (s, n) = h.cell_counts(h.cell_of(c));
    score_from_counts(s, n, h.total_skin(), h.total_nonskin())
}

fn score_from_counts(s: u64, n: u64, total_s: u64, total_n: u64) -> BayesScore {
    let ls = (s + 1) as f64 / (total_s + 1) as f64;
    let ln = (n + 1) as f64 / (total_n + 1) as f64;
    let all = (total_s + total_n) as f64;
    let ps = total_s as f64 / all;
    let pn = total_n as f64 / all;
    BayesScore {
        ratio: ls / ln,
        p_skin: ls * ps / (ls * ps + ln * pn),
    }
}

/// Per-cell scores precomputed for a model's histograms.
#[derive(Debug, Clone)]
pub struct BayesTable {
    bins: usize,
    scores: Vec<BayesScore>,
}

impl BayesTable {
    pub fn new(h: &BayesHistograms) -> Self {
        let scores = (0..h.skin_counts().len())
            .map(|i| {
                let (s, n) = h.cell_counts(i);
                score_from_counts(s, n, h.total_skin(), h.total_nonskin())
            })
            .collect();
        BayesTable {
            bins: h.bins(),
            scores,
        }
    }

    #[inline]
    pub fn lookup(&self, c: ColorTriple) -> BayesScore {
        let q = |v: u8| usize::from(v) * self.bins / 256;
        let [r, g, b] = c.0;
        self.scores[(q(r) * self.bins + q(g)) * self.bins + q(b)]
    }
}

/// Pixel coordinate, ordered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub fn new(x: usize, y: usize) -> Self {
        Pixel {
            x: x as u32,
            y: y as u32,
        }
    }

    pub fn chebyshev(self, o: Pixel) -> u32 {
        self.x.abs_diff(o.x).max(self.y.abs_diff(o.y))
    }
}

impl Ord for Pixel {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.y, self.x).cmp(&(o.y, o.x))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Sorted, duplicate-free set of pixels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelSet(Vec<Pixel>);

impl PixelSet {
    pub fn new() -> Self {
        PixelSet(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pixel> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Pixel] {
        &self.0
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.0.binary_search(&p).is_ok()
    }

    pub fn is_subset(&self, other: &PixelSet) -> bool {
        let mut it = other.0.iter();
        self.0.iter().all(|p| it.by_ref().any(|q| q == p))
    }

    pub fn difference(&self, other: &PixelSet) -> PixelSet {
        PixelSet(self.0.iter().copied().filter(|p| !other.contains(*p)).collect())
    }

    /// Sets every member in `mask`.
    pub fn paint(&self, mask: &mut Mask) {
        for p in &self.0 {
            mask.set(p.x as usize, p.y as usize, true);
        }
    }

    pub fn from_mask(mask: &Mask) -> Self {
        let w = mask.width();
        PixelSet(
            mask.bits()
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| Pixel::new(i % w, i / w))
                .collect(),
        )
    }
}

impl FromIterator<Pixel> for PixelSet {
    fn from_iter<I: IntoIterator<Item = Pixel>>(iter: I) -> Self {
        let mut v: Vec<Pixel> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        PixelSet(v)
    }
}

/// Frame layers shared read-only by every window.
#[derive(Clone, Copy)]
pub struct FrameLayers<'a> {
    pub rgb: &'a Raster,
    pub ternary: &'a TernaryImage,
    pub ambulant: &'a Mask,
    pub homog: &'a HomogeneityLabels,
    pub edges: &'a EdgeMaps,
    pub bayes: &'a BayesTable,
    pub prev_diff1: &'a Mask,
    pub prev_final: &'a Mask,
    /// Pixels diffusion may enter: those covered by candidate windows.
    pub cover: &'a Mask,
}

impl<'a> FrameLayers<'a> {
    pub fn check(&self) -> Result<()> {
        let (w, h) = (self.rgb.width(), self.rgb.height());
        let masks = [
            self.ambulant,
            self.prev_diff1,
            self.prev_final,
            self.cover,
            &self.edges.strong,
            &self.edges.weak,
        ];
        let ok = self.ternary.width() == w
            && self.ternary.height() == h
            && self.homog.width() == w
            && self.homog.height() == h
            && masks.iter().all(|m| m.width() == w && m.height() == h);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("frame layers disagree in size".into()))
        }
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    #[inline]
    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.rgb.width() + x
    }

    #[inline]
    pub fn score(&self, x: usize, y: usize) -> BayesScore {
        self.bayes.lookup(self.rgb.triple(x, y))
    }

    fn feedback(&self, src: FeedbackSource) -> &'a Mask {
        match src {
            FeedbackSource::PrevDiff1 => self.prev_diff1,
            FeedbackSource::PrevFinal => self.prev_final,
        }
    }
}

/// A window and the bounds diffusion from it may reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub window: Rect,
    pub bounds: Rect,
}

impl Region {
    pub fn new(window: Rect, apron: usize, width: usize, height: usize) -> Self {
        Region {
            window,
            bounds: window.expand(apron, width, height),
        }
    }

    #[inline]
    pub fn allows(&self, layers: &FrameLayers<'_>, x: usize, y: usize) -> bool {
        self.bounds.contains(x, y) && layers.cover.get(x, y)
    }
}

/// Seed membership for one pixel.
pub fn seed_predicate(
    label: TernaryClass,
    score: BayesScore,
    ambulant: bool,
    feedback: bool,
    sp: &SeedParams,
) -> bool {
    label != TernaryClass::Black
        && score.p_skin >= sp.p_min
        && (score.ratio >= sp.theta_high
            || (ambulant && score.ratio >= sp.theta_low)
            || (feedback && score.ratio >= sp.theta_fb))
}

/// Seed pixels inside `window`.
pub fn generate_seed(window: Rect, layers: &FrameLayers<'_>, sp: &SeedParams) -> PixelSet {
    let fb = layers.feedback(sp.source);
    let mut out = Vec::new();
    for y in window.y0..window.y0 + window.h {
        for x in window.x0..window.x0 + window.w {
            if seed_predicate(
                layers.ternary.get(x, y),
                layers.score(x, y),
                layers.ambulant.get(x, y),
                fb.get(x, y),
                sp,
            ) {
                out.push(Pixel::new(x, y));
            }
        }
    }
    PixelSet(out)
}

/// Whether first diffusion may step from accepted `v` onto `u`.
#[inline]
pub fn first_step_allowed(layers: &FrameLayers<'_>, u: (usize, usize), v: (usize, usize), dp: &DiffusionParams) -> bool {
    let (ui, vi) = (layers.idx(u.0, u.1), layers.idx(v.0, v.1));
    if layers.edges.strong.bits()[ui] {
        return false;
    }
    let need = if layers.ambulant.bits()[ui] { dp.c_weak } else { dp.c_strong };
    agreement(layers.homog.vector(ui), layers.homog.vector(vi)) >= need
}

/// Bitmap over a region's bounds.
struct Local {
    rect: Rect,
    bits: Vec<bool>,
}

impl Local {
    fn new(rect: Rect) -> Self {
        Local {
            rect,
            bits: vec![false; rect.area()],
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> usize {
        (y - self.rect.y0) * self.rect.w + (x - self.rect.x0)
    }

    #[inline]
    fn get(&self, x: usize, y: usize) -> bool {
        self.bits[self.at(x, y)]
    }

    #[inline]
    fn set(&mut self, x: usize, y: usize) {
        let i = self.at(x, y);
        self.bits[i] = true;
    }

    fn from_set(rect: Rect, s: &PixelSet) -> Self {
        let mut l = Local::new(rect);
        for p in s.iter() {
            let (x, y) = (p.x as usize, p.y as usize);
            if rect.contains(x, y) {
                l.set(x, y);
            }
        }
        l
    }

    fn to_set(&self) -> PixelSet {
        let r = self.rect;
        PixelSet(
            self.bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| Pixel::new(r.x0 + i % r.w, r.y0 + i / r.w))
                .collect(),
        )
    }
}

/// Breadth-first growth from `seed` over 8-connectivity. A pixel is
/// accepted from an accepted neighbor when it is not a strong edge and
/// their class vectors agree on at least `c_weak` channels (ambulant
/// pixels) or `c_strong` channels (others). The result contains the seed.
pub fn diffuse_first(
    seed: &PixelSet,
    region: &Region,
    layers: &FrameLayers<'_>,
    dp: &DiffusionParams,
) -> PixelSet {
    diffuse_first_local(seed, region, layers, dp).to_set()
}

fn diffuse_first_local(seed: &PixelSet, region: &Region, layers: &FrameLayers<'_>, dp: &DiffusionParams) -> Local {
    let b = region.bounds;
    let mut acc = Local::new(b);
    let mut queue = VecDeque::new();
    for p in seed.iter() {
        let (x, y) = (p.x as usize, p.y as usize);
        if b.contains(x, y) && !acc.get(x, y) {
            acc.set(x, y);
            queue.push_back((x, y));
        }
    }
    while let Some((vx, vy)) = queue.pop_front() {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (ux, uy) = (vx as i64 + dx, vy as i64 + dy);
                if ux < 0 || uy < 0 {
                    continue;
                }
                let (ux, uy) = (ux as usize, uy as usize);
                if !region.allows(layers, ux, uy) || acc.get(ux, uy) {
                    continue;
                }
                if first_step_allowed(layers, (ux, uy), (vx, vy), dp) {
                    acc.set(ux, uy);
                    queue.push_back((ux, uy));
                }
            }
        }
    }
    acc
}

/// Pixels of the Bresenham line from `a` to `b`, both endpoints included.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - x).abs();
    let dy = -(b.1 - y).abs();
    let sx = if x < b.0 { 1 } else { -1 };
    let sy = if y < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == b {
            return out;
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

/// True when no pixel of the line from `master` to `x`, other than the
/// master itself, is a weak edge.
pub fn line_is_clear(edges: &EdgeMaps, master: Pixel, x: Pixel) -> bool {
    let (mx, my) = (i64::from(master.x), i64::from(master.y));
    let (tx, ty) = (i64::from(x.x), i64::from(x.y));
    // inline Bresenham, skipping the master
    let (mut cx, mut cy) = (mx, my);
    let dx = (tx - cx).abs();
    let dy = -(ty - cy).abs();
    let sx = if cx < tx { 1 } else { -1 };
    let sy = if cy < ty { 1 } else { -1 };
    let mut err = dx + dy;
    while (cx, cy) != (tx, ty) {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            cx += sx;
        }
        if e2 <= dx {
            err += dx;
            cy += sy;
        }
        if edges.weak.get(cx as usize, cy as usize) {
            return false;
        }
    }
    true
}

/// Homogeneity, distance, probability, motion and feedback scores of `x`
/// relative to `master`.
pub fn feature_scores(x: Pixel, master: Pixel, layers: &FrameLayers<'_>, dp: &DiffusionParams) -> [f64; 5] {
    let (xi, mi) = (
        layers.idx(x.x as usize, x.y as usize),
        layers.idx(master.x as usize, master.y as usize),
    );
    let d = class_distance(layers.homog.vector(xi), layers.homog.vector(mi));
    let f1 = (-dp.alpha * f64::from(d)).exp() + dp.beta;
    let f2 = (-dp.gamma * f64::from(x.chebyshev(master))).exp();
    let f3 = layers.bayes.lookup(layers.rgb.triple_at(xi)).p_skin;
    let f4 = if layers.ambulant.bits()[xi] { 1.0 } else { 0.0 };
    let f5 = if layers.feedback(dp.feedback).bits()[xi] { 1.0 } else { 0.0 };
    [f1, f2, f3, f4, f5]
}

/// `sum w_i f_i`, accumulated left to right.
#[inline]
pub fn diffusion_score(f: &[f64; 5], w: &[f64; 5]) -> f64 {
    w[0] * f[0] + w[1] * f[1] + w[2] * f[2] + w[3] * f[3] + w[4] * f[4]
}

/// Second diffusion: every pixel within Chebyshev `r2` of some first
/// diffusion pixel (a master) is accepted when its score against that
/// master reaches `theta_f` and the line from the master is free of weak
/// edges. Accepted pixels never act as masters.
pub fn diffuse_second(
    diff1: &PixelSet,
    region: &Region,
    layers: &FrameLayers<'_>,
    dp: &DiffusionParams,
) -> PixelSet {
    let masters = Local::from_set(region.bounds, diff1);
    diffuse_second_local(&masters, region, layers, dp).to_set()
}

fn diffuse_second_local(masters: &Local, region: &Region, layers: &FrameLayers<'_>, dp: &DiffusionParams) -> Local {
    let b = masters.rect;
    let mut out = Local {
        rect: b,
        bits: masters.bits.clone(),
    };
    if !masters.bits.iter().any(|&m| m) {
        return out;
    }
    let r = dp.r2 as i64;
    // integral image of masters for O(1) "any master nearby" checks
    let (w, h) = (b.w, b.h);
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0;
        for x in 0..w {
            row += u32::from(masters.bits[y * w + x]);
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let near = |lx: usize, ly: usize| {
        let x0 = (lx as i64 - r).max(0) as usize;
        let y0 = (ly as i64 - r).max(0) as usize;
        let x1 = ((lx as i64 + r + 1) as usize).min(w);
        let y1 = ((ly as i64 + r + 1) as usize).min(h);
        sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] > 0
    };
    let wts = dp.weights;
    // largest f1 and f2 any master can give; a negative decay rate has no cap
    let best_f1 = if dp.alpha >= 0.0 { 1.0 + dp.beta } else { f64::INFINITY };
    let best_f2 = (-dp.gamma).exp().max((-dp.gamma * dp.r2 as f64).exp());
    // f1 and f2 take few distinct values; tabulate the exponentials
    let max_d = layers.homog.channels.len() * layers.homog.classes.max(1);
    let f1_of: Vec<f64> = (0..=max_d as u32).map(|d| (-dp.alpha * f64::from(d)).exp() + dp.beta).collect();
    let f2_of: Vec<f64> = (0..=dp.r2 as u32).map(|c| (-dp.gamma * f64::from(c)).exp()).collect();
    for ly in 0..h {
        for lx in 0..w {
            if masters.bits[ly * w + lx] {
                continue;
            }
            let (x, y) = (b.x0 + lx, b.y0 + ly);
            if !region.allows(layers, x, y) || !near(lx, ly) {
                continue;
            }
            let px = Pixel::new(x, y);
            // master-independent part bounds what any master can achieve
            let xi = layers.idx(x, y);
            let f3 = layers.bayes.lookup(layers.rgb.triple_at(xi)).p_skin;
            let f4 = if layers.ambulant.bits()[xi] { 1.0 } else { 0.0 };
            let f5 = if layers.feedback(dp.feedback).bits()[xi] { 1.0 } else { 0.0 };
            let bound = wts[0] * best_f1 + wts[1] * best_f2 + wts[2] * f3 + wts[3] * f4 + wts[4] * f5;
            if bound < dp.theta_f - 1e-9 {
                continue;
            }
            let xv = layers.homog.vector(xi);
            let mut accepted = false;
            'masters: for my in (ly as i64 - r).max(0)..=(ly as i64 + r).min(h as i64 - 1) {
                for mx in (lx as i64 - r).max(0)..=(lx as i64 + r).min(w as i64 - 1) {
                    if !masters.bits[my as usize * w + mx as usize] {
                        continue;
                    }
                    let m = Pixel::new(b.x0 + mx as usize, b.y0 + my as usize);
                    // same terms and order as feature_scores + diffusion_score
                    let d = class_distance(xv, layers.homog.vector(layers.idx(m.x as usize, m.y as usize)));
                    let f = [f1_of[d as usize], f2_of[px.chebyshev(m) as usize], f3, f4, f5];
                    if diffusion_score(&f, &wts) >= dp.theta_f && line_is_clear(layers.edges, m, px) {
                        accepted = true;
                        break 'masters;
                    }
                }
            }
            if accepted {
                out.bits[ly * w + lx] = true;
            }
        }
    }
    out
}

/// Keeps pixels whose likelihood ratio reaches `theta_filter`.
pub fn final_filter(diff2: &PixelSet, layers: &FrameLayers<'_>, theta_filter: f64) -> PixelSet {
    PixelSet(
        diff2
            .iter()
            .copied()
            .filter(|p| layers.score(p.x as usize, p.y as usize).ratio >= theta_filter)
            .collect(),
    )
}

/// Working state of one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffusionState {
    pub region: Region,
    pub seed: PixelSet,
    pub diff1: PixelSet,
    pub diff2: PixelSet,
    pub final_set: PixelSet,
    /// Previous frame's first diffusion set, clipped to the region.
    pub prev_diff1: PixelSet,
    /// Previous frame's final mask, clipped to the region.
    pub prev_final: PixelSet,
}

impl DiffusionState {
    /// seed ⊆ diff1 ⊆ diff2 and final ⊆ diff2.
    pub fn chain_holds(&self) -> bool {
        self.seed.is_subset(&self.diff1) && self.diff1.is_subset(&self.diff2) && self.final_set.is_subset(&self.diff2)
    }
}

/// Runs seed → first diffusion → second diffusion → filter on one window.
pub fn segment_window(
    window: Rect,
    layers: &FrameLayers<'_>,
    sp: &SeedParams,
    dp: &DiffusionParams,
) -> DiffusionState {
    let region = Region::new(window, dp.apron, layers.width(), layers.height());
    let clip = |m: &Mask| {
        let b = region.bounds;
        let mut v = Vec::new();
        for y in b.y0..b.y0 + b.h {
            for x in b.x0..b.x0 + b.w {
                if m.get(x, y) {
                    v.push(Pixel::new(x, y));
                }
            }
        }
        PixelSet(v)
    };
    let (prev_diff1, prev_final) = (clip(layers.prev_diff1), clip(layers.prev_final));
    let seed = generate_seed(window, layers, sp);
    if seed.is_empty() {
        return DiffusionState {
            region,
            seed: PixelSet::new(),
            diff1: PixelSet::new(),
            diff2: PixelSet::new(),
            final_set: PixelSet::new(),
            prev_diff1,
            prev_final,
        };
    }
    let d1 = diffuse_first_local(&seed, &region, layers, dp);
    let d2 = diffuse_second_local(&d1, &region, layers, dp);
    let diff2 = d2.to_set();
    let final_set = final_filter(&diff2, layers, dp.theta_filter);
    DiffusionState {
        region,
        seed,
        diff1: d1.to_set(),
        diff2,
        final_set,
        prev_diff1,
        prev_final,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::ColorSpace;
    use crate::params::Channel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bayes_ratio_arithmetic() {
        let s = score_from_counts(89, 9, 999, 999);
        assert!((s.ratio - 9.0).abs() < 1e-12);
        let s = score_from_counts(5, 5, 300, 300);
        assert_eq!(s.ratio, 1.0);
        assert!((s.p_skin - 0.5).abs() < 1e-15);
        // unequal priors: equal likelihoods give the prior back
        let s = score_from_counts(0, 1, 999, 1999);
        assert!((s.ratio - 1.0).abs() < 1e-12);
        assert!((s.p_skin - 999.0 / 2998.0).abs() < 1e-12);
    }

    #[test]
    fn table_matches_direct_scores() {
        let mut h = BayesHistograms::empty(16).unwrap();
        for v in 0..=255u8 {
            h.add_skin(ColorTriple::new(v, v / 2, v / 3));
            h.add_nonskin(ColorTriple::new(v / 4, v, v));
        }
        let t = BayesTable::new(&h);
        for v in (0..=255u8).step_by(7) {
            let c = ColorTriple::new(v, 255 - v, v / 2);
            assert_eq!(t.lookup(c), bayes_scores(c, &h));
        }
    }

    #[test]
    fn seed_predicate_rules() {
        let sp = SeedParams::default();
        let hi = BayesScore { ratio: 100.0, p_skin: 0.99 };
        assert!(!seed_predicate(TernaryClass::Black, hi, true, true, &sp));
        let edge = BayesScore { ratio: sp.theta_low, p_skin: sp.p_min };
        assert!(seed_predicate(TernaryClass::Gray, edge, true, false, &sp));
        assert!(!seed_predicate(TernaryClass::Gray, edge, false, false, &sp));
        let low_p = BayesScore { ratio: 100.0, p_skin: 0.1 };
        assert!(!seed_predicate(TernaryClass::White, low_p, true, true, &sp));
    }

    #[test]
    fn seed_truth_table() {
        let sp = SeedParams::default();
        let ratios = [0.5, sp.theta_fb, 1.2, sp.theta_low, 2.0, sp.theta_high, 9.0];
        for amb in [false, true] {
            for fb in [false, true] {
                for &ratio in &ratios {
                    let s = BayesScore { ratio, p_skin: 0.9 };
                    let expected = ratio >= sp.theta_high
                        || (amb && ratio >= sp.theta_low)
                        || (fb && ratio >= sp.theta_fb);
                    assert_eq!(seed_predicate(TernaryClass::Gray, s, amb, fb, &sp), expected);
                }
            }
        }
    }

    #[test]
    fn bresenham_properties() {
        for (a, b) in [((0, 0), (5, 2)), ((3, 3), (0, 0)), ((2, 7), (2, 1)), ((0, 0), (-4, 4))] {
            let l = bresenham(a, b);
            assert_eq!(l[0], a);
            assert_eq!(*l.last().unwrap(), b);
            let n = (b.0 - a.0).abs().max((b.1 - a.1).abs()) as usize + 1;
            assert_eq!(l.len(), n);
            for w in l.windows(2) {
                assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
            }
        }
    }

    struct Fixture {
        rgb: Raster,
        ternary: TernaryImage,
        ambulant: Mask,
        homog: HomogeneityLabels,
        edges: EdgeMaps,
        bayes: BayesTable,
        empty: Mask,
        cover: Mask,
    }

    impl Fixture {
        fn uniform(w: usize, h: usize) -> Self {
            let mut hist = BayesHistograms::empty(32).unwrap();
            hist.add_skin(ColorTriple::new(200, 150, 120));
            hist.add_nonskin(ColorTriple::new(0, 0, 0));
            let mut rgb = Raster::filled(w, h, ColorSpace::Rgb8, 0).unwrap();
            for y in 0..h {
                for x in 0..w {
                    rgb.set_triple(x, y, ColorTriple::new(200, 150, 120));
                }
            }
            let chans = vec![Channel::Cb, Channel::Cr, Channel::I, Channel::Y];
            Fixture {
                rgb,
                ternary: TernaryImage::filled(w, h, TernaryClass::White),
                ambulant: Mask::new(w, h),
                homog: HomogeneityLabels::from_labels(w, h, chans, 4, vec![1; w * h * 4]).unwrap(),
                edges: EdgeMaps { strong: Mask::new(w, h), weak: Mask::new(w, h) },
                bayes: BayesTable::new(&hist),
                empty: Mask::new(w, h),
                cover: Mask::from_bits(w, h, vec![true; w * h]).unwrap(),
            }
        }

        fn layers(&self) -> FrameLayers<'_> {
            FrameLayers {
                rgb: &self.rgb,
                ternary: &self.ternary,
                ambulant: &self.ambulant,
                homog: &self.homog,
                edges: &self.edges,
                bayes: &self.bayes,
                prev_diff1: &self.empty,
                prev_final: &self.empty,
                cover: &self.cover,
            }
        }
    }

    #[test]
    fn uniform_window_fills_region() {
        let f = Fixture::uniform(40, 40);
        let l = f.layers();
        let window = Rect { x0: 16, y0: 16, w: 8, h: 8 };
        let region = Region::new(window, 4, 40, 40);
        let seed: PixelSet = [Pixel::new(20, 20)].into_iter().collect();
        let d1 = diffuse_first(&seed, &region, &l, &DiffusionParams::default());
        assert_eq!(d1.len(), 16 * 16);
    }

    #[test]
    fn strong_edge_ring_contains_growth() {
        let mut f = Fixture::uniform(20, 20);
        for i in 5..=12 {
            for (x, y) in [(i, 5), (i, 12), (5, i), (12, i)] {
                f.edges.strong.set(x, y, true);
                f.edges.weak.set(x, y, true);
            }
        }
        let l = f.layers();
        let region = Region::new(Rect { x0: 0, y0: 0, w: 20, h: 20 }, 0, 20, 20);
        let seed: PixelSet = [Pixel::new(8, 8)].into_iter().collect();
        let d1 = diffuse_first(&seed, &region, &l, &DiffusionParams::default());
        assert_eq!(d1.len(), 36);
        assert!(d1.iter().all(|p| (6..12).contains(&p.x) && (6..12).contains(&p.y)));
        // second diffusion cannot see past the ring either
        let d2 = diffuse_second(&d1, &region, &l, &DiffusionParams::default());
        assert_eq!(d2, d1);
    }

    #[test]
    fn feature_values() {
        let f = Fixture::uniform(10, 10);
        let l = f.layers();
        let dp = DiffusionParams::default();
        let s = feature_scores(Pixel::new(3, 3), Pixel::new(3, 3), &l, &dp);
        assert_eq!(s[0], 1.0 + dp.beta);
        assert_eq!(s[1], 1.0);
        assert_eq!(s[3], 0.0);
        assert!((diffusion_score(&[1.0; 5], &[1.0; 5]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn homogeneity_feature_decay() {
        let mut f = Fixture::uniform(4, 1);
        let chans = vec![Channel::I];
        f.homog = HomogeneityLabels::from_labels(4, 1, chans, 4, vec![0, 1, 0, 0]).unwrap();
        let l = f.layers();
        let dp = DiffusionParams { alpha: 1.0, beta: 0.0, ..DiffusionParams::default() };
        let s = feature_scores(Pixel::new(1, 0), Pixel::new(0, 0), &l, &dp);
        assert!((s[0] - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn radius_bounds_second_diffusion() {
        let f = Fixture::uniform(30, 1);
        let l = f.layers();
        let dp = DiffusionParams { theta_f: 0.0, ..DiffusionParams::default() };
        let region = Region::new(Rect { x0: 0, y0: 0, w: 30, h: 1 }, 0, 30, 1);
        let d1: PixelSet = [Pixel::new(0, 0)].into_iter().collect();
        let d2 = diffuse_second(&d1, &region, &l, &dp);
        assert_eq!(d2.len(), dp.r2 + 1);
        assert!(!d2.contains(Pixel::new(dp.r2 + 1, 0)));
    }

    #[test]
    fn final_filter_extremes() {
        let f = Fixture::uniform(6, 6);
        let l = f.layers();
        let set: PixelSet = (0..6).map(|i| Pixel::new(i, i)).collect();
        assert_eq!(final_filter(&set, &l, f64::MIN_POSITIVE), set);
        assert!(final_filter(&set, &l, f64::MAX).is_empty());
    }

    fn random_fixture(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Fixture {
        let mut f = Fixture::uniform(w, h);
        let mut hist = BayesHistograms::empty(16).unwrap();
        for _ in 0..400 {
            hist.add_skin(ColorTriple::new(rng.gen_range(120..=255), rng.gen_range(60..200), rng.gen_range(40..160)));
            hist.add_nonskin(ColorTriple(rng.gen()));
        }
        f.bayes = BayesTable::new(&hist);
        for y in 0..h {
            for x in 0..w {
                f.rgb.set_triple(x, y, ColorTriple(rng.gen()));
                f.ambulant.set(x, y, rng.gen_bool(0.3));
                let strong = rng.gen_bool(0.1);
                f.edges.strong.set(x, y, strong);
                f.edges.weak.set(x, y, strong || rng.gen_bool(0.1));
            }
        }
        let labels = (0..w * h * 4).map(|_| rng.gen_range(0..2)).collect();
        f.homog = HomogeneityLabels::from_labels(w, h, f.homog.channels.clone(), 4, labels).unwrap();
        f
    }

    // grows until no rule fires, with no queue and no visiting order
    fn first_oracle(seed: &PixelSet, region: &Region, l: &FrameLayers<'_>, dp: &DiffusionParams) -> PixelSet {
        let (w, h) = (l.width(), l.height());
        let mut acc = vec![false; w * h];
        for p in seed.iter() {
            acc[p.y as usize * w + p.x as usize] = true;
        }
        loop {
            let mut changed = false;
            for uy in 0..h {
                for ux in 0..w {
                    if acc[uy * w + ux] || !region.allows(l, ux, uy) {
                        continue;
                    }
                    let hit = (0..h).any(|vy| {
                        (0..w).any(|vx| {
                            acc[vy * w + vx]
                                && (vx, vy) != (ux, uy)
                                && vx.abs_diff(ux) <= 1
                                && vy.abs_diff(uy) <= 1
                                && first_step_allowed(l, (ux, uy), (vx, vy), dp)
                        })
                    });
                    if hit {
                        acc[uy * w + ux] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        (0..w * h).filter(|&i| acc[i]).map(|i| Pixel::new(i % w, i / w)).collect()
    }

    fn second_oracle(d1: &PixelSet, region: &Region, l: &FrameLayers<'_>, dp: &DiffusionParams) -> PixelSet {
        let mut out: Vec<Pixel> = d1.iter().copied().collect();
        for y in 0..l.height() {
            for x in 0..l.width() {
                let px = Pixel::new(x, y);
                if d1.contains(px) || !region.allows(l, x, y) {
                    continue;
                }
                let ok = d1.iter().any(|&m| {
                    if m.chebyshev(px) as usize > dp.r2 {
                        return false;
                    }
                    let f = feature_scores(px, m, l, dp);
                    let line = bresenham((m.x as i64, m.y as i64), (x as i64, y as i64));
                    diffusion_score(&f, &dp.weights) >= dp.theta_f
                        && line[1..].iter().all(|&(lx, ly)| !l.edges.weak.get(lx as usize, ly as usize))
                });
                if ok {
                    out.push(px);
                }
            }
        }
        out.into_iter().collect()
    }

    #[test]
    fn diffusion_matches_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..25 {
            let f = random_fixture(&mut rng, 20, 20);
            let l = f.layers();
            let dp = DiffusionParams {
                c_strong: rng.gen_range(1..=4),
                theta_f: rng.gen_range(1.0..4.0),
                ..DiffusionParams::default()
            };
            let dp = DiffusionParams { c_weak: rng.gen_range(1..=dp.c_strong), ..dp };
            let region = Region::new(Rect { x0: 6, y0: 6, w: 8, h: 8 }, 3, 20, 20);
            let seed: PixelSet = (0..4).map(|_| Pixel::new(rng.gen_range(6..14), rng.gen_range(6..14))).collect();
            let d1 = diffuse_first(&seed, &region, &l, &dp);
            assert_eq!(d1, first_oracle(&seed, &region, &l, &dp));
            let d2 = diffuse_second(&d1, &region, &l, &dp);
            assert_eq!(d2, second_oracle(&d1, &region, &l, &dp));
        }
    }

    #[test]
    fn table_matches_raw_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut h = BayesHistograms::empty(32).unwrap();
        for _ in 0..5000 {
            h.add_skin(ColorTriple(rng.gen()));
            h.add_nonskin(ColorTriple(rng.gen()));
        }
        let t = BayesTable::new(&h);
        for _ in 0..1000 {
            let c = ColorTriple(rng.gen());
            let (s, n) = h.cell_counts(h.cell_of(c));
            let (ss, nn) = (h.total_skin() as f64, h.total_nonskin() as f64);
            let (ls, ln) = ((s as f64 + 1.0) / (ss + 1.0), (n as f64 + 1.0) / (nn + 1.0));
            let post = ls * ss / (ls * ss + ln * nn);
            let got = t.lookup(c);
            assert!((got.ratio - ls / ln).abs() <= 1e-12 * (ls / ln));
            assert!((got.p_skin - post).abs() <= 1e-12 * post);
        }
    }

    #[test]
    fn filter_matches_predicate() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random_fixture(&mut rng, 16, 16);
        let l = f.layers();
        for _ in 0..20 {
            let set: PixelSet = (0..60).map(|_| Pixel::new(rng.gen_range(0..16), rng.gen_range(0..16))).collect();
            let th = rng.gen_range(0.1..5.0);
            let kept = final_filter(&set, &l, th);
            for p in set.iter() {
                assert_eq!(kept.contains(*p), l.score(p.x as usize, p.y as usize).ratio >= th);
            }
        }
    }

    #[test]
    fn window_state_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let f = random_fixture(&mut rng, 32, 32);
            let st = segment_window(Rect { x0: 8, y0: 8, w: 16, h: 16 }, &f.layers(), &SeedParams::default(), &DiffusionParams::default());
            assert!(st.chain_holds());
        }
    }

    #[test]
    fn pixel_set_ops() {
        let a: PixelSet = [Pixel::new(3, 1), Pixel::new(1, 1), Pixel::new(3, 1), Pixel::new(0, 2)]
            .into_iter()
            .collect();
        assert_eq!(a.len(), 3);
        assert_eq!(a.as_slice()[0], Pixel::new(1, 1));
        let b: PixelSet = [Pixel::new(3, 1)].into_iter().collect();
        assert!(b.is_subset(&a));
        assert!(!a.is_subset(&b));
        assert_eq!(a.difference(&b).len(), 2);
    }
}
