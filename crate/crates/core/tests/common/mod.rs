//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skinseg::diffusion::{BayesTable, FrameLayers, Pixel, PixelSet, Region};
use skinseg::homogeneity::{EdgeMaps, HomogeneityLabels};
use skinseg::imgio::{ColorSpace, ColorTriple, Mask, Raster};
use skinseg::model::{train_labeled, BayesHistograms, SkinColorModel, TrainOptions};
use skinseg::params::{Channel, DiffusionParams, FeedbackSource};
use skinseg::polygon::ConvexPolygon;
use skinseg::prefilter::{TernaryClass, TernaryImage};
use skinseg::synth::{synth_corpus, Palette, SynthConfig};

/// Model trained on the builtin-palette corpus every end-to-end check uses.
pub fn reference_model() -> SkinColorModel {
    let train = synth_corpus(&SynthConfig::default(), Palette::Builtin, 200, 1).expect("training corpus");
    train_labeled(&train, &TrainOptions::default()).expect("training")
}

// ---------------------------------------------------------------------------
// Otsu

/// Exhaustive multilevel Otsu: every threshold tuple `t_1 < .. < t_{k-1}`
/// over 0..=255, scored by exact between-class variance, first (hence
/// lexicographically smallest) strict maximum wins. `None` when fewer than
/// `k` bins are occupied.
pub fn otsu_oracle(counts: &[u64; 256], k: usize) -> Option<Vec<u8>> {
    if counts.iter().filter(|&&c| c > 0).count() < k {
        return None;
    }
    let mut pn = [0u64; 257];
    let mut ps = [0u64; 257];
    for v in 0..256 {
        pn[v + 1] = pn[v] + counts[v];
        ps[v + 1] = ps[v] + counts[v] * v as u64;
    }
    let (n, s) = (pn[256], ps[256]);
    // N^2 * sigma_B^2 = sum_c (S_c N - S N_c)^2 / N_c, as a fraction
    let classes = |t: &[usize]| {
        let mut b = vec![0usize];
        b.extend(t.iter().map(|&x| x + 1));
        b.push(256);
        b.windows(2)
            .map(|w| (ps[w[1]] - ps[w[0]], pn[w[1]] - pn[w[0]]))
            .filter(|&(_, nc)| nc > 0)
            .collect::<Vec<_>>()
    };
    let approx = |t: &[usize]| {
        classes(t)
            .iter()
            .map(|&(sc, nc)| {
                let d = sc as f64 * n as f64 - s as f64 * nc as f64;
                d * d / nc as f64
            })
            .sum::<f64>()
    };
    let exact = |t: &[usize]| {
        let (mut num, mut den) = (BigUint::from(0u32), BigUint::from(1u32));
        for (sc, nc) in classes(t) {
            let a = BigUint::from(sc) * n;
            let b = BigUint::from(s) * nc;
            let d = if a >= b { a - b } else { b - a };
            num = num * nc + &d * &d * &den;
            den *= nc;
        }
        (num, den)
    };
    let mut tuples = Vec::new();
    let mut t = vec![0usize; k - 1];
    fn rec(i: usize, lo: usize, t: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == t.len() {
            out.push(t.clone());
            return;
        }
        for v in lo..256 {
            t[i] = v;
            rec(i + 1, v + 1, t, out);
        }
    }
    rec(0, 0, &mut t, &mut tuples);
    let scores: Vec<f64> = tuples.iter().map(|t| approx(t)).collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // floats only prune; the survivors are compared exactly in order
    let mut best: Option<(usize, BigUint, BigUint)> = None;
    for (i, t) in tuples.iter().enumerate() {
        if scores[i] < top * (1.0 - 1e-9) {
            continue;
        }
        let (a, b) = exact(t);
        let wins = match &best {
            None => true,
            Some((_, c, d)) => &a * d > c * &b,
        };
        if wins {
            best = Some((i, a, b));
        }
    }
    best.map(|(i, _, _)| tuples[i].iter().map(|&x| x as u8).collect())
}

// ---------------------------------------------------------------------------
// polygons

/// Even-odd ray casting on doubled integer coordinates, boundary inclusive.
/// Vertices must lie on the half-integer grid.
pub fn ray_cast_contains(poly: &ConvexPolygon, p: (u8, u8)) -> bool {
    let v: Vec<(i64, i64)> = poly
        .vertices()
        .iter()
        .map(|q| {
            let (x, y) = (q.x * 2.0, q.y * 2.0);
            assert!(x.fract() == 0.0 && y.fract() == 0.0, "vertex off the half-integer grid");
            (x as i64, y as i64)
        })
        .collect();
    let (px, py) = (2 * i64::from(p.0), 2 * i64::from(p.1));
    let mut inside = false;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let cr = (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0);
        let within = px >= a.0.min(b.0) && px <= a.0.max(b.0) && py >= a.1.min(b.1) && py <= a.1.max(b.1);
        if cr == 0 && within {
            return true;
        }
        if (a.1 > py) != (b.1 > py) {
            // x of the crossing, compared without division
            let lhs = (px - a.0) * (b.1 - a.1);
            let rhs = (b.0 - a.0) * (py - a.1);
            if (b.1 > a.1 && lhs < rhs) || (b.1 < a.1 && lhs > rhs) {
                inside = !inside;
            }
        }
    }
    inside
}

/// White when inside every inner polygon, gray when inside every outer one.
pub fn ternary_oracle(ycc: [u8; 3], m: &SkinColorModel) -> TernaryClass {
    let [y, cb, cr] = ycc;
    let pts = [(y, cb), (y, cr), (cb, cr)];
    let inner = m.pairs.iter().zip(pts).all(|(pp, p)| ray_cast_contains(&pp.inner, p));
    let outer = m.pairs.iter().zip(pts).all(|(pp, p)| ray_cast_contains(&pp.outer, p));
    if inner {
        TernaryClass::White
    } else if outer {
        TernaryClass::Gray
    } else {
        TernaryClass::Black
    }
}

// ---------------------------------------------------------------------------
// diffusion

/// Posterior skin probability recomputed from raw histogram counts.
pub fn p_skin_oracle(h: &BayesHistograms, c: ColorTriple) -> f64 {
    let (s, n) = h.cell_counts(h.cell_of(c));
    let (ss, nn) = (h.total_skin() as f64, h.total_nonskin() as f64);
    let ls = (s as f64 + 1.0) / (ss + 1.0);
    let ln = (n as f64 + 1.0) / (nn + 1.0);
    ls * ss / (ls * ss + ln * nn)
}

/// Read-only view of everything a diffusion oracle consults.
pub struct View<'a> {
    pub rgb: &'a Raster,
    pub ambulant: &'a Mask,
    pub homog: &'a HomogeneityLabels,
    pub edges: &'a EdgeMaps,
    pub hist: &'a BayesHistograms,
    pub feedback: &'a Mask,
    pub cover: &'a Mask,
}

impl View<'_> {
    fn allowed(&self, region: &Region, x: usize, y: usize) -> bool {
        let b = region.bounds;
        x >= b.x0 && y >= b.y0 && x < b.x0 + b.w && y < b.y0 + b.h && self.cover.get(x, y)
    }

    fn step_ok(&self, u: (usize, usize), v: (usize, usize), dp: &DiffusionParams) -> bool {
        let w = self.rgb.width();
        if self.edges.strong.get(u.0, u.1) {
            return false;
        }
        let a = self.homog.vector(u.1 * w + u.0);
        let b = self.homog.vector(v.1 * w + v.0);
        let agree = a.iter().zip(b).filter(|(p, q)| p == q).count();
        agree >= if self.ambulant.get(u.0, u.1) { dp.c_weak } else { dp.c_strong }
    }

    /// Weighted score of `x` against `m`, with weights applied left to right.
    pub fn score(&self, x: (usize, usize), m: (usize, usize), dp: &DiffusionParams) -> f64 {
        let w = self.rgb.width();
        let a = self.homog.vector(x.1 * w + x.0);
        let b = self.homog.vector(m.1 * w + m.0);
        let d: u32 = a.iter().zip(b).map(|(p, q)| u32::from(p.abs_diff(*q))).sum();
        let cheb = x.0.abs_diff(m.0).max(x.1.abs_diff(m.1));
        let f = [
            (-dp.alpha * f64::from(d)).exp() + dp.beta,
            (-dp.gamma * cheb as f64).exp(),
            p_skin_oracle(self.hist, self.rgb.triple(x.0, x.1)),
            if self.ambulant.get(x.0, x.1) { 1.0 } else { 0.0 },
            if self.feedback.get(x.0, x.1) { 1.0 } else { 0.0 },
        ];
        let w = dp.weights;
        w[0] * f[0] + w[1] * f[1] + w[2] * f[2] + w[3] * f[3] + w[4] * f[4]
    }

    /// No weak edge on the line from `m` to `x`, `m` itself excluded.
    pub fn line_clear(&self, m: (usize, usize), x: (usize, usize)) -> bool {
        line(m, x).into_iter().skip(1).all(|(lx, ly)| !self.edges.weak.get(lx, ly))
    }
}

/// Integer Bresenham from `a` to `b`, both endpoints included.
pub fn line(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (x0, y0, x1, y1) = (a.0 as i64, a.1 as i64, b.0 as i64, b.1 as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut out = vec![(x as usize, y as usize)];
    while (x, y) != (x1, y1) {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        out.push((x as usize, y as usize));
    }
    out
}

/// First diffusion as a fixed point: sweep every pixel until no accepted
/// 8-neighbor admits a new one.
pub fn first_fixed_point(seed: &PixelSet, region: &Region, v: &View<'_>, dp: &DiffusionParams) -> PixelSet {
    let (w, h) = (v.rgb.width(), v.rgb.height());
    let mut acc = vec![false; w * h];
    for p in seed.iter() {
        if region.bounds.contains(p.x as usize, p.y as usize) {
            acc[p.y as usize * w + p.x as usize] = true;
        }
    }
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if acc[y * w + x] || !v.allowed(region, x, y) {
                    continue;
                }
                let hit = (y.saturating_sub(1)..=(y + 1).min(h - 1)).any(|ny| {
                    (x.saturating_sub(1)..=(x + 1).min(w - 1))
                        .any(|nx| (nx, ny) != (x, y) && acc[ny * w + nx] && v.step_ok((x, y), (nx, ny), dp))
                });
                if hit {
                    acc[y * w + x] = true;
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

/// Second diffusion by brute force over every (master, candidate) pair.
pub fn second_pairs(diff1: &PixelSet, region: &Region, v: &View<'_>, dp: &DiffusionParams) -> PixelSet {
    let mut out: Vec<Pixel> = diff1.iter().copied().collect();
    for y in 0..v.rgb.height() {
        for x in 0..v.rgb.width() {
            if diff1.contains(Pixel::new(x, y)) || !v.allowed(region, x, y) {
                continue;
            }
            let ok = diff1.iter().any(|m| {
                let m = (m.x as usize, m.y as usize);
                m.0.abs_diff(x).max(m.1.abs_diff(y)) <= dp.r2
                    && v.score((x, y), m, dp) >= dp.theta_f
                    && v.line_clear(m, (x, y))
            });
            if ok {
                out.push(Pixel::new(x, y));
            }
        }
    }
    out.into_iter().collect()
}

/// Owned random frame layers for diffusion checks.
pub struct RandomLayers {
    pub rgb: Raster,
    pub ternary: TernaryImage,
    pub ambulant: Mask,
    pub homog: HomogeneityLabels,
    pub edges: EdgeMaps,
    pub hist: BayesHistograms,
    pub table: BayesTable,
    pub prev_diff1: Mask,
    pub prev_final: Mask,
    pub cover: Mask,
}

impl RandomLayers {
    pub fn new(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Self {
        let mut hist = BayesHistograms::empty(16).expect("bins");
        for _ in 0..600 {
            hist.add_skin(ColorTriple::new(rng.gen_range(120..=255), rng.gen_range(60..200), rng.gen_range(40..160)));
            hist.add_nonskin(ColorTriple(rng.gen()));
        }
        let rgb_data = (0..w * h * 3).map(|_| rng.gen()).collect();
        let rgb = Raster::new(w, h, ColorSpace::Rgb8, rgb_data).expect("rgb");
        let labels = (0..w * h)
            .map(|_| [TernaryClass::Black, TernaryClass::Gray, TernaryClass::White][rng.gen_range(0..3)])
            .collect();
        let bits = |rng: &mut ChaCha8Rng, p: f64| Mask::from_bits(w, h, (0..w * h).map(|_| rng.gen_bool(p)).collect()).expect("mask");
        let strong = bits(rng, 0.08);
        let extra = bits(rng, 0.08);
        let weak = Mask::from_bits(w, h, strong.bits().iter().zip(extra.bits()).map(|(a, b)| *a || *b).collect()).expect("mask");
        // cover in 8x8 blocks, as candidate windows would give
        let blocks: Vec<bool> = (0..w.div_ceil(8) * h.div_ceil(8)).map(|_| rng.gen_bool(0.85)).collect();
        let cover = Mask::from_bits(w, h, (0..w * h).map(|i| blocks[(i / w / 8) * w.div_ceil(8) + (i % w) / 8]).collect()).expect("mask");
        let channels = vec![Channel::Y, Channel::Cb, Channel::Cr, Channel::I];
        let classes = rng.gen_range(2..=3);
        let hl = (0..w * h * 4).map(|_| rng.gen_range(0..classes as u8)).collect();
        RandomLayers {
            rgb,
            ternary: TernaryImage::new(w, h, labels).expect("ternary"),
            ambulant: bits(rng, 0.3),
            homog: HomogeneityLabels::from_labels(w, h, channels, classes, hl).expect("labels"),
            edges: EdgeMaps { strong, weak },
            table: BayesTable::new(&hist),
            hist,
            prev_diff1: bits(rng, 0.2),
            prev_final: bits(rng, 0.2),
            cover,
        }
    }

    pub fn layers(&self) -> FrameLayers<'_> {
        FrameLayers {
            rgb: &self.rgb,
            ternary: &self.ternary,
            ambulant: &self.ambulant,
            homog: &self.homog,
            edges: &self.edges,
            bayes: &self.table,
            prev_diff1: &self.prev_diff1,
            prev_final: &self.prev_final,
            cover: &self.cover,
        }
    }

    pub fn view(&self, src: FeedbackSource) -> View<'_> {
        View {
            rgb: &self.rgb,
            ambulant: &self.ambulant,
            homog: &self.homog,
            edges: &self.edges,
            hist: &self.hist,
            feedback: match src {
                FeedbackSource::PrevDiff1 => &self.prev_diff1,
                FeedbackSource::PrevFinal => &self.prev_final,
            },
            cover: &self.cover,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
