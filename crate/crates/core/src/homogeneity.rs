//! Homogeneous-region labels from multilevel Otsu thresholding, and the
//! Sobel edge maps used as diffusion barriers.

use std::cmp::Ordering;

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgio::{quantize_i_channel, rgb_to_i_channel, ColorSpace, ColorTriple, Mask, Raster};
use crate::params::Channel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; 256],
    total: u64,
}

impl Histogram256 {
    pub fn from_counts(counts: [u64; 256]) -> Result<Self> {
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::Degenerate {
                occupied: 0,
                classes: 0,
            });
        }
        Ok(Histogram256 { counts, total })
    }

    pub fn from_samples(samples: &[u8]) -> Result<Self> {
        let counts = samples
            .par_chunks(1 << 14)
            .map(|chunk| {
                let mut c = [0u64; 256];
                for &v in chunk {
                    c[usize::from(v)] += 1;
                }
                c
            })
            .reduce(
                || [0u64; 256],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        Histogram256::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Thresholds `t_1 < ... < t_{k-1}` maximizing the between-class variance,
/// where class `c` holds values in `(t_c, t_{c+1}]` and class 0 holds values
/// `<= t_1`. Ties resolve to the lexicographically smallest tuple.
///
/// Only the last occupied bin of each class can be the smallest threshold
/// for a given partition, and the optimum never leaves a class empty, so the
/// search runs over cut points between occupied bins. A suffix dynamic
/// program over `sum_c S_c^2 / N_c` (equivalent to between-class variance
/// for a fixed global mean) makes this exact for every `k`.
pub fn otsu_multilevel(h: &Histogram256, k: usize) -> Result<Vec<u8>> {
    if !(2..=5).contains(&k) {
        return Err(Error::Param(format!("class count must be in 2..=5, got {k}")));
    }
    let occupied: Vec<usize> = (0..256).filter(|&v| h.counts[v] > 0).collect();
    let m = occupied.len();
    if m < k {
        return Err(Error::Degenerate {
            occupied: m,
            classes: k,
        });
    }
    // cumulative zeroth and first moments over occupied bins
    let mut cn = vec![0u64; m + 1];
    let mut cs = vec![0u64; m + 1];
    for (i, &v) in occupied.iter().enumerate() {
        cn[i + 1] = cn[i] + h.counts[v];
        cs[i + 1] = cs[i] + h.counts[v] * v as u64;
    }
    let term = |a: usize, b: usize| -> f64 {
        let s = (cs[b] - cs[a]) as f64;
        s * s / (cn[b] - cn[a]) as f64
    };

    // suf[c][a]: best score of classes c..k-1 when class c starts after cut a
    let mut suf = vec![vec![f64::NEG_INFINITY; m + 1]; k];
    let mut arg = vec![vec![0usize; m + 1]; k];
    for a in (k - 1)..m {
        suf[k - 1][a] = term(a, m);
        arg[k - 1][a] = m;
    }
    // cut chain of classes c..k-1 starting after cut a, class c ending at b
    let chain = |arg: &[Vec<usize>], c: usize, a: usize, b: usize| {
        let mut cuts = vec![a, b];
        for cc in c + 1..k {
            let last = *cuts.last().expect("non-empty");
            cuts.push(arg[cc][last]);
        }
        cuts
    };
    let better = |arg: &[Vec<usize>], c: usize, a: usize, v: f64, b: usize, best: f64, best_b: usize| {
        if best == f64::NEG_INFINITY {
            return true;
        }
        // float sums of distinct partitions can round apart from an exact tie
        if (v - best).abs() <= 1e-9 * best.abs().max(1.0) {
            return exact_cmp(&cs, &cn, &chain(arg, c, a, b), &chain(arg, c, a, best_b)) == Ordering::Greater;
        }
        v > best
    };
    for c in (1..k - 1).rev() {
        let last = m - (k - 1 - c);
        for a in c..last {
            let mut best = f64::NEG_INFINITY;
            let mut best_b = 0;
            for b in a + 1..=last {
                let v = term(a, b) + suf[c + 1][b];
                if better(&arg, c, a, v, b, best, best_b) {
                    best = v;
                    best_b = b;
                }
            }
            suf[c][a] = best;
            arg[c][a] = best_b;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut first = 0;
    for a in 1..=m - (k - 1) {
        let v = term(0, a) + suf[1][a];
        if better(&arg, 0, 0, v, a, best, first) {
            best = v;
            first = a;
        }
    }
    let cuts = chain(&arg, 0, 0, first);
    let cuts = &cuts[1..k];
    Ok(cuts.iter().map(|&u| occupied[u - 1] as u8).collect())
}

/// Compares `sum S^2/N` of two partitions, given as cut lists, exactly.
fn exact_cmp(cs: &[u64], cn: &[u64], x: &[usize], y: &[usize]) -> Ordering {
    let frac = |cuts: &[usize]| {
        let (mut num, mut den) = (BigUint::from(0u32), BigUint::from(1u32));
        for w in cuts.windows(2) {
            let s = BigUint::from(cs[w[1]] - cs[w[0]]);
            let n = BigUint::from(cn[w[1]] - cn[w[0]]);
            num = num * &n + &s * &s * &den;
            den *= n;
        }
        (num, den)
    };
    let ((a, b), (c, d)) = (frac(x), frac(y));
    (a * d).cmp(&(c * b))
}

/// Class index of `v` under `thresholds`.
#[inline]
pub fn class_of(v: u8, thresholds: &[u8]) -> u8 {
    thresholds.iter().filter(|&&t| v > t).count() as u8
}

/// Byte samples of one fusion channel. `rgb` supplies I, `ycc` the rest.
pub fn channel_plane(rgb: &Raster, ycc: &Raster, ch: Channel) -> Vec<u8> {
    match ch {
        Channel::Y | Channel::Cb | Channel::Cr => {
            let off = match ch {
                Channel::Y => 0,
                Channel::Cb => 1,
                _ => 2,
            };
            let mut out = vec![0u8; ycc.pixel_count()];
            let row = ycc.width().max(1);
            out.par_chunks_mut(row).zip(ycc.data().par_chunks(row * 3)).for_each(|(d, s)| {
                for (o, c) in d.iter_mut().zip(s.chunks_exact(3)) {
                    *o = c[off];
                }
            });
            out
        }
        Channel::I => {
            let mut out = vec![0u8; rgb.pixel_count()];
            let row = rgb.width().max(1);
            out.par_chunks_mut(row).zip(rgb.data().par_chunks(row * 3)).for_each(|(d, s)| {
                for (o, c) in d.iter_mut().zip(s.chunks_exact(3)) {
                    *o = quantize_i_channel(rgb_to_i_channel(ColorTriple([c[0], c[1], c[2]])));
                }
            });
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomogeneityLabels {
    pub channels: Vec<Channel>,
    pub classes: usize,
    width: usize,
    height: usize,
    /// Pixel-major: `labels[idx * channels.len() + c]`.
    labels: Vec<u8>,
    /// Thresholds per channel; `None` where the histogram was degenerate.
    pub thresholds: Vec<Option<Vec<u8>>>,
}

impl HomogeneityLabels {
    /// Builds labels directly, e.g. for synthetic contexts.
    pub fn from_labels(
        width: usize,
        height: usize,
        channels: Vec<Channel>,
        classes: usize,
        labels: Vec<u8>,
    ) -> Result<Self> {
        if labels.len() != width * height * channels.len() {
            return Err(Error::Dimension("label vector length mismatch".into()));
        }
        if labels.iter().any(|&l| usize::from(l) >= classes) {
            return Err(Error::Param("class index out of range".into()));
        }
        let n = channels.len();
        Ok(HomogeneityLabels {
            channels,
            classes,
            width,
            height,
            labels,
            thresholds: vec![None; n],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Class vector of the pixel at flat index `idx`.
    #[inline]
    pub fn vector(&self, idx: usize) -> &[u8] {
        let n = self.channels.len();
        &self.labels[idx * n..idx * n + n]
    }

    pub fn is_degenerate(&self, channel: usize) -> bool {
        self.thresholds[channel].is_none()
    }

    /// Visualization of one channel: class index scaled to 0..=255.
    pub fn channel_raster(&self, channel: usize) -> Raster {
        let n = self.channels.len();
        let scale = 255 / (self.classes.max(2) - 1);
        let data = (0..self.width * self.height)
            .map(|i| (usize::from(self.labels[i * n + channel]) * scale) as u8)
            .collect();
        Raster::new(self.width, self.height, ColorSpace::Gray8, data).expect("valid dimensions")
    }
}

/// Number of channels on which two class vectors agree.
#[inline]
pub fn agreement(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// Sum of per-channel class distances.
#[inline]
pub fn class_distance(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(&x, &y)| u32::from(x.abs_diff(y))).sum()
}

/// Otsu-labels every pixel on each channel. Degenerate channels put every
/// pixel in class 0 and record `None` thresholds.
pub fn label_homogeneous(
    rgb: &Raster,
    ycc: &Raster,
    channels: &[Channel],
    k: usize,
) -> Result<HomogeneityLabels> {
    if channels.is_empty() {
        return Err(Error::Param("no homogeneity channels".into()));
    }
    if rgb.space() != ColorSpace::Rgb8 || ycc.space() != ColorSpace::YCbCr8 || !rgb.same_shape(ycc) {
        return Err(Error::Dimension(
            "homogeneity labeling needs matching RGB and YCbCr rasters".into(),
        ));
    }
    let n = channels.len();
    let px = rgb.pixel_count();
    let mut labels = vec![0u8; px * n];
    let mut thresholds = Vec::with_capacity(n);
    for (c, &ch) in channels.iter().enumerate() {
        let plane = channel_plane(rgb, ycc, ch);
        let hist = Histogram256::from_samples(&plane)?;
        let t = match otsu_multilevel(&hist, k) {
            Ok(t) => t,
            Err(Error::Degenerate { .. }) => {
                thresholds.push(None);
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut lut = [0u8; 256];
        for (v, slot) in lut.iter_mut().enumerate() {
            *slot = class_of(v as u8, &t);
        }
        let row = rgb.width().max(1);
        labels
            .par_chunks_mut(n * row)
            .zip(plane.par_chunks(row))
            .for_each(|(dst, src)| {
                for (d, &v) in dst.chunks_exact_mut(n).zip(src) {
                    d[c] = lut[usize::from(v)];
                }
            });
        thresholds.push(Some(t));
    }
    Ok(HomogeneityLabels {
        channels: channels.to_vec(),
        classes: k,
        width: rgb.width(),
        height: rgb.height(),
        labels,
        thresholds,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMaps {
    pub strong: Mask,
    pub weak: Mask,
}

/// `|Gx| + |Gy|` of the 3x3 Sobel operator on the Y channel. The one-pixel
/// border is zero.
pub fn sobel_magnitude(ycc: &Raster) -> Vec<u16> {
    let (w, h) = (ycc.width(), ycc.height());
    let d = ycc.data();
    let yv = |x: usize, y: usize| i32::from(d[(y * w + x) * 3]);
    let mut out = vec![0u16; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    out.par_chunks_mut(w)
        .enumerate()
        .skip(1)
        .take(h - 2)
        .for_each(|(y, row)| {
            for x in 1..w - 1 {
                let gx = (yv(x + 1, y - 1) + 2 * yv(x + 1, y) + yv(x + 1, y + 1))
                    - (yv(x - 1, y - 1) + 2 * yv(x - 1, y) + yv(x - 1, y + 1));
                let gy = (yv(x - 1, y + 1) + 2 * yv(x, y + 1) + yv(x + 1, y + 1))
                    - (yv(x - 1, y - 1) + 2 * yv(x, y - 1) + yv(x + 1, y - 1));
                row[x] = (gx.abs() + gy.abs()) as u16;
            }
        });
    out
}

pub fn edge_maps(ycc: &Raster, strong: u32, weak: u32) -> Result<EdgeMaps> {
    if weak > strong {
        return Err(Error::Param(format!("weak edge threshold {weak} exceeds strong {strong}")));
    }
    if ycc.space() != ColorSpace::YCbCr8 {
        return Err(Error::Format("edge maps need a YCbCr raster".into()));
    }
    let mag = sobel_magnitude(ycc);
    let (w, h) = (ycc.width(), ycc.height());
    let strong_bits = mag.iter().map(|&g| u32::from(g) >= strong).collect();
    let weak_bits = mag.iter().map(|&g| u32::from(g) >= weak).collect();
    Ok(EdgeMaps {
        strong: Mask::from_bits(w, h, strong_bits)?,
        weak: Mask::from_bits(w, h, weak_bits)?,
    })
}
