//! Scoring against three-class ground truth.

use std::fmt::{self, Write as _};
use std::fs;
use std::ops::{Add, AddAssign};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{GroundTruth, GtLabel, GT_SUFFIX};
use crate::error::{Error, Result};
use crate::imgio::{load_pnm, Mask};
use crate::prefilter::WindowGrid;

pub const MASK_SUFFIX: &str = ".mask.pgm";
pub const WINDOWS_SUFFIX: &str = ".windows.txt";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub undecided_excluded: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_ + self.undecided_excluded
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
        self.undecided_excluded += o.undecided_excluded;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Counts predicted skin against ground truth; undecided pixels are skipped.
pub fn confusion(pred: &Mask, gt: &GroundTruth) -> Result<ConfusionCounts> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.labels()) {
        match (g, p) {
            (GtLabel::Undecided, _) => c.undecided_excluded += 1,
            (GtLabel::Skin, true) => c.tp += 1,
            (GtLabel::Skin, false) => c.fn_ += 1,
            (GtLabel::NonSkin, true) => c.fp += 1,
            (GtLabel::NonSkin, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Metrics with empty denominators left undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
    pub elimination_rate: Option<f64>,
}

/// Harmonic mean of precision and recall; undefined when both are zero.
pub fn f_score(p: f64, r: f64) -> Option<f64> {
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

pub fn prf(c: &ConfusionCounts) -> Metrics {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f = match (precision, recall) {
        (Some(p), Some(r)) => f_score(p, r),
        _ => None,
    };
    Metrics {
        precision,
        recall,
        f_score: f,
        elimination_rate: None,
    }
}

/// Fraction of tiles kept as candidates.
pub fn elimination_rate(g: &WindowGrid) -> Option<f64> {
    let total = g.cells.len();
    (total > 0).then(|| g.candidate_count() as f64 / total as f64)
}

/// Tiles holding ground-truth skin and how many of them are candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowHits {
    pub skin_windows: u64,
    pub candidates: u64,
}

impl WindowHits {
    pub fn rate(&self) -> Option<f64> {
        (self.skin_windows > 0).then(|| self.candidates as f64 / self.skin_windows as f64)
    }
}

impl Add for WindowHits {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        WindowHits {
            skin_windows: self.skin_windows + o.skin_windows,
            candidates: self.candidates + o.candidates,
        }
    }
}

/// A tile is a skin window when it holds at least one ground-truth skin pixel.
pub fn window_tp(g: &WindowGrid, gt: &GroundTruth) -> Result<WindowHits> {
    if g.width != gt.width() || g.height != gt.height() {
        return Err(Error::Dimension("window grid and ground truth differ in size".into()));
    }
    let mut hits = WindowHits::default();
    for row in 0..g.rows {
        for col in 0..g.cols {
            let r = g.rect(col, row);
            let skin = (r.y0..r.y0 + r.h).any(|y| (r.x0..r.x0 + r.w).any(|x| gt.get(x, y) == GtLabel::Skin));
            if skin {
                hits.skin_windows += 1;
                hits.candidates += u64::from(g.cell(col, row).candidate);
            }
        }
    }
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub windows: Option<WindowHits>,
}

impl ImageScore {
    pub fn new(name: impl Into<String>, counts: ConfusionCounts, grid: Option<(&WindowGrid, &GroundTruth)>) -> Result<Self> {
        let mut metrics = prf(&counts);
        let mut windows = None;
        if let Some((g, gt)) = grid {
            metrics.elimination_rate = elimination_rate(g);
            windows = Some(window_tp(g, gt)?);
        }
        Ok(ImageScore {
            name: name.into(),
            counts,
            metrics,
            windows,
        })
    }
}

/// Mean of the defined values and how many were undefined.
fn mean_defined(vals: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for v in vals {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), skipped)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusReport {
    pub images: Vec<ImageScore>,
}

impl CorpusReport {
    pub fn pooled_counts(&self) -> ConfusionCounts {
        self.images.iter().map(|i| i.counts).sum()
    }

    /// Metrics over the summed counts of every image.
    pub fn pooled(&self) -> Metrics {
        let mut m = prf(&self.pooled_counts());
        m.elimination_rate = self.mean_elimination_rate();
        m
    }

    pub fn mean_elimination_rate(&self) -> Option<f64> {
        mean_defined(self.images.iter().map(|i| i.metrics.elimination_rate)).0
    }

    pub fn window_hits(&self) -> Option<WindowHits> {
        self.images.iter().filter_map(|i| i.windows).reduce(Add::add)
    }

    /// Per-image means; also reports how many images had each metric undefined.
    pub fn mean_per_image(&self) -> (Metrics, [usize; 3]) {
        let (p, sp) = mean_defined(self.images.iter().map(|i| i.metrics.precision));
        let (r, sr) = mean_defined(self.images.iter().map(|i| i.metrics.recall));
        let (f, sf) = mean_defined(self.images.iter().map(|i| i.metrics.f_score));
        let m = Metrics {
            precision: p,
            recall: r,
            f_score: f,
            elimination_rate: self.mean_elimination_rate(),
        };
        (m, [sp, sr, sf])
    }

    /// Fixed-width table, one row per image followed by aggregates.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let w = self.images.iter().map(|i| i.name.len()).max().unwrap_or(0).max(12);
        let _ = writeln!(out, "{:<w$}  {:>9}  {:>9}  {:>9}  {:>9}", "Image", "Precision", "Recall", "F-score", "ER");
        let row = |out: &mut String, name: &str, m: &Metrics| {
            let _ = writeln!(
                out,
                "{:<w$}  {:>9}  {:>9}  {:>9}  {:>9}",
                name,
                Cell(m.precision),
                Cell(m.recall),
                Cell(m.f_score),
                Cell(m.elimination_rate)
            );
        };
        for i in &self.images {
            row(&mut out, &i.name, &i.metrics);
        }
        let _ = writeln!(out, "{}", "-".repeat(w + 44));
        row(&mut out, "pooled", &self.pooled());
        let (mean, skipped) = self.mean_per_image();
        row(&mut out, "mean/image", &mean);
        if skipped.iter().any(|&s| s > 0) {
            let _ = writeln!(
                out,
                "n/a images skipped in means: precision {}, recall {}, F-score {}",
                skipped[0], skipped[1], skipped[2]
            );
        }
        if let Some(h) = self.window_hits() {
            let _ = writeln!(
                out,
                "window TP: {} ({} of {} skin windows)",
                Cell(h.rate()),
                h.candidates,
                h.skin_windows
            );
        }
        out
    }

    /// Comma-separated rows: per image, then `pooled`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,tp,fp,tn,fn,undecided,precision,recall,f_score,er,skin_windows,candidate_skin_windows\n");
        let mut line = |name: &str, c: &ConfusionCounts, m: &Metrics, h: Option<WindowHits>| {
            let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
            let (sw, cw) = h.map_or((String::new(), String::new()), |h| (h.skin_windows.to_string(), h.candidates.to_string()));
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{},{},{},{},{},{sw},{cw}",
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                c.undecided_excluded,
                opt(m.precision),
                opt(m.recall),
                opt(m.f_score),
                opt(m.elimination_rate)
            );
        };
        for i in &self.images {
            line(&i.name, &i.counts, &i.metrics, i.windows);
        }
        line("pooled", &self.pooled_counts(), &self.pooled(), self.window_hits());
        out
    }
}

struct Cell(Option<f64>);

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => f.pad(&format!("{v:.4}")),
            None => f.pad("n/a"),
        }
    }
}

/// Scores every `name.mask.pgm` in `pred_dir` against `name.gt.pgm` in
/// `gt_dir`. A `name.windows.txt` table next to the mask adds ER and window TP.
pub fn evaluate_dirs(pred_dir: impl AsRef<Path>, gt_dir: impl AsRef<Path>) -> Result<CorpusReport> {
    let (pred_dir, gt_dir) = (pred_dir.as_ref(), gt_dir.as_ref());
    let rd = fs::read_dir(pred_dir).map_err(|e| Error::io(pred_dir, e))?;
    let mut names = Vec::new();
    for e in rd {
        let e = e.map_err(|e| Error::io(pred_dir, e))?;
        if let Some(n) = e.file_name().to_str().and_then(|f| f.strip_suffix(MASK_SUFFIX)) {
            names.push(n.to_string());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::Format(format!("no *{MASK_SUFFIX} files in {}", pred_dir.display())));
    }
    let images = names
        .par_iter()
        .map(|name| {
            let pred = Mask::from_raster(&load_pnm(pred_dir.join(format!("{name}{MASK_SUFFIX}")))?)?;
            let gt = GroundTruth::from_raster(&load_pnm(gt_dir.join(format!("{name}{GT_SUFFIX}")))?)?;
            let counts = confusion(&pred, &gt)?;
            let table = pred_dir.join(format!("{name}{WINDOWS_SUFFIX}"));
            let grid = if table.is_file() {
                let text = fs::read_to_string(&table).map_err(|e| Error::io(&table, e))?;
                Some(WindowGrid::from_table(&text)?)
            } else {
                None
            };
            ImageScore::new(name.clone(), counts, grid.as_ref().map(|g| (g, &gt)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusReport { images })
}
