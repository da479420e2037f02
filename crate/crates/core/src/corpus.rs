//! Labeled corpus layout: `name.ppm` frames paired with `name.gt.pgm`
//! three-class ground truth (0 non-skin, 128 undecided, 255 skin).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imgio::{load_pnm, ColorSpace, Raster};

pub const GT_SUFFIX: &str = ".gt.pgm";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtLabel {
    NonSkin,
    Undecided,
    Skin,
}

impl GtLabel {
    pub fn from_sample(v: u8) -> Option<Self> {
        match v {
            0 => Some(GtLabel::NonSkin),
            128 => Some(GtLabel::Undecided),
            255 => Some(GtLabel::Skin),
            _ => None,
        }
    }

    pub fn sample(self) -> u8 {
        match self {
            GtLabel::NonSkin => 0,
            GtLabel::Undecided => 128,
            GtLabel::Skin => 255,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    width: usize,
    height: usize,
    labels: Vec<GtLabel>,
}

impl GroundTruth {
    pub fn new(width: usize, height: usize, labels: Vec<GtLabel>) -> Result<Self> {
        if labels.len() != width * height || width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "ground truth {width}x{height} with {} labels",
                labels.len()
            )));
        }
        Ok(GroundTruth {
            width,
            height,
            labels,
        })
    }

    pub fn from_raster(r: &Raster) -> Result<Self> {
        if r.space() != ColorSpace::Gray8 {
            return Err(Error::Format("ground truth must be a PGM".into()));
        }
        let labels = r
            .data()
            .iter()
            .map(|&v| {
                GtLabel::from_sample(v)
                    .ok_or_else(|| Error::Format(format!("ground-truth sample {v} is not 0/128/255")))
            })
            .collect::<Result<Vec<_>>>()?;
        GroundTruth::new(r.width(), r.height(), labels)
    }

    pub fn to_raster(&self) -> Raster {
        Raster::new(
            self.width,
            self.height,
            ColorSpace::Gray8,
            self.labels.iter().map(|l| l.sample()).collect(),
        )
        .expect("valid dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[GtLabel] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> GtLabel {
        self.labels[y * self.width + x]
    }
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    pub image: PathBuf,
    pub gt: PathBuf,
}

/// Lists `name.ppm` files in `dir` that have a matching `name.gt.pgm`,
/// sorted by name.
pub fn list_corpus(dir: impl AsRef<Path>) -> Result<Vec<CorpusEntry>> {
    let dir = dir.as_ref();
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
            continue;
        };
        let Some(name) = file.strip_suffix(".ppm") else {
            continue;
        };
        let gt = dir.join(format!("{name}{GT_SUFFIX}"));
        if gt.is_file() {
            out.push(CorpusEntry {
                name: name.to_string(),
                image: path.clone(),
                gt,
            });
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

impl CorpusEntry {
    pub fn load(&self) -> Result<(Raster, GroundTruth)> {
        let img = load_pnm(&self.image)?;
        let gt = GroundTruth::from_raster(&load_pnm(&self.gt)?)?;
        if img.width() != gt.width() || img.height() != gt.height() {
            return Err(Error::Dimension(format!(
                "{}: image {}x{} vs ground truth {}x{}",
                self.name,
                img.width(),
                img.height(),
                gt.width(),
                gt.height()
            )));
        }
        if img.space() != ColorSpace::Rgb8 {
            return Err(Error::Format(format!("{}: image must be a PPM", self.name)));
        }
        Ok((img, gt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gt_rejects_unknown_samples() {
        let r = Raster::new(2, 1, ColorSpace::Gray8, vec![0, 77]).unwrap();
        assert!(GroundTruth::from_raster(&r).is_err());
        let r = Raster::new(3, 1, ColorSpace::Gray8, vec![0, 128, 255]).unwrap();
        let gt = GroundTruth::from_raster(&r).unwrap();
        assert_eq!(gt.labels(), &[GtLabel::NonSkin, GtLabel::Undecided, GtLabel::Skin]);
        assert_eq!(gt.to_raster(), r);
    }
}
