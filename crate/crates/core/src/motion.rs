//! Frame differencing and fusion with the ternary image.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgio::{ColorSpace, Mask, Raster};
use crate::prefilter::{TernaryClass, TernaryImage};

pub type MotionMask = Mask;

/// Marks pixels whose largest per-channel absolute difference reaches `tau`.
pub fn frame_diff(prev: &Raster, cur: &Raster, tau: u8) -> Result<MotionMask> {
    if !prev.same_shape(cur) || prev.space() != cur.space() {
        return Err(Error::Dimension(format!(
            "frames differ: {}x{} {:?} vs {}x{} {:?}",
            prev.width(),
            prev.height(),
            prev.space(),
            cur.width(),
            cur.height(),
            cur.space()
        )));
    }
    if cur.space() != ColorSpace::YCbCr8 {
        return Err(Error::Format("frame differencing expects YCbCr frames".into()));
    }
    if tau == 0 {
        return Err(Error::Param("motion threshold must be at least 1".into()));
    }
    let bits = prev
        .data()
        .par_chunks(3)
        .zip(cur.data().par_chunks(3))
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&p, &c)| p.abs_diff(c))
                .max()
                .unwrap_or(0)
                >= tau
        })
        .collect();
    Mask::from_bits(cur.width(), cur.height(), bits)
}

/// Keeps moving pixels that are not labeled Black.
pub fn ambulant_fuse(raw: &MotionMask, t: &TernaryImage) -> Result<MotionMask> {
    if raw.width() != t.width() || raw.height() != t.height() {
        return Err(Error::Dimension(format!(
            "motion mask {}x{} vs ternary {}x{}",
            raw.width(),
            raw.height(),
            t.width(),
            t.height()
        )));
    }
    let bits = raw
        .bits()
        .iter()
        .zip(t.labels())
        .map(|(&m, &l)| m && l != TernaryClass::Black)
        .collect();
    Mask::from_bits(raw.width(), raw.height(), bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::ColorTriple;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ycc(w: usize, h: usize, v: u8) -> Raster {
        Raster::filled(w, h, ColorSpace::YCbCr8, v).unwrap()
    }

    #[test]
    fn identical_frames_do_not_move() {
        let a = ycc(4, 3, 90);
        assert_eq!(frame_diff(&a, &a, 18).unwrap().count(), 0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let a = ycc(4, 3, 90);
        let mut b = a.clone();
        b.set_triple(2, 1, ColorTriple::new(90, 108, 90));
        let m = frame_diff(&a, &b, 18).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(2, 1));
        assert_eq!(frame_diff(&a, &b, 19).unwrap().count(), 0);
    }

    #[test]
    fn mismatched_frames_error() {
        assert!(frame_diff(&ycc(4, 3, 0), &ycc(3, 4, 0), 18).is_err());
        let rgb = Raster::filled(4, 3, ColorSpace::Rgb8, 0).unwrap();
        assert!(frame_diff(&rgb, &ycc(4, 3, 0), 18).is_err());
        assert!(ambulant_fuse(&Mask::new(2, 2), &TernaryImage::filled(3, 2, TernaryClass::Gray)).is_err());
    }

    #[test]
    fn matches_per_pixel_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (w, h) = (rng.gen_range(1..20), rng.gen_range(1..20));
            let a: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
            let b: Vec<u8> = a.iter().map(|&v| v.wrapping_add(rng.gen_range(0..40))).collect();
            let pa = Raster::new(w, h, ColorSpace::YCbCr8, a).unwrap();
            let pb = Raster::new(w, h, ColorSpace::YCbCr8, b).unwrap();
            let tau = rng.gen_range(1..60);
            let m = frame_diff(&pa, &pb, tau).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let (p, c) = (pa.triple(x, y).0, pb.triple(x, y).0);
                    let moved = (0..3).any(|i| (i32::from(p[i]) - i32::from(c[i])).abs() >= i32::from(tau));
                    assert_eq!(m.get(x, y), moved);
                }
            }
        }
    }

    #[test]
    fn fusion_rules() {
        let mut raw = Mask::new(3, 1);
        raw.set(0, 0, true);
        raw.set(1, 0, true);
        let t = TernaryImage::new(
            3,
            1,
            vec![TernaryClass::Black, TernaryClass::White, TernaryClass::White],
        )
        .unwrap();
        let a = ambulant_fuse(&raw, &t).unwrap();
        assert!(!a.get(0, 0), "moving Black pixel");
        assert!(a.get(1, 0), "moving White pixel");
        assert!(!a.get(2, 0), "static White pixel");
    }
}
