//! Tunable parameters stored alongside a trained model.
//!
//! Every parameter has a flat name used by the model file (`PARAM name
//! value`), config files and CLI overrides.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Y,
    Cb,
    Cr,
    I,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Y => "Y",
            Channel::Cb => "Cb",
            Channel::Cr => "Cr",
            Channel::I => "I",
        })
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Y" => Ok(Channel::Y),
            "Cb" => Ok(Channel::Cb),
            "Cr" => Ok(Channel::Cr),
            "I" => Ok(Channel::I),
            _ => Err(Error::Param(format!("unknown channel '{s}'"))),
        }
    }
}

/// Which previous-frame set a feedback consumer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackSource {
    PrevDiff1,
    PrevFinal,
}

impl fmt::Display for FeedbackSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackSource::PrevDiff1 => "prev_diff1",
            FeedbackSource::PrevFinal => "prev_final",
        })
    }
}

impl FromStr for FeedbackSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prev_diff1" => Ok(FeedbackSource::PrevDiff1),
            "prev_final" => Ok(FeedbackSource::PrevFinal),
            _ => Err(Error::Param(format!("unknown feedback source '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefilterParams {
    /// Weight of the 3x3 ring score against the 5x5 ring score.
    pub k: f64,
    pub th1: f64,
    pub th2: f64,
    pub w_min: u32,
    pub g_min: u32,
    /// Candidate neighbors (of 8) needed to annex a tile.
    pub annex_min: u32,
    pub window_w: usize,
    pub window_h: usize,
    pub stride: usize,
}

impl Default for PrefilterParams {
    fn default() -> Self {
        PrefilterParams {
            k: 2.0,
            th1: 10.0,
            th2: 40.0,
            w_min: 6,
            g_min: 48,
            annex_min: 6,
            window_w: 16,
            window_h: 16,
            stride: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityParams {
    pub channels: Vec<Channel>,
    pub classes: usize,
    pub edge_strong: u32,
    pub edge_weak: u32,
}

impl Default for HomogeneityParams {
    fn default() -> Self {
        HomogeneityParams {
            channels: vec![Channel::Cb, Channel::Cr, Channel::I, Channel::Y],
            classes: 4,
            edge_strong: 320,
            edge_weak: 120,
        }
    }
}

/// Likelihood-ratio gates for seed generation.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedParams {
    pub theta_high: f64,
    pub theta_low: f64,
    pub theta_fb: f64,
    pub p_min: f64,
    pub source: FeedbackSource,
}

impl Default for SeedParams {
    fn default() -> Self {
        SeedParams {
            theta_high: 4.0,
            theta_low: 1.5,
            theta_fb: 1.0,
            p_min: 0.4,
            source: FeedbackSource::PrevDiff1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    /// Weights of homogeneity, distance, probability, motion and feedback.
    pub weights: [f64; 5],
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta_f: f64,
    pub theta_filter: f64,
    /// Chebyshev reach of a second-diffusion master.
    pub r2: usize,
    pub c_strong: usize,
    pub c_weak: usize,
    pub apron: usize,
    pub feedback: FeedbackSource,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            weights: [2.0, 1.0, 1.0, 0.5, 0.5],
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.3,
            theta_f: 2.2,
            theta_filter: 0.8,
            r2: 5,
            c_strong: 4,
            c_weak: 3,
            apron: 16,
            feedback: FeedbackSource::PrevFinal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub prefilter: PrefilterParams,
    /// Frame-difference threshold (max-abs over YCbCr channels).
    pub motion_tau: u8,
    pub homogeneity: HomogeneityParams,
    pub seed: SeedParams,
    pub diffusion: DiffusionParams,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            prefilter: PrefilterParams::default(),
            motion_tau: 18,
            homogeneity: HomogeneityParams::default(),
            seed: SeedParams::default(),
            diffusion: DiffusionParams::default(),
        }
    }
}

fn parse<T: FromStr>(name: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Param(format!("cannot parse '{value}' for {name}")))
}

pub const PARAM_NAMES: &[&str] = &[
    "k",
    "th1",
    "th2",
    "w_min",
    "g_min",
    "annex_min",
    "window_w",
    "window_h",
    "stride",
    "motion_tau",
    "channels",
    "otsu_classes",
    "edge_strong",
    "edge_weak",
    "theta_high",
    "theta_low",
    "theta_fb",
    "p_min",
    "seed_source",
    "w1",
    "w2",
    "w3",
    "w4",
    "w5",
    "alpha",
    "beta",
    "gamma",
    "theta_f",
    "theta_filter",
    "r2",
    "c_strong",
    "c_weak",
    "apron",
    "f5_source",
];

impl Params {
    /// Sets one parameter by name. Does not validate cross-field invariants.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let p = &mut self.prefilter;
        let h = &mut self.homogeneity;
        let s = &mut self.seed;
        let d = &mut self.diffusion;
        match name {
            "k" => p.k = parse(name, value)?,
            "th1" => p.th1 = parse(name, value)?,
            "th2" => p.th2 = parse(name, value)?,
            "w_min" => p.w_min = parse(name, value)?,
            "g_min" => p.g_min = parse(name, value)?,
            "annex_min" => p.annex_min = parse(name, value)?,
            "window_w" => p.window_w = parse(name, value)?,
            "window_h" => p.window_h = parse(name, value)?,
            "stride" => p.stride = parse(name, value)?,
            "motion_tau" => self.motion_tau = parse(name, value)?,
            "channels" => {
                h.channels = value
                    .split(',')
                    .map(|c| c.trim().parse())
                    .collect::<Result<Vec<_>>>()?
            }
            "otsu_classes" => h.classes = parse(name, value)?,
            "edge_strong" => h.edge_strong = parse(name, value)?,
            "edge_weak" => h.edge_weak = parse(name, value)?,
            "theta_high" => s.theta_high = parse(name, value)?,
            "theta_low" => s.theta_low = parse(name, value)?,
            "theta_fb" => s.theta_fb = parse(name, value)?,
            "p_min" => s.p_min = parse(name, value)?,
            "seed_source" => s.source = value.trim().parse()?,
            "w1" => d.weights[0] = parse(name, value)?,
            "w2" => d.weights[1] = parse(name, value)?,
            "w3" => d.weights[2] = parse(name, value)?,
            "w4" => d.weights[3] = parse(name, value)?,
            "w5" => d.weights[4] = parse(name, value)?,
            "alpha" => d.alpha = parse(name, value)?,
            "beta" => d.beta = parse(name, value)?,
            "gamma" => d.gamma = parse(name, value)?,
            "theta_f" => d.theta_f = parse(name, value)?,
            "theta_filter" => d.theta_filter = parse(name, value)?,
            "r2" => d.r2 = parse(name, value)?,
            "c_strong" => d.c_strong = parse(name, value)?,
            "c_weak" => d.c_weak = parse(name, value)?,
            "apron" => d.apron = parse(name, value)?,
            "f5_source" => d.feedback = value.trim().parse()?,
            _ => return Err(Error::Param(format!("unknown parameter '{name}'"))),
        }
        Ok(())
    }

    /// All parameters as `(name, value)` in a fixed order. Float values use
    /// the shortest round-trip representation.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.prefilter;
        let h = &self.homogeneity;
        let s = &self.seed;
        let d = &self.diffusion;
        let channels = h
            .channels
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let values = vec![
            p.k.to_string(),
            p.th1.to_string(),
            p.th2.to_string(),
            p.w_min.to_string(),
            p.g_min.to_string(),
            p.annex_min.to_string(),
            p.window_w.to_string(),
            p.window_h.to_string(),
            p.stride.to_string(),
            self.motion_tau.to_string(),
            channels,
            h.classes.to_string(),
            h.edge_strong.to_string(),
            h.edge_weak.to_string(),
            s.theta_high.to_string(),
            s.theta_low.to_string(),
            s.theta_fb.to_string(),
            s.p_min.to_string(),
            s.source.to_string(),
            d.weights[0].to_string(),
            d.weights[1].to_string(),
            d.weights[2].to_string(),
            d.weights[3].to_string(),
            d.weights[4].to_string(),
            d.alpha.to_string(),
            d.beta.to_string(),
            d.gamma.to_string(),
            d.theta_f.to_string(),
            d.theta_filter.to_string(),
            d.r2.to_string(),
            d.c_strong.to_string(),
            d.c_weak.to_string(),
            d.apron.to_string(),
            d.feedback.to_string(),
        ];
        PARAM_NAMES.iter().copied().zip(values).collect()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let p = &self.prefilter;
        let h = &self.homogeneity;
        let s = &self.seed;
        let d = &self.diffusion;
        let reals = [
            ("k", p.k),
            ("th1", p.th1),
            ("th2", p.th2),
            ("theta_high", s.theta_high),
            ("theta_low", s.theta_low),
            ("theta_fb", s.theta_fb),
            ("p_min", s.p_min),
            ("alpha", d.alpha),
            ("beta", d.beta),
            ("gamma", d.gamma),
            ("theta_f", d.theta_f),
            ("theta_filter", d.theta_filter),
        ];
        if let Some((n, _)) = reals.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{n} is not finite"));
        }
        if p.th1 >= p.th2 {
            return Err(format!("th1 ({}) must be below th2 ({})", p.th1, p.th2));
        }
        if p.window_w == 0 || p.window_h == 0 || p.stride == 0 {
            return Err("window size and stride must be positive".into());
        }
        if p.annex_min > 8 {
            return Err("annex_min must be at most 8".into());
        }
        if self.motion_tau == 0 {
            return Err("motion_tau must be at least 1".into());
        }
        if h.channels.is_empty() {
            return Err("at least one homogeneity channel is required".into());
        }
        if !(2..=5).contains(&h.classes) {
            return Err(format!("otsu_classes must be in 2..=5, got {}", h.classes));
        }
        if h.edge_weak > h.edge_strong {
            return Err("edge_weak must not exceed edge_strong".into());
        }
        if !(s.theta_fb <= s.theta_low && s.theta_low <= s.theta_high) {
            return Err("seed thresholds must satisfy theta_fb <= theta_low <= theta_high".into());
        }
        if s.theta_fb <= 0.0 || s.p_min <= 0.0 {
            return Err("seed thresholds must be positive".into());
        }
        if d.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("diffusion weights must be finite and non-negative".into());
        }
        if d.weights.iter().sum::<f64>() <= 0.0 {
            return Err("diffusion weights must not all be zero".into());
        }
        if d.theta_filter <= 0.0 {
            return Err("theta_filter must be positive".into());
        }
        if !(1 <= d.c_weak && d.c_weak <= d.c_strong && d.c_strong <= h.channels.len()) {
            return Err("channel agreement counts must satisfy 1 <= c_weak <= c_strong <= channels".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Params::default().validate().unwrap();
    }

    #[test]
    fn entries_round_trip_through_set() {
        let mut p = Params::default();
        p.diffusion.gamma = 0.1 + 0.2;
        p.homogeneity.channels = vec![Channel::I, Channel::Y];
        p.diffusion.c_strong = 2;
        p.diffusion.c_weak = 1;
        p.seed.source = FeedbackSource::PrevFinal;
        let mut q = Params::default();
        for (n, v) in p.entries() {
            q.set(n, &v).unwrap();
        }
        assert_eq!(p, q);
    }

    #[test]
    fn invariants_are_enforced() {
        let mut p = Params::default();
        p.prefilter.th1 = 40.0;
        assert!(p.validate().is_err());
        let mut p = Params::default();
        p.diffusion.weights[2] = -1.0;
        assert!(p.validate().is_err());
        let mut p = Params::default();
        p.seed.theta_low = 5.0;
        assert!(p.validate().is_err());
        assert!(Params::default().set("nope", "1").is_err());
        assert!(Params::default().set("k", "abc").is_err());
    }
}
