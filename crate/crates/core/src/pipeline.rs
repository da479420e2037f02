//! Per-frame orchestration, window scheduling and stream processing.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diffusion::{segment_window, BayesTable, DiffusionState, FrameLayers};
use crate::error::{Error, Result, Stage};
use crate::homogeneity::{edge_maps, label_homogeneous, EdgeMaps, HomogeneityLabels};
use crate::imgio::{load_pnm, ColorSpace, Mask, Raster};
use crate::model::SkinColorModel;
use crate::motion::{ambulant_fuse, frame_diff};
use crate::params::Params;
use crate::prefilter::{annex_surrounded, neighbor_refine, window_scan, TernaryImage, TernaryLut, WindowGrid, WindowLayout};

/// Order in which candidate windows are handed to workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowOrder {
    #[default]
    RowMajor,
    Reversed,
    Shuffled(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub workers: usize,
    pub order: WindowOrder,
    /// Parameter overrides from a config file, applied over the model's.
    pub file_overrides: Vec<(String, String)>,
    /// Parameter overrides from the command line, applied last.
    pub cli_overrides: Vec<(String, String)>,
    /// Keep the intermediate layers of every frame.
    pub dump_stages: bool,
    /// Skip unreadable frames in a stream instead of aborting.
    pub skip_bad_frames: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workers: 8,
            order: WindowOrder::RowMajor,
            file_overrides: Vec::new(),
            cli_overrides: Vec::new(),
            dump_stages: false,
            skip_bad_frames: false,
        }
    }
}

fn toml_scalar(key: &str, v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Array(items) => items
            .iter()
            .map(|i| toml_scalar(key, i))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.join(",")),
        _ => Err(Error::Param(format!("unsupported value for '{key}'"))),
    }
}

impl PipelineConfig {
    /// Reads `workers`, `window_order`, `skip_bad_frames` and a `[params]`
    /// table from TOML text.
    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text.parse().map_err(|e| Error::Param(format!("config file: {e}")))?;
        for (key, value) in &table {
            match (key.as_str(), value) {
                ("workers", toml::Value::Integer(n)) if *n >= 1 => self.workers = *n as usize,
                ("window_order", toml::Value::String(s)) => self.order = parse_order(s)?,
                ("skip_bad_frames", toml::Value::Boolean(b)) => self.skip_bad_frames = *b,
                ("dump_stages", toml::Value::Boolean(b)) => self.dump_stages = *b,
                ("params", toml::Value::Table(t)) => {
                    for (k, v) in t {
                        self.file_overrides.push((k.clone(), toml_scalar(k, v)?));
                    }
                }
                _ => return Err(Error::Param(format!("config file: bad entry '{key}'"))),
            }
        }
        Ok(())
    }

    pub fn load_toml(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_toml(&text)
    }

    /// Model parameters, then file overrides, then command-line overrides.
    pub fn resolve(&self, model: &Params) -> Result<Params> {
        let mut p = model.clone();
        for (k, v) in self.file_overrides.iter().chain(&self.cli_overrides) {
            p.set(k, v)?;
        }
        p.validate().map_err(Error::Param)?;
        Ok(p)
    }
}

pub fn parse_order(s: &str) -> Result<WindowOrder> {
    match s {
        "row-major" => Ok(WindowOrder::RowMajor),
        "reversed" => Ok(WindowOrder::Reversed),
        _ => s
            .strip_prefix("shuffled:")
            .and_then(|v| v.parse().ok())
            .map(WindowOrder::Shuffled)
            .ok_or_else(|| Error::Param(format!("window order '{s}' (row-major, reversed, shuffled:<seed>)"))),
    }
}

/// Wall time per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings(pub [Duration; 9]);

impl StageTimings {
    pub fn get(&self, s: Stage) -> Duration {
        self.0[s as usize]
    }

    pub fn total(&self) -> Duration {
        self.0.iter().sum()
    }

    fn record<T>(&mut self, s: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| e.at(s));
        self.0[s as usize] += t.elapsed();
        out
    }
}

/// Carry-over between consecutive frames of one stream.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    pub frame_index: u64,
    pub prev_ycc: Option<Raster>,
    pub prev_diff1: Option<Mask>,
    pub prev_final: Option<Mask>,
}

impl StreamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Every layer of one frame, frozen before diffusion starts.
#[derive(Debug, Clone)]
pub struct FrameContext {
    pub frame_index: u64,
    pub rgb: Raster,
    pub ycc: Raster,
    pub ternary: TernaryImage,
    pub ambulant: Mask,
    pub grid: WindowGrid,
    pub homog: Option<HomogeneityLabels>,
    pub edges: Option<EdgeMaps>,
    pub prev_diff1: Mask,
    pub prev_final: Mask,
}

/// Frame-level unions of the per-window sets.
#[derive(Debug, Clone)]
pub struct StageLayers {
    pub ternary: TernaryImage,
    pub ambulant: Mask,
    pub seed: Mask,
    pub diff1: Mask,
    pub diff2: Mask,
    pub final_mask: Mask,
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub mask: Mask,
    pub grid: WindowGrid,
    pub timings: StageTimings,
    /// Present when stage dumps are enabled.
    pub layers: Option<StageLayers>,
    /// Whether any window ran diffusion.
    pub diffused: bool,
}

/// A loaded model ready to process frames.
pub struct Detector {
    params: Params,
    lut: TernaryLut,
    bayes: BayesTable,
    pool: rayon::ThreadPool,
    cfg: PipelineConfig,
}

impl Detector {
    pub fn new(model: &SkinColorModel, cfg: PipelineConfig) -> Result<Self> {
        if cfg.workers == 0 {
            return Err(Error::Param("worker count must be at least 1".into()));
        }
        model.validate().map_err(Error::Param)?;
        let params = cfg.resolve(&model.params)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Param(format!("worker pool: {e}")))?;
        Ok(Detector {
            params,
            lut: TernaryLut::from_model(model),
            bayes: BayesTable::new(&model.bayes),
            pool,
            cfg,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn layout(&self) -> WindowLayout {
        let p = &self.params.prefilter;
        WindowLayout {
            tile_w: p.window_w,
            tile_h: p.window_h,
            stride: p.stride,
        }
    }

    /// Runs every stage up to window selection; homogeneity and edges are
    /// only computed when some window survives.
    pub fn prepare(&self, frame: &Raster, state: &StreamState, t: &mut StageTimings) -> Result<FrameContext> {
        self.pool.install(|| self.prepare_inner(frame, state, t))
    }

    fn prepare_inner(&self, frame: &Raster, state: &StreamState, t: &mut StageTimings) -> Result<FrameContext> {
        let p = &self.params;
        let ycc = t.record(Stage::Convert, || {
            if frame.space() != ColorSpace::Rgb8 {
                return Err(Error::Format("frames must be RGB".into()));
            }
            frame.to_ycbcr()
        })?;
        let raw = t.record(Stage::Ternary, || self.lut.classify_image(&ycc))?;
        let ternary = t.record(Stage::Neighbor, || {
            neighbor_refine(&raw, p.prefilter.k, p.prefilter.th1, p.prefilter.th2)
        })?;
        let ambulant = t.record(Stage::Motion, || match &state.prev_ycc {
            Some(prev) => ambulant_fuse(&frame_diff(prev, &ycc, p.motion_tau)?, &ternary),
            None => Ok(Mask::new(ycc.width(), ycc.height())),
        })?;
        let grid = t.record(Stage::Windows, || {
            let g = window_scan(&ternary, self.layout(), p.prefilter.w_min, p.prefilter.g_min)?;
            Ok(annex_surrounded(&g, p.prefilter.annex_min))
        })?;
        let any = grid.candidate_count() > 0;
        let homog = if any {
            Some(t.record(Stage::Homogeneity, || {
                label_homogeneous(frame, &ycc, &p.homogeneity.channels, p.homogeneity.classes)
            })?)
        } else {
            None
        };
        let edges = if any {
            Some(t.record(Stage::Edges, || {
                edge_maps(&ycc, p.homogeneity.edge_strong, p.homogeneity.edge_weak)
            })?)
        } else {
            None
        };
        let (w, h) = (ycc.width(), ycc.height());
        let carry = |m: &Option<Mask>| match m {
            Some(m) if m.width() == w && m.height() == h => m.clone(),
            _ => Mask::new(w, h),
        };
        Ok(FrameContext {
            frame_index: state.frame_index,
            rgb: frame.clone(),
            ycc,
            ternary,
            ambulant,
            grid,
            homog,
            edges,
            prev_diff1: carry(&state.prev_diff1),
            prev_final: carry(&state.prev_final),
        })
    }

    /// Candidate windows in scheduling order.
    pub fn schedule(&self, grid: &WindowGrid) -> Vec<(usize, usize)> {
        let mut c = grid.candidates();
        match self.cfg.order {
            WindowOrder::RowMajor => {}
            WindowOrder::Reversed => c.reverse(),
            WindowOrder::Shuffled(seed) => c.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        }
        c
    }

    /// Segments every candidate window of a prepared frame.
    pub fn diffuse(&self, ctx: &FrameContext) -> Result<Vec<DiffusionState>> {
        let (Some(homog), Some(edges)) = (&ctx.homog, &ctx.edges) else {
            return Ok(Vec::new());
        };
        let cover = ctx.grid.candidate_cover();
        let layers = FrameLayers {
            rgb: &ctx.rgb,
            ternary: &ctx.ternary,
            ambulant: &ctx.ambulant,
            homog,
            edges,
            bayes: &self.bayes,
            prev_diff1: &ctx.prev_diff1,
            prev_final: &ctx.prev_final,
            cover: &cover,
        };
        layers.check()?;
        let order = self.schedule(&ctx.grid);
        let (sp, dp) = (&self.params.seed, &self.params.diffusion);
        let states: Vec<DiffusionState> = self.pool.install(|| {
            order
                .par_iter()
                .map(|&(c, r)| segment_window(ctx.grid.rect(c, r), &layers, sp, dp))
                .collect()
        });
        if let Some(bad) = states.iter().find(|s| !s.chain_holds()) {
            return Err(Error::Invariant(format!("set chain broken in window {:?}", bad.region.window)));
        }
        Ok(states)
    }

    /// Runs one frame and advances the stream state.
    pub fn process_frame(&self, frame: &Raster, state: &mut StreamState) -> Result<FrameOutput> {
        if let Some(prev) = &state.prev_ycc {
            if !prev.same_shape(frame) {
                return Err(Error::Dimension(format!(
                    "frame is {}x{}, stream is {}x{}",
                    frame.width(),
                    frame.height(),
                    prev.width(),
                    prev.height()
                ))
                .at(Stage::Motion));
            }
        }
        let mut t = StageTimings::default();
        let ctx = self.prepare(frame, state, &mut t)?;
        let states = t.record(Stage::Diffusion, || self.diffuse(&ctx))?;
        let (w, h) = (ctx.ycc.width(), ctx.ycc.height());
        let dump = self.cfg.dump_stages;
        let (mask, diff1, layers) = t.record(Stage::Merge, || {
            let mut fin = Mask::new(w, h);
            let mut d1 = Mask::new(w, h);
            let (mut seed, mut d2) = (Mask::new(w, h), Mask::new(w, h));
            for s in &states {
                s.final_set.paint(&mut fin);
                s.diff1.paint(&mut d1);
                if dump {
                    s.seed.paint(&mut seed);
                    s.diff2.paint(&mut d2);
                }
            }
            let layers = dump.then(|| StageLayers {
                ternary: ctx.ternary.clone(),
                ambulant: ctx.ambulant.clone(),
                seed,
                diff1: d1.clone(),
                diff2: d2,
                final_mask: fin.clone(),
            });
            Ok((fin, d1, layers))
        })?;
        state.frame_index += 1;
        state.prev_diff1 = Some(diff1);
        state.prev_final = Some(mask.clone());
        state.prev_ycc = Some(ctx.ycc);
        Ok(FrameOutput {
            mask,
            grid: ctx.grid,
            timings: t,
            layers,
            diffused: !states.is_empty(),
        })
    }

    /// Processes a frame with no history.
    pub fn process_still(&self, frame: &Raster) -> Result<FrameOutput> {
        self.process_frame(frame, &mut StreamState::new())
    }
}

#[derive(Debug, Clone)]
pub struct FrameEntry {
    pub name: String,
    /// `None` when the frame was skipped.
    pub timings: Option<StageTimings>,
    pub elimination_rate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct StreamReport {
    pub frames: Vec<FrameEntry>,
    pub wall: Duration,
    pub workers: usize,
}

impl StreamReport {
    pub fn processed(&self) -> usize {
        self.frames.iter().filter(|f| f.timings.is_some()).count()
    }

    pub fn fps(&self) -> f64 {
        let s = self.wall.as_secs_f64();
        if s > 0.0 {
            self.processed() as f64 / s
        } else {
            0.0
        }
    }

    pub fn mean_stage(&self, s: Stage) -> Duration {
        let n = self.processed() as u32;
        if n == 0 {
            return Duration::ZERO;
        }
        self.frames.iter().filter_map(|f| f.timings).map(|t| t.get(s)).sum::<Duration>() / n
    }

    pub fn max_stage(&self, s: Stage) -> Duration {
        self.frames.iter().filter_map(|f| f.timings).map(|t| t.get(s)).max().unwrap_or_default()
    }

    pub fn mean_elimination_rate(&self) -> Option<f64> {
        let v: Vec<f64> = self.frames.iter().filter_map(|f| f.elimination_rate).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "frames: {} processed, {} skipped", self.processed(), self.frames.len() - self.processed());
        let _ = writeln!(out, "workers: {}", self.workers);
        let _ = writeln!(out, "fps: {:.2}", self.fps());
        match self.mean_elimination_rate() {
            Some(er) => {
                let _ = writeln!(out, "mean ER: {er:.4}");
            }
            None => out.push_str("mean ER: n/a\n"),
        }
        let _ = writeln!(out, "{:<12} {:>10} {:>10}", "stage", "mean ms", "max ms");
        for s in Stage::ALL {
            let _ = writeln!(
                out,
                "{:<12} {:>10.3} {:>10.3}",
                s.to_string(),
                self.mean_stage(s).as_secs_f64() * 1e3,
                self.max_stage(s).as_secs_f64() * 1e3
            );
        }
        for f in &self.frames {
            match (&f.error, f.elimination_rate) {
                (Some(e), _) => {
                    let _ = writeln!(out, "frame {}: skipped ({e})", f.name);
                }
                (None, er) => {
                    let total = f.timings.map_or(0.0, |t| t.total().as_secs_f64() * 1e3);
                    let er = er.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"));
                    let _ = writeln!(out, "frame {}: {total:.3} ms, ER {er}", f.name);
                }
            }
        }
        out
    }
}

/// Processes frames in order with one shared stream state. `sink` receives
/// each frame's output.
pub fn run_stream<I, F>(det: &Detector, frames: I, mut sink: F) -> Result<StreamReport>
where
    I: IntoIterator<Item = (String, Result<Raster>)>,
    F: FnMut(&str, &FrameOutput) -> Result<()>,
{
    let mut state = StreamState::new();
    let mut report = StreamReport {
        workers: det.cfg.workers,
        ..StreamReport::default()
    };
    let start = Instant::now();
    for (name, frame) in frames {
        let out = frame.and_then(|f| det.process_frame(&f, &mut state));
        match out {
            Ok(out) => {
                sink(&name, &out)?;
                report.frames.push(FrameEntry {
                    name,
                    timings: Some(out.timings),
                    elimination_rate: crate::eval::elimination_rate(&out.grid),
                    error: None,
                });
            }
            Err(e) if det.cfg.skip_bad_frames => report.frames.push(FrameEntry {
                name,
                timings: None,
                elimination_rate: None,
                error: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    report.wall = start.elapsed();
    if report.frames.is_empty() {
        return Err(Error::Format("stream has no frames".into()));
    }
    Ok(report)
}

/// Times `frames` synthetic frames of `width x height` with drifting skin
/// shapes. Frame generation is not timed.
pub fn bench(det: &Detector, model: &SkinColorModel, width: usize, height: usize, frames: usize, seed: u64) -> Result<StreamReport> {
    use crate::synth::{synth_sequence, Palette, SynthConfig};
    let scale = (width.min(height) as f64 / 240.0).max(0.1);
    let cfg = SynthConfig {
        width,
        height,
        radius: (18.0 * scale, 48.0 * scale),
        ..SynthConfig::default()
    };
    let seq = synth_sequence(&cfg, Palette::Model(model), frames.max(1), (2.0, 1.0), seed)?;
    let items: Vec<(String, Result<Raster>)> = seq
        .into_iter()
        .enumerate()
        .map(|(i, (f, _))| (format!("bench_{i:04}"), Ok(f)))
        .collect();
    run_stream(det, items, |_, _| Ok(()))
}

/// `.ppm` files of a directory in name order, as `(stem, path)`.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<(String, PathBuf)>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|x| x.to_str()) == Some("ppm") {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            out.push((stem, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Streams a directory of frames lazily.
pub fn frames_from_dir(dir: impl AsRef<Path>) -> Result<impl Iterator<Item = (String, Result<Raster>)>> {
    Ok(list_frames(dir)?.into_iter().map(|(n, p)| (n, load_pnm(p))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::ColorTriple;
    use crate::model::{train_labeled, TrainOptions};
    use crate::synth::{synth_corpus, synth_sequence, Palette, SynthConfig};

    fn model() -> SkinColorModel {
        let cfg = SynthConfig { width: 96, height: 72, radius: (8.0, 20.0), ..SynthConfig::default() };
        train_labeled(&synth_corpus(&cfg, Palette::Builtin, 12, 77).unwrap(), &TrainOptions::default()).unwrap()
    }

    fn det(m: &SkinColorModel, workers: usize, order: WindowOrder) -> Detector {
        Detector::new(m, PipelineConfig { workers, order, ..PipelineConfig::default() }).unwrap()
    }

    #[test]
    fn non_skin_frame_bypasses_diffusion() {
        let m = model();
        let d = det(&m, 1, WindowOrder::RowMajor);
        let mut frame = Raster::filled(64, 48, ColorSpace::Rgb8, 0).unwrap();
        for y in 0..48 {
            for x in 0..64 {
                frame.set_triple(x, y, ColorTriple::new(20, 90, 230));
            }
        }
        let out = d.process_still(&frame).unwrap();
        assert_eq!(out.grid.candidate_count(), 0);
        assert_eq!(out.mask.count(), 0);
        assert!(!out.diffused);
        assert_eq!(out.timings.get(Stage::Homogeneity), Duration::ZERO);
    }

    #[test]
    fn worker_count_and_order_do_not_matter() {
        let m = model();
        let cfg = SynthConfig { width: 96, height: 72, radius: (8.0, 20.0), ..SynthConfig::default() };
        let seq = synth_sequence(&cfg, Palette::Builtin, 3, (2.0, 1.0), 4).unwrap();
        let base = det(&m, 1, WindowOrder::RowMajor);
        let others = [det(&m, 4, WindowOrder::RowMajor), det(&m, 3, WindowOrder::Shuffled(9)), det(&m, 2, WindowOrder::Reversed)];
        let mut s0 = StreamState::new();
        let mut ss: Vec<StreamState> = others.iter().map(|_| StreamState::new()).collect();
        for (f, _) in &seq {
            let a = base.process_frame(f, &mut s0).unwrap().mask;
            for (d, s) in others.iter().zip(&mut ss) {
                assert_eq!(d.process_frame(f, s).unwrap().mask, a);
            }
        }
    }

    #[test]
    fn first_frame_equals_still_mode() {
        let m = model();
        let d = det(&m, 2, WindowOrder::RowMajor);
        let cfg = SynthConfig { width: 96, height: 72, radius: (8.0, 20.0), ..SynthConfig::default() };
        let (f, _) = &synth_sequence(&cfg, Palette::Builtin, 1, (0.0, 0.0), 8).unwrap()[0];
        let mut s = StreamState::new();
        assert_eq!(d.process_frame(f, &mut s).unwrap().mask, d.process_still(f).unwrap().mask);
        assert_eq!(s.frame_index, 1);
    }

    #[test]
    fn mask_stays_inside_candidate_windows() {
        let m = model();
        let d = det(&m, 2, WindowOrder::RowMajor);
        let cfg = SynthConfig { width: 96, height: 72, radius: (8.0, 20.0), ..SynthConfig::default() };
        for (f, _) in synth_corpus(&cfg, Palette::Builtin, 5, 123).unwrap() {
            let out = d.process_still(&f).unwrap();
            let cover = out.grid.candidate_cover();
            assert!(out.mask.bits().iter().zip(cover.bits()).all(|(&m, &c)| !m || c));
        }
    }

    #[test]
    fn duplicated_frames_have_no_motion() {
        let m = model();
        let d = det(&m, 1, WindowOrder::RowMajor);
        let cfg = SynthConfig { width: 64, height: 48, radius: (6.0, 14.0), ..SynthConfig::default() };
        let (f, _) = synth_corpus(&cfg, Palette::Builtin, 1, 3).unwrap().remove(0);
        let mut s = StreamState::new();
        d.process_frame(&f, &mut s).unwrap();
        let ctx = d.prepare(&f, &s, &mut StageTimings::default()).unwrap();
        assert_eq!(ctx.ambulant.count(), 0);
    }

    #[test]
    fn size_change_is_a_tagged_error() {
        let m = model();
        let d = det(&m, 1, WindowOrder::RowMajor);
        let mut s = StreamState::new();
        d.process_frame(&Raster::filled(32, 32, ColorSpace::Rgb8, 9).unwrap(), &mut s).unwrap();
        let e = d.process_frame(&Raster::filled(16, 32, ColorSpace::Rgb8, 9).unwrap(), &mut s).unwrap_err();
        assert!(matches!(e, Error::Stage { stage: Stage::Motion, .. }), "{e}");
        let e = d.process_still(&Raster::filled(8, 8, ColorSpace::Gray8, 0).unwrap()).unwrap_err();
        assert!(matches!(e, Error::Stage { stage: Stage::Convert, .. }), "{e}");
    }

    #[test]
    fn stream_report() {
        let m = model();
        let d = det(&m, 1, WindowOrder::RowMajor);
        let cfg = SynthConfig { width: 64, height: 48, radius: (6.0, 14.0), ..SynthConfig::default() };
        let (f, _) = synth_corpus(&cfg, Palette::Builtin, 1, 3).unwrap().remove(0);
        let r = run_stream(&d, [("only".to_string(), Ok(f))], |_, _| Ok(())).unwrap();
        assert_eq!(r.frames.len(), 1);
        assert!(r.fps() > 0.0);
        let er = r.mean_elimination_rate().unwrap();
        assert!((0.0..=1.0).contains(&er));
        assert!(r.to_text().contains("frame only"));
    }

    #[test]
    fn bad_frames_skip_or_abort() {
        let m = model();
        let good = Raster::filled(32, 32, ColorSpace::Rgb8, 50).unwrap();
        let frames = || vec![("a".to_string(), Ok(good.clone())), ("b".to_string(), Err(Error::Format("bad".into())))];
        let abort = det(&m, 1, WindowOrder::RowMajor);
        assert!(run_stream(&abort, frames(), |_, _| Ok(())).is_err());
        let skip = Detector::new(&m, PipelineConfig { skip_bad_frames: true, ..PipelineConfig::default() }).unwrap();
        let r = run_stream(&skip, frames(), |_, _| Ok(())).unwrap();
        assert_eq!(r.processed(), 1);
        assert!(r.frames[1].error.is_some());
    }

    #[test]
    fn config_precedence() {
        let mut model = Params::default();
        model.diffusion.theta_f = 1.0;
        model.motion_tau = 30;
        let mut cfg = PipelineConfig::default();
        cfg.apply_toml("workers = 3\nwindow_order = \"shuffled:5\"\n[params]\ntheta_f = 2.5\ngamma = 0.5\nchannels = [\"Cb\", \"Cr\"]\nc_strong = 2\nc_weak = 1\n").unwrap();
        cfg.cli_overrides.push(("gamma".into(), "0.7".into()));
        let p = cfg.resolve(&model).unwrap();
        assert_eq!(cfg.workers, 3);
        assert_eq!(cfg.order, WindowOrder::Shuffled(5));
        assert_eq!(p.motion_tau, 30);
        assert_eq!(p.diffusion.theta_f, 2.5);
        assert_eq!(p.diffusion.gamma, 0.7);
        assert_eq!(p.homogeneity.channels.len(), 2);
        assert!(PipelineConfig::default().apply_toml("bogus = 1").is_err());
        let mut bad = PipelineConfig::default();
        bad.cli_overrides.push(("th1".into(), "99".into()));
        assert!(bad.resolve(&Params::default()).is_err());
    }

    #[test]
    fn zero_workers_rejected() {
        let m = model();
        assert!(Detector::new(&m, PipelineConfig { workers: 0, ..PipelineConfig::default() }).is_err());
    }
}
