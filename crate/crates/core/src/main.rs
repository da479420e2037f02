use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skinseg::eval::{evaluate_dirs, MASK_SUFFIX, WINDOWS_SUFFIX};
use skinseg::imgio::{load_pnm, save_pnm, Mask};
use skinseg::model::{load_model, save_model, train_corpus, TrainOptions};
use skinseg::pipeline::{bench, list_frames, parse_order, run_stream, Detector, FrameOutput, PipelineConfig, StreamState};
use skinseg::synth::{write_corpus, write_sequence, Palette, SynthConfig};
use skinseg::{Error, Result};

#[derive(Parser)]
#[command(name = "skinseg", version, about = "Skin segmentation with a ternary pre-filter and seeded diffusion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct RunOpts {
    /// TOML config file (worker count, window order, [params] overrides).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; overrides the config file.
    #[arg(long)]
    workers: Option<usize>,
    /// row-major, reversed or shuffled:<seed>.
    #[arg(long)]
    order: Option<String>,
    /// Parameter override `name=value`; repeatable, wins over the config file.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a skin color model to a labeled corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[arg(long, default_value_t = 0.10)]
        q_inner: f64,
        #[arg(long, default_value_t = 0.001)]
        q_outer: f64,
        /// Default parameter stored in the model, `name=value`; repeatable.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        set: Vec<String>,
    },
    /// Segment an image or a directory of frames.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// `none` treats every image as a still; `chain` carries motion and
        /// feedback across a directory in name order.
        #[arg(long, default_value = "chain")]
        prev: String,
        #[arg(long)]
        dump_stages: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Segment a frame sequence and report throughput.
    Stream {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Skip unreadable frames instead of aborting.
        #[arg(long)]
        skip_bad: bool,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Score predicted masks against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Delimited output; defaults to the report path with a .csv extension.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time the pipeline on synthetic frames.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "640x480")]
        size: String,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Generate a synthetic labeled corpus or frame sequence.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw colors relative to a trained model's polygons.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "320x240")]
        size: String,
        /// Write one drifting sequence with this per-frame `dx,dy` instead
        /// of independent scenes.
        #[arg(long)]
        motion: Option<String>,
    },
}

fn parse_pair<T: std::str::FromStr>(s: &str, sep: char, what: &str) -> Result<(T, T)> {
    let bad = || Error::Param(format!("{what} '{s}'"));
    let (a, b) = s.split_once(sep).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Param(format!("expected NAME=VALUE, got '{s}'")))
        })
        .collect()
}

fn pipeline_config(run: &RunOpts) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &run.config {
        cfg.load_toml(path)?;
    }
    if let Some(w) = run.workers {
        cfg.workers = w;
    }
    if let Some(o) = &run.order {
        cfg.order = parse_order(o)?;
    }
    cfg.cli_overrides = overrides(&run.set)?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_frame(out: &Path, dump: Option<&Path>, name: &str, f: &FrameOutput) -> Result<()> {
    save_pnm(&f.mask.to_raster(), out.join(format!("{name}{MASK_SUFFIX}")))?;
    write_text(&out.join(format!("{name}{WINDOWS_SUFFIX}")), &f.grid.to_table())?;
    if let (Some(dir), Some(l)) = (dump, &f.layers) {
        save_pnm(&l.ternary.to_raster(), dir.join(format!("{name}.ternary.pgm")))?;
        let masks: [(&str, &Mask); 5] = [
            ("ambulant", &l.ambulant),
            ("seed", &l.seed),
            ("diff1", &l.diff1),
            ("diff2", &l.diff2),
            ("final", &l.final_mask),
        ];
        for (tag, m) in masks {
            save_pnm(&m.to_raster(), dir.join(format!("{name}.{tag}.pgm")))?;
        }
    }
    Ok(())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train { corpus, out, bins, q_inner, q_outer, set } => {
            let mut opts = TrainOptions {
                bins,
                q_inner,
                q_outer,
                ..TrainOptions::default()
            };
            for (k, v) in overrides(&set)? {
                opts.params.set(&k, &v)?;
            }
            let m = train_corpus(&corpus, &opts)?;
            save_model(&m, &out)?;
            println!(
                "trained on {} skin / {} non-skin pixels -> {}",
                m.bayes.total_skin(),
                m.bayes.total_nonskin(),
                out.display()
            );
        }
        Cmd::Detect { model, input, prev, dump_stages, out, run } => {
            let chain = match prev.as_str() {
                "none" => false,
                "chain" => true,
                _ => return Err(Error::Param(format!("--prev must be none or chain, got '{prev}'"))),
            };
            let m = load_model(&model)?;
            let mut cfg = pipeline_config(&run)?;
            cfg.dump_stages |= dump_stages.is_some();
            let det = Detector::new(&m, cfg)?;
            create_dir(&out)?;
            if let Some(d) = &dump_stages {
                create_dir(d)?;
            }
            let inputs = if input.is_dir() {
                list_frames(&input)?
            } else {
                let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
                vec![(stem, input.clone())]
            };
            let mut state = StreamState::new();
            for (name, path) in inputs {
                let img = load_pnm(&path)?;
                if !chain {
                    state = StreamState::new();
                }
                let f = det.process_frame(&img, &mut state)?;
                write_frame(&out, dump_stages.as_deref(), &name, &f)?;
                println!("{name}: {} skin pixels, {} candidate windows", f.mask.count(), f.grid.candidate_count());
            }
        }
        Cmd::Stream { model, frames, out, report, skip_bad, run } => {
            let m = load_model(&model)?;
            let mut cfg = pipeline_config(&run)?;
            cfg.skip_bad_frames |= skip_bad;
            let det = Detector::new(&m, cfg)?;
            create_dir(&out)?;
            let items = list_frames(&frames)?.into_iter().map(|(n, p)| (n, load_pnm(p)));
            let r = run_stream(&det, items, |name, f| write_frame(&out, None, name, f))?;
            let text = r.to_text();
            match report {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
            println!("{} frames at {:.2} fps", r.processed(), r.fps());
        }
        Cmd::Eval { pred, gt, report, csv } => {
            let r = evaluate_dirs(&pred, &gt)?;
            let table = r.to_table();
            write_text(&report, &table)?;
            write_text(&csv.unwrap_or_else(|| report.with_extension("csv")), &r.to_csv())?;
            print!("{table}");
        }
        Cmd::Bench { model, size, frames, seed, run } => {
            let (w, h) = parse_pair::<usize>(&size, 'x', "size")?;
            let m = load_model(&model)?;
            let det = Detector::new(&m, pipeline_config(&run)?)?;
            let r = bench(&det, &m, w, h, frames, seed)?;
            print!("{}", r.to_text().lines().take(14).collect::<Vec<_>>().join("\n"));
            println!("\n{w}x{h}, {} workers: {:.2} fps", det.config().workers, r.fps());
        }
        Cmd::Synth { out, count, seed, model, size, motion } => {
            let (width, height) = parse_pair::<usize>(&size, 'x', "size")?;
            let m = model.as_ref().map(load_model).transpose()?;
            let palette = m.as_ref().map_or(Palette::Builtin, Palette::Model);
            let cfg = SynthConfig {
                width,
                height,
                ..SynthConfig::default()
            };
            match motion {
                Some(step) => write_sequence(&out, &cfg, palette, count, parse_pair::<f64>(&step, ',', "motion")?, seed)?,
                None => write_corpus(&out, &cfg, palette, count, seed)?,
            }
            println!("wrote {count} images to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_model_error() {
                3
            } else if matches!(e, Error::Param(_)) {
                1
            } else {
                2
            };
            ExitCode::from(code)
        }
    }
}
