use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use iai_core::association::HabConfig;
use iai_core::losses::{FocalParams, IdLoss};
use iai_core::metrics::{id_switches, video_map, EvalReport};
use iai_core::synthworld::{gen_video, GroundTruth, OracleDetector, WorldConfig};
use iai_core::toyhead::{toy_sequences, train_toy_head, HeadDetector, ToyIdHead, TrainConfig};
use iai_core::tracker::{run_video, MaskTube, TrackerConfig, TrackerState, DEFAULT_MEMORY_STRIDE};

use crate::error::{CliError, CliResult};
use crate::iaitrack::{self, Kind, ParseError, TrackFile, VideoRecord};
use crate::weights::{self, HeadFile};
use crate::{ppm, world};

/// Environment variable that overrides every `--seed` flag.
pub const SEED_ENV: &str = "IAI_SEED";

#[derive(Debug, Parser)]
#[command(name = "iaitrack", version, about = "Online video instance tracking on synthetic worlds")]
pub struct Cli {
    /// Worker threads for per-video parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset file and its world manifest.
    Gen(GenArgs),
    /// Track every video of a dataset.
    Track(TrackArgs),
    /// Train the toy ID head on synthetic 5-frame sequences.
    Train(TrainArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Write one PPM image per frame.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub videos: usize,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    /// `<height>x<width>`.
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 3)]
    pub instances: usize,
    #[arg(long, default_value_t = 4)]
    pub categories: usize,
    #[arg(long, default_value_t = 0.3)]
    pub occlusion: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    #[arg(long, default_value_t = 20)]
    pub n_ids: usize,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `oracle` or `trained:<weights file>`.
    #[arg(long, default_value = "oracle", value_parser = parse_detector)]
    pub detector: DetectorChoice,
    #[arg(long)]
    pub no_global: bool,
    #[arg(long)]
    pub no_local: bool,
    #[arg(long)]
    pub no_cls: bool,
    #[arg(long, default_value_t = 0.5)]
    pub iou_thresh: f64,
    /// Ignored with a trained detector, which fixes N itself.
    #[arg(long, default_value_t = 20)]
    pub n_ids: usize,
    #[arg(long, default_value_t = DEFAULT_MEMORY_STRIDE)]
    pub memory_stride: usize,
    /// Seed of the ID bank and HAB projections. Ignored with a trained
    /// detector, which must use the seed it was trained with.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorChoice {
    Oracle,
    Trained(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossChoice {
    Focal,
    Ce,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Weights file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve file to write.
    #[arg(long)]
    pub curve: PathBuf,
    #[arg(long, value_enum, default_value_t = LossChoice::Focal)]
    pub loss: LossChoice,
    #[arg(long, default_value_t = 0.25)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub sequences: usize,
    #[arg(long, default_value_t = 20)]
    pub n_ids: usize,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Dataset or prediction file.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for `video<id>_frame<t>.ppm` images; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| format!("expected <height>x<width>, got `{s}`"))?;
    let h = h.parse().map_err(|_| format!("bad height `{h}`"))?;
    let w = w.parse().map_err(|_| format!("bad width `{w}`"))?;
    Ok((h, w))
}

fn parse_detector(s: &str) -> Result<DetectorChoice, String> {
    match s {
        "oracle" => Ok(DetectorChoice::Oracle),
        _ => match s.strip_prefix("trained:") {
            Some(p) if !p.is_empty() => Ok(DetectorChoice::Trained(PathBuf::from(p))),
            _ => Err(format!("expected `oracle` or `trained:<path>`, got `{s}`")),
        },
    }
}

/// Parsed value of [`SEED_ENV`], if set.
pub fn env_seed(raw: Option<String>) -> CliResult<Option<u64>> {
    raw.map(|v| {
        v.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))
    })
    .transpose()
}

/// Runs a parsed command and returns what it prints on stdout.
pub fn run(cli: Cli, seed_override: Option<u64>) -> CliResult<String> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be >= 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))?
    };
    pool.install(|| match cli.command {
        Command::Gen(mut a) => {
            a.seed = seed_override.unwrap_or(a.seed);
            cmd_gen(&a)
        }
        Command::Track(mut a) => {
            a.seed = seed_override.unwrap_or(a.seed);
            cmd_track(&a)
        }
        Command::Train(mut a) => {
            a.seed = seed_override.unwrap_or(a.seed);
            cmd_train(&a)
        }
        Command::Eval(a) => cmd_eval(&a),
        Command::Render(a) => cmd_render(&a),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn with_path(path: &Path, e: ParseError) -> CliError {
    match e {
        ParseError::Malformed { line, reason } => CliError::Malformed {
            path: path.to_path_buf(),
            line,
            reason,
        },
        ParseError::Collision { line, video, id } => CliError::IdCollision {
            path: path.to_path_buf(),
            line,
            video,
            id,
        },
    }
}

pub fn read_track_file(path: &Path) -> CliResult<TrackFile> {
    iaitrack::parse(&read_file(path)?).map_err(|e| with_path(path, e))
}

/// World seed of video `index` in a dataset generated with `seed`.
pub fn video_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn record(id: u64, frames: usize, height: usize, width: usize, categories: usize, tubes: Vec<MaskTube>) -> VideoRecord {
    VideoRecord {
        id,
        frames,
        height,
        width,
        categories,
        tubes,
    }
}

pub fn cmd_gen(a: &GenArgs) -> CliResult<String> {
    let (height, width) = a.size;
    let worlds: Vec<(u64, WorldConfig)> = (0..a.videos)
        .map(|i| {
            (
                i as u64,
                WorldConfig {
                    height,
                    width,
                    frames: a.frames,
                    max_instances: a.instances,
                    categories: a.categories,
                    occlusion_rate: a.occlusion,
                    noise_sigma: a.noise,
                    channels: a.channels,
                    n_ids: a.n_ids,
                    seed: video_seed(a.seed, i),
                },
            )
        })
        .collect();
    if let Some((_, w)) = worlds.first() {
        w.validate()?;
    }
    let videos = worlds
        .par_iter()
        .map(|(id, w)| {
            let gt = gen_video(w)?;
            Ok(record(*id, w.frames, height, width, w.categories, gt.tubes()))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let instances: usize = videos.iter().map(|v| v.tubes.len()).sum();
    let file = TrackFile {
        kind: Kind::Dataset,
        videos,
    };
    write_file(&a.out, iaitrack::write(&file).as_bytes())?;
    write_file(&world::manifest_path(&a.out), world::write(&worlds).as_bytes())?;
    Ok(format!(
        "wrote {} videos ({} instances) to {}\n",
        file.videos.len(),
        instances,
        a.out.display()
    ))
}

/// Regenerates the ground truth of every dataset video from the manifest
/// and checks it against the tubes stored in the dataset file.
pub fn load_dataset(path: &Path) -> CliResult<Vec<(VideoRecord, GroundTruth)>> {
    let file = read_track_file(path)?;
    if file.kind != Kind::Dataset {
        return Err(CliError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            reason: "expected a dataset file".into(),
        });
    }
    let mpath = world::manifest_path(path);
    let worlds = world::parse(&read_file(&mpath)?).map_err(|e| with_path(&mpath, e))?;
    if worlds.len() != file.videos.len() {
        return Err(CliError::Malformed {
            path: mpath,
            line: 1,
            reason: format!(
                "manifest lists {} videos, dataset has {}",
                worlds.len(),
                file.videos.len()
            ),
        });
    }
    file.videos
        .into_par_iter()
        .zip(worlds.into_par_iter().enumerate())
        .map(|(video, (i, (wid, w)))| {
            let gt = gen_video(&w)?;
            let consistent = wid == video.id
                && w.frames == video.frames
                && w.height == video.height
                && w.width == video.width
                && w.categories == video.categories
                && gt.tubes() == video.tubes;
            if !consistent {
                return Err(CliError::Malformed {
                    path: mpath.clone(),
                    line: i + 2,
                    reason: format!("world record does not reproduce dataset video {}", video.id),
                });
            }
            Ok((video, gt))
        })
        .collect()
}

pub fn cmd_track(a: &TrackArgs) -> CliResult<String> {
    let hab = HabConfig {
        enable_global: !a.no_global,
        enable_local: !a.no_local,
        enable_cls: !a.no_cls,
    };
    let head = match &a.detector {
        DetectorChoice::Oracle => None,
        DetectorChoice::Trained(p) => {
            Some(weights::parse(&read_file(p)?).map_err(|e| with_path(p, e))?)
        }
    };
    let data = load_dataset(&a.dataset)?;
    let videos = data
        .par_iter()
        .map(|(video, gt)| {
            let cfg = TrackerConfig {
                n_ids: head.as_ref().map_or(a.n_ids, |h| h.head.n_ids()),
                channels: gt.channels,
                hab,
                iou_thresh: a.iou_thresh,
                memory_stride: a.memory_stride,
                seed: head.as_ref().map_or(a.seed, |h| h.seed),
            };
            if let Some(h) = &head {
                if h.head.channels() != gt.channels {
                    return Err(CliError::Usage(format!(
                        "head expects {} channels, video {} has {}",
                        h.head.channels(),
                        video.id,
                        gt.channels
                    )));
                }
            }
            let mut state = TrackerState::new(cfg, gt.height, gt.width, gt.categories)?;
            let frames = gt.features();
            let tubes = match &head {
                None => run_video(&frames, &mut state, &mut OracleDetector::new(gt, cfg.n_ids))?,
                Some(h) => run_video(&frames, &mut state, &mut HeadDetector { gt, head: &h.head })?,
            };
            Ok(record(video.id, video.frames, video.height, video.width, video.categories, tubes))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut summary = String::new();
    for v in &videos {
        summary.push_str(&format!("video {}: {} instances\n", v.id, v.tubes.len()));
    }
    let file = TrackFile {
        kind: Kind::Pred,
        videos,
    };
    write_file(&a.out, iaitrack::write(&file).as_bytes())?;
    Ok(summary)
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<String> {
    let loss = match a.loss {
        LossChoice::Ce => IdLoss::CrossEntropy,
        LossChoice::Focal => IdLoss::Focal(FocalParams {
            alpha: a.alpha,
            lambda: a.lambda,
        }),
    };
    if a.sequences == 0 {
        return Err(CliError::Usage("--sequences must be >= 1".into()));
    }
    let tracker = TrackerConfig {
        n_ids: a.n_ids,
        channels: a.channels,
        seed: a.seed,
        ..TrackerConfig::default()
    };
    let seqs = toy_sequences(a.seed, a.sequences, a.channels, a.n_ids)?;
    let head = ToyIdHead::new(a.channels, a.n_ids, a.seed);
    let train = TrainConfig {
        loss,
        steps: a.steps,
        lr: a.lr,
        seed: a.seed,
    };
    let (head, curve) = train_toy_head(head, &seqs, &tracker, &train)?;
    let mut text = String::new();
    for (step, l) in curve.iter().enumerate() {
        text.push_str(&format!("{step} {l:.9}\n"));
    }
    write_file(&a.curve, text.as_bytes())?;
    write_file(
        &a.out,
        weights::write(&HeadFile { seed: a.seed, head }).as_bytes(),
    )?;
    Ok(match (curve.first(), curve.last()) {
        (Some(f), Some(l)) => format!("trained {} steps: loss {f:.6} -> {l:.6}\n", curve.len()),
        _ => "wrote initial weights (0 steps)\n".to_string(),
    })
}

pub fn format_report(r: &EvalReport) -> String {
    let mut s = format!(
        "mAP {:.4}\nAP50 {:.4}\nAP75 {:.4}\nAR1 {:.4}\nAR10 {:.4}\nid_switches {}\n",
        r.map, r.ap50, r.ap75, r.ar1, r.ar10, r.id_switches
    );
    for (t, ap) in &r.per_threshold {
        s.push_str(&format!("AP@{t:.2} {ap:.4}\n"));
    }
    s
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<String> {
    let gt = read_track_file(&a.gt)?;
    let pred = read_track_file(&a.pred)?;
    for p in &pred.videos {
        let g = gt.videos.iter().find(|g| g.id == p.id);
        let ok = g.is_some_and(|g| {
            (g.frames, g.height, g.width, g.categories) == (p.frames, p.height, p.width, p.categories)
        });
        if !ok {
            return Err(CliError::Malformed {
                path: a.pred.clone(),
                line: 1,
                reason: format!("video {} does not match any ground-truth video", p.id),
            });
        }
    }
    let gts: Vec<Vec<MaskTube>> = gt.videos.iter().map(|v| v.tubes.clone()).collect();
    let preds: Vec<Vec<MaskTube>> = gt
        .videos
        .iter()
        .map(|g| {
            pred.videos
                .iter()
                .find(|p| p.id == g.id)
                .map_or_else(Vec::new, |p| p.tubes.clone())
        })
        .collect();
    let mut report = video_map(&preds, &gts)?;
    report.id_switches = preds
        .par_iter()
        .zip(&gts)
        .map(|(p, g)| id_switches(p, g))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    let text = format_report(&report);
    if let Some(out) = &a.out {
        write_file(out, text.as_bytes())?;
    }
    Ok(text)
}

pub fn cmd_render(a: &RenderArgs) -> CliResult<String> {
    let file = read_track_file(&a.input)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let jobs: Vec<(&VideoRecord, usize)> = file
        .videos
        .iter()
        .flat_map(|v| (0..v.frames).map(move |t| (v, t)))
        .collect();
    jobs.par_iter()
        .map(|(v, t)| {
            let img = ppm::render_frame(&v.tubes, *t, v.height, v.width);
            write_file(&a.out.join(format!("video{}_frame{:04}.ppm", v.id, t)), &img)
        })
        .collect::<CliResult<Vec<()>>>()?;
    Ok(format!("wrote {} frames to {}\n", jobs.len(), a.out.display()))
}
