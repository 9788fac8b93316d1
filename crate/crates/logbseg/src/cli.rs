//! Command-line interface: phantom generation, preprocessing, training,
//! prediction, uncertainty quantification, evaluation, plotting, and kernel
//! inspection.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric
//! divergence.

use crate::error::{Error, Result};
use crate::gate::fg_ratio;
use crate::logkernel::make_bank;
use crate::metrics::{evaluate, Region};
use crate::trainer::{load_checkpoint, save_checkpoint, Ablation, TrainConfig, Trainer};
use crate::uqinfer::{
    boundary_width_stat, confidence_bounds, export_surface, mc_predict, predict_volume,
    BoundsMethod, DEFAULT_N,
};
use crate::voxelio::{
    load_volume, make_phantom, normalize, resample, write_volume, LabeledVolume, PhantomSpec,
    Volume, VolumeKind,
};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "logbseg",
    version,
    about = "Dual-stream Bayesian LoG segmentation toolkit for 3D tubular structures"
)]
pub struct Cli {
    /// Worker cap; all computation is sequential, so results are
    /// bit-identical at any value. Falls back to LOGBSEG_THREADS, then 1.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic tubular phantom (image, mask, region tags)
    Phantom(PhantomArgs),
    /// Resample a volume to a target spacing and min-max normalize
    Preprocess(PreprocessArgs),
    /// Train a model on a directory of image/mask volume pairs
    Train(TrainArgs),
    /// Deterministic (posterior-mean) full-volume prediction
    Predict(PredictArgs),
    /// Monte-Carlo uncertainty: mean/lower/upper/width volumes and mesh
    Uq(UqArgs),
    /// Dice / ASD / Hausdorff report for a prediction against ground truth
    Eval(EvalArgs),
    /// Slice PNGs with bound contours, plus a width-statistics CSV
    Plot(PlotArgs),
    /// Write the LoG kernel bank (or a checkpoint's posterior means) as JSON
    DumpKernels(DumpKernelsArgs),
    /// Mean foreground-to-background ratio of a dataset (mu estimation)
    GateStats(GateStatsArgs),
}

/// JSON run configuration: the training configuration plus artifact paths
/// and inference settings. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub uq_n: Option<usize>,
    pub bounds_method: Option<BoundsMethod>,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("LOGBSEG_THREADS") {
            Ok(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("LOGBSEG_THREADS={s} is not a number")))?,
            Err(_) => 1,
        },
    };
    if n < 1 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    Ok(n)
}

fn parse_radii(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad radius '{t}'")))
        })
        .collect()
}

fn parse_spacing(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad spacing component '{t}'")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Config("spacing needs three comma-separated values".into()));
    }
    Ok([parts[0], parts[1], parts[2]])
}

// ---------------------------------------------------------------------------
// phantom
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct PhantomArgs {
    /// Output directory
    #[arg(long, default_value = "phantom_out")]
    pub out: PathBuf,
    /// File stem for the generated volumes
    #[arg(long, default_value = "phantom")]
    pub name: String,
    /// Cubic grid edge length in voxels
    #[arg(long, default_value_t = 64)]
    pub grid_size: usize,
    /// Comma-separated tube radii in voxels, cycled over tubes
    #[arg(long, default_value = "1,2,3,4,6,8")]
    pub tube_radii: String,
    #[arg(long, default_value_t = 4)]
    pub tube_count: usize,
    /// Gaussian blur sigma applied to the mask to form the image
    #[arg(long, default_value_t = 1.0)]
    pub blur_sigma: f64,
    /// Additive Gaussian noise standard deviation
    #[arg(long, default_value_t = 0.05)]
    pub noise_std: f64,
    /// Allow slightly tilted tubes
    #[arg(long)]
    pub tilt: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_phantom(a: &PhantomArgs) -> Result<()> {
    let spec = PhantomSpec {
        grid_size: [a.grid_size; 3],
        tube_radii: parse_radii(&a.tube_radii)?,
        tube_count: a.tube_count,
        blur_sigma: a.blur_sigma,
        noise_std: a.noise_std,
        tilt: a.tilt,
        seed: a.seed,
    };
    let vols = make_phantom(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_volume(&a.out.join(format!("{}_image.json", a.name)), &vols.image)?;
    write_volume(&a.out.join(format!("{}_mask.json", a.name)), &vols.mask)?;
    write_volume(
        &a.out.join(format!("{}_region_thin.json", a.name)),
        &vols.region_thin,
    )?;
    write_volume(
        &a.out.join(format!("{}_region_thick.json", a.name)),
        &vols.region_thick,
    )?;
    let t = fg_ratio(&vols.mask)?;
    println!("wrote {} volumes to {}; foreground ratio T = {t:.6}", 4, a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Input volume header (.json)
    #[arg(long)]
    pub input: PathBuf,
    /// Optional matching mask to resample alongside
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Target spacing in mm, e.g. 0.8,0.8,0.3
    #[arg(long, default_value = "0.8,0.8,0.3")]
    pub spacing: String,
    /// Skip min-max normalization of the image
    #[arg(long)]
    pub no_normalize: bool,
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let sp = parse_spacing(&a.spacing)?;
    let img = load_volume(&a.input, VolumeKind::Intensity)?;
    let mut img = resample(&img, sp, VolumeKind::Intensity)?;
    if !a.no_normalize {
        img = normalize(&img)?;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let stem = a
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("volume");
    write_volume(&a.out.join(format!("{stem}_pre.json")), &img)?;
    if let Some(mp) = &a.mask {
        let m = load_volume(mp, VolumeKind::Label)?;
        let m = resample(&m, sp, VolumeKind::Label)?;
        let mstem = mp.file_stem().and_then(|s| s.to_str()).unwrap_or("mask");
        write_volume(&a.out.join(format!("{mstem}_pre.json")), &m)?;
    }
    println!("resampled to {sp:?}, dims {:?}", img.dims);
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON run configuration; CLI flags override file values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of <stem>_image.json / <stem>_mask.json pairs
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoint and training log
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Resume from this checkpoint instead of a fresh model
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub crop_size: Option<usize>,
    #[arg(long)]
    pub gate_capacity: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub kl_beta: Option<f64>,
    /// full | no_log | no_bayes | no_gate | log_layers:<n>
    #[arg(long)]
    pub ablation: Option<String>,
}

fn parse_ablation(s: &str) -> Result<Ablation> {
    match s {
        "full" => Ok(Ablation::Full),
        "no_log" => Ok(Ablation::NoLog),
        "no_bayes" => Ok(Ablation::NoBayes),
        "no_gate" => Ok(Ablation::NoGate),
        _ => {
            if let Some(n) = s.strip_prefix("log_layers:") {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Config(format!("bad log_layers count '{n}'")))?;
                Ok(Ablation::LogLayers(n))
            } else {
                Err(Error::Config(format!(
                    "unknown ablation '{s}' (full, no_log, no_bayes, no_gate, log_layers:<n>)"
                )))
            }
        }
    }
}

/// Load <stem>_image.json / <stem>_mask.json pairs, sorted by stem.
pub fn load_dataset(dir: &Path) -> Result<Vec<LabeledVolume>> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix("_image.json") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Data(format!(
            "no *_image.json volumes found in {}",
            dir.display()
        )));
    }
    let mut out = Vec::new();
    for stem in stems {
        let image = load_volume(&dir.join(format!("{stem}_image.json")), VolumeKind::Intensity)?;
        let mask = load_volume(&dir.join(format!("{stem}_mask.json")), VolumeKind::Label)?;
        out.push(LabeledVolume { image, mask });
    }
    Ok(out)
}

fn apply_train_overrides(cfg: &mut RunConfig, a: &TrainArgs) -> Result<()> {
    if let Some(d) = &a.data {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(o) = &a.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
        cfg.train.model.seed = v;
    }
    if let Some(v) = a.crop_size {
        cfg.train.crop_size = v;
    }
    if let Some(v) = a.gate_capacity {
        cfg.train.gate_capacity = v;
    }
    if let Some(v) = a.mu {
        cfg.train.mu = v;
    }
    if let Some(v) = a.kl_beta {
        cfg.train.kl_beta = v;
    }
    if let Some(s) = &a.ablation {
        cfg.train.ablation = parse_ablation(s)?;
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_train_overrides(&mut cfg, a)?;
    let data_dir = cfg
        .data_dir
        .clone()
        .ok_or_else(|| Error::Config("no data directory (--data or config data_dir)".into()))?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("train_out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let data = load_dataset(&data_dir)?;
    let mut trainer: Trainer<f32> = match &a.resume {
        Some(p) => load_checkpoint(p)?,
        None => Trainer::new(cfg.train.clone())?,
    };
    let log_path = out_dir.join("train_log.jsonl");
    let mut log = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?,
    );
    let history = trainer.run(&data, Some(&mut log))?;
    drop(log);
    let ckpt_path = out_dir.join("checkpoint.bin");
    save_checkpoint(&ckpt_path, &trainer)?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs; final loss {:.4} (data {:.4}, kl {:.4}); checkpoint {}",
            trainer.epoch,
            last.total,
            last.dice_loss,
            last.kl,
            ckpt_path.display()
        );
    } else {
        println!("no epochs run (already at target); checkpoint {}", ckpt_path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict / uq
// ---------------------------------------------------------------------------

fn load_and_preprocess(input: &Path, cfg: &TrainConfig) -> Result<Volume> {
    let img = load_volume(input, VolumeKind::Intensity)?;
    let img = match cfg.target_spacing {
        Some(sp) => resample(&img, sp, VolumeKind::Intensity)?,
        None => img,
    };
    normalize(&img)
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input image volume header (.json)
    #[arg(long)]
    pub input: PathBuf,
    /// Output probability volume header (.json)
    #[arg(long)]
    pub out: PathBuf,
    /// Overlap-average with half-stride sliding windows
    #[arg(long)]
    pub half_stride: bool,
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let trainer: Trainer<f32> = load_checkpoint(&a.checkpoint)?;
    let img = load_and_preprocess(&a.input, &trainer.cfg)?;
    let prob = predict_volume(
        &trainer.model,
        &img,
        trainer.cfg.crop_size,
        None,
        a.half_stride,
    )?;
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    write_volume(&a.out, &prob)?;
    println!("wrote probability volume {}", a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct UqArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for the _mean/_lower/_upper/_width volumes
    #[arg(long)]
    pub out: PathBuf,
    /// File stem of the output volumes
    #[arg(long, default_value = "uq")]
    pub name: String,
    /// Ensemble size
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    /// minmax | normal
    #[arg(long, default_value = "minmax")]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub half_stride: bool,
    /// Also export a marching-cubes mesh of the mean at this iso level
    #[arg(long)]
    pub mesh_level: Option<f64>,
}

fn parse_bounds(s: &str) -> Result<BoundsMethod> {
    match s {
        "minmax" => Ok(BoundsMethod::Minmax),
        "normal" => Ok(BoundsMethod::Normal),
        _ => Err(Error::Config(format!("unknown bounds method '{s}'"))),
    }
}

pub fn cmd_uq(a: &UqArgs) -> Result<()> {
    let method = parse_bounds(&a.method)?;
    let trainer: Trainer<f32> = load_checkpoint(&a.checkpoint)?;
    let img = load_and_preprocess(&a.input, &trainer.cfg)?;
    let ensemble = mc_predict(
        &trainer.model,
        &img,
        trainer.cfg.crop_size,
        a.n,
        a.seed,
        a.half_stride,
    )?;
    println!("computed statistics over {} stochastic inferences", ensemble.members.len());
    let u = confidence_bounds(&ensemble, method)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    crate::uqinfer::write_uncertainty(&a.out, &a.name, &u)?;
    if let Some(level) = a.mesh_level {
        let mesh_path = a.out.join(format!("{}_mesh.obj", a.name));
        export_surface(&u.mean, level, &mesh_path)?;
        println!("wrote mesh {}", mesh_path.display());
    }
    println!("wrote uncertainty volumes to {}", a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Probability (or binary) prediction volume
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth mask volume
    #[arg(long)]
    pub gt: PathBuf,
    /// Optional region mask restricting the evaluation
    #[arg(long)]
    pub region: Option<PathBuf>,
    /// ma | sa | whole
    #[arg(long, default_value = "whole")]
    pub region_name: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f32,
    /// Output JSON report path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional CSV row appended here
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_region(s: &str) -> Result<Region> {
    match s {
        "ma" => Ok(Region::Ma),
        "sa" => Ok(Region::Sa),
        "whole" => Ok(Region::Whole),
        _ => Err(Error::Config(format!("unknown region '{s}' (ma, sa, whole)"))),
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let pred = load_volume(&a.pred, VolumeKind::Intensity)?;
    let gt = load_volume(&a.gt, VolumeKind::Label)?;
    let region = match &a.region {
        Some(p) => Some(load_volume(p, VolumeKind::Label)?),
        None => None,
    };
    let report = evaluate(
        &pred,
        &gt,
        region.as_ref(),
        parse_region(&a.region_name)?,
        a.threshold,
    )?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format(format!("report encode: {e}")))?;
    println!("{json}");
    if let Some(p) = &a.out {
        std::fs::write(p, &json).map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &a.csv {
        let header = !p.exists();
        let mut line = String::new();
        if header {
            line.push_str("volume,region,dice,asd_mm,hausdorff_mm,n_pred,n_gt\n");
        }
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        line.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.pred.display(),
            a.region_name,
            report.dice,
            fmt_opt(report.asd_mm),
            fmt_opt(report.hausdorff_mm),
            report.n_pred_voxels,
            report.n_gt_voxels
        ));
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(p)
            .map_err(|e| Error::io(p, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Mean probability volume
    #[arg(long)]
    pub mean: PathBuf,
    #[arg(long)]
    pub lower: Option<PathBuf>,
    #[arg(long)]
    pub upper: Option<PathBuf>,
    /// Ground-truth mask for boundary/interior width statistics
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Contour level
    #[arg(long, default_value_t = 0.5)]
    pub level: f32,
    /// Emit every k-th axial slice
    #[arg(long, default_value_t = 4)]
    pub slice_step: usize,
}

/// 2D contour of the level set in one axial (z) slice.
fn slice_contour(v: &Volume, z: usize, level: f32) -> Vec<(usize, usize)> {
    let [dx, dy, _] = v.dims;
    let mut out = Vec::new();
    for x in 0..dx {
        for y in 0..dy {
            if v.at(x, y, z) < level {
                continue;
            }
            let mut edge = false;
            for (ddx, ddy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let nx = x as isize + ddx;
                let ny = y as isize + ddy;
                if nx < 0 || ny < 0 || nx >= dx as isize || ny >= dy as isize {
                    edge = true;
                    break;
                }
                if v.at(nx as usize, ny as usize, z) < level {
                    edge = true;
                    break;
                }
            }
            if edge {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let mean = load_volume(&a.mean, VolumeKind::Intensity)?;
    let lower = a
        .lower
        .as_ref()
        .map(|p| load_volume(p, VolumeKind::Intensity))
        .transpose()?;
    let upper = a
        .upper
        .as_ref()
        .map(|p| load_volume(p, VolumeKind::Intensity))
        .transpose()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let [dx, dy, dz] = mean.dims;
    let step = a.slice_step.max(1);
    let mut written = 0;
    for z in (0..dz).step_by(step) {
        let mut img = image::RgbImage::new(dx as u32, dy as u32);
        for x in 0..dx {
            for y in 0..dy {
                let g = (mean.at(x, y, z).clamp(0.0, 1.0) * 255.0) as u8;
                img.put_pixel(x as u32, y as u32, image::Rgb([g, g, g]));
            }
        }
        // green lower, red mean, blue upper
        if let Some(lo) = &lower {
            for (x, y) in slice_contour(lo, z, a.level) {
                img.put_pixel(x as u32, y as u32, image::Rgb([0, 255, 0]));
            }
        }
        if let Some(up) = &upper {
            for (x, y) in slice_contour(up, z, a.level) {
                img.put_pixel(x as u32, y as u32, image::Rgb([0, 0, 255]));
            }
        }
        for (x, y) in slice_contour(&mean, z, a.level) {
            img.put_pixel(x as u32, y as u32, image::Rgb([255, 0, 0]));
        }
        let path = a.out.join(format!("slice_{z:04}.png"));
        img.save(&path)
            .map_err(|e| Error::Format(format!("png write {}: {e}", path.display())))?;
        written += 1;
    }
    if let (Some(lo), Some(up), Some(gtp)) = (&lower, &upper, &a.gt) {
        let gt = load_volume(gtp, VolumeKind::Label)?;
        let width_data: Vec<f32> = up
            .data
            .iter()
            .zip(&lo.data)
            .map(|(&u, &l)| u - l)
            .collect();
        let mut width = Volume::new(mean.dims, mean.spacing, width_data)?;
        width.origin = mean.origin;
        let u = crate::uqinfer::UncertaintyMap {
            mean: mean.clone(),
            lower: lo.clone(),
            upper: up.clone(),
            width,
        };
        let stat = boundary_width_stat(&u, &gt)?;
        let csv = a.out.join("width_stats.csv");
        std::fs::write(
            &csv,
            format!(
                "boundary_mean_width,interior_mean_width\n{},{}\n",
                stat.boundary_mean_width, stat.interior_mean_width
            ),
        )
        .map_err(|e| Error::io(&csv, e))?;
    }
    println!("wrote {written} slice PNGs to {}", a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// dump-kernels / gate-stats
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct DumpKernelsArgs {
    /// Dump the posterior-mean kernels of this checkpoint instead of the
    /// analytic initialization bank
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output JSON path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct KernelDump {
    size: usize,
    sigma: f64,
    sum: f64,
    weights: Vec<f64>,
}

pub fn cmd_dump_kernels(a: &DumpKernelsArgs) -> Result<()> {
    let dumps: Vec<KernelDump> = match &a.checkpoint {
        Some(p) => {
            let trainer: Trainer<f32> = load_checkpoint(p)?;
            trainer
                .model
                .log_layers
                .iter()
                .map(|vk| {
                    let weights: Vec<f64> = vk.mu.data.iter().map(|&w| w as f64).collect();
                    KernelDump {
                        size: vk.size,
                        sigma: vk.sigma,
                        sum: weights.iter().sum(),
                        weights,
                    }
                })
                .collect()
        }
        None => make_bank()
            .kernels
            .iter()
            .map(|k| KernelDump {
                size: k.size,
                sigma: k.sigma,
                sum: k.sum(),
                weights: k.weights.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&dumps)
        .map_err(|e| Error::Format(format!("kernel encode: {e}")))?;
    match &a.out {
        Some(p) => std::fs::write(p, &json).map_err(|e| Error::io(p, e))?,
        None => println!("{json}"),
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct GateStatsArgs {
    /// Directory of <stem>_image.json / <stem>_mask.json pairs
    #[arg(long)]
    pub data: PathBuf,
}

pub fn cmd_gate_stats(a: &GateStatsArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let mut ratios = Vec::new();
    for lv in &data {
        ratios.push(fg_ratio(&lv.mask)?);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("volumes: {}", ratios.len());
    for (i, r) in ratios.iter().enumerate() {
        println!("  volume {i}: T = {r:.6}");
    }
    println!("mean T = {mean:.6}");
    Ok(())
}

/// Dispatch one parsed invocation.
pub fn run(cli: &Cli) -> Result<()> {
    resolve_threads(cli.threads)?;
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Uq(a) => cmd_uq(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
        Command::DumpKernels(a) => cmd_dump_kernels(a),
        Command::GateStats(a) => cmd_gate_stats(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tempdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("logbseg_cli_{tag}"));
        std::fs::remove_dir_all(&d).ok();
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    fn phantom_args(out: &Path, seed: u64) -> PhantomArgs {
        PhantomArgs {
            out: out.to_path_buf(),
            name: "p0".into(),
            grid_size: 24,
            tube_radii: "1.5,4".into(),
            tube_count: 2,
            blur_sigma: 0.8,
            noise_std: 0.03,
            tilt: false,
            seed,
        }
    }

    #[test]
    fn phantom_writes_loadable_volumes() {
        let d = tempdir("phantom");
        cmd_phantom(&phantom_args(&d, 1)).unwrap();
        let img = load_volume(&d.join("p0_image.json"), VolumeKind::Intensity).unwrap();
        let mask = load_volume(&d.join("p0_mask.json"), VolumeKind::Label).unwrap();
        assert_eq!(img.dims, [24, 24, 24]);
        assert!(mask.is_binary());
        assert!(mask.foreground_count() > 0);
        assert!(d.join("p0_region_thin.json").exists());
        assert!(d.join("p0_region_thick.json").exists());
        std::fs::remove_dir_all(&d).ok();
    }

    #[test]
    fn phantom_seed_reproducible() {
        let d1 = tempdir("phantom_s1");
        let d2 = tempdir("phantom_s2");
        cmd_phantom(&phantom_args(&d1, 9)).unwrap();
        cmd_phantom(&phantom_args(&d2, 9)).unwrap();
        for f in ["p0_image.raw", "p0_mask.raw"] {
            assert_eq!(
                std::fs::read(d1.join(f)).unwrap(),
                std::fs::read(d2.join(f)).unwrap(),
                "{f} differs between identical seeds"
            );
        }
        std::fs::remove_dir_all(&d1).ok();
        std::fs::remove_dir_all(&d2).ok();
    }

    #[test]
    fn run_config_rejects_unknown_keys() {
        let d = tempdir("cfg");
        let p = d.join("cfg.json");
        std::fs::write(&p, r#"{"no_such_key": 1}"#).unwrap();
        let err = RunConfig::load(&p).unwrap_err();
        assert!(err.to_string().contains("no_such_key"), "{err}");
        // nested unknown key named too
        std::fs::write(&p, r#"{"train": {"bogus_field": 2}}"#).unwrap();
        let err = RunConfig::load(&p).unwrap_err();
        assert!(err.to_string().contains("bogus_field"), "{err}");
        std::fs::remove_dir_all(&d).ok();
    }

    #[test]
    fn threads_resolution() {
        assert_eq!(resolve_threads(Some(4)).unwrap(), 4);
        assert!(resolve_threads(Some(0)).is_err());
        // env fallback defaults to 1 when unset
        std::env::remove_var("LOGBSEG_THREADS");
        assert_eq!(resolve_threads(None).unwrap(), 1);
    }

    #[test]
    fn ablation_and_bounds_parsing() {
        assert_eq!(parse_ablation("full").unwrap(), Ablation::Full);
        assert_eq!(parse_ablation("log_layers:3").unwrap(), Ablation::LogLayers(3));
        assert!(parse_ablation("wat").is_err());
        assert_eq!(parse_bounds("normal").unwrap(), BoundsMethod::Normal);
        assert!(parse_bounds("median").is_err());
    }

    #[test]
    fn dump_kernels_init_zero_sums() {
        let d = tempdir("kern");
        let out = d.join("kernels.json");
        cmd_dump_kernels(&DumpKernelsArgs {
            checkpoint: None,
            out: Some(out.clone()),
        })
        .unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 5);
        for k in arr {
            assert!(k["sum"].as_f64().unwrap().abs() < 1e-9);
        }
        std::fs::remove_dir_all(&d).ok();
    }

    #[test]
    fn gate_stats_thin_vs_thick() {
        let thin = tempdir("gs_thin");
        let thick = tempdir("gs_thick");
        let mut a = phantom_args(&thin, 3);
        a.tube_radii = "1,1.5".into();
        cmd_phantom(&a).unwrap();
        let mut b = phantom_args(&thick, 3);
        b.tube_radii = "5,6".into();
        cmd_phantom(&b).unwrap();
        let t = |d: &Path| {
            let data = load_dataset(d).unwrap();
            fg_ratio(&data[0].mask).unwrap()
        };
        assert!(t(&thin) < t(&thick));
        cmd_gate_stats(&GateStatsArgs {
            data: thin.clone(),
        })
        .unwrap();
        std::fs::remove_dir_all(&thin).ok();
        std::fs::remove_dir_all(&thick).ok();
    }

    #[test]
    fn end_to_end_train_predict_eval_smoke() {
        let d = tempdir("e2e");
        let data = d.join("data");
        let mut a = phantom_args(&data, 5);
        a.grid_size = 16;
        a.tube_radii = "1.5,4".into();
        cmd_phantom(&a).unwrap();
        let out = d.join("run");
        cmd_train(&TrainArgs {
            config: None,
            data: Some(data.clone()),
            out: Some(out.clone()),
            resume: None,
            epochs: Some(1),
            lr: None,
            seed: Some(7),
            crop_size: Some(16),
            gate_capacity: Some(1),
            mu: None,
            kl_beta: None,
            ablation: Some("no_gate".into()),
        })
        .unwrap();
        let ckpt = out.join("checkpoint.bin");
        assert!(ckpt.exists());
        assert!(out.join("train_log.jsonl").exists());

        let prob = d.join("prob.json");
        cmd_predict(&PredictArgs {
            checkpoint: ckpt.clone(),
            input: data.join("p0_image.json"),
            out: prob.clone(),
            half_stride: false,
        })
        .unwrap();
        cmd_eval(&EvalArgs {
            pred: prob.clone(),
            gt: data.join("p0_mask.json"),
            region: None,
            region_name: "whole".into(),
            threshold: 0.5,
            out: Some(d.join("report.json")),
            csv: Some(d.join("report.csv")),
        })
        .unwrap();
        assert!(d.join("report.json").exists());

        let uqd = d.join("uq");
        cmd_uq(&UqArgs {
            checkpoint: ckpt,
            input: data.join("p0_image.json"),
            out: uqd.clone(),
            name: "uq".into(),
            n: 2,
            method: "minmax".into(),
            seed: 1,
            half_stride: false,
            mesh_level: None,
        })
        .unwrap();
        for f in ["uq_mean.json", "uq_lower.json", "uq_upper.json", "uq_width.json"] {
            assert!(uqd.join(f).exists(), "{f} missing");
        }
        cmd_plot(&PlotArgs {
            mean: uqd.join("uq_mean.json"),
            lower: Some(uqd.join("uq_lower.json")),
            upper: Some(uqd.join("uq_upper.json")),
            gt: Some(data.join("p0_mask.json")),
            out: d.join("plots"),
            level: 0.5,
            slice_step: 8,
        })
        .unwrap();
        assert!(d.join("plots").join("slice_0000.png").exists());
        assert!(d.join("plots").join("width_stats.csv").exists());
        std::fs::remove_dir_all(&d).ok();
    }
}
