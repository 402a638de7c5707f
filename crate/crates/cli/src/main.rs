//! `rangeview` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rangeview::augment::{apply_common, apply_range_combo};
use rangeview::io::{
    encode_labels, encode_raster, parse_label_words, read_label_stream, read_labels, read_scan,
    read_sensor_spec, read_taxonomy, KeyValues,
};
use rangeview::metrics::PanopticLabels;
use rangeview::model::weights::{checksum, init_weights, load_weights, save_weights};
use rangeview::occupancy::{find_crossover, occupancy_curve, OccupancyRow};
use rangeview::post::{range_post, subcloud_collisions, subcloud_split, DEFAULT_NUM_SUB};
use rangeview::render::{error_map_bev, error_map_range, GRAY, RED};
use rangeview::views::{partition, rasterize_view, split_by_view, stitch};
use rangeview::{
    rasterize, AugmentConfig, ClassId, ClassTaxonomy, ConfusionMatrix, KnnParams,
    ModelConfig, PanopticEval, PointCloud, SensorSpec, IGNORE_ID,
};

#[derive(Parser)]
#[command(name = "rangeview", version, about = "LiDAR range-view toolkit")]
struct Cli {
    /// Worker threads for per-file work; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize scans and report grid bookkeeping.
    Rasterize(RasterizeArgs),
    /// Augment a scan with a second scan and write the augmented raster.
    Augment(AugmentArgs),
    /// Partition a scan into azimuth views and rasterize each view.
    StrSplit(StrSplitArgs),
    /// Stitch per-view point predictions back into scan order.
    StrStitch(StrStitchArgs),
    /// Transfer stacked sub-cloud grid predictions back to points.
    Postprocess(PostprocessArgs),
    /// Semantic evaluation: per-class IoU and mIoU.
    EvalSem(EvalArgs),
    /// Panoptic evaluation: PQ, SQ, RQ and PQ-dagger.
    EvalPan(EvalArgs),
    /// Grid fill and point retention across raster widths.
    Occupancy(OccupancyArgs),
    /// Predict point labels with the toy segmenter through sub-cloud inference.
    ToyInfer(ToyInferArgs),
    /// Write a PPM error map.
    Render(RenderArgs),
}

#[derive(Args)]
struct SensorArgs {
    /// `semantic-kitti`, `nuscenes`, or a sensor file.
    #[arg(long, default_value = "semantic-kitti")]
    sensor: String,
    /// Override the raster width.
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Args)]
struct KnnArgs {
    /// Smooth transferred labels with a k-NN vote on the range image.
    #[arg(long)]
    knn: bool,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 1.0)]
    cutoff: f64,
}

#[derive(Args)]
struct RasterizeArgs {
    /// Scan file or directory of `.bin` scans.
    #[arg(long)]
    scan: PathBuf,
    /// Label file, or directory holding `<stem>.label` files.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    sensor: SensorArgs,
    /// Rasterize this many stride sub-clouds per scan.
    #[arg(long, default_value_t = 1)]
    num_sub: usize,
    /// Directory for `.raster` dumps and grid label files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    scan: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Second scan for mix, paste and union.
    #[arg(long)]
    scan_b: PathBuf,
    #[arg(long)]
    labels_b: Option<PathBuf>,
    /// Augmentation config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    sensor: SensorArgs,
    /// Output raster dump.
    #[arg(long)]
    out: PathBuf,
    /// Output grid labels.
    #[arg(long)]
    out_labels: Option<PathBuf>,
}

#[derive(Args)]
struct StrSplitArgs {
    #[arg(long)]
    scan: PathBuf,
    /// Per-point label words to split alongside the scan.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Number of azimuth views.
    #[arg(short = 'Z', long)]
    views: usize,
    /// Raster width of each view; defaults to the sensor width.
    #[arg(long)]
    w_train: Option<usize>,
    #[command(flatten)]
    sensor: SensorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StrStitchArgs {
    /// The scan that was split.
    #[arg(long)]
    scan: PathBuf,
    /// Directory written by `str-split`, holding `<prefix><k>.label`.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value = "view")]
    prefix: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PostprocessArgs {
    #[arg(long)]
    scan: PathBuf,
    /// Stacked grid predictions, one `H x W` block per sub-cloud.
    #[arg(long)]
    grid_pred: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NUM_SUB)]
    num_sub: usize,
    #[command(flatten)]
    sensor: SensorArgs,
    #[command(flatten)]
    knn: KnnArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth label file or directory.
    #[arg(long)]
    gt: PathBuf,
    /// Prediction label file or directory with matching file names.
    #[arg(long)]
    pred: PathBuf,
    /// `semantic-kitti` or a taxonomy file.
    #[arg(long)]
    classes: String,
    /// Predictions already hold class ids; do not remap them.
    #[arg(long)]
    pred_class_ids: bool,
}

#[derive(Args)]
struct OccupancyArgs {
    #[arg(long)]
    scan: PathBuf,
    #[command(flatten)]
    sensor: SensorArgs,
    /// Comma-separated widths; defaults to 256, 512, ..., 4096.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
}

#[derive(Args)]
struct ToyInferArgs {
    #[arg(long)]
    scan: PathBuf,
    /// Weight file; without it weights are drawn from `--seed`.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, required_unless_present = "weights")]
    seed: Option<u64>,
    /// Model config file; defaults apply to missing keys.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Also write the weights used.
    #[arg(long)]
    save_weights: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NUM_SUB)]
    num_sub: usize,
    #[command(flatten)]
    sensor: SensorArgs,
    #[command(flatten)]
    knn: KnnArgs,
    /// Prediction file, or directory when `--scan` is a directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderView {
    Bev,
    Range,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scan: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Taxonomy used to remap ground truth and pick the ignore id.
    #[arg(long)]
    classes: Option<String>,
    #[arg(long, value_enum, default_value = "bev")]
    view: RenderView,
    /// Side of the bird's-eye square in meters.
    #[arg(long, default_value_t = 100.0)]
    extent: f64,
    /// Side of the bird's-eye image in pixels.
    #[arg(long, default_value_t = 800)]
    pixels: usize,
    #[command(flatten)]
    sensor: SensorArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Bad flag values found after parsing; exits like a clap error.
#[derive(Debug)]
struct UsageError(String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

type Res<T> = anyhow::Result<T>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    print_defaults();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            // library errors already quote their sources
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn print_defaults() {
    eprintln!("# defaults");
    eprintln!("# num_sub = {DEFAULT_NUM_SUB}");
    for line in AugmentConfig::default().to_key_values().lines() {
        eprintln!("# {line}");
    }
}

fn run(cli: Cli) -> Res<()> {
    if cli.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .context("building the worker pool")?;
    pool.install(|| match cli.command {
        Command::Rasterize(a) => cmd_rasterize(a),
        Command::Augment(a) => cmd_augment(a),
        Command::StrSplit(a) => cmd_str_split(a),
        Command::StrStitch(a) => cmd_str_stitch(a),
        Command::Postprocess(a) => cmd_postprocess(a),
        Command::EvalSem(a) => cmd_eval_sem(a),
        Command::EvalPan(a) => cmd_eval_pan(a),
        Command::Occupancy(a) => cmd_occupancy(a),
        Command::ToyInfer(a) => cmd_toy_infer(a),
        Command::Render(a) => cmd_render(a),
    })
}

// ---------------------------------------------------------------------------
// helpers

fn sensor(a: &SensorArgs) -> Res<SensorSpec> {
    let spec = match a.sensor.as_str() {
        "semantic-kitti" => SensorSpec::semantic_kitti(),
        "nuscenes" => SensorSpec::nuscenes(),
        path => read_sensor_spec(path)?,
    };
    Ok(match a.width {
        Some(w) => spec.with_width(w).map_err(|e| usage(e.to_string()))?,
        None => spec,
    })
}

fn taxonomy(name: &str) -> Res<ClassTaxonomy> {
    Ok(match name {
        "semantic-kitti" => ClassTaxonomy::semantic_kitti(),
        path => read_taxonomy(path)?,
    })
}

fn knn_params(a: &KnnArgs) -> Res<Option<KnnParams>> {
    if !a.knn {
        return Ok(None);
    }
    let p = KnnParams {
        k: a.k,
        window: a.window,
        range_cutoff: a.cutoff,
    };
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(Some(p))
}

/// The file itself, or the sorted files with extension `ext` in a directory.
fn inputs(path: &Path, ext: &str) -> Res<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .{ext} files in {}", path.display());
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Companion file of `scan`: `arg` itself, or `arg/<stem>.<ext>` when `arg`
/// is a directory.
fn companion(arg: &Path, scan: &Path, ext: &str) -> PathBuf {
    if arg.is_dir() {
        arg.join(format!("{}.{ext}", stem(scan)))
    } else {
        arg.to_path_buf()
    }
}

fn load_cloud(scan: &Path, labels: Option<&Path>) -> Res<PointCloud> {
    let cloud = read_scan(scan)?;
    Ok(match labels {
        Some(l) => {
            let (sem, inst) = read_labels(companion(l, scan, "label"), cloud.len())?;
            cloud.with_labels(sem).with_instances(inst)
        }
        None => cloud,
    })
}

/// Runs `f` on every item on the current pool; results keep input order and
/// the first failing item (in input order) decides the error.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Res<R> + Sync + Send) -> Res<Vec<R>> {
    let results: Vec<Res<R>> = items.par_iter().map(f).collect();
    results.into_iter().collect()
}

fn write(path: &Path, bytes: &[u8]) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

// ---------------------------------------------------------------------------
// subcommands

struct RasterStats {
    stem: String,
    points: usize,
    occupied: usize,
    displaced: usize,
    out_of_fov: usize,
    origin: usize,
}

fn cmd_rasterize(a: RasterizeArgs) -> Res<()> {
    let spec = sensor(&a.sensor)?;
    if a.num_sub == 0 {
        return Err(usage("--num-sub must be at least 1"));
    }
    let scans = inputs(&a.scan, "bin")?;
    let stats = par_map(&scans, |scan| {
        let cloud = load_cloud(scan, a.labels.as_deref())?;
        let subs = if a.num_sub == 1 {
            vec![cloud.clone()]
        } else {
            subcloud_split(&cloud, a.num_sub)?
        };
        let name = stem(scan);
        let mut s = RasterStats {
            stem: name.clone(),
            points: cloud.len(),
            occupied: 0,
            displaced: 0,
            out_of_fov: 0,
            origin: 0,
        };
        for (j, sub) in subs.iter().enumerate() {
            let img = rasterize(sub, &spec)?;
            s.occupied += img.occupied_count();
            s.displaced += img.displaced().len();
            s.out_of_fov += img.out_of_fov_count();
            s.origin += img.origin_count();
            if let Some(dir) = &a.out {
                let base = if a.num_sub == 1 { name.clone() } else { format!("{name}.sub{j}") };
                write(&dir.join(format!("{base}.raster")), &encode_raster(img.grid().channels()))?;
                if let Some(l) = img.labels() {
                    write(&dir.join(format!("{base}.grid.label")), &encode_labels(l, None)?)?;
                }
            }
        }
        Ok(s)
    })?;
    println!("scans={}", stats.len());
    println!("height={}", spec.height());
    println!("width={}", spec.width());
    println!("num_sub={}", a.num_sub);
    let total = |f: fn(&RasterStats) -> usize| stats.iter().map(f).sum::<usize>();
    println!("points={}", total(|s| s.points));
    println!("occupied={}", total(|s| s.occupied));
    println!("displaced={}", total(|s| s.displaced));
    println!("out_of_fov={}", total(|s| s.out_of_fov));
    println!("origin={}", total(|s| s.origin));
    if stats.len() > 1 {
        for s in &stats {
            println!("scan.{}.points={}", s.stem, s.points);
            println!("scan.{}.occupied={}", s.stem, s.occupied);
            println!("scan.{}.displaced={}", s.stem, s.displaced);
        }
    }
    Ok(())
}

fn cmd_augment(a: AugmentArgs) -> Res<()> {
    let spec = sensor(&a.sensor)?;
    let config = match &a.config {
        Some(p) => AugmentConfig::read(p)?,
        None => AugmentConfig::default(),
    };
    let cloud_a = load_cloud(&a.scan, a.labels.as_deref())?;
    let cloud_b = load_cloud(&a.scan_b, a.labels_b.as_deref())?;
    // scan A and the combo draw from stream 0, scan B from stream 1
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut rng_b = ChaCha8Rng::seed_from_u64(a.seed);
    rng_b.set_stream(1);
    let grid_a = rasterize(&apply_common(&cloud_a, &config, &mut rng), &spec)?.into_grid();
    let sample_b = || Ok(rasterize(&apply_common(&cloud_b, &config, &mut rng_b), &spec)?.into_grid());
    let out = apply_range_combo(&grid_a, sample_b, &config, &mut rng)?;
    write(&a.out, &encode_raster(out.channels()))?;
    if let Some(p) = &a.out_labels {
        let labels = out.labels().ok_or_else(|| anyhow!("no labels to write; pass --labels and --labels-b"))?;
        write(p, &encode_labels(labels, None)?)?;
    }
    println!("seed={}", a.seed);
    println!("height={}", out.height());
    println!("width={}", out.width());
    println!("occupied_a={}", grid_a.occupied_count());
    println!("occupied={}", out.occupied_count());
    Ok(())
}

fn cmd_str_split(a: StrSplitArgs) -> Res<()> {
    let spec = sensor(&a.sensor)?;
    if a.views == 0 {
        return Err(usage("--views must be at least 1"));
    }
    let w_train = a.w_train.unwrap_or(spec.width());
    if w_train == 0 {
        return Err(usage("--w-train must be positive"));
    }
    let cloud = read_scan(&a.scan)?;
    let words = match &a.labels {
        Some(p) => {
            let w = parse_label_words(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?;
            if w.len() != cloud.len() {
                bail!("{} holds {} labels for {} points", p.display(), w.len(), cloud.len());
            }
            Some(w)
        }
        None => None,
    };
    let part = partition(&cloud, a.views)?;
    let views: Vec<usize> = (0..a.views).collect();
    let rasters = par_map(&views, |&v| Ok(rasterize_view(&cloud, &part, v, &spec, w_train)?))?;

    let mut manifest = format!(
        "views = {}\nw_train = {w_train}\nfull_width = {}\nheight = {}\npoints = {}\nunassigned = {}\n",
        a.views,
        w_train * a.views,
        spec.height(),
        cloud.len(),
        part.unassigned().len()
    );
    let split = words.as_ref().map(|w| split_by_view(w, &part)).transpose()?;
    for vr in &rasters {
        let k = vr.view;
        manifest.push_str(&format!("view.{k}.points = {}\n", vr.point_ids.len()));
        write(&a.out.join(format!("view{k}.raster")), &encode_raster(vr.image.grid().channels()))?;
        if let Some(split) = &split {
            let mut bytes = Vec::with_capacity(split[k].len() * 4);
            for w in &split[k] {
                bytes.extend_from_slice(&w.to_le_bytes());
            }
            write(&a.out.join(format!("view{k}.label")), &bytes)?;
            // grid labels from the semantic half of each winner's word
            let sem: Vec<ClassId> = split[k].iter().map(|w| w & 0xFFFF).collect();
            let grid: Vec<ClassId> = vr
                .image
                .occupants()
                .iter()
                .map(|o| match o {
                    rangeview::Occupant::Point(i) => sem[*i],
                    rangeview::Occupant::Empty => IGNORE_ID,
                })
                .collect();
            write(&a.out.join(format!("view{k}.grid.label")), &encode_labels(&grid, None)?)?;
        }
    }
    write(&a.out.join("manifest.txt"), manifest.as_bytes())?;
    println!("views={}", a.views);
    println!("w_train={w_train}");
    println!("full_width={}", w_train * a.views);
    println!("points={}", cloud.len());
    println!("unassigned={}", part.unassigned().len());
    for vr in &rasters {
        println!("view.{}.points={}", vr.view, vr.point_ids.len());
        println!("view.{}.displaced={}", vr.view, vr.image.displaced().len());
    }
    Ok(())
}

fn cmd_str_stitch(a: StrStitchArgs) -> Res<()> {
    let kv = KeyValues::read(a.dir.join("manifest.txt"))?;
    let views: usize = kv.require("views")?;
    let points: usize = kv.require("points")?;
    let cloud = read_scan(&a.scan)?;
    if cloud.len() != points {
        bail!("manifest lists {points} points, scan has {}", cloud.len());
    }
    let part = partition(&cloud, views)?;
    let per_view = (0..views)
        .map(|k| {
            let p = a.dir.join(format!("{}{k}.label", a.prefix));
            Ok(parse_label_words(&fs::read(&p).with_context(|| format!("reading {}", p.display()))?)?)
        })
        .collect::<Res<Vec<_>>>()?;
    let words: Vec<u32> = stitch(&per_view, &part)?
        .into_iter()
        .map(|w| w.unwrap_or(IGNORE_ID))
        .collect();
    let mut bytes = Vec::with_capacity(words.len() * 4);
    for w in &words {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    write(&a.out, &bytes)?;
    println!("views={views}");
    println!("points={}", words.len());
    println!("unassigned={}", part.unassigned().len());
    Ok(())
}

fn cmd_postprocess(a: PostprocessArgs) -> Res<()> {
    let spec = sensor(&a.sensor)?;
    let knn = knn_params(&a.knn)?;
    if a.num_sub == 0 {
        return Err(usage("--num-sub must be at least 1"));
    }
    let cloud = read_scan(&a.scan)?;
    let stacked = read_label_stream(&a.grid_pred)?;
    let hw = spec.grid_count();
    if stacked.len() != a.num_sub * hw {
        bail!(
            "{} holds {} grid labels, expected {} sub-clouds x {hw}",
            a.grid_pred.display(),
            stacked.len(),
            a.num_sub
        );
    }
    let mut blocks = stacked.chunks_exact(hw);
    let labels = range_post(&cloud, &spec, a.num_sub, |_| Ok(blocks.next().expect("one block per sub-cloud").to_vec()), knn.as_ref())?;
    write(&a.out, &encode_labels(&labels, None)?)?;
    let collisions: usize = subcloud_collisions(&cloud, &spec, a.num_sub)?.iter().sum();
    println!("points={}", cloud.len());
    println!("num_sub={}", a.num_sub);
    println!("collisions={collisions}");
    println!("knn={}", knn.is_some());
    Ok(())
}

/// (ground truth, prediction) file pairs.
fn eval_pairs(a: &EvalArgs) -> Res<Vec<(PathBuf, PathBuf)>> {
    let gts = inputs(&a.gt, "label")?;
    Ok(gts
        .into_iter()
        .map(|g| {
            let p = if a.pred.is_dir() {
                a.pred.join(g.file_name().expect("file"))
            } else {
                a.pred.clone()
            };
            (g, p)
        })
        .collect())
}

/// Semantic and instance ids of a label file, remapped to class ids.
fn load_eval_labels(path: &Path, t: &ClassTaxonomy, remap: bool) -> Res<(Vec<ClassId>, Vec<u32>)> {
    let words = parse_label_words(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)?;
    Ok(words
        .iter()
        .map(|&w| {
            let s = w & 0xFFFF;
            (if remap { t.remap_id(s) } else { s }, w >> 16)
        })
        .unzip())
}

fn check_same_len(g: &Path, gl: usize, p: &Path, pl: usize) -> Res<()> {
    if gl != pl {
        bail!("{} has {gl} labels but {} has {pl}", g.display(), p.display());
    }
    Ok(())
}

fn cmd_eval_sem(a: EvalArgs) -> Res<()> {
    let t = taxonomy(&a.classes)?;
    let pairs = eval_pairs(&a)?;
    let parts = par_map(&pairs, |(g, p)| {
        let (gs, _) = load_eval_labels(g, &t, true)?;
        let (ps, _) = load_eval_labels(p, &t, !a.pred_class_ids)?;
        check_same_len(g, gs.len(), p, ps.len())?;
        let mut cm = ConfusionMatrix::for_taxonomy(&t);
        cm.update(&ps, &gs).with_context(|| format!("scoring {}", p.display()))?;
        Ok(cm)
    })?;
    let mut cm = ConfusionMatrix::for_taxonomy(&t);
    for part in &parts {
        cm.merge(part)?;
    }
    let rep = cm.miou();
    println!("scans={}", pairs.len());
    println!("points={}", cm.total());
    println!("miou={}", fmt_f(rep.mean));
    for (c, iou) in rep.per_class.iter().enumerate() {
        if c as ClassId != t.ignore() {
            println!("iou.{}={}", t.names()[c], iou.map_or("nan".into(), fmt_f));
        }
    }
    Ok(())
}

fn cmd_eval_pan(a: EvalArgs) -> Res<()> {
    let t = taxonomy(&a.classes)?;
    let pairs = eval_pairs(&a)?;
    let parts = par_map(&pairs, |(g, p)| {
        let (gs, gi) = load_eval_labels(g, &t, true)?;
        let (ps, pi) = load_eval_labels(p, &t, !a.pred_class_ids)?;
        check_same_len(g, gs.len(), p, ps.len())?;
        let mut e = PanopticEval::new(&t);
        e.add_scan(
            PanopticLabels {
                semantic: &ps,
                instance: &pi,
            },
            PanopticLabels {
                semantic: &gs,
                instance: &gi,
            },
        )
        .with_context(|| format!("scoring {}", p.display()))?;
        Ok(e)
    })?;
    let mut e = PanopticEval::new(&t);
    for part in &parts {
        e.merge(part)?;
    }
    let r = e.report();
    println!("scans={}", pairs.len());
    for (k, v) in [
        ("pq", r.pq),
        ("sq", r.sq),
        ("rq", r.rq),
        ("pq_dagger", r.pq_dagger),
        ("pq_things", r.pq_things),
        ("sq_things", r.sq_things),
        ("rq_things", r.rq_things),
        ("pq_stuff", r.pq_stuff),
        ("sq_stuff", r.sq_stuff),
        ("rq_stuff", r.rq_stuff),
        ("miou", r.miou),
    ] {
        println!("{k}={}", fmt_f(v));
    }
    for (c, pc) in r.per_class.iter().enumerate() {
        if let Some(pc) = pc {
            let name = &t.names()[c];
            println!("pq.{name}={}", fmt_f(pc.pq));
            println!("sq.{name}={}", fmt_f(pc.sq));
            println!("rq.{name}={}", fmt_f(pc.rq));
        }
    }
    Ok(())
}

fn cmd_occupancy(a: OccupancyArgs) -> Res<()> {
    let spec = sensor(&a.sensor)?;
    let widths = a.widths.clone().unwrap_or_else(|| (1..=16).map(|k| 256 * k).collect());
    if widths.is_empty() || widths.contains(&0) {
        return Err(usage("--widths must list positive widths"));
    }
    let scans = inputs(&a.scan, "bin")?;
    let tables = par_map(&scans, |s| Ok(occupancy_curve(&read_scan(s)?, &spec, &widths)?))?;
    let points: usize = tables.iter().map(|t| t[0].points).sum();
    let rows: Vec<OccupancyRow> = widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let occupied: usize = tables.iter().map(|t| t[i].occupied).sum();
            OccupancyRow {
                width: w,
                occupied,
                points,
                grid_fill: occupied as f64 / (tables.len() * spec.height() * w) as f64,
                point_retention: if points == 0 { 0.0 } else { occupied as f64 / points as f64 },
            }
        })
        .collect();
    println!("scans={}", scans.len());
    println!("points={points}");
    for r in &rows {
        println!("width.{}.grid_fill={}", r.width, fmt_f(r.grid_fill));
        println!("width.{}.point_retention={}", r.width, fmt_f(r.point_retention));
    }
    match find_crossover(&rows) {
        Some((lo, hi)) => println!("crossover={lo},{hi}"),
        None => println!("crossover=none"),
    }
    Ok(())
}

fn cmd_toy_infer(a: ToyInferArgs) -> Res<()> {
    let spec = sensor(&a.sensor)?;
    let knn = knn_params(&a.knn)?;
    if a.num_sub == 0 {
        return Err(usage("--num-sub must be at least 1"));
    }
    let config = match &a.model_config {
        Some(p) => ModelConfig::read(p)?,
        None => ModelConfig::default(),
    };
    let model = match (&a.weights, a.seed) {
        (Some(p), _) => load_weights(p, &config)?,
        (None, Some(seed)) => init_weights(&config, seed)?,
        (None, None) => return Err(usage("--seed is required without --weights")),
    };
    if let Some(p) = &a.save_weights {
        save_weights(p, &model)?;
    }
    let scans = inputs(&a.scan, "bin")?;
    let many = a.scan.is_dir();
    let counts = par_map(&scans, |scan| {
        let cloud = read_scan(scan)?;
        let labels = range_post(&cloud, &spec, a.num_sub, |img| model.predict(img.grid()), knn.as_ref())?;
        let out = if many {
            a.out.join(format!("{}.label", stem(scan)))
        } else {
            a.out.clone()
        };
        write(&out, &encode_labels(&labels, None)?)?;
        Ok(cloud.len())
    })?;
    println!("scans={}", scans.len());
    println!("points={}", counts.iter().sum::<usize>());
    println!("num_sub={}", a.num_sub);
    println!("weights_checksum={:016x}", checksum(&model));
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Res<()> {
    let spec = sensor(&a.sensor)?;
    let t = a.classes.as_deref().map(taxonomy).transpose()?;
    let ignore = t.as_ref().map_or(IGNORE_ID, |t| t.ignore());
    let cloud = read_scan(&a.scan)?;
    let (mut gt, _) = read_labels(&a.gt, cloud.len())?;
    let (pred, _) = read_labels(&a.pred, cloud.len())?;
    if let Some(t) = &t {
        for g in &mut gt {
            *g = t.remap_id(*g);
        }
    }
    let img = match a.view {
        RenderView::Bev => {
            if a.pixels == 0 {
                return Err(usage("--pixels must be positive"));
            }
            error_map_bev(&cloud, &pred, &gt, ignore, a.extent, a.pixels)?
        }
        RenderView::Range => {
            let with_gt = rasterize(&cloud.clone().with_labels(gt), &spec)?;
            let grid_gt = with_gt.labels().expect("labelled").to_vec();
            // same points, same winners: the prediction grid follows the
            // ground-truth raster's occupants
            let grid_pred: Vec<ClassId> = with_gt
                .occupants()
                .iter()
                .map(|o| match o {
                    rangeview::Occupant::Point(i) => pred[*i],
                    rangeview::Occupant::Empty => ignore,
                })
                .collect();
            error_map_range(with_gt.grid(), &grid_pred, &grid_gt, ignore)?
        }
    };
    img.write_ppm(&a.out)?;
    println!("width={}", img.width);
    println!("height={}", img.height);
    println!("correct={}", img.count(GRAY));
    println!("wrong={}", img.count(RED));
    Ok(())
}
