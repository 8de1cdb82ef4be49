//! Command-line entry points.
//!
//! Every command accepts `--config <file.json>`; keys are the long flag
//! names with `-` replaced by `_`. Flags given on the command line win over
//! the file. Exit codes: 0 success, 1 training diverged, 2 bad input,
//! 3 version mismatch, 64 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix4;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::camera::{orbit_cameras, Camera, Intrinsics};
use crate::eikonal::{track, write_path_csv, Ray, TrackOptions};
use crate::error::Error;
use crate::metrics::{psnr, ssim};
use crate::refindex::{carve, BoundingBox, CarveOptions, RefractiveGrid};
use crate::scene::{load_dataset_with, synthesize_views, write_dataset, AnalyticScene, LoadOptions, ViewRecord};
use crate::train::{render_image, run_training, Checkpoint, Medium, TrainConfig, Trainer, TrainingSet};
use crate::Vec3;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VERSION: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "eikonerf", version, about = "Radiance fields for refractive objects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Carve and smooth an index grid from a dataset's silhouettes.
    Carve(CarveArgs),
    /// Render an analytic scene into a dataset.
    GenSynthetic(GenArgs),
    /// Train the networks on a dataset.
    Train(TrainArgs),
    /// Render one view from a checkpoint.
    Render(RenderArgs),
    /// Report mean PSNR and SSIM of a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Write one tracked ray as CSV.
    DumpPath(DumpArgs),
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct CarveArgs {
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Vertices per axis: `N` or `NX,NY,NZ`.
    #[arg(long)]
    #[serde(default, deserialize_with = "lenient_list")]
    dims: Option<String>,
    /// Material index; defaults to the dataset's `refractive_index`.
    #[arg(long)]
    n: Option<f64>,
    /// Gaussian smoothing in voxels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Half-size of a centered cube, or `MINX,MINY,MINZ,MAXX,MAXY,MAXZ`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "lenient_list")]
    bbox: Option<String>,
    #[arg(long)]
    subsamples: Option<usize>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    downscale: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct GenArgs {
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Preset name: glass-sphere, water-sphere or vacuum.
    #[arg(long)]
    scene: Option<String>,
    /// JSON file overriding preset fields.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    train_views: Option<usize>,
    #[arg(long)]
    val_views: Option<usize>,
    #[arg(long)]
    test_views: Option<usize>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    camera_angle_x: Option<f64>,
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Index grid file; required unless training straight paths.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    downscale: Option<u32>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    disable_hierarchical: bool,
    #[arg(long)]
    disable_boundary_reg: bool,
    #[arg(long)]
    straight_paths: bool,
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct RenderArgs {
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// JSON file holding a 4x4 camera-to-world matrix, bare or under
    /// `transform_matrix`.
    #[arg(long)]
    pose: Option<PathBuf>,
    /// Output PNG; a raw float dump is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    camera_angle_x: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct EvalArgs {
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    downscale: Option<u32>,
    /// Also write each rendered view here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct DumpArgs {
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Index grid file; alternative to `--scene`.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Analytic preset to track through.
    #[arg(long)]
    scene: Option<String>,
    /// `X,Y,Z`
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "lenient_list")]
    origin: Option<String>,
    /// `X,Y,Z`; normalized before tracking.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "lenient_list")]
    direction: Option<String>,
    #[arg(long)]
    near: Option<f64>,
    #[arg(long)]
    far: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Accepts `"1,2,3"`, `64` or `[1, 2, 3]` for list-valued flags in config
/// files.
fn lenient_list<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    use serde::de::Error as _;
    let scalar = |v: &Value| match v {
        Value::Number(n) => Ok(n.to_string()),
        Value::String(s) => Ok(s.clone()),
        other => Err(D::Error::custom(format!("expected a number or string, got {other}"))),
    };
    match Option::<Value>::deserialize(d)? {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(items)) => Ok(Some(items.iter().map(scalar).collect::<std::result::Result<Vec<_>, _>>()?.join(","))),
        Some(v) => scalar(&v).map(Some),
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CmdResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> CmdResult<T> {
    match v {
        Some(x) => Ok(x.clone()),
        None => usage(format!("--{flag} is required")),
    }
}

fn read_json(path: &Path) -> crate::Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

/// Overlays command-line flags on the config file's object. Unset options
/// and `false` switches do not override the file.
fn layer_config<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> CmdResult<(T, Value)> {
    let mut merged = match config {
        Some(p) => match read_json(p)? {
            Value::Object(m) => m,
            _ => return usage(format!("{}: config must be a JSON object", p.display())),
        },
        None => Map::new(),
    };
    if let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") {
        for (k, v) in given {
            if !(v.is_null() || v == Value::Bool(false)) {
                merged.insert(k, v);
            }
        }
    }
    let merged = Value::Object(merged);
    let args = serde_json::from_value(merged.clone()).map_err(|e| Failure::Usage(format!("config: {e}")))?;
    Ok((args, merged))
}

fn parse_floats(s: &str, what: &str) -> CmdResult<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .or_else(|_| usage(format!("--{what}: expected comma-separated numbers, got '{s}'")))
}

fn parse_vec3(s: &str, what: &str) -> CmdResult<Vec3> {
    match parse_floats(s, what)?.as_slice() {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => usage(format!("--{what}: expected X,Y,Z")),
    }
}

fn parse_dims(s: &str) -> CmdResult<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .or_else(|_| usage(format!("--dims: expected N or NX,NY,NZ, got '{s}'")))?;
    let dims = match parts.as_slice() {
        [n] => [*n; 3],
        [a, b, c] => [*a, *b, *c],
        _ => return usage("--dims: expected N or NX,NY,NZ"),
    };
    if dims.iter().any(|&d| d < 2) {
        return usage(format!("--dims: every axis needs at least 2 vertices, got {dims:?}"));
    }
    Ok(dims)
}

fn parse_bbox(s: &str) -> CmdResult<BoundingBox> {
    let v = parse_floats(s, "bbox")?;
    match v.as_slice() {
        [h] if *h > 0.0 => Ok(BoundingBox::cube(*h)),
        [a, b, c, d, e, f] => BoundingBox::new(Vec3::new(*a, *b, *c), Vec3::new(*d, *e, *f))
            .or_else(|e| usage(format!("--bbox: {e}"))),
        _ => usage("--bbox: expected a positive half-size or six numbers"),
    }
}

fn downscale(v: Option<u32>) -> CmdResult<LoadOptions> {
    match v.unwrap_or(1) {
        0 => usage("--downscale must be >= 1"),
        d => Ok(LoadOptions { downscale: d }),
    }
}

fn cmd_carve(flags: CarveArgs, out: &mut dyn Write) -> CmdResult {
    let (a, _) = layer_config(&flags, flags.config.as_deref())?;
    let dataset = required(&a.dataset, "dataset")?;
    let dest = required(&a.out, "out")?;
    let dims = parse_dims(a.dims.as_deref().unwrap_or("64"))?;
    let bbox = parse_bbox(a.bbox.as_deref().unwrap_or("1.5"))?;
    let sigma = a.sigma.unwrap_or(1.0);
    if !(sigma >= 0.0) {
        return usage("--sigma must be >= 0");
    }
    if a.n.is_some_and(|n| !(n >= 1.0)) {
        return usage("--n must be >= 1");
    }
    let subsamples = a.subsamples.unwrap_or(3);
    if subsamples == 0 {
        return usage("--subsamples must be >= 1");
    }
    let options = downscale(a.downscale)?;

    let ds = load_dataset_with(&dataset, options)?;
    let n = a.n.or(ds.refractive_index).unwrap_or(1.5);
    let silhouettes = ds.silhouettes(a.split.as_deref().unwrap_or("train"))?;
    let report = carve(
        &silhouettes,
        dims,
        bbox,
        n,
        CarveOptions {
            subsamples_per_axis: subsamples,
            keep_largest_component: true,
        },
    )?;
    let grid = report.grid.smooth(sigma)?;
    grid.save(&dest)?;
    let stats = json!({
        "dims": dims,
        "n_material": n,
        "occupied_vertices": report.occupied_vertices,
        "discarded_vertices": report.discarded_vertices,
        "empty_hull": report.empty_hull,
        "material_volume": grid.material_volume(n),
        "mean_index": grid.mean(),
    });
    writeln!(out, "{stats}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn cmd_gen(flags: GenArgs, out: &mut dyn Write) -> CmdResult {
    let (a, _) = layer_config(&flags, flags.config.as_deref())?;
    let dest = required(&a.out, "out")?;
    let name = a.scene.clone().unwrap_or_else(|| "glass-sphere".into());
    if AnalyticScene::preset(&name).is_none() {
        return usage(format!("--scene: unknown preset '{name}'"));
    }
    let (w, h) = (a.width.unwrap_or(64), a.height.unwrap_or(64));
    let fov = a.camera_angle_x.unwrap_or(0.69);
    let distance = a.distance.unwrap_or(4.0);
    let steps = a.steps.unwrap_or(512);
    if w == 0 || h == 0 || !(fov > 0.0 && fov < std::f64::consts::PI) || !(distance > 0.0) || steps == 0 {
        return usage("image size, --camera-angle-x, --distance and --steps must be positive");
    }
    let counts = [
        ("train", a.train_views.unwrap_or(20)),
        ("val", a.val_views.unwrap_or(0)),
        ("test", a.test_views.unwrap_or(7)),
    ];
    if counts[0].1 == 0 {
        return usage("--train-views must be >= 1");
    }
    let overrides = a.params.as_deref().map(read_json).transpose()?;
    let scene = AnalyticScene::from_preset_with(&name, overrides.as_ref())?;
    let intr = Intrinsics::from_fov_x(w, h, fov);

    let mut rendered = Vec::new();
    for (i, (split, count)) in counts.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let lattice = orbit_cameras(intr, count + i, distance, Vec3::zeros());
        let cams: Vec<Camera> = lattice.into_iter().skip(i).collect();
        rendered.push((*split, synthesize_views(&scene, &cams, steps)?));
    }
    let splits: Vec<(&str, Vec<ViewRecord<'_>>)> = rendered
        .iter()
        .map(|(s, views)| {
            let records = views
                .iter()
                .map(|v| ViewRecord {
                    camera: &v.camera,
                    image: &v.image,
                    mask: &v.mask,
                })
                .collect();
            (*s, records)
        })
        .collect();
    write_dataset(&dest, scene.near, scene.far, Some(scene.index.material_index()), &splits)?;
    let summary: Map<String, Value> = rendered.iter().map(|(s, v)| (s.to_string(), json!(v.len()))).collect();
    writeln!(out, "{}", Value::Object(summary)).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TrainRun {
    out_dir: Option<PathBuf>,
    dataset: Option<PathBuf>,
    grid: Option<PathBuf>,
    downscale: Option<u32>,
    #[serde(flatten)]
    train: TrainConfig,
}

fn cmd_train(flags: TrainArgs, out: &mut dyn Write) -> CmdResult {
    let (_, merged) = layer_config(&flags, flags.config.as_deref())?;
    let run: TrainRun = serde_json::from_value(merged).map_err(|e| Failure::Usage(format!("config: {e}")))?;
    let config = run.train;
    config.validate()?;
    let out_dir = required(&run.out_dir, "out-dir")?;
    let dataset = required(&run.dataset, "dataset")?;
    if run.grid.is_none() && !config.straight_paths {
        return usage("--grid is required unless --straight-paths is set");
    }
    let options = downscale(run.downscale)?;

    let ds = load_dataset_with(&dataset, options)?;
    let views = ds
        .train
        .iter()
        .map(|f| Ok((f.camera, ds.load_image(f)?)))
        .collect::<crate::Result<Vec<_>>>()?;
    let data = TrainingSet::from_views(&views, ds.near, ds.far)?;
    let medium = match &run.grid {
        Some(p) if !config.straight_paths => Medium::Grid(RefractiveGrid::load(p)?),
        _ => Medium::Straight,
    };
    let mut trainer = Trainer::new(config, medium, data)?;
    let history = run_training(&mut trainer, &out_dir, ds.near, ds.far)?;
    let last = history.last();
    let summary = json!({
        "iterations": trainer.iteration(),
        "final_l_rgb": last.map(|l| l.l_rgb),
        "final_total": last.map(|l| l.total),
        "out_dir": out_dir,
    });
    writeln!(out, "{summary}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn parse_pose(value: &Value) -> Option<Matrix4<f64>> {
    let rows = value.get("transform_matrix").unwrap_or(value).as_array()?;
    if rows.len() != 4 {
        return None;
    }
    let mut m = Matrix4::zeros();
    for (r, row) in rows.iter().enumerate() {
        let row = row.as_array().filter(|row| row.len() == 4)?;
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = v.as_f64()?;
        }
    }
    Some(m)
}

fn cmd_render(flags: RenderArgs, out: &mut dyn Write) -> CmdResult {
    let (a, _) = layer_config(&flags, flags.config.as_deref())?;
    let ckpt = required(&a.checkpoint, "checkpoint")?;
    let pose_path = required(&a.pose, "pose")?;
    let dest = required(&a.out, "out")?;
    let (w, h) = (a.width.unwrap_or(64), a.height.unwrap_or(64));
    let fov = a.camera_angle_x.unwrap_or(0.69);
    if w == 0 || h == 0 || !(fov > 0.0 && fov < std::f64::consts::PI) {
        return usage("image size and --camera-angle-x must be positive");
    }
    let pose = parse_pose(&read_json(&pose_path)?)
        .ok_or_else(|| Error::InvalidInput(format!("{}: expected a 4x4 matrix", pose_path.display())))?;
    let camera = Camera::from_matrix(Intrinsics::from_fov_x(w, h, fov), &pose)?;

    let c = Checkpoint::load(&ckpt)?;
    let sampling = c.meta.config.sampling();
    let seed = a.seed.unwrap_or(c.meta.config.seed);
    let img = render_image(&c.params, &c.medium, &sampling, &camera, c.meta.near, c.meta.far, seed);
    img.save_png(&dest)?;
    let raw = dest.with_extension("eikr");
    img.save_raw(&raw)?;
    writeln!(out, "{}", json!({ "png": dest, "raw": raw })).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn cmd_eval(flags: EvalArgs, out: &mut dyn Write) -> CmdResult {
    let (a, _) = layer_config(&flags, flags.config.as_deref())?;
    let ckpt = required(&a.checkpoint, "checkpoint")?;
    let dataset = required(&a.dataset, "dataset")?;
    let split = a.split.clone().unwrap_or_else(|| "test".into());
    if !crate::scene::dataset::SPLITS.contains(&split.as_str()) {
        return usage(format!("--split must be train, val or test, got '{split}'"));
    }
    let options = downscale(a.downscale)?;

    let c = Checkpoint::load(&ckpt)?;
    let ds = load_dataset_with(&dataset, options)?;
    let frames = ds.split(&split)?;
    if frames.is_empty() {
        return Err(Error::InvalidInput(format!("split '{split}' has no frames")).into());
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let sampling = c.meta.config.sampling();
    let seed = a.seed.unwrap_or(c.meta.config.seed);
    let (mut p_sum, mut s_sum) = (0.0, 0.0);
    for (i, frame) in frames.iter().enumerate() {
        let target = ds.load_image(frame)?;
        let pred = render_image(&c.params, &c.medium, &sampling, &frame.camera, ds.near, ds.far, seed);
        p_sum += psnr(&pred, &target)?;
        s_sum += ssim(&pred, &target)?;
        if let Some(dir) = &a.out_dir {
            pred.save_png(&dir.join(format!("{split}_{i:03}.png")))?;
        }
    }
    let n = frames.len() as f64;
    let report = json!({ "split": split, "frames": frames.len(), "psnr": p_sum / n, "ssim": s_sum / n });
    writeln!(out, "{report}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn cmd_dump(flags: DumpArgs, out: &mut dyn Write) -> CmdResult {
    let (a, _) = layer_config(&flags, flags.config.as_deref())?;
    let origin = parse_vec3(&required(&a.origin, "origin")?, "origin")?;
    let dir = parse_vec3(&required(&a.direction, "direction")?, "direction")?;
    if !(dir.norm() > 0.0) {
        return usage("--direction must be nonzero");
    }
    let steps = a.steps.unwrap_or(256);
    if steps == 0 {
        return usage("--steps must be >= 1");
    }
    let scene = match (&a.grid, &a.scene) {
        (Some(_), Some(_)) => return usage("give either --grid or --scene, not both"),
        (None, None) => return usage("one of --grid or --scene is required"),
        (None, Some(name)) => match AnalyticScene::preset(name) {
            Some(s) => Some(s),
            None => return usage(format!("--scene: unknown preset '{name}'")),
        },
        (Some(_), None) => None,
    };
    let near = a.near.or(scene.map(|s| s.near)).unwrap_or(0.0);
    let far = a.far.or(scene.map(|s| s.far)).unwrap_or(6.0);
    let ray = Ray::new(origin, dir.normalize(), near, far).or_else(|e| usage(e.to_string()))?;
    let opts = TrackOptions::default();
    let path = match (&a.grid, scene) {
        (Some(g), _) => track(&ray, &RefractiveGrid::load(g)?, steps, opts),
        (None, Some(s)) => track(&ray, &s, steps, opts),
        (None, None) => unreachable!("checked above"),
    };
    match &a.out {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = std::io::BufWriter::new(file);
            write_path_csv(&path, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(p, e))?;
        }
        None => write_path_csv(&path, out).map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(())
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::VersionMismatch { .. } => EXIT_VERSION,
        Error::NonFiniteLoss { .. } => EXIT_DIVERGED,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Command output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = e.print();
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Carve(a) => cmd_carve(a, out),
        Command::GenSynthetic(a) => cmd_gen(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Render(a) => cmd_render(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::DumpPath(a) => cmd_dump(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if let Error::NonFiniteLoss { batch, .. } = &e {
                eprintln!("offending ray ids: {batch:?}");
            }
            exit_code(&e)
        }
    }
}
