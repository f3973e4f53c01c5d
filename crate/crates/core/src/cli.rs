//! Command-line front end: `generate`, `annotate`, `eval`, `stats`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::annotator::{annotate_poses, AnnotationCategory, AnnotatorConfig, DEFAULT_MIN_AREA};
use crate::camera::CameraIntrinsics;
use crate::coco::{export_dataset, image_file_name, import_dataset, split_dataset, to_json, DropsFile};
use crate::error::{Error, Result};
use crate::evaluator::{compute_report, format_tables, parse_detections, IouType};
use crate::io::write_atomic;
use crate::parallel::map_ordered;
use crate::raster::render_preview;
use crate::scene::{generate_scenario, load_scene, save_scene, ScenarioCategory, ScenarioConfig, Scene};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INVALID_INPUT: u8 = 3;
pub const EXIT_IO: u8 = 4;

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const DROPS_FILE: &str = "drops.json";

#[derive(Debug, Parser)]
#[command(name = "palletsynth", version, about = "Synthetic pallet scenes and COCO segmentation labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scene files for one category or all of them.
    Generate(GenerateArgs),
    /// Annotate every camera pose of a scene and write COCO JSON.
    Annotate(AnnotateArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Summarize an annotation file.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CategoryArg {
    Individual,
    Stacked,
    OnRacking,
    OnForklifts,
    Combined,
    /// All five categories.
    All,
}

impl CategoryArg {
    fn categories(self) -> Vec<ScenarioCategory> {
        match self {
            CategoryArg::Individual => vec![ScenarioCategory::Individual],
            CategoryArg::Stacked => vec![ScenarioCategory::Stacked],
            CategoryArg::OnRacking => vec![ScenarioCategory::OnRacking],
            CategoryArg::OnForklifts => vec![ScenarioCategory::OnForklifts],
            CategoryArg::Combined => vec![ScenarioCategory::Combined],
            CategoryArg::All => ScenarioCategory::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    /// Image width in pixels.
    #[arg(long)]
    pub width: Option<u32>,
    /// Image height in pixels.
    #[arg(long)]
    pub height: Option<u32>,
    /// Vertical field of view in degrees.
    #[arg(long)]
    pub fov: Option<f64>,
}

impl CameraArgs {
    fn is_set(&self) -> bool {
        self.width.is_some() || self.height.is_some() || self.fov.is_some()
    }

    fn apply(&self, base: CameraIntrinsics) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(
            self.width.unwrap_or(base.width),
            self.height.unwrap_or(base.height),
            self.fov.map(f64::to_radians).unwrap_or(base.vertical_fov),
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub category: CategoryArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pallets (individual), stacks (stacked), racks (on-racking) or
    /// forklifts (on-forklifts); combined applies it to every part.
    #[arg(long)]
    pub count: Option<usize>,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["scene", "category"]))]
pub struct AnnotateArgs {
    /// Scene file to annotate.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Generate the scene in memory instead of reading one.
    #[arg(long, value_enum)]
    pub category: Option<CategoryArg>,
    #[arg(long, default_value_t = 0, requires = "category")]
    pub seed: u64,
    #[arg(long, requires = "category")]
    pub count: Option<usize>,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Smallest emitted polygon area in px².
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    pub min_area: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Also write a P6 preview per frame.
    #[arg(long)]
    pub preview: bool,
    /// Fraction of images written to a separate test split.
    #[arg(long, default_value_t = 0.0)]
    pub test_fraction: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Ground-truth COCO file.
    #[arg(long)]
    pub gt: PathBuf,
    /// COCO results file (list of detections).
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long, value_enum, default_value = "segm")]
    pub iou_type: IouTypeArg,
    /// Row label in the printed tables.
    #[arg(long, default_value = "Result")]
    pub label: String,
    /// Write the full report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IouTypeArg {
    Segm,
    Bbox,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// COCO annotation file; drop reasons are read from `drops.json` beside it.
    pub coco: PathBuf,
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Parser errors span several lines with carets; keep one.
            let msg = e.to_string();
            let msg: Vec<&str> = msg.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('|')).collect();
            eprintln!("error: {}", msg.join(" "));
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_INVALID_INPUT,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a).map(|_| ()),
        Command::Annotate(a) => cmd_annotate(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Stats(a) => cmd_stats(&a).map(|_| ()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn scene_file_name(category: ScenarioCategory, seed: u64) -> String {
    format!("{category}-{seed}.toml")
}

fn scenario_config(category: ScenarioCategory, count: Option<usize>, camera: &CameraArgs) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    if let Some(n) = count {
        cfg = cfg.with_count(category, n);
    }
    cfg.intrinsics = camera.apply(cfg.intrinsics)?;
    Ok(cfg)
}

/// Writes one scene file per category; returns the written paths.
pub fn cmd_generate(a: &GenerateArgs) -> Result<Vec<PathBuf>> {
    create_dir(&a.out)?;
    let mut written = Vec::new();
    for cat in a.category.categories() {
        let cfg = scenario_config(cat, a.count, &a.camera)?;
        let scene = generate_scenario(cat, a.seed, &cfg)?;
        let path = a.out.join(scene_file_name(cat, a.seed));
        save_scene(&scene, &path)?;
        println!(
            "{cat}: {} pallets, {} spheres, {} images -> {}",
            scene.pallets().len(),
            scene.spheres().len(),
            scene.image_count(),
            path.display()
        );
        written.push(path);
    }
    Ok(written)
}

fn annotate_source(a: &AnnotateArgs) -> Result<Scene> {
    match (&a.scene, a.category) {
        (Some(path), _) => {
            let scene = load_scene(path)?;
            if a.camera.is_set() {
                let intr = a.camera.apply(*scene.intrinsics())?;
                scene.with_intrinsics(intr)
            } else {
                Ok(scene)
            }
        }
        (None, Some(cat)) => {
            let cats = cat.categories();
            let [cat] = cats.as_slice() else {
                return Err(Error::Config("annotate needs a single category, not `all`".into()));
            };
            generate_scenario(*cat, a.seed, &scenario_config(*cat, a.count, &a.camera)?)
        }
        (None, None) => Err(Error::Config("either --scene or --category is required".into())),
    }
}

/// Summary of an annotate run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotateSummary {
    pub images: usize,
    pub annotations: usize,
    pub dropped: usize,
}

pub fn cmd_annotate(a: &AnnotateArgs) -> Result<AnnotateSummary> {
    if !(a.min_area >= 0.0) {
        return Err(Error::Config("--min-area must be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&a.test_fraction) {
        return Err(Error::Config("--test-fraction must lie in [0, 1]".into()));
    }
    let scene = annotate_source(a)?;
    let poses = scene.camera_poses()?;
    let intr = *scene.intrinsics();
    eprintln!(
        "annotating {} frames ({} pallets, {}x{}) with {} jobs",
        poses.len(),
        scene.pallets().len(),
        intr.width,
        intr.height,
        if a.jobs == 0 { "all".to_string() } else { a.jobs.to_string() }
    );
    let started = Instant::now();
    let cfg = AnnotatorConfig { min_area: a.min_area };
    let frames = annotate_poses(&scene, &poses, 1, &cfg, a.jobs)?;
    let ds = export_dataset(&frames, intr.width, intr.height)?;
    let drops = DropsFile::from_frames(&frames);

    create_dir(&a.out)?;
    write_atomic(&a.out.join(ANNOTATIONS_FILE), to_json(&ds).as_bytes())?;
    write_atomic(&a.out.join(DROPS_FILE), drops.to_json().as_bytes())?;
    if a.test_fraction > 0.0 {
        let (train, test) = split_dataset(&ds, a.test_fraction)?;
        write_atomic(&a.out.join("annotations_train.json"), to_json(&train).as_bytes())?;
        write_atomic(&a.out.join("annotations_test.json"), to_json(&test).as_bytes())?;
    }
    if a.preview {
        let dir = a.out.join("previews");
        create_dir(&dir)?;
        let results = map_ordered(&frames, a.jobs, |_, f| {
            render_preview(&scene, &f.pose, &intr, f).write_ppm(&dir.join(image_file_name(f.image_id)))
        })?;
        results.into_iter().collect::<Result<Vec<()>>>()?;
    }
    let summary = AnnotateSummary {
        images: ds.images.len(),
        annotations: ds.annotations.len(),
        dropped: drops.total(),
    };
    eprintln!("done in {:.1} s", started.elapsed().as_secs_f64());
    println!(
        "{} images, {} annotations, {} dropped -> {}",
        summary.images,
        summary.annotations,
        summary.dropped,
        a.out.join(ANNOTATIONS_FILE).display()
    );
    Ok(summary)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let with_file = |path: &Path, e: Error| match e {
        Error::InvalidCoco(m) => Error::InvalidCoco(format!("{}: {m}", path.display())),
        other => other,
    };
    let gt = import_dataset(&read_text(&a.gt)?).map_err(|e| with_file(&a.gt, e))?;
    let iou_type = match a.iou_type {
        IouTypeArg::Segm => IouType::Segm,
        IouTypeArg::Bbox => IouType::Bbox,
    };
    let dets = parse_detections(&read_text(&a.detections)?, iou_type).map_err(|e| with_file(&a.detections, e))?;
    let report = compute_report(&gt, &dets, iou_type)?;
    let tables = format_tables(&[(a.label.clone(), &report)]);
    print!("{tables}");
    if let Some(out) = &a.out {
        write_atomic(out, report.to_json().as_bytes())?;
    }
    Ok(tables)
}

fn area_summary(mut areas: Vec<f64>) -> Option<(f64, f64, f64, f64)> {
    if areas.is_empty() {
        return None;
    }
    areas.sort_by(f64::total_cmp);
    let n = areas.len();
    let median = if n % 2 == 1 {
        areas[n / 2]
    } else {
        (areas[n / 2 - 1] + areas[n / 2]) / 2.0
    };
    Some((areas[0], median, areas.iter().sum::<f64>() / n as f64, areas[n - 1]))
}

pub fn cmd_stats(a: &StatsArgs) -> Result<String> {
    use std::fmt::Write as _;
    let ds = import_dataset(&read_text(&a.coco)?).map_err(|e| match e {
        Error::InvalidCoco(m) => Error::InvalidCoco(format!("{}: {m}", a.coco.display())),
        other => other,
    })?;
    let mut out = String::new();
    let _ = writeln!(out, "images: {}", ds.images.len());
    let _ = writeln!(out, "annotations: {}", ds.annotations.len());
    for c in &ds.categories {
        let areas: Vec<f64> = ds
            .annotations
            .iter()
            .filter(|x| x.category_id == c.id)
            .map(|x| x.area)
            .collect();
        let _ = write!(out, "  {}: {}", c.name, areas.len());
        if let Some((min, med, mean, max)) = area_summary(areas) {
            let _ = write!(out, " (area px² min {min:.1}, median {med:.1}, mean {mean:.1}, max {max:.1})");
        }
        out.push('\n');
    }
    let drops_path = a.coco.with_file_name(DROPS_FILE);
    if drops_path.exists() {
        let drops = DropsFile::from_json(&read_text(&drops_path)?)?;
        let _ = writeln!(out, "dropped: {}", drops.total());
        let mut by_cat: BTreeMap<(String, String), usize> = BTreeMap::new();
        for d in drops.frames.iter().flat_map(|f| &f.dropped) {
            *by_cat.entry((category_label(d.category), d.reason.to_string())).or_default() += 1;
        }
        for ((cat, reason), n) in by_cat {
            let _ = writeln!(out, "  {cat} {reason}: {n}");
        }
    } else {
        let _ = writeln!(out, "dropped: no {DROPS_FILE} next to the annotations");
    }
    print!("{out}");
    Ok(out)
}

fn category_label(c: AnnotationCategory) -> String {
    c.name().to_string()
}
