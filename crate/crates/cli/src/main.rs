use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use depthstack::color::{condition_table, ExposureAccumulator, ExposureReport};
use depthstack::eval::{mean_average_precision, read_annotations, read_predictions};
use depthstack::fusion::{normalize_depth, DepthPlane, DepthNormalization};
use depthstack::pipeline::{list_frames, load_frame, run_depth, run_pipeline, FrameOrdering, PipelineConfig};
use depthstack::raster::{ChannelLabel, Planes};
use depthstack::stack::{export_png, read_stack, stack, write_stack, ColourSpace, StackSpec};
use depthstack::stereo::DisparityRange;

/// Exit status when some work items failed and `--allow-partial` was not given.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "depthstack", version, about = "Depth layers, colour+depth stacks and mask evaluation")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Exit 0 even when some items failed.
    #[arg(long, global = true)]
    allow_partial: bool,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fused disparity of one centre frame from its two neighbours.
    Depth(DepthArgs),
    /// Build a channel stack from a frame and a depth plane.
    Stack(StackArgs),
    /// Convert an RGB raster to another colour space.
    Convert(ConvertArgs),
    /// CIELAB lightness spread of one or more frame directories.
    Exposure(ExposureArgs),
    /// Score predicted masks against annotations.
    Eval(EvalArgs),
    /// Full run over a frame directory.
    Pipeline(PipelineArgs),
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Write the reference configuration with every default.
    Init {
        /// Destination file; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

/// Overrides shared by the depth-producing commands.
#[derive(Args)]
struct StereoOverrides {
    /// Base seed for robust fitting.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_disparity: Option<i32>,
    #[arg(long)]
    max_disparity: Option<i32>,
    /// SGM penalty for a one-step disparity change.
    #[arg(long)]
    p1: Option<u16>,
    /// SGM penalty for larger jumps.
    #[arg(long)]
    p2: Option<u16>,
    /// Largest disagreement (px) between the two pair maps that still fuses.
    #[arg(long)]
    agree_tol: Option<f32>,
    /// SURF detector response threshold.
    #[arg(long)]
    hessian_threshold: Option<f64>,
}

impl StereoOverrides {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(s) = self.seed {
            c.seed = s;
        }
        let r = c.sgm.range;
        if self.min_disparity.is_some() || self.max_disparity.is_some() {
            c.sgm.range = DisparityRange::new(self.min_disparity.unwrap_or(r.min), self.max_disparity.unwrap_or(r.max));
            if let DepthNormalization::Fixed { .. } = c.fusion.normalization {
                c.fusion.normalization = DepthNormalization::fixed(c.sgm.range);
            }
        }
        if let Some(v) = self.p1 {
            c.sgm.p1 = v;
        }
        if let Some(v) = self.p2 {
            c.sgm.p2 = v;
        }
        if let Some(v) = self.agree_tol {
            c.fusion.agree_tol = v;
        }
        if let Some(v) = self.hessian_threshold {
            c.features.hessian_threshold = v;
        }
    }
}

#[derive(Args)]
struct DepthArgs {
    #[arg(long)]
    prev: PathBuf,
    #[arg(long)]
    center: PathBuf,
    #[arg(long)]
    next: PathBuf,
    /// Disparity visualization (PNG).
    #[arg(long)]
    out_png: Option<PathBuf>,
    /// Depth-only channel stack (MCIM).
    #[arg(long)]
    out_stack: Option<PathBuf>,
    /// Diagnostics as JSON; printed to stdout when omitted.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    overrides: StereoOverrides,
}

#[derive(Args)]
struct StackArgs {
    #[arg(long)]
    frame: PathBuf,
    /// Depth-only MCIM, or an 8-bit PNG of depth codes (0 = invalid).
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Variant, e.g. RGB-D, HSV, LAB-D, DEPTH.
    #[arg(long)]
    spec: StackSpec,
    #[arg(long, short)]
    output: PathBuf,
    /// Also write one PNG per channel here.
    #[arg(long)]
    png_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Rgb,
    Hsv,
    Lab,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum)]
    to: Space,
    /// Quantized channel stack (MCIM).
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    png_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExposureArgs {
    /// One directory of frames per light condition.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Condition names, in directory order; directory names by default.
    #[arg(long = "condition")]
    conditions: Vec<String>,
    /// Also print the per-frame values.
    #[arg(long)]
    per_frame: bool,
    /// Machine-readable records.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Evaluate a random subset of this many images.
    #[arg(long)]
    sample: Option<usize>,
    /// Seed for `--sample`; the configured seed by default.
    #[arg(long)]
    seed: Option<u64>,
    /// Highest-scoring predictions kept per image and category.
    #[arg(long)]
    max_dets: Option<usize>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Directory of ordered frames.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Frame offset between the centre and each neighbour.
    #[arg(long)]
    stride: Option<usize>,
    /// Parallel triples; 0 uses one per core.
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated variants, or `all`.
    #[arg(long, value_delimiter = ',')]
    specs: Option<Vec<String>>,
    /// Frame sort order.
    #[arg(long, value_enum)]
    ordering: Option<Ordering>,
    /// Also write one PNG per stack channel.
    #[arg(long)]
    export_png: bool,
    /// Light-condition label for the exposure table.
    #[arg(long)]
    condition: Option<String>,
    #[command(flatten)]
    overrides: StereoOverrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ordering {
    Lexicographic,
    Natural,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Outcome of a command: number of failed work items.
type Failures = usize;

fn cmd_depth(cli: &Cli, a: &DepthArgs) -> Result<Failures> {
    let mut config = load_config(cli.config.as_deref())?;
    a.overrides.apply(&mut config);
    config.validate_params()?;
    let result = match run_depth(&a.prev, &a.center, &a.next, &config, 1) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("failed: {e}");
            return Ok(1);
        }
    };
    if let Some(p) = &a.out_png {
        result.fused.map.save_visualization(p)?;
    }
    if let Some(p) = &a.out_stack {
        let center = load_frame(&a.center)?;
        let plane = normalize_depth(&result.fused.map, &config.fusion.normalization)?;
        write_stack(&stack(&center, Some(&plane), StackSpec::DEPTH)?, p)?;
    }
    write_or_print(a.diagnostics.as_deref(), &serde_json::to_string_pretty(&result.diagnostics)?)?;
    Ok(0)
}

fn depth_plane(path: &Path, size: (u32, u32)) -> Result<DepthPlane> {
    let is_mcim = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mcim"));
    let (data, offset, scale, w, h) = if is_mcim {
        let s = read_stack(path)?;
        let idx = s
            .image
            .channel_index(ChannelLabel::Depth)
            .with_context(|| format!("{} has no DEPTH channel", path.display()))?;
        let q = s.quantization[idx];
        let data = s.image.u8_plane(ChannelLabel::Depth)?.to_vec();
        (data, q.offset, q.scale, s.image.width(), s.image.height())
    } else {
        let img = depthstack::raster::load_raster(path)?;
        let Planes::U8(planes) = img.planes() else { bail!("depth image must be 8-bit") };
        if planes.len() != 1 {
            bail!("depth image {} must have one channel", path.display());
        }
        (planes[0].clone(), 0.0, 1.0, img.width(), img.height())
    };
    if (w, h) != size {
        bail!("depth is {w}x{h} but the frame is {}x{}", size.0, size.1);
    }
    Ok(DepthPlane {
        width: w,
        height: h,
        data,
        offset,
        scale,
        policy: DepthNormalization::Fixed {
            min: offset + 1.0 / scale,
            max: offset + 255.0 / scale,
        },
    })
}

fn cmd_stack(a: &StackArgs) -> Result<Failures> {
    let frame = load_frame(&a.frame)?;
    let plane = match (&a.depth, a.spec.include_depth) {
        (Some(p), true) => Some(depth_plane(p, (frame.width(), frame.height()))?),
        (None, true) => bail!("{} needs --depth", a.spec),
        (_, false) => None,
    };
    let s = stack(&frame, plane.as_ref(), a.spec)?;
    write_stack(&s, &a.output)?;
    if let Some(dir) = &a.png_dir {
        std::fs::create_dir_all(dir)?;
        let stem = a.output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "stack".into());
        export_png(&s, dir, &stem)?;
    }
    Ok(0)
}

fn cmd_convert(a: &ConvertArgs) -> Result<Failures> {
    let frame = load_frame(&a.input)?;
    let colour = match a.to {
        Space::Rgb => ColourSpace::Rgb,
        Space::Hsv => ColourSpace::Hsv,
        Space::Lab => ColourSpace::Lab,
    };
    let s = stack(&frame, None, StackSpec::new(Some(colour), false))?;
    write_stack(&s, &a.output)?;
    if let Some(dir) = &a.png_dir {
        std::fs::create_dir_all(dir)?;
        let stem = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "frame".into());
        export_png(&s, dir, &stem)?;
    }
    Ok(0)
}

fn cmd_exposure(cli: &Cli, a: &ExposureArgs) -> Result<Failures> {
    let config = load_config(cli.config.as_deref())?;
    if !a.conditions.is_empty() && a.conditions.len() != a.dirs.len() {
        bail!("{} --condition names for {} directories", a.conditions.len(), a.dirs.len());
    }
    let mut reports: Vec<ExposureReport> = Vec::new();
    let mut failures = 0;
    for (k, dir) in a.dirs.iter().enumerate() {
        let name = a.conditions.get(k).cloned().unwrap_or_else(|| {
            dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string())
        });
        let mut acc = ExposureAccumulator::new();
        for f in list_frames(dir, config.frames.ordering, &config.frames.extensions)? {
            let id = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            match load_frame(&f) {
                Ok(frame) => {
                    acc.add(id, &frame)?;
                }
                Err(e) => {
                    log::warn!("skipping {}: {e}", f.display());
                    failures += 1;
                }
            }
        }
        reports.push(acc.finish(&name).with_context(|| format!("no readable frames in {}", dir.display()))?);
    }
    if a.per_frame {
        for r in &reports {
            println!("{}", r.to_table());
        }
    }
    print!("{}", condition_table(&reports));
    if let Some(p) = &a.json {
        std::fs::write(p, serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(failures)
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<Failures> {
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(m) = a.max_dets {
        config.eval.max_dets = m;
    }
    let mut gt = read_annotations(&a.annotations)?;
    let mut preds = read_predictions(&a.predictions, &gt)?;
    if let Some(n) = a.sample {
        let keep = gt.sample_images(n, a.seed.unwrap_or(config.seed));
        log::info!("evaluating {} of {} images", keep.len(), gt.images.len());
        gt = gt.restrict(&keep);
        preds = preds.restrict(&keep);
    }
    let report = mean_average_precision(&preds, &gt, &config.eval)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.json {
        std::fs::write(p, report.to_json())?;
    }
    Ok(0)
}

fn cmd_pipeline(cli: &Cli, a: &PipelineArgs) -> Result<Failures> {
    let mut config = load_config(cli.config.as_deref())?;
    a.overrides.apply(&mut config);
    if let Some(v) = &a.frames {
        config.frames.dir = v.clone();
    }
    if let Some(v) = &a.output {
        config.output_dir = v.clone();
    }
    if let Some(v) = a.stride {
        config.frames.stride = v;
    }
    if let Some(v) = a.workers {
        config.workers = v;
    }
    if let Some(o) = a.ordering {
        config.frames.ordering = match o {
            Ordering::Lexicographic => FrameOrdering::Lexicographic,
            Ordering::Natural => FrameOrdering::Natural,
        };
    }
    if let Some(specs) = &a.specs {
        config.stack.specs = if specs.len() == 1 && specs[0].eq_ignore_ascii_case("all") {
            StackSpec::ALL.to_vec()
        } else {
            specs.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
        };
    }
    if a.export_png {
        config.stack.export_png = true;
    }
    if let Some(c) = &a.condition {
        config.exposure.condition = c.clone();
    }
    let summary = run_pipeline(&config)?;
    for f in &summary.failures {
        eprintln!("triple {:05} ({}) failed at {}: {}", f.triple, f.center, f.stage, f.message);
    }
    println!(
        "{} triples: {} succeeded, {} failed; outputs in {}",
        summary.triples,
        summary.succeeded,
        summary.failed,
        config.output_dir.display()
    );
    Ok(summary.failed)
}

fn cmd_config_init(output: Option<&Path>, force: bool) -> Result<Failures> {
    let text = PipelineConfig::reference_toml();
    match output {
        Some(p) if p.exists() && !force => bail!("{} exists (use --force to overwrite)", p.display()),
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn run(cli: &Cli) -> Result<Failures> {
    match &cli.command {
        Command::Depth(a) => cmd_depth(cli, a),
        Command::Stack(a) => cmd_stack(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Exposure(a) => cmd_exposure(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Pipeline(a) => cmd_pipeline(cli, a),
        Command::Config {
            action: ConfigAction::Init { output, force },
        } => cmd_config_init(output.as_deref(), *force),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) if cli.allow_partial => {
            log::warn!("{n} failures ignored (--allow-partial)");
            ExitCode::SUCCESS
        }
        Ok(_) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
