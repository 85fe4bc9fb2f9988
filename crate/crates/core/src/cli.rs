//! Command-line front end.
//!
//! Only contracted output goes to stdout (counts, eval scores); every
//! diagnostic goes to stderr. Exit codes: 0 success, 1 runtime or I/O
//! failure, 2 invalid arguments or spec.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::detector::{self, Band, DetectorConfig, RunReport, ThresholdMethod};
use crate::error::Error;
use crate::output::{self, ReportFormat, ANNOTATION_RED};
use crate::raster::{self, GeoMeta, Raster};
use crate::segment::{Connectivity, StructuringElement};
use crate::synth::{self, GroveSpec, TruthFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "palmcount",
    version,
    about = "Detect and count palm trees in overhead imagery"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the number of palms in an image
    Count(CountArgs),
    /// Draw a circle around every detected palm
    Annotate(AnnotateArgs),
    /// Export one cropped PNG per detected palm plus index.csv
    Crops(CropsArgs),
    /// Render a synthetic grove with ground truth
    Synth(SynthArgs),
    /// Score a JSON report against a ground-truth file
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Ground sample distance in meters/pixel: `0.6` or `0.6,0.5` (x,y)
    #[arg(long)]
    pub gsd: Option<String>,
    /// key=value config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fixed binarization level 0-255, or `otsu`
    #[arg(long)]
    pub threshold: Option<ThresholdMethod>,
    /// Treat dark pixels as canopy
    #[arg(long)]
    pub invert: bool,
    /// green, luma or auto
    #[arg(long)]
    pub band: Option<Band>,
    /// square3, cross3 or square5
    #[arg(long)]
    pub se: Option<StructuringElement>,
    /// 4 or 8
    #[arg(long)]
    pub connectivity: Option<Connectivity>,
    /// Smallest canopy diameter in meters
    #[arg(long)]
    pub min_diameter: Option<f64>,
    /// Largest canopy diameter in meters
    #[arg(long)]
    pub max_diameter: Option<f64>,
    /// Smallest accepted 4πA/P² (edge-count perimeter)
    #[arg(long)]
    pub min_circularity: Option<f64>,
    /// Largest accepted std/mean of the radial signature
    #[arg(long)]
    pub max_signature_cv: Option<f64>,
    /// Angular step of the radial signature in degrees
    #[arg(long)]
    pub signature_step: Option<f64>,
    /// Blobs smaller than this many pixels are removed before labeling
    #[arg(long)]
    pub noise_min_area: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Input PNG or TIFF (8-bit gray, RGB or RGBA)
    pub image: PathBuf,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Write the full report (.json or .csv)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Input PNG or TIFF (8-bit gray, RGB or RGBA)
    pub image: PathBuf,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Annotated PNG to write
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the report (.json or .csv)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CropsArgs {
    /// Input PNG or TIFF (8-bit gray, RGB or RGBA)
    pub image: PathBuf,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 25)]
    pub palms: usize,
    #[arg(long, default_value_t = 512)]
    pub width: u32,
    #[arg(long, default_value_t = 512)]
    pub height: u32,
    #[arg(long, default_value_t = GeoMeta::DEFAULT_GSD_M)]
    pub gsd: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub distractors: usize,
    /// Salt-and-pepper density in [0, 1]
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 8.0)]
    pub min_radius: f64,
    #[arg(long, default_value_t = 12.0)]
    pub max_radius: f64,
    /// Minimum palm center spacing in pixels
    #[arg(long, default_value_t = 30.0)]
    pub spacing: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Matching tolerance in pixels
    #[arg(long, default_value_t = 5.0)]
    pub tol_px: f64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::InvalidGeo(_)
            | Error::MissingGeo
            | Error::InvalidSpec(_)
            | Error::SpecInfeasible(_)
            | Error::InvalidAngularStep(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Count(a) => {
            let format = a.out.as_deref().map(report_format).transpose()?;
            let (_, report) = load_and_detect(&a.image, &a.detector, stderr)?;
            if let (Some(path), Some(format)) = (&a.out, format) {
                output::write_report(&report, format, path)?;
            }
            print_count(stdout, &report)
        }
        Command::Annotate(a) => {
            let format = a.report.as_deref().map(report_format).transpose()?;
            let (img, report) = load_and_detect(&a.image, &a.detector, stderr)?;
            output::annotate(&img, &report, ANNOTATION_RED).save_png(&a.out)?;
            if let (Some(path), Some(format)) = (&a.report, format) {
                output::write_report(&report, format, path)?;
            }
            print_count(stdout, &report)
        }
        Command::Crops(a) => {
            let (img, report) = load_and_detect(&a.image, &a.detector, stderr)?;
            output::export_crops(&img, &report, &a.out_dir)?;
            print_count(stdout, &report)
        }
        Command::Synth(a) => {
            let spec = GroveSpec {
                width: a.width,
                height: a.height,
                gsd: GeoMeta::square(a.gsd)?,
                n_palms: a.palms,
                palm_radius_range_px: (a.min_radius, a.max_radius),
                n_distractors: a.distractors,
                min_spacing_px: a.spacing,
                noise_density: a.noise,
                seed: a.seed,
            };
            let (img, truth) = synth::generate_grove(&spec)?;
            img.save_png(&a.out)?;
            TruthFile::new(&spec, &truth).write(&a.truth)?;
            let _ = writeln!(
                stderr,
                "wrote {} ({} palms, {} distractors) and {}",
                a.out.display(),
                truth.palms.len(),
                truth.distractors.len(),
                a.truth.display()
            );
            Ok(())
        }
        Command::Eval(a) => {
            if !(a.tol_px > 0.0) {
                return Err(Failure::Usage(format!(
                    "--tol-px must be positive, got {}",
                    a.tol_px
                )));
            }
            let text = std::fs::read_to_string(&a.report)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", a.report.display())))?;
            let report = output::parse_report_json(&text).map_err(|e| {
                Failure::Runtime(format!("{}: invalid report: {e}", a.report.display()))
            })?;
            let truth = TruthFile::read(&a.truth)?.truth();
            let m = synth::match_detections(&report, &truth, a.tol_px);
            writeln!(
                stdout,
                "{} {} {} {:.6} {:.6}",
                m.true_positives, m.false_positives, m.false_negatives, m.precision, m.recall
            )
            .map_err(|e| Failure::Runtime(e.to_string()))
        }
    }
}

fn print_count(stdout: &mut dyn Write, report: &RunReport) -> CliResult<()> {
    writeln!(stdout, "{}", report.count).map_err(|e| Failure::Runtime(e.to_string()))
}

fn report_format(path: &Path) -> CliResult<ReportFormat> {
    ReportFormat::from_path(path).ok_or_else(|| {
        Failure::Usage(format!(
            "report path {} must end in .json or .csv",
            path.display()
        ))
    })
}

fn parse_gsd_flag(text: &str) -> CliResult<GeoMeta> {
    Ok(GeoMeta::parse_sidecar(&text.replace(',', " "))?)
}

/// Sidecar next to the image: `<image>.gsd` (e.g. `grove.png.gsd`), falling
/// back to the image path with its extension replaced (`grove.gsd`).
pub fn sidecar_paths(image: &Path) -> [PathBuf; 2] {
    let mut appended = image.as_os_str().to_owned();
    appended.push(".gsd");
    [PathBuf::from(appended), image.with_extension("gsd")]
}

/// Detector config and GSD after applying, lowest to highest precedence:
/// built-in defaults, the `.gsd` sidecar, the config file, then flags.
fn resolve_settings(
    image: &Path,
    args: &DetectorArgs,
    stderr: &mut dyn Write,
) -> CliResult<(DetectorConfig, GeoMeta)> {
    let mut cfg = DetectorConfig::default();
    let mut gsd = None;

    for path in sidecar_paths(image) {
        if path.is_file() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            gsd = Some(GeoMeta::parse_sidecar(&text)?);
            break;
        }
    }

    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        for (key, value) in detector::parse_kv(&text)? {
            if key == "gsd" {
                gsd = Some(parse_gsd_flag(&value)?);
            } else {
                cfg.set(&key, &value)?;
            }
        }
    }

    if let Some(g) = &args.gsd {
        gsd = Some(parse_gsd_flag(g)?);
    }
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    if args.invert {
        cfg.invert = true;
    }
    if let Some(b) = args.band {
        cfg.band = b;
    }
    if let Some(se) = args.se {
        cfg.se = se;
    }
    if let Some(c) = args.connectivity {
        cfg.connectivity = c;
    }
    if let Some(v) = args.min_diameter {
        cfg.min_canopy_diameter_m = v;
    }
    if let Some(v) = args.max_diameter {
        cfg.max_canopy_diameter_m = v;
    }
    if let Some(v) = args.min_circularity {
        cfg.min_circularity = v;
    }
    if let Some(v) = args.max_signature_cv {
        cfg.max_signature_cv = v;
    }
    if let Some(v) = args.signature_step {
        cfg.signature_step_deg = v;
    }
    if let Some(v) = args.noise_min_area {
        cfg.noise_min_area_px = v;
    }
    cfg.validate()?;

    let gsd = gsd.unwrap_or_else(|| {
        let _ = writeln!(
            stderr,
            "note: no --gsd flag, config gsd or .gsd sidecar; assuming {} m/pixel",
            GeoMeta::DEFAULT_GSD_M
        );
        GeoMeta::default()
    });
    Ok((cfg, gsd))
}

fn load_and_detect(
    image: &Path,
    args: &DetectorArgs,
    stderr: &mut dyn Write,
) -> CliResult<(Raster, RunReport)> {
    let (cfg, gsd) = resolve_settings(image, args, stderr)?;
    let img = raster::load_image(image)?.with_geo(Some(gsd));
    let mut report = detector::detect(&img, &cfg)?;
    report.source = image.display().to_string();
    Ok((img, report))
}
