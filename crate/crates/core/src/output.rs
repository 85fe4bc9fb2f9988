//! Annotated images, crop export and CSV/JSON reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::detector::{Detection, RunReport};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::raster::Raster;
use crate::shape::Point2;

pub const ANNOTATION_RED: [u8; 3] = [255, 0, 0];

/// A circle drawn around one accepted detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub center: Point2,
    pub radius: f64,
    pub color: [u8; 3],
}

impl Annotation {
    /// Radius is the equivalent-disk pixel radius, but never below 2.
    pub fn for_detection(det: &Detection, color: [u8; 3]) -> Self {
        Self {
            center: det.component.centroid,
            radius: det.pixel_radius().max(2.0),
            color,
        }
    }
}

/// Integer pixel offsets of a midpoint-rule circle of radius `r`.
pub fn midpoint_circle(r: i64) -> Vec<(i64, i64)> {
    let mut pts = Vec::new();
    let (mut x, mut y, mut d) = (r, 0i64, 1 - r);
    while x >= y {
        for (px, py) in [
            (x, y),
            (y, x),
            (-y, x),
            (-x, y),
            (-x, -y),
            (-y, -x),
            (y, -x),
            (x, -y),
        ] {
            if !pts.contains(&(px, py)) {
                pts.push((px, py));
            }
        }
        y += 1;
        if d < 0 {
            d += 2 * y + 1;
        } else {
            x -= 1;
            d += 2 * (y - x) + 1;
        }
    }
    pts
}

/// Returns a copy of `img` with a 1-px circle drawn; out-of-bounds pixels are
/// clipped.
pub fn draw_circle(img: &Raster, ann: &Annotation) -> Result<Raster> {
    let mut out = img.clone();
    draw_circle_in_place(&mut out, ann)?;
    Ok(out)
}

fn draw_circle_in_place(img: &mut Raster, ann: &Annotation) -> Result<()> {
    if img.channels() < 3 {
        return Err(Error::WrongChannelCount {
            expected: "3 or 4",
            actual: img.channels(),
        });
    }
    let cx = ann.center.x.round() as i64;
    let cy = ann.center.y.round() as i64;
    let r = ann.radius.round().max(1.0) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    for (dx, dy) in midpoint_circle(r) {
        let (x, y) = (cx + dx, cy + dy);
        if x >= 0 && y >= 0 && x < w && y < h {
            img.pixel_mut(x as u32, y as u32)[..3].copy_from_slice(&ann.color);
        }
    }
    Ok(())
}

/// RGB copy of `img` with one circle per accepted detection.
pub fn annotate(img: &Raster, report: &RunReport, color: [u8; 3]) -> Raster {
    let mut out = img.to_rgb();
    for det in report.accepted() {
        draw_circle_in_place(&mut out, &Annotation::for_detection(det, color))
            .expect("RGB raster has three channels");
    }
    out
}

pub const INDEX_CSV: &str = "index.csv";

/// Writes one PNG per accepted detection (bbox grown by 2 px, clipped) plus
/// `index.csv`. Returns the crop paths in report order.
pub fn export_crops(img: &Raster, report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut index = String::from("file,centroid_x,centroid_y,area_px\n");
    let mut paths = Vec::new();
    for (i, det) in report.accepted().enumerate() {
        let c = &det.component;
        let b = c.bbox.expand_clipped(2, img.width(), img.height());
        let name = format!("palm_{:04}.png", i + 1);
        let path = out_dir.join(&name);
        img.crop(b.min_x, b.min_y, b.max_x, b.max_y)
            .save_png(&path)?;
        writeln!(
            index,
            "{name},{},{},{}",
            fmt_sig6(c.centroid.x),
            fmt_sig6(c.centroid.y),
            c.area_px
        )
        .unwrap();
        paths.push(path);
    }
    fsutil::write_atomic(&out_dir.join(INDEX_CSV), index.as_bytes())?;
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// Picks the format from a `.csv` / `.json` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(ReportFormat::Csv),
            "json" => Some(ReportFormat::Json),
            _ => None,
        }
    }
}

pub const CSV_HEADER: &str =
    "index,accepted,reject_reason,centroid_x,centroid_y,area_px,area_m2,equiv_diameter_m,circularity,signature_cv";

/// Formats with six significant digits, `%g` style: trailing zeros trimmed,
/// scientific notation outside `[1e-4, 1e6)`.
pub fn fmt_sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn round_sig6(v: f64) -> f64 {
    fmt_sig6(v).parse().unwrap_or(v)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig6).unwrap_or_default()
}

pub fn report_to_csv(report: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (i, d) in report.detections.iter().enumerate() {
        let c = &d.component;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            d.accepted,
            d.reject_reason.as_str(),
            fmt_sig6(c.centroid.x),
            fmt_sig6(c.centroid.y),
            c.area_px,
            opt(d.area_m2),
            opt(d.equivalent_diameter_m),
            fmt_sig6(d.circularity),
            opt(d.signature_cv),
        )
        .unwrap();
    }
    out
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig6(n.as_f64().expect("f64 number"));
            *v = serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to six significant digits. Field
/// order follows the struct definitions, so output is byte-stable.
pub fn report_to_json(report: &RunReport) -> String {
    let mut value = serde_json::to_value(report).expect("report is serializable");
    round_floats(&mut value);
    let mut s = serde_json::to_string_pretty(&value).expect("value is serializable");
    s.push('\n');
    s
}

pub fn parse_report_json(text: &str) -> serde_json::Result<RunReport> {
    serde_json::from_str(text)
}

pub fn write_report(report: &RunReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_to_csv(report),
        ReportFormat::Json => report_to_json(report),
    };
    fsutil::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{DetectorConfig, RejectReason};
    use crate::raster::GeoMeta;
    use crate::shape::{BBox, Component};

    fn detection(x: f64, y: f64, area: u64, accepted: bool, geo: bool) -> Detection {
        let r = (area as f64 / std::f64::consts::PI).sqrt().ceil() as u32;
        Detection {
            component: Component {
                label: 1,
                area_px: area,
                centroid: Point2::new(x, y),
                bbox: BBox {
                    min_x: (x as u32).saturating_sub(r),
                    min_y: (y as u32).saturating_sub(r),
                    max_x: x as u32 + r,
                    max_y: y as u32 + r,
                },
                perimeter_px: 4 * area,
            },
            area_m2: geo.then_some(area as f64 * 0.36),
            equivalent_diameter_m: geo.then_some(1.234567891),
            circularity: 0.61685027,
            signature_cv: accepted.then_some(0.0312345678),
            accepted,
            reject_reason: if accepted {
                RejectReason::None
            } else {
                RejectReason::NotCircular
            },
        }
    }

    fn report(dets: Vec<Detection>) -> RunReport {
        RunReport {
            source: "test".into(),
            count: dets.iter().filter(|d| d.accepted).count() as u64,
            gsd: Some(GeoMeta::default()),
            config: DetectorConfig::default(),
            detections: dets,
        }
    }

    #[test]
    fn midpoint_radius_two_matches_distance_rounding() {
        let mut got = midpoint_circle(2);
        got.sort();
        let mut expected: Vec<(i64, i64)> = (-3..=3)
            .flat_map(|x| (-3..=3).map(move |y| (x, y)))
            .filter(|&(x, y)| ((x * x + y * y) as f64).sqrt().round() == 2.0)
            .collect();
        expected.sort();
        assert_eq!(got, expected);
        assert_eq!(got.len(), 12);
    }

    #[test]
    fn circle_pixels_stay_near_radius() {
        for r in 1..40 {
            for (x, y) in midpoint_circle(r) {
                let d = ((x * x + y * y) as f64).sqrt();
                assert!((d - r as f64).abs() <= 1.0, "r={r} ({x},{y})");
            }
        }
    }

    #[test]
    fn draw_on_copy_and_clip() {
        let img = Raster::filled(9, 9, &[0, 0, 0]).unwrap();
        let ann = Annotation {
            center: Point2::new(4.0, 4.0),
            radius: 2.0,
            color: ANNOTATION_RED,
        };
        let out = draw_circle(&img, &ann).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0));
        let red = out
            .pixels()
            .chunks(3)
            .filter(|p| *p == ANNOTATION_RED)
            .count();
        assert_eq!(red, 12);

        let corner = Annotation {
            center: Point2::new(0.0, 0.0),
            radius: 5.0,
            color: ANNOTATION_RED,
        };
        let out = draw_circle(&img, &corner).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                if out.pixel(x, y) == ANNOTATION_RED {
                    let d = (x as f64).hypot(y as f64);
                    assert!((4.0..=6.0).contains(&d));
                }
            }
        }

        let gray = Raster::filled(4, 4, &[0]).unwrap();
        assert!(matches!(
            draw_circle(&gray, &ann),
            Err(Error::WrongChannelCount { .. })
        ));
    }

    #[test]
    fn annotation_radius_floor() {
        let small = detection(5.0, 5.0, 3, true, true);
        assert_eq!(
            Annotation::for_detection(&small, ANNOTATION_RED).radius,
            2.0
        );
        let big = detection(5.0, 5.0, 314, true, true);
        assert!((Annotation::for_detection(&big, ANNOTATION_RED).radius - 9.9977).abs() < 1e-3);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(36.0), "36");
        assert_eq!(fmt_sig6(0.61685027), "0.61685");
        assert_eq!(fmt_sig6(1.234567891), "1.23457");
        assert_eq!(fmt_sig6(123456.7), "123457");
        assert_eq!(fmt_sig6(999999.7), "1e+06");
        assert_eq!(fmt_sig6(0.0001234567), "0.000123457");
        assert_eq!(fmt_sig6(0.00001234567), "1.23457e-05");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
        assert_eq!(fmt_sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_layout() {
        let r = report(vec![
            detection(10.0, 20.5, 300, true, true),
            detection(3.0, 4.0, 50, false, false),
        ]);
        let csv = report_to_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "1,true,none,10,20.5,300,108,1.23457,0.61685,0.0312346"
        );
        assert_eq!(lines[2], "2,false,not_circular,3,4,50,,,0.61685,");
    }

    #[test]
    fn json_count_and_byte_stability() {
        let r = report(vec![
            detection(10.0, 20.5, 300, true, true),
            detection(3.0, 4.0, 50, false, false),
        ]);
        let json = report_to_json(&r);
        let v: Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["count"], 1);
        let parsed = parse_report_json(&json).unwrap();
        assert_eq!(report_to_json(&parsed), json);
    }

    #[test]
    fn report_format_from_extension() {
        assert_eq!(
            ReportFormat::from_path(Path::new("a.JSON")),
            Some(ReportFormat::Json)
        );
        assert_eq!(
            ReportFormat::from_path(Path::new("a.csv")),
            Some(ReportFormat::Csv)
        );
        assert_eq!(ReportFormat::from_path(Path::new("a.txt")), None);
    }

    #[test]
    fn crops_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let img = Raster::filled(40, 40, &[1, 2, 3]).unwrap();
        let r = report(vec![
            detection(10.0, 10.0, 50, true, true),
            detection(20.0, 20.0, 50, false, true),
            detection(1.0, 1.0, 12, true, true),
            detection(30.0, 30.0, 50, true, true),
        ]);
        let paths = export_crops(&img, &r, dir.path()).unwrap();
        let names: Vec<String> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into())
            .collect();
        assert_eq!(names, ["palm_0001.png", "palm_0002.png", "palm_0003.png"]);
        let index = std::fs::read_to_string(dir.path().join(INDEX_CSV)).unwrap();
        assert_eq!(index.lines().count(), 4);
        assert_eq!(index.lines().nth(2).unwrap(), "palm_0002.png,1,1,12");
        // bbox touching the origin is clipped, not shifted
        let edge = crate::raster::load_image(&paths[1]).unwrap();
        assert!(edge.width() >= 1 && edge.height() >= 1);
        assert_eq!((edge.width(), edge.height()), (6, 6));
    }

    #[test]
    fn crops_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let img = Raster::filled(10, 10, &[0, 0, 0]).unwrap();
        let paths = export_crops(&img, &report(vec![]), dir.path()).unwrap();
        assert!(paths.is_empty());
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
        let index = std::fs::read_to_string(dir.path().join(INDEX_CSV)).unwrap();
        assert_eq!(index, "file,centroid_x,centroid_y,area_px\n");
    }
}
