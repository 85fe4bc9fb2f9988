//! End-to-end canopy detection: band selection, binarization, morphology,
//! labeling, measurement and filtering.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, equivalent_diameter_m, pixels_to_area_m2, GeoMeta, GrayRaster, Raster};
use crate::segment::{self, BinaryMask, Connectivity, LabelMap, StructuringElement};
use crate::shape::{self, Component, Point2};

/// Which intensity image is binarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Green,
    Luma,
    /// Green for color input, luma for single-channel input.
    #[default]
    Auto,
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "green" => Ok(Band::Green),
            "luma" => Ok(Band::Luma),
            "auto" => Ok(Band::Auto),
            other => Err(Error::Config(format!(
                "unknown band {other:?} (expected green, luma or auto)"
            ))),
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Green => "green",
            Band::Luma => "luma",
            Band::Auto => "auto",
        })
    }
}

/// Binarization threshold. Serialized as `"otsu"` or the decimal level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ThresholdMethod {
    #[default]
    Otsu,
    Fixed(u8),
}

impl FromStr for ThresholdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "otsu" {
            return Ok(ThresholdMethod::Otsu);
        }
        s.parse::<u8>()
            .map(ThresholdMethod::Fixed)
            .map_err(|_| Error::Config(format!("threshold must be \"otsu\" or 0..=255, got {s:?}")))
    }
}

impl TryFrom<String> for ThresholdMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ThresholdMethod> for String {
    fn from(t: ThresholdMethod) -> String {
        t.to_string()
    }
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdMethod::Otsu => f.write_str("otsu"),
            ThresholdMethod::Fixed(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub band: Band,
    pub threshold: ThresholdMethod,
    /// Treat dark pixels as canopy.
    pub invert: bool,
    pub se: StructuringElement,
    pub connectivity: Connectivity,
    pub min_canopy_diameter_m: f64,
    pub max_canopy_diameter_m: f64,
    pub min_circularity: f64,
    pub max_signature_cv: f64,
    pub signature_step_deg: f64,
    pub noise_min_area_px: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            band: Band::Auto,
            threshold: ThresholdMethod::Otsu,
            invert: false,
            se: StructuringElement::Square3,
            connectivity: Connectivity::Eight,
            min_canopy_diameter_m: 3.0,
            max_canopy_diameter_m: 16.0,
            min_circularity: 0.45,
            max_signature_cv: 0.1,
            signature_step_deg: 30.0,
            noise_min_area_px: 8,
        }
    }
}

impl DetectorConfig {
    pub const KEYS: [&'static str; 11] = [
        "band",
        "threshold",
        "invert",
        "se",
        "connectivity",
        "min_canopy_diameter_m",
        "max_canopy_diameter_m",
        "min_circularity",
        "max_signature_cv",
        "signature_step_deg",
        "noise_min_area_px",
    ];

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.min_canopy_diameter_m, self.max_canopy_diameter_m);
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::Config(format!(
                "canopy diameter bounds must satisfy 0 < min < max, got {lo}..{hi}"
            )));
        }
        if !(0.0..=1.2).contains(&self.min_circularity) {
            return Err(Error::Config(format!(
                "min_circularity must lie in [0, 1.2], got {}",
                self.min_circularity
            )));
        }
        if !(self.max_signature_cv >= 0.0) {
            return Err(Error::Config(format!(
                "max_signature_cv must be non-negative, got {}",
                self.max_signature_cv
            )));
        }
        if shape::samples_per_turn(self.signature_step_deg).is_none() {
            return Err(Error::Config(format!(
                "signature_step_deg must divide 360, got {}",
                self.signature_step_deg
            )));
        }
        Ok(())
    }

    /// Sets one field from its textual config-file value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "band" => self.band = value.parse()?,
            "threshold" => self.threshold = value.parse()?,
            "invert" => {
                self.invert = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => {
                        return Err(Error::Config(format!(
                            "invert: expected a boolean, got {value:?}"
                        )))
                    }
                }
            }
            "se" => self.se = value.parse()?,
            "connectivity" => self.connectivity = value.parse()?,
            "min_canopy_diameter_m" => self.min_canopy_diameter_m = num(key, value)?,
            "max_canopy_diameter_m" => self.max_canopy_diameter_m = num(key, value)?,
            "min_circularity" => self.min_circularity = num(key, value)?,
            "max_signature_cv" => self.max_signature_cv = num(key, value)?,
            "signature_step_deg" => self.signature_step_deg = num(key, value)?,
            "noise_min_area_px" => self.noise_min_area_px = num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

/// Parses flat `key = value` text. `#` starts a comment; blank lines are ignored.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got {raw:?}", n + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    None,
    TooSmall,
    TooLarge,
    NotCircular,
    IrregularSignature,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::None => "none",
            RejectReason::TooSmall => "too_small",
            RejectReason::TooLarge => "too_large",
            RejectReason::NotCircular => "not_circular",
            RejectReason::IrregularSignature => "irregular_signature",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub component: Component,
    pub area_m2: Option<f64>,
    pub equivalent_diameter_m: Option<f64>,
    pub circularity: f64,
    /// Only computed for components inside the area window; `None` otherwise
    /// (and for signatures with zero mean).
    pub signature_cv: Option<f64>,
    pub accepted: bool,
    pub reject_reason: RejectReason,
}

impl Detection {
    /// Equivalent-disk radius in pixels.
    pub fn pixel_radius(&self) -> f64 {
        (self.component.area_px as f64 / PI).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub source: String,
    pub count: u64,
    pub gsd: Option<GeoMeta>,
    pub config: DetectorConfig,
    pub detections: Vec<Detection>,
}

impl RunReport {
    pub fn accepted(&self) -> impl Iterator<Item = &Detection> {
        self.detections.iter().filter(|d| d.accepted)
    }
}

/// Disk-equivalent pixel-area window for the configured canopy diameters.
pub fn area_window_px(cfg: &DetectorConfig, geo: &GeoMeta) -> (u64, u64) {
    let disk_px = |d: f64| PI * (d / 2.0).powi(2) / geo.pixel_area_m2();
    (
        disk_px(cfg.min_canopy_diameter_m).ceil() as u64,
        disk_px(cfg.max_canopy_diameter_m).floor() as u64,
    )
}

fn select_band(img: &Raster, band: Band) -> Result<GrayRaster> {
    match band {
        Band::Green => raster::extract_green_band(img),
        Band::Luma => Ok(raster::to_grayscale(img)),
        Band::Auto if img.channels() >= 3 => raster::extract_green_band(img),
        Band::Auto => Ok(raster::to_grayscale(img)),
    }
}

/// Binary canopy mask after thresholding, closing, hole filling and noise
/// removal; the stage right before labeling.
pub fn segment_canopy(img: &Raster, cfg: &DetectorConfig) -> Result<BinaryMask> {
    let gray = select_band(img, cfg.band)?;
    let t = match cfg.threshold {
        ThresholdMethod::Otsu => segment::threshold_otsu(&gray)?,
        ThresholdMethod::Fixed(t) => t,
    };
    let mut mask = segment::threshold_global(&gray, t);
    if cfg.invert {
        mask = mask.complement();
    }
    let mask = segment::close(&mask, cfg.se);
    let mask = segment::fill_holes(&mask);
    Ok(segment::remove_small(
        &mask,
        cfg.noise_min_area_px,
        cfg.connectivity,
    ))
}

fn component_mask(labels: &LabelMap, c: &Component) -> BinaryMask {
    let b = c.bbox;
    BinaryMask::from_fn(b.width(), b.height(), |x, y| {
        labels.get(b.min_x + x, b.min_y + y) == c.label
    })
}

/// Runs the full pipeline on one image.
pub fn detect(img: &Raster, cfg: &DetectorConfig) -> Result<RunReport> {
    cfg.validate()?;
    let geo = img.geo.ok_or(Error::MissingGeo)?;
    let (min_px, max_px) = area_window_px(cfg, &geo);

    let mask = segment_canopy(img, cfg)?;
    let labels = segment::label_components(&mask, cfg.connectivity);
    let components = shape::measure_components(&labels);

    let mut detections = Vec::with_capacity(components.len());
    for c in components {
        let circularity = shape::circularity(c.area_px as f64, c.perimeter_px as f64)?;
        let mut signature_cv = None;
        let reject_reason = if c.area_px < min_px {
            RejectReason::TooSmall
        } else if c.area_px > max_px {
            RejectReason::TooLarge
        } else if circularity < cfg.min_circularity {
            RejectReason::NotCircular
        } else {
            let local = component_mask(&labels, &c);
            let center = Point2::new(
                c.centroid.x - c.bbox.min_x as f64,
                c.centroid.y - c.bbox.min_y as f64,
            );
            let sig = shape::radial_signature(&local, center, cfg.signature_step_deg)?;
            let cv = shape::signature_stats(&sig).cv;
            signature_cv = cv.is_finite().then_some(cv);
            if cv <= cfg.max_signature_cv {
                RejectReason::None
            } else {
                RejectReason::IrregularSignature
            }
        };
        let area_m2 = pixels_to_area_m2(c.area_px, &geo);
        detections.push(Detection {
            area_m2: Some(area_m2),
            equivalent_diameter_m: Some(equivalent_diameter_m(area_m2)),
            circularity,
            signature_cv,
            accepted: reject_reason == RejectReason::None,
            reject_reason,
            component: c,
        });
    }

    Ok(RunReport {
        source: String::new(),
        count: detections.iter().filter(|d| d.accepted).count() as u64,
        gsd: Some(geo),
        config: cfg.clone(),
        detections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(g: f64) -> GeoMeta {
        GeoMeta::square(g).unwrap()
    }

    fn cfg_with(min_d: f64, max_d: f64) -> DetectorConfig {
        DetectorConfig {
            min_canopy_diameter_m: min_d,
            max_canopy_diameter_m: max_d,
            ..Default::default()
        }
    }

    #[test]
    fn area_window_examples() {
        // pi*1.5^2/0.36 = 19.63, pi*4.5^2/0.36 = 176.71
        assert_eq!(area_window_px(&cfg_with(3.0, 9.0), &geo(0.6)), (20, 176));
        // pi = 3.14, 4*pi = 12.57
        assert_eq!(area_window_px(&cfg_with(2.0, 4.0), &geo(1.0)), (4, 12));
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(matches!(
            cfg_with(6.0, 6.0).validate(),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            cfg_with(0.0, 6.0).validate(),
            Err(Error::Config(_))
        ));
        let mut cfg = DetectorConfig {
            signature_step_deg: 50.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.signature_step_deg = 30.0;
        cfg.min_circularity = 1.5;
        assert!(cfg.validate().is_err());
        assert!(DetectorConfig::default().validate().is_ok());
    }

    #[test]
    fn black_image_has_no_detections() {
        let img = Raster::filled(64, 64, &[0, 0, 0])
            .unwrap()
            .with_geo(Some(geo(0.6)));
        let r = detect(&img, &DetectorConfig::default()).unwrap();
        assert_eq!(r.count, 0);
        assert!(r.detections.is_empty());
    }

    #[test]
    fn missing_geo() {
        let img = Raster::filled(8, 8, &[0, 0, 0]).unwrap();
        assert!(matches!(
            detect(&img, &DetectorConfig::default()),
            Err(Error::MissingGeo)
        ));
    }

    #[test]
    fn gray_input_uses_luma() {
        let mut img = Raster::filled(40, 40, &[20])
            .unwrap()
            .with_geo(Some(geo(0.6)));
        for y in 0..40 {
            for x in 0..40 {
                if (x as f64 - 20.0).hypot(y as f64 - 20.0) <= 8.0 {
                    img.pixel_mut(x, y)[0] = 200;
                }
            }
        }
        let r = detect(&img, &DetectorConfig::default()).unwrap();
        assert_eq!(r.count, 1);
        let green = DetectorConfig {
            band: Band::Green,
            ..Default::default()
        };
        assert!(matches!(
            detect(&img, &green),
            Err(Error::WrongChannelCount { .. })
        ));
    }

    #[test]
    fn invert_flips_polarity() {
        let mut img = Raster::filled(40, 40, &[220])
            .unwrap()
            .with_geo(Some(geo(0.6)));
        for y in 0..40 {
            for x in 0..40 {
                if (x as f64 - 20.0).hypot(y as f64 - 20.0) <= 8.0 {
                    img.pixel_mut(x, y)[0] = 30;
                }
            }
        }
        let plain = detect(&img, &DetectorConfig::default()).unwrap();
        assert_eq!(plain.count, 0);
        let inv = DetectorConfig {
            invert: true,
            ..Default::default()
        };
        let r = detect(&img, &inv).unwrap();
        assert_eq!(r.count, 1);
        let c = &r.accepted().next().unwrap().component;
        assert_eq!(c.centroid, Point2::new(20.0, 20.0));
    }

    #[test]
    fn kv_parsing() {
        let text = "# detector tuning\nband = green\nthreshold=120  # fixed\n\nse = cross3\n";
        let kv = parse_kv(text).unwrap();
        assert_eq!(kv.len(), 3);
        let mut cfg = DetectorConfig::default();
        for (k, v) in &kv {
            cfg.set(k, v).unwrap();
        }
        assert_eq!(cfg.band, Band::Green);
        assert_eq!(cfg.threshold, ThresholdMethod::Fixed(120));
        assert_eq!(cfg.se, StructuringElement::Cross3);
        assert!(parse_kv("no equals sign").is_err());
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("threshold", "300").is_err());
        assert!(cfg.set("invert", "maybe").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let values = [
            "luma", "otsu", "true", "square5", "4", "2", "10", "0.3", "0.4", "45", "5",
        ];
        let mut cfg = DetectorConfig::default();
        for (k, v) in DetectorConfig::KEYS.iter().zip(values) {
            cfg.set(k, v).unwrap();
        }
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.connectivity, Connectivity::Four);
        assert_eq!(cfg.noise_min_area_px, 5);
    }

    #[test]
    fn threshold_serializes_as_text() {
        assert_eq!(
            serde_json::to_string(&ThresholdMethod::Otsu).unwrap(),
            "\"otsu\""
        );
        assert_eq!(
            serde_json::to_string(&ThresholdMethod::Fixed(7)).unwrap(),
            "\"7\""
        );
        let t: ThresholdMethod = serde_json::from_str("\"200\"").unwrap();
        assert_eq!(t, ThresholdMethod::Fixed(200));
    }
}
