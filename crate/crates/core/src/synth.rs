//! Seeded synthetic grove scenes with known palm positions, and scoring of
//! detections against that ground truth.
//!
//! Randomness comes from xoshiro256++ seeded through SplitMix64
//! (`rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64`). Object placement
//! uses the seeded stream; pixel texture and noise use a copy advanced with
//! `jump()` (2^128 steps), so changing the noise level never moves a tree.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::detector::RunReport;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::raster::{GeoMeta, Raster};
use crate::shape::Point2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroveSpec {
    pub width: u32,
    pub height: u32,
    pub gsd: GeoMeta,
    pub n_palms: usize,
    /// Canopy radius range (min, max) in pixels.
    pub palm_radius_range_px: (f64, f64),
    pub n_distractors: usize,
    /// Minimum center-to-center distance between palms.
    pub min_spacing_px: f64,
    /// Fraction of pixels replaced by salt-and-pepper noise.
    pub noise_density: f64,
    pub seed: u64,
}

impl Default for GroveSpec {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            gsd: GeoMeta::default(),
            n_palms: 25,
            palm_radius_range_px: (8.0, 12.0),
            n_distractors: 0,
            min_spacing_px: 30.0,
            noise_density: 0.0,
            seed: 42,
        }
    }
}

impl GroveSpec {
    pub fn validate(&self) -> Result<()> {
        let (rmin, rmax) = self.palm_radius_range_px;
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("image must be at least 1x1".into()));
        }
        if !(rmin.is_finite() && rmax.is_finite() && 0.0 < rmin && rmin <= rmax) {
            return Err(Error::InvalidSpec(format!(
                "palm radius range must satisfy 0 < min <= max, got ({rmin}, {rmax})"
            )));
        }
        if rmax >= self.width.min(self.height) as f64 / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "max palm radius {rmax} does not fit a {}x{} image",
                self.width, self.height
            )));
        }
        if !(self.min_spacing_px >= 2.0 * rmax) {
            return Err(Error::InvalidSpec(format!(
                "min spacing {} must be at least twice the max radius {rmax}",
                self.min_spacing_px
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_density) {
            return Err(Error::InvalidSpec(format!(
                "noise density must lie in [0, 1], got {}",
                self.noise_density
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalmTruth {
    pub x: f64,
    pub y: f64,
    pub radius_px: f64,
}

impl PalmTruth {
    pub fn center(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistractorTruth {
    pub x: f64,
    pub y: f64,
    pub approx_radius_px: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroveTruth {
    pub palms: Vec<PalmTruth>,
    pub distractors: Vec<DistractorTruth>,
}

/// On-disk truth: the planted objects plus the spec that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub palms: Vec<PalmTruth>,
    pub distractors: Vec<DistractorTruth>,
    pub spec: GroveSpec,
}

impl TruthFile {
    pub fn new(spec: &GroveSpec, truth: &GroveTruth) -> Self {
        Self {
            palms: truth.palms.clone(),
            distractors: truth.distractors.clone(),
            spec: spec.clone(),
        }
    }

    pub fn truth(&self) -> GroveTruth {
        GroveTruth {
            palms: self.palms.clone(),
            distractors: self.distractors.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth is serializable");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

const SOIL: [i32; 3] = [172, 112, 82];
const FROND: [i32; 3] = [55, 185, 45];
const FROND_SHADOW: [i32; 3] = [40, 88, 34];
const CORE_SHADOW: [i32; 3] = [34, 72, 28];
const DISTRACTOR: [i32; 3] = [78, 148, 60];

/// Self-shadow core radius as a fraction of the canopy radius.
const CORE_FRACTION: f64 = 0.2;
/// Fronds are unbroken out to this fraction; shadow gaps start beyond it.
const GAP_START_FRACTION: f64 = 0.35;
const GAP_HALF_WIDTH_PX: f64 = 0.6;
/// Outline dips to `1 - 2 * SCALLOP` of the radius between frond tips.
const SCALLOP: f64 = 0.04;
/// Distractor vertex radii are drawn from this range (times the nominal radius).
const DISTRACTOR_FACTOR: (f64, f64) = (0.3, 1.3);
const DISTRACTOR_MIN_CV: f64 = 0.35;
const CLEARANCE_PX: f64 = 4.0;
const ATTEMPTS_PER_OBJECT: usize = 1000;

struct Palm {
    truth: PalmTruth,
    fronds: u32,
    phase: f64,
}

struct Distractor {
    truth: DistractorTruth,
    /// Vertex radii in pixels at evenly spaced angles starting at `phase`.
    radii: Vec<f64>,
    phase: f64,
}

impl Distractor {
    fn extent(&self) -> f64 {
        self.radii.iter().cloned().fold(0.0, f64::max)
    }

    fn radius_at(&self, angle: f64) -> f64 {
        let n = self.radii.len();
        let pos = ((angle - self.phase) / TAU * n as f64).rem_euclid(n as f64);
        let k = pos.floor() as usize % n;
        let frac = pos - pos.floor();
        self.radii[k] * (1.0 - frac) + self.radii[(k + 1) % n] * frac
    }
}

fn shade(rng: &mut Xoshiro256PlusPlus, base: [i32; 3], offset: i32, jitter: i32) -> [u8; 3] {
    let j = rng.random_range(-jitter..=jitter);
    [
        (base[0] + j).clamp(0, 255) as u8,
        (base[1] + offset + j).clamp(0, 255) as u8,
        (base[2] + j).clamp(0, 255) as u8,
    ]
}

fn population_cv(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

fn place_palms(spec: &GroveSpec, rng: &mut Xoshiro256PlusPlus) -> Result<Vec<Palm>> {
    let (rmin, rmax) = spec.palm_radius_range_px;
    let budget = ATTEMPTS_PER_OBJECT * spec.n_palms;
    let mut palms: Vec<Palm> = Vec::with_capacity(spec.n_palms);
    let mut attempts = 0;
    while palms.len() < spec.n_palms {
        if attempts == budget {
            return Err(Error::SpecInfeasible(format!(
                "placed {} of {} palms with spacing {} px in {attempts} attempts",
                palms.len(),
                spec.n_palms,
                spec.min_spacing_px
            )));
        }
        attempts += 1;
        let r = if rmax > rmin {
            rng.random_range(rmin..=rmax)
        } else {
            rmin
        };
        let (Some(x), Some(y)) = (
            sample_center(rng, r + 2.0, spec.width),
            sample_center(rng, r + 2.0, spec.height),
        ) else {
            continue;
        };
        if palms
            .iter()
            .any(|p| (p.truth.x - x).hypot(p.truth.y - y) < spec.min_spacing_px)
        {
            continue;
        }
        palms.push(Palm {
            truth: PalmTruth { x, y, radius_px: r },
            fronds: rng.random_range(8..=12),
            phase: rng.random_range(0.0..TAU),
        });
    }
    Ok(palms)
}

/// Uniform center keeping `margin` pixels to both image edges.
fn sample_center(rng: &mut Xoshiro256PlusPlus, margin: f64, extent: u32) -> Option<f64> {
    let hi = extent as f64 - 1.0 - margin;
    (hi > margin).then(|| rng.random_range(margin..hi))
}

fn place_distractors(
    spec: &GroveSpec,
    palms: &[Palm],
    rng: &mut Xoshiro256PlusPlus,
) -> Result<Vec<Distractor>> {
    let (rmin, rmax) = spec.palm_radius_range_px;
    let budget = ATTEMPTS_PER_OBJECT * spec.n_distractors;
    let mut out: Vec<Distractor> = Vec::with_capacity(spec.n_distractors);
    let mut attempts = 0;
    while out.len() < spec.n_distractors {
        if attempts == budget {
            return Err(Error::SpecInfeasible(format!(
                "placed {} of {} distractors in {attempts} attempts",
                out.len(),
                spec.n_distractors
            )));
        }
        attempts += 1;
        let nominal = if rmax > rmin {
            rng.random_range(rmin..=rmax)
        } else {
            rmin
        };
        let n_vertices = rng.random_range(7..=11);
        let factors = loop {
            let f: Vec<f64> = (0..n_vertices)
                .map(|_| rng.random_range(DISTRACTOR_FACTOR.0..DISTRACTOR_FACTOR.1))
                .collect();
            if population_cv(&f) >= DISTRACTOR_MIN_CV {
                break f;
            }
        };
        let d = Distractor {
            truth: DistractorTruth {
                x: 0.0,
                y: 0.0,
                approx_radius_px: nominal,
            },
            radii: factors.iter().map(|f| f * nominal).collect(),
            phase: rng.random_range(0.0..TAU),
        };
        let extent = d.extent();
        let (Some(x), Some(y)) = (
            sample_center(rng, extent + 2.0, spec.width),
            sample_center(rng, extent + 2.0, spec.height),
        ) else {
            continue;
        };
        let near_palm = palms.iter().any(|p| {
            (p.truth.x - x).hypot(p.truth.y - y) < p.truth.radius_px + extent + CLEARANCE_PX
        });
        let near_other = out
            .iter()
            .any(|o| (o.truth.x - x).hypot(o.truth.y - y) < o.extent() + extent + CLEARANCE_PX);
        if near_palm || near_other {
            continue;
        }
        out.push(Distractor {
            truth: DistractorTruth { x, y, ..d.truth },
            ..d
        });
    }
    Ok(out)
}

/// Pixel range `[lo, hi]` covering `center ± reach`, clipped to the image.
fn span(center: f64, reach: f64, extent: u32) -> std::ops::RangeInclusive<u32> {
    let lo = (center - reach).floor().max(0.0) as u32;
    let hi = ((center + reach).ceil().max(0.0) as u32).min(extent - 1);
    lo..=hi
}

fn render_palm(img: &mut Raster, palm: &Palm, rng: &mut Xoshiro256PlusPlus) {
    let PalmTruth {
        x: cx,
        y: cy,
        radius_px: r,
    } = palm.truth;
    let sector = TAU / palm.fronds as f64;
    for py in span(cy, r + 1.0, img.height()) {
        for px in span(cx, r + 1.0, img.width()) {
            let (dx, dy) = (px as f64 - cx, py as f64 - cy);
            let rho = dx.hypot(dy);
            if rho > r {
                continue;
            }
            let color = if rho <= CORE_FRACTION * r {
                shade(rng, CORE_SHADOW, 0, 6)
            } else {
                let angle = (-dy).atan2(dx);
                // position within the frond sector; 0.5 is the frond axis
                let u = ((angle - palm.phase) / sector).rem_euclid(1.0);
                let envelope = r * (1.0 - SCALLOP + SCALLOP * (TAU * (u - 0.5)).cos());
                if rho > envelope {
                    continue;
                }
                let to_gap = (0.5 - (u - 0.5).abs()) * sector;
                let to_axis = (u - 0.5).abs() * sector;
                if rho > GAP_START_FRACTION * r && rho * to_gap.sin() < GAP_HALF_WIDTH_PX {
                    shade(rng, FROND_SHADOW, 0, 6)
                } else {
                    let midrib = if rho * to_axis.sin() < 0.7 { 10 } else { 0 };
                    let falloff = -(25.0 * rho / r) as i32;
                    shade(rng, FROND, falloff + midrib, 8)
                }
            };
            img.pixel_mut(px, py).copy_from_slice(&color);
        }
    }
}

fn render_distractor(img: &mut Raster, d: &Distractor, rng: &mut Xoshiro256PlusPlus) {
    let (cx, cy) = (d.truth.x, d.truth.y);
    let reach = d.extent() + 1.0;
    for py in span(cy, reach, img.height()) {
        for px in span(cx, reach, img.width()) {
            let (dx, dy) = (px as f64 - cx, py as f64 - cy);
            let rho = dx.hypot(dy);
            if rho <= d.radius_at((-dy).atan2(dx)) {
                let color = shade(rng, DISTRACTOR, 0, 8);
                img.pixel_mut(px, py).copy_from_slice(&color);
            }
        }
    }
}

/// Renders a grove and returns it with its ground truth. Identical specs
/// (seed included) give byte-identical output.
pub fn generate_grove(spec: &GroveSpec) -> Result<(Raster, GroveTruth)> {
    spec.validate()?;
    let mut placement = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let mut texture = placement.clone();
    texture.jump();

    let palms = place_palms(spec, &mut placement)?;
    let distractors = place_distractors(spec, &palms, &mut placement)?;

    let (w, h) = (spec.width, spec.height);
    let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
    for _ in 0..w as usize * h as usize {
        pixels.extend_from_slice(&shade(&mut texture, SOIL, 0, 4));
    }
    let mut img = Raster::new(w, h, 3, pixels)?.with_geo(Some(spec.gsd));

    for p in &palms {
        render_palm(&mut img, p, &mut texture);
    }
    for d in &distractors {
        render_distractor(&mut img, d, &mut texture);
    }
    if spec.noise_density > 0.0 {
        for y in 0..h {
            for x in 0..w {
                if texture.random::<f64>() < spec.noise_density {
                    let v = if texture.random::<bool>() { 255 } else { 0 };
                    img.pixel_mut(x, y).copy_from_slice(&[v, v, v]);
                }
            }
        }
    }

    let truth = GroveTruth {
        palms: palms.iter().map(|p| p.truth).collect(),
        distractors: distractors.iter().map(|d| d.truth).collect(),
    };
    Ok((img, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Greedy one-to-one matching by ascending distance; pairs farther than
/// `tol_px` never match. Returns the matched `(detection, truth)` index pairs.
pub fn match_points(detections: &[Point2], truth: &[Point2], tol_px: f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let dist = d.distance(t);
            if dist <= tol_px {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_used = vec![false; detections.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut matched = Vec::new();
    for (_, i, j) in pairs {
        if !det_used[i] && !truth_used[j] {
            det_used[i] = true;
            truth_used[j] = true;
            matched.push((i, j));
        }
    }
    matched
}

pub fn score(n_detections: usize, n_truth: usize, true_positives: usize) -> MatchResult {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    MatchResult {
        true_positives,
        false_positives: n_detections - true_positives,
        false_negatives: n_truth - true_positives,
        precision: ratio(true_positives, n_detections),
        recall: ratio(true_positives, n_truth),
    }
}

/// Scores the accepted detections of `report` against the planted palms.
pub fn match_detections(report: &RunReport, truth: &GroveTruth, tol_px: f64) -> MatchResult {
    let dets: Vec<Point2> = report.accepted().map(|d| d.component.centroid).collect();
    let palms: Vec<Point2> = truth.palms.iter().map(PalmTruth::center).collect();
    let tp = match_points(&dets, &palms, tol_px).len();
    score(dets.len(), palms.len(), tp)
}

/// Green strictly exceeds both red and blue.
pub fn is_green_dominant(px: &[u8]) -> bool {
    px[1] > px[0] && px[1] > px[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n_palms: usize, n_distractors: usize, noise: f64, seed: u64) -> GroveSpec {
        GroveSpec {
            n_palms,
            n_distractors,
            noise_density: noise,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn empty_scene_is_soil() {
        let (img, truth) = generate_grove(&spec(0, 0, 0.0, 1)).unwrap();
        assert!(truth.palms.is_empty() && truth.distractors.is_empty());
        assert!(img.pixels().chunks(3).all(|p| !is_green_dominant(p)));
        assert_eq!(img.geo, Some(GeoMeta::default()));
    }

    #[test]
    fn deterministic_for_equal_specs() {
        let s = spec(10, 5, 0.01, 7);
        let (a, ta) = generate_grove(&s).unwrap();
        let (b, tb) = generate_grove(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_grove(&spec(10, 5, 0.01, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_does_not_move_trees() {
        let (_, quiet) = generate_grove(&spec(10, 5, 0.0, 3)).unwrap();
        let (_, noisy) = generate_grove(&spec(10, 5, 0.05, 3)).unwrap();
        assert_eq!(quiet, noisy);
    }

    #[test]
    fn twenty_five_palms_respect_spacing() {
        let s = spec(25, 0, 0.0, 42);
        let (_, truth) = generate_grove(&s).unwrap();
        assert_eq!(truth.palms.len(), 25);
        for (i, a) in truth.palms.iter().enumerate() {
            assert!((8.0..=12.0).contains(&a.radius_px));
            for b in &truth.palms[i + 1..] {
                assert!(a.center().distance(&b.center()) >= 30.0);
            }
        }
    }

    #[test]
    fn infeasible_and_invalid_specs() {
        let crowded = GroveSpec {
            width: 64,
            height: 64,
            n_palms: 10_000,
            ..Default::default()
        };
        assert!(matches!(
            generate_grove(&crowded),
            Err(Error::SpecInfeasible(_))
        ));

        let tight = GroveSpec {
            min_spacing_px: 10.0,
            ..Default::default()
        };
        assert!(matches!(generate_grove(&tight), Err(Error::InvalidSpec(_))));

        let huge = GroveSpec {
            width: 20,
            height: 200,
            ..Default::default()
        };
        assert!(matches!(generate_grove(&huge), Err(Error::InvalidSpec(_))));

        let noisy = GroveSpec {
            noise_density: 1.5,
            ..Default::default()
        };
        assert!(matches!(generate_grove(&noisy), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn distractor_vertices_are_irregular() {
        let s = spec(5, 12, 0.0, 11);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(s.seed);
        let palms = place_palms(&s, &mut rng).unwrap();
        let ds = place_distractors(&s, &palms, &mut rng).unwrap();
        assert_eq!(ds.len(), 12);
        for d in &ds {
            assert!(population_cv(&d.radii) >= DISTRACTOR_MIN_CV);
            assert!((7..=11).contains(&d.radii.len()));
        }
    }

    #[test]
    fn palms_are_greener_inside_than_around() {
        let (img, truth) = generate_grove(&spec(25, 10, 0.002, 42)).unwrap();
        for p in &truth.palms {
            let (mut inside, mut n_in, mut ring, mut n_ring) = (0usize, 0usize, 0usize, 0usize);
            for y in span(p.y, 2.0 * p.radius_px, img.height()) {
                for x in span(p.x, 2.0 * p.radius_px, img.width()) {
                    let d = (x as f64 - p.x).hypot(y as f64 - p.y);
                    let green = is_green_dominant(img.pixel(x, y)) as usize;
                    if d <= p.radius_px {
                        inside += green;
                        n_in += 1;
                    } else if d <= 2.0 * p.radius_px {
                        ring += green;
                        n_ring += 1;
                    }
                }
            }
            assert!(inside as f64 / n_in as f64 > ring as f64 / n_ring as f64);
        }
    }

    #[test]
    fn matching_examples() {
        let truth = [Point2::new(10.0, 10.0), Point2::new(30.0, 10.0)];
        let exact = match_points(&truth, &truth, 5.0);
        assert_eq!(score(2, 2, exact.len()), score(2, 2, 2));
        assert_eq!(score(2, 2, 2).precision, 1.0);

        let empty = score(0, 0, match_points(&[], &[], 5.0).len());
        assert_eq!((empty.precision, empty.recall), (1.0, 1.0));

        // midway-ish detection within tolerance of only the first palm
        let det = [Point2::new(14.0, 10.0)];
        let m = score(1, 2, match_points(&det, &truth, 5.0).len());
        assert_eq!(
            (m.true_positives, m.false_negatives, m.false_positives),
            (1, 1, 0)
        );
    }

    #[test]
    fn truth_file_round_trip() {
        let s = spec(3, 1, 0.0, 5);
        let (_, truth) = generate_grove(&s).unwrap();
        let file = TruthFile::new(&s, &truth);
        let back: TruthFile = serde_json::from_str(&file.to_json()).unwrap();
        assert_eq!(back, file);
        let v: serde_json::Value = serde_json::from_str(&file.to_json()).unwrap();
        assert!(v["palms"][0]["radius_px"].is_f64());
        assert!(v["distractors"][0]["approx_radius_px"].is_f64());
        assert_eq!(v["spec"]["seed"], 5);
    }
}
