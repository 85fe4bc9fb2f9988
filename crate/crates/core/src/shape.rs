//! Per-component measurements and the centroid-anchored radial signature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{BinaryMask, LabelMap};

/// Sub-pixel image coordinate. Pixel `(i, j)` has its center at `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> u32 {
        self.max_y - self.min_y + 1
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.min_x as f64
            && p.x <= self.max_x as f64
            && p.y >= self.min_y as f64
            && p.y <= self.max_y as f64
    }

    /// Grows by `margin` on every side, clipped to a `width × height` image.
    pub fn expand_clipped(&self, margin: u32, width: u32, height: u32) -> BBox {
        BBox {
            min_x: self.min_x.saturating_sub(margin),
            min_y: self.min_y.saturating_sub(margin),
            max_x: (self.max_x + margin).min(width - 1),
            max_y: (self.max_y + margin).min(height - 1),
        }
    }
}

/// Measurements of one connected blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: u32,
    pub area_px: u64,
    pub centroid: Point2,
    pub bbox: BBox,
    /// Number of 4-neighbor pixel edges separating the blob from anything else.
    pub perimeter_px: u64,
}

/// Boundary distances sampled around a center at a fixed angular step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSignature {
    pub center: Point2,
    pub step_deg: f64,
    /// Entry `k` is the distance along angle `k * step_deg`, counterclockwise
    /// as seen on screen (0° = +x, 90° = -y since rows grow downward).
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignatureStats {
    pub mean: f64,
    /// Population standard deviation over mean; `+inf` when the mean is 0.
    pub cv: f64,
}

pub fn measure_components(labels: &LabelMap) -> Vec<Component> {
    struct Acc {
        area: u64,
        sum_x: u64,
        sum_y: u64,
        bbox: BBox,
        perimeter: u64,
    }

    let (w, h) = (labels.width(), labels.height());
    let mut accs: Vec<Option<Acc>> = (0..labels.component_count()).map(|_| None).collect();
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(x, y);
            if l == 0 {
                continue;
            }
            let differs = |nx: i64, ny: i64| -> bool {
                nx < 0
                    || ny < 0
                    || nx >= w as i64
                    || ny >= h as i64
                    || labels.get(nx as u32, ny as u32) != l
            };
            let (xi, yi) = (x as i64, y as i64);
            let edges = [(xi - 1, yi), (xi + 1, yi), (xi, yi - 1), (xi, yi + 1)]
                .into_iter()
                .filter(|&(nx, ny)| differs(nx, ny))
                .count() as u64;
            let acc = accs[l as usize - 1].get_or_insert(Acc {
                area: 0,
                sum_x: 0,
                sum_y: 0,
                bbox: BBox {
                    min_x: x,
                    min_y: y,
                    max_x: x,
                    max_y: y,
                },
                perimeter: 0,
            });
            acc.area += 1;
            acc.sum_x += x as u64;
            acc.sum_y += y as u64;
            acc.bbox.min_x = acc.bbox.min_x.min(x);
            acc.bbox.max_x = acc.bbox.max_x.max(x);
            acc.bbox.min_y = acc.bbox.min_y.min(y);
            acc.bbox.max_y = acc.bbox.max_y.max(y);
            acc.perimeter += edges;
        }
    }

    accs.into_iter()
        .enumerate()
        .filter_map(|(i, acc)| {
            acc.map(|a| Component {
                label: i as u32 + 1,
                area_px: a.area,
                centroid: Point2::new(
                    a.sum_x as f64 / a.area as f64,
                    a.sum_y as f64 / a.area as f64,
                ),
                bbox: a.bbox,
                perimeter_px: a.perimeter,
            })
        })
        .collect()
}

/// `4πA / P²`: 1 for a continuous disk, smaller for elongated or ragged shapes.
pub fn circularity(area_px: f64, perimeter_px: f64) -> Result<f64> {
    if !(perimeter_px > 0.0) {
        return Err(Error::ZeroPerimeter);
    }
    Ok(4.0 * PI * area_px / (perimeter_px * perimeter_px))
}

/// Number of samples for an angular step, if the step divides 360°.
pub fn samples_per_turn(step_deg: f64) -> Option<usize> {
    if !(step_deg.is_finite() && step_deg > 0.0 && step_deg <= 360.0) {
        return None;
    }
    let n = 360.0 / step_deg;
    let rounded = n.round();
    ((n - rounded).abs() < 1e-9).then_some(rounded as usize)
}

/// Unit direction in image coordinates for an on-screen counterclockwise
/// angle. Quarter turns are applied exactly so that rotating a mask by 90°
/// permutes the signature without rounding drift.
fn direction(angle_deg: f64) -> (f64, f64) {
    let quarter = (angle_deg / 90.0).floor();
    let rest = angle_deg - quarter * 90.0;
    let (mut c, mut s) = if rest == 0.0 {
        (1.0, 0.0)
    } else {
        let r = rest.to_radians();
        (r.cos(), r.sin())
    };
    for _ in 0..(quarter as i64).rem_euclid(4) {
        (c, s) = (-s, c);
    }
    // y axis points down
    (c, -s)
}

const RAY_STEP_PX: f64 = 0.5;

/// Ray offsets are snapped to this grid so that exact half-pixel ties (e.g.
/// `t * cos 60°`) are detected as ties regardless of trig rounding.
const OFFSET_QUANTUM: f64 = (1u64 << 20) as f64;

fn snap(v: f64) -> f64 {
    (v * OFFSET_QUANTUM).round() / OFFSET_QUANTUM
}

/// Inclusive range of pixel indices a sample at coordinate `v` covers along
/// an axis where the ray moves with velocity `d`. Ties round back toward the
/// ray origin; a ray running exactly along a pixel edge covers both sides.
fn pixel_span(v: f64, d: f64) -> (f64, f64) {
    if d > 0.0 {
        let p = (v - 0.5).ceil();
        (p, p)
    } else if d < 0.0 {
        let p = (v + 0.5).floor();
        (p, p)
    } else if (v + 0.5).fract() == 0.0 {
        (v - 0.5, v + 0.5)
    } else {
        let p = (v + 0.5).floor();
        (p, p)
    }
}

/// Marches rays from `center` in 0.5 px increments to the image edge. Each
/// distance is to the farthest sample covering a foreground pixel, or 0 when
/// the ray sees no foreground. Sampling is exactly equivariant under integer
/// translations and quarter turns of the mask.
pub fn radial_signature(
    mask: &BinaryMask,
    center: Point2,
    step_deg: f64,
) -> Result<RadialSignature> {
    let n = samples_per_turn(step_deg).ok_or(Error::InvalidAngularStep(step_deg))?;
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    let inside = |v: f64, extent: f64| v >= -0.5 && v < extent - 0.5;
    if !(inside(center.x, w) && inside(center.y, h)) {
        return Err(Error::CenterOutOfBounds {
            x: center.x,
            y: center.y,
            width: mask.width(),
            height: mask.height(),
        });
    }

    let distances = (0..n)
        .map(|k| {
            let (dx, dy) = direction(k as f64 * step_deg);
            let mut farthest = 0.0;
            for i in 0u64.. {
                let t = i as f64 * RAY_STEP_PX;
                let (x0, x1) = pixel_span(center.x + snap(t * dx), dx);
                let (y0, y1) = pixel_span(center.y + snap(t * dy), dy);
                if x1 < 0.0 || y1 < 0.0 || x0 >= w || y0 >= h {
                    break;
                }
                let hit = (x0.max(0.0) as u32..=x1.min(w - 1.0) as u32)
                    .any(|x| (y0.max(0.0) as u32..=y1.min(h - 1.0) as u32).any(|y| mask.get(x, y)));
                if hit {
                    farthest = t;
                }
            }
            farthest
        })
        .collect();

    Ok(RadialSignature {
        center,
        step_deg,
        distances,
    })
}

pub fn signature_stats(sig: &RadialSignature) -> SignatureStats {
    let d = &sig.distances;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return SignatureStats {
            mean,
            cv: f64::INFINITY,
        };
    }
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    SignatureStats {
        mean,
        cv: var.sqrt() / mean,
    }
}
