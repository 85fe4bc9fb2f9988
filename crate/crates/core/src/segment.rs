//! Binarization, binary morphology and connected-component labeling.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GrayRaster;

/// Foreground map with one flag per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::InvalidRaster(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width as usize * height as usize,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Parses rows of `0`/`1` (or `.`/`#`) characters; whitespace-only lines are skipped.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let rows: Vec<Vec<bool>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.chars().map(|c| matches!(c, '1' | '#')).collect())
            .collect();
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        if rows.iter().any(|r| r.len() as u32 != width) {
            return Err(Error::InvalidRaster("ragged mask rows".into()));
        }
        Self::from_bits(width, height, rows.concat())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Out-of-bounds reads as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as u64) < self.width as u64
            && (y as u64) < self.height as u64
            && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Morphological neighborhood. Every variant is symmetric about its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructuringElement {
    #[default]
    Square3,
    Cross3,
    Square5,
}

impl StructuringElement {
    pub fn offsets(self) -> &'static [(i32, i32)] {
        const SQUARE3: [(i32, i32); 9] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (0, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        const CROSS3: [(i32, i32); 5] = [(0, -1), (-1, 0), (0, 0), (1, 0), (0, 1)];
        const SQUARE5: [(i32, i32); 25] = {
            let mut out = [(0, 0); 25];
            let mut i = 0;
            while i < 25 {
                out[i] = ((i % 5) as i32 - 2, (i / 5) as i32 - 2);
                i += 1;
            }
            out
        };
        match self {
            StructuringElement::Square3 => &SQUARE3,
            StructuringElement::Cross3 => &CROSS3,
            StructuringElement::Square5 => &SQUARE5,
        }
    }

    pub fn radius(self) -> u32 {
        match self {
            StructuringElement::Square5 => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for StructuringElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructuringElement::Square3 => "square3",
            StructuringElement::Cross3 => "cross3",
            StructuringElement::Square5 => "square5",
        })
    }
}

impl FromStr for StructuringElement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square3" => Ok(Self::Square3),
            "cross3" => Ok(Self::Cross3),
            "square5" => Ok(Self::Square5),
            other => Err(Error::Config(format!(
                "unknown structuring element {other:?} (expected square3, cross3 or square5)"
            ))),
        }
    }
}

/// Pixel adjacency used for labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::Config(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: u8 = s
            .parse()
            .map_err(|_| Error::Config(format!("connectivity must be 4 or 8, got {s:?}")))?;
        Self::try_from(v)
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// Per-pixel component labels; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    component_count: u32,
}

impl LabelMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn component_count(&self) -> u32 {
        self.component_count
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// Mask of the pixels carrying `label`.
    pub fn mask_of(&self, label: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

/// Foreground iff value is strictly greater than `t`.
pub fn threshold_global(img: &GrayRaster, t: u8) -> BinaryMask {
    BinaryMask {
        width: img.width(),
        height: img.height(),
        bits: img.values().iter().map(|&v| v > t).collect(),
    }
}

/// Otsu threshold: the `t` maximizing between-class variance of the split
/// `{<= t}` / `{> t}`, smallest `t` on ties. A single-valued image returns
/// that value.
pub fn threshold_otsu(img: &GrayRaster) -> Result<u8> {
    otsu_from_histogram(&img.histogram()).ok_or(Error::EmptyImage)
}

/// Otsu on a raw 256-bin histogram. `None` when the histogram is empty.
pub fn otsu_from_histogram(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let mut occupied = hist.iter().enumerate().filter(|(_, &c)| c > 0);
    let first = occupied.next().map(|(v, _)| v as u8);
    if occupied.next().is_none() {
        return first;
    }

    // Between-class variance is (n0*S - N*s0)^2 / (n0*n1*N^2). The common
    // N^2 is dropped and the remaining ratio compared exactly as
    // quotient + remainder so ties resolve deterministically.
    let sum: u128 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as u128 * c as u128)
        .sum();
    let n = total as u128;
    let exact = n <= 1 << 26;

    let mut best_t = 0u8;
    let mut best: Option<Score> = None;
    let (mut n0, mut s0) = (0u128, 0u128);
    for (t, &c) in hist.iter().enumerate() {
        n0 += c as u128;
        s0 += t as u128 * c as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (n0 * sum).abs_diff(n * s0);
        let den = n0 * n1;
        let score = if exact {
            let num = diff * diff;
            Score::Exact(num / den, num % den, den)
        } else {
            let d = diff as f64;
            Score::Approx(d * d / den as f64)
        };
        if best.as_ref().is_none_or(|b| score.beats(b)) {
            best = Some(score);
            best_t = t as u8;
        }
    }
    Some(best_t)
}

enum Score {
    /// quotient, remainder, denominator
    Exact(u128, u128, u128),
    Approx(f64),
}

impl Score {
    fn beats(&self, other: &Score) -> bool {
        match (self, other) {
            (Score::Exact(q, r, d), Score::Exact(oq, or, od)) => {
                q > oq || (q == oq && r * od > or * d)
            }
            (Score::Approx(a), Score::Approx(b)) => a > b,
            _ => unreachable!("scores of one histogram share a representation"),
        }
    }
}

/// What lies beyond the image edge for a morphological operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    Background,
    Foreground,
}

/// Output is foreground iff every neighbor under `se` is foreground;
/// out-of-bounds neighbors count as background.
pub fn erode(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    apply_se(mask, se, Border::Background, true)
}

/// Output is foreground iff any in-bounds neighbor under `se` is foreground.
pub fn dilate(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    apply_se(mask, se, Border::Background, false)
}

/// Dilation with an explicit convention for out-of-bounds neighbors.
pub fn dilate_with_border(mask: &BinaryMask, se: StructuringElement, border: Border) -> BinaryMask {
    apply_se(mask, se, border, false)
}

fn apply_se(mask: &BinaryMask, se: StructuringElement, border: Border, all: bool) -> BinaryMask {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let outside = border == Border::Foreground;
    let offsets = se.offsets();
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            let mut probe = offsets.iter().map(|&(dx, dy)| {
                let (nx, ny) = (x + dx as i64, y + dy as i64);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    outside
                } else {
                    mask.bits[(ny * w + nx) as usize]
                }
            });
            let v = if all {
                probe.all(|b| b)
            } else {
                probe.any(|b| b)
            };
            out.bits[(y * w + x) as usize] = v;
        }
    }
    out
}

/// Morphological closing: dilate, then erode.
pub fn close(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    erode(&dilate(mask, se), se)
}

/// Turns background regions that are not 4-connected to the border into
/// foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |i: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if !mask.bits[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, &mut outside, &mut queue);
        seed((h - 1) * w + x, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(y * w, &mut outside, &mut queue);
        seed(y * w + w - 1, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        if x > 0 {
            seed(i - 1, &mut outside, &mut queue);
        }
        if x + 1 < w {
            seed(i + 1, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(i - w, &mut outside, &mut queue);
        }
        if y + 1 < h {
            seed(i + w, &mut outside, &mut queue);
        }
    }
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits: outside.into_iter().map(|o| !o).collect(),
    }
}

/// Clears every component with fewer than `min_area` pixels.
pub fn remove_small(mask: &BinaryMask, min_area: u64, connectivity: Connectivity) -> BinaryMask {
    if min_area <= 1 {
        return mask.clone();
    }
    let labels = label_components(mask, connectivity);
    let mut areas = vec![0u64; labels.component_count as usize + 1];
    for &l in &labels.labels {
        areas[l as usize] += 1;
    }
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits: labels
            .labels
            .iter()
            .map(|&l| l != 0 && areas[l as usize] >= min_area)
            .collect(),
    }
}

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone, Default)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a singleton set and returns its id.
    pub fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.size.push(1);
        id
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: u32, b: u32) -> u32 {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        ra
    }
}

/// Two-pass connected-component labeling. Final labels are numbered in
/// raster-scan order of each component's first pixel.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMap {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut provisional = vec![0u32; w * h];
    let mut sets = UnionFind::new();
    sets.make_set(); // id 0 is background

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.bits[i] {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut k = 0;
            let mut push = |label: u32| {
                if label != 0 {
                    neighbors[k] = label;
                    k += 1;
                }
            };
            if x > 0 {
                push(provisional[i - 1]);
            }
            if y > 0 {
                push(provisional[i - w]);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(provisional[i - w - 1]);
                    }
                    if x + 1 < w {
                        push(provisional[i - w + 1]);
                    }
                }
            }
            provisional[i] = if k == 0 {
                sets.make_set()
            } else {
                let first = neighbors[0];
                for &other in &neighbors[1..k] {
                    sets.union(first, other);
                }
                first
            };
        }
    }

    let mut final_label = vec![0u32; sets.parent.len()];
    let mut next = 0u32;
    for l in provisional.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = sets.find(*l) as usize;
        if final_label[root] == 0 {
            next += 1;
            final_label[root] = next;
        }
        *l = final_label[root];
    }

    LabelMap {
        width: mask.width,
        height: mask.height,
        labels: provisional,
        component_count: next,
    }
}
