//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use palmcount::segment::{BinaryMask, Connectivity, LabelMap};

/// Flood-fill labeling; labels follow raster order of each component's first pixel.
pub fn bfs_labels(mask: &BinaryMask, connectivity: Connectivity) -> Vec<u32> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut labels = vec![0u32; (w * h) as usize];
    let neighbors: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ],
    };
    let mut next = 0;
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if !mask.bits()[i] || labels[i] != 0 {
                continue;
            }
            next += 1;
            labels[i] = next;
            let mut queue = VecDeque::from([(x, y)]);
            while let Some((cx, cy)) = queue.pop_front() {
                for &(dx, dy) in neighbors {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if mask.bits()[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
    }
    labels
}

/// True when both labelings induce the same partition of the pixels.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        (x == 0) == (y == 0) && *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x
    })
}

pub fn labelmap_matches_bfs(map: &LabelMap, mask: &BinaryMask, c: Connectivity) -> bool {
    let oracle = bfs_labels(mask, c);
    let distinct = map
        .labels()
        .iter()
        .filter(|&&l| l != 0)
        .collect::<std::collections::HashSet<_>>()
        .len();
    same_partition(map.labels(), &oracle) && distinct == map.component_count() as usize
}

/// Otsu by definition: maximize `w0 * w1 * (mu0 - mu1)^2` in exact rational
/// arithmetic over every split `{<= t} / {> t}` with both classes non-empty,
/// smallest `t` on ties. A histogram with one occupied bin yields that bin.
pub fn otsu_brute_force(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let occupied: Vec<usize> = (0..256).filter(|&v| hist[v] > 0).collect();
    if occupied.len() == 1 {
        return Some(occupied[0] as u8);
    }
    let big = |v: u64| BigRational::from_integer(BigInt::from(v));
    let n = big(total);
    let mut best: Option<(BigRational, u8)> = None;
    for t in 0..256usize {
        let (mut n0, mut s0, mut n1, mut s1) = (0u64, 0u64, 0u64, 0u64);
        for (v, &c) in hist.iter().enumerate() {
            if v <= t {
                n0 += c;
                s0 += v as u64 * c;
            } else {
                n1 += c;
                s1 += v as u64 * c;
            }
        }
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let w0 = big(n0) / &n;
        let w1 = big(n1) / &n;
        let diff = big(s0) / big(n0) - big(s1) / big(n1);
        let var = w0 * w1 * &diff * &diff;
        if best.as_ref().is_none_or(|(b, _)| var > *b) {
            best = Some((var, t as u8));
        }
    }
    debug_assert!(best.as_ref().is_none_or(|(b, _)| !b.is_zero()));
    best.map(|(_, t)| t)
}

/// Pixels whose centers lie within `r` of `(cx, cy)`.
pub fn disk_mask(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        dx * dx + dy * dy <= r * r
    })
}

/// Axis-aligned block of pixels `x0..=x1` by `y0..=y1`.
pub fn rect_mask(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
    })
}

/// Distance from `(cx, cy)` to the edge of the continuous box
/// `[x0, x1] x [y0, y1]` along the on-screen counterclockwise angle.
pub fn ray_box_exit(cx: f64, cy: f64, angle_deg: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let a = angle_deg.to_radians();
    let (dx, dy) = (a.cos(), -a.sin());
    let axis = |c: f64, d: f64, lo: f64, hi: f64| {
        if d > 1e-12 {
            (hi - c) / d
        } else if d < -1e-12 {
            (lo - c) / d
        } else {
            f64::INFINITY
        }
    };
    axis(cx, dx, x0, x1).min(axis(cy, dy, y0, y1))
}

/// Rotates a mask 90° counterclockwise as seen on screen: `(x, y)` moves to
/// `(y, w - 1 - x)`.
pub fn rotate_ccw(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(h, w, |x, y| mask.get(w - 1 - y, x))
}

/// Shifts content by `(dx, dy)` into a larger canvas.
pub fn translate(mask: &BinaryMask, dx: u32, dy: u32, w: u32, h: u32) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        x >= dx
            && y >= dy
            && x - dx < mask.width()
            && y - dy < mask.height()
            && mask.get(x - dx, y - dy)
    })
}

/// Deterministic pseudo-random mask with the given foreground probability.
pub fn random_mask(rng: &mut impl rand::Rng, w: u32, h: u32, p: f64) -> BinaryMask {
    let bits = (0..w * h).map(|_| rng.random_bool(p)).collect();
    BinaryMask::from_bits(w, h, bits).unwrap()
}
