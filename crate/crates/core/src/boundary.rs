//! Category boundaries for posed images.
//!
//! Borders are traced with the Suzuki-Abe border-following algorithm
//! (8-connected foreground, 4-connected background), rasterized per category,
//! optionally thickened by a Chebyshev dilation and painted over the source
//! image in the category color.

use crate::error::{Error, Result};
use crate::io::{CategoryPalette, DetectionBox, Image, LabelRaster};

/// Default stroke half-width in pixels.
pub const DEFAULT_DILATION_RADIUS: u32 = 1;

/// Binary raster; any nonzero value is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::validation("mask buffer size does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Foreground mask of one category in a label raster.
    pub fn of_category(labels: &LabelRaster, category: u8) -> Self {
        Self {
            width: labels.width,
            height: labels.height,
            data: labels.labels.iter().map(|&l| (l == category) as u8).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorderKind {
    /// Between a foreground component and the background surrounding it.
    Outer,
    /// Between a foreground component and a background region it encloses.
    Hole,
}

/// A closed border; consecutive points (and last-to-first) are 8-adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    /// `(x, y)` pixel coordinates.
    pub points: Vec<(u32, u32)>,
    pub kind: BorderKind,
    /// Index of the enclosing border in the returned list.
    pub parent: Option<usize>,
    pub category: u8,
}

// Neighbor offsets, counterclockwise on screen (y grows downward), starting east.
const DIRS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
const EAST: usize = 0;
const WEST: usize = 4;

fn direction_of(dx: isize, dy: isize) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("points are 8-adjacent")
}

/// Traces every outer and hole border of `mask`. Pixels outside the raster
/// count as background.
pub fn trace_borders(mask: &Mask) -> Vec<Contour> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let pw = w + 2;
    // Zero-padded working copy; traced pixels receive signed border numbers.
    let mut g = vec![0i32; pw * (h + 2)];
    for y in 0..h {
        for x in 0..w {
            if mask.data[y * w + x] != 0 {
                g[(y + 1) * pw + x + 1] = 1;
            }
        }
    }
    let at = |x: usize, y: usize| y * pw + x;
    let step = |p: usize, d: usize| -> usize {
        let (dx, dy) = DIRS[d];
        (p as isize + dy * pw as isize + dx) as usize
    };

    let mut contours: Vec<Contour> = Vec::new();
    // kinds[n - 2] / parents[n - 2] describe border number n; number 1 is the frame.
    let mut nbd: i32 = 1;

    for y in 1..=h {
        let mut lnbd: i32 = 1;
        for x in 1..=w {
            let start = at(x, y);
            let v = g[start];
            let (kind, from) = if v == 1 && g[start - 1] == 0 {
                (BorderKind::Outer, WEST)
            } else if v >= 1 && g[start + 1] == 0 {
                if v > 1 {
                    lnbd = v;
                }
                (BorderKind::Hole, EAST)
            } else {
                if v != 1 && v != 0 {
                    lnbd = v.abs();
                }
                continue;
            };
            nbd += 1;

            let parent = if lnbd <= 1 {
                None
            } else {
                let prev = (lnbd - 2) as usize;
                if (kind == BorderKind::Outer) == (contours[prev].kind == BorderKind::Outer) {
                    contours[prev].parent
                } else {
                    Some(prev)
                }
            };

            let mut points = Vec::new();
            let first = (0..8)
                .map(|k| (from + 8 - k) % 8)
                .find(|&d| g[step(start, d)] != 0);
            match first {
                None => {
                    g[start] = -nbd;
                    points.push((x as u32 - 1, y as u32 - 1));
                }
                Some(d1) => {
                    let p1 = step(start, d1);
                    let mut p2 = p1;
                    let mut p3 = start;
                    loop {
                        points.push(((p3 % pw) as u32 - 1, (p3 / pw) as u32 - 1));
                        let back = direction_of(
                            (p2 % pw) as isize - (p3 % pw) as isize,
                            (p2 / pw) as isize - (p3 / pw) as isize,
                        );
                        let mut east_zero = false;
                        let mut p4 = p2;
                        for k in 1..=8 {
                            let d = (back + k) % 8;
                            let q = step(p3, d);
                            if g[q] != 0 {
                                p4 = q;
                                break;
                            }
                            if d == EAST {
                                east_zero = true;
                            }
                        }
                        if east_zero {
                            g[p3] = -nbd;
                        } else if g[p3] == 1 {
                            g[p3] = nbd;
                        }
                        if p4 == start && p3 == p1 {
                            break;
                        }
                        p2 = p3;
                        p3 = p4;
                    }
                }
            }
            contours.push(Contour {
                points,
                kind,
                parent,
                category: 1,
            });
            if g[start] != 1 {
                lnbd = g[start].abs();
            }
        }
    }
    contours
}

/// Borders of every palette category present in `labels`, in category order.
pub fn trace_category_borders(labels: &LabelRaster, palette: &CategoryPalette) -> Result<Vec<Contour>> {
    labels.validate(palette.len())?;
    let mut out = Vec::new();
    for id in 1..=palette.len() as u8 {
        if !labels.labels.contains(&id) {
            continue;
        }
        let offset = out.len();
        out.extend(
            trace_borders(&Mask::of_category(labels, id))
                .into_iter()
                .map(|mut c| {
                    c.category = id;
                    c.parent = c.parent.map(|p| p + offset);
                    c
                }),
        );
    }
    Ok(out)
}

/// Per-category binary boundary rasters; `maps[k - 1]` belongs to category `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMaps {
    pub width: u32,
    pub height: u32,
    pub maps: Vec<Vec<u8>>,
}

impl BoundaryMaps {
    pub fn empty(width: u32, height: u32, categories: usize) -> Self {
        Self {
            width,
            height,
            maps: vec![vec![0; width as usize * height as usize]; categories],
        }
    }

    #[inline]
    pub fn get(&self, category: u8, x: u32, y: u32) -> bool {
        self.maps[category as usize - 1][y as usize * self.width as usize + x as usize] != 0
    }

    /// Lowest category id whose map is set at pixel index `i`.
    #[inline]
    fn winner(&self, i: usize) -> Option<u8> {
        self.maps
            .iter()
            .position(|m| m[i] != 0)
            .map(|k| (k + 1) as u8)
    }
}

/// Max filter with a `(2r + 1)²` square footprint, applied separably.
pub fn dilate_chebyshev(data: &[u8], width: u32, height: u32, radius: u32) -> Vec<u8> {
    if radius == 0 {
        return data.to_vec();
    }
    let (w, h, r) = (width as usize, height as usize, radius as usize);
    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        let src = &data[y * w..(y + 1) * w];
        // Distance to the nearest set pixel on the left, updated in a sweep.
        let mut last: Option<usize> = None;
        for x in 0..w {
            if src[x] != 0 {
                last = Some(x);
            }
            if last.is_some_and(|l| x - l <= r) {
                rows[y * w + x] = 1;
            }
        }
        let mut next: Option<usize> = None;
        for x in (0..w).rev() {
            if src[x] != 0 {
                next = Some(x);
            }
            if next.is_some_and(|n| n - x <= r) {
                rows[y * w + x] = 1;
            }
        }
    }
    let mut out = vec![0u8; w * h];
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if rows[y * w + x] != 0 {
                last = Some(y);
            }
            if last.is_some_and(|l| y - l <= r) {
                out[y * w + x] = 1;
            }
        }
        let mut next: Option<usize> = None;
        for y in (0..h).rev() {
            if rows[y * w + x] != 0 {
                next = Some(y);
            }
            if next.is_some_and(|n| n - y <= r) {
                out[y * w + x] = 1;
            }
        }
    }
    out
}

/// Traces each category's borders, rasterizes them and dilates by `dilation_radius`.
pub fn build_boundary_maps(
    labels: &LabelRaster,
    palette: &CategoryPalette,
    dilation_radius: u32,
) -> Result<BoundaryMaps> {
    labels.validate(palette.len())?;
    let mut maps = BoundaryMaps::empty(labels.width, labels.height, palette.len());
    let w = labels.width as usize;
    for id in 1..=palette.len() as u8 {
        if !labels.labels.contains(&id) {
            continue;
        }
        let raster = &mut maps.maps[id as usize - 1];
        for contour in trace_borders(&Mask::of_category(labels, id)) {
            for (x, y) in contour.points {
                raster[y as usize * w + x as usize] = 1;
            }
        }
        if dilation_radius > 0 {
            *raster = dilate_chebyshev(raster, labels.width, labels.height, dilation_radius);
        }
    }
    Ok(maps)
}

/// Paints boundary pixels in their category color; every other pixel is
/// copied unchanged. Where several categories overlap the lowest id wins.
pub fn overlay_boundaries(
    image: &Image,
    maps: &BoundaryMaps,
    palette: &CategoryPalette,
) -> Result<Image> {
    if (image.width, image.height) != (maps.width, maps.height) {
        return Err(Error::validation(format!(
            "image is {}x{} but boundary maps are {}x{}",
            image.width, image.height, maps.width, maps.height
        )));
    }
    if maps.maps.len() != palette.len() {
        return Err(Error::validation(format!(
            "{} boundary maps for a palette of {} categories",
            maps.maps.len(),
            palette.len()
        )));
    }
    let mut out = image.clone();
    for i in 0..image.width as usize * image.height as usize {
        if let Some(c) = maps.winner(i) {
            out.pixels[3 * i..3 * i + 3].copy_from_slice(&palette.color(c));
        }
    }
    Ok(out)
}

/// Alternative priors painted onto posed images for ablation runs.
#[derive(Debug, Clone, Copy)]
pub enum AblationPrior<'a> {
    /// A 3x3 block of the argmax category's color at each box center.
    CenterPoint(&'a [DetectionBox]),
    /// Every labeled pixel painted in its category color.
    FilledMask(&'a LabelRaster),
}

pub fn overlay_ablation(
    image: &Image,
    prior: AblationPrior<'_>,
    palette: &CategoryPalette,
) -> Result<Image> {
    let mut out = image.clone();
    match prior {
        AblationPrior::CenterPoint(boxes) => {
            let mut marks: Vec<(u8, i64, i64)> = boxes
                .iter()
                .filter_map(|b| {
                    let id = b.argmax()?;
                    let cx = ((b.x_min + b.x_max) / 2.0).floor() as i64;
                    let cy = ((b.y_min + b.y_max) / 2.0).floor() as i64;
                    Some((id, cx, cy))
                })
                .collect();
            if let Some(&(id, ..)) = marks.iter().find(|m| m.0 as usize > palette.len()) {
                return Err(Error::validation(format!(
                    "box category {id} exceeds palette size {}",
                    palette.len()
                )));
            }
            // Paint higher ids first so the lowest id wins on overlap.
            marks.sort_by(|a, b| b.0.cmp(&a.0));
            for (id, cx, cy) in marks {
                for y in cy - 1..=cy + 1 {
                    for x in cx - 1..=cx + 1 {
                        if x >= 0 && y >= 0 && x < image.width as i64 && y < image.height as i64 {
                            out.set(x as u32, y as u32, palette.color(id));
                        }
                    }
                }
            }
        }
        AblationPrior::FilledMask(labels) => {
            if (labels.width, labels.height) != (image.width, image.height) {
                return Err(Error::validation("label raster and image dimensions differ"));
            }
            labels.validate(palette.len())?;
            for (i, &l) in labels.labels.iter().enumerate() {
                if l != 0 {
                    out.pixels[3 * i..3 * i + 3].copy_from_slice(&palette.color(l));
                }
            }
        }
    }
    Ok(out)
}
