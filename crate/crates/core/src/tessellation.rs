//! Raster Voronoi tessellation and tile rendering.
//!
//! Each pixel is labeled with the site nearest to its center, by squared
//! Euclidean distance in `f64`. Exact ties go to the lowest site index. The
//! brute-force and bucket-grid assignments share [`dist2`] and that tie rule, so
//! they agree label for label.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::density::SiteSet;
use crate::error::{Error, Result};
use crate::raster::{self, Image, Rgb};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelGrid {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if labels.len() != width * height {
            return Err(Error::Invalid(format!(
                "label grid has {} entries, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        for l in &self.labels {
            h.update(l.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// 16-bit grayscale PNG of raw label indices.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let data = self
            .labels
            .iter()
            .map(|&l| {
                u16::try_from(l).map_err(|_| Error::Invalid(format!("label {l} does not fit a 16-bit label dump")))
            })
            .collect::<Result<Vec<u16>>>()?;
        fs::write(path, raster::encode_u16_png(self.width, self.height, data)).map_err(|e| Error::io(path, e))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let (w, h, values) = raster::load_gray_png(path.as_ref())?;
        Self::new(w, h, values.into_iter().map(u32::from).collect())
    }
}

#[inline]
fn dist2(cx: f64, cy: f64, (sx, sy): (f64, f64)) -> f64 {
    let dx = cx - sx;
    let dy = cy - sy;
    dx * dx + dy * dy
}

#[inline]
fn center(i: usize) -> f64 {
    i as f64 + 0.5
}

fn check_sites(sites: &SiteSet, width: usize, height: usize) -> Result<()> {
    if sites.is_empty() {
        return Err(Error::Invalid("site set is empty".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    if sites.len() > u32::MAX as usize {
        return Err(Error::Invalid("too many sites for 32-bit labels".into()));
    }
    if let Some(p) = sites.sites.iter().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Invalid(format!("site {p:?} is not finite")));
    }
    Ok(())
}

/// Reference assignment: every pixel against every site.
pub fn voronoi_assign_bruteforce(sites: &SiteSet, width: usize, height: usize) -> Result<LabelGrid> {
    check_sites(sites, width, height)?;
    let mut labels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (cx, cy) = (center(x), center(y));
            let mut best = 0usize;
            let mut best_d = dist2(cx, cy, sites.sites[0]);
            for (i, &s) in sites.sites.iter().enumerate().skip(1) {
                let d = dist2(cx, cy, s);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            labels.push(best as u32);
        }
    }
    LabelGrid::new(width, height, labels)
}

/// Uniform bucket grid over the site bounding box, buckets listing site
/// indices in ascending order.
struct BucketGrid {
    origin: (f64, f64),
    cell: f64,
    cols: usize,
    rows: usize,
    starts: Vec<usize>,
    items: Vec<u32>,
}

impl BucketGrid {
    fn build(points: &[(f64, f64)], width: usize, height: usize) -> Self {
        let (mut min_x, mut min_y) = (0.0f64, 0.0f64);
        let (mut max_x, mut max_y) = (width as f64, height as f64);
        for &(x, y) in points {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
        let (span_x, span_y) = ((max_x - min_x).max(1.0), (max_y - min_y).max(1.0));
        // about two sites per bucket
        let cell = ((span_x * span_y * 2.0 / points.len() as f64).sqrt()).max(1e-6);
        let cols = ((span_x / cell).floor() as usize + 1).min(4096);
        let rows = ((span_y / cell).floor() as usize + 1).min(4096);
        let cell = cell.max(span_x / cols as f64).max(span_y / rows as f64);

        let mut grid = Self {
            origin: (min_x, min_y),
            cell,
            cols,
            rows,
            starts: vec![0; cols * rows + 1],
            items: vec![0; points.len()],
        };
        let cells: Vec<usize> = points.iter().map(|&(x, y)| grid.cell_of(x, y)).collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for i in 0..cols * rows {
            grid.starts[i + 1] += grid.starts[i];
        }
        let mut fill = grid.starts.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.items[fill[c]] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    fn col_of(&self, x: f64) -> usize {
        (((x - self.origin.0) / self.cell).floor().max(0.0) as usize).min(self.cols - 1)
    }

    fn row_of(&self, y: f64) -> usize {
        (((y - self.origin.1) / self.cell).floor().max(0.0) as usize).min(self.rows - 1)
    }

    fn cell_of(&self, x: f64, y: f64) -> usize {
        self.row_of(y) * self.cols + self.col_of(x)
    }

    fn bucket(&self, col: usize, row: usize) -> &[u32] {
        let c = row * self.cols + col;
        &self.items[self.starts[c]..self.starts[c + 1]]
    }

    /// Nearest site to `(cx, cy)`, lowest index on exact ties.
    ///
    /// Rings of buckets are scanned outward. After ring `r`, every unscanned
    /// site is at least the distance from the query to the edge of the scanned
    /// block away. The search stops once that bound, shrunk by a relative
    /// margin covering bucket-index rounding, strictly exceeds the best distance.
    fn nearest(&self, points: &[(f64, f64)], cx: f64, cy: f64) -> u32 {
        let (qc, qr) = (self.col_of(cx), self.row_of(cy));
        let mut best = u32::MAX;
        let mut best_d = f64::INFINITY;
        let consider = |i: u32, best: &mut u32, best_d: &mut f64| {
            let d = dist2(cx, cy, points[i as usize]);
            if d < *best_d || (d == *best_d && i < *best) {
                *best = i;
                *best_d = d;
            }
        };
        let max_ring = self.cols.max(self.rows);
        for r in 0..=max_ring {
            let (c0, c1) = (qc as isize - r as isize, qc as isize + r as isize);
            let (r0, r1) = (qr as isize - r as isize, qr as isize + r as isize);
            for row in r0.max(0)..=r1.min(self.rows as isize - 1) {
                let on_edge_row = row == r0 || row == r1;
                let step = if on_edge_row { 1 } else { (c1 - c0).max(1) };
                let mut col = c0;
                while col <= c1 {
                    if col >= 0 && col < self.cols as isize {
                        for &i in self.bucket(col as usize, row as usize) {
                            consider(i, &mut best, &mut best_d);
                        }
                    }
                    col += step;
                }
            }
            let covers_all = c0 <= 0 && r0 <= 0 && c1 >= self.cols as isize - 1 && r1 >= self.rows as isize - 1;
            if covers_all {
                break;
            }
            if best != u32::MAX {
                let gap = |lo: isize, hi: isize, q: f64, origin: f64, n: usize| -> f64 {
                    let left = if lo <= 0 {
                        f64::INFINITY
                    } else {
                        q - (origin + lo as f64 * self.cell)
                    };
                    let right = if hi >= n as isize - 1 {
                        f64::INFINITY
                    } else {
                        (origin + (hi + 1) as f64 * self.cell) - q
                    };
                    left.min(right)
                };
                let bound = gap(c0, c1, cx, self.origin.0, self.cols).min(gap(r0, r1, cy, self.origin.1, self.rows));
                let bound = (bound * (1.0 - 1e-9) - 1e-9).max(0.0);
                if bound * bound > best_d {
                    break;
                }
            }
        }
        best
    }
}

/// Accelerated assignment; identical output to [`voronoi_assign_bruteforce`].
pub fn voronoi_assign(sites: &SiteSet, width: usize, height: usize) -> Result<LabelGrid> {
    check_sites(sites, width, height)?;
    let grid = BucketGrid::build(&sites.sites, width, height);
    let mut labels = vec![0u32; width * height];
    labels.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let cy = center(y);
        for (x, slot) in row.iter_mut().enumerate() {
            *slot = grid.nearest(&sites.sites, center(x), cy);
        }
    });
    LabelGrid::new(width, height, labels)
}

/// Per-site mean colors and pixel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePalette {
    pub colors: Vec<Rgb>,
    pub counts: Vec<u64>,
}

pub const DEFAULT_UNASSIGNED: Rgb = [0, 0, 0];

/// Mean of each channel over each tile, rounded half away from zero. Sites
/// with no pixels get `unassigned`.
pub fn tile_colors(image: &Image, labels: &LabelGrid, site_count: usize, unassigned: Rgb) -> Result<TilePalette> {
    if image.dims() != labels.dims() {
        return Err(Error::DimensionMismatch {
            expected: labels.dims(),
            actual: image.dims(),
        });
    }
    if let Some(&l) = labels.labels.iter().find(|&&l| l as usize >= site_count) {
        return Err(Error::Invalid(format!("label {l} out of range for {site_count} sites")));
    }
    let mut sums = vec![[0u64; 3]; site_count];
    let mut counts = vec![0u64; site_count];
    for (px, &l) in image.pixels().iter().zip(&labels.labels) {
        let l = l as usize;
        counts[l] += 1;
        for c in 0..3 {
            sums[l][c] += px[c] as u64;
        }
    }
    let colors = sums
        .iter()
        .zip(&counts)
        .map(|(sum, &n)| {
            if n == 0 {
                unassigned
            } else {
                // (2s + n) / 2n == floor(s/n + 1/2)
                sum.map(|s| ((2 * s + n) / (2 * n)) as u8)
            }
        })
        .collect();
    Ok(TilePalette { colors, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RenderOptions {
    pub border_px: usize,
    #[serde(with = "crate::hex_color")]
    pub border_color: Rgb,
    #[serde(with = "crate::hex_color")]
    pub unassigned_color: Rgb,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            border_px: 1,
            border_color: [255, 255, 255],
            unassigned_color: DEFAULT_UNASSIGNED,
        }
    }
}

impl RenderOptions {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.border_px > width.min(height) / 2 {
            return Err(Error::Invalid(format!(
                "border of {} px exceeds half of the smaller image side ({}x{})",
                self.border_px, width, height
            )));
        }
        Ok(())
    }
}

/// Pixels with a 4-neighbor of a different label.
pub fn frontier_mask(labels: &LabelGrid) -> Vec<bool> {
    let (w, h) = labels.dims();
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(x, y);
            mask[y * w + x] = (x > 0 && labels.get(x - 1, y) != l)
                || (x + 1 < w && labels.get(x + 1, y) != l)
                || (y > 0 && labels.get(x, y - 1) != l)
                || (y + 1 < h && labels.get(x, y + 1) != l);
        }
    }
    mask
}

fn dilate4(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = mask.to_vec();
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                continue;
            }
            out[y * w + x] = (x > 0 && mask[y * w + x - 1])
                || (x + 1 < w && mask[y * w + x + 1])
                || (y > 0 && mask[(y - 1) * w + x])
                || (y + 1 < h && mask[(y + 1) * w + x]);
        }
    }
    out
}

/// Fills tiles with their palette color, then paints the frontier (dilated
/// `border_px - 1` times) in `border_color`.
pub fn render_tiles(labels: &LabelGrid, palette: &TilePalette, opts: &RenderOptions) -> Result<Image> {
    let (w, h) = labels.dims();
    if let Some(&l) = labels.labels.iter().find(|&&l| l as usize >= palette.colors.len()) {
        return Err(Error::Invalid(format!(
            "label {l} has no palette entry ({} colors)",
            palette.colors.len()
        )));
    }
    let mut pixels: Vec<Rgb> = labels.labels.iter().map(|&l| palette.colors[l as usize]).collect();
    if opts.border_px > 0 {
        let mut mask = frontier_mask(labels);
        for _ in 1..opts.border_px {
            mask = dilate4(&mask, w, h);
        }
        for (px, on) in pixels.iter_mut().zip(mask) {
            if on {
                *px = opts.border_color;
            }
        }
    }
    Image::new(w, h, pixels)
}
