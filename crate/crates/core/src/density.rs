//! Saliency maps as probability densities, and seeded site sampling.
//!
//! Sampling draws from one splitmix64 stream per call. Each site consumes three
//! values in this order:
//!
//! 1. `u = next_f64()` in `[0, 1)`, which selects the first pixel (row-major)
//!    whose cumulative mass exceeds `u`;
//! 2. `dx = next_open_f64()` in `(0, 1)`;
//! 3. `dy = next_open_f64()` in `(0, 1)`.
//!
//! The site is `(px + dx, py + dy)`, strictly inside the chosen pixel.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::GrayMap;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    width: usize,
    height: usize,
    mass: Vec<f64>,
}

impl Density {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn uniform(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        let n = width * height;
        Ok(Self {
            width,
            height,
            mass: vec![1.0 / n as f64; n],
        })
    }

    /// SHA-256 over the dimensions and the little-endian bits of every mass value.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        for m in &self.mass {
            h.update(m.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Raises every value to at least `floor · max(map)` and scales to unit mass.
/// An all-zero map becomes uniform.
pub fn normalize_density(map: &GrayMap, floor: f64) -> Result<Density> {
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(Error::Invalid(format!("floor must be finite and >= 0, got {floor}")));
    }
    if let Some(v) = map.values().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Invalid(format!(
            "saliency value {v} is not a finite non-negative number"
        )));
    }
    let (width, height) = map.dims();
    let max = map.max();
    if max == 0.0 {
        return Density::uniform(width, height);
    }
    let lifted: Vec<f64> = map.values().iter().map(|&v| v.max(floor * max)).collect();
    let total: f64 = lifted.iter().sum();
    Ok(Density {
        width,
        height,
        mass: lifted.into_iter().map(|v| v / total).collect(),
    })
}

/// Sampled Voronoi generators. A site's index is its tile label.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    pub sites: Vec<(f64, f64)>,
    /// `None` for site sets read from disk.
    pub seed: Option<u64>,
    pub source_digest: Option<String>,
}

impl SiteSet {
    pub fn from_points(sites: Vec<(f64, f64)>) -> Self {
        Self {
            sites,
            seed: None,
            source_digest: None,
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (x, y) in &self.sites {
            h.update(x.to_le_bytes());
            h.update(y.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// CSV with header `i,x,y`. Coordinates use the shortest decimal that
    /// parses back to the same `f64`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,x,y\n");
        for (i, (x, y)) in self.sites.iter().enumerate() {
            out.push_str(&format!("{i},{x},{y}\n"));
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: u64, reason: String| Error::Parse {
            path: path.into(),
            line,
            reason,
        };
        let mut rdr = csv::Reader::from_reader(file);
        let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if header.iter().ne(["i", "x", "y"]) {
            return Err(parse_err(1, "header must be exactly `i,x,y`".into()));
        }
        let mut sites = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let index: usize = record[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad index `{}`", &record[0])))?;
            if index != sites.len() {
                return Err(parse_err(
                    line,
                    format!("expected index {}, found {index}", sites.len()),
                ));
            }
            let coord = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("bad coordinate `{s}`")))
            };
            sites.push((coord(&record[1])?, coord(&record[2])?));
        }
        Ok(Self::from_points(sites))
    }
}

/// Draws `n` sites from `density` by inverse-CDF lookup plus in-pixel jitter.
pub fn sample_sites(density: &Density, n: usize, seed: u64) -> SiteSet {
    let mut cdf = Vec::with_capacity(density.mass.len());
    let mut acc = 0.0;
    for m in &density.mass {
        acc += m;
        cdf.push(acc);
    }
    // u can exceed the rounded total; fall back to the last pixel with mass
    let last_positive = density.mass.iter().rposition(|&m| m > 0.0).unwrap_or(0);

    let mut rng = SplitMix64::new(seed);
    let mut sites = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.next_f64();
        let idx = cdf.partition_point(|&c| c <= u).min(last_positive);
        let dx = rng.next_open_f64();
        let dy = rng.next_open_f64();
        let (px, py) = (idx % density.width, idx / density.width);
        sites.push((px as f64 + dx, py as f64 + dy));
    }
    SiteSet {
        sites,
        seed: Some(seed),
        source_digest: Some(density.digest()),
    }
}
