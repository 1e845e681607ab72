//! Side-by-side panel layout for diptychs and triptychs.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::raster::{Image, Rgb};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PanelSource {
    Original,
    Machine,
    Human,
    File(PathBuf),
}

impl PanelSource {
    /// `original`, `machine` and `human` (any case) are keywords; anything
    /// else is a file path.
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => PanelSource::Original,
            "machine" => PanelSource::Machine,
            "human" => PanelSource::Human,
            _ => PanelSource::File(PathBuf::from(s.trim())),
        }
    }

    pub fn parse_list(csv: &str) -> Vec<Self> {
        csv.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Self::parse)
            .collect()
    }
}

impl fmt::Display for PanelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PanelSource::Original => f.write_str("original"),
            PanelSource::Machine => f.write_str("machine"),
            PanelSource::Human => f.write_str("human"),
            PanelSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl Serialize for PanelSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PanelSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(PanelSource::parse(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelLayout {
    pub panels: Vec<PanelSource>,
    pub gutter_px: usize,
    #[serde(with = "crate::hex_color")]
    pub background: Rgb,
}

impl Default for PanelLayout {
    fn default() -> Self {
        Self {
            panels: vec![PanelSource::Original, PanelSource::Machine, PanelSource::Human],
            gutter_px: 0,
            background: [255, 255, 255],
        }
    }
}

/// Concatenates `images` left to right with `gutter_px` background columns
/// between neighbors.
pub fn compose_panels(images: &[Image], layout: &PanelLayout) -> Result<Image> {
    let first = images
        .first()
        .ok_or_else(|| Error::Invalid("no panels to compose".into()))?;
    if images.len() != layout.panels.len() {
        return Err(Error::Invalid(format!(
            "layout lists {} panels but {} images were supplied",
            layout.panels.len(),
            images.len()
        )));
    }
    let height = first.height();
    if let Some(bad) = images.iter().find(|img| img.height() != height) {
        return Err(Error::DimensionMismatch {
            expected: (bad.width(), height),
            actual: bad.dims(),
        });
    }
    let width = images.iter().map(Image::width).sum::<usize>() + layout.gutter_px * (images.len() - 1);
    let mut pixels = vec![layout.background; width * height];
    let mut offset = 0;
    for img in images {
        for y in 0..height {
            let row = &img.pixels()[y * img.width()..(y + 1) * img.width()];
            pixels[y * width + offset..y * width + offset + img.width()].copy_from_slice(row);
        }
        offset += img.width() + layout.gutter_px;
    }
    Image::new(width, height, pixels)
}
