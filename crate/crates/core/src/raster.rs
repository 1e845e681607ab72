//! RGB and grayscale rasters plus their file formats.
//!
//! Pixel `(x, y)` covers the unit square `[x, x+1) × [y, y+1)` with its center at
//! `(x + 0.5, y + 0.5)`. The origin is the top-left corner and `y` grows downward.
//! Every module that maps between pixels and continuous coordinates uses this
//! convention.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// Opaque 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if pixels.len() != width * height {
            return Err(Error::Invalid(format!(
                "pixel buffer has {} entries, expected {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
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

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// Raw interleaved RGB bytes.
    pub fn as_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }
}

/// Non-negative real map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if values.len() != width * height {
            return Err(Error::Invalid(format!(
                "map has {} values, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Invalid(format!(
                "map values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self { width, height, values })
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Map quantized exactly as [`save_gray_map`] stores it: linear scale so the
    /// maximum becomes 65535, rounded to integers. Loading the saved PNG yields
    /// the same values.
    pub fn quantized_u16(&self) -> GrayMap {
        let max = self.max();
        let values = if max > 0.0 {
            self.values
                .iter()
                .map(|v| (v / max * 65535.0).round().min(65535.0))
                .collect()
        } else {
            vec![0.0; self.values.len()]
        };
        GrayMap {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

/// Decodes a PNG or binary PPM (P6).
///
/// 16-bit channels keep their high byte. Alpha is composited over white.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|reason| match reason {
        DecodeError::Zero => Error::ZeroDimension,
        DecodeError::Other(reason) => Error::format(path, reason),
    })
}

enum DecodeError {
    Zero,
    Other(String),
}

fn decode_image(bytes: &[u8]) -> std::result::Result<Image, DecodeError> {
    let format = if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        ImageFormat::Png
    } else if bytes.starts_with(b"P6") {
        ImageFormat::Pnm
    } else {
        return Err(DecodeError::Other("not a PNG or binary PPM (P6) file".into()));
    };
    let decoded = image::load(Cursor::new(bytes), format).map_err(|e| DecodeError::Other(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(DecodeError::Zero);
    }
    let over_white = |c: u8, a: u8| -> u8 {
        let (c, a) = (c as u32, a as u32);
        ((c * a + 255 * (255 - a) + 127) / 255) as u8
    };
    let hi = |v: u16| (v >> 8) as u8;
    let pixels: Vec<Rgb> = match decoded {
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| p.0).collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| {
                let [r, g, b, a] = p.0;
                [over_white(r, a), over_white(g, a), over_white(b, a)]
            })
            .collect(),
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| [p.0[0]; 3]).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| [over_white(p.0[0], p.0[1]); 3]).collect(),
        DynamicImage::ImageRgb16(buf) => buf.pixels().map(|p| [hi(p.0[0]), hi(p.0[1]), hi(p.0[2])]).collect(),
        DynamicImage::ImageRgba16(buf) => buf
            .pixels()
            .map(|p| {
                let a = hi(p.0[3]);
                [
                    over_white(hi(p.0[0]), a),
                    over_white(hi(p.0[1]), a),
                    over_white(hi(p.0[2]), a),
                ]
            })
            .collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| [hi(p.0[0]); 3]).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| [over_white(hi(p.0[0]), hi(p.0[1])); 3]).collect(),
        other => {
            return Err(DecodeError::Other(format!(
                "unsupported color type {:?}",
                other.color()
            )))
        }
    };
    Image::new(w, h, pixels).map_err(|e| DecodeError::Other(e.to_string()))
}

/// Encodes `image` as an 8-bit RGB PNG.
pub fn encode_png(image: &Image) -> Vec<u8> {
    let buf = image::RgbImage::from_raw(image.width as u32, image.height as u32, image.as_bytes())
        .expect("buffer length matches dimensions");
    let mut out = Vec::new();
    buf.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("in-memory PNG encoding does not fail");
    out
}

pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_png(image)).map_err(|e| Error::io(path, e))
}

/// Channel-weighted luminance on `[0, 1]`-scaled channels.
pub fn luminance(image: &Image) -> GrayMap {
    let values = image
        .pixels
        .iter()
        .map(|&[r, g, b]| {
            let l = 0.2126 * (r as f64 / 255.0) + 0.7152 * (g as f64 / 255.0) + 0.0722 * (b as f64 / 255.0);
            l.clamp(0.0, 1.0)
        })
        .collect();
    GrayMap {
        width: image.width,
        height: image.height,
        values,
    }
}

/// 16-bit grayscale PNG with the map maximum at 65535 (all-zero maps stay zero).
pub fn encode_gray_map(map: &GrayMap) -> Vec<u8> {
    let q = map.quantized_u16();
    let data: Vec<u16> = q.values.iter().map(|&v| v as u16).collect();
    encode_u16_png(map.width, map.height, data)
}

pub fn save_gray_map(map: &GrayMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_gray_map(map)).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_u16_png(width: usize, height: usize, data: Vec<u16>) -> Vec<u8> {
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(width as u32, height as u32, data)
        .expect("buffer length matches dimensions");
    let mut out = Vec::new();
    buf.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("in-memory PNG encoding does not fail");
    out
}

/// Raw sample values of an 8- or 16-bit grayscale PNG, no rescaling.
pub(crate) fn load_gray_png(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        return Err(Error::format(path, "not a PNG file"));
    }
    let decoded = image::load(Cursor::new(&bytes), ImageFormat::Png).map_err(|e| Error::format(path, e))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroDimension);
    }
    let values = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u16::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        other => {
            return Err(Error::format(
                path,
                format!("expected a grayscale PNG, found {:?}", other.color()),
            ))
        }
    };
    Ok((w, h, values))
}

/// Loads a map written by [`save_gray_map`] (or any grayscale PNG) with raw sample values.
pub fn load_gray_map(path: impl AsRef<Path>) -> Result<GrayMap> {
    let (w, h, values) = load_gray_png(path.as_ref())?;
    GrayMap::new(w, h, values.into_iter().map(f64::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = SplitMix64::new(seed);
        Image::from_fn(w, h, |_, _| {
            let v = rng.next_u64();
            [v as u8, (v >> 8) as u8, (v >> 16) as u8]
        })
        .unwrap()
    }

    #[test]
    fn ppm_single_red_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.ppm");
        fs::write(&path, b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img, Image::new(1, 1, vec![[255, 0, 0]]).unwrap());
    }

    #[test]
    fn truncated_png_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let bytes = encode_png(&random_image(8, 8, 1));
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn unknown_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jpg");
        fs::write(&path, b"\xff\xd8\xff\xe0junk").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(load_image("/nonexistent/nope.png").unwrap_err().is_io());
    }

    #[test]
    fn zero_dimension_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.ppm");
        fs::write(&path, b"P6\n0 1\n255\n").unwrap();
        assert!(load_image(&path).is_err());
        assert!(matches!(Image::new(0, 3, vec![]), Err(Error::ZeroDimension)));
    }

    #[test]
    fn black_pixel_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.png");
        let img = Image::filled(1, 1, [0, 0, 0]).unwrap();
        save_image(&img, &path).unwrap();
        assert!(fs::read(&path).unwrap().starts_with(b"\x89PNG"));
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn round_trip_32_and_64() {
        let dir = tempfile::tempdir().unwrap();
        for (n, seed) in [(32, 3), (64, 4)] {
            let img = random_image(n, n, seed);
            let path = dir.path().join(format!("r{n}.png"));
            save_image(&img, &path).unwrap();
            assert_eq!(load_image(&path).unwrap().as_bytes(), img.as_bytes());
        }
    }

    #[test]
    fn unwritable_path() {
        let img = Image::filled(1, 1, [0, 0, 0]).unwrap();
        assert!(save_image(&img, "/nonexistent-dir/x.png").unwrap_err().is_io());
    }

    #[test]
    fn sixteen_bit_png_keeps_high_byte() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("16.png");
        let buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::from_raw(
            2,
            1,
            vec![0xABFF, 0x0100, 0x00FF, 0xFFFF, 0x8000, 0x7FFF],
        )
        .unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.pixels(), &[[0xAB, 0x01, 0x00], [0xFF, 0x80, 0x7F]]);
    }

    #[test]
    fn alpha_composited_over_white() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let buf = image::RgbaImage::from_raw(3, 1, vec![0, 0, 0, 0, 10, 20, 30, 255, 0, 0, 0, 128]).unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.pixels(), &[[255, 255, 255], [10, 20, 30], [127, 127, 127]]);
    }

    #[test]
    fn luminance_values() {
        let img = Image::new(3, 1, vec![[255, 255, 255], [0, 0, 0], [255, 0, 0]]).unwrap();
        let l = luminance(&img);
        assert_eq!(l.dims(), (3, 1));
        assert!((l.values()[0] - 1.0).abs() < 1e-12);
        assert_eq!(l.values()[1], 0.0);
        assert!((l.values()[2] - 0.2126).abs() < 1e-12);
    }

    #[test]
    fn gray_map_serialization_scales_max() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let map = GrayMap::new(3, 1, vec![0.0, 0.5, 2.0]).unwrap();
        save_gray_map(&map, &path).unwrap();
        let back = load_gray_map(&path).unwrap();
        assert_eq!(back.values(), &[0.0, 16384.0, 65535.0]);
        assert_eq!(back, map.quantized_u16());

        let zeros = GrayMap::new(2, 2, vec![0.0; 4]).unwrap();
        save_gray_map(&zeros, &path).unwrap();
        assert_eq!(load_gray_map(&path).unwrap().values(), &[0.0; 4]);
    }

    #[test]
    fn gray_map_rejects_negative_and_nan() {
        assert!(GrayMap::new(1, 1, vec![-1.0]).is_err());
        assert!(GrayMap::new(1, 1, vec![f64::NAN]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn png_round_trip(w in 1usize..20, h in 1usize..20, seed: u64) {
                let img = random_image(w, h, seed);
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("p.png");
                save_image(&img, &path).unwrap();
                prop_assert_eq!(load_image(&path).unwrap(), img);
            }

            #[test]
            fn luminance_in_unit_range(w in 1usize..10, h in 1usize..10, seed: u64) {
                let l = luminance(&random_image(w, h, seed));
                prop_assert_eq!(l.dims(), (w, h));
                prop_assert!(l.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
