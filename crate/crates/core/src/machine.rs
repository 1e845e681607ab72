//! Machine attention maps.
//!
//! The built-in classifier is a fixed toy network:
//!
//! ```text
//! input [0,1] (3 channels) -> conv 3x3, 8 filters, zero "same" padding
//!                          -> ReLU -> global average pool (8) -> dense (8 -> 10 logits)
//! ```
//!
//! Saliency is the per-pixel L2 norm, across the three input channels, of the
//! gradient of a scalar score with respect to the input. The score is either the
//! largest logit or the sum of all logits ([`GradientMode`]). The gradient is
//! computed by an explicit reverse pass through the four layers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{self, luminance, GrayMap, Image};
use crate::rng::SplitMix64;

pub const CHANNELS: usize = 3;
pub const FILTERS: usize = 8;
pub const CLASSES: usize = 10;
pub const KERNEL: usize = 3;
/// Weights per filter, laid out `[channel][ky][kx]`.
pub const FILTER_LEN: usize = CHANNELS * KERNEL * KERNEL;

const WEIGHT_MAGIC: &[u8; 4] = b"TCLF";
const WEIGHT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    /// Differentiate the largest logit; ties go to the lowest class index.
    #[default]
    Max,
    /// Differentiate the sum of all logits.
    Sum,
}

/// Toy convolutional classifier with deterministic weights.
///
/// `conv_filters` is `[filter][channel][ky][kx]` and `dense_weights` is
/// `[input feature][class]`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    pub conv_filters: [f64; FILTERS * FILTER_LEN],
    pub conv_bias: [f64; FILTERS],
    pub dense_weights: [f64; FILTERS * CLASSES],
    pub dense_bias: [f64; CLASSES],
    pub seed: u64,
}

impl ToyClassifier {
    /// Draws every weight uniformly from `[-0.1, 0.1)` off one splitmix64 stream,
    /// in field order: conv filters, conv bias, dense weights, dense bias.
    pub fn new(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut draw = || -0.1 + 0.2 * rng.next_f64();
        let conv_filters = std::array::from_fn(|_| draw());
        let conv_bias = std::array::from_fn(|_| draw());
        let dense_weights = std::array::from_fn(|_| draw());
        let dense_bias = std::array::from_fn(|_| draw());
        Self {
            conv_filters,
            conv_bias,
            dense_weights,
            dense_bias,
            seed,
        }
    }

    pub fn filter_weight(&self, filter: usize, channel: usize, ky: usize, kx: usize) -> f64 {
        self.conv_filters[filter * FILTER_LEN + channel * KERNEL * KERNEL + ky * KERNEL + kx]
    }

    pub fn dense_weight(&self, feature: usize, class: usize) -> f64 {
        self.dense_weights[feature * CLASSES + class]
    }

    fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.conv_filters
            .iter()
            .chain(&self.conv_bias)
            .chain(&self.dense_weights)
            .chain(&self.dense_bias)
            .copied()
    }

    /// Little-endian `TCLF`, version, then all weights as f64 in initialization order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * (FILTERS * FILTER_LEN + FILTERS + FILTERS * CLASSES + CLASSES));
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        for w in self.weights() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes). The seed is not stored and comes back as 0.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::Invalid(format!("classifier weights: {reason}"));
        if bytes.len() < 8 || &bytes[..4] != WEIGHT_MAGIC {
            return Err(bad("missing TCLF magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != WEIGHT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let body = &bytes[8..];
        let mut model = Self {
            conv_filters: [0.0; FILTERS * FILTER_LEN],
            conv_bias: [0.0; FILTERS],
            dense_weights: [0.0; FILTERS * CLASSES],
            dense_bias: [0.0; CLASSES],
            seed: 0,
        };
        let expected = 8 * (model.conv_filters.len() + FILTERS + model.dense_weights.len() + CLASSES);
        if body.len() != expected {
            return Err(bad(&format!("expected {expected} payload bytes, found {}", body.len())));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for slot in model
            .conv_filters
            .iter_mut()
            .chain(model.conv_bias.iter_mut())
            .chain(model.dense_weights.iter_mut())
            .chain(model.dense_bias.iter_mut())
        {
            *slot = values.next().unwrap();
            if !slot.is_finite() {
                return Err(bad("non-finite weight"));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Planar `[channel][y][x]` input scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl InputTensor {
    pub fn from_image(image: &Image) -> Self {
        let (width, height) = image.dims();
        let plane = width * height;
        let mut data = vec![0.0; CHANNELS * plane];
        for (i, px) in image.pixels().iter().enumerate() {
            for c in 0..CHANNELS {
                data[c * plane + i] = px[c] as f64 / 255.0;
            }
        }
        Self { width, height, data }
    }

    pub fn at(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn at_mut(&mut self, c: usize, x: usize, y: usize) -> &mut f64 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }
}

fn check_size(width: usize, height: usize) -> Result<()> {
    if width < KERNEL || height < KERNEL {
        return Err(Error::TooSmall { width, height });
    }
    Ok(())
}

/// Convolution pre-activations, `[filter][y][x]`.
fn conv_preactivations(model: &ToyClassifier, input: &InputTensor) -> Vec<f64> {
    let (w, h) = (input.width, input.height);
    let plane = w * h;
    let mut z = vec![0.0; FILTERS * plane];
    for f in 0..FILTERS {
        let out = &mut z[f * plane..(f + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                let mut acc = model.conv_bias[f];
                for c in 0..CHANNELS {
                    for ky in 0..KERNEL {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..KERNEL {
                            let sx = x as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            acc += model.filter_weight(f, c, ky, kx) * input.at(c, sx as usize, sy as usize);
                        }
                    }
                }
                out[y * w + x] = acc;
            }
        }
    }
    z
}

fn logits_from_preactivations(model: &ToyClassifier, z: &[f64], plane: usize) -> [f64; CLASSES] {
    let pooled: Vec<f64> = z
        .chunks_exact(plane)
        .map(|ch| ch.iter().map(|v| v.max(0.0)).sum::<f64>() / plane as f64)
        .collect();
    std::array::from_fn(|k| {
        let mut acc = model.dense_bias[k];
        for (f, p) in pooled.iter().enumerate() {
            acc += p * model.dense_weight(f, k);
        }
        acc
    })
}

pub fn forward_tensor(model: &ToyClassifier, input: &InputTensor) -> Result<[f64; CLASSES]> {
    check_size(input.width, input.height)?;
    let z = conv_preactivations(model, input);
    Ok(logits_from_preactivations(model, &z, input.width * input.height))
}

/// Class logits of `image`.
pub fn forward(model: &ToyClassifier, image: &Image) -> Result<[f64; CLASSES]> {
    forward_tensor(model, &InputTensor::from_image(image))
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax_logit(logits: &[f64; CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..CLASSES {
        if logits[k] > logits[best] {
            best = k;
        }
    }
    best
}

/// Sum of `terms` in a canonical (sorted) order, so any permutation of the
/// terms gives the same bits.
fn order_free_sum(mut terms: [f64; CLASSES]) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Gradient of `Σ_k score_weights[k] · logit_k` with respect to the `[0,1]`
/// input, planar `[channel][y][x]`.
pub fn score_gradient(
    model: &ToyClassifier,
    input: &InputTensor,
    score_weights: &[f64; CLASSES],
) -> Result<InputTensor> {
    check_size(input.width, input.height)?;
    let (w, h) = (input.width, input.height);
    let plane = w * h;
    let z = conv_preactivations(model, input);

    // dense: d score / d pooled_f
    let d_pooled: [f64; FILTERS] =
        std::array::from_fn(|f| order_free_sum(std::array::from_fn(|k| score_weights[k] * model.dense_weight(f, k))));

    // pool + ReLU: d score / d z, zero where z <= 0
    let d_z: Vec<f64> = z
        .chunks_exact(plane)
        .zip(d_pooled)
        .flat_map(|(ch, g)| {
            let g = g / plane as f64;
            ch.iter().map(move |&v| if v > 0.0 { g } else { 0.0 })
        })
        .collect();

    // conv: scatter each output gradient back through the kernel
    let mut grad = InputTensor {
        width: w,
        height: h,
        data: vec![0.0; CHANNELS * plane],
    };
    for c in 0..CHANNELS {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for f in 0..FILTERS {
                    for ky in 0..KERNEL {
                        // output row oy reads input row oy + ky - 1
                        let oy = y as isize - ky as isize + 1;
                        if oy < 0 || oy >= h as isize {
                            continue;
                        }
                        for kx in 0..KERNEL {
                            let ox = x as isize - kx as isize + 1;
                            if ox < 0 || ox >= w as isize {
                                continue;
                            }
                            let g = d_z[f * plane + oy as usize * w + ox as usize];
                            if g != 0.0 {
                                acc += model.filter_weight(f, c, ky, kx) * g;
                            }
                        }
                    }
                }
                *grad.at_mut(c, x, y) = acc;
            }
        }
    }
    Ok(grad)
}

/// Weights over logits that define the differentiated score for `mode`.
pub fn score_weights(model: &ToyClassifier, input: &InputTensor, mode: GradientMode) -> Result<[f64; CLASSES]> {
    Ok(match mode {
        GradientMode::Sum => [1.0; CLASSES],
        GradientMode::Max => {
            let best = argmax_logit(&forward_tensor(model, input)?);
            std::array::from_fn(|k| if k == best { 1.0 } else { 0.0 })
        }
    })
}

/// Per-pixel L2 norm over channels of the score gradient.
pub fn input_gradient_saliency(model: &ToyClassifier, image: &Image, mode: GradientMode) -> Result<GrayMap> {
    let input = InputTensor::from_image(image);
    let weights = score_weights(model, &input, mode)?;
    let grad = score_gradient(model, &input, &weights)?;
    Ok(channel_norm(&grad))
}

pub fn channel_norm(grad: &InputTensor) -> GrayMap {
    let plane = grad.width * grad.height;
    let values = (0..plane)
        .map(|i| {
            (0..CHANNELS)
                .map(|c| grad.data[c * plane + i].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    GrayMap::new(grad.width, grad.height, values).expect("norms are finite and non-negative")
}

/// Sobel gradient magnitude of the luminance, edge-replicate padding.
pub fn sobel_saliency(image: &Image) -> Result<GrayMap> {
    let (w, h) = image.dims();
    check_size(w, h)?;
    let lum = luminance(image);
    let at = |x: isize, y: isize| lum.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            values.push((gx * gx + gy * gy).sqrt());
        }
    }
    GrayMap::new(w, h, values)
}

/// Loads an externally computed grayscale PNG map, bilinearly resampled to
/// `target` when the sizes differ.
pub fn load_saliency_map(path: impl AsRef<Path>, target: (usize, usize)) -> Result<GrayMap> {
    let map = raster::load_gray_map(path)?;
    if map.dims() == target {
        Ok(map)
    } else {
        resample_bilinear(&map, target)
    }
}

/// Bilinear resampling with pixel-center alignment and clamped borders.
pub fn resample_bilinear(map: &GrayMap, (tw, th): (usize, usize)) -> Result<GrayMap> {
    if tw == 0 || th == 0 {
        return Err(Error::ZeroDimension);
    }
    let (sw, sh) = map.dims();
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut values = Vec::with_capacity(tw * th);
    for y in 0..th {
        let (y0, y1, fy) = axis(y, sh, th);
        for x in 0..tw {
            let (x0, x1, fx) = axis(x, sw, tw);
            let top = map.get(x0, y0) * (1.0 - fx) + map.get(x1, y0) * fx;
            let bottom = map.get(x0, y1) * (1.0 - fx) + map.get(x1, y1) * fx;
            values.push((top * (1.0 - fy) + bottom * fy).max(0.0));
        }
    }
    GrayMap::new(tw, th, values)
}
