use diptych_core::machine::{forward, input_gradient_saliency, GradientMode, ToyClassifier, CLASSES, FILTERS};
use diptych_core::raster::Image;
use diptych_core::rng::SplitMix64;
use proptest::prelude::*;

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = SplitMix64::new(seed);
    Image::from_fn(w, h, |_, _| {
        let v = rng.next_u64();
        [v as u8, (v >> 8) as u8, (v >> 16) as u8]
    })
    .unwrap()
}

/// Straight transcription of the layer formulas with explicit zero padding.
fn reference_logits(m: &ToyClassifier, image: &Image) -> [f64; CLASSES] {
    let (w, h) = image.dims();
    let padded = |c: usize, x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            image.get(x as usize, y as usize)[c] as f64 / 255.0
        }
    };
    let mut features = [0.0; FILTERS];
    for (f, feature) in features.iter_mut().enumerate() {
        let mut total = 0.0;
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut z = m.conv_bias[f];
                for c in 0..3 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            z += m.filter_weight(f, c, ky, kx) * padded(c, x + kx as isize - 1, y + ky as isize - 1);
                        }
                    }
                }
                total += z.max(0.0);
            }
        }
        *feature = total / (w * h) as f64;
    }
    std::array::from_fn(|k| m.dense_bias[k] + (0..FILTERS).map(|f| features[f] * m.dense_weight(f, k)).sum::<f64>())
}

#[test]
fn forward_matches_reference_on_random_16x16() {
    for seed in 0..5 {
        let m = ToyClassifier::new(seed);
        let img = random_image(16, 16, seed + 100);
        let got = forward(&m, &img).unwrap();
        let want = reference_logits(&m, &img);
        for k in 0..CLASSES {
            assert!(
                (got[k] - want[k]).abs() <= 1e-12 * want[k].abs().max(1.0),
                "seed {seed} class {k}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn saliency_nonnegative_and_deterministic(seed: u64, img_seed: u64, w in 3usize..12, h in 3usize..12, sum in any::<bool>()) {
        let mode = if sum { GradientMode::Sum } else { GradientMode::Max };
        let m = ToyClassifier::new(seed);
        let img = random_image(w, h, img_seed);
        let a = input_gradient_saliency(&m, &img, mode).unwrap();
        let b = input_gradient_saliency(&ToyClassifier::new(seed), &img, mode).unwrap();
        prop_assert!(a.values().iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert_eq!(a.dims(), (w, h));
        let bits = |m: &diptych_core::raster::GrayMap| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }
}
