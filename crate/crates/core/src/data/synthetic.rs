//! Procedural six-class image set sized like small face crops. Each
//! class has a distinct geometric structure so a small network can
//! separate (and overfit) them quickly; jitter and noise keep samples
//! within a class from being identical.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::data::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const NUM_CLASSES: usize = 6;
pub const IMAGE_DIM: usize = 64;

/// Builds class-balanced train/test splits (labels cycle 0..6) from a
/// single seeded stream; identical arguments reproduce identical bytes.
pub fn make_synthetic_faceset(
    seed: u64,
    n_train: usize,
    n_test: usize,
) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::Data(format!(
            "synthetic set needs at least one sample per split, got train={n_train} test={n_test}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let train = (0..n_train)
        .map(|i| synth_image(i % NUM_CLASSES, &mut rng))
        .collect();
    let test = (0..n_test)
        .map(|i| synth_image(i % NUM_CLASSES, &mut rng))
        .collect();
    Ok((
        Dataset::new(train, Split::Train, NUM_CLASSES),
        Dataset::new(test, Split::Test, NUM_CLASSES),
    ))
}

fn synth_image(class: usize, rng: &mut impl Rng) -> LabeledImage {
    let dim = IMAGE_DIM;
    // Per-sample jitter drawn up front in a fixed order.
    let jx = rng.random_range(-6i32..=6) as f32;
    let jy = rng.random_range(-6i32..=6) as f32;
    let size = rng.random_range(10..=18) as f32;
    let period = rng.random_range(6..=12) as f32;
    let tint: [f32; 3] = [
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
    ];
    let (cx, cy) = ((dim / 2) as f32 + jx, (dim / 2) as f32 + jy);

    let base = Tensor::from_fn(Shape::new(1, 3, dim, dim), |_, c, y, x| {
        let (xf, yf) = (x as f32, y as f32);
        let v = match class {
            // Filled disc.
            0 => {
                let d = ((xf - cx).powi(2) + (yf - cy).powi(2)).sqrt();
                if d < size {
                    0.9
                } else {
                    0.1
                }
            }
            // Horizontal stripes.
            1 => {
                if ((yf + jy) / period).floor() as i64 % 2 == 0 {
                    0.85
                } else {
                    0.15
                }
            }
            // Vertical stripes.
            2 => {
                if ((xf + jx) / period).floor() as i64 % 2 == 0 {
                    0.85
                } else {
                    0.15
                }
            }
            // Diagonal gradient.
            3 => (xf + yf + jx + jy).rem_euclid(2.0 * dim as f32) / (2.0 * dim as f32),
            // Checkerboard.
            4 => {
                let cell = (period / 2.0).max(3.0);
                let parity = (((xf + jx) / cell).floor() + ((yf + jy) / cell).floor()) as i64;
                if parity.rem_euclid(2) == 0 {
                    0.85
                } else {
                    0.15
                }
            }
            // Hollow square frame.
            _ => {
                let ax = (xf - cx).abs().max((yf - cy).abs());
                if ax < size && ax > size - 4.0 {
                    0.9
                } else {
                    0.1
                }
            }
        };
        v * tint[c]
    });

    // Additive noise, clamped back into [0, 1].
    let mut pixels = base;
    for v in pixels.as_mut_slice() {
        let noise: f32 = rng.random_range(-0.05..0.05);
        *v = (*v + noise).clamp(0.0, 1.0);
    }
    LabeledImage { pixels, label: class }
}
